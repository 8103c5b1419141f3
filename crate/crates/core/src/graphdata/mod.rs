//! Partially labelled attributed networks: model, file formats, feature
//! construction, label/holdout sampling and a planted-partition generator.

pub mod features;
pub mod io;
pub mod network;
pub mod sbm;
pub mod split;

pub use features::{build_attr_features, build_node_features, normalize_adjacency};
pub use io::{load_network, load_network_files, save_network, LoadOptions, Source};
pub use network::{AttributedNetwork, LabelMask};
pub use sbm::{generate_sbm, read_meta, write_synthetic, SbmConfig, SynthMeta};
pub use split::{sample_label_mask, split_pairs, HoldoutSplit, PairKind, SplitRatios};
