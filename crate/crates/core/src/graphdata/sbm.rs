use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{self, LoadOptions};
use super::network::AttributedNetwork;
use crate::error::{Error, Result};
use crate::numkernel::SparseMatrix;

pub const META_FILE: &str = "meta.json";

/// Planted-partition generator settings. Nodes are split into contiguous,
/// near-equal communities; community `c` owns attributes
/// `c*attrs_per_community .. (c+1)*attrs_per_community`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub attrs_per_community: usize,
    pub p_attr_on: f64,
    pub p_attr_noise: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    /// The 200-node, 4-community fixture used by the end-to-end checks.
    fn default() -> Self {
        SbmConfig {
            n_nodes: 200,
            n_communities: 4,
            p_intra: 0.10,
            p_inter: 0.01,
            attrs_per_community: 8,
            p_attr_on: 0.8,
            p_attr_noise: 0.05,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_intra", self.p_intra),
            ("p_inter", self.p_inter),
            ("p_attr_on", self.p_attr_on),
            ("p_attr_noise", self.p_attr_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if self.n_communities == 0 || self.n_communities > self.n_nodes {
            return Err(Error::Invalid(format!(
                "need 1 <= n_communities ({}) <= n_nodes ({})",
                self.n_communities, self.n_nodes
            )));
        }
        if self.attrs_per_community == 0 {
            return Err(Error::Invalid("attrs_per_community must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_attrs(&self) -> usize {
        self.n_communities * self.attrs_per_community
    }

    pub fn community_of(&self, v: usize) -> usize {
        v * self.n_communities / self.n_nodes
    }
}

/// Sample a fully labelled network; the label of each node is its community.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<AttributedNetwork> {
    cfg.validate()?;
    let n = cfg.n_nodes;
    let m = cfg.n_attrs();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let community: Vec<usize> = (0..n).map(|v| cfg.community_of(v)).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if community[i] == community[j] {
                cfg.p_intra
            } else {
                cfg.p_inter
            };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
                edges.push((j, i, 1.0));
            }
        }
    }
    let mut attrs = Vec::new();
    for (i, &c) in community.iter().enumerate() {
        for a in 0..m {
            let p = if a / cfg.attrs_per_community == c {
                cfg.p_attr_on
            } else {
                cfg.p_attr_noise
            };
            if rng.random::<f64>() < p {
                attrs.push((i, a, 1.0));
            }
        }
    }
    AttributedNetwork::new(
        SparseMatrix::from_triplets(n, n, edges)?,
        SparseMatrix::from_triplets(n, m, attrs)?,
        community.into_iter().map(Some).collect(),
        cfg.n_communities,
    )
}

/// Contents of `meta.json` next to generated data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub sbm: SbmConfig,
    pub n_nodes: usize,
    pub n_attrs: usize,
    pub n_classes: usize,
}

impl SynthMeta {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            n_classes: self.n_classes,
            n_nodes: Some(self.n_nodes),
            n_attrs: Some(self.n_attrs),
        }
    }
}

/// Generate and write `edges.tsv`, `attributes.tsv`, `labels.tsv`, `meta.json`.
pub fn write_synthetic(cfg: &SbmConfig, dir: &Path) -> Result<AttributedNetwork> {
    let net = generate_sbm(cfg)?;
    io::save_network(&net, dir)?;
    let meta = SynthMeta {
        sbm: cfg.clone(),
        n_nodes: net.n_nodes(),
        n_attrs: net.n_attrs(),
        n_classes: net.n_classes(),
    };
    let path = dir.join(META_FILE);
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
    Ok(net)
}

pub fn read_meta(dir: &Path) -> Result<SynthMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
