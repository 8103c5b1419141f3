use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{AttributedNetwork, LabelMask};
use crate::error::{Error, Result};

const COVERAGE_ATTEMPTS: usize = 100;

/// Reveal `ceil(ratio * N)` labels chosen uniformly among labelled-capable nodes.
///
/// Retries up to 100 times until every class present in the data has at least
/// one revealed node.
pub fn sample_label_mask(net: &AttributedNetwork, ratio: f64, seed: u64) -> Result<LabelMask> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Invalid(format!("label ratio {ratio} not in (0, 1)")));
    }
    let n = net.n_nodes();
    let count = (ratio * n as f64).ceil() as usize;
    let candidates: Vec<usize> = (0..n).filter(|&v| net.label(v).is_some()).collect();
    if candidates.len() < count {
        return Err(Error::Invalid(format!(
            "asked to reveal {count} labels but only {} nodes are labelled",
            candidates.len()
        )));
    }
    let present: BTreeSet<usize> = candidates.iter().filter_map(|&v| net.label(v)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut missing = None;
    for _ in 0..COVERAGE_ATTEMPTS {
        let mut pool = candidates.clone();
        pool.shuffle(&mut rng);
        let mut chosen = pool[..count].to_vec();
        chosen.sort_unstable();
        let covered: BTreeSet<usize> = chosen.iter().filter_map(|&v| net.label(v)).collect();
        match present.difference(&covered).next() {
            None => return LabelMask::from_labelled(net, &chosen),
            Some(&k) => missing = Some(k),
        }
    }
    Err(Error::ClassCoverage {
        class: missing.expect("at least one attempt ran"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// Undirected node–node edge, stored as `(i, j)` with `i < j`.
    Edge,
    /// Node–attribute entry `(node, attr)`.
    AttributeEntry,
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const STANDARD: SplitRatios = SplitRatios {
        train: 0.85,
        val: 0.05,
        test: 0.10,
    };
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::STANDARD
    }
}

/// Positive pairs split into folds, with equal-sized negative samples for
/// validation and test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    pub kind: PairKind,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

impl HoldoutSplit {
    /// The network with validation and test positives removed.
    pub fn training_network(&self, net: &AttributedNetwork) -> Result<AttributedNetwork> {
        let held: Vec<(usize, usize)> = self.val.iter().chain(&self.test).copied().collect();
        match self.kind {
            PairKind::Edge => net.without_edges(&held),
            PairKind::AttributeEntry => net.without_attr_entries(&held),
        }
    }
}

fn positives(net: &AttributedNetwork, kind: PairKind) -> Vec<(usize, usize)> {
    match kind {
        PairKind::Edge => net.edges().into_iter().map(|(i, j, _)| (i, j)).collect(),
        PairKind::AttributeEntry => net.attributes().triplets().map(|(i, a, _)| (i, a)).collect(),
    }
}

fn pair_space(net: &AttributedNetwork, kind: PairKind) -> usize {
    let n = net.n_nodes();
    match kind {
        PairKind::Edge => n * (n - 1) / 2,
        PairKind::AttributeEntry => n * net.n_attrs(),
    }
}

fn random_pair(rng: &mut ChaCha8Rng, net: &AttributedNetwork, kind: PairKind) -> Option<(usize, usize)> {
    let n = net.n_nodes();
    match kind {
        PairKind::Edge => {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            (i != j).then(|| (i.min(j), i.max(j)))
        }
        PairKind::AttributeEntry => Some((rng.random_range(0..n), rng.random_range(0..net.n_attrs()))),
    }
}

fn all_pairs(net: &AttributedNetwork, kind: PairKind) -> Vec<(usize, usize)> {
    let n = net.n_nodes();
    match kind {
        PairKind::Edge => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
        PairKind::AttributeEntry => {
            let m = net.n_attrs();
            (0..n).flat_map(|i| (0..m).map(move |a| (i, a))).collect()
        }
    }
}

/// Shuffle positives by `seed` and cut them into folds; sample negatives
/// uniformly from absent pairs.
pub fn split_pairs(
    net: &AttributedNetwork,
    kind: PairKind,
    ratios: SplitRatios,
    seed: u64,
) -> Result<HoldoutSplit> {
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r))
        || ((train + val + test) - 1.0).abs() > 1e-9
    {
        return Err(Error::Invalid(format!(
            "split ratios ({train}, {val}, {test}) must lie in [0, 1] and sum to 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = positives(net, kind);
    pos.shuffle(&mut rng);

    let total = pos.len();
    let n_val = (val * total as f64).round() as usize;
    let n_test = ((test * total as f64).round() as usize).min(total - n_val);
    let n_train = total - n_val - n_test;
    let val_pos = pos[n_train..n_train + n_val].to_vec();
    let test_pos = pos[n_train + n_val..].to_vec();
    pos.truncate(n_train);

    let needed = n_val + n_test;
    let available = pair_space(net, kind) - total;
    if needed > available {
        return Err(Error::NotEnoughNegatives { needed, available });
    }
    let positive_set: HashSet<(usize, usize)> = pos
        .iter()
        .chain(&val_pos)
        .chain(&test_pos)
        .copied()
        .collect();

    let negatives: Vec<(usize, usize)> = if needed * 2 > available {
        let mut absent: Vec<_> = all_pairs(net, kind)
            .into_iter()
            .filter(|p| !positive_set.contains(p))
            .collect();
        absent.shuffle(&mut rng);
        absent.truncate(needed);
        absent
    } else {
        let mut seen = HashSet::with_capacity(needed);
        let mut out = Vec::with_capacity(needed);
        while out.len() < needed {
            if let Some(p) = random_pair(&mut rng, net, kind) {
                if !positive_set.contains(&p) && seen.insert(p) {
                    out.push(p);
                }
            }
        }
        out
    };

    Ok(HoldoutSplit {
        kind,
        train: pos,
        val: val_pos,
        test: test_pos,
        val_neg: negatives[..n_val].to_vec(),
        test_neg: negatives[n_val..].to_vec(),
    })
}
