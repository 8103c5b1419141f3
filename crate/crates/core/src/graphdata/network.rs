use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numkernel::SparseMatrix;

/// Undirected attributed network with partial class labels.
///
/// `adjacency` keeps the (possibly weighted) symmetric matrix used for
/// normalization; the Bernoulli decoder sees its binarized pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedNetwork {
    adjacency: SparseMatrix,
    attributes: SparseMatrix,
    labels: Vec<Option<usize>>,
    n_classes: usize,
}

impl AttributedNetwork {
    pub fn new(
        adjacency: SparseMatrix,
        attributes: SparseMatrix,
        labels: Vec<Option<usize>>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = adjacency.rows();
        if n == 0 || adjacency.cols() != n {
            return Err(Error::Invalid(format!(
                "adjacency must be square and non-empty, got {:?}",
                adjacency.shape()
            )));
        }
        if attributes.rows() != n || attributes.cols() == 0 {
            return Err(Error::Invalid(format!(
                "attribute matrix {:?} does not match {n} nodes with at least one attribute",
                attributes.shape()
            )));
        }
        if n_classes == 0 {
            return Err(Error::Invalid("n_classes must be at least 1".into()));
        }
        if labels.len() != n {
            return Err(Error::Invalid(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some((v, k)) = labels
            .iter()
            .enumerate()
            .find_map(|(v, l)| l.filter(|&k| k >= n_classes).map(|k| (v, k)))
        {
            return Err(Error::Invalid(format!(
                "node {v} has label {k} outside [0, {n_classes})"
            )));
        }
        if adjacency.values().iter().any(|&w| w < 0.0) {
            return Err(Error::Invalid("negative edge weight".into()));
        }
        if !adjacency.is_symmetric(0.0) {
            return Err(Error::Invalid("adjacency is not symmetric".into()));
        }
        if (0..n).any(|i| adjacency.get(i, i) != 0.0) {
            return Err(Error::Invalid("adjacency has self-loops".into()));
        }
        if attributes.values().iter().any(|&x| x != 1.0) {
            return Err(Error::Invalid("attribute values must be binary".into()));
        }
        Ok(AttributedNetwork {
            adjacency,
            attributes,
            labels,
            n_classes,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn n_attrs(&self) -> usize {
        self.attributes.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn attributes(&self) -> &SparseMatrix {
        &self.attributes
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    /// Number of undirected edges (each stored twice).
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Undirected edges as `(i, j, weight)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.adjacency
            .triplets()
            .filter(|&(i, j, _)| i < j)
            .collect()
    }

    pub fn adjacency_binary(&self) -> SparseMatrix {
        self.adjacency.binarized()
    }

    /// Copy with the given undirected edges removed (both directions).
    pub fn without_edges(&self, removed: &[(usize, usize)]) -> Result<Self> {
        let drop: HashSet<(usize, usize)> = removed
            .iter()
            .flat_map(|&(i, j)| [(i, j), (j, i)])
            .collect();
        let adjacency = SparseMatrix::from_triplets(
            self.n_nodes(),
            self.n_nodes(),
            self.adjacency
                .triplets()
                .filter(|&(i, j, _)| !drop.contains(&(i, j))),
        )?;
        Ok(AttributedNetwork {
            adjacency,
            ..self.clone()
        })
    }

    /// Copy with the given node–attribute entries removed.
    pub fn without_attr_entries(&self, removed: &[(usize, usize)]) -> Result<Self> {
        let drop: HashSet<(usize, usize)> = removed.iter().copied().collect();
        let attributes = SparseMatrix::from_triplets(
            self.n_nodes(),
            self.n_attrs(),
            self.attributes
                .triplets()
                .filter(|&(i, a, _)| !drop.contains(&(i, a))),
        )?;
        Ok(AttributedNetwork {
            attributes,
            ..self.clone()
        })
    }
}

/// Partition of nodes into labelled and unlabelled sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    labelled: Vec<usize>,
    unlabelled: Vec<usize>,
    is_labelled: Vec<bool>,
}

impl LabelMask {
    /// Build from a labelled id list; checks every id carries a label in `net`.
    pub fn from_labelled(net: &AttributedNetwork, labelled: &[usize]) -> Result<Self> {
        let n = net.n_nodes();
        let mut is_labelled = vec![false; n];
        for &v in labelled {
            if v >= n {
                return Err(Error::Invalid(format!("labelled node {v} out of range")));
            }
            if net.label(v).is_none() {
                return Err(Error::Invalid(format!("node {v} has no label to reveal")));
            }
            is_labelled[v] = true;
        }
        Ok(Self::from_flags(is_labelled))
    }

    /// Every node unlabelled (fully unsupervised setting).
    pub fn all_unlabelled(n: usize) -> Self {
        Self::from_flags(vec![false; n])
    }

    fn from_flags(is_labelled: Vec<bool>) -> Self {
        let (mut labelled, mut unlabelled) = (Vec::new(), Vec::new());
        for (v, &l) in is_labelled.iter().enumerate() {
            if l {
                labelled.push(v);
            } else {
                unlabelled.push(v);
            }
        }
        LabelMask {
            labelled,
            unlabelled,
            is_labelled,
        }
    }

    pub fn labelled(&self) -> &[usize] {
        &self.labelled
    }

    pub fn unlabelled(&self) -> &[usize] {
        &self.unlabelled
    }

    pub fn is_labelled(&self, v: usize) -> bool {
        self.is_labelled[v]
    }

    pub fn n_nodes(&self) -> usize {
        self.is_labelled.len()
    }
}
