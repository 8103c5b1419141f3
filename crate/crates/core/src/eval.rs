//! Ranking and classification metrics plus the node-classification,
//! attribute-inference and link-scoring harnesses.
//!
//! All harnesses score with posterior means. Unlabelled nodes feed the
//! discriminator's argmax one-hot into the node encoder, so evaluating a
//! fixed model twice gives identical numbers.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::GaussianParams;
use crate::error::{Error, Result};
use crate::graphdata::io::write_file;
use crate::graphdata::{AttributedNetwork, HoldoutSplit, LabelMask, PairKind};
use crate::model::{
    decode_attr, decode_edge, discriminate, encode_attrs, encode_nodes_on, observed_onehots,
    GraphInputs, ModelParams, ParamVars,
};
use crate::numkernel::tape::{sigmoid, softmax_in_place};
use crate::numkernel::{DenseMatrix, Tape};

/// Scores paired with binary ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPredictions {
    pub scores: Vec<f64>,
    pub truth: Vec<bool>,
}

impl RankedPredictions {
    pub fn new(scores: Vec<f64>, truth: Vec<bool>) -> Result<Self> {
        if scores.len() != truth.len() {
            return Err(Error::shape(
                "ranked predictions",
                format!("{} scores vs {} labels", scores.len(), truth.len()),
            ));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Invalid("NaN score".into()));
        }
        Ok(RankedPredictions { scores, truth })
    }

    /// Positives followed by negatives.
    pub fn from_groups(pos: &[f64], neg: &[f64]) -> Self {
        let scores = pos.iter().chain(neg).copied().collect();
        let truth = std::iter::repeat_n(true, pos.len())
            .chain(std::iter::repeat_n(false, neg.len()))
            .collect();
        RankedPredictions { scores, truth }
    }

    fn n_pos(&self) -> usize {
        self.truth.iter().filter(|&&t| t).count()
    }
}

/// Mann–Whitney AUC with mid-ranks for ties.
pub fn auc(r: &RankedPredictions) -> Result<f64> {
    let n = r.scores.len();
    let n_pos = r.n_pos();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Invalid(
            "AUC needs both positive and negative examples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| r.scores[a].total_cmp(&r.scores[b]));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && r.scores[order[j + 1]] == r.scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| r.truth[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// `Σ_k (R_k − R_{k−1}) P_k` over scores sorted descending.
///
/// Equal scores keep their input order (stable sort), so ties are broken by
/// original index.
pub fn average_precision(r: &RankedPredictions) -> Result<f64> {
    let n_pos = r.n_pos();
    if n_pos == 0 {
        return Err(Error::Invalid("average precision needs a positive".into()));
    }
    let mut order: Vec<usize> = (0..r.scores.len()).collect();
    order.sort_by(|&a, &b| r.scores[b].total_cmp(&r.scores[a]));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if r.truth[idx] {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / n_pos as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn classification_report(pred: &[usize], truth: &[usize], k: usize) -> Result<ClassificationReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape(
            "classification report",
            format!("{} predictions vs {} labels", pred.len(), truth.len()),
        ));
    }
    if let Some(&c) = pred.iter().chain(truth).find(|&&c| c >= k) {
        return Err(Error::Invalid(format!("class {c} outside 0..{k}")));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let mut precision = Vec::with_capacity(k);
    let mut recall = Vec::with_capacity(k);
    let mut per_f1 = Vec::with_capacity(k);
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for c in 0..k {
        let tp = confusion[c][c];
        let predicted: usize = (0..k).map(|t| confusion[t][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        tp_all += tp;
        fp_all += predicted - tp;
        fn_all += actual - tp;
        let (p, r) = (ratio(tp, predicted), ratio(tp, actual));
        precision.push(p);
        recall.push(r);
        per_f1.push(f1(p, r));
    }
    // 2tp / (2tp + fp + fn) as one integer ratio, so it equals accuracy
    // exactly for single-label predictions
    Ok(ClassificationReport {
        macro_f1: if k == 0 { 0.0 } else { per_f1.iter().sum::<f64>() / k as f64 },
        micro_f1: ratio(2 * tp_all, 2 * tp_all + fp_all + fn_all),
        accuracy: ratio(tp_all, pred.len()),
        precision,
        recall,
        f1: per_f1,
        confusion,
    })
}

/// Row argmax; ties go to the lowest index.
pub fn argmax_rows(m: &DenseMatrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub const LINEAR_LAMBDA: f64 = 1e-3;
pub const LINEAR_STEPS: usize = 500;
const LINEAR_LR: f64 = 0.5;

/// Multinomial logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// (d+1)×K, last row is the bias.
    weights: DenseMatrix,
}

impl LinearClassifier {
    /// Full-batch gradient descent on mean cross-entropy + `λ/2 ‖W‖²`
    /// (bias unpenalized).
    pub fn fit(x: &DenseMatrix, y: &[usize], k: usize, lambda: f64, steps: usize) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n != y.len() || n == 0 {
            return Err(Error::shape("linear classifier", format!("{n} rows vs {} labels", y.len())));
        }
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for j in 0..d {
            let col: Vec<f64> = (0..n).map(|i| x.get(i, j)).collect();
            let mu = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
            mean[j] = mu;
            scale[j] = if var > 1e-24 { 1.0 / var.sqrt() } else { 1.0 };
        }
        let mut clf = LinearClassifier {
            mean,
            scale,
            weights: DenseMatrix::zeros(d + 1, k),
        };
        let xs = clf.design(x);
        let mut target = DenseMatrix::zeros(n, k);
        for (i, &c) in y.iter().enumerate() {
            target.set(i, c, 1.0);
        }
        for _ in 0..steps {
            let mut p = xs.matmul(&clf.weights)?;
            for i in 0..n {
                softmax_in_place(p.row_mut(i));
            }
            let resid = p.zip_map(&target, |a, b| (a - b) / n as f64);
            let mut grad = xs.t_matmul(&resid)?;
            for j in 0..d {
                for c in 0..k {
                    let g = grad.get(j, c) + lambda * clf.weights.get(j, c);
                    grad.set(j, c, g);
                }
            }
            clf.weights.axpy(-LINEAR_LR, &grad);
        }
        Ok(clf)
    }

    fn design(&self, x: &DenseMatrix) -> DenseMatrix {
        let d = x.cols();
        DenseMatrix::from_fn(x.rows(), d + 1, |i, j| {
            if j == d {
                1.0
            } else {
                (x.get(i, j) - self.mean[j]) * self.scale[j]
            }
        })
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.design(x).matmul(&self.weights)?))
    }
}

pub const NODES_FILE: &str = "nodes.tsv";
pub const ATTRS_FILE: &str = "attrs.tsv";
pub const LABELS_PRED_FILE: &str = "labels_pred.tsv";

/// Header `id, mu_0.., logvar_0..`, then one row per entity. Values use the
/// shortest round-tripping decimal form.
pub fn write_gaussian_tsv(w: &mut dyn Write, g: &GaussianParams) -> std::io::Result<()> {
    let d = g.dim();
    write!(w, "id")?;
    for i in 0..d {
        write!(w, "\tmu_{i}")?;
    }
    for i in 0..d {
        write!(w, "\tlogvar_{i}")?;
    }
    writeln!(w)?;
    for r in 0..g.rows() {
        write!(w, "{r}")?;
        for v in g.mu.row(r).iter().chain(g.logvar.row(r)) {
            write!(w, "\t{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `node, argmax_class, prob` per row of `pi`.
pub fn write_label_predictions(w: &mut dyn Write, pi: &DenseMatrix) -> std::io::Result<()> {
    writeln!(w, "node\targmax_class\tprob")?;
    for (v, c) in argmax_rows(pi).into_iter().enumerate() {
        writeln!(w, "{v}\t{c}\t{}", pi.get(v, c))?;
    }
    Ok(())
}

/// Deterministic embeddings of a trained model on the network it was fit to.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub node: GaussianParams,
    pub attr: GaussianParams,
    /// Discriminator probabilities.
    pub pi: DenseMatrix,
    /// Label rows fed to the decoder: observed one-hots or argmax one-hots.
    pub y: DenseMatrix,
}

impl Embeddings {
    pub fn compute(
        params: &ModelParams,
        net: &AttributedNetwork,
        mask: &LabelMask,
        self_loops: bool,
    ) -> Result<Self> {
        let inputs = GraphInputs::new(net, self_loops);
        let pi = discriminate(params, &inputs.f_node)?;
        let mut y = observed_onehots(net, mask);
        for (i, c) in argmax_rows(&pi).into_iter().enumerate() {
            if !mask.is_labelled(i) {
                y.set(i, c, 1.0);
            }
        }
        let node = {
            let mut tape = Tape::new();
            let pv = ParamVars::bind(&mut tape, params);
            let yv = tape.constant(y.clone());
            encode_nodes_on(&mut tape, &pv, &inputs, yv)?.values(&tape)
        };
        let attr = encode_attrs(params, &inputs.f_attr)?;
        Ok(Embeddings { node, attr, pi, y })
    }

    /// `σ(⟨[μ_i; y_i], [μ_j; y_j]⟩)`.
    /// Write `nodes.tsv`, `attrs.tsv` and `labels_pred.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(NODES_FILE), |w| write_gaussian_tsv(w, &self.node))?;
        write_file(&dir.join(ATTRS_FILE), |w| write_gaussian_tsv(w, &self.attr))?;
        write_file(&dir.join(LABELS_PRED_FILE), |w| write_label_predictions(w, &self.pi))
    }

    pub fn edge_score(&self, i: usize, j: usize) -> f64 {
        let mu = &self.node.mu;
        sigmoid(decode_edge(mu.row(i), self.y.row(i), mu.row(j), self.y.row(j)))
    }

    /// `σ(⟨[μ_i; y_i], μ_a⟩)`.
    pub fn attr_score(&self, i: usize, a: usize) -> f64 {
        sigmoid(decode_attr(self.node.mu.row(i), self.y.row(i), self.attr.mu.row(a)))
    }

    pub fn score(&self, kind: PairKind, (i, j): (usize, usize)) -> f64 {
        match kind {
            PairKind::Edge => self.edge_score(i, j),
            PairKind::AttributeEntry => self.attr_score(i, j),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fold {
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub auc: f64,
    pub ap: f64,
}

/// AUC/AP of one held-out fold of `split`.
pub fn score_split(emb: &Embeddings, split: &HoldoutSplit, fold: Fold) -> Result<RankingMetrics> {
    let (pos, neg) = match fold {
        Fold::Val => (&split.val, &split.val_neg),
        Fold::Test => (&split.test, &split.test_neg),
    };
    let s = |pairs: &[(usize, usize)]| -> Vec<f64> {
        pairs.iter().map(|&p| emb.score(split.kind, p)).collect()
    };
    let r = RankedPredictions::from_groups(&s(pos), &s(neg));
    Ok(RankingMetrics {
        auc: auc(&r)?,
        ap: average_precision(&r)?,
    })
}

/// Attribute-inference AUC/AP. `train_net` is the network the model saw
/// (held-out entries removed).
pub fn eval_attribute_inference(
    params: &ModelParams,
    train_net: &AttributedNetwork,
    mask: &LabelMask,
    self_loops: bool,
    split: &HoldoutSplit,
) -> Result<RankingMetrics> {
    if split.kind != PairKind::AttributeEntry {
        return Err(Error::Invalid("attribute inference needs an attribute split".into()));
    }
    let emb = Embeddings::compute(params, train_net, mask, self_loops)?;
    score_split(&emb, split, Fold::Test)
}

/// Link-scoring AUC/AP on the test fold of an edge split.
pub fn eval_link_scoring(
    params: &ModelParams,
    train_net: &AttributedNetwork,
    mask: &LabelMask,
    self_loops: bool,
    split: &HoldoutSplit,
) -> Result<RankingMetrics> {
    if split.kind != PairKind::Edge {
        return Err(Error::Invalid("link scoring needs an edge split".into()));
    }
    let emb = Embeddings::compute(params, train_net, mask, self_loops)?;
    score_split(&emb, split, Fold::Test)
}

/// Discriminator (DIS) and linear-probe (LINEAR) reports on unlabelled nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeClassification {
    pub dis: ClassificationReport,
    pub linear: ClassificationReport,
    pub n_eval: usize,
}

/// `net` must carry ground-truth labels for the unlabelled nodes being scored;
/// nodes without one are skipped.
pub fn eval_node_classification(
    params: &ModelParams,
    net: &AttributedNetwork,
    mask: &LabelMask,
    self_loops: bool,
) -> Result<NodeClassification> {
    let k = net.n_classes();
    let emb = Embeddings::compute(params, net, mask, self_loops)?;
    let targets: Vec<usize> = mask
        .unlabelled()
        .iter()
        .copied()
        .filter(|&v| net.label(v).is_some())
        .collect();
    if targets.is_empty() {
        return Err(Error::Invalid("no unlabelled node has a ground-truth label".into()));
    }
    if mask.labelled().is_empty() {
        return Err(Error::Invalid("linear probe needs labelled nodes".into()));
    }
    let truth: Vec<usize> = targets.iter().map(|&v| net.label(v).expect("filtered")).collect();

    let dis_pred: Vec<usize> = argmax_rows(&emb.pi.select_rows(&targets));
    let train_x = emb.node.mu.select_rows(mask.labelled());
    let train_y: Vec<usize> = mask
        .labelled()
        .iter()
        .map(|&v| net.label(v).expect("labelled nodes carry labels"))
        .collect();
    let clf = LinearClassifier::fit(&train_x, &train_y, k, LINEAR_LAMBDA, LINEAR_STEPS)?;
    let lin_pred = clf.predict(&emb.node.mu.select_rows(&targets))?;
    Ok(NodeClassification {
        dis: classification_report(&dis_pred, &truth, k)?,
        linear: classification_report(&lin_pred, &truth, k)?,
        n_eval: targets.len(),
    })
}

/// Flat metric name → value map, serialized as a JSON object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Metrics(pub BTreeMap<String, f64>);

impl Metrics {
    pub fn insert(&mut self, key: impl Into<String>, v: f64) {
        self.0.insert(key.into(), v);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.get(key).copied()
    }

    pub fn from_classification(nc: &NodeClassification) -> Self {
        let mut m = Metrics::default();
        for (tag, r) in [("dis", &nc.dis), ("linear", &nc.linear)] {
            m.insert(format!("{tag}_accuracy"), r.accuracy);
            m.insert(format!("{tag}_macro_f1"), r.macro_f1);
            m.insert(format!("{tag}_micro_f1"), r.micro_f1);
        }
        m.insert("n_eval", nc.n_eval as f64);
        m
    }

    pub fn from_ranking(prefix: &str, r: RankingMetrics) -> Self {
        let mut m = Metrics::default();
        m.insert(format!("{prefix}_auc"), r.auc);
        m.insert(format!("{prefix}_ap"), r.ap);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rp(scores: &[f64], truth: &[u8]) -> RankedPredictions {
        RankedPredictions::new(scores.to_vec(), truth.iter().map(|&t| t == 1).collect()).unwrap()
    }

    #[test]
    fn four_element_example() {
        let r = rp(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]);
        assert!((auc(&r).unwrap() - 0.75).abs() < 1e-15);
        assert!((average_precision(&r).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ordered_and_tied() {
        let r = rp(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]);
        assert_eq!(auc(&r).unwrap(), 1.0);
        assert_eq!(average_precision(&r).unwrap(), 1.0);
        let r = rp(&[0.3; 6], &[0, 1, 0, 1, 1, 0]);
        assert_eq!(auc(&r).unwrap(), 0.5);
    }

    #[test]
    fn single_positive_positions() {
        let r = rp(&[0.9, 0.5, 0.4, 0.1], &[1, 0, 0, 0]);
        assert_eq!(average_precision(&r).unwrap(), 1.0);
        let r = rp(&[0.0, 0.5, 0.4, 0.1, 0.2], &[1, 0, 0, 0, 0]);
        assert!((average_precision(&r).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ap_ties_follow_input_order() {
        // equal scores: the earlier index ranks first
        let r = rp(&[0.5, 0.5], &[1, 0]);
        assert_eq!(average_precision(&r).unwrap(), 1.0);
        let r = rp(&[0.5, 0.5], &[0, 1]);
        assert_eq!(average_precision(&r).unwrap(), 0.5);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(auc(&rp(&[0.1, 0.2], &[1, 1])).is_err());
        assert!(auc(&rp(&[0.1, 0.2], &[0, 0])).is_err());
        assert!(average_precision(&rp(&[0.1], &[0])).is_err());
        assert!(RankedPredictions::new(vec![0.1], vec![]).is_err());
    }

    #[test]
    fn report_hand_example() {
        let r = classification_report(&[0, 0, 1, 1], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.macro_f1, 0.5);
        assert_eq!(r.micro_f1, 0.5);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![1, 1]]);
    }

    #[test]
    fn report_perfect_and_missing_class() {
        let r = classification_report(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((r.accuracy, r.macro_f1, r.micro_f1), (1.0, 1.0, 1.0));
        // class 2 never appears: its F1 counts as 0
        let r = classification_report(&[0, 1], &[0, 1], 3).unwrap();
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(classification_report(&[0], &[0, 1], 2).is_err());
        assert!(classification_report(&[3], &[0], 2).is_err());
    }

    #[test]
    fn linear_probe_separates_blobs() {
        let x = DenseMatrix::from_fn(40, 2, |i, j| {
            let c = (i % 2) as f64;
            let jitter = ((i * 7 + j * 3) % 5) as f64 * 0.05;
            if j == 0 {
                4.0 * c + jitter
            } else {
                -2.0 * c + jitter
            }
        });
        let y: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let clf = LinearClassifier::fit(&x, &y, 2, LINEAR_LAMBDA, LINEAR_STEPS).unwrap();
        assert_eq!(clf.predict(&x).unwrap(), y);
    }

    #[test]
    fn argmax_ties_lowest() {
        let m = DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8]]);
        assert_eq!(argmax_rows(&m), vec![0, 1]);
    }
}
