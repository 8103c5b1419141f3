//! The five case-wise negative evidence lower bounds and the weighted total
//! objective.
//!
//! Reconstruction covers every entry of the adjacency (unordered pairs
//! `i < j`) and of the attribute matrix. Entries are partitioned by the label
//! status of their endpoints:
//!
//! | case | entries                              |
//! |------|--------------------------------------|
//! | LL   | edge pair, both nodes labelled        |
//! | UU   | edge pair, both nodes unlabelled      |
//! | LU   | edge pair, exactly one labelled       |
//! | LA   | attribute entry of a labelled node    |
//! | UA   | attribute entry of an unlabelled node |
//!
//! Each node's KL, label-prior constant and (if unlabelled) label entropy is
//! charged exactly once per pass: half to the edge case matching its status
//! (LL or UU) and half to the attribute case (LA or UA). LU carries
//! reconstruction only. Attribute KLs are spread over LA/UA in proportion to
//! the labelled/unlabelled node counts. Every case is then divided by its
//! entry count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{AttributedNetwork, LabelMask};
use crate::model::{LatentState, LatentVars, PosWeightMode};
use crate::numkernel::tape::SIGMOID_CLAMP;
use crate::numkernel::{DenseMatrix, Tape, Var};
use crate::distributions::{entropy_on, kl_std_on, GaussianVars};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    LabelledEdge,
    UnlabelledEdge,
    MixedEdge,
    LabelledAttr,
    UnlabelledAttr,
}

impl Case {
    pub const ALL: [Case; 5] = [
        Case::LabelledEdge,
        Case::UnlabelledEdge,
        Case::MixedEdge,
        Case::LabelledAttr,
        Case::UnlabelledAttr,
    ];

    pub fn is_edge(self) -> bool {
        matches!(
            self,
            Case::LabelledEdge | Case::UnlabelledEdge | Case::MixedEdge
        )
    }
}

/// One reconstructed matrix entry: `(node, node)` for edge cases with
/// `row < col`, `(node, attribute)` for attribute cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub target: f64,
}

/// Fractions of per-latent terms charged to one case.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentShares {
    /// Per node, applied to KL and the label-prior constant.
    pub node: Vec<f64>,
    /// Per node, applied to the label entropy (zero for labelled nodes).
    pub entropy: Vec<f64>,
    /// Per attribute, applied to the attribute KL.
    pub attr: Vec<f64>,
}

impl LatentShares {
    pub fn zeros(n_nodes: usize, n_attrs: usize) -> Self {
        LatentShares {
            node: vec![0.0; n_nodes],
            entropy: vec![0.0; n_nodes],
            attr: vec![0.0; n_attrs],
        }
    }
}

/// Everything one case op needs besides the latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseInput {
    pub case: Case,
    pub entries: Vec<Entry>,
    pub shares: LatentShares,
    pub pos_weight: f64,
}

/// A case lowered to constant coefficient matrices for the tape.
#[derive(Debug, Clone)]
struct CaseTerms {
    n_entries: usize,
    /// Coefficients of `softplus(-logit)` (targets 1, positive weight applied).
    pos_coef: DenseMatrix,
    /// Coefficients of `softplus(logit)` (targets 0).
    neg_coef: DenseMatrix,
    node_share: DenseMatrix,
    entropy_share: DenseMatrix,
    attr_share: DenseMatrix,
    prior_share: f64,
}

impl CaseTerms {
    fn lower(input: &CaseInput, n_nodes: usize, n_attrs: usize) -> Result<Self> {
        let cols = if input.case.is_edge() { n_nodes } else { n_attrs };
        let mut pos_coef = DenseMatrix::zeros(n_nodes, cols);
        let mut neg_coef = DenseMatrix::zeros(n_nodes, cols);
        for e in &input.entries {
            if e.row >= n_nodes || e.col >= cols {
                return Err(Error::shape(
                    "case entries",
                    format!("entry ({}, {}) outside {n_nodes}x{cols}", e.row, e.col),
                ));
            }
            let p = pos_coef.get(e.row, e.col);
            pos_coef.set(e.row, e.col, p + input.pos_weight * e.target);
            let q = neg_coef.get(e.row, e.col);
            neg_coef.set(e.row, e.col, q + (1.0 - e.target));
        }
        let col = |v: &[f64]| DenseMatrix::from_fn(v.len(), 1, |i, _| v[i]);
        let s = &input.shares;
        if s.node.len() != n_nodes || s.entropy.len() != n_nodes || s.attr.len() != n_attrs {
            return Err(Error::shape("case shares", "share vectors do not match N / M"));
        }
        Ok(CaseTerms {
            n_entries: input.entries.len(),
            pos_coef,
            neg_coef,
            node_share: col(&s.node),
            entropy_share: col(&s.entropy),
            attr_share: col(&s.attr),
            prior_share: s.node.iter().sum(),
        })
    }
}

/// Objective weights. Unlike training hyperparameters, `beta` may be 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
}

/// Pre-lowered data for a (network, label mask) pair; constant across epochs.
#[derive(Debug, Clone)]
pub struct ObjectiveData {
    n_classes: usize,
    cases: Vec<(Case, CaseTerms)>,
    /// One-hot rows scaled by `1 / |V^l|` for the classification loss.
    class_target: DenseMatrix,
    n_labelled: usize,
    pub edge_pos_weight: f64,
    pub attr_pos_weight: f64,
}

/// `#zeros / #ones`, or 1 when a matrix has no ones.
fn balance(ones: usize, total: usize) -> f64 {
    if ones == 0 || ones == total {
        1.0
    } else {
        (total - ones) as f64 / ones as f64
    }
}

/// Positive-class weights for the adjacency (upper triangle) and attributes.
pub fn pos_weights(net: &AttributedNetwork, mode: PosWeightMode) -> (f64, f64) {
    match mode {
        PosWeightMode::Unit => (1.0, 1.0),
        PosWeightMode::Balanced => {
            let n = net.n_nodes();
            (
                balance(net.n_edges(), n * (n - 1) / 2),
                balance(net.attributes().nnz(), n * net.n_attrs()),
            )
        }
    }
}

/// Build the five case inputs for the full-reconstruction objective.
pub fn case_inputs(
    net: &AttributedNetwork,
    mask: &LabelMask,
    mode: PosWeightMode,
) -> Vec<CaseInput> {
    let n = net.n_nodes();
    let m = net.n_attrs();
    let (we, wa) = pos_weights(net, mode);
    let adj = net.adjacency();
    let x = net.attributes();
    let n_lab = mask.labelled().len();
    let n_unl = n - n_lab;

    let mut inputs: Vec<CaseInput> = Case::ALL
        .iter()
        .map(|&case| CaseInput {
            case,
            entries: Vec::new(),
            shares: LatentShares::zeros(n, m),
            pos_weight: if case.is_edge() { we } else { wa },
        })
        .collect();
    let slot = |c: Case| Case::ALL.iter().position(|&k| k == c).expect("known case");

    for i in 0..n {
        for j in i + 1..n {
            let case = match (mask.is_labelled(i), mask.is_labelled(j)) {
                (true, true) => Case::LabelledEdge,
                (false, false) => Case::UnlabelledEdge,
                _ => Case::MixedEdge,
            };
            let target = if adj.contains(i, j) { 1.0 } else { 0.0 };
            inputs[slot(case)].entries.push(Entry { row: i, col: j, target });
        }
        let case = if mask.is_labelled(i) {
            Case::LabelledAttr
        } else {
            Case::UnlabelledAttr
        };
        for a in 0..m {
            let target = if x.contains(i, a) { 1.0 } else { 0.0 };
            inputs[slot(case)].entries.push(Entry { row: i, col: a, target });
        }
    }

    // Per-node terms: half to the node's own edge bucket, half to its own
    // attribute bucket. A node alone in its status has no own edge pairs, so
    // its edge half moves to the attribute side.
    for i in 0..n {
        let labelled = mask.is_labelled(i);
        let (own_edge, own_attr, peers) = if labelled {
            (Case::LabelledEdge, Case::LabelledAttr, n_lab - 1)
        } else {
            (Case::UnlabelledEdge, Case::UnlabelledAttr, n_unl - 1)
        };
        let parts = if peers > 0 {
            [(own_edge, 0.5), (own_attr, 0.5)]
        } else {
            [(own_edge, 0.0), (own_attr, 1.0)]
        };
        for (case, share) in parts {
            let s = &mut inputs[slot(case)].shares;
            s.node[i] += share;
            if !labelled {
                s.entropy[i] += share;
            }
        }
    }
    for a in 0..m {
        inputs[slot(Case::LabelledAttr)].shares.attr[a] = n_lab as f64 / n as f64;
        inputs[slot(Case::UnlabelledAttr)].shares.attr[a] = n_unl as f64 / n as f64;
    }
    inputs
}

impl ObjectiveData {
    pub fn new(net: &AttributedNetwork, mask: &LabelMask, mode: PosWeightMode) -> Result<Self> {
        let n = net.n_nodes();
        let m = net.n_attrs();
        let inputs = case_inputs(net, mask, mode);
        let (edge_pos_weight, attr_pos_weight) = pos_weights(net, mode);
        let cases = inputs
            .iter()
            .map(|c| Ok((c.case, CaseTerms::lower(c, n, m)?)))
            .collect::<Result<Vec<_>>>()?;
        let n_labelled = mask.labelled().len();
        let mut class_target = DenseMatrix::zeros(n, net.n_classes());
        for &v in mask.labelled() {
            let k = net.label(v).expect("labelled nodes carry labels");
            class_target.set(v, k, 1.0 / n_labelled as f64);
        }
        Ok(ObjectiveData {
            n_classes: net.n_classes(),
            cases,
            class_target,
            n_labelled,
            edge_pos_weight,
            attr_pos_weight,
        })
    }
}

/// Values of every component of one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ElboBreakdown {
    pub sum_case_ll: f64,
    pub sum_case_uu: f64,
    pub sum_case_lu: f64,
    pub sum_case_la: f64,
    pub sum_case_ua: f64,
    pub kl_nodes: f64,
    pub kl_attrs: f64,
    pub entropy_unlabelled: f64,
    pub classification_loss: f64,
    pub total_j: f64,
}

impl ElboBreakdown {
    pub const FIELDS: [&'static str; 10] = [
        "sum_case_ll",
        "sum_case_uu",
        "sum_case_lu",
        "sum_case_la",
        "sum_case_ua",
        "kl_nodes",
        "kl_attrs",
        "entropy_unlabelled",
        "classification_loss",
        "total_j",
    ];

    pub fn values(&self) -> [f64; 10] {
        [
            self.sum_case_ll,
            self.sum_case_uu,
            self.sum_case_lu,
            self.sum_case_la,
            self.sum_case_ua,
            self.kl_nodes,
            self.kl_attrs,
            self.entropy_unlabelled,
            self.classification_loss,
            self.total_j,
        ]
    }

    /// `β·(LL+UU+LU) + (1−β)·(LA+UA) + α·CE` from the stored fields.
    pub fn recompose(&self, w: ObjectiveWeights) -> f64 {
        w.beta * (self.sum_case_ll + self.sum_case_uu + self.sum_case_lu)
            + (1.0 - w.beta) * (self.sum_case_la + self.sum_case_ua)
            + w.alpha * self.classification_loss
    }
}

/// Latent handles the objective reads.
#[derive(Debug, Clone, Copy)]
pub struct LatentInputs {
    pub node: GaussianVars,
    pub attr: GaussianVars,
    pub z_node: Var,
    pub z_attr: Var,
    pub y: Var,
    pub pi: Var,
    pub log_pi: Var,
}

impl From<&LatentVars> for LatentInputs {
    fn from(l: &LatentVars) -> Self {
        LatentInputs {
            node: l.node,
            attr: l.attr,
            z_node: l.z_node,
            z_attr: l.z_attr,
            y: l.y,
            pi: l.pi,
            log_pi: l.log_pi,
        }
    }
}

impl LatentInputs {
    /// Place a value snapshot on a tape as constants.
    pub fn constants(tape: &mut Tape, s: &LatentState) -> Self {
        let node = GaussianVars {
            mu: tape.constant(s.node.mu.clone()),
            logvar: tape.constant(s.node.logvar.clone()),
        };
        let attr = GaussianVars {
            mu: tape.constant(s.attr.mu.clone()),
            logvar: tape.constant(s.attr.logvar.clone()),
        };
        let pi = tape.constant(s.pi.clone());
        let log_pi = tape.log(pi);
        LatentInputs {
            node,
            attr,
            z_node: tape.constant(s.z_node.clone()),
            z_attr: tape.constant(s.z_attr.clone()),
            y: tape.constant(s.y.clone()),
            pi,
            log_pi,
        }
    }
}

/// Shared per-pass intermediates.
struct Shared {
    edge_pos: Var,
    edge_neg: Var,
    attr_pos: Var,
    attr_neg: Var,
    kl_nodes: Var,
    kl_attrs: Var,
    entropy: Var,
}

fn shared_terms(tape: &mut Tape, l: &LatentInputs) -> Result<Shared> {
    let u = tape.concat_cols(l.z_node, l.y)?;
    let edge_logits = tape.matmul_t(u, u)?;
    let attr_logits = tape.matmul_t(u, l.z_attr)?;
    let (edge_pos, edge_neg) = bce_parts(tape, edge_logits);
    let (attr_pos, attr_neg) = bce_parts(tape, attr_logits);
    Ok(Shared {
        edge_pos,
        edge_neg,
        attr_pos,
        attr_neg,
        kl_nodes: kl_std_on(tape, l.node)?,
        kl_attrs: kl_std_on(tape, l.attr)?,
        entropy: entropy_on(tape, l.pi)?,
    })
}

/// `(−log σ(l), −log(1 − σ(l)))` elementwise, logits clamped like `sigmoid`.
fn bce_parts(tape: &mut Tape, logits: Var) -> (Var, Var) {
    let l = tape.clamp(logits, -SIGMOID_CLAMP, SIGMOID_CLAMP);
    let neg_l = tape.scale(l, -1.0);
    (tape.softplus(neg_l), tape.softplus(l))
}

fn case_on(
    tape: &mut Tape,
    sh: &Shared,
    terms: &CaseTerms,
    is_edge: bool,
    log_k: f64,
) -> Result<Var> {
    if terms.n_entries == 0 {
        return Ok(tape.constant(DenseMatrix::scalar(0.0)));
    }
    let (pos, neg) = if is_edge {
        (sh.edge_pos, sh.edge_neg)
    } else {
        (sh.attr_pos, sh.attr_neg)
    };
    let parts = [
        tape.dot_const(pos, terms.pos_coef.clone())?,
        tape.dot_const(neg, terms.neg_coef.clone())?,
        tape.dot_const(sh.kl_nodes, terms.node_share.clone())?,
        tape.dot_const(sh.entropy, terms.entropy_share.clone())?,
        tape.dot_const(sh.kl_attrs, terms.attr_share.clone())?,
        tape.constant(DenseMatrix::scalar(terms.prior_share * log_k)),
    ];
    let inv = 1.0 / terms.n_entries as f64;
    tape.weighted_sum(&[
        (parts[0], inv),
        (parts[1], inv),
        (parts[2], inv),
        (parts[3], -inv),
        (parts[4], inv),
        (parts[5], inv),
    ])
}

/// Handles of every objective component on the tape.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveVars {
    pub total: Var,
    pub cases: [Var; 5],
    pub classification: Var,
    pub kl_nodes: Var,
    pub kl_attrs: Var,
    pub entropy: Var,
    entropy_mask_sum: Var,
}

impl ObjectiveVars {
    pub fn breakdown(&self, tape: &Tape) -> ElboBreakdown {
        let v = |x: Var| tape.value(x).item();
        ElboBreakdown {
            sum_case_ll: v(self.cases[0]),
            sum_case_uu: v(self.cases[1]),
            sum_case_lu: v(self.cases[2]),
            sum_case_la: v(self.cases[3]),
            sum_case_ua: v(self.cases[4]),
            kl_nodes: tape.value(self.kl_nodes).sum(),
            kl_attrs: tape.value(self.kl_attrs).sum(),
            entropy_unlabelled: v(self.entropy_mask_sum),
            classification_loss: v(self.classification),
            total_j: v(self.total),
        }
    }
}

/// Record the full objective `J` on `tape`.
///
/// The classification term needs at least one labelled node unless `alpha`
/// is zero, in which case it is reported as 0.
pub fn objective_on(
    tape: &mut Tape,
    latent: &LatentInputs,
    data: &ObjectiveData,
    mask: &LabelMask,
    w: ObjectiveWeights,
) -> Result<ObjectiveVars> {
    let sh = shared_terms(tape, latent)?;
    let log_k = (data.n_classes as f64).ln();
    let mut cases = Vec::with_capacity(5);
    for (case, terms) in &data.cases {
        cases.push(case_on(tape, &sh, terms, case.is_edge(), log_k)?);
    }
    let cases: [Var; 5] = cases.try_into().expect("five cases");

    let classification = if data.n_labelled == 0 {
        if w.alpha != 0.0 {
            return Err(Error::Invalid(
                "classification loss needs at least one labelled node".into(),
            ));
        }
        tape.constant(DenseMatrix::scalar(0.0))
    } else {
        let s = tape.dot_const(latent.log_pi, data.class_target.clone())?;
        tape.scale(s, -1.0)
    };

    let unl = DenseMatrix::from_fn(mask.n_nodes(), 1, |i, _| {
        if mask.is_labelled(i) {
            0.0
        } else {
            1.0
        }
    });
    let entropy_mask_sum = tape.dot_const(sh.entropy, unl)?;

    let total = tape.weighted_sum(&[
        (cases[0], w.beta),
        (cases[1], w.beta),
        (cases[2], w.beta),
        (cases[3], 1.0 - w.beta),
        (cases[4], 1.0 - w.beta),
        (classification, w.alpha),
    ])?;
    Ok(ObjectiveVars {
        total,
        cases,
        classification,
        kl_nodes: sh.kl_nodes,
        kl_attrs: sh.kl_attrs,
        entropy: sh.entropy,
        entropy_mask_sum,
    })
}

fn case_value(latent: &LatentState, input: &CaseInput, expect: Case) -> Result<f64> {
    if input.case != expect {
        return Err(Error::Invalid(format!(
            "expected {expect:?} entries, got {:?}",
            input.case
        )));
    }
    let n = latent.z_node.rows();
    let m = latent.z_attr.rows();
    let k = latent.pi.cols();
    let terms = CaseTerms::lower(input, n, m)?;
    let mut tape = Tape::new();
    let li = LatentInputs::constants(&mut tape, latent);
    let sh = shared_terms(&mut tape, &li)?;
    let v = case_on(&mut tape, &sh, &terms, expect.is_edge(), (k as f64).ln())?;
    Ok(tape.value(v).item())
}

/// Negative ELBO of edges between two labelled nodes.
pub fn elbo_case_ll(latent: &LatentState, input: &CaseInput) -> Result<f64> {
    case_value(latent, input, Case::LabelledEdge)
}

/// Negative ELBO of edges between two unlabelled nodes (entropy terms included).
pub fn elbo_case_uu(latent: &LatentState, input: &CaseInput) -> Result<f64> {
    case_value(latent, input, Case::UnlabelledEdge)
}

/// Negative ELBO of edges with exactly one labelled endpoint.
pub fn elbo_case_lu(latent: &LatentState, input: &CaseInput) -> Result<f64> {
    case_value(latent, input, Case::MixedEdge)
}

/// Negative ELBO of attribute entries of labelled nodes.
pub fn elbo_case_la(latent: &LatentState, input: &CaseInput) -> Result<f64> {
    case_value(latent, input, Case::LabelledAttr)
}

/// Negative ELBO of attribute entries of unlabelled nodes.
pub fn elbo_case_ua(latent: &LatentState, input: &CaseInput) -> Result<f64> {
    case_value(latent, input, Case::UnlabelledAttr)
}

/// Mean over labelled nodes of `−log π[v, y_v]`.
pub fn classification_loss(
    latent: &LatentState,
    mask: &LabelMask,
    labels: &[Option<usize>],
) -> Result<f64> {
    if mask.labelled().is_empty() {
        return Err(Error::Invalid(
            "classification loss needs at least one labelled node".into(),
        ));
    }
    let total: f64 = mask
        .labelled()
        .iter()
        .map(|&v| {
            let k = labels[v].expect("labelled nodes carry labels");
            -latent.pi.get(v, k).max(crate::numkernel::tape::LOG_FLOOR).ln()
        })
        .sum();
    Ok(total / mask.labelled().len() as f64)
}

/// Evaluate the full objective on a value snapshot.
pub fn total_objective(
    latent: &LatentState,
    net: &AttributedNetwork,
    mask: &LabelMask,
    mode: PosWeightMode,
    w: ObjectiveWeights,
) -> Result<ElboBreakdown> {
    let data = ObjectiveData::new(net, mask, mode)?;
    let mut tape = Tape::new();
    let li = LatentInputs::constants(&mut tape, latent);
    let ov = objective_on(&mut tape, &li, &data, mask, w)?;
    Ok(ov.breakdown(&tape))
}
