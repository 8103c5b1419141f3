//! Inference networks (node GCN encoder, attribute MLP encoder, label
//! discriminator) and the parameter-free inner-product decoder.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    self, gumbel_softmax_on, rsample_on, GaussianParams, GaussianVars, LOGVAR_CLAMP,
};
use crate::error::{Error, Result};
use crate::graphdata::{
    build_attr_features, build_node_features, normalize_adjacency, AttributedNetwork, LabelMask,
};
use crate::numkernel::dense::dot;
use crate::numkernel::{DenseMatrix, SparseMatrix, Tape, Var};

/// How the positive class of each reconstructed matrix is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PosWeightMode {
    /// `#zeros / #ones` per matrix.
    #[default]
    Balanced,
    /// Every entry weighted 1.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Node latent dimension D; attributes use K + D.
    pub latent_dim: usize,
    pub hidden_node: usize,
    pub hidden_attr: usize,
    pub hidden_disc: usize,
    /// Weight of the classification loss.
    pub alpha: f64,
    /// Edge-vs-attribute reconstruction balance.
    pub beta: f64,
    /// Gumbel-Softmax temperature.
    pub tau: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub pos_weight: PosWeightMode,
    pub self_loops: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            latent_dim: 64,
            hidden_node: 32,
            hidden_attr: 32,
            hidden_disc: 32,
            alpha: 1.0,
            beta: 0.5,
            tau: 0.2,
            learning_rate: 0.01,
            epochs: 300,
            seed: 0,
            pos_weight: PosWeightMode::Balanced,
            self_loops: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if self.hidden_node == 0 || self.hidden_attr == 0 || self.hidden_disc == 0 {
            return bad("hidden widths must be at least 1".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta {} must lie in (0, 1)", self.beta));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau {} must be positive", self.tau));
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha {} must be non-negative", self.alpha));
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub n_nodes: usize,
    pub n_attrs: usize,
    pub n_classes: usize,
}

impl NetDims {
    pub fn of(net: &AttributedNetwork) -> Self {
        NetDims {
            n_nodes: net.n_nodes(),
            n_attrs: net.n_attrs(),
            n_classes: net.n_classes(),
        }
    }
}

/// All trainable weights. Biases are 1×width rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// (N+M+K)×H_n; the last K rows act on the label columns.
    pub w_n0: DenseMatrix,
    /// H_n×2D: first D output columns are means, last D log-variances.
    pub w_n1: DenseMatrix,
    pub w_a0: DenseMatrix,
    pub b_a0: DenseMatrix,
    pub w_a1: DenseMatrix,
    pub b_a1: DenseMatrix,
    pub w_c0: DenseMatrix,
    pub b_c0: DenseMatrix,
    pub w_c1: DenseMatrix,
    pub b_c1: DenseMatrix,
}

pub const PARAM_NAMES: [&str; 10] = [
    "w_n0", "w_n1", "w_a0", "b_a0", "w_a1", "b_a1", "w_c0", "b_c0", "w_c1", "b_c1",
];

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit))
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(hyper: &HyperParams, dims: NetDims, seed: u64) -> ModelParams {
    let NetDims {
        n_nodes: n,
        n_attrs: m,
        n_classes: k,
    } = dims;
    let d = hyper.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams {
        w_n0: glorot(&mut rng, n + m + k, hyper.hidden_node),
        w_n1: glorot(&mut rng, hyper.hidden_node, 2 * d),
        w_a0: glorot(&mut rng, n, hyper.hidden_attr),
        b_a0: DenseMatrix::zeros(1, hyper.hidden_attr),
        w_a1: glorot(&mut rng, hyper.hidden_attr, 2 * (k + d)),
        b_a1: DenseMatrix::zeros(1, 2 * (k + d)),
        w_c0: glorot(&mut rng, n + m, hyper.hidden_disc),
        b_c0: DenseMatrix::zeros(1, hyper.hidden_disc),
        w_c1: glorot(&mut rng, hyper.hidden_disc, k),
        b_c1: DenseMatrix::zeros(1, k),
    }
}

impl ModelParams {
    pub fn tensors(&self) -> [&DenseMatrix; 10] {
        [
            &self.w_n0, &self.w_n1, &self.w_a0, &self.b_a0, &self.w_a1, &self.b_a1, &self.w_c0,
            &self.b_c0, &self.w_c1, &self.b_c1,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut DenseMatrix; 10] {
        [
            &mut self.w_n0,
            &mut self.w_n1,
            &mut self.w_a0,
            &mut self.b_a0,
            &mut self.w_a1,
            &mut self.b_a1,
            &mut self.w_c0,
            &mut self.b_c0,
            &mut self.w_c1,
            &mut self.b_c1,
        ]
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_scalars());
        for t in self.tensors() {
            out.extend_from_slice(t.as_slice());
        }
        out
    }

    /// Overwrite all weights from a flat vector laid out as [`Self::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_scalars(), "flat parameter length");
        let mut at = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &DenseMatrix| DenseMatrix::zeros(m.rows(), m.cols());
        ModelParams {
            w_n0: z(&self.w_n0),
            w_n1: z(&self.w_n1),
            w_a0: z(&self.w_a0),
            b_a0: z(&self.b_a0),
            w_a1: z(&self.w_a1),
            b_a1: z(&self.b_a1),
            w_c0: z(&self.w_c0),
            b_c0: z(&self.b_c0),
            w_c1: z(&self.w_c1),
            b_c1: z(&self.b_c1),
        }
    }

    /// Latent dimension D implied by the weight shapes.
    pub fn latent_dim(&self) -> usize {
        self.w_n1.cols() / 2
    }

    pub fn check_dims(&self, dims: NetDims) -> Result<()> {
        let NetDims {
            n_nodes: n,
            n_attrs: m,
            n_classes: k,
        } = dims;
        let d = self.latent_dim();
        let ok = self.w_n0.rows() == n + m + k
            && self.w_n0.cols() == self.w_n1.rows()
            && self.w_a0.rows() == n
            && self.w_a1.cols() == 2 * (k + d)
            && self.b_a1.cols() == 2 * (k + d)
            && self.w_c0.rows() == n + m
            && self.w_c1.cols() == k
            && self.b_c1.cols() == k;
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "ModelParams",
                format!("weights do not fit N={n}, M={m}, K={k}, D={d}"),
            ))
        }
    }
}

/// Constant sparse inputs derived once from a network.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub dims: NetDims,
    /// Normalized adjacency Ã.
    pub a_norm: SparseMatrix,
    /// Node features `[A | X]`.
    pub f_node: SparseMatrix,
    /// Attribute features `Xᵀ`.
    pub f_attr: SparseMatrix,
}

impl GraphInputs {
    pub fn new(net: &AttributedNetwork, self_loops: bool) -> Self {
        GraphInputs {
            dims: NetDims::of(net),
            a_norm: normalize_adjacency(net, self_loops),
            f_node: build_node_features(net),
            f_attr: build_attr_features(net),
        }
    }
}

/// Parameter leaves on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub w_n0: Var,
    pub w_n1: Var,
    pub w_a0: Var,
    pub b_a0: Var,
    pub w_a1: Var,
    pub b_a1: Var,
    pub w_c0: Var,
    pub b_c0: Var,
    pub w_c1: Var,
    pub b_c1: Var,
}

impl ParamVars {
    pub fn bind(tape: &mut Tape, p: &ModelParams) -> Self {
        ParamVars {
            w_n0: tape.param(p.w_n0.clone()),
            w_n1: tape.param(p.w_n1.clone()),
            w_a0: tape.param(p.w_a0.clone()),
            b_a0: tape.param(p.b_a0.clone()),
            w_a1: tape.param(p.w_a1.clone()),
            b_a1: tape.param(p.b_a1.clone()),
            w_c0: tape.param(p.w_c0.clone()),
            b_c0: tape.param(p.b_c0.clone()),
            w_c1: tape.param(p.w_c1.clone()),
            b_c1: tape.param(p.b_c1.clone()),
        }
    }

    pub fn all(&self) -> [Var; 10] {
        [
            self.w_n0, self.w_n1, self.w_a0, self.b_a0, self.w_a1, self.b_a1, self.w_c0,
            self.b_c0, self.w_c1, self.b_c1,
        ]
    }
}

fn split_gaussian(tape: &mut Tape, out: Var, dim: usize) -> Result<GaussianVars> {
    let mu = tape.slice_cols(out, 0, dim)?;
    let raw = tape.slice_cols(out, dim, 2 * dim)?;
    let logvar = tape.clamp(raw, -LOGVAR_CLAMP, LOGVAR_CLAMP);
    Ok(GaussianVars { mu, logvar })
}

/// Two-layer GCN: `H = tanh(Ã [F | Y] W0)`, `[μ | logσ²] = Ã H W1`.
///
/// `[F | Y] W0` is evaluated blockwise as `F·W0[..N+M] + Y·W0[N+M..]` so the
/// sparse features never get densified.
pub fn encode_nodes_on<'a>(
    tape: &mut Tape<'a>,
    pv: &ParamVars,
    inputs: &'a GraphInputs,
    labels: Var,
) -> Result<GaussianVars> {
    let nf = inputs.f_node.cols();
    let k = tape.value(labels).cols();
    let w_feat = tape.slice_rows(pv.w_n0, 0, nf)?;
    let w_lab = tape.slice_rows(pv.w_n0, nf, nf + k)?;
    let fw = tape.spmm(&inputs.f_node, w_feat)?;
    let yw = tape.matmul(labels, w_lab)?;
    let pre = tape.add(fw, yw)?;
    let prop = tape.spmm(&inputs.a_norm, pre)?;
    let h = tape.tanh(prop);
    let hw = tape.matmul(h, pv.w_n1)?;
    let out = tape.spmm(&inputs.a_norm, hw)?;
    let d = tape.value(pv.w_n1).cols() / 2;
    split_gaussian(tape, out, d)
}

/// Two-layer MLP on `Xᵀ`: `H = tanh(Xᵀ W0 + b0)`, `[μ | logσ²] = H W1 + b1`.
pub fn encode_attrs_on<'a>(
    tape: &mut Tape<'a>,
    pv: &ParamVars,
    f_attr: &'a SparseMatrix,
) -> Result<GaussianVars> {
    let xw = tape.spmm(f_attr, pv.w_a0)?;
    let pre = tape.add_row_bias(xw, pv.b_a0)?;
    let h = tape.tanh(pre);
    let hw = tape.matmul(h, pv.w_a1)?;
    let out = tape.add_row_bias(hw, pv.b_a1)?;
    let width = tape.value(pv.w_a1).cols() / 2;
    split_gaussian(tape, out, width)
}

/// Discriminator logits `tanh(F W0 + b0) W1 + b1`.
pub fn discriminator_logits_on<'a>(
    tape: &mut Tape<'a>,
    pv: &ParamVars,
    f_node: &'a SparseMatrix,
) -> Result<Var> {
    let xw = tape.spmm(f_node, pv.w_c0)?;
    let pre = tape.add_row_bias(xw, pv.b_c0)?;
    let h = tape.tanh(pre);
    let hw = tape.matmul(h, pv.w_c1)?;
    tape.add_row_bias(hw, pv.b_c1)
}

fn eval_tape<'a, T>(
    params: &ModelParams,
    f: impl FnOnce(&mut Tape<'a>, &ParamVars) -> Result<T>,
) -> Result<T> {
    let mut tape = Tape::new();
    let pv = ParamVars::bind(&mut tape, params);
    f(&mut tape, &pv)
}

/// Node posterior from an explicit augmented feature matrix `[F | Y]`.
pub fn encode_nodes(
    params: &ModelParams,
    f_aug: &SparseMatrix,
    a_norm: &SparseMatrix,
) -> Result<GaussianParams> {
    eval_tape(params, |t, pv| {
        let fw = t.spmm(f_aug, pv.w_n0)?;
        let prop = t.spmm(a_norm, fw)?;
        let h = t.tanh(prop);
        let hw = t.matmul(h, pv.w_n1)?;
        let out = t.spmm(a_norm, hw)?;
        let d = params.latent_dim();
        let g = split_gaussian(t, out, d)?;
        Ok(g.values(t))
    })
}

pub fn encode_attrs(params: &ModelParams, f_attr: &SparseMatrix) -> Result<GaussianParams> {
    eval_tape(params, |t, pv| Ok(encode_attrs_on(t, pv, f_attr)?.values(t)))
}

/// Class probabilities, N×K.
pub fn discriminate(params: &ModelParams, f_node: &SparseMatrix) -> Result<DenseMatrix> {
    eval_tape(params, |t, pv| {
        let logits = discriminator_logits_on(t, pv, f_node)?;
        let pi = t.row_softmax(logits);
        Ok(t.value(pi).clone())
    })
}

/// Edge logit `⟨[z_i; y_i], [z_j; y_j]⟩`.
pub fn decode_edge(z_i: &[f64], y_i: &[f64], z_j: &[f64], y_j: &[f64]) -> f64 {
    debug_assert_eq!(z_i.len(), z_j.len());
    debug_assert_eq!(y_i.len(), y_j.len());
    dot(z_i, z_j) + dot(y_i, y_j)
}

/// Attribute logit `⟨[z_i; y_i], z_a⟩` with `z_a` of length D + K.
pub fn decode_attr(z_i: &[f64], y_i: &[f64], z_a: &[f64]) -> f64 {
    let d = z_i.len();
    debug_assert_eq!(z_a.len(), d + y_i.len());
    dot(z_i, &z_a[..d]) + dot(y_i, &z_a[d..])
}

/// Noise for one stochastic forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochNoise {
    /// N×D standard normal.
    pub node: DenseMatrix,
    /// M×(K+D) standard normal.
    pub attr: DenseMatrix,
    /// N×K Gumbel(0, 1); rows of labelled nodes are unused.
    pub gumbel: DenseMatrix,
}

impl EpochNoise {
    pub fn draw<R: Rng>(rng: &mut R, dims: NetDims, latent_dim: usize) -> Self {
        let NetDims {
            n_nodes: n,
            n_attrs: m,
            n_classes: k,
        } = dims;
        EpochNoise {
            node: distributions::sample_standard_normal(rng, n, latent_dim),
            attr: distributions::sample_standard_normal(rng, m, k + latent_dim),
            gumbel: distributions::sample_gumbel(rng, n, k),
        }
    }

    pub fn zeros(dims: NetDims, latent_dim: usize) -> Self {
        EpochNoise {
            node: DenseMatrix::zeros(dims.n_nodes, latent_dim),
            attr: DenseMatrix::zeros(dims.n_attrs, dims.n_classes + latent_dim),
            gumbel: DenseMatrix::zeros(dims.n_nodes, dims.n_classes),
        }
    }
}

/// Tape handles for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LatentVars {
    pub node: GaussianVars,
    pub attr: GaussianVars,
    pub z_node: Var,
    pub z_attr: Var,
    /// N×K label matrix: one-hots for labelled nodes, relaxed samples otherwise.
    pub y: Var,
    pub pi: Var,
    pub log_pi: Var,
}

/// Value snapshot of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub node: GaussianParams,
    pub attr: GaussianParams,
    pub z_node: DenseMatrix,
    pub z_attr: DenseMatrix,
    pub y: DenseMatrix,
    pub pi: DenseMatrix,
}

impl LatentVars {
    pub fn values(&self, tape: &Tape) -> LatentState {
        LatentState {
            node: self.node.values(tape),
            attr: self.attr.values(tape),
            z_node: tape.value(self.z_node).clone(),
            z_attr: tape.value(self.z_attr).clone(),
            y: tape.value(self.y).clone(),
            pi: tape.value(self.pi).clone(),
        }
    }
}

/// One-hot rows of labelled nodes, zero rows elsewhere.
pub fn observed_onehots(net: &AttributedNetwork, mask: &LabelMask) -> DenseMatrix {
    let mut y = DenseMatrix::zeros(net.n_nodes(), net.n_classes());
    for &v in mask.labelled() {
        let k = net.label(v).expect("labelled nodes carry labels");
        y.set(v, k, 1.0);
    }
    y
}

/// Discriminator → label matrix → node and attribute posteriors → samples,
/// all recorded on `tape`.
pub fn forward_on<'a>(
    tape: &mut Tape<'a>,
    pv: &ParamVars,
    inputs: &'a GraphInputs,
    observed: &DenseMatrix,
    mask: &LabelMask,
    tau: f64,
    noise: &EpochNoise,
) -> Result<LatentVars> {
    let logits = discriminator_logits_on(tape, pv, &inputs.f_node)?;
    let pi = tape.row_softmax(logits);
    let log_pi = tape.row_log_softmax(logits);

    let sampled = gumbel_softmax_on(tape, log_pi, tau, noise.gumbel.clone())?;
    let keep = DenseMatrix::from_fn(observed.rows(), observed.cols(), |i, _| {
        if mask.is_labelled(i) {
            0.0
        } else {
            1.0
        }
    });
    let keep = tape.constant(keep);
    let unl = tape.mul(sampled, keep)?;
    let obs = tape.constant(observed.clone());
    let y = tape.add(unl, obs)?;

    let node = encode_nodes_on(tape, pv, inputs, y)?;
    let z_node = rsample_on(tape, node, noise.node.clone())?;
    let attr = encode_attrs_on(tape, pv, &inputs.f_attr)?;
    let z_attr = rsample_on(tape, attr, noise.attr.clone())?;
    Ok(LatentVars {
        node,
        attr,
        z_node,
        z_attr,
        y,
        pi,
        log_pi,
    })
}

/// Stand-alone forward pass drawing fresh noise from `rng`.
pub fn forward_epoch<R: Rng>(
    params: &ModelParams,
    net: &AttributedNetwork,
    mask: &LabelMask,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<LatentState> {
    let inputs = GraphInputs::new(net, hyper.self_loops);
    let noise = EpochNoise::draw(rng, inputs.dims, params.latent_dim());
    let observed = observed_onehots(net, mask);
    let mut tape = Tape::new();
    let pv = ParamVars::bind(&mut tape, params);
    let lv = forward_on(&mut tape, &pv, &inputs, &observed, mask, hyper.tau, &noise)?;
    Ok(lv.values(&tape))
}

pub const CHECKPOINT_FORMAT: &str = "coembed-checkpoint/v1";

/// Serialized model: hyperparameters, dimensions, weights and the revealed labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub hyper: HyperParams,
    pub dims: NetDims,
    pub seed: u64,
    pub epoch: usize,
    pub labelled: Vec<usize>,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(hyper: &HyperParams, dims: NetDims, epoch: usize, mask: &LabelMask, params: ModelParams) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            hyper: hyper.clone(),
            dims,
            seed: hyper.seed,
            epoch,
            labelled: mask.labelled().to_vec(),
            params,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Invalid(format!(
                "{}: unsupported checkpoint format {:?}",
                path.display(),
                ck.format
            )));
        }
        ck.params.check_dims(ck.dims)?;
        Ok(ck)
    }
}
