//! Adam, the full-batch training loop and the finite-difference gradient check.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::elbo::{objective_on, ElboBreakdown, LatentInputs, ObjectiveData, ObjectiveWeights};
use crate::error::{Error, Result};
use crate::eval::{score_split, Embeddings, Fold};
use crate::graphdata::{AttributedNetwork, HoldoutSplit, LabelMask};
use crate::model::{
    forward_on, init_params, observed_onehots, EpochNoise, GraphInputs, HyperParams, ModelParams,
    NetDims, ParamVars, PARAM_NAMES,
};
use crate::numkernel::fd::{finite_diff_grad, relative_error, DEFAULT_EPS};
use crate::numkernel::{DenseMatrix, OpKind, Tape};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators mirroring a list of tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<DenseMatrix>,
    pub v: Vec<DenseMatrix>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[&DenseMatrix]) -> Self {
        let zeros: Vec<DenseMatrix> = shapes.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn for_params(p: &ModelParams) -> Self {
        Self::new(&p.tensors())
    }
}

/// One bias-corrected Adam update over parallel tensor lists.
pub fn adam_update(
    params: &mut [&mut DenseMatrix],
    grads: &[&DenseMatrix],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam",
            format!(
                "{} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (idx, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[idx].shape() {
            return Err(Error::shape(
                "adam",
                format!("tensor {idx}: param {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[idx].as_mut_slice();
        let v = state.v[idx].as_mut_slice();
        for (((w, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
        }
    }
    Ok(())
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) -> Result<()> {
    let g = grads.tensors();
    adam_update(&mut params.tensors_mut(), &g, state, lr)
}

/// Data-dependent constants for evaluating the objective repeatedly.
pub struct Problem<'n> {
    pub inputs: GraphInputs,
    pub observed: DenseMatrix,
    pub mask: &'n LabelMask,
    pub data: ObjectiveData,
    pub tau: f64,
    pub weights: ObjectiveWeights,
}

impl<'n> Problem<'n> {
    pub fn new(net: &AttributedNetwork, mask: &'n LabelMask, hyper: &HyperParams) -> Result<Self> {
        if mask.n_nodes() != net.n_nodes() {
            return Err(Error::shape(
                "label mask",
                format!("{} mask entries for {} nodes", mask.n_nodes(), net.n_nodes()),
            ));
        }
        Ok(Problem {
            inputs: GraphInputs::new(net, hyper.self_loops),
            observed: observed_onehots(net, mask),
            mask,
            data: ObjectiveData::new(net, mask, hyper.pos_weight)?,
            tau: hyper.tau,
            weights: ObjectiveWeights {
                alpha: hyper.alpha,
                beta: hyper.beta,
            },
        })
    }

    pub fn dims(&self) -> NetDims {
        self.inputs.dims
    }

    fn record<'t>(
        &'t self,
        tape: &mut Tape<'t>,
        params: &ModelParams,
        noise: &EpochNoise,
    ) -> Result<(ParamVars, crate::elbo::ObjectiveVars)> {
        let pv = ParamVars::bind(tape, params);
        let lv = forward_on(tape, &pv, &self.inputs, &self.observed, self.mask, self.tau, noise)?;
        let ov = objective_on(tape, &LatentInputs::from(&lv), &self.data, self.mask, self.weights)?;
        Ok((pv, ov))
    }

    /// Objective value for fixed noise.
    pub fn loss(&self, params: &ModelParams, noise: &EpochNoise) -> Result<f64> {
        let mut tape = Tape::new();
        let (_, ov) = self.record(&mut tape, params, noise)?;
        Ok(tape.value(ov.total).item())
    }

    /// Objective breakdown and gradient for fixed noise.
    pub fn loss_and_grad(
        &self,
        params: &ModelParams,
        noise: &EpochNoise,
        fault: Option<OpKind>,
    ) -> Result<(ElboBreakdown, ModelParams)> {
        let mut tape = Tape::new();
        if let Some(kind) = fault {
            tape.inject_fault(kind);
        }
        let (pv, ov) = self.record(&mut tape, params, noise)?;
        let mut grads = tape.backward(ov.total)?;
        let mut out = params.zeros_like();
        for (dst, var) in out.tensors_mut().into_iter().zip(pv.all()) {
            *dst = grads.take(var);
        }
        Ok((ov.breakdown(&tape), out))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub breakdowns: Vec<ElboBreakdown>,
    pub epoch_seconds: Vec<f64>,
    /// Validation AUC per epoch, empty without a validation split.
    pub val_auc: Vec<f64>,
    /// 0-based epoch whose parameters are kept as best.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn loss_trace(&self) -> Vec<f64> {
        self.breakdowns.iter().map(|b| b.total_j).collect()
    }

    pub fn len(&self) -> usize {
        self.breakdowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakdowns.is_empty()
    }
}

/// Passed to the progress callback after each epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochReport<'h> {
    pub epoch: usize,
    pub breakdown: &'h ElboBreakdown,
    pub val_auc: Option<f64>,
    pub seconds: f64,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Held-out pairs of the task being trained for; selects the best epoch.
    pub validation: Option<&'a HoldoutSplit>,
    pub progress: Option<Box<dyn FnMut(EpochReport<'_>) + 'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Parameters after the best validation epoch (equal to `params` without
    /// validation).
    pub best_params: ModelParams,
    pub history: TrainHistory,
    pub adam: AdamState,
}

/// Noise stream used by training; separate from the parameter-init stream.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn dump(epoch: usize, b: &ElboBreakdown, params: &ModelParams, grads: Option<&ModelParams>) -> String {
    let norms = |p: &ModelParams| -> Vec<(String, f64)> {
        PARAM_NAMES
            .iter()
            .zip(p.tensors())
            .map(|(n, t)| (n.to_string(), t.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()))
            .collect()
    };
    serde_json::json!({
        "epoch": epoch,
        "breakdown": b,
        "param_norms": norms(params),
        "grad_norms": grads.map(norms),
    })
    .to_string()
}

/// Train with default options; returns the final parameters.
pub fn train(net: &AttributedNetwork, mask: &LabelMask, hyper: &HyperParams) -> Result<(ModelParams, TrainHistory)> {
    let out = train_with(net, mask, hyper, TrainOptions::default())?;
    Ok((out.params, out.history))
}

pub fn train_with(
    net: &AttributedNetwork,
    mask: &LabelMask,
    hyper: &HyperParams,
    mut opts: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    hyper.validate()?;
    let problem = Problem::new(net, mask, hyper)?;
    let dims = problem.dims();
    let mut params = init_params(hyper, dims, hyper.seed);
    let mut adam = AdamState::for_params(&params);
    let mut rng = noise_rng(hyper.seed);
    let validation = opts
        .validation
        .filter(|s| !s.val.is_empty() && !s.val_neg.is_empty());

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    for epoch in 0..hyper.epochs {
        let start = Instant::now();
        let noise = EpochNoise::draw(&mut rng, dims, hyper.latent_dim);
        let (b, grads) = problem.loss_and_grad(&params, &noise, None)?;
        if !b.total_j.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                dump: dump(epoch, &b, &params, Some(&grads)),
            });
        }
        adam_step(&mut params, &grads, &mut adam, hyper.learning_rate)?;
        if !params.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                dump: dump(epoch, &b, &params, Some(&grads)),
            });
        }

        let val_auc = match validation {
            Some(split) => {
                let emb = Embeddings::compute(&params, net, mask, hyper.self_loops)?;
                let auc = score_split(&emb, split, Fold::Val)?.auc;
                history.val_auc.push(auc);
                if best.as_ref().is_none_or(|(a, _)| auc > *a) {
                    best = Some((auc, params.clone()));
                    history.best_epoch = epoch;
                }
                Some(auc)
            }
            None => None,
        };
        let seconds = start.elapsed().as_secs_f64();
        history.epoch_seconds.push(seconds);
        if let Some(cb) = opts.progress.as_mut() {
            cb(EpochReport {
                epoch,
                breakdown: &b,
                val_auc,
                seconds,
            });
        }
        history.breakdowns.push(b);
    }
    let best_params = match best {
        Some((_, p)) => p,
        None => {
            history.best_epoch = hyper.epochs - 1;
            params.clone()
        }
    };
    Ok(TrainOutcome {
        params,
        best_params,
        history,
        adam,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub trials: usize,
    pub seed: u64,
    pub eps: f64,
    /// Corrupt this op's backward rule (mutation testing).
    pub fault: Option<OpKind>,
    /// Std of the Gaussian jitter added to every initialized parameter so
    /// biases are nonzero too.
    pub jitter: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            trials: 20,
            seed: 0,
            eps: DEFAULT_EPS,
            fault: None,
            jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_trial: Vec<f64>,
    /// Parameter tensor and flat index of the worst entry.
    pub worst: (String, usize),
    pub n_params: usize,
}

fn locate(params: &ModelParams, mut flat: usize) -> (String, usize) {
    for (name, t) in PARAM_NAMES.iter().zip(params.tensors()) {
        if flat < t.len() {
            return (name.to_string(), flat);
        }
        flat -= t.len();
    }
    ("?".into(), flat)
}

/// Compare `backward()` with central differences of the objective at
/// `opts.trials` random parameter points. Noise is drawn once per trial and
/// reused for every perturbation.
pub fn grad_check(
    net: &AttributedNetwork,
    mask: &LabelMask,
    hyper: &HyperParams,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let problem = Problem::new(net, mask, hyper)?;
    let dims = problem.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut per_trial = Vec::with_capacity(opts.trials);
    let mut worst = (0.0, ("?".to_string(), 0));
    let mut n_params = 0;
    for trial in 0..opts.trials {
        let mut params = init_params(hyper, dims, rng.random());
        for t in params.tensors_mut() {
            for w in t.as_mut_slice() {
                *w += opts.jitter * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let noise = EpochNoise::draw(&mut rng, dims, hyper.latent_dim);
        let (_, grads) = problem.loss_and_grad(&params, &noise, opts.fault)?;
        let analytic = grads.flatten();
        let flat = params.flatten();
        n_params = flat.len();

        let template = params.clone();
        let numeric = finite_diff_grad(
            |x| {
                let mut p = template.clone();
                p.assign_flat(x);
                problem.loss(&p, &noise).unwrap_or(f64::NAN)
            },
            &flat,
            opts.eps,
        );
        let mut trial_max = 0.0f64;
        for (i, (&a, &b)) in analytic.iter().zip(&numeric).enumerate() {
            let e = relative_error(a, b);
            let e = if e.is_nan() { f64::INFINITY } else { e };
            if e > trial_max {
                trial_max = e;
            }
            if e > worst.0 {
                worst = (e, locate(&params, i));
            }
            if e > 1e-5 {
                log::debug!("entry {:?}: analytic {a:.6e} numeric {b:.6e}", locate(&params, i));
            }
        }
        log::debug!("grad check trial {trial}: max relative error {trial_max:.3e}");
        per_trial.push(trial_max);
    }
    Ok(GradCheckReport {
        max_rel_error: per_trial.iter().copied().fold(0.0, f64::max),
        per_trial,
        worst: worst.1,
        n_params,
    })
}

/// Bundled 8-node, 4-attribute, 2-class network with nodes 0 and 5 labelled.
///
/// Two 4-cycles (classes 0 and 1) joined by the bridge 3–4; each class owns
/// two attributes and node 2 carries one foreign attribute.
pub fn gradcheck_fixture() -> (AttributedNetwork, LabelMask) {
    use crate::numkernel::SparseMatrix;
    let und = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (3, 4), (0, 2)];
    let adj = SparseMatrix::from_triplets(8, 8, und.iter().flat_map(|&(i, j)| [(i, j, 1.0), (j, i, 1.0)]))
        .expect("valid fixture edges");
    let attrs = [
        (0, 0),
        (1, 0),
        (1, 1),
        (2, 1),
        (2, 2),
        (3, 0),
        (4, 2),
        (5, 3),
        (6, 2),
        (6, 3),
        (7, 3),
    ];
    let x = SparseMatrix::from_triplets(8, 4, attrs.iter().map(|&(i, a)| (i, a, 1.0)))
        .expect("valid fixture attributes");
    let labels = (0..8).map(|v| Some(v / 4)).collect();
    let net = AttributedNetwork::new(adj, x, labels, 2).expect("valid fixture");
    let mask = LabelMask::from_labelled(&net, &[0, 5]).expect("valid fixture mask");
    (net, mask)
}

/// Small hyperparameters for the gradient check.
pub fn gradcheck_hyper() -> HyperParams {
    HyperParams {
        latent_dim: 4,
        hidden_node: 5,
        hidden_attr: 5,
        hidden_disc: 5,
        ..HyperParams::default()
    }
}
