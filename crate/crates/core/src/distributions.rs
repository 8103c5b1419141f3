//! Diagonal Gaussians, Gumbel-Softmax relaxation, categorical entropy and the
//! weighted Bernoulli likelihood. Each primitive has a plain value form and a
//! tape form that records the same computation for differentiation.

use rand::Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};

use crate::error::{Error, Result};
use crate::numkernel::tape::{softplus, Tape, Var};
use crate::numkernel::DenseMatrix;

/// Range `logvar` is clamped to when produced by an encoder.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// Tolerance on `Σp = 1` accepted by [`categorical_entropy`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Row-wise diagonal Gaussian `N(mu, diag(exp(logvar)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mu: DenseMatrix,
    pub logvar: DenseMatrix,
}

impl GaussianParams {
    /// Clamps `logvar` into `[-10, 10]`.
    pub fn new(mu: DenseMatrix, logvar: DenseMatrix) -> Result<Self> {
        if mu.shape() != logvar.shape() {
            return Err(Error::Shape {
                op: "GaussianParams::new",
                detail: format!("mu {:?} vs logvar {:?}", mu.shape(), logvar.shape()),
            });
        }
        let logvar = logvar.map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));
        Ok(GaussianParams { mu, logvar })
    }

    pub fn rows(&self) -> usize {
        self.mu.rows()
    }

    pub fn dim(&self) -> usize {
        self.mu.cols()
    }
}

/// `mu + exp(logvar / 2) ⊙ noise`.
pub fn gaussian_rsample(g: &GaussianParams, noise: &DenseMatrix) -> Result<DenseMatrix> {
    if noise.shape() != g.mu.shape() {
        return Err(Error::Shape {
            op: "gaussian_rsample",
            detail: format!("noise {:?} vs mu {:?}", noise.shape(), g.mu.shape()),
        });
    }
    let sd = g.logvar.map(|v| (0.5 * v).exp());
    Ok(DenseMatrix::from_fn(g.rows(), g.dim(), |i, j| {
        g.mu.get(i, j) + sd.get(i, j) * noise.get(i, j)
    }))
}

/// Per-row `KL(N(mu, σ²) ‖ N(0, I)) = ½ Σ (mu² + σ² − 1 − log σ²)`.
pub fn gaussian_kl_std(g: &GaussianParams) -> Vec<f64> {
    (0..g.rows())
        .map(|i| {
            0.5 * g
                .mu
                .row(i)
                .iter()
                .zip(g.logvar.row(i))
                .map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv)
                .sum::<f64>()
        })
        .collect()
}

/// `softmax((logits + gumbel) / tau)` for a single row.
pub fn gumbel_softmax_sample(logits: &[f64], tau: f64, gumbel: &[f64]) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!("temperature {tau} must be positive")));
    }
    if logits.len() != gumbel.len() {
        return Err(Error::Shape {
            op: "gumbel_softmax_sample",
            detail: format!("{} logits vs {} noise values", logits.len(), gumbel.len()),
        });
    }
    let mut y: Vec<f64> = logits
        .iter()
        .zip(gumbel)
        .map(|(l, g)| (l + g) / tau)
        .collect();
    crate::numkernel::tape::softmax_in_place(&mut y);
    Ok(y)
}

/// `−Σ p log p` with `0 log 0 = 0`.
pub fn categorical_entropy(probs: &[f64]) -> Result<f64> {
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Invalid(format!(
            "not a probability vector (sum {total})"
        )));
    }
    Ok(-probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>())
}

/// `pos_weight·t·log σ(l) + (1−t)·log(1−σ(l))`, with `l` clamped to ±30.
pub fn bernoulli_logpmf(logit: f64, target: f64, pos_weight: f64) -> f64 {
    let l = logit.clamp(-30.0, 30.0);
    -(pos_weight * target * softplus(-l) + (1.0 - target) * softplus(l))
}

pub fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// i.i.d. `Gumbel(0, 1)` draws, i.e. `−log(−log u)` for uniform `u`.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DenseMatrix {
    let g = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
    DenseMatrix::from_fn(rows, cols, |_, _| g.sample(rng))
}

// ----- tape forms -----

/// Tape handles of a Gaussian's parameters.
#[derive(Debug, Clone, Copy)]
pub struct GaussianVars {
    pub mu: Var,
    pub logvar: Var,
}

impl GaussianVars {
    pub fn values(&self, tape: &Tape) -> GaussianParams {
        GaussianParams {
            mu: tape.value(self.mu).clone(),
            logvar: tape.value(self.logvar).clone(),
        }
    }
}

/// Reparameterized sample; `noise` is a constant.
pub fn rsample_on(tape: &mut Tape, g: GaussianVars, noise: DenseMatrix) -> Result<Var> {
    let half = tape.scale(g.logvar, 0.5);
    let sd = tape.exp(half);
    let eps = tape.constant(noise);
    let spread = tape.mul(sd, eps)?;
    tape.add(g.mu, spread)
}

/// Per-row KL to the standard normal as a rows×1 node.
pub fn kl_std_on(tape: &mut Tape, g: GaussianVars) -> Result<Var> {
    let mu2 = tape.mul(g.mu, g.mu)?;
    let var = tape.exp(g.logvar);
    let (r, c) = tape.value(g.mu).shape();
    let ones = tape.constant(DenseMatrix::filled(r, c, 1.0));
    let terms = tape.weighted_sum(&[(mu2, 1.0), (var, 1.0), (ones, -1.0), (g.logvar, -1.0)])?;
    let rows = tape.row_sum(terms);
    Ok(tape.scale(rows, 0.5))
}

/// Row-wise Gumbel-Softmax of `logits` with constant `gumbel` noise.
pub fn gumbel_softmax_on(tape: &mut Tape, logits: Var, tau: f64, gumbel: DenseMatrix) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!("temperature {tau} must be positive")));
    }
    let g = tape.constant(gumbel);
    let perturbed = tape.add(logits, g)?;
    let scaled = tape.scale(perturbed, 1.0 / tau);
    Ok(tape.row_softmax(scaled))
}

/// Per-row categorical entropy of probability rows, rows×1.
pub fn entropy_on(tape: &mut Tape, probs: Var) -> Result<Var> {
    let logp = tape.log(probs);
    let plogp = tape.mul(probs, logp)?;
    let s = tape.row_sum(plogp);
    Ok(tape.scale(s, -1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_returns_mean() {
        let mu = DenseMatrix::from_rows(&[vec![1.0, -2.0]]);
        let g = GaussianParams::new(mu.clone(), DenseMatrix::filled(1, 2, 3.0)).unwrap();
        assert_eq!(gaussian_rsample(&g, &DenseMatrix::zeros(1, 2)).unwrap(), mu);
    }

    #[test]
    fn unit_sigma_passes_noise_through() {
        let g = GaussianParams::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(2, 2)).unwrap();
        let n = DenseMatrix::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.0]]);
        assert_eq!(gaussian_rsample(&g, &n).unwrap(), n);
    }

    #[test]
    fn rsample_shape_mismatch() {
        let g = GaussianParams::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(2, 2)).unwrap();
        assert!(gaussian_rsample(&g, &DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn logvar_clamped_on_construction() {
        let g = GaussianParams::new(DenseMatrix::zeros(1, 2), DenseMatrix::from_rows(&[vec![50.0, -50.0]])).unwrap();
        assert_eq!(g.logvar.as_slice(), &[10.0, -10.0]);
    }

    #[test]
    fn kl_closed_forms() {
        let g = GaussianParams::new(DenseMatrix::zeros(1, 3), DenseMatrix::zeros(1, 3)).unwrap();
        assert_eq!(gaussian_kl_std(&g), vec![0.0]);
        let g = GaussianParams::new(DenseMatrix::scalar(1.0), DenseMatrix::scalar(0.0)).unwrap();
        assert_eq!(gaussian_kl_std(&g), vec![0.5]);
    }

    #[test]
    fn gumbel_softmax_uniform_with_zero_noise() {
        for tau in [0.01, 0.2, 1.0, 5.0] {
            let y = gumbel_softmax_sample(&[0.7; 4], tau, &[0.0; 4]).unwrap();
            for v in y {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gumbel_softmax_rejects_bad_tau() {
        assert!(gumbel_softmax_sample(&[0.0, 0.0], 0.0, &[0.0, 0.0]).is_err());
        assert!(gumbel_softmax_sample(&[0.0, 0.0], -1.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn entropy_values() {
        assert!((categorical_entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(categorical_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let h = categorical_entropy(&[0.7, 0.3]).unwrap();
        assert!((h - 0.6108643).abs() < 1e-7);
        assert!(categorical_entropy(&[0.5, 0.6]).is_err());
        assert!(categorical_entropy(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn bernoulli_values() {
        let half = 0.5f64.ln();
        assert!((bernoulli_logpmf(0.0, 1.0, 1.0) - half).abs() < 1e-15);
        assert!((bernoulli_logpmf(0.0, 0.0, 1.0) - half).abs() < 1e-15);
        // 3·log σ(2), σ(2) = 1/(1+e^-2)
        let want = 3.0 * (1.0 / (1.0 + (-2.0f64).exp())).ln();
        assert!((bernoulli_logpmf(2.0, 1.0, 3.0) - want).abs() < 1e-14);
        assert!((want + 0.3808).abs() < 1e-4);
        assert!(bernoulli_logpmf(1e4, 0.0, 1.0).is_finite());
    }

    #[test]
    fn tape_forms_match_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu = sample_standard_normal(&mut rng, 3, 4);
        let lv = sample_standard_normal(&mut rng, 3, 4);
        let noise = sample_standard_normal(&mut rng, 3, 4);
        let g = GaussianParams::new(mu.clone(), lv.clone()).unwrap();

        let mut t = Tape::new();
        let vars = GaussianVars {
            mu: t.param(mu),
            logvar: t.param(lv),
        };
        let z = rsample_on(&mut t, vars, noise.clone()).unwrap();
        assert!(t.value(z).max_abs_diff(&gaussian_rsample(&g, &noise).unwrap()) < 1e-15);
        let kl = kl_std_on(&mut t, vars).unwrap();
        for (a, b) in t.value(kl).as_slice().iter().zip(gaussian_kl_std(&g)) {
            assert!((a - b).abs() < 1e-13);
        }

        let logits = sample_standard_normal(&mut rng, 2, 3);
        let gum = sample_gumbel(&mut rng, 2, 3);
        let lv = t.param(logits.clone());
        let y = gumbel_softmax_on(&mut t, lv, 0.2, gum.clone()).unwrap();
        for i in 0..2 {
            let want = gumbel_softmax_sample(logits.row(i), 0.2, gum.row(i)).unwrap();
            for (a, b) in t.value(y).row(i).iter().zip(&want) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        let h = entropy_on(&mut t, y).unwrap();
        for i in 0..2 {
            let want = categorical_entropy(t.value(y).row(i)).unwrap();
            assert!((t.value(h).get(i, 0) - want).abs() < 1e-12);
        }
    }
}
