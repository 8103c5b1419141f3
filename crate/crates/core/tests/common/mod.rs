//! Shared fixtures and a dense-math transcription of the case objectives.
#![allow(dead_code)]

use coembed::distributions::GaussianParams;
use coembed::graphdata::{AttributedNetwork, LabelMask};
use coembed::model::LatentState;
use coembed::numkernel::{DenseMatrix, SparseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N: usize = 6;
pub const M: usize = 4;
pub const K: usize = 3;
pub const D: usize = 3;

fn simplex_row(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random 6-node, 4-attribute, 3-class network with `n_labelled` revealed
/// labels and a random latent snapshot consistent with the mask.
pub fn random_instance(seed: u64, n_labelled: usize) -> (AttributedNetwork, LabelMask, LatentState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trips = Vec::new();
    for i in 0..N {
        for j in i + 1..N {
            if rng.random_bool(0.45) {
                trips.push((i, j, 1.0));
                trips.push((j, i, 1.0));
            }
        }
    }
    if trips.is_empty() {
        trips = vec![(0, 1, 1.0), (1, 0, 1.0)];
    }
    let adj = SparseMatrix::from_triplets(N, N, trips).unwrap();
    let mut xt = Vec::new();
    for i in 0..N {
        for a in 0..M {
            if rng.random_bool(0.4) {
                xt.push((i, a, 1.0));
            }
        }
    }
    let x = SparseMatrix::from_triplets(N, M, xt).unwrap();
    let labels: Vec<Option<usize>> = (0..N).map(|v| Some(v % K)).collect();
    let net = AttributedNetwork::new(adj, x, labels, K).unwrap();

    let mut order: Vec<usize> = (0..N).collect();
    for i in (1..N).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mask = LabelMask::from_labelled(&net, &order[..n_labelled]).unwrap();

    let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let node_mu = DenseMatrix::from_fn(N, D, |_, _| r(-1.0, 1.0));
    let node_lv = DenseMatrix::from_fn(N, D, |_, _| r(-1.0, 1.0));
    let attr_mu = DenseMatrix::from_fn(M, K + D, |_, _| r(-1.0, 1.0));
    let attr_lv = DenseMatrix::from_fn(M, K + D, |_, _| r(-1.0, 1.0));
    let z_node = DenseMatrix::from_fn(N, D, |_, _| r(-1.5, 1.5));
    let z_attr = DenseMatrix::from_fn(M, K + D, |_, _| r(-1.5, 1.5));
    let mut y = DenseMatrix::zeros(N, K);
    let mut pi = DenseMatrix::zeros(N, K);
    for v in 0..N {
        let p = simplex_row(&mut rng, K);
        pi.row_mut(v).copy_from_slice(&p);
        if mask.is_labelled(v) {
            y.set(v, net.label(v).unwrap(), 1.0);
        } else {
            let s = simplex_row(&mut rng, K);
            y.row_mut(v).copy_from_slice(&s);
        }
    }
    let latent = LatentState {
        node: GaussianParams::new(node_mu, node_lv).unwrap(),
        attr: GaussianParams::new(attr_mu, attr_lv).unwrap(),
        z_node,
        z_attr,
        y,
        pi,
    };
    (net, mask, latent)
}

fn kl_row(mu: &[f64], lv: &[f64]) -> f64 {
    let mut s = 0.0;
    for (m, l) in mu.iter().zip(lv) {
        let var = l.exp();
        s += m * m + var - 1.0 - var.ln();
    }
    s / 2.0
}

fn entropy_row(p: &[f64]) -> f64 {
    p.iter().map(|&q| -q * q.ln()).sum()
}

/// `−[w·t·log σ(l) + (1−t)·log(1−σ(l))]`, written out directly.
fn neg_log_lik(l: f64, t: f64, w: f64) -> f64 {
    let s = 1.0 / (1.0 + (-l).exp());
    -(w * t * s.ln() + (1.0 - t) * (1.0 - s).ln())
}

/// Per-case losses `[LL, UU, LU, LA, UA]` from first principles.
pub fn oracle_cases(latent: &LatentState, net: &AttributedNetwork, mask: &LabelMask, w_edge: f64, w_attr: f64) -> [f64; 5] {
    let n = net.n_nodes();
    let m = net.n_attrs();
    let k = net.n_classes();
    let a = net.adjacency().to_dense();
    let x = net.attributes().to_dense();
    let lab: Vec<bool> = (0..n).map(|v| mask.is_labelled(v)).collect();
    let n_l = lab.iter().filter(|&&b| b).count();
    let n_u = n - n_l;

    // u_v = [z_v | y_v]
    let u: Vec<Vec<f64>> = (0..n)
        .map(|v| latent.z_node.row(v).iter().chain(latent.y.row(v)).copied().collect())
        .collect();
    let dotp = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();

    let mut rec = [0.0; 5];
    let mut count = [0usize; 5];
    for i in 0..n {
        for j in i + 1..n {
            let c = match (lab[i], lab[j]) {
                (true, true) => 0,
                (false, false) => 1,
                _ => 2,
            };
            let t = if a.get(i, j) != 0.0 { 1.0 } else { 0.0 };
            rec[c] += neg_log_lik(dotp(&u[i], &u[j]), t, w_edge);
            count[c] += 1;
        }
        let c = if lab[i] { 3 } else { 4 };
        for att in 0..m {
            let t = x.get(i, att);
            rec[c] += neg_log_lik(dotp(&u[i], latent.z_attr.row(att)), t, w_attr);
            count[c] += 1;
        }
    }

    let mut extra = [0.0; 5];
    for i in 0..n {
        let per_node = kl_row(latent.node.mu.row(i), latent.node.logvar.row(i)) + (k as f64).ln()
            - if lab[i] { 0.0 } else { entropy_row(latent.pi.row(i)) };
        let peers = if lab[i] { n_l - 1 } else { n_u - 1 };
        let (edge_c, attr_c) = if lab[i] { (0, 3) } else { (1, 4) };
        if peers > 0 {
            extra[edge_c] += per_node / 2.0;
            extra[attr_c] += per_node / 2.0;
        } else {
            extra[attr_c] += per_node;
        }
    }
    let kl_attr: f64 = (0..m)
        .map(|att| kl_row(latent.attr.mu.row(att), latent.attr.logvar.row(att)))
        .sum();
    extra[3] += kl_attr * n_l as f64 / n as f64;
    extra[4] += kl_attr * n_u as f64 / n as f64;

    let mut out = [0.0; 5];
    for c in 0..5 {
        if count[c] > 0 {
            out[c] = (rec[c] + extra[c]) / count[c] as f64;
        }
    }
    out
}

/// `(#zeros / #ones)` over the upper triangle and over all attribute entries.
pub fn oracle_pos_weights(net: &AttributedNetwork) -> (f64, f64) {
    let n = net.n_nodes();
    let a = net.adjacency().to_dense();
    let mut ones = 0;
    for i in 0..n {
        for j in i + 1..n {
            if a.get(i, j) != 0.0 {
                ones += 1;
            }
        }
    }
    let pairs = n * (n - 1) / 2;
    let x_ones = net.attributes().nnz();
    let cells = n * net.n_attrs();
    let ratio = |o: usize, t: usize| if o == 0 || o == t { 1.0 } else { (t - o) as f64 / o as f64 };
    (ratio(ones, pairs), ratio(x_ones, cells))
}
