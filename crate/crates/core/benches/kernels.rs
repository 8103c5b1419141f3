//! Sequential vs. rayon kernels. Build with `--features parallel` for the
//! `par` rows to differ from `seq`; without it both run the same loop.

use std::hint::black_box;

use coembed::graphdata::{generate_sbm, sample_label_mask, SbmConfig};
use coembed::model::{init_params, EpochNoise, HyperParams, NetDims};
use coembed::numkernel::{finite_diff_grad, DenseMatrix, SparseMatrix};
use coembed::trainer::{noise_rng, Problem};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn sparse(rng: &mut ChaCha8Rng, n: usize, density: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.random_bool(density) {
                t.push((i, j, 1.0));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, t).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [64usize, 256] {
        let a = dense(&mut rng, n, n);
        let b = dense(&mut rng, n, 64);
        g.bench_with_input(BenchmarkId::new("seq", n), &n, |bch, _| {
            bch.iter(|| black_box(a.matmul_seq(&b).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("par", n), &n, |bch, _| {
            bch.iter(|| black_box(a.matmul(&b).unwrap()))
        });
    }
    g.finish();
}

fn spmm(c: &mut Criterion) {
    let mut g = c.benchmark_group("spmm");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [200usize, 1000] {
        let s = sparse(&mut rng, n, 0.03);
        let d = dense(&mut rng, n, 64);
        g.bench_with_input(BenchmarkId::new("seq", n), &n, |bch, _| {
            bch.iter(|| black_box(s.spmm_seq(&d).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("par", n), &n, |bch, _| {
            bch.iter(|| black_box(s.spmm(&d).unwrap()))
        });
    }
    g.finish();
}

fn finite_differences(c: &mut Criterion) {
    let mut g = c.benchmark_group("finite_diff");
    g.sample_size(10);
    let net = generate_sbm(&SbmConfig { n_nodes: 30, ..SbmConfig::default() }).unwrap();
    let mask = sample_label_mask(&net, 0.2, 0).unwrap();
    let hyper = HyperParams { latent_dim: 4, hidden_node: 4, hidden_attr: 4, hidden_disc: 4, ..HyperParams::default() };
    let problem = Problem::new(&net, &mask, &hyper).unwrap();
    let params = init_params(&hyper, NetDims::of(&net), 0);
    let noise = EpochNoise::draw(&mut noise_rng(0), NetDims::of(&net), hyper.latent_dim);
    let flat = params.flatten();
    let loss = |x: &[f64]| {
        let mut p = params.clone();
        p.assign_flat(x);
        problem.loss(&p, &noise).unwrap()
    };
    g.bench_function("seq", |bch| {
        bch.iter(|| {
            let mut x = flat.clone();
            let out: Vec<f64> = (0..flat.len())
                .map(|k| {
                    x[k] = flat[k] + 1e-5;
                    let up = loss(&x);
                    x[k] = flat[k] - 1e-5;
                    let down = loss(&x);
                    x[k] = flat[k];
                    (up - down) / 2e-5
                })
                .collect();
            black_box(out)
        })
    });
    g.bench_function("par", |bch| bch.iter(|| black_box(finite_diff_grad(loss, &flat, 1e-5))));
    g.finish();
}

fn epoch(c: &mut Criterion) {
    let mut g = c.benchmark_group("epoch_200_nodes");
    g.sample_size(20);
    let net = generate_sbm(&SbmConfig::default()).unwrap();
    let mask = sample_label_mask(&net, 0.1, 0).unwrap();
    let hyper = HyperParams::default();
    let problem = Problem::new(&net, &mask, &hyper).unwrap();
    let params = init_params(&hyper, NetDims::of(&net), 0);
    let noise = EpochNoise::draw(&mut noise_rng(0), NetDims::of(&net), hyper.latent_dim);
    let label = if coembed::par::enabled() { "par" } else { "seq" };
    g.bench_function(label, |bch| {
        bch.iter(|| black_box(problem.loss_and_grad(&params, &noise, None).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, matmul, spmm, finite_differences, epoch);
criterion_main!(benches);
