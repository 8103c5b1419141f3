use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coembed::eval::{
    eval_attribute_inference, eval_link_scoring, eval_node_classification, Embeddings, Metrics,
};
use coembed::graphdata::{
    self, sample_label_mask, split_pairs, AttributedNetwork, HoldoutSplit, LabelMask, PairKind,
    SbmConfig,
};
use coembed::model::{Checkpoint, NetDims};
use coembed::numkernel::OpKind;
use coembed::trainer::{
    grad_check, gradcheck_fixture, gradcheck_hyper, train_with, EpochReport, GradCheckOptions,
    TrainOptions, TrainOutcome,
};

use crate::config::{RunConfig, Task};
use crate::export;

pub const GRADCHECK_TOL: f64 = 1e-5;

/// Network, label mask and held-out split implied by a config.
pub struct Prepared {
    pub full: AttributedNetwork,
    pub train_net: AttributedNetwork,
    pub mask: LabelMask,
    pub split: Option<HoldoutSplit>,
}

pub fn prepare(cfg: &RunConfig, task: Task) -> Result<Prepared> {
    let full = cfg.load_network()?;
    let seed = cfg.hyper.seed;
    let mask = if cfg.label_ratio == 0.0 {
        LabelMask::all_unlabelled(full.n_nodes())
    } else {
        sample_label_mask(&full, cfg.label_ratio, seed)?
    };
    let split = match task {
        Task::Class => None,
        Task::Attr => Some(split_pairs(&full, PairKind::AttributeEntry, cfg.split, seed)?),
        Task::Link => Some(split_pairs(&full, PairKind::Edge, cfg.split, seed)?),
    };
    let train_net = match &split {
        Some(s) => s.training_network(&full)?,
        None => full.clone(),
    };
    Ok(Prepared {
        full,
        train_net,
        mask,
        split,
    })
}

fn print_epoch(r: EpochReport<'_>) {
    let b = r.breakdown;
    let val = r.val_auc.map(|a| format!(" val_auc={a:.4}")).unwrap_or_default();
    println!(
        "epoch {:>4} J={:.6} ll={:.4} uu={:.4} lu={:.4} la={:.4} ua={:.4} ce={:.4}{val} ({:.3}s)",
        r.epoch,
        b.total_j,
        b.sum_case_ll,
        b.sum_case_uu,
        b.sum_case_lu,
        b.sum_case_la,
        b.sum_case_ua,
        b.classification_loss,
        r.seconds
    );
}

fn run_training(cfg: &RunConfig, p: &Prepared, quiet: bool) -> Result<TrainOutcome> {
    let progress: Option<Box<dyn FnMut(EpochReport<'_>)>> = if quiet {
        None
    } else {
        Some(Box::new(print_epoch))
    };
    let opts = TrainOptions {
        validation: p.split.as_ref(),
        progress,
    };
    Ok(train_with(&p.train_net, &p.mask, &cfg.hyper, opts)?)
}

pub fn cmd_train(cfg: &RunConfig, quiet: bool) -> Result<()> {
    let p = prepare(cfg, cfg.task)?;
    let out_dir = cfg.output_dir();
    fs::create_dir_all(&out_dir).with_context(|| format!("{}", out_dir.display()))?;
    cfg.write_to(&out_dir)?;

    let out = run_training(cfg, &p, quiet)?;
    let dims = NetDims::of(&p.train_net);
    Checkpoint::new(&cfg.hyper, dims, out.history.best_epoch, &p.mask, out.best_params.clone())
        .save(&out_dir.join(export::CHECKPOINT_FILE))?;
    Checkpoint::new(&cfg.hyper, dims, out.history.len() - 1, &p.mask, out.params.clone())
        .save(&out_dir.join("checkpoint_final.json"))?;
    export::write_training_log(&out_dir.join(export::TRAIN_LOG_FILE), &out.history)?;
    let emb = Embeddings::compute(&out.best_params, &p.train_net, &p.mask, cfg.hyper.self_loops)?;
    emb.save(&out_dir)?;

    let trace = out.history.loss_trace();
    println!(
        "trained {} epochs: J {:.6} -> {:.6}; best epoch {}; outputs in {}",
        trace.len(),
        trace[0],
        trace[trace.len() - 1],
        out.history.best_epoch,
        out_dir.display()
    );
    Ok(())
}

/// Metrics of `task` for the given parameters.
pub fn evaluate(cfg: &RunConfig, p: &Prepared, params: &coembed::model::ModelParams, task: Task) -> Result<Metrics> {
    let sl = cfg.hyper.self_loops;
    match task {
        Task::Class => {
            let nc = eval_node_classification(params, &p.train_net, &p.mask, sl)?;
            Ok(Metrics::from_classification(&nc))
        }
        Task::Attr | Task::Link => {
            let split = match &p.split {
                Some(s) => s,
                None => bail!("model was trained for task `{}`; no held-out pairs for `{}`", cfg.task.name(), task.name()),
            };
            let want = if task == Task::Attr {
                PairKind::AttributeEntry
            } else {
                PairKind::Edge
            };
            if split.kind != want {
                bail!("model was trained for task `{}`, cannot evaluate `{}`", cfg.task.name(), task.name());
            }
            let r = if task == Task::Attr {
                eval_attribute_inference(params, &p.train_net, &p.mask, sl, split)?
            } else {
                eval_link_scoring(params, &p.train_net, &p.mask, sl, split)?
            };
            Ok(Metrics::from_ranking(task.name(), r))
        }
    }
}

pub fn metrics_path(out_dir: &Path, task: Task) -> PathBuf {
    out_dir.join(format!("metrics_{}.json", task.name()))
}

pub fn cmd_eval(cfg: &RunConfig, task: Task) -> Result<Metrics> {
    let out_dir = cfg.output_dir();
    let ck = Checkpoint::load(&out_dir.join(export::CHECKPOINT_FILE))?;
    let mut p = prepare(cfg, cfg.task)?;
    if ck.dims != NetDims::of(&p.train_net) {
        bail!(
            "checkpoint dimensions {:?} do not match the data {:?}",
            ck.dims,
            NetDims::of(&p.train_net)
        );
    }
    p.mask = LabelMask::from_labelled(&p.full, &ck.labelled)?;
    let m = evaluate(cfg, &p, &ck.params, task)?;
    export::write_metrics(&metrics_path(&out_dir, task), &m)?;
    let results = out_dir.parent().unwrap_or(&out_dir).join(export::RESULTS_FILE);
    export::append_results(&results, &cfg.run_id, task.name(), &m)?;
    println!("{}", serde_json::to_string(&m)?);
    Ok(m)
}

pub fn cmd_synth(sbm_path: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<AttributedNetwork> {
    let mut sbm = match sbm_path {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
            serde_json::from_str::<SbmConfig>(&text).with_context(|| format!("{}: invalid SBM config", path.display()))?
        }
        None => SbmConfig::default(),
    };
    if let Some(s) = seed {
        sbm.seed = s;
    }
    fs::create_dir_all(out).with_context(|| format!("{}", out.display()))?;
    let net = graphdata::write_synthetic(&sbm, out)?;
    println!(
        "wrote {} nodes, {} edges, {} attributes to {}",
        net.n_nodes(),
        net.n_edges(),
        net.n_attrs(),
        out.display()
    );
    Ok(net)
}

/// Returns the check report; the caller maps it to an exit code.
pub fn cmd_gradcheck(cfg: Option<&RunConfig>, trials: usize, seed: u64, fault: Option<OpKind>) -> Result<f64> {
    let (net, mask) = gradcheck_fixture();
    let mut hyper = gradcheck_hyper();
    if let Some(c) = cfg {
        hyper.alpha = c.hyper.alpha;
        hyper.beta = c.hyper.beta;
        hyper.tau = c.hyper.tau;
        hyper.pos_weight = c.hyper.pos_weight;
        hyper.self_loops = c.hyper.self_loops;
    }
    let opts = GradCheckOptions {
        trials,
        seed,
        fault,
        ..GradCheckOptions::default()
    };
    let r = grad_check(&net, &mask, &hyper, &opts)?;
    println!(
        "max relative error {:.3e} over {} trials ({} parameters; worst {}[{}])",
        r.max_rel_error, trials, r.n_params, r.worst.0, r.worst.1
    );
    Ok(r.max_rel_error)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Alpha,
    Beta,
    Tau,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::Tau => "tau",
        }
    }
}

pub struct SweepRow {
    pub run_id: String,
    pub value: f64,
    pub seed: u64,
    pub metrics: Metrics,
}

fn sweep_one(cfg: &RunConfig, param: SweepParam, value: f64, tasks: &[Task]) -> Result<SweepRow> {
    let mut c = cfg.clone();
    match param {
        SweepParam::Alpha => c.hyper.alpha = value,
        SweepParam::Beta => c.hyper.beta = value,
        SweepParam::Tau => c.hyper.tau = value,
    }
    c.hyper.validate()?;
    c.run_id = format!("{}-{}{}", cfg.run_id, param.name(), value);
    let mut metrics = Metrics::default();
    for &task in tasks {
        let p = prepare(&c, task)?;
        let out = run_training(&c, &p, true)?;
        let mut tc = c.clone();
        tc.task = task;
        let m = evaluate(&tc, &p, &out.best_params, task)?;
        metrics.0.extend(m.0);
    }
    log::info!("{}: {:?}", c.run_id, metrics.0);
    Ok(SweepRow {
        run_id: c.run_id,
        value,
        seed: c.hyper.seed,
        metrics,
    })
}

/// Train and evaluate once per value; write `sweep_<param>.csv`.
pub fn cmd_sweep(
    cfg: &RunConfig,
    param: SweepParam,
    values: &[f64],
    tasks: &[Task],
    jobs: usize,
) -> Result<PathBuf> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let tasks: Vec<Task> = if tasks.is_empty() { vec![cfg.task] } else { tasks.to_vec() };
    let jobs = jobs.max(1);
    let mut rows: Vec<Option<Result<SweepRow>>> = (0..values.len()).map(|_| None).collect();
    for chunk_start in (0..values.len()).step_by(jobs) {
        let end = (chunk_start + jobs).min(values.len());
        let done: Vec<Result<SweepRow>> = std::thread::scope(|s| {
            let handles: Vec<_> = values[chunk_start..end]
                .iter()
                .map(|&v| {
                    let tasks = &tasks;
                    s.spawn(move || sweep_one(cfg, param, v, tasks))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("sweep worker panicked"))))
                .collect()
        });
        for (i, r) in done.into_iter().enumerate() {
            rows[chunk_start + i] = Some(r);
        }
    }
    let rows: Vec<SweepRow> = rows.into_iter().map(|r| r.expect("every slot filled")).collect::<Result<_>>()?;

    let out_dir = cfg.output_dir();
    fs::create_dir_all(&out_dir).with_context(|| format!("{}", out_dir.display()))?;
    cfg.write_to(&out_dir)?;
    let keys: BTreeSet<&String> = rows.iter().flat_map(|r| r.metrics.0.keys()).collect();
    let path = out_dir.join(format!("sweep_{}.csv", param.name()));
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("{}", path.display()))?;
    let mut header = vec!["run_id".to_string(), param.name().to_string(), "seed".to_string()];
    header.extend(keys.iter().map(|k| k.to_string()));
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.run_id.clone(), r.value.to_string(), r.seed.to_string()];
        rec.extend(keys.iter().map(|k| r.metrics.get(k).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(path)
}
