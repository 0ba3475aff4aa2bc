//! Subcommands. Each takes a validated config and writes its results under
//! `config.out`.

use std::path::Path;

use bosonkernel::data::Dataset;
use bosonkernel::encoder::write_trace_csv;
use bosonkernel::fock::hilbert_dim;
use bosonkernel::mesh::tbu_count;
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::KernelCache;
use crate::config::{CircuitConfig, ExperimentConfig};
use crate::error::{CliResult, ErrorKind, StageExt};
use crate::output::{cell, write_csv_with, write_json, write_table, Provenance};
use crate::pipeline::{
    histograms, load_dataset, prepare_split, readout_curve, run_baselines, run_quantum, seed_dir, BaselineResult,
    PairSeparation, QuantumModel, ReadoutRow, Split, Stat,
};

/// Shared inputs for every subcommand.
pub struct Context {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub cache: Option<KernelCache>,
    pub provenance: Provenance,
}

impl Context {
    pub fn new(config: ExperimentConfig) -> CliResult<Self> {
        let dataset = load_dataset(&config)?;
        let cache = config.cache_dir.as_ref().map(KernelCache::new);
        let provenance = Provenance::new(config.to_json_value(), config.seeds.clone());
        Ok(Self { config, dataset, cache, provenance })
    }

    fn out(&self) -> &Path {
        &self.config.out
    }

    fn split(&self, seed: u64) -> CliResult<Split> {
        prepare_split(&self.dataset, &self.config, seed)
    }

    fn quantum(&self, split: &Split, circuit: &CircuitConfig, seed: u64) -> CliResult<QuantumModel> {
        run_quantum(split, circuit, &self.config, seed, self.cache.as_ref())
    }

    /// Runs `f` for every configured seed in parallel, keeping seed order.
    fn per_seed<T: Send>(&self, f: impl Fn(u64) -> CliResult<T> + Sync) -> CliResult<Vec<T>> {
        self.config.seeds.par_iter().map(|&s| f(s)).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub quantum_accuracy: f64,
    pub final_loss: Option<f64>,
    pub svm_converged: bool,
    pub readout: Vec<ReadoutRow>,
    pub separation: Option<[PairSeparation; 2]>,
    pub baselines: BaselineResult,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub quantum: Stat,
    pub linear: Option<Stat>,
    pub sigmoid: Option<Stat>,
    pub neural_network: Option<Stat>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub warnings: Vec<String>,
    pub per_seed: Vec<SeedReport>,
    pub summary: RunSummary,
}

fn converged(model: &QuantumModel) -> bool {
    match &model.classifier {
        bosonkernel::svm::SvmClassifier::Binary { model, .. } => model.converged,
        bosonkernel::svm::SvmClassifier::Ovr(o) => o.models.iter().all(|m| m.converged),
    }
}

fn write_model_files(ctx: &Context, seed: u64, model: &QuantumModel) -> CliResult<()> {
    let dir = seed_dir(ctx.out(), seed);
    let prov = ctx.provenance.for_seed(seed);
    write_csv_with(&dir.join("trace.csv"), &prov, |w| write_trace_csv(&model.trace, w))?;
    std::fs::create_dir_all(&dir).stage("output", ErrorKind::Data)?;
    model.weights.save(&dir.join("weights.bkew")).stage("output", ErrorKind::Data)?;
    write_json(&dir.join("weights.json"), &prov, "weights", &model.weights)?;
    write_json(&dir.join("svm.json"), &prov, "model", &model.classifier)
}

fn write_readout(ctx: &Context, seed: u64, rows: &[ReadoutRow]) -> CliResult<()> {
    let lines: Vec<String> = rows
        .iter()
        .flat_map(|r| r.accuracies.iter().enumerate().map(move |(d, a)| format!("{},{d},{a}", r.size)))
        .collect();
    write_table(&seed_dir(ctx.out(), seed).join("readout.csv"), &ctx.provenance.for_seed(seed), "size,draw,accuracy", &lines)
}

fn write_separation(ctx: &Context, seed: u64, sep: &[PairSeparation; 2]) -> CliResult<()> {
    let dir = seed_dir(ctx.out(), seed);
    let prov = ctx.provenance.for_seed(seed);
    for s in sep {
        let tag = match s.split {
            bosonkernel::metrics::SplitTag::Train => "train",
            bosonkernel::metrics::SplitTag::Test => "test",
        };
        write_csv_with(&dir.join(format!("hist-{tag}-same.csv")), &prov, |w| s.same_class.write_csv(w))?;
        write_csv_with(&dir.join(format!("hist-{tag}-different.csv")), &prov, |w| s.different_class.write_csv(w))?;
    }
    write_json(&dir.join("separation.json"), &prov, "separation", sep)
}

/// Full experiment: encoder training, SVM, readout curve, kernel
/// separation and baselines for every seed.
pub fn run(ctx: &Context, warnings: Vec<String>) -> CliResult<RunReport> {
    let cfg = &ctx.config;
    let per_seed = ctx.per_seed(|seed| {
        let split = ctx.split(seed)?;
        let model = ctx.quantum(&split, &cfg.circuit, seed)?;
        write_model_files(ctx, seed, &model)?;
        let readout = if cfg.readout.sizes.is_empty() { Vec::new() } else { readout_curve(&model, &split, cfg, seed)? };
        if !readout.is_empty() {
            write_readout(ctx, seed, &readout)?;
        }
        let separation = if cfg.analysis.histograms { Some(histograms(&model, &split, cfg, seed)?) } else { None };
        if let Some(s) = &separation {
            write_separation(ctx, seed, s)?;
        }
        let baselines = run_baselines(&split, &cfg.circuit, cfg, seed)?;
        Ok(SeedReport {
            seed,
            train_size: split.train.len(),
            test_size: split.test.len(),
            quantum_accuracy: model.accuracy,
            final_loss: model.trace.last().map(|r| r.loss),
            svm_converged: converged(&model),
            readout,
            separation,
            baselines,
        })
    })?;
    let summary = RunSummary {
        quantum: Stat::of(&per_seed.iter().map(|r| r.quantum_accuracy).collect::<Vec<_>>()),
        linear: Stat::of_options(per_seed.iter().map(|r| r.baselines.linear)),
        sigmoid: Stat::of_options(per_seed.iter().map(|r| r.baselines.sigmoid)),
        neural_network: Stat::of_options(per_seed.iter().map(|r| r.baselines.neural_network)),
    };
    let rows: Vec<String> = per_seed
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.seed,
                r.quantum_accuracy,
                cell(r.baselines.linear),
                cell(r.baselines.sigmoid),
                cell(r.baselines.neural_network)
            )
        })
        .collect();
    write_table(&ctx.out().join("summary.csv"), &ctx.provenance, "seed,quantum,linear,sigmoid,neural_network", &rows)?;
    let report = RunReport { warnings, per_seed, summary };
    write_json(&ctx.out().join("run.json"), &ctx.provenance, "run", &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhotonRow {
    pub seed: u64,
    pub photons: usize,
    pub hilbert_dim: u64,
    pub accuracy: f64,
}

/// Test accuracy against photon number at fixed modes and depth, with the
/// classical baselines once per seed on the same splits.
pub fn sweep_photons(ctx: &Context) -> CliResult<Vec<PhotonRow>> {
    let cfg = &ctx.config;
    let photons: Vec<usize> =
        if cfg.sweep.photons.is_empty() { (1..=cfg.circuit.photons).collect() } else { cfg.sweep.photons.clone() };
    let per_seed = ctx.per_seed(|seed| {
        let split = ctx.split(seed)?;
        let rows = photons
            .iter()
            .map(|&n| {
                let circuit = CircuitConfig { photons: n, ..cfg.circuit };
                let model = ctx.quantum(&split, &circuit, seed)?;
                Ok(PhotonRow { seed, photons: n, hilbert_dim: dim(cfg.circuit.modes, n)?, accuracy: model.accuracy })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok((rows, run_baselines(&split, &cfg.circuit, cfg, seed)?))
    })?;
    let mut rows = Vec::new();
    let mut baseline_rows = Vec::new();
    for (&seed, (r, b)) in cfg.seeds.iter().zip(per_seed) {
        rows.extend(r);
        baseline_rows.push((seed, b));
    }
    write_baselines(ctx, "photon_sweep_baselines", &baseline_rows)?;
    let lines: Vec<String> =
        rows.iter().map(|r| format!("{},{},{},{}", r.seed, r.photons, r.hilbert_dim, r.accuracy)).collect();
    write_table(&ctx.out().join("photon_sweep.csv"), &ctx.provenance, "seed,photons,hilbert_dim,accuracy", &lines)?;
    let summary: Vec<String> = photons
        .iter()
        .map(|&n| {
            let acc: Vec<f64> = rows.iter().filter(|r| r.photons == n).map(|r| r.accuracy).collect();
            let s = Stat::of(&acc);
            format!("{n},{},{},{}", rows.iter().find(|r| r.photons == n).map_or(0, |r| r.hilbert_dim), s.mean, s.std)
        })
        .collect();
    write_table(
        &ctx.out().join("photon_sweep_summary.csv"),
        &ctx.provenance,
        "photons,hilbert_dim,mean_accuracy,std_accuracy",
        &summary,
    )?;
    Ok(rows)
}

fn dim(m: usize, n: usize) -> CliResult<u64> {
    hilbert_dim(m, n).stage("circuit", ErrorKind::Config)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionRow {
    pub seed: u64,
    pub modes: usize,
    pub layers: usize,
    pub photons: usize,
    pub hilbert_dim: u64,
    pub tbu_count: usize,
    /// Depth of at least `modes - 1` layers.
    pub full_depth: bool,
    pub accuracy: f64,
}

/// Test accuracy over a grid of `[modes, layers, photons]` circuits.
pub fn sweep_dimension(ctx: &Context) -> CliResult<Vec<DimensionRow>> {
    let cfg = &ctx.config;
    let grid: Vec<[usize; 3]> = if cfg.sweep.grid.is_empty() {
        vec![[cfg.circuit.modes, cfg.circuit.layers(), cfg.circuit.photons]]
    } else {
        cfg.sweep.grid.clone()
    };
    let rows: Vec<DimensionRow> = ctx
        .per_seed(|seed| {
            let split = ctx.split(seed)?;
            grid.iter()
                .map(|&[m, l, n]| {
                    let circuit = CircuitConfig { modes: m, layers: Some(l), photons: n };
                    let model = ctx.quantum(&split, &circuit, seed)?;
                    Ok(DimensionRow {
                        seed,
                        modes: m,
                        layers: l,
                        photons: n,
                        hilbert_dim: dim(m, n)?,
                        tbu_count: tbu_count(m, l),
                        full_depth: l + 1 >= m,
                        accuracy: model.accuracy,
                    })
                })
                .collect::<CliResult<Vec<_>>>()
        })?
        .into_iter()
        .flatten()
        .collect();
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.seed, r.modes, r.layers, r.photons, r.hilbert_dim, r.tbu_count, r.full_depth, r.accuracy
            )
        })
        .collect();
    write_table(
        &ctx.out().join("dimension_sweep.csv"),
        &ctx.provenance,
        "seed,modes,layers,photons,hilbert_dim,tbu_count,full_depth,accuracy",
        &lines,
    )?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReadoutSummaryRow {
    pub size: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Mean full-readout accuracy over seeds, for reference.
    pub full_accuracy: f64,
}

/// Accuracy against the number of training points read out at test time.
pub fn sweep_readout(ctx: &Context) -> CliResult<Vec<ReadoutSummaryRow>> {
    let cfg = &ctx.config;
    let per_seed = ctx.per_seed(|seed| {
        let split = ctx.split(seed)?;
        let model = ctx.quantum(&split, &cfg.circuit, seed)?;
        let rows = readout_curve(&model, &split, cfg, seed)?;
        write_readout(ctx, seed, &rows)?;
        Ok((model.accuracy, rows))
    })?;
    let full = Stat::of(&per_seed.iter().map(|(a, _)| *a).collect::<Vec<_>>()).mean;
    let mut sizes: Vec<usize> = per_seed.iter().flat_map(|(_, r)| r.iter().map(|x| x.size)).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let summary: Vec<ReadoutSummaryRow> = sizes
        .into_iter()
        .map(|size| {
            let acc: Vec<f64> = per_seed
                .iter()
                .flat_map(|(_, r)| r.iter().filter(|x| x.size == size).flat_map(|x| x.accuracies.iter().copied()))
                .collect();
            let s = Stat::of(&acc);
            ReadoutSummaryRow { size, mean_accuracy: s.mean, std_accuracy: s.std, full_accuracy: full }
        })
        .collect();
    let lines: Vec<String> = summary
        .iter()
        .map(|r| format!("{},{},{},{}", r.size, r.mean_accuracy, r.std_accuracy, r.full_accuracy))
        .collect();
    write_table(
        &ctx.out().join("readout_sweep.csv"),
        &ctx.provenance,
        "size,mean_accuracy,std_accuracy,full_accuracy",
        &lines,
    )?;
    Ok(summary)
}

/// Kernel-value histograms, divergences and readout bounds per seed.
pub fn histograms_cmd(ctx: &Context) -> CliResult<Vec<[PairSeparation; 2]>> {
    let cfg = &ctx.config;
    let all = ctx.per_seed(|seed| {
        let split = ctx.split(seed)?;
        let model = ctx.quantum(&split, &cfg.circuit, seed)?;
        let sep = histograms(&model, &split, cfg, seed)?;
        write_separation(ctx, seed, &sep)?;
        Ok(sep)
    })?;
    let mut lines = Vec::new();
    for (seed, sep) in cfg.seeds.iter().zip(&all) {
        for s in sep {
            let tag = if s.split == bosonkernel::metrics::SplitTag::Train { "train" } else { "test" };
            let chernoff = if s.disjoint_supports { "inf".to_string() } else { cell(s.chernoff) };
            if s.readout_bounds.is_empty() {
                lines.push(format!("{seed},{tag},{},{chernoff},,", cell(s.jsd)));
            }
            for b in &s.readout_bounds {
                let bound = b.readout_bound.map(|v| v.to_string()).unwrap_or_else(|| "unbounded".into());
                lines.push(format!("{seed},{tag},{},{chernoff},{},{bound}", cell(s.jsd), b.epsilon));
            }
        }
    }
    write_table(&ctx.out().join("separation.csv"), &ctx.provenance, "seed,split,jsd,chernoff,epsilon,readout_bound", &lines)?;
    Ok(all)
}

/// Classical baselines alone.
pub fn baselines(ctx: &Context) -> CliResult<Vec<BaselineResult>> {
    let cfg = &ctx.config;
    let all = ctx.per_seed(|seed| run_baselines(&ctx.split(seed)?, &cfg.circuit, cfg, seed))?;
    let rows: Vec<(u64, BaselineResult)> = cfg.seeds.iter().copied().zip(all.iter().cloned()).collect();
    write_baselines(ctx, "baselines", &rows)?;
    Ok(all)
}

fn write_baselines(ctx: &Context, stem: &str, rows: &[(u64, BaselineResult)]) -> CliResult<()> {
    let lines: Vec<String> = rows
        .iter()
        .map(|(s, b)| format!("{s},{},{},{}", cell(b.linear), cell(b.sigmoid), cell(b.neural_network)))
        .collect();
    let out = ctx.out();
    write_table(&out.join(format!("{stem}.csv")), &ctx.provenance, "seed,linear,sigmoid,neural_network", &lines)?;
    let by_seed: Vec<serde_json::Value> =
        rows.iter().map(|(s, b)| serde_json::json!({ "seed": s, "result": b })).collect();
    write_json(&out.join(format!("{stem}.json")), &ctx.provenance, "baselines", &by_seed)
}
