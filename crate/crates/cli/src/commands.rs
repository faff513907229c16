//! Subcommand implementations. Each returns its CSV tables plus the number
//! of rows that failed; rows are ordered by grid index.

use std::path::PathBuf;

use rayon::prelude::*;

use uavfl::analysis::{assoc_power_cdf, interference_laplace_with, outage_probability};
use uavfl::data::{FederatedData, PartitionMode};
use uavfl::fl::{run_training, run_training_with, OutageSpec, TrainingTrace, UplinkModel};
use uavfl::geometry::{estimate_interference_laplace_mc, estimate_outage_mc, sample_association_powers};
use uavfl::nn::{gradient, init_model, loss, NetSpec};
use uavfl::seed::{domain, rng_for};

use crate::config::ExperimentConfig;
use crate::corpus::Corpus;
use crate::error::{CliError, CliResult};
use crate::report::{num, CsvReport};

pub const OUTAGE_COLUMNS: [&str; 6] = [
    "ratio",
    "p_out_analytical",
    "quad_error",
    "p_out_mc",
    "mc_halfwidth",
    "trials",
];
pub const FL_COLUMNS: [&str; 5] = ["p_out", "K", "partition_mode", "seed", "final_accuracy"];
pub const TRACE_COLUMNS: [&str; 6] = [
    "round",
    "successes",
    "participating_size",
    "aggregated",
    "test_accuracy",
    "train_accuracy",
];
pub const FIG3_COLUMNS: [&str; 5] = [
    "ratio",
    "p_out_analytical",
    "p_out_empirical",
    "acc_simulated",
    "acc_analytical",
];
pub const VALIDATE_COLUMNS: [&str; 4] = ["check", "statistic", "threshold", "passed"];

/// A finished subcommand: the main table, auxiliary tables keyed by their
/// path relative to the output directory, and the failed-row count.
#[derive(Debug)]
pub struct Outcome {
    pub name: &'static str,
    pub report: CsvReport,
    pub extra: Vec<(PathBuf, CsvReport)>,
    pub failed: usize,
}

impl Outcome {
    pub fn write(&self, cfg: &ExperimentConfig) -> CliResult<PathBuf> {
        let main = cfg.output_dir.join(format!("{}.csv", self.name));
        self.report.write(&main)?;
        for (rel, r) in &self.extra {
            r.write(&cfg.output_dir.join(rel))?;
        }
        Ok(main)
    }
}

fn seed0(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds[0]
}

/// Analytical and Monte Carlo outage across the ratio grid. Monte Carlo
/// uses the first seed at every ratio.
pub fn cmd_outage(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    let trials = cfg.mc.trials;
    let rows: Vec<(Vec<String>, Vec<String>)> = cfg
        .sweep
        .ratios
        .par_iter()
        .map(|&ratio| {
            let net = cfg.network.at_ratio(ratio);
            let mut errors = Vec::new();
            let (p, e) = match outage_probability(&net, &cfg.quadrature) {
                Ok(r) => (num(r.p_out), num(r.error_estimate)),
                Err(err) => {
                    errors.push(format!("ratio {ratio} analytical: {err}"));
                    (String::new(), String::new())
                }
            };
            let (m, h) = if trials == 0 {
                (String::new(), String::new())
            } else {
                match estimate_outage_mc(&net, trials, seed0(cfg)) {
                    Ok(est) => (num(est.mean), num(est.half_width_95)),
                    Err(err) => {
                        errors.push(format!("ratio {ratio} monte carlo: {err}"));
                        (String::new(), String::new())
                    }
                }
            };
            (vec![num(ratio), p, e, m, h, trials.to_string()], errors)
        })
        .collect();
    let mut report = CsvReport::new(&OUTAGE_COLUMNS);
    let mut failed = 0;
    for (row, errors) in rows {
        report.push(row);
        failed += usize::from(!errors.is_empty());
        for e in errors {
            report.note("error", e);
        }
    }
    report.provenance(cfg);
    Ok(Outcome {
        name: "outage",
        report,
        extra: Vec::new(),
        failed,
    })
}

fn resolve_grid(cfg: &ExperimentConfig) -> CliResult<Vec<f64>> {
    let net = cfg.network.operating_point();
    cfg.sweep
        .p_out
        .iter()
        .map(|spec| Ok(spec.resolve(Some(&net), &cfg.quadrature)?))
        .collect()
}

struct Prepared {
    corpus_dim: usize,
    classes: usize,
    data: Vec<FederatedData>,
}

/// Builds every (K, mode, seed) dataset before any training starts.
fn prepare(cfg: &ExperimentConfig, cells: &[(usize, PartitionMode, u64)]) -> CliResult<Prepared> {
    let corpus = Corpus::open(&cfg.data)?;
    let data = cells
        .iter()
        .map(|&(k, mode, seed)| corpus.federated(&cfg.fl, k, mode, seed))
        .collect::<CliResult<_>>()?;
    Ok(Prepared {
        corpus_dim: corpus.input_dim(),
        classes: corpus.class_count(),
        data,
    })
}

fn trace_report(trace: &TrainingTrace, cfg: &ExperimentConfig) -> CsvReport {
    let mut r = CsvReport::new(&TRACE_COLUMNS);
    for log in &trace.rounds {
        r.push(vec![
            log.round.to_string(),
            log.mask.iter().filter(|&&b| b).count().to_string(),
            log.participating_size.to_string(),
            log.aggregated.to_string(),
            num(log.global_accuracy),
            num(log.train_accuracy),
        ]);
    }
    r.note("initial_accuracy", num(trace.initial_accuracy));
    r.provenance(cfg);
    r
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Final test-union accuracy over the `partitions × clients × p_out × seeds`
/// grid, with one trace file per run.
pub fn cmd_fl(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    let grid = resolve_grid(cfg)?;
    let mut data_cells = Vec::new();
    for &mode in &cfg.sweep.partitions {
        for &k in &cfg.sweep.clients {
            for &seed in &cfg.seeds {
                data_cells.push((k, mode, seed));
            }
        }
    }
    let prepared = prepare(cfg, &data_cells)?;
    let n_seeds = cfg.seeds.len();
    // Run index = (data cell block, p index, seed), in output order.
    let mut runs = Vec::new();
    for block in 0..data_cells.len() / n_seeds {
        for (pi, &p) in grid.iter().enumerate() {
            for si in 0..n_seeds {
                runs.push((block * n_seeds + si, pi, p));
            }
        }
    }
    let results: Vec<CliResult<TrainingTrace>> = runs
        .par_iter()
        .map(|&(cell, _, p)| {
            let (k, mode, seed) = data_cells[cell];
            let fl = cfg
                .fl
                .run_config(k, mode, p, seed, prepared.corpus_dim, prepared.classes);
            let fed = &prepared.data[cell];
            Ok(run_training(&fl, &fed.train, &fed.test_union)?)
        })
        .collect();

    let mut report = CsvReport::new(&FL_COLUMNS);
    let mut extra = Vec::new();
    let mut failed = 0;
    let mut errors = Vec::new();
    let mut means = Vec::new();
    for (chunk_runs, chunk_res) in runs.chunks(n_seeds).zip(results.chunks(n_seeds)) {
        let mut accs = Vec::new();
        for (&(cell, pi, p), res) in chunk_runs.iter().zip(chunk_res) {
            let (k, mode, seed) = data_cells[cell];
            let acc = match res {
                Ok(trace) => {
                    let name = format!("traces/fl_{mode}_k{k}_p{pi}_seed{seed}.csv");
                    extra.push((PathBuf::from(name), trace_report(trace, cfg)));
                    accs.push(trace.final_accuracy);
                    num(trace.final_accuracy)
                }
                Err(e) => {
                    failed += 1;
                    errors.push(format!("{mode} K={k} p_out={p} seed={seed}: {e}"));
                    String::new()
                }
            };
            report.push(vec![num(p), k.to_string(), mode.to_string(), seed.to_string(), acc]);
        }
        let (cell, _, p) = chunk_runs[0];
        let (k, mode, _) = data_cells[cell];
        if accs.len() == n_seeds {
            means.push((format!("mean[{mode},K={k},p_out={}]", num(p)), num(mean(accs))));
        }
    }
    for (k, v) in means {
        report.note(&k, v);
    }
    for e in errors {
        report.note("error", e);
    }
    report.provenance(cfg);
    Ok(Outcome {
        name: "fl",
        report,
        extra,
        failed,
    })
}

/// Piecewise-linear interpolation over `(p, accuracy)` points sorted by `p`;
/// `None` outside the grid.
pub fn interpolate(curve: &[(f64, f64)], p: f64) -> Option<f64> {
    let first = curve.first()?;
    if curve.len() == 1 {
        return (p == first.0).then_some(first.1);
    }
    curve.windows(2).find_map(|w| {
        let ((p0, a0), (p1, a1)) = (w[0], w[1]);
        (p >= p0 && p <= p1).then(|| match p {
            _ if p == p1 => a1,
            _ if p == p0 => a0,
            _ => a0 + (a1 - a0) * (p - p0) / (p1 - p0),
        })
    })
}

/// Learning accuracy versus ratio through two pipelines: training under
/// geometry-driven masks, and the analytical outage read off the trained
/// accuracy-versus-p_out curve.
pub fn cmd_fig3(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    let k = cfg.fl.num_clients;
    let mode = cfg.fl.partition;
    let grid = resolve_grid(cfg)?;
    let cells: Vec<_> = cfg.seeds.iter().map(|&s| (k, mode, s)).collect();
    let prepared = prepare(cfg, &cells)?;
    let n_seeds = cfg.seeds.len();
    let run = |si: usize, uplink: &UplinkModel| -> CliResult<TrainingTrace> {
        let seed = cfg.seeds[si];
        let p = match uplink {
            UplinkModel::Bernoulli { p_out } => *p_out,
            UplinkModel::Geometry(_) => 0.0,
        };
        let mut fl = cfg
            .fl
            .run_config(k, mode, p, seed, prepared.corpus_dim, prepared.classes);
        if let UplinkModel::Geometry(_) = uplink {
            fl.p_out = OutageSpec::FromGeometry;
        }
        let fed = &prepared.data[si];
        Ok(run_training_with(&fl, uplink, &fed.train, &fed.test_union)?)
    };

    let lookup_jobs: Vec<(f64, usize)> = grid.iter().flat_map(|&p| (0..n_seeds).map(move |s| (p, s))).collect();
    let lookup: Vec<f64> = lookup_jobs
        .par_iter()
        .map(|&(p, si)| run(si, &UplinkModel::Bernoulli { p_out: p }).map(|t| t.final_accuracy))
        .collect::<CliResult<_>>()?;
    let mut curve: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, mean(lookup[i * n_seeds..(i + 1) * n_seeds].iter().copied())))
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    curve.dedup_by(|a, b| a.0 == b.0);

    let sim_jobs: Vec<(usize, usize)> = (0..cfg.sweep.ratios.len())
        .flat_map(|r| (0..n_seeds).map(move |s| (r, s)))
        .collect();
    let sims: Vec<CliResult<(f64, f64)>> = sim_jobs
        .par_iter()
        .map(|&(ri, si)| {
            let net = cfg.network.at_ratio(cfg.sweep.ratios[ri]);
            let trace = run(si, &UplinkModel::Geometry(net))?;
            let sent: usize = trace.rounds.iter().map(|r| r.mask.iter().filter(|&&b| b).count()).sum();
            let erased = 1.0 - sent as f64 / (k * trace.rounds.len()) as f64;
            Ok((trace.final_accuracy, erased))
        })
        .collect();

    let mut report = CsvReport::new(&FIG3_COLUMNS);
    let mut errors = Vec::new();
    let mut gaps = Vec::new();
    let mut failed = 0;
    for (ri, &ratio) in cfg.sweep.ratios.iter().enumerate() {
        let mut row_errors = Vec::new();
        let res = &sims[ri * n_seeds..(ri + 1) * n_seeds];
        let (acc_sim, p_emp) = if res.iter().all(Result::is_ok) {
            let ok: Vec<(f64, f64)> = res.iter().map(|r| *r.as_ref().expect("checked")).collect();
            (Some(mean(ok.iter().map(|x| x.0))), Some(mean(ok.iter().map(|x| x.1))))
        } else {
            for e in res.iter().filter_map(|r| r.as_ref().err()) {
                row_errors.push(format!("ratio {ratio} simulated: {e}"));
            }
            (None, None)
        };
        let p_an = match outage_probability(&cfg.network.at_ratio(ratio), &cfg.quadrature) {
            Ok(r) => Some(r.p_out),
            Err(e) => {
                row_errors.push(format!("ratio {ratio} analytical: {e}"));
                None
            }
        };
        let acc_an = p_an.and_then(|p| {
            let a = interpolate(&curve, p);
            if a.is_none() {
                row_errors.push(format!("ratio {ratio}: p_out {p} lies outside the lookup grid"));
            }
            a
        });
        if let (Some(s), Some(a)) = (acc_sim, acc_an) {
            gaps.push((s - a).abs());
        }
        let cell = |v: Option<f64>| v.map(num).unwrap_or_default();
        report.push(vec![num(ratio), cell(p_an), cell(p_emp), cell(acc_sim), cell(acc_an)]);
        failed += usize::from(!row_errors.is_empty());
        errors.extend(row_errors);
    }
    if !gaps.is_empty() {
        report.note("mean_abs_gap", num(mean(gaps)));
    }
    for (p, a) in &curve {
        report.note(&format!("lookup[p_out={}]", num(*p)), num(*a));
    }
    for e in errors {
        report.note("error", e);
    }
    report.provenance(cfg);
    Ok(Outcome {
        name: "fig3",
        report,
        extra: Vec::new(),
        failed,
    })
}

/// Kolmogorov–Smirnov distance between sorted samples and a CDF.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> uavfl::Result<f64>) -> uavfl::Result<f64> {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x)?;
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

struct Check {
    name: String,
    statistic: f64,
    threshold: f64,
    passed: bool,
}

fn association_check(cfg: &ExperimentConfig) -> CliResult<Check> {
    let net = cfg.network.operating_point();
    let h = net
        .altitude
        .fixed()
        .ok_or_else(|| CliError::Config("validate needs a fixed altitude".into()))?;
    let mut powers = sample_association_powers(&net, 10_000, seed0(cfg))?;
    powers.sort_by(f64::total_cmp);
    let d = ks_distance(&powers, |r| assoc_power_cdf(r, h, &net))?;
    Ok(Check {
        name: "association_power_ks".into(),
        statistic: d,
        threshold: 0.02,
        passed: d <= 0.02,
    })
}

/// Six log-spaced points on `[1e6, 1e9]`.
pub fn laplace_grid() -> Vec<f64> {
    (0..6).map(|i| 10f64.powf(6.0 + 3.0 * i as f64 / 5.0)).collect()
}

fn laplace_check(cfg: &ExperimentConfig) -> CliResult<Check> {
    let net = cfg.network.operating_point();
    let s = laplace_grid();
    let mc = estimate_interference_laplace_mc(&net, &s, cfg.mc.trials.max(1), seed0(cfg));
    let mut worst: f64 = 0.0;
    for (&si, m) in s.iter().zip(&mc) {
        let an = interference_laplace_with(si, &net, &cfg.quadrature)?;
        worst = worst.max((an - m.mean).abs() / m.mean);
    }
    Ok(Check {
        name: "interference_laplace_rel_err".into(),
        statistic: worst,
        threshold: 0.05,
        passed: worst <= 0.05,
    })
}

fn outage_checks(cfg: &ExperimentConfig) -> CliResult<Vec<Check>> {
    let trials = cfg.mc.trials.max(1);
    let mut pairs = Vec::new();
    for &ratio in &cfg.sweep.ratios {
        let net = cfg.network.at_ratio(ratio);
        let an = outage_probability(&net, &cfg.quadrature)?.p_out;
        pairs.push((an, estimate_outage_mc(&net, trials, seed0(cfg))?));
    }
    let worst = pairs.iter().map(|(a, m)| (a - m.mean).abs()).fold(0.0, f64::max);
    let an_mono = pairs.windows(2).all(|w| w[1].0 >= w[0].0);
    // Monte Carlo points may dip by at most their combined 95% half-widths.
    let mc_dip = pairs
        .windows(2)
        .map(|w| (w[0].1.mean - w[1].1.mean) - (w[0].1.half_width_95 + w[1].1.half_width_95))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        Check {
            name: "outage_abs_err".into(),
            statistic: worst,
            threshold: 0.02,
            passed: worst <= 0.02,
        },
        Check {
            name: "outage_analytical_monotone".into(),
            statistic: f64::from(u8::from(an_mono)),
            threshold: 1.0,
            passed: an_mono,
        },
        Check {
            name: "outage_mc_excess_dip".into(),
            statistic: mc_dip.max(0.0),
            threshold: 0.0,
            passed: mc_dip <= 0.0,
        },
    ])
}

/// Largest relative deviation between backprop and central differences over
/// `coords` random parameters of each architecture.
pub fn gradient_check(seed: u64, coords: usize) -> uavfl::Result<f64> {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let archs: [(usize, &[usize], usize); 3] = [(12, &[], 4), (20, &[16], 5), (30, &[24, 12], 10)];
    let mut worst: f64 = 0.0;
    for (a, &(input_dim, hidden, output_dim)) in archs.iter().enumerate() {
        let spec = NetSpec {
            input_dim,
            hidden_dims: hidden.to_vec(),
            output_dim,
            learning_rate: 0.1,
            init_seed: seed + a as u64,
        };
        let mut model = init_model(&spec);
        let mut rng = rng_for(seed, domain::MC_TRIAL, &[a as u64]);
        for v in model.values_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += 0.1 * z;
        }
        let x: Vec<f64> = (0..input_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let label = rng.random_range(0..output_dim);
        let (_, g) = gradient(&model, &x, label)?;
        let h = 1e-5;
        for _ in 0..coords {
            let j = rng.random_range(0..model.len());
            let orig = model.values()[j];
            model.values_mut()[j] = orig + h;
            let up = loss(&model, &x, label)?;
            model.values_mut()[j] = orig - h;
            let down = loss(&model, &x, label)?;
            model.values_mut()[j] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = g.values()[j];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-8));
        }
    }
    Ok(worst)
}

/// Runs the analytical-versus-simulation oracles and the gradient check.
pub fn cmd_validate(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    let mut checks = vec![association_check(cfg)?, laplace_check(cfg)?];
    checks.extend(outage_checks(cfg)?);
    let g = gradient_check(seed0(cfg), 100)?;
    checks.push(Check {
        name: "gradient_rel_err".into(),
        statistic: g,
        threshold: 1e-4,
        passed: g <= 1e-4,
    });
    let mut report = CsvReport::new(&VALIDATE_COLUMNS);
    let mut failed = 0;
    for c in &checks {
        failed += usize::from(!c.passed);
        report.push(vec![
            c.name.clone(),
            num(c.statistic),
            num(c.threshold),
            c.passed.to_string(),
        ]);
    }
    report.note("trials", cfg.mc.trials);
    report.provenance(cfg);
    Ok(Outcome {
        name: "validate",
        report,
        extra: Vec::new(),
        failed,
    })
}
