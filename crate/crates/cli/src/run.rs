use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfgan_core::autodiff::write_checkpoint;
use mfgan_core::dynamics::{toy_by_name, weak_error_table, Mode, WeakErrorConfig};
use mfgan_core::fdr::{fdr_probe, replay, scheduled_sml_training, scripted_ratios, ProbeConfig, SchedulerState, TrajectorySource};
use mfgan_core::gan::{gan_value, js_divergence, optimal_discriminator, GridDensity};
use mfgan_core::mfg::{train_mfgan, ErgodicMfgProblem, MfgProblem, SolverConfig, TdMfgProblem};

use crate::config::{Command, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::metrics::MetricsRecord;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Artifacts of one finished run.
#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub metrics: MetricsRecord,
    /// Human-readable result table (also written to `summary.txt`).
    pub summary: String,
}

impl RunReport {
    pub fn metrics_path(&self) -> PathBuf {
        self.out_dir.join(METRICS_FILE)
    }
}

fn mode(name: &str) -> Mode {
    name.parse().expect("validated by the schema")
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// The run manifest: resolved configuration plus version.
pub fn manifest_text(cfg: &ExperimentConfig) -> String {
    format!("# {} {}\n{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"), cfg.to_text())
}

/// Writes the manifest, runs the subcommand, writes metrics and summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    write(&cfg.out_dir.join(MANIFEST_FILE), &manifest_text(cfg))?;
    info!("{} -> {}", cfg.command, cfg.out_dir.display());
    let (metrics, summary) = match cfg.command {
        Command::MfgTrain => mfg_train(cfg)?,
        Command::SdeCompare => sde_compare(cfg)?,
        Command::FdrProbe => fdr_probe_cmd(cfg)?,
        Command::ScheduleDemo => schedule_demo(cfg)?,
        Command::GanDemo => gan_demo(cfg)?,
    };
    metrics.write(&cfg.out_dir.join(METRICS_FILE))?;
    write(&cfg.out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(RunReport { out_dir: cfg.out_dir.clone(), metrics, summary })
}

pub fn solver_config(cfg: &ExperimentConfig) -> Result<SolverConfig> {
    Ok(SolverConfig {
        outer_iters: cfg.usize("outer"),
        inner_theta: cfg.usize("inner_theta"),
        inner_omega: cfg.usize("inner_omega"),
        batch_d: cfg.usize("batch_d"),
        batch_g: cfg.usize("batch_g"),
        beta_d: cfg.f64("beta_d"),
        beta_g: cfg.f64("beta_g"),
        lr_d: cfg.f64("lr_d"),
        lr_g: cfg.f64("lr_g"),
        lambda_u: cfg.f64("lambda_u"),
        seed: cfg.seed,
        eval_grid: cfg.usize("eval_grid"),
        norm_grid: cfg.usize("norm_grid"),
        hidden: cfg.usizes("hidden"),
        activation: cfg.text("activation").parse()?,
        optimizer: cfg.text("optimizer").parse()?,
        log_every: cfg.usize("log_every"),
        checkpoint_every: cfg.usize("checkpoint_every"),
        checkpoint_dir: Some(cfg.out_dir.join(CHECKPOINT_DIR)),
        exec: cfg.exec(),
    })
}

fn mfg_train(cfg: &ExperimentConfig) -> Result<(MetricsRecord, String)> {
    let dim = cfg.usize("dim");
    let problem = match cfg.text("kind") {
        "ergodic" => MfgProblem::Ergodic(ErgodicMfgProblem::sine_test_class(dim)?),
        _ => MfgProblem::TimeDependent(TdMfgProblem::sine_test_class(dim, cfg.f64("horizon"))?),
    };
    let solver = solver_config(cfg)?;
    let run = train_mfgan(&problem, &solver)?;

    let dir = cfg.out_dir.join(CHECKPOINT_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let (u_path, m_path) = (dir.join("final_u.ckpt"), dir.join("final_m.ckpt"));
    write_checkpoint(&u_path, &run.u_net, &run.u_params)?;
    write_checkpoint(&m_path, &run.m_net, &run.m_params)?;

    let mut metrics = MetricsRecord::new(
        "outer_iter",
        &["l_fp", "l_hjb", "l_init", "l_term", "penalty_u", "rel_l2_u", "rel_l2_m", "hbar"],
    );
    for r in &run.trace {
        metrics.push(
            r.outer_iter as u64,
            vec![
                r.l_fp.into(),
                r.l_hjb.into(),
                r.l_init.into(),
                r.l_term.into(),
                r.penalty_u.into(),
                r.rel_l2_u.into(),
                r.rel_l2_m.into(),
                r.hbar.into(),
            ],
        )?;
    }
    let mut summary = metrics.to_table();
    writeln!(summary, "checkpoints: {} {}", u_path.display(), m_path.display()).unwrap();
    Ok((metrics, summary))
}

fn sde_compare(cfg: &ExperimentConfig) -> Result<(MetricsRecord, String)> {
    let toy = toy_by_name(cfg.text("toy"))?;
    let study = WeakErrorConfig {
        etas: cfg.floats("etas").to_vec(),
        replicas: cfg.usize("replicas"),
        horizon: cfg.f64("horizon"),
        batch_size: cfg.usize("batch_size"),
        substeps: cfg.usize("substeps"),
        init_theta: cfg.floats("init_theta").to_vec(),
        init_omega: cfg.floats("init_omega").to_vec(),
        test_function: cfg.text("test_function").parse()?,
        seed: cfg.seed,
        exec: cfg.exec(),
    };
    let mut metrics = MetricsRecord::new(
        "row",
        &[
            "mode",
            "eta",
            "max_weak_error",
            "std_error",
            "slope",
            "slope_std_error",
            "inconclusive",
            "at_time",
            "discrete_mean",
            "sde_mean",
        ],
    );
    let mut summary = String::new();
    let mut row = 0;
    for name in cfg.texts("mode") {
        let table = weak_error_table(toy.as_ref(), mode(name), &study)?;
        let (slope, slope_se) = table.slope.unwrap_or((f64::NAN, f64::NAN));
        for r in &table.rows {
            metrics.push(
                row,
                vec![
                    table.mode.name().into(),
                    r.eta.into(),
                    r.max_weak_error.into(),
                    r.std_error.into(),
                    slope.into(),
                    slope_se.into(),
                    table.inconclusive.into(),
                    r.at_time.into(),
                    r.discrete_mean.into(),
                    r.sde_mean.into(),
                ],
            )?;
            row += 1;
        }
        writeln!(
            summary,
            "{}: slope {slope:.4} ± {slope_se:.4}{}, monotone decreasing: {}",
            table.mode.name(),
            if table.inconclusive { " (inconclusive)" } else { "" },
            table.is_monotone_decreasing()
        )
        .unwrap();
    }
    Ok((metrics.clone(), metrics.to_table() + &summary))
}

pub fn probe_config(cfg: &ExperimentConfig, eta: f64) -> ProbeConfig {
    ProbeConfig {
        mode: mode(cfg.text("mode")),
        eta,
        batch_size: cfg.usize("batch_size"),
        beta: cfg.opt_f64("beta"),
        source: match cfg.text("source") {
            "sde" => TrajectorySource::Sde { dt: cfg.f64("dt") },
            _ => TrajectorySource::Discrete,
        },
        samples: cfg.usize("steps"),
        thin: cfg.usize("thin"),
        init: cfg.floats("init").to_vec(),
        seed: cfg.seed,
        exec: cfg.exec(),
    }
}

fn fdr_probe_cmd(cfg: &ExperimentConfig) -> Result<(MetricsRecord, String)> {
    let toy = toy_by_name(cfg.text("toy"))?;
    let mut metrics = MetricsRecord::new(
        "row",
        &[
            "eta",
            "beta",
            "fdr1_lhs",
            "fdr1_rhs_beta",
            "fdr1_rhs_eta",
            "fdr1_gap",
            "fdr1_gap_std_error",
            "fdr2_lhs",
            "fdr2_rhs",
            "fdr2_gap",
            "fdr2_gap_std_error",
            "fdr2_ratio",
            "samples",
            "stationary",
        ],
    );
    for (i, &eta) in cfg.floats("etas").iter().enumerate() {
        let probe = probe_config(cfg, eta);
        let (f1, f2) = fdr_probe(toy.as_ref(), &probe)?;
        metrics.push(
            i as u64,
            vec![
                eta.into(),
                probe.beta()?.into(),
                f1.lhs.mean.into(),
                f1.rhs_beta_term.mean.into(),
                f1.rhs_eta_term.mean.into(),
                f1.gap.mean.into(),
                f1.gap.std_error.into(),
                f2.lhs.mean.into(),
                f2.rhs.mean.into(),
                f2.gap.mean.into(),
                f2.gap.std_error.into(),
                f2.ratio().into(),
                (f2.samples as f64).into(),
                (f1.stationary && f2.stationary).into(),
            ],
        )?;
    }
    let summary = metrics.to_table();
    Ok((metrics, summary))
}

fn schedule_demo(cfg: &ExperimentConfig) -> Result<(MetricsRecord, String)> {
    let sched = SchedulerState::new(cfg.f64("eta0"), cfg.f64("epsilon"), cfg.f64("delta"), cfg.usize("batch_size"))?;
    let steps = cfg.usize("steps");
    let rows = match cfg.text("source") {
        "scripted" => replay(sched, &scripted_ratios(cfg.f64("ratio_start"), cfg.f64("ratio_end"), steps)),
        _ => {
            let toy = toy_by_name(cfg.text("toy"))?;
            let init = cfg.floats("init");
            let split = toy.dim_theta();
            if init.len() != split + toy.dim_omega() {
                return Err(CliError::config("stream.init", format!("expected {} values", split + toy.dim_omega())));
            }
            scheduled_sml_training(toy.as_ref(), init[..split].to_vec(), init[split..].to_vec(), sched, steps, cfg.seed)?.1
        }
    };
    let mut metrics = MetricsRecord::new("step", &["ratio", "eta", "triggered"]);
    for r in &rows {
        metrics.push(r.step as u64, vec![r.ratio.into(), r.eta.into(), r.triggered.into()])?;
    }
    let triggers = rows.iter().filter(|r| r.triggered).count();
    let first = rows.iter().position(|r| r.triggered);
    let summary = format!(
        "{steps} steps, {triggers} triggers (first at {}), final eta {}\n",
        first.map_or("none".to_string(), |s| s.to_string()),
        rows.last().map_or(cfg.f64("eta0"), |r| r.eta)
    );
    Ok((metrics, summary))
}

fn random_masses(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|m| m / total).collect()
}

fn gan_demo(cfg: &ExperimentConfig) -> Result<(MetricsRecord, String)> {
    let mut pairs = vec![(cfg.floats("points").to_vec(), cfg.floats("real").to_vec(), cfg.floats("fake").to_vec())];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let atoms = cfg.usize("random_atoms").max(1);
    for _ in 0..cfg.usize("random_pairs") {
        let points = (0..atoms).map(|i| i as f64).collect();
        let (real, fake) = (random_masses(&mut rng, atoms), random_masses(&mut rng, atoms));
        pairs.push((points, real, fake));
    }
    let minus_log4 = -(4f64.ln());
    let mut metrics = MetricsRecord::new("pair", &["value", "minus_log4_plus_2js", "js", "identity_gap"]);
    for (i, (points, real, fake)) in pairs.into_iter().enumerate() {
        let pr = GridDensity::new(points.clone(), real).map_err(|e| CliError::config("densities.real", e.to_string()))?;
        let pg = GridDensity::new(points, fake).map_err(|e| CliError::config("densities.fake", e.to_string()))?;
        let value = gan_value(&optimal_discriminator(&pr, &pg), &pr, &pg)?;
        let js = js_divergence(&pr, &pg);
        let target = minus_log4 + 2.0 * js;
        metrics.push(i as u64, vec![value.into(), target.into(), js.into(), (value - target).into()])?;
    }
    let summary = metrics.to_table();
    Ok((metrics, summary))
}
