//! `bisar` — simulate bistatic ISAC scenarios and estimate target angles.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bisar_cli::experiments::{
    self, complexity_report, desk_train_config, generate_dataset, run_beta_sweep,
    run_classifier_eval, run_crb_sweep, run_mle_compare, run_mse_sweep, train_model, DatasetArgs,
    DatasetKind,
};
use bisar_cli::output::{emit_plot_data, write_estimates_csv, write_result_csv};
use bisar_cli::plan::{ExperimentKind, ExperimentPlan};
use bisar_core::error::CoreError;
use bisar_core::estimator::{frontend_snapshots, Observation};
use bisar_core::model::{ScenarioConfig, ScenarioFile};
use bisar_core::nn::{load_dataset, save_dataset, save_model, Head};

#[derive(Parser)]
#[command(
    name = "bisar",
    about = "Bistatic ISAC angle-estimation toolkit",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Scenario JSON (keys mirror the scenario config; angles in degrees).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for every derived RNG stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Monte Carlo trials per sweep point.
    #[arg(long, global = true, default_value_t = 500)]
    trials: usize,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, export the CSI stack and per-peak estimates.
    Simulate {
        /// Estimator name from the registry.
        #[arg(long, default_value = "pencil")]
        estimator: String,
    },
    /// Generate a training/evaluation dataset file with a JSON sidecar.
    Dataset {
        /// "regression" or "classifier".
        #[arg(long, default_value = "regression")]
        kind: String,
        /// Targets per peak for regression datasets.
        #[arg(long, default_value_t = 1)]
        targets: usize,
        #[arg(long, default_value_t = 3500)]
        samples: usize,
        /// Comma-separated training SNRs in dB.
        #[arg(
            long,
            default_value = "5,10,15,20,25,30,40",
            value_delimiter = ',',
            allow_hyphen_values = true
        )]
        snrs: Vec<f64>,
        /// Output file name (under --out).
        #[arg(long, default_value = "dataset.bin")]
        name: String,
    },
    /// Train a complex network on a dataset file.
    Train {
        /// Dataset path produced by `dataset`.
        #[arg(long)]
        data: PathBuf,
        /// "regression" or "classifier".
        #[arg(long, default_value = "regression")]
        kind: String,
        /// Targets per peak (regression head size is 2q).
        #[arg(long, default_value_t = 1)]
        targets: usize,
        #[arg(long, default_value_t = 120)]
        epochs: usize,
        /// Model output file name (under --out).
        #[arg(long, default_value = "model.bin")]
        name: String,
    },
    /// Angle MSE versus SNR for a chosen estimator, with CRB columns.
    EvalMse {
        #[arg(long, default_value = "pencil")]
        estimator: String,
        #[arg(long, default_value_t = 1)]
        targets: usize,
        #[arg(
            long,
            default_value = "-5,0,5,10,15,20,25,30",
            value_delimiter = ',',
            allow_hyphen_values = true
        )]
        snrs: Vec<f64>,
        /// Regression model path (required for the nn estimator).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Target-count classifier accuracy versus SNR.
    EvalClassify {
        #[arg(long)]
        model: PathBuf,
        #[arg(
            long,
            default_value = "-5,0,5,10,15,20",
            value_delimiter = ',',
            allow_hyphen_values = true
        )]
        snrs: Vec<f64>,
    },
    /// Cramer-Rao bounds versus SNR for the scenario's target distribution.
    Crb {
        #[arg(long, default_value_t = 1)]
        targets: usize,
        #[arg(
            long,
            default_value = "-5,0,5,10,15,20,25,30",
            value_delimiter = ',',
            allow_hyphen_values = true
        )]
        snrs: Vec<f64>,
    },
    /// CRB versus transmit beamwidth at fixed target angles.
    BetaSweep {
        #[arg(
            long,
            default_value = "0,10,20",
            value_delimiter = ',',
            allow_hyphen_values = true
        )]
        snrs: Vec<f64>,
    },
    /// Closed-form operation-count report (Markdown).
    Complexity {
        #[arg(long, default_value_t = 2)]
        targets: usize,
    },
    /// Agreement between the pencil estimator and the pinned grid MLE.
    MleCompare {
        #[arg(
            long,
            default_value = "20",
            value_delimiter = ',',
            allow_hyphen_values = true
        )]
        snrs: Vec<f64>,
    },
}

fn load_scenario(
    global: &GlobalArgs,
) -> Result<(ScenarioConfig, Vec<bisar_core::model::TargetPath>), CoreError> {
    match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let file: ScenarioFile = serde_json::from_str(&text)
                .map_err(|e| CoreError::InvalidArgument(format!("bad scenario JSON: {e}")))?;
            file.to_config()
        }
        None => Ok((
            ScenarioConfig {
                rng_seed: global.seed,
                ..ScenarioConfig::default()
            },
            Vec::new(),
        )),
    }
}

fn base_plan(
    kind: ExperimentKind,
    global: &GlobalArgs,
    scenario: &ScenarioConfig,
    snrs: &[f64],
    targets: usize,
) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(kind, scenario);
    plan.snr_list_db = snrs.to_vec();
    plan.trials = global.trials;
    plan.seed = global.seed;
    plan.num_targets = targets;
    plan
}

fn run(cli: Cli) -> Result<(), CoreError> {
    if cli.global.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global()
            .map_err(|e| CoreError::InvalidArgument(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&cli.global.out)?;
    let (scenario, targets_from_file) = load_scenario(&cli.global)?;

    match cli.command {
        Command::Simulate { estimator } => {
            if targets_from_file.is_empty() {
                return Err(CoreError::InvalidArgument(
                    "simulate needs a scenario file with a targets array".into(),
                ));
            }
            let obs = Observation::simulate(&scenario, &targets_from_file)?;
            let stack = bisar_core::csi::estimate_csi_stack(&obs.rx, &obs.pilots)?;
            let mut file = fs::File::create(cli.global.out.join("csi.bin"))?;
            stack.write_to(&mut file)?;

            let registry = experiments::build_registry(&BTreeMap::new(), None)?;
            let est = registry.get(&estimator).ok_or_else(|| {
                CoreError::InvalidArgument(format!("unknown estimator {estimator}"))
            })?;
            let q = targets_from_file.len();
            let set = est.estimate(&obs, q)?;
            let snaps = frontend_snapshots(&obs, q)?;
            let bin = snaps.first().map_or(0, |s| s.bin_index);
            let mut csv = fs::File::create(cli.global.out.join("estimates.csv"))?;
            write_estimates_csv(&mut csv, &[(0, bin, set.clone())])?;
            println!(
                "wrote {} and estimates.csv",
                cli.global.out.join("csi.bin").display()
            );
            for (i, t) in set.targets.iter().enumerate() {
                println!(
                    "target {i}: aoa {:.3} deg, aod {:.3} deg, |gain| {:.4}",
                    t.aoa_rad.to_degrees(),
                    t.aod_rad.to_degrees(),
                    t.gain_mag
                );
            }
        }
        Command::Dataset {
            kind,
            targets,
            samples,
            snrs,
            name,
        } => {
            let kind = match kind.as_str() {
                "regression" => DatasetKind::Regression {
                    num_targets: targets,
                },
                "classifier" => DatasetKind::Classifier,
                other => {
                    return Err(CoreError::InvalidArgument(format!(
                        "unknown dataset kind {other}"
                    )))
                }
            };
            let args = DatasetArgs {
                kind,
                total: samples,
                snr_list_db: snrs,
                seed: cli.global.seed,
                scenario: ScenarioFile::from_config(&scenario, &[]),
            };
            let (data, meta) = generate_dataset(&args)?;
            let path = cli.global.out.join(&name);
            let mut file = fs::File::create(&path)?;
            save_dataset(&mut file, &data)?;
            let sidecar = path.with_extension("json");
            fs::write(&sidecar, serde_json::to_string_pretty(&meta).unwrap())?;
            println!("wrote {} samples to {}", data.len(), path.display());
        }
        Command::Train {
            data,
            kind,
            targets,
            epochs,
            name,
        } => {
            let mut file = fs::File::open(&data)?;
            let dataset = load_dataset(&mut file)?;
            let head = match kind.as_str() {
                "regression" => Head::Regression { n_out: 2 * targets },
                "classifier" => Head::Classifier { n_classes: 5 },
                other => {
                    return Err(CoreError::InvalidArgument(format!(
                        "unknown model kind {other}"
                    )))
                }
            };
            let cfg = desk_train_config(epochs, cli.global.seed, &[]);
            let (net, report) = train_model(&dataset, head, &cfg, 0.15)?;
            let path = cli.global.out.join(&name);
            let mut out = fs::File::create(&path)?;
            save_model(&mut out, &net)?;
            let mut loss_csv = String::from("epoch,train_loss,val_loss\n");
            for (e, (t, v)) in report.train_loss.iter().zip(&report.val_loss).enumerate() {
                loss_csv.push_str(&format!("{},{:.12e},{:.12e}\n", e + 1, t, v));
            }
            fs::write(path.with_extension("loss.csv"), loss_csv)?;
            println!(
                "trained {} epochs; final train loss {:.3e}; model at {}",
                report.train_loss.len(),
                report.train_loss.last().unwrap(),
                path.display()
            );
        }
        Command::EvalMse {
            estimator,
            targets,
            snrs,
            model,
        } => {
            let mut models = BTreeMap::new();
            if let Some(path) = model {
                models.insert(targets, path);
            }
            let registry = experiments::build_registry(&models, None)?;
            let est = registry.get(&estimator).ok_or_else(|| {
                CoreError::InvalidArgument(format!("unknown estimator {estimator}"))
            })?;
            let plan = base_plan(
                ExperimentKind::MseSweep,
                &cli.global,
                &scenario,
                &snrs,
                targets,
            );
            let table = run_mse_sweep(&plan, est)?;
            emit_plot_data(&table, &cli.global.out, &format!("mse_{estimator}"))?;
            println!("config hash {}", table.config_hash);
            for row in &table.rows {
                if row.metric == "aoa_mse" || row.metric == "crb_aoa" {
                    println!("{:>6.1} dB  {:<8} {:.6e}", row.sweep, row.metric, row.value);
                }
            }
        }
        Command::EvalClassify { model, snrs } => {
            let mut file = fs::File::open(&model)?;
            let net = bisar_core::nn::load_model(&mut file, Head::Classifier { n_classes: 5 })?;
            let plan = base_plan(ExperimentKind::Classify, &cli.global, &scenario, &snrs, 1);
            let table = run_classifier_eval(&plan, &net)?;
            emit_plot_data(&table, &cli.global.out, "classify")?;
            for row in &table.rows {
                println!("{:>6.1} dB  accuracy {:.4}", row.sweep, row.value);
            }
        }
        Command::Crb { targets, snrs } => {
            let plan = base_plan(
                ExperimentKind::CrbSweep,
                &cli.global,
                &scenario,
                &snrs,
                targets,
            );
            let (table, csv_rows) = run_crb_sweep(&plan)?;
            emit_plot_data(&table, &cli.global.out, "crb")?;
            experiments::write_crb_sweep_csv(&csv_rows, &cli.global.out.join("crb_points.csv"))?;
            for row in &table.rows {
                println!("{:>6.1} dB  {:<8} {:.6e}", row.sweep, row.metric, row.value);
            }
        }
        Command::BetaSweep { snrs } => {
            let plan = base_plan(ExperimentKind::BetaSweep, &cli.global, &scenario, &snrs, 1);
            let (table, csv_rows) = run_beta_sweep(&plan)?;
            emit_plot_data(&table, &cli.global.out, "beta_sweep")?;
            experiments::write_crb_sweep_csv(&csv_rows, &cli.global.out.join("beta_points.csv"))?;
            println!("wrote {} beta points", csv_rows.len());
        }
        Command::Complexity { targets } => {
            let report = complexity_report(&scenario, targets)?;
            let path = cli.global.out.join("complexity.md");
            fs::write(&path, &report.markdown)?;
            fs::write(cli.global.out.join("complexity.csv"), &report.csv)?;
            println!("{}", report.markdown);
            println!("report written to {} (+ complexity.csv)", path.display());
        }
        Command::MleCompare { snrs } => {
            let plan = base_plan(ExperimentKind::MleCompare, &cli.global, &scenario, &snrs, 1);
            let registry = experiments::build_registry(&BTreeMap::new(), None)?;
            let pencil = registry.get("pencil").expect("builtin");
            let table = run_mle_compare(&plan, pencil)?;
            write_result_csv(&table, &cli.global.out.join("mle_compare.csv"))?;
            for row in &table.rows {
                println!("{:>6.1} dB  {:<18} {:.4}", row.sweep, row.metric, row.value);
            }
        }
    }
    Ok(())
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::InvalidArgument(_)
        | CoreError::InvalidPencilConfig(_)
        | CoreError::BadFormat(_)
        | CoreError::UnsupportedShape(_)
        | CoreError::GridTooLarge { .. }
        | CoreError::Io(_) => 2,
        CoreError::IllConditionedPilots { .. }
        | CoreError::RankDeficient { .. }
        | CoreError::DegenerateAod { .. }
        | CoreError::ZeroEnergyTarget { .. }
        | CoreError::UnidentifiableScenario { .. }
        | CoreError::Diverged { .. }
        | CoreError::Numerical(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
