//! Command-line experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pegsim::config::{ControllerKind, ScenarioConfig};
use pegsim::runner::{
    export_logs, plan_experiment, resolve_force_law, run_experiment, run_trial, stiffness_sweep,
    write_trial_csv, PlannedTrial,
};
use pegsim::synthesis::{synthesize, ControllerExport};
use pegsim::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pegsim",
    version,
    about = "Peg-in-hole assembly simulation toolkit"
)]
struct Cli {
    /// Scenario TOML file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the convex force controller and export it as JSON.
    Synthesize {
        /// Output path for the controller export.
        #[arg(long, default_value = "controller.json")]
        out: PathBuf,
    },
    /// Run a single assembly trial and write its CSV log.
    Simulate {
        /// Material name from the configured library.
        #[arg(long, default_value = "abs")]
        material: String,
        /// Starting planar offset from the hole (mm).
        #[arg(long, default_value_t = 5.0)]
        offset_x: f64,
        #[arg(long, default_value_t = 3.0)]
        offset_y: f64,
        /// Trial random stream seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV output path.
        #[arg(long, default_value = "trial.csv")]
        out: PathBuf,
        /// Drive both spiral axes with cosine (degenerate comparison mode).
        #[arg(long)]
        literal_spiral: bool,
    },
    /// Run the configured batch experiment and export all logs.
    Experiment {
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run trials on a single thread.
        #[arg(long)]
        serial: bool,
        /// Master seed override.
        #[arg(long)]
        master_seed: Option<u64>,
        /// Controller override: ccs, int_s, or int_h.
        #[arg(long)]
        controller: Option<String>,
    },
    /// Closed-loop force-step sweep across contact stiffness.
    Sweep {
        #[arg(long, default_value_t = 10.0)]
        k_min: f64,
        #[arg(long, default_value_t = 100.0)]
        k_max: f64,
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// Force setpoint for the step response (N).
        #[arg(long, default_value_t = 1.0)]
        setpoint: f64,
        /// Simulated duration per stiffness point (s).
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        /// Controller override: ccs, int_s, or int_h.
        #[arg(long)]
        controller: Option<String>,
        /// Optional CSV output path for the sweep table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario config, reporting the first problem.
    ValidateConfig,
}

fn load_config(path: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::from_path(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn parse_kind(s: &str) -> Result<ControllerKind> {
    match s {
        "ccs" => Ok(ControllerKind::Ccs),
        "int_s" => Ok(ControllerKind::IntS),
        "int_h" => Ok(ControllerKind::IntH),
        other => Err(Error::ConfigInvalid(format!(
            "unknown controller '{other}' (expected ccs, int_s, or int_h)"
        ))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synthesize { out } => {
            let cfg = load_config(&cli.config)?;
            cfg.validate()?;
            let t = cfg.sample_period();
            let nominal = cfg.inner_loop.plant(cfg.synthesis.nominal_stiffness, t)?;
            let sc = synthesize(&cfg.synthesis, &[nominal])?;
            let worst = sc
                .certificate
                .iter()
                .cloned()
                .reduce(|a, b| {
                    if b.spectral_radius > a.spectral_radius {
                        b
                    } else {
                        a
                    }
                })
                .expect("certificate is never empty");
            let export = ControllerExport::from_synthesized(&sc, t);
            std::fs::write(&out, export.to_json()?)?;
            println!("tracking cost      {:.6}", sc.achieved_cost);
            println!(
                "certificate        {} stiffness points, worst rho {:.6} at k = {}",
                sc.certificate.len(),
                worst.spectral_radius,
                worst.stiffness
            );
            println!("controller export  {}", out.display());
            Ok(())
        }
        Command::Simulate {
            material,
            offset_x,
            offset_y,
            seed,
            out,
            literal_spiral,
        } => {
            let mut cfg = load_config(&cli.config)?;
            cfg.strategy.literal_spiral |= literal_spiral;
            cfg.validate()?;
            let law = resolve_force_law(&cfg)?;
            let planned = PlannedTrial {
                index: 0,
                material: cfg.material_by_name(&material)?,
                seed,
                offset: [offset_x, offset_y],
            };
            let record = run_trial(&cfg, &planned, &law)?;
            write_trial_csv(&out, &record)?;
            println!(
                "outcome   {} ({} samples, {:.2} s simulated)",
                record.outcome.label(),
                record.samples.len(),
                record.total_time_s
            );
            println!("max |F|   {:.2} N", record.max_force_n);
            println!("depth     {:.2} mm", record.final_depth_mm);
            for e in &record.events {
                println!("  {:>8.3} s  {:>6} -> {:<6} {}", e.t, e.from, e.to, e.reason);
            }
            println!("log       {}", out.display());
            Ok(())
        }
        Command::Experiment {
            out,
            serial,
            master_seed,
            controller,
        } => {
            let mut cfg = load_config(&cli.config)?;
            if let Some(seed) = master_seed {
                cfg.experiment.master_seed = seed;
            }
            if let Some(kind) = controller.as_deref() {
                cfg.controller.kind = parse_kind(kind)?;
            }
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.experiment.output_dir));
            let planned = plan_experiment(&cfg)?.len();
            println!(
                "running {planned} trials ({} per material), controller {}",
                cfg.experiment.trials_per_material,
                cfg.controller.kind.label()
            );
            let result = run_experiment(&cfg, !serial)?;
            export_logs(&dir, &cfg, &result)?;
            let s = &result.summary;
            println!(
                "{}/{} trials succeeded ({:.0}%), wall time {:.1} s",
                s.successes,
                s.total_trials,
                100.0 * s.success_rate,
                s.wall_time_s
            );
            for m in &s.per_material {
                match m.mean_success_duration_s {
                    Some(d) => println!(
                        "  {:<10} {}/{} ok, mean duration {:.1} s, max |F| {:.1} N",
                        m.material, m.successes, m.trials, d, m.max_force_n
                    ),
                    None => println!(
                        "  {:<10} {}/{} ok, max |F| {:.1} N",
                        m.material, m.successes, m.trials, m.max_force_n
                    ),
                }
            }
            println!("logs in {}", dir.display());
            Ok(())
        }
        Command::Sweep {
            k_min,
            k_max,
            points,
            setpoint,
            duration,
            controller,
            out,
        } => {
            let mut cfg = load_config(&cli.config)?;
            if let Some(kind) = controller.as_deref() {
                cfg.controller.kind = parse_kind(kind)?;
            }
            cfg.validate()?;
            if points < 2 || k_min <= 0.0 || k_max < k_min {
                return Err(Error::ConfigInvalid(
                    "sweep needs k_max >= k_min > 0 and at least 2 points".to_string(),
                ));
            }
            let law = resolve_force_law(&cfg)?;
            let ks: Vec<f64> = (0..points)
                .map(|i| k_min + (k_max - k_min) * i as f64 / (points - 1) as f64)
                .collect();
            let rows = stiffness_sweep(&cfg, &law, &ks, setpoint, duration)?;
            println!(
                "{:>10} {:>10} {:>12} {:>12} {:>10}",
                "stiffness", "rho", "max |F| (N)", "final F (N)", "t63 (s)"
            );
            let mut csv = String::from("stiffness,rho,max_force,final_force,rise_632\n");
            for r in &rows {
                println!(
                    "{:>10.2} {:>10.4} {:>12.4} {:>12.4} {:>10}",
                    r.stiffness,
                    r.spectral_radius,
                    r.max_force_n,
                    r.final_force_n,
                    r.rise_632_s
                        .map(|v| format!("{v:.4}"))
                        .unwrap_or_else(|| "-".to_string())
                );
                csv.push_str(&format!(
                    "{:.9},{:.9},{:.9},{:.9},{}\n",
                    r.stiffness,
                    r.spectral_radius,
                    r.max_force_n,
                    r.final_force_n,
                    r.rise_632_s
                        .map(|v| format!("{v:.9}"))
                        .unwrap_or_default()
                ));
            }
            if let Some(path) = out {
                std::fs::write(&path, csv)?;
                println!("table written to {}", path.display());
            }
            Ok(())
        }
        Command::ValidateConfig => {
            let cfg = load_config(&cli.config)?;
            cfg.validate()?;
            println!("configuration ok");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
