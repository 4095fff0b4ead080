//! Trial execution, batch experiments, and log export.
//!
//! A trial wires the pieces together at 125 Hz: sense → strategy → hybrid
//! control → world. Experiments run many trials (optionally in parallel)
//! from one master seed, with per-trial streams derived as
//! `master_seed + trial_index`, so results are bitwise reproducible
//! regardless of thread scheduling. Logs are hand-written CSV (one file per
//! trial), a JSON summary, and a hashed manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ControllerKind, ScenarioConfig};
use crate::controllers::{
    integral_law_lti, step_hybrid, tune_integral, tune_integral_margin, ControllerState,
    HybridStepInput,
};
use crate::error::{Error, Result};
use crate::lti::DiscreteLti;
use crate::strategy::{AssemblyState, FailReason, Strategy, TransitionEvent};
use crate::synthesis::{build_plant, closed_loop, rise_time_632, synthesize, ControllerExport};
use crate::world::{Material, World};

/// ChaCha stream id for in-trial sensor noise; stream 0 is reserved for the
/// planning draws (start offsets), so the two never overlap.
const NOISE_STREAM: u64 = 1;

/// A resolved force law, ready to be instantiated per axis.
#[derive(Debug, Clone)]
pub enum ForceLaw {
    Integral { ki: f64, name: &'static str },
    Synthesized { export: ControllerExport, law: DiscreteLti },
}

impl ForceLaw {
    pub fn label(&self) -> &'static str {
        match self {
            ForceLaw::Integral { name, .. } => name,
            ForceLaw::Synthesized { .. } => "ccs",
        }
    }

    /// Fresh per-axis controller state.
    pub fn axis_state(&self, clamp: f64, approach_clamp: f64, sample_period: f64) -> ControllerState {
        match self {
            ForceLaw::Integral { ki, .. } => ControllerState::integral(*ki, clamp, sample_period),
            ForceLaw::Synthesized { law, .. } => ControllerState::synthesized(law, clamp),
        }
        .with_approach_clamp(approach_clamp)
    }

    /// The law as a transfer function, for loop analysis.
    pub fn law_lti(&self, sample_period: f64) -> DiscreteLti {
        match self {
            ForceLaw::Integral { ki, .. } => integral_law_lti(*ki, sample_period),
            ForceLaw::Synthesized { law, .. } => law.clone(),
        }
    }
}

/// Builds the force law selected by the config: loads or synthesizes the
/// convex controller, or tunes one of the two integral laws.
pub fn resolve_force_law(cfg: &ScenarioConfig) -> Result<ForceLaw> {
    let t = cfg.sample_period();
    match cfg.controller.kind {
        ControllerKind::Ccs => {
            let export = match &cfg.controller.ccs_export {
                Some(path) => {
                    let text = fs::read_to_string(path)?;
                    let export = ControllerExport::from_json(&text)?;
                    if (export.sample_period - t).abs() > 1e-12 {
                        return Err(Error::SamplePeriodMismatch(export.sample_period, t));
                    }
                    export
                }
                None => {
                    let nominal = cfg
                        .inner_loop
                        .plant(cfg.synthesis.nominal_stiffness, t)?;
                    let sc = synthesize(&cfg.synthesis, &[nominal])?;
                    ControllerExport::from_synthesized(&sc, t)
                }
            };
            let law = export.to_controller()?;
            Ok(ForceLaw::Synthesized { export, law })
        }
        ControllerKind::IntS => {
            let ki = tune_integral(
                cfg.controller.time_constant_s,
                cfg.synthesis.nominal_stiffness,
            )?;
            Ok(ForceLaw::Integral { ki, name: "int_s" })
        }
        ControllerKind::IntH => {
            let plant = cfg
                .inner_loop
                .plant(cfg.controller.margin_stiffness, t)?;
            let ki = tune_integral_margin(&plant.force_path()?, cfg.controller.gain_margin)?;
            Ok(ForceLaw::Integral { ki, name: "int_h" })
        }
    }
}

/// One logged control sample (sensed values).
#[derive(Debug, Clone)]
pub struct TrialSample {
    pub t: f64,
    pub position: [f64; 3],
    pub force: [f64; 3],
    pub force_wrench: [f64; 3],
    pub state: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialOutcome {
    Success,
    Failed(FailReason),
}

impl TrialOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, TrialOutcome::Success)
    }

    pub fn label(&self) -> String {
        match self {
            TrialOutcome::Success => "success".to_string(),
            TrialOutcome::Failed(r) => format!("failed:{}", r.label()),
        }
    }
}

/// Everything one trial produced.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub index: usize,
    pub material: String,
    pub seed: u64,
    pub offset: [f64; 2],
    pub outcome: TrialOutcome,
    /// Time from first contact to trial end (s); full trial time when the
    /// peg never touched down.
    pub duration_s: f64,
    pub total_time_s: f64,
    /// Peak true contact force magnitude (N).
    pub max_force_n: f64,
    /// True insertion depth at the end (mm below the plate).
    pub final_depth_mm: f64,
    /// State in which a failure fired (empty for successes).
    pub failed_in_state: String,
    pub events: Vec<TransitionEvent>,
    pub samples: Vec<TrialSample>,
}

/// One planned trial of an experiment.
#[derive(Debug, Clone)]
pub struct PlannedTrial {
    pub index: usize,
    pub material: Material,
    pub seed: u64,
    pub offset: [f64; 2],
}

/// Expands the experiment section into concrete trials. Start offsets are
/// drawn uniformly on the offset disk from each trial's own seeded stream.
pub fn plan_experiment(cfg: &ScenarioConfig) -> Result<Vec<PlannedTrial>> {
    cfg.validate()?;
    let e = &cfg.experiment;
    let mut plan = Vec::with_capacity(e.materials.len() * e.trials_per_material);
    for (mi, name) in e.materials.iter().enumerate() {
        let material = cfg.material_by_name(name)?;
        for j in 0..e.trials_per_material {
            let index = mi * e.trials_per_material + j;
            let seed = e.master_seed.wrapping_add(index as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u1: f64 = rng.gen();
            let u2: f64 = rng.gen();
            let r = e.offset_radius_mm * u1.sqrt();
            let th = 2.0 * std::f64::consts::PI * u2;
            plan.push(PlannedTrial {
                index,
                material: material.clone(),
                seed,
                offset: [r * th.cos(), r * th.sin()],
            });
        }
    }
    Ok(plan)
}

/// Runs one full trial: approach, search, and insertion under the given
/// force law. Contact blow-ups are recorded as failed trials, not errors.
pub fn run_trial(cfg: &ScenarioConfig, planned: &PlannedTrial, law: &ForceLaw) -> Result<TrialRecord> {
    let t_step = cfg.sample_period();
    let mut strategy = Strategy::new(cfg.strategy.clone(), planned.offset);
    let start = strategy.start_position();
    let inner = cfg.inner_loop.to_lti(t_step)?;
    let mut world = World::new(
        cfg.world.geometry.clone(),
        planned.material.clone(),
        &inner,
        cfg.inner_loop.sensor_delay_steps,
        cfg.world.noise,
        start,
        cfg.strategy.tilt_deg,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(planned.seed);
    rng.set_stream(NOISE_STREAM);

    let clamp = cfg.controller.command_clamp_mm;
    let approach = cfg.controller.approach_clamp_mm;
    let mut axes = [
        law.axis_state(clamp, approach, t_step),
        law.axis_state(clamp, approach, t_step),
        law.axis_state(clamp, approach, t_step),
    ];
    let mut last_cmd = start;
    let mut true_force = [0.0; 3];
    let mut max_force = 0.0f64;
    let mut last_state = strategy.state();
    let max_steps = (cfg.strategy.global_timeout / t_step).ceil() as usize + 250;
    let mut samples: Vec<TrialSample> = Vec::with_capacity(max_steps.min(20_000));

    for _ in 0..max_steps {
        let sensed = world.sense(&mut rng);
        let directive = strategy.advance(&sensed, true_force, last_cmd, t_step);
        let state_now = strategy.state();
        if state_now != last_state {
            // fresh law state at each stage boundary — setpoints jump there
            for a in axes.iter_mut() {
                a.reset();
            }
            last_state = state_now;
        }
        if matches!(state_now, AssemblyState::Done | AssemblyState::Failed(_)) {
            samples.push(TrialSample {
                t: strategy.time(),
                position: sensed.position,
                force: sensed.force,
                force_wrench: sensed.force_wrench,
                state: state_now.label(),
            });
            break;
        }
        let input = HybridStepInput {
            measured_force: sensed.force,
            tilt_deg: directive.tilt_deg,
            last_command: last_cmd,
            t_in_state: strategy.t_in_state(),
        };
        let cmd = step_hybrid(&directive.frame, &input, &mut axes)?;
        match world.step(cmd, directive.tilt_deg) {
            Ok(f) => true_force = f,
            Err(Error::Blowup(pen)) => {
                strategy.fail_external(
                    FailReason::Blowup,
                    &format!("contact penetration {pen:.2} mm"),
                );
            }
            Err(e) => return Err(e),
        }
        let mag =
            (true_force[0].powi(2) + true_force[1].powi(2) + true_force[2].powi(2)).sqrt();
        max_force = max_force.max(mag);
        samples.push(TrialSample {
            t: strategy.time(),
            position: sensed.position,
            force: sensed.force,
            force_wrench: sensed.force_wrench,
            state: state_now.label(),
        });
        last_cmd = cmd;
    }

    let outcome = match strategy.state() {
        AssemblyState::Done => TrialOutcome::Success,
        AssemblyState::Failed(r) => TrialOutcome::Failed(r),
        _ => TrialOutcome::Failed(FailReason::Timeout),
    };
    let failed_in_state = if outcome.is_success() {
        String::new()
    } else {
        strategy
            .transitions()
            .iter()
            .rev()
            .find(|e| e.to == "FAILED")
            .map(|e| e.from.clone())
            .unwrap_or_else(|| strategy.state().label().to_string())
    };
    let total = strategy.time();
    let duration = total - strategy.first_contact_time().unwrap_or(0.0);
    Ok(TrialRecord {
        index: planned.index,
        material: planned.material.name.clone(),
        seed: planned.seed,
        offset: planned.offset,
        outcome,
        duration_s: duration,
        total_time_s: total,
        max_force_n: max_force,
        final_depth_mm: -world.state().position[2],
        failed_in_state,
        events: strategy.transitions().to_vec(),
        samples,
    })
}

/// Per-trial digest kept in the JSON summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialBrief {
    pub index: usize,
    pub material: String,
    pub seed: u64,
    pub offset: [f64; 2],
    pub outcome: String,
    pub duration_s: f64,
    pub max_force_n: f64,
    pub final_depth_mm: f64,
    pub failed_in_state: String,
    pub events: Vec<TransitionEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialSummary {
    pub material: String,
    pub trials: usize,
    pub successes: usize,
    pub mean_success_duration_s: Option<f64>,
    pub max_force_n: f64,
    pub failure_reasons: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub controller: String,
    pub total_trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_success_duration_s: Option<f64>,
    pub max_force_n: f64,
    pub wall_time_s: f64,
    pub per_material: Vec<MaterialSummary>,
    pub trials: Vec<TrialBrief>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub summary: ExperimentSummary,
}

fn summarize(
    cfg: &ScenarioConfig,
    law: &ForceLaw,
    records: &[TrialRecord],
    wall_time_s: f64,
) -> ExperimentSummary {
    let mut per_material = Vec::new();
    for name in &cfg.experiment.materials {
        let group: Vec<&TrialRecord> = records.iter().filter(|r| &r.material == name).collect();
        let successes: Vec<&&TrialRecord> =
            group.iter().filter(|r| r.outcome.is_success()).collect();
        let mean = if successes.is_empty() {
            None
        } else {
            Some(successes.iter().map(|r| r.duration_s).sum::<f64>() / successes.len() as f64)
        };
        per_material.push(MaterialSummary {
            material: name.clone(),
            trials: group.len(),
            successes: successes.len(),
            mean_success_duration_s: mean,
            max_force_n: group
                .iter()
                .map(|r| r.max_force_n)
                .fold(0.0, f64::max),
            failure_reasons: group
                .iter()
                .filter(|r| !r.outcome.is_success())
                .map(|r| r.outcome.label())
                .collect(),
        });
    }
    let successes: Vec<&TrialRecord> =
        records.iter().filter(|r| r.outcome.is_success()).collect();
    let mean = if successes.is_empty() {
        None
    } else {
        Some(successes.iter().map(|r| r.duration_s).sum::<f64>() / successes.len() as f64)
    };
    ExperimentSummary {
        controller: law.label().to_string(),
        total_trials: records.len(),
        successes: successes.len(),
        success_rate: if records.is_empty() {
            0.0
        } else {
            successes.len() as f64 / records.len() as f64
        },
        mean_success_duration_s: mean,
        max_force_n: records.iter().map(|r| r.max_force_n).fold(0.0, f64::max),
        wall_time_s,
        per_material,
        trials: records
            .iter()
            .map(|r| TrialBrief {
                index: r.index,
                material: r.material.clone(),
                seed: r.seed,
                offset: r.offset,
                outcome: r.outcome.label(),
                duration_s: r.duration_s,
                max_force_n: r.max_force_n,
                final_depth_mm: r.final_depth_mm,
                failed_in_state: r.failed_in_state.clone(),
                events: r.events.clone(),
            })
            .collect(),
    }
}

/// Runs the whole planned experiment; trial order in the result is plan
/// order no matter how the work was scheduled.
pub fn run_experiment(cfg: &ScenarioConfig, parallel: bool) -> Result<ExperimentResult> {
    let started = Instant::now();
    let law = resolve_force_law(cfg)?;
    let plan = plan_experiment(cfg)?;
    let records: Result<Vec<TrialRecord>> = if parallel {
        plan.par_iter().map(|p| run_trial(cfg, p, &law)).collect()
    } else {
        plan.iter().map(|p| run_trial(cfg, p, &law)).collect()
    };
    let records = records?;
    let summary = summarize(cfg, &law, &records, started.elapsed().as_secs_f64());
    Ok(ExperimentResult { records, summary })
}

/// Writes one trial's time series as CSV: a header plus one row per sample.
pub fn write_trial_csv(path: &Path, record: &TrialRecord) -> Result<()> {
    let mut text = String::with_capacity(record.samples.len() * 140 + 64);
    text.push_str("t,Px,Py,Pz,Fx,Fy,Fz,Fwx,Fwy,Fwz,state\n");
    for s in &record.samples {
        text.push_str(&format!(
            "{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{}\n",
            s.t,
            s.position[0],
            s.position[1],
            s.position[2],
            s.force[0],
            s.force[1],
            s.force[2],
            s.force_wrench[0],
            s.force_wrench[1],
            s.force_wrench[2],
            s.state,
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
    pub rows: usize,
}

/// Output-directory manifest. Everything except `created_unix_s` is a pure
/// function of the configuration and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub created_unix_s: u64,
    pub config_sha256: String,
    pub controller: String,
    pub total_trials: usize,
    pub files: Vec<ManifestFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes per-trial CSVs, `summary.json`, the resolved `config.toml`, and a
/// hashed `manifest.json` into `dir`. Returns the CSV paths in trial order.
pub fn export_logs(
    dir: &Path,
    cfg: &ScenarioConfig,
    result: &ExperimentResult,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut csv_paths = Vec::new();
    let mut files = Vec::new();
    for record in &result.records {
        let name = format!("trial_{:03}_{}.csv", record.index, record.material);
        let path = dir.join(&name);
        write_trial_csv(&path, record)?;
        let bytes = fs::read(&path)?;
        files.push(ManifestFile {
            name,
            sha256: sha256_hex(&bytes),
            rows: record.samples.len(),
        });
        csv_paths.push(path);
    }
    let summary_json = serde_json::to_string_pretty(&result.summary)?;
    fs::write(dir.join("summary.json"), &summary_json)?;

    let config_toml = cfg.to_toml_string()?;
    fs::write(dir.join("config.toml"), &config_toml)?;

    let manifest = Manifest {
        created_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config_sha256: sha256_hex(config_toml.as_bytes()),
        controller: result.summary.controller.clone(),
        total_trials: result.records.len(),
        files,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(csv_paths)
}

/// One stiffness point of a closed-loop sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub stiffness: f64,
    pub spectral_radius: f64,
    pub max_force_n: f64,
    pub final_force_n: f64,
    pub rise_632_s: Option<f64>,
}

/// Linear closed-loop force-step responses of the selected law across a
/// stiffness grid. Unstable points report their (diverging) peak as +inf.
pub fn stiffness_sweep(
    cfg: &ScenarioConfig,
    law: &ForceLaw,
    stiffnesses: &[f64],
    setpoint: f64,
    duration_s: f64,
) -> Result<Vec<SweepRow>> {
    let t = cfg.sample_period();
    let k_lti = law.law_lti(t);
    let steps = (duration_s / t).round() as usize;
    let mut rows = Vec::with_capacity(stiffnesses.len());
    for &k in stiffnesses {
        let plant = cfg.inner_loop.plant(k, t)?;
        let gp = build_plant(&plant)?;
        let cl = closed_loop(&gp, &k_lti)?;
        let rho = cl.spectral_radius()?;
        let err = cl.simulate(&vec![setpoint; steps]);
        let mut force = Vec::with_capacity(steps);
        let mut max_f = 0.0f64;
        let mut diverged = false;
        for e in &err {
            let f = setpoint - e;
            if !f.is_finite() || f.abs() > 1e9 {
                diverged = true;
                break;
            }
            max_f = max_f.max(f.abs());
            force.push(f);
        }
        rows.push(SweepRow {
            stiffness: k,
            spectral_radius: rho,
            max_force_n: if diverged { f64::INFINITY } else { max_f },
            final_force_n: if diverged {
                f64::INFINITY
            } else {
                *force.last().unwrap_or(&0.0)
            },
            rise_632_s: if diverged {
                None
            } else {
                rise_time_632(&force, setpoint, t)
            },
        });
    }
    Ok(rows)
}
