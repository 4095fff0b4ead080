//! Convex force-controller synthesis over a contact-stiffness family.
//!
//! The plant is an inner position loop in series with a spring contact and a
//! delayed force sensor. With the (stable) plant `G`, every stabilizing
//! controller is `K = Q(1 − GQ)⁻¹` for a stable Youla parameter `Q`; the
//! closed-loop error map is then affine in `Q`: `H = 1 − G·Q`. Restricting
//! `Q` to an FIR makes every design constraint linear in the taps, so the
//! synthesis is a single LP:
//!
//! - L1 tracking cost between the nominal closed-loop force step response
//!   and a dead-time-compensated first-order target;
//! - a per-sample tracking band after three time constants;
//! - a nominal complementary-sensitivity peak cap via a 16-gon outer
//!   approximation of the modulus;
//! - a half-plane robustness constraint `Re(λ·T(e^{jω})) ≥ −1 + margin`
//!   for the extreme relative stiffness deviations λ of the family, which
//!   keeps the perturbed Nyquist locus away from −1 for every stiffness in
//!   the interval;
//! - a DC equality pinning zero steady-state force error.
//!
//! After solving, the realized controller is verified a posteriori: the
//! spectral radius of the true closed loop is computed on a stiffness grid
//! spanning the robust interval and stored as the certificate.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LpProblem;
use crate::lti::{zoh_second_order, DiscreteLti};

/// Nominal complementary-sensitivity peak cap.
const PEAK_CAP: f64 = 1.4;
/// 16-gon outer approximation: constraining 16 rotated real parts to
/// `r·cos(π/16)` confines the modulus to `r`.
const POLYGON_DIRS: usize = 16;
/// Distance the perturbed Nyquist locus must keep from the critical point.
const ROBUST_MARGIN: f64 = 0.1;
/// Frequency-constraint grid endpoints (Hz).
const FREQ_LO_HZ: f64 = 0.05;

/// The contact plant seen by the force controller at one stiffness.
#[derive(Debug, Clone)]
pub struct ContactPlantModel {
    /// Commanded position → actual position (inner position loop, including
    /// its transport delay).
    pub inner_loop: DiscreteLti,
    /// Environment stiffness, N/mm.
    pub stiffness: f64,
    /// Force-sensor delay in whole samples.
    pub sensor_delay_steps: usize,
}

impl ContactPlantModel {
    /// Builds the standard model: a second-order unity-gain inner loop
    /// (`fn_hz`, `zeta`) discretized by zero-order hold, `transport_steps`
    /// of actuation transport, and a delayed force sensor.
    pub fn from_second_order(
        fn_hz: f64,
        zeta: f64,
        transport_steps: usize,
        sensor_delay_steps: usize,
        stiffness: f64,
        sample_period: f64,
    ) -> Result<Self> {
        let h2 = zoh_second_order(fn_hz, zeta, sample_period)?;
        let inner_loop = DiscreteLti::delay(transport_steps, sample_period).series(&h2)?;
        Ok(Self {
            inner_loop,
            stiffness,
            sensor_delay_steps,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "stiffness must be > 0, got {}",
                self.stiffness
            )));
        }
        let rho = self.inner_loop.spectral_radius()?;
        if rho >= 1.0 {
            return Err(Error::UnstableInnerLoop(rho));
        }
        Ok(())
    }

    /// The open-loop map from commanded position to measured force:
    /// `stiffness × inner_loop × sensor delay`.
    pub fn force_path(&self) -> Result<DiscreteLti> {
        let t = self.inner_loop.sample_period();
        let delayed = self
            .inner_loop
            .series(&DiscreteLti::delay(self.sensor_delay_steps, t))?;
        Ok(delayed.scale(self.stiffness))
    }

    /// Same model at a different stiffness.
    pub fn with_stiffness(&self, stiffness: f64) -> Self {
        Self {
            inner_loop: self.inner_loop.clone(),
            stiffness,
            sensor_delay_steps: self.sensor_delay_steps,
        }
    }
}

/// Four-block plant `[z; y] = [P11 P12; P21 P22]·[w; u]` with
/// `w` = reference force, `z = y` = force tracking error, `u` = commanded
/// position.
#[derive(Debug, Clone)]
pub struct GeneralizedPlant {
    pub p11: DiscreteLti,
    pub p12: DiscreteLti,
    pub p21: DiscreteLti,
    pub p22: DiscreteLti,
}

/// Assembles the generalized plant for one contact model. Force pushes back
/// on the tracking error, so `P12 = P22 = −G`.
pub fn build_plant(model: &ContactPlantModel) -> Result<GeneralizedPlant> {
    model.validate()?;
    let g = model.force_path()?;
    let (_, _, _, d) = g.to_state_space();
    if d[(0, 0)].abs() > 1e-14 {
        return Err(Error::ConfigInvalid(
            "contact plant must be strictly proper (≥ 1 sample of delay)".into(),
        ));
    }
    let t = g.sample_period();
    Ok(GeneralizedPlant {
        p11: DiscreteLti::gain(1.0, t),
        p12: g.scale(-1.0),
        p21: DiscreteLti::gain(1.0, t),
        p22: g.scale(-1.0),
    })
}

/// Closed-loop map `w → z` under controller `k_ctrl`:
/// `H = P11 + P12·K(1 − P22·K)⁻¹·P21`.
pub fn closed_loop(plant: &GeneralizedPlant, k_ctrl: &DiscreteLti) -> Result<DiscreteLti> {
    let wrapped = k_ctrl.feedback_through(&plant.p22)?;
    let path = plant.p21.series(&wrapped)?.series(&plant.p12)?;
    plant.p11.add(&path)
}

/// For a stable `P22`, the closed loop is affine in the Youla parameter:
/// `H = T1 + T2·Q` with `T1 = P11`, `T2 = P12·P21`.
pub fn closed_loop_affine_maps(plant: &GeneralizedPlant) -> Result<(DiscreteLti, DiscreteLti)> {
    let rho = plant.p22.spectral_radius()?;
    if rho >= 1.0 {
        return Err(Error::ConfigInvalid(format!(
            "affine parameterization needs a stable P22 (spectral radius {rho:.4})"
        )));
    }
    Ok((plant.p11.clone(), plant.p21.series(&plant.p12)?))
}

/// Realizes the controller `K = Q(1 + P22·Q)⁻¹` for FIR taps `q`.
pub fn q_to_controller(q: &[f64], plant: &GeneralizedPlant) -> Result<DiscreteLti> {
    let t = plant.p22.sample_period();
    let q_sys = DiscreteLti::fir(q.to_vec(), t)?;
    // v = Q(e − P22·v) ⇒ K = Q(1 + P22 Q)⁻¹; with P22 = −G this is the
    // positive-feedback realization K = Q(1 − GQ)⁻¹.
    q_sys.feedback_through(&plant.p22.scale(-1.0))
}

/// Recovers the Youla parameter of a controller: `Q = K(1 − P22·K)⁻¹`,
/// truncated to `taps` impulse-response samples.
pub fn extract_q(k_ctrl: &DiscreteLti, plant: &GeneralizedPlant, taps: usize) -> Result<Vec<f64>> {
    let q_sys = k_ctrl.feedback_through(&plant.p22)?;
    Ok(q_sys.impulse_response(taps))
}

/// Synthesis problem description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisSpec {
    /// Stiffness at which tracking performance is optimized, N/mm.
    pub nominal_stiffness: f64,
    /// Desired 63.2% rise time of the closed-loop force step, s.
    pub target_time_constant: f64,
    /// Stiffness interval over which stability must be certified, N/mm.
    pub robust_interval: (f64, f64),
    /// Youla parameter length.
    pub q_taps: usize,
    /// Number of frequency-constraint grid points (uniform, up to Nyquist).
    pub freq_grid_size: usize,
    /// Tracking-cost horizon, samples.
    pub step_horizon: usize,
    /// Allowed per-sample step deviation after 3 time constants.
    pub tracking_band: f64,
    /// Cap on |Q(e^{jωT})| below `gain_split_hz`, mm/N. Bounds the
    /// controller's low-frequency magnitude (must leave room for the
    /// zero-error DC gain 1/G(1)).
    pub gain_cap_low: f64,
    /// Cap on |Q(e^{jωT})| from `gain_split_hz` up to Nyquist, mm/N.
    /// This bounds how strongly measurement noise is amplified into
    /// commanded motion: with white force noise of std σ, the commanded
    /// position jitter is at most ~σ·gain_cap_high. Tracking needs almost
    /// no |Q| above the closed-loop bandwidth, so a tight cap costs little.
    pub gain_cap_high: f64,
    /// Split frequency between the two |Q| caps, Hz.
    pub gain_split_hz: f64,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            nominal_stiffness: 10.0,
            target_time_constant: 0.17,
            robust_interval: (10.0, 100.0),
            q_taps: 64,
            freq_grid_size: 512,
            step_horizon: 250,
            tracking_band: 0.05,
            gain_cap_low: 0.2,
            gain_cap_high: 0.15,
            gain_split_hz: 4.0,
        }
    }
}

impl SynthesisSpec {
    pub fn validate(&self, sample_period: f64) -> Result<()> {
        let (kmin, kmax) = self.robust_interval;
        if !(kmin <= self.nominal_stiffness && self.nominal_stiffness <= kmax) {
            return Err(Error::ConfigInvalid(format!(
                "nominal stiffness {} outside robust interval [{kmin}, {kmax}]",
                self.nominal_stiffness
            )));
        }
        if self.q_taps < 8 {
            return Err(Error::ConfigInvalid("q_taps must be ≥ 8".into()));
        }
        if (self.step_horizon as f64) * sample_period < 5.0 * self.target_time_constant {
            return Err(Error::ConfigInvalid(
                "step_horizon must span at least 5 target time constants".into(),
            ));
        }
        if self.freq_grid_size < 16 {
            return Err(Error::ConfigInvalid("freq_grid_size must be ≥ 16".into()));
        }
        if !(self.tracking_band > 0.0) {
            return Err(Error::ConfigInvalid("tracking_band must be > 0".into()));
        }
        if !(self.gain_cap_low > 0.0 && self.gain_cap_high > 0.0) {
            return Err(Error::ConfigInvalid("controller gain caps must be > 0".into()));
        }
        if self.gain_cap_high > self.gain_cap_low {
            return Err(Error::ConfigInvalid(
                "gain_cap_high must not exceed gain_cap_low".into(),
            ));
        }
        if !(self.gain_split_hz > 0.0 && self.gain_split_hz < 0.5 / sample_period) {
            return Err(Error::ConfigInvalid(
                "gain_split_hz must lie strictly below Nyquist".into(),
            ));
        }
        Ok(())
    }
}

/// One verified point of the a-posteriori stability certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub stiffness: f64,
    pub spectral_radius: f64,
}

/// Output of [`synthesize`].
#[derive(Debug, Clone)]
pub struct SynthesizedController {
    /// Youla parameter taps.
    pub q: Vec<f64>,
    /// Realized controller `K` (marginally integrating state-space system).
    pub controller: DiscreteLti,
    /// Closed-loop spectral radius per verified stiffness.
    pub certificate: Vec<CertificateEntry>,
    /// Optimal L1 tracking cost.
    pub achieved_cost: f64,
}

/// Synthesizes a force controller for the stiffness family. The family must
/// contain the nominal model; all members share the nominal inner-loop
/// dynamics and differ in stiffness.
pub fn synthesize(
    spec: &SynthesisSpec,
    family: &[ContactPlantModel],
) -> Result<SynthesizedController> {
    synthesize_impl(spec, family, None)
}

/// Like [`synthesize`], but tracks a caller-supplied closed-loop step
/// response target (length `step_horizon`) instead of the built-in
/// dead-time-compensated first-order target.
pub fn synthesize_with_target(
    spec: &SynthesisSpec,
    family: &[ContactPlantModel],
    target: &[f64],
) -> Result<SynthesizedController> {
    synthesize_impl(spec, family, Some(target))
}

fn synthesize_impl(
    spec: &SynthesisSpec,
    family: &[ContactPlantModel],
    target_override: Option<&[f64]>,
) -> Result<SynthesizedController> {
    let nominal = family
        .iter()
        .find(|m| (m.stiffness - spec.nominal_stiffness).abs() < 1e-9)
        .ok_or_else(|| {
            Error::ConfigInvalid(format!(
                "family has no model at the nominal stiffness {}",
                spec.nominal_stiffness
            ))
        })?;
    nominal.validate()?;
    let t = nominal.inner_loop.sample_period();
    spec.validate(t)?;
    let plant = build_plant(nominal)?;
    let g = nominal.force_path()?;

    let horizon = spec.step_horizon;
    let taps = spec.q_taps;
    let g_imp = g.impulse_response(horizon);
    let mut cum_g = vec![0.0; horizon];
    let mut acc = 0.0;
    for (i, &gi) in g_imp.iter().enumerate() {
        acc += gi;
        cum_g[i] = acc;
    }

    // frequency-domain grid shared by every solve
    let nyq_hz = 0.5 / t;
    let nf = spec.freq_grid_size;
    let grid: Vec<f64> = (0..nf)
        .map(|i| {
            let f = FREQ_LO_HZ + (nyq_hz - FREQ_LO_HZ) * (i as f64) / ((nf - 1) as f64);
            2.0 * std::f64::consts::PI * f
        })
        .collect();
    let g_fr = g.freq_response(&grid)?;

    let (kmin, kmax) = spec.robust_interval;
    let knom = spec.nominal_stiffness;
    let lam_lo = (kmin - knom) / knom;
    let lam_hi = (kmax - knom) / knom;
    let cos_inr = (std::f64::consts::PI / POLYGON_DIRS as f64).cos();
    let g_dc = g.dc_gain()?;
    if 1.0 / g_dc > spec.gain_cap_low * cos_inr {
        return Err(Error::ConfigInvalid(format!(
            "gain_cap_low {} leaves no room for the zero-error DC gain {:.4}",
            spec.gain_cap_low,
            1.0 / g_dc
        )));
    }

    let dead = g_imp.iter().take_while(|v| v.abs() < 1e-12).count();

    // Assemble and solve the sampled program for one tracking target.
    // `tilt_tau_eff` gives the first-order constant of the target whose
    // phase steers the robustness half-planes; `None` keeps them untilted
    // (conservative; used with caller-supplied targets of unknown shape).
    let build_and_solve = |target: &[f64], tilt_tau_eff: Option<f64>| -> Result<(Vec<f64>, f64)> {
        // LP variables: q_0..q_{taps-1}, then one tracking slack per sample.
        let mut lp = LpProblem::new(taps + horizon);
        for n in 0..horizon {
            lp.set_objective(taps + n, 1.0);
        }

        // |step(G·Q)[n] − target[n]| ≤ t_n — the step response of G·Q at n
        // is Σ_m q_m · cum_g[n−m].
        let fam_track = lp.family("tracking");
        for n in 0..horizon {
            let mut cols: Vec<usize> = Vec::new();
            let mut vals: Vec<f64> = Vec::new();
            for m in 0..taps.min(n + 1) {
                cols.push(m);
                vals.push(cum_g[n - m]);
            }
            cols.push(taps + n);
            vals.push(-1.0);
            lp.add_le(fam_track, &cols, &vals, target[n]);
            let neg: Vec<f64> = vals
                .iter()
                .enumerate()
                .map(|(i, v)| if i + 1 == vals.len() { *v } else { -v })
                .collect();
            lp.add_le(fam_track, &cols, &neg, -target[n]);
        }

        // hard tracking band after 3 target time constants
        let fam_band = lp.family("band");
        let n_band = ((3.0 * spec.target_time_constant / t).ceil() as usize).min(horizon);
        for n in n_band..horizon {
            let mut cols: Vec<usize> = Vec::new();
            let mut vals: Vec<f64> = Vec::new();
            for m in 0..taps.min(n + 1) {
                cols.push(m);
                vals.push(cum_g[n - m]);
            }
            lp.add_le(fam_band, &cols, &vals, 1.0 + spec.tracking_band);
            let neg: Vec<f64> = vals.iter().map(|v| -v).collect();
            lp.add_le(fam_band, &cols, &neg, -(1.0 - spec.tracking_band));
        }

        let fam_peak = lp.family("peak");
        let fam_robust = lp.family("robust");
        let fam_gain = lp.family("gain");
        let cols_all: Vec<usize> = (0..taps).collect();
        let inradius = PEAK_CAP * cos_inr;
        for (i, gv) in g_fr.values.iter().enumerate() {
            let th = grid[i] * t;
            // per-tap phasors of Q(e^{jω}) = Σ_m q_m e^{-jmω T}
            let q_phasors: Vec<Complex<f64>> = (0..taps)
                .map(|m| Complex::from_polar(1.0, -(m as f64) * th))
                .collect();
            // T(e^{jω}) = G(e^{jω})·Q(e^{jω})
            let phasors: Vec<Complex<f64>> = q_phasors.iter().map(|p| gv * p).collect();
            let q_inradius = if grid[i] / (2.0 * std::f64::consts::PI) < spec.gain_split_hz {
                spec.gain_cap_low * cos_inr
            } else {
                spec.gain_cap_high * cos_inr
            };
            for dir in 0..POLYGON_DIRS {
                let rot = Complex::from_polar(
                    1.0,
                    -2.0 * std::f64::consts::PI * (dir as f64) / POLYGON_DIRS as f64,
                );
                // |T| ≤ PEAK_CAP via 16 half-planes
                let vals: Vec<f64> = phasors.iter().map(|p| (p * rot).re).collect();
                lp.add_le(fam_peak, &cols_all, &vals, inradius);
                // |Q| ≤ band cap: limits noise-to-motion amplification
                let qvals: Vec<f64> = q_phasors.iter().map(|p| (p * rot).re).collect();
                lp.add_le(fam_gain, &cols_all, &qvals, q_inradius);
            }
            // The loop perturbed to stiffness (1+λ)·k_nom stays stable for
            // every λ in [λ_lo, λ_hi] if the locus of T avoids the real
            // segment of critical points {−1/λ}. For λ_hi > 0 that segment
            // is (−∞, −1/λ_hi]; a per-frequency half-plane
            //   Re(e^{jα}·T) ≥ (margin − cos α)/λ_hi,   |α| < 90°,
            // excludes all of it for any tilt α, so the tilt can follow the
            // target locus's phase instead of pinning the whole spiral
            // right of the critical point.
            if lam_hi > 1e-12 {
                let alpha = match tilt_tau_eff {
                    Some(te) => {
                        let phi = -((dead as f64) * th) - (grid[i] * te).atan();
                        let w = phi.sin().atan2(phi.cos());
                        // full tilt where the target locus runs vertically
                        // (±90°), none where it meets the real axis (0°,
                        // ±180°) — there the critical segment really is
                        // ahead and the separating line must stay upright.
                        // Tilts past acos(margin) would push the boundary
                        // beyond the origin and forbid T = 0, which the
                        // rolled-off tail must reach.
                        let mag = w
                            .abs()
                            .min(std::f64::consts::PI - w.abs())
                            .min(ROBUST_MARGIN.acos());
                        -w.signum() * mag
                    }
                    None => 0.0,
                };
                let rot = Complex::from_polar(1.0, alpha);
                let vals: Vec<f64> = phasors.iter().map(|p| -((p * rot).re)).collect();
                lp.add_le(
                    fam_robust,
                    &cols_all,
                    &vals,
                    (alpha.cos() - ROBUST_MARGIN) / lam_hi,
                );
            }
            // For λ_lo < 0 the critical points lie on the positive real
            // axis from +1/|λ_lo| outward; keep the untilted half-plane.
            if lam_lo < -1e-12 {
                let vals: Vec<f64> = phasors.iter().map(|p| -lam_lo * p.re).collect();
                lp.add_le(fam_robust, &cols_all, &vals, 1.0 - ROBUST_MARGIN);
            }
        }

        // zero steady-state force error: T(1) = G(1)·Q(1) = 1
        let fam_dc = lp.family("dc");
        lp.add_eq(fam_dc, &cols_all, &vec![1.0; taps], 1.0 / g_dc);

        let sol = lp.solve(60, 1e-8)?;
        Ok((sol.x[..taps].to_vec(), sol.cost))
    };

    let requested = spec.target_time_constant;
    let (q, achieved_cost) = match target_override {
        Some(tv) => {
            if tv.len() != horizon {
                return Err(Error::ConfigInvalid(format!(
                    "target length {} must equal step_horizon {horizon}",
                    tv.len()
                )));
            }
            build_and_solve(tv, None)?
        }
        None => {
            // The robustness and gain-cap constraints slow the achievable
            // step below the target shape, so requesting the desired time
            // constant directly overshoots it. Retune the internal target
            // until the measured 63.2% rise time of the nominal closed
            // loop lands on the request.
            let mut tau_int = requested;
            let mut best: Option<(Vec<f64>, f64, f64)> = None;
            for _ in 0..4 {
                let target = tracking_target(&g_imp, tau_int, t, horizon);
                let tau_eff = (tau_int - dead as f64 * t).max(t);
                let (q, cost) = build_and_solve(&target, Some(tau_eff))?;
                let ctrl = q_to_controller(&q, &plant)?;
                let err_tf = closed_loop(&plant, &ctrl)?;
                let e_step = err_tf.simulate(&vec![1.0; horizon]);
                let f_step: Vec<f64> = e_step.iter().map(|e| 1.0 - e).collect();
                let achieved =
                    rise_time_632(&f_step, 1.0, t).unwrap_or(f64::INFINITY);
                let rel = (achieved - requested).abs() / requested;
                if best.as_ref().map_or(true, |b| rel < b.2) {
                    best = Some((q, cost, rel));
                }
                if rel <= 0.03 || !achieved.is_finite() {
                    break;
                }
                tau_int = (tau_int * requested / achieved)
                    .clamp(0.25 * requested, 4.0 * requested);
            }
            let (q, cost, _) = best.expect("at least one solve ran");
            (q, cost)
        }
    };
    let controller = q_to_controller(&q, &plant)?;

    // a-posteriori verification across the robust interval
    let mut certificate = Vec::new();
    let grid_n = 19usize;
    for i in 0..grid_n {
        let k = if grid_n == 1 || (kmax - kmin).abs() < 1e-12 {
            kmin
        } else {
            kmin + (kmax - kmin) * (i as f64) / ((grid_n - 1) as f64)
        };
        let plant_k = build_plant(&nominal.with_stiffness(k))?;
        let h_k = closed_loop(&plant_k, &controller)?;
        let rho = h_k.spectral_radius()?;
        certificate.push(CertificateEntry {
            stiffness: k,
            spectral_radius: rho,
        });
        if (kmax - kmin).abs() < 1e-12 {
            break;
        }
    }
    if let Some(bad) = certificate.iter().find(|e| e.spectral_radius >= 1.0) {
        return Err(Error::CertificateFailed {
            stiffness: bad.stiffness,
            rho: bad.spectral_radius,
        });
    }

    Ok(SynthesizedController {
        q,
        controller,
        certificate,
        achieved_cost,
    })
}

/// Built-in tracking target: a first-order rise delayed by the plant's dead
/// time, with the time constant shortened so the total 63.2% rise time still
/// lands on `tau`. Dead time is the count of leading zero samples of the
/// plant impulse response.
fn tracking_target(g_imp: &[f64], tau: f64, t: f64, horizon: usize) -> Vec<f64> {
    let dead = g_imp.iter().take_while(|v| v.abs() < 1e-12).count();
    let tau_eff = (tau - dead as f64 * t).max(t);
    (0..horizon)
        .map(|n| {
            if n < dead {
                0.0
            } else {
                1.0 - (-((n - dead) as f64) * t / tau_eff).exp()
            }
        })
        .collect()
}

/// Time at which a simulated force step response first reaches 63.2% of the
/// setpoint, by linear interpolation between samples.
pub fn rise_time_632(force: &[f64], setpoint: f64, sample_period: f64) -> Option<f64> {
    let level = 0.632 * setpoint;
    for i in 1..force.len() {
        if force[i - 1] < level && force[i] >= level {
            let frac = (level - force[i - 1]) / (force[i] - force[i - 1]);
            return Some(((i - 1) as f64 + frac) * sample_period);
        }
    }
    None
}

/// Serialized controller document exchanged between the synthesis step, the
/// runtime controllers, and the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerExport {
    pub sample_period: f64,
    pub q_taps: Vec<f64>,
    pub controller_state_space: StateSpaceJson,
    pub certificate: Vec<CertificateEntry>,
}

/// Row-major state-space matrices for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSpaceJson {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl ControllerExport {
    pub fn from_synthesized(sc: &SynthesizedController, sample_period: f64) -> Self {
        let (a, b, c, d) = sc.controller.to_state_space();
        let n = a.nrows();
        Self {
            sample_period,
            q_taps: sc.q.clone(),
            controller_state_space: StateSpaceJson {
                a: (0..n)
                    .map(|i| (0..n).map(|j| a[(i, j)]).collect())
                    .collect(),
                b: (0..n).map(|i| b[(i, 0)]).collect(),
                c: (0..n).map(|j| c[(0, j)]).collect(),
                d: d[(0, 0)],
            },
            certificate: sc.certificate.clone(),
        }
    }

    /// Reassembles the runtime controller LTI system.
    pub fn to_controller(&self) -> Result<DiscreteLti> {
        let ss = &self.controller_state_space;
        let n = ss.a.len();
        for row in &ss.a {
            if row.len() != n {
                return Err(Error::ConfigInvalid("controller A matrix not square".into()));
            }
        }
        if ss.b.len() != n || ss.c.len() != n {
            return Err(Error::ConfigInvalid(
                "controller B/C dimensions inconsistent with A".into(),
            ));
        }
        let a = nalgebra::DMatrix::from_fn(n, n, |i, j| ss.a[i][j]);
        let b = nalgebra::DMatrix::from_fn(n, 1, |i, _| ss.b[i]);
        let c = nalgebra::DMatrix::from_fn(1, n, |_, j| ss.c[j]);
        let d = nalgebra::DMatrix::from_element(1, 1, ss.d);
        DiscreteLti::state_space(a, b, c, d, self.sample_period)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
