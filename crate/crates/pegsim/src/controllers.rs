//! Runtime force-control laws and the per-axis hybrid arbiter.
//!
//! Force laws turn a force tracking error into a position increment toward
//! the contact, at most `clamp` mm per step. Two laws exist: a pure
//! integral controller (gain `Ki`) and the synthesized LTI controller,
//! stepped one sample at a time. The hybrid arbiter assigns each Cartesian
//! axis one of four modes (force, position, ramped force, hold) and rotates
//! wrench-frame force setpoints into Cartesian coordinates before per-axis
//! control. Reaction forces grow when the tool moves into the contact, so
//! the arbiter subtracts the force-law increment from the commanded
//! position.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::DiscreteLti;

/// Control authority assigned to one Cartesian axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AxisCommandMode {
    /// Regulate the measured force on this axis to `setpoint` (N).
    Force(f64),
    /// Command this absolute position (mm).
    Position(f64),
    /// Regulate force against a setpoint ramping from 0 at `slope` N/s up
    /// to `final_n`.
    Ramp { final_n: f64, slope: f64 },
    /// Hold the last commanded position.
    Off,
}

/// Coordinate frame in which force setpoints are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameSel {
    Cartesian,
    Wrench,
}

/// Per-axis mode assignment for one strategy state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridFrame {
    pub frame: FrameSel,
    pub axes: [AxisCommandMode; 3],
}

impl HybridFrame {
    pub fn cartesian(axes: [AxisCommandMode; 3]) -> Self {
        Self {
            frame: FrameSel::Cartesian,
            axes,
        }
    }

    pub fn wrench(axes: [AxisCommandMode; 3]) -> Self {
        Self {
            frame: FrameSel::Wrench,
            axes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.axes {
            if let AxisCommandMode::Ramp { final_n, slope } = m {
                if !(*slope > 0.0) || !(*final_n >= 0.0) {
                    return Err(Error::ConfigInvalid(format!(
                        "ramp needs slope > 0 and final ≥ 0, got {final_n} N at {slope} N/s"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Integral gain achieving closed-loop time constant `target_tau` at the
/// given contact stiffness (ideal inner loop): `Ki = 1/(τ·k)`.
pub fn tune_integral(target_tau: f64, stiffness: f64) -> Result<f64> {
    if !(target_tau > 0.0) || !(stiffness > 0.0) {
        return Err(Error::ConfigInvalid(format!(
            "tune_integral needs positive arguments, got τ={target_tau}, k={stiffness}"
        )));
    }
    Ok(1.0 / (target_tau * stiffness))
}

/// The backward-Euler integral law `u_n = u_{n-1} + Ki·T·e_n` as a transfer
/// function, for loop analysis.
pub fn integral_law_lti(ki: f64, sample_period: f64) -> DiscreteLti {
    let kt = ki * sample_period;
    DiscreteLti::state_space(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, kt),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, kt),
        sample_period,
    )
    .expect("1x1 integrator dimensions are always consistent")
}

/// Largest-stable integral gain for the force loop `force_path`, divided by
/// `gain_margin`. The critical gain is located by doubling and bisection on
/// the closed-loop spectral radius.
pub fn tune_integral_margin(force_path: &DiscreteLti, gain_margin: f64) -> Result<f64> {
    if !(gain_margin > 1.0) {
        return Err(Error::ConfigInvalid(format!(
            "gain margin must exceed 1, got {gain_margin}"
        )));
    }
    let t = force_path.sample_period();
    let stable = |ki: f64| -> Result<bool> {
        let loop_tf = force_path.series(&integral_law_lti(ki, t))?;
        Ok(loop_tf.feedback()?.spectral_radius()? < 1.0)
    };
    let mut hi = 1e-3;
    let mut doublings = 0;
    while stable(hi)? {
        hi *= 2.0;
        doublings += 1;
        if doublings > 40 {
            return Err(Error::ConfigInvalid(
                "integral loop appears stable at any gain; no margin point exists".to_string(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) / gain_margin)
}

#[derive(Debug, Clone)]
enum LawKind {
    Integral {
        ki: f64,
    },
    Synthesized {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: f64,
        x: DVector<f64>,
        /// Slew-limited output actually issued so far. The issued command
        /// chases the raw law output under the rate caps; because the
        /// limiter remembers where the raw output is, clipped samples are
        /// caught up later and zero-mean output wiggle produces zero net
        /// drift (per-step differencing of the raw output would rectify
        /// any wiggle larger than the asymmetric caps into runaway).
        y_lim: f64,
        /// Re-anchoring offset subtracted from the raw output. It absorbs
        /// whatever the rate caps had to discard beyond one full-rate step,
        /// so a long saturated stretch cannot wind up a huge pending move.
        offset: f64,
    },
}

/// Pending-move bound of the synthesized law's slew limiter, as a multiple
/// of the full clamp. Large enough that ordinary noise excursions of the
/// raw law output (a few tenths of a mm at 3σ) never trip the re-anchor,
/// small enough that a long saturated approach commits only a couple of
/// follow-on steps once it finally meets the surface.
const SLEW_CATCHUP_SPAN: f64 = 3.0;

/// Relieving-step allowance per newton of force excess, mm/N.
///
/// Against a unilateral contact, a retreat executed at the full clamp
/// replays blindly for the whole sensing delay and punches straight
/// through to separation; the loop then re-approaches blind, impacts, and
/// retreats again — a limit cycle that never damps. Grading the relieving
/// rate by the measured excess spreads the unload over about one delay
/// horizon even for the stiffest contact expected (~100 N/mm, ~8 samples:
/// 1/800 mm per N per step), which keeps the pair in contact and hands the
/// transient to the linear loop, where the synthesis certificate applies.
const RELIEF_GAIN_MM_PER_N: f64 = 0.00125;

/// One axis' force law with its internal state and slew clamps.
///
/// The clamp is asymmetric: increments toward the contact are limited to
/// `approach_clamp` (soft landings — an impact is invisible for the whole
/// sensing delay), while increments away from it may use the full `clamp`
/// (the surface under a translating tool can rise far faster than any
/// reasonable approach speed).
#[derive(Debug, Clone)]
pub struct ControllerState {
    kind: LawKind,
    clamp: f64,
    approach_clamp: f64,
    sample_period: f64,
}

impl ControllerState {
    pub fn integral(ki: f64, clamp: f64, sample_period: f64) -> Self {
        Self {
            kind: LawKind::Integral { ki },
            clamp,
            approach_clamp: clamp,
            sample_period,
        }
    }

    pub fn synthesized(law: &DiscreteLti, clamp: f64) -> Self {
        let (a, b, c, d) = law.to_state_space();
        let n = a.nrows();
        Self {
            kind: LawKind::Synthesized {
                a,
                b,
                c,
                d: d[(0, 0)],
                x: DVector::zeros(n),
                y_lim: 0.0,
                offset: 0.0,
            },
            clamp,
            approach_clamp: clamp,
            sample_period: law.sample_period(),
        }
    }

    /// Restricts increments toward the contact to `v` mm per step.
    pub fn with_approach_clamp(mut self, v: f64) -> Self {
        self.approach_clamp = v.min(self.clamp);
        self
    }

    pub fn reset(&mut self) {
        if let LawKind::Synthesized {
            x, y_lim, offset, ..
        } = &mut self.kind
        {
            x.fill(0.0);
            *y_lim = 0.0;
            *offset = 0.0;
        }
    }

    /// Advances the law by one sample of force error and returns the
    /// position increment toward the contact (mm), clamped per step.
    ///
    /// `press_sign` tells which increment direction presses harder (+1, −1,
    /// or 0 when the axis merely regulates to zero force): pressing steps
    /// are limited to `approach_clamp`; relieving steps are graded by how
    /// far the measured force overshoots (see [`RELIEF_GAIN_MM_PER_N`]),
    /// between the approach clamp and the full clamp; a zero-setpoint axis
    /// gets the graded bound symmetrically (one-sided clipping of a
    /// zero-mean signal would rectify noise into drift).
    pub fn step_force_law(&mut self, f_err: f64, press_sign: f64) -> Result<f64> {
        if !f_err.is_finite() {
            return Err(Error::NonFinite("force error"));
        }
        let graded = |excess: f64| -> f64 {
            (excess * RELIEF_GAIN_MM_PER_N).clamp(self.approach_clamp, self.clamp)
        };
        let (lo, hi) = if press_sign > 0.0 {
            (-graded((-f_err).max(0.0)), self.approach_clamp)
        } else if press_sign < 0.0 {
            (-self.approach_clamp, graded(f_err.max(0.0)))
        } else {
            // A zero-setpoint axis has no tracking duty — it only relieves
            // whatever force appears. Its noise-floor step is kept well
            // below the approach clamp because lateral jitter modulates
            // the local surface height by the wall slope, multiplying
            // straight back into the press axis as force churn; real
            // contact forces still move it at the graded rate.
            let s = (f_err.abs() * RELIEF_GAIN_MM_PER_N)
                .clamp(0.1 * self.approach_clamp, self.clamp);
            (-s, s)
        };
        let inc = match &mut self.kind {
            LawKind::Integral { ki } => (*ki * f_err * self.sample_period).clamp(lo, hi),
            LawKind::Synthesized {
                a,
                b,
                c,
                d,
                x,
                y_lim,
                offset,
            } => {
                let y = (&*c * &*x)[(0, 0)] + *d * f_err;
                *x = &*a * &*x + &*b * f_err;
                // Bound the pending catch-up. The span must sit well above
                // the law's per-step noise response so ordinary jitter
                // never trips the re-anchor (re-anchoring forgets clipped
                // samples and would leak drift); it only needs to be small
                // enough to bound the motion already committed when a
                // long saturated approach finally meets the surface.
                let span = SLEW_CATCHUP_SPAN * self.clamp;
                let gap = (y - *offset) - *y_lim;
                if gap > span {
                    *offset += gap - span;
                } else if gap < -span {
                    *offset += gap + span;
                }
                let target = y - *offset;
                let inc = (target - *y_lim).clamp(lo, hi);
                *y_lim += inc;
                inc
            }
        };
        Ok(inc)
    }
}

/// Rotation taking wrench-frame vectors to Cartesian for a tool tilted by
/// `tilt_deg` about the x-axis.
pub fn wrench_to_cartesian(tilt_deg: f64) -> [[f64; 3]; 3] {
    let th = tilt_deg.to_radians();
    let (s, c) = th.sin_cos();
    // Plain tilt rotation R_x(tilt): identity at zero tilt, so wrench and
    // Cartesian setpoints coincide for an erect tool. With the tool leaning
    // toward -y, a positive lateral wrench presses the peg flank into the
    // near hole edge (the side it leans over), which is the only contact
    // that can return a large lateral reaction.
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rotate(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2];
    }
    out
}

/// Cartesian components of a wrench-frame vector measured the other way
/// (rotation transpose).
pub fn cartesian_to_wrench(tilt_deg: f64, v: [f64; 3]) -> [f64; 3] {
    let r = wrench_to_cartesian(tilt_deg);
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = r[0][i] * v[0] + r[1][i] * v[1] + r[2][i] * v[2];
    }
    out
}

/// Everything the hybrid arbiter needs for one 8 ms step.
#[derive(Debug, Clone, Copy)]
pub struct HybridStepInput {
    /// Measured Cartesian force (N).
    pub measured_force: [f64; 3],
    /// Current tool tilt about x (deg) — defines the wrench frame.
    pub tilt_deg: f64,
    /// Previous commanded Cartesian position (mm).
    pub last_command: [f64; 3],
    /// Time spent in the current strategy state (s) — drives ramps.
    pub t_in_state: f64,
}

/// One step of per-axis hybrid control. Returns the new commanded Cartesian
/// position.
pub fn step_hybrid(
    frame: &HybridFrame,
    input: &HybridStepInput,
    states: &mut [ControllerState; 3],
) -> Result<[f64; 3]> {
    for v in input
        .measured_force
        .iter()
        .chain(input.last_command.iter())
    {
        if !v.is_finite() {
            return Err(Error::NonFinite("hybrid controller input"));
        }
    }
    // force setpoint vector in the commanding frame (zero on non-force axes)
    let mut setpoints = [0.0; 3];
    for (i, mode) in frame.axes.iter().enumerate() {
        setpoints[i] = match *mode {
            AxisCommandMode::Force(s) => s,
            AxisCommandMode::Ramp { final_n, slope } => {
                let travelled = slope.abs() * input.t_in_state;
                if final_n >= 0.0 {
                    travelled.min(final_n)
                } else {
                    (-travelled).max(final_n)
                }
            }
            _ => 0.0,
        };
    }
    let setpoints = match frame.frame {
        FrameSel::Cartesian => setpoints,
        FrameSel::Wrench => rotate(&wrench_to_cartesian(input.tilt_deg), setpoints),
    };

    let mut command = input.last_command;
    for (i, mode) in frame.axes.iter().enumerate() {
        match *mode {
            AxisCommandMode::Position(target) => command[i] = target,
            AxisCommandMode::Off => {}
            AxisCommandMode::Force(_) | AxisCommandMode::Ramp { .. } => {
                let err = setpoints[i] - input.measured_force[i];
                let press = if setpoints[i] == 0.0 {
                    0.0
                } else {
                    setpoints[i].signum()
                };
                let inc = states[i].step_force_law(err, press)?;
                // moving against the axis direction increases the reaction
                command[i] -= inc;
            }
        }
    }
    Ok(command)
}

/// Steady-state detection thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SteadySpec {
    /// Observation window (s).
    pub window_s: f64,
    /// Per-axis std-dev bound on smoothed force (N).
    pub force_std_max: f64,
    /// Per-axis commanded-position drift bound (mm).
    pub drift_max: f64,
    /// Force smoothing span (s) applied before the std-dev test.
    pub smooth_s: f64,
}

impl Default for SteadySpec {
    fn default() -> Self {
        Self {
            window_s: 0.5,
            force_std_max: 0.3,
            drift_max: 0.05,
            smooth_s: 0.1,
        }
    }
}

/// True iff the trailing window of the histories is steady: smoothed force
/// std-dev under the bound on y/z (the x-axis criterion is relaxed), and
/// commanded position drift under the bound on all axes. `forces` and
/// `commanded` are parallel per-sample histories; returns false until a
/// full window has accumulated.
pub fn steady_state_reached(
    forces: &[[f64; 3]],
    commanded: &[[f64; 3]],
    dt: f64,
    spec: &SteadySpec,
) -> bool {
    let window = (spec.window_s / dt).round() as usize;
    let smooth = ((spec.smooth_s / dt).round() as usize).max(1);
    if forces.len() < window + smooth - 1 || commanded.len() < window {
        return false;
    }
    for axis in 0..3 {
        if axis != 0 {
            // smoothed force std over the trailing window
            let mut mean = 0.0;
            let mut vals = Vec::with_capacity(window);
            for k in 0..window {
                let end = forces.len() - window + k + 1;
                let start = end - smooth;
                let ma: f64 = forces[start..end].iter().map(|f| f[axis]).sum::<f64>()
                    / smooth as f64;
                mean += ma;
                vals.push(ma);
            }
            mean /= window as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / window as f64;
            if var.sqrt() >= spec.force_std_max {
                return false;
            }
        }
        let tail = &commanded[commanded.len() - window..];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in tail {
            lo = lo.min(c[axis]);
            hi = hi.max(c[axis]);
        }
        if hi - lo >= spec.drift_max {
            return false;
        }
    }
    true
}
