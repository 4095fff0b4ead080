//! Quasi-static contact world: a tilted cylindrical peg over a plate with a
//! circular hole.
//!
//! The peg is position-driven: commanded Cartesian positions pass through
//! per-axis inner-loop filters (the same model the synthesis uses), tilt
//! follows its command directly. Contact is a penalty model — each step the
//! geometry is probed for up to three penetrating features, every feature
//! contributes a normal spring force `stiffness × penetration` plus
//! Karnopp-style stick-slip friction through a tangential anchor spring.
//! Measurements are delayed a configurable number of samples and carry
//! Gaussian sensor noise.
//!
//! Pose convention: the commanded/actual position locates the *tip*, the
//! lowest bottom-rim point of the peg. The peg tilts about the x-axis and
//! leans toward −y, so the bottom-face center sits at
//! `tip + r_p·(0, cos θ, sin θ)` and the axis direction is `(0, −sin θ,
//! cos θ)`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controllers::cartesian_to_wrench;
use crate::error::{Error, Result};
use crate::lti::DiscreteLti;

/// Karnopp velocity threshold below which a sliding contact re-sticks (mm/s).
const STICK_VEL_THRESHOLD: f64 = 0.1;
/// A contact keeps its friction state while its point moves less than this
/// between steps (mm).
const CONTACT_IDENT_RADIUS: f64 = 1.0;
/// Penetration beyond this is a simulation blow-up (mm).
const BLOWUP_PENETRATION: f64 = 5.0;
/// Angular resolution of the coarse contact scans.
const COARSE_SCAN: usize = 256;
/// Golden-section refinement iterations after the coarse scan.
const REFINE_ITERS: usize = 24;

/// Peg/plate dimensions (mm).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub peg_radius: f64,
    pub hole_radius: f64,
    pub peg_length: f64,
    pub hole_depth: f64,
    /// Hole center in the plate plane.
    pub hole_center: [f64; 2],
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            peg_radius: 14.9415,
            hole_radius: 15.0,
            peg_length: 40.0,
            hole_depth: 20.0,
            hole_center: [0.0, 0.0],
        }
    }
}

impl Geometry {
    /// Diametral clearance 2(r_h − r_p), mm.
    pub fn clearance(&self) -> f64 {
        2.0 * (self.hole_radius - self.peg_radius)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hole_radius <= self.peg_radius {
            return Err(Error::ConfigInvalid(
                "hole radius must exceed peg radius".into(),
            ));
        }
        let cl = self.clearance();
        if !(0.065..=0.169).contains(&cl) {
            return Err(Error::ConfigInvalid(format!(
                "clearance {cl:.4} mm outside the specified fit range [0.065, 0.169]"
            )));
        }
        if self.peg_length <= 0.0 || self.hole_depth <= 0.0 {
            return Err(Error::ConfigInvalid("geometry lengths must be > 0".into()));
        }
        Ok(())
    }
}

/// One contact material: spring stiffness plus stick-slip parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// N/mm.
    pub stiffness: f64,
    pub mu_static: f64,
    pub mu_kinetic: f64,
    /// Forced re-stick interval while sliding (s); sets the stick-slip
    /// sawtooth period.
    pub stick_dwell: f64,
}

impl Material {
    pub fn new(name: &str, stiffness: f64, mu_static: f64, mu_kinetic: f64) -> Self {
        Self {
            name: name.to_string(),
            stiffness,
            mu_static,
            mu_kinetic,
            stick_dwell: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "material {} stiffness must be > 0",
                self.name
            )));
        }
        if !(self.mu_static >= self.mu_kinetic && self.mu_kinetic >= 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "material {} needs μ_s ≥ μ_k ≥ 0",
                self.name
            )));
        }
        Ok(())
    }
}

/// The four bench materials with their contact stiffnesses.
pub fn standard_materials() -> Vec<Material> {
    vec![
        Material::new("rubber", 10.0, 1.2, 0.9),
        Material::new("abs", 50.0, 0.5, 0.4),
        Material::new("pine", 65.0, 0.6, 0.45),
        Material::new("aluminum", 100.0, 0.4, 0.3),
    ]
}

/// Sensor noise model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Per-axis force noise σ (N).
    pub sigma_force: f64,
    /// Per-axis position noise σ (mm).
    pub sigma_position: f64,
    /// Additional x-axis force noise σ (N), emulating the unreliable
    /// gripper-finger axis.
    pub x_force_extra: f64,
    pub x_extra_enabled: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_force: 0.1,
            sigma_position: 0.02,
            x_force_extra: 0.3,
            x_extra_enabled: true,
        }
    }
}

/// Which geometric feature produced a contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feature {
    /// Bottom rim pressing the plate top surface.
    RimOnPlane,
    /// Bottom rim pressing the hole bottom.
    RimOnBottom,
    /// Hole edge pressing the peg's lateral surface.
    EdgeOnSide,
    /// Hole edge pressing the peg's bottom face.
    EdgeUnderFace,
    /// Bottom rim pressing the hole wall.
    RimOnWall,
}

/// One active penalty contact.
#[derive(Debug, Clone)]
pub struct Contact {
    pub feature: Feature,
    /// Contact point in world coordinates (mm).
    pub point: [f64; 3],
    /// Unit normal along which the environment pushes the peg.
    pub normal: [f64; 3],
    /// mm.
    pub penetration: f64,
    pub stuck: bool,
    anchor: [f64; 3],
    slip_time: f64,
    prev_point: [f64; 3],
}

/// Coarse classification of the contact configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactMode {
    Free,
    PointOnPlane,
    RimPoint,
    TwoPoint,
    ThreePoint,
    Inserted,
}

/// Peg pose and contact set after a step.
#[derive(Debug, Clone)]
pub struct WorldState {
    /// Actual tip position (mm).
    pub position: [f64; 3],
    pub tilt_deg: f64,
    pub contact_mode: ContactMode,
    pub contacts: Vec<Contact>,
}

/// One delayed, noisy measurement.
#[derive(Debug, Clone, Copy)]
pub struct SensorFrame {
    /// Cartesian force on the peg (N).
    pub force: [f64; 3],
    /// The same force resolved in the tool/wrench frame.
    pub force_wrench: [f64; 3],
    /// Measured tip position (mm).
    pub position: [f64; 3],
    pub timestamp: f64,
}

/// Per-axis inner-loop filter state.
#[derive(Debug, Clone)]
struct AxisFilter {
    a: nalgebra::DMatrix<f64>,
    b: nalgebra::DMatrix<f64>,
    c: nalgebra::DMatrix<f64>,
    d: f64,
    x: nalgebra::DVector<f64>,
}

impl AxisFilter {
    /// Starts in steady state at `hold` so the trial doesn't open with a
    /// fictitious transient.
    fn new(inner: &DiscreteLti, hold: f64) -> Result<Self> {
        let (a, b, c, d) = inner.to_state_space();
        let n = a.nrows();
        let x = if n > 0 {
            let m = nalgebra::DMatrix::identity(n, n) - &a;
            m.lu()
                .solve(&(&b * hold))
                .ok_or_else(|| Error::ConfigInvalid("inner loop has a pole at z = 1".into()))?
                .column(0)
                .into_owned()
        } else {
            nalgebra::DVector::zeros(0)
        };
        Ok(Self {
            a,
            b,
            c,
            d: d[(0, 0)],
            x,
        })
    }

    fn step(&mut self, u: f64) -> f64 {
        let y = (&self.c * &self.x)[(0, 0)] + self.d * u;
        self.x = &self.a * &self.x + &self.b * u;
        y
    }
}

/// Candidate contact found by the geometric probes.
struct Candidate {
    feature: Feature,
    point: [f64; 3],
    normal: [f64; 3],
    penetration: f64,
}

/// The simulated environment for one trial.
#[derive(Debug, Clone)]
pub struct World {
    pub geometry: Geometry,
    pub material: Material,
    pub noise: NoiseSpec,
    filters: [AxisFilter; 3],
    sensor_delay: usize,
    force_buf: VecDeque<[f64; 3]>,
    pos_buf: VecDeque<[f64; 3]>,
    state: WorldState,
    dt: f64,
    time: f64,
}

impl World {
    pub fn new(
        geometry: Geometry,
        material: Material,
        inner_loop: &DiscreteLti,
        sensor_delay_steps: usize,
        noise: NoiseSpec,
        start: [f64; 3],
        start_tilt_deg: f64,
    ) -> Result<Self> {
        geometry.validate()?;
        material.validate()?;
        let filters = [
            AxisFilter::new(inner_loop, start[0])?,
            AxisFilter::new(inner_loop, start[1])?,
            AxisFilter::new(inner_loop, start[2])?,
        ];
        Ok(Self {
            geometry,
            material,
            noise,
            filters,
            sensor_delay: sensor_delay_steps,
            force_buf: VecDeque::new(),
            pos_buf: VecDeque::new(),
            state: WorldState {
                position: start,
                tilt_deg: start_tilt_deg,
                contact_mode: ContactMode::Free,
                contacts: Vec::new(),
            },
            dt: inner_loop.sample_period(),
            time: 0.0,
        })
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn sample_period(&self) -> f64 {
        self.dt
    }

    /// Advances one sample: tracks the commanded position through the inner
    /// loop, resolves contacts, returns the true Cartesian force on the peg.
    pub fn step(&mut self, commanded: [f64; 3], commanded_tilt_deg: f64) -> Result<[f64; 3]> {
        let actual = [
            self.filters[0].step(commanded[0]),
            self.filters[1].step(commanded[1]),
            self.filters[2].step(commanded[2]),
        ];
        let tilt = commanded_tilt_deg;
        let candidates = find_candidates(&self.geometry, actual, tilt);
        if let Some(worst) = candidates
            .iter()
            .map(|c| c.penetration)
            .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |v| v.max(p))))
        {
            if worst > BLOWUP_PENETRATION {
                return Err(Error::Blowup(worst));
            }
        }

        // carry friction state across steps by feature + proximity
        let old = std::mem::take(&mut self.state.contacts);
        let mut contacts: Vec<Contact> = Vec::with_capacity(candidates.len());
        for cand in candidates {
            let matched = old.iter().find(|o| {
                o.feature == cand.feature && dist3(o.point, cand.point) < CONTACT_IDENT_RADIUS
            });
            let mut ct = match matched {
                Some(o) => Contact {
                    feature: cand.feature,
                    point: cand.point,
                    normal: cand.normal,
                    penetration: cand.penetration,
                    stuck: o.stuck,
                    anchor: o.anchor,
                    slip_time: o.slip_time,
                    prev_point: o.point,
                },
                None => Contact {
                    feature: cand.feature,
                    point: cand.point,
                    normal: cand.normal,
                    penetration: cand.penetration,
                    stuck: true,
                    anchor: cand.point,
                    slip_time: 0.0,
                    prev_point: cand.point,
                },
            };
            ct.slip_time = if ct.stuck { 0.0 } else { ct.slip_time };
            contacts.push(ct);
        }

        let mut force = [0.0; 3];
        for ct in &mut contacts {
            let n_mag = self.material.stiffness * ct.penetration;
            for i in 0..3 {
                force[i] += n_mag * ct.normal[i];
            }
            let f_t = self.friction_force(ct, n_mag);
            for i in 0..3 {
                force[i] += f_t[i];
            }
        }

        self.state.position = actual;
        self.state.tilt_deg = tilt;
        self.state.contact_mode = classify_mode(&self.geometry, actual, tilt, &contacts);
        self.state.contacts = contacts;

        self.force_buf.push_back(force);
        self.pos_buf.push_back(actual);
        self.time += self.dt;
        Ok(force)
    }

    /// Tangential stick-slip force for one contact; updates its anchor and
    /// stick state.
    fn friction_force(&self, ct: &mut Contact, n_mag: f64) -> [f64; 3] {
        let k_tan = self.material.stiffness;
        let disp = sub3(ct.point, ct.anchor);
        let mut tang = reject3(disp, ct.normal);
        let len = norm3(tang);
        if ct.stuck {
            let spring = k_tan * len;
            if spring > self.material.mu_static * n_mag && len > 1e-12 {
                // breakaway: drop to kinetic level
                ct.stuck = false;
                ct.slip_time = 0.0;
                let unit = scale3(tang, 1.0 / len);
                let stretch = self.material.mu_kinetic * n_mag / k_tan;
                ct.anchor = sub3(ct.point, scale3(unit, stretch));
                return scale3(unit, -self.material.mu_kinetic * n_mag);
            }
            return scale3(tang, -k_tan);
        }
        // sliding: re-stick when slow or after the dwell elapses
        let step_vec = reject3(sub3(ct.point, ct.prev_point), ct.normal);
        let speed = norm3(step_vec) / self.dt;
        if speed < STICK_VEL_THRESHOLD {
            ct.stuck = true;
            ct.slip_time = 0.0;
            return scale3(tang, -k_tan);
        }
        ct.slip_time += self.dt;
        if ct.slip_time >= self.material.stick_dwell {
            ct.stuck = true;
            ct.slip_time = 0.0;
            ct.anchor = ct.point;
            return [0.0; 3];
        }
        if len < 1e-12 {
            return [0.0; 3];
        }
        let unit = scale3(tang, 1.0 / len);
        let stretch = self.material.mu_kinetic * n_mag / k_tan;
        ct.anchor = sub3(ct.point, scale3(unit, stretch));
        tang = scale3(unit, -self.material.mu_kinetic * n_mag);
        tang
    }

    /// Pops the delayed measurement and adds sensor noise. Call exactly once
    /// per [`World::step`].
    pub fn sense<R: Rng>(&mut self, rng: &mut R) -> SensorFrame {
        let (true_force, true_pos) = if self.force_buf.len() > self.sensor_delay {
            (
                self.force_buf.pop_front().unwrap(),
                self.pos_buf.pop_front().unwrap(),
            )
        } else {
            ([0.0; 3], *self.pos_buf.front().unwrap_or(&self.state.position))
        };
        let nf = Normal::new(0.0, self.noise.sigma_force.max(1e-300)).unwrap();
        let np = Normal::new(0.0, self.noise.sigma_position.max(1e-300)).unwrap();
        let mut force = [0.0; 3];
        let mut position = [0.0; 3];
        for i in 0..3 {
            force[i] = true_force[i]
                + if self.noise.sigma_force > 0.0 {
                    nf.sample(rng)
                } else {
                    0.0
                };
            position[i] = true_pos[i]
                + if self.noise.sigma_position > 0.0 {
                    np.sample(rng)
                } else {
                    0.0
                };
        }
        if self.noise.x_extra_enabled && self.noise.x_force_extra > 0.0 {
            let nx = Normal::new(0.0, self.noise.x_force_extra).unwrap();
            force[0] += nx.sample(rng);
        }
        SensorFrame {
            force,
            force_wrench: cartesian_to_wrench(self.state.tilt_deg, force),
            position,
            timestamp: self.time,
        }
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3(sub3(a, b))
}

/// Component of `v` perpendicular to unit vector `n`.
fn reject3(v: [f64; 3], n: [f64; 3]) -> [f64; 3] {
    let p = dot3(v, n);
    [v[0] - p * n[0], v[1] - p * n[1], v[2] - p * n[2]]
}

/// Maximizes `f` over the circle: coarse scan plus golden-section
/// refinement around the best cell. Cells where `f` is −∞ are invalid.
fn max_on_circle<F: Fn(f64) -> f64>(f: &F) -> (f64, f64) {
    let step = 2.0 * PI / COARSE_SCAN as f64;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..COARSE_SCAN {
        let v = f(i as f64 * step);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    if !best_v.is_finite() {
        return (0.0, best_v);
    }
    let center = best_i as f64 * step;
    golden_refine(f, center - step, center + step, best_v, center)
}

fn golden_refine<F: Fn(f64) -> f64>(
    f: &F,
    mut a: f64,
    mut b: f64,
    coarse_v: f64,
    coarse_x: f64,
) -> (f64, f64) {
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..REFINE_ITERS {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        }
    }
    let (mut xb, mut vb) = (coarse_x, coarse_v);
    if f1 > vb {
        xb = x1;
        vb = f1;
    }
    if f2 > vb {
        xb = x2;
        vb = f2;
    }
    (xb, vb)
}

/// Rim point of the bottom face at angle `phi`, given tip `p` and tilt.
fn rim_point(g: &Geometry, p: [f64; 3], s: f64, c: f64, phi: f64) -> [f64; 3] {
    let rp = g.peg_radius;
    [
        p[0] + rp * phi.cos(),
        p[1] + rp * c * (1.0 + phi.sin()),
        p[2] + rp * s * (1.0 + phi.sin()),
    ]
}

/// All penetrating contact candidates at a pose, deepest three kept.
fn find_candidates(g: &Geometry, p: [f64; 3], tilt_deg: f64) -> Vec<Candidate> {
    let th = tilt_deg.to_radians();
    let (s, c) = th.sin_cos();
    let (xh, yh) = (g.hole_center[0], g.hole_center[1]);
    let (rp, rh, dh, lp) = (g.peg_radius, g.hole_radius, g.hole_depth, g.peg_length);
    let mut out: Vec<Candidate> = Vec::new();

    if s < 1e-9 {
        flat_candidates(g, p, &mut out);
        finish_candidates(&mut out);
        return out;
    }

    // bottom-face center and unit axis
    let cb = [p[0], p[1] + rp * c, p[2] + rp * s];
    let axis = [0.0, -s, c];

    // rim vs plate top (outside the hole) and hole bottom (inside)
    let pen_plane = |phi: f64| {
        let r = rim_point(g, p, s, c, phi);
        let inside = (r[0] - xh).powi(2) + (r[1] - yh).powi(2) < rh * rh;
        if inside {
            f64::NEG_INFINITY
        } else {
            -r[2]
        }
    };
    let (phi_a, pen_a) = max_on_circle(&pen_plane);
    if pen_a > 0.0 {
        let r = rim_point(g, p, s, c, phi_a);
        out.push(Candidate {
            feature: Feature::RimOnPlane,
            point: [r[0], r[1], 0.0],
            normal: [0.0, 0.0, 1.0],
            penetration: pen_a,
        });
    }
    let pen_bottom = |phi: f64| {
        let r = rim_point(g, p, s, c, phi);
        let inside = (r[0] - xh).powi(2) + (r[1] - yh).powi(2) < rh * rh;
        if inside {
            -dh - r[2]
        } else {
            f64::NEG_INFINITY
        }
    };
    let (phi_e, pen_e) = max_on_circle(&pen_bottom);
    if pen_e > 0.0 {
        let r = rim_point(g, p, s, c, phi_e);
        out.push(Candidate {
            feature: Feature::RimOnBottom,
            point: [r[0], r[1], -dh],
            normal: [0.0, 0.0, 1.0],
            penetration: pen_e,
        });
    }

    // hole edge circle vs peg body: minimal-translation penetration, either
    // radial (edge into the lateral surface) or axial (edge under the face)
    let edge_pen = |psi: f64| {
        let e = [xh + rh * psi.cos(), yh + rh * psi.sin(), 0.0];
        let w = sub3(e, cb);
        let tpar = dot3(w, axis);
        if !(0.0..=lp).contains(&tpar) {
            return f64::NEG_INFINITY;
        }
        let perp = [
            w[0] - tpar * axis[0],
            w[1] - tpar * axis[1],
            w[2] - tpar * axis[2],
        ];
        let dist = norm3(perp);
        if dist >= rp {
            return f64::NEG_INFINITY;
        }
        (rp - dist).min(tpar)
    };
    let edge_candidate = |psi: f64, pen: f64, out: &mut Vec<Candidate>| {
        if pen <= 0.0 {
            return;
        }
        let e = [xh + rh * psi.cos(), yh + rh * psi.sin(), 0.0];
        let w = sub3(e, cb);
        let tpar = dot3(w, axis);
        let perp = [
            w[0] - tpar * axis[0],
            w[1] - tpar * axis[1],
            w[2] - tpar * axis[2],
        ];
        let dist = norm3(perp);
        if rp - dist <= tpar || dist < 1e-9 {
            let n = if dist > 1e-9 {
                scale3(perp, -1.0 / dist)
            } else {
                [0.0, 0.0, 1.0]
            };
            out.push(Candidate {
                feature: Feature::EdgeOnSide,
                point: e,
                normal: n,
                penetration: pen,
            });
        } else {
            out.push(Candidate {
                feature: Feature::EdgeUnderFace,
                point: e,
                normal: axis,
                penetration: pen,
            });
        }
    };
    // the edge can wedge the peg at two places (near and far side), so keep
    // the two best well-separated local maxima
    let step = 2.0 * PI / COARSE_SCAN as f64;
    let vals: Vec<f64> = (0..COARSE_SCAN).map(|i| edge_pen(i as f64 * step)).collect();
    let mut i1 = 0;
    let mut v1 = f64::NEG_INFINITY;
    for (i, &v) in vals.iter().enumerate() {
        if v > v1 {
            v1 = v;
            i1 = i;
        }
    }
    if v1.is_finite() {
        let c1 = i1 as f64 * step;
        let (psi1, pen1) = golden_refine(&edge_pen, c1 - step, c1 + step, v1, c1);
        edge_candidate(psi1, pen1, &mut out);
        let min_sep = COARSE_SCAN / 4;
        let mut i2 = None;
        let mut v2 = f64::NEG_INFINITY;
        for (i, &v) in vals.iter().enumerate() {
            let d = (i as isize - i1 as isize).unsigned_abs();
            let sep = d.min(COARSE_SCAN - d);
            if sep >= min_sep && v > v2 {
                v2 = v;
                i2 = Some(i);
            }
        }
        if let Some(i2) = i2 {
            if v2.is_finite() {
                let c2 = i2 as f64 * step;
                let (psi2, pen2) = golden_refine(&edge_pen, c2 - step, c2 + step, v2, c2);
                edge_candidate(psi2, pen2, &mut out);
            }
        }
    }

    // rim vs hole wall (below the surface, radial exit shortest)
    let wall_pen = |phi: f64| {
        let r = rim_point(g, p, s, c, phi);
        if r[2] >= 0.0 || r[2] <= -dh {
            return f64::NEG_INFINITY;
        }
        let rho = ((r[0] - xh).powi(2) + (r[1] - yh).powi(2)).sqrt();
        let pen = rho - rh;
        if pen <= 0.0 || pen >= (-r[2]).min(r[2] + dh) {
            return f64::NEG_INFINITY;
        }
        pen
    };
    let (phi_w, pen_w) = max_on_circle(&wall_pen);
    if pen_w > 0.0 && pen_w.is_finite() {
        let r = rim_point(g, p, s, c, phi_w);
        let rho = ((r[0] - xh).powi(2) + (r[1] - yh).powi(2)).sqrt();
        let u = [(r[0] - xh) / rho, (r[1] - yh) / rho];
        out.push(Candidate {
            feature: Feature::RimOnWall,
            point: [xh + rh * u[0], yh + rh * u[1], r[2]],
            normal: [-u[0], -u[1], 0.0],
            penetration: pen_w,
        });
    }

    finish_candidates(&mut out);
    out
}

/// Zero-tilt contacts: flat face on the plane, the hole bottom, or (when the
/// face fits in the bore) the wall.
fn flat_candidates(g: &Geometry, p: [f64; 3], out: &mut Vec<Candidate>) {
    let (xh, yh) = (g.hole_center[0], g.hole_center[1]);
    let center = [p[0], p[1] + g.peg_radius];
    let off = ((center[0] - xh).powi(2) + (center[1] - yh).powi(2)).sqrt();
    // radial interference against the bore wall; ≤ 0 when the face fits
    let pen_wall = off + g.peg_radius - g.hole_radius;
    if p[2] < 0.0 && pen_wall > 0.0 {
        if pen_wall < -p[2] && off > 1e-12 {
            // squeezed in the bore slightly off-center: wall pushes it back
            let u = [(center[0] - xh) / off, (center[1] - yh) / off];
            out.push(Candidate {
                feature: Feature::RimOnWall,
                point: [
                    xh + g.hole_radius * u[0],
                    yh + g.hole_radius * u[1],
                    p[2].max(-g.hole_depth),
                ],
                normal: [-u[0], -u[1], 0.0],
                penetration: pen_wall,
            });
        } else {
            // resting flat on the plate (possibly straddling the hole edge)
            out.push(Candidate {
                feature: Feature::RimOnPlane,
                point: [center[0], center[1], 0.0],
                normal: [0.0, 0.0, 1.0],
                penetration: -p[2],
            });
        }
    }
    if p[2] + g.hole_depth < 0.0 {
        out.push(Candidate {
            feature: Feature::RimOnBottom,
            point: [center[0], center[1], -g.hole_depth],
            normal: [0.0, 0.0, 1.0],
            penetration: -(p[2] + g.hole_depth),
        });
    }
}

/// Keeps the three deepest candidates, deterministically ordered.
fn finish_candidates(out: &mut Vec<Candidate>) {
    out.sort_by(|a, b| b.penetration.total_cmp(&a.penetration));
    out.truncate(3);
}

fn classify_mode(
    g: &Geometry,
    p: [f64; 3],
    tilt_deg: f64,
    contacts: &[Contact],
) -> ContactMode {
    if contacts.is_empty() {
        return ContactMode::Free;
    }
    // inserted: near-vertical, bottom face below the surface, rim wholly
    // inside the bore (which bounds the axis offset by the radial clearance)
    if tilt_deg.abs() < 2.0 {
        let th = tilt_deg.to_radians();
        let (s, c) = th.sin_cos();
        let cb_z = p[2] + g.peg_radius * s;
        if cb_z < -1.0 {
            let mut all_inside = true;
            for i in 0..64 {
                let r = rim_point(g, p, s, c, 2.0 * PI * i as f64 / 64.0);
                let rho =
                    ((r[0] - g.hole_center[0]).powi(2) + (r[1] - g.hole_center[1]).powi(2)).sqrt();
                if rho > g.hole_radius {
                    all_inside = false;
                    break;
                }
            }
            if all_inside {
                return ContactMode::Inserted;
            }
        }
    }
    match contacts.len() {
        1 => match contacts[0].feature {
            Feature::RimOnPlane | Feature::RimOnBottom | Feature::EdgeUnderFace => {
                ContactMode::PointOnPlane
            }
            _ => ContactMode::RimPoint,
        },
        2 => ContactMode::TwoPoint,
        _ => ContactMode::ThreePoint,
    }
}

/// Branch that produced a depth-profile value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthBranch {
    /// Flat-face special case at zero tilt.
    Flat,
    /// Rim point (outside the hole) lands on the plate surface.
    Plane,
    /// Rim point (inside the hole) lands on the hole bottom.
    Bottom,
    /// Lateral surface lands on the hole edge.
    Edge,
}

/// Tip height at first touch when the peg descends vertically with its tip
/// over `(x, y)`: 0 on the plain plate, negative (a dip) near the hole.
pub fn depth_profile(g: &Geometry, tilt_deg: f64, x: f64, y: f64) -> f64 {
    depth_profile_detailed(g, tilt_deg, x, y).0
}

/// [`depth_profile`] plus the branch that won (the profile is Lipschitz
/// within a branch but can kink where branches exchange).
pub fn depth_profile_detailed(g: &Geometry, tilt_deg: f64, x: f64, y: f64) -> (f64, DepthBranch) {
    let th = tilt_deg.to_radians();
    let (s, c) = th.sin_cos();
    let (xh, yh) = (g.hole_center[0], g.hole_center[1]);
    let (rp, rh, dh, lp) = (g.peg_radius, g.hole_radius, g.hole_depth, g.peg_length);
    if s < 1e-9 {
        let off = ((x - xh).powi(2) + (y + rp - yh).powi(2)).sqrt();
        return if off + rp < rh {
            (-dh, DepthBranch::Flat)
        } else {
            (0.0, DepthBranch::Flat)
        };
    }
    let p0 = [x, y, 0.0];
    let plane = |phi: f64| {
        let r = rim_point(g, p0, s, c, phi);
        let inside = (r[0] - xh).powi(2) + (r[1] - yh).powi(2) < rh * rh;
        if inside {
            f64::NEG_INFINITY
        } else {
            -(r[2])
        }
    };
    let bottom = |phi: f64| {
        let r = rim_point(g, p0, s, c, phi);
        let inside = (r[0] - xh).powi(2) + (r[1] - yh).powi(2) < rh * rh;
        if inside {
            -dh - r[2]
        } else {
            f64::NEG_INFINITY
        }
    };
    // descending edge touch: tip z at which the lateral surface meets the
    // hole edge at angle psi
    let edge = |psi: f64| {
        let q1 = rh * psi.cos() + xh - x;
        let q2 = rh * psi.sin() + yh - (y + rp * c);
        let disc = rp * rp - q1 * q1;
        if disc < 0.0 {
            return f64::NEG_INFINITY;
        }
        let u = (-c * q2 - disc.sqrt()) / s;
        let tpar = -s * q2 + c * u;
        if !(0.0..=lp).contains(&tpar) {
            return f64::NEG_INFINITY;
        }
        -rp * s - u
    };
    let (_, v_plane) = max_on_circle(&plane);
    let (_, v_bottom) = max_on_circle(&bottom);
    let (_, v_edge) = max_on_circle(&edge);
    let mut best_v = v_plane;
    let mut best_b = DepthBranch::Plane;
    if v_bottom > best_v {
        best_v = v_bottom;
        best_b = DepthBranch::Bottom;
    }
    if v_edge > best_v {
        best_v = v_edge;
        best_b = DepthBranch::Edge;
    }
    if best_v.is_finite() {
        (best_v.min(0.0), best_b)
    } else {
        (0.0, DepthBranch::Plane)
    }
}
