//! Discrete-time LTI systems: representation, composition, simulation,
//! stability and frequency analysis.
//!
//! Systems are SISO and share a single sample period (the 125 Hz control
//! rate); combining systems with different periods is an error, not a
//! resample. Two representations are kept: dense state-space matrices
//! `(A, B, C, D)` and raw FIR taps. FIR systems convert to an equivalent
//! nilpotent state-space realization on demand; simulation and impulse
//! responses use the taps directly.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Internal representation of a [`DiscreteLti`].
#[derive(Debug, Clone, PartialEq)]
pub enum Repr {
    /// Dense state-space matrices; `a` is n×n, `b` n×1, `c` 1×n, `d` 1×1.
    StateSpace {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    },
    /// FIR taps `h[0..L]`: y[k] = Σ h[i]·u[k−i].
    Fir(Vec<f64>),
}

/// A discrete-time SISO LTI system with a fixed sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLti {
    repr: Repr,
    sample_period: f64,
}

/// Frequency response samples over a grid of angular frequencies (rad/s).
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    pub grid: Vec<f64>,
    pub values: Vec<Complex<f64>>,
}

impl DiscreteLti {
    /// Builds a state-space system, validating matrix dimensions.
    pub fn state_space(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        sample_period: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() != 1 || c.nrows() != 1 || c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "B must be {n}x1 and C 1x{n}, got B {}x{}, C {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if d.nrows() != 1 || d.ncols() != 1 {
            return Err(Error::DimensionMismatch("D must be 1x1".into()));
        }
        Ok(Self {
            repr: Repr::StateSpace { a, b, c, d },
            sample_period,
        })
    }

    /// Builds an FIR system from its taps (at least one).
    pub fn fir(taps: Vec<f64>, sample_period: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::DimensionMismatch("FIR needs at least one tap".into()));
        }
        Ok(Self {
            repr: Repr::Fir(taps),
            sample_period,
        })
    }

    /// A static gain (no state).
    pub fn gain(g: f64, sample_period: f64) -> Self {
        Self {
            repr: Repr::Fir(vec![g]),
            sample_period,
        }
    }

    /// A pure delay of `steps` samples (unity gain).
    pub fn delay(steps: usize, sample_period: f64) -> Self {
        let mut taps = vec![0.0; steps + 1];
        taps[steps] = 1.0;
        Self {
            repr: Repr::Fir(taps),
            sample_period,
        }
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    /// Number of states of the state-space realization.
    pub fn order(&self) -> usize {
        match &self.repr {
            Repr::StateSpace { a, .. } => a.nrows(),
            Repr::Fir(taps) => taps.len() - 1,
        }
    }

    /// State-space matrices `(A, B, C, D)`, converting FIR to the shift
    /// realization (states = delayed inputs) when needed.
    pub fn to_state_space(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        match &self.repr {
            Repr::StateSpace { a, b, c, d } => (a.clone(), b.clone(), c.clone(), d.clone()),
            Repr::Fir(taps) => {
                let n = taps.len() - 1;
                let mut a = DMatrix::zeros(n, n);
                for i in 1..n {
                    a[(i, i - 1)] = 1.0;
                }
                let mut b = DMatrix::zeros(n, 1);
                if n > 0 {
                    b[(0, 0)] = 1.0;
                }
                let mut c = DMatrix::zeros(1, n);
                for i in 0..n {
                    c[(0, i)] = taps[i + 1];
                }
                let d = DMatrix::from_element(1, 1, taps[0]);
                (a, b, c, d)
            }
        }
    }

    fn check_period(&self, other: &Self) -> Result<()> {
        if (self.sample_period - other.sample_period).abs() > 1e-15 {
            return Err(Error::SamplePeriodMismatch(
                self.sample_period,
                other.sample_period,
            ));
        }
        Ok(())
    }

    /// Simulates the zero-initial-state response to `input`.
    pub fn simulate(&self, input: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Fir(taps) => {
                let mut out = vec![0.0; input.len()];
                for (k, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (i, t) in taps.iter().enumerate() {
                        if i > k {
                            break;
                        }
                        acc += t * input[k - i];
                    }
                    *o = acc;
                }
                out
            }
            Repr::StateSpace { a, b, c, d } => {
                let n = a.nrows();
                let mut x = DVector::zeros(n);
                let mut out = vec![0.0; input.len()];
                for (k, &u) in input.iter().enumerate() {
                    out[k] = (c * &x)[(0, 0)] + d[(0, 0)] * u;
                    x = a * &x + b.column(0) * u;
                }
                out
            }
        }
    }

    /// First `n` samples of the impulse response.
    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        if let Repr::Fir(taps) = &self.repr {
            let mut h = vec![0.0; n];
            for i in 0..n.min(taps.len()) {
                h[i] = taps[i];
            }
            return h;
        }
        let mut input = vec![0.0; n];
        if n > 0 {
            input[0] = 1.0;
        }
        self.simulate(&input)
    }

    /// Series composition: the output of `self` feeds `next`.
    pub fn series(&self, next: &Self) -> Result<Self> {
        self.check_period(next)?;
        // FIR ∘ FIR stays FIR (polynomial product).
        if let (Repr::Fir(t1), Repr::Fir(t2)) = (&self.repr, &next.repr) {
            let mut taps = vec![0.0; t1.len() + t2.len() - 1];
            for (i, a) in t1.iter().enumerate() {
                for (j, b) in t2.iter().enumerate() {
                    taps[i + j] += a * b;
                }
            }
            return Self::fir(taps, self.sample_period);
        }
        let (a1, b1, c1, d1) = self.to_state_space();
        let (a2, b2, c2, d2) = next.to_state_space();
        let (n1, n2) = (a1.nrows(), a2.nrows());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&a1);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&a2);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&b2 * &c1));
        let mut b = DMatrix::zeros(n1 + n2, 1);
        b.view_mut((0, 0), (n1, 1)).copy_from(&b1);
        b.view_mut((n1, 0), (n2, 1)).copy_from(&(&b2 * d1[(0, 0)]));
        let mut c = DMatrix::zeros(1, n1 + n2);
        c.view_mut((0, 0), (1, n1)).copy_from(&(&c1 * d2[(0, 0)]));
        c.view_mut((0, n1), (1, n2)).copy_from(&c2);
        let d = DMatrix::from_element(1, 1, d1[(0, 0)] * d2[(0, 0)]);
        Self::state_space(a, b, c, d, self.sample_period)
    }

    /// Parallel sum: `self + other` acting on the same input.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_period(other)?;
        if let (Repr::Fir(t1), Repr::Fir(t2)) = (&self.repr, &other.repr) {
            let mut taps = vec![0.0; t1.len().max(t2.len())];
            for (i, a) in t1.iter().enumerate() {
                taps[i] += a;
            }
            for (i, b) in t2.iter().enumerate() {
                taps[i] += b;
            }
            return Self::fir(taps, self.sample_period);
        }
        let (a1, b1, c1, d1) = self.to_state_space();
        let (a2, b2, c2, d2) = other.to_state_space();
        let (n1, n2) = (a1.nrows(), a2.nrows());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&a1);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&a2);
        let mut b = DMatrix::zeros(n1 + n2, 1);
        b.view_mut((0, 0), (n1, 1)).copy_from(&b1);
        b.view_mut((n1, 0), (n2, 1)).copy_from(&b2);
        let mut c = DMatrix::zeros(1, n1 + n2);
        c.view_mut((0, 0), (1, n1)).copy_from(&c1);
        c.view_mut((0, n1), (1, n2)).copy_from(&c2);
        let d = DMatrix::from_element(1, 1, d1[(0, 0)] + d2[(0, 0)]);
        Self::state_space(a, b, c, d, self.sample_period)
    }

    /// Output scaling by a constant.
    pub fn scale(&self, g: f64) -> Self {
        match &self.repr {
            Repr::Fir(taps) => Self {
                repr: Repr::Fir(taps.iter().map(|t| g * t).collect()),
                sample_period: self.sample_period,
            },
            Repr::StateSpace { a, b, c, d } => Self {
                repr: Repr::StateSpace {
                    a: a.clone(),
                    b: b.clone(),
                    c: c * g,
                    d: d * g,
                },
                sample_period: self.sample_period,
            },
        }
    }

    /// Unity negative feedback closure: returns the map `u → y` where
    /// `y = loop(u − y)`.
    pub fn feedback(&self) -> Result<Self> {
        let (a, b, c, d) = self.to_state_space();
        let den = 1.0 + d[(0, 0)];
        if den.abs() < 1e-12 {
            return Err(Error::IllPosedLoop(den.abs()));
        }
        let s = 1.0 / den;
        // y = s(Cx + Du); x' = (A − sBC)x + B(1 − sD)u
        let bc = &b * &c;
        let af = &a - bc * s;
        let bf = &b * (1.0 - s * d[(0, 0)]);
        let cf = &c * s;
        let df = DMatrix::from_element(1, 1, s * d[(0, 0)]);
        Self::state_space(af, bf, cf, df, self.sample_period)
    }

    /// Positive feedback through a strictly proper path: returns `u → v`
    /// where `v = self(u + back·v)`. Used to realize controllers of the form
    /// `Q(I − G·Q)⁻¹` with `back = G` strictly proper (no algebraic loop).
    pub fn feedback_through(&self, back: &Self) -> Result<Self> {
        self.check_period(back)?;
        let (af, bf, cf, df) = self.to_state_space();
        let (ag, bg, cg, dg) = back.to_state_space();
        if dg[(0, 0)].abs() > 1e-14 {
            return Err(Error::IllPosedLoop(dg[(0, 0)].abs()));
        }
        let (nf, ng) = (af.nrows(), ag.nrows());
        let df0 = df[(0, 0)];
        let mut a = DMatrix::zeros(nf + ng, nf + ng);
        a.view_mut((0, 0), (nf, nf)).copy_from(&af);
        a.view_mut((0, nf), (nf, ng)).copy_from(&(&bf * &cg));
        a.view_mut((nf, 0), (ng, nf)).copy_from(&(&bg * &cf));
        a.view_mut((nf, nf), (ng, ng)).copy_from(&(&ag + &bg * df0 * &cg));
        let mut b = DMatrix::zeros(nf + ng, 1);
        b.view_mut((0, 0), (nf, 1)).copy_from(&bf);
        b.view_mut((nf, 0), (ng, 1)).copy_from(&(&bg * df0));
        let mut c = DMatrix::zeros(1, nf + ng);
        c.view_mut((0, 0), (1, nf)).copy_from(&cf);
        c.view_mut((0, nf), (1, ng)).copy_from(&(&cg * df0));
        let d = DMatrix::from_element(1, 1, df0);
        Self::state_space(a, b, c, d, self.sample_period)
    }

    /// Largest eigenvalue magnitude of the state matrix. The system is
    /// internally stable iff the result is < 1. Stateless systems return 0.
    pub fn spectral_radius(&self) -> Result<f64> {
        let (a, _, _, _) = self.to_state_space();
        if a.nrows() == 0 {
            return Ok(0.0);
        }
        let schur = nalgebra::Schur::try_new(a, 1e-14, 10_000).ok_or(Error::EigenNonConvergence)?;
        let eig = schur
            .complex_eigenvalues();
        Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    pub fn is_stable(&self) -> Result<bool> {
        Ok(self.spectral_radius()? < 1.0)
    }

    /// Frequency response `C(e^{jωT}I − A)⁻¹B + D` over `grid` (rad/s).
    /// The grid must be strictly increasing and end at or below Nyquist.
    pub fn freq_response(&self, grid: &[f64]) -> Result<FrequencyResponse> {
        let nyq = std::f64::consts::PI / self.sample_period;
        for w in grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::DimensionMismatch(
                    "frequency grid must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = grid.last() {
            if last > nyq * (1.0 + 1e-12) {
                return Err(Error::DimensionMismatch(format!(
                    "grid exceeds Nyquist {nyq:.3} rad/s"
                )));
            }
        }
        let mut values = Vec::with_capacity(grid.len());
        match &self.repr {
            Repr::Fir(taps) => {
                for &w in grid {
                    let th = w * self.sample_period;
                    let mut acc = Complex::new(0.0, 0.0);
                    for (m, &t) in taps.iter().enumerate() {
                        acc += Complex::from_polar(t, -(m as f64) * th);
                    }
                    values.push(acc);
                }
            }
            Repr::StateSpace { a, b, c, d } => {
                let n = a.nrows();
                let ac = a.map(|v| Complex::new(v, 0.0));
                let bc = b.map(|v| Complex::new(v, 0.0));
                let cc = c.map(|v| Complex::new(v, 0.0));
                let d0 = Complex::new(d[(0, 0)], 0.0);
                for &w in grid {
                    let z = Complex::from_polar(1.0, w * self.sample_period);
                    let m = DMatrix::from_diagonal_element(n, n, z) - &ac;
                    let lu = m.lu();
                    let x = lu
                        .solve(&bc)
                        .ok_or_else(|| Error::DimensionMismatch("singular zI−A on grid".into()))?;
                    values.push((&cc * &x)[(0, 0)] + d0);
                }
            }
        }
        Ok(FrequencyResponse {
            grid: grid.to_vec(),
            values,
        })
    }

    /// Steady-state gain `C(I − A)⁻¹B + D` (errors if the system has a pole
    /// at z = 1).
    pub fn dc_gain(&self) -> Result<f64> {
        match &self.repr {
            Repr::Fir(taps) => Ok(taps.iter().sum()),
            Repr::StateSpace { a, b, c, d } => {
                let n = a.nrows();
                let m = DMatrix::identity(n, n) - a;
                let lu = m.lu();
                let x = lu
                    .solve(b)
                    .ok_or_else(|| Error::DimensionMismatch("pole at z = 1 in dc_gain".into()))?;
                Ok((c * x)[(0, 0)] + d[(0, 0)])
            }
        }
    }
}

/// Matrix exponential by scaling-and-squaring with a degree-6 Padé
/// approximant (sufficient for the small, well-scaled matrices used in
/// zero-order-hold discretization).
fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    // infinity norm: max over rows of the absolute row sums
    let norm = m.abs().column_sum().max();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);
    // Padé(6,6): N(a)·D(a)⁻¹ with coefficients c_k = (12−k)!·6! / (12!·k!·(6−k)!)
    let c = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let mut term = DMatrix::identity(n, n);
    let mut num = DMatrix::identity(n, n) * c[0];
    let mut den = DMatrix::identity(n, n) * c[0];
    for (k, &ck) in c.iter().enumerate().skip(1) {
        term = &term * &a;
        num += &term * ck;
        if k % 2 == 0 {
            den += &term * ck;
        } else {
            den -= &term * ck;
        }
    }
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Zero-order-hold discretization of a continuous second-order unity-gain
/// low-pass (natural frequency `fn_hz` in Hz, damping `zeta`), sampled at
/// `sample_period`. Returns the two-state discrete system.
pub fn zoh_second_order(fn_hz: f64, zeta: f64, sample_period: f64) -> Result<DiscreteLti> {
    let wn = 2.0 * std::f64::consts::PI * fn_hz;
    // Continuous: x1' = x2, x2' = −wn²x1 − 2ζwn x2 + wn²u; y = x1.
    let mut aug = DMatrix::zeros(3, 3);
    aug[(0, 1)] = 1.0;
    aug[(1, 0)] = -wn * wn;
    aug[(1, 1)] = -2.0 * zeta * wn;
    aug[(1, 2)] = wn * wn;
    let e = expm(&(aug * sample_period));
    let a = e.view((0, 0), (2, 2)).into_owned();
    let b = e.view((0, 2), (2, 1)).into_owned();
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let d = DMatrix::zeros(1, 1);
    DiscreteLti::state_space(a, b, c, d, sample_period)
}
