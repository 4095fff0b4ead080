//! Dense interior-point linear-program solver.
//!
//! Solves `min cᵀx  s.t.  A x ≤ b,  E x = e` with free variables, using a
//! Mehrotra predictor-corrector method on the slack form `A x + s = b,
//! s ≥ 0`. Each Newton step reduces to normal equations `M = Aᵀ·diag(y/s)·A`
//! solved by dense Cholesky; the handful of equality rows are folded in by
//! block elimination. Constraint rows carry a family tag so that an
//! infeasible program can report which constraint family blocks it.
//!
//! The solver is deterministic: fixed-order accumulation, no randomization,
//! single-threaded.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// One sparse constraint row `Σ vals[i]·x[cols[i]] (≤ or =) rhs`.
#[derive(Debug, Clone)]
struct Row {
    cols: Vec<u32>,
    vals: Vec<f64>,
    rhs: f64,
    family: u16,
}

/// A linear program under construction.
#[derive(Debug, Clone)]
pub struct LpProblem {
    num_vars: usize,
    objective: Vec<f64>,
    ineq: Vec<Row>,
    eq: Vec<Row>,
    families: Vec<String>,
}

/// Solver output: the minimizer, its cost, and iteration count.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    /// Final worst-case relative residual (primal/dual/gap).
    pub residual: f64,
}

impl LpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            ineq: Vec::new(),
            eq: Vec::new(),
            families: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    /// Registers a constraint family name, returning its tag for `add_*`.
    pub fn family(&mut self, name: &str) -> u16 {
        if let Some(i) = self.families.iter().position(|f| f == name) {
            return i as u16;
        }
        self.families.push(name.to_string());
        (self.families.len() - 1) as u16
    }

    /// Adds `Σ coeffs·x ≤ rhs` to the given family.
    pub fn add_le(&mut self, family: u16, cols: &[usize], vals: &[f64], rhs: f64) {
        debug_assert_eq!(cols.len(), vals.len());
        self.ineq.push(Row {
            cols: cols.iter().map(|&c| c as u32).collect(),
            vals: vals.to_vec(),
            rhs,
            family,
        });
    }

    /// Adds `Σ coeffs·x = rhs` to the given family.
    pub fn add_eq(&mut self, family: u16, cols: &[usize], vals: &[f64], rhs: f64) {
        debug_assert_eq!(cols.len(), vals.len());
        self.eq.push(Row {
            cols: cols.iter().map(|&c| c as u32).collect(),
            vals: vals.to_vec(),
            rhs,
            family,
        });
    }

    pub fn num_constraints(&self) -> (usize, usize) {
        (self.ineq.len(), self.eq.len())
    }

    fn row_dot(row: &Row, x: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for (c, v) in row.cols.iter().zip(&row.vals) {
            acc += v * x[*c as usize];
        }
        acc
    }

    /// y ← y + w·a_i scattered over the row support.
    fn row_axpy(row: &Row, w: f64, y: &mut DVector<f64>) {
        for (c, v) in row.cols.iter().zip(&row.vals) {
            y[*c as usize] += w * v;
        }
    }

    /// Solves the program. `max_iter` around 60 is plenty for the sizes here.
    pub fn solve(&self, max_iter: usize, tol: f64) -> Result<LpSolution> {
        let n = self.num_vars;
        let m = self.ineq.len();
        let p = self.eq.len();
        if m == 0 {
            return Err(Error::LpFailed("no inequality constraints".into()));
        }
        let c = DVector::from_column_slice(&self.objective);

        let mut x = DVector::zeros(n);
        let mut s = DVector::from_fn(m, |i, _| {
            (self.ineq[i].rhs - Self::row_dot(&self.ineq[i], &x)).max(1.0)
        });
        let mut y = DVector::from_element(m, 1.0);
        let mut w: DVector<f64> = DVector::zeros(p);

        let scale = 1.0
            + self
                .ineq
                .iter()
                .map(|r| r.rhs.abs())
                .chain(self.eq.iter().map(|r| r.rhs.abs()))
                .chain(self.objective.iter().map(|v| v.abs()))
                .fold(0.0, f64::max);

        let mut best: Option<(f64, DVector<f64>, usize)> = None;
        let mut stall = 0usize;
        let mut last_merit = f64::INFINITY;

        for it in 0..max_iter {
            // residuals
            let mut rp = DVector::zeros(m);
            for (i, row) in self.ineq.iter().enumerate() {
                rp[i] = row.rhs - Self::row_dot(row, &x) - s[i];
            }
            let mut rd = -&c;
            for (i, row) in self.ineq.iter().enumerate() {
                Self::row_axpy(row, -y[i], &mut rd);
            }
            for (i, row) in self.eq.iter().enumerate() {
                Self::row_axpy(row, -w[i], &mut rd);
            }
            let mut re = DVector::zeros(p);
            for (i, row) in self.eq.iter().enumerate() {
                re[i] = row.rhs - Self::row_dot(row, &x);
            }

            let gap = s.dot(&y);
            let obj = c.dot(&x);
            let pinf = rp.amax() / scale;
            let dinf = rd.amax() / scale;
            let einf = if p > 0 { re.amax() / scale } else { 0.0 };
            let relgap = gap / (1.0 + obj.abs());
            let merit = pinf.max(dinf).max(einf).max(relgap);

            if best.as_ref().map_or(true, |(bm, _, _)| merit < *bm) {
                best = Some((merit, x.clone(), it));
            }
            if merit < tol {
                return Ok(LpSolution {
                    cost: obj,
                    x: x.iter().copied().collect(),
                    iterations: it,
                    residual: merit,
                });
            }
            // diverging or stuck: long stretches without progress on a
            // still-infeasible iterate signal an infeasible program
            if merit > 0.999 * last_merit {
                stall += 1;
            } else {
                stall = 0;
            }
            last_merit = merit;
            if stall > 12 && pinf > 1e-6 {
                return Err(Error::LpFailed(format!(
                    "no progress after {it} iterations; binding family: {}",
                    self.blocking_family(&y)
                )));
            }

            let mu = gap / m as f64;
            let theta = DVector::from_fn(m, |i, _| y[i] / s[i]);

            // normal matrix M = Aᵀ diag(theta) A, dense with symmetric fill
            let mut mmat = DMatrix::zeros(n, n);
            for (i, row) in self.ineq.iter().enumerate() {
                let th = theta[i];
                for (a, (&ca, &va)) in row.cols.iter().zip(&row.vals).enumerate() {
                    let wa = th * va;
                    for (&cb, &vb) in row.cols.iter().zip(&row.vals).skip(a) {
                        mmat[(ca as usize, cb as usize)] += wa * vb;
                    }
                }
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    mmat[(j, i)] = mmat[(i, j)];
                }
            }

            let mut chol: Option<Cholesky<f64, nalgebra::Dyn>> = None;
            for reg in [0.0, 1e-12, 1e-10, 1e-8, 1e-6] {
                let mut mreg = mmat.clone();
                if reg > 0.0 {
                    for i in 0..n {
                        mreg[(i, i)] += reg * (1.0 + mreg[(i, i)]);
                    }
                }
                if let Some(f) = Cholesky::new(mreg) {
                    chol = Some(f);
                    break;
                }
            }
            let chol = match chol {
                Some(f) => f,
                None => break,
            };

            // equality block: Schur complement E M⁻¹ Eᵀ (p is tiny)
            let (mi_et, schur_lu) = if p > 0 {
                let mut et = DMatrix::zeros(n, p);
                for (i, row) in self.eq.iter().enumerate() {
                    for (c0, v0) in row.cols.iter().zip(&row.vals) {
                        et[(*c0 as usize, i)] = *v0;
                    }
                }
                let mi_et = chol.solve(&et);
                let mut sc = DMatrix::zeros(p, p);
                for i in 0..p {
                    for j in 0..p {
                        sc[(i, j)] = Self::row_dot(&self.eq[i], &mi_et.column(j).into_owned());
                    }
                }
                (mi_et, Some(sc.lu()))
            } else {
                (DMatrix::zeros(n, 0), None)
            };

            let direction = |rc: &DVector<f64>| -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
                let mut r1 = rd.clone();
                for (i, row) in self.ineq.iter().enumerate() {
                    Self::row_axpy(row, theta[i] * rp[i] - rc[i] / s[i], &mut r1);
                }
                let (dx, dw);
                if p > 0 {
                    let mi_r1 = chol.solve(&r1);
                    let mut rhs = DVector::zeros(p);
                    for i in 0..p {
                        rhs[i] = Self::row_dot(&self.eq[i], &mi_r1) - re[i];
                    }
                    let dw_v = schur_lu
                        .as_ref()
                        .expect("schur factor exists when p > 0")
                        .solve(&rhs)
                        .expect("schur complement nonsingular");
                    dx = mi_r1 - &mi_et * &dw_v;
                    dw = dw_v;
                } else {
                    dx = chol.solve(&r1);
                    dw = DVector::zeros(0);
                }
                let mut dy = DVector::zeros(m);
                for (i, row) in self.ineq.iter().enumerate() {
                    dy[i] = theta[i] * (Self::row_dot(row, &dx) - rp[i]) + rc[i] / s[i];
                }
                let ds = DVector::from_fn(m, |i, _| (rc[i] - s[i] * dy[i]) / y[i]);
                (dx, dy, dw, ds)
            };

            // predictor
            let rc_aff = DVector::from_fn(m, |i, _| -s[i] * y[i]);
            let (_, dya, _, dsa) = direction(&rc_aff);
            let ap = step_limit(&s, &dsa, 1.0);
            let ad = step_limit(&y, &dya, 1.0);
            let mut mu_aff = 0.0;
            for i in 0..m {
                mu_aff += (s[i] + ap * dsa[i]) * (y[i] + ad * dya[i]);
            }
            mu_aff /= m as f64;
            let sigma = (mu_aff / mu).powi(3);

            // corrector
            let rc = DVector::from_fn(m, |i, _| sigma * mu - s[i] * y[i] - dsa[i] * dya[i]);
            let (dx, dy, dw, ds) = direction(&rc);
            let ap = 0.995 * step_limit(&s, &ds, f64::INFINITY);
            let ad = 0.995 * step_limit(&y, &dy, f64::INFINITY);
            let ap = ap.min(1.0);
            let ad = ad.min(1.0);

            x += ap * &dx;
            s += ap * &ds;
            y += ad * &dy;
            w += ad * &dw;
        }

        // fall back to the best iterate if it is essentially converged
        if let Some((merit, bx, it)) = best {
            if merit < 100.0 * tol {
                let cost = c.dot(&bx);
                return Ok(LpSolution {
                    x: bx.iter().copied().collect(),
                    cost,
                    iterations: it,
                    residual: merit,
                });
            }
        }
        Err(Error::LpFailed(format!(
            "did not converge in {max_iter} iterations; binding family: {}",
            self.blocking_family(&y)
        )))
    }

    /// Names the constraint family carrying the largest dual mass — the best
    /// single indicator of what blocks an infeasible program.
    fn blocking_family(&self, y: &DVector<f64>) -> String {
        if self.families.is_empty() {
            return "(untagged)".into();
        }
        let mut mass = vec![0.0f64; self.families.len()];
        for (i, row) in self.ineq.iter().enumerate() {
            mass[row.family as usize] += y[i].abs();
        }
        let top = mass
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.families[top].clone()
    }
}

/// Largest α ≤ cap with v + α·dv ≥ 0 componentwise.
fn step_limit(v: &DVector<f64>, dv: &DVector<f64>, cap: f64) -> f64 {
    let mut a = cap;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a.min(1.0e12)
}
