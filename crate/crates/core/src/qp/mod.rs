//! Convex quadratic programs
//!
//! ```text
//! minimize    ½ zᵀ H z + gᵀ z
//! subject to  A z = b,   l ≤ G z ≤ u,   z_lo ≤ z ≤ z_hi
//! ```
//!
//! solved with a Mehrotra predictor-corrector interior-point method. Without
//! equality rows the Newton systems are solved with a banded Cholesky
//! factorization whose bandwidth is read off the sparsity pattern, which is
//! what keeps stage-ordered trajectory problems linear in the horizon.
//! Problems with equality rows go through a dense KKT factorization.

pub mod banded;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use banded::BandMatrix;

/// Iterations spent past the residual tolerance trying to close the
/// duality gap in unscaled objective units.
const GAP_EXTRA_ITERATIONS: usize = 8;

pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("QP is primal infeasible")]
    Infeasible,
    #[error("QP is unbounded below")]
    Unbounded,
    #[error("QP solver hit its iteration limit ({0})")]
    MaxIterations(usize),
    #[error("QP setup error: {0}")]
    Setup(String),
    #[error("QP linear algebra failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub regularization: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 100,
            regularization: 1e-11,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    n: usize,
    hessian: Vec<(usize, usize, f64)>,
    gradient: Vec<f64>,
    eq_rows: Vec<SparseRow>,
    eq_rhs: Vec<f64>,
    rows: Vec<SparseRow>,
    row_lo: Vec<f64>,
    row_hi: Vec<f64>,
    var_lo: Vec<f64>,
    var_hi: Vec<f64>,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            gradient: vec![0.0; n],
            var_lo: vec![f64::NEG_INFINITY; n],
            var_hi: vec![f64::INFINITY; n],
            ..Default::default()
        }
    }

    /// Dense objective, no constraints.
    pub fn from_dense(h: &DMatrix<f64>, g: &DVector<f64>) -> Self {
        let mut qp = Self::new(g.len());
        for i in 0..g.len() {
            for j in 0..=i {
                if h[(i, j)] != 0.0 {
                    qp.add_hessian(i, j, h[(i, j)]);
                }
            }
            qp.gradient[i] = g[i];
        }
        qp
    }

    pub fn num_variables(&self) -> usize {
        self.n
    }

    /// Adds `v` to `H[i, j]` and, when `i ≠ j`, to `H[j, i]`.
    pub fn add_hessian(&mut self, i: usize, j: usize, v: f64) {
        self.hessian.push((i, j, v));
    }

    pub fn add_gradient(&mut self, i: usize, v: f64) {
        self.gradient[i] += v;
    }

    pub fn add_equality(&mut self, row: SparseRow, rhs: f64) {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    /// `lo ≤ row · z ≤ hi`; either side may be infinite.
    pub fn add_constraint(&mut self, row: SparseRow, lo: f64, hi: f64) {
        self.rows.push(row);
        self.row_lo.push(lo);
        self.row_hi.push(hi);
    }

    pub fn set_bounds(&mut self, i: usize, lo: f64, hi: f64) {
        self.var_lo[i] = lo;
        self.var_hi[i] = hi;
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let mut value: f64 = self.gradient.iter().zip(z).map(|(g, z)| g * z).sum();
        for &(i, j, v) in &self.hessian {
            value += if i == j { 0.5 * v * z[i] * z[i] } else { v * z[i] * z[j] };
        }
        value
    }

    fn hessian_times(&self, z: &[f64], out: &mut [f64]) {
        for &(i, j, v) in &self.hessian {
            out[i] += v * z[j];
            if i != j {
                out[j] += v * z[i];
            }
        }
    }

    fn validate(&self) -> Result<(), QpError> {
        let check_row = |row: &SparseRow| row.iter().all(|&(j, v)| j < self.n && v.is_finite());
        if self.hessian.iter().any(|&(i, j, v)| i >= self.n || j >= self.n || !v.is_finite()) {
            return Err(QpError::Setup("Hessian entry out of range or not finite".into()));
        }
        if self.gradient.iter().any(|g| !g.is_finite()) {
            return Err(QpError::Setup("gradient is not finite".into()));
        }
        if !self.eq_rows.iter().all(check_row) || !self.rows.iter().all(check_row) {
            return Err(QpError::Setup("constraint row out of range or not finite".into()));
        }
        for (lo, hi) in self.row_lo.iter().zip(&self.row_hi).chain(self.var_lo.iter().zip(&self.var_hi)) {
            if lo > hi || lo.is_nan() || hi.is_nan() || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                return Err(QpError::Infeasible);
            }
        }
        Ok(())
    }

    pub fn solve(&self, settings: &QpSettings) -> Result<QpSolution, QpError> {
        self.validate()?;
        // Normalizing the objective keeps large penalty weights from
        // stalling the interior point iterations.
        let scale = self
            .hessian
            .iter()
            .map(|h| h.2.abs())
            .chain(self.gradient.iter().map(|g| g.abs()))
            .fold(1.0, f64::max);
        if scale == 1.0 {
            return Ipm::new(self, settings, 1.0).run();
        }
        let mut scaled = self.clone();
        scaled.hessian.iter_mut().for_each(|h| h.2 /= scale);
        scaled.gradient.iter_mut().for_each(|g| *g /= scale);
        let mut sol = Ipm::new(&scaled, settings, scale).run()?;
        sol.objective = self.objective(&sol.z);
        for d in sol.eq_duals.iter_mut().chain(&mut sol.row_duals).chain(&mut sol.bound_duals) {
            *d *= scale;
        }
        Ok(sol)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the equality rows.
    pub eq_duals: Vec<f64>,
    /// Net multipliers of the two-sided rows: positive when the upper side
    /// is active, negative for the lower side.
    pub row_duals: Vec<f64>,
    /// Net multipliers of the variable bounds, same sign convention.
    pub bound_duals: Vec<f64>,
    pub iterations: usize,
}

/// One-sided inequality `coeffs · z ≤ rhs`, tagged with its origin.
struct Ineq {
    coeffs: SparseRow,
    rhs: f64,
    origin: Origin,
}

#[derive(Clone, Copy)]
enum Origin {
    RowUpper(usize),
    RowLower(usize),
    VarUpper(usize),
    VarLower(usize),
}

enum Factor {
    Band(banded::BandCholesky),
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

struct Ipm<'a> {
    qp: &'a QpProblem,
    settings: &'a QpSettings,
    /// Complementarity target; the gap is measured in unscaled objective
    /// units so normalization does not loosen the solution.
    gap_tolerance: f64,
    ineqs: Vec<Ineq>,
    bandwidth: usize,
}

fn dot(row: &SparseRow, z: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * z[j]).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest `t ∈ (0, 1]` with `v + t Δv ≥ 0` scaled by `fraction`.
fn max_step(v: &[f64], dv: &[f64], fraction: f64) -> f64 {
    let mut t: f64 = 1.0;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            t = t.min(-fraction * x / d);
        }
    }
    t
}

impl<'a> Ipm<'a> {
    fn new(qp: &'a QpProblem, settings: &'a QpSettings, objective_scale: f64) -> Self {
        let mut ineqs = Vec::new();
        for (r, row) in qp.rows.iter().enumerate() {
            if qp.row_hi[r].is_finite() {
                ineqs.push(Ineq {
                    coeffs: row.clone(),
                    rhs: qp.row_hi[r],
                    origin: Origin::RowUpper(r),
                });
            }
            if qp.row_lo[r].is_finite() {
                ineqs.push(Ineq {
                    coeffs: row.iter().map(|&(j, v)| (j, -v)).collect(),
                    rhs: -qp.row_lo[r],
                    origin: Origin::RowLower(r),
                });
            }
        }
        for i in 0..qp.n {
            if qp.var_hi[i].is_finite() {
                ineqs.push(Ineq {
                    coeffs: vec![(i, 1.0)],
                    rhs: qp.var_hi[i],
                    origin: Origin::VarUpper(i),
                });
            }
            if qp.var_lo[i].is_finite() {
                ineqs.push(Ineq {
                    coeffs: vec![(i, -1.0)],
                    rhs: -qp.var_lo[i],
                    origin: Origin::VarLower(i),
                });
            }
        }
        let span = |row: &SparseRow| {
            let lo = row.iter().map(|e| e.0).min().unwrap_or(0);
            let hi = row.iter().map(|e| e.0).max().unwrap_or(0);
            hi - lo
        };
        let bandwidth = qp
            .hessian
            .iter()
            .map(|&(i, j, _)| i.abs_diff(j))
            .chain(ineqs.iter().map(|q| span(&q.coeffs)))
            .max()
            .unwrap_or(0);
        Self {
            qp,
            settings,
            gap_tolerance: settings.tolerance / objective_scale,
            ineqs,
            bandwidth,
        }
    }

    fn factor(&self, w: &[f64], reg: f64) -> Result<Factor, QpError> {
        let n = self.qp.n;
        if self.qp.eq_rows.is_empty() {
            let mut m = BandMatrix::zeros(n, self.bandwidth);
            for i in 0..n {
                m.add(i, i, reg);
            }
            for &(i, j, v) in &self.qp.hessian {
                m.add(i, j, v);
            }
            for (q, &wj) in self.ineqs.iter().zip(w) {
                for (a, &(ia, va)) in q.coeffs.iter().enumerate() {
                    for (b, &(ib, vb)) in q.coeffs[..=a].iter().enumerate() {
                        // a repeated index off the pair diagonal lands on the
                        // matrix diagonal twice
                        let twice = if a != b && ia == ib { 2.0 } else { 1.0 };
                        m.add(ia, ib, twice * wj * va * vb);
                    }
                }
            }
            m.factor()
                .map(Factor::Band)
                .map_err(|i| QpError::Numerical(format!("non-positive pivot at {i}")))
        } else {
            let p = self.qp.eq_rows.len();
            let mut k = DMatrix::zeros(n + p, n + p);
            for i in 0..n {
                k[(i, i)] += reg;
            }
            for &(i, j, v) in &self.qp.hessian {
                k[(i, j)] += v;
                if i != j {
                    k[(j, i)] += v;
                }
            }
            for (q, &wj) in self.ineqs.iter().zip(w) {
                for &(ia, va) in &q.coeffs {
                    for &(ib, vb) in &q.coeffs {
                        k[(ia, ib)] += wj * va * vb;
                    }
                }
            }
            for (r, row) in self.qp.eq_rows.iter().enumerate() {
                for &(j, v) in row {
                    k[(n + r, j)] += v;
                    k[(j, n + r)] += v;
                }
                k[(n + r, n + r)] -= reg;
            }
            let lu = k.lu();
            if !lu.is_invertible() {
                return Err(QpError::Numerical("singular KKT matrix".into()));
            }
            Ok(Factor::Dense(lu))
        }
    }

    fn run(self) -> Result<QpSolution, QpError> {
        let qp = self.qp;
        let n = qp.n;
        let p = qp.eq_rows.len();
        let m = self.ineqs.len();
        let tol = self.settings.tolerance;

        let mut z: Vec<f64> = (0..n)
            .map(|i| {
                let (lo, hi) = (qp.var_lo[i], qp.var_hi[i]);
                match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => 0.5 * (lo + hi),
                    (true, false) => lo.max(0.0),
                    (false, true) => hi.min(0.0),
                    _ => 0.0,
                }
            })
            .collect();
        let mut y = vec![0.0; p];
        let mut s: Vec<f64> = self
            .ineqs
            .iter()
            .map(|q| (q.rhs - dot(&q.coeffs, &z)).max(1.0))
            .collect();
        let mut lam = vec![1.0; m];

        let g_scale = 1.0 + inf_norm(&qp.gradient);
        let h_scale = 1.0
            + inf_norm(&self.ineqs.iter().map(|q| q.rhs).collect::<Vec<_>>())
            + inf_norm(&qp.eq_rhs);

        let mut rd = vec![0.0; n];
        let mut re = vec![0.0; p];
        let mut ri = vec![0.0; m];
        let mut reg = self.settings.regularization;

        let mut converged_at: Option<usize> = None;
        let mut best = None;
        for iter in 0..self.settings.max_iterations {
            // residuals
            rd.copy_from_slice(&qp.gradient);
            qp.hessian_times(&z, &mut rd);
            for (r, row) in qp.eq_rows.iter().enumerate() {
                for &(j, v) in row {
                    rd[j] += v * y[r];
                }
                re[r] = dot(row, &z) - qp.eq_rhs[r];
            }
            for (k, q) in self.ineqs.iter().enumerate() {
                for &(j, v) in &q.coeffs {
                    rd[j] += v * lam[k];
                }
                ri[k] = dot(&q.coeffs, &z) + s[k] - q.rhs;
            }
            let mu = if m > 0 { s.iter().zip(&lam).map(|(a, b)| a * b).sum::<f64>() / m as f64 } else { 0.0 };

            let dual_res = inf_norm(&rd);
            let primal_res = inf_norm(&re).max(inf_norm(&ri));
            let converged = dual_res <= tol * g_scale && primal_res <= tol * h_scale && mu <= tol;
            if converged && mu <= self.gap_tolerance {
                return Ok(self.accept(z, y, &s, lam, reg, tol * h_scale, iter));
            }
            if converged {
                // keep tightening the gap for a few iterations, falling back to
                // this iterate if that stalls
                let since = *converged_at.get_or_insert(iter);
                if iter - since >= GAP_EXTRA_ITERATIONS {
                    return Ok(self.accept(z, y, &s, lam, reg, tol * h_scale, iter));
                }
                best = Some((z.clone(), y.clone(), s.clone(), lam.clone(), reg, iter));
            }
            if inf_norm(&lam) > 1e13 {
                return Err(QpError::Infeasible);
            }
            if inf_norm(&z) > 1e13 {
                return Err(QpError::Unbounded);
            }

            let w: Vec<f64> = lam.iter().zip(&s).map(|(l, s)| l / s).collect();
            let fac = loop {
                match self.factor(&w, reg) {
                    Ok(f) => break f,
                    Err(_) if reg < 1e-4 => reg *= 100.0,
                    Err(e) => {
                        return match best {
                            Some((z, y, s, lam, reg, iter)) => Ok(self.accept(z, y, &s, lam, reg, tol * h_scale, iter)),
                            None => Err(e),
                        }
                    }
                }
            };

            // predictor
            let rc_aff: Vec<f64> = s.iter().zip(&lam).map(|(s, l)| s * l).collect();
            let (_, _, ds_a, dl_a) = self.direction(&fac, &rd, &re, &ri, &s, &lam, &rc_aff);
            let alpha_aff = max_step(&s, &ds_a, 1.0).min(max_step(&lam, &dl_a, 1.0));
            let mu_aff = if m > 0 {
                s.iter()
                    .zip(&ds_a)
                    .zip(lam.iter().zip(&dl_a))
                    .map(|((s, ds), (l, dl))| (s + alpha_aff * ds) * (l + alpha_aff * dl))
                    .sum::<f64>()
                    / m as f64
            } else {
                0.0
            };
            let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };

            // corrector
            let rc: Vec<f64> = (0..m)
                .map(|k| s[k] * lam[k] + ds_a[k] * dl_a[k] - sigma * mu)
                .collect();
            let (dz, dy, ds, dl) = self.direction(&fac, &rd, &re, &ri, &s, &lam, &rc);
            let alpha = (max_step(&s, &ds, 0.995).min(max_step(&lam, &dl, 0.995))).min(1.0);

            for i in 0..n {
                z[i] += alpha * dz[i];
            }
            for r in 0..p {
                y[r] += alpha * dy[r];
            }
            for k in 0..m {
                s[k] = (s[k] + alpha * ds[k]).max(1e-300);
                lam[k] = (lam[k] + alpha * dl[k]).max(1e-300);
            }
        }

        if let Some((z, y, s, lam, reg, iter)) = best {
            return Ok(self.accept(z, y, &s, lam, reg, tol * h_scale, iter));
        }
        let primal_res = inf_norm(&ri).max(inf_norm(&re));
        if primal_res > 1e-6 * h_scale && inf_norm(&lam) > 1e8 {
            Err(QpError::Infeasible)
        } else if inf_norm(&z) > 1e10 {
            Err(QpError::Unbounded)
        } else {
            Err(QpError::MaxIterations(self.settings.max_iterations))
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn accept(&self, z: Vec<f64>, y: Vec<f64>, s: &[f64], lam: Vec<f64>, reg: f64, feas_tol: f64, iter: usize) -> QpSolution {
        let (z, y, lam) = match self.polish(&z, &y, s, &lam, reg, feas_tol) {
            Some(polished) => polished,
            None => (z, y, lam),
        };
        self.finish(z, y, lam, iter)
    }

    /// Refines a converged iterate by solving the equality-constrained
    /// problem of its active set, so the returned point is accurate well
    /// beyond the interior point stopping tolerance. Returns `None` when the
    /// guessed active set does not certify optimality.
    fn polish(
        &self,
        z0: &[f64],
        y0: &[f64],
        s: &[f64],
        lam0: &[f64],
        reg: f64,
        feas_tol: f64,
    ) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        const PENALTY: f64 = 1e8;
        let qp = self.qp;
        let n = qp.n;
        let p = qp.eq_rows.len();
        // weakly active rows are pinned as well; a zero multiplier keeps them harmless
        let active: Vec<bool> = lam0.iter().zip(s).map(|(l, s)| l > s || *s <= feas_tol).collect();
        let w: Vec<f64> = active.iter().map(|&a| if a { PENALTY } else { 0.0 }).collect();
        let fac = self.factor(&w, reg).ok()?;

        // augmented Lagrangian sweeps on the active rows, with a proximal
        // term cancelling the diagonal regularization
        let mut z = z0.to_vec();
        let mut y = y0.to_vec();
        let mut lam: Vec<f64> = lam0.iter().zip(&active).map(|(l, &a)| if a { *l } else { 0.0 }).collect();
        for _ in 0..20 {
            let mut rhs = vec![0.0; n + p];
            for i in 0..n {
                rhs[i] = -qp.gradient[i] + reg * z[i];
            }
            for (k, q) in self.ineqs.iter().enumerate() {
                if active[k] {
                    let t = lam[k] - PENALTY * q.rhs;
                    for &(j, v) in &q.coeffs {
                        rhs[j] -= v * t;
                    }
                }
            }
            for r in 0..p {
                rhs[n + r] = qp.eq_rhs[r] - reg * y[r];
            }
            match &fac {
                Factor::Band(ch) => ch.solve_in_place(&mut rhs),
                Factor::Dense(lu) => {
                    let sol = lu.solve(&DVector::from_vec(rhs.clone()))?;
                    rhs.copy_from_slice(sol.as_slice());
                }
            }
            let change = z.iter().zip(&rhs[..n]).fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
            z.copy_from_slice(&rhs[..n]);
            y.copy_from_slice(&rhs[n..]);
            let mut residual: f64 = 0.0;
            for (k, q) in self.ineqs.iter().enumerate() {
                if active[k] {
                    let r = dot(&q.coeffs, &z) - q.rhs;
                    lam[k] += PENALTY * r;
                    residual = residual.max(r.abs());
                }
            }
            if change <= 1e-15 * (1.0 + inf_norm(&z)) && residual <= 1e-15 * (1.0 + inf_norm(&z)) {
                break;
            }
        }
        if z.iter().chain(&y).chain(&lam).any(|v| !v.is_finite()) {
            return None;
        }

        let dual_floor = -feas_tol * (1.0 + inf_norm(lam0));
        let feasible = self.ineqs.iter().all(|q| dot(&q.coeffs, &z) - q.rhs <= feas_tol)
            && qp.eq_rows.iter().zip(&qp.eq_rhs).all(|(row, b)| (dot(row, &z) - b).abs() <= feas_tol)
            && lam.iter().all(|&l| l >= dual_floor);
        let before = qp.objective(z0);
        if !feasible || qp.objective(&z) > before + feas_tol * (1.0 + before.abs()) {
            return None;
        }
        let lam = lam.into_iter().map(|l| l.max(0.0)).collect();
        Some((z, y, lam))
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        fac: &Factor,
        rd: &[f64],
        re: &[f64],
        ri: &[f64],
        s: &[f64],
        lam: &[f64],
        rc: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.qp.n;
        let p = re.len();
        let mut rhs = vec![0.0; n + p];
        for i in 0..n {
            rhs[i] = -rd[i];
        }
        for (k, q) in self.ineqs.iter().enumerate() {
            let t = (lam[k] * ri[k] - rc[k]) / s[k];
            for &(j, v) in &q.coeffs {
                rhs[j] -= v * t;
            }
        }
        for r in 0..p {
            rhs[n + r] = -re[r];
        }
        match fac {
            Factor::Band(ch) => ch.solve_in_place(&mut rhs),
            Factor::Dense(lu) => {
                let sol = lu.solve(&DVector::from_vec(rhs.clone())).expect("invertible");
                rhs.copy_from_slice(sol.as_slice());
            }
        }
        let dz = rhs[..n].to_vec();
        let dy = rhs[n..].to_vec();
        let mut ds = vec![0.0; s.len()];
        let mut dl = vec![0.0; s.len()];
        for (k, q) in self.ineqs.iter().enumerate() {
            ds[k] = -ri[k] - dot(&q.coeffs, &dz);
            dl[k] = (-rc[k] - lam[k] * ds[k]) / s[k];
        }
        (dz, dy, ds, dl)
    }

    fn finish(&self, z: Vec<f64>, y: Vec<f64>, lam: Vec<f64>, iterations: usize) -> QpSolution {
        let qp = self.qp;
        let mut row_duals = vec![0.0; qp.rows.len()];
        let mut bound_duals = vec![0.0; qp.n];
        for (q, l) in self.ineqs.iter().zip(&lam) {
            match q.origin {
                Origin::RowUpper(r) => row_duals[r] += l,
                Origin::RowLower(r) => row_duals[r] -= l,
                Origin::VarUpper(i) => bound_duals[i] += l,
                Origin::VarLower(i) => bound_duals[i] -= l,
            }
        }
        QpSolution {
            objective: qp.objective(&z),
            z,
            eq_duals: y,
            row_duals,
            bound_duals,
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum() {
        let h = DMatrix::from_diagonal_element(2, 2, 2.0);
        let g = DVector::from_column_slice(&[-2.0, -4.0]);
        let sol = QpProblem::from_dense(&h, &g).solve(&QpSettings::default()).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-9);
        assert!((sol.z[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn active_lower_bound() {
        let mut qp = QpProblem::new(1);
        qp.add_hessian(0, 0, 2.0);
        qp.set_bounds(0, 1.0, f64::INFINITY);
        let sol = qp.solve(&QpSettings::default()).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-8);
        assert!((sol.bound_duals[0] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn equality_constrained() {
        // min x² + y² s.t. x + y = 2
        let mut qp = QpProblem::new(2);
        qp.add_hessian(0, 0, 2.0);
        qp.add_hessian(1, 1, 2.0);
        qp.add_equality(vec![(0, 1.0), (1, 1.0)], 2.0);
        let sol = qp.solve(&QpSettings::default()).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-8);
        assert!((sol.z[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn linear_program_vertex() {
        // min -x - y s.t. x + 2y ≤ 4, 3x + y ≤ 6, x, y ≥ 0  → (1.6, 1.2)
        let mut qp = QpProblem::new(2);
        qp.add_gradient(0, -1.0);
        qp.add_gradient(1, -1.0);
        qp.add_constraint(vec![(0, 1.0), (1, 2.0)], f64::NEG_INFINITY, 4.0);
        qp.add_constraint(vec![(0, 3.0), (1, 1.0)], f64::NEG_INFINITY, 6.0);
        qp.set_bounds(0, 0.0, f64::INFINITY);
        qp.set_bounds(1, 0.0, f64::INFINITY);
        let sol = qp.solve(&QpSettings::default()).unwrap();
        assert!((sol.z[0] - 1.6).abs() < 1e-7);
        assert!((sol.z[1] - 1.2).abs() < 1e-7);
    }

    #[test]
    fn detects_infeasibility() {
        let mut qp = QpProblem::new(1);
        qp.add_hessian(0, 0, 1.0);
        qp.add_constraint(vec![(0, 1.0)], 2.0, f64::INFINITY);
        qp.add_constraint(vec![(0, 1.0)], f64::NEG_INFINITY, 1.0);
        assert!(matches!(qp.solve(&QpSettings::default()), Err(QpError::Infeasible)));
    }

    #[test]
    fn detects_unboundedness() {
        let mut qp = QpProblem::new(1);
        qp.add_gradient(0, -1.0);
        qp.set_bounds(0, 0.0, f64::INFINITY);
        assert!(matches!(
            qp.solve(&QpSettings::default()),
            Err(QpError::Unbounded) | Err(QpError::MaxIterations(_))
        ));
    }
}
