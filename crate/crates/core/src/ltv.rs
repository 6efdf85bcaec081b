//! Reference trajectories, linearization along them, and the finite-horizon
//! time-varying LQR.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Model;

/// Absolute per-step defect below which a trajectory counts as satisfying
/// the nonlinear dynamics.
pub const DYNAMICS_TOL: f64 = 1e-8;

/// State, input and disturbance sequences from `start_step` to the end of
/// the mission: `x` has one more entry than `u` and `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    start_step: usize,
    x: Vec<DVector<f64>>,
    u: Vec<DVector<f64>>,
    d: Vec<DVector<f64>>,
}

impl ReferenceTrajectory {
    pub fn new(start_step: usize, x: Vec<DVector<f64>>, u: Vec<DVector<f64>>, d: Vec<DVector<f64>>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::InvalidArgument("reference trajectory needs at least one input".into()));
        }
        if x.len() != u.len() + 1 || d.len() != u.len() {
            return Err(Error::DimensionMismatch {
                context: "reference trajectory lengths",
                expected: u.len() + 1,
                found: x.len(),
            });
        }
        let (nx, nu, nd) = (x[0].len(), u[0].len(), d[0].len());
        if x.iter().any(|v| v.len() != nx) || u.iter().any(|v| v.len() != nu) || d.iter().any(|v| v.len() != nd) {
            return Err(Error::InvalidArgument("reference trajectory entries have inconsistent dimensions".into()));
        }
        Ok(Self { start_step, x, u, d })
    }

    /// Nonlinear rollout of `u` under `d` from `x0`.
    pub fn rollout(
        model: &dyn Model,
        start_step: usize,
        x0: DVector<f64>,
        u: Vec<DVector<f64>>,
        d: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if u.len() != d.len() {
            return Err(Error::DimensionMismatch {
                context: "rollout inputs and disturbances",
                expected: u.len(),
                found: d.len(),
            });
        }
        let mut x = Vec::with_capacity(u.len() + 1);
        x.push(x0);
        for (ui, di) in u.iter().zip(&d) {
            let next = model.step(x.last().unwrap(), ui, di)?;
            x.push(next);
        }
        Self::new(start_step, x, u, d)
    }

    pub fn start_step(&self) -> usize {
        self.start_step
    }

    /// Mission end step `N`.
    pub fn end_step(&self) -> usize {
        self.start_step + self.u.len()
    }

    /// Number of inputs, `N − k`.
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.x
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.u
    }

    pub fn disturbances(&self) -> &[DVector<f64>] {
        &self.d
    }

    /// Entries at absolute step `step`.
    pub fn state_at(&self, step: usize) -> Result<&DVector<f64>> {
        self.local(step, self.x.len()).map(|i| &self.x[i])
    }

    pub fn input_at(&self, step: usize) -> Result<&DVector<f64>> {
        self.local(step, self.u.len()).map(|i| &self.u[i])
    }

    fn local(&self, step: usize, len: usize) -> Result<usize> {
        if step < self.start_step || step - self.start_step >= len {
            return Err(Error::StepOutOfRange {
                step,
                horizon: self.end_step(),
            });
        }
        Ok(step - self.start_step)
    }

    /// Tail of the trajectory starting at absolute step `step`.
    pub fn shifted(&self, step: usize) -> Result<Self> {
        let i = self.local(step, self.u.len())?;
        Self::new(step, self.x[i..].to_vec(), self.u[i..].to_vec(), self.d[i..].to_vec())
    }

    /// Same trajectory with the first state replaced.
    pub fn with_initial_state(&self, x0: DVector<f64>) -> Result<Self> {
        if x0.len() != self.x[0].len() {
            return Err(Error::DimensionMismatch {
                context: "replacement initial state",
                expected: self.x[0].len(),
                found: x0.len(),
            });
        }
        let mut out = self.clone();
        out.x[0] = x0;
        Ok(out)
    }

    /// Largest absolute per-component defect `|x_{i+1} − f(x_i, u_i, d_i)|`.
    pub fn dynamics_defect(&self, model: &dyn Model) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..self.u.len() {
            let next = model.step(&self.x[i], &self.u[i], &self.d[i])?;
            worst = worst.max((&self.x[i + 1] - next).amax());
        }
        Ok(worst)
    }

    pub fn is_dynamically_consistent(&self, model: &dyn Model) -> bool {
        matches!(self.dynamics_defect(model), Ok(e) if e <= DYNAMICS_TOL)
    }
}

/// State and input weights for the tracking LQR.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LqrWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(Error::InvalidArgument("LQR weights must be square".into()));
        }
        if q.clone().symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::InvalidArgument("state weight must be positive semidefinite".into()));
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("input weight must be positive definite".into()));
        }
        Ok(Self { q, r })
    }

    pub fn diagonal(q: &[f64], r: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            DMatrix::from_diagonal(&DVector::from_column_slice(r)),
        )
    }

    /// Weights used for the fuel thermal management benchmark.
    pub fn ftms() -> Self {
        Self::diagonal(&[1.0 / 500.0, 1.0 / 100.0, 40.0 / 300.0], &[1.0, 0.01]).expect("valid weights")
    }
}

/// Linearization of the dynamics along a reference, plus the LQR feedback.
///
/// `x⁺ ≈ A x + B u + V d + c` and the nominal model `x̂⁺ = A x̂ + B û + ĉ`
/// with the disturbance reference folded into `ĉ`. Gains follow the
/// convention `u = û + K e`, so `A + B K` is the closed-loop error map.
#[derive(Debug, Clone)]
pub struct LtvModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
    pub c: Vec<DVector<f64>>,
    pub c_hat: Vec<DVector<f64>>,
    /// Feedback gains `K_i`, `i = 0..len`.
    pub gains: Vec<DMatrix<f64>>,
    /// Cost-to-go `P_i`, `i = 0..=len`.
    pub cost_to_go: Vec<DMatrix<f64>>,
}

impl LtvModel {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn has_gains(&self) -> bool {
        self.gains.len() == self.a.len()
    }

    /// `A_i + B_i K_i`.
    pub fn closed_loop(&self, i: usize) -> DMatrix<f64> {
        &self.a[i] + &self.b[i] * &self.gains[i]
    }
}

/// Jacobians and affine offsets along every step of `reference`. Gains are
/// left empty.
pub fn linearize_along(model: &dyn Model, reference: &ReferenceTrajectory) -> Result<LtvModel> {
    let n = reference.len();
    let mut out = LtvModel {
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        c_hat: Vec::with_capacity(n),
        gains: Vec::new(),
        cost_to_go: Vec::new(),
    };
    for i in 0..n {
        let (x, u, d) = (&reference.x[i], &reference.u[i], &reference.d[i]);
        let jac = model.jacobians(x, u, d)?;
        let f = model.step(x, u, d)?;
        let c_hat = f - &jac.a * x - &jac.b * u;
        let c = &c_hat - &jac.v * d;
        out.a.push(jac.a);
        out.b.push(jac.b);
        out.v.push(jac.v);
        out.c.push(c);
        out.c_hat.push(c_hat);
    }
    Ok(out)
}

/// Backward Riccati recursion with `P_N = Q`. Returns the gains in the
/// `u = û + K e` convention (negated relative to the textbook gain) and the
/// cost-to-go sequence.
pub fn lqr_gains(
    a: &[DMatrix<f64>],
    b: &[DMatrix<f64>],
    weights: &LqrWeights,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            context: "LQR A and B sequences",
            expected: n,
            found: b.len(),
        });
    }
    let nx = weights.q.nrows();
    let nu = weights.r.nrows();
    for i in 0..n {
        if a[i].shape() != (nx, nx) || b[i].shape() != (nx, nu) {
            return Err(Error::DimensionMismatch {
                context: "LQR system matrices",
                expected: nx,
                found: a[i].nrows(),
            });
        }
    }
    let mut p = vec![DMatrix::zeros(nx, nx); n + 1];
    let mut k = vec![DMatrix::zeros(nu, nx); n];
    p[n] = weights.q.clone();
    for i in (0..n).rev() {
        let pb = &p[i + 1] * &b[i];
        let s = &weights.r + b[i].transpose() * &pb;
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Numerical(format!("R + BᵀPB not positive definite at step {i}")))?;
        let k_riccati = chol.solve(&(pb.transpose() * &a[i]));
        let pa = &p[i + 1] * &a[i];
        let next = &weights.q + a[i].transpose() * &pa - a[i].transpose() * &pb * &k_riccati;
        p[i] = (&next + next.transpose()) * 0.5;
        k[i] = -k_riccati;
    }
    Ok((k, p))
}

/// Linearize along `reference` and attach LQR gains.
pub fn linearize_with_gains(
    model: &dyn Model,
    reference: &ReferenceTrajectory,
    weights: &LqrWeights,
) -> Result<LtvModel> {
    let mut ltv = linearize_along(model, reference)?;
    let (gains, p) = lqr_gains(&ltv.a, &ltv.b, weights)?;
    ltv.gains = gains;
    ltv.cost_to_go = p;
    Ok(ltv)
}
