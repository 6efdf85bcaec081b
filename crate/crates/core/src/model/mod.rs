//! Plant contract, output constraints and disturbance descriptions.

pub mod ftms;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::{Interval, ORIGIN_CENTER_TOL};

pub use ftms::{FtmsModel, FtmsParams};

/// Dimensions of a plant: states, inputs, disturbances and outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSignature {
    pub n_x: usize,
    pub n_u: usize,
    pub n_d: usize,
    pub n_y: usize,
}

impl ModelSignature {
    pub fn new(n_x: usize, n_u: usize, n_d: usize, n_y: usize) -> Result<Self> {
        if n_x == 0 || n_u == 0 || n_y == 0 {
            return Err(Error::InvalidArgument(
                "state, input and output counts must be at least 1".into(),
            ));
        }
        Ok(Self { n_x, n_u, n_d, n_y })
    }

    /// Dimension of the stacked `(x, u, d)` space.
    pub fn n_z(&self) -> usize {
        self.n_x + self.n_u + self.n_d
    }
}

/// Partial derivatives of the discrete-time map at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Discrete-time plant `x⁺ = f(x, u, d)`.
///
/// Implementations provide analytic first derivatives and an elementwise
/// bound on the absolute second derivatives of every component of `f` over
/// a box in the stacked `(x, u, d)` space. They must be read-only after
/// construction.
pub trait Model: Send + Sync {
    fn signature(&self) -> ModelSignature;

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<DVector<f64>>;

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<Jacobians>;

    /// For each state component `i`, a symmetric `n_z × n_z` matrix `H_i`
    /// with `H_i[r, c] ≥ |∂²f_i/∂z_r∂z_c(z)|` for every `z` in `domain`.
    fn hessian_abs_max(&self, domain: &Interval) -> Result<Vec<DMatrix<f64>>>;
}

/// Affine plant `x⁺ = A x + B u + V d + c`. Exact under linearization, so it
/// doubles as a reference case for the set and optimizer machinery.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, v: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || v.nrows() != n || c.len() != n {
            return Err(Error::DimensionMismatch {
                context: "linear model matrices",
                expected: n,
                found: b.nrows().min(v.nrows()).min(c.len()).min(a.ncols()),
            });
        }
        Ok(Self { a, b, v, c })
    }

    fn check(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<()> {
        for (context, expected, found) in [
            ("linear model state", self.a.ncols(), x.len()),
            ("linear model input", self.b.ncols(), u.len()),
            ("linear model disturbance", self.v.ncols(), d.len()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }
}

impl Model for LinearModel {
    fn signature(&self) -> ModelSignature {
        ModelSignature {
            n_x: self.a.nrows(),
            n_u: self.b.ncols(),
            n_d: self.v.ncols(),
            n_y: self.a.nrows() + self.b.ncols(),
        }
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x, u, d)?;
        Ok(&self.a * x + &self.b * u + &self.v * d + &self.c)
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<Jacobians> {
        self.check(x, u, d)?;
        Ok(Jacobians {
            a: self.a.clone(),
            b: self.b.clone(),
            v: self.v.clone(),
        })
    }

    fn hessian_abs_max(&self, domain: &Interval) -> Result<Vec<DMatrix<f64>>> {
        let nz = self.signature().n_z();
        if domain.dim() != nz {
            return Err(Error::DimensionMismatch {
                context: "Hessian domain",
                expected: nz,
                found: domain.dim(),
            });
        }
        Ok(vec![DMatrix::zeros(nz, nz); self.a.nrows()])
    }
}

/// Output maps `y_k = C_k x_k + D_k u_k` and constraint sets `Y_k` for
/// `k = 0..=N`. The terminal map has `D_N = 0` and constrains `x_N` alone.
#[derive(Debug, Clone)]
pub struct OutputMap {
    c: Vec<DMatrix<f64>>,
    d: Vec<DMatrix<f64>>,
    sets: Vec<Interval>,
}

impl OutputMap {
    pub fn new(c: Vec<DMatrix<f64>>, d: Vec<DMatrix<f64>>, sets: Vec<Interval>) -> Result<Self> {
        let len = c.len();
        if len < 2 || d.len() != len || sets.len() != len {
            return Err(Error::InvalidArgument(
                "output map needs matching C, D and Y sequences spanning at least one step".into(),
            ));
        }
        for k in 0..len {
            if d[k].nrows() != c[k].nrows() || sets[k].dim() != c[k].nrows() {
                return Err(Error::DimensionMismatch {
                    context: "output map rows",
                    expected: c[k].nrows(),
                    found: sets[k].dim(),
                });
            }
            if sets[k].is_empty() {
                return Err(Error::InvalidArgument(format!("output constraint set Y_{k} is empty")));
            }
            if sets[k].lower().iter().chain(sets[k].upper().iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("output constraint set Y_{k} is unbounded")));
            }
        }
        if d[len - 1].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument("terminal output map must have D_N = 0".into()));
        }
        Ok(Self { c, d, sets })
    }

    /// Horizon `N` (the map spans `N + 1` steps).
    pub fn horizon(&self) -> usize {
        self.c.len() - 1
    }

    pub fn c(&self, k: usize) -> &DMatrix<f64> {
        &self.c[k]
    }

    pub fn d(&self, k: usize) -> &DMatrix<f64> {
        &self.d[k]
    }

    pub fn set(&self, k: usize) -> &Interval {
        &self.sets[k]
    }

    pub fn n_y(&self, k: usize) -> usize {
        self.c[k].nrows()
    }

    /// `C_k x + D_k u`; at the terminal step `u` is ignored.
    pub fn output(&self, k: usize, x: &DVector<f64>, u: Option<&DVector<f64>>) -> DVector<f64> {
        let y = &self.c[k] * x;
        match u {
            Some(u) if k < self.horizon() => y + &self.d[k] * u,
            _ => y,
        }
    }
}

/// Known disturbance reference `dʳ_k` plus origin-centered bounds `D_k` on
/// the unknown deviation, for `k = 0..N`.
#[derive(Debug, Clone)]
pub struct DisturbanceSpec {
    d_ref: Vec<DVector<f64>>,
    bounds: Vec<Interval>,
}

impl DisturbanceSpec {
    pub fn new(d_ref: Vec<DVector<f64>>, bounds: Vec<Interval>) -> Result<Self> {
        if d_ref.len() != bounds.len() {
            return Err(Error::DimensionMismatch {
                context: "disturbance reference and bounds",
                expected: d_ref.len(),
                found: bounds.len(),
            });
        }
        for (k, (d, b)) in d_ref.iter().zip(&bounds).enumerate() {
            if b.dim() != d.len() {
                return Err(Error::DimensionMismatch {
                    context: "disturbance bound",
                    expected: d.len(),
                    found: b.dim(),
                });
            }
            if !b.is_origin_centered(ORIGIN_CENTER_TOL) {
                return Err(Error::InvalidArgument(format!("disturbance bound D_{k} is not origin-centered")));
            }
        }
        Ok(Self { d_ref, bounds })
    }

    /// Scalar disturbance sampled from `profile` at `k·T_s`, bounded by
    /// `[-radius, radius]` at every step.
    pub fn from_profile(profile: &ReferenceProfile, sample_time: f64, steps: usize, radius: f64) -> Result<Self> {
        let d_ref = (0..steps)
            .map(|k| DVector::from_element(1, profile.eval(k as f64 * sample_time)))
            .collect();
        let bound = Interval::symmetric(DVector::from_element(1, radius))?;
        Self::new(d_ref, vec![bound; steps])
    }

    pub fn len(&self) -> usize {
        self.d_ref.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_ref.is_empty()
    }

    pub fn reference(&self, k: usize) -> &DVector<f64> {
        &self.d_ref[k]
    }

    pub fn references(&self) -> &[DVector<f64>] {
        &self.d_ref
    }

    pub fn bound(&self, k: usize) -> &Interval {
        &self.bounds[k]
    }

    /// Same references with every bound scaled by `factor ≥ 0`.
    pub fn scaled_bounds(&self, factor: f64) -> Result<Self> {
        let bounds = self
            .bounds
            .iter()
            .map(|b| Interval::symmetric(b.upper() * factor))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.d_ref.clone(), bounds)
    }
}

/// Piecewise-linear function of time given by `(t, value)` breakpoints,
/// held constant outside the first and last breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProfile {
    pub points: Vec<(f64, f64)>,
}

impl ReferenceProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("profile needs at least one breakpoint".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument("profile breakpoints must be strictly increasing in time".into()));
        }
        Ok(Self { points })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![(0.0, value)],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let first = self.points[0];
        if t <= first.0 {
            return first.1;
        }
        for w in self.points.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t <= t1 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        self.points[self.points.len() - 1].1
    }
}
