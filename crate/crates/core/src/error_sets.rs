//! Error-set propagation along a reference and the resulting constraint
//! tightening.
//!
//! The error `e = x − x̂` between the plant and the nominal LTV prediction
//! evolves as `e⁺ = (A + BK) e + V Δd + L`, where `L` is the linearization
//! remainder. Every error set is kept as an origin-centered interval.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ltv::{LtvModel, ReferenceTrajectory};
use crate::model::{DisturbanceSpec, Model, OutputMap};
use crate::sets::{Interval, Zonotope};

/// Relative inflation of the Hessian bounds, a guard against rounding.
const HESSIAN_INFLATION: f64 = 1e-12;
/// Relative widening of each error set against rounding in the state error.
const ROUNDOFF_MARGIN: f64 = 1e-13;

/// Error sets `E_i` for `i = k..=N` and the stacked `(x, u, d)` sets `Z_i`
/// for `i = k..N` that enclose the linearization points seen by the plant.
#[derive(Debug, Clone)]
pub struct ErrorSets {
    pub start_step: usize,
    pub errors: Vec<Interval>,
    pub stacked: Vec<Zonotope>,
}

impl ErrorSets {
    /// Error set at absolute step `step`.
    pub fn at(&self, step: usize) -> Option<&Interval> {
        step.checked_sub(self.start_step).and_then(|i| self.errors.get(i))
    }
}

/// Tightened output sets `Ŷ_i`, `i = k..=N`.
#[derive(Debug, Clone)]
pub struct TightenedConstraints {
    pub start_step: usize,
    pub sets: Vec<Interval>,
    pub feasible: bool,
}

impl TightenedConstraints {
    /// The original constraints with no tightening, for `k..=N`.
    pub fn untightened(out: &OutputMap, start_step: usize) -> Self {
        let sets = (start_step..=out.horizon()).map(|k| out.set(k).clone()).collect();
        Self {
            start_step,
            sets,
            feasible: true,
        }
    }

    pub fn at(&self, step: usize) -> Option<&Interval> {
        step.checked_sub(self.start_step).and_then(|i| self.sets.get(i))
    }
}

/// Origin-centered box bounding the second-order remainder of every state
/// component over `z`: `M_i = ½ γᵀ H_i γ` with `γ = Σ|g|` and `H_i` the
/// Hessian bound over the interval hull of `z`.
pub fn lagrange_remainder_bound(model: &dyn Model, z: &Zonotope) -> Result<Interval> {
    let sig = model.signature();
    if z.dim() != sig.n_z() {
        return Err(Error::DimensionMismatch {
            context: "remainder bound domain",
            expected: sig.n_z(),
            found: z.dim(),
        });
    }
    let gamma = z.abs_generator_sum();
    if gamma.iter().all(|&g| g == 0.0) {
        return Ok(Interval::zeros(sig.n_x));
    }
    let hessians = model.hessian_abs_max(&z.interval_hull())?;
    let radius = DVector::from_iterator(
        sig.n_x,
        hessians
            .iter()
            .map(|h| 0.5 * gamma.dot(&(h * &gamma)) * (1.0 + HESSIAN_INFLATION)),
    );
    Interval::symmetric(radius)
}

/// Propagates error sets along `reference` under the LQR feedback in `ltv`.
/// `dist` is indexed by absolute step.
pub fn propagate_error_sets(
    model: &dyn Model,
    ltv: &LtvModel,
    dist: &DisturbanceSpec,
    reference: &ReferenceTrajectory,
) -> Result<ErrorSets> {
    let n = reference.len();
    let k0 = reference.start_step();
    if ltv.len() != n || !ltv.has_gains() {
        return Err(Error::DimensionMismatch {
            context: "LTV model with gains along the reference",
            expected: n,
            found: ltv.gains.len(),
        });
    }
    if dist.len() < reference.end_step() {
        return Err(Error::DimensionMismatch {
            context: "disturbance bounds over the horizon",
            expected: reference.end_step(),
            found: dist.len(),
        });
    }
    let sig = model.signature();
    let mut errors = Vec::with_capacity(n + 1);
    let mut stacked = Vec::with_capacity(n);
    errors.push(Interval::zeros(sig.n_x));
    for i in 0..n {
        let e = errors[i].to_zonotope()?;
        let d_bound = dist.bound(k0 + i).to_zonotope()?;
        let ke = e.linear_map(&ltv.gains[i])?;

        let center = DVector::from_iterator(
            sig.n_z(),
            reference.states()[i]
                .iter()
                .chain(reference.inputs()[i].iter())
                .chain(reference.disturbances()[i].iter())
                .copied(),
        );
        let deviation = Zonotope::cartesian_product(&[e.clone(), ke, d_bound.clone()]);
        let z = Zonotope::point(center).minkowski_sum(&deviation)?;
        let remainder = lagrange_remainder_bound(model, &z)?.to_zonotope()?;

        let next = e
            .linear_map(&ltv.closed_loop(i))?
            .minkowski_sum(&d_bound.linear_map(&ltv.v[i])?)?
            .minkowski_sum(&remainder)?
            .interval_hull();
        // widen by a few ulps of the states involved so that floating-point
        // evaluation of e = x − xʳ cannot escape an exactly tight set
        let scale = reference.states()[i + 1].abs() + next.lower().abs() + next.upper().abs();
        let margin = scale * ROUNDOFF_MARGIN;
        errors.push(Interval::new(next.lower() - &margin, next.upper() + &margin)?);
        stacked.push(z);
    }
    Ok(ErrorSets {
        start_step: k0,
        errors,
        stacked,
    })
}

/// `Ŷ_i = Y_i ⊖ IH((C_i + D_i K_i) E_i)`; the terminal step uses `C_N`.
pub fn tighten_constraints(out: &OutputMap, err: &ErrorSets, ltv: &LtvModel) -> Result<TightenedConstraints> {
    let k0 = err.start_step;
    let n = err.errors.len() - 1;
    if k0 + n != out.horizon() {
        return Err(Error::DimensionMismatch {
            context: "error sets against output horizon",
            expected: out.horizon(),
            found: k0 + n,
        });
    }
    let mut sets = Vec::with_capacity(n + 1);
    for (i, e) in err.errors.iter().enumerate() {
        let step = k0 + i;
        let map = if i < n {
            out.c(step) + out.d(step) * &ltv.gains[i]
        } else {
            out.c(step).clone()
        };
        let spread = e.to_zonotope()?.linear_map(&map)?.interval_hull();
        sets.push(out.set(step).pontryagin_diff(&spread)?);
    }
    let feasible = sets.iter().all(|s| !s.is_empty());
    Ok(TightenedConstraints {
        start_step: k0,
        sets,
        feasible,
    })
}
