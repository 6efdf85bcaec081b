//! Interval and zonotope sets.
//!
//! Zonotopes are stored in generator form `{c, G}` and represent
//! `{c + G t : ‖t‖∞ ≤ 1}`. Intervals are axis-aligned boxes with an explicit
//! empty flag, so that an over-tightened constraint set stays representable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance on `|lower + upper|` when a subtrahend must be origin-centered.
pub const ORIGIN_CENTER_TOL: f64 = 1e-9;

/// Axis-aligned box `[lower, upper]`, possibly empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    lower: DVector<f64>,
    upper: DVector<f64>,
    empty: bool,
}

impl Interval {
    /// Builds `[lower, upper]`. Any axis with `lower > upper` makes the whole
    /// set empty; the bounds are kept for diagnostics.
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "interval bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument("interval dimension must be at least 1".into()));
        }
        if lower.iter().chain(upper.iter()).any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("interval bound is NaN".into()));
        }
        let empty = lower.iter().zip(upper.iter()).any(|(l, u)| l > u);
        Ok(Self { lower, upper, empty })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(lower), DVector::from_column_slice(upper))
    }

    /// Degenerate box `[p, p]`.
    pub fn point(p: DVector<f64>) -> Self {
        Self {
            lower: p.clone(),
            upper: p,
            empty: false,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::point(DVector::zeros(n))
    }

    /// Origin-centered box `[-radius, radius]`.
    pub fn symmetric(radius: DVector<f64>) -> Result<Self> {
        Self::new(-radius.clone(), radius)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            lower: DVector::from_element(n, 1.0),
            upper: DVector::from_element(n, -1.0),
            empty: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn radius(&self) -> DVector<f64> {
        (&self.upper - &self.lower) * 0.5
    }

    pub fn width(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    /// Closed membership test with exact comparisons.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        if self.empty || x.len() != self.dim() {
            return false;
        }
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Membership with a per-axis slack added on both sides.
    pub fn contains_with_slack(&self, x: &DVector<f64>, slack: f64) -> bool {
        if self.empty || x.len() != self.dim() {
            return false;
        }
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (l, u))| *l - slack <= *v && *v <= *u + slack)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        if self.empty {
            return true;
        }
        !other.empty
            && self.dim() == other.dim()
            && self.lower.iter().zip(other.lower.iter()).all(|(a, b)| a >= b)
            && self.upper.iter().zip(other.upper.iter()).all(|(a, b)| a <= b)
    }

    pub fn is_origin_centered(&self, tol: f64) -> bool {
        !self.empty && self.asymmetry() <= tol
    }

    fn asymmetry(&self) -> f64 {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(l, u)| (l + u).abs())
            .fold(0.0, f64::max)
    }

    /// Interval Minkowski sum (endpoint-wise addition).
    pub fn minkowski_sum(&self, other: &Interval) -> Result<Interval> {
        check_dim("interval Minkowski sum", self.dim(), other.dim())?;
        if self.empty || other.empty {
            return Ok(Interval::empty(self.dim()));
        }
        Interval::new(&self.lower + &other.lower, &self.upper + &other.upper)
    }

    /// Pontryagin difference `self ⊖ b` for an origin-centered `b`:
    /// `[lower + b.upper, upper − b.upper]`. The result may be empty.
    pub fn pontryagin_diff(&self, b: &Interval) -> Result<Interval> {
        check_dim("Pontryagin difference", self.dim(), b.dim())?;
        if b.empty {
            return Err(Error::InvalidArgument("Pontryagin subtrahend is empty".into()));
        }
        let asymmetry = b.asymmetry();
        if asymmetry > ORIGIN_CENTER_TOL {
            return Err(Error::NotOriginCentered { asymmetry });
        }
        if self.empty {
            return Ok(Interval::empty(self.dim()));
        }
        Interval::new(&self.lower + &b.upper, &self.upper - &b.upper)
    }

    /// The same box as a zonotope with diagonal generators. Axes with zero
    /// width contribute no generator column.
    pub fn to_zonotope(&self) -> Result<Zonotope> {
        if self.empty {
            return Err(Error::InvalidArgument("cannot convert an empty interval to a zonotope".into()));
        }
        let radius = self.radius();
        let cols: Vec<usize> = (0..self.dim()).filter(|&i| radius[i] != 0.0).collect();
        let mut generators = DMatrix::zeros(self.dim(), cols.len());
        for (j, &i) in cols.iter().enumerate() {
            generators[(i, j)] = radius[i];
        }
        Zonotope::new(self.center(), generators)
    }
}

/// Zonotope `{c, G}` in generator representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self> {
        check_dim("zonotope generators", center.len(), generators.nrows())?;
        Ok(Self { center, generators })
    }

    pub fn point(center: DVector<f64>) -> Self {
        let n = center.len();
        Self {
            center,
            generators: DMatrix::zeros(n, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    /// Row-wise `Σ_i |g_i|`, the half-width of the interval hull.
    pub fn abs_generator_sum(&self) -> DVector<f64> {
        let mut gamma = DVector::zeros(self.dim());
        for col in self.generators.column_iter() {
            for (acc, g) in gamma.iter_mut().zip(col.iter()) {
                *acc += g.abs();
            }
        }
        gamma
    }

    /// Support function `h(d) = dᵀc + Σ|dᵀg_i|`.
    pub fn support(&self, direction: &DVector<f64>) -> f64 {
        let base = direction.dot(&self.center);
        base + self
            .generators
            .column_iter()
            .map(|g| direction.dot(&g).abs())
            .sum::<f64>()
    }

    /// Concatenates generator matrices and adds centers.
    pub fn minkowski_sum(&self, other: &Zonotope) -> Result<Zonotope> {
        check_dim("zonotope Minkowski sum", self.dim(), other.dim())?;
        let n = self.dim();
        let (ga, gb) = (self.num_generators(), other.num_generators());
        let mut generators = DMatrix::zeros(n, ga + gb);
        generators.columns_mut(0, ga).copy_from(&self.generators);
        generators.columns_mut(ga, gb).copy_from(&other.generators);
        Ok(Zonotope {
            center: &self.center + &other.center,
            generators,
        })
    }

    /// Image `{Mc, MG}` under a linear map.
    pub fn linear_map(&self, m: &DMatrix<f64>) -> Result<Zonotope> {
        check_dim("zonotope linear map", m.ncols(), self.dim())?;
        Ok(Zonotope {
            center: m * &self.center,
            generators: m * &self.generators,
        })
    }

    /// Tightest enclosing box, `c ± Σ|g_i|`.
    pub fn interval_hull(&self) -> Interval {
        let gamma = self.abs_generator_sum();
        Interval {
            lower: &self.center - &gamma,
            upper: &self.center + &gamma,
            empty: false,
        }
    }

    /// Cartesian product with stacked centers and block-diagonal generators.
    pub fn cartesian_product(parts: &[Zonotope]) -> Zonotope {
        let n: usize = parts.iter().map(Zonotope::dim).sum();
        let ng: usize = parts.iter().map(Zonotope::num_generators).sum();
        let mut center = DVector::zeros(n);
        let mut generators = DMatrix::zeros(n, ng);
        let (mut row, mut col) = (0, 0);
        for part in parts {
            center.rows_mut(row, part.dim()).copy_from(&part.center);
            generators
                .view_mut((row, col), (part.dim(), part.num_generators()))
                .copy_from(&part.generators);
            row += part.dim();
            col += part.num_generators();
        }
        Zonotope { center, generators }
    }

    /// Point `c + G t` for coefficients `t ∈ [-1, 1]^{n_g}`.
    pub fn sample(&self, coefficients: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.generators * coefficients
    }
}

fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
