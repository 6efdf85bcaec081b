#![allow(dead_code)]

pub mod ocp;
pub mod remainder;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use shrinkmpc::qp::QpProblem;
use shrinkmpc::sets::Zonotope;
use rand_chacha::ChaCha8Rng;

/// Strictly convex QP `min ½zᵀHz + gᵀz` s.t. `a_eq z = b_eq`,
/// `lo ≤ rows z ≤ hi`, in dense form.
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: Vec<(DVector<f64>, f64)>,
    pub rows: Vec<(DVector<f64>, f64, f64)>,
}

impl DenseQp {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    pub fn feasible(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.a_eq.iter().all(|(a, b)| (a.dot(z) - b).abs() <= tol)
            && self.rows.iter().all(|(a, lo, hi)| {
                let v = a.dot(z);
                v >= lo - tol && v <= hi + tol
            })
    }

    /// Minimizer by brute force over every choice of active constraint
    /// sides. For a strictly convex objective the true minimizer solves the
    /// equality-constrained problem of its own active set, and every other
    /// feasible candidate has a larger objective.
    pub fn enumerate(&self) -> Option<(DVector<f64>, f64)> {
        let n = self.g.len();
        let m = self.rows.len();
        let mut best: Option<(DVector<f64>, f64)> = None;
        for code in 0..3usize.pow(m as u32) {
            let mut active: Vec<(DVector<f64>, f64)> = self.a_eq.clone();
            let mut c = code;
            let mut skip = false;
            for (a, lo, hi) in &self.rows {
                match c % 3 {
                    1 if lo.is_finite() => active.push((a.clone(), *lo)),
                    2 if hi.is_finite() => active.push((a.clone(), *hi)),
                    0 => {}
                    _ => skip = true,
                }
                c /= 3;
            }
            if skip || active.len() > n {
                continue;
            }
            let p = active.len();
            let mut kkt = DMatrix::zeros(n + p, n + p);
            let mut rhs = DVector::zeros(n + p);
            kkt.view_mut((0, 0), (n, n)).copy_from(&self.h);
            for (r, (a, b)) in active.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = a[j];
                    kkt[(j, n + r)] = a[j];
                }
                rhs[n + r] = *b;
            }
            for j in 0..n {
                rhs[j] = -self.g[j];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            if sol.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let z = sol.rows(0, n).into_owned();
            if !self.feasible(&z, 1e-10) {
                continue;
            }
            let f = self.objective(&z);
            if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                best = Some((z, f));
            }
        }
        best
    }
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    m.transpose() * m + DMatrix::identity(n, n) * 0.1
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

fn sparse(a: &DVector<f64>) -> Vec<(usize, f64)> {
    a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect()
}

pub fn to_problem(d: &DenseQp, bounds: &[(f64, f64)]) -> QpProblem {
    let mut qp = QpProblem::from_dense(&d.h, &d.g);
    for (a, b) in &d.a_eq {
        qp.add_equality(sparse(a), *b);
    }
    // the first rows are unit vectors standing for variable bounds
    let n = d.g.len();
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        qp.set_bounds(i, lo, hi);
    }
    for (a, lo, hi) in &d.rows[n..] {
        qp.add_constraint(sparse(a), *lo, *hi);
    }
    qp
}

pub fn random_case(rng: &mut ChaCha8Rng, with_equality: bool) -> (DenseQp, Vec<(f64, f64)>) {
    let n = rng.random_range(2..=4);
    let h = random_spd(rng, n);
    let g = random_vector(rng, n, 3.0);
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for i in 0..n {
        let lo = rng.random_range(-1.5..0.0);
        let hi = rng.random_range(0.0..1.5);
        bounds.push((lo, hi));
        rows.push((DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 }), lo, hi));
    }
    for _ in 0..rng.random_range(0..=3) {
        let a = random_vector(rng, n, 1.0);
        let lo = rng.random_range(-1.0..0.0);
        let hi = if rng.random_bool(0.3) { f64::INFINITY } else { rng.random_range(0.0..1.0) };
        rows.push((a, lo, hi));
    }
    let a_eq = if with_equality {
        // passes through the origin, which is inside every box
        vec![(random_vector(rng, n, 1.0), 0.0)]
    } else {
        Vec::new()
    };
    (DenseQp { h, g, a_eq, rows }, bounds)
}

/// Support value by enumerating every generator sign pattern.
pub fn vertex_support(z: &Zonotope, d: &DVector<f64>) -> f64 {
    let ng = z.num_generators();
    (0..1usize << ng)
        .map(|mask| {
            let t = DVector::from_fn(ng, |i, _| if mask >> i & 1 == 1 { 1.0 } else { -1.0 });
            d.dot(&z.sample(&t))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
