use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use shrinkmpc::model::Model;
use shrinkmpc::sets::Zonotope;

/// Per-coordinate spread of generators around the FTMS operating point:
/// masses, temperature, the two inputs and the heat load.
const SPREAD: [f64; 6] = [40.0, 200.0, 12.0, 0.25, 0.25, 15000.0];

fn split(z: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    (z.rows(0, 3).into_owned(), z.rows(3, 2).into_owned(), z.rows(5, 1).into_owned())
}

/// `f(z) − f(z̄) − J(z̄)(z − z̄)` evaluated directly, along with the rounding
/// slack of that evaluation. Affine components cancel to a few ulps of
/// `|f|`, not to exactly zero.
pub fn exact_remainder(model: &dyn Model, center: &DVector<f64>, z: &DVector<f64>) -> (DVector<f64>, f64) {
    let (xc, uc, dc) = split(center);
    let (x, u, d) = split(z);
    let jac = model.jacobians(&xc, &uc, &dc).unwrap();
    let linear = model.step(&xc, &uc, &dc).unwrap() + &jac.a * (&x - &xc) + &jac.b * (&u - &uc) + &jac.v * (&d - &dc);
    let value = model.step(&x, &u, &d).unwrap();
    let slack = 16.0 * f64::EPSILON * value.amax().max(linear.amax());
    (value - linear, slack)
}

pub fn random_zonotope(rng: &mut ChaCha8Rng) -> Zonotope {
    let center = DVector::from_vec(vec![
        rng.random_range(150.0..400.0),
        rng.random_range(1500.0..2800.0),
        rng.random_range(270.0..320.0),
        rng.random_range(0.3..0.7),
        rng.random_range(0.3..0.7),
        rng.random_range(45000.0..75000.0),
    ]);
    let ng = rng.random_range(1..=8);
    let shrink = rng.random_range(0.05..1.0);
    let g = DMatrix::from_fn(6, ng, |r, _| shrink * SPREAD[r] * rng.random_range(-1.0..1.0) / ng as f64);
    Zonotope::new(center, g).unwrap()
}
