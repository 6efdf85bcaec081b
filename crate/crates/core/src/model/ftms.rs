//! Dual-tank aircraft fuel thermal management system (FTMS).
//!
//! States `x = (M₁, M₂, T₁)`: recirculation tank mass, reservoir tank mass
//! and recirculation fuel temperature. Inputs `u = (α, β)`: recirculation
//! fraction and relative air-cycle-machine load. Disturbance `d = Q̇_hv`, the
//! time-varying vapor-cycle heat input. Continuous dynamics:
//!
//! ```text
//! Ṁ₁ = (1 − α)ṁ_f − ṁ_e
//! Ṁ₂ = −(1 − α)ṁ_f
//! Ṫ₁ = (ṁ_f − ṁ_e)/M₁ · [(1 − α)(T₂ − T₁) + Q̇_in/(c_v ṁ_f)] − β Q̇ᴹ_out/(c_v M₁)
//! Q̇_in = Q̇_F + Q̇_hv + Q̇_he + P_p + K_Qh ṁ_f
//! ```
//!
//! discretized with forward Euler at the sample time. `T₂` is a constant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Jacobians, Model, ModelSignature, OutputMap};
use crate::error::{Error, Result};
use crate::range::ScalarRange;
use crate::sets::Interval;

const M1: usize = 0;
const T1: usize = 2;
const ALPHA: usize = 3;
const BETA: usize = 4;
const QHV: usize = 5;

/// Physical parameters and operating bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtmsParams {
    /// Initial recirculation tank mass M₁₀ \[kg\].
    pub m1_initial: f64,
    /// Initial reservoir tank mass M₂₀ \[kg\].
    pub m2_initial: f64,
    /// Initial recirculation temperature T₁₀ \[K\].
    pub t1_initial: f64,
    /// Reservoir fuel temperature T₂ \[K\], held constant.
    pub t2: f64,
    /// Pumped fuel flow ṁ_f \[kg/s\].
    pub pump_flow: f64,
    /// Engine fuel flow ṁ_e \[kg/s\].
    pub engine_flow: f64,
    /// Fuel specific heat c_v \[J/(kg·K)\].
    pub specific_heat: f64,
    /// FADEC heat input Q̇_F \[W\].
    pub fadec_heat: f64,
    /// Nominal VCS heat input Q̇_hv \[W\].
    pub vcs_heat_nominal: f64,
    /// Engine heat input Q̇_he \[W\].
    pub engine_heat: f64,
    /// Maximum ACM load Q̇ᴹ_out \[W\].
    pub acm_max_load: f64,
    /// Fuel pump power P_p \[W\].
    pub pump_power: f64,
    /// Pump heat input coefficient K_Qh \[W·s/kg\].
    pub pump_heat_coeff: f64,
    pub mass_bounds: (f64, f64),
    pub temperature_bounds: (f64, f64),
    pub alpha_bounds: (f64, f64),
    pub beta_bounds: (f64, f64),
}

impl Default for FtmsParams {
    fn default() -> Self {
        Self {
            m1_initial: 200.0,
            m2_initial: 2850.0,
            t1_initial: 288.0,
            t2: 288.0,
            pump_flow: 1.0,
            engine_flow: 0.26,
            specific_heat: 2010.0,
            fadec_heat: 1000.0,
            vcs_heat_nominal: 55000.0,
            engine_heat: 10000.0,
            acm_max_load: 120000.0,
            pump_power: 50000.0,
            pump_heat_coeff: -6618.0,
            mass_bounds: (50.0, 2850.0),
            temperature_bounds: (250.0, 333.0),
            alpha_bounds: (0.0, 1.0),
            beta_bounds: (0.0, 1.0),
        }
    }
}

impl FtmsParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m1_initial", self.m1_initial),
            ("m2_initial", self.m2_initial),
            ("t1_initial", self.t1_initial),
            ("t2", self.t2),
            ("pump_flow", self.pump_flow),
            ("engine_flow", self.engine_flow),
            ("specific_heat", self.specific_heat),
            ("fadec_heat", self.fadec_heat),
            ("vcs_heat_nominal", self.vcs_heat_nominal),
            ("engine_heat", self.engine_heat),
            ("acm_max_load", self.acm_max_load),
            ("pump_power", self.pump_power),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("FTMS parameter {name} must be positive")));
        }
        for (name, (lo, hi)) in [
            ("mass_bounds", self.mass_bounds),
            ("temperature_bounds", self.temperature_bounds),
            ("alpha_bounds", self.alpha_bounds),
            ("beta_bounds", self.beta_bounds),
        ] {
            if !(lo < hi) {
                return Err(Error::Config(format!("FTMS {name} must satisfy lower < upper")));
            }
        }
        if self.mass_bounds.0 <= 0.0 {
            return Err(Error::Config("FTMS lower mass bound must be positive".into()));
        }
        Ok(())
    }

    /// Constant part of Q̇_in, i.e. everything except Q̇_hv.
    fn fixed_heat(&self) -> f64 {
        self.fadec_heat + self.engine_heat + self.pump_power + self.pump_heat_coeff * self.pump_flow
    }
}

/// Euler-discretized FTMS plant.
#[derive(Debug, Clone)]
pub struct FtmsModel {
    params: FtmsParams,
    sample_time: f64,
}

impl FtmsModel {
    pub fn new(params: FtmsParams, sample_time: f64) -> Result<Self> {
        params.validate()?;
        if !(sample_time > 0.0 && sample_time.is_finite()) {
            return Err(Error::Config("sample time must be positive".into()));
        }
        Ok(Self { params, sample_time })
    }

    pub fn params(&self) -> &FtmsParams {
        &self.params
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_column_slice(&[self.params.m1_initial, self.params.m2_initial, self.params.t1_initial])
    }

    /// Constraint box on `(M₁, M₂, T₁)`.
    pub fn state_bounds(&self) -> Interval {
        let p = &self.params;
        Interval::from_slices(
            &[p.mass_bounds.0, p.mass_bounds.0, p.temperature_bounds.0],
            &[p.mass_bounds.1, p.mass_bounds.1, p.temperature_bounds.1],
        )
        .expect("validated bounds")
    }

    /// Constraint box on `(α, β)`.
    pub fn input_bounds(&self) -> Interval {
        let p = &self.params;
        Interval::from_slices(&[p.alpha_bounds.0, p.beta_bounds.0], &[p.alpha_bounds.1, p.beta_bounds.1])
            .expect("validated bounds")
    }

    /// Outputs `y_k = (x_k, u_k)` constrained to the state and input boxes
    /// for `k < N`; the terminal output is `x_N` alone.
    pub fn output_map(&self, horizon: usize) -> Result<OutputMap> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        let xb = self.state_bounds();
        let ub = self.input_bounds();
        let mut stage_c = DMatrix::zeros(5, 3);
        stage_c.view_mut((0, 0), (3, 3)).fill_with_identity();
        let mut stage_d = DMatrix::zeros(5, 2);
        stage_d.view_mut((3, 0), (2, 2)).fill_with_identity();
        let stage_y = Interval::new(
            DVector::from_iterator(5, xb.lower().iter().chain(ub.lower().iter()).copied()),
            DVector::from_iterator(5, xb.upper().iter().chain(ub.upper().iter()).copied()),
        )?;

        let mut c = vec![stage_c; horizon];
        let mut d = vec![stage_d; horizon];
        let mut y = vec![stage_y; horizon];
        c.push(DMatrix::identity(3, 3));
        d.push(DMatrix::zeros(3, 2));
        y.push(xb);
        OutputMap::new(c, d, y)
    }

    /// Continuous-time derivative `f_ct(x, u, d)`.
    pub fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x, u, d)?;
        let p = &self.params;
        let (m1, t1) = (x[0], x[2]);
        let (alpha, beta) = (u[0], u[1]);
        if m1 <= 0.0 {
            return Err(Error::Singularity(format!("recirculation tank mass M1 = {m1} is not positive")));
        }
        let recirc = 1.0 - alpha;
        let q_in = p.fixed_heat() + d[0];
        let dm1 = recirc * p.pump_flow - p.engine_flow;
        let dm2 = -recirc * p.pump_flow;
        let dt1 = (p.pump_flow - p.engine_flow) / m1 * (recirc * (p.t2 - t1) + q_in / (p.specific_heat * p.pump_flow))
            - beta * p.acm_max_load / (p.specific_heat * m1);
        Ok(DVector::from_column_slice(&[dm1, dm2, dt1]))
    }

    fn check_dims(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<()> {
        for (context, expected, found) in [
            ("FTMS state", 3, x.len()),
            ("FTMS input", 2, u.len()),
            ("FTMS disturbance", 1, d.len()),
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

impl Model for FtmsModel {
    fn signature(&self) -> ModelSignature {
        ModelSignature {
            n_x: 3,
            n_u: 2,
            n_d: 1,
            n_y: 5,
        }
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<DVector<f64>> {
        let rate = self.derivative(x, u, d)?;
        Ok(x + rate * self.sample_time)
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> Result<Jacobians> {
        self.check_dims(x, u, d)?;
        let p = &self.params;
        let ts = self.sample_time;
        let (m1, t1) = (x[0], x[2]);
        let (alpha, beta) = (u[0], u[1]);
        if m1 <= 0.0 {
            return Err(Error::Singularity(format!("recirculation tank mass M1 = {m1} is not positive")));
        }
        let net = p.pump_flow - p.engine_flow;
        let q_acm = p.acm_max_load / p.specific_heat;
        let w = net * ((1.0 - alpha) * (p.t2 - t1) + (p.fixed_heat() + d[0]) / (p.specific_heat * p.pump_flow))
            - beta * q_acm;

        let mut a = DMatrix::identity(3, 3);
        a[(2, 0)] = -ts * w / (m1 * m1);
        a[(2, 2)] = 1.0 - ts * net * (1.0 - alpha) / m1;

        let mut b = DMatrix::zeros(3, 2);
        b[(0, 0)] = -ts * p.pump_flow;
        b[(1, 0)] = ts * p.pump_flow;
        b[(2, 0)] = -ts * net * (p.t2 - t1) / m1;
        b[(2, 1)] = -ts * q_acm / m1;

        let mut v = DMatrix::zeros(3, 1);
        v[(2, 0)] = ts * net / (m1 * p.specific_heat * p.pump_flow);

        Ok(Jacobians { a, b, v })
    }

    /// The mass equations are affine in `(x, u, d)`, so their Hessians are
    /// zero. The temperature equation is `T₁ + T_s W/M₁` with `W` bilinear
    /// in `(α, T₁)`; its second derivatives are bounded with interval
    /// arithmetic over the box.
    fn hessian_abs_max(&self, domain: &Interval) -> Result<Vec<DMatrix<f64>>> {
        if domain.dim() != 6 {
            return Err(Error::DimensionMismatch {
                context: "FTMS Hessian domain",
                expected: 6,
                found: domain.dim(),
            });
        }
        if domain.is_empty() {
            return Err(Error::InvalidArgument("Hessian domain is empty".into()));
        }
        let p = &self.params;
        let ts = self.sample_time;
        let range = |i: usize| ScalarRange::new(domain.lower()[i], domain.upper()[i]);
        let m1 = range(M1)?;
        let t1 = range(T1)?;
        let alpha = range(ALPHA)?;
        let beta = range(BETA)?;
        let qhv = range(QHV)?;

        let net = p.pump_flow - p.engine_flow;
        let q_acm = p.acm_max_load / p.specific_heat;
        let heat_scale = 1.0 / (p.specific_heat * p.pump_flow);

        let recirc = ScalarRange::point(1.0) - alpha;
        let dt = ScalarRange::point(p.t2) - t1;
        let heat = (qhv + ScalarRange::point(p.fixed_heat())).scale(heat_scale);
        let w = (recirc * dt + heat).scale(net) - beta.scale(q_acm);

        let inv = m1.recip()?;
        let inv2 = inv * inv;
        let inv3 = inv2 * inv;

        let mut h = DMatrix::zeros(6, 6);
        let mut set = |r: usize, c: usize, value: ScalarRange| {
            let bound = ts * value.abs_sup();
            h[(r, c)] = bound;
            h[(c, r)] = bound;
        };
        set(M1, M1, w.scale(2.0) * inv3);
        // ∂W/∂T₁ = −net(1 − α), ∂W/∂α = −net(T₂ − T₁), ∂W/∂β = −q, ∂W/∂Q = net/(c_v ṁ_f)
        set(M1, T1, recirc.scale(net) * inv2);
        set(M1, ALPHA, dt.scale(net) * inv2);
        set(M1, BETA, inv2.scale(q_acm));
        set(M1, QHV, inv2.scale(net * heat_scale));
        set(T1, ALPHA, inv.scale(net));

        Ok(vec![DMatrix::zeros(6, 6), DMatrix::zeros(6, 6), h])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn model(ts: f64) -> FtmsModel {
        FtmsModel::new(FtmsParams::default(), ts).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            v(&[rng.random_range(60.0..2800.0), rng.random_range(60.0..2800.0), rng.random_range(260.0..330.0)]),
            v(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]),
            v(&[rng.random_range(27500.0..82500.0)]),
        )
    }

    #[test]
    fn full_recirculation_step() {
        let x = model(100.0).step(&v(&[200.0, 2850.0, 288.0]), &v(&[1.0, 0.0]), &v(&[55000.0])).unwrap();
        assert!((x[0] - 174.0).abs() < 1e-12);
        assert_eq!(x[1], 2850.0);
    }

    #[test]
    fn heats_without_cooling_at_equal_tank_temperatures() {
        let m = model(100.0);
        let rate = m.derivative(&v(&[200.0, 2850.0, 288.0]), &v(&[0.3, 0.0]), &v(&[55000.0])).unwrap();
        let p = FtmsParams::default();
        let q_in = 1000.0 + 55000.0 + 10000.0 + 50000.0 - 6618.0;
        let expected = (p.pump_flow - p.engine_flow) / 200.0 * q_in / (p.specific_heat * p.pump_flow);
        assert!(rate[2] > 0.0);
        assert!((rate[2] - expected).abs() < 1e-15);
    }

    #[test]
    fn matches_independent_transcription() {
        // Reference values from a separate scripted evaluation of the
        // Euler-discretized dynamics.
        let m = model(100.0);
        let x = m.step(&v(&[200.0, 2850.0, 288.0]), &v(&[0.5, 0.5]), &v(&[55000.0])).unwrap();
        assert!((x[0] - 224.0).abs() < 1e-12);
        assert!((x[1] - 2800.0).abs() < 1e-12);
        assert!((x[2] - 293.2096218905473).abs() < 1e-9);
        let y = m.step(&v(&[150.0, 1000.0, 300.0]), &v(&[0.3, 0.7]), &v(&[40000.0])).unwrap();
        assert!((y[0] - 194.0).abs() < 1e-12);
        assert!((y[1] - 930.0).abs() < 1e-12);
        assert!((y[2] - 291.1603714759536).abs() < 1e-9);
    }

    #[test]
    fn singular_mass_is_an_error() {
        let m = model(100.0);
        assert!(matches!(
            m.step(&v(&[0.0, 2850.0, 288.0]), &v(&[0.5, 0.5]), &v(&[55000.0])),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn total_mass_drops_by_engine_flow() {
        let m = model(50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (x, u, d) = random_point(&mut rng);
            let next = m.step(&x, &u, &d).unwrap();
            let drop = (x[0] + x[1]) - (next[0] + next[1]);
            assert!((drop - 50.0 * 0.26).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobians_match_central_differences() {
        let m = model(100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (x, u, d) = random_point(&mut rng);
            let jac = m.jacobians(&x, &u, &d).unwrap();
            let mut z: Vec<f64> = x.iter().chain(u.iter()).chain(d.iter()).copied().collect();
            for col in 0..6 {
                let h = 1e-5 * z[col].abs().max(1.0);
                let orig = z[col];
                z[col] = orig + h;
                let fp = m.step(&v(&z[0..3]), &v(&z[3..5]), &v(&z[5..6])).unwrap();
                z[col] = orig - h;
                let fm = m.step(&v(&z[0..3]), &v(&z[3..5]), &v(&z[5..6])).unwrap();
                z[col] = orig;
                let fd = (fp - fm) / (2.0 * h);
                for row in 0..3 {
                    let exact = match col {
                        0..=2 => jac.a[(row, col)],
                        3..=4 => jac.b[(row, col - 3)],
                        _ => jac.v[(row, 0)],
                    };
                    let scale = exact.abs().max(1e-6);
                    assert!(
                        (fd[row] - exact).abs() <= 1e-4 * scale + 1e-9,
                        "entry ({row},{col}): fd {} exact {}",
                        fd[row],
                        exact
                    );
                }
            }
        }
    }

    #[test]
    fn symbolic_jacobian_entries() {
        let m = model(100.0);
        let x = v(&[300.0, 1500.0, 310.0]);
        let jac = m.jacobians(&x, &v(&[0.4, 0.6]), &v(&[55000.0])).unwrap();
        assert_eq!(jac.b[(0, 0)], -100.0 * 1.0);
        let expected = 100.0 * (1.0 - 0.26) / (300.0 * 2010.0 * 1.0);
        assert!((jac.v[(2, 0)] - expected).abs() < 1e-18);
        assert_eq!(jac.v[(0, 0)], 0.0);
        assert_eq!(jac.v[(1, 0)], 0.0);
    }

    #[test]
    fn mass_hessians_are_zero_constants() {
        let m = model(100.0);
        let boxed = Interval::from_slices(
            &[100.0, 500.0, 280.0, 0.2, 0.1, 40000.0],
            &[300.0, 900.0, 320.0, 0.9, 0.8, 70000.0],
        )
        .unwrap();
        let h = m.hessian_abs_max(&boxed).unwrap();
        assert_eq!(h[0], DMatrix::zeros(6, 6));
        assert_eq!(h[1], DMatrix::zeros(6, 6));
    }

    /// Central-difference Hessian of the temperature component. The affine
    /// `T₁` term of the Euler map is dropped to keep rounding noise down.
    fn fd_hessian(m: &FtmsModel, z: &[f64]) -> DMatrix<f64> {
        let f = |z: &[f64]| m.sample_time() * m.derivative(&v(&z[0..3]), &v(&z[3..5]), &v(&z[5..6])).unwrap()[2];
        let steps = [1e-1, 1.0, 1e-2, 1e-3, 1e-3, 10.0];
        let mut h = DMatrix::zeros(6, 6);
        for r in 0..6 {
            for c in 0..6 {
                let (hr, hc) = (steps[r], steps[c]);
                let eval = |dr: f64, dc: f64| {
                    let mut p = z.to_vec();
                    p[r] += dr;
                    p[c] += dc;
                    f(&p)
                };
                h[(r, c)] = (eval(hr, hc) - eval(hr, -hc) - eval(-hr, hc) + eval(-hr, -hc)) / (4.0 * hr * hc);
            }
        }
        h
    }

    #[test]
    fn point_box_hessian_matches_exact() {
        let m = model(100.0);
        let z = [250.0, 1200.0, 300.0, 0.6, 0.4, 60000.0];
        let boxed = Interval::point(v(&z));
        let h = &m.hessian_abs_max(&boxed).unwrap()[2];
        let fd = fd_hessian(&m, &z);
        for r in 0..6 {
            for c in 0..6 {
                let exact = fd[(r, c)].abs();
                assert!(
                    (h[(r, c)] - exact).abs() <= 1e-4 * exact + 1e-7,
                    "({r},{c}) bound {} vs fd {}",
                    h[(r, c)],
                    exact
                );
            }
        }
    }

    #[test]
    fn hessian_bound_dominates_sampled_hessians() {
        let m = model(100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let lo = [
                rng.random_range(80.0..400.0),
                rng.random_range(100.0..2000.0),
                rng.random_range(270.0..320.0),
                rng.random_range(0.0..0.5),
                rng.random_range(0.0..0.5),
                rng.random_range(30000.0..60000.0),
            ];
            let width = [50.0, 200.0, 10.0, 0.3, 0.3, 20000.0];
            let hi: Vec<f64> = lo.iter().zip(width).map(|(l, w)| l + w).collect();
            let boxed = Interval::from_slices(&lo, &hi).unwrap();
            let bound = &m.hessian_abs_max(&boxed).unwrap()[2];
            for _ in 0..20 {
                let z: Vec<f64> = (0..6).map(|i| rng.random_range(lo[i]..hi[i])).collect();
                let fd = fd_hessian(&m, &z);
                for r in 0..6 {
                    for c in 0..6 {
                        let slack = 1e-4 * fd[(r, c)].abs() + 1e-7;
                        assert!(bound[(r, c)] + slack >= fd[(r, c)].abs(), "({r},{c}) {} {}", bound[(r, c)], fd[(r, c)]);
                    }
                }
            }
        }
    }

    #[test]
    fn hessian_straddling_zero_mass_errors() {
        let m = model(100.0);
        let boxed = Interval::from_slices(&[-1.0, 0.0, 280.0, 0.0, 0.0, 0.0], &[10.0, 1.0, 290.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(m.hessian_abs_max(&boxed), Err(Error::Singularity(_))));
    }

    #[test]
    fn output_map_shapes() {
        let m = model(100.0);
        let out = m.output_map(10).unwrap();
        assert_eq!(out.horizon(), 10);
        assert_eq!(out.n_y(0), 5);
        assert_eq!(out.n_y(10), 3);
        let y = out.output(0, &m.initial_state(), Some(&v(&[0.0, 0.0])));
        assert_eq!(y, v(&[200.0, 2850.0, 288.0, 0.0, 0.0]));
        assert!(out.set(0).contains(&y));
        let bad = out.output(0, &m.initial_state(), Some(&v(&[1.5, 0.0])));
        assert!(!out.set(0).contains(&bad));
    }
}
