use nalgebra::{DMatrix, DVector};
use shrinkmpc::error_sets::TightenedConstraints;
use shrinkmpc::ltv::ReferenceTrajectory;
use shrinkmpc::model::{LinearModel, OutputMap};
use shrinkmpc::optimizer::{evaluate_cost, solve_problem2, CostWeights, OcpInstance, SlSettings, SolverStatus};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use shrinkmpc::sets::Interval;

use super::DenseQp;

pub const STEPS: usize = 3;

pub struct Plant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub c: DVector<f64>,
    pub x0: DVector<f64>,
    pub d: DVector<f64>,
    pub state_set: Interval,
    pub terminal_set: Interval,
    pub input_set: Interval,
}

impl Plant {
    pub fn model(&self) -> LinearModel {
        LinearModel::new(self.a.clone(), self.b.clone(), self.v.clone(), self.c.clone()).unwrap()
    }

    pub fn output_map(&self) -> OutputMap {
        let (nx, nu) = (self.a.nrows(), self.b.ncols());
        let mut c = Vec::new();
        let mut d = Vec::new();
        let mut sets = Vec::new();
        for _ in 0..STEPS {
            let mut ck = DMatrix::zeros(nx + nu, nx);
            ck.view_mut((0, 0), (nx, nx)).fill_with_identity();
            let mut dk = DMatrix::zeros(nx + nu, nu);
            dk.view_mut((nx, 0), (nu, nu)).fill_with_identity();
            c.push(ck);
            d.push(dk);
            let lo = self.state_set.lower().iter().chain(self.input_set.lower().iter()).copied().collect::<Vec<_>>();
            let hi = self.state_set.upper().iter().chain(self.input_set.upper().iter()).copied().collect::<Vec<_>>();
            sets.push(Interval::from_slices(&lo, &hi).unwrap());
        }
        c.push(DMatrix::identity(nx, nx));
        d.push(DMatrix::zeros(nx, nu));
        sets.push(self.terminal_set.clone());
        OutputMap::new(c, d, sets).unwrap()
    }

    /// The same problem condensed onto the stacked inputs: every state is an
    /// affine function `x_i = F_i U + f_i`, so both objective and constraints
    /// become explicit in `U`.
    pub fn condensed(&self, weights: &CostWeights, u_prev: &DVector<f64>) -> DenseQp {
        let (nx, nu) = (self.a.nrows(), self.b.ncols());
        let nv = nu * STEPS;
        let mut f = DMatrix::zeros(nx, nv);
        let mut offset = self.x0.clone();
        let drift = &self.v * &self.d + &self.c;
        let mut rows = Vec::new();
        let push_state = |rows: &mut Vec<(DVector<f64>, f64, f64)>, f: &DMatrix<f64>, off: &DVector<f64>, set: &Interval| {
            for r in 0..nx {
                rows.push((f.row(r).transpose(), set.lower()[r] - off[r], set.upper()[r] - off[r]));
            }
        };
        for i in 0..STEPS {
            if i > 0 {
                push_state(&mut rows, &f, &offset, &self.state_set);
            }
            for j in 0..nu {
                let a = DVector::from_fn(nv, |c, _| if c == i * nu + j { 1.0 } else { 0.0 });
                rows.push((a, self.input_set.lower()[j], self.input_set.upper()[j]));
            }
            f = &self.a * &f;
            f.view_mut((0, i * nu), (nx, nu)).copy_from(&self.b);
            offset = &self.a * offset + &drift;
        }
        push_state(&mut rows, &f, &offset, &self.terminal_set);

        // ℓ = Σ rate‖u_i − u_{i−1}‖² + Σ w_j u_{i,j}² expands to ½UᵀHU + gᵀU + const
        let mut h = DMatrix::zeros(nv, nv);
        let mut g = DVector::zeros(nv);
        for i in 0..STEPS {
            for j in 0..nu {
                let p = i * nu + j;
                h[(p, p)] += 2.0 * (weights.rate + weights.input[j]);
                if i == 0 {
                    g[p] -= 2.0 * weights.rate * u_prev[j];
                } else {
                    let q = p - nu;
                    h[(q, q)] += 2.0 * weights.rate;
                    h[(p, q)] -= 2.0 * weights.rate;
                    h[(q, p)] -= 2.0 * weights.rate;
                }
            }
        }
        DenseQp { h, g, a_eq: Vec::new(), rows }
    }
}

pub fn settings() -> SlSettings {
    SlSettings {
        output_backoff: 0.0,
        tol_cost: 1e-10,
        tol_dyn: 1e-10,
        max_iterations: 200,
        ..SlSettings::default()
    }
}

/// Solves the instance with the trajectory optimizer and returns its cost
/// next to the cost of the condensed oracle.
pub fn solver_and_oracle_cost(plant: &Plant, weights: &CostWeights, u_prev: &DVector<f64>) -> (f64, f64) {
    let model = plant.model();
    let out = plant.output_map();
    let constraints = TightenedConstraints::untightened(&out, 0);
    let d_ref = vec![plant.d.clone(); STEPS];
    let state_box = Interval::from_slices(&[-10.0, -10.0], &[10.0, 10.0]).unwrap();
    let inst = OcpInstance {
        model: &model,
        output: &out,
        constraints: &constraints,
        state_box: &state_box,
        x0: plant.x0.clone(),
        start_step: 0,
        d_ref: &d_ref,
        objective: Some(weights),
        u_prev: u_prev.clone(),
    };
    let nu = plant.b.ncols();
    let init = ReferenceTrajectory::rollout(&model, 0, plant.x0.clone(), vec![DVector::zeros(nu); STEPS], d_ref.clone()).unwrap();
    let (_, report) = solve_problem2(&inst, &init, &settings()).unwrap();
    assert_eq!(report.status, SolverStatus::Converged, "{report:?}");
    assert!(report.output_violation <= 1e-9);

    let oracle = plant.condensed(weights, u_prev);
    let (z, _) = oracle.enumerate().expect("feasible instance");
    let inputs: Vec<_> = (0..STEPS).map(|i| z.rows(i * nu, nu).into_owned()).collect();
    (report.cost, evaluate_cost(&inputs, u_prev, weights))
}


pub fn fixed_plant() -> Plant {
    Plant {
        a: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 0.9]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, 0.5]),
        v: DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
        c: DVector::from_vec(vec![0.05, 0.0]),
        x0: DVector::from_vec(vec![0.0, 0.5]),
        d: DVector::from_vec(vec![1.0]),
        state_set: Interval::from_slices(&[-1.0, -1.0], &[1.0, 0.7]).unwrap(),
        terminal_set: Interval::from_slices(&[0.3, -1.0], &[1.0, 1.0]).unwrap(),
        input_set: Interval::from_slices(&[-1.0], &[1.0]).unwrap(),
    }
}

/// Random two-input instance; `None` when its constraints admit no input
/// sequence.
pub fn random_plant(rng: &mut ChaCha8Rng) -> Option<Plant> {
    let plant = Plant {
        a: DMatrix::from_fn(2, 2, |r, c| if r == c { 0.9 } else { 0.0 } + rng.random_range(-0.2..0.2)),
        b: DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.5..0.5)),
        v: DMatrix::from_fn(2, 1, |_, _| rng.random_range(-0.1..0.1)),
        c: DVector::from_fn(2, |_, _| rng.random_range(-0.05..0.05)),
        x0: DVector::from_fn(2, |_, _| rng.random_range(-0.3..0.3)),
        d: DVector::from_element(1, 1.0),
        state_set: Interval::from_slices(&[-0.6, -0.6], &[0.6, 0.6]).unwrap(),
        terminal_set: Interval::from_slices(&[rng.random_range(-0.4..0.1), -0.2], &[0.2, rng.random_range(0.0..0.3)]).unwrap(),
        input_set: Interval::from_slices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap(),
    };
    let probe = CostWeights { rate: 1.0, input: vec![0.0, 0.0] };
    plant.condensed(&probe, &DVector::zeros(2)).enumerate().map(|_| plant)
}

pub fn random_weights(rng: &mut ChaCha8Rng) -> (CostWeights, DVector<f64>) {
    let weights = CostWeights {
        rate: rng.random_range(0.5..2.0),
        input: vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
    };
    (weights, DVector::from_fn(2, |_, _| rng.random_range(-0.8..0.8)))
}
