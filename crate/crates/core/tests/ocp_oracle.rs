mod common;

use common::ocp::{fixed_plant, random_plant, random_weights, solver_and_oracle_cost};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shrinkmpc::optimizer::CostWeights;

#[test]
fn three_step_problem_matches_condensed_oracle() {
    let weights = CostWeights { rate: 1.0, input: vec![0.5] };
    let (cost, oracle) = solver_and_oracle_cost(&fixed_plant(), &weights, &DVector::from_vec(vec![0.8]));
    assert!((cost - oracle).abs() <= 1e-6, "{cost} vs {oracle}");
}

#[test]
fn random_two_input_instances_match_condensed_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut done = 0;
    while done < 10 {
        let Some(plant) = random_plant(&mut rng) else { continue };
        let (weights, u_prev) = random_weights(&mut rng);
        let (cost, oracle) = solver_and_oracle_cost(&plant, &weights, &u_prev);
        assert!((cost - oracle).abs() <= 1e-6, "instance {done}: {cost} vs {oracle}");
        done += 1;
    }
}
