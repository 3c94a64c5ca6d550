//! Generator checks against analytic moments, by Monte Carlo.

use glaa::simulation::{build_truth, generate, sign_population_moment, FKind, ScenarioSpec};
use glaa::{sample_delta, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn small_sign_spec(n: usize) -> ScenarioSpec {
    let mut spec = ScenarioSpec::scenario3(n).with_seed(5);
    spec.p = [12, 10, 1];
    spec
}

#[test]
fn half_normal_moment_oracle() {
    // E[sign(Z) Z] = E|Z| = √(2/π), checked before it is used as a fixture.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 200_000;
    let mean = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.abs()
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.005, "{mean}");
}

#[test]
fn sign_design_moment_tensor_matches_population_value() {
    let spec = small_sign_spec(100_000);
    let (data, truth) = generate(&spec).unwrap();
    let delta = sample_delta(&data.center().unwrap()).unwrap();
    let population = sign_population_moment(&spec, &truth);
    let err = delta.sub(&population).unwrap().max_abs();
    assert!(err < 0.02, "max error {err}");
}

#[test]
fn conditional_cross_covariance_given_positive_index() {
    let spec = small_sign_spec(100_000);
    let (data, truth) = generate(&spec).unwrap();
    let (p1, p2) = (spec.p[0], spec.p[1]);
    let mut sum = Matrix::zeros(p1, p2);
    let mut count = 0usize;
    for i in 0..spec.n {
        if data.z()[(i, 0)] > 0.0 {
            sum += data.x().row(i).transpose() * data.y().row(i);
            count += 1;
        }
    }
    let empirical = sum / count as f64;
    let rho = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(&spec.rho));
    let analytic = &truth.gamma_raw[0] * rho * truth.gamma_raw[1].transpose();
    // Entry standard deviations are at most about 1/√count.
    let err = (&empirical - &analytic).amax();
    assert!(err < 6.0 / (count as f64).sqrt(), "max error {err} over {count} draws");
}

#[test]
fn zero_association_gives_independent_blocks() {
    let mut spec = small_sign_spec(4_000);
    spec.rho = vec![0.0, 0.0];
    let (data, truth) = generate(&spec).unwrap();
    let u = data.x() * &truth.gamma_raw[0];
    let v = data.y() * &truth.gamma_raw[1];
    let cross = u.transpose() * v / spec.n as f64;
    assert!(cross.amax() < 4.0 / (spec.n as f64).sqrt(), "{cross}");
}

#[test]
fn sigmoid_design_regresses_to_tanh_scale() {
    // With a steep sigmoid the design approaches the sign design.
    let mut spec = small_sign_spec(50_000);
    spec.f_kind = FKind::Sigmoid { xi: 50.0 };
    let truth = build_truth(&spec).unwrap();
    let (data, _) = generate(&spec).unwrap();
    let delta = sample_delta(&data.center().unwrap()).unwrap();
    let population = sign_population_moment(&spec, &truth);
    assert!(delta.sub(&population).unwrap().max_abs() < 0.03);
}
