use approx::assert_abs_diff_eq;
use liebracket::dynamics::{estimate_lipschitz, SampleBox, Vector};
use liebracket::lbs::build_lbs;
use liebracket::scenarios::{example_lbs_coefficient, example_system, lipschitz_table};
use liebracket::stability::{
    contraction_factor, derived_alpha_beta, exponent_profile, omega_star, select_budget, StabilityBudget,
};
use liebracket::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn feasible_budgets_give_valid_envelopes(alpha_bar in 1.0..5.0f64, beta_bar in 0.1..5.0f64, t_f in 0.05..5.0f64, frac in 0.01..0.99f64) {
        let decay = alpha_bar * (-beta_bar * t_f).exp();
        prop_assume!(decay < 0.99);
        let d = frac * (1.0 - decay);
        let (alpha, beta) = derived_alpha_beta(alpha_bar, beta_bar, t_f, d).unwrap();
        prop_assert!(alpha >= 1.0);
        prop_assert!(beta > 0.0 && beta < beta_bar);
    }

    #[test]
    fn omega_star_monotone(l in 0.5..20.0f64, t_f in 0.1..2.0f64, d in 0.05..0.9f64) {
        let w = |l: f64, t: f64, d: f64| omega_star(l, 2, t, d, 1.0, 0.5).unwrap().log10;
        prop_assert!(w(l * 1.5, t_f, d) > w(l, t_f, d));
        prop_assert!(w(l, t_f * 1.5, d) > w(l, t_f, d));
        prop_assert!(w(l, t_f, d / 1.5) > w(l, t_f, d));
    }
}

#[test]
fn default_budget_is_strictly_feasible() {
    let b = select_budget(1.0, 2.5, Some(1.0)).unwrap();
    let q = contraction_factor(1.0, 2.5, b.t_f, b.d).unwrap();
    assert!(q > 0.0 && q < 1.0);
    assert!(b.d > 0.0);
    assert!(matches!(select_budget(2.0, 1.0, Some(0.1)), Err(Error::Infeasible(_))));
}

#[test]
fn hand_arithmetic_alpha_beta() {
    let q = (-2.5f64).exp() + 0.3;
    let (alpha, beta) = derived_alpha_beta(1.0, 2.5, 1.0, 0.3).unwrap();
    assert_abs_diff_eq!(alpha, 1.3 / q, epsilon = 1e-12);
    assert_abs_diff_eq!(beta, -q.ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(alpha, 3.4024, epsilon = 1e-3);
    assert_abs_diff_eq!(beta, 0.9622, epsilon = 1e-3);
}

#[test]
fn example_certificate() {
    let table = lipschitz_table(2.0, -3.0, 0.5).unwrap();
    let profile = exponent_profile(&[0.5, 0.5]).unwrap();
    let c = StabilityBudget::certify(1.0, 2.5, None, None, table.l_max, &profile).unwrap();
    assert!(c.log10_omega_star > 10.0);
    assert_eq!(c.p_star, 0.5);
    let small = StabilityBudget::certify(1.0, 2.5, None, None, 1e-3, &profile).unwrap();
    assert!(small.log10_omega_star >= 0.0 && small.log10_omega_star < c.log10_omega_star);
}

#[test]
fn averaged_drift_matches_closed_form_on_probes() {
    let sys = example_system(2.0, -3.0, 0.5).unwrap();
    let lbs = build_lbs(&sys).unwrap();
    let c = example_lbs_coefficient(2.0, -3.0, 0.5).coefficient;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x = rng.gen_range(0.1..10.0) * if rng.gen() { 1.0 } else { -1.0 };
        let v = lbs.drift().value(0.0, &Vector::from_element(1, x))[0];
        assert!((v / (c * x) - 1.0).abs() < 1e-4, "x = {x}: {v}");
    }
}

#[test]
fn sampled_lipschitz_below_closed_form() {
    let sys = example_system(2.0, -3.0, 0.5).unwrap();
    let table = lipschitz_table(2.0, -3.0, 0.5).unwrap();
    for i in 1..=2 {
        for region in [SampleBox::cube(1, 1e-3, 4.0), SampleBox::cube(1, -4.0, -1e-3), SampleBox::cube(1, -1.0, 1.0)] {
            let est = estimate_lipschitz(sys.field(i), &region, 2, 300, 5).unwrap();
            assert!(est <= table.first[i] + 1e-6, "f{i}: {est}");
        }
    }
}
