mod common;

use common::{element_time, empty_road, oracle, random_formula, UnitTrace};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenmon_core::stl::{
    bool_signal, eval_bool, eval_robust, parse, robust_signal, Bindings, EvalContext, Formula,
};
use scenmon_core::trace::TimeInterval;

fn bindings() -> Bindings {
    Bindings::new().vehicle("X", "X").vehicle("Y", "Y")
}

fn case(seed: u64) -> (Formula, UnitTrace) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_formula(&mut rng, 4);
    let t = UnitTrace::random(&mut rng);
    (f, t)
}

fn check_against_oracle(seed: u64) {
    let (f, ut) = case(seed);
    let trace = ut.to_trace();
    let road = empty_road();
    let ctx = EvalContext::new(&trace, &road, bindings());
    let bools = bool_signal(&f, &ctx).unwrap();
    let robs = robust_signal(&f, &ctx).unwrap();
    let want_b = oracle::<bool>(&f, &ut);
    let want_r = oracle::<f64>(&f, &ut);
    for h in 0..=ut.half_len() {
        let t = element_time(h);
        let got = bools.value_at(t).unwrap();
        assert_eq!(got, want_b[h as usize], "seed {seed}, formula {f}, t = {t}");
        let r = robs.value_at(t).unwrap();
        assert_eq!(r, want_r[h as usize], "seed {seed}, formula {f}, t = {t}");
        if r != 0.0 {
            assert_eq!(r > 0.0, got, "sign mismatch: seed {seed}, formula {f}, t = {t}");
        }
    }
}

#[test]
fn agrees_with_brute_force_on_random_cases() {
    for seed in 0..1000 {
        check_against_oracle(seed);
    }
}

#[test]
fn point_queries_match_signals() {
    for seed in 2000..2050 {
        let (f, ut) = case(seed);
        let trace = ut.to_trace();
        let road = empty_road();
        let ctx = EvalContext::new(&trace, &road, bindings());
        let want = oracle::<bool>(&f, &ut);
        for &k in &ut.samples {
            assert_eq!(eval_bool(&f, &ctx, k as f64 * common::Q).unwrap(), want[2 * k as usize]);
            let r = eval_robust(&f, &ctx, k as f64 * common::Q).unwrap();
            assert_eq!(r, oracle::<f64>(&f, &ut)[2 * k as usize]);
        }
    }
}

#[test]
fn query_outside_domain_is_an_error() {
    let (f, ut) = case(1);
    let trace = ut.to_trace();
    let road = empty_road();
    let ctx = EvalContext::new(&trace, &road, bindings());
    assert!(eval_bool(&f, &ctx, -1.0).is_err());
    assert!(eval_bool(&f, &ctx, ut.end as f64 * common::Q + 1.0).is_err());
}

fn bool_series(f: &Formula, ut: &UnitTrace) -> Vec<bool> {
    let trace = ut.to_trace();
    let road = empty_road();
    let ctx = EvalContext::new(&trace, &road, bindings());
    let sig = bool_signal(f, &ctx).unwrap();
    (0..=ut.half_len()).map(|h| sig.value_at(element_time(h)).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn not_globally_is_finally_not(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_formula(&mut rng, 3);
        let ut = UnitTrace::random(&mut rng);
        let iv = TimeInterval::new(0.3, 1.2).unwrap();
        let lhs = Formula::not(Formula::globally(iv, phi.clone()));
        let rhs = Formula::finally(iv, Formula::not(phi));
        prop_assert_eq!(bool_series(&lhs, &ut), bool_series(&rhs, &ut));
    }

    #[test]
    fn wider_globally_implies_narrower(seed in any::<u64>(), a in 0u32..20, extra in 0u32..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_formula(&mut rng, 3);
        let ut = UnitTrace::random(&mut rng);
        let a = a as f64 * 0.1;
        let b = a + extra as f64 * 0.1;
        let wide = bool_series(&Formula::globally(TimeInterval::new(0.0, b).unwrap(), phi.clone()), &ut);
        let narrow = bool_series(&Formula::globally(TimeInterval::new(0.0, a).unwrap(), phi), &ut);
        for (w, n) in wide.iter().zip(&narrow) {
            prop_assert!(!w || *n);
        }
    }

    #[test]
    fn until_holds_where_rhs_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lhs = random_formula(&mut rng, 3);
        let rhs = random_formula(&mut rng, 3);
        let ut = UnitTrace::random(&mut rng);
        let u = bool_series(&Formula::until(TimeInterval::unbounded(), lhs, rhs.clone()), &ut);
        for (x, y) in u.iter().zip(bool_series(&rhs, &ut)) {
            prop_assert!(!y || *x);
        }
    }

    #[test]
    fn printing_then_parsing_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_formula(&mut rng, 5);
        prop_assert_eq!(parse(&f.to_string()).unwrap(), f);
    }
}

