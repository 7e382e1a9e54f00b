use depthsep::dist::{signs_from_index, InputDistribution};
use depthsep::sq::{
    adversarial_game, certify_or_family, certify_sqdim, correlation_count_bound, correlation_count_check,
    correlation_weak_learner, hamming, hoeffding_zset, inner_product, or_family_inner_product, parity_family,
    BooleanFn, CorrelationLearner, MajorityLearner, Query, RandomQueryLearner, SqLearner, SqOracle,
};
use depthsep::LabError;
use proptest::prelude::*;
use rand::Rng;

fn signs(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    signs_from_index(index, &mut v);
    v
}

fn sign_vec(code: usize, n: usize) -> Vec<i8> {
    signs(code, n).iter().map(|&v| v as i8).collect()
}

/// `E_x[q(x, f(x))]` by direct enumeration of a closure.
fn enumerate_expectation(n: usize, q: &dyn Fn(&[f64], f64) -> f64, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    (0..1usize << n).map(|i| { let x = signs(i, n); q(&x, f(&x)) }).sum::<f64>() / (1usize << n) as f64
}

#[test]
fn parity_families_are_orthogonal() {
    for n in 1..=12 {
        let cert = certify_sqdim(&parity_family(n).unwrap(), &InputDistribution::UniformSigns { n }).unwrap();
        assert!(cert.pass, "n={n}");
        assert_eq!(cert.max_abs_inner, 0.0);
        assert_eq!(cert.d, 1 << n);
    }
}

#[test]
fn parity_family_n14_is_orthogonal() {
    let cert = certify_sqdim(&parity_family(14).unwrap(), &InputDistribution::UniformSigns { n: 14 }).unwrap();
    assert!(cert.pass);
    assert_eq!(cert.max_abs_inner, 0.0);
}

#[test]
fn basic_inner_products() {
    let dist = InputDistribution::UniformSigns { n: 3 };
    let f1 = BooleanFn::parity(3, &[0]).unwrap();
    let f12 = BooleanFn::parity(3, &[0, 1]).unwrap();
    assert_eq!(inner_product(&f1, &f1, &dist).unwrap(), 1.0);
    assert_eq!(inner_product(&f1, &f12, &dist).unwrap(), 0.0);
    assert_eq!(f12.eval(&[1.0, 1.0, -1.0]).unwrap(), 1.0);
    assert_eq!(f12.eval(&[1.0, -1.0, -1.0]).unwrap(), -1.0);
}

#[test]
fn duplicate_family_fails_certificate() {
    let f = BooleanFn::parity(4, &[1, 2]).unwrap();
    let cert = certify_sqdim(&[f.clone(), f], &InputDistribution::UniformSigns { n: 4 }).unwrap();
    assert!(!cert.pass);
    assert_eq!(cert.max_abs_inner, 1.0);
}

#[test]
fn or_family_closed_form_at_n4_by_full_enumeration() {
    let n = 4;
    let dist = InputDistribution::UniformSigns { n: 2 * n };
    for a in 0..1usize << n {
        for b in 0..1usize << n {
            let (za, zb) = (sign_vec(a, n), sign_vec(b, n));
            let fa = |xz: &[f64]| depthsep::constructions::or_parity_eval(&za, xz);
            let fb = |xz: &[f64]| depthsep::constructions::or_parity_eval(&zb, xz);
            let direct = enumerate_expectation(2 * n, &|x, y| y * fb(x), &fa);
            assert_eq!(or_family_inner_product(&za, &zb), direct);
            let (ta, tb) = (BooleanFn::or_parity(&za).unwrap(), BooleanFn::or_parity(&zb).unwrap());
            assert_eq!(inner_product(&ta, &tb, &dist).unwrap(), direct);
        }
    }
}

#[test]
fn hoeffding_set_properties() {
    let z = hoeffding_zset(48, 16, 4).unwrap();
    assert_eq!(z.len(), 16);
    for i in 0..16 {
        for j in i + 1..16 {
            assert!(hamming(&z[i], &z[j]) >= 12);
        }
    }
    assert!(certify_or_family(&z).unwrap().pass);
    assert_eq!(z, hoeffding_zset(48, 16, 4).unwrap());
    assert_eq!(hoeffding_zset(12, 1, 9).unwrap().len(), 1);
    assert!(matches!(hoeffding_zset(12, 3, 9), Err(LabError::Precondition(_))));
}

#[test]
fn weak_learner_recovers_single_coordinate() {
    let n = 10;
    let dist = InputDistribution::UniformSigns { n };
    let family = parity_family(n).unwrap();
    let target = BooleanFn::parity(n, &[3]).unwrap();
    let mut oracle = SqOracle::honest(target.clone(), &dist, 1e-3, 5).unwrap();
    let out = correlation_weak_learner(&mut oracle, &family).unwrap();
    assert_eq!(out.hypothesis, target);
    assert_eq!(out.index, 1 << 3);
    assert_eq!(oracle.queries_made(), family.len());
}

#[test]
fn weak_learner_edge_cases() {
    let n = 6;
    let dist = InputDistribution::UniformSigns { n };
    let only = vec![BooleanFn::parity(n, &[0, 2]).unwrap()];
    let target = BooleanFn::parity(n, &[5]).unwrap();
    let mut oracle = SqOracle::honest(target.clone(), &dist, 1e-3, 1).unwrap();
    assert_eq!(correlation_weak_learner(&mut oracle, &only).unwrap().index, 0);

    // Target orthogonal to every member.
    let family: Vec<BooleanFn> = (1..8).map(|m| BooleanFn::parity_mask(n, m)).collect::<Result<_, _>>().unwrap();
    let mut oracle = SqOracle::honest(target.clone(), &dist, 1e-3, 2).unwrap();
    let out = correlation_weak_learner(&mut oracle, &family).unwrap();
    assert!(oracle.log().iter().all(|r| r.answer.abs() <= 1e-3));
    let loss = 1.0 - inner_product(&out.hypothesis, &target, &dist).unwrap();
    assert!(loss >= 1.0 - 2e-3);
}

#[test]
fn correlation_count_examples() {
    let n = 10;
    let dist = InputDistribution::UniformSigns { n };
    let family: Vec<BooleanFn> = parity_family(n).unwrap().into_iter().take(100).collect();
    assert!((correlation_count_bound(0.5, 100) - 2.0 / 0.24).abs() < 1e-12);
    let h: Vec<f64> = (0..1 << n).map(|i| family[1].value(i)).collect();
    let c = correlation_count_check(&family, &dist, &h, 0.9).unwrap();
    assert_eq!(c, 1);
    // Equal mix of 8 members: each correlates at 1/8.
    let h: Vec<f64> = (0..1 << n).map(|i| (0..8).map(|j| family[j].value(i)).sum::<f64>() / 8.0).collect();
    assert!(correlation_count_check(&family, &dist, &h, 0.5).unwrap() <= 8);
    let all = parity_family(n).unwrap();
    let mut rng = depthsep::seed::rng(12);
    for _ in 0..10 {
        let h: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let c = correlation_count_check(&all, &dist, &h, 0.2).unwrap();
        assert!(c as f64 <= 2.0 / (0.04 - 1.0 / 1024.0));
    }
    assert!(matches!(correlation_count_check(&all, &dist, &h, 0.01), Err(LabError::Domain(_))));
}

fn game_learners(seed: u64, family: &[BooleanFn]) -> Vec<Box<dyn SqLearner>> {
    let probe = family.iter().skip((seed as usize * 37) % family.len()).take(4).cloned().collect();
    vec![
        Box::new(CorrelationLearner { family: probe }),
        Box::new(RandomQueryLearner { seed }),
        Box::new(MajorityLearner),
    ]
}

#[test]
fn adversarial_game_never_asserts() {
    for n in [9usize, 12] {
        let dist = InputDistribution::UniformSigns { n };
        let family = parity_family(n).unwrap();
        let d = family.len() as f64;
        let tau = d.powf(-1.0 / 3.0);
        let budget = (d.powf(1.0 / 3.0) / 8.0 + 1e-9).floor() as usize;
        assert!(budget >= 1);
        for seed in 0..50u64 {
            for mut learner in game_learners(seed, &family) {
                let g = adversarial_game(&family, &dist, learner.as_mut(), budget, tau).unwrap();
                assert!(g.loss >= 1.0 - 2.0 / d.sqrt(), "n={n} seed={seed} loss {}", g.loss);
                assert!(g.max_inconsistent as f64 <= g.inconsistent_cap);
                assert!(g.transcript.len() <= budget);
            }
        }
    }
}

#[test]
fn zero_budget_game_still_meets_floor() {
    let n = 9;
    let dist = InputDistribution::UniformSigns { n };
    let family = parity_family(n).unwrap();
    let g = adversarial_game(&family, &dist, &mut MajorityLearner, 0, 0.125).unwrap();
    assert!(g.transcript.is_empty());
    assert!(g.loss >= 1.0 - 2.0 / (512f64).sqrt());
}

#[test]
fn transcripts_serialize_and_replay() {
    let n = 9;
    let dist = InputDistribution::UniformSigns { n };
    let family = parity_family(n).unwrap();
    let play = || adversarial_game(&family, &dist, &mut RandomQueryLearner { seed: 3 }, 1, 0.125).unwrap();
    let (a, b) = (play(), play());
    let json = serde_json::to_string(&a).unwrap();
    assert_eq!(json, serde_json::to_string(&b).unwrap());
    let back: depthsep::sq::GameResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn honest_answers_within_tolerance(n in 1usize..=8, mask in any::<usize>(), seed in any::<u64>(), tau in 0.001f64..0.5) {
        let dist = InputDistribution::UniformSigns { n };
        let target = BooleanFn::parity_mask(n, mask % (1 << n)).unwrap();
        let mut oracle = SqOracle::honest(target.clone(), &dist, tau, seed).unwrap();
        let mut rng = depthsep::seed::rng(seed);
        let m = 1 << n;
        for _ in 0..8 {
            let plus: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let minus: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let q = Query::new(plus.clone(), minus.clone()).unwrap();
            let v = oracle.query(&q).unwrap();
            let truth = (0..m).map(|i| if target.value(i) > 0.0 { plus[i] } else { minus[i] }).sum::<f64>() / m as f64;
            prop_assert!((v - truth).abs() <= tau);
            prop_assert_eq!(oracle.true_expectation(&q), Some(truth));
        }
    }

    #[test]
    fn adversarial_answers_are_label_free_means(n in 2usize..=8, a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let dist = InputDistribution::UniformSigns { n };
        let family = parity_family(n).unwrap();
        let mut oracle = SqOracle::adversarial(family, &dist, 0.5).unwrap();
        // q(x, y) = clip(a x_0 + b y + c x_0 x_1 y), bounded by construction.
        let q = |x: &[f64], y: f64| ((a * x[0] + b * y + c * x[0] * x[1] * y) / 3.0).clamp(-1.0, 1.0);
        let query = Query::from_fn(&dist, q).unwrap();
        let v = oracle.query(&query).unwrap();
        let c_q = (0..1usize << n).map(|i| { let x = signs(i, n); 0.5 * (q(&x, 1.0) + q(&x, -1.0)) }).sum::<f64>()
            / (1usize << n) as f64;
        prop_assert!((v - c_q).abs() <= 1e-15);
    }

    #[test]
    fn or_closed_form_matches_enumeration(n in 1usize..=6, a in any::<usize>(), b in any::<usize>()) {
        let (za, zb) = (sign_vec(a % (1 << n), n), sign_vec(b % (1 << n), n));
        let dist = InputDistribution::UniformSigns { n: 2 * n };
        let e = inner_product(&BooleanFn::or_parity(&za).unwrap(), &BooleanFn::or_parity(&zb).unwrap(), &dist).unwrap();
        prop_assert_eq!(or_family_inner_product(&za, &zb), e);
    }

    #[test]
    fn parity_tables_match_products(n in 1usize..=10, mask in any::<usize>()) {
        let mask = mask % (1 << n);
        let f = BooleanFn::parity_mask(n, mask).unwrap();
        for i in 0..1usize << n {
            let x = signs(i, n);
            let want: f64 = (0..n).filter(|j| mask >> j & 1 == 1).map(|j| x[j]).product();
            prop_assert_eq!(f.value(i), want);
        }
    }
}
