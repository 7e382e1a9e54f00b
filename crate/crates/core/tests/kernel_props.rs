use depthsep::audit::audit_l_standard;
use depthsep::dist::{signs_from_index, InputDistribution};
use depthsep::init::{xavier_init_scaled, WeightScale};
use depthsep::kernel::{
    depth2_to_kernel, feature_correlations, feature_map_from_family, grad_at_zero_check, grid_search_min_hinge,
    hardness_bound, hardness_variants, min_hinge, min_hinge_labels, verify_linear_hardness, FeatureMap, KernelSolver,
};
use depthsep::net::{Layer, Mlp};
use depthsep::seed;
use depthsep::sq::{inner_product, parity_family, BooleanFn};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

const TOL: f64 = 1e-3;

fn signs(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    signs_from_index(index, &mut v);
    v
}

fn solver() -> KernelSolver {
    KernelSolver::default()
}

#[test]
fn hardness_formula_values() {
    assert_eq!(hardness_bound(4, 0.0, 1024.0), 1.0);
    let v = hardness_bound(1, 1.0, 2f64.powi(72));
    assert!((v - (1.0 - (2.0 * 5f64.sqrt()).sqrt() / 64.0)).abs() < 1e-12);
    assert!((v - 0.9669).abs() < 1e-4);
    assert_eq!(hardness_bound(1, 1.0, 1.0), 0.0);
    let at_scale = hardness_variants(64, 10.0, 1024.0);
    assert_eq!((at_scale.proof_end, at_scale.statement, at_scale.exponent_one_fifth), (0.0, 0.0, 0.0));
}

#[test]
fn zero_ball_and_realizable_direction() {
    let n = 5;
    let dist = InputDistribution::UniformSigns { n };
    let target = BooleanFn::parity(n, &[0, 3]).unwrap();
    let mut psi = FeatureMap::random_signs(1 << n, 3, 2).unwrap();
    assert_eq!(min_hinge(&psi, 0.0, &target, &dist, &solver()).unwrap().loss, 1.0);
    let rows: Vec<Vec<f64>> = (0..1 << n)
        .map(|k| {
            let mut r = psi.row(k).to_vec();
            r[0] = target.value(k);
            r
        })
        .collect();
    psi = FeatureMap::from_rows(&rows).unwrap();
    for b in [1.0, 2.5] {
        let r = min_hinge(&psi, b, &target, &dist, &solver()).unwrap();
        assert!(r.loss <= TOL, "B={b}: {}", r.loss);
        assert!(r.norm <= b + 1e-9);
    }
}

#[test]
fn solver_matches_grid_on_n6_instance() {
    let n = 6;
    let dist = InputDistribution::UniformSigns { n };
    let target = BooleanFn::parity(n, &[1, 4]).unwrap();
    let labels: Vec<f64> = (0..1 << n).map(|k| target.value(k)).collect();
    for nf in 1..=3 {
        let psi = FeatureMap::random_signs(1 << n, nf, 40 + nf as u64).unwrap();
        let s = min_hinge(&psi, 5.0, &target, &dist, &solver()).unwrap();
        let (g, _) = grid_search_min_hinge(&psi, 5.0, &labels, 0.05).unwrap();
        assert!((s.loss - g).abs() <= 2e-2, "N={nf}: {} vs {g}", s.loss);
    }
}

#[test]
fn subgradient_solver_agrees_with_barrier() {
    let psi = FeatureMap::random_signs(64, 3, 8).unwrap();
    let mut rng = seed::rng(8);
    let labels: Vec<f64> = (0..64).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let a = min_hinge_labels(&psi, 2.0, &labels, &solver()).unwrap();
    let s = min_hinge_labels(&psi, 2.0, &labels, &KernelSolver::Subgradient { iterations: 20_000, window: 1000 })
        .unwrap();
    assert!(s.loss >= a.certificate.lower_bound - 1e-12);
    assert!((s.loss - a.loss).abs() <= s.certificate.regret_bound.unwrap());
    assert!(s.norm <= 2.0 + 1e-9);
}

#[test]
fn family_features_realize_members() {
    let n = 8;
    let dist = InputDistribution::UniformSigns { n };
    let family = parity_family(n).unwrap();
    let single = feature_map_from_family(&family[5..6], &dist).unwrap();
    assert_eq!(single.dim(), 1);
    assert!((0..1 << n).all(|k| single.row(k)[0] == family[5].value(k)));
    assert!(min_hinge(&single, 1.0, &family[5], &dist, &solver()).unwrap().loss <= TOL);

    // Weak-learning direction: loss <= 1 - max_i |<f_i, target>| + tol.
    let members: Vec<BooleanFn> = family.iter().step_by(17).cloned().collect();
    let psi = feature_map_from_family(&members, &dist).unwrap();
    let mut rng = seed::rng(19);
    for _ in 0..10 {
        let table: Vec<i8> = (0..1 << n)
            .map(|k| {
                let agree = members[3].value(k) as i8;
                if rng.random::<f64>() < 0.3 { -agree } else { agree }
            })
            .collect();
        let target = BooleanFn::from_table(&table).unwrap();
        let best = members.iter().map(|f| inner_product(f, &target, &dist).unwrap().abs()).fold(0.0, f64::max);
        let r = min_hinge(&psi, 1.0, &target, &dist, &solver()).unwrap();
        assert!(r.loss <= 1.0 - best + TOL, "{} vs {}", r.loss, 1.0 - best);
    }
}

#[test]
fn family_feature_average_is_realizable() {
    let n = 5;
    let dist = InputDistribution::UniformSigns { n };
    let family = parity_family(n).unwrap();
    let psi = feature_map_from_family(&family, &dist).unwrap();
    let rep = verify_linear_hardness(&psi, 1.0, &family, &dist, &solver()).unwrap();
    assert!(rep.average_loss <= TOL, "{}", rep.average_loss);
    assert_eq!(rep.bound, 0.0);
    assert!(rep.vacuous);
}

#[test]
fn gradient_at_zero_is_minus_correlation() {
    let n = 7;
    let dist = InputDistribution::UniformSigns { n };
    let family = parity_family(n).unwrap();
    let psi = FeatureMap::random_signs(1 << n, 6, 3).unwrap();
    let pairs: Vec<(usize, usize)> = (0..20).map(|t| (t % 6, (t * 29) % family.len())).collect();
    for c in grad_at_zero_check(&psi, &family, &dist, &pairs, 0.1, 1e-6).unwrap() {
        assert!((c.finite_difference + c.correlation).abs() <= 1e-6, "{c:?}");
        let direct = feature_correlations(&psi, &family[c.target], &dist).unwrap()[c.feature];
        assert_eq!(direct, c.correlation);
    }
    // Parseval: the squared correlations of one feature sum to E[Psi_i^2] = 1.
    let total: f64 = family.iter().map(|f| feature_correlations(&psi, f, &dist).unwrap()[0].powi(2)).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

fn random_depth2(n: usize, k: usize, seed: u64, lattice: Option<f64>) -> (Mlp, f64) {
    let mut rng = seed::rng(seed);
    let mut g = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect() };
    let mut hidden: Vec<Vec<f64>> = (0..k).map(|_| g(2 * n)).collect();
    if let Some(delta) = lattice {
        for row in &mut hidden {
            row[n..].iter_mut().for_each(|v| *v = delta * (*v / delta).floor());
        }
    }
    let (bias, u) = (g(k), g(k));
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let r = hidden
        .iter()
        .flat_map(|row| [norm(&row[..n]), norm(&row[n..])])
        .chain([norm(&u), norm(&bias)])
        .fold(0.0f64, f64::max);
    let net = Mlp::new(vec![Layer::from_rows(hidden, bias).unwrap(), Layer::from_rows(vec![u], vec![0.0]).unwrap()])
        .unwrap();
    (net, r)
}

#[test]
fn depth2_reduction_on_full_enumeration() {
    let (n, k, delta) = (8, 4, 0.25);
    let (net, r) = random_depth2(n, k, 77, None);
    let dk = depth2_to_kernel(&net, delta, r, n).unwrap();
    assert_eq!(dk.n_features(), k * (2 * dk.m_max as usize + 1));
    assert!((dk.rounding_bound() - r * 2.0 * 0.25 * 8.0).abs() < 1e-12);
    let mut worst_round: f64 = 0.0;
    for zi in 0..1usize << n {
        let z = signs(zi, n);
        let c = dk.coefficients(&z).unwrap();
        assert!(c.iter().map(|v| v * v).sum::<f64>().sqrt() <= dk.norm_bound());
        for xi in 0..1usize << n {
            let x = signs(xi, n);
            let kern: f64 = dk.features.row(xi).iter().zip(&c).map(|(a, b)| a * b).sum();
            let ghat = dk.rounded_eval(&x, &z);
            assert!((ghat - kern).abs() <= 1e-9);
            let g = net.forward(&[x, z.clone()].concat()).unwrap();
            worst_round = worst_round.max((g - ghat).abs());
        }
    }
    assert!(worst_round <= dk.rounding_bound());
}

#[test]
fn lattice_weights_round_to_themselves() {
    let (n, delta) = (6, 0.25);
    let (net, r) = random_depth2(n, 3, 5, Some(delta));
    let dk = depth2_to_kernel(&net, delta, r, n).unwrap();
    let mut rng = seed::rng(6);
    for _ in 0..1000 {
        let (xi, zi) = (rng.random_range(0..1usize << n), rng.random_range(0..1usize << n));
        let (x, z) = (signs(xi, n), signs(zi, n));
        let g = net.forward(&[x.clone(), z.clone()].concat()).unwrap();
        assert!((dk.rounded_eval(&x, &z) - g).abs() <= 1e-12);
        assert!((dk.kernel_eval(xi, &z).unwrap() - g).abs() <= 1e-9);
    }
}

#[test]
fn audit_passes_with_width_scaling() {
    let f = |s: u64| xavier_init_scaled(4, 64, 2, s, WeightScale::Width);
    let r = audit_l_standard(&f, 0.25, 100, 8, 1).unwrap();
    assert!(r.pass_fraction >= 0.95, "{}", r.pass_fraction);
    let r2 = audit_l_standard(&f, 0.5, 100, 8, 1).unwrap();
    for (a, b) in r.per_trial.iter().zip(&r2.per_trial) {
        assert!(b.l_theta >= a.l_theta && b.max_ratio_over_norm >= a.max_ratio_over_norm);
    }
}

fn max_offset(net: &Mlp, n: usize, delta: f64, z: &[f64]) -> i64 {
    let hidden = &net.layers()[0];
    (0..hidden.rows())
        .map(|i| {
            let v = &hidden.row(i)[n..];
            v.iter().zip(z).map(|(a, b)| (a / delta).floor() as i64 * *b as i64).sum::<i64>().abs()
        })
        .max()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn doubling_b_never_increases_loss(seed in any::<u64>(), nf in 1usize..6, b in 0.1f64..4.0) {
        let psi = FeatureMap::random_signs(64, nf, seed).unwrap();
        let mut rng = seed::rng(seed ^ 0x5a);
        let labels: Vec<f64> = (0..64).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let small = min_hinge_labels(&psi, b, &labels, &solver()).unwrap();
        let big = min_hinge_labels(&psi, 2.0 * b, &labels, &solver()).unwrap();
        prop_assert!(big.loss <= small.loss + 2.0 * TOL);
        prop_assert!(small.norm <= b + 1e-9 && big.norm <= 2.0 * b + 1e-9);
        prop_assert!(small.loss >= 0.0 && small.loss <= 1.0 + b * (nf as f64).sqrt());
    }

    #[test]
    fn solver_matches_grid_search(seed in any::<u64>(), nf in 1usize..=3, b in 0.5f64..3.0, points in 8usize..=64) {
        let psi = FeatureMap::random_signs(points, nf, seed).unwrap();
        let mut rng = seed::rng(seed ^ 0xa5);
        let labels: Vec<f64> = (0..points).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let s = min_hinge_labels(&psi, b, &labels, &solver()).unwrap();
        let (g, _) = grid_search_min_hinge(&psi, b, &labels, 0.05).unwrap();
        prop_assert!((s.loss - g).abs() <= 2e-2, "solver {} grid {}", s.loss, g);
        prop_assert!(s.loss <= g + TOL);
    }

    #[test]
    fn depth2_identity_small(seed in any::<u64>(), n in 2usize..=5, k in 1usize..=4) {
        let (net, r) = random_depth2(n, k, seed, None);
        let dk = depth2_to_kernel(&net, 0.25, r, n).unwrap();
        for zi in 0..1usize << n {
            let z = signs(zi, n);
            for xi in 0..1usize << n {
                let x = signs(xi, n);
                match dk.kernel_eval(xi, &z) {
                    Ok(kv) => prop_assert!((dk.rounded_eval(&x, &z) - kv).abs() <= 1e-9),
                    // Floor rounding can push |<v_hat, z>| past R sqrt n; those z are refused.
                    Err(_) => prop_assert!(max_offset(&net, n, 0.25, &z) > dk.m_max),
                }
                let g = net.forward(&[x, z.clone()].concat()).unwrap();
                prop_assert!((g - dk.rounded_eval(&signs(xi, n), &z)).abs() <= dk.rounding_bound());
            }
        }
    }
}
