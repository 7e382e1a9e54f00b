//! The nine experiments. Each one reads its keys from the resolved config,
//! composes library operations, fills metrics and checks into the report
//! and returns its CSV series.

use crate::config::{ConfigError, ExperimentConfig, ExperimentId};
use crate::report::{ExperimentReport, RunOutput};
use depthsep::audit::{audit_l_standard_with_slack, LStandardReport};
use depthsep::constructions::{
    lipschitz_approx_bound, lipschitz_approx_net, or_parity_eval, or_parity_net, telgarsky_net, TelgarskyTarget,
    DEFAULT_CELL_CAP,
};
use depthsep::dist::{signs_from_index, CubeRule, InputDistribution};
use depthsep::init::{gaussian_init, xavier_init, xavier_init_scaled, WeightScale};
use depthsep::kernel::{
    depth2_to_kernel, feature_map_from_family, grad_at_zero_check, grid_search_min_hinge, min_hinge,
    min_hinge_labels, verify_linear_hardness, FeatureMap, KernelSolver,
};
use depthsep::net::{Layer, Mlp};
use depthsep::pwl::{exact_hinge_loss_vs_fn, exact_sign_hinge_loss_vs_fn, from_mlp_1d, PieceRecord};
use depthsep::seed;
use depthsep::sq::{
    adversarial_game, certify_or_family, correlation_count_bound, correlation_count_check,
    correlation_weak_learner, hamming, hoeffding_zset, inner_product, or_family_inner_product, parity_family,
    random_subset, BooleanFn, CorrelationLearner, MajorityLearner, RandomQueryLearner, SqLearner, SqOracle,
};
use depthsep::train::{gd_train, GdConfig};
use depthsep::LabError;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::json;
use std::time::Instant;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Module(LabError),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        RunError::Module(e)
    }
}

type Outcome = std::result::Result<Series, RunError>;

/// CSV series plus any extra named artifacts.
#[derive(Default)]
pub struct Series {
    pub csv: String,
    pub extra: Vec<(String, String)>,
}

impl From<String> for Series {
    fn from(csv: String) -> Self {
        Series { csv, extra: Vec::new() }
    }
}

/// Runs one experiment. Config errors are returned; library errors become a
/// failed report carrying the diagnostic.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, ConfigError> {
    let start = Instant::now();
    let mut report = ExperimentReport::new(cfg);
    let series = match dispatch(cfg, &mut report) {
        Ok(s) => s,
        Err(RunError::Config(e)) => return Err(e),
        Err(RunError::Module(e)) => {
            report.error = Some(e.to_string());
            Series::default()
        }
    };
    for (name, _) in &series.extra {
        report.artifacts.push(name.clone());
    }
    report.finish();
    Ok(RunOutput { report, series: series.csv, extra: series.extra, seconds: start.elapsed().as_secs_f64() })
}

fn dispatch(cfg: &ExperimentConfig, rep: &mut ExperimentReport) -> Outcome {
    match cfg.id {
        ExperimentId::GdFlatline => gd(cfg, rep, false),
        ExperimentId::GdSanity => gd(cfg, rep, true),
        ExperimentId::TelgarskySeparation => telgarsky(cfg, rep),
        ExperimentId::SqParityLowerBound => sq_lower(cfg, rep),
        ExperimentId::SqWeakLearn => sq_weak(cfg, rep),
        ExperimentId::KernelHardness => kernel_hardness(cfg, rep),
        ExperimentId::FFamily => f_family(cfg, rep),
        ExperimentId::LipschitzApprox => lipschitz(cfg, rep),
        ExperimentId::XavierAudit => xavier(cfg, rep),
    }
}

fn gd(cfg: &ExperimentConfig, rep: &mut ExperimentReport, sanity: bool) -> Outcome {
    let n: u32 = cfg.get("n")?;
    let depth: usize = cfg.get("depth")?;
    let width: usize = cfg.get("width")?;
    let eta: f64 = cfg.get("eta")?;
    let iterations: usize = cfg.get("iterations")?;
    let grid: usize = cfg.get("grid")?;
    let threshold: f64 = cfg.get("threshold")?;
    let root = cfg.seed()?;
    let target = TelgarskyTarget::new(n, 1)?;
    let net = xavier_init(depth, width, 1, seed::derive(root, "init"))?;
    let estimator = CubeRule::Grid { per_axis: grid };
    let dist = InputDistribution::UniformCube { dim: 1, rule: estimator.clone() };
    let gcfg = GdConfig { learning_rate: eta, iterations, seed: root, estimator };
    let f = |x: &[f64]| target.eval_unchecked(x[0]);
    let traj = gd_train(&net, &f, &dist, &gcfg)?;
    rep.constant("gd_config", serde_json::to_value(&gcfg).expect("config serializes"));
    rep.constant("initialization", "Gaussian weights with variance 1/fan-in, zero biases");
    rep.constant("quadrature", format!("1-D midpoint grid with {grid} points"));
    let (l0, lt) = (traj.initial_loss(), traj.final_loss());
    let mean = traj.mean_grad_norm();
    let last = traj.records.last().expect("records include iteration 0");
    rep.metric("initial_loss", l0, "hinge loss", "loss at initialization");
    rep.metric("final_loss", lt, "hinge loss", "loss after T steps");
    rep.metric("loss_change", (l0 - lt).abs(), "hinge loss", "|L_0 - L_T|");
    rep.metric("mean_grad_norm", mean, "euclidean norm", "mean population gradient norm over iterations 0..=T");
    rep.metric("log_mean_grad_norm", mean.ln(), "natural log of norm", "decays with n");
    rep.metric("final_param_dist", last.param_dist, "euclidean norm", "||theta_T - theta_0||");
    if sanity {
        rep.check("final_loss_below_threshold", lt < threshold, format!("L_T = {lt:.6} vs {threshold}"));
    } else {
        rep.check(
            "loss_flat",
            (l0 - lt).abs() <= threshold,
            format!("|L_0 - L_T| = {:.3e} vs {threshold:e}", (l0 - lt).abs()),
        );
    }
    Ok(traj.to_csv().into())
}

fn telgarsky(cfg: &ExperimentConfig, rep: &mut ExperimentReport) -> Outcome {
    let n: u32 = cfg.get("n")?;
    let depth: usize = cfg.get("depth")?;
    let width: usize = cfg.get("width")?;
    let nets: usize = cfg.get("nets")?;
    let std: f64 = cfg.get("weight_std")?;
    let root = cfg.seed()?;

    let deep = telgarsky_net(n)?;
    let f = from_mlp_1d(&deep, 0.0, 1.0)?;
    let deep_sign = exact_sign_hinge_loss_vs_fn(&f, n)?;
    let deep_raw = exact_hinge_loss_vs_fn(&f, n)?;
    rep.metric("deep_depth", deep.depth(), "affine maps", "deep realization depth n + 2");
    rep.metric("deep_width", deep.width(), "units", "deep realization width 2");
    rep.metric("deep_sign_loss", deep_sign, "hinge loss", "sign of the deep net equals f_n: loss 0");
    rep.metric("deep_raw_loss", deep_raw, "hinge loss", "hinge loss of the unthresholded deep net");
    rep.check("deep_realizes_target", deep_sign == 0.0, format!("sign loss {deep_sign}"));

    let sn = (n as f64).sqrt();
    let thm = (1.0 - 2f64.powf(sn) * (2.0 * width as f64).powf(sn) / 2f64.powi(n as i32)).max(0.0);
    rep.constant("shallow_bound_formula", "max(0, 1 - 2^sqrt(n) (2p)^sqrt(n) / 2^n), p = width");
    rep.constant("crossing_bound_formula", "(2^(n-1) - K) / 2^(n-1), K = sign crossings");
    rep.constant("shallow_init", format!("all weights and biases i.i.d. N(0, {std}^2)"));
    let mut csv = format!("net,{}\n", PieceRecord::CSV_HEADER);
    let (mut crossing_viol, mut thm_viol, mut piece_viol) = (0, 0, 0);
    let mut min_loss = f64::INFINITY;
    let mut max_pieces = 0;
    let mut max_cross = 0;
    for i in 0..nets {
        let net = gaussian_init(depth, width, 1, std, seed::derive_indexed(root, "shallow", i as u64))?;
        let r = PieceRecord::certify(&net, n)?;
        if r.loss < r.lower_bound - 1e-12 {
            crossing_viol += 1;
        }
        if r.loss < thm - 1e-12 {
            thm_viol += 1;
        }
        if r.pieces as f64 > r.bound {
            piece_viol += 1;
        }
        min_loss = min_loss.min(r.loss);
        max_pieces = max_pieces.max(r.pieces);
        max_cross = max_cross.max(r.crossings);
        csv.push_str(&format!("{i},{}\n", r.csv_line()));
    }
    rep.metric("shallow_bound", thm, "hinge loss", "1 - 2^sqrt(n)(2p)^sqrt(n)/2^n, clamped at 0");
    rep.metric("shallow_min_loss", min_loss, "hinge loss", "smallest exact loss of sign(shallow net)");
    rep.metric("shallow_max_pieces", max_pieces, "linear pieces", "at most 2^(L-1) k^L");
    rep.metric("shallow_max_crossings", max_cross, "sign changes", "K in the crossing bound");
    rep.metric("crossing_bound_violations", crossing_viol, "nets", "loss >= (2^(n-1) - K)/2^(n-1)");
    rep.check("crossing_bound", crossing_viol == 0, format!("{crossing_viol} of {nets} nets violate"));
    rep.check("shallow_bound", thm_viol == 0, format!("{thm_viol} of {nets} nets below {thm}"));
    rep.check("piece_bound", piece_viol == 0, format!("{piece_viol} of {nets} nets exceed 2^(L-1) k^L"));
    Ok(csv.into())
}

fn sq_lower(cfg: &ExperimentConfig, rep: &mut ExperimentReport) -> Outcome {
    let n: usize = cfg.get("n")?;
    let tau: f64 = cfg.get("tau")?;
    let budget: usize = cfg.get("budget")?;
    let seeds: usize = cfg.get("seeds")?;
    let root = cfg.seed()?;
    let dist = InputDistribution::UniformSigns { n };
    let family = parity_family(n)?;
    let d = family.len() as f64;
    let floor = 1.0 - 2.0 / d.sqrt();
    rep.constant("oracle_policy", "adversarial: every query answered with its label-free mean C_q");
    rep.constant("family", format!("all 2^{n} parities"));
    rep.constant("loss_floor_formula", "1 - 2/sqrt(d)");
    rep.constant("inconsistent_cap_formula", "4 d^(2/3)");
    let mut csv = String::from(
        "learner,seed,chosen,correlation,loss,loss_floor,max_inconsistent,inconsistent_cap,consistent_remaining\n",
    );
    let mut transcripts = Vec::new();
    let (mut min_loss, mut max_inc, mut cap) = (f64::INFINITY, 0usize, 0.0);
    let mut games = 0;
    for kind in ["correlation", "random-query", "majority"] {
        for s in 0..seeds as u64 {
            let mut learner: Box<dyn SqLearner> = match kind {
                "correlation" => {
                    let mut order: Vec<usize> = (0..family.len()).collect();
                    order.shuffle(&mut seed::rng(seed::derive_indexed(root, "correlation-order", s)));
                    let probe = order.iter().take(budget.max(1)).map(|&i| family[i].clone()).collect();
                    Box::new(CorrelationLearner { family: probe })
                }
                "random-query" => Box::new(RandomQueryLearner { seed: seed::derive_indexed(root, "random-learner", s) }),
                _ => Box::new(MajorityLearner),
            };
            let g = adversarial_game(&family, &dist, learner.as_mut(), budget, tau)?;
            min_loss = min_loss.min(g.loss);
            max_inc = max_inc.max(g.max_inconsistent);
            cap = g.inconsistent_cap;
            games += 1;
            csv.push_str(&format!(
                "{kind},{s},{},{:e},{:e},{:e},{},{:e},{}\n",
                g.chosen, g.correlation, g.loss, g.loss_floor, g.max_inconsistent, g.inconsistent_cap, g.consistent_remaining
            ));
            transcripts.push(json!({ "learner": kind, "seed": s, "game": g }));
        }
    }
    rep.metric("games", games, "games", "3 learners x seeds");
    rep.metric("loss_floor", floor, "hinge loss", "1 - 2/sqrt(d)");
    rep.metric("min_loss", min_loss, "hinge loss", "every game ends at or above the floor");
    rep.metric("max_inconsistent", max_inc, "family members", "members ruled out by one query");
    rep.metric("inconsistent_cap", cap, "family members", "4 d^(2/3)");
    rep.check("loss_floor", min_loss >= floor, format!("min loss {min_loss} vs {floor}"));
    rep.check("inconsistent_cap", max_inc as f64 <= cap, format!("max {max_inc} vs {cap}"));
    let transcripts = serde_json::to_string_pretty(&transcripts).expect("transcripts serialize") + "\n";
    Ok(Series { csv, extra: vec![("transcripts.json".into(), transcripts)] })
}

fn sq_weak(cfg: &ExperimentConfig, rep: &mut ExperimentReport) -> Outcome {
    let n: usize = cfg.get("n")?;
    let tau: f64 = cfg.get("tau")?;
    let targets: usize = cfg.get("targets")?;
    let count_n: usize = cfg.get("count_n")?;
    let count_h: usize = cfg.get("count_h")?;
    let count_taus: Vec<f64> = cfg.get_list("count_taus")?;
    let root = cfg.seed()?;
    let dist = InputDistribution::UniformSigns { n };
    let family = parity_family(n)?;
    rep.constant("oracle_policy", "honest: true expectation plus uniform noise on [-tau, tau]");
    rep.constant("tie_break", "lowest family index");
    let mut csv = String::from("kind,index,tau,value,bound\n");
    let mut recovered = 0;
    let mut max_loss: f64 = 0.0;
    let mut guarantee_viol = 0;
    for t in 0..targets as u64 {
        let mask = seed::rng(seed::derive_indexed(root, "target", t)).random_range(0..family.len());
        let target = &family[mask];
        let mut oracle = SqOracle::honest(target.clone(), &dist, tau, seed::derive_indexed(root, "oracle", t))?;
        let out = correlation_weak_learner(&mut oracle, &family)?;
        let loss = 1.0 - inner_product(&out.hypothesis, target, &dist)?;
        let guarantee = 1.0 - (out.answer.abs() - tau);
        if loss > guarantee + 1e-12 {
            guarantee_viol += 1;
        }
        if out.index == mask && out.sign > 0.0 {
            recovered += 1;
        }
        max_loss = max_loss.max(loss);
        csv.push_str(&format!("recover,{t},{tau:e},{loss:e},{guarantee:e}\n"));
    }
    rep.metric("targets", targets, "parity targets", "random parities at n");
    rep.metric("recovered", recovered, "targets", "returned member equals the target");
    rep.metric("max_loss", max_loss, "hinge loss", "loss 0 on exact recovery");
    rep.check("exact_recovery", recovered == targets && max_loss == 0.0, format!("{recovered}/{targets}, max loss {max_loss}"));
    rep.check("oracle_guarantee", guarantee_viol == 0, format!("{guarantee_viol} losses above 1 - (|answer| - tau)"));

    let cdist = InputDistribution::UniformSigns { n: count_n };
    let cfam = parity_family(count_n)?;
    let points = 1usize << count_n;
    let mut viol = 0;
    let mut max_count = 0;
    rep.constant("count_h", "even index: i.i.d. uniform on [-1,1]; odd index: signed mix of 1..8 random parities scaled into [-1,1]");
    for &ct in &count_taus {
        let bound = correlation_count_bound(ct, cfam.len());
        for i in 0..count_h as u64 {
            let mut rng = seed::rng(seed::derive_indexed(root, &format!("count-h-{ct}"), i));
            let h: Vec<f64> = if i % 2 == 0 {
                (0..points).map(|_| rng.random_range(-1.0..=1.0)).collect()
            } else {
                let k = rng.random_range(1..=8);
                let mix: Vec<(usize, f64)> =
                    (0..k).map(|_| (rng.random_range(0..cfam.len()), rng.random_range(-1.0..=1.0))).collect();
                let scale: f64 = mix.iter().map(|(_, c)| c.abs()).sum::<f64>().max(1e-12);
                (0..points).map(|x| mix.iter().map(|(j, c)| c * cfam[*j].value(x)).sum::<f64>() / scale).collect()
            };
            match correlation_count_check(&cfam, &cdist, &h, ct) {
                Ok(c) => {
                    max_count = max_count.max(c);
                    csv.push_str(&format!("count,{i},{ct:e},{c},{bound:e}\n"));
                }
                Err(LabError::Assertion(_)) => {
                    viol += 1;
                    csv.push_str(&format!("count,{i},{ct:e},violation,{bound:e}\n"));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    rep.metric("count_max", max_count, "family members", "members with |<f_j, h>| >= tau");
    rep.metric("count_violations", viol, "functions h", "count <= 2/(tau^2 - 1/d)");
    rep.check("correlation_count", viol == 0, format!("{viol} violations over {} h", count_h * count_taus.len()));
    Ok(csv.into())
}

fn kernel_hardness(cfg: &ExperimentConfig, rep: &mut ExperimentReport) -> Outcome {
    let n: usize = cfg.get("n")?;
    let features: usize = cfg.get("features")?;
    let b: f64 = cfg.get("b")?;
    let threshold: f64 = cfg.get("threshold")?;
    let xval_n: usize = cfg.get("xval_n")?;
    let xval_res: f64 = cfg.get("xval_resolution")?;
    let xval_tol: f64 = cfg.get("xval_tol")?;
    let fd_pairs: usize = cfg.get("fd_pairs")?;
    let side: usize = cfg.get("side_targets")?;
    let root = cfg.seed()?;
    let solver = match cfg.raw("solver")? {
        "barrier" => KernelSolver::Barrier { gap_tol: cfg.get("gap_tol")? },
        "subgradient" => KernelSolver::Subgradient { iterations: cfg.get("iterations")?, window: cfg.get("window")? },
        other => return Err(ConfigError(format!("unknown solver '{other}'")).into()),
    };
    let dist = InputDistribution::UniformSigns { n };
    let family = parity_family(n)?;
    let d = family.len();
    let psi = FeatureMap::random_signs(1 << n, features, seed::derive(root, "features"))?;
    rep.constant("features", "i.i.d. uniform +-1 table, one row per point of {+-1}^n");
    rep.constant("solver", serde_json::to_value(&solver).expect("solver serializes"));
    rep.constant("bound_formula", "max(0, 1 - sqrt(2 sqrt5 N) B / d^(1/12))");
    rep.constant("bound_variants", "statement: sqrt(5N) B / d^(1/12); alternative exponent: sqrt(5N) B / d^(1/5)");

    let h = verify_linear_hardness(&psi, b, &family, &dist, &solver)?;
    rep.metric("average_min_loss", h.average_loss, "hinge loss", "average over the family of min over the ball");
    rep.metric("bound", h.bound, "hinge loss", "clamped lower bound on the average");
    rep.metric("bound_vacuous", h.vacuous, "flag", "bound clamped to 0 at this size");
    rep.metric("bound_statement_variant", h.variants.statement, "hinge loss", "constant sqrt(5N)");
    rep.metric("bound_one_fifth_variant", h.variants.exponent_one_fifth, "hinge loss", "exponent 1/5");
    rep.metric("slack", h.slack, "hinge loss", "average minus bound");
    rep.metric("max_duality_gap", h.max_gap, "hinge loss", "solver certificate");
    rep.metric("mean_sq_grad_at_zero", h.mean_sq_grad_at_zero, "squared norm", "E_j ||grad G_j(0)||^2");
    rep.metric("grad_sq_ceiling", h.grad_sq_ceiling, "squared norm", "5N / d^(1/3)");
    rep.check(
        "average_loss_threshold",
        h.average_loss >= threshold,
        format!("average {:.6} vs {threshold} (bound {} clamped)", h.average_loss, h.bound),
    );

    // Grid-search cross-validation on N <= 3.
    let xfam = parity_family(xval_n)?;
    let points = 1usize << xval_n;
    let mut max_dev: f64 = 0.0;
    let mut instances = 0;
    let mut xcsv = String::new();
    for nf in 1..=3usize {
        for &bb in &[1.0, 3.0] {
            for planted in [false, true] {
                let tag = seed::derive_indexed(root, &format!("xval-{nf}-{bb}"), planted as u64);
                let mask = seed::rng(tag).random_range(1..xfam.len());
                let labels: Vec<f64> = (0..points).map(|x| xfam[mask].value(x)).collect();
                let mut table = FeatureMap::random_signs(points, nf, seed::derive(tag, "features"))?;
                if planted {
                    let mut rng = seed::rng(seed::derive(tag, "plant"));
                    let rows: Vec<Vec<f64>> = (0..points)
                        .map(|k| {
                            let mut r = table.row(k).to_vec();
                            r[0] = if rng.random::<f64>() < 0.25 { -labels[k] } else { labels[k] };
                            r
                        })
                        .collect();
                    table = FeatureMap::from_rows(&rows)?;
                }
                let s = min_hinge_labels(&table, bb, &labels, &solver)?;
                let (g, _) = grid_search_min_hinge(&table, bb, &labels, xval_res)?;
                max_dev = max_dev.max((s.loss - g).abs());
                instances += 1;
                xcsv.push_str(&format!("# xval N={nf} B={bb} planted={planted}: solver {:.6} grid {:.6}\n", s.loss, g));
            }
        }
    }
    rep.metric("xval_instances", instances, "instances", "N <= 3 on {+-1}^xval_n");
    rep.metric("xval_max_deviation", max_dev, "hinge loss", "|solver - grid search|");
    rep.check("solver_vs_grid", max_dev <= xval_tol, format!("max deviation {max_dev:.3e} vs {xval_tol}"));

    // Gradient of the regularized objective at zero.
    let mut rng = seed::rng(seed::derive(root, "fd-pairs"));
    let pairs: Vec<(usize, usize)> = (0..fd_pairs).map(|_| (rng.random_range(0..features), rng.random_range(0..d))).collect();
    let fd = grad_at_zero_check(&psi, &family, &dist, &pairs, 0.1, 1e-6)?;
    let fd_err = fd.iter().map(|c| (c.finite_difference + c.correlation).abs()).fold(0.0f64, f64::max);
    rep.metric("grad_at_zero_max_error", fd_err, "absolute", "dG_j/dw_i(0) = -E[f_j Psi_i] by central differences");
    rep.check("grad_at_zero", fd_err <= 1e-6, format!("max |fd + corr| = {fd_err:.3e}"));

    // Side measurement: features drawn from the family itself.
    let members = random_subset(d, side.min(d), seed::derive(root, "side-members"));
    let member_fns: Vec<BooleanFn> = members.iter().map(|&i| family[i].clone()).collect();
    let pf = feature_map_from_family(&member_fns, &dist)?;
    let outside: Vec<usize> = {
        let mut v: Vec<usize> = (0..d).filter(|i| !members.contains(i)).collect();
        v.shuffle(&mut seed::rng(seed::derive(root, "side-outside")));
        v.truncate(side);
        v
    };
    let avg = |idx: &[usize]| -> Result<f64, RunError> {
        let mut s = 0.0;
        for &j in idx {
            s += min_hinge(&pf, b, &family[j], &dist, &solver)?.loss;
        }
        Ok(if idx.is_empty() { 0.0 } else { s / idx.len() as f64 })
    };
    let (inside_avg, outside_avg) = (avg(&members)?, avg(&outside)?);
    let k = members.len() as f64;
    rep.metric("parity_features_inside_avg", inside_avg, "hinge loss", "side measurement: targets among the features");
    rep.metric("parity_features_outside_avg", outside_avg, "hinge loss", "side measurement: sampled targets outside the features");
    rep.metric(
        "parity_features_family_avg",
        (k * inside_avg + (d as f64 - k) * outside_avg) / d as f64,
        "hinge loss",
        "side measurement: family average extrapolated from the two groups",
    );
    let mut csv = h.to_csv();
    csv.push_str(&xcsv);
    Ok(csv.into())
}

fn signs(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    signs_from_index(index, &mut v);
    v
}

fn f_family(cfg: &ExperimentConfig, rep: &mut ExperimentReport) -> Outcome {
    let n: usize = cfg.get("n")?;
    let cmax: usize = cfg.get("closed_form_max_n")?;
    let zn: usize = cfg.get("zset_n")?;
    let zd: usize = cfg.get("zset_d")?;
    let kn: usize = cfg.get("kernel_n")?;
    let kk: usize = cfg.get("kernel_k")?;
    let delta: f64 = cfg.get("delta")?;
    let probes: usize = cfg.get("probes")?;
    let root = cfg.seed()?;
    let mut csv = String::from("n,a,b,closed_form,enumerated\n");
    rep.constant("or_convention", "+1 is true; F_z'(x,z) = product over {i : z'_i = +1} of (x_i OR z_i)");

    // Depth-3 realization against direct evaluation on all 4^n points.
    let mut mismatches = 0usize;
    let mut evaluated = 0usize;
    for code in 0..1usize << n {
        let z: Vec<i8> = signs(code, n).iter().map(|&v| v as i8).collect();
        let net = or_parity_net(&z, n)?;
        let direct = BooleanFn::or_parity(&z)?;
        for idx in 0..1usize << (2 * n) {
            let xz = signs(idx, 2 * n);
            let v = net.forward(&xz)?;
            if v != or_parity_eval(&z, &xz) || v != direct.value(idx) {
                mismatches += 1;
            }
            evaluated += 1;
        }
    }
    rep.metric("or_net_evaluations", evaluated, "points", "every z' and every (x, z) at n");
    rep.metric("or_net_mismatches", mismatches, "points", "or_parity_net equals F_z'");
    rep.check("or_net_exact", mismatches == 0, format!("{mismatches} of {evaluated}"));

    // Closed-form inner products against enumeration.
    let mut cf_mismatch = 0usize;
    let mut pairs = 0usize;
    for m in 1..=cmax {
        let zs: Vec<Vec<i8>> = (0..1usize << m).map(|c| signs(c, m).iter().map(|&v| v as i8).collect()).collect();
        let fns: Vec<BooleanFn> = zs.iter().map(|z| BooleanFn::or_parity(z)).collect::<Result<_, _>>()?;
        let pdist = InputDistribution::UniformSigns { n: 2 * m };
        for a in 0..zs.len() {
            for bi in a..zs.len() {
                let closed = or_family_inner_product(&zs[a], &zs[bi]);
                let enumerated = inner_product(&fns[a], &fns[bi], &pdist)?;
                if closed != enumerated {
                    cf_mismatch += 1;
                }
                pairs += 1;
                if m == cmax && a < 4 {
                    csv.push_str(&format!("{m},{a},{bi},{closed:e},{enumerated:e}\n"));
                }
            }
        }
    }
    rep.metric("closed_form_pairs", pairs, "pairs", "all pairs z', z'' for n <= closed_form_max_n");
    rep.metric("closed_form_mismatches", cf_mismatch, "pairs", "(1/2)^|symmetric difference| equals enumeration");
    rep.check("closed_form_exact", cf_mismatch == 0, format!("{cf_mismatch} of {pairs}"));

    // Hoeffding z-set.
    let zset = hoeffding_zset(zn, zd, seed::derive(root, "zset"))?;
    let mut min_h = usize::MAX;
    for a in 0..zset.len() {
        for bi in a + 1..zset.len() {
            min_h = min_h.min(hamming(&zset[a], &zset[bi]));
        }
    }
    let cert = certify_or_family(&zset)?;
    let need = zn as f64 / 4.0;
    rep.metric("zset_min_hamming", min_h, "coordinates", "pairwise Hamming >= n/4");
    rep.metric("zset_max_inner_product", cert.max_abs_inner, "inner product", "closed form; below 1/d certifies");
    rep.check("zset_hamming", min_h as f64 >= need, format!("min {min_h} vs {need}"));
    rep.check("zset_sqdim", cert.pass, format!("max {} vs 1/{zd}", cert.max_abs_inner));

    // Depth-2 to kernel reduction on the full enumeration.
    let mut rng = seed::rng(seed::derive(root, "depth2"));
    let mut gauss = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect() };
    let hidden: Vec<Vec<f64>> = (0..kk).map(|_| gauss(2 * kn)).collect();
    let bias = gauss(kk);
    let u = gauss(kk);
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let r = hidden
        .iter()
        .flat_map(|row| [norm(&row[..kn]), norm(&row[kn..])])
        .chain([norm(&u), norm(&bias)])
        .fold(0.0f64, f64::max);
    let net = Mlp::new(vec![Layer::from_rows(hidden.clone(), bias.clone())?, Layer::from_rows(vec![u.clone()], vec![0.0])?])?;
    let dk = depth2_to_kernel(&net, delta, r, kn)?;
    let (mut id_err, mut round_err, mut max_uz): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for zi in 0..1usize << kn {
        let z = signs(zi, kn);
        let c = dk.coefficients(&z)?;
        max_uz = max_uz.max(norm(&c));
        for xi in 0..1usize << kn {
            let x = signs(xi, kn);
            let kernel: f64 = dk.features.row(xi).iter().zip(&c).map(|(a, b)| a * b).sum();
            let ghat = dk.rounded_eval(&x, &z);
            let g = net.forward(&[x.clone(), z.clone()].concat())?;
            id_err = id_err.max((ghat - kernel).abs());
            round_err = round_err.max((g - ghat).abs());
        }
    }
    rep.constant("depth2_init", "hidden weights, biases and output weights i.i.d. N(0,1); output bias 0; R = largest norm");
    rep.metric("kernel_r", r, "norm", "R bounds every weight vector norm");
    rep.metric("kernel_features", dk.n_features(), "features", "k (2 floor(R sqrt n / Delta) + 1)");
    rep.metric("kernel_features_formula", dk.n_formula, "features", "2k floor(R sqrt n / Delta)");
    rep.metric("kernel_identity_error", id_err, "absolute", "g_hat(x,z) = <u(z), Psi(x)>");
    rep.metric("kernel_rounding_error", round_err, "absolute", "|g - g_hat| <= R sqrt(k) Delta n");
    rep.metric("kernel_rounding_bound", dk.rounding_bound(), "absolute", "R sqrt(k) Delta n");
    rep.metric("kernel_max_coefficient_norm", max_uz, "norm", "||u(z)|| <= 3 R^2 sqrt(n)");
    rep.check("kernel_identity", id_err <= 1e-9, format!("{id_err:.3e}"));
    rep.check("kernel_rounding", round_err <= dk.rounding_bound(), format!("{round_err} vs {}", dk.rounding_bound()));
    rep.check("kernel_norm", max_uz <= dk.norm_bound() * (1.0 + 1e-12), format!("{max_uz} vs {}", dk.norm_bound()));

    // Weights already on the lattice: rounding changes nothing.
    let lattice_rows: Vec<Vec<f64>> = hidden
        .iter()
        .map(|row| row.iter().enumerate().map(|(j, &v)| if j < kn { v } else { delta * (v / delta).floor() }).collect())
        .collect();
    let lnet = Mlp::new(vec![Layer::from_rows(lattice_rows, bias)?, Layer::from_rows(vec![u], vec![0.0])?])?;
    let ldk = depth2_to_kernel(&lnet, delta, r, kn)?;
    let mut prng = seed::rng(seed::derive(root, "lattice-probes"));
    let mut lat_err: f64 = 0.0;
    for _ in 0..probes {
        let (xi, zi) = (prng.random_range(0..1usize << kn), prng.random_range(0..1usize << kn));
        let (x, z) = (signs(xi, kn), signs(zi, kn));
        let g = lnet.forward(&[x.clone(), z.clone()].concat())?;
        lat_err = lat_err.max((g - ldk.rounded_eval(&x, &z)).abs()).max((g - ldk.kernel_eval(xi, &z)?).abs());
    }
    rep.metric("lattice_identity_error", lat_err, "absolute", "lattice weights: g = g_hat = <u(z), Psi(x)>");
    rep.check("lattice_identity", lat_err <= 1e-9, format!("{lat_err:.3e} over {probes} probes"));
    Ok(csv.into())
}

fn lipschitz(cfg: &ExperimentConfig, rep: &mut ExperimentReport) -> Outcome {
    let samples: usize = cfg.get("samples")?;
    let root = cfg.seed()?;
    type Case = (&'static str, fn(&[f64]) -> f64, f64, f64, usize, usize);
    let cases: [Case; 3] = [
        ("identity", |x| x[0], 1.0, 1.0, 4, 1),
        ("sin6x", |x| (6.0 * x[0]).sin(), 6.0, 1.0, 8, 1),
        ("product", |x| x[0] * x[1], 2.0, 1.0, 4, 2),
    ];
    rep.constant("bound_formula", "(2C + L sqrt(d)) / n^d plus 3 standard errors");
    let mut csv = String::from("case,n,d,mc_error,std_err,bound\n");
    for (ci, (name, h, l, c, n, d)) in cases.iter().enumerate() {
        let net = lipschitz_approx_net(h, *n, *d, DEFAULT_CELL_CAP)?;
        let mut rng = seed::rng(seed::derive_indexed(root, "mc", ci as u64));
        let mut x = vec![0.0; *d];
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..samples {
            x.iter_mut().for_each(|v| *v = rng.random::<f64>());
            let e = (net.forward(&x)? - h(&x)).abs();
            sum += e;
            sq += e * e;
        }
        let mean = sum / samples as f64;
        let var = (sq / samples as f64 - mean * mean).max(0.0) * samples as f64 / (samples as f64 - 1.0).max(1.0);
        let se = (var / samples as f64).sqrt();
        let bound = lipschitz_approx_bound(*l, *c, *n, *d);
        rep.metric(&format!("{name}_l1_error"), mean, "mean absolute error", "Monte Carlo L1 distance");
        rep.metric(&format!("{name}_bound"), bound, "mean absolute error", "(2C + L sqrt(d)) / n^d");
        rep.check(name, mean <= bound + 3.0 * se, format!("{mean:.6} vs {bound:.6} + 3 x {se:.2e}"));
        csv.push_str(&format!("{name},{n},{d},{mean:e},{se:e},{bound:e}\n"));
    }
    Ok(csv.into())
}

fn xavier(cfg: &ExperimentConfig, rep: &mut ExperimentReport) -> Outcome {
    let depth: usize = cfg.get("depth")?;
    let width: usize = cfg.get("width")?;
    let d: usize = cfg.get("d")?;
    let trials: usize = cfg.get("trials")?;
    let rho: f64 = cfg.get("rho")?;
    let probes: usize = cfg.get("probes")?;
    let slack: f64 = cfg.get("slack")?;
    let threshold: f64 = cfg.get("threshold")?;
    let root = cfg.seed()?;
    let (scale, other) = match cfg.raw("scale")? {
        "width" => (WeightScale::Width, WeightScale::FanIn),
        "fan_in" => (WeightScale::FanIn, WeightScale::Width),
        s => return Err(ConfigError(format!("unknown scale '{s}' (width | fan_in)")).into()),
    };
    let audit = |sc: WeightScale, r: f64| -> Result<LStandardReport, LabError> {
        let f = move |s: u64| xavier_init_scaled(depth, width, d, s, sc);
        audit_l_standard_with_slack(&f, r, trials, probes, root, slack)
    };
    let main = audit(scale, rho)?;
    let doubled = audit(scale, 2.0 * rho)?;
    let alt = audit(other, rho)?;
    rep.constant("scale", serde_json::to_value(scale).expect("scale serializes"));
    rep.constant("width_exceeds_depth_squared", width > depth * depth);
    rep.constant("perturbation", "weights only; radii rho 2^-j down to 2^-10, 2 seeded directions each");
    rep.metric("l_theta", main.l_theta, "output per unit parameter distance", "parameter Lipschitz constant");
    rep.metric("l_x", main.l_x, "gradient coordinate per unit input distance", "input Lipschitz constant of gradient coordinates");
    rep.metric("l_sup", main.l_sup, "gradient coordinate", "sup of gradient coordinates over [0,1]^d");
    rep.metric("pass_fraction", main.pass_fraction, "fraction of draws", "max ratio <= 1.1 ||x|| slack");
    rep.metric("doubled_rho_l_theta", doubled.l_theta, "output per unit parameter distance", "radius 2 rho");
    rep.metric("other_scale_pass_fraction", alt.pass_fraction, "fraction of draws", "the other variance convention");
    rep.metric("other_scale_l_theta", alt.l_theta, "output per unit parameter distance", "the other variance convention");
    let monotone = main
        .per_trial
        .iter()
        .zip(&doubled.per_trial)
        .all(|(a, b)| b.l_theta >= a.l_theta && b.max_ratio_over_norm >= a.max_ratio_over_norm);
    rep.check("pass_fraction", main.pass_fraction >= threshold, format!("{} vs {threshold}", main.pass_fraction));
    rep.check("monotone_in_rho", monotone, "ratios at 2 rho dominate ratios at rho trial by trial");
    let mut csv = String::from("trial,l_theta,l_x,l_sup,max_ratio_over_norm,pass\n");
    for (i, t) in main.per_trial.iter().enumerate() {
        csv.push_str(&format!("{i},{:e},{:e},{:e},{:e},{}\n", t.l_theta, t.l_x, t.l_sup, t.max_ratio_over_norm, t.pass));
    }
    Ok(csv.into())
}
