//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use depthsep::constructions::telgarsky_net;
use depthsep::init::gaussian_init;
use depthsep::net::{relu, Mlp};
use depthsep::pwl::{count_pieces, exact_sign_hinge_loss_vs_fn, from_mlp_1d, piece_bound};
use depthsep::seed;
use lab::report::ExperimentReport;
use lab::sweep::{flatline_fit, sweep_dir};
use lab::{ExperimentConfig, RunOutput};
use rand::Rng;
use std::path::PathBuf;
use std::time::{Duration, Instant};

struct Line {
    pass: bool,
    detail: String,
}

fn run(text: &str) -> RunOutput {
    let cfg = ExperimentConfig::parse(text, &[]).expect("valid config");
    lab::run(&cfg).expect("valid config")
}

fn check(report: &ExperimentReport, name: &str) -> (bool, String) {
    match report.checks.iter().find(|c| c.name == name) {
        Some(c) => (c.pass && report.error.is_none(), format!("{name}: {}", c.detail)),
        None => (false, format!("{name}: missing ({:?})", report.error)),
    }
}

fn within(line: Line, elapsed: Duration, limit: Duration) -> Line {
    let ok = elapsed <= limit;
    Line {
        pass: line.pass && ok,
        detail: format!("{} [{:.2}s, limit {}s]", line.detail, elapsed.as_secs_f64(), limit.as_secs()),
    }
}

fn exact_realization() -> Line {
    let mut details = Vec::new();
    let mut pass = true;
    for n in [4u32, 8, 12, 16] {
        let t = Instant::now();
        let loss = telgarsky_net(n)
            .and_then(|net| from_mlp_1d(&net, 0.0, 1.0))
            .and_then(|f| exact_sign_hinge_loss_vs_fn(&f, n));
        let secs = t.elapsed().as_secs_f64();
        let ok = matches!(loss, Ok(l) if l == 0.0) && secs < 1.0;
        pass &= ok;
        details.push(format!("n={n}: loss {loss:?} in {secs:.3}s"));
    }
    Line { pass, detail: details.join("; ") }
}

fn random_net(root: u64, i: u64) -> Mlp {
    let mut rng = seed::rng(seed::derive_indexed(root, "shape", i));
    let depth = rng.random_range(2..=6);
    let width = rng.random_range(1..=8);
    gaussian_init(depth, width, 1, 1.0, seed::derive_indexed(root, "weights", i)).expect("valid shape")
}

fn piece_count_bound() -> Line {
    let mut viol = 0;
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let net = random_net(11, i);
        let f = from_mlp_1d(&net, -8.0, 8.0).expect("net is 1-D");
        let (p, b) = (count_pieces(&f) as f64, piece_bound(net.depth(), net.width()));
        worst = worst.max(p / b);
        if p > b {
            viol += 1;
        }
    }
    Line { pass: viol == 0, detail: format!("{viol} violations in 1000 nets, max pieces/bound {worst:.4}") }
}

fn shallow_lower_bound() -> Line {
    let out = run("experiment = telgarsky-separation\nn = 14\nnets = 100\n");
    let (pass, detail) = check(&out.report, "crossing_bound");
    let depth = out.report.config.get("depth").cloned().unwrap_or_default();
    Line { pass, detail: format!("{detail}, depth {depth}") }
}

fn gd_flatline(tmp: &std::path::Path) -> Line {
    let dir = tmp.join("flatline-sweep");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("tmp dir");
    for n in [6, 8, 10, 12] {
        for s in 1..=5 {
            let text = format!("experiment = gd-flatline\nn = {n}\nseed = {s}\n");
            std::fs::write(dir.join(format!("flat-n{n:02}-s{s}.cfg")), text).expect("write cfg");
        }
    }
    for s in 1..=5 {
        std::fs::write(dir.join(format!("sanity-s{s}.cfg")), format!("experiment = gd-sanity\nseed = {s}\n"))
            .expect("write cfg");
    }
    let outcome = sweep_dir(&dir, &dir.join("out"), 1).expect("configs valid");
    let ok: Vec<&RunOutput> = outcome.outputs.iter().filter_map(|o| o.as_ref().ok()).collect();
    let mut flat_ok = true;
    let mut max_change: f64 = 0.0;
    let mut sanity_ok = true;
    let mut max_sanity: f64 = 0.0;
    for o in &ok {
        let r = &o.report;
        match r.experiment.as_str() {
            "gd-flatline" if r.config.get("n").map(String::as_str) == Some("12") => {
                max_change = max_change.max(r.metric_f64("loss_change").unwrap_or(f64::INFINITY));
                flat_ok &= r.pass;
            }
            "gd-sanity" => {
                max_sanity = max_sanity.max(r.metric_f64("final_loss").unwrap_or(f64::INFINITY));
                sanity_ok &= r.pass;
            }
            _ => {}
        }
    }
    let fit = flatline_fit(&ok);
    let fit_ok = fit.as_ref().is_some_and(|f| f.pass());
    let fit_txt = fit.map_or("no fit".to_string(), |f| format!("slope {:.4}, R^2 {:.4}", f.slope, f.r_squared));
    Line {
        pass: ok.len() == 25 && flat_ok && fit_ok && sanity_ok,
        detail: format!(
            "n=12 max |L0-LT| {max_change:.3e}; {fit_txt}; f_2 contrast max final loss {max_sanity:.4} over 5 seeds"
        ),
    }
}

fn lipschitz() -> Line {
    let out = run("experiment = lipschitz-approx\nsamples = 100000\n");
    let parts: Vec<(bool, String)> =
        ["identity", "sin6x", "product"].iter().map(|c| check(&out.report, c)).collect();
    Line {
        pass: parts.iter().all(|p| p.0),
        detail: parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join("; "),
    }
}

fn sq_lower() -> Line {
    let out = run("experiment = sq-parity-lower-bound\nn = 12\ntau = 0.0625\nbudget = 2\nseeds = 20\n");
    let a = check(&out.report, "loss_floor");
    let b = check(&out.report, "inconsistent_cap");
    let games = out.report.metric_value("games").cloned().unwrap_or_default();
    Line { pass: a.0 && b.0, detail: format!("{games} games; {}; {}", a.1, b.1) }
}

fn sq_upper() -> Line {
    let out = run("experiment = sq-weak-learn\nn = 12\ntau = 0.001\ntargets = 50\ncount_taus =\n");
    let (pass, detail) = check(&out.report, "exact_recovery");
    Line { pass, detail }
}

fn correlation_counting() -> Line {
    let out = run("experiment = sq-weak-learn\ntargets = 0\ncount_n = 10\ncount_h = 100\ncount_taus = 0.2;0.5\n");
    let (pass, detail) = check(&out.report, "correlation_count");
    Line { pass, detail }
}

fn kernel_hardness() -> Line {
    let out = run("experiment = kernel-hardness\nn = 10\nfeatures = 64\nb = 10\nthreshold = 0.9\nxval_tol = 0.02\n");
    let a = check(&out.report, "average_loss_threshold");
    let b = check(&out.report, "solver_vs_grid");
    let vacuous = out.report.metric_value("bound_vacuous").and_then(|v| v.as_bool()) == Some(true)
        && out.report.metric_f64("bound") == Some(0.0);
    Line {
        pass: a.0 && b.0 && vacuous,
        detail: format!("{}; {}; clamped bound 0 reported: {vacuous}", a.1, b.1),
    }
}

fn f_family() -> Line {
    let out = run("experiment = f-family\nn = 6\nclosed_form_max_n = 6\nzset_n = 48\nzset_d = 16\nkernel_n = 8\n");
    let parts: Vec<(bool, String)> =
        ["or_net_exact", "closed_form_exact", "zset_hamming", "kernel_identity", "kernel_rounding"]
            .iter()
            .map(|c| check(&out.report, c))
            .collect();
    Line {
        pass: parts.iter().all(|p| p.0),
        detail: parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join("; "),
    }
}

/// A point where no hidden pre-activation and no hinge margin sits within
/// `gap` of its kink.
fn smooth(net: &Mlp, x: &[f64], y: f64, gap: f64) -> bool {
    let mut h = x.to_vec();
    let mut out = Vec::new();
    let layers = net.layers();
    for (l, layer) in layers.iter().enumerate() {
        layer.apply(&h, &mut out);
        if l + 1 < layers.len() {
            if out.iter().any(|z| z.abs() < gap) {
                return false;
            }
            h = out.iter().map(|&z| relu(z)).collect();
        }
    }
    (1.0 - y * out[0]).abs() >= gap
}

fn hinge_at(net: &Mlp, p: &[f64], x: &[f64], y: f64) -> f64 {
    let mut m = net.clone();
    m.set_params(p).expect("same shape");
    (1.0 - y * m.forward(x).expect("input dim")).max(0.0)
}

fn numerics() -> Line {
    // Backprop against central differences.
    let mut rng = seed::rng(seed::derive(5, "fd"));
    let mut points = 0;
    let mut worst: f64 = 0.0;
    let mut trial = 0u64;
    while points < 100 {
        trial += 1;
        let net = gaussian_init(3, 6, 3, 0.7, seed::derive_indexed(5, "fd-net", trial)).expect("shape");
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = if net.forward(&x).expect("dim") > 0.0 { -1.0 } else { 1.0 };
        if !smooth(&net, &x, y, 1e-3) {
            continue;
        }
        let g = net.grad_params(&x, y).expect("dim");
        let p = net.params();
        let h = 1e-6;
        let mut num = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..p.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (hinge_at(&net, &a, &x, y) - hinge_at(&net, &b, &x, y)) / (2.0 * h);
            num += (fd - g[i]).powi(2);
            den += g[i] * g[i];
        }
        worst = worst.max(num.sqrt() / den.sqrt().max(1e-300));
        points += 1;
    }
    let grad_ok = worst <= 1e-5;

    // Exact 1-D extraction against dense sampling.
    let mut pwl_err: f64 = 0.0;
    let samples = 100_000;
    let mut xs = vec![0.0; 1];
    for i in 0..1000 {
        let net = random_net(13, i);
        let f = from_mlp_1d(&net, -2.0, 2.0).expect("net is 1-D");
        for s in 0..samples / 1000 {
            xs[0] = -2.0 + 4.0 * (s as f64 + 0.5) / (samples / 1000) as f64;
            let v = net.forward_unchecked(&xs);
            pwl_err = pwl_err.max((f.eval(xs[0]) - v).abs() / v.abs().max(1.0));
        }
    }
    let pwl_ok = pwl_err <= 1e-9;

    // Byte-identical reports on rerun, for every experiment.
    let small = [
        "experiment = gd-flatline\nn = 6\n",
        "experiment = gd-sanity\niterations = 50\n",
        "experiment = telgarsky-separation\nn = 8\nnets = 10\n",
        "experiment = sq-parity-lower-bound\nn = 8\nseeds = 2\n",
        "experiment = sq-weak-learn\nn = 8\ntargets = 5\ncount_n = 8\ncount_h = 4\n",
        "experiment = kernel-hardness\nn = 6\nfeatures = 8\nside_targets = 4\nfd_pairs = 3\nxval_n = 4\n",
        "experiment = f-family\nn = 3\nclosed_form_max_n = 3\nzset_n = 24\nzset_d = 4\nkernel_n = 4\nprobes = 50\n",
        "experiment = lipschitz-approx\nsamples = 1000\n",
        "experiment = xavier-audit\ntrials = 5\n",
    ];
    let mut differ = Vec::new();
    for text in small {
        let (a, b) = (run(text), run(text));
        if a.report.to_json() != b.report.to_json() || a.series != b.series || a.extra != b.extra {
            differ.push(a.report.experiment.clone());
        }
    }
    Line {
        pass: grad_ok && pwl_ok && differ.is_empty(),
        detail: format!(
            "grad rel err max {worst:.2e} over 100 points; pwl vs dense max {pwl_err:.2e} over {samples} points, \
             1000 nets; non-reproducible: {differ:?}"
        ),
    }
}

fn main() {
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    type Criterion<'a> = (&'a str, u64, Box<dyn Fn() -> Line + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("exact realization of f_n by the deep net", 4, Box::new(exact_realization)),
        ("piece-count bound", 30, Box::new(piece_count_bound)),
        ("shallow loss lower bound from sign crossings", 60, Box::new(shallow_lower_bound)),
        ("gradient descent flatline", 600, Box::new(|| gd_flatline(&tmp))),
        ("Lipschitz approximation", 60, Box::new(lipschitz)),
        ("SQ lower bound on parities", 300, Box::new(sq_lower)),
        ("SQ weak learning of parities", 60, Box::new(sq_upper)),
        ("correlation counting", 30, Box::new(correlation_counting)),
        ("kernel hardness", 600, Box::new(kernel_hardness)),
        ("OR-parity family", 300, Box::new(f_family)),
        ("numerics and reproducibility", 600, Box::new(numerics)),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let line = within(f(), t.elapsed(), Duration::from_secs(*limit));
        if !line.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", i + 1, if line.pass { "PASS" } else { "FAIL" }, line.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
