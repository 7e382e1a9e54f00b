//! Parallel sweeps over a list of configs and the summary table.

use crate::config::{ConfigError, ExperimentConfig, ExperimentId};
use crate::experiments;
use crate::report::RunOutput;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub const SUMMARY_HEADER: &str = "run,experiment,seed,pass,metric,value";

/// Least-squares fit of `ln(mean gradient norm)` on `n` over a gd-flatline sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatlineFit {
    /// `(n, mean over seeds of the per-run mean gradient norm)`.
    pub per_n: Vec<(u32, f64)>,
    pub slope: f64,
    pub r_squared: f64,
}

impl FlatlineFit {
    pub fn pass(&self) -> bool {
        self.slope < 0.0 && self.r_squared >= 0.8
    }
}

/// Runs every config on `workers` threads. Output order follows input order;
/// one run failing does not stop the others.
pub fn sweep(configs: &[ExperimentConfig], workers: usize) -> Vec<Result<RunOutput, ConfigError>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunOutput, ConfigError>>>> = Mutex::new(vec![None; configs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(configs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let out = experiments::run(&configs[i]);
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|o| o.expect("every slot filled")).collect()
}

/// Fits the gd-flatline runs, if the sweep contains at least two values of n.
pub fn flatline_fit(outputs: &[&RunOutput]) -> Option<FlatlineFit> {
    let mut by_n: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
    for o in outputs {
        if o.report.id() != Some(ExperimentId::GdFlatline) {
            continue;
        }
        let n = o.report.config.get("n").and_then(|v| v.parse().ok());
        if let (Some(n), Some(g)) = (n, o.report.metric_f64("mean_grad_norm")) {
            by_n.entry(n).or_default().push(g);
        }
    }
    if by_n.len() < 2 {
        return None;
    }
    let per_n: Vec<(u32, f64)> = by_n.into_iter().map(|(n, v)| (n, v.iter().sum::<f64>() / v.len() as f64)).collect();
    let xs: Vec<f64> = per_n.iter().map(|(n, _)| *n as f64).collect();
    let ys: Vec<f64> = per_n.iter().map(|(_, g)| g.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(FlatlineFit { per_n, slope, r_squared })
}

/// Long-format summary: one row per numeric metric per run, then the
/// flatline fit rows when present.
pub fn summary_csv(names: &[String], outputs: &[Result<RunOutput, ConfigError>]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for (name, out) in names.iter().zip(outputs) {
        match out {
            Ok(o) => {
                let seed = o.report.config.get("seed").cloned().unwrap_or_default();
                for m in &o.report.metrics {
                    if let Some(v) = m.value.as_f64() {
                        s.push_str(&format!("{name},{},{seed},{},{},{v:e}\n", o.report.experiment, o.report.pass, m.name));
                    }
                }
                if let Some(e) = &o.report.error {
                    s.push_str(&format!("{name},{},{seed},false,error,\"{}\"\n", o.report.experiment, e.replace('"', "'")));
                }
            }
            Err(e) => s.push_str(&format!("{name},,,false,config_error,\"{}\"\n", e.0.replace('"', "'"))),
        }
    }
    let ok: Vec<&RunOutput> = outputs.iter().filter_map(|o| o.as_ref().ok()).collect();
    if let Some(fit) = flatline_fit(&ok) {
        let pass = fit.pass();
        for (n, g) in &fit.per_n {
            s.push_str(&format!("fit,gd-flatline,,{pass},log_mean_grad_norm_n{n},{:e}\n", g.ln()));
        }
        s.push_str(&format!("fit,gd-flatline,,{pass},slope,{:e}\n", fit.slope));
        s.push_str(&format!("fit,gd-flatline,,{pass},r_squared,{:e}\n", fit.r_squared));
    }
    s
}

/// The `*.cfg` files of a directory, sorted by name.
pub fn config_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "cfg"))
        .collect();
    files.sort();
    Ok(files)
}

/// Result of a directory sweep.
pub struct SweepOutcome {
    pub names: Vec<String>,
    pub outputs: Vec<Result<RunOutput, ConfigError>>,
    pub summary: String,
}

impl SweepOutcome {
    pub fn all_pass(&self) -> bool {
        let fit_ok = {
            let ok: Vec<&RunOutput> = self.outputs.iter().filter_map(|o| o.as_ref().ok()).collect();
            flatline_fit(&ok).is_none_or(|f| f.pass())
        };
        fit_ok && self.outputs.iter().all(|o| o.as_ref().is_ok_and(|o| o.report.pass))
    }
}

/// Loads every config in `dir`, runs them and writes each run under
/// `out/<config stem>/` plus `out/summary.csv`.
pub fn sweep_dir(dir: &Path, out: &Path, workers: usize) -> Result<SweepOutcome, ConfigError> {
    let files = config_files(dir).map_err(|e| ConfigError(format!("cannot list {}: {e}", dir.display())))?;
    let configs: Vec<ExperimentConfig> =
        files.iter().map(|f| ExperimentConfig::load(f, &[])).collect::<Result<_, _>>()?;
    let names: Vec<String> =
        files.iter().map(|f| f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    let outputs = sweep(&configs, workers);
    let io = |e: std::io::Error| ConfigError(format!("cannot write sweep output: {e}"));
    std::fs::create_dir_all(out).map_err(io)?;
    for (name, o) in names.iter().zip(&outputs) {
        if let Ok(o) = o {
            o.write(&out.join(name)).map_err(io)?;
        }
    }
    let summary = summary_csv(&names, &outputs);
    std::fs::write(out.join("summary.csv"), &summary).map_err(io)?;
    Ok(SweepOutcome { names, outputs, summary })
}
