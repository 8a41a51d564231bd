use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Cond, Dgp, ExperimentConfig, SweepPoint, ZhatKind};
use super::CliError;
use crate::forest::ForestConfig;
use crate::granger::{
    diff_metric, gc_r2, linear_granger, nn_granger_conditional, GrangerError, GrangerResult,
    Method, NnConfig, Series,
};
use crate::synthdata::{
    gen_causal, gen_null, gen_standin, load_csv, make_noisy_proxy, DgpConfig, Schema,
    TimeSeriesBundle,
};
use crate::tcvae::{estimate_confounder, train, TcvaeError, TcvaeModel};

/// Independent seed for one consumer of a trial seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r.next_u64()
}

pub(crate) const PROXY_STREAM: u64 = 1;
pub(crate) const MODEL_STREAM: u64 = 2;
pub(crate) const DRAW_STREAM: u64 = 3;
pub(crate) const TEST_STREAM: u64 = 4;
pub(crate) const EVAL_STREAM: u64 = 5;

/// Replaces the proxies of `bundle` with `d_p` noisy copies of each
/// confounder coordinate.
pub fn attach_proxies(
    bundle: &mut TimeSeriesBundle,
    d_p: usize,
    noise: f64,
    seed: u64,
) -> Result<(), CliError> {
    let z = bundle
        .z
        .as_ref()
        .ok_or_else(|| CliError::Data("proxies need confounder columns z_*".into()))?;
    let cols: Vec<Vec<f64>> = z
        .iter()
        .flat_map(|c| std::iter::repeat_n(c.clone(), d_p))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, PROXY_STREAM));
    bundle.p = make_noisy_proxy(&cols, noise, &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(())
}

/// Data for one trial.
pub fn trial_bundle(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    seed: u64,
) -> Result<TimeSeriesBundle, CliError> {
    let d = &cfg.data;
    let synth = |e: crate::synthdata::SynthError| CliError::Data(e.to_string());
    match d.dgp {
        Dgp::Null | Dgp::Causal => {
            let dc = DgpConfig {
                t: d.t,
                ploss: point.ploss,
                d_p: point.d_p,
                d_z: point.d_z,
                burn_in: d.burn_in,
                seed,
                causal_edge: d.causal_edge,
            };
            if d.dgp == Dgp::Null {
                gen_null(&dc).map_err(synth)
            } else {
                gen_causal(&dc).map_err(synth)
            }
        }
        Dgp::Standin => {
            let mut b = gen_standin(d.t, seed).map_err(synth)?;
            attach_proxies(&mut b, point.d_p, point.noise_level, seed)?;
            Ok(b)
        }
        Dgp::Csv => {
            let path = d.csv.as_ref().expect("validated");
            let mut b = load_csv(path, Schema::Plain)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            if b.p.is_empty() && b.z.is_some() {
                attach_proxies(&mut b, point.d_p, point.noise_level, seed)?;
            }
            Ok(b)
        }
    }
}

/// Conditioning series for one choice, each repeated `copies` times.
pub fn conditioners(
    c: Cond,
    bundle: &TimeSeriesBundle,
    zhat: Option<&[Vec<f64>]>,
    copies: usize,
) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let cols: &[Vec<f64>] = match c {
        Cond::None => &[],
        Cond::P if bundle.p.is_empty() => {
            return Err(CliError::Data("conditioning on p needs proxy columns p_*".into()))
        }
        Cond::P => &bundle.p,
        Cond::ZTrue => bundle
            .z
            .as_deref()
            .ok_or_else(|| CliError::Data("conditioning on z_true needs columns z_*".into()))?,
        Cond::Zhat => zhat.ok_or_else(|| CliError::Data("no confounder estimate available".into()))?,
    };
    let mut out = Vec::with_capacity(cols.len() * copies);
    for (j, col) in cols.iter().enumerate() {
        for k in 0..copies {
            let id = if copies == 1 {
                format!("{}_{}", c.label(), j + 1)
            } else {
                format!("{}_{}_c{}", c.label(), j + 1, k + 1)
            };
            out.push((id, col.clone()));
        }
    }
    Ok(out)
}

/// Settings shared by every Granger test of a run.
#[derive(Debug, Clone, Copy)]
pub struct TestSettings {
    pub method: Method,
    pub lag: usize,
    pub alpha: f64,
    pub forest: ForestConfig,
    pub nn: NnConfig,
    pub seed: u64,
}

impl TestSettings {
    pub fn run(
        &self,
        x: &[f64],
        y: &[f64],
        cond: &[(String, Vec<f64>)],
    ) -> Result<GrangerResult, GrangerError> {
        let series: Vec<Series<'_>> = cond.iter().map(|(id, v)| Series::new(id, v)).collect();
        match self.method {
            Method::Linear => linear_granger(x, y, &series, self.lag, self.alpha),
            Method::NnFtest => {
                let nn = NnConfig {
                    seed: self.seed,
                    ..self.nn
                };
                nn_granger_conditional(x, y, &series, self.lag, &nn, self.alpha)
            }
            Method::RfR2 => gc_r2(x, y, &series, self.lag, &self.forest, self.seed),
        }
    }
}

/// Confounder estimate in the model's standardized latent space.
pub fn zhat_columns(
    model: &TcvaeModel,
    bundle: &TimeSeriesBundle,
    kind: ZhatKind,
    seed: u64,
) -> Result<Vec<Vec<f64>>, TcvaeError> {
    let n = usize::from(kind == ZhatKind::Draw);
    let est = estimate_confounder(model, bundle, n, sub_seed(seed, DRAW_STREAM))?;
    Ok(match kind {
        ZhatKind::Mean => est.mean,
        ZhatKind::Draw => est.draws.into_iter().next().expect("one draw"),
    })
}

/// One row of `report.csv`. For the `linear` and `nn_ftest` methods the
/// `gc_*` columns hold F statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub point: usize,
    pub ploss: f64,
    pub d_z: usize,
    pub d_p: usize,
    pub noise_level: f64,
    pub nn_steps: usize,
    pub cond_copies: usize,
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    pub gc_none: Option<f64>,
    pub p_none: Option<f64>,
    pub reject_none: Option<bool>,
    pub gc_p: Option<f64>,
    pub p_p: Option<f64>,
    pub reject_p: Option<bool>,
    pub gc_zhat: Option<f64>,
    pub p_zhat: Option<f64>,
    pub reject_zhat: Option<bool>,
    pub gc_z_true: Option<f64>,
    pub p_z_true: Option<f64>,
    pub reject_z_true: Option<bool>,
    pub diff_none: Option<f64>,
    pub diff_p: Option<f64>,
    pub diff_zhat: Option<f64>,
    pub error: Option<String>,
}

impl TrialRow {
    fn new(spec: &TrialSpec, method: Method) -> Self {
        let p = &spec.point;
        Self {
            point: spec.point_index,
            ploss: p.ploss,
            d_z: p.d_z,
            d_p: p.d_p,
            noise_level: p.noise_level,
            nn_steps: p.nn_steps,
            cond_copies: p.cond_copies,
            trial: spec.trial,
            seed: spec.seed,
            method,
            gc_none: None,
            p_none: None,
            reject_none: None,
            gc_p: None,
            p_p: None,
            reject_p: None,
            gc_zhat: None,
            p_zhat: None,
            reject_zhat: None,
            gc_z_true: None,
            p_z_true: None,
            reject_z_true: None,
            diff_none: None,
            diff_p: None,
            diff_zhat: None,
            error: None,
        }
    }

    pub fn sweep_point(&self) -> SweepPoint {
        SweepPoint {
            ploss: self.ploss,
            d_z: self.d_z,
            d_p: self.d_p,
            noise_level: self.noise_level,
            nn_steps: self.nn_steps,
            cond_copies: self.cond_copies,
        }
    }

    pub fn gc(&self, c: Cond) -> Option<f64> {
        match c {
            Cond::None => self.gc_none,
            Cond::P => self.gc_p,
            Cond::Zhat => self.gc_zhat,
            Cond::ZTrue => self.gc_z_true,
        }
    }

    pub fn reject(&self, c: Cond) -> Option<bool> {
        match c {
            Cond::None => self.reject_none,
            Cond::P => self.reject_p,
            Cond::Zhat => self.reject_zhat,
            Cond::ZTrue => self.reject_z_true,
        }
    }

    /// `None` for `z_true`, whose distance to itself is not reported.
    pub fn diff(&self, c: Cond) -> Option<f64> {
        match c {
            Cond::None => self.diff_none,
            Cond::P => self.diff_p,
            Cond::Zhat => self.diff_zhat,
            Cond::ZTrue => None,
        }
    }

    fn set(&mut self, c: Cond, r: &GrangerResult) {
        let (gc, p, rej) = match c {
            Cond::None => (&mut self.gc_none, &mut self.p_none, &mut self.reject_none),
            Cond::P => (&mut self.gc_p, &mut self.p_p, &mut self.reject_p),
            Cond::Zhat => (&mut self.gc_zhat, &mut self.p_zhat, &mut self.reject_zhat),
            Cond::ZTrue => (&mut self.gc_z_true, &mut self.p_z_true, &mut self.reject_z_true),
        };
        *gc = Some(r.statistic);
        *p = r.p_value;
        *rej = Some(r.reject);
    }

    fn set_diff(&mut self, c: Cond, v: f64) {
        match c {
            Cond::None => self.diff_none = Some(v),
            Cond::P => self.diff_p = Some(v),
            Cond::Zhat => self.diff_zhat = Some(v),
            Cond::ZTrue => {}
        }
    }

    fn clear_results(&mut self) {
        let spec = TrialSpec {
            point_index: self.point,
            point: self.sweep_point(),
            trial: self.trial,
            seed: self.seed,
        };
        let error = self.error.take();
        *self = Self::new(&spec, self.method);
        self.error = error;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub point_index: usize,
    pub point: SweepPoint,
    pub trial: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub train_seconds: f64,
    pub total_seconds: f64,
}

pub fn trial_specs(cfg: &ExperimentConfig) -> Vec<TrialSpec> {
    let mut out = Vec::new();
    for (i, point) in cfg.grid().into_iter().enumerate() {
        for trial in 0..cfg.data.trials {
            out.push(TrialSpec {
                point_index: i,
                point,
                trial,
                seed: cfg.data.seed.wrapping_add(trial as u64),
            });
        }
    }
    out
}

pub fn model_path(dir: &Path, spec: &TrialSpec) -> PathBuf {
    dir.join(format!("point{:03}_trial{:03}.ckpt", spec.point_index, spec.trial))
}

/// Runs one trial. Failures are recorded in the row's `error` column.
pub fn run_trial(
    cfg: &ExperimentConfig,
    spec: &TrialSpec,
    models_dir: Option<&Path>,
) -> (TrialRow, TrialTiming) {
    let start = Instant::now();
    let mut row = TrialRow::new(spec, cfg.test.method);
    let mut train_seconds = 0.0;
    let result = (|| -> Result<(), CliError> {
        let bundle = trial_bundle(cfg, &spec.point, spec.seed)?;
        let zhat = if cfg.test.conditioning.contains(&Cond::Zhat) {
            let t0 = Instant::now();
            let tc = cfg.model.tcvae(spec.point.d_z, sub_seed(spec.seed, MODEL_STREAM));
            let out = train(&bundle, &tc).map_err(|e| CliError::Data(format!("tcvae: {e}")))?;
            train_seconds = t0.elapsed().as_secs_f64();
            if let Some(dir) = models_dir {
                out.model
                    .save(&model_path(dir, spec))
                    .map_err(|e| CliError::Io(e.to_string()))?;
            }
            Some(
                zhat_columns(&out.model, &bundle, cfg.test.zhat, spec.seed)
                    .map_err(|e| CliError::Data(format!("tcvae: {e}")))?,
            )
        } else {
            None
        };
        let settings = TestSettings {
            method: cfg.test.method,
            lag: cfg.test.lag,
            alpha: cfg.test.alpha,
            forest: cfg.test.forest,
            nn: NnConfig {
                steps: spec.point.nn_steps,
                ..cfg.test.nn
            },
            seed: sub_seed(spec.seed, TEST_STREAM),
        };
        let mut results = Vec::new();
        for c in Cond::ALL {
            if !cfg.test.conditioning.contains(&c) {
                continue;
            }
            let cond = conditioners(c, &bundle, zhat.as_deref(), spec.point.cond_copies)?;
            let r = settings
                .run(&bundle.x, &bundle.y, &cond)
                .map_err(|e| CliError::Data(format!("{} test: {e}", c.label())))?;
            row.set(c, &r);
            results.push((c, r));
        }
        if let Some((_, reference)) = results.iter().find(|(c, _)| *c == Cond::ZTrue) {
            for (c, r) in &results {
                if *c != Cond::ZTrue {
                    let d = diff_metric(r, reference).map_err(|e| CliError::Data(e.to_string()))?;
                    row.set_diff(*c, d.value);
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("point {} trial {} (seed {}): {e}", spec.point_index, spec.trial, spec.seed);
        row.error = Some(e.to_string());
        row.clear_results();
    } else {
        log::info!("point {} trial {} done", spec.point_index, spec.trial);
    }
    let timing = TrialTiming {
        point: spec.point_index,
        trial: spec.trial,
        seed: spec.seed,
        train_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    (row, timing)
}

pub struct ExperimentRun {
    pub rows: Vec<TrialRow>,
    pub timings: Vec<TrialTiming>,
}

impl ExperimentRun {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Runs the whole grid on `jobs` worker threads. Rows come back in grid
/// order whatever the scheduling.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    jobs: usize,
    models_dir: Option<&Path>,
) -> Result<ExperimentRun, CliError> {
    let specs = trial_specs(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results: Vec<(TrialRow, TrialTiming)> =
        pool.install(|| specs.par_iter().map(|s| run_trial(cfg, s, models_dir)).collect());
    let (rows, timings) = results.into_iter().unzip();
    Ok(ExperimentRun { rows, timings })
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CondSummary {
    pub gc: Option<(f64, f64)>,
    pub diff: Option<(f64, f64)>,
    pub rejections: usize,
    /// Results disagreeing with the known truth.
    pub false_count: Option<usize>,
    pub trials: usize,
}

pub fn summarize(rows: &[&TrialRow], c: Cond, truth: Option<bool>) -> CondSummary {
    let ok: Vec<&&TrialRow> = rows.iter().filter(|r| r.error.is_none() && r.gc(c).is_some()).collect();
    let gc: Vec<f64> = ok.iter().filter_map(|r| r.gc(c)).collect();
    let diff: Vec<f64> = ok.iter().filter_map(|r| r.diff(c)).collect();
    let rejections = ok.iter().filter(|r| r.reject(c) == Some(true)).count();
    CondSummary {
        gc: mean_std(&gc),
        diff: mean_std(&diff),
        rejections,
        false_count: truth.map(|t| if t { ok.len() - rejections } else { rejections }),
        trials: ok.len(),
    }
}

/// One row of `aggregate.csv`: means and sample standard deviations over
/// the successful trials of a sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub point: usize,
    pub ploss: f64,
    pub d_z: usize,
    pub d_p: usize,
    pub noise_level: f64,
    pub nn_steps: usize,
    pub cond_copies: usize,
    pub method: Method,
    pub trials: usize,
    pub failed: usize,
    pub gc_mean_none: Option<f64>,
    pub gc_std_none: Option<f64>,
    pub rejections_none: Option<usize>,
    pub false_none: Option<usize>,
    pub gc_mean_p: Option<f64>,
    pub gc_std_p: Option<f64>,
    pub rejections_p: Option<usize>,
    pub false_p: Option<usize>,
    pub gc_mean_zhat: Option<f64>,
    pub gc_std_zhat: Option<f64>,
    pub rejections_zhat: Option<usize>,
    pub false_zhat: Option<usize>,
    pub gc_mean_z_true: Option<f64>,
    pub gc_std_z_true: Option<f64>,
    pub rejections_z_true: Option<usize>,
    pub false_z_true: Option<usize>,
    pub diff_mean_none: Option<f64>,
    pub diff_std_none: Option<f64>,
    pub diff_mean_p: Option<f64>,
    pub diff_std_p: Option<f64>,
    pub diff_mean_zhat: Option<f64>,
    pub diff_std_zhat: Option<f64>,
    /// `diff_mean_zhat - diff_mean_p`.
    pub diff_zhat_minus_p: Option<f64>,
}

pub fn aggregate(cfg: &ExperimentConfig, rows: &[TrialRow]) -> Vec<AggregateRow> {
    let truth = cfg.data.truth();
    let points = rows.iter().map(|r| r.point).max().map_or(0, |m| m + 1);
    let mut out = Vec::with_capacity(points);
    for i in 0..points {
        let group: Vec<&TrialRow> = rows.iter().filter(|r| r.point == i).collect();
        let Some(first) = group.first() else { continue };
        let used = |c: Cond| cfg.test.conditioning.contains(&c);
        let s = |c: Cond| used(c).then(|| summarize(&group, c, truth));
        let (sn, sp, sh, st) = (s(Cond::None), s(Cond::P), s(Cond::Zhat), s(Cond::ZTrue));
        let gm = |s: &Option<CondSummary>| s.as_ref().and_then(|s| s.gc.map(|g| g.0));
        let gs = |s: &Option<CondSummary>| s.as_ref().and_then(|s| s.gc.map(|g| g.1));
        let dm = |s: &Option<CondSummary>| s.as_ref().and_then(|s| s.diff.map(|g| g.0));
        let ds = |s: &Option<CondSummary>| s.as_ref().and_then(|s| s.diff.map(|g| g.1));
        let rj = |s: &Option<CondSummary>| s.as_ref().map(|s| s.rejections);
        let fc = |s: &Option<CondSummary>| s.as_ref().and_then(|s| s.false_count);
        let p = first.sweep_point();
        out.push(AggregateRow {
            point: i,
            ploss: p.ploss,
            d_z: p.d_z,
            d_p: p.d_p,
            noise_level: p.noise_level,
            nn_steps: p.nn_steps,
            cond_copies: p.cond_copies,
            method: first.method,
            trials: group.len(),
            failed: group.iter().filter(|r| r.error.is_some()).count(),
            gc_mean_none: gm(&sn),
            gc_std_none: gs(&sn),
            rejections_none: rj(&sn),
            false_none: fc(&sn),
            gc_mean_p: gm(&sp),
            gc_std_p: gs(&sp),
            rejections_p: rj(&sp),
            false_p: fc(&sp),
            gc_mean_zhat: gm(&sh),
            gc_std_zhat: gs(&sh),
            rejections_zhat: rj(&sh),
            false_zhat: fc(&sh),
            gc_mean_z_true: gm(&st),
            gc_std_z_true: gs(&st),
            rejections_z_true: rj(&st),
            false_z_true: fc(&st),
            diff_mean_none: dm(&sn),
            diff_std_none: ds(&sn),
            diff_mean_p: dm(&sp),
            diff_std_p: ds(&sp),
            diff_mean_zhat: dm(&sh),
            diff_std_zhat: ds(&sh),
            diff_zhat_minus_p: dm(&sh).zip(dm(&sp)).map(|(a, b)| a - b),
        })
    }
    out
}

/// Tidy rows for one sweep axis: one per (axis value, conditioning), pooled
/// over the other axes.
pub fn plot_rows(cfg: &ExperimentConfig, rows: &[TrialRow], axis: &str) -> Vec<Vec<String>> {
    let truth = cfg.data.truth();
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        let v = r.sweep_point().axis(axis);
        if !values.contains(&v) {
            values.push(v);
        }
    }
    let opt = |v: Option<String>| v.unwrap_or_default();
    let mut out = Vec::new();
    for v in values {
        let group: Vec<&TrialRow> = rows.iter().filter(|r| r.sweep_point().axis(axis) == v).collect();
        for c in Cond::ALL {
            if !cfg.test.conditioning.contains(&c) {
                continue;
            }
            let s = summarize(&group, c, truth);
            out.push(vec![
                v.to_string(),
                c.label().to_string(),
                opt(s.diff.map(|d| d.0.to_string())),
                opt(s.diff.map(|d| d.1.to_string())),
                opt(s.false_count.map(|n| n.to_string())),
                s.rejections.to_string(),
                s.trials.to_string(),
            ]);
        }
    }
    out
}

pub fn plot_header(axis: &str) -> [&str; 7] {
    [axis, "method", "diff_mean", "diff_std", "false_count", "rejections", "trials"]
}

fn io(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_serialized<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(io(path))?;
    for r in rows {
        w.serialize(r).map_err(io(path))?;
    }
    w.flush().map_err(|e| io(path)(e.into()))
}

pub fn read_rows(path: &Path) -> Result<Vec<TrialRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(io(path))?;
    r.deserialize()
        .collect::<Result<Vec<TrialRow>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(io(path))?;
    r.deserialize()
        .collect::<Result<Vec<AggregateRow>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub const REPORT_FILE: &str = "report.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// Writes `config.toml`, `report.csv`, `aggregate.csv`, `timings.csv` and
/// one `plot_<axis>.csv` per swept axis.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, run: &ExperimentRun) -> Result<(), CliError> {
    let cfg_path = dir.join(CONFIG_FILE);
    std::fs::write(&cfg_path, cfg.to_toml())
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg_path.display())))?;
    write_serialized(&dir.join(REPORT_FILE), &run.rows)?;
    write_serialized(&dir.join(AGGREGATE_FILE), &aggregate(cfg, &run.rows))?;
    write_serialized(&dir.join(TIMINGS_FILE), &run.timings)?;
    for axis in cfg.swept_axes() {
        let path = dir.join(format!("plot_{axis}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(io(&path))?;
        w.write_record(plot_header(axis)).map_err(io(&path))?;
        for rec in plot_rows(cfg, &run.rows, axis) {
            w.write_record(&rec).map_err(io(&path))?;
        }
        w.flush().map_err(|e| io(&path)(e.into()))?;
    }
    Ok(())
}

/// Checks that every stored Diff equals `|gc_m - gc_z_true|` from its own
/// row, bit for bit.
pub fn check_rows(rows: &[TrialRow]) -> Result<(), CliError> {
    for (i, r) in rows.iter().enumerate() {
        for c in [Cond::None, Cond::P, Cond::Zhat] {
            let Some(d) = r.diff(c) else { continue };
            let recomputed = match (r.gc(c), r.gc_z_true) {
                (Some(a), Some(b)) => (a - b).abs(),
                _ => {
                    return Err(CliError::Data(format!(
                        "row {}: diff_{} present without both gc columns",
                        i + 1,
                        c.label()
                    )))
                }
            };
            if recomputed.to_bits() != d.to_bits() {
                return Err(CliError::Data(format!(
                    "row {}: diff_{} = {d} but |gc_{} - gc_z_true| = {recomputed}",
                    i + 1,
                    c.label(),
                    c.label()
                )));
            }
        }
    }
    Ok(())
}
