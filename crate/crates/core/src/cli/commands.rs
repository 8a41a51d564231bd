use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use super::config::{Cond, ExperimentConfig, SweepPoint};
use super::experiment::{
    aggregate, check_rows, conditioners, read_aggregate, read_rows, run_experiment, sub_seed,
    trial_bundle, write_outputs, zhat_columns, AggregateRow, TestSettings, AGGREGATE_FILE,
    CONFIG_FILE, EVAL_STREAM, MODEL_STREAM, REPORT_FILE, TEST_STREAM,
};
use super::{Cli, CliError, Command, ExperimentArgs, GenerateArgs, ReportArgs, TestArgs, TrainArgs};
use crate::granger::{diff_metric, GrangerResult};
use crate::synthdata::{load_csv, save_csv, BundleMeta, Schema};
use crate::tcvae::{train_model, write_log_csv, TcvaeError, TcvaeModel, TrainLogRow};

pub(super) fn dispatch(cli: &Cli, env_out: Option<PathBuf>) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a, env_out),
        Command::Train(a) => train(cli, a, env_out),
        Command::Test(a) => test(cli, a),
        Command::Experiment(a) => experiment(cli, a, env_out),
        Command::Report(a) => report(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(csv) = &cfg.data.csv {
        if csv.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.data.csv = Some(base.join(csv));
        }
    }
    Ok(cfg)
}

fn output_dir(flag: Option<&PathBuf>, env_out: Option<PathBuf>, configured: &Path) -> PathBuf {
    flag.cloned()
        .or(env_out)
        .unwrap_or_else(|| configured.to_path_buf())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Creates `dir`, refusing an existing one unless `force` is set.
fn prepare_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() && !force {
        return Err(CliError::Io(format!(
            "{} already exists; pass --force to write into it",
            dir.display()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn base_point(cfg: &ExperimentConfig) -> SweepPoint {
    SweepPoint {
        ploss: cfg.data.ploss,
        d_z: cfg.data.d_z,
        d_p: cfg.data.d_p,
        noise_level: cfg.data.noise_level,
        nn_steps: cfg.test.nn.steps,
        cond_copies: cfg.test.cond_copies,
    }
}

fn generate(cli: &Cli, a: &GenerateArgs, env_out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    let d = &mut cfg.data;
    if let Some(v) = a.dgp {
        d.dgp = v;
    }
    if let Some(v) = a.t {
        d.t = v;
    }
    if let Some(v) = a.ploss {
        d.ploss = v;
    }
    if let Some(v) = a.dp {
        d.d_p = v;
    }
    if let Some(v) = a.dz {
        d.d_z = v;
    }
    if let Some(v) = a.noise {
        d.noise_level = v;
    }
    if let Some(v) = cli.seed {
        d.seed = v;
    }
    if d.dgp == super::Dgp::Csv {
        return Err(CliError::Config("generate writes synthetic data; dgp csv is not generated".into()));
    }
    if d.csv.is_some() {
        d.csv = None;
    }
    cfg.validate()?;
    if a.n == 0 {
        return Ok(());
    }
    let dir = output_dir(a.out.as_ref(), env_out, &cfg.output.dir);
    prepare_dir(&dir, cli.force)?;
    let point = base_point(&cfg);
    for i in 0..a.n {
        let seed = cfg.data.seed.wrapping_add(i as u64);
        let bundle = trial_bundle(&cfg, &point, seed)?;
        let mut data = cfg.data.clone();
        data.seed = seed;
        let config = serde_json::to_value(&data).expect("data section serializes");
        let meta = BundleMeta::for_bundle(&bundle, Some(seed), Some(config));
        let path = dir.join(format!("bundle_{i:03}.csv"));
        save_csv(&bundle, &path, Some(&meta)).map_err(|e| io_err(&path, e))?;
    }
    println!("wrote {} bundle(s) to {}", a.n, dir.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct TrainSummary {
    final_elbo: f64,
    eval_samples: usize,
    epochs_done: usize,
    d_z: usize,
    d_p: usize,
    t: usize,
    seed: u64,
    checkpoint: PathBuf,
}

fn append_log(path: &Path, rows: &[TrainLogRow], append: bool) -> Result<(), CliError> {
    if !append || !path.exists() {
        return write_log_csv(path, rows).map_err(|e| io_err(path, e));
    }
    let file = OpenOptions::new().append(true).open(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn train(cli: &Cli, a: &TrainArgs, env_out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = a.epochs {
        cfg.model.epochs = v;
    }
    if a.window.is_some() {
        cfg.model.window = a.window;
    }
    if a.dz.is_some() {
        cfg.model.d_z = a.dz;
    }
    let seed = cli.seed.unwrap_or(cfg.data.seed);
    let bundle = load_csv(&a.bundle, Schema::Observed).map_err(|e| io_err(&a.bundle, e))?;
    let dir = output_dir(a.out.as_ref(), env_out, &cfg.output.dir);
    let ckpt = dir.join(if a.json { "model.json" } else { "model.ckpt" });
    let log_path = dir.join("train_log.csv");
    let in_place = match &a.resume {
        Some(r) => ckpt.exists() && same_file(r, &ckpt),
        None => false,
    };
    if !(in_place || cli.force) && [&ckpt, &log_path].iter().any(|p| p.exists()) {
        return Err(CliError::Io(format!(
            "{} already holds a model; pass --force to overwrite",
            dir.display()
        )));
    }
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let tcvae = |e: TcvaeError| CliError::Data(format!("tcvae: {e}"));
    let model = match &a.resume {
        Some(r) => {
            let mut m = TcvaeModel::load(r).map_err(|e| io_err(r, e))?;
            if m.d_p != bundle.d_p() {
                return Err(CliError::Data(format!(
                    "checkpoint expects {} proxies, bundle has {}",
                    m.d_p,
                    bundle.d_p()
                )));
            }
            m.config.epochs = cfg.model.epochs;
            m
        }
        None => {
            let d_z = bundle.z.as_ref().map_or(1, |z| z.len());
            let tc = cfg.model.tcvae(d_z, sub_seed(seed, MODEL_STREAM));
            TcvaeModel::for_bundle(tc, &bundle).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    let obs = model.observations(&bundle).map_err(tcvae)?;
    let out = match train_model(model, &obs) {
        Ok(out) => out,
        Err(TcvaeError::Diverged {
            epoch,
            window,
            reason,
            last_good,
        }) => {
            last_good.save(&ckpt).map_err(|e| io_err(&ckpt, e))?;
            eprintln!(
                "training diverged at epoch {epoch}, window {window}: {reason}; last good model saved to {}",
                ckpt.display()
            );
            return Err(CliError::Failures { failed: 1, total: 1 });
        }
        Err(e) => return Err(tcvae(e)),
    };
    out.model.save(&ckpt).map_err(|e| io_err(&ckpt, e))?;
    append_log(&log_path, &out.log, a.resume.is_some())?;
    let eval_samples = out.model.config.eval_samples;
    let terms = out
        .model
        .evaluate(&obs, eval_samples, sub_seed(seed, EVAL_STREAM))
        .map_err(tcvae)?;
    let summary = TrainSummary {
        final_elbo: terms.elbo,
        eval_samples,
        epochs_done: out.model.epochs_done,
        d_z: out.model.d_z(),
        d_p: out.model.d_p,
        t: bundle.len(),
        seed,
        checkpoint: ckpt.clone(),
    };
    let sp = dir.join("summary.json");
    std::fs::write(&sp, serde_json::to_vec_pretty(&summary).expect("summary serializes"))
        .map_err(|e| io_err(&sp, e))?;
    println!(
        "epochs {} final elbo {} ({} samples)",
        summary.epochs_done, summary.final_elbo, eval_samples
    );
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn test(cli: &Cli, a: &TestArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let mut conds: Vec<Cond> = Vec::new();
    let requested = if !a.cond.is_empty() {
        a.cond.clone()
    } else if a.config.is_some() {
        cfg.test.conditioning.clone()
    } else {
        vec![Cond::None]
    };
    for c in requested {
        if !conds.contains(&c) {
            conds.push(c);
        }
    }
    if conds.contains(&Cond::Zhat) && a.checkpoint.is_none() {
        return Err(CliError::Config("conditioning on zhat requires --checkpoint".into()));
    }
    if let Some(out) = &a.out {
        if out.exists() && !cli.force {
            return Err(CliError::Io(format!(
                "{} already exists; pass --force to overwrite",
                out.display()
            )));
        }
    }
    let seed = cli.seed.unwrap_or(cfg.data.seed);
    let bundle = load_csv(&a.bundle, Schema::Plain).map_err(|e| io_err(&a.bundle, e))?;
    let zhat = match &a.checkpoint {
        Some(path) if conds.contains(&Cond::Zhat) => {
            let model = TcvaeModel::load(path).map_err(|e| io_err(path, e))?;
            Some(
                zhat_columns(&model, &bundle, cfg.test.zhat, seed)
                    .map_err(|e| CliError::Data(format!("tcvae: {e}")))?,
            )
        }
        _ => None,
    };
    let settings = TestSettings {
        method: a.method.unwrap_or(cfg.test.method),
        lag: a.lag.unwrap_or(cfg.test.lag),
        alpha: a.alpha.unwrap_or(cfg.test.alpha),
        forest: cfg.test.forest,
        nn: cfg.test.nn,
        seed: sub_seed(seed, TEST_STREAM),
    };
    if settings.lag == 0 {
        return Err(CliError::Config("lag must be at least 1".into()));
    }
    if !(settings.alpha > 0.0 && settings.alpha < 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", settings.alpha)));
    }
    let mut results: Vec<(Cond, GrangerResult)> = Vec::new();
    for &c in &conds {
        let cond = conditioners(c, &bundle, zhat.as_deref(), cfg.test.cond_copies)?;
        let r = settings
            .run(&bundle.x, &bundle.y, &cond)
            .map_err(|e| CliError::Data(format!("{} test: {e}", c.label())))?;
        results.push((c, r));
    }
    let plain: Vec<GrangerResult> = results.iter().map(|(_, r)| r.clone()).collect();
    match &a.out {
        Some(out) => crate::granger::write_results_csv(out, &plain).map_err(|e| io_err(out, e))?,
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let _ = w.write_record(GrangerResult::csv_header());
            for r in &plain {
                let _ = w.write_record(r.csv_record());
            }
            let _ = w.flush();
        }
    }
    if let Some((_, reference)) = results.iter().find(|(c, _)| *c == Cond::ZTrue) {
        for (c, r) in &results {
            if *c != Cond::ZTrue {
                let d = diff_metric(r, reference).map_err(|e| CliError::Data(e.to_string()))?;
                eprintln!("diff_{} = {}", c.label(), d.value);
            }
        }
    }
    Ok(())
}

fn experiment(cli: &Cli, a: &ExperimentArgs, env_out: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = load_config(Some(&a.config))?;
    if let Some(s) = cli.seed {
        cfg.data.seed = s;
    }
    let dir = output_dir(a.out.as_ref(), env_out, &cfg.output.dir);
    prepare_dir(&dir, cli.force)?;
    let models = if cfg.output.save_models {
        let m = dir.join("models");
        std::fs::create_dir_all(&m).map_err(|e| io_err(&m, e))?;
        Some(m)
    } else {
        None
    };
    let run = run_experiment(&cfg, cli.jobs, models.as_deref())?;
    write_outputs(&dir, &cfg, &run)?;
    print_aggregate(&aggregate(&cfg, &run.rows));
    let failed = run.failures();
    if failed > 0 {
        return Err(CliError::Failures {
            failed,
            total: run.rows.len(),
        });
    }
    Ok(())
}

fn report(a: &ReportArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&a.dir.join(CONFIG_FILE))?;
    let rows = read_rows(&a.dir.join(REPORT_FILE))?;
    check_rows(&rows)?;
    let agg = aggregate(&cfg, &rows);
    let stored = read_aggregate(&a.dir.join(AGGREGATE_FILE))?;
    if stored != agg {
        return Err(CliError::Data(format!(
            "{} does not match the aggregate recomputed from {}",
            AGGREGATE_FILE, REPORT_FILE
        )));
    }
    print_aggregate(&agg);
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn count(v: Option<usize>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

fn print_aggregate(rows: &[AggregateRow]) {
    println!(
        "{:>5} {:>6} {:>4} {:>4} {:>6} {:>6} {:>6} {:>7} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}",
        "point", "ploss", "d_z", "d_p", "noise", "steps", "copies", "trials", "diff_p", "diff_zhat",
        "zhat-p", "false_n", "false_p", "false_z"
    );
    for r in rows {
        println!(
            "{:>5} {:>6} {:>4} {:>4} {:>6} {:>6} {:>6} {:>7} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}",
            r.point,
            r.ploss,
            r.d_z,
            r.d_p,
            r.noise_level,
            r.nn_steps,
            r.cond_copies,
            r.trials - r.failed,
            cell(r.diff_mean_p),
            cell(r.diff_mean_zhat),
            cell(r.diff_zhat_minus_p),
            count(r.false_none),
            count(r.false_p),
            count(r.false_z_true),
        );
    }
}
