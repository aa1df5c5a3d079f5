//! Subcommand implementations.

use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mpk::data::parse_columns;
use mpk::experiments::narx::NarxModelJson;
use mpk::experiments::report::write_experiment;
use mpk::experiments::silverbox::{surrogate_data, tune, TuningOutcome};
use mpk::experiments::{
    build_narx, free_run_simulate, run_silverbox, run_synthetic_with, ExperimentConfig, NarxLags, NarxModel,
    SilverboxConfig, SilverboxData,
};
use mpk::metrics::{fit_percent, rmse};
use mpk::{expand_penalties, HyperLayout, HyperParamVector, KernelConfig, KernelKind, PkParams, Signals};

use crate::config::{load, read_json, ExpandConfig, FitConfig, PredictConfig};
use crate::{
    BenchArgs, Cli, Command, Common, ExpandArgs, Failure, FitArgs, PredictArgs, PredictMode, SilverboxArgs,
};

pub const SILVERBOX_ENV: &str = "SILVERBOX_DATA";

pub fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::input("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.common.out)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", cli.common.out.display())))?;
    match cli.command {
        Command::Expand(a) => expand(&cli.common, a),
        Command::Fit(a) => fit(&cli.common, a),
        Command::Predict(a) => predict(&cli.common, a),
        Command::Bench(a) => bench(&cli.common, a),
        Command::Silverbox(a) => silverbox(&cli.common, a),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::input(e.to_string()))
}

/// Finite floats as numbers, others as `"inf"`, `"-inf"` or `"nan"`.
fn float(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn read_record(path: &Path, u_column: usize, y_column: usize) -> Result<Signals, Failure> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {origin}: {e}")))?;
    Ok(parse_columns(&text, &origin, u_column, y_column)?)
}

fn expand(common: &Common, args: ExpandArgs) -> Result<(), Failure> {
    let mut cfg: ExpandConfig = load(common.config.as_deref())?;
    if let Some(p) = &args.params {
        cfg.kernel = read_json(p)?;
    } else {
        match args.kernel {
            Some(KernelKind::Pk) => {
                cfg.kernel = KernelConfig::Pk(PkParams::new(args.degree.unwrap_or(cfg.kernel.degree()))?);
            }
            Some(KernelKind::Mpk) if !matches!(cfg.kernel, KernelConfig::Mpk(_)) => {
                return Err(Failure::input("an MPK expansion needs its parameters (--params)"));
            }
            _ => {
                if let (Some(r), KernelConfig::Pk(_)) = (args.degree, &cfg.kernel) {
                    cfg.kernel = KernelConfig::Pk(PkParams::new(r)?);
                }
            }
        }
    }
    if let Some(k) = args.kernel {
        if k.name() != cfg.kernel.name() {
            return Err(Failure::input(format!(
                "--kernel {} conflicts with a {} parameter file",
                k.name(),
                cfg.kernel.name()
            )));
        }
    }
    if let Some(m) = args.memory {
        cfg.memory = m;
    }
    let r = args.degree.unwrap_or(cfg.kernel.degree());
    let table = expand_penalties(&cfg.kernel, cfg.memory + 1, r)?;
    write_file(&common.out, "penalties.csv", &table.to_csv())?;
    write_file(
        &common.out,
        "expand.json",
        &pretty(&json!({ "config": cfg, "monomials": table.entries().len() }))?,
    )?;
    if !common.quiet {
        if r == 3 && cfg.memory == 1 {
            for (idx, l) in table.entries() {
                println!("lambda{idx} = {l}");
            }
        } else {
            println!("{} penalties written to {}", table.entries().len(), common.out.join("penalties.csv").display());
        }
    }
    Ok(())
}

/// The `model.json` document.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub config: FitConfig,
    pub model: NarxModelJson,
}

fn fit(common: &Common, args: FitArgs) -> Result<(), Failure> {
    let mut cfg: FitConfig = load(common.config.as_deref())?;
    if let Some(p) = &args.data {
        cfg.data = Some(p.clone());
    }
    if let Some(p) = &args.params {
        cfg.init = Some(read_json(p)?);
    }
    match (args.kernel, &cfg.init) {
        (Some(k), Some(init)) if k.name() != init.name() => {
            return Err(Failure::input(format!("--kernel {} conflicts with a {} parameter file", k.name(), init.name())))
        }
        (Some(k), _) => cfg.kernel = k,
        (None, Some(init)) if args.params.is_some() => {
            cfg.kernel = if matches!(init, KernelConfig::Pk(_)) { KernelKind::Pk } else { KernelKind::Mpk };
        }
        _ => {}
    }
    if let Some(r) = args.degree {
        cfg.degree = r;
    }
    if let Some(m) = args.memory {
        cfg.memory = m;
    }
    if args.output_lags.is_some() {
        cfg.output_lags = args.output_lags;
    }
    if let Some(t) = args.tuning {
        cfg.tuning = t;
    }
    if args.noise_std.is_some() {
        cfg.noise_std = args.noise_std;
    }
    if args.train_size.is_some() {
        cfg.train_size = args.train_size;
    }
    if let Some(n) = args.max_iters {
        cfg.optimizer.max_iters = n;
    }
    if let Some(s) = common.seed {
        cfg.folds.seed = s;
    }
    if args.no_normalize {
        cfg.normalize = false;
    }

    let path = cfg.data.clone().ok_or_else(|| Failure::input("fit needs a data file (--data)"))?;
    let signals = read_record(&path, cfg.u_column, cfg.y_column)?;
    let lags = NarxLags {
        input_lags: cfg.memory,
        output_lags: cfg.output_lags.unwrap_or(cfg.memory),
    };
    let all = build_narx(&signals.u, &signals.y, lags)?;
    let rows = cfg.train_size.unwrap_or(all.len());
    if rows == 0 || rows > all.len() {
        return Err(Failure::input(format!("train size {rows} must be in 1..={}", all.len())));
    }
    let data = if cfg.normalize { all.head(rows).normalized() } else { all.head(rows) };
    let output_scale = data.normalization().map_or(1.0, |n| n.output_std);

    let layout = HyperLayout {
        kind: cfg.kernel,
        degree: cfg.degree,
        dim: lags.dim(),
    };
    let default = HyperParamVector::initial(layout, &data)?;
    let raw_noise = match cfg.noise_std {
        Some(s) if s > 0.0 => (s / output_scale).sqrt(),
        Some(s) => return Err(Failure::input(format!("noise std must be > 0, got {s}"))),
        None => default.raw_noise(),
    };
    let init = match &cfg.init {
        Some(k) => {
            if k.degree() != cfg.degree {
                cfg.degree = k.degree();
            }
            HyperParamVector::from_kernel(k, lags.dim(), raw_noise)?
        }
        None => {
            let mut v = default.values().to_vec();
            v[layout.noise_index()] = raw_noise;
            default.with_values(v)?
        }
    };
    let outcome: TuningOutcome = tune(init, &data, cfg.tuning, &cfg.folds, &cfg.optimizer)?;
    let network = outcome.params.fit(&data)?;
    let model = NarxModel::new(network, lags)?;
    let train_hat = model.one_step(&signals.u, &signals.y)?;
    let train_fit = fit_percent(&signals.y[lags.start()..lags.start() + rows], &train_hat[..rows])?;

    let aborted: Option<String> = [&outcome.ml, &outcome.cv].into_iter().flatten().find_map(|r| match &r.termination {
        mpk::hyperopt::Termination::Aborted(m) => Some(m.clone()),
        _ => None,
    });
    let file = ModelFile {
        config: cfg.clone(),
        model: model.to_json(),
    };
    write_file(&common.out, "model.json", &pretty(&file)?)?;
    write_file(
        &common.out,
        "optimizer.json",
        &pretty(&json!({
            "config": cfg,
            "kernel": outcome.params.kernel(),
            "noise_std": outcome.params.noise_std() * output_scale,
            "train_fit": train_fit,
            "ml": outcome.ml,
            "cv": outcome.cv,
        }))?,
    )?;
    if !common.quiet {
        println!("kernel {} tuned by {:?}: training Fit% {train_fit:.3}", cfg.kernel.name(), cfg.tuning);
        for (stage, r) in [("ml", &outcome.ml), ("cv", &outcome.cv)] {
            if let Some(r) = r {
                println!(
                    "  {stage}: {} iterations, loss {:.6} -> {:.6}",
                    r.iterations,
                    r.loss_trace.first().copied().unwrap_or(f64::NAN),
                    r.final_loss
                );
            }
        }
    }
    match aborted {
        Some(m) => Err(Failure::numerical(format!("optimizer aborted: {m}"))),
        None => Ok(()),
    }
}

fn predict(common: &Common, args: PredictArgs) -> Result<(), Failure> {
    let mut cfg: PredictConfig = load(common.config.as_deref())?;
    if args.model.is_some() {
        cfg.model = args.model.clone();
    }
    if args.data.is_some() {
        cfg.data = args.data.clone();
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    let model_path = cfg.model.clone().ok_or_else(|| Failure::input("predict needs a model (--model)"))?;
    let data_path = cfg.data.clone().ok_or_else(|| Failure::input("predict needs a data file (--data)"))?;
    let file: ModelFile = read_json(&model_path)?;
    let model = NarxModel::from_json(file.model)?;
    let signals = read_record(&data_path, cfg.u_column, cfg.y_column)?;
    let start = model.lags.start();
    if signals.u.len() <= start {
        return Err(Failure::input(format!("record shorter than the model's {start} lags")));
    }
    let (z_hat, diverged_at) = match cfg.mode {
        PredictMode::Onestep => (model.one_step(&signals.u, &signals.y)?, None),
        PredictMode::Freerun => {
            let run = free_run_simulate(&model, &signals.u, &signals.y[..start])?;
            (run.z[start..].to_vec(), run.diverged_at)
        }
    };
    let measured = &signals.y[start..start + z_hat.len()];
    let (fit, err) = match diverged_at {
        Some(_) => (f64::NEG_INFINITY, f64::INFINITY),
        None => (fit_percent(measured, &z_hat)?, rmse(measured, &z_hat)?),
    };

    let mut csv = String::from("k,y,z_hat\n");
    for (i, (y, z)) in measured.iter().zip(&z_hat).enumerate() {
        csv.push_str(&format!("{},{y},{z}\n", start + i));
    }
    write_file(&common.out, "predictions.csv", &csv)?;
    write_file(
        &common.out,
        "metrics.json",
        &pretty(&json!({
            "config": cfg,
            "rows": z_hat.len(),
            "fit": float(fit),
            "rmse": float(err),
            "diverged_at": diverged_at,
        }))?,
    )?;
    if !common.quiet {
        match diverged_at {
            Some(k) => println!("free run diverged at sample {k}"),
            None => println!("{:?}: Fit% {fit:.3}, RMSE {err:.6e} over {} samples", cfg.mode, z_hat.len()),
        }
    }
    Ok(())
}

fn bench(common: &Common, args: BenchArgs) -> Result<(), Failure> {
    let mut cfg: ExperimentConfig = match &common.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::experiment(args.experiment.unwrap_or(1))?,
    };
    if let (Some(id), Some(_)) = (args.experiment, &common.config) {
        // the flag selects the scenario; other file values stay
        let base = ExperimentConfig::experiment(id)?;
        cfg.id = base.id;
        cfg.train_mean = base.train_mean;
        cfg.test_mean = base.test_mean;
        cfg.train_std = base.train_std;
        cfg.test_std = base.test_std;
        cfg.noise_std = base.noise_std;
    }
    if let Some(n) = args.runs {
        cfg.runs = n;
    }
    if let Some(n) = args.samples {
        cfg.samples = n;
    }
    if let Some(n) = args.max_iters {
        cfg.optimizer.max_iters = n;
    }
    if let Some(s) = common.seed {
        cfg.base_seed = s;
    }
    cfg.validate()?;

    // Completed runs are appended as they finish so an interrupted bench keeps them.
    let partial_path: PathBuf = common.out.join("runs.partial.jsonl");
    let partial = File::create(&partial_path)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", partial_path.display())))?;
    let partial = Mutex::new(partial);
    let quiet = common.quiet;
    let report = run_synthetic_with(&cfg, |records: &[mpk::experiments::RunRecord]| {
        let mut f = partial.lock().expect("partial log lock");
        for r in records {
            if let Ok(line) = serde_json::to_string(r) {
                let _ = writeln!(f, "{line}");
            }
        }
        let _ = f.flush();
        if !quiet {
            if let Some(r) = records.first() {
                eprintln!("run {} done", r.run);
            }
        }
    })?;
    write_experiment(&common.out, &report)?;
    drop(partial);
    let _ = std::fs::remove_file(&partial_path);

    if !common.quiet {
        for s in &report.summary {
            match s.test_fit {
                Some(f) => println!(
                    "{}: median test Fit% {:.3} (q1 {:.3}, q3 {:.3}), {} failed",
                    s.kernel.name(),
                    f.median,
                    f.q1,
                    f.q3,
                    s.failed_runs
                ),
                None => println!("{}: all {} runs failed", s.kernel.name(), s.failed_runs),
            }
        }
    }
    if report.records.iter().all(|r| r.test_fit.is_none()) {
        return Err(Failure::numerical("every run failed"));
    }
    Ok(())
}

fn silverbox(common: &Common, args: SilverboxArgs) -> Result<(), Failure> {
    let mut cfg: SilverboxConfig = load(common.config.as_deref())?;
    if let Some(t) = args.tuning {
        cfg.tuning = t;
    }
    if let Some(n) = args.max_iters {
        cfg.optimizer.max_iters = n;
    }
    if let Some(s) = common.seed {
        cfg.narx.folds.seed = s;
    }
    if args.surrogate && args.data.is_some() {
        return Err(Failure::input("--surrogate and --data are mutually exclusive"));
    }
    let (source, data) = if args.surrogate {
        ("surrogate".to_string(), surrogate_data(0))
    } else {
        let dir = args
            .data
            .clone()
            .or_else(|| std::env::var_os(SILVERBOX_ENV).map(PathBuf::from))
            .ok_or_else(|| {
                Failure::input(format!("no data: pass --data DIR, set {SILVERBOX_ENV}, or use --surrogate"))
            })?;
        (dir.display().to_string(), SilverboxData::load(&dir, &cfg.narx)?)
    };
    let report = run_silverbox(&data, &cfg)?;

    let mut csv = String::from("kernel,prediction_fit,simulation_fit,simulation_rmse,diverged_at\n");
    for s in &report.scores {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.kernel.name(),
            s.prediction_fit,
            s.simulation_fit,
            s.simulation_rmse,
            s.diverged_at.map_or(String::new(), |k| k.to_string())
        ));
    }
    write_file(&common.out, "silverbox.csv", &csv)?;
    write_file(&common.out, "silverbox.json", &pretty(&json!({ "data": source, "report": report }))?)?;
    if !common.quiet {
        println!("{:<6}{:>12}{:>12}{:>14}", "kernel", "pred Fit%", "sim Fit%", "sim RMSE");
        for s in &report.scores {
            println!(
                "{:<6}{:>12.3}{:>12.3}{:>14.6e}",
                s.kernel.name(),
                s.prediction_fit,
                s.simulation_fit,
                s.simulation_rmse
            );
        }
    }
    Ok(())
}
