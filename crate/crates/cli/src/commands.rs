//! One function per experiment. Each writes its artifacts under the output
//! directory and returns a one-line JSON summary for stdout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use vitl_core::data::io::{format_float, landmark_columns, load_dataset, read_landmarks, theta_columns, RecordReader};
use vitl_core::data::{apply_mask, embed_dataset, EmbeddingTable, Mode};
use vitl_core::eval::report::{write_json, write_table, write_trajectory};
use vitl_core::eval::{
    angular_path, cross_validate, default_bandwidths, fit_trajectories, identity_split, log_spaced, missing_data_sweep,
    radial_path, rank_sweep, test_error, GridSpec, Hyper, OutputChoice, SplitPlan,
};
use vitl_core::model::ModelMetrics;
use vitl_core::rng::child_seed;
use vitl_core::{EmotionPoint, LandmarkVector, Result, TrajectoryDataset, VitlError, VitlModel};

use crate::config::{EmotionArg, Experiment, PathKind, RunConfig};

pub const MODEL_FILE: &str = "model.vitl";

pub fn run(cfg: &RunConfig) -> Result<Value> {
    match cfg.experiment {
        Experiment::Fit => fit(cfg),
        Experiment::Cv => cv(cfg),
        Experiment::RankSweep => rank(cfg),
        Experiment::MaskSweep => mask(cfg),
        Experiment::Generate => generate(cfg),
        Experiment::Predict => predict(cfg),
    }
}

/// Writes through a sibling temp file so a failed run never leaves a partial artifact.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(std::fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(cfg.out_dir.join(name))
}

fn embedding_table(cfg: &RunConfig) -> Result<EmbeddingTable> {
    match cfg.embedding.as_deref() {
        None | Some("builtin") => Ok(EmbeddingTable::builtin()),
        Some(path) => EmbeddingTable::load(path),
    }
}

fn load_data(cfg: &RunConfig) -> Result<TrajectoryDataset> {
    let path = cfg.dataset.as_ref().ok_or_else(|| VitlError::Config("no dataset given".into()))?;
    let data = load_dataset(path)?;
    match cfg.embedding {
        Some(_) => embed_dataset(&data, &embedding_table(cfg)?),
        None => Ok(data),
    }
}

fn mode_name(mode: &Mode) -> &'static str {
    match mode {
        Mode::Single(_) => "single",
        Mode::Joint => "joint",
    }
}

fn output_choice(cfg: &RunConfig) -> OutputChoice {
    cfg.rank.map_or(OutputChoice::Identity, OutputChoice::LowRank)
}

/// Split 0 of the configured plan, or the whole dataset twice when the test
/// fraction is zero.
fn first_split(cfg: &RunConfig, data: &TrajectoryDataset) -> Result<(TrajectoryDataset, TrajectoryDataset, &'static str)> {
    if cfg.plan.test_fraction == 0.0 {
        return Ok((data.clone(), data.clone(), "train"));
    }
    let plan = SplitPlan { n_splits: 1, ..cfg.plan };
    let (train, test) = identity_split(data, &plan)?.remove(0);
    Ok((train, test, "test"))
}

/// Configured bandwidths, falling back to the median heuristic on the
/// training part of split 0.
fn bandwidths(cfg: &RunConfig, data: &TrajectoryDataset) -> Result<(f64, f64)> {
    if let (Some(gx), Some(gt)) = (cfg.gamma_x, cfg.gamma_theta) {
        return Ok((gx, gt));
    }
    let (train, _, _) = first_split(cfg, data)?;
    let (gx, gt) = default_bandwidths(&cfg.mode.build(&train)?)?;
    Ok((cfg.gamma_x.unwrap_or(gx), cfg.gamma_theta.unwrap_or(gt)))
}

fn hyper(cfg: &RunConfig, data: &TrajectoryDataset) -> Result<Hyper> {
    let (gamma_x, gamma_theta) = bandwidths(cfg, data)?;
    Ok(Hyper { gamma_x, gamma_theta, lambda: cfg.lambda() })
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    metrics: ModelMetrics,
    solver: &'a str,
    mode: &'a str,
    evaluated_on: &'a str,
    n_evaluated: usize,
    observed_fraction: f64,
    n_train_identities: usize,
    n_test_identities: usize,
    train_mse_half: f64,
}

fn fit(cfg: &RunConfig) -> Result<Value> {
    let data = load_data(cfg)?;
    let (train, test, evaluated_on) = first_split(cfg, &data)?;
    let h = hyper(cfg, &data)?;
    let masked = apply_mask(&train, cfg.observed_fraction, child_seed(cfg.seed, 0, 0))?;
    let model = fit_trajectories(&masked, &cfg.mode, &output_choice(cfg), &h)?;
    let eval = test_error(&model, &test, &cfg.mode)?;
    let train_err = test_error(&model, &masked, &cfg.mode)?;
    let report = FitReport {
        metrics: model.metrics(&eval)?,
        solver: model.solver_path().as_str(),
        mode: mode_name(&cfg.mode),
        evaluated_on,
        n_evaluated: eval.n_observed,
        observed_fraction: cfg.observed_fraction,
        n_train_identities: train.n(),
        n_test_identities: test.n(),
        train_mse_half: train_err.mse_half,
    };
    let bytes = model.to_bytes();
    write_atomic(&out_path(cfg, MODEL_FILE)?, |w| Ok(w.write_all(&bytes)?))?;
    write_atomic(&out_path(cfg, "metrics.json")?, |w| write_json(&report, w))?;
    Ok(serde_json::to_value(&report).map_err(|e| VitlError::Io(std::io::Error::other(e)))?)
}

fn cv_grid(cfg: &RunConfig, train: &TrajectoryDataset) -> Result<GridSpec> {
    let g = &cfg.grid;
    let heuristic = match (&g.gamma_x, &g.gamma_theta) {
        (Some(_), Some(_)) => None,
        _ => Some(default_bandwidths(&cfg.mode.build(train)?)?),
    };
    let around = |c: f64| vec![c / 3.0, c, 3.0 * c];
    let gamma_x = g.gamma_x.clone().unwrap_or_else(|| around(heuristic.expect("heuristic computed").0));
    let gamma_theta = g.gamma_theta.clone().unwrap_or_else(|| around(heuristic.expect("heuristic computed").1));
    let lambda = match &g.lambda {
        Some(l) => l.clone(),
        None => log_spaced(1e-6, 1.0, 7)?,
    };
    GridSpec::new(gamma_x, gamma_theta, lambda)
}

fn cv(cfg: &RunConfig) -> Result<Value> {
    let data = load_data(cfg)?;
    let (train, test, evaluated_on) = first_split(cfg, &data)?;
    let grid = cv_grid(cfg, &train)?;
    let output = output_choice(cfg);
    let result = cross_validate(&train, &grid, cfg.folds, &cfg.mode, &output, cfg.seed)?;
    let model = fit_trajectories(&train, &cfg.mode, &output, &result.best.hyper())?;
    let eval = test_error(&model, &test, &cfg.mode)?;
    write_atomic(&out_path(cfg, "cv_table.csv")?, |w| write_table(&result.rows, w, b','))?;
    write_atomic(&out_path(cfg, "cv_points.csv")?, |w| write_table(&result.points, w, b','))?;
    let best = json!({ "best": result.best, "evaluated_on": evaluated_on, "test": eval, "grid_size": grid.size(), "folds": cfg.folds });
    write_atomic(&out_path(cfg, "cv_best.json")?, |w| write_json(&best, w))?;
    Ok(best)
}

fn rank(cfg: &RunConfig) -> Result<Value> {
    let data = load_data(cfg)?;
    let h = hyper(cfg, &data)?;
    let ranks = cfg.ranks.clone().unwrap_or_else(|| (0..=data.d()).collect());
    let sweep = rank_sweep(&data, &cfg.plan, &cfg.mode, &h, &ranks)?;
    write_atomic(&out_path(cfg, "rank_sweep.csv")?, |w| write_table(&sweep.rows, w, b','))?;
    write_atomic(&out_path(cfg, "rank_summary.csv")?, |w| write_table(&sweep.summary, w, b','))?;
    let summary = json!({ "hyper": h, "summary": sweep.summary, "nonincreasing": sweep.nonincreasing });
    write_atomic(&out_path(cfg, "rank_summary.json")?, |w| write_json(&summary, w))?;
    Ok(summary)
}

fn mask(cfg: &RunConfig) -> Result<Value> {
    let data = load_data(cfg)?;
    let h = hyper(cfg, &data)?;
    let sweep = missing_data_sweep(&data, &cfg.plan, &cfg.mode, &output_choice(cfg), &h, &cfg.fractions, cfg.masks_per_split)?;
    write_atomic(&out_path(cfg, "mask_sweep.csv")?, |w| write_table(&sweep.rows, w, b','))?;
    write_atomic(&out_path(cfg, "mask_summary.csv")?, |w| write_table(&sweep.summary, w, b','))?;
    let summary = json!({ "hyper": h, "summary": sweep.summary, "violations": sweep.violations() });
    write_atomic(&out_path(cfg, "mask_summary.json")?, |w| write_json(&summary, w))?;
    Ok(summary)
}

fn emotion_point(arg: &EmotionArg, table: &EmbeddingTable, p: usize) -> Result<EmotionPoint> {
    let point = match arg {
        EmotionArg::Label(l) => table.get(l)?,
        EmotionArg::Coords(c) => EmotionPoint::new(c.clone())?,
    };
    if point.dim() != p {
        return Err(VitlError::Dimension(format!("emotion has {} coordinates but the model expects {p}", point.dim())));
    }
    Ok(point)
}

fn generation_input(cfg: &RunConfig) -> Result<LandmarkVector> {
    if let Some(path) = &cfg.input {
        let rows = read_landmarks(File::open(path)?)?;
        return rows.into_iter().next().ok_or_else(|| VitlError::Data(format!("{} has no landmark rows", path.display())));
    }
    let id = cfg.identity.as_deref().ok_or_else(|| VitlError::Config("generate needs --input or --identity".into()))?;
    let data = load_data(cfg)?;
    let i = data
        .identities()
        .iter()
        .position(|ident| ident.id == id)
        .ok_or_else(|| VitlError::Data(format!("identity '{id}' not in dataset")))?;
    let selector = match &cfg.mode {
        Mode::Single(sel) => sel.clone(),
        Mode::Joint => cfg.theta0.selector()?,
    };
    let slot = data
        .find_emotion(i, &selector)
        .ok_or_else(|| VitlError::Data(format!("identity '{id}' has no observation at {selector}")))?;
    Ok(data.identities()[i].observations[slot].landmarks.clone())
}

fn need<'a>(arg: &'a Option<EmotionArg>, name: &str) -> Result<&'a EmotionArg> {
    arg.as_ref().ok_or_else(|| VitlError::Config(format!("path needs --{name}")))
}

fn generate(cfg: &RunConfig) -> Result<Value> {
    let model = VitlModel::load(cfg.model.as_ref().expect("validated"))?;
    let x = generation_input(cfg)?;
    let table = embedding_table(cfg)?;
    let p = model.p();
    let thetas = match cfg.path {
        PathKind::Radial => radial_path(&emotion_point(need(&cfg.from, "from")?, &table, p)?, &cfg.radii)?,
        PathKind::Angular => angular_path(
            &emotion_point(need(&cfg.from, "from")?, &table, p)?,
            &emotion_point(need(&cfg.to, "to")?, &table, p)?,
            cfg.steps,
        )?,
    };
    let preds = model.predict_curve(&x, &thetas)?;
    let path = out_path(cfg, "trajectory.csv")?;
    write_atomic(&path, |w| write_trajectory(&thetas, &preds, p, model.d(), w))?;
    Ok(json!({ "trajectory": path, "points": thetas.len() }))
}

fn predict(cfg: &RunConfig) -> Result<Value> {
    let model = VitlModel::load(cfg.model.as_ref().expect("validated"))?;
    let queries = cfg.queries.as_ref().expect("validated");
    let mut reader = RecordReader::new(File::open(queries)?)?;
    let layout = reader.layout().clone();
    if layout.p != model.p() || layout.d != model.d() {
        return Err(VitlError::Dimension(format!(
            "query file has {} emotion and {} landmark columns, model expects {} and {}",
            layout.p,
            layout.d,
            model.p(),
            model.d()
        )));
    }
    let table = match cfg.embedding {
        Some(_) => Some(embedding_table(cfg)?),
        None => None,
    };
    let path = out_path(cfg, "predictions.csv")?;
    let mut rows = 0usize;
    write_atomic(&path, |w| {
        let mut header = vec!["identity".to_string(), "emotion".to_string()];
        header.extend(theta_columns(model.p()));
        header.extend(landmark_columns(model.d()));
        writeln!(w, "{}", header.join(","))?;
        for rec in reader.by_ref() {
            let rec = rec?;
            let theta = match (&table, rec.label.is_empty()) {
                (Some(t), false) => t.get(&rec.label)?,
                _ => EmotionPoint::new(rec.theta.clone())?,
            };
            let x = LandmarkVector::new(rec.landmarks.clone())
                .map_err(|e| VitlError::Data(format!("{}: line {}: {e}", queries.display(), rec.line)))?;
            let y = model.predict(&x, &theta)?;
            let mut fields = vec![quote(&rec.identity), quote(&rec.label)];
            fields.extend(theta.coords().iter().map(|&v| format_float(v)));
            fields.extend(y.as_slice().iter().map(|&v| format_float(v)));
            writeln!(w, "{}", fields.join(","))?;
            rows += 1;
        }
        Ok(())
    })
    .map_err(|e| match e {
        VitlError::Data(m) if !m.starts_with(&queries.display().to_string()) => {
            VitlError::Data(format!("{}: {m}", queries.display()))
        }
        other => other,
    })?;
    Ok(json!({ "predictions": path, "rows": rows }))
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

