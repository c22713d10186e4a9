use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dynhyper::dyngraph::{generate_sbm, load_dataset, split, write_dataset, DynamicGraph, LoadOptions, SplitSpec};
use dynhyper::trainer::{evaluate, predict, run, train, Ablation, MetricsReport, ModelParams};
use dynhyper::{Error, Result};

use crate::blob;
use crate::config::{DataSource, RunConfig};

fn load(cfg: &RunConfig) -> Result<DynamicGraph> {
    match &cfg.source {
        Some(DataSource::Dir(dir)) => load_dataset(dir, LoadOptions::default()),
        Some(DataSource::Sbm(_)) => generate_sbm(&cfg.sbm_params()?.expect("sbm source")),
        None => Err(Error::param("data", "one of `data` or `sbm` is required")),
    }
}

fn prepare(cfg: &RunConfig) -> Result<(DynamicGraph, SplitSpec)> {
    cfg.validate()?;
    let t = cfg.split_t()?;
    let g = load(cfg)?;
    let s = split(&g, t)?;
    Ok((g, s))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Samples the configured SBM into `out` and returns its stats line.
pub fn generate(cfg: &RunConfig) -> Result<String> {
    let Some(params) = cfg.sbm_params()? else {
        return Err(Error::param("sbm", "generate needs an SBM spec"));
    };
    params.validate()?;
    let g = generate_sbm(&params)?;
    write_dataset(&g, &cfg.out)?;
    Ok(format!("{}\n", g.stats()))
}

fn loss_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,train_loss\n");
    for (e, l) in curve.iter().enumerate() {
        let _ = writeln!(out, "{},{l}", e + 1);
    }
    out
}

/// Trains and writes `params.bin` and `loss.csv` under `out`.
pub fn train_cmd(cfg: &RunConfig) -> Result<String> {
    let (g, s) = prepare(cfg)?;
    let model = train(&g, &s, &cfg.train)?;
    write(&cfg.params_path(), blob::encode(&model.params))?;
    let curve = model.loss_curve();
    write(&cfg.out.join("loss.csv"), loss_csv(&curve))?;
    Ok(format!(
        "trained {} epochs, final loss {}\n",
        curve.len(),
        curve.last().copied().unwrap_or(f64::NAN)
    ))
}

/// Evaluates saved parameters on the test slices; writes `metrics.csv`.
pub fn eval_cmd(cfg: &RunConfig) -> Result<MetricsReport> {
    let (g, s) = prepare(cfg)?;
    let path = cfg.params_path();
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let params = blob::decode(&bytes)?;
    blob::check_compatible(&params, &ModelParams::init(&cfg.train, g.feature_dim(), g.num_classes()))?;
    let pred = predict(&g, &s, &params, &cfg.train)?;
    let report = evaluate(&g, &s, &pred, Vec::new())?;
    write(&cfg.out.join("metrics.csv"), report.to_csv())?;
    Ok(report)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Trains and evaluates `full`, `individual_only` and `group_only` with the
/// same seed; writes `ablation.csv`.
pub fn ablate_cmd(cfg: &RunConfig) -> Result<String> {
    let (g, s) = prepare(cfg)?;
    let mut table = String::from("mode,accuracy,macro_auc\n");
    for mode in [Ablation::Full, Ablation::IndividualOnly, Ablation::GroupOnly] {
        let mut train_cfg = cfg.train.clone();
        train_cfg.ablation = mode;
        let (_, report) = run(&g, &s, &train_cfg)?;
        let _ = writeln!(table, "{mode},{},{}", cell(report.accuracy), cell(report.macro_auc));
    }
    write(&cfg.out.join("ablation.csv"), &table)?;
    Ok(table)
}
