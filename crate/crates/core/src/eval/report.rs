//! Result tables, loss curves and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use crate::error::Result;
use crate::trainer::TrainRecord;

use super::config::{ExperimentConfig, LoadedData};
use super::experiment::{loss_curve, repetition_setup, ExperimentOutcome, ResultRow};

pub const RESULT_COLUMNS: [&str; 9] = [
    "ansatz",
    "k",
    "s",
    "roc_auc",
    "f1",
    "queries",
    "speed_up",
    "optimizer",
    "cv_std",
];

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.ansatz.clone(),
            r.k.to_string(),
            r.s.to_string(),
            format!("{:.4}", r.roc_auc),
            format!("{:.4}", r.f1),
            format!("{:.1}", r.queries),
            r.speed_up.map_or_else(String::new, |v| format!("{v:.2}")),
            r.optimizer.clone(),
            format!("{:.4}", r.cv_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let num = |i: usize| field(i).parse::<f64>().unwrap_or(f64::NAN);
        rows.push(ResultRow {
            ansatz: field(0),
            k: field(1).parse().unwrap_or(0),
            s: field(2).parse().unwrap_or(0),
            roc_auc: num(3),
            f1: num(4),
            queries: num(5),
            speed_up: field(6).parse().ok(),
            optimizer: field(7),
            cv_std: num(8),
        });
    }
    Ok(rows)
}

pub fn write_loss_curve_csv(path: &Path, record: &TrainRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "raw_loss", "normalized_loss"])?;
    for (i, raw, norm) in loss_curve(record) {
        w.write_record([i.to_string(), format!("{raw:.12e}"), format!("{norm:.12e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Static line plot of the normalized loss.
pub fn loss_curve_svg(record: &TrainRecord, title: &str) -> String {
    let (width, height, pad) = (640.0, 360.0, 40.0);
    let curve = loss_curve(record);
    let last = curve.len().saturating_sub(1).max(1) as f64;
    let mut points = String::new();
    for (i, _, norm) in &curve {
        let x = pad + (width - 2.0 * pad) * (*i as f64) / last;
        let y = height - pad - (height - 2.0 * pad) * norm;
        let _ = write!(points, "{x:.1},{y:.1} ");
    }
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<text x=\"{p}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
            "<line x1=\"{p}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<line x1=\"{p}\" y1=\"{p}\" x2=\"{p}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<text x=\"{r}\" y=\"{lb}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">iteration</text>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{pts}\"/>\n",
            "</svg>\n"
        ),
        w = width,
        h = height,
        p = pad,
        b = height - pad,
        r = width - pad,
        lb = height - pad / 4.0,
        title = title,
        pts = points.trim_end(),
    )
}

/// Writes every artifact of `outcome` below `dir` (baseline first, recursively).
pub fn write_experiment(
    dir: &Path,
    cfg: &ExperimentConfig,
    data: &LoadedData,
    outcome: &ExperimentOutcome,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    if let Some(b) = &outcome.baseline {
        rows.push(b.row.clone());
    }
    rows.push(outcome.row.clone());
    write_results_csv(&dir.join("results.csv"), &rows)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;

    let mut rep_entries = Vec::new();
    for rep in &outcome.repetitions {
        let rep_dir = dir.join(format!("rep-{}", rep.index));
        fs::create_dir_all(&rep_dir)?;
        fs::write(
            rep_dir.join("train_record.json"),
            serde_json::to_string_pretty(&rep.record)?,
        )?;
        write_loss_curve_csv(&rep_dir.join("loss_curve.csv"), &rep.record)?;
        if cfg.render_svg {
            let title = format!(
                "{} k={} s={} repetition {}",
                outcome.row.ansatz, outcome.row.k, outcome.row.s, rep.index
            );
            fs::write(rep_dir.join("loss_curve.svg"), loss_curve_svg(&rep.record, &title))?;
        }
        let (setup, theta_init) = repetition_setup(cfg, &data.train, rep.index);
        rep_entries.push(json!({
            "index": rep.index,
            "seed": rep.seed,
            "setup": setup,
            "theta_init": theta_init,
            "theta_opt": rep.record.theta_opt,
            "stopping_iteration": rep.record.stopping_iteration,
            "iterations_run": rep.record.iterations.len(),
            "c": rep.c,
            "validation_auc": rep.validation_auc,
            "roc_auc": rep.roc_auc,
            "f1": rep.f1,
            "queries": rep.queries,
            "ledger_total": rep.ledger_total,
            "finalize_queries": rep.finalize_queries,
            "scoring_queries": rep.scoring_queries,
            "cv_std": rep.cv_std,
        }));
    }
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "m_train": data.train.len(),
        "m_test": data.test.len(),
        "n_qubits": data.train.dim(),
        "query_convention": cfg.query_convention.to_string(),
        "row": outcome.row,
        "dataset": data.manifest,
        "repetitions": rep_entries,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
