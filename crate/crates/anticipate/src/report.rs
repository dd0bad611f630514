//! CSV reports. Floats use Rust's shortest round-trip formatting, so
//! identical inputs give byte-identical files.

use std::fs;
use std::path::Path;

use anticipate_core::eval::{EvalReport, SweepRow, SWEEP_FRACTIONS};
use anticipate_core::motion::{ClassAccuracy, MotionClass};
use anticipate_core::train::EpochStats;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub anticipation_loss: f64,
    pub policy_loss: f64,
    pub trigger_ratio: f64,
    pub val_accuracy: Option<f64>,
}

impl From<&EpochStats> for LogRow {
    fn from(s: &EpochStats) -> Self {
        Self {
            epoch: s.epoch,
            anticipation_loss: s.anticipation_loss,
            policy_loss: s.policy_loss,
            trigger_ratio: s.trigger_ratio,
            val_accuracy: s.val_accuracy,
        }
    }
}

pub fn write_training_log(path: &Path, history: &[EpochStats]) -> Result<()> {
    write_rows(path, history.iter().map(LogRow::from))
}

pub fn write_motion_log(path: &Path, losses: &[f64]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        epoch: usize,
        loss: f64,
    }
    write_rows(path, losses.iter().enumerate().map(|(epoch, &loss)| Row { epoch, loss }))
}

/// Per-class accuracy of one evaluation setting, plus an `all` row.
pub fn write_motion_accuracy(path: &Path, results: &[(&str, &ClassAccuracy)]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        setting: &'a str,
        class: &'a str,
        correct: usize,
        total: usize,
        accuracy: f64,
    }
    let mut rows = Vec::new();
    for (setting, acc) in results {
        for c in MotionClass::ALL {
            let (correct, total) = (acc.correct[c.index()], acc.total[c.index()]);
            rows.push(Row { setting, class: c.name(), correct, total, accuracy: acc.class(c).unwrap_or(0.0) });
        }
        let correct = acc.correct.iter().sum();
        let total = acc.total.iter().sum();
        rows.push(Row { setting, class: "all", correct, total, accuracy: acc.overall() });
    }
    write_rows(path, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: String,
    pub fraction: f64,
    pub accuracy: f64,
    pub trigger_ratio: f64,
    pub episodes: usize,
}

pub fn mode_rows(report: &EvalReport) -> Vec<ModeRow> {
    let mut rows = Vec::new();
    for m in &report.modes {
        for (i, &fraction) in report.fractions.iter().enumerate() {
            rows.push(ModeRow {
                mode: m.mode.name().to_string(),
                fraction,
                accuracy: m.accuracy[i],
                trigger_ratio: m.ratio[i],
                episodes: report.episodes,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub tau: f64,
    pub trigger_ratio: f64,
    pub accuracy_25: f64,
    pub accuracy_100: f64,
    pub episodes: usize,
}

pub fn sweep_rows(sweep: &[SweepRow], episodes: usize) -> Vec<SweepCsvRow> {
    debug_assert_eq!(SWEEP_FRACTIONS, [0.25, 1.0]);
    sweep
        .iter()
        .map(|r| SweepCsvRow {
            tau: r.tau,
            trigger_ratio: r.ratio,
            accuracy_25: r.accuracy[0],
            accuracy_100: r.accuracy[1],
            episodes,
        })
        .collect()
}

pub fn write_sweep(path: &Path, sweep: &[SweepRow], episodes: usize) -> Result<()> {
    write_rows(path, sweep_rows(sweep, episodes))
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepCsvRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| Error::format(path, e))).collect()
}

/// Writes `mode,fraction,accuracy,trigger_ratio,episodes`, the confusion
/// matrix and the sweep table.
pub fn write_eval(dir: &Path, report: &EvalReport) -> Result<()> {
    write_rows(&dir.join("eval_modes.csv"), mode_rows(report))?;
    let path = dir.join("confusion.csv");
    let mut w = writer(&path)?;
    let n = report.confusion.len();
    let mut header = vec!["true".to_string()];
    header.extend((0..n).map(|i| format!("pred_{i}")));
    w.write_record(&header).map_err(|e| Error::format(&path, e))?;
    for (i, row) in report.confusion.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec).map_err(|e| Error::format(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_sweep(&dir.join("sweep.csv"), &report.sweep, report.episodes)
}

/// Plot-ready `(x, y)` series of a sweep: trigger ratio against accuracy
/// at each sweep fraction.
pub fn write_sweep_series(path: &Path, rows: &[SweepCsvRow]) -> Result<()> {
    #[derive(Serialize)]
    struct Point {
        series: &'static str,
        x: f64,
        y: f64,
    }
    let mut points = Vec::with_capacity(2 * rows.len());
    for (series, pick) in [("accuracy_25", 0), ("accuracy_100", 1)] {
        for r in rows {
            let y = if pick == 0 { r.accuracy_25 } else { r.accuracy_100 };
            points.push(Point { series, x: r.trigger_ratio, y });
        }
    }
    write_rows(path, points)
}

/// Human-readable summary of an evaluation.
pub fn summary(report: &EvalReport) -> String {
    let mut s = format!("{} test episodes\nmode  ", report.episodes);
    for f in &report.fractions {
        s += &format!("{:>8}", format!("{:.0}%", f * 100.0));
    }
    s += "   ratio\n";
    for m in &report.modes {
        s += &format!("{:<6}", m.mode.name());
        for a in &m.accuracy {
            s += &format!("{:>8.4}", a);
        }
        s += &format!("{:>8.4}\n", m.ratio.last().copied().unwrap_or(0.0));
    }
    s
}
