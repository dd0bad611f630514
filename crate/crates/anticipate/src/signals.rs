//! Raw accelerometer CSV input (`t,ax,ay,az,hand`) for the classifier.

use std::path::Path;

use anticipate_core::motion::{window_stream, AccelWindow, Hand, WINDOW_HOP};
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct SignalRow {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub hand: Hand,
}

pub fn read_signals(path: &Path) -> Result<Vec<SignalRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// One window cut from a hand's stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    pub hand: Hand,
    pub index: usize,
    /// Timestamp of the first sample.
    pub start_t: f64,
    pub window: AccelWindow,
}

/// Splits rows per hand, orders each stream by time and cuts 2-second
/// windows with a 1-second hop. Hands with fewer samples than one window
/// yield nothing.
pub fn windows(rows: &[SignalRow]) -> Result<Vec<SignalWindow>> {
    let mut out = Vec::new();
    for hand in [Hand::Right, Hand::Left] {
        let mut stream: Vec<&SignalRow> = rows.iter().filter(|r| r.hand == hand).collect();
        stream.sort_by(|a, b| a.t.total_cmp(&b.t));
        let samples: Vec<[f64; 3]> = stream.iter().map(|r| [r.ax, r.ay, r.az]).collect();
        if samples.len() < anticipate_core::motion::WINDOW_LEN {
            continue;
        }
        for (index, window) in window_stream(&samples, hand)?.into_iter().enumerate() {
            out.push(SignalWindow { hand, index, start_t: stream[index * WINDOW_HOP].t, window });
        }
    }
    Ok(out)
}
