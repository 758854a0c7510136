//! Trace CSV and event JSON-lines I/O.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::supervisor::{Event, Mode};

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 24] = [
    "t",
    "w",
    "v",
    "w_ref",
    "v_ref",
    "slip",
    "u",
    "T_e",
    "P_cmd",
    "active_controller",
    "active_model",
    "submodel",
    "f_hat_norm",
    "rule1_threshold",
    "envelope_value",
    "f_tilde_w",
    "f_tilde_v",
    "x_tilde_w",
    "x_tilde_v",
    "V_sigma",
    "x_bar_w",
    "x_bar_v",
    "mu_sigma",
    "segment",
];

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub w: f64,
    pub v: f64,
    pub w_ref: f64,
    pub v_ref: f64,
    pub slip: f64,
    pub u: f64,
    pub T_e: f64,
    pub P_cmd: f64,
    pub active_controller: Mode,
    pub active_model: String,
    pub submodel: u8,
    pub f_hat_norm: f64,
    pub rule1_threshold: f64,
    pub envelope_value: f64,
    pub f_tilde_w: f64,
    pub f_tilde_v: f64,
    pub x_tilde_w: f64,
    pub x_tilde_v: f64,
    pub V_sigma: f64,
    pub x_bar_w: f64,
    pub x_bar_v: f64,
    pub mu_sigma: f64,
    pub segment: usize,
}

pub fn write_trace<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_COLUMNS {
        return Err(Error::Scenario(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    for r in rd.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

/// Minimal `(t, w, v, u)` reader used by the learner; any extra columns are ignored.
pub fn read_state_columns<R: Read>(input: R) -> Result<Vec<[f64; 4]>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Scenario(format!("trace has no column {name}")))
    };
    let idx = [col("t")?, col("w")?, col("v")?, col("u")?];
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let mut row = [0.0; 4];
        for (k, i) in idx.iter().enumerate() {
            row[k] = rec[*i]
                .trim()
                .parse()
                .map_err(|_| Error::Scenario(format!("bad number {:?} in column {}", &rec[*i], &header[*i])))?;
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_events<W: Write>(events: &[Event], mut out: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events<R: Read>(input: R) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for line in BufReader::new(input).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
