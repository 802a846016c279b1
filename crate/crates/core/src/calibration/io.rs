//! CSV formats for calibration experiments.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::spectrum::RingdownRecord;
use super::stiffness::LoadDisplacementPair;

pub fn read_pairs<R: Read>(input: R) -> Result<Vec<LoadDisplacementPair>> {
    let mut reader = csv::Reader::from_reader(input);
    expect_headers(&mut reader, &["applied_mass_g", "tip_displacement_mm"])?;
    let mut pairs = Vec::new();
    for row in reader.deserialize() {
        let pair: LoadDisplacementPair = row?;
        pair.validate()?;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(invalid("no load-displacement pairs in input"));
    }
    Ok(pairs)
}

pub fn write_pairs<W: Write>(output: W, pairs: &[LoadDisplacementPair]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    for p in pairs {
        writer.serialize(p)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct RingdownRow {
    time_s: f64,
    strain_microstrain: f64,
}

/// Reads a uniformly sampled ring-down; the rate is inferred from the time column.
pub fn read_ringdown<R: Read>(input: R) -> Result<RingdownRecord> {
    let mut reader = csv::Reader::from_reader(input);
    expect_headers(&mut reader, &["time_s", "strain_microstrain"])?;
    let rows: Vec<RingdownRow> = reader.deserialize().collect::<Result<_, _>>()?;
    if rows.len() < 2 {
        return Err(invalid("ring-down needs at least two samples"));
    }
    let n = rows.len();
    let span = rows[n - 1].time_s - rows[0].time_s;
    if !(span > 0.0) {
        return Err(invalid("ring-down time column must increase"));
    }
    let dt = span / (n - 1) as f64;
    for (i, w) in rows.windows(2).enumerate() {
        let step = w[1].time_s - w[0].time_s;
        if (step - dt).abs() > 1e-6 * dt {
            return Err(invalid(format!("ring-down is not uniformly sampled at row {}", i + 2)));
        }
    }
    RingdownRecord::new(1.0 / dt, rows.into_iter().map(|r| r.strain_microstrain).collect())
}

pub fn write_ringdown<W: Write>(output: W, rec: &RingdownRecord) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    for (i, &s) in rec.samples.iter().enumerate() {
        writer.serialize(RingdownRow { time_s: rec.time(i), strain_microstrain: s })?;
    }
    writer.flush()?;
    Ok(())
}

fn expect_headers<R: Read>(reader: &mut csv::Reader<R>, want: &[&str]) -> Result<()> {
    let got = reader.headers()?;
    if got.len() != want.len() || got.iter().zip(want).any(|(g, w)| g.trim() != *w) {
        return Err(invalid(format!("expected CSV header `{}`, found `{}`", want.join(","), got.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(())
}
