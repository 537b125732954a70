//! CSV and binary artefacts, with readers for each.
//!
//! Floats are written with six significant digits so reruns produce
//! byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsa::{make_grid, FrequencyGrid, JointAmplitude};
use crate::metrics::SourceMetrics;
use crate::optimizer::{ConvergencePoint, OptimalPoint, SweepResult, SweepRow};

/// Largest grid dumped as CSV; larger ones go to raw little-endian `f64`.
pub const CSV_DUMP_LIMIT: usize = 512;

pub const SWEEP_HEADER: [&str; 9] = [
    "filter_fwhm_nm",
    "L_mm",
    "pump_fwhm_nm",
    "eta",
    "x2",
    "alpha",
    "k_max",
    "purity_unfiltered",
    "converged",
];

pub const TABLE_HEADER: [&str; 7] = [
    "crystal",
    "alpha_opt",
    "eta_tb",
    "lambda_c_nm",
    "L_mm",
    "pump_fwhm_nm",
    "filter_fwhm_nm",
];

pub const CONVERGENCE_HEADER: [&str; 3] = ["N", "alpha", "deviation"];

/// `%.6g`-style formatting.
pub fn fmt6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn parse_f64(s: &str, column: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Validation(format!("column `{column}`: cannot parse `{s}`")))
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(Error::Validation(format!(
            "unexpected CSV header {got:?}, expected {expected:?}"
        )));
    }
    Ok(())
}

pub fn write_sweep<W: Write>(out: W, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in &sweep.rows {
        let p = &r.point;
        w.write_record([
            fmt6(r.filter_fwhm_nm),
            fmt6(p.length_mm),
            fmt6(p.pump_fwhm_nm),
            fmt6(p.metrics.transmission),
            fmt6(p.metrics.purity),
            fmt6(p.metrics.alpha),
            p.metrics.k_max.to_string(),
            fmt6(p.purity_unfiltered),
            p.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep<R: Read>(input: R) -> Result<SweepResult> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &SWEEP_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| parse_f64(&rec[i], SWEEP_HEADER[i]);
        rows.push(SweepRow {
            filter_fwhm_nm: f(0)?,
            point: OptimalPoint {
                length_mm: f(1)?,
                pump_fwhm_nm: f(2)?,
                metrics: SourceMetrics {
                    transmission: f(3)?,
                    purity: f(4)?,
                    alpha: f(5)?,
                    k_max: rec[6]
                        .parse()
                        .map_err(|_| Error::Validation(format!("bad k_max `{}`", &rec[6])))?,
                },
                purity_unfiltered: f(7)?,
                evaluations: 0,
                converged: rec[8]
                    .parse()
                    .map_err(|_| Error::Validation(format!("bad converged flag `{}`", &rec[8])))?,
            },
        });
    }
    SweepResult::from_rows(rows)
}

/// One reproduced row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub alpha_opt: f64,
    /// `None` when the source cannot reach the photon-number target.
    pub eta_tb: Option<f64>,
    pub lambda_c_nm: f64,
    pub length_mm: f64,
    pub pump_fwhm_nm: f64,
    pub filter_fwhm_nm: f64,
}

pub fn write_table<W: Write>(out: W, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            fmt6(r.alpha_opt),
            r.eta_tb.map(fmt6).unwrap_or_else(|| "infeasible".into()),
            fmt6(r.lambda_c_nm),
            fmt6(r.length_mm),
            fmt6(r.pump_fwhm_nm),
            fmt6(r.filter_fwhm_nm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table<R: Read>(input: R) -> Result<Vec<TableRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &TABLE_HEADER)?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let f = |i: usize| parse_f64(&rec[i], TABLE_HEADER[i]);
            Ok(TableRow {
                label: rec[0].to_string(),
                alpha_opt: f(1)?,
                eta_tb: if &rec[2] == "infeasible" {
                    None
                } else {
                    Some(f(2)?)
                },
                lambda_c_nm: f(3)?,
                length_mm: f(4)?,
                pump_fwhm_nm: f(5)?,
                filter_fwhm_nm: f(6)?,
            })
        })
        .collect()
}

pub fn write_convergence<W: Write>(out: W, points: &[ConvergencePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONVERGENCE_HEADER)?;
    for p in points {
        w.write_record([p.points.to_string(), fmt6(p.alpha), fmt6(p.deviation)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_convergence<R: Read>(input: R) -> Result<Vec<ConvergencePoint>> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &CONVERGENCE_HEADER)?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ConvergencePoint {
                points: rec[0]
                    .parse()
                    .map_err(|_| Error::Validation(format!("bad N `{}`", &rec[0])))?,
                alpha: parse_f64(&rec[1], "alpha")?,
                deviation: parse_f64(&rec[2], "deviation")?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DumpFormat {
    Csv,
    F64le,
}

/// Axes and layout of a dumped amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsaSidecar {
    pub lambda_s_nm: Vec<f64>,
    pub lambda_i_nm: Vec<f64>,
    /// `[rows, cols]`, rows indexed by signal.
    pub shape: [usize; 2],
    pub format: DumpFormat,
    /// Data file name, relative to the sidecar.
    pub data: String,
}

/// Writes `<stem>.csv` or `<stem>.bin` plus `<stem>.json` into `dir`.
/// Returns the sidecar path.
pub fn write_jsa(dir: &Path, stem: &str, jsa: &JointAmplitude) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let format = if jsa.rows().max(jsa.cols()) <= CSV_DUMP_LIMIT {
        DumpFormat::Csv
    } else {
        DumpFormat::F64le
    };
    let data = match format {
        DumpFormat::Csv => format!("{stem}.csv"),
        DumpFormat::F64le => format!("{stem}.bin"),
    };
    let mut out = BufWriter::new(File::create(dir.join(&data))?);
    match format {
        DumpFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(out);
            for i in 0..jsa.rows() {
                w.write_record(jsa.row(i).iter().map(|&v| fmt6(v)))?;
            }
            w.flush()?;
        }
        DumpFormat::F64le => {
            for v in jsa.values() {
                out.write_all(&v.to_le_bytes())?;
            }
            out.flush()?;
        }
    }
    let sidecar = JsaSidecar {
        lambda_s_nm: jsa.signal_axis().lambda_nm().to_vec(),
        lambda_i_nm: jsa.idler_axis().lambda_nm().to_vec(),
        shape: [jsa.rows(), jsa.cols()],
        format,
        data,
    };
    let path = dir.join(format!("{stem}.json"));
    serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &sidecar)?;
    Ok(path)
}

fn axis_from(lambda: &[f64]) -> Result<FrequencyGrid> {
    match lambda {
        [first, .., last] => make_grid(*first, *last, lambda.len()),
        _ => Err(Error::Validation(
            "axis needs at least two wavelengths".into(),
        )),
    }
}

/// Reads an amplitude back from its sidecar.
pub fn read_jsa(sidecar_path: &Path) -> Result<JointAmplitude> {
    let sidecar: JsaSidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path)?))?;
    let [rows, cols] = sidecar.shape;
    if sidecar.lambda_s_nm.len() != rows || sidecar.lambda_i_nm.len() != cols {
        return Err(Error::Validation(
            "sidecar axes do not match its shape".into(),
        ));
    }
    let data_path = sidecar_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&sidecar.data);
    let values = match sidecar.format {
        DumpFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .from_reader(BufReader::new(File::open(&data_path)?));
            let mut values = Vec::with_capacity(rows * cols);
            for rec in rdr.records() {
                for field in rec?.iter() {
                    values.push(parse_f64(field, "amplitude")?);
                }
            }
            values
        }
        DumpFormat::F64le => {
            let mut bytes = Vec::new();
            File::open(&data_path)?.read_to_end(&mut bytes)?;
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        }
    };
    JointAmplitude::from_values(
        axis_from(&sidecar.lambda_s_nm)?,
        axis_from(&sidecar.lambda_i_nm)?,
        values,
    )
}
