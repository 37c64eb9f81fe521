//! CSV and JSON artifacts. Floats use the shortest representation that parses
//! back to the same value.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use super::CliError;
use crate::descent::PointCloud;
use crate::generator::Vector;
use crate::posterior::{CredibleRegion, WeightedPointCloud};

pub fn fmt_float(v: f64) -> String {
    ryu::Buffer::new().format(v).to_string()
}

fn parse_float(s: &str, path: &Path, line: usize) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Io(format!("{}:{line}: not a number: {s:?}", path.display())))
}

fn create(path: &Path) -> Result<File, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn coord_header(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), CliError> {
    let d = cloud.dim().unwrap_or(0);
    let mut w = csv_writer(path)?;
    let mut header = coord_header(d);
    header.extend(["residual".to_string(), "iterations".to_string()]);
    w.write_record(&header).map_err(csv_err(path))?;
    for ((p, r), it) in cloud.points.iter().zip(&cloud.residuals).zip(&cloud.iterations) {
        let mut row: Vec<String> = p.iter().map(|v| fmt_float(*v)).collect();
        row.push(fmt_float(*r));
        row.push(it.to_string());
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(csv_err(path))?;
    Ok((header, rows))
}

/// Reads a cloud CSV back. `attempts` and `seed` are not stored in the file.
pub fn read_cloud(path: &Path) -> Result<PointCloud, CliError> {
    let (header, rows) = read_rows(path)?;
    let d = header
        .len()
        .checked_sub(2)
        .filter(|_| header.ends_with(&["residual".to_string(), "iterations".to_string()]))
        .ok_or_else(|| CliError::Io(format!("{}: not a cloud CSV", path.display())))?;
    let mut cloud = PointCloud {
        points: Vec::with_capacity(rows.len()),
        residuals: Vec::with_capacity(rows.len()),
        iterations: Vec::with_capacity(rows.len()),
        attempts: rows.len(),
        seed: 0,
    };
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        let xs = row[..d]
            .iter()
            .map(|s| parse_float(s, path, line))
            .collect::<Result<Vec<f64>, _>>()?;
        cloud.points.push(DVector::from_vec(xs));
        cloud.residuals.push(parse_float(&row[d], path, line)?);
        cloud.iterations.push(
            row[d + 1]
                .parse()
                .map_err(|_| CliError::Io(format!("{}:{line}: bad iteration count", path.display())))?,
        );
    }
    Ok(cloud)
}

/// Objective traces of the given chains: `chain,iteration,objective`.
pub fn write_traces<'a, I>(path: &Path, traces: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = (usize, &'a [f64])>,
{
    let mut w = BufWriter::new(create(path)?);
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    writeln!(w, "chain,iteration,objective").map_err(io)?;
    for (chain, trace) in traces {
        for (t, f) in trace.iter().enumerate() {
            writeln!(w, "{chain},{t},{}", fmt_float(*f)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Traces grouped by chain, in file order.
pub fn read_traces(path: &Path) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let (_, rows) = read_rows(path)?;
    let mut out: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let chain: usize = row[0]
            .parse()
            .map_err(|_| CliError::Io(format!("{}:{}: bad chain index", path.display(), i + 2)))?;
        let f = parse_float(&row[2], path, i + 2)?;
        match out.last_mut() {
            Some((c, trace)) if *c == chain => trace.push(f),
            _ => out.push((chain, vec![f])),
        }
    }
    Ok(out)
}

pub fn write_weighted(path: &Path, w: &WeightedPointCloud, region: &CredibleRegion) -> Result<(), CliError> {
    let d = w.points.first().map_or(0, |p| p.len());
    let mut out = csv_writer(path)?;
    let mut header = coord_header(d);
    header.extend(["rho", "log_pi", "log_omega", "in_region"].map(str::to_string));
    out.write_record(&header).map_err(csv_err(path))?;
    for i in 0..w.len() {
        let mut row: Vec<String> = w.points[i].iter().map(|v| fmt_float(*v)).collect();
        row.push(fmt_float(w.rho[i]));
        row.push(fmt_float(w.log_pi[i]));
        row.push(fmt_float(w.log_omega[i]));
        row.push(u8::from(region.contains(i)).to_string());
        out.write_record(&row).map_err(csv_err(path))?;
    }
    out.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Columns of a weighted cloud CSV.
pub struct WeightedRows {
    pub points: Vec<Vector>,
    pub rho: Vec<f64>,
    pub log_pi: Vec<f64>,
    pub log_omega: Vec<f64>,
    pub in_region: Vec<bool>,
}

pub fn read_weighted(path: &Path) -> Result<WeightedRows, CliError> {
    let (header, rows) = read_rows(path)?;
    let d = header
        .len()
        .checked_sub(4)
        .ok_or_else(|| CliError::Io(format!("{}: not a weighted cloud CSV", path.display())))?;
    let mut out = WeightedRows {
        points: Vec::new(),
        rho: Vec::new(),
        log_pi: Vec::new(),
        log_omega: Vec::new(),
        in_region: Vec::new(),
    };
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        let xs = row[..d]
            .iter()
            .map(|s| parse_float(s, path, line))
            .collect::<Result<Vec<f64>, _>>()?;
        out.points.push(DVector::from_vec(xs));
        out.rho.push(parse_float(&row[d], path, line)?);
        out.log_pi.push(parse_float(&row[d + 1], path, line)?);
        out.log_omega.push(parse_float(&row[d + 2], path, line)?);
        out.in_region.push(row[d + 3] == "1");
    }
    Ok(out)
}

/// Observation CSV: one row per observation, optional header row.
pub fn read_data_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(CliError::Io(format!("{}:{}: not numeric", path.display(), i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{}: no observations", path.display())));
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
