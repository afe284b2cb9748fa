//! CSV ingestion and emission.
//!
//! Formats:
//! - design file: header `obs,cat,col_1..col_d`, one row per
//!   observation/category pair in observation-major order with categories
//!   `1..m-1` inside each observation;
//! - group file: header `col,group`, mapping each 1-based column index to
//!   a group label; the columns of a group must form a contiguous
//!   ascending block (the layout every builder emits);
//! - response file: header `obs,z` with labels in `0..m-1`.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::design::{GroupPartition, GroupedDesign};
use crate::error::{Error, Result};
use crate::model::ResponseVector;

/// Reads a design/group file pair.
pub fn read_design(design_path: &Path, groups_path: &Path) -> Result<GroupedDesign> {
    let mut rdr = csv::Reader::from_path(design_path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "obs" || &headers[1] != "cat" {
        return Err(Error::Parse(format!(
            "design header must start with obs,cat,col_1..: got {:?}",
            headers
        )));
    }
    let d = headers.len() - 2;
    for (k, name) in headers.iter().skip(2).enumerate() {
        let expected = format!("col_{}", k + 1);
        if name != expected {
            return Err(Error::Parse(format!(
                "design column {} is named '{name}', expected '{expected}'",
                k + 3
            )));
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut obs_cat: Vec<(usize, usize)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let obs: usize = record[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad obs index '{}'", &record[0])))?;
        let cat: usize = record[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad category '{}'", &record[1])))?;
        let mut row = Vec::with_capacity(d);
        for v in record.iter().skip(2) {
            row.push(
                v.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad design entry '{v}'")))?,
            );
        }
        obs_cat.push((obs, cat));
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("design file has no data rows".into()));
    }
    let n = obs_cat.iter().map(|&(o, _)| o).max().unwrap();
    let mm = obs_cat.iter().map(|&(_, c)| c).max().unwrap();
    if rows.len() != n * mm {
        return Err(Error::Parse(format!(
            "design has {} rows, expected n(m-1) = {}*{}",
            rows.len(),
            n,
            mm
        )));
    }
    // Enforce observation-major order with categories 1..m-1.
    for (idx, &(o, c)) in obs_cat.iter().enumerate() {
        let expected = (idx / mm + 1, idx % mm + 1);
        if (o, c) != expected {
            return Err(Error::Parse(format!(
                "design row {} carries obs,cat = {o},{c}; expected {},{}",
                idx + 2,
                expected.0,
                expected.1
            )));
        }
    }
    let x = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
    let partition = read_partition(groups_path, d)?;
    GroupedDesign::new(n, mm + 1, x, partition)
}

fn read_partition(path: &Path, d: usize) -> Result<GroupPartition> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "col" || &headers[1] != "group" {
        return Err(Error::Parse("group header must be col,group".into()));
    }
    let mut labels: Vec<Option<String>> = vec![None; d];
    for record in rdr.records() {
        let record = record?;
        let col: usize = record[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad column index '{}'", &record[0])))?;
        if col == 0 || col > d {
            return Err(Error::Parse(format!("column index {col} out of 1..={d}")));
        }
        if labels[col - 1].is_some() {
            return Err(Error::Parse(format!("column {col} mapped twice")));
        }
        labels[col - 1] = Some(record[1].to_string());
    }
    let labels: Vec<String> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Parse(format!("column {} has no group", i + 1))))
        .collect::<Result<_>>()?;
    // Groups must be contiguous blocks in column order.
    let mut sizes: Vec<usize> = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        if i > 0 && *label == labels[i - 1] {
            *sizes.last_mut().unwrap() += 1;
        } else {
            if seen.contains(label) {
                return Err(Error::Parse(format!(
                    "group '{label}' is not a contiguous column block"
                )));
            }
            seen.push(label.clone());
            sizes.push(1);
        }
    }
    GroupPartition::contiguous(&sizes)
}

/// Reads a response file. `m` comes from the paired design.
pub fn read_responses(path: &Path, n: usize, m: usize) -> Result<ResponseVector> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "obs" || &headers[1] != "z" {
        return Err(Error::Parse("response header must be obs,z".into()));
    }
    let mut labels = vec![None; n];
    for record in rdr.records() {
        let record = record?;
        let obs: usize = record[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad obs index '{}'", &record[0])))?;
        let z: usize = record[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad label '{}'", &record[1])))?;
        if obs == 0 || obs > n {
            return Err(Error::Parse(format!("obs index {obs} out of 1..={n}")));
        }
        if labels[obs - 1].is_some() {
            return Err(Error::Parse(format!("observation {obs} appears twice")));
        }
        labels[obs - 1] = Some(z);
    }
    let labels: Vec<usize> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Parse(format!("observation {} missing", i + 1))))
        .collect::<Result<_>>()?;
    ResponseVector::new(labels, m)
}

/// Writes the design and group files for a design.
pub fn write_design(design: &GroupedDesign, design_path: &Path, groups_path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(design_path)?;
    let d = design.dim();
    let mut header = vec!["obs".to_string(), "cat".to_string()];
    header.extend((1..=d).map(|k| format!("col_{k}")));
    wtr.write_record(&header)?;
    let mm = design.m() - 1;
    for i in 0..design.n() {
        for l in 0..mm {
            let mut row = vec![(i + 1).to_string(), (l + 1).to_string()];
            for c in 0..d {
                row.push(format!("{:?}", design.matrix()[(i * mm + l, c)]));
            }
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;

    let mut gw = csv::Writer::from_path(groups_path)?;
    gw.write_record(["col", "group"])?;
    for (j, group) in design.partition().iter().enumerate() {
        for &c in group {
            gw.write_record([(c + 1).to_string(), format!("g{}", j + 1)])?;
        }
    }
    gw.flush()?;
    Ok(())
}

/// Writes a response file.
pub fn write_responses(y: &ResponseVector, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["obs", "z"])?;
    for (i, &z) in y.labels().iter().enumerate() {
        wtr.write_record([(i + 1).to_string(), z.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Serializes any report as pretty JSON.
pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("JSON serialization failed: {e}")))?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}
