//! Point-cloud CSV: header `x0,...,x{d-1},label`, one row per point, label
//! `-1` when unconditioned. Floats are printed with Rust's shortest
//! round-trip formatting, so write → read → write is byte-stable.

use std::path::Path;

use llcm_core::batch::{BatchMeta, SampleBatch};
use llcm_core::Tensor;

use crate::error::{LabError, Result};

pub fn write_batch(path: &Path, batch: &SampleBatch) -> Result<()> {
    let d = batch.dim();
    let mut out = String::new();
    for j in 0..d {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("label\n");
    for i in 0..batch.n() {
        for v in batch.points.row(i) {
            out.push_str(&format!("{v},"));
        }
        match batch.labels[i] {
            Some(c) => out.push_str(&format!("{c}\n")),
            None => out.push_str("-1\n"),
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_batch(path: &Path) -> Result<SampleBatch> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::usage(format!("cannot read CSV `{}`: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| LabError::usage(format!("CSV `{}` is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[cols.len() - 1] != "label" {
        return Err(LabError::usage(format!(
            "CSV `{}`: expected header `x0,...,label`, got `{header}`",
            path.display()
        )));
    }
    let d = cols.len() - 1;
    for (j, c) in cols[..d].iter().enumerate() {
        if *c != format!("x{j}") {
            return Err(LabError::usage(format!(
                "CSV `{}`: column {j} is `{c}`, expected `x{j}`",
                path.display()
            )));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Option<u32>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(LabError::usage(format!(
                "CSV `{}` line {}: {} fields, expected {}",
                path.display(),
                lineno + 2,
                fields.len(),
                d + 1
            )));
        }
        let mut row = Vec::with_capacity(d);
        for f in &fields[..d] {
            row.push(f.parse::<f64>().map_err(|_| {
                LabError::usage(format!(
                    "CSV `{}` line {}: `{f}` is not a number",
                    path.display(),
                    lineno + 2
                ))
            })?);
        }
        let label_field = fields[d];
        let label = match label_field.parse::<i64>() {
            Ok(-1) => None,
            Ok(c) if c >= 0 && c <= u32::MAX as i64 => Some(c as u32),
            _ => {
                return Err(LabError::usage(format!(
                    "CSV `{}` line {}: label `{label_field}` is not -1 or a class index",
                    path.display(),
                    lineno + 2
                )))
            }
        };
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(LabError::usage(format!(
            "CSV `{}` has a header but no data rows",
            path.display()
        )));
    }
    let points = Tensor::from_rows(&rows)?;
    Ok(SampleBatch::new(points, labels, BatchMeta::default())?)
}
