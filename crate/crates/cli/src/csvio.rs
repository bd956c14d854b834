//! CSV ingestion and emission.

use std::path::Path;

use nalgebra::DMatrix;
use semipen_core::{ColumnNames, Dataset};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Column roles chosen on the command line.
#[derive(Debug, Clone)]
pub struct Roles {
    pub y: String,
    pub t: String,
    pub x: Option<Vec<String>>,
}

/// Affine map applied to `T` by `--rescale-t`: `t' = (t - min) / (max - min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rescale {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub rescale: Option<Rescale>,
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

/// Reads a headed CSV file. Rows are reported 1-based counting data rows
/// after the header.
pub fn load_csv(path: &Path, roles: &Roles, rescale_t: bool) -> CliResult<Loaded> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Parse { row: 0, column: String::new(), message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("column '{name}' not found in header {headers:?}")))
    };
    let yi = find(&roles.y)?;
    let ti = find(&roles.t)?;
    if yi == ti {
        return Err(CliError::Usage("Y and T must be different columns".into()));
    }
    let xi: Vec<usize> = match &roles.x {
        Some(names) => names.iter().map(|n| find(n)).collect::<CliResult<_>>()?,
        None => (0..headers.len()).filter(|&c| c != yi && c != ti).collect(),
    };
    if xi.is_empty() {
        return Err(CliError::Usage("need at least one covariate column".into()));
    }
    if xi.iter().any(|&c| c == yi || c == ti) {
        return Err(CliError::Usage("covariate columns must differ from Y and T".into()));
    }
    let mut dup = xi.clone();
    dup.sort_unstable();
    dup.dedup();
    if dup.len() != xi.len() {
        return Err(CliError::Usage("covariate columns listed twice".into()));
    }

    let (mut y, mut t, mut xs) = (Vec::new(), Vec::new(), Vec::new());
    for (r, rec) in reader.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| CliError::Parse { row, column: String::new(), message: e.to_string() })?;
        if rec.len() != headers.len() {
            return Err(CliError::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let num = |c: usize| -> CliResult<f64> {
            let v: f64 = rec[c].parse().map_err(|_| CliError::Parse {
                row,
                column: headers[c].clone(),
                message: format!("'{}' is not a number", &rec[c]),
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse { row, column: headers[c].clone(), message: "value is not finite".into() });
            }
            Ok(v)
        };
        y.push(num(yi)?);
        t.push(num(ti)?);
        for &c in &xi {
            xs.push(num(c)?);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(CliError::Usage("no data rows".into()));
    }

    let rescale = if rescale_t {
        let min = t.iter().copied().fold(f64::INFINITY, f64::min);
        let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(CliError::Usage("--rescale-t needs at least two distinct T values".into()));
        }
        t.iter_mut().for_each(|v| *v = ((*v - min) / (max - min)).clamp(0.0, 1.0));
        Some(Rescale { min, max })
    } else {
        if let Some((r, &v)) = t.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(CliError::Domain { row: r + 1, value: v });
        }
        None
    };

    let q = xi.len();
    let x = DMatrix::from_row_slice(n, q, &xs);
    let names = ColumnNames {
        y: roles.y.clone(),
        t: roles.t.clone(),
        x: xi.iter().map(|&c| headers[c].clone()).collect(),
    };
    let dataset = Dataset::new(y, x, t)?.with_names(names)?;
    Ok(Loaded { dataset, rescale })
}

/// Serializes a dataset as CSV with columns `T, Y, X...`. Floats use the
/// shortest representation that round-trips exactly.
pub fn dataset_to_csv(data: &Dataset) -> CliResult<String> {
    let names = data.names().cloned().unwrap_or_else(|| ColumnNames {
        y: "y".into(),
        t: "t".into(),
        x: (0..data.q()).map(|j| format!("x{j}")).collect(),
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![names.t.clone(), names.y.clone()];
    header.extend(names.x.iter().cloned());
    w.write_record(&header).map_err(|e| CliError::Usage(e.to_string()))?;
    for i in 0..data.n() {
        let mut rec = vec![data.t()[i].to_string(), data.y()[i].to_string()];
        rec.extend((0..data.q()).map(|j| data.x()[(i, j)].to_string()));
        w.write_record(&rec).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Usage(e.to_string()))
}

/// Serializes any sequence of flat records as CSV.
pub fn records_to_csv<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Usage(e.to_string()))
}

/// Writes through a sibling temporary file and renames it into place, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io_err(path, e)
    })
}
