//! File formats: datasets as CSV (`y,x1..xd[,s1..sn]`), models and sources as
//! JSON, configs and task specs as TOML, results as JSON plus CSV. Floats are
//! written in shortest round-trip form, so save → load is bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RowPolicy};
use crate::erm_solver::TargetModel;
use crate::error::{HtlError, Result};
use crate::linalg::Matrix;
use crate::losses::LossSpec;
use crate::regularizers::RegularizerSpec;
use crate::source_ensemble::{Source, SourceEnsemble};

pub const MODEL_VERSION: u32 = 1;

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> HtlError {
    HtlError::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn json_err(e: serde_json::Error) -> HtlError {
    parse_err(e.line(), e.column(), e.to_string())
}

/// Byte offset → 1-based (line, column).
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let prefix = &text[..offset.min(text.len())];
    let line = prefix.matches('\n').count() + 1;
    let column = prefix.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        parse_err(line, column, e.message().to_string())
    })
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_toml(&fs::read_to_string(path)?)
}

/// Parses `y,x1,...,xd[,s1,...,sn]`.
pub fn parse_dataset_csv<R: Read>(reader: R, label_bound: f64, policy: RowPolicy) -> Result<Dataset<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.first() != Some(&"y") {
        return Err(parse_err(1, 1, "first column must be `y`"));
    }
    let mut d = 0;
    while names.get(1 + d) == Some(&format!("x{}", d + 1).as_str()) {
        d += 1;
    }
    let mut n = 0;
    while names.get(1 + d + n) == Some(&format!("s{}", n + 1).as_str()) {
        n += 1;
    }
    if 1 + d + n != names.len() {
        return Err(parse_err(
            1,
            2 + d + n,
            format!(
                "unexpected column `{}` (expected y,x1..xd[,s1..sn])",
                names[1 + d + n]
            ),
        ));
    }
    if d == 0 {
        return Err(parse_err(1, 2, "no feature columns"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ss = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, 1, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != names.len() {
            return Err(parse_err(
                line,
                rec.len().min(names.len()) + 1,
                format!("expected {} fields, got {}", names.len(), rec.len()),
            ));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, j + 1, format!("`{field}` is not a number")))?;
            if j == 0 {
                ys.push(v);
            } else if j <= d {
                xs.push(v);
            } else {
                ss.push(v);
            }
        }
    }
    let m = ys.len();
    let features = Matrix::from_row_major(m, d, xs)?;
    let source_preds = if n > 0 {
        Some(Matrix::from_row_major(m, n, ss)?)
    } else {
        None
    };
    Dataset::new(features, ys, label_bound, source_preds, policy)
}

pub fn load_dataset(path: &Path, label_bound: f64, policy: RowPolicy) -> Result<Dataset<f64>> {
    parse_dataset_csv(fs::File::open(path)?, label_bound, policy)
}

pub fn write_dataset_csv<W: Write>(writer: W, data: &Dataset<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = data.dim();
    let n = data.source_preds().map_or(0, |s| s.cols());
    let mut header = vec!["y".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.extend((1..=n).map(|j| format!("s{j}")));
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..data.len() {
        let mut row = vec![data.labels()[i].to_string()];
        row.extend(data.x(i).iter().map(f64::to_string));
        if let Some(s) = data.source_preds() {
            row.extend(s.row(i).iter().map(f64::to_string));
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, data: &Dataset<f64>) -> Result<()> {
    write_dataset_csv(fs::File::create(path)?, data)
}

fn csv_io(e: csv::Error) -> HtlError {
    HtlError::Io(std::io::Error::other(e.to_string()))
}

/// On-disk model: `{version, loss, reg, lambda, w, beta, meta}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub loss: LossSpec,
    pub reg: RegularizerSpec<f64>,
    pub lambda: f64,
    pub w: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl ModelFile {
    pub fn from_model(model: &TargetModel<f64>) -> Self {
        ModelFile {
            version: MODEL_VERSION,
            loss: model.loss,
            reg: model.reg.clone(),
            lambda: model.lambda,
            w: model.w.clone(),
            beta: model.beta.clone(),
            meta: serde_json::Map::new(),
        }
    }

    pub fn into_model(self) -> TargetModel<f64> {
        TargetModel {
            w: self.w,
            beta: self.beta,
            loss: self.loss,
            reg: self.reg,
            lambda: self.lambda,
        }
    }
}

pub fn model_to_string(file: &ModelFile) -> Result<String> {
    serde_json::to_string_pretty(file).map_err(|e| HtlError::Io(std::io::Error::other(e)))
}

pub fn model_from_str(text: &str) -> Result<ModelFile> {
    let file: ModelFile = serde_json::from_str(text).map_err(json_err)?;
    if file.version != MODEL_VERSION {
        return Err(parse_err(0, 0, format!("unsupported model version {}", file.version)));
    }
    Ok(file)
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    fs::write(path, model_to_string(file)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    model_from_str(&fs::read_to_string(path)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<Source<f64>>),
    One(Source<f64>),
}

/// A source file holds one source object or an array of them.
pub fn sources_from_str(text: &str) -> Result<Vec<Source<f64>>> {
    // parse as a generic value first so errors keep their positions
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    match serde_json::from_value::<OneOrMany>(value) {
        Ok(OneOrMany::Many(v)) => Ok(v),
        Ok(OneOrMany::One(s)) => Ok(vec![s]),
        Err(_) => {
            // re-parse strictly to report the offending location
            let strict: std::result::Result<Source<f64>, _> = serde_json::from_str(text);
            match strict {
                Err(e) => Err(json_err(e)),
                Ok(s) => Ok(vec![s]),
            }
        }
    }
}

pub fn load_sources(paths: &[impl AsRef<Path>]) -> Result<SourceEnsemble<f64>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(sources_from_str(&fs::read_to_string(p.as_ref())?)?);
    }
    SourceEnsemble::new(all)
}

pub fn save_sources(path: &Path, ensemble: &SourceEnsemble<f64>) -> Result<()> {
    let text = serde_json::to_string_pretty(ensemble.sources())
        .map_err(|e| HtlError::Io(std::io::Error::other(e)))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| HtlError::Io(std::io::Error::other(e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_col_of_offsets() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }

    #[test]
    fn bad_number_reports_position() {
        let text = "y,x1,x2\n0.5,0.1,0.2\n0.1,abc,0.3\n";
        match parse_dataset_csv(text.as_bytes(), 1.0, RowPolicy::Reject) {
            Err(HtlError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("{other:?}"),
        }
    }
}
