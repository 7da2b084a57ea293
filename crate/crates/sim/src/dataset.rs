//! CSV datasets with a JSON metadata sidecar.
//!
//! Layout: header `t,s_1,…,s_K,x_1,…,x_N`, one row per sample. The sidecar
//! sits next to the CSV with the extension `.meta.json`.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub s: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn from_vectors<'a>(
        s: impl IntoIterator<Item = &'a nalgebra::DVector<f64>>,
        x: impl IntoIterator<Item = &'a nalgebra::DVector<f64>>,
    ) -> Self {
        Self {
            s: s.into_iter().map(|v| v.iter().copied().collect()).collect(),
            x: x.into_iter().map(|v| v.iter().copied().collect()).collect(),
        }
    }
}

pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut p = csv.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

pub fn write_dataset(path: &Path, data: &Dataset, metadata: &Map<String, Value>) -> Result<(), SimError> {
    if data.s.len() != data.x.len() {
        return Err(SimError::InvalidArgument("s and x row counts differ".into()));
    }
    let k = data.s.first().map_or(0, Vec::len);
    let n = data.x.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("s_{i}")));
    header.extend((1..=n).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    for (t, (s, x)) in data.s.iter().zip(&data.x).enumerate() {
        if s.len() != k || x.len() != n {
            return Err(SimError::InvalidArgument(format!("ragged row {t}")));
        }
        let mut rec = vec![t.to_string()];
        rec.extend(s.iter().map(f64::to_string));
        rec.extend(x.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let file = File::create(metadata_path(path))?;
    serde_json::to_writer_pretty(file, &Value::Object(metadata.clone()))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(Dataset, Map<String, Value>), SimError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let k = header.iter().filter(|h| h.starts_with("s_")).count();
    let n = header.iter().filter(|h| h.starts_with("x_")).count();
    if header.get(0) != Some("t") || header.len() != 1 + k + n {
        return Err(SimError::InvalidArgument(format!("unexpected header {header:?}")));
    }
    let mut data = Dataset { s: Vec::new(), x: Vec::new() };
    for rec in r.records() {
        let rec = rec?;
        let vals: Result<Vec<f64>, _> = rec.iter().skip(1).map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| SimError::InvalidArgument(format!("bad number: {e}")))?;
        data.s.push(vals[..k].to_vec());
        data.x.push(vals[k..].to_vec());
    }
    let meta = match File::open(metadata_path(path)) {
        Ok(f) => match serde_json::from_reader(f)? {
            Value::Object(m) => m,
            _ => return Err(SimError::InvalidArgument("metadata must be a JSON object".into())),
        },
        Err(_) => Map::new(),
    };
    Ok((data, meta))
}
