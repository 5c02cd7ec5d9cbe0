use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
}

impl Assertion {
    /// `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= bound,
            value,
            bound,
        }
    }

    /// `value ≥ bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            pass: value >= bound,
            value,
            bound,
        }
    }

    pub fn with_pass(name: impl Into<String>, pass: bool, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            pass,
            value,
            bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub cmd: String,
    /// Resolved subcommand flags; usable as a `--config` file for a re-run.
    pub params: serde_json::Map<String, serde_json::Value>,
    pub seed: Option<u64>,
    pub version: String,
    pub duration_s: f64,
    pub assertions: Vec<Assertion>,
    /// Data files written by this run, relative to the manifest.
    pub files: Vec<String>,
}

pub(crate) fn pretty<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub(crate) fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}
