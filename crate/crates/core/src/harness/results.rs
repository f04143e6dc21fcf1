//! Result tables and their CSV / JSON serialization.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "experiment,receiver,snr_db,metric,value,stderr,trials,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

mod snr_opt {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Value {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if *x == f64::INFINITY => s.serialize_str("inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Value>::deserialize(d)? {
            None => Ok(None),
            Some(Value::Num(x)) => Ok(Some(x)),
            Some(Value::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Value::Text(t)) => Err(serde::de::Error::custom(format!("bad SNR {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub receiver: String,
    /// `None` for rows not tied to one SNR point.
    #[serde(with = "snr_opt")]
    pub snr_db: Option<f64>,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub version: String,
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
}

/// Mean and standard error of the mean of per-trial samples.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Nine significant digits.
fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ResultTable {
    pub fn new(config: ExperimentConfig) -> Self {
        ResultTable {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            rows: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        receiver: &str,
        snr_db: Option<f64>,
        metric: &str,
        value: f64,
        stderr: f64,
        trials: usize,
    ) {
        self.rows.push(ResultRow {
            experiment: self.config.experiment_id().to_string(),
            receiver: receiver.to_string(),
            snr_db,
            metric: metric.to_string(),
            value,
            stderr,
            trials,
            seed: self.config.seed,
        });
    }

    /// Rows matching receiver and metric, in insertion order.
    pub fn select<'a>(&'a self, receiver: &'a str, metric: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.receiver == receiver && r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let snr = r.snr_db.map(float).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                csv_field(&r.experiment),
                csv_field(&r.receiver),
                snr,
                csv_field(&r.metric),
                float(r.value),
                float(r.stderr),
                r.trials,
                r.seed
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("JSON encoding failed: {e}")))
    }

    pub fn emit(&self, path: &Path, format: Format) -> Result<()> {
        let text = match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json()? + "\n",
        };
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(text.as_bytes()).map_err(io)
    }
}
