use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::format::num;
use crate::integrate::Trajectory;
use crate::model::SpectralModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => num(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            Cell::Bool(b) => Some(f64::from(u8::from(*b))),
            Cell::Text(_) => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Cell::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

/// A named CSV table with a fixed column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn floats(&self, name: &str) -> Vec<f64> {
        let i = self.column_index(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i].as_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn bools(&self, name: &str) -> Vec<bool> {
        let i = self.column_index(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i].as_bool().unwrap_or(false)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(&self.columns).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Trajectory as `t, c1..cn, norm`.
    pub fn from_trajectory(name: &str, traj: &Trajectory, model: Option<&SpectralModel>) -> Self {
        let n = traj.states.first().map_or(0, Vec::len);
        let columns = std::iter::once("t".to_owned())
            .chain((1..=n).map(|k| format!("c{k}")))
            .chain(std::iter::once("norm".to_owned()))
            .collect();
        let rows = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(t, s)| {
                let norm = match model {
                    Some(m) if m.n_total() == s.len() => m.norm(s),
                    _ => s.iter().map(|x| x * x).sum::<f64>().sqrt(),
                };
                std::iter::once(*t)
                    .chain(s.iter().copied())
                    .chain(std::iter::once(norm))
                    .map(Cell::Float)
                    .collect()
            })
            .collect();
        Self {
            name: name.to_owned(),
            columns,
            rows,
        }
    }
}

/// One thresholded quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub relation: String,
    pub pass: bool,
}

impl Check {
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value, threshold, ">=", value >= threshold)
    }

    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value, threshold, "<=", value <= threshold)
    }

    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value, threshold, "<", value < threshold)
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Self::new(name, f64::from(u8::from(ok)), 1.0, "==", ok)
    }

    fn new(name: &str, value: f64, threshold: f64, relation: &str, pass: bool) -> Self {
        Self {
            name: name.to_owned(),
            value,
            threshold,
            relation: relation.to_owned(),
            pass,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub aggregates: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub in_hypothesis: usize,
    pub out_of_hypothesis: usize,
    pub wall_clock_s: f64,
}

impl ExperimentReport {
    pub fn new(experiment: Experiment, config: &ExperimentConfig) -> Self {
        Self {
            experiment,
            config: config.clone(),
            aggregates: BTreeMap::new(),
            checks: Vec::new(),
            tables: Vec::new(),
            in_hypothesis: 0,
            out_of_hypothesis: 0,
            wall_clock_s: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn aggregate(&self, key: &str) -> Option<f64> {
        self.aggregates.get(key).and_then(serde_json::Value::as_f64)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("aggregate serializes");
        self.aggregates.insert(key.to_owned(), v);
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "config_sha256": config_hash(&self.config),
            "master_seed": self.config.monte_carlo.master_seed,
            "passed": self.passed(),
            "checks": self.checks,
            "aggregates": self.aggregates,
            "rows_in_hypothesis": self.in_hypothesis,
            "rows_out_of_hypothesis": self.out_of_hypothesis,
            "wall_clock_s": self.wall_clock_s,
            "tables": self.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
        })
    }
}

/// SHA-256 of the resolved configuration in TOML form.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub config_toml: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub n_paths: usize,
    pub threads: usize,
    pub crate_version: String,
    pub started: String,
    pub finished: String,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "manifest schema {} is not supported (expected {SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }

    /// The configuration recorded in the manifest, checked against its hash.
    pub fn config(&self) -> Result<ExperimentConfig> {
        let cfg = ExperimentConfig::load(self.experiment, &self.config_toml)?;
        if config_hash(&cfg) != self.config_sha256 {
            return Err(Error::Format("manifest configuration does not match its hash".into()));
        }
        Ok(cfg)
    }
}

/// Writes `<out>/<experiment>-<stamp>-<hash>/` with one CSV per table, the JSON
/// summary and the manifest. Returns the run directory.
pub fn write_run(
    report: &ExperimentReport,
    out: &Path,
    started: chrono::DateTime<chrono::Utc>,
    threads: usize,
) -> Result<PathBuf> {
    let hash = config_hash(&report.config);
    let stamp = started.format("%Y%m%dT%H%M%SZ");
    fs::create_dir_all(out)?;
    let base = format!("{}-{stamp}-{}", report.experiment, &hash[..8]);
    let mut dir = out.join(&base);
    let mut k = 1;
    while dir.exists() {
        dir = out.join(format!("{base}-{k}"));
        k += 1;
    }
    fs::create_dir(&dir)?;
    let mut artifacts = Vec::new();
    for t in &report.tables {
        let name = format!("{}.csv", t.name);
        t.write_csv(fs::File::create(dir.join(&name))?)?;
        artifacts.push(name);
    }
    let summary = serde_json::to_string_pretty(&report.summary_json()).expect("summary serializes");
    fs::write(dir.join("summary.json"), summary + "\n")?;
    artifacts.push("summary.json".into());
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        experiment: report.experiment,
        config_toml: report.config.to_toml(),
        config_sha256: hash,
        master_seed: report.config.monte_carlo.master_seed,
        n_paths: report.config.monte_carlo.n_paths,
        threads,
        crate_version: env!("CARGO_PKG_VERSION").to_owned(),
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        artifacts,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(dir)
}
