//! Executed-plan experience and its append-only CSV store.

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::BoundQuery;
use crate::sqlfront::templatize;

/// Template fingerprint of a bound query; queries differing only in literal
/// values share it.
pub fn query_fingerprint(query: &BoundQuery) -> u64 {
    templatize(&query.to_string()).fingerprint
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub fingerprint: u64,
    pub features: Vec<f64>,
    pub measured: f64,
    pub sampled: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperienceStore {
    entries: Vec<Experience>,
}

impl ExperienceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Experience] {
        &self.entries
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.features.len())
    }

    pub fn push(&mut self, e: Experience) -> Result<()> {
        if !(e.measured.is_finite() && e.measured >= 0.0) {
            return Err(Error::Data(format!(
                "measured cost {} must be finite and >= 0",
                e.measured
            )));
        }
        if e.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("experience features must be finite".into()));
        }
        if let Some(d) = self.feature_dim() {
            if d != e.features.len() {
                return Err(Error::Mismatch(format!(
                    "experience has {} features, store holds {d}",
                    e.features.len()
                )));
            }
        }
        self.entries.push(e);
        Ok(())
    }

    pub fn extend(&mut self, other: &ExperienceStore) -> Result<()> {
        for e in &other.entries {
            self.push(e.clone())?;
        }
        Ok(())
    }

    /// `(features, measured)` pairs for training.
    pub fn samples(&self) -> Vec<(Vec<f64>, f64)> {
        self.entries
            .iter()
            .map(|e| (e.features.clone(), e.measured))
            .collect()
    }

    fn header(dim: usize) -> Vec<String> {
        let mut h = vec!["fingerprint".to_string()];
        h.extend((0..dim).map(|i| format!("f{i}")));
        h.push("measured".into());
        h.push("sampled".into());
        h
    }

    fn record(e: &Experience) -> Vec<String> {
        let mut r = vec![format!("{:016x}", e.fingerprint)];
        r.extend(e.features.iter().map(|v| v.to_string()));
        r.push(e.measured.to_string());
        r.push(if e.sampled { "1".into() } else { "0".into() });
        r
    }

    /// Appends `entries()[from..]` to `path`, writing a header if the file is new.
    pub fn append_csv(&self, path: &Path, from: usize) -> Result<()> {
        let Some(dim) = self.feature_dim() else {
            return Ok(());
        };
        let fresh = std::fs::metadata(path)
            .map(|m| m.len() == 0)
            .unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = csv::Writer::from_writer(file);
        if fresh {
            w.write_record(Self::header(dim))?;
        }
        for e in &self.entries[from.min(self.entries.len())..] {
            w.write_record(Self::record(e))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let n = headers.len();
        if n < 3
            || &headers[0] != "fingerprint"
            || &headers[n - 2] != "measured"
            || &headers[n - 1] != "sampled"
        {
            return Err(Error::Data(format!(
                "{}: not an experience store",
                path.display()
            )));
        }
        let mut store = ExperienceStore::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad =
                |what: &str| Error::Data(format!("{} row {}: bad {what}", path.display(), i + 2));
            let fingerprint = u64::from_str_radix(&rec[0], 16).map_err(|_| bad("fingerprint"))?;
            let features = (1..n - 2)
                .map(|j| rec[j].parse::<f64>().map_err(|_| bad("feature")))
                .collect::<Result<Vec<_>>>()?;
            let measured = rec[n - 2].parse::<f64>().map_err(|_| bad("measured"))?;
            let sampled = match &rec[n - 1] {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("sampled flag")),
            };
            store.push(Experience {
                fingerprint,
                features,
                measured,
                sampled,
            })?;
        }
        Ok(store)
    }
}
