//! Per-observation prediction files shared by the forecasters and the scorer.
//!
//! The long CSV has one row per grid point: `obs_id,date,method,scale,y,density,cdf`.
//! A JSON summary per observation carries quantiles, PIT and the realized value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::distribution::{GridDistribution, Predictive};
use crate::error::{Error, Result};
use crate::predict::SUMMARY_LEVELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Frechet,
    Original,
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Frechet => "frechet",
            Scale::Original => "original",
        })
    }
}

/// One predictive distribution for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub obs_id: usize,
    pub date: NaiveDate,
    pub method: String,
    pub scale: Scale,
    pub dist: GridDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub obs_id: usize,
    pub date: NaiveDate,
    pub method: String,
    pub scale: Scale,
    pub quantiles: Vec<QuantilePoint>,
    pub realized: Option<f64>,
    pub pit: Option<f64>,
    /// Integral of the unnormalized kernel, for the angular-measure method.
    pub normalizer: Option<f64>,
}

impl PredictionSummary {
    pub fn new(record: &PredictionRecord, realized: Option<f64>, normalizer: Option<f64>) -> Self {
        Self {
            obs_id: record.obs_id,
            date: record.date,
            method: record.method.clone(),
            scale: record.scale,
            quantiles: SUMMARY_LEVELS
                .iter()
                .map(|&p| QuantilePoint { p, q: record.dist.quantile(p) })
                .collect(),
            realized,
            pit: realized.map(|y| record.dist.cdf(y).clamp(0.0, 1.0)),
            normalizer,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    obs_id: usize,
    date: NaiveDate,
    method: String,
    scale: Scale,
    y: f64,
    density: f64,
    cdf: f64,
}

pub fn write_predictions_csv(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        let d = &r.dist;
        for ((&y, &density), &cdf) in d.grid().iter().zip(d.densities()).zip(d.cdf_values()) {
            w.serialize(Row {
                obs_id: r.obs_id,
                date: r.date,
                method: r.method.clone(),
                scale: r.scale,
                y,
                density,
                cdf,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a prediction CSV back, in file order of first appearance.
pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    type Key = (usize, String, Scale);
    let mut order: Vec<Key> = Vec::new();
    let mut acc: BTreeMap<Key, (NaiveDate, Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        let key = (row.obs_id, row.method.clone(), row.scale);
        let entry = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (row.date, Vec::new(), Vec::new(), Vec::new())
        });
        entry.1.push(row.y);
        entry.2.push(row.density);
        entry.3.push(row.cdf);
    }
    order
        .into_iter()
        .map(|key| {
            let (date, y, f, c) = acc.remove(&key).unwrap();
            let dist = GridDistribution::from_parts(y, f, c).map_err(|e| {
                Error::invalid(format!("observation {} ({}, {}): {e}", key.0, key.1, key.2))
            })?;
            Ok(PredictionRecord { obs_id: key.0, date, method: key.1, scale: key.2, dist })
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
