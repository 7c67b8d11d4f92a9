//! Walk-forward temporal cross-validation and ranking metrics.
//!
//! Each fold trains on every year up to `test_year - 1` and tests on
//! `test_year`. A patient is evaluated in a fold when they have at least one
//! primary-care consultation in the test year.

mod compare;
mod grid;
mod report;

pub use compare::{run_comparison, ComparisonConfig, Dataset, Variant};
pub use grid::{grid_search, Grid, GridPoint, GridResult};
pub use report::{Cell, Cohort, EvalReport, MeanCell, REPORT_FORMAT};

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::ingest::{InteractionLog, Year};

/// Per-patient ranked doctor lists, keyed by patient index.
pub type Recommendations = BTreeMap<usize, Vec<usize>>;

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalFold {
    pub train_years: RangeInclusive<Year>,
    pub test_year: Year,
    pub train_log: InteractionLog,
    pub test_log: InteractionLog,
}

impl TemporalFold {
    pub fn last_train_year(&self) -> Year {
        *self.train_years.end()
    }
}

/// Expanding-window folds, one per test year with at least
/// `min_train_years` preceding years, in chronological order.
pub fn temporal_folds(log: &InteractionLog, min_train_years: usize) -> Result<Vec<TemporalFold>> {
    if min_train_years == 0 {
        return Err(Error::Parameter("min_train_years must be at least 1".into()));
    }
    let (first, last) = log
        .year_span()
        .ok_or_else(|| Error::Eval("log has no primary-care events".into()))?;
    let span = (last - first + 1) as usize;
    if span < min_train_years + 1 {
        return Err(Error::Eval(format!(
            "log spans {span} year(s) ({first}-{last}); need at least {} for {min_train_years} training year(s) and a test year",
            min_train_years + 1
        )));
    }
    let first_test = first + min_train_years as Year;
    Ok((first_test..=last)
        .map(|test_year| TemporalFold {
            train_years: first..=test_year - 1,
            test_year,
            train_log: log.filter_years(|y| y >= first && y < test_year),
            test_log: log.filter_years(|y| y == test_year),
        })
        .collect())
}

/// Test-year doctor sets of the evaluated patients.
pub fn test_doctors(test_log: &InteractionLog) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut out: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for e in &test_log.events {
        out.entry(e.patient).or_default().insert(e.doctor);
    }
    out
}

/// Number of the first `n` recommendations that hit, per evaluated patient.
fn hits_per_patient(recommendations: &Recommendations, test_log: &InteractionLog, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    let truth = test_doctors(test_log);
    if truth.is_empty() {
        return Err(Error::Eval("no evaluated patients".into()));
    }
    if recommendations.len() != truth.len() || !truth.keys().all(|p| recommendations.contains_key(p)) {
        return Err(Error::Eval(format!(
            "recommendations cover {} patients, expected exactly the {} evaluated patients",
            recommendations.len(),
            truth.len()
        )));
    }
    Ok(truth
        .iter()
        .map(|(p, doctors)| {
            let list = &recommendations[p];
            list[..n.min(list.len())].iter().filter(|d| doctors.contains(d)).count()
        })
        .collect())
}

/// Fraction of evaluated patients whose top-`n` list contains a test-year doctor.
pub fn hit_rate_at_n(recommendations: &Recommendations, test_log: &InteractionLog, n: usize) -> Result<f64> {
    let hits = hits_per_patient(recommendations, test_log, n)?;
    Ok(hits.iter().filter(|&&h| h > 0).count() as f64 / hits.len() as f64)
}

/// Mean of `|top-n ∩ test doctors| / n` over evaluated patients.
pub fn precision_at_n(recommendations: &Recommendations, test_log: &InteractionLog, n: usize) -> Result<f64> {
    let hits = hits_per_patient(recommendations, test_log, n)?;
    Ok(hits.iter().map(|&h| h as f64 / n as f64).sum::<f64>() / hits.len() as f64)
}
