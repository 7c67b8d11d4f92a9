//! Temporal trust between a patient and a doctor.
//!
//! For reference year `t`, the trust of patient `i` in doctor `j` is
//!
//! ```text
//! T_ij(t) = sum over years t' <= t of  share_ij(t') * exp(-lambda * (t - t'))
//! share_ij(t') = C_ij(t') / sum_k C_ik(t')
//! ```
//!
//! where `C_ij(t')` counts consultations in year `t'` (per-year
//! normalization) or up to and including `t'` (cumulative normalization).
//! Frequency enters through the shares, recency through the decay.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::ingest::{InteractionLog, Year};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    PerYear,
    Cumulative,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per_year" => Ok(Normalization::PerYear),
            "cumulative" => Ok(Normalization::Cumulative),
            other => Err(Error::Config(format!(
                "trust normalization must be per_year or cumulative, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::PerYear => "per_year",
            Normalization::Cumulative => "cumulative",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustWeights {
    pub reference_year: Year,
    pub lambda: f64,
    pub normalization: Normalization,
    entries: BTreeMap<(usize, usize), f64>,
}

impl TrustWeights {
    /// Trust of `patient` in `doctor`; zero when the pair has no history.
    pub fn get(&self, patient: usize, doctor: usize) -> f64 {
        self.entries.get(&(patient, doctor)).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, patient: usize, doctor: usize) -> bool {
        self.entries.contains_key(&(patient, doctor))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in (patient, doctor) order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    /// Builds weights from explicit entries; nonpositive values are dropped.
    pub fn from_entries(
        reference_year: Year,
        lambda: f64,
        entries: impl IntoIterator<Item = ((usize, usize), f64)>,
    ) -> Self {
        TrustWeights {
            reference_year,
            lambda,
            normalization: Normalization::PerYear,
            entries: entries.into_iter().filter(|(_, v)| *v > 0.0).collect(),
        }
    }

    /// `patient_id  doctor_id  trust` lines, trust with 12 significant digits.
    pub fn to_text(&self, log: &InteractionLog, provenance: &KeyValues) -> String {
        let mut out = String::from("# carematch-trust v1\n");
        provenance.write_provenance(&mut out);
        let _ = writeln!(out, "# reference_year={}", self.reference_year);
        let _ = writeln!(out, "# lambda={}", self.lambda);
        let _ = writeln!(out, "# normalization={}", self.normalization);
        for ((p, d), t) in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{:.11e}", log.patients.id(*p), log.doctors.id(*d), t);
        }
        out
    }

    pub fn save(&self, path: &Path, log: &InteractionLog, provenance: &KeyValues) -> Result<()> {
        std::fs::write(path, self.to_text(log, provenance)).map_err(|e| Error::io(path, e))
    }
}

/// Visit shares of `patient` across doctors within `year`.
pub fn yearly_shares(log: &InteractionLog, patient: usize, year: Year) -> BTreeMap<usize, f64> {
    let events: Vec<_> = log.patient_events(patient).iter().filter(|e| e.year == year).collect();
    let total: u32 = events.iter().map(|e| e.count).sum();
    let mut shares = BTreeMap::new();
    for e in events {
        *shares.entry(e.doctor).or_insert(0.0) += e.count as f64 / total as f64;
    }
    shares
}

/// Trust at `reference_year` with per-year normalization.
pub fn trust_matrix(log: &InteractionLog, reference_year: Year, lambda: f64) -> Result<TrustWeights> {
    trust_matrix_with(log, reference_year, lambda, Normalization::PerYear)
}

pub fn trust_matrix_with(
    log: &InteractionLog,
    reference_year: Year,
    lambda: f64,
    normalization: Normalization,
) -> Result<TrustWeights> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Parameter(format!(
            "trust decay must be a finite value >= 0, got {lambda}"
        )));
    }
    if let Some((min, _)) = log.year_span() {
        if reference_year < min {
            return Err(Error::Parameter(format!(
                "reference year {reference_year} precedes the first logged year {min}"
            )));
        }
    }
    let decay = |year: Year| (-lambda * (reference_year - year) as f64).exp();

    let mut entries = BTreeMap::new();
    for patient in 0..log.n_patients() {
        let events: Vec<_> = log
            .patient_events(patient)
            .iter()
            .filter(|e| e.year <= reference_year)
            .collect();
        if events.is_empty() {
            continue;
        }
        match normalization {
            Normalization::PerYear => {
                let mut totals: BTreeMap<Year, u32> = BTreeMap::new();
                for e in &events {
                    *totals.entry(e.year).or_default() += e.count;
                }
                for e in &events {
                    let share = e.count as f64 / totals[&e.year] as f64;
                    *entries.entry((patient, e.doctor)).or_insert(0.0) += share * decay(e.year);
                }
            }
            Normalization::Cumulative => {
                let first = events.iter().map(|e| e.year).min().expect("nonempty");
                let mut by_year: BTreeMap<Year, Vec<(usize, u32)>> = BTreeMap::new();
                for e in &events {
                    by_year.entry(e.year).or_default().push((e.doctor, e.count));
                }
                let mut cumulative: BTreeMap<usize, u64> = BTreeMap::new();
                let mut total = 0u64;
                for year in first..=reference_year {
                    for &(d, c) in by_year.get(&year).map(Vec::as_slice).unwrap_or(&[]) {
                        *cumulative.entry(d).or_default() += c as u64;
                        total += c as u64;
                    }
                    for (&d, &c) in &cumulative {
                        *entries.entry((patient, d)).or_insert(0.0) += c as f64 / total as f64 * decay(year);
                    }
                }
            }
        }
    }
    entries.retain(|_, v| *v > 0.0);
    Ok(TrustWeights {
        reference_year,
        lambda,
        normalization,
        entries,
    })
}
