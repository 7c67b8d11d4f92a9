//! Use-case routing.
//!
//! | case | history before the reference year          | scored with              |
//! |------|--------------------------------------------|--------------------------|
//! | UC1  | none                                       | metadata features        |
//! | UC2  | other episodes, no primary care            | metadata features        |
//! | UC3  | as UC2, with diagnostic-category features  | metadata features        |
//! | UC4  | primary-care consultations                 | all features             |
//! | UC5  | as UC4, with diagnostic-category features  | all features             |
//!
//! One model serves every case; the router only decides which of the
//! patient's features take part in scoring.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::ingest::{FeatureAssignments, InteractionLog, Namespace, Side, Year};
use crate::model::{HybridModel, ScoredDoctor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UseCase {
    NewPatient,
    NoPrimaryCare,
    NoPrimaryCareMdc,
    PrimaryCare,
    PrimaryCareMdc,
}

impl UseCase {
    pub const ALL: [UseCase; 5] = [
        UseCase::NewPatient,
        UseCase::NoPrimaryCare,
        UseCase::NoPrimaryCareMdc,
        UseCase::PrimaryCare,
        UseCase::PrimaryCareMdc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            UseCase::NewPatient => "UC1",
            UseCase::NoPrimaryCare => "UC2",
            UseCase::NoPrimaryCareMdc => "UC3",
            UseCase::PrimaryCare => "UC4",
            UseCase::PrimaryCareMdc => "UC5",
        }
    }

    /// Content-based cases, served without interaction history.
    pub fn is_content_based(self) -> bool {
        matches!(
            self,
            UseCase::NewPatient | UseCase::NoPrimaryCare | UseCase::NoPrimaryCareMdc
        )
    }
}

impl fmt::Display for UseCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Restricts candidates to doctors working at the listed hospitals.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HospitalFilter {
    pub hospitals: BTreeSet<String>,
}

impl HospitalFilter {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(ids: I) -> Self {
        HospitalFilter {
            hospitals: ids.into_iter().map(Into::into).collect(),
        }
    }

    fn describe(&self) -> String {
        self.hospitals.iter().cloned().collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatientQuery {
    /// A patient of the log, classified at `reference_year`.
    Known { patient: usize, reference_year: Year },
    /// A brand-new patient described only by metadata feature indices.
    Profile(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub use_case: UseCase,
    pub doctors: Vec<ScoredDoctor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Router {
    /// Episodes of any kind needed before a patient counts as existing.
    pub min_episodes: u32,
}

impl Default for Router {
    fn default() -> Self {
        Router { min_episodes: 1 }
    }
}

impl Router {
    /// Use case of `patient` given history strictly before `reference_year`.
    pub fn classify(
        &self,
        patient: usize,
        log: &InteractionLog,
        features: &FeatureAssignments,
        reference_year: Year,
    ) -> Result<UseCase> {
        if patient >= log.n_patients() || patient >= features.n_patients() {
            return Err(Error::Unknown {
                kind: "patient index",
                id: patient.to_string(),
            });
        }
        let primary: u32 = log
            .patient_events(patient)
            .iter()
            .filter(|e| e.year < reference_year)
            .map(|e| e.count)
            .sum();
        let other: u32 = log
            .patient_activity(patient)
            .iter()
            .filter(|a| a.year < reference_year)
            .map(|a| a.count)
            .sum();
        let mdc = features.patient_has_namespace(patient, Namespace::Mdc);
        Ok(if primary + other < self.min_episodes {
            UseCase::NewPatient
        } else if primary == 0 {
            if mdc {
                UseCase::NoPrimaryCareMdc
            } else {
                UseCase::NoPrimaryCare
            }
        } else if mdc {
            UseCase::PrimaryCareMdc
        } else {
            UseCase::PrimaryCare
        })
    }

    /// Features that take part in scoring for `use_case`: content-based
    /// cases drop the identity feature, which has no trained embedding for a
    /// patient without primary-care history.
    pub fn scoring_features(
        &self,
        features: &FeatureAssignments,
        patient_features: &[usize],
        use_case: UseCase,
    ) -> Result<Vec<usize>> {
        if !use_case.is_content_based() {
            return Ok(patient_features.to_vec());
        }
        let metadata = features.without_identity(Side::Patient, patient_features);
        if metadata.is_empty() {
            return Err(Error::Feature(format!(
                "{use_case} needs metadata features, but the patient has none (identity-only model?)"
            )));
        }
        Ok(metadata)
    }

    /// Candidate doctors, optionally restricted to `filter`.
    pub fn candidates(
        &self,
        log: &InteractionLog,
        features: &FeatureAssignments,
        filter: Option<&HospitalFilter>,
    ) -> Result<Vec<usize>> {
        let all: Vec<usize> = (0..features.n_doctors()).collect();
        let Some(filter) = filter else {
            return Ok(all);
        };
        let worked = log.doctor_hospitals();
        let kept: Vec<usize> = all
            .into_iter()
            .filter(|&d| {
                let in_log = worked
                    .get(d)
                    .is_some_and(|hs| hs.iter().any(|&h| filter.hospitals.contains(log.hospitals.id(h))));
                let by_feature = features.doctor_features[d].iter().any(|&f| {
                    features
                        .doctor_vocab
                        .name(f)
                        .strip_prefix("hospital:")
                        .is_some_and(|h| filter.hospitals.contains(h))
                });
                in_log || by_feature
            })
            .collect();
        if kept.is_empty() {
            return Err(Error::Parameter(format!(
                "no candidate doctors left after hospital filter `{}`",
                filter.describe()
            )));
        }
        Ok(kept)
    }

    pub fn recommend(
        &self,
        query: &PatientQuery,
        model: &HybridModel,
        log: &InteractionLog,
        features: &FeatureAssignments,
        n: usize,
        filter: Option<&HospitalFilter>,
    ) -> Result<Recommendation> {
        model.check_bound(features)?;
        if n == 0 {
            return Err(Error::Parameter("n must be at least 1".into()));
        }
        let (use_case, scoring) = match query {
            PatientQuery::Known {
                patient,
                reference_year,
            } => {
                let uc = self.classify(*patient, log, features, *reference_year)?;
                let f = self.scoring_features(features, &features.patient_features[*patient], uc)?;
                (uc, f)
            }
            PatientQuery::Profile(f) => {
                let f = self.scoring_features(features, f, UseCase::NewPatient)?;
                (UseCase::NewPatient, f)
            }
        };
        let candidates = self.candidates(log, features, filter)?;
        let doctors = model.rank_doctors(features, &scoring, &candidates, n)?;
        Ok(Recommendation { use_case, doctors })
    }
}
