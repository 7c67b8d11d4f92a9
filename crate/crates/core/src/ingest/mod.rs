//! Raw episode records, their cleaning into an [`InteractionLog`], feature
//! assembly, and the synthetic benchmark generator.

mod features;
mod load;
mod log;
pub mod synth;

pub use features::{
    build_features, doctor_age_group, patient_age_group, BucketBounds, FeatureAssignments, FeatureConfig, Namespace,
    Side, Vocab,
};
pub use load::{
    load_doctors, load_episodes, load_patients, write_doctors, write_episodes, write_patients, AliasMap, Schema,
};
pub use log::{clean, Activity, Event, IdMap, InteractionLog};

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub type Year = i32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EpisodeKind {
    Consultation,
    Emergency,
    Canceled,
    Inpatient,
}

impl EpisodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeKind::Consultation => "consultation",
            EpisodeKind::Emergency => "emergency",
            EpisodeKind::Canceled => "canceled",
            EpisodeKind::Inpatient => "inpatient",
        }
    }
}

impl FromStr for EpisodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "consultation" => Ok(EpisodeKind::Consultation),
            "emergency" => Ok(EpisodeKind::Emergency),
            "canceled" | "cancelled" => Ok(EpisodeKind::Canceled),
            "inpatient" => Ok(EpisodeKind::Inpatient),
            other => Err(Error::Parameter(format!("unknown episode kind `{other}`"))),
        }
    }
}

impl fmt::Display for EpisodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Specialty {
    PrimaryCare,
    Other,
}

impl Specialty {
    pub fn as_str(self) -> &'static str {
        match self {
            Specialty::PrimaryCare => "primary_care",
            Specialty::Other => "other",
        }
    }
}

impl FromStr for Specialty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "primary_care" => Ok(Specialty::PrimaryCare),
            "other" => Ok(Specialty::Other),
            other => Err(Error::Parameter(format!("unknown specialty `{other}`"))),
        }
    }
}

impl fmt::Display for Specialty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One raw episode of care.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EpisodeRecord {
    pub patient_id: String,
    pub doctor_id: String,
    pub year: Year,
    pub hospital_id: String,
    pub kind: EpisodeKind,
    pub specialty: Specialty,
    /// Major Diagnostic Category, 1..=24, inpatient episodes only.
    pub mdc: Option<u8>,
    /// Line in the source file, when the record was loaded from one.
    pub source_line: Option<usize>,
}

impl EpisodeRecord {
    /// Primary-care consultation, the only kind retained in the log.
    pub fn is_primary_consultation(&self) -> bool {
        self.kind == EpisodeKind::Consultation && self.specialty == Specialty::PrimaryCare
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatientProfile {
    pub patient_id: String,
    pub gender: Option<String>,
    pub age: Option<u32>,
    pub region: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DoctorProfile {
    pub doctor_id: String,
    pub gender: Option<String>,
    pub age: Option<u32>,
    pub seniority: Option<String>,
    /// First year working in the network.
    pub start_year: Option<Year>,
    pub hospital_id: Option<String>,
}

/// Everything a pipeline run consumes: raw episodes and entity metadata.
#[derive(Debug, Clone, Default)]
pub struct Profiles {
    pub patients: Vec<PatientProfile>,
    pub doctors: Vec<DoctorProfile>,
}
