use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use super::{EpisodeKind, EpisodeRecord, InteractionLog, Profiles, Year};
use crate::config::KeyValues;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Patient,
    Doctor,
}

/// A feature vocabulary family. A feature id is `<namespace>:<value>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Namespace {
    Gender,
    AgeGroup,
    Region,
    NHospitalsBucket,
    TenureBucket,
    Mdc,
    Seniority,
    Hospital,
    Identity,
}

impl Namespace {
    pub const ALL: [Namespace; 9] = [
        Namespace::Gender,
        Namespace::AgeGroup,
        Namespace::Region,
        Namespace::NHospitalsBucket,
        Namespace::TenureBucket,
        Namespace::Mdc,
        Namespace::Seniority,
        Namespace::Hospital,
        Namespace::Identity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Gender => "gender",
            Namespace::AgeGroup => "age_group",
            Namespace::Region => "region",
            Namespace::NHospitalsBucket => "n_hospitals_bucket",
            Namespace::TenureBucket => "tenure_bucket",
            Namespace::Mdc => "mdc",
            Namespace::Seniority => "seniority",
            Namespace::Hospital => "hospital",
            Namespace::Identity => "identity",
        }
    }

    pub fn applies_to(self, side: Side) -> bool {
        use Namespace::*;
        match side {
            Side::Patient => matches!(
                self,
                Gender | AgeGroup | Region | NHospitalsBucket | TenureBucket | Mdc | Identity
            ),
            Side::Doctor => matches!(self, Gender | AgeGroup | Seniority | TenureBucket | Hospital | Identity),
        }
    }

    /// Namespace of a feature id such as `gender:F`.
    pub fn of_feature(name: &str) -> Option<Namespace> {
        let prefix = name.split_once(':')?.0;
        prefix.parse().ok()
    }
}

impl FromStr for Namespace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Namespace::ALL
            .iter()
            .copied()
            .find(|n| n.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown feature namespace `{s}`")))
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Upper-inclusive bucket boundaries for the behavioral namespaces.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BucketBounds {
    pub patient_hospitals: Vec<u32>,
    pub patient_tenure: Vec<u32>,
    pub doctor_tenure: Vec<u32>,
}

impl BucketBounds {
    /// Boundaries at the `k`-quantiles of `values`, deduplicated.
    pub fn quantiles(values: &[u32], k: usize) -> Vec<u32> {
        if values.is_empty() || k < 2 {
            return Vec::new();
        }
        let mut v = values.to_vec();
        v.sort_unstable();
        let mut bounds: Vec<u32> = (1..k).map(|q| v[(q * v.len() / k).min(v.len() - 1)]).collect();
        bounds.dedup();
        // a boundary at the maximum would leave the last bucket empty
        if bounds.last() == v.last() {
            bounds.pop();
        }
        bounds
    }

    pub fn bucket(value: u32, bounds: &[u32]) -> usize {
        bounds.iter().take_while(|&&b| value > b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureConfig {
    pub namespaces: Vec<Namespace>,
    /// Number of quantile buckets for behavioral namespaces.
    pub buckets: usize,
    /// Fixed boundaries; computed from the records when absent.
    pub bounds: Option<BucketBounds>,
}

impl FeatureConfig {
    pub fn new(namespaces: impl IntoIterator<Item = Namespace>) -> Self {
        let mut namespaces: Vec<Namespace> = namespaces.into_iter().collect();
        namespaces.sort();
        namespaces.dedup();
        FeatureConfig {
            namespaces,
            buckets: 3,
            bounds: None,
        }
    }

    /// Every namespace, identity included: the hybrid configuration.
    pub fn full() -> Self {
        Self::new(Namespace::ALL)
    }

    /// One free vector per entity: classical matrix factorization.
    pub fn identity_only() -> Self {
        Self::new([Namespace::Identity])
    }

    pub fn parse_namespaces(list: &str) -> Result<Self> {
        let ns = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Namespace>>>()?;
        if ns.is_empty() {
            return Err(Error::Config("no feature namespaces enabled".into()));
        }
        Ok(Self::new(ns))
    }

    pub fn enabled(&self, ns: Namespace) -> bool {
        self.namespaces.contains(&ns)
    }

    /// Whether any namespace besides identity is enabled.
    pub fn has_metadata(&self) -> bool {
        self.namespaces.iter().any(|&n| n != Namespace::Identity)
    }

    pub fn namespace_list(&self) -> String {
        self.namespaces.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(",")
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::full()
    }
}

/// Bijection feature id <-> dense index for one side.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let sorted: BTreeSet<String> = names.into_iter().collect();
        let names: Vec<String> = sorted.into_iter().collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Vocab { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureAssignments {
    pub config: FeatureConfig,
    pub bounds: BucketBounds,
    pub patient_vocab: Vocab,
    pub doctor_vocab: Vocab,
    /// Sorted feature indices per patient index.
    pub patient_features: Vec<Vec<usize>>,
    pub doctor_features: Vec<Vec<usize>>,
}

pub fn patient_age_group(age: u32) -> &'static str {
    match age {
        0..=14 => "child",
        15..=24 => "youth",
        25..=59 => "adult",
        _ => "elderly",
    }
}

pub fn doctor_age_group(age: u32) -> &'static str {
    match age {
        0..=39 => "young",
        40..=59 => "experienced",
        _ => "senior",
    }
}

fn identity_feature(side: Side, id: &str) -> String {
    match side {
        Side::Patient => format!("identity:patient_{id}"),
        Side::Doctor => format!("identity:doctor_{id}"),
    }
}

#[derive(Default)]
struct Behavior {
    hospitals: BTreeSet<String>,
    first_year: Option<Year>,
    mdc: BTreeSet<u8>,
    primary_hospitals: BTreeMap<String, u32>,
}

/// Assembles per-entity feature sets for every patient and doctor of `log`.
///
/// Behavioral buckets come from `records` (all non-canceled episodes, not just
/// primary care), so passing only the training years keeps test information
/// out of the features.
pub fn build_features(
    records: &[EpisodeRecord],
    profiles: &Profiles,
    log: &InteractionLog,
    config: &FeatureConfig,
) -> Result<FeatureAssignments> {
    if config.namespaces.is_empty() {
        return Err(Error::Config("no feature namespaces enabled".into()));
    }
    let reference_year = records
        .iter()
        .filter(|r| r.kind != EpisodeKind::Canceled)
        .map(|r| r.year)
        .max();

    let mut patient_behavior: HashMap<&str, Behavior> = HashMap::new();
    let mut doctor_behavior: HashMap<&str, Behavior> = HashMap::new();
    for r in records.iter().filter(|r| r.kind != EpisodeKind::Canceled) {
        let b = patient_behavior.entry(&r.patient_id).or_default();
        b.hospitals.insert(r.hospital_id.clone());
        b.first_year = Some(b.first_year.map_or(r.year, |y| y.min(r.year)));
        if let Some(m) = r.mdc {
            b.mdc.insert(m);
        }
        if r.is_primary_consultation() {
            let d = doctor_behavior.entry(&r.doctor_id).or_default();
            d.first_year = Some(d.first_year.map_or(r.year, |y| y.min(r.year)));
            *d.primary_hospitals.entry(r.hospital_id.clone()).or_default() += 1;
        }
    }
    let patient_profiles: HashMap<&str, _> = profiles.patients.iter().map(|p| (p.patient_id.as_str(), p)).collect();
    let doctor_profiles: HashMap<&str, _> = profiles.doctors.iter().map(|d| (d.doctor_id.as_str(), d)).collect();

    let tenure = |first: Option<Year>| -> Option<u32> {
        match (reference_year, first) {
            (Some(r), Some(f)) if r >= f => Some((r - f + 1) as u32),
            _ => None,
        }
    };
    let doctor_first_year = |id: &str| -> Option<Year> {
        doctor_profiles
            .get(id)
            .and_then(|p| p.start_year)
            .or_else(|| doctor_behavior.get(id).and_then(|b| b.first_year))
    };

    let bounds = match &config.bounds {
        Some(b) => b.clone(),
        None => {
            let hospitals: Vec<u32> = log
                .patients
                .ids()
                .iter()
                .filter_map(|id| patient_behavior.get(id.as_str()))
                .map(|b| b.hospitals.len() as u32)
                .collect();
            let p_tenure: Vec<u32> = log
                .patients
                .ids()
                .iter()
                .filter_map(|id| tenure(patient_behavior.get(id.as_str()).and_then(|b| b.first_year)))
                .collect();
            let d_tenure: Vec<u32> = log
                .doctors
                .ids()
                .iter()
                .filter_map(|id| tenure(doctor_first_year(id)))
                .collect();
            BucketBounds {
                patient_hospitals: BucketBounds::quantiles(&hospitals, config.buckets),
                patient_tenure: BucketBounds::quantiles(&p_tenure, config.buckets),
                doctor_tenure: BucketBounds::quantiles(&d_tenure, config.buckets),
            }
        }
    };

    let on = |ns: Namespace| config.enabled(ns);
    let mut patient_names = Vec::with_capacity(log.n_patients());
    for id in log.patients.ids() {
        let mut f = Vec::new();
        if let Some(p) = patient_profiles.get(id.as_str()) {
            if on(Namespace::Gender) {
                if let Some(g) = &p.gender {
                    f.push(format!("gender:{g}"));
                }
            }
            if on(Namespace::AgeGroup) {
                if let Some(a) = p.age {
                    f.push(format!("age_group:{}", patient_age_group(a)));
                }
            }
            if on(Namespace::Region) {
                if let Some(r) = &p.region {
                    f.push(format!("region:{r}"));
                }
            }
        }
        if let Some(b) = patient_behavior.get(id.as_str()) {
            if on(Namespace::NHospitalsBucket) {
                let k = BucketBounds::bucket(b.hospitals.len() as u32, &bounds.patient_hospitals);
                f.push(format!("n_hospitals_bucket:{k}"));
            }
            if on(Namespace::TenureBucket) {
                if let Some(t) = tenure(b.first_year) {
                    f.push(format!(
                        "tenure_bucket:{}",
                        BucketBounds::bucket(t, &bounds.patient_tenure)
                    ));
                }
            }
            if on(Namespace::Mdc) {
                f.extend(b.mdc.iter().map(|m| format!("mdc:{m}")));
            }
        }
        if on(Namespace::Identity) {
            f.push(identity_feature(Side::Patient, id));
        }
        if f.is_empty() {
            return Err(Error::Feature(format!("patient `{id}` has no features")));
        }
        patient_names.push(f);
    }

    let mut doctor_names = Vec::with_capacity(log.n_doctors());
    for id in log.doctors.ids() {
        let mut f = Vec::new();
        let profile = doctor_profiles.get(id.as_str());
        if let Some(p) = profile {
            if on(Namespace::Gender) {
                if let Some(g) = &p.gender {
                    f.push(format!("gender:{g}"));
                }
            }
            if on(Namespace::AgeGroup) {
                if let Some(a) = p.age {
                    f.push(format!("age_group:{}", doctor_age_group(a)));
                }
            }
            if on(Namespace::Seniority) {
                if let Some(s) = &p.seniority {
                    f.push(format!("seniority:{s}"));
                }
            }
        }
        if on(Namespace::TenureBucket) {
            if let Some(t) = tenure(doctor_first_year(id)) {
                f.push(format!(
                    "tenure_bucket:{}",
                    BucketBounds::bucket(t, &bounds.doctor_tenure)
                ));
            }
        }
        if on(Namespace::Hospital) {
            let main = doctor_behavior
                .get(id.as_str())
                .and_then(|b| {
                    b.primary_hospitals
                        .iter()
                        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                        .map(|(h, _)| h.clone())
                })
                .or_else(|| profile.and_then(|p| p.hospital_id.clone()));
            if let Some(h) = main {
                f.push(format!("hospital:{h}"));
            }
        }
        if on(Namespace::Identity) {
            f.push(identity_feature(Side::Doctor, id));
        }
        if f.is_empty() {
            return Err(Error::Feature(format!("doctor `{id}` has no features")));
        }
        doctor_names.push(f);
    }

    let mut config = config.clone();
    config.bounds = Some(bounds.clone());
    Ok(FeatureAssignments::from_names(
        config,
        bounds,
        patient_names,
        doctor_names,
    ))
}

pub const FEATURES_FORMAT: &str = "carematch-features v1";

impl FeatureAssignments {
    /// Builds vocabularies and index sets from feature ids per entity.
    pub fn from_names(
        config: FeatureConfig,
        bounds: BucketBounds,
        patient_names: Vec<Vec<String>>,
        doctor_names: Vec<Vec<String>>,
    ) -> Self {
        let patient_vocab = Vocab::from_names(patient_names.iter().flatten().cloned());
        let doctor_vocab = Vocab::from_names(doctor_names.iter().flatten().cloned());
        let index = |vocab: &Vocab, names: Vec<Vec<String>>| -> Vec<Vec<usize>> {
            names
                .into_iter()
                .map(|fs| {
                    let mut ix: Vec<usize> = fs.iter().map(|n| vocab.index_of(n).unwrap()).collect();
                    ix.sort_unstable();
                    ix.dedup();
                    ix
                })
                .collect()
        };
        let patient_features = index(&patient_vocab, patient_names);
        let doctor_features = index(&doctor_vocab, doctor_names);
        FeatureAssignments {
            config,
            bounds,
            patient_vocab,
            doctor_vocab,
            patient_features,
            doctor_features,
        }
    }

    pub fn vocab(&self, side: Side) -> &Vocab {
        match side {
            Side::Patient => &self.patient_vocab,
            Side::Doctor => &self.doctor_vocab,
        }
    }

    pub fn n_patients(&self) -> usize {
        self.patient_features.len()
    }

    pub fn n_doctors(&self) -> usize {
        self.doctor_features.len()
    }

    pub fn patient_has_namespace(&self, patient: usize, ns: Namespace) -> bool {
        self.patient_features[patient]
            .iter()
            .any(|&f| Namespace::of_feature(self.patient_vocab.name(f)) == Some(ns))
    }

    /// `features` minus any identity feature.
    pub fn without_identity(&self, side: Side, features: &[usize]) -> Vec<usize> {
        let vocab = self.vocab(side);
        features
            .iter()
            .copied()
            .filter(|&f| Namespace::of_feature(vocab.name(f)) != Some(Namespace::Identity))
            .collect()
    }

    /// Resolves a literal such as `gender=F,age_group=elderly,region=R3` to
    /// patient feature indices.
    pub fn patient_features_from_literal(&self, literal: &str) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for part in literal.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .or_else(|| part.split_once(':'))
                .ok_or_else(|| Error::Parameter(format!("expected `namespace=value`, got `{part}`")))?;
            let ns: Namespace = key.trim().parse()?;
            if ns == Namespace::Identity {
                return Err(Error::Parameter("identity features cannot be given literally".into()));
            }
            let value = match (ns, value.trim().parse::<u32>()) {
                (Namespace::AgeGroup, Ok(age)) => patient_age_group(age).to_string(),
                _ => value.trim().to_string(),
            };
            let name = format!("{ns}:{value}");
            let ix = self.patient_vocab.index_of(&name).ok_or(Error::Unknown {
                kind: "patient feature",
                id: name.clone(),
            })?;
            out.push(ix);
        }
        if out.is_empty() {
            return Err(Error::Parameter("empty feature literal".into()));
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn to_text(&self, log: &InteractionLog, provenance: &KeyValues) -> String {
        let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "# {FEATURES_FORMAT}");
        provenance.write_provenance(&mut out);
        let _ = writeln!(out, "namespaces\t{}", self.config.namespace_list());
        let _ = writeln!(
            out,
            "bounds\tpatient_hospitals\t{}",
            join(&self.bounds.patient_hospitals)
        );
        let _ = writeln!(out, "bounds\tpatient_tenure\t{}", join(&self.bounds.patient_tenure));
        let _ = writeln!(out, "bounds\tdoctor_tenure\t{}", join(&self.bounds.doctor_tenure));
        for (p, fs) in self.patient_features.iter().enumerate() {
            for &f in fs {
                let _ = writeln!(out, "patient\t{}\t{}", log.patients.id(p), self.patient_vocab.name(f));
            }
        }
        for (d, fs) in self.doctor_features.iter().enumerate() {
            for &f in fs {
                let _ = writeln!(out, "doctor\t{}\t{}", log.doctors.id(d), self.doctor_vocab.name(f));
            }
        }
        out
    }

    /// Parses the text form, aligning entities to the index maps of `log`.
    pub fn from_text(text: &str, log: &InteractionLog) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim_start_matches("# ") == FEATURES_FORMAT => {}
            _ => return Err(Error::Format(format!("expected `# {FEATURES_FORMAT}` header"))),
        }
        let parse_bounds = |s: &str| -> Result<Vec<u32>> {
            s.split(',')
                .filter(|x| !x.is_empty())
                .map(|x| x.parse().map_err(|_| Error::Format(format!("bad bound `{x}`"))))
                .collect()
        };
        let mut config = None;
        let mut bounds = BucketBounds::default();
        let mut patient_names = vec![Vec::new(); log.n_patients()];
        let mut doctor_names = vec![Vec::new(); log.n_doctors()];
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            match f.as_slice() {
                ["namespaces", list] => config = Some(FeatureConfig::parse_namespaces(list)?),
                ["bounds", which, list] => {
                    let values = parse_bounds(list)?;
                    match *which {
                        "patient_hospitals" => bounds.patient_hospitals = values,
                        "patient_tenure" => bounds.patient_tenure = values,
                        "doctor_tenure" => bounds.doctor_tenure = values,
                        other => return Err(Error::Format(format!("unknown bounds `{other}`"))),
                    }
                }
                ["patient", id, feature] => {
                    let p = log.patients.index_of(id).ok_or(Error::Unknown {
                        kind: "patient",
                        id: id.to_string(),
                    })?;
                    patient_names[p].push(feature.to_string());
                }
                ["doctor", id, feature] => {
                    let d = log.doctors.index_of(id).ok_or(Error::Unknown {
                        kind: "doctor",
                        id: id.to_string(),
                    })?;
                    doctor_names[d].push(feature.to_string());
                }
                _ => return Err(Error::Format(format!("features line {}: malformed `{line}`", n + 1))),
            }
        }
        let mut config = config.ok_or_else(|| Error::Format("missing namespaces line".into()))?;
        if let Some(p) = patient_names.iter().position(Vec::is_empty) {
            return Err(Error::Feature(format!(
                "patient `{}` has no features",
                log.patients.id(p)
            )));
        }
        if let Some(d) = doctor_names.iter().position(Vec::is_empty) {
            return Err(Error::Feature(format!(
                "doctor `{}` has no features",
                log.doctors.id(d)
            )));
        }
        config.bounds = Some(bounds.clone());
        Ok(Self::from_names(config, bounds, patient_names, doctor_names))
    }

    pub fn save(&self, path: &Path, log: &InteractionLog, provenance: &KeyValues) -> Result<()> {
        super::load::write_text(path, &self.to_text(log, provenance))
    }

    pub fn load(path: &Path, log: &InteractionLog) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, log)
    }
}
