//! Synthetic episode generator with planted structure.
//!
//! Every patient-year with a primary-care visit either stays with the
//! patient's current doctor (probability `1 - switch_rate`) or draws a doctor
//! from a softmax over
//!
//! ```text
//! affinity = popularity + homophily * homophily_scale * [same gender]
//!                       + locality  * locality_scale  * [doctor in home region]
//! ```
//!
//! plus `persistence_bonus` for doctors visited before. The affinity table is
//! returned so tests can check that models recover it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DoctorProfile, EpisodeKind, EpisodeRecord, PatientProfile, Profiles, Schema, Specialty, Year};
use crate::config::KeyValues;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub patients: usize,
    pub doctors: usize,
    pub first_year: Year,
    pub last_year: Year,
    pub hospitals: usize,
    pub regions: usize,
    pub homophily: f64,
    pub locality: f64,
    pub popularity_skew: f64,
    pub switch_rate: f64,
    pub persistence_bonus: f64,
    pub homophily_scale: f64,
    pub locality_scale: f64,
    pub temperature: f64,
    /// Probability that a primary-care user visits in a given year.
    pub visit_rate: f64,
    /// Mean number of extra visits in an active year.
    pub extra_visits: f64,
    /// Share of patients present from the first year; the rest join later.
    pub initial_fraction: f64,
    /// Share of patients who ever use primary care.
    pub primary_share: f64,
    pub specialist_rate: f64,
    pub chronic_share: f64,
    pub inpatient_rate: f64,
    pub emergency_rate: f64,
    pub cancel_rate: f64,
    pub female_share: f64,
}

impl Default for SynthConfig {
    /// The 5,000 x 100 benchmark.
    fn default() -> Self {
        SynthConfig {
            patients: 5000,
            doctors: 100,
            first_year: 2012,
            last_year: 2017,
            hospitals: 10,
            regions: 5,
            homophily: 0.7,
            locality: 0.7,
            popularity_skew: 0.5,
            switch_rate: 0.3,
            persistence_bonus: 0.0,
            homophily_scale: 5.0,
            locality_scale: 5.0,
            temperature: 1.0,
            visit_rate: 0.6,
            extra_visits: 1.5,
            initial_fraction: 0.6,
            primary_share: 0.9,
            specialist_rate: 0.3,
            chronic_share: 0.2,
            inpatient_rate: 0.3,
            emergency_rate: 0.1,
            cancel_rate: 0.05,
            female_share: 0.55,
        }
    }
}

macro_rules! synth_keys {
    ($($field:ident),* $(,)?) => {
        impl SynthConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Applies overrides from a flat key-value section.
            pub fn from_config(kv: &KeyValues) -> Result<Self> {
                Self::with_base(Self::default(), kv)
            }

            pub fn with_base(base: Self, kv: &KeyValues) -> Result<Self> {
                kv.reject_unknown(|k| Self::KEYS.contains(&k))?;
                let mut c = base;
                $( c.$field = kv.get_or(stringify!($field), c.$field)?; )*
                Ok(c)
            }

            pub fn to_config(&self) -> KeyValues {
                let mut kv = KeyValues::new();
                $( kv.set(stringify!($field), self.$field.to_string()); )*
                kv
            }
        }
    };
}

synth_keys!(
    patients,
    doctors,
    first_year,
    last_year,
    hospitals,
    regions,
    homophily,
    locality,
    popularity_skew,
    switch_rate,
    persistence_bonus,
    homophily_scale,
    locality_scale,
    temperature,
    visit_rate,
    extra_visits,
    initial_fraction,
    primary_share,
    specialist_rate,
    chronic_share,
    inpatient_rate,
    emergency_rate,
    cancel_rate,
    female_share,
);

impl SynthConfig {
    /// The 200 x 20 desk-scale benchmark.
    pub fn desk() -> Self {
        SynthConfig {
            patients: 200,
            doctors: 20,
            hospitals: 4,
            regions: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patients == 0 || self.doctors == 0 {
            return Err(Error::Config("patients and doctors must be positive".into()));
        }
        if self.last_year < self.first_year {
            return Err(Error::Config("year span is empty".into()));
        }
        if self.hospitals == 0 || self.regions == 0 {
            return Err(Error::Config("hospitals and regions must be positive".into()));
        }
        for (name, v) in [
            ("homophily", self.homophily),
            ("locality", self.locality),
            ("switch_rate", self.switch_rate),
            ("visit_rate", self.visit_rate),
            ("initial_fraction", self.initial_fraction),
            ("primary_share", self.primary_share),
            ("specialist_rate", self.specialist_rate),
            ("chronic_share", self.chronic_share),
            ("inpatient_rate", self.inpatient_rate),
            ("emergency_rate", self.emergency_rate),
            ("cancel_rate", self.cancel_rate),
            ("female_share", self.female_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.popularity_skew < 0.0 || self.extra_visits < 0.0 {
            return Err(Error::Config(
                "popularity_skew and extra_visits must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Planted affinity (softmax logit before temperature) for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityTable {
    pub patient_ids: Vec<String>,
    pub doctor_ids: Vec<String>,
    /// Row-major, `patients x doctors`.
    pub values: Vec<f64>,
}

impl AffinityTable {
    pub fn get(&self, patient: usize, doctor: usize) -> f64 {
        self.values[patient * self.doctor_ids.len() + doctor]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("patient_id\tdoctor_id\taffinity\n");
        for (p, pid) in self.patient_ids.iter().enumerate() {
            for (d, did) in self.doctor_ids.iter().enumerate() {
                let _ = writeln!(out, "{pid}\t{did}\t{:.6}", self.get(p, d));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub episodes: Vec<EpisodeRecord>,
    pub profiles: Profiles,
    pub affinity: AffinityTable,
}

pub const EPISODES_FILE: &str = "episodes.csv";
pub const PATIENTS_FILE: &str = "patients.csv";
pub const DOCTORS_FILE: &str = "doctors.csv";
pub const AFFINITY_FILE: &str = "affinity.tsv";

impl SynthDataset {
    /// Writes the four dataset files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let schema = Schema::default();
        super::write_episodes(&dir.join(EPISODES_FILE), &schema, &self.episodes)?;
        super::write_patients(&dir.join(PATIENTS_FILE), b',', &self.profiles.patients)?;
        super::write_doctors(&dir.join(DOCTORS_FILE), b',', &self.profiles.doctors)?;
        super::load::write_text(&dir.join(AFFINITY_FILE), &self.affinity.to_text())
    }

    /// Histogram data mirroring the descriptive plots: primary-care visits
    /// per year, distinct doctors per patient, distinct patients per doctor.
    pub fn summary(&self) -> String {
        let mut per_year: BTreeMap<Year, usize> = BTreeMap::new();
        let mut doctors_of: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
        let mut patients_of: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
        for e in self.episodes.iter().filter(|e| e.is_primary_consultation()) {
            *per_year.entry(e.year).or_default() += 1;
            doctors_of.entry(&e.patient_id).or_default().insert(&e.doctor_id);
            patients_of.entry(&e.doctor_id).or_default().insert(&e.patient_id);
        }
        let histogram = |sizes: Vec<usize>| -> BTreeMap<usize, usize> {
            let mut h = BTreeMap::new();
            for s in sizes {
                *h.entry(s).or_default() += 1;
            }
            h
        };
        let mut out = String::from("table\tkey\tvalue\n");
        for (y, n) in per_year {
            let _ = writeln!(out, "visits_per_year\t{y}\t{n}");
        }
        for (k, n) in histogram(doctors_of.values().map(|s| s.len()).collect()) {
            let _ = writeln!(out, "doctors_per_patient\t{k}\t{n}");
        }
        for (k, n) in histogram(patients_of.values().map(|s| s.len()).collect()) {
            let _ = writeln!(out, "patients_per_doctor\t{k}\t{n}");
        }
        out
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn draw_softmax(rng: &mut ChaCha8Rng, logits: &[f64]) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

struct Doctor {
    gender: &'static str,
    hospital: usize,
    popularity: f64,
}

struct Patient {
    gender: &'static str,
    region: usize,
    join_year: Year,
    uses_primary: bool,
    chronic_mdc: Option<u8>,
}

/// Generates a dataset; a pure function of `(config, seed)`.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = config;
    let hospital_id = |h: usize| format!("H{h:02}");
    let region_of_hospital = |h: usize| h % c.regions;

    let mut doctors = Vec::with_capacity(c.doctors);
    let mut doctor_profiles = Vec::with_capacity(c.doctors);
    for j in 0..c.doctors {
        let gender = if rng.gen_bool(0.5) { "F" } else { "M" };
        let age: u32 = rng.gen_range(28..=68);
        let seniority = match age {
            0..=39 => "junior",
            40..=54 => "consultant",
            _ => "senior",
        };
        let start_year = c.first_year - rng.gen_range(0..=(age as i32 - 28).min(25));
        // every hospital gets a doctor before any gets a second
        let hospital = if j < c.hospitals {
            j
        } else {
            rng.gen_range(0..c.hospitals)
        };
        let popularity = c.popularity_skew * standard_normal(&mut rng);
        doctors.push(Doctor {
            gender,
            hospital,
            popularity,
        });
        doctor_profiles.push(DoctorProfile {
            doctor_id: format!("D{j:03}"),
            gender: Some(gender.into()),
            age: Some(age),
            seniority: Some(seniority.into()),
            start_year: Some(start_year),
            hospital_id: Some(hospital_id(hospital)),
        });
    }

    let mut patients = Vec::with_capacity(c.patients);
    let mut patient_profiles = Vec::with_capacity(c.patients);
    for i in 0..c.patients {
        let gender = if rng.gen_bool(c.female_share) { "F" } else { "M" };
        let age: u32 = rng.gen_range(0..=90);
        let region = rng.gen_range(0..c.regions);
        let join_year = if c.first_year == c.last_year || rng.gen_bool(c.initial_fraction) {
            c.first_year
        } else {
            rng.gen_range(c.first_year + 1..=c.last_year)
        };
        let uses_primary = rng.gen_bool(c.primary_share);
        let chronic_mdc = if rng.gen_bool(c.chronic_share) {
            Some(rng.gen_range(1..=24u8))
        } else {
            None
        };
        patients.push(Patient {
            gender,
            region,
            join_year,
            uses_primary,
            chronic_mdc,
        });
        patient_profiles.push(PatientProfile {
            patient_id: format!("P{i:05}"),
            gender: Some(gender.into()),
            age: Some(age),
            region: Some(format!("R{region}")),
        });
    }

    let mut affinity = Vec::with_capacity(c.patients * c.doctors);
    for p in &patients {
        for d in &doctors {
            let gender_match = if p.gender == d.gender { 1.0 } else { 0.0 };
            let region_match = if region_of_hospital(d.hospital) == p.region {
                1.0
            } else {
                0.0
            };
            affinity.push(
                d.popularity
                    + c.homophily * c.homophily_scale * gender_match
                    + c.locality * c.locality_scale * region_match,
            );
        }
    }

    let home_hospitals: Vec<Vec<usize>> = (0..c.regions)
        .map(|r| (0..c.hospitals).filter(|&h| region_of_hospital(h) == r).collect())
        .collect();
    let continue_p = c.extra_visits / (1.0 + c.extra_visits);

    let mut episodes = Vec::new();
    let mut logits = vec![0.0; c.doctors];
    for (i, p) in patients.iter().enumerate() {
        let pid = &patient_profiles[i].patient_id;
        let row = &affinity[i * c.doctors..(i + 1) * c.doctors];
        let mut visited = vec![false; c.doctors];
        let mut current: Option<usize> = None;
        let home = &home_hospitals[p.region];
        let episode = |doctor_id: String, year, hospital: usize, kind, specialty, mdc| EpisodeRecord {
            patient_id: pid.clone(),
            doctor_id,
            year,
            hospital_id: hospital_id(hospital),
            kind,
            specialty,
            mdc,
            source_line: None,
        };
        for year in p.join_year..=c.last_year {
            if rng.gen_bool(c.specialist_rate) {
                let h = if home.is_empty() {
                    0
                } else {
                    home[rng.gen_range(0..home.len())]
                };
                episodes.push(episode(
                    format!("S{h:02}"),
                    year,
                    h,
                    EpisodeKind::Consultation,
                    Specialty::Other,
                    None,
                ));
            }
            if let Some(m) = p.chronic_mdc {
                if rng.gen_bool(c.inpatient_rate) {
                    let h = if home.is_empty() {
                        0
                    } else {
                        home[rng.gen_range(0..home.len())]
                    };
                    episodes.push(episode(
                        format!("S{h:02}"),
                        year,
                        h,
                        EpisodeKind::Inpatient,
                        Specialty::Other,
                        Some(m),
                    ));
                }
            }
            if rng.gen_bool(c.emergency_rate) {
                let d = rng.gen_range(0..c.doctors);
                let id = doctor_profiles[d].doctor_id.clone();
                episodes.push(episode(
                    id,
                    year,
                    doctors[d].hospital,
                    EpisodeKind::Emergency,
                    Specialty::PrimaryCare,
                    None,
                ));
            }
            if !p.uses_primary || !rng.gen_bool(c.visit_rate) {
                continue;
            }
            let doctor = match current {
                Some(d) if !rng.gen_bool(c.switch_rate) => d,
                _ => {
                    for (j, l) in logits.iter_mut().enumerate() {
                        let bonus = if visited[j] { c.persistence_bonus } else { 0.0 };
                        *l = (row[j] + bonus) / c.temperature;
                    }
                    draw_softmax(&mut rng, &logits)
                }
            };
            visited[doctor] = true;
            current = Some(doctor);
            let mut visits = 1;
            while rng.gen_bool(continue_p) {
                visits += 1;
            }
            let id = &doctor_profiles[doctor].doctor_id;
            for _ in 0..visits {
                episodes.push(episode(
                    id.clone(),
                    year,
                    doctors[doctor].hospital,
                    EpisodeKind::Consultation,
                    Specialty::PrimaryCare,
                    None,
                ));
            }
            if rng.gen_bool(c.cancel_rate) {
                episodes.push(episode(
                    id.clone(),
                    year,
                    doctors[doctor].hospital,
                    EpisodeKind::Canceled,
                    Specialty::PrimaryCare,
                    None,
                ));
            }
        }
    }

    Ok(SynthDataset {
        episodes,
        affinity: AffinityTable {
            patient_ids: patient_profiles.iter().map(|p| p.patient_id.clone()).collect(),
            doctor_ids: doctor_profiles.iter().map(|d| d.doctor_id.clone()).collect(),
            values: affinity,
        },
        profiles: Profiles {
            patients: patient_profiles,
            doctors: doctor_profiles,
        },
    })
}
