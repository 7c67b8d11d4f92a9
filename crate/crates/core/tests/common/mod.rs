//! Shared fixtures and independent reference implementations.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use carematch::ingest::{
    BucketBounds, EpisodeKind, EpisodeRecord, FeatureAssignments, FeatureConfig, Side, Specialty, Year,
};
use carematch::model::{HybridModel, Hyperparams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn record(patient: &str, doctor: &str, year: Year, kind: EpisodeKind, specialty: Specialty) -> EpisodeRecord {
    EpisodeRecord {
        patient_id: patient.into(),
        doctor_id: doctor.into(),
        year,
        hospital_id: "H1".into(),
        kind,
        specialty,
        mdc: None,
        source_line: None,
    }
}

/// One primary-care consultation.
pub fn visit(patient: &str, doctor: &str, year: Year) -> EpisodeRecord {
    record(patient, doctor, year, EpisodeKind::Consultation, Specialty::PrimaryCare)
}

/// A consultation history as (patient, doctor, year) triples, one per visit.
pub type History = Vec<(String, String, Year)>;

/// Random histories: up to `max_years` years from 2012, up to `max_doctors`
/// doctors, up to `max_visits` visits per patient-year.
pub fn random_history(
    rng: &mut impl Rng,
    patients: usize,
    max_years: i32,
    max_doctors: usize,
    max_visits: usize,
) -> History {
    let years = rng.gen_range(1..=max_years);
    let doctors = rng.gen_range(1..=max_doctors);
    let mut out = Vec::new();
    for p in 0..patients {
        for y in 0..years {
            if rng.gen_bool(0.3) {
                continue;
            }
            for _ in 0..rng.gen_range(1..=max_visits) {
                out.push((format!("p{p}"), format!("d{}", rng.gen_range(0..doctors)), 2012 + y));
            }
        }
    }
    if out.is_empty() {
        out.push(("p0".into(), "d0".into(), 2012));
    }
    out
}

pub fn records_of(history: &History) -> Vec<EpisodeRecord> {
    history.iter().map(|(p, d, y)| visit(p, d, *y)).collect()
}

/// Trust recomputed by looping over every raw visit for every year; no
/// aggregation structures.
pub fn trust_oracle(history: &History, patient: &str, doctor: &str, reference_year: Year, lambda: f64) -> f64 {
    let first = history.iter().map(|v| v.2).min().unwrap_or(reference_year);
    let mut total = 0.0;
    for year in first..=reference_year {
        let mut own = 0usize;
        let mut all = 0usize;
        for (p, d, y) in history {
            if p == patient && *y == year {
                all += 1;
                if d == doctor {
                    own += 1;
                }
            }
        }
        if all > 0 {
            total += own as f64 / all as f64 * (-lambda * (reference_year - year) as f64).exp();
        }
    }
    total
}

/// Cumulative-normalization variant of [`trust_oracle`]: the denominator
/// and numerator count every visit up to and including the year.
pub fn trust_oracle_cumulative(
    history: &History,
    patient: &str,
    doctor: &str,
    reference_year: Year,
    lambda: f64,
) -> f64 {
    let first = history.iter().filter(|v| v.0 == patient).map(|v| v.2).min();
    let Some(first) = first else { return 0.0 };
    let mut total = 0.0;
    for year in first..=reference_year {
        let mut own = 0usize;
        let mut all = 0usize;
        for (p, d, y) in history {
            if p == patient && *y <= year {
                all += 1;
                if d == doctor {
                    own += 1;
                }
            }
        }
        if all > 0 {
            total += own as f64 / all as f64 * (-lambda * (reference_year - year) as f64).exp();
        }
    }
    total
}

/// Double-loop HR@n: `lists` and `truth` are parallel per-patient vectors.
pub fn naive_hit_rate(lists: &[Vec<usize>], truth: &[Vec<usize>], n: usize) -> f64 {
    let mut hits = 0usize;
    for (list, visited) in lists.iter().zip(truth) {
        let mut hit = false;
        for (rank, d) in list.iter().enumerate() {
            if rank < n {
                for v in visited {
                    if v == d {
                        hit = true;
                    }
                }
            }
        }
        if hit {
            hits += 1;
        }
    }
    hits as f64 / lists.len() as f64
}

/// Double-loop p@n with denominator `n`.
pub fn naive_precision(lists: &[Vec<usize>], truth: &[Vec<usize>], n: usize) -> f64 {
    let mut total = 0.0;
    for (list, visited) in lists.iter().zip(truth) {
        let mut hits = 0usize;
        for (rank, d) in list.iter().enumerate() {
            if rank < n && visited.contains(d) {
                hits += 1;
            }
        }
        total += hits as f64 / n as f64;
    }
    total / lists.len() as f64
}

/// Full-sort ranking oracle: raw descending, index ascending on ties.
pub fn full_sort(raws: &[(usize, f64)]) -> Vec<usize> {
    let mut v = raws.to_vec();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    v.into_iter().map(|x| x.0).collect()
}

/// Distinct doctors per patient.
pub fn doctor_sets(history: &History) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (p, d, _) in history {
        out.entry(p.clone()).or_default().insert(d.clone());
    }
    out
}

/// `patients` x `doctors` entities over small shared vocabularies.
pub fn random_features(rng: &mut impl Rng, patients: usize, doctors: usize, vocab: usize) -> FeatureAssignments {
    let mut sets = |n: usize, prefix: &str| -> Vec<Vec<String>> {
        (0..n)
            .map(|_| {
                let mut v: Vec<String> = (0..vocab)
                    .filter(|_| rng.gen_bool(0.4))
                    .map(|k| format!("region:{prefix}{k}"))
                    .collect();
                if v.is_empty() {
                    v.push(format!("region:{prefix}0"));
                }
                v
            })
            .collect()
    };
    let p = sets(patients, "p");
    let d = sets(doctors, "d");
    FeatureAssignments::from_names(FeatureConfig::full(), BucketBounds::default(), p, d)
}

pub fn hp(dim: usize) -> Hyperparams {
    Hyperparams {
        no_components: dim,
        ..Hyperparams::desk()
    }
}

/// Model with random embeddings and biases.
pub fn random_model(rng: &mut ChaCha8Rng, features: &FeatureAssignments, dim: usize) -> HybridModel {
    fill(rng, features, dim, |rng| rng.gen_range(-1.0..1.0))
}

/// Parameters on a 1/256 grid, so sums of a few of them are exact.
pub fn dyadic_model(rng: &mut ChaCha8Rng, features: &FeatureAssignments, dim: usize) -> HybridModel {
    fill(rng, features, dim, |rng| rng.gen_range(-256i32..=256) as f64 / 256.0)
}

pub fn fill(
    rng: &mut ChaCha8Rng,
    features: &FeatureAssignments,
    dim: usize,
    draw: impl Fn(&mut ChaCha8Rng) -> f64,
) -> HybridModel {
    let mut m = HybridModel::new(features, hp(dim), rng).unwrap();
    for side in [Side::Patient, Side::Doctor] {
        for f in 0..features.vocab(side).len() {
            *m.bias_mut(side, f) = draw(rng);
            for x in m.embedding_mut(side, f) {
                *x = draw(rng);
            }
        }
    }
    m
}
