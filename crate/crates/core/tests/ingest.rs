mod common;

use std::collections::BTreeMap;

use carematch::ingest::synth::{synth_generate, SynthConfig};
use carematch::ingest::{
    build_features, clean, load_episodes, write_episodes, FeatureAssignments, FeatureConfig, InteractionLog, Schema,
};
use carematch::Error;
use common::{random_history, records_of};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn reingest(log: &InteractionLog, dir: &std::path::Path) -> InteractionLog {
    let path = dir.join("episodes.csv");
    write_episodes(&path, &Schema::default(), &log.to_episodes()).unwrap();
    clean(&load_episodes(&path, &Schema::default()).unwrap()).unwrap()
}

#[test]
fn synth_log_survives_reingestion() {
    let data = synth_generate(&SynthConfig::desk(), 7).unwrap();
    let log = clean(&data.episodes).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let once = reingest(&log, dir.path());
    assert_eq!(once.events, log.events);
    assert_eq!(once.patients, log.patients);
    let twice = reingest(&once, dir.path());
    assert_eq!(twice, once);

    let retained = data.episodes.iter().filter(|e| e.is_primary_consultation()).count() as u64;
    assert_eq!(log.total_consultations(), retained);
}

#[test]
fn artifacts_round_trip() {
    let data = synth_generate(&SynthConfig::desk(), 3).unwrap();
    let log = clean(&data.episodes).unwrap();
    let features = build_features(&data.episodes, &data.profiles, &log, &FeatureConfig::full()).unwrap();
    let prov = Default::default();
    let log_back = InteractionLog::from_text(&log.to_text(&prov)).unwrap();
    assert_eq!(log_back, log);
    let f_back = FeatureAssignments::from_text(&features.to_text(&log, &prov), &log).unwrap();
    assert_eq!(f_back, features);
    assert!(log.to_text(&prov).starts_with("# carematch-log v1\n"));
}

#[test]
fn every_entity_has_features_and_identity_is_unique() {
    let data = synth_generate(&SynthConfig::desk(), 11).unwrap();
    let log = clean(&data.episodes).unwrap();
    let features = build_features(&data.episodes, &data.profiles, &log, &FeatureConfig::full()).unwrap();
    assert!(features.patient_features.iter().all(|f| !f.is_empty()));
    assert!(features.doctor_features.iter().all(|f| !f.is_empty()));
    let identities: Vec<&str> = features
        .patient_vocab
        .names()
        .iter()
        .filter(|n| n.starts_with("identity:"))
        .map(String::as_str)
        .collect();
    assert_eq!(identities.len(), log.n_patients());
}

#[test]
fn synth_is_pure_and_validated() {
    let a = synth_generate(&SynthConfig::desk(), 42).unwrap();
    let b = synth_generate(&SynthConfig::desk(), 42).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write(da.path()).unwrap();
    b.write(db.path()).unwrap();
    for f in ["episodes.csv", "patients.csv", "doctors.csv", "affinity.tsv"] {
        assert_eq!(
            std::fs::read(da.path().join(f)).unwrap(),
            std::fs::read(db.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let zero = SynthConfig {
        patients: 0,
        ..SynthConfig::desk()
    };
    let err = synth_generate(&zero, 1).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert_eq!(err.exit_code(), 3);
}

/// Index of the region of a synthetic hospital id `H<k>`.
fn hospital_region(id: &str, regions: usize) -> String {
    let h: usize = id[1..].parse().unwrap();
    format!("R{}", h % regions)
}

#[test]
fn no_planted_structure_means_chance_gender_match() {
    let config = SynthConfig {
        homophily: 0.0,
        locality: 0.0,
        popularity_skew: 0.0,
        ..SynthConfig::default()
    };
    let data = synth_generate(&config, 5).unwrap();
    let doctor_gender: BTreeMap<&str, &str> = data
        .profiles
        .doctors
        .iter()
        .map(|d| (d.doctor_id.as_str(), d.gender.as_deref().unwrap()))
        .collect();
    let female_doctors = doctor_gender.values().filter(|g| **g == "F").count() as f64 / doctor_gender.len() as f64;
    let patient_gender: BTreeMap<&str, &str> = data
        .profiles
        .patients
        .iter()
        .map(|p| (p.patient_id.as_str(), p.gender.as_deref().unwrap()))
        .collect();
    // first doctor of each patient: independent draws
    let mut first: BTreeMap<&str, (i32, &str)> = BTreeMap::new();
    for e in data.episodes.iter().filter(|e| e.is_primary_consultation()) {
        let slot = first.entry(&e.patient_id).or_insert((e.year, &e.doctor_id));
        if e.year < slot.0 {
            *slot = (e.year, &e.doctor_id);
        }
    }
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    for (p, (_, d)) in &first {
        let g = patient_gender[p];
        let prob = if g == "F" { female_doctors } else { 1.0 - female_doctors };
        expected += prob;
        variance += prob * (1.0 - prob);
        if doctor_gender[d] == g {
            observed += 1.0;
        }
    }
    let z = (observed - expected) / variance.sqrt();
    assert!(z.abs() < 3.0, "z = {z}");
}

#[test]
fn full_homophily_and_locality_dominate_visits() {
    let config = SynthConfig {
        homophily: 1.0,
        locality: 1.0,
        ..SynthConfig::default()
    };
    let data = synth_generate(&config, 42).unwrap();
    let doctors: BTreeMap<&str, (&str, String)> = data
        .profiles
        .doctors
        .iter()
        .map(|d| {
            (
                d.doctor_id.as_str(),
                (
                    d.gender.as_deref().unwrap(),
                    hospital_region(d.hospital_id.as_deref().unwrap(), config.regions),
                ),
            )
        })
        .collect();
    let patients: BTreeMap<&str, (&str, &str)> = data
        .profiles
        .patients
        .iter()
        .map(|p| {
            (
                p.patient_id.as_str(),
                (p.gender.as_deref().unwrap(), p.region.as_deref().unwrap()),
            )
        })
        .collect();
    let visits: Vec<_> = data.episodes.iter().filter(|e| e.is_primary_consultation()).collect();
    let matched = visits
        .iter()
        .filter(|e| {
            let (pg, pr) = patients[e.patient_id.as_str()];
            let (dg, dr) = &doctors[e.doctor_id.as_str()];
            pg == *dg && pr == dr
        })
        .count();
    let rate = matched as f64 / visits.len() as f64;
    assert!(rate >= 0.9, "match rate {rate}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn clean_is_idempotent_and_counts_add_up(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let history = random_history(&mut rng, 6, 6, 5, 4);
        let log = clean(&records_of(&history)).unwrap();
        prop_assert_eq!(log.total_consultations(), history.len() as u64);
        let again = clean(&log.to_episodes()).unwrap();
        prop_assert_eq!(&again, &log);
        for (i, id) in log.patients.ids().iter().enumerate() {
            prop_assert_eq!(log.patients.index_of(id), Some(i));
        }
        let mut keys: Vec<_> = log.events.iter().map(|e| (e.patient, e.doctor, e.year)).collect();
        let n = keys.len();
        keys.dedup();
        prop_assert_eq!(keys.len(), n);
    }
}
