//! Loads a small episode file, cleans it and prints the feature sets.

use carematch::ingest::{build_features, clean, load_episodes, FeatureConfig, Profiles, Schema, Side};

const EPISODES: &str = "\
patient_id,doctor_id,year,hospital_id,episode_kind,specialty,mdc_code
P1,D1,2014,H1,consultation,primary_care,
P1,D1,2015-03-02T10:00:00,H1,consultation,primary_care,
P1,D9,2015,H2,emergency,other,
P2,D2,2015,H2,consultation,primary_care,
P2,S4,2016,H2,inpatient,other,5
P3,D1,2016,H1,canceled,primary_care,
";

fn main() -> carematch::Result<()> {
    let path = std::env::temp_dir().join("carematch_ingest_example.csv");
    std::fs::write(&path, EPISODES).expect("temp file");
    let records = load_episodes(&path, &Schema::default())?;
    let log = clean(&records)?;
    println!(
        "{} records -> {} patients, {} doctors, {} consultations",
        records.len(),
        log.n_patients(),
        log.n_doctors(),
        log.total_consultations()
    );
    let features = build_features(&records, &Profiles::default(), &log, &FeatureConfig::full())?;
    for (p, set) in features.patient_features.iter().enumerate() {
        let names: Vec<&str> = set.iter().map(|&f| features.vocab(Side::Patient).name(f)).collect();
        println!("{:<4} {}", log.patients.id(p), names.join(" "));
    }
    Ok(())
}
