//! Use-case routing: how the desk population splits across UC1-UC5, and a
//! what-if recommendation for a brand-new patient described by demographics.

use std::collections::BTreeMap;

use carematch::ingest::synth::{synth_generate, SynthConfig};
use carematch::ingest::{build_features, clean, FeatureConfig};
use carematch::model::{fit, Hyperparams};
use carematch::router::{PatientQuery, Router};
use carematch::trust::trust_matrix;

fn main() -> carematch::Result<()> {
    let data = synth_generate(&SynthConfig::desk(), 42)?;
    // history up to 2015; classify everyone as of 2016
    let train: Vec<_> = data.episodes.iter().filter(|r| r.year <= 2015).cloned().collect();
    let log = clean(&data.episodes)?.filter_years(|y| y <= 2015);
    let features = build_features(&train, &data.profiles, &log, &FeatureConfig::full())?;

    let router = Router::default();
    let mut counts = BTreeMap::new();
    for p in 0..log.n_patients() {
        *counts.entry(router.classify(p, &log, &features, 2016)?).or_insert(0) += 1;
    }
    for (uc, n) in &counts {
        println!("{uc}: {n} patients");
    }

    let hp = Hyperparams::desk();
    let model = fit(&log, &features, &hp, Some(&trust_matrix(&log, 2015, hp.lambda)?))?;
    let profile = features.patient_features_from_literal("gender=F,age_group=elderly,region=R1")?;
    let rec = router.recommend(&PatientQuery::Profile(profile), &model, &log, &features, 5, None)?;
    println!("new elderly woman in R1 ({}):", rec.use_case);
    for d in &rec.doctors {
        println!("  {} {:.4}", log.doctors.id(d.doctor), d.score);
    }
    Ok(())
}
