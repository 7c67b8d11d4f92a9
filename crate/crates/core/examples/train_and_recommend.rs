//! Trains on the desk benchmark and recommends doctors to existing patients,
//! with and without a hospital filter.

use carematch::ingest::synth::{synth_generate, SynthConfig};
use carematch::ingest::{build_features, clean, FeatureConfig};
use carematch::model::{fit_with_stats, Hyperparams};
use carematch::router::{HospitalFilter, PatientQuery, Router};
use carematch::trust::trust_matrix;

fn main() -> carematch::Result<()> {
    let data = synth_generate(&SynthConfig::desk(), 42)?;
    let log = clean(&data.episodes)?;
    let features = build_features(&data.episodes, &data.profiles, &log, &FeatureConfig::full())?;
    let hp = Hyperparams::desk();
    let (_, last) = log.year_span().expect("events");
    let trust = trust_matrix(&log, last, hp.lambda)?;
    let (model, stats) = fit_with_stats(&log, &features, &hp, Some(&trust))?;
    println!(
        "epoch 1 loss {:.4}, epoch {} loss {:.4}",
        stats[0].mean_loss,
        stats.len(),
        stats[stats.len() - 1].mean_loss
    );

    let router = Router::default();
    let filter = HospitalFilter::new(["H00"]);
    for patient in 0..3 {
        let query = PatientQuery::Known {
            patient,
            reference_year: last + 1,
        };
        let all = router.recommend(&query, &model, &log, &features, 5, None)?;
        let near = router.recommend(&query, &model, &log, &features, 3, Some(&filter))?;
        let ids = |r: &carematch::router::Recommendation| {
            r.doctors
                .iter()
                .map(|d| log.doctors.id(d.doctor))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!(
            "{} {}: {} | H00: {}",
            log.patients.id(patient),
            all.use_case,
            ids(&all),
            ids(&near)
        );
    }
    Ok(())
}
