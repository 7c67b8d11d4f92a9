//! HR@n and p@n on hand-made recommendation lists.

use carematch::eval::{hit_rate_at_n, precision_at_n, Recommendations};
use carematch::ingest::{clean, EpisodeKind, EpisodeRecord, Specialty};

fn main() -> carematch::Result<()> {
    let visit = |p: &str, d: &str| EpisodeRecord {
        patient_id: p.into(),
        doctor_id: d.into(),
        year: 2017,
        hospital_id: "H1".into(),
        kind: EpisodeKind::Consultation,
        specialty: Specialty::PrimaryCare,
        mdc: None,
        source_line: None,
    };
    let test = clean(&[visit("P1", "A"), visit("P1", "B"), visit("P2", "C")])?;
    let d = |id| test.doctors.index_of(id).expect("doctor");
    let recs: Recommendations = [(0, vec![d("B"), d("C"), d("A")]), (1, vec![d("A"), d("B"), d("C")])].into();
    for n in 1..=3 {
        println!(
            "n={n}  HR {:.3}  p {:.3}",
            hit_rate_at_n(&recs, &test, n)?,
            precision_at_n(&recs, &test, n)?
        );
    }
    Ok(())
}
