//! Trust of one patient in their doctors as the reference year moves.

use carematch::ingest::{clean, EpisodeKind, EpisodeRecord, Specialty};
use carematch::trust::{trust_matrix, trust_matrix_with, Normalization};

fn visit(doctor: &str, year: i32) -> EpisodeRecord {
    EpisodeRecord {
        patient_id: "P1".into(),
        doctor_id: doctor.into(),
        year,
        hospital_id: "H1".into(),
        kind: EpisodeKind::Consultation,
        specialty: Specialty::PrimaryCare,
        mdc: None,
        source_line: None,
    }
}

fn main() -> carematch::Result<()> {
    // three visits to A and one to B in 2014, then only B
    let mut records = vec![visit("A", 2014), visit("A", 2014), visit("A", 2014), visit("B", 2014)];
    records.extend([visit("B", 2015), visit("B", 2016), visit("B", 2016)]);
    let log = clean(&records)?;
    println!("year  lambda  T(A)      T(B)");
    for year in 2015..=2017 {
        for lambda in [0.0, 0.3, 1.0] {
            let t = trust_matrix(&log, year, lambda)?;
            println!("{year}  {lambda:<6}  {:<8.4}  {:<8.4}", t.get(0, 0), t.get(0, 1));
        }
    }
    let c = trust_matrix_with(&log, 2016, 0.3, Normalization::Cumulative)?;
    println!("cumulative 2016: T(A) {:.4}  T(B) {:.4}", c.get(0, 0), c.get(0, 1));
    Ok(())
}
