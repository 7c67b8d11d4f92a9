use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{EpisodeKind, EpisodeRecord, Specialty, Year};
use crate::config::KeyValues;
use crate::error::{Error, Result};

/// Bijection between opaque ids and dense indices. Ids are kept sorted so
/// the assignment does not depend on input order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = ids.into_iter().map(Into::into).collect();
        let ids: Vec<String> = sorted.into_iter().collect();
        let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        IdMap { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Aggregated primary-care consultations of one (patient, doctor, year).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub patient: usize,
    pub doctor: usize,
    pub year: Year,
    pub hospital: usize,
    pub count: u32,
}

/// Aggregated non-primary-care episodes (specialist consultations,
/// inpatient stays) of one (patient, year, hospital).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Activity {
    pub patient: usize,
    pub year: Year,
    pub hospital: usize,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionLog {
    /// Sorted by (patient, doctor, year).
    pub events: Vec<Event>,
    /// Sorted by (patient, year, hospital).
    pub activity: Vec<Activity>,
    pub patients: IdMap,
    pub doctors: IdMap,
    pub hospitals: IdMap,
}

/// Drops canceled and emergency episodes, keeps primary-care consultations
/// as events and everything else as activity, and aggregates per
/// (patient, doctor, year).
pub fn clean(records: &[EpisodeRecord]) -> Result<InteractionLog> {
    let kept: Vec<&EpisodeRecord> = records
        .iter()
        .filter(|r| !matches!(r.kind, EpisodeKind::Canceled | EpisodeKind::Emergency))
        .collect();
    let primary: Vec<&EpisodeRecord> = kept.iter().copied().filter(|r| r.is_primary_consultation()).collect();
    if primary.is_empty() {
        return Err(Error::EmptyLog);
    }

    let patients = IdMap::from_ids(kept.iter().map(|r| r.patient_id.as_str()));
    let doctors = IdMap::from_ids(primary.iter().map(|r| r.doctor_id.as_str()));
    let hospitals = IdMap::from_ids(kept.iter().map(|r| r.hospital_id.as_str()));

    // (patient, doctor, year) -> hospital -> count
    let mut grouped: BTreeMap<(usize, usize, Year), BTreeMap<usize, u32>> = BTreeMap::new();
    let mut activity: BTreeMap<(usize, Year, usize), u32> = BTreeMap::new();
    for r in &kept {
        let p = patients.index_of(&r.patient_id).expect("indexed");
        let h = hospitals.index_of(&r.hospital_id).expect("indexed");
        if r.is_primary_consultation() {
            let d = doctors.index_of(&r.doctor_id).expect("indexed");
            *grouped.entry((p, d, r.year)).or_default().entry(h).or_default() += 1;
        } else {
            *activity.entry((p, r.year, h)).or_default() += 1;
        }
    }

    let events = grouped
        .into_iter()
        .map(|((patient, doctor, year), by_hospital)| {
            let count = by_hospital.values().sum();
            // most frequent hospital, lowest index on ties
            let hospital = by_hospital
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(h, _)| *h)
                .expect("nonempty");
            Event {
                patient,
                doctor,
                year,
                hospital,
                count,
            }
        })
        .collect();
    let activity = activity
        .into_iter()
        .map(|((patient, year, hospital), count)| Activity {
            patient,
            year,
            hospital,
            count,
        })
        .collect();

    Ok(InteractionLog {
        events,
        activity,
        patients,
        doctors,
        hospitals,
    })
}

pub const LOG_FORMAT: &str = "carematch-log v1";

impl InteractionLog {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn n_doctors(&self) -> usize {
        self.doctors.len()
    }

    /// Inclusive year span of the primary-care events.
    pub fn year_span(&self) -> Option<(Year, Year)> {
        let min = self.events.iter().map(|e| e.year).min()?;
        let max = self.events.iter().map(|e| e.year).max()?;
        Some((min, max))
    }

    pub fn total_consultations(&self) -> u64 {
        self.events.iter().map(|e| e.count as u64).sum()
    }

    /// Same index maps, events and activity restricted to `keep(year)`.
    pub fn filter_years(&self, keep: impl Fn(Year) -> bool) -> InteractionLog {
        InteractionLog {
            events: self.events.iter().copied().filter(|e| keep(e.year)).collect(),
            activity: self.activity.iter().copied().filter(|a| keep(a.year)).collect(),
            patients: self.patients.clone(),
            doctors: self.doctors.clone(),
            hospitals: self.hospitals.clone(),
        }
    }

    /// Distinct (patient, doctor) pairs, sorted.
    pub fn positive_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self.events.iter().map(|e| (e.patient, e.doctor)).collect();
        pairs.dedup();
        pairs
    }

    /// Sorted doctor sets per patient.
    pub fn doctors_by_patient(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_patients()];
        for (p, d) in self.positive_pairs() {
            out[p].push(d);
        }
        out
    }

    /// Events of one patient, using the (patient, ...) sort order.
    pub fn patient_events(&self, patient: usize) -> &[Event] {
        let start = self.events.partition_point(|e| e.patient < patient);
        let end = self.events.partition_point(|e| e.patient <= patient);
        &self.events[start..end]
    }

    pub fn patient_activity(&self, patient: usize) -> &[Activity] {
        let start = self.activity.partition_point(|a| a.patient < patient);
        let end = self.activity.partition_point(|a| a.patient <= patient);
        &self.activity[start..end]
    }

    /// Hospitals in which each doctor has consulted.
    pub fn doctor_hospitals(&self) -> Vec<BTreeSet<usize>> {
        let mut out = vec![BTreeSet::new(); self.n_doctors()];
        for e in &self.events {
            out[e.doctor].insert(e.hospital);
        }
        out
    }

    /// Expands the log back into episode records, one per counted episode.
    /// Activity is emitted as non-primary-care consultations attributed to a
    /// placeholder doctor id.
    pub fn to_episodes(&self) -> Vec<EpisodeRecord> {
        let mut out = Vec::new();
        for e in &self.events {
            for _ in 0..e.count {
                out.push(EpisodeRecord {
                    patient_id: self.patients.id(e.patient).to_string(),
                    doctor_id: self.doctors.id(e.doctor).to_string(),
                    year: e.year,
                    hospital_id: self.hospitals.id(e.hospital).to_string(),
                    kind: EpisodeKind::Consultation,
                    specialty: Specialty::PrimaryCare,
                    mdc: None,
                    source_line: None,
                });
            }
        }
        for a in &self.activity {
            for _ in 0..a.count {
                out.push(EpisodeRecord {
                    patient_id: self.patients.id(a.patient).to_string(),
                    doctor_id: "-".to_string(),
                    year: a.year,
                    hospital_id: self.hospitals.id(a.hospital).to_string(),
                    kind: EpisodeKind::Consultation,
                    specialty: Specialty::Other,
                    mdc: None,
                    source_line: None,
                });
            }
        }
        out
    }

    /// Line-oriented text form: one `event` or `activity` line per entry.
    pub fn to_text(&self, provenance: &KeyValues) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {LOG_FORMAT}");
        provenance.write_provenance(&mut out);
        let _ = writeln!(out, "# event\tpatient_id\tdoctor_id\tyear\thospital_id\tcount");
        let _ = writeln!(out, "# activity\tpatient_id\tyear\thospital_id\tcount");
        for e in &self.events {
            let _ = writeln!(
                out,
                "event\t{}\t{}\t{}\t{}\t{}",
                self.patients.id(e.patient),
                self.doctors.id(e.doctor),
                e.year,
                self.hospitals.id(e.hospital),
                e.count
            );
        }
        for a in &self.activity {
            let _ = writeln!(
                out,
                "activity\t{}\t{}\t{}\t{}",
                self.patients.id(a.patient),
                a.year,
                self.hospitals.id(a.hospital),
                a.count
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<InteractionLog> {
        let mut lines = text.lines();
        match lines.next() {
            Some(first) if first.trim_start_matches("# ") == LOG_FORMAT => {}
            _ => return Err(Error::Format(format!("expected `# {LOG_FORMAT}` header"))),
        }
        struct RawEvent<'a>(&'a str, &'a str, Year, &'a str, u32);
        struct RawActivity<'a>(&'a str, Year, &'a str, u32);
        let mut events = Vec::new();
        let mut activity = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("log line {}: malformed `{line}`", n + 1));
            let f: Vec<&str> = line.split('\t').collect();
            match f.as_slice() {
                ["event", p, d, y, h, c] => events.push(RawEvent(
                    p,
                    d,
                    y.parse().map_err(|_| bad())?,
                    h,
                    c.parse().map_err(|_| bad())?,
                )),
                ["activity", p, y, h, c] => activity.push(RawActivity(
                    p,
                    y.parse().map_err(|_| bad())?,
                    h,
                    c.parse().map_err(|_| bad())?,
                )),
                _ => return Err(bad()),
            }
        }
        let patients = IdMap::from_ids(events.iter().map(|e| e.0).chain(activity.iter().map(|a| a.0)));
        let doctors = IdMap::from_ids(events.iter().map(|e| e.1));
        let hospitals = IdMap::from_ids(events.iter().map(|e| e.3).chain(activity.iter().map(|a| a.2)));
        let mut events: Vec<Event> = events
            .iter()
            .map(|e| Event {
                patient: patients.index_of(e.0).unwrap(),
                doctor: doctors.index_of(e.1).unwrap(),
                year: e.2,
                hospital: hospitals.index_of(e.3).unwrap(),
                count: e.4,
            })
            .collect();
        let mut activity: Vec<Activity> = activity
            .iter()
            .map(|a| Activity {
                patient: patients.index_of(a.0).unwrap(),
                year: a.1,
                hospital: hospitals.index_of(a.2).unwrap(),
                count: a.3,
            })
            .collect();
        events.sort();
        activity.sort();
        if events.is_empty() {
            return Err(Error::EmptyLog);
        }
        Ok(InteractionLog {
            events,
            activity,
            patients,
            doctors,
            hospitals,
        })
    }

    pub fn save(&self, path: &Path, provenance: &KeyValues) -> Result<()> {
        super::load::write_text(path, &self.to_text(provenance))
    }

    pub fn load(path: &Path) -> Result<InteractionLog> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(p: &str, d: &str, year: Year, kind: EpisodeKind, spec: Specialty) -> EpisodeRecord {
        EpisodeRecord {
            patient_id: p.into(),
            doctor_id: d.into(),
            year,
            hospital_id: "h1".into(),
            kind,
            specialty: spec,
            mdc: None,
            source_line: None,
        }
    }

    use EpisodeKind::*;
    use Specialty::*;

    #[test]
    fn filters_and_aggregates() {
        let recs = vec![
            rec("p", "a", 2014, Canceled, PrimaryCare),
            rec("p", "a", 2014, Canceled, PrimaryCare),
            rec("p", "b", 2014, Emergency, PrimaryCare),
            rec("p", "a", 2014, Consultation, PrimaryCare),
            rec("p", "a", 2014, Consultation, PrimaryCare),
        ];
        let log = clean(&recs).unwrap();
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.events[0].count, 2);
        assert_eq!(log.n_doctors(), 1);
    }

    #[test]
    fn all_emergency_is_empty() {
        let recs = vec![rec("p", "a", 2014, Emergency, PrimaryCare)];
        assert!(matches!(clean(&recs), Err(Error::EmptyLog)));
    }

    #[test]
    fn no_cross_doctor_merge() {
        let recs = vec![
            rec("p", "a", 2014, Consultation, PrimaryCare),
            rec("p", "b", 2014, Consultation, PrimaryCare),
        ];
        let log = clean(&recs).unwrap();
        assert_eq!(log.events.len(), 2);
        assert!(log.events.iter().all(|e| e.count == 1));
    }

    #[test]
    fn specialist_episodes_become_activity() {
        let recs = vec![
            rec("p", "a", 2014, Consultation, PrimaryCare),
            rec("q", "s", 2013, Consultation, Other),
            rec("q", "s", 2013, Inpatient, Other),
        ];
        let log = clean(&recs).unwrap();
        assert_eq!(log.n_patients(), 2);
        assert_eq!(log.n_doctors(), 1);
        let q = log.patients.index_of("q").unwrap();
        assert!(log.patient_events(q).is_empty());
        assert_eq!(log.patient_activity(q)[0].count, 2);
    }

    #[test]
    fn text_round_trip() {
        let recs = vec![
            rec("p2", "a", 2014, Consultation, PrimaryCare),
            rec("p1", "b", 2015, Consultation, PrimaryCare),
            rec("p1", "b", 2015, Consultation, PrimaryCare),
            rec("p3", "s", 2013, Inpatient, Other),
        ];
        let log = clean(&recs).unwrap();
        let text = log.to_text(&KeyValues::new());
        assert_eq!(InteractionLog::from_text(&text).unwrap(), log);
    }
}
