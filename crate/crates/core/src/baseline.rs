//! Ordered-heuristic recommender: most visited doctors first, recency and
//! then a seeded shuffle break ties, and the most popular doctors fill the
//! remaining slots.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ingest::{InteractionLog, Year};

/// Doctors ordered by distinct patients in the training window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopularityTable {
    /// Distinct patients per doctor index.
    pub counts: Vec<usize>,
    /// All doctors, most popular first, ties by ascending index.
    pub order: Vec<usize>,
}

impl PopularityTable {
    pub fn from_log(log: &InteractionLog) -> Self {
        let mut counts = vec![0usize; log.n_doctors()];
        for (_, d) in log.positive_pairs() {
            counts[d] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: Vec<usize>) -> Self {
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        PopularityTable { counts, order }
    }

    pub fn n_doctors(&self) -> usize {
        self.counts.len()
    }
}

/// A patient's consultations with one doctor in the training window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VisitSummary {
    pub doctor: usize,
    pub visits: u32,
    pub last_year: Year,
}

/// Per-doctor visit counts and most recent year for one patient.
pub fn patient_history(log: &InteractionLog, patient: usize) -> Vec<VisitSummary> {
    let mut by_doctor: BTreeMap<usize, VisitSummary> = BTreeMap::new();
    for e in log.patient_events(patient) {
        let s = by_doctor.entry(e.doctor).or_insert(VisitSummary {
            doctor: e.doctor,
            visits: 0,
            last_year: e.year,
        });
        s.visits += e.count;
        s.last_year = s.last_year.max(e.year);
    }
    by_doctor.into_values().collect()
}

pub fn heuristic_recommend(
    history: &[VisitSummary],
    popularity: &PopularityTable,
    n: usize,
    rng_seed: u64,
) -> Vec<usize> {
    // merge duplicate doctors so the ordering is well defined
    let mut merged: BTreeMap<usize, VisitSummary> = BTreeMap::new();
    for h in history {
        merged
            .entry(h.doctor)
            .and_modify(|s| {
                s.visits += h.visits;
                s.last_year = s.last_year.max(h.last_year);
            })
            .or_insert(*h);
    }
    let mut visited: Vec<VisitSummary> = merged.into_values().collect();
    visited.sort_by(|a, b| b.visits.cmp(&a.visits).then(b.last_year.cmp(&a.last_year)));

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(n);
    let mut seen = BTreeSet::new();
    let mut start = 0;
    while start < visited.len() && out.len() < n {
        let key = (visited[start].visits, visited[start].last_year);
        let end = start
            + visited[start..]
                .iter()
                .take_while(|v| (v.visits, v.last_year) == key)
                .count();
        let mut group: Vec<usize> = visited[start..end].iter().map(|v| v.doctor).collect();
        group.shuffle(&mut rng);
        for d in group {
            if out.len() < n && seen.insert(d) {
                out.push(d);
            }
        }
        start = end;
    }
    for &d in &popularity.order {
        if out.len() >= n {
            break;
        }
        if seen.insert(d) {
            out.push(d);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop(n: usize) -> PopularityTable {
        // doctor n-1 most popular
        PopularityTable::from_counts((0..n).collect())
    }

    fn v(doctor: usize, visits: u32, last_year: Year) -> VisitSummary {
        VisitSummary {
            doctor,
            visits,
            last_year,
        }
    }

    #[test]
    fn frequency_before_recency() {
        let h = [v(2, 1, 2016), v(1, 2, 2015)];
        assert_eq!(heuristic_recommend(&h, &pop(5), 2, 0), vec![1, 2]);
    }

    #[test]
    fn empty_history_is_popularity() {
        assert_eq!(heuristic_recommend(&[], &pop(5), 3, 0), vec![4, 3, 2]);
    }

    #[test]
    fn full_ties_use_the_seed() {
        let h = [v(1, 2, 2015), v(2, 2, 2015)];
        let a = heuristic_recommend(&h, &pop(5), 2, 11);
        assert_eq!(a, heuristic_recommend(&h, &pop(5), 2, 11));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, vec![1, 2]);
        let outcomes: BTreeSet<Vec<usize>> = (0..32).map(|s| heuristic_recommend(&h, &pop(5), 2, s)).collect();
        assert_eq!(outcomes.len(), 2, "both orders reachable across seeds");
    }

    #[test]
    fn fills_without_duplicates() {
        let h = [v(4, 1, 2014)];
        assert_eq!(heuristic_recommend(&h, &pop(5), 3, 0), vec![4, 3, 2]);
        assert_eq!(heuristic_recommend(&[v(1, 1, 2014)], &pop(3), 10, 0), vec![1, 2, 0]);
    }

    #[test]
    fn popularity_ties_by_index() {
        let p = PopularityTable::from_counts(vec![2, 5, 5, 0]);
        assert_eq!(p.order, vec![1, 2, 0, 3]);
    }
}
