use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use super::compare::Variant;
use crate::config::KeyValues;
use crate::ingest::Year;

pub const REPORT_FORMAT: &str = "carematch-report v1";

/// Subpopulation of the evaluated patients of a fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cohort {
    All,
    /// Patients with training history whose test-year doctors are all new to them.
    Switchers,
    /// Patients carrying a diagnostic-category feature.
    Mdc,
}

impl Cohort {
    pub const ALL: [Cohort; 3] = [Cohort::All, Cohort::Switchers, Cohort::Mdc];

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::All => "all",
            Cohort::Switchers => "switchers",
            Cohort::Mdc => "mdc",
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub variant: Variant,
    pub cohort: Cohort,
    /// Test year of the fold.
    pub fold: Year,
    pub n: usize,
    pub hit_rate: f64,
    pub precision: f64,
    pub n_patients: usize,
}

/// Fold-mean of one (variant, cohort, n) row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCell {
    pub hit_rate: f64,
    pub precision: f64,
    pub n_patients: usize,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub provenance: KeyValues,
    pub cells: Vec<Cell>,
}

impl EvalReport {
    pub fn cell(&self, variant: Variant, cohort: Cohort, fold: Year, n: usize) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.cohort == cohort && c.fold == fold && c.n == n)
    }

    /// Unweighted mean over the folds in which the cohort is nonempty.
    pub fn mean(&self, variant: Variant, cohort: Cohort, n: usize) -> Option<MeanCell> {
        let rows: Vec<&Cell> = self
            .cells
            .iter()
            .filter(|c| c.variant == variant && c.cohort == cohort && c.n == n)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let k = rows.len() as f64;
        Some(MeanCell {
            hit_rate: rows.iter().map(|c| c.hit_rate).sum::<f64>() / k,
            precision: rows.iter().map(|c| c.precision).sum::<f64>() / k,
            n_patients: rows.iter().map(|c| c.n_patients).sum(),
            folds: rows.len(),
        })
    }

    pub fn variants(&self) -> Vec<Variant> {
        let set: BTreeSet<Variant> = self.cells.iter().map(|c| c.variant).collect();
        set.into_iter().collect()
    }

    pub fn folds(&self) -> Vec<Year> {
        let set: BTreeSet<Year> = self.cells.iter().map(|c| c.fold).collect();
        set.into_iter().collect()
    }

    pub fn n_values(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.cells.iter().map(|c| c.n).collect();
        set.into_iter().collect()
    }

    fn header(&self) -> String {
        let mut out = format!("# {REPORT_FORMAT}\n");
        self.provenance.write_provenance(&mut out);
        out
    }

    /// Sorted rows per (cohort, variant, n): every fold, then the mean.
    fn rows(&self) -> Vec<(Cohort, Variant, String, usize, f64, f64, usize)> {
        let mut out = Vec::new();
        for cohort in Cohort::ALL {
            for variant in self.variants() {
                for n in self.n_values() {
                    for fold in self.folds() {
                        if let Some(c) = self.cell(variant, cohort, fold, n) {
                            out.push((
                                cohort,
                                variant,
                                fold.to_string(),
                                n,
                                c.hit_rate,
                                c.precision,
                                c.n_patients,
                            ));
                        }
                    }
                    if let Some(m) = self.mean(variant, cohort, n) {
                        out.push((cohort, variant, "mean".into(), n, m.hit_rate, m.precision, m.n_patients));
                    }
                }
            }
        }
        out
    }

    /// Aligned human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = self.header();
        let _ = writeln!(
            out,
            "{:<10} {:<13} {:>5} {:>3} {:>8} {:>8} {:>8}",
            "cohort", "variant", "fold", "n", "HR@n", "p@n", "patients"
        );
        for (cohort, variant, fold, n, hr, p, np) in self.rows() {
            let _ = writeln!(
                out,
                "{:<10} {:<13} {:>5} {:>3} {:>8.4} {:>8.4} {:>8}",
                cohort.as_str(),
                variant.as_str(),
                fold,
                n,
                hr,
                p,
                np
            );
        }
        out
    }

    /// One `variant<TAB>fold<TAB>n<TAB>metric<TAB>value` line per cell
    /// value. Metrics outside the `all` cohort carry a `<cohort>.` prefix.
    pub fn to_records(&self) -> String {
        let mut out = self.header();
        out.push_str("variant\tfold\tn\tmetric\tvalue\n");
        for (cohort, variant, fold, n, hr, p, np) in self.rows() {
            let prefix = match cohort {
                Cohort::All => String::new(),
                other => format!("{other}."),
            };
            let v = variant.as_str();
            let _ = writeln!(out, "{v}\t{fold}\t{n}\t{prefix}hit_rate\t{hr}");
            let _ = writeln!(out, "{v}\t{fold}\t{n}\t{prefix}precision\t{p}");
            let _ = writeln!(out, "{v}\t{fold}\t{n}\t{prefix}n_patients\t{np}");
        }
        out
    }
}
