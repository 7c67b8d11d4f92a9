use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::compare::{run_comparison, ComparisonConfig, Dataset, Variant};
use super::report::Cohort;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::model::Hyperparams;

/// Hyperparameter lattice: each key lists its candidate values.
///
/// ```text
/// learning_rate = 0.006, 0.012
/// no_components = 8, 16
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_config(&KeyValues::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config(&KeyValues::load(path)?)
    }

    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(|k| Hyperparams::KEYS.contains(&k))?;
        let axes = kv
            .iter()
            .map(|(k, v)| {
                let values: Vec<String> = v
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if values.is_empty() {
                    return Err(Error::Config(format!("grid key `{k}` has no values")));
                }
                Ok((k.to_string(), values))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Grid { axes })
    }

    /// Every lattice point, the last axis varying fastest.
    pub fn points(&self) -> Vec<KeyValues> {
        let mut out = vec![KeyValues::new()];
        for (key, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|base| {
                    values.iter().map(move |v| {
                        let mut kv = base.clone();
                        kv.set(key.clone(), v.clone());
                        kv
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub overrides: KeyValues,
    pub hyperparams: Hyperparams,
    /// Fold-mean HR@10 of the Hybrid-trust variant.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub points: Vec<GridPoint>,
    pub best: usize,
}

impl GridResult {
    pub fn best(&self) -> &GridPoint {
        &self.points[self.best]
    }

    pub fn to_table(&self) -> String {
        let keys: Vec<&str> = self
            .points
            .first()
            .map(|p| p.overrides.iter().map(|(k, _)| k).collect())
            .unwrap_or_default();
        let mut out = String::new();
        for k in &keys {
            let _ = write!(out, "{k}\t");
        }
        out.push_str("hr@10\tbest\n");
        for (i, p) in self.points.iter().enumerate() {
            for (_, v) in p.overrides.iter() {
                let _ = write!(out, "{v}\t");
            }
            let _ = writeln!(out, "{}\t{}", p.score, if i == self.best { "*" } else { "" });
        }
        out
    }
}

/// Scores every lattice point by the Hybrid-trust fold-mean HR@10 and
/// returns the argmax; ties go to fewer components, then the lower
/// learning rate, then lattice order.
pub fn grid_search(data: &Dataset, base: &Hyperparams, grid: &Grid, config: &ComparisonConfig) -> Result<GridResult> {
    let overrides = grid.points();
    if grid.axes.is_empty() || overrides.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let config = ComparisonConfig {
        variants: vec![Variant::HybridTrust],
        n_list: vec![10],
        ..config.clone()
    };
    let points = overrides
        .into_par_iter()
        .map(|kv| {
            let hp = Hyperparams::with_overrides(base.clone(), &kv)?;
            let report = run_comparison(data, &hp, &config)?;
            let score = report
                .mean(Variant::HybridTrust, Cohort::All, 10)
                .ok_or_else(|| Error::Eval("grid point produced no HR@10 cells".into()))?
                .hit_rate;
            Ok(GridPoint {
                overrides: kv,
                hyperparams: hp,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let b = &points[best];
        let better = p.score > b.score
            || (p.score == b.score
                && (p.hyperparams.no_components, p.hyperparams.learning_rate)
                    < (b.hyperparams.no_components, b.hyperparams.learning_rate));
        if better {
            best = i;
        }
    }
    Ok(GridResult { points, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_points() {
        let g = Grid::parse("learning_rate = 0.01, 0.02\nno_components = 4,8,16\n").unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].get("no_components"), Some("8"));
        assert!(Grid::parse("bogus = 1").is_err());
        assert!(Grid::parse("epochs = ,").is_err());
    }
}
