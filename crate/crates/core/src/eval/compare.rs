use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::report::{Cell, Cohort, EvalReport};
use super::{hit_rate_at_n, precision_at_n, temporal_folds, test_doctors, Recommendations, TemporalFold};
use crate::baseline::{heuristic_recommend, patient_history, PopularityTable};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::ingest::synth::SynthDataset;
use crate::ingest::{
    build_features, clean, EpisodeRecord, FeatureAssignments, FeatureConfig, InteractionLog, Profiles,
};
use crate::model::{fit, Hyperparams, TrustMode};
use crate::router::Router;
use crate::trust::{trust_matrix_with, Normalization, TrustWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Baseline,
    Cf,
    CfTrust,
    Hybrid,
    HybridTrust,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::Cf,
        Variant::CfTrust,
        Variant::Hybrid,
        Variant::HybridTrust,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "Baseline",
            Variant::Cf => "CF",
            Variant::CfTrust => "CF-trust",
            Variant::Hybrid => "Hybrid",
            Variant::HybridTrust => "Hybrid-trust",
        }
    }

    fn identity_only(self) -> bool {
        matches!(self, Variant::Cf | Variant::CfTrust)
    }

    fn uses_trust(self) -> bool {
        matches!(self, Variant::CfTrust | Variant::HybridTrust)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown model variant `{}`", s.trim())))
    }
}

/// Raw records and profiles plus the cleaned log. Folds rebuild features
/// from the training-year records only.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<EpisodeRecord>,
    pub profiles: Profiles,
    pub log: InteractionLog,
}

impl Dataset {
    pub fn new(records: Vec<EpisodeRecord>, profiles: Profiles) -> Result<Self> {
        let log = clean(&records)?;
        Ok(Dataset { records, profiles, log })
    }

    pub fn from_synth(data: &SynthDataset) -> Result<Self> {
        Self::new(data.episodes.clone(), data.profiles.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfig {
    pub n_list: Vec<usize>,
    pub min_train_years: usize,
    /// Seeds the baseline's tie shuffles; the models use `rng_seed`.
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub normalization: Normalization,
    pub router: Router,
    /// Feature namespaces of the hybrid variants.
    pub features: FeatureConfig,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            n_list: vec![3, 5, 10],
            min_train_years: 2,
            seed: 42,
            variants: Variant::ALL.to_vec(),
            normalization: Normalization::PerYear,
            router: Router::default(),
            features: FeatureConfig::full(),
        }
    }
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{}`: {e}", s.trim())))
        })
        .collect()
}

impl ComparisonConfig {
    pub const KEYS: &'static [&'static str] = &[
        "eval.n_list",
        "eval.min_train_years",
        "eval.seed",
        "eval.variants",
        "trust.normalization",
        "router.min_episodes",
        "features.namespaces",
        "features.buckets",
    ];

    /// Reads the keys above from a resolved configuration.
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        let mut c = ComparisonConfig::default();
        if let Some(raw) = kv.get("eval.n_list") {
            c.n_list = parse_list("eval.n_list", raw)?;
        }
        c.min_train_years = kv.get_or("eval.min_train_years", c.min_train_years)?;
        c.seed = kv.get_or("eval.seed", c.seed)?;
        if let Some(raw) = kv.get("eval.variants") {
            c.variants = parse_list("eval.variants", raw)?;
        }
        c.normalization = kv.get_or("trust.normalization", c.normalization)?;
        c.router.min_episodes = kv.get_or("router.min_episodes", c.router.min_episodes)?;
        if let Some(raw) = kv.get("features.namespaces") {
            c.features = FeatureConfig::parse_namespaces(raw)?;
        }
        c.features.buckets = kv.get_or("features.buckets", c.features.buckets)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_config(&self) -> KeyValues {
        let join = |v: Vec<String>| v.join(",");
        let mut kv = KeyValues::new();
        kv.set("eval.n_list", join(self.n_list.iter().map(|n| n.to_string()).collect()));
        kv.set("eval.min_train_years", self.min_train_years.to_string());
        kv.set("eval.seed", self.seed.to_string());
        kv.set(
            "eval.variants",
            join(self.variants.iter().map(|v| v.to_string()).collect()),
        );
        kv.set("trust.normalization", self.normalization.to_string());
        kv.set("router.min_episodes", self.router.min_episodes.to_string());
        kv.set("features.namespaces", self.features.namespace_list());
        kv.set("features.buckets", self.features.buckets.to_string());
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::Config("eval.n_list needs positive values".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("eval.variants is empty".into()));
        }
        if self.features.buckets == 0 {
            return Err(Error::Config("features.buckets must be positive".into()));
        }
        Ok(())
    }
}

/// Per-fold inputs shared by every variant.
struct FoldContext {
    fold: TemporalFold,
    hybrid_features: Option<FeatureAssignments>,
    cf_features: Option<FeatureAssignments>,
    trust: Option<TrustWeights>,
    evaluated: Vec<usize>,
    cohorts: BTreeMap<Cohort, BTreeSet<usize>>,
}

fn prepare_fold(
    data: &Dataset,
    fold: TemporalFold,
    hyperparams: &Hyperparams,
    config: &ComparisonConfig,
) -> Result<FoldContext> {
    let last = fold.last_train_year();
    let train_records: Vec<EpisodeRecord> = data.records.iter().filter(|r| r.year <= last).cloned().collect();
    let wants = |f: fn(Variant) -> bool| config.variants.iter().any(|&v| v != Variant::Baseline && f(v));
    let hybrid_features = if wants(|v| !v.identity_only()) {
        Some(build_features(
            &train_records,
            &data.profiles,
            &data.log,
            &config.features,
        )?)
    } else {
        None
    };
    let cf_features = if wants(Variant::identity_only) {
        Some(build_features(
            &train_records,
            &data.profiles,
            &data.log,
            &FeatureConfig::identity_only(),
        )?)
    } else {
        None
    };
    let trust = if wants(Variant::uses_trust) {
        Some(trust_matrix_with(
            &fold.train_log,
            last,
            hyperparams.lambda,
            config.normalization,
        )?)
    } else {
        None
    };

    let truth = test_doctors(&fold.test_log);
    let evaluated: Vec<usize> = truth.keys().copied().collect();
    let history = fold.train_log.doctors_by_patient();
    let switchers = truth
        .iter()
        .filter(|(p, test)| !history[**p].is_empty() && history[**p].iter().all(|d| !test.contains(d)))
        .map(|(p, _)| *p)
        .collect();
    let with_mdc: BTreeSet<&str> = train_records
        .iter()
        .filter(|r| r.mdc.is_some())
        .map(|r| r.patient_id.as_str())
        .collect();
    let mdc = evaluated
        .iter()
        .copied()
        .filter(|&p| with_mdc.contains(data.log.patients.id(p)))
        .collect();
    let cohorts = BTreeMap::from([
        (Cohort::All, evaluated.iter().copied().collect()),
        (Cohort::Switchers, switchers),
        (Cohort::Mdc, mdc),
    ]);
    Ok(FoldContext {
        fold,
        hybrid_features,
        cf_features,
        trust,
        evaluated,
        cohorts,
    })
}

fn mix_seed(seed: u64, patient: usize) -> u64 {
    seed ^ (patient as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn baseline_lists(ctx: &FoldContext, config: &ComparisonConfig, depth: usize) -> Recommendations {
    let popularity = PopularityTable::from_log(&ctx.fold.train_log);
    ctx.evaluated
        .iter()
        .map(|&p| {
            let history = patient_history(&ctx.fold.train_log, p);
            (
                p,
                heuristic_recommend(&history, &popularity, depth, mix_seed(config.seed, p)),
            )
        })
        .collect()
}

fn model_lists(
    ctx: &FoldContext,
    variant: Variant,
    hyperparams: &Hyperparams,
    config: &ComparisonConfig,
    depth: usize,
) -> Result<Recommendations> {
    let features = if variant.identity_only() {
        ctx.cf_features.as_ref()
    } else {
        ctx.hybrid_features.as_ref()
    }
    .expect("features prepared for every requested variant");
    let mut hp = hyperparams.clone();
    if variant.uses_trust() {
        if hp.trust_mode == TrustMode::Off {
            return Err(Error::Parameter(format!(
                "{variant} needs trust_mode sample_weight or gradient_weight"
            )));
        }
    } else {
        hp.trust_mode = TrustMode::Off;
    }
    let model = fit(&ctx.fold.train_log, features, &hp, ctx.trust.as_ref())?;
    let candidates: Vec<usize> = (0..features.n_doctors()).collect();
    ctx.evaluated
        .iter()
        .map(|&p| {
            let own = &features.patient_features[p];
            // an identity-only model has nothing else to score a newcomer with
            let scoring = if variant.identity_only() {
                own.clone()
            } else {
                let uc = config
                    .router
                    .classify(p, &ctx.fold.train_log, features, ctx.fold.test_year)?;
                config.router.scoring_features(features, own, uc)?
            };
            let ranked = model.rank_doctors(features, &scoring, &candidates, depth)?;
            Ok((p, ranked.into_iter().map(|s| s.doctor).collect()))
        })
        .collect()
}

fn restrict(log: &InteractionLog, patients: &BTreeSet<usize>) -> InteractionLog {
    InteractionLog {
        events: log
            .events
            .iter()
            .copied()
            .filter(|e| patients.contains(&e.patient))
            .collect(),
        activity: Vec::new(),
        patients: log.patients.clone(),
        doctors: log.doctors.clone(),
        hospitals: log.hospitals.clone(),
    }
}

/// Trains and scores every requested variant on every fold. Folds and
/// variants run in parallel; the report is assembled in a fixed order.
pub fn run_comparison(data: &Dataset, hyperparams: &Hyperparams, config: &ComparisonConfig) -> Result<EvalReport> {
    config.validate()?;
    hyperparams.validate()?;
    let depth = *config.n_list.iter().max().expect("validated nonempty");
    let contexts = temporal_folds(&data.log, config.min_train_years)?
        .into_iter()
        .map(|fold| prepare_fold(data, fold, hyperparams, config))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, Variant)> = (0..contexts.len())
        .flat_map(|f| config.variants.iter().map(move |&v| (f, v)))
        .collect();
    let lists = jobs
        .par_iter()
        .map(|&(f, variant)| match variant {
            Variant::Baseline => Ok(baseline_lists(&contexts[f], config, depth)),
            _ => model_lists(&contexts[f], variant, hyperparams, config, depth),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = EvalReport {
        provenance: {
            let mut kv = hyperparams.to_config();
            kv.merge(&config.to_config());
            kv
        },
        cells: Vec::new(),
    };
    for (&(f, variant), recs) in jobs.iter().zip(&lists) {
        let ctx = &contexts[f];
        for (&cohort, members) in &ctx.cohorts {
            if members.is_empty() {
                continue;
            }
            let test = restrict(&ctx.fold.test_log, members);
            let sub: Recommendations = members.iter().map(|p| (*p, recs[p].clone())).collect();
            for &n in &config.n_list {
                let hit_rate = hit_rate_at_n(&sub, &test, n)?;
                let precision = precision_at_n(&sub, &test, n)?;
                if !(hit_rate.is_finite() && precision.is_finite()) {
                    return Err(Error::Eval(format!(
                        "non-finite metric for {variant}, fold {}, n={n}",
                        ctx.fold.test_year
                    )));
                }
                report.cells.push(Cell {
                    variant,
                    cohort,
                    fold: ctx.fold.test_year,
                    n,
                    hit_rate,
                    precision,
                    n_patients: members.len(),
                });
            }
        }
    }
    Ok(report)
}
