use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{doctor_coefficients, HybridModel, Hyperparams, Representation, TrustMode};
use crate::error::{Error, Result};
use crate::ingest::{FeatureAssignments, InteractionLog, Side};
use crate::trust::TrustWeights;

const ADAGRAD_EPS: f64 = 1e-10;

/// `sum_{r=1..k} 1/r`, the WARP rank weight.
pub fn harmonic(k: usize) -> f64 {
    (1..=k).map(|r| 1.0 / r as f64).sum()
}

/// Positive pairs of a training window with their trust weights.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub positives: Vec<(usize, usize)>,
    /// Trust per positive (1.0 when no trust is supplied).
    pub weights: Vec<f64>,
    /// Sorted positive doctors per patient.
    pub by_patient: Vec<Vec<usize>>,
    pub n_doctors: usize,
}

impl TrainingSet {
    pub fn new(log: &InteractionLog, trust: Option<&TrustWeights>) -> Result<Self> {
        let positives = log.positive_pairs();
        let weights = match trust {
            None => vec![1.0; positives.len()],
            Some(t) => positives
                .iter()
                .map(|&(p, d)| {
                    let w = t.get(p, d);
                    if w > 0.0 {
                        Ok(w)
                    } else {
                        Err(Error::Parameter(format!(
                            "trust weights not aligned with log: no entry for ({}, {})",
                            log.patients.id(p),
                            log.doctors.id(d)
                        )))
                    }
                })
                .collect::<Result<_>>()?,
        };
        Ok(TrainingSet {
            positives,
            weights,
            by_patient: log.doctors_by_patient(),
            n_doctors: log.n_doctors(),
        })
    }

    /// One epoch's visiting order as (positive index, gradient factor).
    pub fn epoch_order(&self, mode: TrustMode, rng: &mut impl Rng) -> Result<Vec<(usize, f64)>> {
        let n = self.positives.len();
        match mode {
            TrustMode::Off => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(rng);
                Ok(order.into_iter().map(|i| (i, 1.0)).collect())
            }
            TrustMode::SampleWeight => {
                if n == 0 {
                    return Ok(Vec::new());
                }
                let dist = WeightedIndex::new(&self.weights)
                    .map_err(|e| Error::Parameter(format!("trust weights unusable for sampling: {e}")))?;
                Ok((0..n).map(|_| (dist.sample(rng), 1.0)).collect())
            }
            TrustMode::GradientWeight => {
                let mean = self.weights.iter().sum::<f64>() / n.max(1) as f64;
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(rng);
                Ok(order.into_iter().map(|i| (i, self.weights[i] / mean)).collect())
            }
        }
    }

    /// The `k`-th doctor (0-based) that `patient` has not interacted with.
    fn kth_negative(&self, patient: usize, k: usize) -> usize {
        let mut d = k;
        for &p in &self.by_patient[patient] {
            if p <= d {
                d += 1;
            } else {
                break;
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochStats {
    /// Mean unscaled hinge loss over processed positives (0 where no
    /// violation was found).
    pub mean_loss: f64,
    pub mean_sampled: f64,
    pub violations: usize,
    /// Positives skipped because the patient has no negative doctor.
    pub skipped: usize,
}

struct Scratch {
    p: Representation,
    qj: Representation,
    qd: Representation,
    diff: Vec<f64>,
}

impl HybridModel {
    fn adagrad_step(value: &mut f64, accum: &mut f64, grad: f64, lr: f64) {
        *accum += grad * grad;
        *value -= lr * grad / (accum.sqrt() + ADAGRAD_EPS);
    }

    /// Applies one rank-scaled Adagrad update for a violating triplet.
    fn apply_update(
        &mut self,
        patient: &[usize],
        positive: &[usize],
        negative: &[usize],
        scale: f64,
        s: &mut Scratch,
    ) -> std::result::Result<(), String> {
        let l = self.dim();
        let lr = self.hyperparams.learning_rate;
        let bias_on = self.hyperparams.bias_enabled;
        for (d, (a, b)) in s.diff.iter_mut().zip(s.qd.vector.iter().zip(&s.qj.vector)) {
            *d = scale * (a - b);
        }
        for &u in patient {
            let params = &mut self.patient;
            for k in 0..l {
                let ix = u * l + k;
                Self::adagrad_step(
                    &mut params.embeddings[ix],
                    &mut params.embedding_accum[ix],
                    s.diff[k],
                    lr,
                );
                if !params.embeddings[ix].is_finite() {
                    return Err(format!("patient feature `{}`", params.names[u]));
                }
            }
        }
        for (u, c) in doctor_coefficients(positive, negative) {
            let params = &mut self.doctor;
            for k in 0..l {
                let ix = u * l + k;
                let g = scale * c * s.p.vector[k];
                Self::adagrad_step(&mut params.embeddings[ix], &mut params.embedding_accum[ix], g, lr);
                if !params.embeddings[ix].is_finite() {
                    return Err(format!("doctor feature `{}`", params.names[u]));
                }
            }
            if bias_on {
                Self::adagrad_step(&mut params.biases[u], &mut params.bias_accum[u], scale * c, lr);
                if !params.biases[u].is_finite() {
                    return Err(format!("doctor bias `{}`", params.names[u]));
                }
            }
        }
        Ok(())
    }

    /// One WARP pass over the positives of `data`.
    pub fn warp_epoch(
        &mut self,
        data: &TrainingSet,
        features: &FeatureAssignments,
        rng: &mut impl Rng,
        epoch: usize,
    ) -> Result<EpochStats> {
        let order = self.epoch_order_for(data, rng)?;
        let l = self.dim();
        let blank = || Representation {
            vector: vec![0.0; l],
            bias: 0.0,
        };
        let mut s = Scratch {
            p: blank(),
            qj: blank(),
            qd: blank(),
            diff: vec![0.0; l],
        };
        let margin = self.hyperparams.margin;
        let max_sampled = self.hyperparams.max_sampled;
        let mut stats = EpochStats::default();
        let mut loss_sum = 0.0;
        let mut sampled = 0usize;
        let mut processed = 0usize;

        for (step, &(ix, factor)) in order.iter().enumerate() {
            let (patient, doctor) = data.positives[ix];
            let n_neg = data.n_doctors - data.by_patient[patient].len();
            if n_neg == 0 {
                stats.skipped += 1;
                continue;
            }
            processed += 1;
            let pf = &features.patient_features[patient];
            let jf = &features.doctor_features[doctor];
            self.represent_into(Side::Patient, pf, &mut s.p)?;
            self.represent_into(Side::Doctor, jf, &mut s.qj)?;
            let raw_j = Self::raw_score(&s.p, &s.qj);
            for attempt in 1..=max_sampled {
                let negative = data.kth_negative(patient, rng.gen_range(0..n_neg));
                let df = &features.doctor_features[negative];
                self.represent_into(Side::Doctor, df, &mut s.qd)?;
                let raw_d = Self::raw_score(&s.p, &s.qd);
                sampled += 1;
                if raw_d > raw_j - margin {
                    let loss = margin - raw_j + raw_d;
                    if !loss.is_finite() {
                        return Err(Error::NonFinite {
                            epoch,
                            step,
                            detail: format!("loss {loss}"),
                        });
                    }
                    let rank = ((n_neg - 1) / attempt).max(1);
                    let scale = harmonic(rank) * factor;
                    self.apply_update(pf, jf, df, scale, &mut s)
                        .map_err(|detail| Error::NonFinite { epoch, step, detail })?;
                    loss_sum += loss;
                    stats.violations += 1;
                    break;
                }
            }
        }
        if processed > 0 {
            stats.mean_loss = loss_sum / processed as f64;
            stats.mean_sampled = sampled as f64 / processed as f64;
        }
        Ok(stats)
    }

    fn epoch_order_for(&self, data: &TrainingSet, rng: &mut impl Rng) -> Result<Vec<(usize, f64)>> {
        data.epoch_order(self.hyperparams.trust_mode, rng)
    }
}

/// Trains a model and returns it with per-epoch statistics.
pub fn fit_with_stats(
    log: &InteractionLog,
    features: &FeatureAssignments,
    hyperparams: &Hyperparams,
    trust: Option<&TrustWeights>,
) -> Result<(HybridModel, Vec<EpochStats>)> {
    hyperparams.validate()?;
    if features.n_patients() != log.n_patients() || features.n_doctors() != log.n_doctors() {
        return Err(Error::Feature(format!(
            "vocabulary mismatch: log has {} patients / {} doctors, features cover {} / {}",
            log.n_patients(),
            log.n_doctors(),
            features.n_patients(),
            features.n_doctors()
        )));
    }
    let trust =
        match hyperparams.trust_mode {
            TrustMode::Off => None,
            _ => Some(trust.ok_or_else(|| {
                Error::Parameter(format!("trust mode {} needs trust weights", hyperparams.trust_mode))
            })?),
        };
    let data = TrainingSet::new(log, trust)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.rng_seed);
    let mut model = HybridModel::new(features, hyperparams.clone(), &mut rng)?;
    let mut history = Vec::with_capacity(hyperparams.epochs);
    for epoch in 0..hyperparams.epochs {
        history.push(model.warp_epoch(&data, features, &mut rng, epoch)?);
    }
    Ok((model, history))
}

/// Trains a model; deterministic given `hyperparams.rng_seed`.
pub fn fit(
    log: &InteractionLog,
    features: &FeatureAssignments,
    hyperparams: &Hyperparams,
    trust: Option<&TrustWeights>,
) -> Result<HybridModel> {
    fit_with_stats(log, features, hyperparams, trust).map(|(m, _)| m)
}
