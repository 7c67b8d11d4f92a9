//! Hybrid matrix factorization.
//!
//! A patient is represented by the sum of the latent vectors of its
//! features, and likewise a doctor; the affinity of a pair is the sigmoid of
//! the dot product of the two sums plus per-feature biases. With identity
//! features only this is classical matrix factorization.

mod artifact;
mod hyperparams;
mod train;

pub use artifact::MODEL_FORMAT;
pub use hyperparams::{Hyperparams, TrustMode};
pub use train::{fit, fit_with_stats, harmonic, EpochStats, TrainingSet};

use std::cmp::Ordering;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{FeatureAssignments, Side, Vocab};

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameters and Adagrad accumulators for one side's feature vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SideParams {
    pub(crate) names: Vec<String>,
    pub(crate) embeddings: Vec<f64>,
    pub(crate) biases: Vec<f64>,
    pub(crate) embedding_accum: Vec<f64>,
    pub(crate) bias_accum: Vec<f64>,
}

impl SideParams {
    fn new(vocab: &Vocab, dim: usize, half_width: f64, rng: &mut impl Rng) -> Self {
        let n = vocab.len();
        let embeddings = (0..n * dim).map(|_| rng.gen_range(-half_width..=half_width)).collect();
        SideParams {
            names: vocab.names().to_vec(),
            embeddings,
            biases: vec![0.0; n],
            embedding_accum: vec![0.0; n * dim],
            bias_accum: vec![0.0; n],
        }
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

/// A feature-sum representation: latent vector plus summed bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub vector: Vec<f64>,
    pub bias: f64,
}

/// A doctor with its predicted score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoctor {
    pub doctor: usize,
    /// `sigmoid(raw)`.
    pub score: f64,
    /// Dot product plus both biases.
    pub raw: f64,
}

/// Gradient of the unscaled hinge `max(0, margin - raw(i,j) + raw(i,d))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGradient {
    pub loss: f64,
    pub patient_embeddings: Vec<(usize, Vec<f64>)>,
    /// Net gradient per doctor-side feature; features shared by the positive
    /// and the negative doctor cancel.
    pub doctor_embeddings: Vec<(usize, Vec<f64>)>,
    pub patient_biases: Vec<(usize, f64)>,
    pub doctor_biases: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub hyperparams: Hyperparams,
    pub(crate) patient: SideParams,
    pub(crate) doctor: SideParams,
    fingerprint: String,
}

/// Short hash of both vocabularies; binds a model to its feature space.
pub fn vocab_fingerprint(patient_names: &[String], doctor_names: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(b"patient\n");
    for n in patient_names {
        h.update(n.as_bytes());
        h.update(b"\n");
    }
    h.update(b"doctor\n");
    for n in doctor_names {
        h.update(n.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Merges the positive (-1) and negative (+1) doctor feature sets.
pub(crate) fn doctor_coefficients(positive: &[usize], negative: &[usize]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(positive.len() + negative.len());
    let (mut a, mut b) = (0, 0);
    while a < positive.len() || b < negative.len() {
        match (positive.get(a), negative.get(b)) {
            (Some(&x), Some(&y)) if x == y => {
                a += 1;
                b += 1;
            }
            (Some(&x), Some(&y)) if x < y => {
                out.push((x, -1.0));
                a += 1;
            }
            (Some(&x), None) => {
                out.push((x, -1.0));
                a += 1;
            }
            (_, Some(&y)) => {
                out.push((y, 1.0));
                b += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orders by raw score descending, ties by ascending doctor index, and
/// keeps the first `n`.
pub fn rank_scored(mut scored: Vec<ScoredDoctor>, n: usize) -> Vec<ScoredDoctor> {
    scored.sort_by(|a, b| match b.raw.total_cmp(&a.raw) {
        Ordering::Equal => a.doctor.cmp(&b.doctor),
        o => o,
    });
    scored.truncate(n);
    scored
}

impl HybridModel {
    /// Fresh model bound to `features`: uniform embeddings, zero biases.
    pub fn new(features: &FeatureAssignments, hyperparams: Hyperparams, rng: &mut impl Rng) -> Result<Self> {
        hyperparams.validate()?;
        let dim = hyperparams.no_components;
        let half = hyperparams.init_scale / (dim as f64).sqrt();
        let patient = SideParams::new(&features.patient_vocab, dim, half, rng);
        let doctor = SideParams::new(&features.doctor_vocab, dim, half, rng);
        let fingerprint = vocab_fingerprint(&patient.names, &doctor.names);
        Ok(HybridModel {
            hyperparams,
            patient,
            doctor,
            fingerprint,
        })
    }

    pub(crate) fn from_parts(hyperparams: Hyperparams, patient: SideParams, doctor: SideParams) -> Self {
        let fingerprint = vocab_fingerprint(&patient.names, &doctor.names);
        HybridModel {
            hyperparams,
            patient,
            doctor,
            fingerprint,
        }
    }

    pub fn dim(&self) -> usize {
        self.hyperparams.no_components
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn feature_names(&self, side: Side) -> &[String] {
        &self.side(side).names
    }

    /// Fails unless `features` has exactly the vocabularies the model was built on.
    pub fn check_bound(&self, features: &FeatureAssignments) -> Result<()> {
        let fp = vocab_fingerprint(features.patient_vocab.names(), features.doctor_vocab.names());
        if fp != self.fingerprint {
            return Err(Error::Feature(format!(
                "vocabulary mismatch: model {} vs features {fp}",
                self.fingerprint
            )));
        }
        Ok(())
    }

    fn side(&self, side: Side) -> &SideParams {
        match side {
            Side::Patient => &self.patient,
            Side::Doctor => &self.doctor,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut SideParams {
        match side {
            Side::Patient => &mut self.patient,
            Side::Doctor => &mut self.doctor,
        }
    }

    pub fn embedding(&self, side: Side, feature: usize) -> &[f64] {
        let l = self.dim();
        &self.side(side).embeddings[feature * l..(feature + 1) * l]
    }

    pub fn embedding_mut(&mut self, side: Side, feature: usize) -> &mut [f64] {
        let l = self.dim();
        &mut self.side_mut(side).embeddings[feature * l..(feature + 1) * l]
    }

    pub fn bias(&self, side: Side, feature: usize) -> f64 {
        self.side(side).biases[feature]
    }

    pub fn bias_mut(&mut self, side: Side, feature: usize) -> &mut f64 {
        &mut self.side_mut(side).biases[feature]
    }

    /// Adagrad accumulators: (embedding, bias).
    pub fn accumulators(&self, side: Side) -> (&[f64], &[f64]) {
        let s = self.side(side);
        (&s.embedding_accum, &s.bias_accum)
    }

    /// Sum of the feature embeddings and biases of `features`.
    pub fn represent(&self, side: Side, features: &[usize]) -> Result<Representation> {
        let mut r = Representation {
            vector: vec![0.0; self.dim()],
            bias: 0.0,
        };
        self.represent_into(side, features, &mut r)?;
        Ok(r)
    }

    pub(crate) fn represent_into(&self, side: Side, features: &[usize], out: &mut Representation) -> Result<()> {
        let params = self.side(side);
        if features.is_empty() {
            return Err(Error::Feature(format!("empty {side:?} feature set")));
        }
        let l = self.dim();
        out.vector.iter_mut().for_each(|x| *x = 0.0);
        out.bias = 0.0;
        for &f in features {
            if f >= params.len() {
                return Err(Error::Feature(format!("{side:?} feature index {f} outside vocabulary")));
            }
            for (acc, e) in out.vector.iter_mut().zip(&params.embeddings[f * l..(f + 1) * l]) {
                *acc += e;
            }
            if self.hyperparams.bias_enabled {
                out.bias += params.biases[f];
            }
        }
        Ok(())
    }

    pub fn represent_patient(&self, features: &[usize]) -> Result<Representation> {
        self.represent(Side::Patient, features)
    }

    pub fn represent_doctor(&self, features: &[usize]) -> Result<Representation> {
        self.represent(Side::Doctor, features)
    }

    /// Raw score `p . q + b_p + b_q` of two representations.
    pub fn raw_score(patient: &Representation, doctor: &Representation) -> f64 {
        dot(&patient.vector, &doctor.vector) + patient.bias + doctor.bias
    }

    pub fn predict(&self, patient_features: &[usize], doctor_features: &[usize]) -> Result<(f64, f64)> {
        let p = self.represent_patient(patient_features)?;
        let q = self.represent_doctor(doctor_features)?;
        let raw = Self::raw_score(&p, &q);
        Ok((raw, sigmoid(raw)))
    }

    /// Scores patient `patient` against doctor `doctor` of `features`.
    pub fn predict_pair(&self, features: &FeatureAssignments, patient: usize, doctor: usize) -> Result<ScoredDoctor> {
        let pf = features.patient_features.get(patient).ok_or(Error::Unknown {
            kind: "patient index",
            id: patient.to_string(),
        })?;
        let df = features.doctor_features.get(doctor).ok_or(Error::Unknown {
            kind: "doctor index",
            id: doctor.to_string(),
        })?;
        let (raw, score) = self.predict(pf, df)?;
        Ok(ScoredDoctor { doctor, score, raw })
    }

    /// Top-`n` candidates for a patient described by `patient_features`.
    pub fn rank_doctors(
        &self,
        features: &FeatureAssignments,
        patient_features: &[usize],
        candidates: &[usize],
        n: usize,
    ) -> Result<Vec<ScoredDoctor>> {
        let p = self.represent_patient(patient_features)?;
        let mut q = Representation {
            vector: vec![0.0; self.dim()],
            bias: 0.0,
        };
        let mut scored = Vec::with_capacity(candidates.len());
        for &d in candidates {
            let df = features.doctor_features.get(d).ok_or(Error::Unknown {
                kind: "doctor index",
                id: d.to_string(),
            })?;
            self.represent_into(Side::Doctor, df, &mut q)?;
            let raw = Self::raw_score(&p, &q);
            scored.push(ScoredDoctor {
                doctor: d,
                score: sigmoid(raw),
                raw,
            });
        }
        Ok(rank_scored(scored, n))
    }

    /// Hinge loss of one (patient, positive doctor, negative doctor) triplet.
    pub fn triplet_loss(&self, patient: &[usize], positive: &[usize], negative: &[usize]) -> Result<f64> {
        let p = self.represent_patient(patient)?;
        let qj = self.represent_doctor(positive)?;
        let qd = self.represent_doctor(negative)?;
        let margin = self.hyperparams.margin;
        Ok((margin - Self::raw_score(&p, &qj) + Self::raw_score(&p, &qd)).max(0.0))
    }

    /// Analytic gradient of [`triplet_loss`](Self::triplet_loss); all zeros
    /// when the margin is satisfied.
    pub fn triplet_gradient(
        &self,
        patient: &[usize],
        positive: &[usize],
        negative: &[usize],
    ) -> Result<TripletGradient> {
        let p = self.represent_patient(patient)?;
        let qj = self.represent_doctor(positive)?;
        let qd = self.represent_doctor(negative)?;
        let margin = self.hyperparams.margin;
        let loss = (margin - Self::raw_score(&p, &qj) + Self::raw_score(&p, &qd)).max(0.0);
        let active = if loss > 0.0 { 1.0 } else { 0.0 };
        let diff: Vec<f64> = qd
            .vector
            .iter()
            .zip(&qj.vector)
            .map(|(d, j)| active * (d - j))
            .collect();
        let coefs = doctor_coefficients(positive, negative);
        let bias_on = if self.hyperparams.bias_enabled { active } else { 0.0 };
        Ok(TripletGradient {
            loss,
            patient_embeddings: patient.iter().map(|&u| (u, diff.clone())).collect(),
            doctor_embeddings: coefs
                .iter()
                .map(|&(u, c)| (u, p.vector.iter().map(|x| active * c * x).collect()))
                .collect(),
            patient_biases: patient.iter().map(|&u| (u, 0.0)).collect(),
            doctor_biases: coefs.iter().map(|&(u, c)| (u, bias_on * c)).collect(),
        })
    }
}
