use std::fmt;
use std::str::FromStr;

use crate::config::KeyValues;
use crate::error::{Error, Result};

/// How trust weights enter WARP training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrustMode {
    /// Positives swept uniformly, unit weight.
    Off,
    /// Positives drawn with probability proportional to their trust.
    #[default]
    SampleWeight,
    /// Positives swept uniformly, gradient scaled by trust normalized to mean 1.
    GradientWeight,
}

impl FromStr for TrustMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "off" => Ok(TrustMode::Off),
            "sample" | "sample_weight" => Ok(TrustMode::SampleWeight),
            "gradient" | "gradient_weight" => Ok(TrustMode::GradientWeight),
            other => Err(Error::Config(format!(
                "trust mode must be off, sample or gradient, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for TrustMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrustMode::Off => "off",
            TrustMode::SampleWeight => "sample_weight",
            TrustMode::GradientWeight => "gradient_weight",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Annual trust decay rate.
    pub lambda: f64,
    pub no_components: usize,
    pub max_sampled: usize,
    pub margin: f64,
    pub bias_enabled: bool,
    /// Embeddings start uniform in `±init_scale / sqrt(no_components)`.
    pub init_scale: f64,
    pub rng_seed: u64,
    pub trust_mode: TrustMode,
}

impl Default for Hyperparams {
    /// The grid-searched operating point: learning rate 0.012, 120 epochs,
    /// decay 0.3, 95 components, 3 sampled negatives.
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.012,
            epochs: 120,
            lambda: 0.3,
            no_components: 95,
            max_sampled: 3,
            margin: 1.0,
            bias_enabled: true,
            init_scale: 1.0,
            rng_seed: 42,
            trust_mode: TrustMode::SampleWeight,
        }
    }
}

macro_rules! hyper_keys {
    ($($field:ident),* $(,)?) => {
        impl Hyperparams {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Overrides `base` with any keys present in `kv`; other keys are ignored.
            pub fn with_overrides(base: Self, kv: &KeyValues) -> Result<Self> {
                let mut h = base;
                $( h.$field = kv.get_or(stringify!($field), h.$field)?; )*
                h.validate()?;
                Ok(h)
            }

            pub fn to_config(&self) -> KeyValues {
                let mut kv = KeyValues::new();
                $( kv.set(stringify!($field), self.$field.to_string()); )*
                kv
            }
        }
    };
}

hyper_keys!(
    learning_rate,
    epochs,
    lambda,
    no_components,
    max_sampled,
    margin,
    bias_enabled,
    init_scale,
    rng_seed,
    trust_mode,
);

impl Hyperparams {
    /// Published operating point with the embedding size cut to 16 for
    /// desk-scale runs.
    pub fn desk() -> Self {
        Hyperparams {
            no_components: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        if self.no_components == 0 {
            return bad("no_components must be positive");
        }
        if self.max_sampled == 0 {
            return bad("max_sampled must be positive");
        }
        if !self.margin.is_finite() {
            return bad("margin must be finite");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_point_is_the_default() {
        let h = Hyperparams::default();
        assert_eq!(
            (h.learning_rate, h.epochs, h.lambda, h.no_components, h.max_sampled),
            (0.012, 120, 0.3, 95, 3)
        );
        h.validate().unwrap();
    }

    #[test]
    fn overrides_and_round_trip() {
        let kv = KeyValues::parse("epochs = 7\ntrust_mode = gradient\nunrelated = 1\n").unwrap();
        let h = Hyperparams::with_overrides(Hyperparams::desk(), &kv).unwrap();
        assert_eq!(h.epochs, 7);
        assert_eq!(h.trust_mode, TrustMode::GradientWeight);
        assert_eq!(
            Hyperparams::with_overrides(Hyperparams::default(), &h.to_config()).unwrap(),
            h
        );
    }

    #[test]
    fn rejects_nonpositive_values() {
        for kv in [
            "learning_rate = 0",
            "no_components = 0",
            "max_sampled = 0",
            "lambda = -1",
        ] {
            let kv = KeyValues::parse(kv).unwrap();
            assert!(Hyperparams::with_overrides(Hyperparams::desk(), &kv).is_err());
        }
    }
}
