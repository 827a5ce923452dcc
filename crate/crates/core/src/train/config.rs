use serde::{Deserialize, Serialize};

use crate::cooperation::{AlphaSchedule, EntropyScope};
use crate::error::{Error, Result};
use crate::riskmath::CooperationWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cool,
    Standard,
    Bootstrap,
    Codistill,
    Coteaching,
    Bagging,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Standard,
        Method::Bootstrap,
        Method::Codistill,
        Method::Coteaching,
        Method::Bagging,
        Method::Cool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cool => "cool",
            Method::Standard => "standard",
            Method::Bootstrap => "bootstrap",
            Method::Codistill => "codistill",
            Method::Coteaching => "coteaching",
            Method::Bagging => "bagging",
        }
    }

    /// Number of networks the method trains, given the configured count.
    pub fn classifier_count(self, configured: usize) -> usize {
        match self {
            Method::Standard | Method::Bootstrap => 1,
            Method::Codistill | Method::Coteaching => 2,
            Method::Cool | Method::Bagging => configured,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: Method,
    /// Networks for CooL and Bagging; the dual baselines always use two.
    pub n_classifiers: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub epochs: usize,
    /// Epochs of warm-up before the method-specific phase.
    pub start_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Cooperation weights; uniform when absent.
    pub lambda: Option<Vec<f64>>,
    /// Noisy-label weight schedule, counted in epochs after warm-up.
    pub alpha: AlphaSchedule,
    pub beta: f64,
    pub entropy_scope: EntropyScope,
    /// Whether a classifier's own prediction enters its cooperation target.
    pub include_self: bool,
    /// Weight on the observed label in the Bootstrap target.
    pub bootstrap_lambda: f64,
    /// Weight on the observed label in the Co-distillation target.
    pub codistill_lambda: f64,
    /// Noise ratio given to Co-teaching as side information.
    pub noise_rate: f64,
    pub seed: u64,
    /// Window for the final accuracy summary.
    pub last_k: usize,
    /// Training instances sampled for per-epoch risk estimates.
    pub risk_subsample: usize,
    /// Start every network from the same initialization.
    pub identical_init: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Cool,
            n_classifiers: 2,
            hidden: default_hidden(),
            epochs: 60,
            start_epoch: 10,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            lambda: None,
            alpha: AlphaSchedule::linear(0.05, 50),
            beta: 0.05,
            entropy_scope: EntropyScope::OwnPartition,
            include_self: true,
            bootstrap_lambda: 0.8,
            codistill_lambda: 0.5,
            noise_rate: 0.0,
            seed: 0,
            last_k: 10,
            risk_subsample: 2000,
            identical_init: false,
        }
    }
}

impl TrainConfig {
    pub fn networks(&self) -> usize {
        self.method.classifier_count(self.n_classifiers)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs == 0 || self.start_epoch >= self.epochs {
            return fail(format!(
                "need epochs > start_epoch, got {} and {}",
                self.epochs, self.start_epoch
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.n_classifiers == 0 {
            return fail("n_classifiers must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta {}", self.beta));
        }
        for (name, v) in [
            ("bootstrap_lambda", self.bootstrap_lambda),
            ("codistill_lambda", self.codistill_lambda),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} {v} outside [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return fail(format!("noise_rate {} outside [0, 1)", self.noise_rate));
        }
        if self.hidden.contains(&0) {
            return fail("zero-width hidden layer".into());
        }
        if self.last_k == 0 || self.last_k > self.epochs {
            return fail(format!("last_k {} must be in 1..={}", self.last_k, self.epochs));
        }
        if self.risk_subsample == 0 {
            return fail("risk_subsample must be positive".into());
        }
        if self.method == Method::Cool && self.n_classifiers < 2 && !self.include_self {
            return fail("excluding self needs at least two classifiers".into());
        }
        crate::cooperation::alpha_at(&self.alpha, 0)?;
        self.weights()?;
        Ok(())
    }

    /// Cooperation weights for the configured network count.
    pub fn weights(&self) -> Result<CooperationWeights> {
        let n = self.networks();
        match &self.lambda {
            None => CooperationWeights::uniform(n),
            Some(l) if l.len() != n => Err(Error::InvalidArgument(format!(
                "{} cooperation weights for {n} networks",
                l.len()
            ))),
            Some(l) => {
                if l.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidArgument("cooperation weights must lie in [0, 1]".into()));
                }
                CooperationWeights::new(l.clone())
            }
        }
    }
}
