use serde::{Deserialize, Serialize};

use crate::datasets::SamplerStrategy;
use crate::error::{Error, Result};
use crate::grad::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rcsv,
    RcsvU,
    Erm,
    ErmrsY,
    ErmrsYz,
    GroupDro,
    Correlation,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Erm,
        Method::ErmrsY,
        Method::ErmrsYz,
        Method::GroupDro,
        Method::Correlation,
        Method::Rcsv,
        Method::RcsvU,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rcsv => "rcsv",
            Method::RcsvU => "rcsv_u",
            Method::Erm => "erm",
            Method::ErmrsY => "ermrs_y",
            Method::ErmrsYz => "ermrs_yz",
            Method::GroupDro => "group_dro",
            Method::Correlation => "correlation",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Validation(format!("unknown method `{name}`")))
    }

    /// Whether the method needs observed spurious attributes.
    pub fn needs_attributes(self) -> bool {
        matches!(self, Method::Rcsv | Method::ErmrsYz | Method::GroupDro)
    }

    /// Sampler for the empirical-risk batch.
    pub fn default_sampler(self) -> SamplerStrategy {
        match self {
            Method::ErmrsY => SamplerStrategy::ClassBalanced,
            Method::ErmrsYz | Method::GroupDro => SamplerStrategy::GroupBalanced,
            _ => SamplerStrategy::Uniform,
        }
    }

    /// Regularisation weight used for the toy task when none is given.
    pub fn default_lambda(self) -> f64 {
        match self {
            Method::RcsvU => 5.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelShift {
    #[default]
    Off,
    UniformClass,
}

/// Step-size policy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `lr` and `gamma` as configured.
    #[default]
    Constant,
    /// `lr = c·T^{−3/5}` with `c` the configured `lr`, and `gamma = T^{−2/5}`.
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub lambda: f64,
    pub rho: f64,
    pub gamma: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Overrides the method's empirical-risk sampler.
    pub sampler: Option<SamplerStrategy>,
    pub weight_decay: f64,
    pub momentum: f64,
    pub label_shift: LabelShift,
    pub schedule: Schedule,
    /// Exponential-weights step for GroupDRO.
    pub dro_step: f64,
    pub architecture: Architecture,
    /// Hidden width for the MLP.
    pub hidden: usize,
    /// Standard deviation multiplier for weight initialisation.
    pub init_scale: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Toy-task defaults: plain SGD, lr 0.01, batch 32, 100 epochs of 1000
    /// samples, γ = 0.9, ρ = 0.01.
    pub fn toy_defaults(method: Method) -> Self {
        Self {
            method,
            lambda: method.default_lambda(),
            rho: 0.01,
            gamma: 0.9,
            lr: 0.01,
            steps: 3200,
            batch_size: 32,
            sampler: None,
            weight_decay: 0.0,
            momentum: 0.0,
            label_shift: LabelShift::Off,
            schedule: Schedule::Constant,
            dro_step: 0.01,
            architecture: Architecture::Linear,
            hidden: 64,
            init_scale: 0.1,
            seed: 0,
        }
    }

    /// Colored-digit defaults: MLP, SGD with momentum, batch 128, weight decay 1e-4.
    pub fn colored_digits_defaults(method: Method) -> Self {
        Self {
            lambda: if method == Method::RcsvU { 0.05 } else { 1.0 },
            lr: 0.05,
            steps: 2000,
            batch_size: 128,
            weight_decay: 1e-4,
            momentum: 0.9,
            architecture: Architecture::Mlp,
            hidden: 128,
            ..Self::toy_defaults(method)
        }
    }

    pub fn sampler(&self) -> SamplerStrategy {
        self.sampler.unwrap_or_else(|| self.method.default_sampler())
    }

    /// `(lr, gamma)` after applying the schedule.
    pub fn effective_rates(&self) -> (f64, f64) {
        match self.schedule {
            Schedule::Constant => (self.lr, self.gamma),
            Schedule::Horizon => {
                let t = self.steps.max(1) as f64;
                (self.lr * t.powf(-0.6), t.powf(-0.4))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Validation(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        positive("rho", self.rho)?;
        positive("gamma", self.gamma)?;
        positive("lr", self.lr)?;
        positive("dro_step", self.dro_step)?;
        if self.gamma > 1.0 {
            return Err(Error::Validation(format!("gamma must not exceed 1, got {}", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Validation(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Validation(format!("weight_decay must be nonnegative, got {}", self.weight_decay)));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Validation(format!("init_scale must be nonnegative, got {}", self.init_scale)));
        }
        if self.architecture == Architecture::Mlp && self.hidden == 0 {
            return Err(Error::Validation("mlp needs a positive hidden width".into()));
        }
        Ok(())
    }
}
