use crate::conditioning::{Conditioner, ConditioningDims};
use crate::denoiser::{Denoiser, DenoiserDims};
use crate::error::{Error, Result};
use crate::numerics::ParamStore;
use crate::rng::Rng;
use crate::schedule::BaseScheduleConfig;

/// Architecture and schedule hyperparameters shared by every component.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_classes: usize,
    pub data_dim: usize,
    pub d_emb: usize,
    /// Hidden width of the two fusion heads.
    pub hidden: usize,
    pub hidden_denoiser: usize,
    pub d_time: usize,
    pub bins: usize,
    pub schedule: BaseScheduleConfig,
    /// Bound for the predicted `x_0` during sampling; `None` samples with the
    /// plain noise-prediction update.
    pub clip_x0: Option<f64>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        for (name, v) in [
            ("num_classes", self.num_classes),
            ("data_dim", self.data_dim),
            ("d_emb", self.d_emb),
            ("hidden", self.hidden),
            ("hidden_denoiser", self.hidden_denoiser),
            ("d_time", self.d_time),
        ] {
            if v == 0 {
                return Err(Error::contract(format!("{name} must be positive")));
            }
        }
        if self.bins < 2 {
            return Err(Error::contract("bins must be at least 2"));
        }
        if let Some(c) = self.clip_x0 {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::contract(format!(
                    "clip_x0 must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Every trainable component plus the store that owns their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AcDiffModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub conditioner: Conditioner,
    pub denoiser: Denoiser,
}

impl AcDiffModel {
    /// Freshly initialized model; parameter order and values depend only on `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let conditioner = Conditioner::new(
            &mut store,
            ConditioningDims {
                num_classes: config.num_classes,
                d_emb: config.d_emb,
                hidden: config.hidden,
            },
            config.bins,
            &mut rng,
        );
        let denoiser = Denoiser::new(
            &mut store,
            DenoiserDims {
                data_dim: config.data_dim,
                hidden: config.hidden_denoiser,
                d_time: config.d_time,
                d_emb: config.d_emb,
            },
            &mut rng,
        );
        Ok(AcDiffModel {
            config,
            store,
            conditioner,
            denoiser,
        })
    }

    pub fn schedule_config(&self) -> &BaseScheduleConfig {
        &self.config.schedule
    }
}
