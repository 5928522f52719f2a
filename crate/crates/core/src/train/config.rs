use serde::{Deserialize, Serialize};

use super::{OptimizerKind, TrainError};
use crate::data::{ExpansionMode, Target};
use crate::eval::Aggregation;
use crate::unet::UNetConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Tongue labels from a fresh model.
    #[default]
    DirectTongue,
    /// Vein labels from a fresh model.
    DirectVein,
    /// Vein labels starting from a trained tongue model.
    RetrainVein,
}

impl Strategy {
    pub fn target(self) -> Target {
        match self {
            Strategy::DirectTongue => Target::Tongue,
            Strategy::DirectVein | Strategy::RetrainVein => Target::Vein,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::DirectTongue => "direct_tongue",
            Strategy::DirectVein => "direct_vein",
            Strategy::RetrainVein => "retrain_vein",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct_tongue" => Ok(Strategy::DirectTongue),
            "direct_vein" => Ok(Strategy::DirectVein),
            "retrain_vein" => Ok(Strategy::RetrainVein),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_scale: f64,
    pub seed: u64,
    pub strategy: Strategy,
    pub bra: bool,
    pub roi_crop: bool,
    pub early_stop_patience: usize,
    /// `(height, width)`; defaults to the dataset's native size.
    pub train_resolution: Option<(usize, usize)>,
    pub expansion: ExpansionMode,
    pub optimizer: OptimizerKind,
    pub aggregation: Aggregation,
    /// Hard cap on optimizer steps, mainly for smoke runs.
    pub max_steps: Option<usize>,
    pub model: UNetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 100,
            batch_size: 2,
            l2_scale: 1e-4,
            seed: 0,
            strategy: Strategy::DirectTongue,
            bra: false,
            roi_crop: false,
            early_stop_patience: 15,
            train_resolution: None,
            expansion: ExpansionMode::Full,
            optimizer: OptimizerKind::Adam,
            aggregation: Aggregation::PerImage,
            max_steps: None,
            model: UNetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size < 2 {
            return bad(format!("batch size {} is below 2", self.batch_size));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.l2_scale >= 0.0 && self.l2_scale.is_finite()) {
            return bad(format!("l2 scale {} must be non-negative", self.l2_scale));
        }
        if (self.bra || self.roi_crop) && self.strategy.target() != Target::Vein {
            return bad("bra and roi_crop apply to vein rounds only".into());
        }
        self.model.validate()?;
        if let Some((h, w)) = self.train_resolution {
            let f = self.model.size_multiple();
            if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
                return bad(format!("training resolution {h}x{w} is not a multiple of {f}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_rejections() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.learning_rate, c.epochs, c.batch_size, c.l2_scale), (1e-4, 100, 2, 1e-4));
        assert!(TrainConfig { batch_size: 1, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { bra: true, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { train_resolution: Some((50, 64)), ..c.clone() }.validate().is_err());
        let v = TrainConfig { strategy: Strategy::RetrainVein, bra: true, roi_crop: true, ..c };
        v.validate().unwrap();
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [Strategy::DirectTongue, Strategy::DirectVein, Strategy::RetrainVein] {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.as_str()));
        }
    }
}
