//! Flat `key=value` pipeline configuration with `#` comments.

use crate::blocking::{BalanceRatios, BlockingParams};
use crate::cnn::{Architecture, TrainConfig};
use crate::segmentation::SegmentationParams;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("config line {line}: bad value for {key}: {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub roi: usize,
    pub padding: usize,
    pub air_threshold_hu: i32,
    pub min_object_area: usize,
    pub fill_holes: bool,
    pub excluded_sentinel_hu: i32,
    pub min_labeled_fraction: f64,
    pub ratio_honeycombing: f64,
    pub ratio_groundglass: f64,
    pub ratio_healthy: f64,
    pub architecture: Architecture,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_p: f64,
    pub validation_fraction: f64,
    pub window_center: f64,
    pub window_width: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let seg = SegmentationParams::default();
        let blk = BlockingParams::default();
        let tr = TrainConfig::default();
        PipelineConfig {
            roi: blk.roi_px,
            padding: blk.padding_px,
            air_threshold_hu: seg.air_threshold_hu,
            min_object_area: seg.min_object_area_px,
            fill_holes: seg.fill_holes,
            excluded_sentinel_hu: seg.excluded_sentinel_hu,
            min_labeled_fraction: blk.min_labeled_fraction,
            ratio_honeycombing: blk.balance_ratios.honeycombing,
            ratio_groundglass: blk.balance_ratios.groundglass,
            ratio_healthy: blk.balance_ratios.healthy,
            architecture: tr.architecture,
            learning_rate: tr.learning_rate,
            momentum: tr.momentum,
            batch_size: tr.batch_size,
            epochs: tr.epochs,
            dropout_p: tr.dropout_p,
            validation_fraction: tr.validation_fraction,
            window_center: -600.0,
            window_width: 1500.0,
            seed: 0,
        }
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.parse().map_err(|e: T::Err| ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

impl PipelineConfig {
    pub fn segmentation_params(&self) -> SegmentationParams {
        SegmentationParams {
            air_threshold_hu: self.air_threshold_hu,
            min_object_area_px: self.min_object_area,
            fill_holes: self.fill_holes,
            excluded_sentinel_hu: self.excluded_sentinel_hu,
        }
    }

    pub fn blocking_params(&self) -> BlockingParams {
        BlockingParams {
            roi_px: self.roi,
            padding_px: self.padding,
            min_labeled_fraction: self.min_labeled_fraction,
            balance_ratios: BalanceRatios {
                honeycombing: self.ratio_honeycombing,
                groundglass: self.ratio_groundglass,
                healthy: self.ratio_healthy,
            },
            rng_seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            architecture: self.architecture.clone(),
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            dropout_p: self.dropout_p,
            rng_seed: self.seed,
            validation_fraction: self.validation_fraction,
        }
    }

    /// Each value is checked by the module that owns it.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn fmt::Display| ConfigError::Invalid(e.to_string());
        self.segmentation_params()
            .validate()
            .map_err(|e| invalid(&e))?;
        self.blocking_params().validate().map_err(|e| invalid(&e))?;
        self.train_config().validate().map_err(|e| invalid(&e))?;
        let side = self.blocking_params().block_side();
        let input = self.architecture.input;
        if (input.h, input.w, input.c) != (side, side, 1) {
            return Err(ConfigError::Invalid(format!(
                "architecture input {}x{}x{} does not match {side}x{side}x1 blocks",
                input.h, input.w, input.c
            )));
        }
        if !(self.window_width > 0.0 && self.window_center.is_finite()) {
            return Err(ConfigError::Invalid("window_width must be positive".into()));
        }
        Ok(())
    }

    /// Starts from the defaults and applies every line of `text`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, val) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected key=value, got {content:?}"),
            })?;
            let (key, val) = (key.trim(), val.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.into(),
                });
            }
            cfg.set(line, key, val)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "roi" => self.roi = value(line, key, v)?,
            "padding" => self.padding = value(line, key, v)?,
            "air_threshold_hu" => self.air_threshold_hu = value(line, key, v)?,
            "min_object_area" => self.min_object_area = value(line, key, v)?,
            "fill_holes" => self.fill_holes = value(line, key, v)?,
            "excluded_sentinel_hu" => self.excluded_sentinel_hu = value(line, key, v)?,
            "min_labeled_fraction" => self.min_labeled_fraction = value(line, key, v)?,
            "ratio_honeycombing" => self.ratio_honeycombing = value(line, key, v)?,
            "ratio_groundglass" => self.ratio_groundglass = value(line, key, v)?,
            "ratio_healthy" => self.ratio_healthy = value(line, key, v)?,
            "architecture" => self.architecture = value(line, key, v)?,
            "learning_rate" => self.learning_rate = value(line, key, v)?,
            "momentum" => self.momentum = value(line, key, v)?,
            "batch_size" => self.batch_size = value(line, key, v)?,
            "epochs" => self.epochs = value(line, key, v)?,
            "dropout_p" => self.dropout_p = value(line, key, v)?,
            "validation_fraction" => self.validation_fraction = value(line, key, v)?,
            "window_center" => self.window_center = value(line, key, v)?,
            "window_width" => self.window_width = value(line, key, v)?,
            "seed" => self.seed = value(line, key, v)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                })
            }
        }
        Ok(())
    }

    /// Every key, one per line; `parse(dump())` reproduces `self`.
    pub fn dump(&self) -> String {
        let mut s = String::from("# lungcad pipeline configuration\n");
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("roi", &self.roi);
        kv("padding", &self.padding);
        kv("air_threshold_hu", &self.air_threshold_hu);
        kv("min_object_area", &self.min_object_area);
        kv("fill_holes", &self.fill_holes);
        kv("excluded_sentinel_hu", &self.excluded_sentinel_hu);
        kv("min_labeled_fraction", &self.min_labeled_fraction);
        kv("ratio_honeycombing", &self.ratio_honeycombing);
        kv("ratio_groundglass", &self.ratio_groundglass);
        kv("ratio_healthy", &self.ratio_healthy);
        kv("architecture", &self.architecture);
        kv("learning_rate", &self.learning_rate);
        kv("momentum", &self.momentum);
        kv("batch_size", &self.batch_size);
        kv("epochs", &self.epochs);
        kv("dropout_p", &self.dropout_p);
        kv("validation_fraction", &self.validation_fraction);
        kv("window_center", &self.window_center);
        kv("window_width", &self.window_width);
        kv("seed", &self.seed);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_modules() {
        let c = PipelineConfig::default();
        assert_eq!(
            (c.roi, c.padding, c.air_threshold_hu, c.min_object_area),
            (4, 4, -500, 64)
        );
        assert_eq!(c.blocking_params(), BlockingParams::default());
        assert_eq!(c.segmentation_params(), SegmentationParams::default());
        assert_eq!(c.train_config(), TrainConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn comments_blanks_and_overrides() {
        let c =
            PipelineConfig::parse("# header\n\nroi = 4  # trailing\nseed=17\nepochs=3\n").unwrap();
        assert_eq!((c.seed, c.epochs), (17, 3));
        assert_eq!(c.train_config().rng_seed, 17);
        assert_eq!(c.blocking_params().rng_seed, 17);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            PipelineConfig::parse("bogus=1"),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("seed=1\nseed=2"),
            Err(ConfigError::DuplicateKey { line: 2, .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("roi"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("epochs=many"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("learning_rate=-1"),
            Err(ConfigError::Invalid(_))
        ));
        // roi 8 gives 24-pixel blocks, which the 12x12 architecture cannot take.
        assert!(matches!(
            PipelineConfig::parse("roi=8"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn default_dump_round_trips() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::parse(&c.dump()).unwrap(), c);
    }

    proptest! {
        #[test]
        fn dump_round_trips(
            seed in any::<u64>(),
            lr in 1e-6f64..1.0,
            mom in 0.0f64..0.99,
            ratios in (0.1f64..10.0, 0.1f64..10.0, 0.1f64..10.0),
            thr in -1000i32..0,
            center in -1500.0f64..500.0,
        ) {
            let c = PipelineConfig {
                seed,
                learning_rate: lr,
                momentum: mom,
                ratio_honeycombing: ratios.0,
                ratio_groundglass: ratios.1,
                ratio_healthy: ratios.2,
                air_threshold_hu: thr,
                window_center: center,
                ..PipelineConfig::default()
            };
            let text = c.dump();
            let back = PipelineConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.dump(), text);
        }
    }
}
