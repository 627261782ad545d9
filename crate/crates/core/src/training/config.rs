use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Learning-rate shape after warmup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    Linear,
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "linear" => Ok(Schedule::Linear),
            other => Err(Error::Config(format!("unknown schedule `{other}` (expected constant or linear)"))),
        }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Schedule::Constant => "constant",
            Schedule::Linear => "linear",
        })
    }
}

/// Optimization settings. Defaults are sized for a desktop CPU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps; 0 means no cap.
    pub max_steps: usize,
    pub warmup_steps: usize,
    pub learning_rate: f64,
    pub crf_learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub grad_clip: f64,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 20,
            max_steps: 0,
            warmup_steps: 50,
            learning_rate: 1e-3,
            crf_learning_rate: 1e-2,
            weight_decay: 0.01,
            seed: 0,
            grad_clip: 1.0,
            schedule: Schedule::Linear,
        }
    }
}

impl TrainConfig {
    /// Defaults for the rewriting stage: same as extraction but 10 epochs.
    pub fn rewriter() -> Self {
        TrainConfig {
            epochs: 10,
            ..Self::default()
        }
    }

    pub const KEYS: [&'static str; 10] = [
        "batch_size",
        "epochs",
        "max_steps",
        "warmup_steps",
        "learning_rate",
        "crf_learning_rate",
        "weight_decay",
        "seed",
        "grad_clip",
        "schedule",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "max_steps" => self.max_steps = parse(key, value)?,
            "warmup_steps" => self.warmup_steps = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "crf_learning_rate" => self.crf_learning_rate = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "schedule" => self.schedule = value.parse()?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let value = match key {
                "batch_size" => self.batch_size.to_string(),
                "epochs" => self.epochs.to_string(),
                "max_steps" => self.max_steps.to_string(),
                "warmup_steps" => self.warmup_steps.to_string(),
                "learning_rate" => self.learning_rate.to_string(),
                "crf_learning_rate" => self.crf_learning_rate.to_string(),
                "weight_decay" => self.weight_decay.to_string(),
                "seed" => self.seed.to_string(),
                "grad_clip" => self.grad_clip.to_string(),
                _ => self.schedule.to_string(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.epochs == 0 && self.max_steps == 0 {
            return bad("epochs or max_steps must be positive");
        }
        let rates = [self.learning_rate, self.crf_learning_rate];
        if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.grad_clip >= 0.0) {
            return bad("weight_decay and grad_clip must be non-negative");
        }
        Ok(())
    }

    /// Optimizer steps for a training set of `examples` items.
    pub fn total_steps(&self, examples: usize) -> usize {
        let per_epoch = examples.div_ceil(self.batch_size);
        let by_epochs = per_epoch * self.epochs;
        match (self.max_steps, by_epochs) {
            (0, n) => n,
            (cap, 0) => cap,
            (cap, n) => cap.min(n),
        }
    }

    /// Multiplier on the base rates at `step` (0-based): linear warmup
    /// reaching 1 at the end of warmup, then constant or linear decay to 0.
    pub fn lr_scale(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            return (step + 1) as f64 / self.warmup_steps as f64;
        }
        match self.schedule {
            Schedule::Constant => 1.0,
            Schedule::Linear => {
                let span = total.saturating_sub(self.warmup_steps).max(1);
                (total.saturating_sub(step)) as f64 / span as f64
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip_and_overrides() {
        let mut c = TrainConfig::default();
        c.apply_text("# desk\nbatch_size = 4\nschedule=constant  # inline\n\nseed = 9\n").unwrap();
        assert_eq!((c.batch_size, c.seed, c.schedule), (4, 9, Schedule::Constant));
        let mut back = TrainConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert!(c.clone().apply_text("bogus = 1").is_err());
        assert!(c.clone().apply_text("batch_size = x").is_err());
        assert!(c.clone().apply_text("batch_size = 0").is_err());
        assert!(c.apply_text("no equals sign").is_err());
    }

    #[test]
    fn schedule_shape() {
        let c = TrainConfig {
            warmup_steps: 10,
            ..TrainConfig::default()
        };
        assert!((c.lr_scale(0, 100) - 0.1).abs() < 1e-12);
        assert_eq!(c.lr_scale(9, 100), 1.0);
        assert_eq!(c.lr_scale(10, 100), 1.0);
        assert!((c.lr_scale(55, 100) - 0.5).abs() < 1e-12);
        assert!(c.lr_scale(99, 100) > 0.0);
        let flat = TrainConfig {
            schedule: Schedule::Constant,
            ..c
        };
        assert_eq!(flat.lr_scale(90, 100), 1.0);
    }

    #[test]
    fn step_counts() {
        let c = TrainConfig {
            batch_size: 16,
            epochs: 2,
            ..TrainConfig::default()
        };
        assert_eq!(c.total_steps(33), 6);
        let capped = TrainConfig { max_steps: 4, ..c };
        assert_eq!(capped.total_steps(33), 4);
    }
}
