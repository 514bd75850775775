//! `key = value` run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dpsnn::training::{LossConfig, NoiseKind, SynthSpec, TrainConfig};
use dpsnn::ModelConfig;

use crate::CliError;

/// Numeric precision used while training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub init_seed: u64,
    pub precision: Precision,
    /// Training history destination, relative paths resolved against the
    /// config file's directory.
    pub history: Option<PathBuf>,
}

pub const KEYS: &[&str] = &[
    "n",
    "b",
    "h",
    "l",
    "k_ctx",
    "lr",
    "epochs",
    "steps_per_epoch",
    "batch_size",
    "val_clips",
    "clip_norm",
    "plateau_patience",
    "seed",
    "init_seed",
    "w_mse",
    "lambda2",
    "lambda3",
    "clip_seconds",
    "snr_db",
    "noise",
    "precision",
    "history",
];

fn bad(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("config line {line}: {msg}"))
}

fn num<V: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<V, CliError> {
    value
        .parse()
        .map_err(|_| bad(line, format!("key `{key}`: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut model = ModelConfig::new(64, 32, 64, 80, 4);
        let mut train = TrainConfig::default();
        let mut cfg_loss = LossConfig::default();
        let mut synth = SynthSpec::default();
        let mut init_seed = None;
        let mut precision = Precision::F64;
        let mut history = None;
        let mut seen = BTreeSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected `key = value`, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(bad(line, format!("unknown key `{key}`")));
            }
            if !seen.insert(key.to_string()) {
                return Err(bad(line, format!("duplicate key `{key}`")));
            }
            match key {
                "n" => model.encoder.channels = num(line, key, value)?,
                "b" => model.separator.bottleneck = num(line, key, value)?,
                "h" => model.separator.hidden = num(line, key, value)?,
                "l" => {
                    let l: usize = num(line, key, value)?;
                    model.encoder.filter_len = l;
                    model.encoder.stride = l / 2;
                }
                "k_ctx" => model.separator.context = num(line, key, value)?,
                "lr" => train.lr = num(line, key, value)?,
                "epochs" => train.epochs = num(line, key, value)?,
                "steps_per_epoch" => train.steps_per_epoch = num(line, key, value)?,
                "batch_size" => train.batch_size = num(line, key, value)?,
                "val_clips" => train.val_clips = num(line, key, value)?,
                "clip_norm" => train.clip_norm = num(line, key, value)?,
                "plateau_patience" => train.plateau_patience = num(line, key, value)?,
                "seed" => train.seed = num(line, key, value)?,
                "init_seed" => init_seed = Some(num(line, key, value)?),
                "w_mse" => cfg_loss.w_mse = num(line, key, value)?,
                "lambda2" => cfg_loss.lambda2 = num(line, key, value)?,
                "lambda3" => cfg_loss.lambda3 = num(line, key, value)?,
                "clip_seconds" => synth.clip_seconds = num(line, key, value)?,
                "snr_db" => {
                    synth.snr_db = value
                        .split(',')
                        .map(|s| num(line, key, s.trim()))
                        .collect::<Result<_, _>>()?
                }
                "noise" => {
                    synth.noise = value
                        .split(',')
                        .map(|s| {
                            NoiseKind::parse(s.trim()).ok_or_else(|| {
                                bad(line, format!("key `noise`: unknown kind {:?} (white, pink, texture)", s.trim()))
                            })
                        })
                        .collect::<Result<_, _>>()?
                }
                "precision" => {
                    precision = match value {
                        "f32" => Precision::F32,
                        "f64" => Precision::F64,
                        _ => return Err(bad(line, format!("key `precision`: expected f32 or f64, got {value:?}"))),
                    }
                }
                "history" => history = Some(base_dir.join(value)),
                _ => unreachable!("key list and match arms agree"),
            }
        }
        train.loss = cfg_loss;
        train.synth = synth;
        let cfg = RunConfig {
            model,
            init_seed: init_seed.unwrap_or(train.seed),
            train,
            precision,
            history,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Dimension and path checks done before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(h) = &self.history {
            let dir = h.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(CliError::Usage(format!("history directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse("n = 32 # channels\n\nl=40\nsnr_db = 0, 10\nnoise = pink\n", Path::new(".")).unwrap();
        assert_eq!(cfg.model.encoder.channels, 32);
        assert_eq!(cfg.model.encoder.stride, 20);
        assert_eq!(cfg.train.synth.snr_db, vec![0.0, 10.0]);
        assert_eq!(cfg.train.synth.noise, vec![NoiseKind::Pink]);
        assert_eq!(cfg.train.loss.lambda2, 0.001);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("n = 32\nlearning_rate = 1\n", Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn hidden_must_divide_by_bottleneck() {
        assert!(RunConfig::parse("b = 32\nh = 48\n", Path::new(".")).is_err());
    }

    #[test]
    fn duplicate_key_is_rejected() {
        assert!(RunConfig::parse("lr = 1\nlr = 2\n", Path::new(".")).is_err());
    }
}
