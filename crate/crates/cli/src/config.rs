//! Run configuration: a flat `key = value` file, overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use beatgan::classifier::CnnConfig;
use beatgan::data::NUM_CLASSES;
use beatgan::gan::GanConfig;

/// Per-class target of the full-scale balance.
pub const FULL_TARGET: usize = 10_000;

pub const CONFIG_HELP: &str = "\
CONFIG FILE
  One `key = value` per line; blank lines and lines starting with # are
  ignored. Command-line flags override the file. Relative paths are taken
  from the working directory.

  train_csv            training beats (default mitbih_train.csv)
  test_csv             test beats (default mitbih_test.csv)
  out                  output directory (default out)
  seed                 global seed (default 0)
  full                 true: balance every class to 10000 and do not cap
                       GAN training sets unless `cap` is set explicitly
  cap                  desk scale: per-class balance target and GAN
                       training-set cap (default 2000)
  classes              comma-separated GAN classes (default: every class
                       the balance plan tops up)
  unbalanced_fraction  desk-scale share of each class kept for the
                       unbalanced experiment (default 0.25; 1 with full)
  waveform_pairs       real/synthetic pairs exported per class (default 3)
  gan.epochs gan.latent_dim gan.projection gan.hidden gan.batch_size
  gan.lr_generator gan.lr_discriminator gan.beta1
  cnn.epochs cnn.batch_size cnn.lr cnn.conv1_filters cnn.conv2_filters
  cnn.kernel cnn.pool cnn.hidden

SEEDS
  Stages derive their seeds from the global seed plus a fixed offset:
  balance +100, GAN training +1000+class, synthesis +2000+class,
  classifier +3000, unbalanced subsample +4000, waveforms +5000,
  GAN training-set cap +6000.

EXIT CODES
  0 success, 1 usage error, 2 data error, 3 training failure";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train_csv: PathBuf,
    pub test_csv: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub full: bool,
    pub cap: usize,
    /// Whether `cap` was given explicitly rather than defaulted.
    pub cap_explicit: bool,
    pub classes: Option<Vec<u8>>,
    pub unbalanced_fraction: Option<f64>,
    pub waveform_pairs: usize,
    pub gan: GanConfig,
    pub cnn: CnnConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_csv: "mitbih_train.csv".into(),
            test_csv: "mitbih_test.csv".into(),
            out: "out".into(),
            seed: 0,
            full: false,
            cap: 2000,
            cap_explicit: false,
            classes: None,
            unbalanced_fraction: None,
            waveform_pairs: 3,
            gan: GanConfig::default(),
            cnn: CnnConfig::default(),
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError(format!("{key}: cannot parse {value:?}: {e}")))
}

pub fn parse_classes(list: &str) -> Result<Vec<u8>, ConfigError> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let c: u8 = parse("classes", part)?;
        if usize::from(c) >= NUM_CLASSES {
            return Err(ConfigError(format!("classes: {c} outside 0..{NUM_CLASSES}")));
        }
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out.sort_unstable();
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "train_csv" => self.train_csv = value.into(),
            "test_csv" => self.test_csv = value.into(),
            "out" => self.out = value.into(),
            "seed" => self.seed = parse(key, value)?,
            "full" => self.full = parse(key, value)?,
            "cap" => {
                self.cap = parse(key, value)?;
                self.cap_explicit = true;
            }
            "classes" => self.classes = Some(parse_classes(value)?),
            "unbalanced_fraction" => self.unbalanced_fraction = Some(parse(key, value)?),
            "waveform_pairs" => self.waveform_pairs = parse(key, value)?,
            "gan.epochs" => self.gan.epochs = parse(key, value)?,
            "gan.latent_dim" => self.gan.latent_dim = parse(key, value)?,
            "gan.projection" => self.gan.projection = parse(key, value)?,
            "gan.hidden" => self.gan.hidden = parse(key, value)?,
            "gan.batch_size" => self.gan.batch_size = parse(key, value)?,
            "gan.lr_generator" => self.gan.lr_generator = parse(key, value)?,
            "gan.lr_discriminator" => self.gan.lr_discriminator = parse(key, value)?,
            "gan.beta1" => self.gan.beta1 = parse(key, value)?,
            "cnn.epochs" => self.cnn.epochs = parse(key, value)?,
            "cnn.batch_size" => self.cnn.batch_size = parse(key, value)?,
            "cnn.lr" => self.cnn.lr = parse(key, value)?,
            "cnn.conv1_filters" => self.cnn.conv1_filters = parse(key, value)?,
            "cnn.conv2_filters" => self.cnn.conv2_filters = parse(key, value)?,
            "cnn.kernel" => self.cnn.kernel = parse(key, value)?,
            "cnn.pool" => self.cnn.pool = parse(key, value)?,
            "cnn.hidden" => self.cnn.hidden = parse(key, value)?,
            _ => return Err(ConfigError(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| ConfigError(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse_text(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cap == 0 {
            return Err(ConfigError("cap must be at least 1".into()));
        }
        if let Some(f) = self.unbalanced_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ConfigError(format!("unbalanced_fraction {f} outside (0, 1]")));
            }
        }
        self.gan.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.cnn.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }

    /// Per-class target of the balanced training set.
    pub fn balance_target(&self) -> usize {
        if self.full {
            FULL_TARGET
        } else {
            self.cap
        }
    }

    /// Cap on real beats per GAN training set, if any.
    pub fn gan_cap(&self) -> Option<usize> {
        (!self.full || self.cap_explicit).then_some(self.cap)
    }

    pub fn unbalanced_fraction(&self) -> f64 {
        self.unbalanced_fraction.unwrap_or(if self.full { 1.0 } else { 0.25 })
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_text() {
        let cfg = RunConfig::parse_text(
            "# run\n\ntrain_csv = a.csv\nseed=7\nfull = true\nclasses = 4, 1,1\ngan.epochs = 3\ncnn.lr = 0.01\n",
        )
        .unwrap();
        assert_eq!(cfg.train_csv, PathBuf::from("a.csv"));
        assert_eq!(cfg.seed, 7);
        assert!(cfg.full);
        assert_eq!(cfg.classes, Some(vec![1, 4]));
        assert_eq!(cfg.gan.epochs, 3);
        assert_eq!(cfg.cnn.lr, 0.01);
        assert_eq!(cfg.balance_target(), FULL_TARGET);
        assert_eq!(cfg.gan_cap(), None);
        assert_eq!(cfg.unbalanced_fraction(), 1.0);
    }

    #[test]
    fn errors_name_the_line() {
        assert_eq!(
            RunConfig::parse_text("seed = 1\nbogus = 2\n").unwrap_err(),
            ConfigError("line 2: unknown key \"bogus\"".into())
        );
        assert!(RunConfig::parse_text("seed 1").unwrap_err().0.starts_with("line 1:"));
        assert!(RunConfig::parse_text("seed = x").is_err());
        assert!(RunConfig::parse_text("classes = 5").is_err());
    }

    #[test]
    fn desk_scale_defaults() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.balance_target(), 2000);
        assert_eq!(cfg.gan_cap(), Some(2000));
        assert_eq!(cfg.unbalanced_fraction(), 0.25);
        let mut full = cfg.clone();
        full.set("full", "true").unwrap();
        full.set("cap", "64").unwrap();
        assert_eq!(full.gan_cap(), Some(64));
        assert_eq!(full.balance_target(), FULL_TARGET);
    }
}
