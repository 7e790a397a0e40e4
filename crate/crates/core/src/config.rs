//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are skipped. Every key has a default; unknown
//! keys are rejected. Seeds left unset are derived from the master `seed`.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::association::Scaling;
use crate::error::{Error, Result};
use crate::evaluation::{BatteryMode, BatterySpec};
use crate::learning::LearnerConfig;
use crate::perception::{Appearance, DEFAULT_FEATURES};
use crate::seeds::SubSeeds;
use crate::vae::VaeConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepGrid {
    T,
    D,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,

    pub dataset_size: usize,
    pub babble_retry_budget: usize,

    pub vae_epochs: usize,
    pub vae_batch_size: usize,
    pub vae_learning_rate: f64,
    pub vae_beta: f64,

    pub encoder_features: usize,

    pub d: Scaling,
    pub epsilon: f64,
    pub t: usize,
    pub max_step_deg: f64,
    pub done_tol_deg: f64,
    pub tick_budget: usize,

    pub dataset_seed: Option<u64>,
    pub vae_seed: Option<u64>,
    pub encoder_seed: Option<u64>,
    pub babble_seed: Option<u64>,
    pub latent_seed: Option<u64>,
    pub battery_seed: Option<u64>,

    pub battery_size: usize,
    pub battery_radius: f64,
    pub battery_min_separation: f64,
    pub battery_mode: BatteryMode,
    pub twin_pan_deg: f64,
    pub twin_tilt_deg: f64,

    pub sweep_grid: SweepGrid,
    pub sweep_t_values: Vec<usize>,
    pub sweep_d_values: Vec<Scaling>,
    pub sweep_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let vae = VaeConfig::default();
        let learner = LearnerConfig::default();
        let battery = BatterySpec::default();
        RunConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            dataset_size: 60_000,
            babble_retry_budget: 1000,
            vae_epochs: vae.epochs,
            vae_batch_size: vae.batch_size,
            vae_learning_rate: vae.learning_rate,
            vae_beta: vae.beta,
            encoder_features: DEFAULT_FEATURES,
            d: Scaling::Smooth,
            epsilon: learner.epsilon,
            t: learner.target_pairs,
            max_step_deg: learner.max_step_deg,
            done_tol_deg: learner.done_tol_deg,
            tick_budget: learner.tick_budget,
            dataset_seed: None,
            vae_seed: None,
            encoder_seed: None,
            babble_seed: None,
            latent_seed: None,
            battery_seed: None,
            battery_size: battery.count,
            battery_radius: battery.radius,
            battery_min_separation: battery.min_separation,
            battery_mode: BatteryMode::HeldOut,
            twin_pan_deg: 0.0,
            twin_tilt_deg: 0.0,
            sweep_grid: SweepGrid::T,
            sweep_t_values: vec![25, 50, 100, 200, 400],
            sweep_d_values: vec![Scaling::Sharp, Scaling::Fixed(1.0), Scaling::Smooth],
            sweep_seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{v}`: {e}")))
}

fn list<T>(key: &str, v: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: list is empty")));
    }
    Ok(items)
}

fn scaling(key: &str, v: &str) -> Result<Scaling> {
    Scaling::parse(v).ok_or_else(|| {
        Error::Config(format!(
            "{key}: expected 1/n, sqrt(n) or a positive number, got `{v}`"
        ))
    })
}

fn opt_seed(key: &str, v: &str) -> Result<Option<u64>> {
    if v == "auto" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = num(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "dataset_size" => self.dataset_size = num(key, v)?,
            "babble_retry_budget" => self.babble_retry_budget = num(key, v)?,
            "vae_epochs" => self.vae_epochs = num(key, v)?,
            "vae_batch_size" => self.vae_batch_size = num(key, v)?,
            "vae_learning_rate" => self.vae_learning_rate = num(key, v)?,
            "vae_beta" => self.vae_beta = num(key, v)?,
            "encoder_features" => self.encoder_features = num(key, v)?,
            "d" => self.d = scaling(key, v)?,
            "epsilon" => self.epsilon = num(key, v)?,
            "t" => self.t = num(key, v)?,
            "max_step_deg" => self.max_step_deg = num(key, v)?,
            "done_tol_deg" => self.done_tol_deg = num(key, v)?,
            "tick_budget" => self.tick_budget = num(key, v)?,
            "dataset_seed" => self.dataset_seed = opt_seed(key, v)?,
            "vae_seed" => self.vae_seed = opt_seed(key, v)?,
            "encoder_seed" => self.encoder_seed = opt_seed(key, v)?,
            "babble_seed" => self.babble_seed = opt_seed(key, v)?,
            "latent_seed" => self.latent_seed = opt_seed(key, v)?,
            "battery_seed" => self.battery_seed = opt_seed(key, v)?,
            "battery_size" => self.battery_size = num(key, v)?,
            "battery_radius" => self.battery_radius = num(key, v)?,
            "battery_min_separation" => self.battery_min_separation = num(key, v)?,
            "battery_mode" => {
                self.battery_mode = match v {
                    "heldout" => BatteryMode::HeldOut,
                    "stored" => BatteryMode::Stored,
                    _ => {
                        return Err(Error::Config(format!(
                            "battery_mode: expected heldout or stored, got `{v}`"
                        )))
                    }
                }
            }
            "twin_pan_deg" => self.twin_pan_deg = num(key, v)?,
            "twin_tilt_deg" => self.twin_tilt_deg = num(key, v)?,
            "sweep_grid" => {
                self.sweep_grid = match v {
                    "t" => SweepGrid::T,
                    "d" => SweepGrid::D,
                    _ => {
                        return Err(Error::Config(format!(
                            "sweep_grid: expected t or d, got `{v}`"
                        )))
                    }
                }
            }
            "sweep_t_values" => self.sweep_t_values = list(key, v, |s| num(key, s))?,
            "sweep_d_values" => self.sweep_d_values = list(key, v, |s| scaling(key, s))?,
            "sweep_seeds" => self.sweep_seeds = list(key, v, |s| num(key, s))?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))?;
        self.set(k, v)
    }

    pub fn parse(text: &str, path: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    i + 1
                ))
            })?;
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}:{}: {msg}", path.display(), i + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Every key with its value, in a form `parse` reads back.
    pub fn to_text(&self) -> String {
        let seed = |s: Option<u64>| s.map_or("auto".to_string(), |v| v.to_string());
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("seed", self.seed.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("dataset_size", self.dataset_size.to_string());
        kv("babble_retry_budget", self.babble_retry_budget.to_string());
        kv("vae_epochs", self.vae_epochs.to_string());
        kv("vae_batch_size", self.vae_batch_size.to_string());
        kv("vae_learning_rate", self.vae_learning_rate.to_string());
        kv("vae_beta", self.vae_beta.to_string());
        kv("encoder_features", self.encoder_features.to_string());
        kv("d", self.d.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("t", self.t.to_string());
        kv("max_step_deg", self.max_step_deg.to_string());
        kv("done_tol_deg", self.done_tol_deg.to_string());
        kv("tick_budget", self.tick_budget.to_string());
        kv("dataset_seed", seed(self.dataset_seed));
        kv("vae_seed", seed(self.vae_seed));
        kv("encoder_seed", seed(self.encoder_seed));
        kv("babble_seed", seed(self.babble_seed));
        kv("latent_seed", seed(self.latent_seed));
        kv("battery_seed", seed(self.battery_seed));
        kv("battery_size", self.battery_size.to_string());
        kv("battery_radius", self.battery_radius.to_string());
        kv(
            "battery_min_separation",
            self.battery_min_separation.to_string(),
        );
        kv(
            "battery_mode",
            match self.battery_mode {
                BatteryMode::HeldOut => "heldout",
                BatteryMode::Stored => "stored",
            }
            .into(),
        );
        kv("twin_pan_deg", self.twin_pan_deg.to_string());
        kv("twin_tilt_deg", self.twin_tilt_deg.to_string());
        kv(
            "sweep_grid",
            match self.sweep_grid {
                SweepGrid::T => "t",
                SweepGrid::D => "d",
            }
            .into(),
        );
        kv("sweep_t_values", join(&self.sweep_t_values));
        kv("sweep_d_values", join(&self.sweep_d_values));
        kv("sweep_seeds", join(&self.sweep_seeds));
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_size == 0 {
            return Err(Error::Config("dataset_size must be positive".into()));
        }
        if self.vae_batch_size == 0 {
            return Err(Error::Config("vae_batch_size must be positive".into()));
        }
        if !(self.vae_learning_rate > 0.0) || !(self.vae_beta >= 0.0) {
            return Err(Error::Config(
                "vae_learning_rate must be positive and vae_beta ≥ 0".into(),
            ));
        }
        if self.encoder_features == 0 {
            return Err(Error::Config("encoder_features must be positive".into()));
        }
        if self.battery_size == 0
            || !(self.battery_radius > 0.0)
            || !(self.battery_min_separation >= 0.0)
        {
            return Err(Error::Config(
                "battery_size, battery_radius must be positive".into(),
            ));
        }
        if self.sweep_t_values.contains(&0) {
            return Err(Error::Config("sweep_t_values must be positive".into()));
        }
        self.twin()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.learner().validate()
    }

    /// Derived seeds with explicit overrides applied.
    pub fn seeds(&self) -> SubSeeds {
        let base = SubSeeds::from_master(self.seed);
        SubSeeds {
            dataset: self.dataset_seed.unwrap_or(base.dataset),
            vae: self.vae_seed.unwrap_or(base.vae),
            encoder: self.encoder_seed.unwrap_or(base.encoder),
            babble: self.babble_seed.unwrap_or(base.babble),
            latent: self.latent_seed.unwrap_or(base.latent),
            battery: self.battery_seed.unwrap_or(base.battery),
        }
    }

    pub fn learner(&self) -> LearnerConfig {
        let s = self.seeds();
        LearnerConfig {
            scale: self.d.value(self.encoder_features),
            epsilon: self.epsilon,
            target_pairs: self.t,
            max_step_deg: self.max_step_deg,
            done_tol_deg: self.done_tol_deg,
            babble_seed: s.babble,
            latent_seed: s.latent,
            tick_budget: self.tick_budget,
        }
    }

    pub fn vae(&self) -> VaeConfig {
        VaeConfig {
            epochs: self.vae_epochs,
            batch_size: self.vae_batch_size,
            learning_rate: self.vae_learning_rate,
            beta: self.vae_beta,
            seed: self.seeds().vae,
        }
    }

    pub fn battery(&self) -> BatterySpec {
        BatterySpec {
            count: self.battery_size,
            radius: self.battery_radius,
            min_separation: self.battery_min_separation,
            ..BatterySpec::default()
        }
    }

    pub fn twin(&self) -> Appearance {
        Appearance {
            pan_deg: self.twin_pan_deg,
            tilt_deg: self.twin_tilt_deg,
            ..Appearance::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("d=1/n").unwrap();
        cfg.apply_override("babble_seed=99").unwrap();
        cfg.apply_override("sweep_d_values=0.5, sqrt(n)").unwrap();
        let text = cfg.to_text();
        let back = RunConfig::parse(&text, Path::new("c")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::parse("seed = 3\nbogus = 1\n", Path::new("run.cfg")).unwrap_err();
        assert!(err.to_string().contains("run.cfg:2"), "{err}");
        assert!(RunConfig::default().apply_override("nokey").is_err());
    }

    #[test]
    fn comments_and_blanks() {
        let cfg = RunConfig::parse("# header\n\nt = 7  # pairs\n", Path::new("c")).unwrap();
        assert_eq!(cfg.t, 7);
    }

    #[test]
    fn defaults_match_learner() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let l = cfg.learner();
        assert_eq!(l.scale, (384f64).sqrt());
        assert_eq!(l.target_pairs, 100);
        assert_eq!(l.epsilon, 0.2);
        assert_eq!(l.babble_seed, SubSeeds::from_master(1).babble);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_override("d=-1").is_err());
        assert!(cfg.apply_override("t=abc").is_err());
        cfg.apply_override("t=0").unwrap();
        assert!(cfg.validate().is_err());
    }
}
