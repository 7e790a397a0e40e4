//! The five pipeline commands. Each one reads its inputs from and writes its
//! outputs to the run's output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::association::AssociativeMemory;
use crate::config::{RunConfig, SweepGrid};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_detailed, sweep_d, sweep_t, BatteryMode, Evaluation, SweepResult, TestBattery,
};
use crate::kinematics::{generate_dataset, BabbleConfig, BodyModel, PoseDataset, NUM_JOINTS};
use crate::learning::{run_phase1, LearningTrace, Models};
use crate::perception::{Appearance, ImageEncoder, RandomFeatureEncoder};
use crate::vae::{train_vae, TrainReport, VaeParams};

/// File layout inside the output directory.
#[derive(Clone, Debug)]
pub struct Paths {
    pub dir: PathBuf,
}

impl Paths {
    pub fn new(dir: &Path) -> Self {
        Paths {
            dir: dir.to_path_buf(),
        }
    }
    pub fn dataset(&self) -> PathBuf {
        self.dir.join("dataset.csv")
    }
    pub fn weights(&self) -> PathBuf {
        self.dir.join("vae.weights")
    }
    pub fn train_report(&self) -> PathBuf {
        self.dir.join("train_report.txt")
    }
    pub fn encoder(&self) -> PathBuf {
        self.dir.join("encoder.txt")
    }
    pub fn memory(&self) -> PathBuf {
        self.dir.join("memory.assoc")
    }
    pub fn trace(&self) -> PathBuf {
        self.dir.join("trace.csv")
    }
    pub fn imitation(&self) -> PathBuf {
        self.dir.join("imitation.csv")
    }
    pub fn sweep(&self) -> PathBuf {
        self.dir.join("sweep.csv")
    }
    pub fn sweep_means(&self) -> PathBuf {
        self.dir.join("sweep_means.csv")
    }
    pub fn config(&self) -> PathBuf {
        self.dir.join("config.txt")
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare(cfg: &RunConfig) -> Result<Paths> {
    cfg.validate()?;
    let paths = Paths::new(&cfg.out_dir);
    std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    write(&paths.config(), &cfg.to_text())?;
    Ok(paths)
}

pub fn cmd_babble(cfg: &RunConfig) -> Result<PoseDataset> {
    let paths = prepare(cfg)?;
    let babble = BabbleConfig {
        retry_budget: cfg.babble_retry_budget,
        ..BabbleConfig::default()
    };
    let dataset = generate_dataset(
        cfg.dataset_size,
        cfg.seeds().dataset,
        &BodyModel::default(),
        &babble,
    )?;
    dataset.write_csv(&paths.dataset())?;
    Ok(dataset)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(VaeParams, TrainReport)> {
    let paths = prepare(cfg)?;
    let dataset = PoseDataset::read_csv(&paths.dataset(), &BodyModel::default())?;
    let (params, report) = train_vae(&dataset, &cfg.vae())?;
    params.write(&paths.weights())?;
    write(&paths.train_report(), &report.to_text())?;
    Ok((params, report))
}

fn models(vae: VaeParams, encoder: RandomFeatureEncoder) -> Models {
    Models {
        body: BodyModel::default(),
        vae,
        encoder: Box::new(encoder),
        appearance: Appearance::default(),
    }
}

/// Loads the trained weights and builds the encoder from the config,
/// recording it next to the weights.
fn fresh_models(cfg: &RunConfig, paths: &Paths) -> Result<Models> {
    let vae = VaeParams::read(&paths.weights())?;
    let encoder = RandomFeatureEncoder::new(cfg.seeds().encoder, cfg.encoder_features)?;
    encoder.write(&paths.encoder())?;
    Ok(models(vae, encoder))
}

pub fn battery(cfg: &RunConfig, models: &Models) -> Result<TestBattery> {
    Ok(TestBattery::sample(models, cfg.seeds().battery, &cfg.battery())?.with_twin(cfg.twin()))
}

pub fn cmd_learn(cfg: &RunConfig) -> Result<(AssociativeMemory, LearningTrace)> {
    let paths = prepare(cfg)?;
    let models = fresh_models(cfg, &paths)?;
    let forced = match cfg.battery_mode {
        BatteryMode::HeldOut => Vec::new(),
        BatteryMode::Stored => battery(cfg, &models)?.postures,
    };
    let (memory, trace) = run_phase1(&cfg.learner(), &models, &forced)?;
    memory.write(&paths.memory())?;
    write(&paths.trace(), &trace.to_csv())?;
    Ok((memory, trace))
}

pub fn cmd_imitate(cfg: &RunConfig) -> Result<Evaluation> {
    let paths = prepare(cfg)?;
    let vae = VaeParams::read(&paths.weights())?;
    let encoder = RandomFeatureEncoder::read(&paths.encoder())?;
    let memory = AssociativeMemory::read(&paths.memory())?.with_scale(cfg.learner().scale)?;
    if memory.key_dim() != encoder.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: encoder.feature_dim(),
            got: memory.key_dim(),
        });
    }
    let models = models(vae, encoder);
    let battery = battery(cfg, &models)?;
    let eval = evaluate_detailed(&memory, &battery, &models)?;

    let mut csv = String::from("posture,nmae_percent");
    for prefix in ["target", "imitated"] {
        for j in 0..NUM_JOINTS {
            write!(csv, ",{prefix}_j{j}").unwrap();
        }
    }
    csv.push('\n');
    for (i, (target, out)) in battery.postures.iter().zip(&eval.imitated).enumerate() {
        write!(csv, "{i},{}", eval.per_posture[i]).unwrap();
        for v in target.0.iter().chain(out.0.iter()) {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    write(&paths.imitation(), &csv)?;
    Ok(eval)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepResult> {
    let paths = prepare(cfg)?;
    let models = fresh_models(cfg, &paths)?;
    let battery = battery(cfg, &models)?;
    let base = cfg.learner();
    let result = match cfg.sweep_grid {
        SweepGrid::T => sweep_t(
            &base,
            &cfg.sweep_t_values,
            &cfg.sweep_seeds,
            &models,
            &battery,
            cfg.battery_mode,
        )?,
        SweepGrid::D => {
            let n = cfg.encoder_features;
            let ds: Vec<f64> = cfg.sweep_d_values.iter().map(|s| s.value(n)).collect();
            sweep_d(
                &base,
                &ds,
                &cfg.sweep_seeds,
                &models,
                &battery,
                cfg.battery_mode,
            )?
        }
    };
    write(&paths.sweep(), &result.to_csv())?;
    write(&paths.sweep_means(), &result.means_csv())?;
    Ok(result)
}
