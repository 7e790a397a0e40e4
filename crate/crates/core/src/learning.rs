//! Learning to read one's own posture at the mirror, then imitating a twin.
//!
//! Phase 1 babbles toward random decoded latent goals. On every tick the
//! mirror image is encoded into a key, proprioception into a value, and the
//! pair is stored only if the memory's current answer for that key is more
//! than `epsilon` away from the value. Phase 1 ends once `t` pairs are held.
//! Phase 2 answers a twin's image with the memory and decodes the result.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::association::AssociativeMemory;
use crate::error::{Error, Result};
use crate::kinematics::{step_toward, BodyModel, JointAngles};
use crate::perception::{render_mirror, Appearance, ImageEncoder, ImageFeatures};
use crate::vae::{decode, denormalize, encode_mean, normalize, LatentPose, VaeParams, LATENT_DIM};

/// The ready-made models plus the body they drive.
pub struct Models {
    pub body: BodyModel,
    pub vae: VaeParams,
    pub encoder: Box<dyn ImageEncoder>,
    /// The learner's own look in the mirror.
    pub appearance: Appearance,
}

impl Models {
    pub fn features(&self, pose: &JointAngles, appearance: &Appearance) -> Result<ImageFeatures> {
        let image = render_mirror(pose, &self.body, appearance)?;
        Ok(self.encoder.encode(&image))
    }

    /// Proprioceptive encoding `H(p)` through the mean head.
    pub fn pose_latent(&self, pose: &JointAngles) -> Result<LatentPose> {
        Ok(encode_mean(&self.vae, &normalize(pose)?))
    }

    /// `G(z)` in degrees, clamped into the joint limits.
    pub fn decode_pose(&self, z: &LatentPose) -> JointAngles {
        self.body.clamp(&denormalize(&decode(&self.vae, z)))
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.feature_dim()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    /// Scaling factor `d` of the attention softmax.
    pub scale: f64,
    /// Redundancy threshold `ε` in latent units.
    pub epsilon: f64,
    /// Number of pairs `t` that ends phase 1.
    pub target_pairs: usize,
    pub max_step_deg: f64,
    pub done_tol_deg: f64,
    pub babble_seed: u64,
    pub latent_seed: u64,
    pub tick_budget: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            scale: (crate::perception::DEFAULT_FEATURES as f64).sqrt(),
            epsilon: 0.2,
            target_pairs: 100,
            max_step_deg: 2.0,
            done_tol_deg: 1.0,
            babble_seed: 1,
            latent_seed: 2,
            tick_budget: 200_000,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "d must be positive, got {}",
                self.scale
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be ≥ 0, got {}",
                self.epsilon
            )));
        }
        if self.target_pairs == 0 {
            return Err(Error::Config("t must be at least 1".into()));
        }
        if !(self.max_step_deg > 0.0) {
            return Err(Error::Config("max_step_deg must be positive".into()));
        }
        if !(self.done_tol_deg >= 0.0) {
            return Err(Error::Config("done_tol_deg must be ≥ 0".into()));
        }
        if self.tick_budget < self.target_pairs {
            return Err(Error::Config(format!(
                "tick budget {} is below t = {}",
                self.tick_budget, self.target_pairs
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub stored: bool,
    /// `‖v − w‖`; infinite while the memory is empty.
    pub dist: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningTrace {
    pub ticks: Vec<TickRecord>,
    /// Pairs stored unconditionally before babbling started.
    pub forced: usize,
}

impl LearningTrace {
    pub fn total_ticks(&self) -> usize {
        self.ticks.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tick,stored,dist,pairs\n");
        for r in &self.ticks {
            writeln!(
                out,
                "{},{},{},{}",
                r.tick,
                u8::from(r.stored),
                r.dist,
                r.pairs
            )
            .unwrap();
        }
        out
    }
}

/// Phase-1 state: body posture, current goal, the growing memory.
pub struct Learner<'a> {
    config: LearnerConfig,
    models: &'a Models,
    memory: AssociativeMemory,
    posture: JointAngles,
    goal: Option<JointAngles>,
    latent_rng: ChaCha8Rng,
    trace: LearningTrace,
}

fn sample_latent<R: Rng>(rng: &mut R) -> LatentPose {
    LatentPose(std::array::from_fn(|_| rng.sample(StandardNormal)))
}

impl<'a> Learner<'a> {
    /// Starts at a decoded random posture drawn from the babble seed.
    pub fn new(config: LearnerConfig, models: &'a Models) -> Result<Self> {
        config.validate()?;
        let mut babble_rng = ChaCha8Rng::seed_from_u64(config.babble_seed);
        let posture = models.decode_pose(&sample_latent(&mut babble_rng));
        Ok(Learner {
            memory: AssociativeMemory::new(models.feature_dim(), LATENT_DIM, config.scale)?,
            latent_rng: ChaCha8Rng::seed_from_u64(config.latent_seed),
            config,
            models,
            posture,
            goal: None,
            trace: LearningTrace::default(),
        })
    }

    pub fn memory(&self) -> &AssociativeMemory {
        &self.memory
    }

    pub fn trace(&self) -> &LearningTrace {
        &self.trace
    }

    pub fn posture(&self) -> &JointAngles {
        &self.posture
    }

    pub fn is_done(&self) -> bool {
        self.memory.len() >= self.config.target_pairs
    }

    pub fn into_parts(self) -> (AssociativeMemory, LearningTrace) {
        (self.memory, self.trace)
    }

    /// Stores the association for `pose` without the redundancy check and
    /// without moving the body.
    pub fn inject(&mut self, pose: &JointAngles) -> Result<()> {
        let key = self.models.features(pose, &self.models.appearance)?;
        let value = self.models.pose_latent(pose)?;
        self.memory.add_pair(&key.0, &value.0)?;
        self.trace.forced += 1;
        Ok(())
    }

    /// One perception/association/motion step. Returns whether a pair was stored.
    pub fn tick(&mut self) -> Result<bool> {
        let models = self.models;
        let key = models.features(&self.posture, &models.appearance)?;
        let value = models.pose_latent(&self.posture)?;
        let dist = if self.memory.is_empty() {
            f64::INFINITY
        } else {
            let w = self.memory.respond(&key.0)?;
            value
                .0
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let stored = dist > self.config.epsilon;
        if stored {
            self.memory.add_pair(&key.0, &value.0)?;
        }
        self.trace.ticks.push(TickRecord {
            tick: self.trace.ticks.len(),
            stored,
            dist,
            pairs: self.memory.len(),
        });
        if self.is_done() {
            return Ok(stored);
        }

        let arrived = self
            .goal
            .map(|g| self.posture.max_abs_diff(&g) <= self.config.done_tol_deg)
            .unwrap_or(true);
        if arrived {
            let z = sample_latent(&mut self.latent_rng);
            self.goal = Some(models.decode_pose(&z));
        }
        if let Some(goal) = &self.goal {
            self.posture = step_toward(&self.posture, goal, self.config.max_step_deg);
        }
        Ok(stored)
    }
}

/// Runs phase 1 until `t` pairs are stored. `forced` postures are stored
/// first, unconditionally.
pub fn run_phase1(
    config: &LearnerConfig,
    models: &Models,
    forced: &[JointAngles],
) -> Result<(AssociativeMemory, LearningTrace)> {
    let mut learner = Learner::new(config.clone(), models)?;
    for pose in forced {
        if learner.is_done() {
            break;
        }
        learner.inject(pose)?;
    }
    while !learner.is_done() {
        if learner.trace.total_ticks() >= config.tick_budget {
            return Err(Error::TickBudget {
                ticks: config.tick_budget,
                pairs: learner.memory.len(),
                target: config.target_pairs,
            });
        }
        learner.tick()?;
    }
    Ok(learner.into_parts())
}

/// Imitation: encode the twin's image, query the memory, decode the answer.
pub fn phase2_step(
    observed: &JointAngles,
    twin: &Appearance,
    memory: &AssociativeMemory,
    models: &Models,
) -> Result<JointAngles> {
    let query = models.features(observed, twin)?;
    let v = memory.respond(&query.0)?;
    Ok(models.decode_pose(&LatentPose([v[0], v[1]])))
}
