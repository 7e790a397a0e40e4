//! Imitation scoring, the test battery and the t/d parameter sweeps.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::association::AssociativeMemory;
use crate::error::{Error, Result};
use crate::kinematics::{JointAngles, NUM_JOINTS};
use crate::learning::{phase2_step, run_phase1, LearnerConfig, Models};
use crate::perception::Appearance;
use crate::seeds;
use crate::vae::LatentPose;

/// Normalized mean absolute error in percent of each joint's range.
pub fn nmae(
    imitated: &JointAngles,
    target: &JointAngles,
    ranges: &[f64; NUM_JOINTS],
) -> Result<f64> {
    let mut sum = 0.0;
    for j in 0..NUM_JOINTS {
        if !(ranges[j] > 0.0) {
            return Err(Error::Domain(format!(
                "joint {j} has non-positive range {}",
                ranges[j]
            )));
        }
        sum += (imitated.0[j] - target.0[j]).abs() / ranges[j];
    }
    Ok(sum / NUM_JOINTS as f64 * 100.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatterySpec {
    pub count: usize,
    /// Postures are decoded from latents inside this radius.
    pub radius: f64,
    pub min_separation: f64,
    pub max_attempts: usize,
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec {
            count: 8,
            radius: 1.0,
            min_separation: 0.5,
            max_attempts: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestBattery {
    pub postures: Vec<JointAngles>,
    pub latents: Vec<LatentPose>,
    pub twin: Appearance,
}

impl TestBattery {
    /// Decoded "good poses": standard-normal latents within `radius`, kept
    /// only if at least `min_separation` from every latent kept before.
    pub fn sample(models: &Models, seed: u64, spec: &BatterySpec) -> Result<TestBattery> {
        if spec.count == 0 {
            return Err(Error::Config("battery needs at least one posture".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut latents: Vec<LatentPose> = Vec::with_capacity(spec.count);
        let mut attempts = 0;
        while latents.len() < spec.count {
            if attempts == spec.max_attempts {
                return Err(Error::SamplingFailed { attempts });
            }
            attempts += 1;
            let z = LatentPose([rng.sample(StandardNormal), rng.sample(StandardNormal)]);
            if z.0[0].hypot(z.0[1]) > spec.radius {
                continue;
            }
            if latents
                .iter()
                .all(|o| o.distance(&z) >= spec.min_separation)
            {
                latents.push(z);
            }
        }
        let postures = latents.iter().map(|z| models.decode_pose(z)).collect();
        Ok(TestBattery {
            postures,
            latents,
            twin: models.appearance,
        })
    }

    pub fn len(&self) -> usize {
        self.postures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postures.is_empty()
    }

    pub fn with_twin(mut self, twin: Appearance) -> TestBattery {
        self.twin = twin;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub imitated: Vec<JointAngles>,
    pub per_posture: Vec<f64>,
    pub mean: f64,
}

pub fn evaluate_detailed(
    memory: &AssociativeMemory,
    battery: &TestBattery,
    models: &Models,
) -> Result<Evaluation> {
    if battery.is_empty() {
        return Err(Error::Config("empty test battery".into()));
    }
    let ranges = models.body.ranges();
    let mut imitated = Vec::with_capacity(battery.len());
    let mut per_posture = Vec::with_capacity(battery.len());
    for target in &battery.postures {
        let out = phase2_step(target, &battery.twin, memory, models)?;
        per_posture.push(nmae(&out, target, &ranges)?);
        imitated.push(out);
    }
    let mean = per_posture.iter().sum::<f64>() / per_posture.len() as f64;
    Ok(Evaluation {
        imitated,
        per_posture,
        mean,
    })
}

/// Mean NMAE over the battery, in percent.
pub fn evaluate(memory: &AssociativeMemory, battery: &TestBattery, models: &Models) -> Result<f64> {
    Ok(evaluate_detailed(memory, battery, models)?.mean)
}

/// Whether battery postures are force-stored before babbling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatteryMode {
    HeldOut,
    Stored,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub t: usize,
    pub d: f64,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub t: usize,
    pub d: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub nmae_percent: f64,
    pub ticks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepFailure {
    pub cell: SweepCell,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,d,epsilon,seed,nmae_percent,ticks\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t, r.d, r.epsilon, r.seed, r.nmae_percent, r.ticks
            )
            .unwrap();
        }
        out
    }

    /// Mean NMAE per (t, d, ε), in first-appearance order, with the number
    /// of successful seeds.
    pub fn cell_means(&self) -> Vec<(usize, f64, f64, f64, usize)> {
        let mut means: Vec<(usize, f64, f64, f64, usize)> = Vec::new();
        for r in &self.rows {
            match means
                .iter_mut()
                .find(|m| m.0 == r.t && m.1 == r.d && m.2 == r.epsilon)
            {
                Some(m) => {
                    m.3 += r.nmae_percent;
                    m.4 += 1;
                }
                None => means.push((r.t, r.d, r.epsilon, r.nmae_percent, 1)),
            }
        }
        for m in &mut means {
            m.3 /= m.4 as f64;
        }
        means
    }

    pub fn means_csv(&self) -> String {
        let mut out = String::from("t,d,epsilon,mean_nmae_percent,seeds\n");
        for (t, d, e, m, n) in self.cell_means() {
            writeln!(out, "{t},{d},{e},{m},{n}").unwrap();
        }
        out
    }
}

/// Learner config of one cell: the cell's t, d, ε, and babble/latent seeds
/// derived from the cell seed.
pub fn cell_config(base: &LearnerConfig, cell: &SweepCell) -> LearnerConfig {
    LearnerConfig {
        scale: cell.d,
        epsilon: cell.epsilon,
        target_pairs: cell.t,
        babble_seed: seeds::derive(cell.seed, seeds::Stream::Babble),
        latent_seed: seeds::derive(cell.seed, seeds::Stream::Latent),
        ..base.clone()
    }
}

pub fn run_cell(
    base: &LearnerConfig,
    cell: &SweepCell,
    models: &Models,
    battery: &TestBattery,
    mode: BatteryMode,
) -> Result<SweepRow> {
    let config = cell_config(base, cell);
    let forced: &[JointAngles] = match mode {
        BatteryMode::HeldOut => &[],
        BatteryMode::Stored => &battery.postures,
    };
    let (memory, trace) = run_phase1(&config, models, forced)?;
    let nmae_percent = evaluate(&memory, battery, models)?;
    Ok(SweepRow {
        t: cell.t,
        d: cell.d,
        epsilon: cell.epsilon,
        seed: cell.seed,
        nmae_percent,
        ticks: trace.total_ticks(),
    })
}

/// Runs every cell in parallel. Rows keep the order of `cells`; failing
/// cells are listed separately.
pub fn sweep(
    base: &LearnerConfig,
    cells: &[SweepCell],
    models: &Models,
    battery: &TestBattery,
    mode: BatteryMode,
) -> SweepResult {
    let outcomes: Vec<_> = cells
        .par_iter()
        .map(|cell| run_cell(base, cell, models, battery, mode))
        .collect();
    let mut result = SweepResult::default();
    for (cell, outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok(row) => result.rows.push(row),
            Err(e) => result.failures.push(SweepFailure {
                cell: *cell,
                message: e.to_string(),
            }),
        }
    }
    result
}

pub fn sweep_t(
    base: &LearnerConfig,
    t_values: &[usize],
    seeds: &[u64],
    models: &Models,
    battery: &TestBattery,
    mode: BatteryMode,
) -> Result<SweepResult> {
    if t_values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let cells: Vec<SweepCell> = t_values
        .iter()
        .flat_map(|&t| {
            seeds.iter().map(move |&seed| SweepCell {
                t,
                d: base.scale,
                epsilon: base.epsilon,
                seed,
            })
        })
        .collect();
    Ok(sweep(base, &cells, models, battery, mode))
}

pub fn sweep_d(
    base: &LearnerConfig,
    d_values: &[f64],
    seeds: &[u64],
    models: &Models,
    battery: &TestBattery,
    mode: BatteryMode,
) -> Result<SweepResult> {
    if d_values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let cells: Vec<SweepCell> = d_values
        .iter()
        .flat_map(|&d| {
            seeds.iter().map(move |&seed| SweepCell {
                t: base.target_pairs,
                d,
                epsilon: base.epsilon,
                seed,
            })
        })
        .collect();
    Ok(sweep(base, &cells, models, battery, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::BodyModel;
    use crate::perception::RandomFeatureEncoder;
    use crate::vae::VaeParams;

    fn toy_models() -> Models {
        Models {
            body: BodyModel::default(),
            vae: VaeParams::init(5),
            encoder: Box::new(RandomFeatureEncoder::new(9, 64).unwrap()),
            appearance: Appearance::default(),
        }
    }

    #[test]
    fn nmae_examples() {
        let body = BodyModel::default();
        let ranges = body.ranges();
        let a = body.rest_pose();
        assert_eq!(nmae(&a, &a, &ranges).unwrap(), 0.0);
        let mut b = a;
        b.0[3] += ranges[3];
        assert!((nmae(&b, &a, &ranges).unwrap() - 10.0).abs() < 1e-12);
        let c = JointAngles(std::array::from_fn(|j| a.0[j] + ranges[j] / 2.0));
        assert!((nmae(&c, &a, &ranges).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(
            nmae(&a, &b, &ranges).unwrap(),
            nmae(&b, &a, &ranges).unwrap()
        );
        let mut zero = ranges;
        zero[4] = 0.0;
        assert!(matches!(nmae(&a, &b, &zero), Err(Error::Domain(_))));
    }

    #[test]
    fn battery_respects_its_settings() {
        let models = toy_models();
        let b = TestBattery::sample(&models, 3, &BatterySpec::default()).unwrap();
        assert_eq!(b.len(), 8);
        for (i, z) in b.latents.iter().enumerate() {
            assert!(z.0[0].hypot(z.0[1]) <= 1.0);
            for o in &b.latents[..i] {
                assert!(o.distance(z) >= 0.5);
            }
        }
        assert!(b.postures.iter().all(|p| models.body.within_limits(p)));
        assert_eq!(
            b,
            TestBattery::sample(&models, 3, &BatterySpec::default()).unwrap()
        );
    }

    #[test]
    fn overfull_battery_fails() {
        let models = toy_models();
        let spec = BatterySpec {
            count: 50,
            max_attempts: 500,
            ..BatterySpec::default()
        };
        assert!(matches!(
            TestBattery::sample(&models, 3, &spec),
            Err(Error::SamplingFailed { attempts: 500 })
        ));
    }

    #[test]
    fn one_cell_sweep_matches_direct_evaluation() {
        let models = toy_models();
        let battery = TestBattery::sample(&models, 4, &BatterySpec::default()).unwrap();
        let base = LearnerConfig {
            scale: 8.0,
            target_pairs: 10,
            epsilon: 0.05,
            ..LearnerConfig::default()
        };
        let res = sweep_t(&base, &[10], &[77], &models, &battery, BatteryMode::HeldOut).unwrap();
        assert!(res.failures.is_empty());
        let cell = SweepCell {
            t: 10,
            d: 8.0,
            epsilon: 0.05,
            seed: 77,
        };
        let (memory, trace) = run_phase1(&cell_config(&base, &cell), &models, &[]).unwrap();
        assert_eq!(
            res.rows[0].nmae_percent,
            evaluate(&memory, &battery, &models).unwrap()
        );
        assert_eq!(res.rows[0].ticks, trace.total_ticks());
    }

    #[test]
    fn failing_cells_are_recorded() {
        let models = toy_models();
        let battery = TestBattery::sample(&models, 4, &BatterySpec::default()).unwrap();
        let base = LearnerConfig {
            scale: 8.0,
            epsilon: 1e6,
            tick_budget: 50,
            target_pairs: 5,
            ..LearnerConfig::default()
        };
        let res = sweep_t(
            &base,
            &[5, 1],
            &[1, 2],
            &models,
            &battery,
            BatteryMode::HeldOut,
        )
        .unwrap();
        assert_eq!(res.failures.len(), 2);
        assert_eq!(res.rows.len(), 2);
        assert!(res.rows.iter().all(|r| r.t == 1));
        assert!(res
            .to_csv()
            .starts_with("t,d,epsilon,seed,nmae_percent,ticks\n"));
        assert_eq!(res.cell_means().len(), 1);
    }

    #[test]
    fn empty_grid_rejected() {
        let models = toy_models();
        let battery = TestBattery::sample(&models, 4, &BatterySpec::default()).unwrap();
        let base = LearnerConfig::default();
        assert!(sweep_d(&base, &[], &[1], &models, &battery, BatteryMode::HeldOut).is_err());
    }
}
