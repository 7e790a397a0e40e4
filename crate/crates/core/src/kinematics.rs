//! Simulated two-arm body: joint limits, forward and inverse kinematics,
//! posture interpolation and the babbling pose generator.
//!
//! Frame: `x` points to the robot's left, `y` up, `z` forward (out of the
//! chest, toward the mirror). At the all-zero posture both arms hang straight
//! down. Each arm has five joints:
//!
//! | slot | joint            | axis (left arm)            |
//! |------|------------------|----------------------------|
//! | 0    | shoulder pitch   | `x`; negative raises forward |
//! | 1    | shoulder roll    | `z`; positive abducts        |
//! | 2    | shoulder yaw     | upper-arm long axis          |
//! | 3    | elbow flexion    | local `x`; positive bends forward |
//! | 4    | forearm rotation | forearm long axis            |
//!
//! The right arm uses the same angles reflected through the sagittal plane
//! (`x -> -x`), so equal angle blocks give mirror-image arms.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 10;
pub const JOINTS_PER_ARM: usize = 5;

pub type Vec3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arm {
    Left,
    Right,
}

impl Arm {
    pub fn offset(self) -> usize {
        match self {
            Arm::Left => 0,
            Arm::Right => JOINTS_PER_ARM,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Left => Arm::Right,
            Arm::Right => Arm::Left,
        }
    }
}

/// Ten joint angles in degrees: `[left arm ×5, right arm ×5]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointAngles(pub [f64; NUM_JOINTS]);

impl JointAngles {
    pub const ZERO: JointAngles = JointAngles([0.0; NUM_JOINTS]);

    pub fn arm(&self, arm: Arm) -> &[f64] {
        &self.0[arm.offset()..arm.offset() + JOINTS_PER_ARM]
    }

    pub fn arm_mut(&mut self, arm: Arm) -> &mut [f64] {
        &mut self.0[arm.offset()..arm.offset() + JOINTS_PER_ARM]
    }

    /// Swaps the left and right angle blocks, which reflects the posture
    /// through the sagittal plane.
    pub fn mirrored(&self) -> JointAngles {
        let mut out = [0.0; NUM_JOINTS];
        out[..JOINTS_PER_ARM].copy_from_slice(self.arm(Arm::Right));
        out[JOINTS_PER_ARM..].copy_from_slice(self.arm(Arm::Left));
        JointAngles(out)
    }

    pub fn max_abs_diff(&self, other: &JointAngles) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointRange {
    pub min: f64,
    pub max: f64,
}

impl JointRange {
    pub const fn new(min: f64, max: f64) -> Self {
        JointRange { min, max }
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

/// Default per-arm limits: shoulder pitch/roll/yaw, elbow flexion, forearm rotation.
pub const DEFAULT_ARM_LIMITS: [JointRange; JOINTS_PER_ARM] = [
    JointRange::new(-95.0, 10.0),
    JointRange::new(0.0, 160.0),
    JointRange::new(-37.0, 80.0),
    JointRange::new(15.0, 106.0),
    JointRange::new(-90.0, 90.0),
];

#[derive(Clone, Debug, PartialEq)]
pub struct BodyModel {
    pub upper_arm: f64,
    pub forearm: f64,
    /// Left shoulder anchor; the right anchor is its sagittal reflection.
    pub shoulder: Vec3,
    pub limits: [JointRange; NUM_JOINTS],
}

impl Default for BodyModel {
    fn default() -> Self {
        let mut limits = [JointRange::new(0.0, 0.0); NUM_JOINTS];
        limits[..JOINTS_PER_ARM].copy_from_slice(&DEFAULT_ARM_LIMITS);
        limits[JOINTS_PER_ARM..].copy_from_slice(&DEFAULT_ARM_LIMITS);
        BodyModel {
            upper_arm: 0.15,
            forearm: 0.14,
            shoulder: [0.11, 0.0, 0.0],
            limits,
        }
    }
}

impl BodyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.upper_arm > 0.0 && self.forearm > 0.0) {
            return Err(Error::Domain("link lengths must be positive".into()));
        }
        for (j, r) in self.limits.iter().enumerate() {
            if !(r.min < r.max) {
                return Err(Error::Domain(format!(
                    "joint {j}: min {} must be below max {}",
                    r.min, r.max
                )));
            }
            if r.min < -180.0 || r.max > 180.0 {
                return Err(Error::Domain(format!(
                    "joint {j}: range must lie inside [-180, 180]"
                )));
            }
        }
        Ok(())
    }

    pub fn shoulder_anchor(&self, arm: Arm) -> Vec3 {
        reflect(self.shoulder, arm)
    }

    pub fn reach(&self) -> f64 {
        self.upper_arm + self.forearm
    }

    pub fn ranges(&self) -> [f64; NUM_JOINTS] {
        self.limits.map(|r| r.span())
    }

    /// Zero angles clamped into the limits.
    pub fn rest_pose(&self) -> JointAngles {
        JointAngles(std::array::from_fn(|j| self.limits[j].clamp(0.0)))
    }

    pub fn check_limits(&self, pose: &JointAngles) -> Result<()> {
        for (j, (&v, r)) in pose.0.iter().zip(self.limits.iter()).enumerate() {
            if !r.contains(v) {
                return Err(Error::JointLimit {
                    joint: j,
                    value: v,
                    min: r.min,
                    max: r.max,
                });
            }
        }
        Ok(())
    }

    pub fn within_limits(&self, pose: &JointAngles) -> bool {
        self.check_limits(pose).is_ok()
    }

    pub fn clamp(&self, pose: &JointAngles) -> JointAngles {
        JointAngles(std::array::from_fn(|j| self.limits[j].clamp(pose.0[j])))
    }
}

/// Shoulder, elbow and wrist positions of both arms, in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoints {
    pub left: ArmKeypoints,
    pub right: ArmKeypoints,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmKeypoints {
    pub shoulder: Vec3,
    pub elbow: Vec3,
    pub wrist: Vec3,
}

impl Keypoints {
    pub fn arm(&self, arm: Arm) -> &ArmKeypoints {
        match arm {
            Arm::Left => &self.left,
            Arm::Right => &self.right,
        }
    }

    /// `[left shoulder, left elbow, left wrist, right shoulder, right elbow, right wrist]`
    pub fn points(&self) -> [Vec3; 6] {
        [
            self.left.shoulder,
            self.left.elbow,
            self.left.wrist,
            self.right.shoulder,
            self.right.elbow,
            self.right.wrist,
        ]
    }
}

fn reflect(v: Vec3, arm: Arm) -> Vec3 {
    match arm {
        Arm::Left => v,
        Arm::Right => [-v[0], v[1], v[2]],
    }
}

type Mat3 = [[f64; 3]; 3];

fn rot_x(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

fn mat_vec(a: &Mat3, v: Vec3) -> Vec3 {
    std::array::from_fn(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Elbow and wrist of one arm relative to its shoulder, in the left-arm
/// convention.
fn arm_chain(angles: &[f64], upper: f64, fore: f64) -> (Vec3, Vec3) {
    let shoulder = mat_mul(
        &mat_mul(&rot_x(angles[0]), &rot_z(angles[1])),
        &rot_y(angles[2]),
    );
    let elbow = mat_vec(&shoulder, [0.0, -upper, 0.0]);
    let lower = mat_mul(&mat_mul(&shoulder, &rot_x(-angles[3])), &rot_y(angles[4]));
    let wrist = add(elbow, mat_vec(&lower, [0.0, -fore, 0.0]));
    (elbow, wrist)
}

fn arm_keypoints(pose: &JointAngles, arm: Arm, body: &BodyModel) -> ArmKeypoints {
    let anchor = body.shoulder_anchor(arm);
    let (elbow, wrist) = arm_chain(pose.arm(arm), body.upper_arm, body.forearm);
    ArmKeypoints {
        shoulder: anchor,
        elbow: add(anchor, reflect(elbow, arm)),
        wrist: add(anchor, reflect(wrist, arm)),
    }
}

/// Keypoints without the joint-limit check.
pub fn forward_kinematics_unchecked(pose: &JointAngles, body: &BodyModel) -> Keypoints {
    Keypoints {
        left: arm_keypoints(pose, Arm::Left, body),
        right: arm_keypoints(pose, Arm::Right, body),
    }
}

pub fn forward_kinematics(pose: &JointAngles, body: &BodyModel) -> Result<Keypoints> {
    body.check_limits(pose)?;
    Ok(forward_kinematics_unchecked(pose, body))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkConfig {
    pub max_iterations: usize,
    /// Acceptance distance between wrist and target, meters.
    pub tolerance: f64,
    pub damping: f64,
    /// Attempts from random within-limit starts after the rest-posture start fails.
    pub restarts: usize,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig {
            max_iterations: 200,
            tolerance: 0.01,
            damping: 0.02,
            restarts: 1,
        }
    }
}

/// Number of joints IK drives per arm; forearm rotation does not move the wrist.
const IK_JOINTS: usize = 4;
const STALL_ITERATIONS: usize = 10;

/// Damped least-squares IK for one arm's wrist. Returns `None` when the
/// target cannot be reached within limits and budget. The other arm keeps
/// its rest angles, and so does the forearm rotation of the solved arm.
pub fn inverse_kinematics(
    target: Vec3,
    arm: Arm,
    body: &BodyModel,
    config: &IkConfig,
    seed: u64,
) -> Option<JointAngles> {
    let rest = body.rest_pose();
    let anchor = body.shoulder_anchor(arm);
    // Work in the left-arm frame.
    let local = reflect(sub(target, anchor), arm);
    if norm(local) > body.reach() {
        return None;
    }
    let limits = &body.limits[arm.offset()..arm.offset() + JOINTS_PER_ARM];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..=config.restarts {
        let mut q: [f64; JOINTS_PER_ARM] = std::array::from_fn(|j| rest.arm(arm)[j]);
        if attempt > 0 {
            for j in 0..IK_JOINTS {
                q[j] = rng.random_range(limits[j].min..=limits[j].max);
            }
        }
        if let Some(sol) = solve_arm(local, q, limits, body, config) {
            let mut pose = rest;
            pose.arm_mut(arm).copy_from_slice(&sol);
            return Some(pose);
        }
    }
    None
}

fn solve_arm(
    target: Vec3,
    mut q: [f64; JOINTS_PER_ARM],
    limits: &[JointRange],
    body: &BodyModel,
    config: &IkConfig,
) -> Option<[f64; JOINTS_PER_ARM]> {
    let wrist_of = |q: &[f64; JOINTS_PER_ARM]| arm_chain(q, body.upper_arm, body.forearm).1;
    // Iterate past the acceptance tolerance to settle well inside it.
    let settle = config.tolerance * 0.1;
    let lambda2 = config.damping * config.damping;
    let h: f64 = 1e-4;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..config.max_iterations {
        let wrist = wrist_of(&q);
        let err = sub(target, wrist);
        let e = norm(err);
        if e < settle {
            return Some(q);
        }
        // Stuck against a limit with the target out of reach.
        if e < best - 1e-5 {
            best = e;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_ITERATIONS {
                break;
            }
        }
        // Jacobian w.r.t. joint angles in radians, central differences.
        let mut jac = [[0.0; IK_JOINTS]; 3];
        for j in 0..IK_JOINTS {
            let mut plus = q;
            let mut minus = q;
            plus[j] += h.to_degrees();
            minus[j] -= h.to_degrees();
            let d = sub(wrist_of(&plus), wrist_of(&minus));
            for r in 0..3 {
                jac[r][j] = d[r] / (2.0 * h);
            }
        }
        // dq = Jᵀ (J Jᵀ + λ² I)⁻¹ e
        let mut jjt = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                jjt[r][c] = (0..IK_JOINTS).map(|k| jac[r][k] * jac[c][k]).sum();
            }
            jjt[r][r] += lambda2;
        }
        let y = solve3(&jjt, err)?;
        let mut dq = [0.0; IK_JOINTS];
        for (j, d) in dq.iter_mut().enumerate() {
            *d = (0..3).map(|r| jac[r][j] * y[r]).sum::<f64>().to_degrees();
        }
        let largest = dq.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let scale = if largest > 20.0 { 20.0 / largest } else { 1.0 };
        for j in 0..IK_JOINTS {
            q[j] = limits[j].clamp(q[j] + dq[j] * scale);
        }
    }
    (norm(sub(target, wrist_of(&q))) < config.tolerance).then_some(q)
}

fn solve3(a: &Mat3, b: Vec3) -> Option<Vec3> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-18 {
        return None;
    }
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let mut m = *a;
        for r in 0..3 {
            m[r][i] = b[r];
        }
        let d = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        *o = d / det;
    }
    Some(out)
}

/// Moves every joint toward `goal` by at most `max_step` degrees.
pub fn step_toward(current: &JointAngles, goal: &JointAngles, max_step: f64) -> JointAngles {
    debug_assert!(max_step > 0.0);
    JointAngles(std::array::from_fn(|j| {
        let gap = goal.0[j] - current.0[j];
        if gap.abs() <= max_step {
            goal.0[j]
        } else {
            current.0[j] + max_step.copysign(gap)
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BabbleMode {
    LeftOnly,
    RightOnly,
    BothSymmetric,
    BothIndependent,
}

impl BabbleMode {
    pub const ALL: [BabbleMode; 4] = [
        BabbleMode::LeftOnly,
        BabbleMode::RightOnly,
        BabbleMode::BothSymmetric,
        BabbleMode::BothIndependent,
    ];

    pub fn index(self) -> usize {
        match self {
            BabbleMode::LeftOnly => 0,
            BabbleMode::RightOnly => 1,
            BabbleMode::BothSymmetric => 2,
            BabbleMode::BothIndependent => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BabbleConfig {
    /// Reach box for the left wrist, relative to the left shoulder (meters);
    /// the right arm samples the reflected box.
    pub box_min: Vec3,
    pub box_max: Vec3,
    /// Unreachable targets tolerated per pose before giving up.
    pub retry_budget: usize,
    pub ik: IkConfig,
}

impl Default for BabbleConfig {
    fn default() -> Self {
        BabbleConfig {
            box_min: [-0.05, -0.15, 0.05],
            box_max: [0.15, 0.10, 0.20],
            retry_budget: 1000,
            ik: IkConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BabbleSample {
    pub pose: JointAngles,
    pub mode: BabbleMode,
}

fn sample_target<R: Rng>(rng: &mut R, arm: Arm, body: &BodyModel, cfg: &BabbleConfig) -> Vec3 {
    let local: Vec3 = std::array::from_fn(|i| rng.random_range(cfg.box_min[i]..=cfg.box_max[i]));
    add(body.shoulder_anchor(arm), reflect(local, arm))
}

/// Draws one babbling posture: picks a mode uniformly, samples wrist
/// targets in the reach box and solves IK, redrawing targets that fail.
pub fn sample_babbling_pose<R: Rng>(
    rng: &mut R,
    body: &BodyModel,
    cfg: &BabbleConfig,
) -> Result<BabbleSample> {
    let mode = BabbleMode::ALL[rng.random_range(0..4)];
    let mut failures = 0usize;
    let mut solve = |rng: &mut R, arm: Arm| -> Result<JointAngles> {
        loop {
            let target = sample_target(rng, arm, body, cfg);
            let seed = rng.next_u64();
            if let Some(pose) = inverse_kinematics(target, arm, body, &cfg.ik, seed) {
                return Ok(pose);
            }
            failures += 1;
            if failures >= cfg.retry_budget {
                return Err(Error::SamplingFailed { attempts: failures });
            }
        }
    };
    let pose = match mode {
        BabbleMode::LeftOnly => solve(rng, Arm::Left)?,
        BabbleMode::RightOnly => solve(rng, Arm::Right)?,
        BabbleMode::BothSymmetric => {
            let mut pose = solve(rng, Arm::Left)?;
            let left: Vec<f64> = pose.arm(Arm::Left).to_vec();
            pose.arm_mut(Arm::Right).copy_from_slice(&left);
            pose
        }
        BabbleMode::BothIndependent => {
            let mut pose = solve(rng, Arm::Left)?;
            let right = solve(rng, Arm::Right)?;
            pose.arm_mut(Arm::Right)
                .copy_from_slice(right.arm(Arm::Right));
            pose
        }
    };
    debug_assert!(body.within_limits(&pose));
    Ok(BabbleSample { pose, mode })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseDataset {
    pub poses: Vec<JointAngles>,
    pub seed: u64,
    /// Poses drawn per mode, indexed by [`BabbleMode::index`].
    pub mode_counts: [usize; 4],
}

impl PoseDataset {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.poses.len() * 100);
        let header: Vec<String> = (0..NUM_JOINTS).map(|j| format!("j{j}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for pose in &self.poses {
            for (j, v) in pose.0.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                // Avoid a "-0.000000" cell for tiny negatives.
                let v = if v.abs() < 5e-7 { 0.0 } else { *v };
                write!(out, "{v:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a dataset file. Provenance is not stored in the CSV, so `seed`
    /// and `mode_counts` come back zeroed.
    pub fn read_csv(path: &Path, body: &BodyModel) -> Result<PoseDataset> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut poses = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = i + 1;
            if i == 0 {
                let expected: Vec<String> = (0..NUM_JOINTS).map(|j| format!("j{j}")).collect();
                if line.trim() != expected.join(",") {
                    return Err(Error::parse(path, lineno, "expected header j0..j9"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            if vals.len() != NUM_JOINTS {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {NUM_JOINTS} values, got {}", vals.len()),
                ));
            }
            let pose = JointAngles(std::array::from_fn(|j| vals[j]));
            body.check_limits(&pose)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            poses.push(pose);
        }
        Ok(PoseDataset {
            poses,
            seed: 0,
            mode_counts: [0; 4],
        })
    }
}

pub fn generate_dataset(
    count: usize,
    seed: u64,
    body: &BodyModel,
    cfg: &BabbleConfig,
) -> Result<PoseDataset> {
    if count == 0 {
        return Err(Error::Domain("dataset count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut poses = Vec::with_capacity(count);
    let mut mode_counts = [0; 4];
    for _ in 0..count {
        let s = sample_babbling_pose(&mut rng, body, cfg)?;
        mode_counts[s.mode.index()] += 1;
        poses.push(s.pose);
    }
    Ok(PoseDataset {
        poses,
        seed,
        mode_counts,
    })
}
