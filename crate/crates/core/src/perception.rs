//! Synthetic mirror camera and image encoder.
//!
//! The keypoints are projected by a pinhole camera placed where the robot's
//! mirror reflection would see it from, flipped horizontally, and scaled into
//! a unit image frame. The encoder is a frozen, seeded random Fourier feature
//! map `fᵢ = A·cos(wᵢ · (x − ½) + bᵢ)` over the image vector, standing in for
//! a pretrained vision backbone. Its features have nearly constant norm, so a
//! dot product between two of them behaves like a similarity kernel. Anything
//! implementing [`ImageEncoder`] can be plugged in instead.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, BodyModel, JointAngles, Vec3};

pub const TEXTURE_DIM: usize = 4;
pub const KEYPOINT_COORDS: usize = 12;
pub const IMAGE_DIM: usize = KEYPOINT_COORDS + TEXTURE_DIM;
pub const DEFAULT_FEATURES: usize = 384;

/// Largest pan/tilt offset accepted, degrees.
pub const MAX_VIEW_OFFSET: f64 = 15.0;

/// Virtual camera: the robot's eye reflected through the mirror plane.
const CAMERA: Vec3 = [0.0, -0.05, 1.0];
const FOCAL: f64 = 1.0;

/// Weight scale of the random-feature map (inverse kernel bandwidth).
const FEATURE_GAIN: f64 = 3.0;
/// Feature amplitude `A`. Sets how sharp attention is at a given `d`.
const FEATURE_AMPLITUDE: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Appearance {
    /// Colour/texture parameters in [0, 1].
    pub texture: [f64; TEXTURE_DIM],
    pub pan_deg: f64,
    pub tilt_deg: f64,
}

impl Default for Appearance {
    /// A red robot seen head-on.
    fn default() -> Self {
        Appearance {
            texture: [0.8, 0.1, 0.1, 0.5],
            pan_deg: 0.0,
            tilt_deg: 0.0,
        }
    }
}

impl Appearance {
    pub fn validate(&self) -> Result<()> {
        if self.texture.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Domain(
                "texture components must lie in [0, 1]".into(),
            ));
        }
        if self.pan_deg.abs() > MAX_VIEW_OFFSET || self.tilt_deg.abs() > MAX_VIEW_OFFSET {
            return Err(Error::Domain(format!(
                "viewpoint offset must be within ±{MAX_VIEW_OFFSET}°"
            )));
        }
        Ok(())
    }
}

/// Flipped, normalized keypoint coordinates `(u, v)` ×6 followed by texture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MirrorImage(pub [f64; IMAGE_DIM]);

impl MirrorImage {
    pub fn keypoint(&self, i: usize) -> (f64, f64) {
        (self.0[2 * i], self.0[2 * i + 1])
    }
}

/// Projects a world point to normalized image coordinates, before the mirror flip.
fn project(p: Vec3, pan_deg: f64, tilt_deg: f64) -> (f64, f64) {
    let rel = [p[0] - CAMERA[0], p[1] - CAMERA[1], p[2] - CAMERA[2]];
    // Undo the camera's pan (about y), then its tilt (about x).
    let (sp, cp) = (-pan_deg).to_radians().sin_cos();
    let r1 = [
        cp * rel[0] + sp * rel[2],
        rel[1],
        -sp * rel[0] + cp * rel[2],
    ];
    let (st, ct) = (-tilt_deg).to_radians().sin_cos();
    let r2 = [r1[0], ct * r1[1] - st * r1[2], st * r1[1] + ct * r1[2]];
    // The camera looks down −z with +x to its right and +y up.
    let depth = -r2[2];
    (FOCAL * r2[0] / depth, FOCAL * r2[1] / depth)
}

pub fn render_mirror(
    pose: &JointAngles,
    body: &BodyModel,
    appearance: &Appearance,
) -> Result<MirrorImage> {
    let kp = forward_kinematics(pose, body)?;
    let mut out = [0.0; IMAGE_DIM];
    for (i, p) in kp.points().into_iter().enumerate() {
        let (u, v) = project(p, appearance.pan_deg, appearance.tilt_deg);
        // mirror flip, then image frame: u to the right, v downward, centre at ½
        out[2 * i] = 0.5 - u;
        out[2 * i + 1] = 0.5 - v;
    }
    out[KEYPOINT_COORDS..].copy_from_slice(&appearance.texture);
    Ok(MirrorImage(out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageFeatures(pub Vec<f64>);

impl ImageFeatures {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &ImageFeatures) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Maps a mirror image into the feature space `L_F`.
pub trait ImageEncoder: Send + Sync {
    fn feature_dim(&self) -> usize;
    fn encode(&self, image: &MirrorImage) -> ImageFeatures;
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomFeatureEncoder {
    seed: u64,
    n: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl RandomFeatureEncoder {
    pub fn new(seed: u64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("feature dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..n * IMAGE_DIM)
            .map(|_| FEATURE_GAIN * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let bias = (0..n).map(|_| rng.random_range(-1.0..1.0) * PI).collect();
        Ok(RandomFeatureEncoder {
            seed,
            n,
            weights,
            bias,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * IMAGE_DIM..(i + 1) * IMAGE_DIM]
    }

    /// `A·maxᵢ ‖wᵢ‖`: no feature moves by more than this times the input change.
    pub fn lipschitz_bound(&self) -> f64 {
        FEATURE_AMPLITUDE
            * (0..self.n)
                .map(|i| self.row(i).iter().map(|w| w * w).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
    }

    pub fn amplitude(&self) -> f64 {
        FEATURE_AMPLITUDE
    }

    pub fn to_text(&self) -> String {
        format!("ENC v1\n{}\n{}\n{}\n", self.seed, self.n, IMAGE_DIM)
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&"ENC v1") {
            return Err(Error::parse(path, 1, "expected `ENC v1` header"));
        }
        let field = |i: usize, what: &str| -> Result<u64> {
            lines
                .get(i)
                .ok_or_else(|| Error::parse(path, i + 1, format!("missing {what}")))?
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::parse(path, i + 1, format!("{what}: {e}")))
        };
        let seed = field(1, "encoder seed")?;
        let n = field(2, "feature count")? as usize;
        let input_dim = field(3, "input dimension")? as usize;
        if input_dim != IMAGE_DIM {
            return Err(Error::parse(
                path,
                4,
                format!("input dimension {input_dim} unsupported (expected {IMAGE_DIM})"),
            ));
        }
        Self::new(seed, n)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

impl ImageEncoder for RandomFeatureEncoder {
    fn feature_dim(&self) -> usize {
        self.n
    }

    fn encode(&self, image: &MirrorImage) -> ImageFeatures {
        let x = image.0.map(|v| v - 0.5);
        ImageFeatures(
            (0..self.n)
                .map(|i| {
                    let a: f64 = self.row(i).iter().zip(&x).map(|(w, x)| w * x).sum();
                    FEATURE_AMPLITUDE * (a + self.bias[i]).cos()
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::step_toward;

    fn sample_pose() -> JointAngles {
        JointAngles([-40.0, 25.0, 10.0, 60.0, 0.0, -70.0, 50.0, -5.0, 90.0, 20.0])
    }

    #[test]
    fn render_is_deterministic() {
        let body = BodyModel::default();
        let a = render_mirror(&sample_pose(), &body, &Appearance::default()).unwrap();
        let b = render_mirror(&sample_pose(), &body, &Appearance::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mirrored_pose_flips_image() {
        let body = BodyModel::default();
        let app = Appearance::default();
        let a = render_mirror(&sample_pose(), &body, &app).unwrap();
        let b = render_mirror(&sample_pose().mirrored(), &body, &app).unwrap();
        for i in 0..6 {
            let j = (i + 3) % 6;
            let (ua, va) = a.keypoint(i);
            let (ub, vb) = b.keypoint(j);
            assert!((ua - (1.0 - ub)).abs() < 1e-12);
            assert!((va - vb).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_matches_pinhole_oracle() {
        let body = BodyModel::default();
        let mut pose = body.rest_pose();
        pose.0[0] = -90.0; // left arm straight forward ...
        pose.0[3] = 90.0; // ... forearm up
        let img = render_mirror(&pose, &body, &Appearance::default()).unwrap();
        // upper arm along +z, forearm along +y
        let wrist = [0.11, 0.14, 0.15];
        let depth = 1.0 - wrist[2];
        let u = wrist[0] / depth;
        let v = (wrist[1] + 0.05) / depth;
        let (iu, iv) = img.keypoint(2);
        assert!((iu - (0.5 - u)).abs() < 1e-12, "{iu} vs {}", 0.5 - u);
        assert!((iv - (0.5 - v)).abs() < 1e-12);
        // left shoulder
        let (su, sv) = img.keypoint(0);
        assert!((su - (0.5 - 0.11)).abs() < 1e-12);
        assert!((sv - (0.5 - 0.05)).abs() < 1e-12);
        assert_eq!(&img.0[12..], &Appearance::default().texture);
    }

    #[test]
    fn encoder_regenerates_from_seed() {
        let a = RandomFeatureEncoder::new(42, 64).unwrap();
        let b = RandomFeatureEncoder::from_text(&a.to_text(), Path::new("enc")).unwrap();
        assert_eq!(a, b);
        let img = MirrorImage([0.3; IMAGE_DIM]);
        assert_eq!(a.encode(&img), b.encode(&img));
        assert!(RandomFeatureEncoder::new(1, 0).is_err());
    }

    #[test]
    fn single_coordinate_perturbation_is_lipschitz() {
        let enc = RandomFeatureEncoder::new(7, DEFAULT_FEATURES).unwrap();
        let body = BodyModel::default();
        let img = render_mirror(&sample_pose(), &body, &Appearance::default()).unwrap();
        let base = enc.encode(&img);
        let bound = enc.lipschitz_bound();
        for c in 0..IMAGE_DIM {
            let delta = 1e-3;
            let mut p = img;
            p.0[c] += delta;
            let f = enc.encode(&p);
            for (a, b) in f.0.iter().zip(&base.0) {
                assert!((a - b).abs() <= bound * delta + 1e-15);
            }
        }
    }

    #[test]
    fn trajectory_steps_shrink_with_step_size() {
        let enc = RandomFeatureEncoder::new(3, DEFAULT_FEATURES).unwrap();
        let body = BodyModel::default();
        let app = Appearance::default();
        let start = body.rest_pose();
        let goal = sample_pose();
        let max_jump = |step: f64| {
            let mut cur = start;
            let mut prev = enc.encode(&render_mirror(&cur, &body, &app).unwrap());
            let mut worst = 0.0f64;
            while cur != goal {
                cur = step_toward(&cur, &goal, step);
                let f = enc.encode(&render_mirror(&cur, &body, &app).unwrap());
                worst = worst.max(f.distance(&prev));
                prev = f;
            }
            worst
        };
        let fine = max_jump(1.0);
        let coarse = max_jump(4.0);
        assert!(fine > 0.0 && fine < coarse, "{fine} vs {coarse}");
    }
}
