//! Geometric augmentations applied in pixel space, before normalization.
//!
//! Every call to [`augment`] consumes exactly [`DRAWS_PER_CALL`] uniform
//! `f64` draws from the random stream, whether or not a family fires:
//!
//! | family      | draws                          |
//! |-------------|--------------------------------|
//! | rotation    | apply, angle                   |
//! | squeeze     | apply, amount                  |
//! | perspective | apply, amount                  |
//! | arm joint   | apply, side, joint, angle      |
//!
//! A family fires when its apply draw is below `apply_prob` and its bound is
//! positive. Families that do not fire leave the sequence untouched bit for
//! bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pose_data::{body, LandmarkLayout, PoseSequence, Segment};

use super::PreprocessError;

pub const DRAWS_PER_CALL: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationDistribution {
    /// Whole-sequence rotation about the centroid, θ ~ U(−max, +max) degrees.
    pub rotate_max_deg: f64,
    /// Horizontal squeeze toward the centroid by a factor ~ U(0, max).
    pub squeeze_max_frac: f64,
    /// Top corners pulled inward by up to this fraction of the box width.
    pub perspective_max_frac: f64,
    /// Rotation of one arm chain about its shoulder or elbow, U(−max, +max) degrees.
    pub arm_joint_max_deg: f64,
    pub apply_prob: f64,
}

impl Default for AugmentationDistribution {
    fn default() -> Self {
        Self {
            rotate_max_deg: 13.0,
            squeeze_max_frac: 0.15,
            perspective_max_frac: 0.10,
            arm_joint_max_deg: 4.0,
            apply_prob: 0.5,
        }
    }
}

impl AugmentationDistribution {
    /// All bounds zero: augmentation is the identity.
    pub fn zero() -> Self {
        Self {
            rotate_max_deg: 0.0,
            squeeze_max_frac: 0.0,
            perspective_max_frac: 0.0,
            arm_joint_max_deg: 0.0,
            apply_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: String| Err(PreprocessError::InvalidDistribution(m));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.rotate_max_deg) {
            return bad(format!("rotate_max_deg must be >= 0, got {}", self.rotate_max_deg));
        }
        if !finite_nonneg(self.arm_joint_max_deg) {
            return bad(format!("arm_joint_max_deg must be >= 0, got {}", self.arm_joint_max_deg));
        }
        if !(0.0..1.0).contains(&self.squeeze_max_frac) {
            return bad(format!("squeeze_max_frac must be in [0, 1), got {}", self.squeeze_max_frac));
        }
        if !(0.0..1.0).contains(&self.perspective_max_frac) {
            return bad(format!(
                "perspective_max_frac must be in [0, 1), got {}",
                self.perspective_max_frac
            ));
        }
        if !(0.0..=1.0).contains(&self.apply_prob) {
            return bad(format!("apply_prob must be in [0, 1], got {}", self.apply_prob));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArmJoint {
    Shoulder,
    Elbow,
}

/// Parameters actually applied by one [`augment_traced`] call.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentTrace {
    /// Angle in degrees and the center used.
    pub rotation: Option<(f64, [f64; 2])>,
    pub squeeze: Option<f64>,
    pub perspective: Option<f64>,
    pub arm: Option<(Side, ArmJoint, f64)>,
}

/// Landmark indices moved when rotating `side`'s arm about `joint`: the more
/// distal arm points plus the whole attached hand.
pub fn arm_chain(side: Side, joint: ArmJoint) -> (usize, Vec<usize>) {
    let layout = LandmarkLayout::STANDARD;
    let (shoulder, elbow, wrist, hand) = match side {
        Side::Left => (body::LEFT_SHOULDER, body::LEFT_ELBOW, body::LEFT_WRIST, Segment::LeftHand),
        Side::Right => (body::RIGHT_SHOULDER, body::RIGHT_ELBOW, body::RIGHT_WRIST, Segment::RightHand),
    };
    let body_offset = layout.range(Segment::Body).start;
    let (pivot, mut chain) = match joint {
        ArmJoint::Shoulder => (shoulder, vec![elbow, wrist]),
        ArmJoint::Elbow => (elbow, vec![wrist]),
    };
    for c in &mut chain {
        *c += body_offset;
    }
    chain.extend(layout.range(hand));
    (pivot + body_offset, chain)
}

fn rotate_about(p: [f64; 2], center: [f64; 2], (sin, cos): (f64, f64)) -> [f64; 2] {
    let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
    [center[0] + cos * dx - sin * dy, center[1] + sin * dx + cos * dy]
}

fn centroid(s: &PoseSequence) -> Option<[f64; 2]> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for f in &s.frames {
        for (_, p) in f.present_points() {
            sx += p[0];
            sy += p[1];
            n += 1;
        }
    }
    (n > 0).then(|| [sx / n as f64, sy / n as f64])
}

fn bounds(s: &PoseSequence) -> Option<([f64; 2], [f64; 2])> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for f in &s.frames {
        for (_, p) in f.present_points() {
            any = true;
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
    }
    any.then_some((lo, hi))
}

pub fn augment<R: Rng + ?Sized>(s: &PoseSequence, dist: &AugmentationDistribution, rng: &mut R) -> PoseSequence {
    augment_traced(s, dist, rng).0
}

pub fn augment_traced<R: Rng + ?Sized>(
    s: &PoseSequence,
    dist: &AugmentationDistribution,
    rng: &mut R,
) -> (PoseSequence, AugmentTrace) {
    let mut draws = [0.0f64; DRAWS_PER_CALL];
    for d in &mut draws {
        *d = rng.gen::<f64>();
    }
    let fires = |u: f64, bound: f64| bound > 0.0 && u < dist.apply_prob;

    let mut out = s.clone();
    let mut trace = AugmentTrace::default();

    if fires(draws[0], dist.rotate_max_deg) {
        if let Some(c) = centroid(&out) {
            let deg = (2.0 * draws[1] - 1.0) * dist.rotate_max_deg;
            let sc = deg.to_radians().sin_cos();
            out.map_present(|_, p| rotate_about(p, c, sc));
            trace.rotation = Some((deg, c));
        }
    }

    if fires(draws[2], dist.squeeze_max_frac) {
        if let Some(c) = centroid(&out) {
            let amount = draws[3] * dist.squeeze_max_frac;
            out.map_present(|_, p| [c[0] + (p[0] - c[0]) * (1.0 - amount), p[1]]);
            trace.squeeze = Some(amount);
        }
    }

    if fires(draws[4], dist.perspective_max_frac) {
        if let Some((lo, hi)) = bounds(&out) {
            let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
            if w > 0.0 && h > 0.0 {
                let frac = draws[5] * dist.perspective_max_frac;
                // top edge (min y) narrows by frac·w per side, bottom edge fixed
                out.map_present(|_, p| {
                    let t = (hi[1] - p[1]) / h;
                    let shift = frac * w * t;
                    [lo[0] + shift + (p[0] - lo[0]) * (w - 2.0 * shift) / w, p[1]]
                });
                trace.perspective = Some(frac);
            }
        }
    }

    if fires(draws[6], dist.arm_joint_max_deg) {
        let side = if draws[7] < 0.5 { Side::Left } else { Side::Right };
        let joint = if draws[8] < 0.5 { ArmJoint::Shoulder } else { ArmJoint::Elbow };
        let deg = (2.0 * draws[9] - 1.0) * dist.arm_joint_max_deg;
        let sc = deg.to_radians().sin_cos();
        let (pivot, chain) = arm_chain(side, joint);
        for frame in &mut out.frames {
            if !frame.is_present(pivot) {
                continue;
            }
            let center = frame.points()[pivot];
            for &i in &chain {
                if frame.is_present(i) {
                    let p = frame.points()[i];
                    frame.points_mut()[i] = rotate_about(p, center, sc);
                }
            }
        }
        trace.arm = Some((side, joint, deg));
    }

    (out, trace)
}
