//! Deterministic synthetic sign datasets with class-dependent geometry.
//!
//! Each class moves both wrists along its own arc and holds its own finger
//! spread; every instance then gets a random global translation and scale
//! plus per-point uniform noise. Designated "hard" classes use a larger
//! noise amplitude.

use std::f64::consts::TAU;

use rand::Rng;

use crate::pose_data::{body, Dataset, GlossVocabulary, LandmarkLayout, PoseFrame, PoseSequence, Segment};
use crate::rng::StreamRng;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub frames: usize,
    /// Uniform noise amplitude in pixels.
    pub noise_px: f64,
    pub hard_classes: Vec<usize>,
    pub hard_noise_px: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            per_class: 3,
            frames: 8,
            noise_px: 2.0,
            hard_classes: Vec::new(),
            hard_noise_px: 2.0,
            seed: 0,
        }
    }
}

pub fn class_gloss(class: usize) -> String {
    format!("sign_{class:03}")
}

fn hand_points(wrist: [f64; 2], heading: f64, spread: f64, length: f64) -> Vec<[f64; 2]> {
    let mut pts = vec![wrist];
    for finger in 0..5 {
        let angle = heading + spread * (finger as f64 - 2.0) / 2.0;
        let (s, c) = angle.sin_cos();
        for joint in 1..=4 {
            let r = length * joint as f64 / 4.0 * (0.7 + 0.075 * finger as f64);
            pts.push([wrist[0] + c * r, wrist[1] + s * r]);
        }
    }
    pts
}

/// Clean (noise-free, untransformed) landmarks of `class` at time `t ∈ [0, 1]`.
pub fn template_frame(class: usize, classes: usize, t: f64) -> Vec<[f64; 2]> {
    let layout = LandmarkLayout::STANDARD;
    let phase = TAU * class as f64 / classes.max(1) as f64;
    let mut pts = vec![[0.0; 2]; layout.total_points()];
    let b = layout.range(Segment::Body).start;
    let base: [(usize, [f64; 2]); 7] = [
        (body::NOSE, [320.0, 100.0]),
        (body::NECK, [320.0, 160.0]),
        (body::RIGHT_SHOULDER, [260.0, 165.0]),
        (body::RIGHT_ELBOW, [240.0, 245.0]),
        (body::LEFT_SHOULDER, [380.0, 165.0]),
        (body::LEFT_ELBOW, [400.0, 245.0]),
        (body::MID_HIP, [320.0, 330.0]),
    ];
    for (i, p) in base {
        pts[b + i] = p;
    }
    let sweep = 0.6 * t;
    let right_wrist = {
        let a = phase + sweep;
        [240.0 + 70.0 * a.cos(), 200.0 + 60.0 * a.sin()]
    };
    let left_wrist = {
        let a = 2.0 * phase - sweep;
        [400.0 + 50.0 * a.cos(), 210.0 + 45.0 * a.sin()]
    };
    pts[b + body::RIGHT_WRIST] = right_wrist;
    pts[b + body::LEFT_WRIST] = left_wrist;

    let spread = 0.3 + 0.9 * ((class * 7) % classes.max(1)) as f64 / classes.max(1) as f64;
    let rh = hand_points(right_wrist, phase - 1.2, spread, 40.0);
    let lh = hand_points(left_wrist, -phase - 1.9, 1.5 - spread * 0.8, 36.0);
    for (i, p) in layout.range(Segment::RightHand).zip(rh) {
        pts[i] = p;
    }
    for (i, p) in layout.range(Segment::LeftHand).zip(lh) {
        pts[i] = p;
    }
    for (k, i) in layout.range(Segment::Face).enumerate() {
        let a = TAU * k as f64 / 70.0;
        pts[i] = [320.0 + 32.0 * a.cos(), 95.0 + 42.0 * a.sin()];
    }
    pts
}

fn sequence<R: Rng + ?Sized>(class: usize, classes: usize, frames: usize, noise: f64, rng: &mut R) -> PoseSequence {
    let scale = rng.gen_range(0.8..1.25);
    let shift = [rng.gen_range(-60.0..60.0), rng.gen_range(-40.0..40.0)];
    let frames = (0..frames)
        .map(|f| {
            let t = if frames > 1 { f as f64 / (frames - 1) as f64 } else { 0.0 };
            let pts = template_frame(class, classes, t)
                .into_iter()
                .map(|p| {
                    let jitter = |rng: &mut R| if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 };
                    [p[0] * scale + shift[0] + jitter(rng), p[1] * scale + shift[1] + jitter(rng)]
                })
                .collect();
            PoseFrame::from_legacy(pts).expect("template has 121 points")
        })
        .collect();
    PoseSequence {
        frames,
        gloss_id: class,
        signer_id: 0,
        variation_id: 0,
        source_id: String::new(),
    }
}

pub fn synthetic_dataset(spec: &SyntheticSpec) -> Dataset {
    use rand::SeedableRng;
    let mut rng = StreamRng::seed_from_u64(spec.seed);
    let vocab = GlossVocabulary::new((0..spec.classes).map(class_gloss)).expect("unique glosses");
    let mut sequences = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        let noise = if spec.hard_classes.contains(&class) {
            spec.hard_noise_px
        } else {
            spec.noise_px
        };
        for k in 0..spec.per_class {
            let mut s = sequence(class, spec.classes, spec.frames, noise, &mut rng);
            s.signer_id = (k % 5) as i64;
            s.source_id = format!("synthetic/{class}/{k}");
            sequences.push(s);
        }
    }
    Dataset::new(vocab, sequences).expect("labels within vocabulary")
}
