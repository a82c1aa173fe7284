use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::pose_data::{body, LandmarkLayout, PoseFrame, PoseSequence, Segment, FRAME_DIM, NUM_POINTS};

fn sequence_from(frames: Vec<PoseFrame>) -> PoseSequence {
    PoseSequence {
        frames,
        gloss_id: 0,
        signer_id: 0,
        variation_id: 0,
        source_id: String::new(),
    }
}

fn random_sequence(seed: u64, frames: usize, present_prob: f64) -> PoseSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..frames)
        .map(|_| {
            let pts = (0..NUM_POINTS)
                .map(|_| [rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)])
                .collect();
            let present = (0..NUM_POINTS).map(|_| rng.gen_bool(present_prob)).collect();
            PoseFrame::new(pts, present).unwrap()
        })
        .collect();
    sequence_from(frames)
}

fn bits(s: &PoseSequence) -> Vec<u64> {
    s.frames
        .iter()
        .flat_map(|f| f.points().iter().flat_map(|p| [p[0].to_bits(), p[1].to_bits()]))
        .collect()
}

#[test]
fn body_box_maps_by_the_formula() {
    // Body points spanning x ∈ [50, 150], y ∈ [300, 500]: a 100 × 200 box.
    let body_pts = [
        [50.0, 300.0],
        [150.0, 500.0],
        [100.0, 400.0],
        [75.0, 320.0],
        [120.0, 480.0],
        [60.0, 350.0],
        [140.0, 450.0],
        [90.0, 310.0],
        [110.0, 490.0],
    ];
    let mut frame = PoseFrame::empty();
    for (i, p) in body_pts.iter().enumerate() {
        frame.set(i, *p);
    }
    let out = normalize_sequence(&sequence_from(vec![frame])).unwrap();

    // Independent re-statement: square side = max extent, centered.
    let (cx, cy, side) = ((50.0 + 150.0) / 2.0, (300.0 + 500.0) / 2.0, 200.0);
    for (i, p) in body_pts.iter().enumerate() {
        let ex = (p[0] - cx) / side + 0.5;
        let ey = (p[1] - cy) / side + 0.5;
        assert!((out.row(0)[2 * i] - ex).abs() < 1e-12);
        assert!((out.row(0)[2 * i + 1] - ey).abs() < 1e-12);
    }
    assert!((out.row(0)[0] - 0.25).abs() < 1e-12);
    assert!((out.row(0)[3] - 1.0).abs() < 1e-12);
    assert!(out.row(0)[2 * 9..].iter().all(|&v| v == 0.0));
}

#[test]
fn hands_get_their_own_box() {
    let layout = LandmarkLayout::STANDARD;
    let mut frame = PoseFrame::empty();
    frame.set(body::NECK, [0.0, 0.0]);
    frame.set(body::MID_HIP, [0.0, 1000.0]);
    let lh = layout.range(Segment::LeftHand);
    frame.set(lh.start, [500.0, 500.0]);
    frame.set(lh.start + 1, [510.0, 500.0]);
    let out = normalize(&sequence_from(vec![frame])).unwrap();
    assert_eq!(out.frames[0].points()[lh.start], [0.0, 0.5]);
    assert_eq!(out.frames[0].points()[lh.start + 1], [1.0, 0.5]);
}

#[test]
fn degenerate_box_maps_to_center() {
    let mut frame = PoseFrame::empty();
    frame.set(body::NOSE, [42.0, 17.0]);
    let out = normalize(&sequence_from(vec![frame])).unwrap();
    assert_eq!(out.frames[0].points()[body::NOSE], [0.5, 0.5]);
}

#[test]
fn normalization_errors() {
    assert_eq!(normalize(&sequence_from(vec![])), Err(PreprocessError::EmptySequence));
    assert_eq!(
        normalize(&sequence_from(vec![PoseFrame::empty(); 3])),
        Err(PreprocessError::NoLandmarks)
    );
}

#[test]
fn flatten_layout() {
    let mut frame = PoseFrame::empty();
    frame.set(0, [0.25, 0.75]);
    let flat = flatten(&sequence_from(vec![frame, PoseFrame::empty()]));
    assert_eq!(flat.frames(), 2);
    assert_eq!(flat.row(0)[0], 0.25);
    assert_eq!(flat.row(0)[1], 0.75);
    assert!(flat.row(0)[2..].iter().all(|&v| v == 0.0));
    assert!(flat.row(1).iter().all(|&v| v == 0.0));

    let t = flatten(&random_sequence(1, 50, 0.9)).to_tensor();
    assert_eq!(t.shape(), &[50, FRAME_DIM]);
}

#[test]
fn subsampling_picks_uniform_frames() {
    let s = random_sequence(2, 10, 1.0);
    let sub = subsample_frames(&s, 4);
    assert_eq!(sub.len(), 4);
    for (k, f) in sub.frames.iter().enumerate() {
        assert_eq!(f, &s.frames[k * 10 / 4]);
    }
    assert_eq!(subsample_frames(&s, 20), s);
}

#[test]
fn zero_distribution_is_identity() {
    let s = random_sequence(3, 4, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(bits(&augment(&s, &AugmentationDistribution::zero(), &mut rng)), bits(&s));
}

#[test]
fn augmentation_consumes_a_fixed_number_of_draws() {
    let s = random_sequence(4, 3, 0.8);
    for dist in [AugmentationDistribution::zero(), AugmentationDistribution::default()] {
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        augment(&s, &dist, &mut a);
        for _ in 0..DRAWS_PER_CALL {
            b.gen::<f64>();
        }
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }
}

#[test]
fn rotation_matches_explicit_rotation() {
    let s = random_sequence(5, 3, 0.8);
    let dist = AugmentationDistribution {
        rotate_max_deg: 15.0,
        apply_prob: 1.0,
        ..AugmentationDistribution::zero()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (out, trace) = augment_traced(&s, &dist, &mut rng);
    let (deg, _) = trace.rotation.expect("rotation fires at apply_prob 1");
    assert!(deg.abs() <= 15.0);

    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for f in &s.frames {
        for (_, p) in f.present_points() {
            sx += p[0];
            sy += p[1];
            n += 1.0;
        }
    }
    let c = [sx / n, sy / n];
    let th = deg.to_radians();
    for (fin, fout) in s.frames.iter().zip(&out.frames) {
        for (i, p) in fin.present_points() {
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            let expected = [c[0] + th.cos() * dx - th.sin() * dy, c[1] + th.sin() * dx + th.cos() * dy];
            let q = fout.points()[i];
            assert!(((q[0] - expected[0]).powi(2) + (q[1] - expected[1]).powi(2)).sqrt() < 1e-9);
        }
    }
}

#[test]
fn arm_rotation_moves_only_the_chain() {
    let s = random_sequence(6, 4, 1.0);
    let dist = AugmentationDistribution {
        arm_joint_max_deg: 30.0,
        apply_prob: 1.0,
        ..AugmentationDistribution::zero()
    };
    for seed in 0..8 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (out, trace) = augment_traced(&s, &dist, &mut rng);
        let (side, joint, deg) = trace.arm.unwrap();
        let (pivot, chain) = arm_chain(side, joint);
        let th = deg.to_radians();
        for (fin, fout) in s.frames.iter().zip(&out.frames) {
            let c = fin.points()[pivot];
            for i in 0..NUM_POINTS {
                let (p, q) = (fin.points()[i], fout.points()[i]);
                if chain.contains(&i) {
                    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
                    let e = [c[0] + th.cos() * dx - th.sin() * dy, c[1] + th.sin() * dx + th.cos() * dy];
                    assert!((q[0] - e[0]).abs() < 1e-9 && (q[1] - e[1]).abs() < 1e-9);
                } else {
                    assert_eq!([p[0].to_bits(), p[1].to_bits()], [q[0].to_bits(), q[1].to_bits()]);
                }
            }
        }
    }
}

#[test]
fn arm_chains() {
    let layout = LandmarkLayout::STANDARD;
    let (pivot, chain) = arm_chain(Side::Right, ArmJoint::Shoulder);
    assert_eq!(pivot, body::RIGHT_SHOULDER);
    assert!(chain.contains(&body::RIGHT_ELBOW) && chain.contains(&body::RIGHT_WRIST));
    assert!(layout.range(Segment::RightHand).all(|i| chain.contains(&i)));
    let (pivot, chain) = arm_chain(Side::Left, ArmJoint::Elbow);
    assert_eq!(pivot, body::LEFT_ELBOW);
    assert!(!chain.contains(&body::LEFT_ELBOW));
    assert_eq!(chain.len(), 1 + 21);
}

#[test]
fn squeeze_and_perspective_keep_vertical_coordinates() {
    let s = random_sequence(8, 2, 0.9);
    let dist = AugmentationDistribution {
        squeeze_max_frac: 0.2,
        perspective_max_frac: 0.1,
        apply_prob: 1.0,
        ..AugmentationDistribution::zero()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (out, trace) = augment_traced(&s, &dist, &mut rng);
    assert!(trace.squeeze.is_some() && trace.perspective.is_some());
    for (fin, fout) in s.frames.iter().zip(&out.frames) {
        for (i, p) in fin.present_points() {
            assert_eq!(p[1], fout.points()[i][1]);
        }
    }
}

#[test]
fn distribution_validation() {
    assert!(AugmentationDistribution::default().validate().is_ok());
    let bad = AugmentationDistribution {
        apply_prob: 1.5,
        ..AugmentationDistribution::default()
    };
    assert!(matches!(bad.validate(), Err(PreprocessError::InvalidDistribution(_))));
    let bad = AugmentationDistribution {
        squeeze_max_frac: -0.1,
        ..AugmentationDistribution::default()
    };
    assert!(bad.validate().is_err());
}

proptest! {
    #[test]
    fn normalized_values_lie_in_unit_square(seed in any::<u64>(), frames in 1usize..5, p in 0.05f64..1.0) {
        let s = random_sequence(seed, frames, p);
        prop_assume!(s.frames.iter().any(|f| f.present().iter().any(|&x| x)));
        let out = normalize_sequence(&s).unwrap();
        prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn normalization_ignores_translation_and_scale(
        seed in any::<u64>(),
        dx in -1e3f64..1e3,
        dy in -1e3f64..1e3,
        k in 0.05f64..20.0,
    ) {
        let s = random_sequence(seed, 3, 0.8);
        let mut moved = s.clone();
        moved.map_present(|_, p| [p[0] * k + dx, p[1] * k + dy]);
        let (a, b) = (normalize_sequence(&s).unwrap(), normalize_sequence(&moved).unwrap());
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn augmentation_never_touches_presence(seed in any::<u64>(), aug_seed in any::<u64>()) {
        let s = random_sequence(seed, 2, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(aug_seed);
        let out = augment(&s, &AugmentationDistribution::default(), &mut rng);
        prop_assert_eq!(out.len(), s.len());
        for (a, b) in s.frames.iter().zip(&out.frames) {
            prop_assert_eq!(a.present(), b.present());
            for i in 0..NUM_POINTS {
                if !a.is_present(i) {
                    prop_assert_eq!(a.points()[i], b.points()[i]);
                }
            }
        }
    }

    #[test]
    fn families_that_do_not_fire_are_exact_identity(seed in any::<u64>(), aug_seed in any::<u64>()) {
        let s = random_sequence(seed, 2, 0.8);
        let dist = AugmentationDistribution { apply_prob: 0.0, ..AugmentationDistribution::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(aug_seed);
        prop_assert_eq!(bits(&augment(&s, &dist, &mut rng)), bits(&s));
    }
}
