use crate::diffcore::Tensor;
use crate::pose_data::{LandmarkLayout, PoseSequence, Segment, FRAME_DIM, NUM_POINTS};

use super::PreprocessError;

/// Flattened frames, `T × 242`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSequence {
    frames: usize,
    values: Vec<f64>,
}

impl NormalizedSequence {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * FRAME_DIM..(t + 1) * FRAME_DIM]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.frames, FRAME_DIM, self.values.clone()).expect("T >= 1 rows of 242")
    }
}

/// Smallest axis-aligned square centered on the bounding box of a point set.
#[derive(Clone, Copy, Debug)]
struct SquareBox {
    center: [f64; 2],
    side: f64,
}

impl SquareBox {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Option<Self> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut any = false;
        for p in points {
            any = true;
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        any.then(|| SquareBox {
            center: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
            side: (hi[0] - lo[0]).max(hi[1] - lo[1]),
        })
    }

    fn map(&self, p: [f64; 2]) -> [f64; 2] {
        if self.side == 0.0 {
            return [0.5, 0.5];
        }
        let f = |a: usize| ((p[a] - self.center[a]) / self.side + 0.5).clamp(0.0, 1.0);
        [f(0), f(1)]
    }
}

/// Point-index groups normalized jointly: body with face, and each hand alone.
fn groups(layout: &LandmarkLayout) -> [Vec<usize>; 3] {
    let body_face = layout.range(Segment::Body).chain(layout.range(Segment::Face)).collect();
    [
        body_face,
        layout.range(Segment::LeftHand).collect(),
        layout.range(Segment::RightHand).collect(),
    ]
}

/// Maps present landmarks into `[0, 1]²`.
///
/// Body and face share one square box fitted over all of their present
/// points across the whole sequence; each hand gets its own box. Boxes are
/// centered, so the result is invariant to translating or uniformly scaling
/// the input. A box of zero extent maps its points to (0.5, 0.5). Absent
/// landmarks are left as they are; [`flatten`] writes them as zeros.
pub fn normalize(s: &PoseSequence) -> Result<PoseSequence, PreprocessError> {
    if s.frames.is_empty() {
        return Err(PreprocessError::EmptySequence);
    }
    if !s.frames.iter().any(|f| f.present().iter().any(|&p| p)) {
        return Err(PreprocessError::NoLandmarks);
    }
    let mut out = s.clone();
    for group in groups(&LandmarkLayout::STANDARD) {
        let bbox = SquareBox::fit(s.frames.iter().flat_map(|f| {
            group
                .iter()
                .filter(|&&i| f.is_present(i))
                .map(|&i| f.points()[i])
        }));
        let Some(bbox) = bbox else { continue };
        for frame in &mut out.frames {
            for &i in &group {
                if frame.is_present(i) {
                    let p = frame.points()[i];
                    frame.points_mut()[i] = bbox.map(p);
                }
            }
        }
    }
    Ok(out)
}

/// Concatenates each frame into a 242-vector; absent landmarks become 0.
pub fn flatten(s: &PoseSequence) -> NormalizedSequence {
    let mut values = Vec::with_capacity(s.frames.len() * FRAME_DIM);
    for frame in &s.frames {
        for i in 0..NUM_POINTS {
            if frame.is_present(i) {
                values.extend_from_slice(&frame.points()[i]);
            } else {
                values.extend_from_slice(&[0.0, 0.0]);
            }
        }
    }
    NormalizedSequence {
        frames: s.frames.len(),
        values,
    }
}

/// `flatten(normalize(s))`.
pub fn normalize_sequence(s: &PoseSequence) -> Result<NormalizedSequence, PreprocessError> {
    Ok(flatten(&normalize(s)?))
}

/// Keeps at most `max_frames` frames, picked uniformly in time.
pub fn subsample_frames(s: &PoseSequence, max_frames: usize) -> PoseSequence {
    let len = s.frames.len();
    if len <= max_frames || max_frames == 0 {
        return s.clone();
    }
    let mut out = s.clone();
    out.frames = (0..max_frames).map(|i| s.frames[i * len / max_frames].clone()).collect();
    out
}
