use std::ops::Range;

pub const BODY_POINTS: usize = 9;
pub const HAND_POINTS: usize = 21;
pub const FACE_POINTS: usize = 70;
pub const NUM_POINTS: usize = BODY_POINTS + 2 * HAND_POINTS + FACE_POINTS;
/// Width of a flattened frame: x and y for every landmark.
pub const FRAME_DIM: usize = 2 * NUM_POINTS;

/// Upper-body landmark indices within the body segment.
pub mod body {
    pub const NOSE: usize = 0;
    pub const NECK: usize = 1;
    pub const RIGHT_SHOULDER: usize = 2;
    pub const RIGHT_ELBOW: usize = 3;
    pub const RIGHT_WRIST: usize = 4;
    pub const LEFT_SHOULDER: usize = 5;
    pub const LEFT_ELBOW: usize = 6;
    pub const LEFT_WRIST: usize = 7;
    pub const MID_HIP: usize = 8;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Segment {
    Body,
    LeftHand,
    RightHand,
    Face,
}

impl Segment {
    pub const ALL: [Segment; 4] = [Segment::Body, Segment::LeftHand, Segment::RightHand, Segment::Face];
}

/// Ordered landmark segments. Flattening concatenates segments in this
/// order, points in index order, x before y.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LandmarkLayout {
    segments: [(Segment, usize); 4],
}

impl LandmarkLayout {
    pub const STANDARD: LandmarkLayout = LandmarkLayout {
        segments: [
            (Segment::Body, BODY_POINTS),
            (Segment::LeftHand, HAND_POINTS),
            (Segment::RightHand, HAND_POINTS),
            (Segment::Face, FACE_POINTS),
        ],
    };

    pub fn total_points(&self) -> usize {
        self.segments.iter().map(|(_, n)| n).sum()
    }

    pub fn frame_dim(&self) -> usize {
        2 * self.total_points()
    }

    /// Point-index range covered by `segment`.
    pub fn range(&self, segment: Segment) -> Range<usize> {
        let mut start = 0;
        for &(s, n) in &self.segments {
            if s == segment {
                return start..start + n;
            }
            start += n;
        }
        unreachable!("every segment is present in the layout")
    }

    pub fn segments(&self) -> impl Iterator<Item = (Segment, Range<usize>)> + '_ {
        Segment::ALL.into_iter().map(|s| (s, self.range(s)))
    }
}

impl Default for LandmarkLayout {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_layout_counts() {
        let l = LandmarkLayout::STANDARD;
        assert_eq!(l.total_points(), 121);
        assert_eq!(l.frame_dim(), 242);
        assert_eq!(l.range(Segment::Body), 0..9);
        assert_eq!(l.range(Segment::LeftHand), 9..30);
        assert_eq!(l.range(Segment::RightHand), 30..51);
        assert_eq!(l.range(Segment::Face), 51..121);
    }
}
