//! Temporal segment algebra over `[start, end)` intervals in seconds.
//!
//! Segments that merely touch do not overlap, but merging coalesces them:
//! a split point between two same-label segments carries no information.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{AttributeId, MetadataEntry, Project};

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimelineError {
    #[error("segment [{start}, {end}) is not a valid interval")]
    InvalidSegment { start: f64, end: f64 },
    #[error("segment ends at {end} past the media duration {duration}")]
    SegmentPastEnd { end: f64, duration: f64 },
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            label: None,
        }
    }

    pub fn labeled(start: f64, end: f64, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: Some(label.into()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.start.is_finite() && self.end.is_finite() && self.start >= 0.0 && self.start < self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, other: &Segment) -> bool {
        overlaps(self, other)
    }
}

pub fn overlaps(a: &Segment, b: &Segment) -> bool {
    a.start.max(b.start) < a.end.min(b.end)
}

/// Segments live at time `t`, in input order.
pub fn segments_at(t: f64, segs: &[Segment]) -> Vec<&Segment> {
    segs.iter().filter(|s| s.contains(t)).collect()
}

fn by_start_end(a: &Segment, b: &Segment) -> std::cmp::Ordering {
    a.start
        .total_cmp(&b.start)
        .then(a.end.total_cmp(&b.end))
        .then_with(|| a.label.cmp(&b.label))
}

/// Coalesces overlapping or touching segments that share a label.
///
/// Unlabelled segments form their own group. Output is sorted by
/// `(start, end, label)`.
pub fn merge_same_label(segs: &[Segment]) -> Vec<Segment> {
    let mut by_label: BTreeMap<Option<&str>, Vec<&Segment>> = BTreeMap::new();
    for s in segs {
        by_label.entry(s.label.as_deref()).or_default().push(s);
    }
    let mut out = Vec::with_capacity(segs.len());
    for (label, mut group) in by_label {
        group.sort_by(|a, b| by_start_end(a, b));
        let mut current: Option<(f64, f64)> = None;
        for s in group {
            current = match current {
                Some((start, end)) if s.start <= end => Some((start, end.max(s.end))),
                Some((start, end)) => {
                    out.push(Segment {
                        start,
                        end,
                        label: label.map(str::to_owned),
                    });
                    Some((s.start, s.end))
                }
                None => Some((s.start, s.end)),
            };
        }
        if let Some((start, end)) = current {
            out.push(Segment {
                start,
                end,
                label: label.map(str::to_owned),
            });
        }
    }
    out.sort_by(by_start_end);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelStats {
    pub total: f64,
    pub count: usize,
    pub coverage: f64,
}

/// Per-label speaking time over merged segments.
pub fn diarisation_stats(
    segs: &[Segment],
    duration: f64,
) -> Result<BTreeMap<Option<String>, LabelStats>, TimelineError> {
    for s in segs {
        if !s.is_valid() {
            return Err(TimelineError::InvalidSegment {
                start: s.start,
                end: s.end,
            });
        }
        if s.end > duration {
            return Err(TimelineError::SegmentPastEnd {
                end: s.end,
                duration,
            });
        }
    }
    let mut stats: BTreeMap<Option<String>, LabelStats> = BTreeMap::new();
    for s in merge_same_label(segs) {
        let entry = stats.entry(s.label.clone()).or_insert(LabelStats {
            total: 0.0,
            count: 0,
            coverage: 0.0,
        });
        entry.total += s.duration();
        entry.count += 1;
    }
    for v in stats.values_mut() {
        v.coverage = if duration > 0.0 { v.total / duration } else { 0.0 };
    }
    Ok(stats)
}

/// Rounds `t` to the nearest multiple of `grid`, ties upward.
///
/// Grids whose reciprocal is a whole number (0.1, 0.25, 1/30 s ...) are
/// handled by dividing by that reciprocal, so `snap(3.14, 0.1)` gives
/// exactly `3.1` rather than `31 * 0.1`.
pub fn snap(t: f64, grid: f64) -> f64 {
    assert!(grid > 0.0, "snap grid must be positive");
    let inv = 1.0 / grid;
    if (inv - inv.round()).abs() <= 1e-9 * inv.max(1.0) && inv.round() >= 1.0 {
        let inv = inv.round();
        (t * inv + 0.5).floor() / inv
    } else {
        (t / grid + 0.5).floor() * grid
    }
}

/// Temporal segments of one file, labelled by the display value of `label_by`
/// (or unlabelled when the entry lacks it).
pub fn file_segments(project: &Project, fid: &str, label_by: Option<&AttributeId>) -> Vec<Segment> {
    let label = |e: &MetadataEntry| {
        let aid = label_by?;
        let attr = project.attribute(aid.as_str())?;
        e.av.get(aid).map(|v| attr.display_value(v))
    };
    project
        .metadata()
        .values()
        .filter(|e| e.file_id.as_str() == fid && e.xy.is_none() && e.z.len() == 2)
        .map(|e| Segment {
            start: e.z[0],
            end: e.z[1],
            label: label(e),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_examples() {
        assert!(overlaps(&Segment::new(0.0, 2.0), &Segment::new(1.0, 3.0)));
        assert!(!overlaps(&Segment::new(0.0, 2.0), &Segment::new(2.0, 3.0)));
        assert!(overlaps(&Segment::new(0.0, 5.0), &Segment::new(1.0, 2.0)));
    }

    #[test]
    fn segments_at_examples() {
        let segs = vec![Segment::labeled(3.1, 9.2, "pilot")];
        assert_eq!(segments_at(5.0, &segs), vec![&segs[0]]);
        assert!(segments_at(9.2, &segs).is_empty());
        assert_eq!(segments_at(3.1, &segs).len(), 1);
    }

    #[test]
    fn merge_examples() {
        let merged = merge_same_label(&[Segment::labeled(0.0, 2.0, "A"), Segment::labeled(2.0, 3.0, "A")]);
        assert_eq!(merged, vec![Segment::labeled(0.0, 3.0, "A")]);

        let input = [Segment::labeled(1.0, 3.0, "B"), Segment::labeled(0.0, 2.0, "A")];
        assert_eq!(
            merge_same_label(&input),
            vec![Segment::labeled(0.0, 2.0, "A"), Segment::labeled(1.0, 3.0, "B")]
        );

        let nested = [Segment::new(0.0, 10.0), Segment::new(2.0, 3.0), Segment::new(11.0, 12.0)];
        assert_eq!(merge_same_label(&nested), vec![Segment::new(0.0, 10.0), Segment::new(11.0, 12.0)]);
        assert!(merge_same_label(&[]).is_empty());
    }

    #[test]
    fn diarisation_examples() {
        let stats = diarisation_stats(&[Segment::labeled(3.1, 9.2, "pilot")], 60.0).unwrap();
        let pilot = stats[&Some("pilot".to_string())];
        assert_eq!(pilot.total, 6.1);
        assert_eq!(pilot.count, 1);
        assert!((pilot.coverage - 0.1017).abs() < 1e-4);

        assert!(diarisation_stats(&[], 60.0).unwrap().is_empty());

        let stats =
            diarisation_stats(&[Segment::labeled(0.0, 2.0, "a"), Segment::labeled(1.0, 3.0, "a")], 10.0).unwrap();
        assert_eq!(stats[&Some("a".to_string())].total, 3.0);

        assert_eq!(
            diarisation_stats(&[Segment::new(1.0, 61.0)], 60.0),
            Err(TimelineError::SegmentPastEnd {
                end: 61.0,
                duration: 60.0
            })
        );
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn snap_examples() {
        assert_eq!(snap(3.14, 0.1), 3.1);
        assert_eq!(snap(0.05, 0.1), 0.1);
        assert_eq!(snap(7.4, 2.0), 8.0);
        assert_eq!(snap(6.9, 2.0), 6.0);
        assert_eq!(snap(0.3, 0.25), 0.25);
        assert!((snap(1.0, 0.3) - 0.9).abs() < 1e-12);
    }
}
