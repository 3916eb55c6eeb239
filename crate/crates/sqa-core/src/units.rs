//! Run-length merging of frame-level unit ids and the time/index span
//! conversions between seconds and dense-unit positions.
//!
//! Spans are half-open in time and closed in indices. A time span maps to
//! frames `floor(start/period) ..= ceil(end/period) - 1`; a small epsilon on
//! the quotient keeps boundary times stable under f64 division.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack applied to `time / period` quotients before rounding.
const FRAME_QUOTIENT_EPS: f64 = 1e-6;

/// A deduplicated unit sequence: `units[i]` repeated `counts[i]` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSequence {
    units: Vec<u32>,
    counts: Vec<u32>,
    frame_period: f64,
}

impl UnitSequence {
    pub fn new(units: Vec<u32>, counts: Vec<u32>, frame_period: f64) -> Result<Self> {
        if units.len() != counts.len() {
            return Err(Error::Shape {
                context: "UnitSequence".into(),
                detail: format!("units len {} != counts len {}", units.len(), counts.len()),
            });
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Shape {
                context: "UnitSequence".into(),
                detail: "counts must be >= 1".into(),
            });
        }
        if units.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Shape {
                context: "UnitSequence".into(),
                detail: "adjacent units must differ".into(),
            });
        }
        if !(frame_period > 0.0 && frame_period.is_finite()) {
            return Err(Error::Shape {
                context: "UnitSequence".into(),
                detail: format!("frame_period must be positive, got {frame_period}"),
            });
        }
        Ok(UnitSequence {
            units,
            counts,
            frame_period,
        })
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn total_frames(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    /// Total duration in seconds.
    pub fn duration(&self) -> f64 {
        self.total_frames() as f64 * self.frame_period
    }

    /// First frame index of each dense unit, plus the total as a sentinel.
    fn frame_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.counts.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &c in &self.counts {
            acc += c as usize;
            offsets.push(acc);
        }
        offsets
    }
}

/// An answer span in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
}

impl TimeSpan {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && 0.0 <= start && start < end) {
            return Err(Error::InvalidSpan {
                start,
                end,
                detail: "requires 0 <= start < end".into(),
            });
        }
        Ok(TimeSpan { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// A span over dense-unit indices, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSpan {
    pub start: usize,
    pub end: usize,
}

impl IndexSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::IndexOutOfRange {
                start,
                end,
                len: 0,
            });
        }
        Ok(IndexSpan { start, end })
    }
}

/// Collapses maximal runs of identical adjacent units, recording run lengths.
pub fn merge_repeats(frame_units: &[u32], frame_period: f64) -> UnitSequence {
    let mut units = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    for &u in frame_units {
        match units.last() {
            Some(&last) if last == u => *counts.last_mut().expect("counts tracks units") += 1,
            _ => {
                units.push(u);
                counts.push(1);
            }
        }
    }
    UnitSequence {
        units,
        counts,
        frame_period,
    }
}

/// Exact inverse of [`merge_repeats`]: reproduces the frame-level sequence.
pub fn expand(u: &UnitSequence) -> Vec<u32> {
    let mut out = Vec::with_capacity(u.total_frames());
    for (&unit, &count) in u.units.iter().zip(&u.counts) {
        out.extend(std::iter::repeat(unit).take(count as usize));
    }
    out
}

/// Frame range covered by a time span: `(first_frame, last_frame)` inclusive.
/// Returns None when the rasterization is empty.
pub fn frame_range(span: &TimeSpan, frame_period: f64) -> Option<(usize, usize)> {
    let start_q = span.start / frame_period + FRAME_QUOTIENT_EPS;
    let end_q = span.end / frame_period - FRAME_QUOTIENT_EPS;
    let first = start_q.floor().max(0.0) as usize;
    let last_excl = end_q.ceil();
    if last_excl <= first as f64 {
        return None;
    }
    Some((first, last_excl as usize - 1))
}

/// Maps a time span to the dense units whose frames contain it. The end is
/// clamped to the sequence; a span entirely outside the sequence is an error.
pub fn time_to_index(span: &TimeSpan, u: &UnitSequence) -> Result<IndexSpan> {
    let total = u.total_frames();
    if total == 0 {
        return Err(Error::SpanOutOfRange {
            detail: "sequence has no frames".into(),
        });
    }
    let (first, last) = frame_range(span, u.frame_period).ok_or_else(|| Error::SpanOutOfRange {
        detail: format!("span [{}, {}) rasterizes to no frames", span.start, span.end),
    })?;
    if first >= total {
        return Err(Error::SpanOutOfRange {
            detail: format!(
                "span starts at frame {first} but the sequence has {total} frames"
            ),
        });
    }
    let last = last.min(total - 1);
    let offsets = u.frame_offsets();
    let unit_of = |frame: usize| -> usize {
        // offsets is ascending; find i with offsets[i] <= frame < offsets[i+1].
        match offsets.binary_search(&frame) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    };
    Ok(IndexSpan {
        start: unit_of(first),
        end: unit_of(last),
    })
}

/// Maps a dense index span back to the covered time interval.
pub fn index_to_time(idx: &IndexSpan, u: &UnitSequence) -> Result<TimeSpan> {
    if idx.start > idx.end || idx.end >= u.len() {
        return Err(Error::IndexOutOfRange {
            start: idx.start,
            end: idx.end,
            len: u.len(),
        });
    }
    let offsets = u.frame_offsets();
    let start = offsets[idx.start] as f64 * u.frame_period;
    let end = offsets[idx.end + 1] as f64 * u.frame_period;
    TimeSpan::new(start, end)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(units: &[u32], counts: &[u32], period: f64) -> UnitSequence {
        UnitSequence::new(units.to_vec(), counts.to_vec(), period).unwrap()
    }

    #[test]
    fn merge_empty() {
        let u = merge_repeats(&[], 0.02);
        assert!(u.units().is_empty());
        assert!(u.counts().is_empty());
    }

    #[test]
    fn merge_runs() {
        let u = merge_repeats(&[5, 5, 5, 2, 2, 9], 0.02);
        assert_eq!(u.units(), &[5, 2, 9]);
        assert_eq!(u.counts(), &[3, 2, 1]);
    }

    #[test]
    fn merge_preserves_nonadjacent_repeats() {
        let u = merge_repeats(&[7, 7, 3, 7], 0.02);
        assert_eq!(u.units(), &[7, 3, 7]);
        assert_eq!(u.counts(), &[2, 1, 1]);
    }

    #[test]
    fn expand_inverse() {
        let u = seq(&[5, 2, 9], &[3, 2, 1], 0.02);
        assert_eq!(expand(&u), vec![5, 5, 5, 2, 2, 9]);
        let empty = seq(&[], &[], 0.02);
        assert_eq!(expand(&empty), Vec::<u32>::new());
    }

    #[test]
    fn time_to_index_examples() {
        let u = seq(&[4, 8, 1], &[3, 2, 1], 0.02);
        let got = time_to_index(&TimeSpan::new(0.06, 0.10).unwrap(), &u).unwrap();
        assert_eq!(got, IndexSpan { start: 1, end: 1 });

        let got = time_to_index(&TimeSpan::new(0.0, 0.12).unwrap(), &u).unwrap();
        assert_eq!(got, IndexSpan { start: 0, end: 2 });
    }

    #[test]
    fn time_to_index_clamps_overhang_and_rejects_outside() {
        let u = seq(&[4, 8], &[2, 2], 0.02);
        // Ends past the sequence: clamp.
        let got = time_to_index(&TimeSpan::new(0.05, 0.50).unwrap(), &u).unwrap();
        assert_eq!(got, IndexSpan { start: 1, end: 1 });
        // Starts past the sequence: error.
        assert!(matches!(
            time_to_index(&TimeSpan::new(0.20, 0.30).unwrap(), &u),
            Err(Error::SpanOutOfRange { .. })
        ));
    }

    #[test]
    fn index_to_time_examples() {
        let u = seq(&[4, 8, 1], &[3, 2, 1], 0.02);
        let t = index_to_time(&IndexSpan { start: 1, end: 1 }, &u).unwrap();
        assert!((t.start - 0.06).abs() < 1e-12);
        assert!((t.end - 0.10).abs() < 1e-12);

        let t = index_to_time(&IndexSpan { start: 0, end: 2 }, &u).unwrap();
        assert!((t.start - 0.0).abs() < 1e-12);
        assert!((t.end - 0.12).abs() < 1e-12);

        assert!(matches!(
            index_to_time(&IndexSpan { start: 0, end: 3 }, &u),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn roundtrip_on_index_spans() {
        let u = seq(&[4, 8, 1, 9], &[3, 2, 1, 5], 0.02);
        for s in 0..u.len() {
            for e in s..u.len() {
                let span = IndexSpan { start: s, end: e };
                let t = index_to_time(&span, &u).unwrap();
                assert_eq!(time_to_index(&t, &u).unwrap(), span);
            }
        }
    }

    /// Brute-force oracle: scan per-frame intervals for overlap with the span.
    fn oracle_frame_range(span: &TimeSpan, period: f64, total: usize) -> Option<(usize, usize)> {
        let mut first = None;
        let mut last = None;
        for f in 0..total + 16 {
            let covers = (f + 1) as f64 > span.start / period + 1e-6
                && (f as f64) < span.end / period - 1e-6;
            if covers {
                if first.is_none() {
                    first = Some(f);
                }
                last = Some(f);
            }
        }
        first.map(|f| (f, last.unwrap()))
    }

    #[test]
    fn random_spans_match_frame_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let n_units = rng.gen_range(1..12);
            let mut units = Vec::new();
            let mut counts = Vec::new();
            for i in 0..n_units {
                // Alternate parity to keep adjacent units distinct.
                units.push((2 * i + rng.gen_range(0..2)) as u32 % 64);
                counts.push(rng.gen_range(1..6u32));
            }
            // Fix adjacency violations from the modulo.
            for i in 1..units.len() {
                if units[i] == units[i - 1] {
                    units[i] = units[i - 1] + 1;
                }
            }
            let period = [0.01, 0.02, 0.025][rng.gen_range(0..3)];
            let u = seq(&units, &counts, period);
            let dur = u.duration();
            let start = rng.gen_range(0.0..dur * 0.95);
            let end = rng.gen_range(start + period * 0.1..dur * 1.05 + period);
            let span = TimeSpan::new(start, end).unwrap();

            let got = time_to_index(&span, &u);
            let oracle = oracle_frame_range(&span, period, u.total_frames());
            match oracle {
                Some((f_first, f_last)) if f_first < u.total_frames() => {
                    let f_last = f_last.min(u.total_frames() - 1);
                    let offsets = u.frame_offsets();
                    let unit_of = |f: usize| offsets.iter().rposition(|&o| o <= f).unwrap();
                    let want = IndexSpan {
                        start: unit_of(f_first),
                        end: unit_of(f_last),
                    };
                    assert_eq!(got.unwrap(), want, "span {span:?} over {counts:?}");
                }
                _ => assert!(got.is_err()),
            }
        }
    }

    #[test]
    fn unit_sequence_validation() {
        assert!(UnitSequence::new(vec![1, 1], vec![1, 1], 0.02).is_err());
        assert!(UnitSequence::new(vec![1, 2], vec![1, 0], 0.02).is_err());
        assert!(UnitSequence::new(vec![1, 2], vec![1], 0.02).is_err());
        assert!(UnitSequence::new(vec![1], vec![1], 0.0).is_err());
    }
}
