//! Prediction contexts for single-point prediction and sliding windows for
//! multi-point prediction.
//!
//! Change point `p` is the boundary between sentences `p` and `p + 1`
//! (0-based), so a conversation of `n` sentences has change points `0..n-1`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::transcript::{Conversation, Sentence};

/// Context for one change decision: `h` sentences up to and including the
/// left member of the pair, and `k` sentences after the right member.
#[derive(Debug, Clone, PartialEq)]
pub struct SpmContext {
    pub change_index: usize,
    pub sentences: Vec<Sentence>,
    /// Position of the pair's left sentence inside `sentences`.
    pub boundary_offset: usize,
    pub h: usize,
    pub k: usize,
}

impl SpmContext {
    pub fn left(&self) -> &Sentence {
        &self.sentences[self.boundary_offset]
    }

    pub fn right(&self) -> &Sentence {
        &self.sentences[self.boundary_offset + 1]
    }

    /// Sentence indices covered, in conversation coordinates.
    pub fn span(&self) -> Range<usize> {
        let start = self.change_index - self.boundary_offset;
        start..start + self.sentences.len()
    }
}

/// Range of sentence indices `[start, end)` for context `i`, truncated to the
/// conversation.
pub fn spm_context_span(n: usize, i: usize, h: usize, k: usize) -> Range<usize> {
    let start = (i + 1).saturating_sub(h);
    let end = (i + k + 2).min(n);
    start..end
}

/// One context per change point. Returns an empty list when `n < 2`.
pub fn build_spm_contexts(conv: &Conversation, h: usize, k: usize) -> Result<Vec<SpmContext>> {
    if h == 0 {
        return Err(Error::config("front context h must be at least 1"));
    }
    let n = conv.len();
    Ok((0..n.saturating_sub(1))
        .map(|i| {
            let span = spm_context_span(n, i, h, k);
            SpmContext {
                change_index: i,
                boundary_offset: i - span.start,
                sentences: conv.sentences[span].to_vec(),
                h,
                k,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpmWindow {
    pub window_index: usize,
    pub span: Range<usize>,
}

impl MpmWindow {
    pub fn len(&self) -> usize {
        self.span.len()
    }

    pub fn is_empty(&self) -> bool {
        self.span.is_empty()
    }

    /// Number of boundary predictions the window carries.
    pub fn boundary_count(&self) -> usize {
        self.len().saturating_sub(1)
    }

    /// Whether both sentences of change point `p` fall inside the window.
    pub fn contains_point(&self, p: usize) -> bool {
        self.span.start <= p && p + 1 < self.span.end
    }

    /// Position of change point `p` within the window's predictions.
    pub fn local_point(&self, p: usize) -> Option<usize> {
        self.contains_point(p).then(|| p - self.span.start)
    }

    pub fn sentences<'a>(&self, conv: &'a Conversation) -> &'a [Sentence] {
        &conv.sentences[self.span.clone()]
    }
}

/// For each change point, the ordered indices of windows containing it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoverageMap {
    points: Vec<Vec<usize>>,
}

impl CoverageMap {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, p: usize) -> Option<&[usize]> {
        self.points.get(p).map(Vec::as_slice)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.points.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSet {
    pub sentence_count: usize,
    pub window_len: usize,
    pub stride: usize,
    pub windows: Vec<MpmWindow>,
    pub coverage: CoverageMap,
}

impl WindowSet {
    /// Windows start at 0 and advance by `stride`; a final window is anchored
    /// to the last sentence when the stride does not land there.
    pub fn new(n: usize, window_len: usize, stride: usize) -> Result<Self> {
        if window_len < 2 {
            return Err(Error::config(format!(
                "window length must be at least 2, got {window_len}"
            )));
        }
        if stride == 0 || stride >= window_len {
            return Err(Error::config(format!(
                "stride must be in 1..{window_len} so consecutive windows overlap, got {stride}"
            )));
        }
        let mut spans = Vec::new();
        if n >= 2 {
            if n <= window_len {
                spans.push(0..n);
            } else {
                let mut start = 0;
                while start + window_len <= n {
                    spans.push(start..start + window_len);
                    start += stride;
                }
                if spans.last().is_some_and(|s| s.end < n) {
                    spans.push(n - window_len..n);
                }
            }
        }
        let windows: Vec<MpmWindow> = spans
            .into_iter()
            .enumerate()
            .map(|(window_index, span)| MpmWindow { window_index, span })
            .collect();
        let points = (0..n.saturating_sub(1))
            .map(|p| {
                windows
                    .iter()
                    .filter(|w| w.contains_point(p))
                    .map(|w| w.window_index)
                    .collect()
            })
            .collect();
        Ok(WindowSet {
            sentence_count: n,
            window_len,
            stride,
            windows,
            coverage: CoverageMap { points },
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Windows containing sentence `s`.
    pub fn sentence_coverage(&self, s: usize) -> Vec<usize> {
        self.windows
            .iter()
            .filter(|w| w.span.contains(&s))
            .map(|w| w.window_index)
            .collect()
    }

    /// Sentence indices shared by windows `a` and `b`.
    pub fn overlap(&self, a: usize, b: usize) -> Range<usize> {
        let (x, y) = (&self.windows[a].span, &self.windows[b].span);
        let start = x.start.max(y.start);
        let end = x.end.min(y.end);
        start..end.max(start)
    }
}

pub fn build_mpm_windows(conv: &Conversation, window_len: usize, stride: usize) -> Result<WindowSet> {
    WindowSet::new(conv.len(), window_len, stride)
}

/// Windows covering change point `p`.
pub fn coverage(ws: &WindowSet, p: usize) -> Result<&[usize]> {
    ws.coverage.get(p).ok_or_else(|| {
        Error::validation(format!(
            "change point {p} out of range for {} sentences",
            ws.sentence_count
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn conv(n: usize) -> Conversation {
        let texts: Vec<String> = (0..n).map(|i| format!("sentence {i}.")).collect();
        Conversation::from_texts("c", &texts, None).unwrap()
    }

    fn spans(ws: &WindowSet) -> Vec<Range<usize>> {
        ws.windows.iter().map(|w| w.span.clone()).collect()
    }

    #[test]
    fn spm_context_interior() {
        let ctxs = build_spm_contexts(&conv(6), 2, 1).unwrap();
        assert_eq!(ctxs.len(), 5);
        // 1-based i = 3 is 0-based change index 2: s_2..s_5 in 1-based terms.
        let c = &ctxs[2];
        assert_eq!(c.span(), 1..5);
        assert_eq!(c.left().index, 2);
        assert_eq!(c.right().index, 3);
    }

    #[test]
    fn spm_context_front_truncated() {
        let ctxs = build_spm_contexts(&conv(6), 2, 1).unwrap();
        // 1-based i = 1: indices {0, 1, 2} survive the intersection.
        assert_eq!(ctxs[0].span(), 0..3);
        assert_eq!(ctxs[0].boundary_offset, 0);
    }

    #[test]
    fn spm_context_whole_conversation() {
        let ctxs = build_spm_contexts(&conv(2), 3, 3).unwrap();
        assert_eq!(ctxs.len(), 1);
        assert_eq!(ctxs[0].span(), 0..2);
        assert!(build_spm_contexts(&conv(1), 3, 3).unwrap().is_empty());
        assert!(build_spm_contexts(&conv(3), 0, 3).is_err());
    }

    #[test]
    fn mpm_windows_six_sentences() {
        let ws = build_mpm_windows(&conv(6), 4, 1).unwrap();
        assert_eq!(spans(&ws), [0..4, 1..5, 2..6]);
        assert_eq!(coverage(&ws, 2).unwrap(), [0, 1, 2]);
        assert_eq!(coverage(&ws, 0).unwrap(), [0]);
        assert!(coverage(&ws, 5).is_err());
    }

    #[test]
    fn mpm_window_truncated_to_conversation() {
        let ws = build_mpm_windows(&conv(4), 8, 1).unwrap();
        assert_eq!(spans(&ws), vec![0..4]);
        for p in 0..3 {
            assert_eq!(coverage(&ws, p).unwrap(), [0]);
        }
    }

    #[test]
    fn mpm_final_window_end_anchored() {
        let ws = build_mpm_windows(&conv(7), 4, 2).unwrap();
        assert_eq!(spans(&ws), [0..4, 2..6, 3..7]);
    }

    #[test]
    fn mpm_config_errors() {
        assert!(WindowSet::new(6, 1, 1).is_err());
        assert!(WindowSet::new(6, 4, 0).is_err());
        assert!(WindowSet::new(6, 4, 4).is_err());
    }

    proptest! {
        #[test]
        fn windows_cover_every_point(n in 2usize..60, len in 2usize..10, stride_frac in 0.0f64..1.0) {
            let stride = 1 + ((len - 1) as f64 * stride_frac) as usize % (len - 1);
            let ws = WindowSet::new(n, len, stride).unwrap();
            prop_assert!(!ws.windows.is_empty());
            for w in &ws.windows {
                prop_assert!(w.len() >= 2 && w.span.end <= n);
            }
            for p in 0..n - 1 {
                prop_assert!(!ws.coverage.get(p).unwrap().is_empty());
            }
            prop_assert_eq!(ws.clone(), WindowSet::new(n, len, stride).unwrap());
        }

        #[test]
        fn stride_one_coverage_is_unimodal(n in 2usize..60, len in 2usize..10) {
            let ws = WindowSet::new(n, len, 1).unwrap();
            let m = ws.len();
            let counts = ws.coverage.counts();
            for (p, &c) in counts.iter().enumerate() {
                let expected = (len - 1).min(p + 1).min(n - 1 - p).min(m);
                prop_assert_eq!(c, expected);
            }
            let peak = counts.iter().position(|&c| c == *counts.iter().max().unwrap()).unwrap();
            prop_assert!(counts[..=peak].windows(2).all(|w| w[0] <= w[1]));
            let last_peak = counts.iter().rposition(|&c| c == counts[peak]).unwrap();
            prop_assert!(counts[last_peak..].windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
