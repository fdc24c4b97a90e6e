use serde::{Deserialize, Serialize};

use crate::corpus::{Token, Utterance};
use crate::error::{Error, Result};

use super::ModelConfig;

/// Hop of the feature grid that token times are quantized to.
pub const FRAME_HOP_S: f64 = 0.010;

/// Per-token `[start, end)` intervals over the encoder's output frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpanMap {
    pub spans: Vec<(usize, usize)>,
    /// Encoder output length the spans index into.
    pub n_frames: usize,
    /// Tokens whose interval had to be repaired after downsampling.
    pub repairs: usize,
}

impl TokenSpanMap {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.spans.iter().map(|&(a, b)| b - a).collect()
    }

    /// Nonempty, ordered, non-overlapping and inside `[0, n_frames)`.
    pub fn is_valid(&self) -> bool {
        let mut prev_end = 0;
        for &(a, b) in &self.spans {
            if a >= b || a < prev_end || b > self.n_frames {
                return false;
            }
            prev_end = b;
        }
        true
    }
}

/// Index of the frame boundary nearest `t`.
pub fn frame_index(t_s: f64) -> usize {
    (t_s / FRAME_HOP_S).round().max(0.0) as usize
}

/// Token boundaries on the input frame grid, clipped to `n_frames`.
pub fn token_frame_bounds(tokens: &[Token], n_frames: usize) -> Vec<(usize, usize)> {
    tokens
        .iter()
        .map(|t| (frame_index(t.start_s).min(n_frames), frame_index(t.end_s).min(n_frames)))
        .collect()
}

/// Map an utterance's token times onto encoder output frames.
pub fn map_spans(u: &Utterance, n_input_frames: usize, cfg: &ModelConfig) -> Result<TokenSpanMap> {
    let bounds = token_frame_bounds(&u.tokens, n_input_frames);
    spans_from_bounds(&bounds, n_input_frames, cfg).map_err(|e| match e {
        Error::Spans { message, .. } => Error::Spans {
            id: u.id.clone(),
            message,
        },
        other => other,
    })
}

/// Downsample input-frame intervals: an output frame belongs to a token when
/// its centre on the input grid (`j · factor`) lies inside the token, so both
/// boundaries map through `ceil(b / factor)`. Empty intervals are repaired.
pub fn spans_from_bounds(bounds: &[(usize, usize)], n_input_frames: usize, cfg: &ModelConfig) -> Result<TokenSpanMap> {
    let k = cfg.encoder_length(n_input_frames);
    let m = bounds.len();
    if m == 0 {
        return Err(Error::Spans {
            id: String::new(),
            message: "no tokens".into(),
        });
    }
    if k < m {
        return Err(Error::Spans {
            id: String::new(),
            message: format!("{m} tokens but only {k} encoder frames"),
        });
    }
    let f = cfg.downsample_factor();
    let down = |b: usize| b.div_ceil(f).min(k);
    let mut spans: Vec<(usize, usize)> = bounds.iter().map(|&(a, b)| (down(a), down(b.max(a)))).collect();
    // Overlapping source times would give overlapping spans.
    for i in 1..m {
        if spans[i].0 < spans[i - 1].1 {
            spans[i].0 = spans[i - 1].1;
            spans[i].1 = spans[i].1.max(spans[i].0);
        }
    }
    let repairs = repair(&mut spans, k);
    let map = TokenSpanMap {
        spans,
        n_frames: k,
        repairs,
    };
    debug_assert!(map.is_valid(), "{map:?}");
    Ok(map)
}

fn repair(spans: &mut [(usize, usize)], k: usize) -> usize {
    let m = spans.len();
    let mut repaired = 0;
    let mut stuck = false;
    for i in 0..m {
        if spans[i].0 < spans[i].1 {
            continue;
        }
        repaired += 1;
        let s = spans[i].0;
        let left_free = s > 0 && (i == 0 || spans[i - 1].1 < s);
        let right_free = s < k && (i + 1 == m || spans[i + 1].0 > s);
        if right_free {
            spans[i] = (s, s + 1);
            continue;
        }
        if left_free {
            spans[i] = (s - 1, s);
            continue;
        }
        let left_len = if i > 0 && spans[i - 1].1 == s { spans[i - 1].1 - spans[i - 1].0 } else { 0 };
        let right_len = if i + 1 < m && spans[i + 1].0 == s { spans[i + 1].1 - spans[i + 1].0 } else { 0 };
        if left_len >= 2 && left_len >= right_len {
            spans[i - 1].1 -= 1;
            spans[i] = (s - 1, s);
        } else if right_len >= 2 {
            spans[i + 1].0 += 1;
            spans[i] = (s, s + 1);
        } else {
            stuck = true;
        }
    }
    if stuck {
        monotone_fix(spans, k);
    }
    repaired
}

/// Push intervals forward so each is nonempty, then pull them back under `k`.
/// Always succeeds when `k >= spans.len()`.
fn monotone_fix(spans: &mut [(usize, usize)], k: usize) {
    let mut prev_end = 0;
    for s in spans.iter_mut() {
        s.0 = s.0.max(prev_end);
        s.1 = s.1.max(s.0 + 1);
        prev_end = s.1;
    }
    let mut next_start = k;
    for s in spans.iter_mut().rev() {
        s.1 = s.1.min(next_start);
        s.0 = s.0.min(s.1 - 1);
        next_start = s.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(layers: usize) -> ModelConfig {
        ModelConfig::default().with_cnn_layers(layers)
    }

    /// Output frame `j` belongs to whichever token contains its centre `j·f`.
    fn centre_oracle(bounds: &[(usize, usize)], k: usize, f: usize) -> Vec<(usize, usize)> {
        bounds
            .iter()
            .map(|&(a, b)| {
                let owned: Vec<usize> = (0..k).filter(|j| j * f >= a && j * f < b).collect();
                match (owned.first(), owned.last()) {
                    (Some(&s), Some(&e)) => (s, e + 1),
                    _ => (0, 0),
                }
            })
            .collect()
    }

    #[test]
    fn twenty_frames_map_to_three() {
        let m = spans_from_bounds(&[(0, 20)], 20, &cfg(3)).unwrap();
        assert_eq!(m.spans, [(0, 3)]);
        assert_eq!(m.repairs, 0);
        assert_eq!(centre_oracle(&[(0, 20)], 3, 8), [(0, 3)]);
    }

    #[test]
    fn single_token_covers_everything() {
        for n in [1, 7, 64, 333] {
            let m = spans_from_bounds(&[(0, n)], n, &cfg(3)).unwrap();
            assert_eq!(m.spans, [(0, m.n_frames)]);
        }
    }

    #[test]
    fn adjacent_tokens_partition_their_union() {
        let m = spans_from_bounds(&[(0, 37), (37, 90)], 90, &cfg(3)).unwrap();
        assert_eq!(m.spans[0].1, m.spans[1].0);
        assert_eq!(m.spans[0].0, 0);
        assert_eq!(m.spans[1].1, m.n_frames);
    }

    #[test]
    fn short_tokens_are_repaired() {
        // Centres fall at 0, 8, 16, ...: one token owns nothing.
        let m = spans_from_bounds(&[(0, 4), (4, 8), (8, 12), (12, 40)], 40, &cfg(3)).unwrap();
        assert_eq!(m.spans, [(0, 1), (1, 2), (2, 3), (3, 5)]);
        assert_eq!(m.repairs, 1);

        // Token 1 has only one-frame neighbours and needs the fallback.
        let m = spans_from_bounds(&[(0, 4), (4, 8), (8, 12), (12, 14), (14, 40)], 40, &cfg(3)).unwrap();
        assert!(m.is_valid());
        assert_eq!(m.spans, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        assert_eq!(m.repairs, 2);
    }

    #[test]
    fn too_many_tokens_is_an_error() {
        let bounds: Vec<_> = (0..10).map(|i| (i, i + 1)).collect();
        assert!(matches!(spans_from_bounds(&bounds, 10, &cfg(3)), Err(Error::Spans { .. })));
    }

    #[test]
    fn frame_index_rounds() {
        assert_eq!(frame_index(0.0), 0);
        assert_eq!(frame_index(0.204), 20);
        assert_eq!(frame_index(0.206), 21);
    }

    proptest! {
        #[test]
        fn matches_centre_oracle_when_no_repair_needed(
            cuts in proptest::collection::vec(1usize..60, 1..8),
            lead in 0usize..20,
            layers in 1usize..5,
        ) {
            let mut bounds = Vec::new();
            let mut t = lead;
            for c in &cuts {
                bounds.push((t, t + c));
                t += c;
            }
            let n = t + 5;
            let c = cfg(layers);
            let k = c.encoder_length(n);
            prop_assume!(k >= bounds.len());
            let oracle = centre_oracle(&bounds, k, c.downsample_factor());
            let m = spans_from_bounds(&bounds, n, &c).unwrap();
            prop_assert!(m.is_valid());
            if oracle.iter().all(|&(a, b)| a < b) {
                prop_assert_eq!(m.repairs, 0);
                prop_assert_eq!(m.spans, oracle);
            }
        }

        #[test]
        fn always_valid_when_enough_frames(
            cuts in proptest::collection::vec(0usize..12, 1..12),
            gaps in proptest::collection::vec(0usize..4, 12),
            layers in 1usize..6,
        ) {
            let mut bounds = Vec::new();
            let mut t = 0;
            for (c, g) in cuts.iter().zip(&gaps) {
                t += g;
                bounds.push((t, t + c));
                t += c;
            }
            let c = cfg(layers);
            let n = t.max(1);
            match spans_from_bounds(&bounds, n, &c) {
                Ok(m) => {
                    prop_assert!(m.is_valid());
                    prop_assert_eq!(m.len(), bounds.len());
                }
                Err(_) => prop_assert!(c.encoder_length(n) < bounds.len()),
            }
        }
    }
}
