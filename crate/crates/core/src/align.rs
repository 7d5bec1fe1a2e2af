//! Text normalization and minimum-edit alignment.
//!
//! Alignment is a Levenshtein DP with unit costs and a fixed backtrace
//! preference (substitution, then deletion, then insertion), so the emitted
//! op sequence is deterministic across runs and platforms. Substitution
//! pairs in the op list feed the embedding-aware error rate downstream.

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// Alignment granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Word,
    Char,
}

/// One edit operation in an alignment backtrace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Hit,
    Sub,
    Del,
    Ins,
}

/// A single aligned position: the op plus the tokens it consumes.
///
/// Hits and substitutions carry both tokens, deletions only the reference
/// token, insertions only the hypothesis token.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub op: EditOp,
    pub ref_token: Option<String>,
    pub hyp_token: Option<String>,
}

/// Minimum-edit alignment counts and the op sequence that realizes them.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub level: Level,
    pub hits: usize,
    pub subs: usize,
    pub dels: usize,
    pub ins: usize,
    pub ops: Vec<AlignedPair>,
}

impl AlignmentResult {
    /// Reference token count: H + S + D.
    pub fn n_ref(&self) -> usize {
        self.hits + self.subs + self.dels
    }

    /// Hypothesis token count: H + S + I.
    pub fn n_hyp(&self) -> usize {
        self.hits + self.subs + self.ins
    }

    /// Minimum edit distance: S + D + I.
    pub fn edits(&self) -> usize {
        self.subs + self.dels + self.ins
    }

    /// Replay the op list to reconstruct the hypothesis token sequence.
    pub fn replay_hypothesis(&self) -> Vec<String> {
        self.ops
            .iter()
            .filter_map(|p| p.hyp_token.clone())
            .collect()
    }
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Normalize a transcript into a token list.
///
/// Applies Unicode NFC composition, lowercases, removes punctuation
/// (Unicode category P) except apostrophes and hyphens that sit between
/// alphanumeric characters, then splits on whitespace. Total: never fails,
/// empty input yields an empty list.
pub fn normalize(text: &str) -> Vec<String> {
    let composed: String = text.nfc().collect::<String>().to_lowercase();
    let chars: Vec<char> = composed.chars().collect();
    let mut cleaned = String::with_capacity(composed.len());
    for (i, &c) in chars.iter().enumerate() {
        if is_punctuation(c) {
            let intra_word = matches!(c, '\'' | '\u{2019}' | '-')
                && i > 0
                && chars[i - 1].is_alphanumeric()
                && i + 1 < chars.len()
                && chars[i + 1].is_alphanumeric();
            if intra_word {
                cleaned.push(c);
            }
            // dropped otherwise
        } else {
            cleaned.push(c);
        }
    }
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Join normalized tokens with single spaces (the character-level input).
pub fn join_tokens(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// Word-level minimum-edit alignment with unit costs.
pub fn align<S: AsRef<str>>(ref_tokens: &[S], hyp_tokens: &[S]) -> AlignmentResult {
    let r: Vec<&str> = ref_tokens.iter().map(|s| s.as_ref()).collect();
    let h: Vec<&str> = hyp_tokens.iter().map(|s| s.as_ref()).collect();
    align_slices(&r, &h, Level::Word, |t| (*t).to_owned())
}

/// Character-level alignment over two already-normalized, space-joined
/// strings. Inter-word spaces count as ordinary characters.
pub fn align_chars(ref_text: &str, hyp_text: &str) -> AlignmentResult {
    let r: Vec<char> = ref_text.chars().collect();
    let h: Vec<char> = hyp_text.chars().collect();
    align_slices(&r, &h, Level::Char, |c| c.to_string())
}

/// Levenshtein DP (sub = del = ins = 1) with deterministic backtrace.
///
/// Backtrace preference when several moves attain the minimum:
/// hit (free diagonal), substitution, deletion, insertion.
fn align_slices<T, F>(r: &[T], h: &[T], level: Level, to_string: F) -> AlignmentResult
where
    T: Eq,
    F: Fn(&T) -> String,
{
    let n = r.len();
    let m = h.len();
    let w = m + 1;
    let mut dp = vec![0u32; (n + 1) * w];
    for i in 0..=n {
        dp[i * w] = i as u32;
    }
    for j in 0..=m {
        dp[j] = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = u32::from(r[i - 1] != h[j - 1]);
            let diag = dp[(i - 1) * w + (j - 1)] + sub_cost;
            let up = dp[(i - 1) * w + j] + 1;
            let left = dp[i * w + (j - 1)] + 1;
            dp[i * w + j] = diag.min(up).min(left);
        }
    }

    let mut ops: Vec<AlignedPair> = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let cur = dp[i * w + j];
        if i > 0 && j > 0 && r[i - 1] == h[j - 1] && dp[(i - 1) * w + (j - 1)] == cur {
            ops.push(AlignedPair {
                op: EditOp::Hit,
                ref_token: Some(to_string(&r[i - 1])),
                hyp_token: Some(to_string(&h[j - 1])),
            });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && r[i - 1] != h[j - 1] && dp[(i - 1) * w + (j - 1)] + 1 == cur {
            ops.push(AlignedPair {
                op: EditOp::Sub,
                ref_token: Some(to_string(&r[i - 1])),
                hyp_token: Some(to_string(&h[j - 1])),
            });
            i -= 1;
            j -= 1;
        } else if i > 0 && dp[(i - 1) * w + j] + 1 == cur {
            ops.push(AlignedPair {
                op: EditOp::Del,
                ref_token: Some(to_string(&r[i - 1])),
                hyp_token: None,
            });
            i -= 1;
        } else {
            debug_assert!(j > 0 && dp[i * w + (j - 1)] + 1 == cur);
            ops.push(AlignedPair {
                op: EditOp::Ins,
                ref_token: None,
                hyp_token: Some(to_string(&h[j - 1])),
            });
            j -= 1;
        }
    }
    ops.reverse();

    let mut hits = 0;
    let mut subs = 0;
    let mut dels = 0;
    let mut ins = 0;
    for p in &ops {
        match p.op {
            EditOp::Hit => hits += 1,
            EditOp::Sub => subs += 1,
            EditOp::Del => dels += 1,
            EditOp::Ins => ins += 1,
        }
    }
    debug_assert_eq!(hits + subs + dels, n);
    debug_assert_eq!(hits + subs + ins, m);
    debug_assert_eq!((subs + dels + ins) as u32, dp[n * w + m]);

    AlignmentResult { level, hits, subs, dels, ins, ops }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn normalize_strips_punctuation() {
        assert_eq!(normalize("Go, meet!"), toks("go meet"));
    }

    #[test]
    fn normalize_keeps_intra_word_marks() {
        assert_eq!(normalize("it's well-known"), vec!["it's", "well-known"]);
    }

    #[test]
    fn normalize_empty() {
        assert!(normalize("").is_empty());
    }

    #[test]
    fn normalize_case_and_whitespace_invariance() {
        assert_eq!(normalize("  The CAT  "), normalize("the cat"));
    }

    #[test]
    fn align_single_insertion() {
        let a = align(&toks("go meet"), &toks("go to meet"));
        assert_eq!((a.hits, a.subs, a.dels, a.ins), (2, 0, 0, 1));
    }

    #[test]
    fn align_single_substitution() {
        let a = align(&toks("plastic snake"), &toks("plastic snack"));
        assert_eq!((a.hits, a.subs, a.dels, a.ins), (1, 1, 0, 0));
    }

    #[test]
    fn align_empty_reference() {
        let a = align(&toks(""), &toks("a"));
        assert_eq!((a.hits, a.subs, a.dels, a.ins), (0, 0, 0, 1));
    }

    #[test]
    fn align_identity() {
        let t = toks("a b c d");
        let a = align(&t, &t);
        assert_eq!((a.hits, a.subs, a.dels, a.ins), (4, 0, 0, 0));
    }

    #[test]
    fn align_counts_match_lengths() {
        let a = align(&toks("a b c"), &toks("x c d"));
        assert_eq!(a.n_ref(), 3);
        assert_eq!(a.n_hyp(), 3);
        assert_eq!(a.edits(), 3);
    }

    #[test]
    fn replay_reconstructs_hypothesis() {
        let r = toks("the quick brown fox");
        let h = toks("a quick fox jumps");
        let a = align(&r, &h);
        assert_eq!(a.replay_hypothesis(), h);
    }

    #[test]
    fn char_alignment_counts_spaces() {
        let a = align_chars("a b", "a c");
        assert_eq!((a.hits, a.subs), (2, 1));
        let b = align_chars("ab", "ab");
        assert_eq!((b.hits, b.edits()), (2, 0));
    }

    #[test]
    fn backtrace_is_deterministic() {
        let a1 = align(&toks("a b c"), &toks("b c d"));
        let a2 = align(&toks("a b c"), &toks("b c d"));
        assert_eq!(a1.ops, a2.ops);
    }
}
