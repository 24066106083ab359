//! Query/document tokenization shared by sparse retrieval, the mock
//! hashing embedder, and the mock reranker.
//!
//! Tokens are maximal alphanumeric runs, case-folded. Runs of CJK
//! characters do not form one giant token; they emit character bigrams
//! instead (the standard trick for scoring unsegmented text), or the
//! single character when the run has length 1. Segmentation is driven by
//! script, so the same function serves English, Chinese, and mixed text.

/// Han ideographs, kana, and Hangul syllables: scripts written without
/// spaces, where bigram emission replaces word splitting.
fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK extension A
        | 0x4E00..=0x9FFF    // CJK unified ideographs
        | 0xAC00..=0xD7AF    // Hangul syllables
        | 0xF900..=0xFAFF    // CJK compatibility ideographs
        | 0x20000..=0x2A6DF  // CJK extension B
    )
}

fn push_segment(out: &mut Vec<String>, segment: &[char], cjk: bool) {
    if segment.is_empty() {
        return;
    }
    if cjk {
        if segment.len() == 1 {
            out.push(segment[0].to_string());
        } else {
            for pair in segment.windows(2) {
                out.push(pair.iter().collect());
            }
        }
    } else {
        out.push(segment.iter().flat_map(|c| c.to_lowercase()).collect());
    }
}

/// Splits `text` into search tokens. Deterministic; returns an empty list
/// for text with no alphanumeric content.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut segment: Vec<char> = Vec::new();
    let mut segment_cjk = false;

    for c in text.chars() {
        if c.is_alphanumeric() {
            let cjk = is_cjk(c);
            if !segment.is_empty() && cjk != segment_cjk {
                push_segment(&mut tokens, &segment, segment_cjk);
                segment.clear();
            }
            segment_cjk = cjk;
            segment.push(c);
        } else if !segment.is_empty() {
            push_segment(&mut tokens, &segment, segment_cjk);
            segment.clear();
        }
    }
    push_segment(&mut tokens, &segment, segment_cjk);
    tokens
}
