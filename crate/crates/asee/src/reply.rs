//! Locating the JSON payload inside a model reply.
//!
//! Replies are asked to be a single fenced JSON object, but models wrap
//! payloads in prose, drop fences, or emit trailing commentary. The finder
//! prefers a fenced block, then the whole trimmed reply, then the first
//! balanced object/array found by scanning.

use serde_json::Value;

/// Where the JSON was found; `Balanced` means a repair heuristic fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsonSource {
    Fenced,
    Whole,
    Balanced,
}

impl JsonSource {
    /// True when the payload was where the prompt asked it to be.
    pub fn is_clean(self) -> bool {
        !matches!(self, JsonSource::Balanced)
    }
}

/// Extracts the first JSON value from a reply, or `None` when the reply
/// carries no parseable JSON at all.
pub fn find_first_json(reply: &str) -> Option<(Value, JsonSource)> {
    if let Some(value) = fenced_json(reply) {
        return Some((value, JsonSource::Fenced));
    }
    let trimmed = reply.trim();
    if let Ok(value) = serde_json::from_str::<Value>(trimmed) {
        return Some((value, JsonSource::Whole));
    }
    balanced_json(reply).map(|value| (value, JsonSource::Balanced))
}

fn fenced_json(reply: &str) -> Option<Value> {
    let mut rest = reply;
    while let Some(open) = rest.find("```") {
        let after_fence = &rest[open + 3..];
        // Skip an optional language tag on the fence line.
        let body_start = after_fence.find('\n').map(|i| i + 1).unwrap_or(0);
        let body = &after_fence[body_start..];
        let close = body.find("```")?;
        let candidate = body[..close].trim();
        if let Ok(value) = serde_json::from_str::<Value>(candidate) {
            return Some(value);
        }
        rest = &body[close + 3..];
    }
    None
}

/// Scans for the first balanced `{...}` or `[...]` that parses, tracking
/// string and escape state so braces inside string values do not confuse
/// the depth count.
fn balanced_json(reply: &str) -> Option<Value> {
    let bytes = reply.as_bytes();
    let mut start = 0;
    while let Some(offset) = reply[start..].find(['{', '[']) {
        let open = start + offset;
        if let Some(end) = balanced_end(bytes, open) {
            if let Ok(value) = serde_json::from_str::<Value>(&reply[open..end]) {
                return Some(value);
            }
        }
        start = open + 1;
    }
    None
}

fn balanced_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' | b'[' => depth += 1,
            b'}' | b']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}
