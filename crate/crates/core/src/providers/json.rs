//! Locating a JSON object inside free-form model output.

use serde_json::{Map, Value};

/// Finds the first balanced `{...}` span that parses as a JSON object.
///
/// Models routinely wrap their answer in prose or Markdown fences, so the
/// whole body is not expected to be JSON. Braces inside string literals are
/// ignored while balancing.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(offset) = text[start..].find('{') {
        let open = start + offset;
        let close = balanced_end(bytes, open)?;
        if let Ok(Value::Object(map)) = serde_json::from_str(&text[open..=close]) {
            return Some(map);
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
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}
