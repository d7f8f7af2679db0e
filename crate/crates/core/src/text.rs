//! Word and character helpers shared by clipping, statistics and span alignment.
//!
//! A word is a maximal run of non-whitespace characters (Unicode whitespace).
//! Character offsets are counted in Unicode scalar values, never bytes.

/// Splits `text` into words.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

pub fn word_count(text: &str) -> usize {
    words(text).count()
}

/// Number of Unicode scalar values in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte offset of the `char_idx`-th scalar value, or `s.len()` when `char_idx`
/// equals the char length. `None` when out of range.
pub fn byte_offset(s: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut seen = 0;
    for (byte, _) in s.char_indices() {
        if seen == char_idx {
            return Some(byte);
        }
        seen += 1;
    }
    (seen == char_idx).then_some(s.len())
}

/// Substring by scalar-value offsets. `None` if the range runs past the end.
pub fn char_slice(s: &str, start: usize, len: usize) -> Option<&str> {
    let from = byte_offset(s, start)?;
    let to = from + byte_offset(&s[from..], len)?;
    Some(&s[from..to])
}

/// Converts a byte offset that lies on a char boundary into a scalar offset.
pub fn char_index_of_byte(s: &str, byte: usize) -> usize {
    s[..byte].chars().count()
}
