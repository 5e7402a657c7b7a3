//! Character-level helpers shared by the tokenizer, the dictionary matcher and
//! the retrieval index. All offsets in this crate count Unicode scalar values.

/// True for ideographs and the syllabic scripts that are tokenized one
/// character at a time (Han, kana, Hangul).
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK extension A
        | 0x4E00..=0x9FFF    // CJK unified ideographs
        | 0xAC00..=0xD7AF    // Hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F  // extensions B..F, compatibility supplement
        | 0x30000..=0x323AF  // extensions G, H
    )
}

/// Characters that extend a Latin/digit run. CJK characters are excluded and
/// become single-character tokens instead.
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() && !is_cjk(c)
}

/// Lowercases `c` when the mapping is one-to-one, so folded text keeps the
/// same character offsets as the original.
pub fn fold_char(c: char) -> char {
    if is_cjk(c) {
        return c;
    }
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

pub fn fold(text: &str) -> String {
    text.chars().map(fold_char).collect()
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring by character offsets. Out-of-range bounds are clamped.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let from = indices.nth(start).unwrap_or(text.len());
    let to = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        from
    };
    &text[from..to]
}

/// Maps byte offsets of `text` to character offsets. The returned table has
/// `text.len() + 1` entries; entries that fall inside a multi-byte character
/// point at that character.
pub fn byte_to_char_table(text: &str) -> Vec<usize> {
    let mut table = vec![0; text.len() + 1];
    let mut chars = 0;
    for (i, c) in text.char_indices() {
        for slot in &mut table[i..i + c.len_utf8()] {
            *slot = chars;
        }
        chars += 1;
    }
    table[text.len()] = chars;
    table
}
