//! Byte-level scanning helpers for guest (Python) source text.
//!
//! Only the lexical structure needed by the assertion parser and the mutant
//! generator is recognized: string literals (with prefixes and triple quotes),
//! comments and bracket nesting. All delimiters are ASCII, so scanning the
//! UTF-8 bytes directly never splits a multi-byte character.

/// Returns true when `b` can appear inside an identifier.
pub(crate) fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

pub(crate) fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b >= 0x80
}

/// If a string literal (optionally prefixed by r/b/u/f combinations) starts at
/// `pos`, returns the byte index one past its closing quote. An unterminated
/// literal extends to the end of input and yields `Err(len)`.
pub(crate) fn string_literal_at(src: &[u8], pos: usize) -> Option<Result<usize, usize>> {
    let mut i = pos;
    // Up to two prefix letters, and only when not continuing an identifier.
    if i > 0 && is_ident_byte(src[i - 1]) && !matches!(src.get(i), Some(b'\'' | b'"')) {
        return None;
    }
    let mut prefix_len = 0;
    while prefix_len < 2 && i < src.len() && matches!(src[i], b'r' | b'R' | b'b' | b'B' | b'u' | b'U' | b'f' | b'F') {
        i += 1;
        prefix_len += 1;
    }
    if i >= src.len() || !matches!(src[i], b'\'' | b'"') {
        return None;
    }
    let quote = src[i];
    let triple = i + 2 < src.len() && src[i + 1] == quote && src[i + 2] == quote;
    let mut j = if triple { i + 3 } else { i + 1 };
    while j < src.len() {
        let c = src[j];
        if c == b'\\' {
            j += 2;
            continue;
        }
        if triple {
            if c == quote && src.get(j + 1) == Some(&quote) && src.get(j + 2) == Some(&quote) {
                return Some(Ok(j + 3));
            }
        } else if c == quote {
            return Some(Ok(j + 1));
        } else if c == b'\n' {
            return Some(Err(src.len()));
        }
        j += 1;
    }
    Some(Err(src.len()))
}

/// A lexical segment of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Segment {
    /// A complete string literal spanning `[start, end)`.
    Str(usize, usize),
    /// A single byte of code outside string literals.
    Code(usize),
}

/// Splits `src` into string-literal segments and single code bytes. Returns
/// `None` when a string literal is unterminated.
pub(crate) fn segments(src: &str) -> Option<Vec<Segment>> {
    let bytes = src.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if let Some(end) = string_literal_at(bytes, i) {
            let end = end.ok()?;
            out.push(Segment::Str(i, end));
            i = end;
        } else {
            out.push(Segment::Code(i));
            i += 1;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recognizes_prefixed_and_triple_strings() {
        let s = br#"x = rb'a\'b' + """q"q""" "#;
        assert_eq!(string_literal_at(s, 4), Some(Ok(12)));
        assert_eq!(string_literal_at(s, 15), Some(Ok(24)));
        assert_eq!(string_literal_at(s, 0), None);
    }

    #[test]
    fn identifier_suffix_is_not_a_prefix() {
        // `bar'...'` is not a b-prefixed literal starting at `b`.
        let s = b"xbr'a'";
        assert_eq!(string_literal_at(s, 1), None);
        assert_eq!(string_literal_at(s, 3), Some(Ok(6)));
    }

    #[test]
    fn unterminated_string_is_reported() {
        assert!(segments("f('abc").is_none());
        assert_eq!(segments("'a'b").unwrap().len(), 2);
    }
}
