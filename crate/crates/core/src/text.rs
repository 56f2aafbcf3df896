//! Tokenization and sentence segmentation shared by scoring, splitting and
//! the summarization stubs.

use std::collections::BTreeSet;

/// Lowercased alphanumeric terms; any other character separates terms.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn term_set(text: &str) -> BTreeSet<String> {
    terms(text).into_iter().collect()
}

/// Whitespace-delimited words; the unit for token budgets.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | ';' | '。' | '！' | '？' | '；')
}

/// Splits after `.`, `!`, `?`, `;` (and their CJK forms) when followed by
/// whitespace or the end of text, and at line breaks. Pieces are
/// whitespace-normalized; empty pieces are dropped.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' || c == '\r' {
            push_piece(&mut out, &mut current);
            continue;
        }
        current.push(c);
        if is_terminator(c) {
            let cjk = !c.is_ascii();
            let boundary = match chars.peek() {
                None => true,
                Some(n) => n.is_whitespace() || (cjk && !is_terminator(*n)),
            };
            if boundary {
                push_piece(&mut out, &mut current);
            }
        }
    }
    push_piece(&mut out, &mut current);
    out
}

fn push_piece(out: &mut Vec<String>, current: &mut String) {
    let piece = normalize_whitespace(current);
    if !piece.is_empty() {
        out.push(piece);
    }
    current.clear();
}

/// Fixed-size character windows.
pub fn chunks(text: &str, size: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    chars
        .chunks(size.max(1))
        .map(|c| c.iter().collect::<String>())
        .filter(|s| !s.trim().is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_split_on_punctuation() {
        assert_eq!(
            terms("incident:p1-network OKR"),
            vec!["incident", "p1", "network", "okr"]
        );
    }

    #[test]
    fn sentence_boundaries() {
        assert_eq!(
            sentences("One. Two!  Three? four; five"),
            vec!["One.", "Two!", "Three?", "four;", "five"]
        );
        // decimals and times are not boundaries
        assert_eq!(
            sentences("Version 2.5 at 20:07 is out."),
            vec!["Version 2.5 at 20:07 is out."]
        );
        assert_eq!(sentences("a\nb"), vec!["a", "b"]);
        assert_eq!(sentences("第一句。第二句。"), vec!["第一句。", "第二句。"]);
        assert!(sentences("   ").is_empty());
    }

    #[test]
    fn chunk_windows() {
        assert_eq!(chunks("abcdefg", 3), vec!["abc", "def", "g"]);
        assert_eq!(chunks("abc", 10), vec!["abc"]);
    }
}
