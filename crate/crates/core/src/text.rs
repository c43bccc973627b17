//! Text canonicalization shared by the corpus, the probe filters and the metrics.

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize(text: &str) -> String {
    metric_tokens(text).join(" ")
}

/// Lowercased whitespace tokens with punctuation removed; used by ROUGE and token F1.
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-'
}

/// Splits text into word pieces and single-character punctuation pieces.
/// Newlines are kept as their own piece.
pub fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            if start.is_none() {
                start = Some(i);
            }
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if c == '\n' || !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Inverse of [`split_words`] for text written in canonical spacing.
pub fn join_words<S: AsRef<str>>(pieces: &[S]) -> String {
    let mut out = String::new();
    for piece in pieces {
        let p = piece.as_ref();
        let attach = matches!(p, "." | "," | "?" | "!" | ":" | ";" | ")" | "\n");
        if !out.is_empty() && !attach && !out.ends_with('\n') && !out.ends_with('(') {
            out.push(' ');
        }
        out.push_str(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_strips_case_and_punctuation() {
        assert_eq!(
            normalize("Where was  Zorvel Quanth born?"),
            "where was zorvel quanth born"
        );
        assert_eq!(normalize("  ...  "), "");
    }

    #[test]
    fn split_and_join_round_trip() {
        let s = "Q: Where was Ivo Marr born?\nA: Ivo Marr was born in Avaria.";
        let pieces = split_words(s);
        assert_eq!(pieces[0], "Q");
        assert_eq!(pieces[1], ":");
        assert!(pieces.contains(&"\n"));
        assert_eq!(join_words(&pieces), s);
    }

    #[test]
    fn apostrophes_stay_in_words() {
        assert_eq!(split_words("I don't know."), vec!["I", "don't", "know", "."]);
    }
}
