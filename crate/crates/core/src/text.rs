//! Tokenization shared by the embedding provider, the concept matcher and
//! ticker extraction.

/// Maximal ASCII-alphanumeric runs; everything else separates tokens.
pub fn raw_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
}

/// Lowercased word tokens.
pub fn words(text: &str) -> Vec<String> {
    raw_tokens(text).map(|t| t.to_ascii_lowercase()).collect()
}

/// Canonical key for a phrase: lowercased words joined by single spaces.
pub fn normalize_phrase(phrase: &str) -> String {
    words(phrase).join(" ")
}

/// Tokens made only of uppercase ASCII letters, in order of appearance.
pub fn uppercase_tokens(text: &str) -> impl Iterator<Item = &str> {
    raw_tokens(text).filter(|t| t.bytes().all(|b| b.is_ascii_uppercase()))
}

/// Counts `.`, `!` and `?` that end a sentence, i.e. are followed by
/// whitespace or the end of the text. Decimal points do not count.
pub fn sentence_terminators(text: &str) -> usize {
    let bytes = text.as_bytes();
    bytes
        .iter()
        .enumerate()
        .filter(|&(i, b)| {
            matches!(b, b'.' | b'!' | b'?')
                && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace())
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_split_on_punctuation() {
        assert_eq!(words("GOOGL's top-line growth"), ["googl", "s", "top", "line", "growth"]);
        assert_eq!(normalize_phrase("  Better-than-expected  Earnings "), "better than expected earnings");
    }

    #[test]
    fn uppercase_only() {
        let got: Vec<_> = uppercase_tokens("Did EQR and WELL see it? What's AAPL's X1").collect();
        assert_eq!(got, ["EQR", "WELL", "AAPL"]);
    }

    #[test]
    fn terminators_ignore_decimals() {
        assert_eq!(sentence_terminators("Up 18.1% today. Down 2.5%! Why? Ok."), 4);
        assert_eq!(sentence_terminators("no end"), 0);
    }
}
