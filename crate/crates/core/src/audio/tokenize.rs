//! Rule-based word tokenizer for transcripts.
//!
//! Splits on Unicode whitespace, then emits each punctuation character as a
//! token of its own. The zero-width non-joiner (U+200C) is an ordinary word
//! character, so Persian forms such as `می‌روم` stay whole.

pub const ZWNJ: char = '\u{200C}';

/// Characters split off as separate tokens: ASCII punctuation, Arabic-script
/// punctuation, guillemets, curly quotes, dashes and the ellipsis.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{060C}' // arabic comma
                | '\u{061B}' // arabic semicolon
                | '\u{061F}' // arabic question mark
                | '\u{066A}'..='\u{066D}'
                | '\u{06D4}' // arabic full stop
                | '\u{00AB}' | '\u{00BB}'
                | '\u{2018}'..='\u{201F}'
                | '\u{2013}' | '\u{2014}'
                | '\u{2026}'
                | '\u{00A1}' | '\u{00BF}'
        )
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Whitespace runs collapsed to one space, ends trimmed.
pub fn normalize_spaces(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(tokenize("سلام دنیا"), ["سلام", "دنیا"]);
        assert_eq!(tokenize("می\u{200C}روم"), ["می\u{200C}روم"]);
        assert_eq!(tokenize("hi, there"), ["hi", ",", "there"]);
        assert_eq!(tokenize("چطوری؟ «خوبم»"), ["چطوری", "؟", "«", "خوبم", "»"]);
        assert!(tokenize(" \t\n").is_empty());
    }

    proptest! {
        #[test]
        fn join_inverts_on_plain_text(words in prop::collection::vec("[a-zA-Z0-9\u{0627}-\u{064A}\u{200C}]{1,8}", 0..12), gaps in prop::collection::vec("[ \t\n]{1,3}", 12)) {
            let mut s = String::new();
            for (w, g) in words.iter().zip(&gaps) {
                s.push_str(g);
                s.push_str(w);
            }
            prop_assert_eq!(tokenize(&s).join(" "), normalize_spaces(&s));
        }
    }
}
