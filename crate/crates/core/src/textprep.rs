//! Comment cleaning applied before every tokenizer.
//!
//! Rules, in order:
//! 1. URLs (`http://`, `https://`, `www.` up to the next whitespace) are dropped.
//! 2. Punctuation (Unicode category P, plus ASCII `$ + < = > ^ | ~`) is dropped.
//! 3. Decimal digits (Unicode category Nd, any script) are dropped.
//! 4. Runs of the same code point longer than two collapse to two.
//! 5. Whitespace runs become a single space; leading/trailing space is trimmed.
//!
//! Malayalam and Tamil letters, combining marks and joiners pass through.

use std::fmt;
use std::ops::Deref;

use unicode_general_category::{get_general_category, GeneralCategory};

use crate::corpus::CommentRecord;

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];
pub const MAX_RUN: usize = 2;

/// Text that has been through [`clean_text`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CleanText(String);

impl CleanText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Whitespace tokens.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ').filter(|t| !t.is_empty())
    }
}

impl Deref for CleanText {
    type Target = str;
    fn deref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CleanText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn is_punctuation(c: char) -> bool {
    matches!(c, '$' | '+' | '<' | '=' | '>' | '^' | '|' | '~')
        || matches!(
            get_general_category(c),
            GeneralCategory::ConnectorPunctuation
                | GeneralCategory::DashPunctuation
                | GeneralCategory::OpenPunctuation
                | GeneralCategory::ClosePunctuation
                | GeneralCategory::InitialPunctuation
                | GeneralCategory::FinalPunctuation
                | GeneralCategory::OtherPunctuation
        )
}

pub fn is_decimal_digit(c: char) -> bool {
    get_general_category(c) == GeneralCategory::DecimalNumber
}

fn starts_with_url(s: &str) -> bool {
    URL_PREFIXES.iter().any(|p| {
        s.len() >= p.len()
            && s.is_char_boundary(p.len())
            && s[..p.len()].eq_ignore_ascii_case(p)
    })
}

pub fn contains_url(s: &str) -> bool {
    s.char_indices().any(|(i, _)| starts_with_url(&s[i..]))
}

fn strip_urls(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut in_url = false;
    for (i, c) in raw.char_indices() {
        if in_url {
            if c.is_whitespace() {
                in_url = false;
                out.push(c);
            }
            continue;
        }
        if starts_with_url(&raw[i..]) {
            in_url = true;
            continue;
        }
        out.push(c);
    }
    out
}

fn collapse_runs(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev = None;
    let mut run = 0;
    for c in s.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if run <= MAX_RUN {
            out.push(c);
        }
    }
    out
}

/// Length of the longest run of one repeated code point.
pub fn longest_run(s: &str) -> usize {
    let mut best = 0;
    let mut prev = None;
    let mut run = 0;
    for c in s.chars() {
        run = if Some(c) == prev { run + 1 } else { 1 };
        prev = Some(c);
        best = best.max(run);
    }
    best
}

/// Applies the five cleaning rules. Total and idempotent.
pub fn clean_text(raw: &str) -> CleanText {
    let no_urls = strip_urls(raw);
    let no_punct_digits: String = no_urls
        .chars()
        .filter(|&c| !is_punctuation(c) && !is_decimal_digit(c))
        .collect();
    let collapsed = collapse_runs(&no_punct_digits);
    CleanText(collapsed.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// Cleans every record, preserving order and length. Records whose text
/// cleans to nothing are kept with an empty [`CleanText`].
pub fn clean_corpus(records: &[CommentRecord]) -> Vec<(String, CleanText)> {
    records
        .iter()
        .map(|r| (r.id.clone(), clean_text(&r.text)))
        .collect()
}

/// True when `s` satisfies every post-condition of [`clean_text`].
pub fn is_clean(s: &str) -> bool {
    !contains_url(s)
        && !s.chars().any(|c| is_punctuation(c) || is_decimal_digit(c) || (c.is_whitespace() && c != ' '))
        && longest_run(s) <= MAX_RUN
        && !s.starts_with(' ')
        && !s.ends_with(' ')
        && !s.contains("  ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use proptest::prelude::*;

    #[test]
    fn empty_is_fixed_point() {
        assert_eq!(clean_text("").as_str(), "");
    }

    #[test]
    fn applies_rules_in_order() {
        assert_eq!(clean_text("see https://x.yz/a now!!! 123").as_str(), "see now");
        assert_eq!(clean_text("superrrrr").as_str(), "superr");
        assert_eq!(clean_text("visit www.example.com/path?q=1 please").as_str(), "visit please");
        assert_eq!(clean_text("HTTPS://LOUD.example").as_str(), "");
    }

    #[test]
    fn punctuation_removal_can_create_runs_that_then_collapse() {
        assert_eq!(clean_text("aa.a").as_str(), "aa");
        assert_eq!(clean_text("a1a2a").as_str(), "aa");
    }

    #[test]
    fn native_digits_and_ascii_symbols_removed() {
        // Malayalam digit one, Tamil digit two
        assert_eq!(clean_text("x\u{0D67}y\u{0BE8}z").as_str(), "xyz");
        assert_eq!(clean_text("a$b+c<d=e>f^g|h~i").as_str(), "abcdefghi");
    }

    #[test]
    fn malayalam_and_tamil_letters_survive() {
        let ml = "നല്ല സിനിമ";
        let ta = "மிகவும் நல்ல படம்";
        assert_eq!(clean_text(ml).as_str(), ml);
        assert_eq!(clean_text(&format!("{ta}!!! 2022")).as_str(), ta);
        // zero-width joiner inside a chillu sequence is preserved
        let zwj = "ന\u{0D4D}\u{200D}";
        assert_eq!(clean_text(zwj).as_str(), zwj);
    }

    #[test]
    fn whitespace_normalized() {
        assert_eq!(clean_text("  a \t\n b  ").as_str(), "a b");
        assert_eq!(clean_text("a\u{3000}b").as_str(), "a b");
    }

    #[test]
    fn corpus_cleaning() {
        let mk = |t: &str| CommentRecord {
            id: t.into(),
            text: t.into(),
            label: None,
            language: Language::Tamil,
        };
        let out = clean_corpus(&[mk("!!!"), mk("ok")]);
        assert_eq!(out[0].1.as_str(), "");
        assert_eq!(out[1].1.as_str(), "ok");
        assert!(clean_corpus(&[]).is_empty());
        let clean = ["already clean", "நல்ல"];
        let out = clean_corpus(&clean.map(mk));
        assert_eq!(out.iter().map(|(_, c)| c.as_str()).collect::<Vec<_>>(), clean);
    }

    fn noisy_text() -> impl Strategy<Value = String> {
        let pieces = prop_oneof![
            any::<char>().prop_map(|c| c.to_string()),
            "[a-z]{1,4}".prop_map(|s| s),
            Just("https://x.y/z".to_string()),
            Just("www.".to_string()),
            Just("!!!".to_string()),
            Just("   ".to_string()),
            Just("ംംംം".to_string()),
            "[\u{0D00}-\u{0D7F}]{1,3}",
            "[\u{0B80}-\u{0BFF}]{1,3}",
            "[0-9]{1,3}",
        ];
        prop::collection::vec(pieces, 0..12).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn idempotent(s in noisy_text()) {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once.clone());
            prop_assert!(is_clean(&once), "{:?} -> {:?}", s, once);
        }

        #[test]
        fn idempotent_on_any_unicode(s in any::<String>()) {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once.clone());
            prop_assert!(is_clean(&once));
        }

        #[test]
        fn script_letters_preserved(words in prop::collection::vec("[\u{0D05}-\u{0D39}\u{0B85}-\u{0BB9}]{1,6}", 1..6),
                                    junk in prop::collection::vec(prop_oneof![Just("!"), Just("12"), Just(" "), Just("http://q.w ")], 1..6)) {
            let mut s = String::new();
            for (i, w) in words.iter().enumerate() {
                s.push_str(w);
                s.push_str(junk[i % junk.len()]);
                s.push(' ');
            }
            // only runs of 3+ repeats may lose letters, so compare after collapsing
            let letters = |t: &str| -> String {
                collapse_runs(&t.chars().filter(|c| get_general_category(*c) == GeneralCategory::OtherLetter).collect::<String>())
            };
            prop_assert_eq!(letters(&clean_text(&s)), letters(&s));
        }
    }
}
