//! Timestamp removal and year replacement.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

const MONTHS: [&str; 12] =
    ["january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november", "december"];
const WEEKDAYS: [&str; 7] = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
const CONNECTORS: [&str; 5] = ["to", "or", "and", "-", "–"];
const PREPOSITIONS: [&str; 7] = ["on", "in", "from", "since", "during", "until", "by"];
const SENTENCE_END: [char; 4] = ['.', '!', '?', ';'];

pub(crate) fn is_year_digits(s: &[u8]) -> bool {
    s.len() == 4 && s.iter().all(u8::is_ascii_digit) && (&s[..2] == b"19" || &s[..2] == b"20")
}

/// Word with a leading `(` and trailing `,.;:!?)` removed.
fn core(word: &str) -> &str {
    word.trim_start_matches('(').trim_end_matches([',', '.', ';', ':', '!', '?', ')'])
}

fn one_of(word: &str, set: &[&str]) -> bool {
    set.iter().any(|s| s.eq_ignore_ascii_case(word))
}

fn is_year(word: &str) -> bool {
    is_year_digits(core(word).as_bytes())
}

fn is_day(word: &str) -> bool {
    let w = core(word);
    let digits = w.trim_end_matches(|c: char| c.is_ascii_alphabetic());
    let suffix = &w[digits.len()..];
    let ok_suffix = suffix.is_empty() || one_of(suffix, &["st", "nd", "rd", "th"]);
    ok_suffix && (1..=2).contains(&digits.len()) && digits.parse::<u8>().is_ok_and(|d| (1..=31).contains(&d))
}

fn is_date_word(word: &str) -> bool {
    let w = core(word);
    is_year(word) || is_day(word) || one_of(w, &MONTHS) || one_of(w, &WEEKDAYS)
}

/// Byte ranges of whitespace-separated words.
fn words(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_ascii_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

/// Remove every year 1900–2099 together with the date words attached to it
/// (day numbers, month and weekday names, range connectors) and one
/// preceding preposition. Text without a year is returned unchanged.
pub fn transform_deletion(text: &str) -> String {
    let spans = words(text);
    let w = |i: usize| &text[spans[i].0..spans[i].1];
    let mut drop = alloc::vec![false; spans.len()];
    let mut any = false;
    for i in 0..spans.len() {
        if !is_year(w(i)) {
            continue;
        }
        any = true;
        let mut s = i;
        loop {
            if s >= 1 && is_date_word(w(s - 1)) && !w(s - 1).ends_with(['.', '!', '?', ';']) {
                s -= 1;
            } else if s >= 2 && one_of(w(s - 1), &CONNECTORS) && is_date_word(w(s - 2)) {
                s -= 2;
            } else {
                break;
            }
        }
        if s >= 1 && one_of(w(s - 1), &PREPOSITIONS) {
            s -= 1;
        }
        drop[s..=i].iter_mut().for_each(|d| *d = true);
    }
    if !any {
        return text.to_string();
    }

    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    let mut i = 0;
    while i < spans.len() {
        if !drop[i] {
            i += 1;
            continue;
        }
        let first = i;
        while i < spans.len() && drop[i] {
            i += 1;
        }
        let last = i - 1;
        let (start, end) = if first > 0 {
            (spans[first - 1].1, spans[last].1)
        } else if i < spans.len() {
            (spans[first].0, spans[i].0)
        } else {
            (spans[first].0, spans[last].1)
        };
        out.push_str(&text[cursor..start]);
        let tail = w(last).trim_end_matches(')');
        if let Some(c) = tail.chars().last().filter(|c| SENTENCE_END.contains(c)) {
            if first > 0 {
                out.push(c);
            }
        }
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// Replace every standalone year 1900–2099 with `target_year`.
pub fn transform_replacement(text: &str, target_year: u32) -> String {
    let bytes = text.as_bytes();
    let target = target_year.to_string();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let before_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let after_ok = i == bytes.len() || !bytes[i].is_ascii_alphanumeric();
        if before_ok && after_ok && is_year_digits(&bytes[start..i]) {
            out.push_str(&text[cursor..start]);
            out.push_str(&target);
            cursor = i;
        }
    }
    out.push_str(&text[cursor..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deletion_examples() {
        assert_eq!(
            transform_deletion("held on March 12, 2023, at the Dolby Theatre"),
            "held at the Dolby Theatre"
        );
        assert_eq!(
            transform_deletion("The event took place from 13 to 24 August 2014 in Berlin."),
            "The event took place in Berlin."
        );
        assert_eq!(transform_deletion("It opened in 2014. Then it closed."), "It opened. Then it closed.");
        assert_eq!(transform_deletion("In 2019, the club moved."), "the club moved.");
        assert_eq!(transform_deletion("from 2010 to 2012 he led"), "he led");
        assert_eq!(transform_deletion("Room 1850 has 12 seats"), "Room 1850 has 12 seats");
        assert_eq!(transform_deletion("no  dates\there"), "no  dates\there");
    }

    #[test]
    fn replacement_examples() {
        assert_eq!(
            transform_replacement("took place from 13 to 24 August 2014 in Berlin", 2023),
            "took place from 13 to 24 August 2023 in Berlin"
        );
        assert_eq!(transform_replacement("ids 20145 and A2014 stay", 2023), "ids 20145 and A2014 stay");
        assert_eq!(transform_replacement("in 2023.", 2023), "in 2023.");
        assert_eq!(transform_replacement("(1999)", 2001), "(2001)");
    }

    fn sentence() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            Just("on".to_string()),
            Just("in".to_string()),
            Just("to".to_string()),
            Just("March".to_string()),
            Just("Monday,".to_string()),
            (1u32..40).prop_map(|d| d.to_string()),
            (1u32..40).prop_map(|d| alloc::format!("{d},")),
            (1880u32..2120).prop_map(|y| y.to_string()),
            (1880u32..2120).prop_map(|y| alloc::format!("{y}.")),
            (1880u32..2120).prop_map(|y| alloc::format!("({y})")),
            "[A-Za-z]{1,7}",
        ];
        proptest::collection::vec(word, 0..14).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn deletion_is_idempotent(t in sentence()) {
            let once = transform_deletion(&t);
            prop_assert_eq!(transform_deletion(&once), once);
        }

        #[test]
        fn deletion_leaves_no_year(t in sentence()) {
            let out = transform_deletion(&t);
            prop_assert!(!words(&out).iter().any(|&(s, e)| is_year(&out[s..e])));
        }

        #[test]
        fn transforms_commute_with_ascii_lowercase(t in sentence()) {
            let lower = t.to_ascii_lowercase();
            prop_assert_eq!(transform_deletion(&lower), transform_deletion(&t).to_ascii_lowercase());
            prop_assert_eq!(transform_replacement(&lower, 2023), transform_replacement(&t, 2023).to_ascii_lowercase());
        }

        #[test]
        fn replacement_preserves_length(t in sentence(), y in 1000u32..10000) {
            prop_assert_eq!(transform_replacement(&t, y).len(), t.len());
        }

        #[test]
        fn replacement_with_same_year_is_identity(y in 1900u32..2100) {
            let t = alloc::format!("The {y} games ended in {y}.");
            prop_assert_eq!(transform_replacement(&t, y), t);
        }
    }
}
