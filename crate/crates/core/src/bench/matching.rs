//! Deterministic binary match between a prediction and the canonical truth.

use crate::pipeline::Question;
use crate::scene::Attribute;

const NUMERALS: [&str; 21] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

/// Lowercase, punctuation replaced by spaces, whitespace collapsed.
pub fn normalize(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Yes,
    No,
}

/// Yes/no reading of a normalized answer, if it has one.
pub fn polarity(text: &str) -> Option<Polarity> {
    let n = normalize(text);
    if n == "not visible" || n.starts_with("not visible ") {
        return Some(Polarity::No);
    }
    match n.split(' ').next()? {
        "yes" | "true" | "visible" => Some(Polarity::Yes),
        "no" | "false" => Some(Polarity::No),
        _ => None,
    }
}

/// First integer or word numeral (zero to twenty) in the text.
pub fn parse_count(text: &str) -> Option<u64> {
    normalize(text).split(' ').find_map(|tok| {
        tok.parse::<u64>()
            .ok()
            .or_else(|| NUMERALS.iter().position(|w| *w == tok).map(|i| i as u64))
    })
}

/// First token of the text that names a value of `attr`, with yes/no
/// accepted for boolean attributes.
fn attribute_value(text: &str, attr: Attribute) -> Option<&'static str> {
    let n = normalize(text);
    if attr.is_boolean() {
        return polarity(&n).map(|p| match p {
            Polarity::Yes => "true",
            Polarity::No => "false",
        });
    }
    n.split(' ').find_map(|tok| attr.canonical_value(tok))
}

/// 1 if `prediction` and `truth` agree after normalization, else 0.
pub fn binary_match(prediction: &str, truth: &str, question: &Question) -> u8 {
    let same = match question {
        Question::Visibility { .. } => match (polarity(prediction), polarity(truth)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
        Question::Count { .. } => match (parse_count(prediction), parse_count(truth)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
        Question::Attribute { attribute, .. } => {
            match (
                attribute_value(prediction, *attribute),
                attribute_value(truth, *attribute),
            ) {
                (Some(a), Some(b)) => a == b,
                _ => false,
            }
        }
    };
    u8::from(same)
}
