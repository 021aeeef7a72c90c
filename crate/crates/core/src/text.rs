//! Normalization, tokenization and text combination.

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// Rule switches for [`preprocess`]. The defaults turn everything on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub strip_diacritics: bool,
    pub strip_tatweel: bool,
    pub remove_digits_and_percent: bool,
    pub remove_punctuation: bool,
    pub keep_emoji: bool,
    pub collapse_whitespace: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            strip_diacritics: true,
            strip_tatweel: true,
            remove_digits_and_percent: true,
            remove_punctuation: true,
            keep_emoji: true,
            collapse_whitespace: true,
        }
    }
}

const TATWEEL: char = '\u{0640}';

/// Arabic harakat, Quranic annotation marks and the superscript alef.
fn is_arabic_diacritic(c: char) -> bool {
    matches!(c,
        '\u{0610}'..='\u{061A}'
        | '\u{064B}'..='\u{065F}'
        | '\u{0670}'
        | '\u{06D6}'..='\u{06DC}'
        | '\u{06DF}'..='\u{06E8}'
        | '\u{06EA}'..='\u{06ED}')
}

fn is_digit_or_percent(c: char) -> bool {
    c.is_numeric() || matches!(c, '%' | '\u{066A}' | '\u{2030}' | '\u{FF05}' | '\u{FE6A}')
}

fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// Pictographs, dingbats, regional indicators and the joiners and selectors
/// that glue emoji sequences together.
fn is_emoji_part(c: char) -> bool {
    matches!(c,
        '\u{1F000}'..='\u{1FAFF}'
        | '\u{2600}'..='\u{27BF}'
        | '\u{2B00}'..='\u{2BFF}'
        | '\u{200D}'
        | '\u{FE0E}'
        | '\u{FE0F}'
        | '\u{20E3}')
}

pub fn normalize(text: &str) -> String {
    text.nfc().collect()
}

/// Applies the enabled rules after NFC normalization. Removed characters
/// become spaces so that neighbouring words are not glued together.
pub fn preprocess(text: &str, config: &PreprocessConfig) -> String {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.nfc() {
        if (config.strip_diacritics && is_arabic_diacritic(c)) || (config.strip_tatweel && c == TATWEEL) {
            continue;
        }
        let drop = (config.remove_digits_and_percent && is_digit_or_percent(c))
            || (config.remove_punctuation && is_punctuation(c))
            || (!config.keep_emoji && is_emoji_part(c));
        cleaned.push(if drop { ' ' } else { c });
    }
    // Removing marks can leave a base character next to a combinable one.
    let cleaned: String = cleaned.nfc().collect();
    if config.collapse_whitespace {
        cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        cleaned
    }
}

/// Splits on Unicode whitespace after NFC normalization.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text).split_whitespace().map(str::to_owned).collect()
}

pub fn combine_text(original: &str, generated: &str) -> String {
    match (original.is_empty(), generated.is_empty()) {
        (_, true) => original.to_owned(),
        (true, false) => generated.to_owned(),
        (false, false) => format!("{original} {generated}"),
    }
}
