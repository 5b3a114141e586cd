//! Token-level F1 between a prediction and gold answers.

use std::collections::HashMap;

use crate::knowledge::{is_cjk, Language};

/// ASCII, general Unicode and CJK/fullwidth punctuation.
pub fn is_punct(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    matches!(c as u32,
        0x2000..=0x206F     // general punctuation
        | 0x3000..=0x303F   // CJK symbols and punctuation
        | 0xFE30..=0xFE4F   // CJK compatibility forms
        | 0xFF01..=0xFF0F
        | 0xFF1A..=0xFF20
        | 0xFF3B..=0xFF40
        | 0xFF5B..=0xFF65
        | 0x00A1..=0x00BF)
        && !c.is_alphanumeric()
}

/// Normalized answer tokens.
///
/// English: lowercase, punctuation removed, articles dropped, whitespace
/// split. Chinese: punctuation and whitespace removed, one token per
/// character.
pub fn normalize_answer(text: &str, language: Language) -> Vec<String> {
    let lowered = text.to_lowercase();
    let stripped: String = lowered.chars().map(|c| if is_punct(c) { ' ' } else { c }).collect();
    match language {
        Language::En => stripped
            .split_whitespace()
            .filter(|w| !matches!(*w, "a" | "an" | "the"))
            .map(str::to_string)
            .collect(),
        Language::Zh => {
            let mut out = Vec::new();
            for word in stripped.split_whitespace() {
                // runs of non-CJK characters stay whole, CJK splits per char
                let mut run = String::new();
                for c in word.chars() {
                    if is_cjk(c) {
                        if !run.is_empty() {
                            out.push(std::mem::take(&mut run));
                        }
                        out.push(c.to_string());
                    } else {
                        run.push(c);
                    }
                }
                if !run.is_empty() {
                    out.push(run);
                }
            }
            out
        }
    }
}

/// F1 over token multisets. Both empty scores 1, exactly one empty scores 0.
pub fn token_f1(prediction: &str, gold: &str, language: Language) -> f64 {
    let p = normalize_answer(prediction, language);
    let g = normalize_answer(gold, language);
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best F1 against any gold answer; 0 when there are none.
pub fn best_f1(prediction: &str, golds: &[String], language: Language) -> f64 {
    golds
        .iter()
        .map(|g| token_f1(prediction, g, language))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_empty() {
        assert_eq!(token_f1("14 million km", "14 million km", Language::En), 1.0);
        assert_eq!(token_f1("", "anything", Language::En), 0.0);
        assert_eq!(token_f1("", "", Language::En), 1.0);
        assert_eq!(token_f1("the", "a", Language::En), 1.0);
        assert_eq!(token_f1("cat", "dog", Language::En), 0.0);
    }

    #[test]
    fn article_and_case_stripping() {
        let f = token_f1(
            "the Island of Brayan Annabel",
            "On the island of Brayan Annabel",
            Language::En,
        );
        let (p, r) = (4.0 / 4.0, 4.0 / 5.0);
        assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert!((f - 0.888_889).abs() < 1e-6);
    }

    #[test]
    fn chinese_is_per_character() {
        assert_eq!(normalize_answer("贾易，好！", Language::Zh), ["贾", "易", "好"]);
        let f = token_f1("贾易", "贾易好", Language::Zh);
        assert!((f - 0.8).abs() < 1e-12);
        assert_eq!(normalize_answer("GPT-4o 模型", Language::Zh), ["gpt", "4o", "模", "型"]);
    }

    #[test]
    fn best_over_golds() {
        let golds = vec!["Paris".to_string(), "Paris, France".to_string()];
        assert_eq!(best_f1("paris", &golds, Language::En), 1.0);
        assert_eq!(best_f1("x", &[], Language::En), 0.0);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in "[a-d ]{0,12}", b in "[a-d ]{0,12}") {
            let x = token_f1(&a, &b, Language::En);
            let y = token_f1(&b, &a, Language::En);
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x));
            let mut na = normalize_answer(&a, Language::En);
            let mut nb = normalize_answer(&b, Language::En);
            na.sort();
            nb.sort();
            prop_assert_eq!(x == 1.0, na == nb);
        }
    }
}
