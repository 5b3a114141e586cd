//! Token accounting.
//!
//! Budgets everywhere in the engine are expressed in tokens. The default
//! counter is an approximation (`ceil(chars / chars_per_token)`) so the engine
//! runs without any tokenizer model; an exact tokenizer can be supplied
//! through [`TokenizerPlugin`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

/// Language of a sample; selects templates, the default counter rate and the
/// answer normalization used by the metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    En,
    Zh,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
        }
    }

    /// Codepoint-majority detection: CJK-dominant text is `Zh`, anything else `En`.
    pub fn detect(text: &str) -> Language {
        let (mut cjk, mut other) = (0usize, 0usize);
        for c in text.chars().filter(|c| !c.is_whitespace()) {
            if is_cjk(c) {
                cjk += 1;
            } else {
                other += 1;
            }
        }
        if cjk > other {
            Language::Zh
        } else {
            Language::En
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "zh" => Ok(Language::Zh),
            other => Err(format!("unknown language `{other}` (expected en or zh)")),
        }
    }
}

pub(crate) fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF     // kana
        | 0x3400..=0x4DBF   // ext A
        | 0x4E00..=0x9FFF   // unified ideographs
        | 0xAC00..=0xD7AF   // hangul
        | 0xF900..=0xFAFF
        | 0x3000..=0x303F   // CJK punctuation
        | 0xFF00..=0xFFEF   // fullwidth forms
        | 0x20000..=0x2FA1F)
}

/// An exact tokenizer supplied by the embedding application.
///
/// `count` must be monotone over prefixes of a string.
pub trait TokenizerPlugin: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Rational chars-per-token rate, kept as a reduced fraction so counting is
/// exact integer arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CharsPerToken {
    chars: u64,
    tokens: u64,
}

impl CharsPerToken {
    pub fn new(chars: u64, tokens: u64) -> Result<Self, KnowledgeError> {
        if chars == 0 || tokens == 0 {
            return Err(KnowledgeError::Config(
                "chars_per_token must be a positive rational".into(),
            ));
        }
        let g = gcd(chars, tokens);
        Ok(Self {
            chars: chars / g,
            tokens: tokens / g,
        })
    }

    /// Converts a decimal rate such as `1.5` to a fraction with denominator ≤ 1000.
    pub fn from_f64(rate: f64) -> Result<Self, KnowledgeError> {
        if !rate.is_finite() || rate <= 0.0 {
            return Err(KnowledgeError::Config(format!(
                "chars_per_token must be positive, got {rate}"
            )));
        }
        let chars = (rate * 1000.0).round() as u64;
        Self::new(chars.max(1), 1000)
    }

    pub fn as_f64(&self) -> f64 {
        self.chars as f64 / self.tokens as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Counting mode as it appears in configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CounterMode {
    Approximate { chars_per_token: f64 },
    ExactPlugin,
}

#[derive(Clone)]
enum Inner {
    Approximate(CharsPerToken),
    Plugin(Arc<dyn TokenizerPlugin>),
}

/// Counts tokens. Cheap to clone and safe to share across workers.
#[derive(Clone)]
pub struct TokenCounter {
    inner: Inner,
}

impl fmt::Debug for TokenCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.inner {
            Inner::Approximate(r) => f
                .debug_struct("TokenCounter")
                .field("chars_per_token", &r.as_f64())
                .finish(),
            Inner::Plugin(_) => f.write_str("TokenCounter(exact-plugin)"),
        }
    }
}

impl Default for TokenCounter {
    fn default() -> Self {
        Self::for_language(Language::En)
    }
}

impl TokenCounter {
    pub fn approximate(rate: CharsPerToken) -> Self {
        Self {
            inner: Inner::Approximate(rate),
        }
    }

    /// 4 chars/token for English, 1.5 chars/token for Chinese.
    pub fn for_language(lang: Language) -> Self {
        let rate = match lang {
            Language::En => CharsPerToken { chars: 4, tokens: 1 },
            Language::Zh => CharsPerToken { chars: 3, tokens: 2 },
        };
        Self::approximate(rate)
    }

    pub fn exact(plugin: Arc<dyn TokenizerPlugin>) -> Self {
        Self {
            inner: Inner::Plugin(plugin),
        }
    }

    /// Builds a counter from configuration. `exact_plugin` mode needs a plugin.
    pub fn from_mode(mode: &CounterMode, plugin: Option<Arc<dyn TokenizerPlugin>>) -> Result<Self, KnowledgeError> {
        match mode {
            CounterMode::Approximate { chars_per_token } => {
                Ok(Self::approximate(CharsPerToken::from_f64(*chars_per_token)?))
            }
            CounterMode::ExactPlugin => plugin.map(Self::exact).ok_or_else(|| {
                KnowledgeError::Config("exact-plugin token counter selected but no plugin configured".into())
            }),
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match &self.inner {
            Inner::Approximate(rate) => {
                let chars = char_len(text) as u64;
                (chars * rate.tokens).div_ceil(rate.chars) as usize
            }
            Inner::Plugin(p) => p.count(text),
        }
    }

    /// Byte length of the longest prefix of `text` whose token count is at
    /// most `budget`. Always lands on a char boundary.
    pub fn prefix_within(&self, text: &str, budget: usize) -> usize {
        match &self.inner {
            Inner::Approximate(rate) => {
                let max_chars = (budget as u64 * rate.chars / rate.tokens) as usize;
                byte_offset_of_char(text, max_chars)
            }
            Inner::Plugin(p) => {
                if p.count(text) <= budget {
                    return text.len();
                }
                let bounds: Vec<usize> = text
                    .char_indices()
                    .map(|(i, _)| i)
                    .chain(std::iter::once(text.len()))
                    .collect();
                // bounds[lo] fits, bounds[hi] does not.
                let (mut lo, mut hi) = (0usize, bounds.len() - 1);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if p.count(&text[..bounds[mid]]) <= budget {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                bounds[lo]
            }
        }
    }
}

/// Free-function form of [`TokenCounter::count`].
pub fn count_tokens(text: &str, counter: &TokenCounter) -> usize {
    counter.count(text)
}

fn char_len(text: &str) -> usize {
    if text.is_ascii() {
        text.len()
    } else {
        text.chars().count()
    }
}

fn byte_offset_of_char(text: &str, chars: usize) -> usize {
    if text.is_ascii() {
        return chars.min(text.len());
    }
    text.char_indices().nth(chars).map_or(text.len(), |(i, _)| i)
}

/// Parses token quantities such as `8k`, `1024k`, `1m` or `5000`.
/// `k` is 1024 tokens and `m` is 1024k.
pub fn parse_token_count(s: &str) -> Result<usize, String> {
    let t = s.trim().to_ascii_lowercase();
    let (digits, mult) = match t.chars().last() {
        Some('k') => (&t[..t.len() - 1], 1024usize),
        Some('m') => (&t[..t.len() - 1], 1024 * 1024),
        _ => (t.as_str(), 1),
    };
    let n: usize = digits
        .trim()
        .parse()
        .map_err(|_| format!("invalid token count `{s}`"))?;
    n.checked_mul(mult)
        .ok_or_else(|| format!("token count `{s}` overflows"))
}

/// Inverse of [`parse_token_count`] for whole multiples of 1024.
pub fn format_token_count(n: usize) -> String {
    if n >= 1024 && n.is_multiple_of(1024) {
        format!("{}k", n / 1024)
    } else {
        n.to_string()
    }
}
