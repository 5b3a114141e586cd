//! Token usage and dollar cost.
//!
//! Prices are held as integer nano-dollars per million tokens, so a cost is an
//! exact integer number of femto-dollars (1e-15 $). Sums over traces are
//! therefore exact; rounding to 6 decimals happens only when reporting.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompletionUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl CompletionUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for CompletionUsage {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.input_tokens + o.input_tokens, self.output_tokens + o.output_tokens)
    }
}

impl AddAssign for CompletionUsage {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for CompletionUsage {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// A dollar amount in femto-dollars.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cost(u128);

const FEMTO_PER_MICRO: u128 = 1_000_000_000;

impl Cost {
    pub const ZERO: Cost = Cost(0);

    pub fn from_femto(f: u128) -> Self {
        Cost(f)
    }

    pub fn femto(&self) -> u128 {
        self.0
    }

    /// Dollars rounded half-up to 6 decimals.
    pub fn micro_dollars(&self) -> u128 {
        (self.0 + FEMTO_PER_MICRO / 2) / FEMTO_PER_MICRO
    }

    pub fn dollars(&self) -> f64 {
        self.micro_dollars() as f64 / 1e6
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.micro_dollars();
        write!(f, "{}.{:06}", m / 1_000_000, m % 1_000_000)
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, o: Cost) -> Cost {
        Cost(self.0 + o.0)
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, o: Cost) {
        self.0 += o.0;
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, Add::add)
    }
}

/// Serialized as a decimal string with 6 places, e.g. `"0.019500"`.
impl Serialize for Cost {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Cost {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_decimal(&s, 15).map(Cost).map_err(serde::de::Error::custom)
    }
}

/// Parses a non-negative decimal into an integer scaled by 10^scale.
fn parse_decimal(s: &str, scale: u32) -> Result<u128, String> {
    let s = s.trim();
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(format!("invalid decimal `{s}`"));
    }
    if frac.len() > scale as usize {
        return Err(format!("`{s}` has more than {scale} decimal places"));
    }
    let int: u128 = if int.is_empty() {
        0
    } else {
        int.parse().map_err(|e| format!("{e}"))?
    };
    let mut f: u128 = if frac.is_empty() {
        0
    } else {
        frac.parse().map_err(|e| format!("{e}"))?
    };
    f *= 10u128.pow(scale - frac.len() as u32);
    Ok(int * 10u128.pow(scale) + f)
}

/// Price card in dollars per million tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    input_nano_per_million: u64,
    output_nano_per_million: u64,
}

impl CostModel {
    /// gpt-4o-mini: $0.15 input, $0.60 output per million tokens.
    pub const GPT_4O_MINI: CostModel = CostModel {
        input_nano_per_million: 150_000_000,
        output_nano_per_million: 600_000_000,
    };

    pub const FREE: CostModel = CostModel {
        input_nano_per_million: 0,
        output_nano_per_million: 0,
    };

    /// Prices are rounded to the nearest nano-dollar.
    pub fn new(input_price_per_million: f64, output_price_per_million: f64) -> Result<Self, String> {
        let conv = |p: f64, what: &str| {
            if !p.is_finite() || p < 0.0 {
                Err(format!("{what} price must be a non-negative number, got {p}"))
            } else {
                Ok((p * 1e9).round() as u64)
            }
        };
        Ok(Self {
            input_nano_per_million: conv(input_price_per_million, "input")?,
            output_nano_per_million: conv(output_price_per_million, "output")?,
        })
    }

    pub fn input_price_per_million(&self) -> f64 {
        self.input_nano_per_million as f64 / 1e9
    }

    pub fn output_price_per_million(&self) -> f64 {
        self.output_nano_per_million as f64 / 1e9
    }
}

impl Default for CostModel {
    fn default() -> Self {
        Self::GPT_4O_MINI
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriceCard {
    input_price_per_million: f64,
    output_price_per_million: f64,
}

impl Serialize for CostModel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PriceCard {
            input_price_per_million: self.input_price_per_million(),
            output_price_per_million: self.output_price_per_million(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CostModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let c = PriceCard::deserialize(d)?;
        CostModel::new(c.input_price_per_million, c.output_price_per_million).map_err(serde::de::Error::custom)
    }
}

pub fn estimate_cost(usage: CompletionUsage, model: &CostModel) -> Cost {
    let input = u128::from(usage.input_tokens) * u128::from(model.input_nano_per_million);
    let output = u128::from(usage.output_tokens) * u128::from(model.output_nano_per_million);
    Cost(input + output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_usage_is_free() {
        assert_eq!(
            estimate_cost(CompletionUsage::default(), &CostModel::GPT_4O_MINI),
            Cost::ZERO
        );
    }

    #[test]
    fn mini_card_on_128k_prompt() {
        // 0.128 * 0.15 + 0.0005 * 0.60
        let c = estimate_cost(CompletionUsage::new(128_000, 500), &CostModel::GPT_4O_MINI);
        assert_eq!(c.to_string(), "0.019500");
        assert_eq!(c.femto(), 19_500_000_000_000);
        assert_eq!(CostModel::new(0.15, 0.60).unwrap(), CostModel::GPT_4O_MINI);
    }

    #[test]
    fn cost_serde_roundtrip() {
        let c = estimate_cost(CompletionUsage::new(1234, 56), &CostModel::GPT_4O_MINI);
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(j, "\"0.000219\"");
        let back: Cost = serde_json::from_str(&j).unwrap();
        assert_eq!(back.to_string(), c.to_string());
        let card = serde_json::to_string(&CostModel::GPT_4O_MINI).unwrap();
        assert_eq!(
            serde_json::from_str::<CostModel>(&card).unwrap(),
            CostModel::GPT_4O_MINI
        );
    }

    #[test]
    fn negative_price_rejected() {
        assert!(CostModel::new(-1.0, 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn cost_is_additive(us in proptest::collection::vec((0u64..10_000_000, 0u64..100_000), 0..20)) {
            let m = CostModel::GPT_4O_MINI;
            let usages: Vec<_> = us.iter().map(|&(i, o)| CompletionUsage::new(i, o)).collect();
            let each: Cost = usages.iter().map(|&u| estimate_cost(u, &m)).sum();
            let total = estimate_cost(usages.iter().copied().sum(), &m);
            proptest::prop_assert_eq!(each, total);
        }
    }
}
