use indexmap::IndexMap;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{LlmError, Usage};

/// USD prices for one model, quoted per million tokens as vendors publish
/// them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPrice", into = "RawPrice")]
pub struct ModelPrice {
    input_per_million: Decimal,
    output_per_million: Decimal,
}

#[derive(Serialize, Deserialize)]
struct RawPrice {
    input_usd_per_million: Decimal,
    output_usd_per_million: Decimal,
}

impl TryFrom<RawPrice> for ModelPrice {
    type Error = String;

    fn try_from(raw: RawPrice) -> Result<Self, Self::Error> {
        ModelPrice::per_million(raw.input_usd_per_million, raw.output_usd_per_million)
    }
}

impl From<ModelPrice> for RawPrice {
    fn from(p: ModelPrice) -> Self {
        RawPrice {
            input_usd_per_million: p.input_per_million,
            output_usd_per_million: p.output_per_million,
        }
    }
}

impl ModelPrice {
    pub fn per_million(input: Decimal, output: Decimal) -> Result<Self, String> {
        if input.is_sign_negative() || output.is_sign_negative() {
            return Err("prices must be non-negative".into());
        }
        Ok(ModelPrice {
            input_per_million: input,
            output_per_million: output,
        })
    }

    pub fn input_per_token(&self) -> Decimal {
        self.input_per_million / Decimal::from(1_000_000)
    }

    pub fn output_per_token(&self) -> Decimal {
        self.output_per_million / Decimal::from(1_000_000)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PricingTable {
    models: IndexMap<String, ModelPrice>,
}

impl PricingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, model: impl Into<String>, price: ModelPrice) -> Self {
        self.models.insert(model.into(), price);
        self
    }

    pub fn get(&self, model: &str) -> Option<&ModelPrice> {
        self.models.get(model)
    }
}

/// Cost of `usage` in thousandths of a US dollar.
pub fn estimate_cost(usage: Usage, model: &str, pricing: &PricingTable) -> Result<Decimal, LlmError> {
    let price = pricing
        .get(model)
        .ok_or_else(|| LlmError::UnknownModel(model.to_string()))?;
    // tokens * usd_per_million / 1e6 * 1000 milli-dollars
    let milli = (Decimal::from(usage.input_tokens) * price.input_per_million
        + Decimal::from(usage.output_tokens) * price.output_per_million)
        / Decimal::from(1000);
    Ok(milli.normalize())
}
