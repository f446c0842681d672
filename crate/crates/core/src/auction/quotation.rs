//! Market Quotation from revealed mid quotes.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::AuctionError;
use crate::model::PartyId;
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quote {
    pub bidder: PartyId,
    pub value: Money,
}

impl Quote {
    pub fn new(bidder: impl Into<String>, value: Money) -> Self {
        Quote { bidder: PartyId::new(bidder), value }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketQuotationResult {
    pub value: Money,
    /// Sorted by bidder id.
    pub quotes_used: Vec<Quote>,
    /// Lowest then highest.
    pub quotes_discarded: Vec<Quote>,
}

/// Discards one lowest and one highest quote and averages the rest.
///
/// With exactly three quotes this is the median. Fewer than three (only
/// reachable when `min_mid_quotes` < 3) averages everything. Among equal
/// values the lowest bidder id is the one discarded at the low end and the
/// highest bidder id at the high end, so the result never depends on input
/// order.
pub fn compute_market_quotation(
    mids: &[Quote],
    min_mid_quotes: usize,
) -> Result<MarketQuotationResult, AuctionError> {
    if mids.len() < min_mid_quotes.max(1) {
        return Err(AuctionError::MarketQuotationUndetermined {
            available: mids.len(),
            required: min_mid_quotes.max(1),
        });
    }
    let currency = mids[0].value.currency();
    for q in mids {
        q.value.checked_cmp(&mids[0].value)?;
    }

    let mut sorted: Vec<&Quote> = mids.iter().collect();
    sorted.sort_by(|a, b| a.value.amount().cmp(b.value.amount()).then_with(|| a.bidder.cmp(&b.bidder)));

    let (used, discarded): (Vec<&Quote>, Vec<&Quote>) = if sorted.len() >= 3 {
        let last = sorted.len() - 1;
        (sorted[1..last].to_vec(), vec![sorted[0], sorted[last]])
    } else {
        (sorted, vec![])
    };

    let total: BigRational = used.iter().map(|q| q.value.amount().clone()).sum();
    let mean = total / BigInt::from(used.len());

    let mut quotes_used: Vec<Quote> = used.into_iter().cloned().collect();
    quotes_used.sort_by(|a, b| a.bidder.cmp(&b.bidder));
    Ok(MarketQuotationResult {
        value: Money::new(mean, currency),
        quotes_used,
        quotes_discarded: discarded.into_iter().cloned().collect(),
    })
}
