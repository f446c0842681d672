//! Second-price winner selection and the trade-cost stopping rule.

use serde::{Deserialize, Serialize};

use super::quotation::Quote;
use super::AuctionError;
use crate::model::PartyId;
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub winner: PartyId,
    pub execution_price: Money,
}

/// Highest trade bid wins and pays the best of the other bids.
///
/// Ties on the maximum go to the lowest bidder id; the price then equals the
/// tied maximum. A lone bid pays itself. `None` when there are no trade bids.
pub fn select_winner(trade_bids: &[Quote]) -> Result<Option<Selection>, AuctionError> {
    let Some(first) = trade_bids.first() else {
        return Ok(None);
    };
    for b in trade_bids {
        b.value.checked_cmp(&first.value)?;
    }
    let winner = trade_bids
        .iter()
        .max_by(|a, b| a.value.amount().cmp(b.value.amount()).then_with(|| b.bidder.cmp(&a.bidder)))
        .expect("nonempty");
    let runner_up = trade_bids
        .iter()
        .filter(|b| !std::ptr::eq(*b, winner))
        .map(|b| &b.value)
        .max_by(|a, b| a.amount().cmp(b.amount()));
    Ok(Some(Selection {
        winner: winner.bidder.clone(),
        execution_price: runner_up.unwrap_or(&winner.value).clone(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Trade,
    CancelCostExceedsIm,
    NoTradeBids,
}

/// What the non-defaulting party does when the trade cost exceeds IM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcessCostPolicy {
    #[default]
    Cancel,
    /// Waive the right to cancel; the excess is borne by the non-defaulting party.
    Trade,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingDecision {
    pub trade_cost: Money,
    pub decision: Decision,
    pub residual: Option<Money>,
    pub override_applied: bool,
}

pub fn apply_stopping_rule(
    mq: &Money,
    execution_price: &Money,
    im: &Money,
    policy: ExcessCostPolicy,
) -> Result<StoppingDecision, AuctionError> {
    if im.is_negative() {
        return Err(AuctionError::NegativeInitialMargin(im.clone()));
    }
    let trade_cost = mq.checked_sub(execution_price)?.abs();
    let headroom = im.checked_sub(&trade_cost)?;
    Ok(if !headroom.is_negative() {
        StoppingDecision {
            trade_cost,
            decision: Decision::Trade,
            residual: Some(headroom),
            override_applied: false,
        }
    } else {
        match policy {
            ExcessCostPolicy::Cancel => StoppingDecision {
                trade_cost,
                decision: Decision::CancelCostExceedsIm,
                residual: None,
                override_applied: false,
            },
            ExcessCostPolicy::Trade => StoppingDecision {
                trade_cost,
                decision: Decision::Trade,
                residual: Some(Money::zero(im.currency())),
                override_applied: true,
            },
        }
    })
}
