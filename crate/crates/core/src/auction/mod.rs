//! Sealed-bid close-out auction.
//!
//! Bidders commit to a hash of their bid, then reveal it. Revealed mids feed
//! the Market Quotation; revealed trade quotes go through a second-price
//! selection, and the resulting trade cost is checked against the initial
//! margin before the replacement trade is accepted.

mod commitment;
mod quotation;
mod selection;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use commitment::{Bid, BidCommitment, Digest, Salt};
pub use quotation::{compute_market_quotation, MarketQuotationResult, Quote};
pub use selection::{
    apply_stopping_rule, select_winner, Decision, ExcessCostPolicy, Selection, StoppingDecision,
};

use crate::lifecycle::TradeLeg;
use crate::model::{MasterAgreement, PartyId, Tick, Transaction};
use crate::money::{Money, MoneyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuctionError {
    #[error("commit deadline {commit} must precede reveal deadline {reveal}")]
    DeadlinesOutOfOrder { commit: Tick, reveal: Tick },
    #[error("min_mid_quotes must be at least 1")]
    ZeroMinQuotes,
    #[error("initial margin must be non-negative, got {0}")]
    NegativeInitialMargin(Money),
    #[error("no bidders invited")]
    EmptyInvitation,
    #[error("bidder {0} invited more than once")]
    DuplicateInvitee(PartyId),
    #[error("commit deadline {deadline} is not after the opening tick {opened_at}")]
    OpenedTooLate { opened_at: Tick, deadline: Tick },
    #[error("market quotation undetermined: {available} mid quotes, {required} required")]
    MarketQuotationUndetermined { available: usize, required: usize },
    #[error("auction cannot close at tick {now}; reveals accepted until {reveal_deadline}")]
    StillOpen { now: Tick, reveal_deadline: Tick },
    #[error("auction already closed")]
    AlreadyClosed,
    #[error(transparent)]
    Money(#[from] MoneyError),
}

/// Why a commit or reveal was refused. Each case has a stable code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    #[error("auction is not accepting commitments yet")]
    NotOpen,
    #[error("commit deadline passed")]
    LateCommit,
    #[error("bidder was not invited")]
    NotInvited,
    #[error("bidder already committed")]
    DuplicateCommit,
    #[error("reveal phase has not started")]
    EarlyReveal,
    #[error("reveal deadline passed")]
    LateReveal,
    #[error("no commitment on record")]
    NoCommitment,
    #[error("revealed bid does not match commitment")]
    DigestMismatch,
    #[error("bidder already revealed")]
    DuplicateReveal,
    #[error("bidder excluded after a failed reveal")]
    Excluded,
    #[error("bid currency differs from the agreement")]
    WrongCurrency,
    #[error("auction closed")]
    Closed,
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::NotOpen => "not_open",
            Rejection::LateCommit => "late_commit",
            Rejection::NotInvited => "not_invited",
            Rejection::DuplicateCommit => "duplicate_commit",
            Rejection::EarlyReveal => "early_reveal",
            Rejection::LateReveal => "late_reveal",
            Rejection::NoCommitment => "no_commitment",
            Rejection::DigestMismatch => "digest_mismatch",
            Rejection::DuplicateReveal => "duplicate_reveal",
            Rejection::Excluded => "excluded",
            Rejection::WrongCurrency => "wrong_currency",
            Rejection::Closed => "closed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionConfig {
    pub commit_deadline: Tick,
    pub reveal_deadline: Tick,
    pub min_mid_quotes: usize,
    pub im_reference: Money,
    pub invited_bidders: Vec<PartyId>,
    #[serde(default)]
    pub excess_cost_policy: ExcessCostPolicy,
}

impl AuctionConfig {
    pub const DEFAULT_MIN_MID_QUOTES: usize = 3;

    pub fn validate(&self) -> Result<(), AuctionError> {
        if self.commit_deadline >= self.reveal_deadline {
            return Err(AuctionError::DeadlinesOutOfOrder {
                commit: self.commit_deadline,
                reveal: self.reveal_deadline,
            });
        }
        if self.min_mid_quotes == 0 {
            return Err(AuctionError::ZeroMinQuotes);
        }
        if self.im_reference.is_negative() {
            return Err(AuctionError::NegativeInitialMargin(self.im_reference.clone()));
        }
        if self.invited_bidders.is_empty() {
            return Err(AuctionError::EmptyInvitation);
        }
        let mut seen = BTreeSet::new();
        for b in &self.invited_bidders {
            if !seen.insert(b) {
                return Err(AuctionError::DuplicateInvitee(b.clone()));
            }
        }
        Ok(())
    }
}

/// The frozen portfolio handed to every invited bidder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortfolioSnapshot {
    pub agreement: MasterAgreement,
    pub transactions: Vec<Transaction>,
}

impl PortfolioSnapshot {
    pub fn digest(&self) -> Digest {
        let bytes = serde_json::to_vec(self).expect("snapshot serializes");
        Digest(Sha256::digest(bytes).into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub mq: Money,
    pub im_reference: Money,
    pub winner: Option<PartyId>,
    pub execution_price: Option<Money>,
    pub trade_cost: Option<Money>,
    pub decision: Decision,
    pub residual: Option<Money>,
    /// The non-defaulting party waived its right to cancel.
    #[serde(default)]
    pub override_applied: bool,
}

impl AuctionOutcome {
    pub fn resolve(
        mq: &Money,
        trade_bids: &[Quote],
        im: &Money,
        policy: ExcessCostPolicy,
    ) -> Result<Self, AuctionError> {
        if im.is_negative() {
            return Err(AuctionError::NegativeInitialMargin(im.clone()));
        }
        let Some(sel) = select_winner(trade_bids)? else {
            return Ok(AuctionOutcome {
                mq: mq.clone(),
                im_reference: im.clone(),
                winner: None,
                execution_price: None,
                trade_cost: None,
                decision: Decision::NoTradeBids,
                residual: None,
                override_applied: false,
            });
        };
        let stop = apply_stopping_rule(mq, &sel.execution_price, im, policy)?;
        Ok(AuctionOutcome {
            mq: mq.clone(),
            im_reference: im.clone(),
            winner: Some(sel.winner),
            execution_price: Some(sel.execution_price),
            trade_cost: Some(stop.trade_cost),
            decision: stop.decision,
            residual: stop.residual,
            override_applied: stop.override_applied,
        })
    }

    pub fn trade_leg(&self) -> Option<TradeLeg> {
        match (self.decision, &self.winner, &self.execution_price) {
            (Decision::Trade, Some(w), Some(p)) => {
                Some(TradeLeg { winner: w.clone(), execution_price: p.clone() })
            }
            _ => None,
        }
    }

    /// Returns the first violated outcome invariant, if any.
    pub fn invariant_violation(&self) -> Option<&'static str> {
        if let Some(price) = &self.execution_price {
            let Ok(diff) = self.mq.checked_sub(price) else {
                return Some("currency mismatch");
            };
            if self.trade_cost.as_ref() != Some(&diff.abs()) {
                return Some("trade_cost != |mq - execution_price|");
            }
        }
        if self.trade_cost.as_ref().is_some_and(Money::is_negative) {
            return Some("negative trade cost");
        }
        if self.residual.as_ref().is_some_and(Money::is_negative) {
            return Some("negative residual");
        }
        match self.decision {
            Decision::Trade => {
                let (Some(cost), Some(residual)) = (&self.trade_cost, &self.residual) else {
                    return Some("trade without cost or residual");
                };
                if self.winner.is_none() {
                    return Some("trade without winner");
                }
                if self.override_applied {
                    if cost.amount() <= self.im_reference.amount() || !residual.is_zero() {
                        return Some("override applied without excess cost");
                    }
                } else if self.im_reference.checked_sub(cost).ok().as_ref() != Some(residual) {
                    return Some("residual != im - trade_cost");
                }
            }
            Decision::CancelCostExceedsIm => {
                let Some(cost) = &self.trade_cost else {
                    return Some("cancel without trade cost");
                };
                if cost.amount() <= self.im_reference.amount() {
                    return Some("cancel with cost within IM");
                }
                if self.residual.is_some() {
                    return Some("cancel with residual");
                }
            }
            Decision::NoTradeBids => {
                if self.winner.is_some()
                    || self.execution_price.is_some()
                    || self.trade_cost.is_some()
                    || self.residual.is_some()
                {
                    return Some("no-trade outcome carries trade fields");
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Commit,
    Reveal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub tick: Tick,
    pub bidder: PartyId,
    pub action: Action,
    pub digest: Digest,
    /// `None` when accepted, otherwise the rejection code.
    pub rejection: Option<Rejection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Commit,
    Reveal,
    AwaitingClose,
    Closed,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Result of closing an auction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub market_quotation: MarketQuotationResult,
    pub outcome: AuctionOutcome,
}

/// A running auction. Single writer; callers sequence concurrent
/// submissions by (tick, bidder id) before applying them.
#[derive(Debug, Clone)]
pub struct Auction {
    config: AuctionConfig,
    opened_at: Tick,
    snapshot: PortfolioSnapshot,
    commitments: BTreeMap<PartyId, BidCommitment>,
    reveals: BTreeMap<PartyId, Bid>,
    excluded: BTreeSet<PartyId>,
    transcript: Vec<TranscriptEntry>,
    closed: bool,
}

impl Auction {
    pub fn open(config: AuctionConfig, snapshot: PortfolioSnapshot, now: Tick) -> Result<Self, AuctionError> {
        config.validate()?;
        if config.im_reference.currency() != snapshot.agreement.currency {
            return Err(MoneyError::CurrencyMismatch(
                config.im_reference.currency(),
                snapshot.agreement.currency,
            )
            .into());
        }
        if config.commit_deadline < now {
            return Err(AuctionError::OpenedTooLate { opened_at: now, deadline: config.commit_deadline });
        }
        Ok(Auction {
            config,
            opened_at: now,
            snapshot,
            commitments: BTreeMap::new(),
            reveals: BTreeMap::new(),
            excluded: BTreeSet::new(),
            transcript: Vec::new(),
            closed: false,
        })
    }

    pub fn config(&self) -> &AuctionConfig {
        &self.config
    }

    pub fn opened_at(&self) -> Tick {
        self.opened_at
    }

    pub fn snapshot(&self) -> &PortfolioSnapshot {
        &self.snapshot
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn excluded(&self) -> &BTreeSet<PartyId> {
        &self.excluded
    }

    pub fn revealed(&self) -> impl Iterator<Item = &Bid> {
        self.reveals.values()
    }

    pub fn phase(&self, now: Tick) -> Phase {
        if self.closed {
            Phase::Closed
        } else if now <= self.config.commit_deadline {
            Phase::Commit
        } else if now <= self.config.reveal_deadline {
            Phase::Reveal
        } else {
            Phase::AwaitingClose
        }
    }

    fn record(
        &mut self,
        tick: Tick,
        bidder: &PartyId,
        action: Action,
        digest: Digest,
        result: Result<(), Rejection>,
    ) -> Result<(), Rejection> {
        self.transcript.push(TranscriptEntry {
            tick,
            bidder: bidder.clone(),
            action,
            digest,
            rejection: result.err(),
        });
        result
    }

    fn check_commit(&self, commitment: &BidCommitment, now: Tick) -> Result<(), Rejection> {
        if self.closed {
            return Err(Rejection::Closed);
        }
        if now < self.opened_at {
            return Err(Rejection::NotOpen);
        }
        if now > self.config.commit_deadline {
            return Err(Rejection::LateCommit);
        }
        if !self.config.invited_bidders.contains(&commitment.bidder) {
            return Err(Rejection::NotInvited);
        }
        if self.commitments.contains_key(&commitment.bidder) {
            return Err(Rejection::DuplicateCommit);
        }
        Ok(())
    }

    pub fn commit_bid(&mut self, commitment: BidCommitment, now: Tick) -> Result<(), Rejection> {
        let result = self.check_commit(&commitment, now);
        let (bidder, digest) = (commitment.bidder.clone(), commitment.digest);
        if result.is_ok() {
            self.commitments.insert(bidder.clone(), commitment);
        }
        self.record(now, &bidder, Action::Commit, digest, result)
    }

    fn check_reveal(&self, bid: &Bid, now: Tick) -> Result<(), Rejection> {
        if self.closed {
            return Err(Rejection::Closed);
        }
        if now <= self.config.commit_deadline {
            return Err(Rejection::EarlyReveal);
        }
        if now > self.config.reveal_deadline {
            return Err(Rejection::LateReveal);
        }
        if self.excluded.contains(&bid.bidder) {
            return Err(Rejection::Excluded);
        }
        let commitment = self.commitments.get(&bid.bidder).ok_or(Rejection::NoCommitment)?;
        if self.reveals.contains_key(&bid.bidder) {
            return Err(Rejection::DuplicateReveal);
        }
        if !bid.opens(commitment) {
            return Err(Rejection::DigestMismatch);
        }
        let currency = self.snapshot.agreement.currency;
        if bid.mid.currency() != currency || bid.trade.as_ref().is_some_and(|t| t.currency() != currency) {
            return Err(Rejection::WrongCurrency);
        }
        Ok(())
    }

    pub fn reveal_bid(&mut self, bid: Bid, now: Tick) -> Result<(), Rejection> {
        let result = self.check_reveal(&bid, now);
        match result {
            Ok(()) => {
                self.reveals.insert(bid.bidder.clone(), bid.clone());
            }
            Err(Rejection::DigestMismatch | Rejection::WrongCurrency) => {
                self.excluded.insert(bid.bidder.clone());
            }
            Err(_) => {}
        }
        self.record(now, &bid.bidder, Action::Reveal, bid.digest(), result)
    }

    /// Aggregates mids, selects the trade and applies the stopping rule.
    pub fn close(&mut self, now: Tick) -> Result<Resolution, AuctionError> {
        if self.closed {
            return Err(AuctionError::AlreadyClosed);
        }
        if now <= self.config.reveal_deadline {
            return Err(AuctionError::StillOpen { now, reveal_deadline: self.config.reveal_deadline });
        }
        self.closed = true;
        let mids: Vec<Quote> =
            self.reveals.values().map(|b| Quote { bidder: b.bidder.clone(), value: b.mid.clone() }).collect();
        let trades: Vec<Quote> = self
            .reveals
            .values()
            .filter_map(|b| b.trade.as_ref().map(|t| Quote { bidder: b.bidder.clone(), value: t.clone() }))
            .collect();
        let market_quotation = compute_market_quotation(&mids, self.config.min_mid_quotes)?;
        let outcome = AuctionOutcome::resolve(
            &market_quotation.value,
            &trades,
            &self.config.im_reference,
            self.config.excess_cost_policy,
        )?;
        Ok(Resolution { market_quotation, outcome })
    }
}
