//! Early-termination lifecycle of a master agreement.
//!
//! A single transition function drives every state change, and each accepted
//! transition appends one entry to the event log. Replaying the log through
//! the same function reproduces the state.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MasterAgreement, PartyId, Tick};
use crate::money::{Money, MoneyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultCause {
    FailureToPayOrDeliver,
    BreachOfAgreement,
    CreditSupportDefault,
    Misrepresentation,
    DefaultUnderSpecifiedTransaction,
    CrossDefault,
    Bankruptcy,
    MergerWithoutAssumption,
}

impl DefaultCause {
    pub const ALL: [DefaultCause; 8] = [
        DefaultCause::FailureToPayOrDeliver,
        DefaultCause::BreachOfAgreement,
        DefaultCause::CreditSupportDefault,
        DefaultCause::Misrepresentation,
        DefaultCause::DefaultUnderSpecifiedTransaction,
        DefaultCause::CrossDefault,
        DefaultCause::Bankruptcy,
        DefaultCause::MergerWithoutAssumption,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventOfDefault {
    pub cause: DefaultCause,
    pub defaulting_party: PartyId,
    pub occurred_at: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleState {
    Active,
    DefaultDeclared,
    EarlyTerminationDesignated,
    ObligationsCeased,
    AuctionInProgress,
    AmountsCalculated,
    StatementDelivered,
    Settled,
}

impl LifecycleState {
    pub const ALL: [LifecycleState; 8] = [
        LifecycleState::Active,
        LifecycleState::DefaultDeclared,
        LifecycleState::EarlyTerminationDesignated,
        LifecycleState::ObligationsCeased,
        LifecycleState::AuctionInProgress,
        LifecycleState::AmountsCalculated,
        LifecycleState::StatementDelivered,
        LifecycleState::Settled,
    ];
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The replacement trade chosen by the auction, as referenced by a statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeLeg {
    pub winner: PartyId,
    pub execution_price: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminationStatement {
    pub early_termination_date: Tick,
    pub unpaid: Money,
    pub market_quotation: Money,
    /// Positive = payable by the non-defaulting party to the defaulting party.
    pub termination_amount: Money,
    pub payer: Option<PartyId>,
    pub trade_leg: Option<TradeLeg>,
}

impl TerminationStatement {
    pub fn build(
        early_termination_date: Tick,
        unpaid: Money,
        market_quotation: Money,
        agreement: &MasterAgreement,
        trade_leg: Option<TradeLeg>,
    ) -> Result<Self, MoneyError> {
        if unpaid.currency() != agreement.currency {
            return Err(MoneyError::CurrencyMismatch(unpaid.currency(), agreement.currency));
        }
        let termination_amount = market_quotation.checked_sub(&unpaid)?;
        if let Some(leg) = &trade_leg {
            termination_amount.checked_cmp(&leg.execution_price)?;
        }
        let payer = if termination_amount.is_positive() {
            Some(agreement.party_b.clone())
        } else if termination_amount.is_negative() {
            Some(agreement.party_a.clone())
        } else {
            None
        };
        Ok(TerminationStatement {
            early_termination_date,
            unpaid,
            market_quotation,
            termination_amount,
            payer,
            trade_leg,
        })
    }

    /// Checks the amount identity and the payer rule.
    pub fn check_invariants(&self, agreement: &MasterAgreement) -> bool {
        let Ok(expected) = self.market_quotation.checked_sub(&self.unpaid) else {
            return false;
        };
        let payer_ok = match &self.payer {
            Some(p) if *p == agreement.party_b => self.termination_amount.is_positive(),
            Some(p) if *p == agreement.party_a => self.termination_amount.is_negative(),
            Some(_) => false,
            None => self.termination_amount.is_zero(),
        };
        expected == self.termination_amount && payer_ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Transition {
    DeclareDefault { event: EventOfDefault },
    DesignateEarlyTermination { date: Tick },
    CeaseObligations,
    StartAuction,
    CalculateAmounts,
    DeliverStatement { statement: TerminationStatement },
    Settle,
}

impl Transition {
    pub fn name(&self) -> &'static str {
        match self {
            Transition::DeclareDefault { .. } => "declare_default",
            Transition::DesignateEarlyTermination { .. } => "designate_early_termination",
            Transition::CeaseObligations => "cease_obligations",
            Transition::StartAuction => "start_auction",
            Transition::CalculateAmounts => "calculate_amounts",
            Transition::DeliverStatement { .. } => "deliver_statement",
            Transition::Settle => "settle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub at: Tick,
    pub from: LifecycleState,
    pub to: LifecycleState,
    pub transition: Transition,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LifecycleError {
    #[error("invalid transition {transition} from state {from}")]
    InvalidTransition { from: LifecycleState, transition: &'static str },
    #[error("early termination date {date} precedes default at tick {default_at}")]
    DateBeforeDefault { date: Tick, default_at: Tick },
    #[error("tick {at} precedes last recorded tick {last}")]
    TickRegression { at: Tick, last: Tick },
    #[error("statement has a different early termination date ({got}, expected {expected})")]
    StatementDateMismatch { got: Tick, expected: Tick },
}

/// State machine for one master agreement. Single writer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lifecycle {
    state: LifecycleState,
    log: Vec<LogEntry>,
    auction_skippable: bool,
    default_event: Option<EventOfDefault>,
    early_termination_date: Option<Tick>,
    statement: Option<TerminationStatement>,
}

impl Lifecycle {
    /// `bidder_count` of zero allows amounts to be calculated without an auction.
    pub fn new(bidder_count: usize) -> Self {
        Lifecycle {
            state: LifecycleState::Active,
            log: Vec::new(),
            auction_skippable: bidder_count == 0,
            default_event: None,
            early_termination_date: None,
            statement: None,
        }
    }

    pub fn replay(bidder_count: usize, log: &[LogEntry]) -> Result<Self, LifecycleError> {
        let mut lc = Lifecycle::new(bidder_count);
        for entry in log {
            lc.apply(entry.at, entry.transition.clone())?;
        }
        Ok(lc)
    }

    pub fn state(&self) -> LifecycleState {
        self.state
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn default_event(&self) -> Option<&EventOfDefault> {
        self.default_event.as_ref()
    }

    pub fn early_termination_date(&self) -> Option<Tick> {
        self.early_termination_date
    }

    pub fn statement(&self) -> Option<&TerminationStatement> {
        self.statement.as_ref()
    }

    fn target(&self, transition: &Transition) -> Option<LifecycleState> {
        use LifecycleState::*;
        match (self.state, transition) {
            (Active, Transition::DeclareDefault { .. }) => Some(DefaultDeclared),
            (DefaultDeclared, Transition::DesignateEarlyTermination { .. }) => {
                Some(EarlyTerminationDesignated)
            }
            (EarlyTerminationDesignated, Transition::CeaseObligations) => Some(ObligationsCeased),
            (ObligationsCeased, Transition::StartAuction) => Some(AuctionInProgress),
            (ObligationsCeased, Transition::CalculateAmounts) if self.auction_skippable => {
                Some(AmountsCalculated)
            }
            (AuctionInProgress, Transition::CalculateAmounts) => Some(AmountsCalculated),
            (AmountsCalculated, Transition::DeliverStatement { .. }) => Some(StatementDelivered),
            (StatementDelivered, Transition::Settle) => Some(Settled),
            _ => None,
        }
    }

    /// Applies one transition at tick `at`. On error nothing changes.
    pub fn apply(&mut self, at: Tick, transition: Transition) -> Result<LifecycleState, LifecycleError> {
        let to = self
            .target(&transition)
            .ok_or(LifecycleError::InvalidTransition { from: self.state, transition: transition.name() })?;
        if let Some(last) = self.log.last() {
            if at < last.at {
                return Err(LifecycleError::TickRegression { at, last: last.at });
            }
        }
        match &transition {
            Transition::DeclareDefault { event } => {
                self.default_event = Some(event.clone());
            }
            Transition::DesignateEarlyTermination { date } => {
                let default_at = self.default_event.as_ref().map_or(0, |e| e.occurred_at);
                if *date < default_at {
                    return Err(LifecycleError::DateBeforeDefault { date: *date, default_at });
                }
                self.early_termination_date = Some(*date);
            }
            Transition::DeliverStatement { statement } => {
                let expected = self.early_termination_date.unwrap_or_default();
                if statement.early_termination_date != expected {
                    return Err(LifecycleError::StatementDateMismatch {
                        got: statement.early_termination_date,
                        expected,
                    });
                }
                self.statement = Some(statement.clone());
            }
            _ => {}
        }
        self.log.push(LogEntry { seq: self.log.len() as u64, at, from: self.state, to, transition });
        self.state = to;
        Ok(to)
    }

    pub fn declare_default(&mut self, event: EventOfDefault) -> Result<LifecycleState, LifecycleError> {
        let at = event.occurred_at;
        self.apply(at, Transition::DeclareDefault { event })
    }

    pub fn designate_early_termination(&mut self, date: Tick) -> Result<LifecycleState, LifecycleError> {
        self.apply(date, Transition::DesignateEarlyTermination { date })
    }

    pub fn cease_obligations(&mut self, at: Tick) -> Result<LifecycleState, LifecycleError> {
        self.apply(at, Transition::CeaseObligations)
    }

    pub fn start_auction(&mut self, at: Tick) -> Result<LifecycleState, LifecycleError> {
        self.apply(at, Transition::StartAuction)
    }

    pub fn calculate_amounts(&mut self, at: Tick) -> Result<LifecycleState, LifecycleError> {
        self.apply(at, Transition::CalculateAmounts)
    }

    pub fn deliver_statement(
        &mut self,
        at: Tick,
        statement: TerminationStatement,
    ) -> Result<LifecycleState, LifecycleError> {
        self.apply(at, Transition::DeliverStatement { statement })
    }

    pub fn mark_settled(&mut self, at: Tick) -> Result<LifecycleState, LifecycleError> {
        self.apply(at, Transition::Settle)
    }
}
