//! Economic data model: parties, transactions, the master agreement and
//! its collateral.
//!
//! Values throughout use the convention "positive = asset to the defaulting
//! party", which is always `party_a` of the agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::{Currency, Money, MoneyError};

pub type Tick = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("transaction {0} has no scripted mark")]
    MissingMark(TransactionId),
    #[error("transaction {0} uses {1}, agreement currency is {2}")]
    WrongCurrency(TransactionId, Currency, Currency),
    #[error("payment record ({0}, tick {1}) does not match any scheduled payment")]
    UnknownPayment(TransactionId, Tick),
    #[error("agreement references unknown transaction {0}")]
    UnknownTransaction(TransactionId),
    #[error("initial margin posted must be non-negative, got {0}")]
    NegativeInitialMargin(Money),
    #[error("party_a and party_b must differ ({0})")]
    SameParties(PartyId),
    #[error(transparent)]
    Money(#[from] MoneyError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub String);

impl PartyId {
    pub fn new(id: impl Into<String>) -> Self {
        PartyId(id.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransactionId(pub String);

impl fmt::Display for TransactionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Dealer,
    EndUser,
    Bidder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub id: PartyId,
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledPayment {
    pub due_time: Tick,
    pub payer: PartyId,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TransactionId,
    pub description: String,
    payment_schedule: Vec<ScheduledPayment>,
    pub scripted_mark: Option<Money>,
}

impl Transaction {
    /// The schedule is stored sorted by due time, then payer id.
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        mut payment_schedule: Vec<ScheduledPayment>,
        scripted_mark: Option<Money>,
    ) -> Self {
        payment_schedule.sort_by(|a, b| (a.due_time, &a.payer).cmp(&(b.due_time, &b.payer)));
        Transaction {
            id: TransactionId(id.into()),
            description: description.into(),
            payment_schedule,
            scripted_mark,
        }
    }

    pub fn payment_schedule(&self) -> &[ScheduledPayment] {
        &self.payment_schedule
    }
}

/// Identifies a scheduled payment as settled: (transaction, due tick).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PaymentRef {
    pub transaction: TransactionId,
    pub due_time: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterAgreement {
    pub party_a: PartyId,
    pub party_b: PartyId,
    pub currency: Currency,
    pub transactions: Vec<TransactionId>,
    /// VM held by B from A; negative means A holds VM from B.
    pub vm_held_by_b: Money,
    /// Segregated IM posted by A.
    pub im_posted_by_a: Money,
}

impl MasterAgreement {
    /// Checks the agreement against the portfolio it governs.
    pub fn validate(&self, portfolio: &[Transaction]) -> Result<(), ModelError> {
        if self.party_a == self.party_b {
            return Err(ModelError::SameParties(self.party_a.clone()));
        }
        for m in [&self.vm_held_by_b, &self.im_posted_by_a] {
            if m.currency() != self.currency {
                return Err(MoneyError::CurrencyMismatch(m.currency(), self.currency).into());
            }
        }
        if self.im_posted_by_a.is_negative() {
            return Err(ModelError::NegativeInitialMargin(self.im_posted_by_a.clone()));
        }
        let by_id: BTreeMap<_, _> = portfolio.iter().map(|t| (&t.id, t)).collect();
        for id in &self.transactions {
            let txn = by_id.get(id).ok_or_else(|| ModelError::UnknownTransaction(id.clone()))?;
            let currencies = txn
                .payment_schedule
                .iter()
                .map(|p| p.amount.currency())
                .chain(txn.scripted_mark.iter().map(Money::currency));
            for c in currencies {
                if c != self.currency {
                    return Err(ModelError::WrongCurrency(id.clone(), c, self.currency));
                }
            }
        }
        Ok(())
    }

    pub fn defaulting_party(&self) -> &PartyId {
        &self.party_a
    }

    pub fn non_defaulting_party(&self) -> &PartyId {
        &self.party_b
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollateralState {
    pub vm_balance: Money,
    pub im_segregated: Money,
}

impl CollateralState {
    pub fn from_agreement(agreement: &MasterAgreement) -> Self {
        CollateralState {
            vm_balance: agreement.vm_held_by_b.clone(),
            im_segregated: agreement.im_posted_by_a.clone(),
        }
    }
}

/// Value of the whole portfolio from the defaulting party's perspective.
pub fn net_scripted_value(
    portfolio: &[Transaction],
    agreement: &MasterAgreement,
) -> Result<Money, ModelError> {
    let mut total = Money::zero(agreement.currency);
    for txn in portfolio {
        let mark = txn.scripted_mark.as_ref().ok_or_else(|| ModelError::MissingMark(txn.id.clone()))?;
        total = total.checked_add(mark)?;
    }
    Ok(total)
}

/// Unpaid amounts due strictly before `as_of`, positive when owed to the
/// non-defaulting party.
pub fn unpaid_amounts(
    portfolio: &[Transaction],
    agreement: &MasterAgreement,
    as_of: Tick,
    payments_made: &BTreeSet<PaymentRef>,
) -> Result<Money, ModelError> {
    let known: BTreeSet<PaymentRef> = portfolio
        .iter()
        .flat_map(|t| {
            t.payment_schedule.iter().map(|p| PaymentRef { transaction: t.id.clone(), due_time: p.due_time })
        })
        .collect();
    if let Some(unknown) = payments_made.iter().find(|r| !known.contains(r)) {
        return Err(ModelError::UnknownPayment(unknown.transaction.clone(), unknown.due_time));
    }

    let mut total = Money::zero(agreement.currency);
    for txn in portfolio {
        for p in &txn.payment_schedule {
            if p.due_time >= as_of {
                continue;
            }
            let key = PaymentRef { transaction: txn.id.clone(), due_time: p.due_time };
            if payments_made.contains(&key) {
                continue;
            }
            total = if p.payer == agreement.party_a {
                total.checked_add(&p.amount)?
            } else {
                total.checked_sub(&p.amount)?
            };
        }
    }
    Ok(total)
}

/// Earliest scheduled payment by the defaulting party that was not made.
pub fn first_missed_payment(
    portfolio: &[Transaction],
    agreement: &MasterAgreement,
    payments_made: &BTreeSet<PaymentRef>,
) -> Option<(Tick, TransactionId)> {
    portfolio
        .iter()
        .flat_map(|t| t.payment_schedule.iter().map(move |p| (t, p)))
        .filter(|(_, p)| p.payer == agreement.party_a)
        .filter(|(t, p)| {
            !payments_made.contains(&PaymentRef { transaction: t.id.clone(), due_time: p.due_time })
        })
        .map(|(t, p)| (p.due_time, t.id.clone()))
        .min()
}
