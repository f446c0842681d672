//! Settlement of a terminated agreement as atomic ledger transfers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::auction::{AuctionOutcome, Decision};
use crate::lifecycle::{LifecycleState, TerminationStatement};
use crate::model::{MasterAgreement, PartyId};
use crate::money::{Currency, Money, MoneyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SettlementError {
    #[error("settlement requires state StatementDelivered, lifecycle is {0}")]
    NotReady(LifecycleState),
    #[error("statement already settled")]
    AlreadySettled,
    #[error("segregated IM balance {balance} does not match IM reference {reference}")]
    ImIntegrity { balance: Box<Money>, reference: Box<Money> },
    #[error("outcome has decision trade but no winner or price")]
    IncompleteOutcome,
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("invalid entry: {0}")]
    InvalidEntry(String),
    #[error(transparent)]
    Money(#[from] MoneyError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccountId {
    Cash(PartyId),
    SegregatedIm,
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccountId::Cash(p) => write!(f, "cash:{p}"),
            AccountId::SegregatedIm => f.write_str("im:segregated"),
        }
    }
}

impl FromStr for AccountId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("cash", id)) if !id.is_empty() => Ok(AccountId::Cash(PartyId::new(id))),
            Some(("im", "segregated")) => Ok(AccountId::SegregatedIm),
            _ => Err(format!("bad account id {s:?}")),
        }
    }
}

impl Serialize for AccountId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AccountId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    TerminationAmount,
    TradeNovationPayment,
    ImCostToNonDefaulter,
    ImResidualToDefaulter,
    ImFullToNonDefaulter,
    VmReturn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub from: AccountId,
    pub to: AccountId,
    pub amount: Money,
    pub purpose: Purpose,
}

/// When the IM residual goes back to the defaulting party after a trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualPolicy {
    #[default]
    AlwaysRevert,
    /// Only when the termination amount is payable to the defaulting party.
    RevertIfPayableToDefaulter,
}

/// Cash accounts per party plus the agreement's segregated IM account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSet {
    currency: Currency,
    balances: BTreeMap<AccountId, Money>,
}

impl AccountSet {
    /// Zero cash for every party; the IM account holds what A posted.
    pub fn opening<'a>(
        agreement: &'a MasterAgreement,
        parties: impl IntoIterator<Item = &'a PartyId>,
    ) -> Self {
        let mut balances: BTreeMap<AccountId, Money> = parties
            .into_iter()
            .chain([&agreement.party_a, &agreement.party_b])
            .map(|p| (AccountId::Cash(p.clone()), Money::zero(agreement.currency)))
            .collect();
        balances.insert(AccountId::SegregatedIm, agreement.im_posted_by_a.clone());
        AccountSet { currency: agreement.currency, balances }
    }

    pub fn balance(&self, account: &AccountId) -> Option<&Money> {
        self.balances.get(account)
    }

    pub fn balances(&self) -> &BTreeMap<AccountId, Money> {
        &self.balances
    }

    pub fn total(&self) -> Result<Money, MoneyError> {
        Money::sum(self.balances.values(), self.currency)
    }

    /// Applies every entry or none.
    pub fn apply(&self, entries: &[LedgerEntry]) -> Result<AccountSet, SettlementError> {
        let mut next = self.clone();
        for e in entries {
            if !e.amount.is_positive() {
                return Err(SettlementError::InvalidEntry(format!(
                    "non-positive amount {} for {:?}",
                    e.amount, e.purpose
                )));
            }
            if e.from == e.to {
                return Err(SettlementError::InvalidEntry(format!("self transfer on {}", e.from)));
            }
            let from = next
                .balances
                .get(&e.from)
                .ok_or_else(|| SettlementError::UnknownAccount(e.from.clone()))?
                .checked_sub(&e.amount)?;
            let to = next
                .balances
                .get(&e.to)
                .ok_or_else(|| SettlementError::UnknownAccount(e.to.clone()))?
                .checked_add(&e.amount)?;
            next.balances.insert(e.from.clone(), from);
            next.balances.insert(e.to.clone(), to);
        }
        if next.balances[&AccountId::SegregatedIm].is_negative() {
            return Err(SettlementError::InvalidEntry("segregated IM overdrawn".into()));
        }
        Ok(next)
    }
}

fn transfer(out: &mut Vec<LedgerEntry>, from: &PartyId, to: &PartyId, amount: Money, purpose: Purpose) {
    let (from, to, amount) = if amount.is_negative() { (to, from, -amount) } else { (from, to, amount) };
    if amount.is_positive() {
        out.push(LedgerEntry {
            from: AccountId::Cash(from.clone()),
            to: AccountId::Cash(to.clone()),
            amount,
            purpose,
        });
    }
}

fn im_transfer(out: &mut Vec<LedgerEntry>, to: &PartyId, amount: Money, purpose: Purpose) {
    if amount.is_positive() {
        out.push(LedgerEntry {
            from: AccountId::SegregatedIm,
            to: AccountId::Cash(to.clone()),
            amount,
            purpose,
        });
    }
}

/// Whether the residual reverts to the defaulting party under `policy`.
fn residual_reverts(
    statement: &TerminationStatement,
    outcome: &AuctionOutcome,
    policy: ResidualPolicy,
) -> bool {
    outcome.decision == Decision::Trade
        && match policy {
            ResidualPolicy::AlwaysRevert => true,
            ResidualPolicy::RevertIfPayableToDefaulter => statement.termination_amount.is_positive(),
        }
}

/// Builds the transfers for a statement and outcome, in settlement order.
pub fn settlement_entries(
    statement: &TerminationStatement,
    outcome: &AuctionOutcome,
    agreement: &MasterAgreement,
    im_balance: &Money,
    policy: ResidualPolicy,
) -> Result<Vec<LedgerEntry>, SettlementError> {
    let a = &agreement.party_a;
    let b = &agreement.party_b;
    let mut out = Vec::new();

    // (1) Termination amount and VM. Positive flows run B -> A.
    let t = &statement.termination_amount;
    let vm = &agreement.vm_held_by_b;
    t.checked_cmp(vm)?;
    let vm_applied = if t.is_negative() && vm.is_positive() {
        // B holds A's VM and is owed money: keep VM against the claim.
        if t.abs().amount() < vm.amount() {
            t.abs()
        } else {
            vm.clone()
        }
    } else if t.is_positive() && vm.is_negative() {
        // A holds B's VM and is owed money.
        if t.amount() < vm.abs().amount() {
            -t
        } else {
            vm.clone()
        }
    } else {
        Money::zero(agreement.currency)
    };
    // vm_applied carries the sign of vm; it offsets both legs.
    transfer(&mut out, b, a, t.checked_add(&vm_applied)?, Purpose::TerminationAmount);
    transfer(&mut out, b, a, vm.checked_sub(&vm_applied)?, Purpose::VmReturn);

    // (2) Novation of the replacement trade.
    if outcome.decision == Decision::Trade {
        let (Some(winner), Some(price)) = (&outcome.winner, &outcome.execution_price) else {
            return Err(SettlementError::IncompleteOutcome);
        };
        transfer(&mut out, winner, b, price.clone(), Purpose::TradeNovationPayment);
    }

    // (3) IM split.
    if residual_reverts(statement, outcome, policy) {
        let residual = outcome.residual.clone().ok_or(SettlementError::IncompleteOutcome)?;
        let cost_covered = im_balance.checked_sub(&residual)?;
        im_transfer(&mut out, b, cost_covered, Purpose::ImCostToNonDefaulter);
        im_transfer(&mut out, a, residual, Purpose::ImResidualToDefaulter);
    } else {
        im_transfer(&mut out, b, im_balance.clone(), Purpose::ImFullToNonDefaulter);
    }
    Ok(out)
}

/// Per-agreement ledger. Settlement is applied at most once per statement.
#[derive(Debug, Clone)]
pub struct Ledger {
    accounts: AccountSet,
    entries: Vec<LedgerEntry>,
    settled: BTreeSet<String>,
}

impl Ledger {
    pub fn new(accounts: AccountSet) -> Self {
        Ledger { accounts, entries: Vec::new(), settled: BTreeSet::new() }
    }

    pub fn accounts(&self) -> &AccountSet {
        &self.accounts
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn settle(
        &mut self,
        state: LifecycleState,
        statement: &TerminationStatement,
        outcome: &AuctionOutcome,
        agreement: &MasterAgreement,
        policy: ResidualPolicy,
    ) -> Result<Vec<LedgerEntry>, SettlementError> {
        let key = serde_json::to_string(statement).expect("statement serializes");
        if self.settled.contains(&key) {
            return Err(SettlementError::AlreadySettled);
        }
        if state != LifecycleState::StatementDelivered {
            return Err(SettlementError::NotReady(state));
        }
        let im_balance = self
            .accounts
            .balance(&AccountId::SegregatedIm)
            .cloned()
            .unwrap_or_else(|| Money::zero(agreement.currency));
        if im_balance != outcome.im_reference {
            return Err(SettlementError::ImIntegrity {
                balance: Box::new(im_balance),
                reference: Box::new(outcome.im_reference.clone()),
            });
        }
        let entries = settlement_entries(statement, outcome, agreement, &im_balance, policy)?;
        let next = self.accounts.apply(&entries)?;
        self.accounts = next;
        self.entries.extend(entries.iter().cloned());
        self.settled.insert(key);
        Ok(entries)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationVerdict {
    pub passed: bool,
    pub first_violation: Option<AccountId>,
    pub diagnostics: Vec<String>,
}

/// Expected change per account, derived from the statement and outcome
/// without looking at the entries.
pub fn expected_changes(
    statement: &TerminationStatement,
    outcome: &AuctionOutcome,
    agreement: &MasterAgreement,
    policy: ResidualPolicy,
) -> Result<BTreeMap<AccountId, Money>, MoneyError> {
    let c = agreement.currency;
    let im = &outcome.im_reference;
    let net_to_a = statement.termination_amount.checked_add(&agreement.vm_held_by_b)?;
    let mut a = net_to_a.clone();
    let mut b = -net_to_a;
    let mut changes = BTreeMap::new();
    if outcome.decision == Decision::Trade {
        let winner = outcome.winner.clone().unwrap_or_else(|| PartyId::new(""));
        let price = outcome.execution_price.clone().unwrap_or_else(|| Money::zero(c));
        b = b.checked_add(&price)?;
        changes.insert(AccountId::Cash(winner), -price);
    }
    if residual_reverts(statement, outcome, policy) {
        let residual = outcome.residual.clone().unwrap_or_else(|| Money::zero(c));
        a = a.checked_add(&residual)?;
        b = b.checked_add(&im.checked_sub(&residual)?)?;
    } else {
        b = b.checked_add(im)?;
    }
    changes.insert(AccountId::Cash(agreement.party_a.clone()), a);
    changes.insert(AccountId::Cash(agreement.party_b.clone()), b);
    changes.insert(AccountId::SegregatedIm, -im);
    Ok(changes)
}

pub fn verify_conservation(
    entries: &[LedgerEntry],
    before: &AccountSet,
    after: &AccountSet,
    statement: &TerminationStatement,
    outcome: &AuctionOutcome,
    agreement: &MasterAgreement,
    policy: ResidualPolicy,
) -> ConservationVerdict {
    let mut diagnostics = Vec::new();
    let mut first_violation: Option<AccountId> = None;
    let mut flag = |acct: &AccountId, msg: String, diags: &mut Vec<String>| {
        if first_violation.is_none() {
            first_violation = Some(acct.clone());
        }
        diags.push(msg);
    };

    let currency = agreement.currency;
    let zero = Money::zero(currency);
    let accounts: BTreeSet<&AccountId> = before.balances().keys().chain(after.balances().keys()).collect();
    let change = |acct: &AccountId| -> Result<Money, MoneyError> {
        after.balance(acct).unwrap_or(&zero).checked_sub(before.balance(acct).unwrap_or(&zero))
    };

    // Entries replayed on `before` must land exactly on `after`.
    match before.apply(entries) {
        Ok(replayed) => {
            for acct in &accounts {
                if replayed.balance(acct) != after.balance(acct) {
                    flag(
                        acct,
                        format!("{acct}: entries do not reproduce the closing balance"),
                        &mut diagnostics,
                    );
                }
            }
        }
        Err(e) => flag(&AccountId::SegregatedIm, format!("entries cannot be applied: {e}"), &mut diagnostics),
    }

    // (a) zero sum
    let mut total = zero.clone();
    for acct in &accounts {
        match change(acct).and_then(|d| total.checked_add(&d)) {
            Ok(t) => total = t,
            Err(e) => flag(acct, format!("{acct}: {e}"), &mut diagnostics),
        }
    }
    if !total.is_zero() {
        let acct = accounts.iter().next().map(|a| (*a).clone()).unwrap_or(AccountId::SegregatedIm);
        flag(&acct, format!("balance changes sum to {} instead of zero", total.render()), &mut diagnostics);
    }

    // (b) IM account drained exactly
    let im_change = change(&AccountId::SegregatedIm).unwrap_or_else(|_| zero.clone());
    if im_change != -&agreement.im_posted_by_a {
        flag(
            &AccountId::SegregatedIm,
            format!(
                "IM account changed by {} instead of -{}",
                im_change.render(),
                agreement.im_posted_by_a.render()
            ),
            &mut diagnostics,
        );
    }
    if outcome.decision == Decision::Trade && !outcome.override_applied {
        if let (Some(cost), Some(residual)) = (&outcome.trade_cost, &outcome.residual) {
            if cost.checked_add(residual).ok().as_ref() != Some(&outcome.im_reference) {
                flag(&AccountId::SegregatedIm, "trade cost + residual != IM".into(), &mut diagnostics);
            }
        }
    }

    // (c) closed form per party
    match expected_changes(statement, outcome, agreement, policy) {
        Ok(expected) => {
            for acct in &accounts {
                let want = expected.get(*acct).cloned().unwrap_or_else(|| zero.clone());
                let got = change(acct).unwrap_or_else(|_| zero.clone());
                if want != got {
                    flag(
                        acct,
                        format!(
                            "{acct}: changed by {} ({}), expected {} ({})",
                            got.render(),
                            got.exact(),
                            want.render(),
                            want.exact()
                        ),
                        &mut diagnostics,
                    );
                }
            }
        }
        Err(e) => flag(&AccountId::SegregatedIm, format!("closed form failed: {e}"), &mut diagnostics),
    }

    ConservationVerdict { passed: diagnostics.is_empty(), first_violation, diagnostics }
}
