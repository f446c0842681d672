//! Scenario files.
//!
//! Scenarios are TOML, `schema_version = 1`. Monetary values are strings
//! ("123.45") parsed exactly and denominated in the top-level `currency`.
//! See `docs/scenario-format.md` for the annotated schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{AuctionConfig, Decision, ExcessCostPolicy};
use crate::lifecycle::{DefaultCause, EventOfDefault};
use crate::model::{
    first_missed_payment, MasterAgreement, Party, PartyId, PaymentRef, Role, ScheduledPayment, Tick,
    Transaction, TransactionId,
};
use crate::money::{Currency, Money};
use crate::settlement::ResidualPolicy;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnknownSchemaVersion(u32),
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
}

// ---------------------------------------------------------------------------
// File representation

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(rename = "schema_version")]
    _schema_version: u32,
    name: String,
    #[serde(default)]
    description: String,
    currency: String,
    seed: Option<u64>,
    agreement: AgreementFile,
    #[serde(default)]
    transactions: Vec<TransactionFile>,
    event: EventFile,
    #[serde(default)]
    termination: TerminationFile,
    auction: AuctionFile,
    #[serde(default)]
    bidders: Vec<BidderFile>,
    expected: Option<ExpectedFile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartyFile {
    id: String,
    name: String,
    role: Role,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgreementFile {
    party_a: PartyFile,
    party_b: PartyFile,
    vm_held_by_b: String,
    im_posted_by_a: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PaymentFile {
    due: Tick,
    payer: String,
    amount: String,
    #[serde(default)]
    paid: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransactionFile {
    id: String,
    #[serde(default)]
    description: String,
    scripted_mark: Option<String>,
    #[serde(default)]
    payments: Vec<PaymentFile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventFile {
    cause: Option<DefaultCause>,
    occurred_at: Option<Tick>,
    #[serde(default)]
    auto_detect: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerminationFile {
    early_termination_date: Option<Tick>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuctionFile {
    commit_deadline: Tick,
    reveal_deadline: Tick,
    min_mid_quotes: Option<usize>,
    im_reference: Option<String>,
    #[serde(default)]
    excess_cost_policy: ExcessCostPolicy,
    #[serde(default)]
    residual_policy: ResidualPolicy,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BehaviorFile {
    Scripted {
        mid: String,
        trade: Option<String>,
    },
    Stochastic {
        true_value: String,
        mid_noise_sd: String,
        trade_spread: String,
        participation_probability: f64,
    },
    NoReveal {
        mid: String,
        trade: Option<String>,
    },
    TamperedReveal {
        mid: String,
        trade: Option<String>,
        revealed_mid: Option<String>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BidderFile {
    id: String,
    #[serde(default)]
    name: String,
    behavior: BehaviorFile,
    commit_at: Option<Tick>,
    reveal_at: Option<Tick>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectedFile {
    market_quotation: Option<String>,
    winner: Option<String>,
    execution_price: Option<String>,
    decision: Option<Decision>,
}

// ---------------------------------------------------------------------------
// Validated scenario

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticParams {
    pub true_value: Money,
    pub mid_noise_sd: Money,
    pub trade_spread: Money,
    pub participation_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Scripted {
        mid: Money,
        trade: Option<Money>,
    },
    Stochastic(StochasticParams),
    /// Commits, never reveals.
    NoReveal {
        mid: Money,
        trade: Option<Money>,
    },
    /// Commits to (mid, trade), reveals `revealed_mid` instead.
    TamperedReveal {
        mid: Money,
        trade: Option<Money>,
        revealed_mid: Money,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidderScript {
    pub id: PartyId,
    pub name: String,
    pub behavior: Behavior,
    pub commit_at: Option<Tick>,
    pub reveal_at: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventSpec {
    Explicit(EventOfDefault),
    /// Failure to pay, detected from the first missed payment by party A.
    AutoDetect,
}

/// Golden expectations; every present field is compared after rendering.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Expected {
    pub market_quotation: Option<String>,
    pub winner: Option<String>,
    pub execution_price: Option<String>,
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub parties: Vec<Party>,
    pub agreement: MasterAgreement,
    pub transactions: Vec<Transaction>,
    pub payments_made: BTreeSet<PaymentRef>,
    pub event: EventSpec,
    pub early_termination_date: Option<Tick>,
    pub auction: AuctionConfig,
    pub residual_policy: ResidualPolicy,
    pub bidders: Vec<BidderScript>,
    pub expected: Option<Expected>,
}

impl Scenario {
    /// Sets both the posted IM and the auction's IM reference.
    pub fn with_im(mut self, im: Money) -> Self {
        self.agreement.im_posted_by_a = im.clone();
        self.auction.im_reference = im;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn currency(&self) -> Currency {
        self.agreement.currency
    }

    /// The default event, resolving auto-detection against the schedule.
    pub fn resolve_event(&self) -> Option<EventOfDefault> {
        match &self.event {
            EventSpec::Explicit(e) => Some(e.clone()),
            EventSpec::AutoDetect => {
                first_missed_payment(&self.transactions, &self.agreement, &self.payments_made).map(
                    |(tick, _)| EventOfDefault {
                        cause: DefaultCause::FailureToPayOrDeliver,
                        defaulting_party: self.agreement.party_a.clone(),
                        occurred_at: tick,
                    },
                )
            }
        }
    }

    /// Defaults to the tick after the default, so a missed payment that
    /// triggered the default counts as unpaid.
    pub fn resolve_early_termination_date(&self) -> Option<Tick> {
        let event = self.resolve_event()?;
        Some(self.early_termination_date.unwrap_or(event.occurred_at + 1))
    }

    /// Checks every cross-field invariant; used after parsing and after
    /// programmatic construction.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        let mut err =
            |field: &str, message: String| errs.push(FieldError { field: field.to_string(), message });

        let mut ids = BTreeSet::new();
        for p in &self.parties {
            if !ids.insert(&p.id) {
                err("parties", format!("duplicate party id {}", p.id));
            }
        }
        let mut bidder_ids = BTreeSet::new();
        for (i, b) in self.bidders.iter().enumerate() {
            if !bidder_ids.insert(&b.id) {
                err(&format!("bidders[{i}].id"), format!("duplicate bidder id {}", b.id));
            }
            if b.id == self.agreement.party_a || b.id == self.agreement.party_b {
                err(&format!("bidders[{i}].id"), format!("bidder id {} collides with a counterparty", b.id));
            }
            let field = format!("bidders[{i}].behavior");
            if let Behavior::Stochastic(p) = &b.behavior {
                if !(0.0..=1.0).contains(&p.participation_probability) {
                    err(&field, "participation_probability must lie in [0, 1]".into());
                }
                if p.mid_noise_sd.is_negative() {
                    err(&field, "mid_noise_sd must be non-negative".into());
                }
                if p.trade_spread.is_negative() {
                    err(&field, "trade_spread must be non-negative".into());
                }
            }
        }
        if self.bidders.iter().map(|b| &b.id).collect::<Vec<_>>()
            != self.auction.invited_bidders.iter().collect::<Vec<_>>()
        {
            err("auction.invited_bidders", "must list the scenario bidders in order".into());
        }
        if let Err(e) = self.agreement.validate(&self.transactions) {
            err("agreement", e.to_string());
        }
        let mut txn_ids = BTreeSet::new();
        for (i, t) in self.transactions.iter().enumerate() {
            if !txn_ids.insert(&t.id) {
                err(&format!("transactions[{i}].id"), format!("duplicate transaction id {}", t.id));
            }
            let mut dues = BTreeSet::new();
            for (j, p) in t.payment_schedule().iter().enumerate() {
                // Paid flags are keyed by (transaction, due tick).
                if !dues.insert(p.due_time) {
                    err(
                        &format!("transactions[{i}].payments[{j}].due"),
                        format!("two payments of {} fall due at tick {}", t.id, p.due_time),
                    );
                }
                if p.payer != self.agreement.party_a && p.payer != self.agreement.party_b {
                    err(
                        &format!("transactions[{i}].payments[{j}].payer"),
                        format!("{} is not a counterparty", p.payer),
                    );
                }
                if !p.amount.is_positive() {
                    err(&format!("transactions[{i}].payments[{j}].amount"), "must be positive".into());
                }
            }
        }
        if self.auction.im_reference.is_negative() {
            err("auction.im_reference", "must be non-negative".into());
        }
        if self.auction.commit_deadline >= self.auction.reveal_deadline {
            err("auction.commit_deadline", "must be before reveal_deadline".into());
        }
        if self.auction.min_mid_quotes == 0 {
            err("auction.min_mid_quotes", "must be at least 1".into());
        }
        match self.resolve_event() {
            None => err("event.auto_detect", "no missed payment by the defaulting party".into()),
            Some(event) => {
                if event.defaulting_party != self.agreement.party_a {
                    err("event", "defaulting party must be party_a".into());
                }
                let etd = self.resolve_early_termination_date().unwrap_or_default();
                if etd < event.occurred_at {
                    err(
                        "termination.early_termination_date",
                        format!("{etd} precedes the default at tick {}", event.occurred_at),
                    );
                }
                if self.auction.commit_deadline <= etd {
                    err("auction.commit_deadline", format!("must be after the early termination date {etd}"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }
}

// ---------------------------------------------------------------------------
// Loading

struct Converter {
    currency: Currency,
    errors: Vec<FieldError>,
}

impl Converter {
    fn money(&mut self, field: &str, text: &str) -> Money {
        Money::parse(text, self.currency).unwrap_or_else(|e| {
            self.errors.push(FieldError { field: field.to_string(), message: e.to_string() });
            Money::zero(self.currency)
        })
    }

    fn opt_money(&mut self, field: &str, text: Option<&String>) -> Option<Money> {
        text.map(|t| self.money(field, t))
    }

    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(FieldError { field: field.to_string(), message: message.into() });
    }
}

/// Default shift applied by a tampering bidder that does not name its
/// revealed mid.
const DEFAULT_TAMPER_SHIFT: &str = "5.00";

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    // Read the version first so a future schema fails with the right error.
    #[derive(Deserialize)]
    struct Version {
        schema_version: Option<u32>,
    }
    let version: Version = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    match version.schema_version {
        Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(ScenarioError::UnknownSchemaVersion(v)),
        None => return Err(ScenarioError::Parse("missing schema_version".into())),
    }
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    convert(file)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

fn convert(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let currency = Currency::new(&file.currency).map_err(|e| {
        ScenarioError::Invalid(vec![FieldError { field: "currency".into(), message: e.to_string() }])
    })?;
    let mut cv = Converter { currency, errors: Vec::new() };

    let party_a = Party {
        id: PartyId::new(&file.agreement.party_a.id),
        name: file.agreement.party_a.name.clone(),
        role: file.agreement.party_a.role,
    };
    let party_b = Party {
        id: PartyId::new(&file.agreement.party_b.id),
        name: file.agreement.party_b.name.clone(),
        role: file.agreement.party_b.role,
    };

    let mut transactions = Vec::new();
    let mut payments_made = BTreeSet::new();
    for (i, t) in file.transactions.iter().enumerate() {
        let mark = cv.opt_money(&format!("transactions[{i}].scripted_mark"), t.scripted_mark.as_ref());
        let mut schedule = Vec::new();
        for (j, p) in t.payments.iter().enumerate() {
            let amount = cv.money(&format!("transactions[{i}].payments[{j}].amount"), &p.amount);
            schedule.push(ScheduledPayment { due_time: p.due, payer: PartyId::new(&p.payer), amount });
            if p.paid {
                payments_made
                    .insert(PaymentRef { transaction: TransactionId(t.id.clone()), due_time: p.due });
            }
        }
        transactions.push(Transaction::new(&t.id, &t.description, schedule, mark));
    }

    let vm_held_by_b = cv.money("agreement.vm_held_by_b", &file.agreement.vm_held_by_b);
    let im_posted_by_a = cv.money("agreement.im_posted_by_a", &file.agreement.im_posted_by_a);
    let agreement = MasterAgreement {
        party_a: party_a.id.clone(),
        party_b: party_b.id.clone(),
        currency,
        transactions: transactions.iter().map(|t| t.id.clone()).collect(),
        vm_held_by_b,
        im_posted_by_a: im_posted_by_a.clone(),
    };

    let event = match (&file.event, file.event.auto_detect) {
        (EventFile { cause: None, occurred_at: None, .. }, true) => EventSpec::AutoDetect,
        (EventFile { cause: Some(_), .. }, true) | (EventFile { occurred_at: Some(_), .. }, true) => {
            cv.error("event", "auto_detect excludes cause and occurred_at");
            EventSpec::AutoDetect
        }
        (EventFile { cause: Some(cause), occurred_at: Some(at), .. }, false) => {
            EventSpec::Explicit(EventOfDefault {
                cause: *cause,
                defaulting_party: party_a.id.clone(),
                occurred_at: *at,
            })
        }
        _ => {
            cv.error("event", "needs cause and occurred_at, or auto_detect = true");
            EventSpec::AutoDetect
        }
    };

    let im_reference = match &file.auction.im_reference {
        Some(s) => cv.money("auction.im_reference", s),
        None => im_posted_by_a,
    };

    let mut has_stochastic = false;
    let mut bidders = Vec::new();
    for (i, b) in file.bidders.iter().enumerate() {
        let f = |name: &str| format!("bidders[{i}].behavior.{name}");
        let behavior = match &b.behavior {
            BehaviorFile::Scripted { mid, trade } => Behavior::Scripted {
                mid: cv.money(&f("mid"), mid),
                trade: cv.opt_money(&f("trade"), trade.as_ref()),
            },
            BehaviorFile::Stochastic {
                true_value,
                mid_noise_sd,
                trade_spread,
                participation_probability,
            } => {
                has_stochastic = true;
                Behavior::Stochastic(StochasticParams {
                    true_value: cv.money(&f("true_value"), true_value),
                    mid_noise_sd: cv.money(&f("mid_noise_sd"), mid_noise_sd),
                    trade_spread: cv.money(&f("trade_spread"), trade_spread),
                    participation_probability: *participation_probability,
                })
            }
            BehaviorFile::NoReveal { mid, trade } => Behavior::NoReveal {
                mid: cv.money(&f("mid"), mid),
                trade: cv.opt_money(&f("trade"), trade.as_ref()),
            },
            BehaviorFile::TamperedReveal { mid, trade, revealed_mid } => {
                let mid = cv.money(&f("mid"), mid);
                let revealed_mid = match revealed_mid {
                    Some(r) => cv.money(&f("revealed_mid"), r),
                    None => mid
                        .checked_add(&Money::parse(DEFAULT_TAMPER_SHIFT, currency).expect("constant"))
                        .expect("same currency"),
                };
                if revealed_mid == mid {
                    cv.error(&f("revealed_mid"), "must differ from the committed mid");
                }
                Behavior::TamperedReveal {
                    mid,
                    trade: cv.opt_money(&f("trade"), trade.as_ref()),
                    revealed_mid,
                }
            }
        };
        bidders.push(BidderScript {
            id: PartyId::new(&b.id),
            name: if b.name.is_empty() { format!("Bidder {}", b.id) } else { b.name.clone() },
            behavior,
            commit_at: b.commit_at,
            reveal_at: b.reveal_at,
        });
    }
    if has_stochastic && file.seed.is_none() {
        cv.error("seed", "required when any bidder is stochastic");
    }

    let expected = file.expected.map(|e| {
        for (name, value) in
            [("market_quotation", &e.market_quotation), ("execution_price", &e.execution_price)]
        {
            if let Some(v) = value {
                cv.money(&format!("expected.{name}"), v);
            }
        }
        Expected {
            market_quotation: e.market_quotation,
            winner: e.winner,
            execution_price: e.execution_price,
            decision: e.decision,
        }
    });

    if !cv.errors.is_empty() {
        return Err(ScenarioError::Invalid(cv.errors));
    }

    let mut parties = vec![party_a, party_b];
    parties.extend(bidders.iter().map(|b| Party {
        id: b.id.clone(),
        name: b.name.clone(),
        role: Role::Bidder,
    }));

    let scenario = Scenario {
        name: file.name,
        description: file.description,
        seed: file.seed.unwrap_or(0),
        parties,
        agreement,
        transactions,
        payments_made,
        event,
        early_termination_date: file.termination.early_termination_date,
        auction: AuctionConfig {
            commit_deadline: file.auction.commit_deadline,
            reveal_deadline: file.auction.reveal_deadline,
            min_mid_quotes: file.auction.min_mid_quotes.unwrap_or(AuctionConfig::DEFAULT_MIN_MID_QUOTES),
            im_reference,
            invited_bidders: bidders.iter().map(|b| b.id.clone()).collect(),
            excess_cost_policy: file.auction.excess_cost_policy,
        },
        residual_policy: file.auction.residual_policy,
        bidders,
        expected,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Mids and trade quotes of scripted bidders, keyed by bidder id.
pub fn scripted_quotes(scenario: &Scenario) -> BTreeMap<PartyId, (Money, Option<Money>)> {
    scenario
        .bidders
        .iter()
        .filter_map(|b| match &b.behavior {
            Behavior::Scripted { mid, trade } => Some((b.id.clone(), (mid.clone(), trade.clone()))),
            _ => None,
        })
        .collect()
}
