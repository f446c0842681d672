//! Tick-driven simulation of one close-out.
//!
//! Every agent action is an event ordered by (tick, agent id, kind); the
//! run is a pure function of the scenario and its seed.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bidders::{plan, BidderPlan, RNG_ALGORITHM};
use super::report::{
    AuctionTranscript, Balance, ErrorKind, ReportBody, RunError, RunReport, REPORT_SCHEMA_VERSION,
};
use super::scenario::{load_scenario, Expected, Scenario, ScenarioError};
use crate::auction::{
    Action, Auction, BidCommitment, Decision, PortfolioSnapshot, Rejection, Resolution, TranscriptEntry,
};
use crate::lifecycle::{Lifecycle, TerminationStatement};
use crate::model::{net_scripted_value, unpaid_amounts, PartyId, Tick};
use crate::money::{Money, MoneyError};
use crate::settlement::{verify_conservation, AccountSet, ConservationVerdict, Ledger, LedgerEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    DeclareDefault,
    DesignateEarlyTermination,
    CeaseObligations,
    OpenAuction,
    Commit,
    Reveal,
    CloseAuction,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct SimEvent {
    tick: Tick,
    agent: PartyId,
    kind: EventKind,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    lifecycle: Lifecycle,
    plans: BTreeMap<PartyId, BidderPlan>,
    auction: Option<Auction>,
    early_entries: Vec<TranscriptEntry>,
    resolution: Option<Resolution>,
    statement: Option<TerminationStatement>,
    ledger: Ledger,
    opening: AccountSet,
    settled: Vec<LedgerEntry>,
    verdict: Option<ConservationVerdict>,
    error: Option<RunError>,
}

impl<'a> Sim<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        let opening = AccountSet::opening(&scenario.agreement, scenario.bidders.iter().map(|b| &b.id));
        Sim {
            scenario,
            lifecycle: Lifecycle::new(scenario.bidders.len()),
            plans: scenario
                .bidders
                .iter()
                .filter_map(|b| plan(b, scenario.seed).map(|p| (b.id.clone(), p)))
                .collect(),
            auction: None,
            early_entries: Vec::new(),
            resolution: None,
            statement: None,
            ledger: Ledger::new(opening.clone()),
            opening,
            settled: Vec::new(),
            verdict: None,
            error: None,
        }
    }

    fn schedule(&self) -> Vec<SimEvent> {
        let s = self.scenario;
        let b = s.agreement.party_b.clone();
        let mut events = Vec::new();
        let (Some(event), Some(etd)) = (s.resolve_event(), s.resolve_early_termination_date()) else {
            return events;
        };
        let at = |tick, agent: &PartyId, kind| SimEvent { tick, agent: agent.clone(), kind };
        events.push(at(event.occurred_at, &b, EventKind::DeclareDefault));
        events.push(at(etd, &b, EventKind::DesignateEarlyTermination));
        events.push(at(etd, &b, EventKind::CeaseObligations));
        events.push(at(etd, &b, EventKind::OpenAuction));
        for script in &s.bidders {
            let Some(plan) = self.plans.get(&script.id) else {
                continue;
            };
            events.push(at(script.commit_at.unwrap_or(etd + 1), &script.id, EventKind::Commit));
            if plan.revealed.is_some() {
                let tick = script.reveal_at.unwrap_or(s.auction.commit_deadline + 1);
                events.push(at(tick, &script.id, EventKind::Reveal));
            }
        }
        events.push(at(s.auction.reveal_deadline + 1, &b, EventKind::CloseAuction));
        events.sort();
        events
    }

    fn fail(&mut self, kind: ErrorKind, tick: Tick, agent: &PartyId, message: impl ToString) {
        self.error = Some(RunError { kind, tick, agent: agent.to_string(), message: message.to_string() });
    }

    fn execute(&mut self) {
        if let Err(e) = self.scenario.validate() {
            let harness = PartyId::new("harness");
            self.fail(ErrorKind::Protocol, 0, &harness, e);
            return;
        }
        for ev in self.schedule() {
            if let Err(message) = self.step(&ev) {
                self.fail(ErrorKind::Protocol, ev.tick, &ev.agent, message);
                return;
            }
        }
    }

    fn step(&mut self, ev: &SimEvent) -> Result<(), String> {
        let s = self.scenario;
        match ev.kind {
            EventKind::DeclareDefault => {
                let event = s.resolve_event().ok_or("no event of default")?;
                self.lifecycle.declare_default(event).map_err(|e| e.to_string())?;
            }
            EventKind::DesignateEarlyTermination => {
                self.lifecycle.designate_early_termination(ev.tick).map_err(|e| e.to_string())?;
            }
            EventKind::CeaseObligations => {
                self.lifecycle.cease_obligations(ev.tick).map_err(|e| e.to_string())?;
            }
            EventKind::OpenAuction => {
                let snapshot = PortfolioSnapshot {
                    agreement: s.agreement.clone(),
                    transactions: s.transactions.clone(),
                };
                let auction =
                    Auction::open(s.auction.clone(), snapshot, ev.tick).map_err(|e| e.to_string())?;
                self.lifecycle.start_auction(ev.tick).map_err(|e| e.to_string())?;
                self.auction = Some(auction);
            }
            EventKind::Commit => {
                let plan = &self.plans[&ev.agent];
                let commitment = BidCommitment::for_bid(&plan.committed, ev.tick);
                match self.auction.as_mut() {
                    Some(a) => {
                        let _ = a.commit_bid(commitment, ev.tick);
                    }
                    None => self.early_entries.push(TranscriptEntry {
                        tick: ev.tick,
                        bidder: ev.agent.clone(),
                        action: Action::Commit,
                        digest: commitment.digest,
                        rejection: Some(Rejection::NotOpen),
                    }),
                }
            }
            EventKind::Reveal => {
                let bid = self.plans[&ev.agent].revealed.clone().expect("scheduled only with a reveal");
                match self.auction.as_mut() {
                    Some(a) => {
                        let _ = a.reveal_bid(bid, ev.tick);
                    }
                    None => self.early_entries.push(TranscriptEntry {
                        tick: ev.tick,
                        bidder: ev.agent.clone(),
                        action: Action::Reveal,
                        digest: bid.digest(),
                        rejection: Some(Rejection::NotOpen),
                    }),
                }
            }
            EventKind::CloseAuction => self.close_out(ev.tick)?,
        }
        Ok(())
    }

    fn close_out(&mut self, tick: Tick) -> Result<(), String> {
        let s = self.scenario;
        let auction = self.auction.as_mut().ok_or("auction never opened")?;
        let resolution = auction.close(tick).map_err(|e| e.to_string())?;
        let outcome = resolution.outcome.clone();
        self.resolution = Some(resolution);
        self.lifecycle.calculate_amounts(tick).map_err(|e| e.to_string())?;

        let etd = self.lifecycle.early_termination_date().ok_or("no early termination date")?;
        let unpaid = unpaid_amounts(&s.transactions, &s.agreement, etd, &s.payments_made)
            .map_err(|e| e.to_string())?;
        let statement =
            TerminationStatement::build(etd, unpaid, outcome.mq.clone(), &s.agreement, outcome.trade_leg())
                .map_err(|e| e.to_string())?;
        self.lifecycle.deliver_statement(tick, statement.clone()).map_err(|e| e.to_string())?;
        self.statement = Some(statement.clone());

        let entries = self
            .ledger
            .settle(self.lifecycle.state(), &statement, &outcome, &s.agreement, s.residual_policy)
            .map_err(|e| e.to_string())?;
        self.lifecycle.mark_settled(tick).map_err(|e| e.to_string())?;

        let verdict = verify_conservation(
            &entries,
            &self.opening,
            self.ledger.accounts(),
            &statement,
            &outcome,
            &s.agreement,
            s.residual_policy,
        );
        self.settled = entries;
        if !verdict.passed {
            let ledger_agent = PartyId::new("ledger");
            let first = verdict.diagnostics.first().cloned().unwrap_or_default();
            self.fail(ErrorKind::Conservation, tick, &ledger_agent, first);
        }
        self.verdict = Some(verdict);
        Ok(())
    }

    fn into_report(self) -> RunReport {
        let s = self.scenario;
        let mut entries = self.early_entries;
        let (opened_at, snapshot_digest, revealed, excluded) = match &self.auction {
            Some(a) => {
                entries.extend(a.transcript().iter().cloned());
                (
                    Some(a.opened_at()),
                    Some(a.snapshot().digest()),
                    a.revealed().cloned().collect(),
                    a.excluded().iter().cloned().collect(),
                )
            }
            None => (None, None, Vec::new(), Vec::new()),
        };
        entries.sort_by(|x, y| (x.tick, &x.bidder).cmp(&(y.tick, &y.bidder)));
        let body = ReportBody {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: s.name.clone(),
            seed: s.seed,
            rng: RNG_ALGORITHM.to_string(),
            residual_policy: s.residual_policy,
            final_state: self.lifecycle.state(),
            event_log: self.lifecycle.log().to_vec(),
            scripted_portfolio_value: net_scripted_value(&s.transactions, &s.agreement).ok(),
            auction: AuctionTranscript {
                opened_at,
                snapshot_digest,
                commit_deadline: s.auction.commit_deadline,
                reveal_deadline: s.auction.reveal_deadline,
                invited: s.auction.invited_bidders.clone(),
                entries,
                revealed,
                excluded,
            },
            market_quotation: self.resolution.as_ref().map(|r| r.market_quotation.clone()),
            outcome: self.resolution.as_ref().map(|r| r.outcome.clone()),
            statement: self.statement,
            ledger: self.settled,
            closing_balances: self
                .ledger
                .accounts()
                .balances()
                .iter()
                .map(|(account, amount)| Balance { account: account.clone(), amount: amount.clone() })
                .collect(),
            conservation: self.verdict,
            error: self.error,
        };
        RunReport::new(body)
    }
}

/// Runs a scenario end to end. Failures are recorded in the report, which
/// keeps whatever transcript was produced up to that point.
pub fn run(scenario: &Scenario) -> RunReport {
    let mut sim = Sim::new(scenario);
    sim.execute();
    sim.into_report()
}

/// Like [`run`], with the elapsed wall time attached outside the hashed body.
pub fn run_timed(scenario: &Scenario) -> RunReport {
    let start = std::time::Instant::now();
    let mut report = run(scenario);
    report.wall_time_us = Some(start.elapsed().as_micros() as u64);
    report
}

// ---------------------------------------------------------------------------
// IM sweeps

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub im: Money,
    pub decision: Option<Decision>,
    pub trade_cost: Option<Money>,
    pub residual: Option<Money>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SweepError {
    #[error("IM bounds must be non-negative")]
    NegativeBound,
    #[error("step must be positive")]
    NonPositiveStep,
    #[error("empty progression: from {from} exceeds to {to}")]
    Empty { from: String, to: String },
    #[error(transparent)]
    Money(#[from] MoneyError),
}

/// `from, from + step, …` up to and including `to`.
pub fn im_progression(from: &Money, to: &Money, step: &Money) -> Result<Vec<Money>, SweepError> {
    if from.is_negative() || to.is_negative() {
        return Err(SweepError::NegativeBound);
    }
    if !step.is_positive() {
        return Err(SweepError::NonPositiveStep);
    }
    if from.checked_cmp(to)?.is_gt() {
        return Err(SweepError::Empty { from: from.render(), to: to.render() });
    }
    // currency check
    step.checked_cmp(from)?;
    let mut out = Vec::new();
    let mut im = from.clone();
    while im.checked_cmp(to)?.is_le() {
        out.push(im.clone());
        im = im.checked_add(step)?;
    }
    Ok(out)
}

/// One independent run per IM value; runs share no state.
pub fn sweep(scenario: &Scenario, ims: &[Money]) -> Vec<SweepRow> {
    ims.par_iter()
        .map(|im| {
            let report = run(&scenario.clone().with_im(im.clone()));
            let outcome = report.report.outcome.as_ref();
            SweepRow {
                im: im.clone(),
                decision: outcome.map(|o| o.decision),
                trade_cost: outcome.and_then(|o| o.trade_cost.clone()),
                residual: outcome.and_then(|o| o.residual.clone()),
                error: report.report.error.as_ref().map(|e| e.message.clone()),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Golden comparison

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub field: String,
    pub expected: String,
    pub actual: String,
}

/// Compares a report against the expectations embedded in its scenario.
pub fn compare_expected(report: &RunReport, expected: &Expected) -> Vec<Mismatch> {
    let r = &report.report;
    let outcome = r.outcome.as_ref();
    let actual_mq = r.market_quotation.as_ref().map(|m| m.value.render());
    let actual_winner = outcome.and_then(|o| o.winner.as_ref()).map(|w| w.to_string());
    let actual_price = outcome.and_then(|o| o.execution_price.as_ref()).map(Money::render);
    let actual_decision = outcome.map(|o| format!("{:?}", o.decision));
    let checks = [
        ("market_quotation", expected.market_quotation.clone(), actual_mq),
        ("winner", expected.winner.clone(), actual_winner),
        ("execution_price", expected.execution_price.clone(), actual_price),
        ("decision", expected.decision.map(|d| format!("{d:?}")), actual_decision),
    ];
    let normalise = |field: &str, v: String| -> String {
        if field == "market_quotation" || field == "execution_price" {
            crate::money::parse_rational(&v).map(|q| crate::money::render_rational(&q)).unwrap_or(v)
        } else {
            v
        }
    };
    checks
        .into_iter()
        .filter_map(|(field, want, got)| {
            let want = normalise(field, want?);
            let got = got.unwrap_or_else(|| "-".to_string());
            (want != got).then(|| Mismatch { field: field.to_string(), expected: want, actual: got })
        })
        .collect()
}

pub const TABLE1_ROWS: usize = 5;

pub fn table1_path(dir: &Path, row: usize) -> std::path::PathBuf {
    dir.join(format!("table1_row{row}.toml"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table1Row {
    pub row: usize,
    pub market_quotation: Option<String>,
    pub winner: Option<String>,
    pub execution_price: Option<String>,
    pub mismatches: Vec<Mismatch>,
}

impl Table1Row {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Runs the five bundled reference scenarios in `dir`.
pub fn run_table1(dir: &Path) -> Result<Vec<Table1Row>, ScenarioError> {
    (1..=TABLE1_ROWS)
        .map(|row| {
            let scenario = load_scenario(table1_path(dir, row))?;
            let report = run(&scenario);
            let mut mismatches = match &scenario.expected {
                Some(exp) => compare_expected(&report, exp),
                None => vec![Mismatch {
                    field: "expected".into(),
                    expected: "expectation block".into(),
                    actual: "missing".into(),
                }],
            };
            if let Some(e) = &report.report.error {
                mismatches.push(Mismatch {
                    field: "error".into(),
                    expected: "none".into(),
                    actual: e.message.clone(),
                });
            }
            let outcome = report.report.outcome.as_ref();
            Ok(Table1Row {
                row,
                market_quotation: report.report.market_quotation.as_ref().map(|m| m.value.render()),
                winner: outcome.and_then(|o| o.winner.as_ref()).map(|w| w.to_string()),
                execution_price: outcome.and_then(|o| o.execution_price.as_ref()).map(Money::render),
                mismatches,
            })
        })
        .collect()
}
