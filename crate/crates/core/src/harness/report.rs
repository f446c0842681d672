//! Machine-readable run reports.
//!
//! The structured form is JSON. `content_hash` is the SHA-256 of the compact
//! JSON encoding of `report`; wall time sits outside the hashed body.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::auction::{AuctionOutcome, Bid, Decision, Digest, MarketQuotationResult, TranscriptEntry};
use crate::lifecycle::{LifecycleState, LogEntry, TerminationStatement};
use crate::model::{PartyId, Tick};
use crate::money::Money;
use crate::settlement::{AccountId, ConservationVerdict, LedgerEntry, ResidualPolicy};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Lifecycle, auction or settlement refused to proceed.
    Protocol,
    /// The ledger failed the conservation check.
    Conservation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: ErrorKind,
    pub tick: Tick,
    pub agent: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionTranscript {
    pub opened_at: Option<Tick>,
    pub snapshot_digest: Option<Digest>,
    pub commit_deadline: Tick,
    pub reveal_deadline: Tick,
    pub invited: Vec<PartyId>,
    pub entries: Vec<TranscriptEntry>,
    pub revealed: Vec<Bid>,
    pub excluded: Vec<PartyId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balance {
    pub account: AccountId,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportBody {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub rng: String,
    pub residual_policy: ResidualPolicy,
    pub final_state: LifecycleState,
    pub event_log: Vec<LogEntry>,
    pub scripted_portfolio_value: Option<Money>,
    pub auction: AuctionTranscript,
    pub market_quotation: Option<MarketQuotationResult>,
    pub outcome: Option<AuctionOutcome>,
    pub statement: Option<TerminationStatement>,
    pub ledger: Vec<LedgerEntry>,
    pub closing_balances: Vec<Balance>,
    pub conservation: Option<ConservationVerdict>,
    pub error: Option<RunError>,
}

impl ReportBody {
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("report serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub content_hash: String,
    pub report: ReportBody,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_us: Option<u64>,
}

impl RunReport {
    pub fn new(report: ReportBody) -> Self {
        RunReport { content_hash: report.content_hash(), report, wall_time_us: None }
    }

    pub fn hash_is_valid(&self) -> bool {
        self.report.content_hash() == self.content_hash
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn decision(&self) -> Option<Decision> {
        self.report.outcome.as_ref().map(|o| o.decision)
    }

    /// Line-oriented summary for terminals.
    pub fn to_human(&self) -> String {
        let r = &self.report;
        let mut out = String::new();
        let _ = writeln!(out, "scenario        {}", r.scenario);
        let _ = writeln!(out, "seed            {}", r.seed);
        let _ = writeln!(out, "final state     {}", r.final_state);
        for e in &r.event_log {
            let _ = writeln!(out, "  t={:<4} {} -> {} ({})", e.at, e.from, e.to, e.transition.name());
        }
        let accepted = r.auction.entries.iter().filter(|e| e.rejection.is_none()).count();
        let _ = writeln!(
            out,
            "auction         {} submissions, {} accepted, {} excluded",
            r.auction.entries.len(),
            accepted,
            r.auction.excluded.len()
        );
        for e in r.auction.entries.iter().filter(|e| e.rejection.is_some()) {
            let _ = writeln!(
                out,
                "  t={:<4} bidder {} {:?} rejected: {}",
                e.tick,
                e.bidder,
                e.action,
                e.rejection.map(|c| c.code()).unwrap_or_default()
            );
        }
        if let Some(mq) = &r.market_quotation {
            let used: Vec<_> =
                mq.quotes_used.iter().map(|q| format!("#{} {}", q.bidder, q.value.render())).collect();
            let dropped: Vec<_> =
                mq.quotes_discarded.iter().map(|q| format!("#{} {}", q.bidder, q.value.render())).collect();
            let _ = writeln!(out, "market quote    {}", mq.value.render());
            let _ = writeln!(out, "  used          {}", used.join(", "));
            let _ = writeln!(out, "  discarded     {}", dropped.join(", "));
        }
        if let Some(o) = &r.outcome {
            match (&o.winner, &o.execution_price) {
                (Some(w), Some(p)) => {
                    let _ = writeln!(out, "trade           (#{}, {})", w, p.render());
                }
                _ => {
                    let _ = writeln!(out, "trade           none");
                }
            }
            if let Some(c) = &o.trade_cost {
                let _ = writeln!(out, "trade cost      {}", c.render());
            }
            let _ = writeln!(out, "IM              {}", o.im_reference.render());
            let _ = writeln!(out, "decision        {:?}", o.decision);
            if let Some(res) = &o.residual {
                let _ = writeln!(out, "residual        {}", res.render());
            }
        }
        if let Some(s) = &r.statement {
            let payer = s.payer.as_ref().map_or("none".to_string(), |p| p.to_string());
            let _ = writeln!(
                out,
                "statement       unpaid {} termination amount {} payer {}",
                s.unpaid.render(),
                s.termination_amount.render(),
                payer
            );
        }
        for e in &r.ledger {
            let _ = writeln!(out, "  {} -> {} {} {:?}", e.from, e.to, e.amount.render(), e.purpose);
        }
        if let Some(v) = &r.conservation {
            let _ = writeln!(out, "conservation    {}", if v.passed { "pass" } else { "FAIL" });
            for d in &v.diagnostics {
                let _ = writeln!(out, "  {d}");
            }
        }
        if let Some(e) = &r.error {
            let _ =
                writeln!(out, "error           {:?} at t={} ({}): {}", e.kind, e.tick, e.agent, e.message);
        }
        let _ = writeln!(out, "content hash    {}", self.content_hash);
        if let Some(us) = self.wall_time_us {
            let _ = writeln!(out, "wall time       {us} us");
        }
        out
    }
}
