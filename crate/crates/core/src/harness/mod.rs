//! Deterministic multi-agent harness: scenario files, bidder agents, the
//! tick-driven run loop, reports and the toy IM calculator.

mod bidders;
mod engine;
mod im;
mod report;
mod scenario;

pub use bidders::{bidder_rng, bidder_salt, plan, stochastic_bid, BidderPlan, RNG_ALGORITHM};
pub use engine::{
    compare_expected, im_progression, run, run_table1, run_timed, sweep, table1_path, Mismatch, SweepError,
    SweepRow, Table1Row, TABLE1_ROWS,
};
pub use im::{normal_quantile, simple_im, ImError};
pub use report::{
    AuctionTranscript, Balance, ErrorKind, ReportBody, RunError, RunReport, REPORT_SCHEMA_VERSION,
};
pub use scenario::{
    load_scenario, parse_scenario, scripted_quotes, Behavior, BidderScript, EventSpec, Expected, FieldError,
    Scenario, ScenarioError, StochasticParams, SCHEMA_VERSION,
};
