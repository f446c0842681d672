//! Bidder agents: what each script commits and reveals.

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest as _, Sha256};

use super::scenario::{Behavior, BidderScript, StochasticParams};
use crate::auction::{Bid, Salt};
use crate::model::PartyId;
use crate::money::{round_to_cents, Money};

/// Recorded in every run report; change it whenever the draw sequence changes.
pub const RNG_ALGORITHM: &str =
    "chacha20-per-bidder-v1 (rand_chacha 0.9, rand_distr 0.5 StandardNormal ziggurat)";

fn derive(tag: &[u8], seed: u64, bidder: &PartyId) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag);
    h.update(seed.to_be_bytes());
    h.update(bidder.as_str().as_bytes());
    h.finalize().into()
}

/// Independent generator per (scenario seed, bidder id); bidder order never
/// changes the draws.
pub fn bidder_rng(seed: u64, bidder: &PartyId) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive(b"closeout/bidder-rng/v1", seed, bidder))
}

pub fn bidder_salt(seed: u64, bidder: &PartyId) -> Salt {
    Salt(derive(b"closeout/salt/v1", seed, bidder))
}

/// Draws a stochastic bid, or `None` when the bidder sits the auction out.
///
/// The mid is the true value plus Gaussian noise, rounded to cents; the
/// trade quote concedes `trade_spread` below the mid.
pub fn stochastic_bid(bidder: &PartyId, params: &StochasticParams, seed: u64) -> Option<Bid> {
    let mut rng = bidder_rng(seed, bidder);
    let p = params.participation_probability.clamp(0.0, 1.0);
    if !rng.random_bool(p) {
        return None;
    }
    let z: f64 = rng.sample(StandardNormal);
    let sd = params.mid_noise_sd.amount().to_f64().unwrap_or(0.0);
    let noise = BigRational::from_float(sd * z).unwrap_or_default();
    let mid = Money::new(round_to_cents(&(params.true_value.amount() + noise)), params.true_value.currency());
    let trade = mid.checked_sub(&params.trade_spread).expect("scenario amounts share one currency");
    Some(Bid { bidder: bidder.clone(), mid, trade: Some(trade), salt: bidder_salt(seed, bidder) })
}

/// What a bidder commits to and what it later reveals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BidderPlan {
    pub committed: Bid,
    pub revealed: Option<Bid>,
}

pub fn plan(script: &BidderScript, seed: u64) -> Option<BidderPlan> {
    let salt = bidder_salt(seed, &script.id);
    let bid = |mid: &Money, trade: &Option<Money>| Bid {
        bidder: script.id.clone(),
        mid: mid.clone(),
        trade: trade.clone(),
        salt,
    };
    match &script.behavior {
        Behavior::Scripted { mid, trade } => {
            let b = bid(mid, trade);
            Some(BidderPlan { committed: b.clone(), revealed: Some(b) })
        }
        Behavior::Stochastic(params) => stochastic_bid(&script.id, params, seed)
            .map(|b| BidderPlan { committed: b.clone(), revealed: Some(b) }),
        Behavior::NoReveal { mid, trade } => Some(BidderPlan { committed: bid(mid, trade), revealed: None }),
        Behavior::TamperedReveal { mid, trade, revealed_mid } => {
            Some(BidderPlan { committed: bid(mid, trade), revealed: Some(bid(revealed_mid, trade)) })
        }
    }
}
