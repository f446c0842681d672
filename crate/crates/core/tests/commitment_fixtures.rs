//! Digests recorded by an independent implementation of the bid encoding.

use closeout_core::auction::{Bid, Digest, Salt};
use closeout_core::model::PartyId;
use closeout_core::{Currency, Money};
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    bidder: String,
    mid: String,
    trade: Option<String>,
    salt: String,
    digest: String,
}

fn cases() -> Vec<Case> {
    serde_json::from_str(include_str!("fixtures/commitments.json")).unwrap()
}

fn bid(c: &Case) -> Bid {
    Bid {
        bidder: PartyId::new(&c.bidder),
        mid: Money::parse(&c.mid, Currency::USD).unwrap(),
        trade: c.trade.as_ref().map(|t| Money::parse(t, Currency::USD).unwrap()),
        salt: Salt::from_hex(&c.salt).unwrap(),
    }
}

#[test]
fn digests_match_fixture() {
    let cases = cases();
    assert!(cases.len() >= 5);
    for c in &cases {
        assert_eq!(bid(c).digest().to_hex(), c.digest, "bidder {}", c.bidder);
    }
}

#[test]
fn equal_values_in_different_notation_commit_identically() {
    let c = &cases()[0];
    let mut b = bid(c);
    b.mid = Money::parse("100", Currency::USD).unwrap();
    assert_eq!(b.digest(), Digest::from_hex(&c.digest).unwrap());
    b.mid = Money::parse("200/2", Currency::USD).unwrap();
    assert_eq!(b.digest(), Digest::from_hex(&c.digest).unwrap());
}

#[test]
fn bid_round_trips_through_json() {
    for c in cases() {
        let b = bid(&c);
        let back: Bid = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(back.digest(), b.digest());
    }
}
