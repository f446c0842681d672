//! Hash commitments for sealed bids.
//!
//! Canonical encoding, all integers big-endian:
//!
//! ```text
//! "closeout/bid/v1"
//! u32 len ‖ bidder id (UTF-8)
//! u32 len ‖ mid numerator (two's complement) ‖ u32 len ‖ mid denominator
//! u8 presence (0 = no trade quote, 1 = present)
//! [u32 len ‖ trade numerator ‖ u32 len ‖ trade denominator]   if present
//! 32-byte salt
//! ```
//!
//! The digest is SHA-256 over that encoding.

use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::model::{PartyId, Tick};
use crate::money::Money;

const DOMAIN_TAG: &[u8] = b"closeout/bid/v1";

macro_rules! hex_bytes32 {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; 32]);

        impl $name {
            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
                let mut out = [0u8; 32];
                hex::decode_to_slice(s, &mut out)?;
                Ok($name(out))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_bytes32!(Salt);
hex_bytes32!(Digest);

/// A bidder's quote for the whole portfolio, valued from the defaulting
/// party's side. `mid` is mandatory, `trade` only if the bidder will trade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bid {
    pub bidder: PartyId,
    pub mid: Money,
    pub trade: Option<Money>,
    pub salt: Salt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidCommitment {
    pub bidder: PartyId,
    pub digest: Digest,
    pub committed_at: Tick,
}

impl BidCommitment {
    pub fn for_bid(bid: &Bid, committed_at: Tick) -> Self {
        BidCommitment { bidder: bid.bidder.clone(), digest: bid.digest(), committed_at }
    }
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn put_rational(out: &mut Vec<u8>, value: &BigRational) {
    put_bytes(out, &value.numer().to_signed_bytes_be());
    put_bytes(out, &value.denom().to_signed_bytes_be());
}

impl Bid {
    pub fn canonical_encoding(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128);
        out.extend_from_slice(DOMAIN_TAG);
        put_bytes(&mut out, self.bidder.as_str().as_bytes());
        put_rational(&mut out, self.mid.amount());
        match &self.trade {
            None => out.push(0),
            Some(trade) => {
                out.push(1);
                put_rational(&mut out, trade.amount());
            }
        }
        out.extend_from_slice(&self.salt.0);
        out
    }

    pub fn digest(&self) -> Digest {
        Digest(Sha256::digest(self.canonical_encoding()).into())
    }

    pub fn opens(&self, commitment: &BidCommitment) -> bool {
        commitment.bidder == self.bidder && commitment.digest == self.digest()
    }
}
