//! Exact monetary amounts.
//!
//! Amounts are unbounded rationals. Nothing is rounded until a value is
//! rendered, and rendering always produces exactly two decimal places with
//! half-away-from-zero rounding.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoneyError {
    #[error("currency mismatch: {0} vs {1}")]
    CurrencyMismatch(Currency, Currency),
    #[error("invalid currency code {0:?}")]
    InvalidCurrency(String),
    #[error("invalid amount {0:?}")]
    InvalidAmount(String),
    #[error("division by zero")]
    DivisionByZero,
}

/// ISO-style three letter currency code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Currency([u8; 3]);

impl Currency {
    pub const USD: Currency = Currency(*b"USD");

    pub fn new(code: &str) -> Result<Self, MoneyError> {
        let bytes = code.as_bytes();
        if bytes.len() != 3 || !bytes.iter().all(u8::is_ascii_uppercase) {
            return Err(MoneyError::InvalidCurrency(code.to_string()));
        }
        Ok(Currency([bytes[0], bytes[1], bytes[2]]))
    }

    pub fn as_str(&self) -> &str {
        // Constructed only from ASCII uppercase.
        std::str::from_utf8(&self.0).expect("ascii currency code")
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Currency {
    type Err = MoneyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Currency::new(s)
    }
}

impl Serialize for Currency {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Currency {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Currency::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses a signed decimal ("-12.345", "+3", "0.5") or a fraction ("275/3").
pub fn parse_rational(text: &str) -> Result<BigRational, MoneyError> {
    let bad = || MoneyError::InvalidAmount(text.to_string());
    let s = text.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    let (negative, digits) = match s.as_bytes().first() {
        Some(b'-') => (true, &s[1..]),
        Some(b'+') => (false, &s[1..]),
        _ => (false, s),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let mantissa: BigInt = format!("{int_part}{frac_part}").parse().map_err(|_| bad())?;
    let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
    let value = BigRational::new(mantissa, scale);
    Ok(if negative { -value } else { value })
}

/// Rounds to whole cents, half away from zero.
pub fn round_to_cents(value: &BigRational) -> BigRational {
    let hundred = BigRational::from_integer(BigInt::from(100));
    (value * &hundred).round() / hundred
}

/// Two-decimal rendering, half away from zero, no negative zero.
pub fn render_rational(value: &BigRational) -> String {
    let cents = (value * BigRational::from_integer(BigInt::from(100))).round().to_integer();
    let negative = cents.is_negative();
    let abs = cents.abs();
    let hundred = BigInt::from(100);
    let whole = &abs / &hundred;
    let frac = (&abs % &hundred).to_u32().unwrap_or(0);
    format!("{}{}.{:02}", if negative { "-" } else { "" }, whole, frac)
}

/// An exact amount in a single currency.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Money {
    amount: BigRational,
    currency: Currency,
}

impl Money {
    pub fn new(amount: BigRational, currency: Currency) -> Self {
        Money { amount, currency }
    }

    pub fn zero(currency: Currency) -> Self {
        Money::new(BigRational::zero(), currency)
    }

    pub fn from_cents(cents: i64, currency: Currency) -> Self {
        Money::new(BigRational::new(BigInt::from(cents), BigInt::from(100)), currency)
    }

    pub fn parse(text: &str, currency: Currency) -> Result<Self, MoneyError> {
        Ok(Money::new(parse_rational(text)?, currency))
    }

    pub fn amount(&self) -> &BigRational {
        &self.amount
    }

    pub fn currency(&self) -> Currency {
        self.currency
    }

    pub fn is_zero(&self) -> bool {
        self.amount.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.amount.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.amount.is_negative()
    }

    pub fn abs(&self) -> Money {
        Money::new(self.amount.abs(), self.currency)
    }

    fn same_currency(&self, other: &Money) -> Result<(), MoneyError> {
        if self.currency != other.currency {
            return Err(MoneyError::CurrencyMismatch(self.currency, other.currency));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Money) -> Result<Money, MoneyError> {
        self.same_currency(other)?;
        Ok(Money::new(&self.amount + &other.amount, self.currency))
    }

    pub fn checked_sub(&self, other: &Money) -> Result<Money, MoneyError> {
        self.same_currency(other)?;
        Ok(Money::new(&self.amount - &other.amount, self.currency))
    }

    pub fn checked_cmp(&self, other: &Money) -> Result<Ordering, MoneyError> {
        self.same_currency(other)?;
        Ok(self.amount.cmp(&other.amount))
    }

    pub fn mul_scalar(&self, factor: &BigRational) -> Money {
        Money::new(&self.amount * factor, self.currency)
    }

    pub fn mul_int(&self, factor: i64) -> Money {
        Money::new(&self.amount * BigInt::from(factor), self.currency)
    }

    pub fn div_int(&self, divisor: i64) -> Result<Money, MoneyError> {
        if divisor == 0 {
            return Err(MoneyError::DivisionByZero);
        }
        Ok(Money::new(&self.amount / BigInt::from(divisor), self.currency))
    }

    pub fn round_to_cents(&self) -> Money {
        Money::new(round_to_cents(&self.amount), self.currency)
    }

    /// Exact sum; an empty iterator sums to zero in `currency`.
    pub fn sum<'a, I>(items: I, currency: Currency) -> Result<Money, MoneyError>
    where
        I: IntoIterator<Item = &'a Money>,
    {
        items.into_iter().try_fold(Money::zero(currency), |acc, m| acc.checked_add(m))
    }

    /// Two-decimal rendering of the amount without the currency.
    pub fn render(&self) -> String {
        render_rational(&self.amount)
    }

    /// Exact "num/den" form, or a plain integer when the denominator is 1.
    pub fn exact(&self) -> String {
        if self.amount.is_integer() {
            self.amount.numer().to_string()
        } else {
            format!("{}/{}", self.amount.numer(), self.amount.denom())
        }
    }
}

impl std::ops::Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money::new(-self.amount, self.currency)
    }
}

impl std::ops::Neg for &Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money::new(-&self.amount, self.currency)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.render(), self.currency)
    }
}

#[derive(Serialize, Deserialize)]
struct MoneyRepr {
    value: String,
    exact: String,
    currency: Currency,
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MoneyRepr { value: self.render(), exact: self.exact(), currency: self.currency }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = MoneyRepr::deserialize(d)?;
        let amount = parse_rational(&repr.exact).map_err(serde::de::Error::custom)?;
        Ok(Money::new(amount, repr.currency))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn usd(s: &str) -> Money {
        Money::parse(s, Currency::USD).unwrap()
    }

    #[test]
    fn renders_thirds_at_two_decimals() {
        let q = usd("275").div_int(3).unwrap();
        assert_eq!(q.render(), "91.67");
        assert_eq!(q.exact(), "275/3");
        assert_eq!(usd("280").div_int(3).unwrap().render(), "93.33");
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(usd("0.005").render(), "0.01");
        assert_eq!(usd("-0.005").render(), "-0.01");
        assert_eq!(usd("2.345").render(), "2.35");
        assert_eq!(usd("-2.345").render(), "-2.35");
        assert_eq!(usd("-0.004").render(), "0.00");
        assert_eq!(usd("1234567.999").render(), "1234568.00");
    }

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(usd("-15").render(), "-15.00");
        assert_eq!(usd("+.5").render(), "0.50");
        assert_eq!(usd("20/3").exact(), "20/3");
        assert!(Money::parse("1.2.3", Currency::USD).is_err());
        assert!(Money::parse("", Currency::USD).is_err());
        assert!(Money::parse("1/0", Currency::USD).is_err());
        assert!(Money::parse("12a", Currency::USD).is_err());
    }

    #[test]
    fn mixing_currencies_is_rejected() {
        let eur = Money::parse("1", Currency::new("EUR").unwrap()).unwrap();
        assert!(matches!(usd("1").checked_add(&eur), Err(MoneyError::CurrencyMismatch(..))));
        assert!(usd("1").checked_sub(&eur).is_err());
        assert!(usd("1").checked_cmp(&eur).is_err());
        assert!(Money::sum([usd("1"), eur].iter(), Currency::USD).is_err());
    }

    #[test]
    fn currency_codes_validated() {
        assert!(Currency::new("usd").is_err());
        assert!(Currency::new("USDX").is_err());
        assert_eq!(Currency::new("JPY").unwrap().to_string(), "JPY");
    }

    #[test]
    fn serde_keeps_exact_value() {
        let q = usd("275/3");
        let json = serde_json::to_string(&q).unwrap();
        assert_eq!(json, r#"{"value":"91.67","exact":"275/3","currency":"USD"}"#);
        let back: Money = serde_json::from_str(&json).unwrap();
        assert_eq!(back, q);
    }

    fn arb_money() -> impl Strategy<Value = Money> {
        (any::<i64>(), 1i64..10_000)
            .prop_map(|(n, d)| Money::new(BigRational::new(BigInt::from(n), BigInt::from(d)), Currency::USD))
    }

    proptest! {
        #[test]
        fn addition_is_associative_and_commutative(a in arb_money(), b in arb_money(), c in arb_money()) {
            let ab_c = a.checked_add(&b).unwrap().checked_add(&c).unwrap();
            let a_bc = a.checked_add(&b.checked_add(&c).unwrap()).unwrap();
            prop_assert_eq!(&ab_c, &a_bc);
            prop_assert_eq!(a.checked_add(&b).unwrap(), b.checked_add(&a).unwrap());
            prop_assert_eq!(a.checked_sub(&a).unwrap(), Money::zero(Currency::USD));
            prop_assert_eq!(a.mul_int(3).div_int(3).unwrap(), a.clone());
        }

        #[test]
        fn render_parse_loses_at_most_half_a_cent(a in arb_money()) {
            let before = a.clone();
            let rendered = a.render();
            prop_assert_eq!(&a, &before);
            let back = Money::parse(&rendered, Currency::USD).unwrap();
            let err = back.checked_sub(&a).unwrap().abs();
            prop_assert!(err.amount() <= &BigRational::new(BigInt::from(1), BigInt::from(200)));
        }
    }
}
