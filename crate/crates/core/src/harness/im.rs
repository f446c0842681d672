//! Closed-form initial margin: a normal quantile scaled by volatility,
//! square-root-of-time and notional.

use num_rational::BigRational;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::money::{round_to_cents, Money};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImError {
    #[error("confidence must lie strictly between 0 and 1, got {0}")]
    Confidence(f64),
    #[error("horizon must be at least one day")]
    Horizon,
    #[error("volatility must be non-negative and finite, got {0}")]
    Volatility(f64),
    #[error("notional must be non-negative")]
    Notional,
}

/// Inverse of the standard normal CDF.
///
/// Wichura's AS 241 (PPND16) rational approximation, relative accuracy
/// about 1e-16 over (0, 1).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p out of range: {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// z(confidence) × daily_volatility × √horizon × notional, rounded to cents.
pub fn simple_im(
    daily_volatility: f64,
    notional: &Money,
    confidence: f64,
    horizon_days: u32,
) -> Result<Money, ImError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(ImError::Confidence(confidence));
    }
    if horizon_days == 0 {
        return Err(ImError::Horizon);
    }
    if !(daily_volatility.is_finite() && daily_volatility >= 0.0) {
        return Err(ImError::Volatility(daily_volatility));
    }
    if notional.is_negative() {
        return Err(ImError::Notional);
    }
    let z = if confidence == 0.5 { 0.0 } else { normal_quantile(confidence) };
    let scale = z * daily_volatility * f64::from(horizon_days).sqrt();
    let notional_f = notional.amount().to_f64().unwrap_or(f64::INFINITY);
    let raw = BigRational::from_float(scale * notional_f).unwrap_or_default();
    Ok(Money::new(round_to_cents(&raw), notional.currency()))
}
