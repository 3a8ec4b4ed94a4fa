//! Black (Garman–Kohlhagen) forward formula and its inversion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_pdf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallPut {
    Call,
    Put,
}

impl CallPut {
    pub fn sign(self) -> f64 {
        match self {
            CallPut::Call => 1.0,
            CallPut::Put => -1.0,
        }
    }
}

/// Undiscounted-forward Black price `df * E[(±(F_T - K))^+]`.
pub fn black_price(forward: f64, strike: f64, expiry: f64, vol: f64, df: f64, cp: CallPut) -> f64 {
    let w = cp.sign();
    let intrinsic = (w * (forward - strike)).max(0.0);
    let sd = vol * expiry.sqrt();
    if sd <= 0.0 || strike <= 0.0 {
        return df * intrinsic;
    }
    let d1 = (forward / strike).ln() / sd + 0.5 * sd;
    let d2 = d1 - sd;
    df * w * (forward * norm_cdf(w * d1) - strike * norm_cdf(w * d2))
}

pub fn black_vega(forward: f64, strike: f64, expiry: f64, vol: f64, df: f64) -> f64 {
    let sd = vol * expiry.sqrt();
    if sd <= 0.0 {
        return 0.0;
    }
    let d1 = (forward / strike).ln() / sd + 0.5 * sd;
    df * forward * norm_pdf(d1) * expiry.sqrt()
}

const VOL_CAP: f64 = 50.0;
const VEGA_FLOOR: f64 = 1e-12;

/// Implied volatility of a call price.
pub fn implied_vol(price: f64, forward: f64, strike: f64, expiry: f64, df: f64) -> Result<f64> {
    implied_vol_cp(price, forward, strike, expiry, df, CallPut::Call)
}

/// Implied volatility by bracketed bisection to `1e-4` then safeguarded Newton.
pub fn implied_vol_cp(price: f64, forward: f64, strike: f64, expiry: f64, df: f64, cp: CallPut) -> Result<f64> {
    if !(forward > 0.0 && strike > 0.0 && expiry > 0.0 && df > 0.0) || !price.is_finite() {
        return Err(Error::Pricing(format!(
            "implied vol inputs invalid: price={price}, F={forward}, K={strike}, T={expiry}, df={df}"
        )));
    }
    let intrinsic = df * (cp.sign() * (forward - strike)).max(0.0);
    let upper = match cp {
        CallPut::Call => df * forward,
        CallPut::Put => df * strike,
    };
    let scale = df * forward.max(strike);
    if price >= upper {
        return Err(Error::Pricing(format!(
            "price {price} at or above the no-arbitrage upper bound {upper}"
        )));
    }
    if price < intrinsic - 1e-12 * scale {
        return Err(Error::Pricing(format!(
            "price {price} below intrinsic value {intrinsic}"
        )));
    }
    if price <= intrinsic {
        return Ok(0.0);
    }
    // Invert the out-of-the-money side: parity is exact in Black, and the
    // OTM price carries no intrinsic value to swamp the time value.
    let (target, side) = match cp {
        CallPut::Call if strike < forward => (price - df * (forward - strike), CallPut::Put),
        CallPut::Put if strike > forward => (price + df * (forward - strike), CallPut::Call),
        _ => (price, cp),
    };
    let f = |v: f64| black_price(forward, strike, expiry, v, df, side) - target;

    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > VOL_CAP {
            return Err(Error::Pricing(format!("implied vol above {VOL_CAP} for price {price}")));
        }
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut v = 0.5 * (lo + hi);
    for _ in 0..100 {
        let fv = f(v);
        if fv == 0.0 {
            return Ok(v);
        }
        if fv < 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let vega = black_vega(forward, strike, expiry, v, df).max(VEGA_FLOOR);
        let mut next = v - fv / vega;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - v).abs() <= 4.0 * f64::EPSILON * v || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        v = next;
    }
    Ok(v)
}
