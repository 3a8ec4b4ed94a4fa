//! COS pricing of currency options, Black inversion and FX quote conventions.
//!
//! For the pair `(i, j)` and expiry `T` the call on `S^{i,j}_T` struck at `K` is
//!
//! ```text
//! C = e^{-r^i T} K Σ'_k Re(φ(ω_k) e^{-iω_k (c1 - L_lo w)}) V_k,   ω_k = kπ / ((L_lo + L_hi) w)
//! ```
//!
//! where `φ` is the characteristic function of `log S^{i,j}_T` under `Q^i`,
//! `w = sqrt(c2 + sqrt(c4))` comes from the cumulants of `log S`, and `V_k` are
//! the cosine coefficients of `(e^x - 1)^+` on `[c1 - log K - L_lo w, c1 - log K + L_hi w]`.
//! Both multipliers start at `L`; see [`CosConfig::parity_tol`] for when they move.
//! The `φ(ω_k)` values are shared by every strike of a tenor.

pub mod black;
pub mod quotes;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use black::{black_price, black_vega, implied_vol, implied_vol_cp, CallPut};
pub use quotes::{
    atm_strike, delta_to_strike, quotes_from_wing_vols, quotes_to_strike_vols, read_quotes_csv, wing_vols,
    write_quotes_csv, DeltaLabel, QuoteSet, StrikeVol, TenorQuote, TenorSmile,
};

use crate::error::{Error, Result};
use crate::fxmarket::{forward, FxModel, LogFxTransform, Pair};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosConfig {
    /// Number of cosine terms (the minimum when `max_terms > num_terms`).
    pub num_terms: usize,
    /// Terms are doubled up to this count while `|φ|` over the last 16 terms
    /// exceeds `tail_tol`. Set equal to `num_terms` for a fixed expansion.
    pub max_terms: usize,
    pub tail_tol: f64,
    /// Truncation multiplier `L`.
    pub range_width: f64,
    pub cumulant_fd_step: f64,
    /// Riccati tolerance for characteristic-function values.
    pub tol: f64,
    /// Riccati tolerance for the real-argument cumulant stencil.
    pub cumulant_tol: f64,
    /// While the expansion's mean of `S_T` misses the forward by more than this
    /// fraction, the lower and upper range multipliers are searched (doubling
    /// either, halving the upper one, or both at once). Zero keeps the
    /// symmetric range.
    #[serde(default = "default_parity_tol")]
    pub parity_tol: f64,
}

fn default_parity_tol() -> f64 {
    1e-11
}

impl Default for CosConfig {
    fn default() -> Self {
        Self {
            num_terms: 256,
            max_terms: 16_384,
            tail_tol: 1e-12,
            range_width: 10.0,
            cumulant_fd_step: 0.05,
            tol: 1e-12,
            cumulant_tol: 1e-13,
            parity_tol: default_parity_tol(),
        }
    }
}

impl CosConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_terms < 16 {
            return Err(Error::InvalidParams(format!(
                "num_terms must be >= 16, got {}",
                self.num_terms
            )));
        }
        if self.max_terms < self.num_terms {
            return Err(Error::InvalidParams(format!(
                "max_terms {} below num_terms {}",
                self.max_terms, self.num_terms
            )));
        }
        if !(self.range_width > 0.0) || !(self.cumulant_fd_step > 0.0) {
            return Err(Error::InvalidParams(
                "range_width and cumulant_fd_step must be positive".into(),
            ));
        }
        if !(self.tol > 0.0) || !(self.cumulant_tol > 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        if !(self.parity_tol >= 0.0) {
            return Err(Error::InvalidParams("parity_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// First, second and fourth cumulants of `log S^{i,j}_T` under `Q^i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cumulants {
    pub c1: f64,
    pub c2: f64,
    pub c4: f64,
}

/// Truncation interval in log-moneyness `log(S_T / K)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationRange {
    pub lower: f64,
    pub upper: f64,
}

const MAX_SHRINKS: usize = 8;

/// Cumulants by central differences of `κ(v) = log E^i[e^{v log S}]` at `v = 0`
/// (seven-point stencils). The step is halved whenever a stencil point leaves
/// the real domain of the transform.
pub fn cumulants_of(tr: &LogFxTransform, t: f64, step: f64, tol: f64) -> Result<Cumulants> {
    if !(step > 0.0) {
        return Err(Error::InvalidParams(format!("cumulant step must be > 0, got {step}")));
    }
    let mut h = step;
    let mut last_err = None;
    for _ in 0..=MAX_SHRINKS {
        let eval = |v: f64| tr.log_mgf(Complex64::new(v, 0.0), t, tol).map(|z| z.re);
        let pts: Result<Vec<f64>> = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0].iter().map(|&n| eval(n * h)).collect();
        match pts {
            Ok(p) => {
                let [m3, m2, m1, p1, p2, p3] = [p[0], p[1], p[2], p[3], p[4], p[5]];
                let c1 = (-m3 + 9.0 * m2 - 45.0 * m1 + 45.0 * p1 - 9.0 * p2 + p3) / (60.0 * h);
                let c2 = (2.0 * m3 - 27.0 * m2 + 270.0 * m1 + 270.0 * p1 - 27.0 * p2 + 2.0 * p3) / (180.0 * h * h);
                let c4 = (-m3 + 12.0 * m2 - 39.0 * m1 - 39.0 * p1 + 12.0 * p2 - p3) / (6.0 * h.powi(4));
                if !(c1.is_finite() && c2.is_finite() && c4.is_finite()) {
                    return Err(Error::Pricing("non-finite cumulants".into()));
                }
                return Ok(Cumulants {
                    c1,
                    c2,
                    c4: c4.max(0.0),
                });
            }
            Err(e) if is_domain_failure(&e) => {
                last_err = Some(e);
                h *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Pricing(format!(
        "cumulant stencil left the transform domain after {MAX_SHRINKS} step reductions: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn is_domain_failure(e: &Error) -> bool {
    match e {
        Error::Domain { .. } | Error::NumericalDomain(_) | Error::Stiffness { .. } => true,
        Error::Factor { source, .. } => is_domain_failure(source),
        _ => false,
    }
}

pub fn cumulants(model: &FxModel, i: usize, j: usize, t: f64, step: f64) -> Result<Cumulants> {
    let tr = LogFxTransform::new(model, Pair::new(i, j))?;
    cumulants_of(&tr, t, step, CosConfig::default().cumulant_tol)
}

impl Cumulants {
    /// Half-width `L * sqrt(c2 + sqrt(c4))` of the truncation range.
    pub fn half_width(&self, range_width: f64) -> Result<f64> {
        let s = self.c2 + self.c4.sqrt();
        if !(s > 0.0) {
            return Err(Error::Pricing(format!(
                "degenerate truncation range: c2 + sqrt(c4) = {s}"
            )));
        }
        Ok(range_width * s.sqrt())
    }

    pub fn range_for_strike(&self, strike: f64, range_width: f64) -> Result<TruncationRange> {
        let hw = self.half_width(range_width)?;
        let centre = self.c1 - strike.ln();
        Ok(TruncationRange {
            lower: centre - hw,
            upper: centre + hw,
        })
    }
}

/// Characteristic-function terms shared by all strikes of one tenor.
#[derive(Clone, Debug)]
pub struct CosExpansion {
    pub cumulants: Cumulants,
    pub expiry: f64,
    pub discount: f64,
    pub forward: f64,
    /// Range offsets from `c1` in log-price.
    lower: f64,
    upper: f64,
    widths: (f64, f64),
    /// `Re(φ(ω_k) e^{-iω_k (c1 + lower)})` with the `k = 0` term halved.
    coeffs: Vec<f64>,
}

const MAX_RANGE_TRIALS: usize = 24;
/// Lowest transform tolerance the range search may use, relative to `tol`.
const MIN_TOL_FACTOR: f64 = 0.01;
/// Relative mean error above which the range search is not attempted.
const HOPELESS_MEAN_ERROR: f64 = 1e-3;

impl CosExpansion {
    pub fn new(model: &FxModel, tr: &LogFxTransform, expiry: f64, config: &CosConfig) -> Result<Self> {
        config.validate()?;
        if !(expiry > 0.0) {
            return Err(Error::InvalidParams(format!("expiry must be > 0, got {expiry}")));
        }
        let cumulants = cumulants_of(tr, expiry, config.cumulant_fd_step, config.cumulant_tol)?;
        let l = config.range_width;
        let mut best = Self::with_cumulants(model, tr, expiry, config, cumulants, (l, l))?;
        let mut best_err = best.mean_error();
        // Range choice refines an expansion; it cannot rescue one this far off.
        if config.parity_tol == 0.0 || !(best_err <= HOPELESS_MEAN_ERROR) {
            return Ok(best);
        }
        // Greedy search: a heavy lower tail wants a wider lower range, while the
        // call integrand grows like e^x, so a long upper range amplifies noise.
        // When no range move helps, the transform tolerance is tightened instead.
        let mut cfg = *config;
        let mut trials = 1;
        while best_err > config.parity_tol && trials < MAX_RANGE_TRIALS {
            let (lo, hi) = best.widths;
            let mut improved = None;
            for w in [(2.0 * lo, hi), (lo, 2.0 * hi), (lo, 0.5 * hi), (2.0 * lo, 0.5 * hi)] {
                if trials >= MAX_RANGE_TRIALS {
                    break;
                }
                trials += 1;
                let Ok(e) = Self::with_cumulants(model, tr, expiry, &cfg, cumulants, w) else {
                    continue;
                };
                let err = e.mean_error();
                if err < improved.as_ref().map_or(best_err, |(_, b)| *b) {
                    improved = Some((e, err));
                }
            }
            if improved.is_none() && cfg.tol > config.tol * MIN_TOL_FACTOR && trials < MAX_RANGE_TRIALS {
                cfg.tol *= 0.1;
                trials += 1;
                if let Ok(e) = Self::with_cumulants(model, tr, expiry, &cfg, cumulants, best.widths) {
                    let err = e.mean_error();
                    if err < best_err {
                        improved = Some((e, err));
                    }
                }
            }
            match improved {
                Some((e, err)) => {
                    best = e;
                    best_err = err;
                }
                None => break,
            }
        }
        Ok(best)
    }

    /// Expansion on `[c1 - lo*s, c1 + hi*s]` with `s = sqrt(c2 + sqrt(c4))`.
    pub fn with_widths(
        model: &FxModel,
        tr: &LogFxTransform,
        expiry: f64,
        config: &CosConfig,
        widths: (f64, f64),
    ) -> Result<Self> {
        config.validate()?;
        let cumulants = cumulants_of(tr, expiry, config.cumulant_fd_step, config.cumulant_tol)?;
        Self::with_cumulants(model, tr, expiry, config, cumulants, widths)
    }

    fn with_cumulants(
        model: &FxModel,
        tr: &LogFxTransform,
        expiry: f64,
        config: &CosConfig,
        cumulants: Cumulants,
        widths: (f64, f64),
    ) -> Result<Self> {
        if !(widths.0 > 0.0 && widths.1 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "range widths must be positive, got {widths:?}"
            )));
        }
        let pair = tr.pair();
        let scale = cumulants.half_width(1.0)?;
        let lower = -widths.0 * scale;
        let upper = widths.1 * scale;
        let shift = cumulants.c1 + lower;
        let span = upper - lower;
        let mut coeffs = Vec::with_capacity(config.num_terms);
        let mut tail = Vec::with_capacity(config.num_terms);
        let mut n = config.num_terms;
        loop {
            for k in coeffs.len()..n {
                let omega = k as f64 * std::f64::consts::PI / span;
                let phi = tr.charfun(omega, expiry, config.tol)?;
                let a = (phi * Complex64::new(0.0, -omega * shift).exp()).re;
                coeffs.push(if k == 0 { 0.5 * a } else { a });
                tail.push(phi.norm());
            }
            let resolved = tail[n - 16..].iter().all(|m| *m <= config.tail_tol);
            if resolved || 2 * n > config.max_terms {
                break;
            }
            n *= 2;
        }
        Ok(Self {
            cumulants,
            expiry,
            discount: (-model.economies[pair.domestic].rate * expiry).exp(),
            forward: forward(model, pair.domestic, pair.foreign, expiry),
            lower,
            upper,
            widths,
            coeffs,
        })
    }

    /// `|E[S_T] / F - 1|` under the truncated expansion. Direct calls and puts
    /// violate parity by exactly this much times the discounted forward.
    pub fn mean_error(&self) -> f64 {
        let f = self.forward;
        let gap = self.raw_price(f, CallPut::Call) - self.raw_price(f, CallPut::Put);
        (gap / (self.discount * f)).abs()
    }

    /// Lower and upper range multipliers actually used.
    pub fn widths(&self) -> (f64, f64) {
        self.widths
    }

    pub fn range_for_strike(&self, strike: f64) -> TruncationRange {
        let centre = self.cumulants.c1 - strike.ln();
        TruncationRange {
            lower: centre + self.lower,
            upper: centre + self.upper,
        }
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// COS price of the call, or of the put integrated from its own payoff.
    fn raw_price(&self, strike: f64, side: CallPut) -> f64 {
        let r = self.range_for_strike(strike);
        let (a, b) = (r.lower, r.upper);
        let (lo, hi) = match side {
            CallPut::Call => (a.max(0.0), b),
            CallPut::Put => (a, b.min(0.0)),
        };
        if hi <= lo {
            return 0.0;
        }
        let span = b - a;
        let mut sum = 0.0;
        for (k, ak) in self.coeffs.iter().enumerate() {
            let omega = k as f64 * std::f64::consts::PI / span;
            let (chi, psi) = chi_psi(omega, a, lo, hi);
            let v = match side {
                CallPut::Call => chi - psi,
                CallPut::Put => psi - chi,
            };
            sum += ak * v;
        }
        self.discount * strike * 2.0 / span * sum
    }

    /// Prices for `strikes`; puts come from parity unless `direct_puts` is set.
    pub fn prices(&self, strikes: &[f64], cp: CallPut, direct_puts: bool) -> Result<Vec<f64>> {
        strikes
            .iter()
            .map(|&k| {
                if !(k > 0.0) || !k.is_finite() {
                    return Err(Error::InvalidParams(format!("strike must be positive, got {k}")));
                }
                let p = match cp {
                    CallPut::Call => self.raw_price(k, CallPut::Call),
                    CallPut::Put if direct_puts => self.raw_price(k, CallPut::Put),
                    CallPut::Put => self.raw_price(k, CallPut::Call) - self.discount * (self.forward - k),
                };
                if !p.is_finite() {
                    return Err(Error::Pricing(format!("non-finite COS price at K={k}")));
                }
                if p < -1e-10 {
                    return Err(Error::Pricing(format!(
                        "negative COS price {p:e} at K={k}, T={}",
                        self.expiry
                    )));
                }
                Ok(p.max(0.0))
            })
            .collect()
    }
}

/// `χ = ∫_c^d e^x cos(ω(x-a)) dx`, `ψ = ∫_c^d cos(ω(x-a)) dx`.
fn chi_psi(omega: f64, a: f64, c: f64, d: f64) -> (f64, f64) {
    let (sd, cd) = (omega * (d - a)).sin_cos();
    let (sc, cc) = (omega * (c - a)).sin_cos();
    let (ed, ec) = (d.exp(), c.exp());
    let chi = (cd * ed - cc * ec + omega * (sd * ed - sc * ec)) / (1.0 + omega * omega);
    let psi = if omega == 0.0 { d - c } else { (sd - sc) / omega };
    (chi, psi)
}

pub fn cos_price(
    model: &FxModel,
    i: usize,
    j: usize,
    expiry: f64,
    strikes: &[f64],
    cp: CallPut,
    config: &CosConfig,
) -> Result<Vec<f64>> {
    let tr = LogFxTransform::new(model, Pair::new(i, j))?;
    CosExpansion::new(model, &tr, expiry, config)?.prices(strikes, cp, false)
}

/// Prices puts from their own payoff (validation mode for the parity check).
pub fn cos_price_direct_puts(
    model: &FxModel,
    i: usize,
    j: usize,
    expiry: f64,
    strikes: &[f64],
    config: &CosConfig,
) -> Result<Vec<f64>> {
    let tr = LogFxTransform::new(model, Pair::new(i, j))?;
    CosExpansion::new(model, &tr, expiry, config)?.prices(strikes, CallPut::Put, true)
}

#[cfg(test)]
mod tests;
