//! Multi-currency market driven by independent CBITCL factors.
//!
//! Each economy `i` carries a short rate `r^i`, exposures `(ζ^i, λ^i)` and an
//! artificial spot `S^{0,i}_0`. The artificial rate is
//!
//! ```text
//! S^{0,i}_t = S^{0,i}_0 exp(-r^i t + Σ_k ζ^i_k (X^k_t - X^k_0) + λ^i_k Z^k_t - K^{i,k}_t)
//! ```
//!
//! with `K^{i,k}_t = t Ψ^k(ζ^i_k) + Y^k_t (Φ^k(ζ^i_k) + Ξ^k(λ^i_k))`, and
//! `S^{i,j} = S^{0,j} / S^{0,i}` is the price of one unit of currency `j` in
//! units of currency `i`. A market pair written `"USD-JPY"` is `S^{JPY,USD}`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::affine::RiccatiSolver;
use crate::error::{Error, Result};
use crate::mechanisms::{transform_params, CbitclParams, Mechanisms};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconomyParams {
    pub currency: String,
    pub rate: f64,
    pub zeta: Vec<f64>,
    pub lambda: Vec<f64>,
    #[serde(alias = "s0_artificial")]
    pub s0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FxModel {
    pub factors: Vec<CbitclParams>,
    pub economies: Vec<EconomyParams>,
    pub horizon: f64,
}

/// Ordered currency pair: `S^{domestic, foreign}`, quoted as `FOREIGN-DOMESTIC`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub domestic: usize,
    pub foreign: usize,
}

impl Pair {
    pub fn new(domestic: usize, foreign: usize) -> Self {
        Self { domestic, foreign }
    }

    pub fn inverse(self) -> Self {
        Self::new(self.foreign, self.domestic)
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.foreign, self.domestic)
    }
}

impl FxModel {
    pub fn new(factors: Vec<CbitclParams>, economies: Vec<EconomyParams>, horizon: f64) -> Result<Self> {
        let m = Self {
            factors,
            economies,
            horizon,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn n_economies(&self) -> usize {
        self.economies.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.economies.len() < 2 {
            return Err(Error::InvalidParams("at least two economies required".into()));
        }
        if self.factors.is_empty() {
            return Err(Error::InvalidParams("at least one factor required".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParams(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        for (k, f) in self.factors.iter().enumerate() {
            f.validate().map_err(|e| e.in_factor(k))?;
        }
        let d = self.factors.len();
        for (n, e) in self.economies.iter().enumerate() {
            if self.economies[..n].iter().any(|o| o.currency == e.currency) {
                return Err(Error::InvalidParams(format!("duplicate currency code {}", e.currency)));
            }
            if e.zeta.len() != d || e.lambda.len() != d {
                return Err(Error::InvalidParams(format!(
                    "economy {} has {} zeta / {} lambda entries for {d} factors",
                    e.currency,
                    e.zeta.len(),
                    e.lambda.len()
                )));
            }
            if !(e.s0 > 0.0) || !e.s0.is_finite() || !e.rate.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "economy {}: s0 must be positive and rate finite",
                    e.currency
                )));
            }
            self.measure_transformed_factors(n)?;
        }
        Ok(())
    }

    pub fn index_of(&self, currency: &str) -> Result<usize> {
        self.economies
            .iter()
            .position(|e| e.currency == currency)
            .ok_or_else(|| Error::Data(format!("unknown currency {currency}")))
    }

    /// Parses a market pair `"FOR-DOM"` (e.g. `"USD-JPY"`).
    pub fn pair(&self, code: &str) -> Result<Pair> {
        let (foreign, domestic) = code
            .split_once(['-', '/'])
            .ok_or_else(|| Error::Data(format!("pair `{code}` is not of the form FOR-DOM")))?;
        Ok(Pair::new(self.index_of(domestic)?, self.index_of(foreign)?))
    }

    pub fn pair_code(&self, pair: Pair) -> String {
        format!(
            "{}-{}",
            self.economies[pair.foreign].currency, self.economies[pair.domestic].currency
        )
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.economies.len() {
            return Err(Error::InvalidParams(format!(
                "economy index {i} out of range (N = {})",
                self.economies.len()
            )));
        }
        Ok(())
    }

    /// Per-factor parameters under the risk-neutral measure of economy `i`.
    pub fn measure_transformed_factors(&self, i: usize) -> Result<Vec<CbitclParams>> {
        self.check_index(i)?;
        let e = &self.economies[i];
        self.factors
            .iter()
            .enumerate()
            .map(|(k, f)| {
                transform_params(f, e.zeta[k], e.lambda[k]).map_err(|err| err.in_factor(k).in_economy(&e.currency))
            })
            .collect()
    }

    /// Model under the risk-neutral measure of economy `i`, re-expressed with the
    /// base measure: factors transformed and every exposure shifted by `-(ζ^i, λ^i)`.
    pub fn under_measure(&self, i: usize) -> Result<FxModel> {
        let factors = self.measure_transformed_factors(i)?;
        let base = &self.economies[i];
        let economies = self
            .economies
            .iter()
            .map(|e| EconomyParams {
                currency: e.currency.clone(),
                rate: e.rate,
                zeta: e.zeta.iter().zip(&base.zeta).map(|(a, b)| a - b).collect(),
                lambda: e.lambda.iter().zip(&base.lambda).map(|(a, b)| a - b).collect(),
                s0: e.s0,
            })
            .collect();
        Ok(FxModel {
            factors,
            economies,
            horizon: self.horizon,
        })
    }
}

pub fn fx_spot(model: &FxModel, i: usize, j: usize) -> f64 {
    if i == j {
        return 1.0;
    }
    model.economies[j].s0 / model.economies[i].s0
}

pub fn forward(model: &FxModel, i: usize, j: usize, t: f64) -> f64 {
    fx_spot(model, i, j) * ((model.economies[i].rate - model.economies[j].rate) * t).exp()
}

pub fn measure_transformed_factors(model: &FxModel, i: usize) -> Result<Vec<CbitclParams>> {
    model.measure_transformed_factors(i)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharFunInput {
    pub i: usize,
    pub j: usize,
    pub u: f64,
    pub t: f64,
}

#[derive(Clone, Debug)]
struct FactorLeg {
    solver: RiccatiSolver,
    x0: f64,
    dzeta: f64,
    dy: f64,
    dlambda: f64,
    dpsi: f64,
}

/// Moment generating function of `log S^{i,j}_t` under `Q^i`, with the
/// per-factor Riccati solvers built once.
#[derive(Clone, Debug)]
pub struct LogFxTransform {
    pair: Pair,
    log_s0: f64,
    rate_diff: f64,
    horizon: f64,
    legs: Vec<FactorLeg>,
}

impl LogFxTransform {
    pub fn new(model: &FxModel, pair: Pair) -> Result<Self> {
        let (i, j) = (pair.domestic, pair.foreign);
        model.check_index(i)?;
        model.check_index(j)?;
        let q_i = model.measure_transformed_factors(i)?;
        let (ei, ej) = (&model.economies[i], &model.economies[j]);
        let mut legs = Vec::with_capacity(model.factors.len());
        for (k, (f, fi)) in model.factors.iter().zip(q_i).enumerate() {
            let build = || -> Result<FactorLeg> {
                let m = Mechanisms::new(f)?;
                let (zi, zj, li, lj) = (ei.zeta[k], ej.zeta[k], ei.lambda[k], ej.lambda[k]);
                Ok(FactorLeg {
                    solver: RiccatiSolver::new(&fi)?,
                    x0: f.x0,
                    dzeta: zj - zi,
                    dy: m.phi_real(zi)? + m.xi_real(li)? - m.phi_real(zj)? - m.xi_real(lj)?,
                    dlambda: lj - li,
                    dpsi: m.psi_real(zi)? - m.psi_real(zj)?,
                })
            };
            legs.push(build().map_err(|e| e.in_factor(k))?);
        }
        Ok(Self {
            pair,
            log_s0: fx_spot(model, i, j).ln(),
            rate_diff: ei.rate - ej.rate,
            horizon: model.horizon,
            legs,
        })
    }

    pub fn pair(&self) -> Pair {
        self.pair
    }

    pub fn log_forward(&self, t: f64) -> f64 {
        self.log_s0 + self.rate_diff * t
    }

    /// `log E^i[exp(w log S^{i,j}_t)]` for complex `w`.
    pub fn log_mgf(&self, w: Complex64, t: f64, tol: f64) -> Result<Complex64> {
        if !(t >= 0.0) || t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::InvalidParams(format!("t = {t} outside [0, {}]", self.horizon)));
        }
        if self.pair.domestic == self.pair.foreign || w == Complex64::new(0.0, 0.0) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let mut acc = w * (self.log_s0 + self.rate_diff * t);
        for (k, leg) in self.legs.iter().enumerate() {
            let u1 = w * leg.dzeta;
            let input = crate::affine::RiccatiInput::new(u1, w * leg.dy, w * leg.dlambda, t);
            let (v, u) = leg.solver.terminal(&input, tol).map_err(|e| e.in_factor(k))?;
            acc += w * (leg.dpsi * t) + u + (v - u1) * leg.x0;
        }
        Ok(acc)
    }

    pub fn charfun(&self, u: f64, t: f64, tol: f64) -> Result<Complex64> {
        if u == 0.0 {
            return Ok(Complex64::new(1.0, 0.0));
        }
        Ok(self.log_mgf(Complex64::new(0.0, u), t, tol)?.exp())
    }
}

/// `E^i[exp(iu log S^{i,j}_t)]`.
pub fn log_fx_charfun(model: &FxModel, input: &CharFunInput, tol: f64) -> Result<Complex64> {
    if input.i == input.j || input.u == 0.0 {
        model.check_index(input.i)?;
        model.check_index(input.j)?;
        return Ok(Complex64::new(1.0, 0.0));
    }
    LogFxTransform::new(model, Pair::new(input.i, input.j))?.charfun(input.u, input.t, tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub pair: Pair,
    pub times: Vec<f64>,
    pub model_mean: Vec<f64>,
    pub forward: Vec<f64>,
    pub rel_gap: Vec<f64>,
    pub max_gap: f64,
}

/// Compares `E^i[S^{i,j}_t]` from the transform at `w = 1` with the forward.
pub fn martingale_drift_check(
    model: &FxModel,
    i: usize,
    j: usize,
    times: &[f64],
    tol: f64,
) -> Result<MartingaleReport> {
    let tr = LogFxTransform::new(model, Pair::new(i, j))?;
    let mut report = MartingaleReport {
        pair: Pair::new(i, j),
        times: times.to_vec(),
        model_mean: Vec::new(),
        forward: Vec::new(),
        rel_gap: Vec::new(),
        max_gap: 0.0,
    };
    for &t in times {
        let log_mean = tr.log_mgf(Complex64::new(1.0, 0.0), t, tol)?.re;
        let log_fwd = tr.log_forward(t);
        let gap = (log_mean - log_fwd).exp_m1().abs();
        report.model_mean.push(log_mean.exp());
        report.forward.push(forward(model, i, j, t));
        report.rel_gap.push(gap);
        report.max_gap = report.max_gap.max(gap);
    }
    Ok(report)
}
