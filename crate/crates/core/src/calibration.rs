//! Least-squares calibration of the full model to implied-volatility surfaces
//! on an FX triangle.
//!
//! The unknowns live in a [`ParamVector`]: every scalar of the model under a
//! stable name, each with a free flag and a transform to unconstrained
//! coordinates (log for positive quantities, logit for the stability and
//! activity indices). Exposures are left untransformed; inadmissible points
//! make every cell fail and so receive the penalty residual.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fxmarket::{forward, FxModel, LogFxTransform, Pair};
use crate::mechanisms::JumpFamily;
use crate::pricing::{
    implied_vol, quotes, quotes_from_wing_vols, quotes_to_strike_vols, CallPut, CosConfig, CosExpansion, DeltaLabel,
    QuoteSet, TenorQuote,
};
use crate::{Error, Result};

/// Residual assigned to a cell whose price or implied vol cannot be computed.
pub const FAILED_CELL_PENALTY: f64 = 1.0;

/// Tenors of the standard grid: 1w, 2w, 1m, 3m, 6m, 1y.
pub const STANDARD_TENORS: [f64; 6] = [
    7.0 / 365.0,
    14.0 / 365.0,
    30.0 / 365.0,
    91.0 / 365.0,
    182.0 / 365.0,
    1.0,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
    Logit { lo: f64, hi: f64 },
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logit { lo, hi } => {
                let s = (x - lo) / (hi - lo);
                (s / (1.0 - s)).ln()
            }
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Log => y.exp(),
            Transform::Logit { lo, hi } => {
                // written to keep the endpoints exclusive for large |y|
                if y >= 0.0 {
                    lo + (hi - lo) / (1.0 + (-y).exp())
                } else {
                    let e = y.exp();
                    lo + (hi - lo) * e / (1.0 + e)
                }
            }
        }
    }

    fn admits(self, x: f64) -> bool {
        match self {
            Transform::Identity => x.is_finite(),
            Transform::Log => x > 0.0 && x.is_finite(),
            Transform::Logit { lo, hi } => x > lo && x < hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: f64,
    pub free: bool,
    pub transform: Transform,
}

/// Flattened model parameters. The template supplies everything that is not
/// a parameter (currencies, rates, spots, horizon, jump families).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub entries: Vec<ParamEntry>,
    pub template: FxModel,
}

fn entry(name: String, value: f64, transform: Transform) -> ParamEntry {
    ParamEntry {
        free: transform.admits(value),
        name,
        value,
        transform,
    }
}

const INDEX: Transform = Transform::Logit { lo: 1.0, hi: 2.0 };

impl ParamVector {
    /// All scalars of `model`. Entries whose value sits on the boundary of
    /// their transform (e.g. `beta = 0`) start frozen.
    pub fn from_model(model: &FxModel) -> Result<Self> {
        model.validate()?;
        let mut entries = Vec::new();
        for (k, f) in model.factors.iter().enumerate() {
            let p = |s: &str| format!("f{k}.{s}");
            entries.push(entry(p("x0"), f.x0, Transform::Log));
            entries.push(entry(p("beta"), f.immigration.beta, Transform::Log));
            entries.push(entry(p("b"), f.branching.b, Transform::Identity));
            entries.push(entry(p("sigma"), f.branching.sigma, Transform::Identity));
            if f.branching.eta > 0.0 {
                entries.push(entry(p("eta"), f.branching.eta, Transform::Log));
                entries.push(entry(p("theta"), f.branching.theta, Transform::Log));
                entries.push(entry(p("alpha"), f.branching.alpha, INDEX));
            }
            entries.push(entry(p("drift"), f.levy.drift, Transform::Identity));
            entries.push(entry(p("gauss_vol"), f.levy.gauss_vol, Transform::Identity));
            if f.levy.jump_family.family == "cgmy" {
                entries.push(entry(p("G"), f.levy.jump_family.get("G")?, Transform::Log));
                entries.push(entry(p("M"), f.levy.jump_family.get("M")?, Transform::Log));
                entries.push(entry(p("Y"), f.levy.jump_family.get("Y")?, INDEX));
            }
        }
        for e in &model.economies {
            for k in 0..model.factors.len() {
                entries.push(entry(format!("{}.zeta{k}", e.currency), e.zeta[k], Transform::Identity));
                entries.push(entry(
                    format!("{}.lambda{k}", e.currency),
                    e.lambda[k],
                    Transform::Identity,
                ));
            }
        }
        Ok(Self {
            entries,
            template: model.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_free(&self) -> usize {
        self.entries.iter().filter(|e| e.free).count()
    }

    pub fn free_names(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.free)
            .map(|e| e.name.as_str())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.value)
    }

    fn entry_mut(&mut self, name: &str) -> Result<&mut ParamEntry> {
        self.entries
            .iter_mut()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::InvalidParams(format!("unknown parameter {name}")))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        self.entry_mut(name)?.value = value;
        Ok(())
    }

    pub fn set_free(&mut self, name: &str, free: bool) -> Result<()> {
        let e = self.entry_mut(name)?;
        if free && !e.transform.admits(e.value) {
            return Err(Error::InvalidParams(format!(
                "{name} = {} is outside the range of its transform",
                e.value
            )));
        }
        e.free = free;
        Ok(())
    }

    /// Freezes every entry whose name starts with `prefix`.
    pub fn freeze_prefix(&mut self, prefix: &str) {
        for e in self.entries.iter_mut().filter(|e| e.name.starts_with(prefix)) {
            e.free = false;
        }
    }

    /// Free entries in unconstrained coordinates.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.free)
            .map(|e| e.transform.forward(e.value))
            .collect()
    }

    /// Copy with the free entries replaced from unconstrained coordinates.
    pub fn unflatten(&self, coords: &[f64]) -> Result<Self> {
        if coords.len() != self.n_free() {
            return Err(Error::InvalidParams(format!(
                "expected {} free coordinates, got {}",
                self.n_free(),
                coords.len()
            )));
        }
        let mut out = self.clone();
        let mut it = coords.iter();
        for e in out.entries.iter_mut().filter(|e| e.free) {
            e.value = e.transform.inverse(*it.next().expect("length checked"));
        }
        Ok(out)
    }

    /// The model these values describe; fails if it is not admissible.
    pub fn to_model(&self) -> Result<FxModel> {
        let v: BTreeMap<&str, f64> = self.entries.iter().map(|e| (e.name.as_str(), e.value)).collect();
        let mut m = self.template.clone();
        for (k, f) in m.factors.iter_mut().enumerate() {
            let g = |s: &str| v.get(format!("f{k}.{s}").as_str()).copied();
            let set = |dst: &mut f64, s: &str| {
                if let Some(x) = g(s) {
                    *dst = x;
                }
            };
            set(&mut f.x0, "x0");
            set(&mut f.immigration.beta, "beta");
            set(&mut f.branching.b, "b");
            set(&mut f.branching.sigma, "sigma");
            set(&mut f.branching.eta, "eta");
            set(&mut f.branching.theta, "theta");
            set(&mut f.branching.alpha, "alpha");
            set(&mut f.levy.drift, "drift");
            set(&mut f.levy.gauss_vol, "gauss_vol");
            if f.levy.jump_family.family == "cgmy" {
                let fam = &f.levy.jump_family;
                f.levy.jump_family = JumpFamily::cgmy(
                    g("G").unwrap_or(fam.get("G")?),
                    g("M").unwrap_or(fam.get("M")?),
                    g("Y").unwrap_or(fam.get("Y")?),
                );
            }
        }
        for e in m.economies.iter_mut() {
            for k in 0..e.zeta.len() {
                if let Some(&x) = v.get(format!("{}.zeta{k}", e.currency).as_str()) {
                    e.zeta[k] = x;
                }
                if let Some(&x) = v.get(format!("{}.lambda{k}", e.currency).as_str()) {
                    e.lambda[k] = x;
                }
            }
        }
        m.validate()?;
        // exposures must be admissible under every domestic measure
        for i in 0..m.economies.len() {
            m.measure_transformed_factors(i)?;
        }
        Ok(m)
    }
}

/// The jump-free restriction of `model`: branching without jumps (a CIR
/// activity) and a Brownian base process. Exposures are kept.
pub fn heston_restriction(model: &FxModel) -> FxModel {
    let mut m = model.clone();
    for f in m.factors.iter_mut() {
        f.branching.eta = 0.0;
        f.levy.jump_family = JumpFamily::none();
        if f.levy.gauss_vol == 0.0 {
            f.levy.gauss_vol = 0.1;
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub pair: Pair,
    pub tenor: f64,
    pub label: DeltaLabel,
    pub strike: f64,
}

/// Ordered cells, grouped by `(pair, tenor)` with five labels each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub cells: Vec<GridCell>,
}

impl CalibrationGrid {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells grouped by `(pair, tenor)`, as index ranges.
    fn groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for n in 1..=self.cells.len() {
            let split = n == self.cells.len()
                || self.cells[n].pair != self.cells[start].pair
                || self.cells[n].tenor != self.cells[start].tenor;
            if split {
                out.push(start..n);
                start = n;
            }
        }
        out
    }

    /// Strikes of the five quoted deltas where each strike is consistent with
    /// the model's own vol at that strike (fixed point of delta to strike).
    pub fn from_model(model: &FxModel, pairs: &[Pair], tenors: &[f64], config: &CosConfig) -> Result<Self> {
        let mut cells = Vec::new();
        for &pair in pairs {
            let tr = LogFxTransform::new(model, pair)?;
            for &t in tenors {
                let f = forward(model, pair.domestic, pair.foreign, t);
                let df = (-model.economies[pair.domestic].rate * t).exp();
                let cos = CosExpansion::new(model, &tr, t, config)?;
                let vol_at = |k: f64| -> Result<f64> {
                    let p = cos.prices(&[k], CallPut::Call, false)?[0];
                    implied_vol(p, f, k, t, df)
                };
                let atm_vol = vol_at(f)?;
                for label in DeltaLabel::ALL {
                    let mut k = quotes::strike_for(label, f, atm_vol, t);
                    for _ in 0..50 {
                        let next = quotes::strike_for(label, f, vol_at(k)?, t);
                        let done = (next - k).abs() <= 1e-13 * f;
                        k = next;
                        if done {
                            break;
                        }
                    }
                    cells.push(GridCell {
                        pair,
                        tenor: t,
                        label,
                        strike: k,
                    });
                }
            }
        }
        Ok(Self { cells })
    }

    /// Grid and market vols from quote sets; pairs are resolved against `model`.
    pub fn from_quotes(model: &FxModel, sets: &[QuoteSet]) -> Result<(Self, Vec<f64>)> {
        let mut cells = Vec::new();
        let mut vols = Vec::new();
        for q in sets {
            let pair = model.pair(&q.pair)?;
            for smile in quotes_to_strike_vols(q)? {
                for p in smile.points {
                    cells.push(GridCell {
                        pair,
                        tenor: smile.tenor,
                        label: p.label,
                        strike: p.strike,
                    });
                    vols.push(p.vol);
                }
            }
        }
        Ok((Self { cells }, vols))
    }
}

/// Pairs of the standard JPY/USD/EUR triangle, as market codes.
pub const STANDARD_PAIRS: [&str; 3] = ["USD-JPY", "EUR-USD", "EUR-JPY"];

pub fn standard_pairs(model: &FxModel) -> Result<Vec<Pair>> {
    STANDARD_PAIRS.iter().map(|c| model.pair(c)).collect()
}

/// Model vols on `grid`; `None` marks a cell that could not be priced.
pub fn surface_map(model: &FxModel, grid: &CalibrationGrid, config: &CosConfig) -> Vec<Option<f64>> {
    let groups = grid.groups();
    let per_group: Vec<Vec<Option<f64>>> = groups
        .par_iter()
        .map(|r| {
            let cells = &grid.cells[r.clone()];
            group_vols(model, cells, config).unwrap_or_else(|_| vec![None; cells.len()])
        })
        .collect();
    per_group.into_iter().flatten().collect()
}

fn group_vols(model: &FxModel, cells: &[GridCell], config: &CosConfig) -> Result<Vec<Option<f64>>> {
    let (pair, t) = (cells[0].pair, cells[0].tenor);
    let tr = LogFxTransform::new(model, pair)?;
    let cos = CosExpansion::new(model, &tr, t, config)?;
    let strikes: Vec<f64> = cells.iter().map(|c| c.strike).collect();
    let prices = cos.prices(&strikes, CallPut::Call, false)?;
    let f = forward(model, pair.domestic, pair.foreign, t);
    let df = (-model.economies[pair.domestic].rate * t).exp();
    Ok(prices
        .iter()
        .zip(&strikes)
        .map(|(&p, &k)| implied_vol(p, f, k, t, df).ok())
        .collect())
}

/// Residuals `model - market`, with the penalty for failed cells.
pub fn residuals(model_vols: &[Option<f64>], market: &[f64]) -> Vec<f64> {
    model_vols
        .iter()
        .zip(market)
        .map(|(m, t)| m.map_or(FAILED_CELL_PENALTY, |v| v - t))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSurface {
    pub vols: Vec<f64>,
    /// Cells whose noisy vol fell below the floor and were clipped to it.
    pub clipped: Vec<bool>,
}

pub const VOL_FLOOR: f64 = 1e-4;

/// `Σ(p*)` plus iid Gaussian noise of `noise_bps` basis points, floored at 1 bp.
pub fn generate_synthetic_surface(
    model: &FxModel,
    grid: &CalibrationGrid,
    noise_bps: f64,
    seed: u64,
    config: &CosConfig,
) -> Result<SyntheticSurface> {
    let clean = surface_map(model, grid, config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vols = Vec::with_capacity(clean.len());
    let mut clipped = Vec::with_capacity(clean.len());
    for (c, cell) in clean.iter().zip(&grid.cells) {
        let v = c.ok_or_else(|| {
            Error::Pricing(format!(
                "cannot price {} T={} {}",
                model.pair_code(cell.pair),
                cell.tenor,
                cell.label.as_str()
            ))
        })?;
        let eps: f64 = StandardNormal.sample(&mut rng);
        let noisy = v + noise_bps * 1e-4 * eps;
        clipped.push(noisy < VOL_FLOOR);
        vols.push(noisy.max(VOL_FLOOR));
    }
    Ok(SyntheticSurface { vols, clipped })
}

/// Market quotes (ATM/RR/BF per tenor) for the vols on `grid`.
pub fn quotes_for_surface(model: &FxModel, grid: &CalibrationGrid, vols: &[f64]) -> Result<Vec<QuoteSet>> {
    let mut sets: Vec<QuoteSet> = Vec::new();
    for r in grid.groups() {
        let c = grid.cells[r.start];
        if r.len() != 5 || grid.cells[r.clone()].iter().map(|c| c.label).ne(DeltaLabel::ALL) {
            return Err(Error::Data("quotes need the five labels per tenor".into()));
        }
        let w: [f64; 5] = std::array::from_fn(|n| vols[r.start + n]);
        let (sigma_atm, rr25, bf25, rr10, bf10) = quotes_from_wing_vols(w)?;
        let code = model.pair_code(c.pair);
        let spot = crate::fxmarket::fx_spot(model, c.pair.domestic, c.pair.foreign);
        let tq = TenorQuote {
            tenor: c.tenor,
            sigma_atm,
            rr25,
            bf25,
            rr10,
            bf10,
            fwd_points: forward(model, c.pair.domestic, c.pair.foreign, c.tenor) - spot,
        };
        match sets.iter_mut().find(|s| s.pair == code) {
            Some(s) => s.tenors.push(tq),
            None => sets.push(QuoteSet {
                pair: code,
                spot,
                day_count: Default::default(),
                tenors: vec![tq],
            }),
        }
    }
    Ok(sets)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub fd_step: f64,
    /// Weight of `|p - p0|²` (unconstrained coordinates) in the objective.
    pub regularization: f64,
    pub initial_damping: f64,
    pub cos: CosConfig,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            fd_step: 1e-6,
            regularization: 1e-8,
            initial_damping: 1e-3,
            cos: CosConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    Step,
    MaxIterations,
    /// Damping grew without finding a decrease.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResidual {
    pub pair: String,
    pub tenor: f64,
    pub label: DeltaLabel,
    pub strike: f64,
    pub market_vol: f64,
    pub model_vol: Option<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: ParamVector,
    pub rmse: f64,
    /// Sum of squared vol residuals (without the regularization term).
    pub objective: f64,
    pub residuals: Vec<CellResidual>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Accepted objective values, one per accepted iteration plus the start.
    pub history: Vec<f64>,
}

impl CalibrationResult {
    /// Builds the result for `params`, re-evaluating the surface.
    pub(crate) fn assemble(
        params: ParamVector,
        grid: &CalibrationGrid,
        market: &[f64],
        cos: &CosConfig,
        lm: LmOutcome,
    ) -> Result<Self> {
        let model = params.to_model()?;
        let vols = surface_map(&model, grid, cos);
        let res = residuals(&vols, market);
        let residuals = grid
            .cells
            .iter()
            .zip(vols.iter().zip(market).zip(&res))
            .map(|(c, ((m, &t), &r))| CellResidual {
                pair: model.pair_code(c.pair),
                tenor: c.tenor,
                label: c.label,
                strike: c.strike,
                market_vol: t,
                model_vol: *m,
                residual: r,
            })
            .collect();
        let objective: f64 = res.iter().map(|r| r * r).sum();
        Ok(Self {
            params,
            rmse: (objective / res.len() as f64).sqrt(),
            objective,
            residuals,
            iterations: lm.iterations,
            converged: lm.stop_reason != StopReason::MaxIterations && lm.stop_reason != StopReason::Stalled,
            stop_reason: lm.stop_reason,
            history: lm.history,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub history: Vec<f64>,
}

/// Residual vector and, when requested, its Jacobian.
pub(crate) trait LeastSquares: Sync {
    fn residuals(&self, x: &[f64]) -> Vec<f64>;

    fn jacobian(&self, x: &[f64], r: &[f64], step: f64) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = (0..x.len())
            .into_par_iter()
            .map(|c| {
                let mut xp = x.to_vec();
                xp[c] += step;
                self.residuals(&xp).iter().zip(r).map(|(a, b)| (a - b) / step).collect()
            })
            .collect();
        DMatrix::from_fn(r.len(), x.len(), |i, j| cols[j][i])
    }
}

/// Levenberg-Marquardt with Marquardt scaling; minimizes `|r(x)|² + reg |x - x0|²`.
pub(crate) fn levenberg_marquardt<P: LeastSquares>(problem: &P, x0: &[f64], options: &CalibrationOptions) -> LmOutcome {
    let n = x0.len();
    let reg = options.regularization.sqrt();
    let full = |x: &[f64]| -> Vec<f64> {
        let mut r = problem.residuals(x);
        r.extend(x.iter().zip(x0).map(|(a, b)| reg * (a - b)));
        r
    };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut x = x0.to_vec();
    let mut r = full(&x);
    let mut f = cost(&r);
    let mut history = vec![f];
    let mut mu = options.initial_damping;
    let mut iterations = 0;
    if n == 0 {
        return LmOutcome {
            x,
            iterations,
            stop_reason: StopReason::Gradient,
            history,
        };
    }
    let stop_reason = loop {
        if iterations >= options.max_iter {
            break StopReason::MaxIterations;
        }
        iterations += 1;
        let m = r.len() - n;
        let jr = problem.jacobian(&x, &r[..m], options.fd_step);
        let mut j = DMatrix::zeros(m + n, n);
        j.view_mut((0, 0), (m, n)).copy_from(&jr);
        for c in 0..n {
            j[(m + c, c)] = reg;
        }
        let rv = DVector::from_column_slice(&r);
        let g = j.transpose() * &rv;
        if g.amax() < options.grad_tol {
            break StopReason::Gradient;
        }
        let jtj = j.transpose() * &j;
        let diag: Vec<f64> = (0..n).map(|c| jtj[(c, c)].max(1e-12)).collect();
        let mut accepted = false;
        let mut tiny_step = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for c in 0..n {
                a[(c, c)] += mu * diag[c];
            }
            let Some(delta) = a.cholesky().map(|ch| ch.solve(&(-&g))) else {
                mu *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            let rn = full(&xn);
            let fn_ = cost(&rn);
            let step = delta.norm();
            if fn_.is_finite() && fn_ < f {
                x = xn;
                r = rn;
                f = fn_;
                history.push(f);
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                tiny_step = step < options.step_tol;
                break;
            }
            if step < options.step_tol {
                tiny_step = true;
                break;
            }
            mu *= 4.0;
        }
        if tiny_step {
            break StopReason::Step;
        }
        if !accepted {
            break StopReason::Stalled;
        }
    };
    LmOutcome {
        x,
        iterations,
        stop_reason,
        history,
    }
}

struct SurfaceProblem<'a> {
    params: &'a ParamVector,
    grid: &'a CalibrationGrid,
    market: &'a [f64],
    cos: CosConfig,
}

impl LeastSquares for SurfaceProblem<'_> {
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        match self.params.unflatten(x).and_then(|p| p.to_model()) {
            Ok(m) => residuals(&surface_map(&m, self.grid, &self.cos), self.market),
            Err(_) => vec![FAILED_CELL_PENALTY; self.market.len()],
        }
    }
}

/// Standard calibration: LM on the full COS pricing surface.
pub fn calibrate(
    market: &[f64],
    grid: &CalibrationGrid,
    p0: &ParamVector,
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    if market.len() != grid.len() {
        return Err(Error::Calibration(format!(
            "target has {} vols but the grid has {} cells",
            market.len(),
            grid.len()
        )));
    }
    let model0 = p0.to_model()?;
    if surface_map(&model0, grid, &options.cos).iter().all(Option::is_none) {
        return Err(Error::Calibration("no cell can be priced at the initial point".into()));
    }
    let problem = SurfaceProblem {
        params: p0,
        grid,
        market,
        cos: options.cos,
    };
    let lm = levenberg_marquardt(&problem, &p0.flatten(), options);
    let params = p0.unflatten(&lm.x)?;
    CalibrationResult::assemble(params, grid, market, &options.cos, lm)
}

/// A named calibration method.
pub trait Calibrator: Send + Sync {
    fn name(&self) -> &'static str;

    fn calibrate(
        &self,
        market: &[f64],
        grid: &CalibrationGrid,
        p0: &ParamVector,
        options: &CalibrationOptions,
    ) -> Result<CalibrationResult>;
}

pub struct StandardCalibrator;

impl Calibrator for StandardCalibrator {
    fn name(&self) -> &'static str {
        "standard"
    }

    fn calibrate(
        &self,
        market: &[f64],
        grid: &CalibrationGrid,
        p0: &ParamVector,
        options: &CalibrationOptions,
    ) -> Result<CalibrationResult> {
        calibrate(market, grid, p0, options)
    }
}

/// Resolves a calibration method by name. `deep` needs a trained surrogate.
pub fn calibrator(
    name: &str,
    surrogate: Option<Arc<crate::deep_surrogate::TrainedSurrogate>>,
) -> Result<Box<dyn Calibrator>> {
    match name {
        "standard" => Ok(Box::new(StandardCalibrator)),
        "deep" => {
            let s = surrogate
                .ok_or_else(|| Error::InvalidParams("the deep calibrator needs a trained surrogate".into()))?;
            Ok(Box::new(crate::deep_surrogate::DeepCalibrator::new(s)))
        }
        other => Err(Error::InvalidParams(format!(
            "unknown calibrator {other}; expected standard or deep"
        ))),
    }
}
