//! Monte Carlo simulation of CBITCL factors and of the FX rates they drive.
//!
//! Each step of `X` is split in two: the compensated jumps above the cutoff
//! `ε` (a compound Poisson stream with intensity `X π(z > ε)`, exact in
//! mean), then the exact square-root transition, with the compensated jumps
//! below `ε` folded into the diffusion coefficient since their variance is
//! also proportional to `X`.
//! `Z` is the base Lévy process run on the clock `Y = ∫ X ds`, treated the
//! same way. Every path draws from its own ChaCha stream keyed by
//! `(seed, path, factor)`, so results do not depend on how paths are split
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fxmarket::FxModel;
use crate::mechanisms::{compensator_coeffs, CbitclParams, TemperedTail};
use crate::quadrature::{exp_sinh_real, tanh_sinh_real};
use crate::{Error, Result};

const QUAD_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Uniform steps over `[0, horizon]`; observation times are added to the grid.
    pub n_steps: usize,
    pub seed: u64,
    pub small_jump_cutoff: f64,
    pub horizon: f64,
    /// Times at which paths are stored. Empty means every grid point.
    #[serde(default)]
    pub observe: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            n_steps: 100,
            seed: 0,
            small_jump_cutoff: 0.01,
            horizon: 1.0,
            observe: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(Error::InvalidParams("n_paths and n_steps must be positive".into()));
        }
        if !(self.small_jump_cutoff > 0.0 && self.small_jump_cutoff < 1.0) {
            return Err(Error::InvalidParams(format!(
                "small_jump_cutoff must lie in (0, 1), got {}",
                self.small_jump_cutoff
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParams(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if let Some(t) = self
            .observe
            .iter()
            .find(|&&t| !(t >= 0.0) || t > self.horizon * (1.0 + 1e-12))
        {
            return Err(Error::InvalidParams(format!(
                "observation time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Simulation grid and, for each stored time, its index on the grid.
    fn grid(&self) -> (Vec<f64>, Vec<usize>) {
        let h = self.horizon / self.n_steps as f64;
        let mut grid: Vec<f64> = (0..=self.n_steps).map(|n| n as f64 * h).collect();
        grid.extend(self.observe.iter().copied());
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * self.horizon);
        let stored = if self.observe.is_empty() {
            (0..grid.len()).collect()
        } else {
            let mut obs = self.observe.clone();
            obs.sort_by(f64::total_cmp);
            obs.dedup();
            obs.iter()
                .map(|&t| {
                    grid.iter()
                        .position(|&g| (g - t).abs() <= 1e-12 * self.horizon)
                        .expect("observation time on grid")
                })
                .collect()
        };
        (grid, stored)
    }
}

/// Samples jumps from `coef |z|^{-1-index} e^{-temper |z|}` restricted to `|z| > ε`.
#[derive(Clone, Debug)]
struct TailSampler {
    sign: f64,
    cutoff: f64,
    index: f64,
    temper: f64,
    /// Pareto proposal when true, shifted exponential otherwise.
    pareto: bool,
}

impl TailSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let eps = self.cutoff;
        loop {
            let u: f64 = rng.gen();
            let v: f64 = 1.0 - rng.gen::<f64>();
            let (z, accept) = if self.pareto {
                let z = eps * (1.0 - u).powf(-1.0 / self.index);
                (z, (-self.temper * (z - eps)).exp())
            } else {
                let e: f64 = rng.sample(Exp1);
                let z = eps + e / self.temper;
                (z, (z / eps).powf(-1.0 - self.index))
            };
            if v <= accept {
                return self.sign * z;
            }
        }
    }
}

/// Truncated description of one Lévy measure: big jumps as compound Poisson,
/// small jumps as Gaussian noise.
#[derive(Clone, Debug, Default)]
struct JumpSplit {
    /// Total intensity of jumps with `|z| > ε`, per unit clock.
    rate: f64,
    /// `∫_{|z|>ε} z μ(dz)`.
    big_mean: f64,
    /// `∫_{|z|≤ε} z² μ(dz)`.
    small_var: f64,
    /// Per-tail intensities and samplers.
    tails: Vec<(f64, TailSampler)>,
}

impl JumpSplit {
    fn new(tails: &[TemperedTail], eps: f64) -> Self {
        let mut out = JumpSplit::default();
        for t in tails {
            let dens = |z: f64| t.coef * z.powf(-1.0 - t.index) * (-t.temper * z).exp();
            let rate = exp_sinh_real(eps, QUAD_TOL, |z, _| dens(z));
            let mean = exp_sinh_real(eps, QUAD_TOL, |z, _| z * dens(z));
            let var = tanh_sinh_real(0.0, eps, QUAD_TOL, |z, _| z * z * dens(z));
            // expected acceptance of each proposal, up to the common factor `rate`
            let pareto_acc = t.index * eps.powf(t.index) / t.coef;
            let exp_acc = if t.temper > 0.0 {
                t.temper * eps.powf(1.0 + t.index) * (t.temper * eps).exp() / t.coef
            } else {
                0.0
            };
            out.rate += rate;
            out.big_mean += t.sign * mean;
            out.small_var += var;
            out.tails.push((
                rate,
                TailSampler {
                    sign: t.sign,
                    cutoff: eps,
                    index: t.index,
                    temper: t.temper,
                    pareto: pareto_acc >= exp_acc,
                },
            ));
        }
        out
    }

    fn sample_jump<R: Rng>(&self, rng: &mut R) -> f64 {
        let mut pick = rng.gen::<f64>() * self.rate;
        for (rate, s) in &self.tails {
            if pick < *rate {
                return s.sample(rng);
            }
            pick -= rate;
        }
        self.tails.last().expect("non-empty tails").1.sample(rng)
    }
}

/// Per-factor simulation constants.
#[derive(Clone, Debug)]
struct FactorSampler {
    x0: f64,
    beta: f64,
    b: f64,
    var_eff: f64,
    x_jumps: JumpSplit,
    z_drift: f64,
    z_var: f64,
    z_jumps: JumpSplit,
}

impl FactorSampler {
    fn new(params: &CbitclParams, eps: f64) -> Result<Self> {
        params.validate()?;
        let x_jumps = JumpSplit::new(&params.branching.kernel()?.tails(), eps);
        let z_jumps = JumpSplit::new(&params.levy.kernel()?.tails(), eps);
        let br = &params.branching;
        let lv = &params.levy;
        Ok(Self {
            x0: params.x0,
            beta: params.immigration.beta,
            b: br.b,
            var_eff: br.sigma * br.sigma + x_jumps.small_var,
            z_drift: lv.drift - z_jumps.big_mean,
            z_var: lv.gauss_vol * lv.gauss_vol + z_jumps.small_var,
            x_jumps,
            z_jumps,
        })
    }

    /// Exact square-root transition over `dt` without the big jumps.
    fn diffuse<R: Rng>(&self, x: f64, dt: f64, rng: &mut R) -> f64 {
        let decay = (-self.b * dt).exp();
        // (1 - e^{-b dt}) / b, continuous at b = 0
        let growth = if self.b.abs() * dt < 1e-8 {
            dt * (1.0 - 0.5 * self.b * dt)
        } else {
            -(-self.b * dt).exp_m1() / self.b
        };
        if self.var_eff == 0.0 {
            return x * decay + self.beta * growth;
        }
        let c = 0.25 * self.var_eff * growth;
        let df = 4.0 * self.beta / self.var_eff;
        let nc = x * decay / c;
        let extra = if nc > 0.0 {
            let n: f64 = Poisson::new(0.5 * nc).expect("positive mean").sample(rng);
            2.0 * n
        } else {
            0.0
        };
        let k = df + extra;
        if k <= 0.0 {
            return 0.0;
        }
        c * ChiSquared::new(k).expect("positive dof").sample(rng)
    }

    /// Compensated big jumps over `dt`, exact in mean: the compensator acts as
    /// the decay `e^{-m dt}` and the jump count is matched to it.
    fn jump<R: Rng>(&self, x: f64, dt: f64, rng: &mut R) -> f64 {
        let j = &self.x_jumps;
        if !(j.rate > 0.0) || x <= 0.0 {
            return x;
        }
        let m = j.big_mean;
        let mean = x * j.rate * (-(-m * dt).exp_m1() / m);
        let mut out = x * (-m * dt).exp();
        if mean > 0.0 {
            let n = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
            for _ in 0..n {
                out += j.sample_jump(rng);
            }
        }
        out
    }

    /// Advances `(X, Y, Z)` over `dt`.
    fn step<R: Rng>(&self, state: &mut [f64; 3], dt: f64, rng: &mut R) {
        let [x, y, z] = *state;
        let x_new = self.diffuse(self.jump(x, dt, rng), dt, rng);
        let dy = 0.5 * (x + x_new) * dt;
        let mut dz = self.z_drift * dy;
        if self.z_var > 0.0 && dy > 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            dz += (self.z_var * dy).sqrt() * g;
        }
        if self.z_jumps.rate * dy > 0.0 {
            let n: u64 = Poisson::new(self.z_jumps.rate * dy).expect("positive mean").sample(rng) as u64;
            for _ in 0..n {
                dz += self.z_jumps.sample_jump(rng);
            }
        }
        *state = [x_new, y + dy, z + dz];
    }
}

fn path_rng(seed: u64, path: usize, stream: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((path as u64) << 16) | stream as u64);
    rng
}

/// Stored `(X, Y, Z)` values of one factor, row-major `[path][time]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorPaths {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub factors: Vec<FactorPaths>,
    /// `log S^{0,i}` per economy, row-major `[path][time]`.
    pub log_artificial: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    pub spots: Vec<f64>,
}

impl PathBundle {
    fn at(&self, path: usize, t: usize) -> usize {
        path * self.times.len() + t
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn x(&self, factor: usize, path: usize, t: usize) -> f64 {
        self.factors[factor].x[self.at(path, t)]
    }

    pub fn y(&self, factor: usize, path: usize, t: usize) -> f64 {
        self.factors[factor].y[self.at(path, t)]
    }

    pub fn z(&self, factor: usize, path: usize, t: usize) -> f64 {
        self.factors[factor].z[self.at(path, t)]
    }

    /// Artificial rate `S^{0,i}`.
    pub fn artificial(&self, i: usize, path: usize, t: usize) -> f64 {
        self.log_artificial[i][self.at(path, t)].exp()
    }

    /// `S^{i,j} = S^{0,j} / S^{0,i}`.
    pub fn fx(&self, i: usize, j: usize, path: usize, t: usize) -> f64 {
        self.log_fx(i, j, path, t).exp()
    }

    pub fn log_fx(&self, i: usize, j: usize, path: usize, t: usize) -> f64 {
        let k = self.at(path, t);
        self.log_artificial[j][k] - self.log_artificial[i][k]
    }

    /// `dQ^i/dQ` on `F_t`: `S^{0,i}_t e^{r^i t} / S^{0,i}_0`.
    pub fn density(&self, i: usize, path: usize, t: usize) -> f64 {
        let l = self.log_artificial[i][self.at(path, t)];
        (l - self.spots[i].ln() + self.rates[i] * self.times[t]).exp()
    }

    /// Writes `t,factor,path_id,X,Y,Z` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "factor", "path_id", "X", "Y", "Z"])?;
        for (k, f) in self.factors.iter().enumerate() {
            for p in 0..self.n_paths {
                for (ti, t) in self.times.iter().enumerate() {
                    let n = self.at(p, ti);
                    w.write_record(&[
                        t.to_string(),
                        k.to_string(),
                        p.to_string(),
                        f.x[n].to_string(),
                        f.y[n].to_string(),
                        f.z[n].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn simulate_factors(factors: &[CbitclParams], config: &SimConfig) -> Result<(Vec<f64>, Vec<FactorPaths>)> {
    config.validate()?;
    let samplers = factors
        .iter()
        .enumerate()
        .map(|(k, f)| FactorSampler::new(f, config.small_jump_cutoff).map_err(|e| e.in_factor(k)))
        .collect::<Result<Vec<_>>>()?;
    let (grid, stored) = config.grid();
    let nt = stored.len();
    let per_path: Vec<Vec<[f64; 3]>> = (0..config.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rows = Vec::with_capacity(samplers.len() * nt);
            for (k, s) in samplers.iter().enumerate() {
                let mut rng = path_rng(config.seed, p, k);
                let mut state = [s.x0, 0.0, 0.0];
                let mut next = 0;
                for (g, &t) in grid.iter().enumerate() {
                    if g > 0 {
                        s.step(&mut state, t - grid[g - 1], &mut rng);
                    }
                    if next < nt && stored[next] == g {
                        rows.push(state);
                        next += 1;
                    }
                }
            }
            rows
        })
        .collect();
    let mut out = vec![
        FactorPaths {
            x: Vec::with_capacity(config.n_paths * nt),
            y: Vec::with_capacity(config.n_paths * nt),
            z: Vec::with_capacity(config.n_paths * nt),
        };
        samplers.len()
    ];
    for rows in &per_path {
        for (k, f) in out.iter_mut().enumerate() {
            for s in &rows[k * nt..(k + 1) * nt] {
                f.x.push(s[0]);
                f.y.push(s[1]);
                f.z.push(s[2]);
            }
        }
    }
    Ok((stored.iter().map(|&g| grid[g]).collect(), out))
}

/// Simulates one factor; returns the stored times and paths.
pub fn simulate_factor(params: &CbitclParams, config: &SimConfig) -> Result<(Vec<f64>, FactorPaths)> {
    let (times, mut paths) = simulate_factors(std::slice::from_ref(params), config)?;
    Ok((times, paths.remove(0)))
}

/// Simulates all factors of `model` under its base measure and builds the
/// artificial FX rates from them.
pub fn simulate_fx(model: &FxModel, config: &SimConfig) -> Result<PathBundle> {
    model.validate()?;
    if config.horizon > model.horizon * (1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!(
            "simulation horizon {} beyond model horizon {}",
            config.horizon, model.horizon
        )));
    }
    let (times, factors) = simulate_factors(&model.factors, config)?;
    let nt = times.len();
    let mut log_artificial = Vec::with_capacity(model.economies.len());
    for e in &model.economies {
        let coeffs = model
            .factors
            .iter()
            .enumerate()
            .map(|(k, f)| {
                compensator_coeffs(f, e.zeta[k], e.lambda[k]).map_err(|err| err.in_factor(k).in_economy(&e.currency))
            })
            .collect::<Result<Vec<_>>>()?;
        let ln_s0 = e.s0.ln();
        let mut l = Vec::with_capacity(config.n_paths * nt);
        for p in 0..config.n_paths {
            for (ti, &t) in times.iter().enumerate() {
                let n = p * nt + ti;
                let mut v = ln_s0 - e.rate * t;
                for (k, (f, c)) in factors.iter().zip(&coeffs).enumerate() {
                    v += e.zeta[k] * (f.x[n] - model.factors[k].x0) + e.lambda[k] * f.z[n]
                        - c.time_coeff * t
                        - c.y_coeff * f.y[n];
                }
                l.push(v);
            }
        }
        log_artificial.push(l);
    }
    Ok(PathBundle {
        times,
        n_paths: config.n_paths,
        factors,
        log_artificial,
        rates: model.economies.iter().map(|e| e.rate).collect(),
        spots: model.economies.iter().map(|e| e.s0).collect(),
    })
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

impl McEstimate {
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for x in samples {
            n += 1.0;
            let d = x - mean;
            mean += d / n;
            m2 += d * (x - mean);
        }
        let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
        Self {
            mean,
            std_err: (var / n).sqrt(),
        }
    }

    /// `|a - b|` in units of the combined standard error.
    pub fn z_score(&self, other: &McEstimate) -> f64 {
        let se = self.std_err.hypot(other.std_err);
        if se == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - other.mean).abs() / se
        }
    }
}

/// Estimates `E^i[payoff]` at the stored time `t` from base-measure paths,
/// weighting each path by `dQ^i/dQ`.
pub fn esscher_reweighted_mean<F>(paths: &PathBundle, i: usize, t: usize, payoff: F) -> McEstimate
where
    F: Fn(&PathBundle, usize) -> f64,
{
    McEstimate::from_samples((0..paths.n_paths).map(|p| paths.density(i, p, t) * payoff(paths, p)))
}
