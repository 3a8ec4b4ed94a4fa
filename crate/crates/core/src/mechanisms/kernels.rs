//! Jump kernels: Lévy measures with a closed-form fully compensated exponent.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;

/// Named jump family with its numeric parameters, as stored in model files.
///
/// ```json
/// { "family": "cgmy", "G": 3.0313, "M": 0.79529, "Y": 1.7675 }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpFamily {
    pub family: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl JumpFamily {
    pub fn none() -> Self {
        Self {
            family: "none".into(),
            params: BTreeMap::new(),
        }
    }

    pub fn cgmy(g: f64, m: f64, y: f64) -> Self {
        let params = [("G", g), ("M", m), ("Y", y)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self {
            family: "cgmy".into(),
            params,
        }
    }

    pub fn tempered_stable(eta: f64, theta: f64, alpha: f64) -> Self {
        let params = [("eta", eta), ("theta", theta), ("alpha", alpha)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self {
            family: "tempered_stable".into(),
            params,
        }
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidParams(format!("jump family `{}` is missing parameter `{key}`", self.family)))
    }
}

/// One side of a tempered power-law Lévy density:
/// `coef * |z|^(-1-index) * exp(-temper * |z|)` for `sign * z > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperedTail {
    pub sign: f64,
    pub coef: f64,
    pub index: f64,
    pub temper: f64,
}

impl TemperedTail {
    pub fn density(&self, z: f64) -> f64 {
        if z * self.sign <= 0.0 {
            return 0.0;
        }
        let a = z.abs();
        self.coef * a.powf(-1.0 - self.index) * (-self.temper * a).exp()
    }
}

/// A Lévy measure `mu` on the real line with closed-form exponent.
///
/// All exponents are fully compensated: `∫ (e^{uz} - 1 - uz) mu(dz)`.
pub trait JumpKernel: Send + Sync + fmt::Debug {
    /// Family tag and parameters for serialization.
    fn family(&self) -> JumpFamily;

    fn exponent(&self, u: Complex64) -> Result<Complex64>;

    /// Derivative of the exponent at a real point: `∫ z (e^{uz} - 1) mu(dz)`.
    fn slope(&self, u: f64) -> Result<f64>;

    /// Closed real effective domain `[lower, upper]` (infinite when unbounded).
    fn domain(&self) -> (f64, f64);

    /// Lévy density at `z != 0`.
    fn density(&self, z: f64) -> f64;

    /// Esscher-tilted measure `e^{shift z} mu(dz)`.
    fn esscher(&self, shift: f64) -> Result<Arc<dyn JumpKernel>>;

    /// Tempered power-law decomposition used by the path simulator.
    fn tails(&self) -> Vec<TemperedTail>;
}

/// `base^p` on the principal branch; `base` must lie in the closed right half-plane.
fn principal_pow(base: Complex64, p: f64, what: &str) -> Result<Complex64> {
    if base.re < 0.0 {
        return Err(Error::NumericalDomain(format!(
            "{what}: base {base} has negative real part"
        )));
    }
    if base.re == 0.0 && base.im == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if base.im == 0.0 {
        return Ok(Complex64::new(base.re.powf(p), 0.0));
    }
    Ok(base.powf(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoJumps;

impl JumpKernel for NoJumps {
    fn family(&self) -> JumpFamily {
        JumpFamily::none()
    }

    fn exponent(&self, _u: Complex64) -> Result<Complex64> {
        Ok(Complex64::new(0.0, 0.0))
    }

    fn slope(&self, _u: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn density(&self, _z: f64) -> f64 {
        0.0
    }

    fn esscher(&self, _shift: f64) -> Result<Arc<dyn JumpKernel>> {
        Ok(Arc::new(NoJumps))
    }

    fn tails(&self) -> Vec<TemperedTail> {
        Vec::new()
    }
}

/// Spectrally positive tempered alpha-stable measure
/// `C_a eta^a e^{-(theta/eta) z} z^{-1-a} dz` on `z > 0`, `C_a = 1/Gamma(-a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperedStable {
    eta: f64,
    theta: f64,
    alpha: f64,
    theta_pow: f64,
    linear: f64,
}

impl TemperedStable {
    pub fn new(eta: f64, theta: f64, alpha: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParams(format!("eta must be > 0, got {eta}")));
        }
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::InvalidParams(format!("theta must be >= 0, got {theta}")));
        }
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::InvalidParams(format!("alpha must lie in (1, 2), got {alpha}")));
        }
        let theta_pow = theta.powf(alpha);
        let linear = alpha * theta.powf(alpha - 1.0) * eta;
        Ok(Self {
            eta,
            theta,
            alpha,
            theta_pow,
            linear,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl JumpKernel for TemperedStable {
    fn family(&self) -> JumpFamily {
        JumpFamily::tempered_stable(self.eta, self.theta, self.alpha)
    }

    fn exponent(&self, x: Complex64) -> Result<Complex64> {
        let base = Complex64::new(self.theta, 0.0) - x * self.eta;
        let p = principal_pow(base, self.alpha, "tempered-stable exponent")?;
        Ok(p - self.theta_pow + x * self.linear)
    }

    fn slope(&self, x: f64) -> Result<f64> {
        let base = self.theta - self.eta * x;
        if base < 0.0 {
            return Err(Error::NumericalDomain(format!(
                "tempered-stable slope at {x} beyond theta/eta"
            )));
        }
        let a1 = self.alpha - 1.0;
        Ok(self.alpha * self.eta * (self.theta.powf(a1) - base.powf(a1)))
    }

    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, self.theta / self.eta)
    }

    fn density(&self, z: f64) -> f64 {
        self.tails()[0].density(z)
    }

    fn esscher(&self, shift: f64) -> Result<Arc<dyn JumpKernel>> {
        let theta = self.theta - shift * self.eta;
        if theta < 0.0 || (theta == 0.0 && shift != 0.0) {
            return Err(Error::Admissibility(format!(
                "Esscher shift {shift} not below theta/eta = {}",
                self.theta / self.eta
            )));
        }
        Ok(Arc::new(TemperedStable::new(self.eta, theta, self.alpha)?))
    }

    fn tails(&self) -> Vec<TemperedTail> {
        vec![TemperedTail {
            sign: 1.0,
            coef: self.eta.powf(self.alpha) / gamma(-self.alpha),
            index: self.alpha,
            temper: self.theta / self.eta,
        }]
    }
}

/// CGMY measure `C (z^{-1-Y} e^{-Mz} 1_{z>0} + |z|^{-1-Y} e^{-G|z|} 1_{z<0})`,
/// `C = 1/Gamma(-Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cgmy {
    g: f64,
    m: f64,
    y: f64,
    m_pow: f64,
    g_pow: f64,
    linear: f64,
}

impl Cgmy {
    pub fn new(g: f64, m: f64, y: f64) -> Result<Self> {
        if !(g > 0.0) || !(m > 0.0) || !g.is_finite() || !m.is_finite() {
            return Err(Error::InvalidParams(format!(
                "CGMY tempering must be positive, got G={g}, M={m}"
            )));
        }
        if !(y > 1.0 && y < 2.0) {
            return Err(Error::InvalidParams(format!("CGMY Y must lie in (1, 2), got {y}")));
        }
        Ok(Self {
            g,
            m,
            y,
            m_pow: m.powf(y),
            g_pow: g.powf(y),
            linear: y * (m.powf(y - 1.0) - g.powf(y - 1.0)),
        })
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

impl JumpKernel for Cgmy {
    fn family(&self) -> JumpFamily {
        JumpFamily::cgmy(self.g, self.m, self.y)
    }

    fn exponent(&self, u: Complex64) -> Result<Complex64> {
        let up = principal_pow(Complex64::new(self.m, 0.0) - u, self.y, "CGMY exponent (M - u)")?;
        let down = principal_pow(Complex64::new(self.g, 0.0) + u, self.y, "CGMY exponent (G + u)")?;
        Ok(up - self.m_pow + down - self.g_pow + u * self.linear)
    }

    fn slope(&self, u: f64) -> Result<f64> {
        if u < -self.g || u > self.m {
            return Err(Error::NumericalDomain(format!("CGMY slope at {u} outside [-G, M]")));
        }
        let y1 = self.y - 1.0;
        Ok(self.y * ((self.g + u).powf(y1) - self.g.powf(y1) + self.m.powf(y1) - (self.m - u).powf(y1)))
    }

    fn domain(&self) -> (f64, f64) {
        (-self.g, self.m)
    }

    fn density(&self, z: f64) -> f64 {
        self.tails().iter().map(|t| t.density(z)).sum()
    }

    fn esscher(&self, shift: f64) -> Result<Arc<dyn JumpKernel>> {
        if shift != 0.0 && !(shift > -self.g && shift < self.m) {
            return Err(Error::Admissibility(format!(
                "Esscher shift {shift} outside (-G, M) = ({}, {})",
                -self.g, self.m
            )));
        }
        Ok(Arc::new(Cgmy::new(self.g + shift, self.m - shift, self.y)?))
    }

    fn tails(&self) -> Vec<TemperedTail> {
        let coef = 1.0 / gamma(-self.y);
        vec![
            TemperedTail {
                sign: 1.0,
                coef,
                index: self.y,
                temper: self.m,
            },
            TemperedTail {
                sign: -1.0,
                coef,
                index: self.y,
                temper: self.g,
            },
        ]
    }
}
