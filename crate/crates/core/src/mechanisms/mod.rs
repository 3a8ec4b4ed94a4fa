//! Immigration, branching and Lévy exponents of a CBITCL factor.
//!
//! * `Ψ(x) = βx` (no immigration jumps)
//! * `Φ(x) = -bx + ½(σx)² + (θ-ηx)^α - θ^α + αθ^{α-1}ηx`
//! * `Ξ(u) = β_Z u + ½σ_Z²u² + jump exponent of the chosen family`
//!
//! Complex powers use the principal branch. A base with negative real part is
//! reported as [`Error::NumericalDomain`].

mod kernels;
mod registry;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use kernels::{Cgmy, JumpFamily, JumpKernel, NoJumps, TemperedStable, TemperedTail};
pub use registry::{registry, KernelBuilder, KernelRegistry};

use crate::error::{Error, Result};

/// Immigration jump measure tag. Only the zero measure is supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImmigrationJumps {
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImmigrationParams {
    pub beta: f64,
    #[serde(default)]
    pub jump_family: ImmigrationJumps,
}

/// Branching mechanism with a tempered α-stable jump measure.
///
/// `eta == 0` switches the jump part off, leaving the CIR mechanism `-bx + ½σ²x²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingParams {
    pub b: f64,
    pub sigma: f64,
    pub eta: f64,
    pub theta: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyParams {
    pub drift: f64,
    pub gauss_vol: f64,
    pub jump_family: JumpFamily,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbitclParams {
    pub x0: f64,
    pub immigration: ImmigrationParams,
    pub branching: BranchingParams,
    pub levy: LevyParams,
}

/// Effective real domains: `D_X = (-inf, dx_upper]`, `D_Z = [dz_lower, dz_upper]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainBounds {
    pub dx_upper: f64,
    pub dz_lower: f64,
    pub dz_upper: f64,
}

impl DomainBounds {
    pub fn x_interior(&self, x: f64) -> bool {
        x < self.dx_upper
    }

    pub fn z_interior(&self, z: f64) -> bool {
        z > self.dz_lower && z < self.dz_upper
    }
}

/// `K_t = t * time_coeff + Y_t * y_coeff`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompensatorCoeffs {
    pub time_coeff: f64,
    pub y_coeff: f64,
}

impl BranchingParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.b, self.sigma, self.eta, self.theta, self.alpha]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite branching parameter".into()));
        }
        if self.eta < 0.0 {
            return Err(Error::InvalidParams(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.eta > 0.0 {
            TemperedStable::new(self.eta, self.theta, self.alpha)?;
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Arc<dyn JumpKernel>> {
        self.validate()?;
        if self.eta == 0.0 {
            Ok(Arc::new(NoJumps))
        } else {
            Ok(Arc::new(TemperedStable::new(self.eta, self.theta, self.alpha)?))
        }
    }
}

impl LevyParams {
    pub fn validate(&self) -> Result<()> {
        if !self.drift.is_finite() || !self.gauss_vol.is_finite() || self.gauss_vol < 0.0 {
            return Err(Error::InvalidParams(format!(
                "Lévy drift/gauss_vol invalid: {}, {}",
                self.drift, self.gauss_vol
            )));
        }
        self.kernel().map(|_| ())
    }

    pub fn kernel(&self) -> Result<Arc<dyn JumpKernel>> {
        registry().build(&self.jump_family)
    }
}

impl CbitclParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.x0 >= 0.0) || !self.x0.is_finite() {
            return Err(Error::InvalidParams(format!("x0 must be >= 0, got {}", self.x0)));
        }
        if !(self.immigration.beta >= 0.0) || !self.immigration.beta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "beta must be >= 0, got {}",
                self.immigration.beta
            )));
        }
        self.branching.validate()?;
        self.levy.validate()
    }
}

/// Pre-built evaluator for `Ψ`, `Φ` and `Ξ` of one factor.
#[derive(Clone, Debug)]
pub struct Mechanisms {
    beta: f64,
    b: f64,
    half_sigma_sq: f64,
    branching: Arc<dyn JumpKernel>,
    drift: f64,
    half_gauss_sq: f64,
    levy: Arc<dyn JumpKernel>,
    bounds: DomainBounds,
}

impl Mechanisms {
    pub fn new(params: &CbitclParams) -> Result<Self> {
        params.validate()?;
        let branching = params.branching.kernel()?;
        let levy = params.levy.kernel()?;
        let (dz_lower, dz_upper) = levy.domain();
        let bounds = DomainBounds {
            dx_upper: branching.domain().1,
            dz_lower,
            dz_upper,
        };
        Ok(Self {
            beta: params.immigration.beta,
            b: params.branching.b,
            half_sigma_sq: 0.5 * params.branching.sigma * params.branching.sigma,
            branching,
            drift: params.levy.drift,
            half_gauss_sq: 0.5 * params.levy.gauss_vol * params.levy.gauss_vol,
            levy,
            bounds,
        })
    }

    pub fn bounds(&self) -> DomainBounds {
        self.bounds
    }

    pub fn branching_kernel(&self) -> &Arc<dyn JumpKernel> {
        &self.branching
    }

    pub fn levy_kernel(&self) -> &Arc<dyn JumpKernel> {
        &self.levy
    }

    pub fn psi(&self, x: Complex64) -> Result<Complex64> {
        if x.re > self.bounds.dx_upper {
            return Err(domain_err("Psi argument", x.re, self.bounds.dx_upper));
        }
        Ok(x * self.beta)
    }

    pub fn phi(&self, x: Complex64) -> Result<Complex64> {
        if x.re > self.bounds.dx_upper {
            return Err(domain_err("Phi argument", x.re, self.bounds.dx_upper));
        }
        Ok(-x * self.b + x * x * self.half_sigma_sq + self.branching.exponent(x)?)
    }

    pub fn xi(&self, u: Complex64) -> Result<Complex64> {
        if u.re < self.bounds.dz_lower {
            return Err(domain_err("Xi argument", u.re, self.bounds.dz_lower));
        }
        if u.re > self.bounds.dz_upper {
            return Err(domain_err("Xi argument", u.re, self.bounds.dz_upper));
        }
        Ok(u * self.drift + u * u * self.half_gauss_sq + self.levy.exponent(u)?)
    }

    pub fn psi_real(&self, x: f64) -> Result<f64> {
        self.psi(Complex64::new(x, 0.0)).map(|v| v.re)
    }

    pub fn phi_real(&self, x: f64) -> Result<f64> {
        self.phi(Complex64::new(x, 0.0)).map(|v| v.re)
    }

    pub fn xi_real(&self, u: f64) -> Result<f64> {
        self.xi(Complex64::new(u, 0.0)).map(|v| v.re)
    }
}

fn domain_err(what: &'static str, value: f64, bound: f64) -> Error {
    Error::Domain { what, value, bound }
}

pub fn psi(params: &ImmigrationParams, x: Complex64) -> Result<Complex64> {
    if !(params.beta >= 0.0) {
        return Err(Error::InvalidParams(format!("beta must be >= 0, got {}", params.beta)));
    }
    Ok(x * params.beta)
}

pub fn phi_tempered_stable(params: &BranchingParams, x: Complex64) -> Result<Complex64> {
    let kernel = params.kernel()?;
    let upper = kernel.domain().1;
    if x.re > upper {
        return Err(domain_err("Phi argument", x.re, upper));
    }
    Ok(-x * params.b + x * x * (0.5 * params.sigma * params.sigma) + kernel.exponent(x)?)
}

/// Lévy exponent `Ξ`; the jump part is whichever family is registered under
/// `params.jump_family` (CGMY in the calibrated model).
pub fn xi_cgmy(params: &LevyParams, u: Complex64) -> Result<Complex64> {
    params.validate()?;
    let kernel = params.kernel()?;
    let (lo, hi) = kernel.domain();
    if u.re < lo {
        return Err(domain_err("Xi argument", u.re, lo));
    }
    if u.re > hi {
        return Err(domain_err("Xi argument", u.re, hi));
    }
    Ok(u * params.drift + u * u * (0.5 * params.gauss_vol * params.gauss_vol) + kernel.exponent(u)?)
}

pub fn domains(params: &CbitclParams) -> Result<DomainBounds> {
    Ok(Mechanisms::new(params)?.bounds())
}

fn check_interior(bounds: &DomainBounds, zeta: f64, lambda: f64) -> Result<()> {
    // Zero exposure is always admissible even when 0 sits on the boundary (θ = 0).
    if zeta != 0.0 && !bounds.x_interior(zeta) {
        return Err(Error::Admissibility(format!(
            "zeta = {zeta} not in the interior of D_X = (-inf, {}]",
            bounds.dx_upper
        )));
    }
    if lambda != 0.0 && !bounds.z_interior(lambda) {
        return Err(Error::Admissibility(format!(
            "lambda = {lambda} not in the interior of D_Z = [{}, {}]",
            bounds.dz_lower, bounds.dz_upper
        )));
    }
    if !zeta.is_finite() || !lambda.is_finite() {
        return Err(Error::Admissibility("non-finite exposure".into()));
    }
    Ok(())
}

pub fn compensator_coeffs(params: &CbitclParams, zeta: f64, lambda: f64) -> Result<CompensatorCoeffs> {
    let mech = Mechanisms::new(params)?;
    check_interior(&mech.bounds(), zeta, lambda)?;
    Ok(CompensatorCoeffs {
        time_coeff: mech.psi_real(zeta)?,
        y_coeff: mech.phi_real(zeta)? + mech.xi_real(lambda)?,
    })
}

/// Parameters of the factor under the Esscher measure with exposures `(ζ, λ)`.
///
/// Satisfies `Φ'(x) = Φ(x+ζ) - Φ(ζ)` and `Ξ'(u) = Ξ(u+λ) - Ξ(λ)`.
pub fn transform_params(params: &CbitclParams, zeta: f64, lambda: f64) -> Result<CbitclParams> {
    let mech = Mechanisms::new(params)?;
    check_interior(&mech.bounds(), zeta, lambda)?;
    let br = &params.branching;
    let branching_kernel = mech.branching_kernel();
    let tilted_branching = branching_kernel.esscher(zeta)?;
    let b = br.b - zeta * br.sigma * br.sigma - branching_kernel.slope(zeta)?;
    let theta = if br.eta == 0.0 {
        br.theta
    } else {
        br.theta - zeta * br.eta
    };
    debug_assert!(br.eta == 0.0 || tilted_branching.family().get("theta").ok() == Some(theta));

    let lv = &params.levy;
    let levy_kernel = mech.levy_kernel();
    let drift = lv.drift + lambda * lv.gauss_vol * lv.gauss_vol + levy_kernel.slope(lambda)?;
    let jump_family = levy_kernel.esscher(lambda)?.family();

    Ok(CbitclParams {
        x0: params.x0,
        immigration: params.immigration.clone(),
        branching: BranchingParams {
            b,
            sigma: br.sigma,
            eta: br.eta,
            theta,
            alpha: br.alpha,
        },
        levy: LevyParams {
            drift,
            gauss_vol: lv.gauss_vol,
            jump_family,
        },
    })
}

#[cfg(test)]
mod tests;
