//! Generalized Riccati system of a CBITCL factor and its joint transform.
//!
//! For `(u1, u2, u3)` the functions `V`, `U` solve
//!
//! ```text
//! V' = Φ(V) + u2 + Ξ(u3),   V(0) = u1
//! U' = Ψ(V),                U(0) = 0
//! ```
//!
//! and `E[exp(u1 X_T + u2 Y_T + u3 Z_T)] = exp(U(T) + V(T) X_0 + u2 Y_0 + u3 Z_0)`.
//! The pair is integrated jointly by an adaptive Dormand–Prince 5(4) scheme.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{CbitclParams, Mechanisms};

pub const DEFAULT_TOL: f64 = 1e-10;

const MAX_STEPS: usize = 200_000;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiccatiInput {
    pub u1: Complex64,
    pub u2: Complex64,
    pub u3: Complex64,
    pub horizon: f64,
}

impl RiccatiInput {
    pub fn new(u1: Complex64, u2: Complex64, u3: Complex64, horizon: f64) -> Self {
        Self { u1, u2, u3, horizon }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub grid: Vec<f64>,
    pub v_values: Vec<Complex64>,
    pub u_values: Vec<Complex64>,
}

impl RiccatiSolution {
    /// `(V, U)` at the horizon.
    pub fn terminal(&self) -> (Complex64, Complex64) {
        (
            *self.v_values.last().expect("solution grid is never empty"),
            *self.u_values.last().expect("solution grid is never empty"),
        )
    }

    /// CSV dump `t,v_re,v_im,u_re,u_im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,v_re,v_im,u_re,u_im\n");
        for ((t, v), u) in self.grid.iter().zip(&self.v_values).zip(&self.u_values) {
            out.push_str(&format!("{t},{},{},{},{}\n", v.re, v.im, u.re, u.im));
        }
        out
    }
}

// Dormand–Prince 5(4) tableau; the equations are autonomous so the nodes c_i are unused.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Clone, Copy)]
struct State {
    v: Complex64,
    u: Complex64,
}

impl State {
    fn axpy(self, h: f64, terms: &[(f64, State)]) -> State {
        let mut v = Complex64::new(0.0, 0.0);
        let mut u = Complex64::new(0.0, 0.0);
        for &(a, k) in terms {
            v += k.v * a;
            u += k.u * a;
        }
        State {
            v: self.v + v * h,
            u: self.u + u * h,
        }
    }
}

/// Riccati integrator bound to the mechanisms of one factor.
#[derive(Clone, Debug)]
pub struct RiccatiSolver {
    mech: Mechanisms,
}

impl RiccatiSolver {
    pub fn new(params: &CbitclParams) -> Result<Self> {
        Ok(Self {
            mech: Mechanisms::new(params)?,
        })
    }

    pub fn from_mechanisms(mech: Mechanisms) -> Self {
        Self { mech }
    }

    pub fn mechanisms(&self) -> &Mechanisms {
        &self.mech
    }

    fn rhs(&self, s: State, forcing: Complex64) -> Result<State> {
        Ok(State {
            v: self.mech.phi(s.v)? + forcing,
            u: self.mech.psi(s.v)?,
        })
    }

    /// Full trajectory on the accepted step grid.
    pub fn solve(&self, input: &RiccatiInput, tol: f64) -> Result<RiccatiSolution> {
        let mut sol = RiccatiSolution {
            grid: vec![0.0],
            v_values: vec![input.u1],
            u_values: vec![Complex64::new(0.0, 0.0)],
        };
        self.integrate(input, tol, |t, v, u| {
            sol.grid.push(t);
            sol.v_values.push(v);
            sol.u_values.push(u);
        })?;
        Ok(sol)
    }

    /// `(V, U)` at the horizon without storing the trajectory.
    pub fn terminal(&self, input: &RiccatiInput, tol: f64) -> Result<(Complex64, Complex64)> {
        self.integrate(input, tol, |_, _, _| {})
    }

    /// `E[exp(u1 X_T + u2 Y_T + u3 Z_T)]` started from `(x0, y0, z0)`.
    pub fn transform(&self, input: &RiccatiInput, x0: f64, y0: f64, z0: f64, tol: f64) -> Result<Complex64> {
        let (v, u) = self.terminal(input, tol)?;
        Ok((u + v * x0 + input.u2 * y0 + input.u3 * z0).exp())
    }

    fn integrate(
        &self,
        input: &RiccatiInput,
        tol: f64,
        mut record: impl FnMut(f64, Complex64, Complex64),
    ) -> Result<(Complex64, Complex64)> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParams(format!("tol must be > 0, got {tol}")));
        }
        if !(input.horizon >= 0.0) || !input.horizon.is_finite() {
            return Err(Error::InvalidParams(format!(
                "horizon must be finite and >= 0, got {}",
                input.horizon
            )));
        }
        let bounds = self.mech.bounds();
        if input.u1.re > bounds.dx_upper {
            return Err(Error::Domain {
                what: "Riccati u1",
                value: input.u1.re,
                bound: bounds.dx_upper,
            });
        }
        let forcing = input.u2 + self.mech.xi(input.u3)?;
        let t_end = input.horizon;
        let mut y = State {
            v: input.u1,
            u: Complex64::new(0.0, 0.0),
        };
        if t_end == 0.0 {
            return Ok((y.v, y.u));
        }
        let mut k1 = self.rhs(y, forcing)?;
        let scale0 = 1.0 + y.v.norm();
        let slope = k1.v.norm().max(k1.u.norm());
        let mut h = if slope > 0.0 {
            (0.01 * scale0 / slope).min(t_end).max(1e-6 * t_end)
        } else {
            t_end
        };
        let mut t = 0.0;
        let h_min = 1e-13 * t_end.max(1.0);
        let mut last_domain: Option<Error> = None;

        for _ in 0..MAX_STEPS {
            if t_end - t <= 1e-15 * t_end {
                return Ok((y.v, y.u));
            }
            let mut last = false;
            if t + h >= t_end {
                h = t_end - t;
                last = true;
            }
            match self.try_step(y, k1, h, forcing) {
                Ok((y_new, k7, err)) => {
                    let scale_v = tol * (1.0 + y.v.norm().max(y_new.v.norm()));
                    let scale_u = tol * (1.0 + y.u.norm().max(y_new.u.norm()));
                    let e = (err.v.norm() / scale_v).max(err.u.norm() / scale_u);
                    if e <= 1.0 && e.is_finite() {
                        t = if last { t_end } else { t + h };
                        y = y_new;
                        k1 = k7;
                        record(t, y.v, y.u);
                        last_domain = None;
                        let factor = if e == 0.0 {
                            MAX_FACTOR
                        } else {
                            (SAFETY * e.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                        };
                        h *= factor;
                    } else {
                        let factor = if e.is_finite() {
                            (SAFETY * e.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
                        } else {
                            MIN_FACTOR
                        };
                        h *= factor;
                    }
                }
                Err(e @ (Error::Domain { .. } | Error::NumericalDomain(_))) => {
                    last_domain = Some(e);
                    h *= MIN_FACTOR;
                }
                Err(e) => return Err(e),
            }
            if h < h_min {
                return Err(match last_domain {
                    Some(e) => Error::NumericalDomain(format!("Riccati trajectory left the domain at t={t}: {e}")),
                    None => Error::Stiffness { t, h },
                });
            }
        }
        Err(Error::Stiffness { t, h })
    }

    fn try_step(&self, y: State, k1: State, h: f64, f: Complex64) -> Result<(State, State, State)> {
        let k2 = self.rhs(y.axpy(h, &[(A21, k1)]), f)?;
        let k3 = self.rhs(y.axpy(h, &[(A31, k1), (A32, k2)]), f)?;
        let k4 = self.rhs(y.axpy(h, &[(A41, k1), (A42, k2), (A43, k3)]), f)?;
        let k5 = self.rhs(y.axpy(h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]), f)?;
        let k6 = self.rhs(y.axpy(h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]), f)?;
        let y_new = y.axpy(h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
        let k7 = self.rhs(y_new, f)?;
        let zero = State {
            v: Complex64::new(0.0, 0.0),
            u: Complex64::new(0.0, 0.0),
        };
        let err = zero.axpy(h, &[(E1, k1), (E3, k3), (E4, k4), (E5, k5), (E6, k6), (E7, k7)]);
        Ok((y_new, k7, err))
    }
}

pub fn solve_riccati(params: &CbitclParams, input: &RiccatiInput, tol: f64) -> Result<RiccatiSolution> {
    RiccatiSolver::new(params)?.solve(input, tol)
}

/// `E[exp(u1 X_T + u2 Y_T + u3 Z_T)]` from `(params.x0, y0, z0)` at the default tolerance.
pub fn laplace_fourier(params: &CbitclParams, input: &RiccatiInput, y0: f64, z0: f64) -> Result<Complex64> {
    RiccatiSolver::new(params)?.transform(input, params.x0, y0, z0, DEFAULT_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{BranchingParams, ImmigrationJumps, ImmigrationParams, JumpFamily, LevyParams};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(beta: f64, b: f64, sigma: f64, eta: f64, family: JumpFamily) -> CbitclParams {
        CbitclParams {
            x0: 0.8,
            immigration: ImmigrationParams {
                beta,
                jump_family: ImmigrationJumps::None,
            },
            branching: BranchingParams {
                b,
                sigma,
                eta,
                theta: 1.9338,
                alpha: 1.1697,
            },
            levy: LevyParams {
                drift: -0.1622,
                gauss_vol: 0.3,
                jump_family: family,
            },
        }
    }

    fn full() -> CbitclParams {
        params(
            0.37721,
            0.43082,
            2.1473,
            1.7208,
            JumpFamily::cgmy(3.0313, 0.79529, 1.7675),
        )
    }

    fn cir_v(u1: Complex64, b: f64, sigma: f64, t: f64) -> Complex64 {
        let e = (-b * t).exp();
        u1 * e / (1.0 - u1 * sigma * sigma * (1.0 - e) / (2.0 * b))
    }

    fn cir_u(u1: Complex64, beta: f64, b: f64, sigma: f64, t: f64) -> Complex64 {
        let e = (-b * t).exp();
        -(1.0 - u1 * sigma * sigma * (1.0 - e) / (2.0 * b)).ln() * (2.0 * beta / (sigma * sigma))
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let s = solve_riccati(
            &full(),
            &RiccatiInput::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), 2.0),
            1e-10,
        )
        .unwrap();
        assert!(s.v_values.iter().all(|v| *v == c(0.0, 0.0)));
        assert!(s.u_values.iter().all(|u| *u == c(0.0, 0.0)));
        assert_eq!(*s.grid.last().unwrap(), 2.0);
    }

    #[test]
    fn linear_degenerate_case() {
        let p = params(0.0, 0.0, 0.0, 0.0, JumpFamily::cgmy(3.0313, 0.79529, 1.7675));
        let m = Mechanisms::new(&p).unwrap();
        let (u1, u2, u3) = (c(-0.3, 1.0), c(-0.2, 0.5), c(0.1, -2.0));
        let s = solve_riccati(&p, &RiccatiInput::new(u1, u2, u3, 1.5), 1e-10).unwrap();
        let slope = u2 + m.xi(u3).unwrap();
        for (t, v) in s.grid.iter().zip(&s.v_values) {
            let want = u1 + slope * *t;
            assert!((v - want).norm() <= 4.0 * f64::EPSILON * (1.0 + want.norm()));
        }
        assert!(s.u_values.iter().all(|u| *u == c(0.0, 0.0)));
    }

    #[test]
    fn cir_case_matches_closed_form() {
        let (beta, b, sigma) = (0.37721, 0.43082, 2.1473);
        let p = params(beta, b, sigma, 0.0, JumpFamily::none());
        for u1 in [c(-0.5, 0.0), c(0.0, 2.0), c(-1.0, -3.0), c(0.1, 0.0)] {
            let s = solve_riccati(&p, &RiccatiInput::new(u1, c(0.0, 0.0), c(0.0, 0.0), 1.0), 1e-10).unwrap();
            for ((t, v), u) in s.grid.iter().zip(&s.v_values).zip(&s.u_values) {
                assert!((v - cir_v(u1, b, sigma, *t)).norm() < 1e-8, "t={t}");
                assert!((u - cir_u(u1, beta, b, sigma, *t)).norm() < 1e-8, "t={t}");
            }
        }
    }

    #[test]
    fn tolerance_controls_error() {
        let (beta, b, sigma) = (0.37721, 0.43082, 2.1473);
        let p = params(beta, b, sigma, 0.0, JumpFamily::none());
        let u1 = c(-1.0, 3.0);
        let input = RiccatiInput::new(u1, c(0.0, 0.0), c(0.0, 0.0), 1.0);
        let exact = cir_v(u1, b, sigma, 1.0);
        let err = |tol| (solve_riccati(&p, &input, tol).unwrap().terminal().0 - exact).norm();
        let (e5, e7, e9) = (err(1e-5), err(1e-7), err(1e-9));
        assert!(e7 < e5 / 10.0 && e9 < e7 / 10.0, "{e5} {e7} {e9}");
    }

    #[test]
    fn transform_of_constant_is_one() {
        let z = c(0.0, 0.0);
        assert_eq!(
            laplace_fourier(&full(), &RiccatiInput::new(z, z, z, 1.0), 0.3, -0.2).unwrap(),
            c(1.0, 0.0)
        );
    }

    #[test]
    fn frozen_activity_gives_levy_transform() {
        let p = params(0.0, 0.0, 0.0, 0.0, JumpFamily::cgmy(3.0313, 0.79529, 1.7675));
        let m = Mechanisms::new(&p).unwrap();
        let u3 = c(0.2, 1.7);
        let t = 0.75;
        let got = laplace_fourier(&p, &RiccatiInput::new(c(0.0, 0.0), c(0.0, 0.0), u3, t), 0.0, 0.0).unwrap();
        let want = (m.xi(u3).unwrap() * p.x0 * t).exp();
        assert!((got - want).norm() < 1e-13);
    }

    #[test]
    fn flow_property() {
        let p = full();
        let tol = 1e-10;
        let (u2, u3) = (c(-0.1, 0.4), c(0.0, 1.2));
        let whole = solve_riccati(&p, &RiccatiInput::new(c(-0.2, 0.5), u2, u3, 1.0), tol)
            .unwrap()
            .terminal();
        let first = solve_riccati(&p, &RiccatiInput::new(c(-0.2, 0.5), u2, u3, 0.5), tol)
            .unwrap()
            .terminal();
        let second = solve_riccati(&p, &RiccatiInput::new(first.0, u2, u3, 0.5), tol)
            .unwrap()
            .terminal();
        assert!((whole.0 - second.0).norm() < 10.0 * tol * (1.0 + whole.0.norm()));
        assert!((whole.1 - (first.1 + second.1)).norm() < 10.0 * tol * (1.0 + whole.1.norm()));
    }

    #[test]
    fn domain_errors() {
        let p = full();
        let bad_u1 = RiccatiInput::new(c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), 1.0);
        assert!(matches!(solve_riccati(&p, &bad_u1, 1e-10), Err(Error::Domain { .. })));
        let bad_u3 = RiccatiInput::new(c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), 1.0);
        assert!(matches!(solve_riccati(&p, &bad_u3, 1e-10), Err(Error::Domain { .. })));
        // positive forcing drives V past theta/eta
        let escape = RiccatiInput::new(c(1.0, 0.0), c(5.0, 0.0), c(0.0, 0.0), 3.0);
        assert!(matches!(
            solve_riccati(&p, &escape, 1e-10),
            Err(Error::NumericalDomain(_))
        ));
    }

    #[test]
    fn csv_dump_has_one_row_per_grid_point() {
        let s = solve_riccati(
            &full(),
            &RiccatiInput::new(c(-0.1, 1.0), c(0.0, 0.0), c(0.0, 0.5), 1.0),
            1e-8,
        )
        .unwrap();
        assert_eq!(s.to_csv().lines().count(), s.grid.len() + 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn characteristic_function_bound_and_conjugation(
            a in -3.0f64..3.0, b in -3.0f64..3.0, d in -3.0f64..3.0, t in 0.0f64..2.0,
            x0 in 0.0f64..2.0, beta in 0.0f64..2.0, sigma in 0.1f64..2.0,
        ) {
            let mut p = full();
            p.x0 = x0;
            p.immigration.beta = beta;
            p.branching.sigma = sigma;
            let input = RiccatiInput::new(c(0.0, a), c(0.0, b), c(0.0, d), t);
            let v = laplace_fourier(&p, &input, 0.0, 0.0).unwrap();
            prop_assert!(v.norm() <= 1.0 + 1e-9, "{}", v);
            let conj = RiccatiInput::new(c(0.0, -a), c(0.0, -b), c(0.0, -d), t);
            let w = laplace_fourier(&p, &conj, 0.0, 0.0).unwrap();
            prop_assert!((v - w.conj()).norm() < 1e-12);
        }
    }
}
