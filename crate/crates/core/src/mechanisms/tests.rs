use super::*;
use crate::quadrature::{exp_sinh, expm1_minus_linear};
use approx::assert_relative_eq;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn factor1() -> CbitclParams {
    CbitclParams {
        x0: 1.1040,
        immigration: ImmigrationParams {
            beta: 0.37721,
            jump_family: ImmigrationJumps::None,
        },
        branching: BranchingParams {
            b: 0.43082,
            sigma: 2.1473,
            eta: 1.7208,
            theta: 1.9338,
            alpha: 1.1697,
        },
        levy: LevyParams {
            drift: -0.16220,
            gauss_vol: 0.0,
            jump_family: JumpFamily::cgmy(3.0313, 0.79529, 1.7675),
        },
    }
}

fn factor2() -> CbitclParams {
    CbitclParams {
        x0: 0.19652,
        immigration: ImmigrationParams {
            beta: 1.7524,
            jump_family: ImmigrationJumps::None,
        },
        branching: BranchingParams {
            b: -0.73467,
            sigma: 1.1174,
            eta: 2.1855,
            theta: 0.65273,
            alpha: 1.1122,
        },
        levy: LevyParams {
            drift: 0.88065,
            gauss_vol: 0.0,
            jump_family: JumpFamily::cgmy(0.59711, 0.22821, 1.2390),
        },
    }
}

/// `∫ (e^{uz} - 1 - uz) k(z) dz` by quadrature over each tail.
fn integrated_exponent(kernel: &dyn JumpKernel, u: Complex64) -> Complex64 {
    kernel
        .tails()
        .iter()
        .map(|t| {
            exp_sinh(0.0, 1e-13, |z, _| {
                let w = u * (z * t.sign);
                expm1_minus_linear(w) * t.density(z * t.sign)
            })
        })
        .sum()
}

#[test]
fn psi_examples() {
    let imm = |beta| ImmigrationParams {
        beta,
        jump_family: ImmigrationJumps::None,
    };
    assert_eq!(psi(&imm(0.37721), c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
    assert_eq!(psi(&imm(1.7524), c(1.0, 0.0)).unwrap(), c(1.7524, 0.0));
    let v = psi(&imm(0.65766), c(-2.0, 3.0)).unwrap();
    assert_relative_eq!(v.re, -1.31532, max_relative = 1e-14);
    assert_relative_eq!(v.im, 1.97298, max_relative = 1e-14);
}

#[test]
fn mechanisms_vanish_at_zero() {
    for p in [factor1(), factor2()] {
        let m = Mechanisms::new(&p).unwrap();
        assert_eq!(m.psi(c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert_eq!(m.phi(c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert_eq!(m.xi(c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
    }
}

#[test]
fn phi_at_minus_one_matches_levy_integral() {
    let p = factor1();
    let x = c(-1.0, 0.0);
    let v = phi_tempered_stable(&p.branching, x).unwrap();
    let br = &p.branching;
    let kernel = TemperedStable::new(br.eta, br.theta, br.alpha).unwrap();
    let oracle = x * (-br.b) + 0.5 * br.sigma * br.sigma * x * x + integrated_exponent(&kernel, x);
    assert!(v.im == 0.0);
    assert_relative_eq!(v.re, oracle.re, max_relative = 1e-8);
}

#[test]
fn phi_without_jumps_is_quadratic() {
    let br = BranchingParams {
        b: 0.43,
        sigma: 2.1,
        eta: 0.0,
        theta: 1.0,
        alpha: 1.5,
    };
    let x = c(-0.7, 1.3);
    let v = phi_tempered_stable(&br, x).unwrap();
    let expected = -x * 0.43 + 0.5 * 2.1 * 2.1 * x * x;
    assert!((v - expected).norm() < 1e-15);
    // small eta approaches the jump-free limit
    let near = BranchingParams { eta: 1e-7, ..br };
    let w = phi_tempered_stable(&near, x).unwrap();
    assert!((w - expected).norm() < 1e-10);
}

#[test]
fn xi_examples() {
    let brownian = LevyParams {
        drift: 0.0,
        gauss_vol: 1.0,
        jump_family: JumpFamily::none(),
    };
    let v = xi_cgmy(&brownian, c(0.0, 1.0)).unwrap();
    assert_eq!(v, c(-0.5, 0.0));

    let p = factor1();
    let u = c(0.3, 0.0);
    let v = xi_cgmy(&p.levy, u).unwrap();
    let kernel = Cgmy::new(3.0313, 0.79529, 1.7675).unwrap();
    let oracle = u * (-0.16220) + integrated_exponent(&kernel, u);
    assert_eq!(v.im, 0.0);
    assert_relative_eq!(v.re, oracle.re, max_relative = 1e-8);
}

#[test]
fn closed_forms_match_integrals_on_complex_grid() {
    for p in [factor1(), factor2()] {
        let m = Mechanisms::new(&p).unwrap();
        let d = m.bounds();
        for &(re, im) in &[(-2.0f64, 0.0), (-0.5, 1.5), (0.0, -3.0), (-1.0, 4.0)] {
            let x = c(re.min(0.9 * d.dx_upper), im);
            let got = m.branching_kernel().exponent(x).unwrap();
            let want = integrated_exponent(m.branching_kernel().as_ref(), x);
            assert!((got - want).norm() <= 1e-8 * want.norm(), "{x}: {got} vs {want}");
            let u = c(re.clamp(0.9 * d.dz_lower, 0.9 * d.dz_upper), im);
            let got = m.levy_kernel().exponent(u).unwrap();
            let want = integrated_exponent(m.levy_kernel().as_ref(), u);
            assert!((got - want).norm() <= 1e-8 * want.norm(), "{u}: {got} vs {want}");
        }
    }
}

#[test]
fn domain_violations_are_reported() {
    let p = factor2();
    let m = Mechanisms::new(&p).unwrap();
    assert!(matches!(m.phi(c(0.3, 0.0)), Err(Error::Domain { .. })));
    assert!(matches!(m.xi(c(0.23, 0.0)), Err(Error::Domain { .. })));
    assert!(matches!(m.xi(c(-0.6, 0.0)), Err(Error::Domain { .. })));
    // boundary itself is in the closed domain
    assert!(m.xi(c(0.22821, 1.0)).is_ok());
}

#[test]
fn domains_examples() {
    let d = domains(&factor2()).unwrap();
    assert_relative_eq!(d.dx_upper, 0.65273 / 2.1855, max_relative = 1e-15);
    assert!((d.dx_upper - 0.298664).abs() < 1e-6);
    assert_eq!((d.dz_lower, d.dz_upper), (-0.59711, 0.22821));
    let mut p = factor2();
    p.levy.jump_family = JumpFamily::none();
    let d = domains(&p).unwrap();
    assert_eq!((d.dz_lower, d.dz_upper), (f64::NEG_INFINITY, f64::INFINITY));
}

#[test]
fn compensator_examples() {
    let p = factor1();
    let k = compensator_coeffs(&p, 0.0, 0.0).unwrap();
    assert_eq!(
        k,
        CompensatorCoeffs {
            time_coeff: 0.0,
            y_coeff: 0.0
        }
    );
    let k = compensator_coeffs(&p, 0.27244, 0.32863).unwrap();
    let m = Mechanisms::new(&p).unwrap();
    assert_eq!(k.time_coeff, 0.37721 * 0.27244);
    let y = m.phi_real(0.27244).unwrap() + m.xi_real(0.32863).unwrap();
    assert_eq!(k.y_coeff, y);
    let edge = p.branching.theta / p.branching.eta;
    assert!(matches!(
        compensator_coeffs(&p, edge, 0.0),
        Err(Error::Admissibility(_))
    ));
    assert!(matches!(
        compensator_coeffs(&p, 0.1, 0.79529),
        Err(Error::Admissibility(_))
    ));
}

#[test]
fn transform_examples() {
    let p = factor1();
    assert_eq!(transform_params(&p, 0.0, 0.0).unwrap(), p);

    let q = transform_params(&factor2(), 0.0, 0.11410).unwrap();
    assert_relative_eq!(q.levy.jump_family.get("G").unwrap(), 0.71121, max_relative = 1e-14);
    assert_relative_eq!(
        q.levy.jump_family.get("M").unwrap(),
        0.22821 - 0.11410,
        max_relative = 1e-14
    );

    let q = transform_params(&p, 1.12323, 0.0).unwrap();
    assert_relative_eq!(q.branching.theta, 1.9338 - 1.12323 * 1.7208, max_relative = 1e-12);
    assert!(q.branching.theta > 0.0 && q.branching.theta < 0.001);
}

#[test]
fn transformed_mechanisms_are_shifted_and_recentred() {
    let p = factor1();
    let (zeta, lambda) = (0.27244, 0.32863);
    let m = Mechanisms::new(&p).unwrap();
    let q = Mechanisms::new(&transform_params(&p, zeta, lambda).unwrap()).unwrap();
    let phi_z = m.phi_real(zeta).unwrap();
    let xi_l = m.xi_real(lambda).unwrap();
    for x in [c(-1.0, 0.0), c(-0.3, 2.0), c(0.2, -1.0)] {
        let lhs = q.phi(x).unwrap();
        let rhs = m.phi(x + zeta).unwrap() - phi_z;
        assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()), "{lhs} {rhs}");
        let lhs = q.xi(x).unwrap();
        let rhs = m.xi(x + lambda).unwrap() - xi_l;
        assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()), "{lhs} {rhs}");
    }
}

#[test]
fn tilted_measure_integral_matches_transformed_exponent() {
    let p = factor1();
    let (zeta, lambda) = (0.5, -0.4);
    let m = Mechanisms::new(&p).unwrap();
    let q = Mechanisms::new(&transform_params(&p, zeta, lambda).unwrap()).unwrap();
    let x = c(-0.8, 1.1);
    let tails = m.branching_kernel().tails();
    let tilted: Complex64 = tails
        .iter()
        .map(|t| {
            exp_sinh(0.0, 1e-13, |z, _| {
                expm1_minus_linear(x * z) * t.density(z) * (zeta * z).exp()
            })
        })
        .sum();
    let closed = q.branching_kernel().exponent(x).unwrap();
    assert!((closed - tilted).norm() < 1e-8 * tilted.norm());
    let tails = m.levy_kernel().tails();
    let tilted: Complex64 = tails
        .iter()
        .map(|t| {
            exp_sinh(0.0, 1e-13, |a, _| {
                let z = a * t.sign;
                expm1_minus_linear(x * z) * t.density(z) * (lambda * z).exp()
            })
        })
        .sum();
    let closed = q.levy_kernel().exponent(x).unwrap();
    assert!((closed - tilted).norm() < 1e-8 * tilted.norm());
}

#[test]
fn json_round_trip_uses_spec_field_names() {
    let p = factor1();
    let s = serde_json::to_string(&p).unwrap();
    assert!(s.contains("\"jump_family\":{\"family\":\"cgmy\""));
    assert!(s.contains("\"jump_family\":\"none\""));
    let back: CbitclParams = serde_json::from_str(&s).unwrap();
    assert_eq!(back, p);
}

#[test]
fn invalid_parameters_are_rejected() {
    let mut p = factor1();
    p.branching.alpha = 2.0;
    assert!(Mechanisms::new(&p).is_err());
    let mut p = factor1();
    p.levy.jump_family = JumpFamily::cgmy(-1.0, 1.0, 1.5);
    assert!(Mechanisms::new(&p).is_err());
    let mut p = factor1();
    p.x0 = -0.1;
    assert!(Mechanisms::new(&p).is_err());
}

fn second_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

proptest! {
    #[test]
    fn real_mechanisms_are_real_and_convex(
        eta in 0.2f64..3.0, theta in 0.0f64..3.0, alpha in 1.05f64..1.95,
        g in 0.1f64..4.0, m_ in 0.1f64..4.0, y in 1.05f64..1.95,
        s in 0.0f64..1.0, frac in 0.0f64..1.0,
    ) {
        let p = CbitclParams {
            x0: 1.0,
            immigration: ImmigrationParams { beta: 0.5, jump_family: ImmigrationJumps::None },
            branching: BranchingParams { b: 0.3, sigma: 0.8, eta, theta, alpha },
            levy: LevyParams { drift: 0.1, gauss_vol: s, jump_family: JumpFamily::cgmy(g, m_, y) },
        };
        let mech = Mechanisms::new(&p).unwrap();
        let d = mech.bounds();
        let h = 1e-3;
        let x = -3.0 + frac * (d.dx_upper - 2.0 * h + 3.0);
        let v = mech.phi(c(x, 0.0)).unwrap();
        prop_assert_eq!(v.im, 0.0);
        let d2 = second_difference(|t| mech.phi_real(t).unwrap(), x, h);
        prop_assert!(d2 >= -1e-10, "phi2 = {}", d2);
        let u = d.dz_lower + 2.0 * h + frac * (d.dz_upper - d.dz_lower - 4.0 * h);
        let w = mech.xi(c(u, 0.0)).unwrap();
        prop_assert_eq!(w.im, 0.0);
        let d2 = second_difference(|t| mech.xi_real(t).unwrap(), u, h);
        prop_assert!(d2 >= -1e-10, "xi'' = {}", d2);
    }

    #[test]
    fn zero_exposure_transform_is_identity(
        eta in 0.2f64..3.0, theta in 0.0f64..3.0, alpha in 1.05f64..1.95,
        g in 0.1f64..4.0, m_ in 0.1f64..4.0, y in 1.05f64..1.95, b in -2.0f64..2.0,
    ) {
        let p = CbitclParams {
            x0: 0.7,
            immigration: ImmigrationParams { beta: 0.2, jump_family: ImmigrationJumps::None },
            branching: BranchingParams { b, sigma: 1.3, eta, theta, alpha },
            levy: LevyParams { drift: -0.4, gauss_vol: 0.2, jump_family: JumpFamily::cgmy(g, m_, y) },
        };
        prop_assert_eq!(transform_params(&p, 0.0, 0.0).unwrap(), p);
    }

    #[test]
    fn conjugate_symmetry(re in -2.0f64..0.0, im in -5.0f64..5.0) {
        let m = Mechanisms::new(&factor1()).unwrap();
        let x = c(re, im);
        let a = m.phi(x).unwrap();
        let b = m.phi(x.conj()).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-12 * (1.0 + a.norm()));
        let u = c(re.clamp(-3.0, 0.7), im);
        let a = m.xi(u).unwrap();
        let b = m.xi(u.conj()).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-12 * (1.0 + a.norm()));
    }
}
