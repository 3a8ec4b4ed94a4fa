use super::*;
use crate::fxmarket::{fx_spot, LogFxTransform};
use crate::mechanisms::JumpFamily;
use crate::presets::{black_model, factor, synthetic_triangle, triangle_model};

const TENORS: [f64; 6] = [
    7.0 / 365.0,
    14.0 / 365.0,
    30.0 / 365.0,
    91.0 / 365.0,
    182.0 / 365.0,
    1.0,
];

fn black_config() -> CosConfig {
    CosConfig::default()
}

#[test]
fn black_atm_example() {
    let m = black_model(0.2, 100.0, 0.0, 0.0);
    let p = cos_price(&m, 0, 1, 1.0, &[100.0], CallPut::Call, &black_config()).unwrap();
    assert!((p[0] - 7.965567455405804).abs() < 1e-6, "{}", p[0]);
    assert!((p[0] - 7.9656).abs() < 1e-4);
}

#[test]
fn black_grid_matches_closed_form() {
    let (sigma, s0, rd, rf) = (0.15, 1.1, 0.02, -0.005);
    let m = black_model(sigma, s0, rd, rf);
    for t in TENORS {
        let f = forward(&m, 0, 1, t);
        let strikes: Vec<f64> = [-1.5, -0.7, 0.0, 0.7, 1.5]
            .iter()
            .map(|z| f * (z * sigma * t.sqrt()).exp())
            .collect();
        let prices = cos_price(&m, 0, 1, t, &strikes, CallPut::Call, &black_config()).unwrap();
        for (k, p) in strikes.iter().zip(prices) {
            let want = black_price(f, *k, t, sigma, (-rd * t).exp(), CallPut::Call);
            assert!((p - want).abs() < 1e-6, "T={t} K={k}: {p} vs {want}");
        }
    }
}

#[test]
fn black_cumulants() {
    let (sigma, s0, rd, rf, t) = (0.2, 100.0, 0.01, -0.001, 0.7);
    let m = black_model(sigma, s0, rd, rf);
    let c = cumulants(&m, 0, 1, t, 0.05).unwrap();
    assert!((c.c1 - ((rd - rf) * t - 0.5 * sigma * sigma * t + s0.ln())).abs() < 1e-10);
    assert!((c.c2 - sigma * sigma * t).abs() < 1e-10);
    assert!(c.c4.abs() < 1e-8);
}

#[test]
fn frozen_activity_cgmy_cumulants() {
    let (g, mm, y, drift, x0, lam, t) = (3.0313, 0.79529, 1.7675, -0.1622, 0.8, 0.3, 0.5);
    let mut model = black_model(0.0, 1.0, 0.0, 0.0);
    model.factors[0] = factor(x0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.5, drift, 0.0, JumpFamily::cgmy(g, mm, y));
    model.economies[1].lambda[0] = lam;
    let xi = |u: f64| {
        drift * u + (mm - u).powf(y) - mm.powf(y) + (g + u).powf(y) - g.powf(y)
            + u * y * (mm.powf(y - 1.0) - g.powf(y - 1.0))
    };
    let d2 = y * (y - 1.0) * (mm.powf(y - 2.0) + g.powf(y - 2.0));
    let d4 = y * (y - 1.0) * (y - 2.0) * (y - 3.0) * (mm.powf(y - 4.0) + g.powf(y - 4.0));
    let c = cumulants(&model, 0, 1, t, 0.05).unwrap();
    let c1 = x0 * t * (lam * drift - xi(lam));
    assert!((c.c1 - c1).abs() < 1e-9 * c1.abs().max(1.0), "{} {}", c.c1, c1);
    let c2 = x0 * t * lam * lam * d2;
    assert!((c.c2 / c2 - 1.0).abs() < 1e-7, "{} {}", c.c2, c2);
    let c4 = x0 * t * lam.powi(4) * d4;
    assert!((c.c4 / c4 - 1.0).abs() < 1e-4, "{} {}", c.c4, c4);
}

#[test]
fn cumulants_stable_under_step_halving() {
    for model in [triangle_model(), synthetic_triangle()] {
        for (i, j) in [(1, 2), (2, 1)] {
            let tr = LogFxTransform::new(&model, Pair::new(i, j)).unwrap();
            let a = cumulants_of(&tr, 0.5, 0.05, 1e-13).unwrap();
            let b = cumulants_of(&tr, 0.5, 0.025, 1e-13).unwrap();
            assert!((a.c1 - b.c1).abs() < 1e-6 * a.c1.abs().max(1e-2), "{a:?} {b:?}");
            assert!((a.c2 / b.c2 - 1.0).abs() < 1e-6, "{a:?} {b:?}");
        }
    }
}

#[test]
fn small_strike_limit_is_discounted_forward() {
    let m = synthetic_triangle();
    let t = 0.5;
    let p = cos_price(&m, 1, 2, t, &[1e-6], CallPut::Call, &CosConfig::default()).unwrap();
    let limit = fx_spot(&m, 1, 2) * (-m.economies[2].rate * t).exp();
    assert!((p[0] - limit).abs() < 1e-6 * limit, "{} {}", p[0], limit);
}

fn grid_strikes(model: &FxModel, i: usize, j: usize, t: f64) -> Vec<f64> {
    let f = forward(model, i, j, t);
    // roughly +-3 standard deviations at a 15% vol
    (-6..=6).map(|n| f * (0.075 * n as f64 * t.sqrt()).exp()).collect()
}

#[test]
fn direct_put_parity_and_monotonicity() {
    let m = synthetic_triangle();
    let cfg = CosConfig::default();
    for (i, j) in [(0, 1), (1, 2), (0, 2)] {
        for t in TENORS {
            let strikes = grid_strikes(&m, i, j, t);
            let calls = cos_price(&m, i, j, t, &strikes, CallPut::Call, &cfg).unwrap();
            let puts = cos_price_direct_puts(&m, i, j, t, &strikes, &cfg).unwrap();
            let f = forward(&m, i, j, t);
            let df = (-m.economies[i].rate * t).exp();
            for ((k, c), p) in strikes.iter().zip(&calls).zip(&puts) {
                let gap = (c - p - df * (f - k)).abs();
                assert!(gap <= 1e-10 * f, "({i},{j}) T={t} K={k}: gap {gap:e}");
            }
            assert!(calls.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        }
    }
}

/// The five quoted strikes (10P, 25P, ATM, 25C, 10C) at the model ATM vol.
fn delta_strikes(model: &FxModel, i: usize, j: usize, t: f64) -> Vec<f64> {
    let f = forward(model, i, j, t);
    let df = (-model.economies[i].rate * t).exp();
    let atm = cos_price(model, i, j, t, &[f], CallPut::Call, &CosConfig::default()).unwrap()[0];
    let vol = implied_vol(atm, f, f, t, df).unwrap();
    DeltaLabel::ALL
        .iter()
        .map(|&l| quotes::strike_for(l, f, vol, t))
        .collect()
}

#[test]
fn cos_converges_in_terms_and_range() {
    let m = synthetic_triangle();
    let base = CosConfig::default();
    let double = CosConfig { num_terms: 512, ..base };
    let narrow = CosConfig {
        range_width: 8.0,
        ..base
    };
    let wide = CosConfig {
        range_width: 12.0,
        num_terms: 512,
        ..base
    };
    for t in TENORS {
        let strikes = delta_strikes(&m, 1, 2, t);
        let a = cos_price(&m, 1, 2, t, &strikes, CallPut::Call, &base).unwrap();
        let b = cos_price(&m, 1, 2, t, &strikes, CallPut::Call, &double).unwrap();
        let c = cos_price(&m, 1, 2, t, &strikes, CallPut::Call, &narrow).unwrap();
        let d = cos_price(&m, 1, 2, t, &strikes, CallPut::Call, &wide).unwrap();
        for n in 0..strikes.len() {
            assert!((a[n] - b[n]).abs() <= 1e-7 * a[n], "T={t} n={n}: {} {}", a[n], b[n]);
            assert!((c[n] - d[n]).abs() <= 1e-6 * d[n], "T={t} n={n}: {} {}", c[n], d[n]);
        }
    }
}

#[test]
fn brute_force_density_integration_agrees() {
    let (sigma, s0, rd, rf, t) = (0.25, 1.0, 0.01, 0.0, 0.5);
    let m = black_model(sigma, s0, rd, rf);
    let tr = LogFxTransform::new(&m, Pair::new(0, 1)).unwrap();
    let c = cumulants_of(&tr, t, 0.05, 1e-13).unwrap();
    let sd = c.c2.sqrt();
    // density by direct Fourier inversion, f(y) = (1/π) ∫_0^U Re(e^{-iuy} φ(u)) du
    let nu = 2000;
    let umax = 12.0 / sd;
    let du = umax / nu as f64;
    let phis: Vec<(f64, Complex64)> = (0..=nu)
        .map(|n| {
            let u = n as f64 * du;
            (u, tr.charfun(u, t, 1e-12).unwrap())
        })
        .collect();
    let density = |y: f64| -> f64 {
        let mut s = 0.0;
        for (n, (u, phi)) in phis.iter().enumerate() {
            let w = if n == 0 || n == nu {
                1.0
            } else if n % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * (Complex64::new(0.0, -u * y).exp() * phi).re;
        }
        s * du / 3.0 / std::f64::consts::PI
    };
    let df = (-rd * t).exp();
    for k in [0.8f64, 1.0, 1.2] {
        let (lo, hi) = (k.ln(), c.c1 + 12.0 * sd);
        let ny = 4000;
        let dy = (hi - lo) / ny as f64;
        let mut s = 0.0;
        for n in 0..=ny {
            let y = lo + n as f64 * dy;
            let w = if n == 0 || n == ny {
                1.0
            } else if n % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * (y.exp() - k) * density(y);
        }
        let brute = df * s * dy / 3.0;
        let cos = cos_price(&m, 0, 1, t, &[k], CallPut::Call, &CosConfig::default()).unwrap()[0];
        assert!((cos - brute).abs() < 1e-7, "K={k}: {cos} vs {brute}");
    }
}

#[test]
fn config_validation() {
    let m = black_model(0.2, 1.0, 0.0, 0.0);
    let bad = CosConfig {
        num_terms: 8,
        ..CosConfig::default()
    };
    assert!(cos_price(&m, 0, 1, 1.0, &[1.0], CallPut::Call, &bad).is_err());
    let flat = black_model(0.0, 1.0, 0.0, 0.0);
    assert!(matches!(
        cos_price(&flat, 0, 1, 1.0, &[1.0], CallPut::Call, &CosConfig::default()),
        Err(Error::Pricing(_))
    ));
}
