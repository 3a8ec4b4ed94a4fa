//! Ready-made models used by tests, examples and the CLI.

use crate::fxmarket::{EconomyParams, FxModel};
use crate::mechanisms::{BranchingParams, CbitclParams, ImmigrationJumps, ImmigrationParams, JumpFamily, LevyParams};

#[allow(clippy::too_many_arguments)]
pub fn factor(
    x0: f64,
    beta: f64,
    b: f64,
    sigma: f64,
    eta: f64,
    theta: f64,
    alpha: f64,
    drift: f64,
    gauss_vol: f64,
    jump_family: JumpFamily,
) -> CbitclParams {
    CbitclParams {
        x0,
        immigration: ImmigrationParams {
            beta,
            jump_family: ImmigrationJumps::None,
        },
        branching: BranchingParams {
            b,
            sigma,
            eta,
            theta,
            alpha,
        },
        levy: LevyParams {
            drift,
            gauss_vol,
            jump_family,
        },
    }
}

fn economy(code: &str, rate: f64, zeta: [f64; 2], lambda: [f64; 2], s0: f64) -> EconomyParams {
    EconomyParams {
        currency: code.into(),
        rate,
        zeta: zeta.to_vec(),
        lambda: lambda.to_vec(),
        s0,
    }
}

/// Two-factor JPY/USD/EUR model with the published standard-calibration
/// parameters. Rates and spots are representative mid-2020 levels.
pub fn triangle_model() -> FxModel {
    FxModel {
        factors: vec![
            factor(
                1.1040,
                0.37721,
                0.43082,
                2.1473,
                1.7208,
                1.9338,
                1.1697,
                -0.16220,
                0.0,
                JumpFamily::cgmy(3.0313, 0.79529, 1.7675),
            ),
            factor(
                0.19652,
                1.7524,
                -0.73467,
                1.1174,
                2.1855,
                0.65273,
                1.1122,
                0.88065,
                0.0,
                JumpFamily::cgmy(0.59711, 0.22821, 1.2390),
            ),
        ],
        economies: vec![
            economy("JPY", -0.001, [1.12323, 0.232636], [0.39764, 0.11410], 1.0),
            economy("USD", 0.0025, [0.27244, 0.092184], [0.32863, -0.014839], 107.5),
            economy("EUR", -0.005, [0.089747, 0.025973], [0.16260, 0.040496], 117.2),
        ],
        horizon: 1.0,
    }
}

/// Same triangle with the deep-calibration parameter column.
pub fn triangle_model_deep() -> FxModel {
    let mut m = triangle_model();
    m.factors[0].x0 = 1.1106;
    m.factors[1].x0 = 0.18549;
    m.factors[0].immigration.beta = 0.65766;
    m.factors[1].immigration.beta = 1.7782;
    m.economies[0].zeta[0] = 1.12366;
    m.economies[1].zeta[1] = 0.060470;
    m.economies[2].zeta = vec![0.097352, 0.024422];
    m
}

/// Moderate-volatility JPY/USD/EUR model with smiles in the 5-20% range, used
/// where realistic implied volatilities matter (calibration, surrogate training).
pub fn synthetic_triangle() -> FxModel {
    FxModel {
        factors: vec![
            factor(
                1.0,
                0.8,
                0.9,
                0.6,
                0.05,
                1.0,
                1.4,
                0.0,
                0.3,
                JumpFamily::cgmy(15.0, 15.0, 1.3),
            ),
            factor(
                0.5,
                0.4,
                1.2,
                0.9,
                0.08,
                1.5,
                1.2,
                0.0,
                0.2,
                JumpFamily::cgmy(12.0, 14.0, 1.5),
            ),
        ],
        economies: vec![
            economy("JPY", -0.001, [0.05, 0.10], [0.10, 0.05], 1.0),
            economy("USD", 0.0025, [0.20, 0.00], [0.25, -0.05], 107.5),
            economy("EUR", -0.005, [0.10, 0.15], [0.15, 0.10], 117.2),
        ],
        horizon: 1.0,
    }
}

/// Constant activity `X ≡ 1` and Brownian `L`: `log S^{DOM,FOR}` is Gaussian with volatility `sigma`.
pub fn black_model(sigma: f64, spot: f64, rate_dom: f64, rate_for: f64) -> FxModel {
    let f = factor(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.5, 0.0, sigma, JumpFamily::none());
    FxModel {
        factors: vec![f],
        economies: vec![
            EconomyParams {
                currency: "DOM".into(),
                rate: rate_dom,
                zeta: vec![0.0],
                lambda: vec![0.0],
                s0: 1.0,
            },
            EconomyParams {
                currency: "FOR".into(),
                rate: rate_for,
                zeta: vec![0.0],
                lambda: vec![1.0],
                s0: spot,
            },
        ],
        horizon: 5.0,
    }
}
