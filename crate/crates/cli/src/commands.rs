use std::fs;
use std::path::Path;
use std::sync::Arc;

use cbitcl_core::calibration::{
    calibrator, generate_synthetic_surface, heston_restriction, quotes_for_surface, CalibrationGrid,
    CalibrationOptions, CalibrationResult, Calibrator, ParamVector, STANDARD_PAIRS, STANDARD_TENORS,
};
use cbitcl_core::deep_surrogate::{
    generate_training_set, train, DeepCalibrator, SamplerBounds, TrainConfig, TrainedSurrogate,
};
use cbitcl_core::fxmarket::{forward, martingale_drift_check, FxModel, LogFxTransform, Pair};
use cbitcl_core::mc_oracle::{esscher_reweighted_mean, simulate_fx, McEstimate, PathBundle, SimConfig};
use cbitcl_core::presets;
use cbitcl_core::pricing::{
    cos_price, implied_vol_cp, read_quotes_csv, write_quotes_csv, CallPut, CosConfig, CosExpansion,
};
use serde::Serialize;
use serde_json::json;

use crate::output::{derive_seed, strip_comment_lines, unwrap_document, write_csv, write_json, Header};
use crate::{
    CalibrateArgs, CalibrationFlags, CheckArgs, Cli, CliError, Command, CosArgs, DeepCalibrateArgs, DeepTrainArgs,
    Method, ModelSource, Preset, PriceArgs, SimulateArgs, SurfaceArgs,
};

/// Fixed 128-term expansion, accurate to ~1e-7 in vol on moderate surfaces.
const CALIBRATION_COS: CosConfig = CosConfig {
    num_terms: 128,
    max_terms: 128,
    tail_tol: 1e-12,
    range_width: 10.0,
    cumulant_fd_step: 0.05,
    tol: 1e-6,
    cumulant_tol: 1e-8,
    parity_tol: 0.0,
};

/// Fixed 64-term expansion for generating training surfaces.
const TRAINING_COS: CosConfig = CosConfig {
    num_terms: 64,
    max_terms: 64,
    tol: 1e-5,
    cumulant_tol: 1e-7,
    ..CALIBRATION_COS
};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Price(a) => price(cli, a),
        Command::Surface(a) => surface(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Check(a) => check(cli, a),
        Command::Calibrate(a) => calibrate(cli, a),
        Command::DeepTrain(a) => deep_train(cli, a),
        Command::DeepCalibrate(a) => deep_calibrate(cli, a),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn text(path: &Path, bytes: &[u8]) -> Result<String, CliError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| CliError::Data(format!("{}: not UTF-8", path.display())))
}

/// The model and the bytes it was read from (empty for presets).
fn load_model(src: &ModelSource) -> Result<(FxModel, Vec<u8>), CliError> {
    match (&src.model, src.preset) {
        (Some(path), _) => {
            let bytes = read(path)?;
            let doc = unwrap_document(&text(path, &bytes)?, "model")?;
            let model = FxModel::from_json(&doc).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Ok((model, bytes))
        }
        (None, Some(Preset::Triangle)) => Ok((presets::triangle_model(), Vec::new())),
        (None, Some(Preset::TriangleDeep)) => Ok((presets::triangle_model_deep(), Vec::new())),
        (None, Some(Preset::Synthetic)) => Ok((presets::synthetic_triangle(), Vec::new())),
        (None, None) => Err(CliError::Usage("one of --model or --preset is required".into())),
    }
}

fn load_quotes(path: &Path, model: &FxModel) -> Result<(CalibrationGrid, Vec<f64>, Vec<u8>), CliError> {
    let bytes = read(path)?;
    let body = strip_comment_lines(&text(path, &bytes)?);
    let sets = read_quotes_csv(body.as_bytes()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (grid, vols) = CalibrationGrid::from_quotes(model, &sets)?;
    Ok((grid, vols, bytes))
}

fn load_surrogate(path: &Path) -> Result<(TrainedSurrogate, Vec<u8>), CliError> {
    let bytes = read(path)?;
    let doc = unwrap_document(&text(path, &bytes)?, "surrogate")?;
    let s = TrainedSurrogate::from_json(&doc).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((s, bytes))
}

impl CosArgs {
    fn resolve(&self, base: CosConfig) -> Result<CosConfig, CliError> {
        let mut c = base;
        if let Some(n) = self.num_terms {
            c.num_terms = n;
            c.max_terms = c.max_terms.max(n);
        }
        if let Some(n) = self.max_terms {
            c.max_terms = n;
        }
        if let Some(t) = self.tol {
            c.tol = t;
        }
        if let Some(t) = self.cumulant_tol {
            c.cumulant_tol = t;
        }
        c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }
}

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)
            .and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(buf)
}

fn default_pairs(model: &FxModel) -> Vec<Pair> {
    let standard: Option<Vec<Pair>> = STANDARD_PAIRS.iter().map(|c| model.pair(c).ok()).collect();
    standard.unwrap_or_else(|| {
        let n = model.n_economies();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| Pair::new(i, j))).collect()
    })
}

fn log(cli: &Cli, msg: impl AsRef<str>) {
    if cli.verbose {
        eprintln!("{}", msg.as_ref());
    }
}

fn price(cli: &Cli, a: &PriceArgs) -> Result<(), CliError> {
    let (model, model_bytes) = load_model(&a.model)?;
    let cfg = a.cos.resolve(CosConfig::default())?;
    let pair = model.pair(&a.pair)?;
    let cp = if a.put { CallPut::Put } else { CallPut::Call };
    let mut rows = Vec::new();
    for &t in &a.tenor {
        if !(t > 0.0) {
            return Err(CliError::Usage(format!("tenor must be positive, got {t}")));
        }
        let prices = cos_price(&model, pair.domestic, pair.foreign, t, &a.strikes, cp, &cfg)
            .map_err(|e| CliError::Numerical(format!("{} T={t}: {e}", a.pair)))?;
        let f = forward(&model, pair.domestic, pair.foreign, t);
        let df = (-model.economies[pair.domestic].rate * t).exp();
        for (&k, &p) in a.strikes.iter().zip(&prices) {
            let iv = implied_vol_cp(p, f, k, t, df, cp).ok();
            rows.push((t, k, f, p, iv));
        }
    }
    let body = csv_bytes(|w| {
        w.write_record(["pair", "tenor", "strike", "option", "forward", "price", "implied_vol"])?;
        for (t, k, f, p, iv) in &rows {
            w.write_record([
                a.pair.clone(),
                t.to_string(),
                k.to_string(),
                if a.put { "put" } else { "call" }.to_string(),
                f.to_string(),
                p.to_string(),
                iv.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(())
    })?;
    let header = Header::new("price", cli.seed, a, &[&model_bytes]);
    match &a.out {
        Some(path) => write_csv(path, &header, &body),
        None => {
            print!("{}{}", header.csv_lines(), String::from_utf8_lossy(&body));
            Ok(())
        }
    }
}

fn surface(cli: &Cli, a: &SurfaceArgs) -> Result<(), CliError> {
    let (model, model_bytes) = load_model(&a.model)?;
    let cfg = a.cos.resolve(CosConfig::default())?;
    let pairs = if a.pairs.is_empty() {
        default_pairs(&model)
    } else {
        a.pairs.iter().map(|c| model.pair(c)).collect::<Result<_, _>>()?
    };
    let tenors: Vec<f64> = if a.tenors.is_empty() {
        STANDARD_TENORS.to_vec()
    } else {
        a.tenors.clone()
    };
    if !(a.noise_bps >= 0.0) {
        return Err(CliError::Usage(format!(
            "--noise-bps must be non-negative, got {}",
            a.noise_bps
        )));
    }
    let mut cells = Vec::new();
    for &pair in &pairs {
        log(cli, format!("building grid for {}", model.pair_code(pair)));
        let g = CalibrationGrid::from_model(&model, &[pair], &tenors, &cfg)
            .map_err(|e| CliError::Numerical(format!("{}: {e}", model.pair_code(pair))))?;
        cells.extend(g.cells);
    }
    let grid = CalibrationGrid { cells };
    let seed = derive_seed(cli.seed, "surface.noise");
    let s = generate_synthetic_surface(&model, &grid, a.noise_bps, seed, &cfg)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let body = csv_bytes(|w| {
        w.write_record(["pair", "tenor", "label", "strike", "vol", "clipped"])?;
        for ((c, v), clipped) in grid.cells.iter().zip(&s.vols).zip(&s.clipped) {
            w.write_record([
                model.pair_code(c.pair),
                c.tenor.to_string(),
                c.label.as_str().to_string(),
                c.strike.to_string(),
                v.to_string(),
                clipped.to_string(),
            ])?;
        }
        Ok(())
    })?;
    let header = Header::new("surface", cli.seed, a, &[&model_bytes]);
    write_csv(&a.out, &header, &body)?;
    if let Some(path) = &a.quotes_out {
        let sets = quotes_for_surface(&model, &grid, &s.vols)?;
        let mut buf = Vec::new();
        write_quotes_csv(&sets, &mut buf)?;
        write_csv(path, &header, &buf)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FactorStat {
    factor: usize,
    time: f64,
    mean_x: McEstimate,
}

#[derive(Serialize)]
struct PairStat {
    pair: String,
    time: f64,
    forward: f64,
    /// `E^i[S^{i,j}_t]` by reweighting base-measure paths.
    mean: McEstimate,
    z_score: f64,
}

fn pair_stats(model: &FxModel, b: &PathBundle) -> Vec<PairStat> {
    let n = model.n_economies();
    let mut out = Vec::new();
    for t in 0..b.n_times() {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let f = forward(model, i, j, b.times[t]);
                let mean = esscher_reweighted_mean(b, i, t, |b, p| b.fx(i, j, p, t));
                out.push(PairStat {
                    pair: model.pair_code(Pair::new(i, j)),
                    time: b.times[t],
                    forward: f,
                    mean,
                    z_score: mean.z_score(&McEstimate { mean: f, std_err: 0.0 }),
                });
            }
        }
    }
    out
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<(), CliError> {
    let (model, model_bytes) = load_model(&a.model)?;
    let horizon = a.horizon.unwrap_or(model.horizon);
    let config = SimConfig {
        n_paths: a.paths,
        n_steps: a.steps,
        seed: derive_seed(cli.seed, "simulate.paths"),
        small_jump_cutoff: a.cutoff,
        horizon,
        observe: if a.observe.is_empty() {
            vec![horizon]
        } else {
            a.observe.clone()
        },
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    log(cli, format!("simulating {} paths", a.paths));
    let b = simulate_fx(&model, &config)?;
    let mut factors = Vec::new();
    for t in 0..b.n_times() {
        for k in 0..model.n_factors() {
            factors.push(FactorStat {
                factor: k,
                time: b.times[t],
                mean_x: McEstimate::from_samples((0..b.n_paths).map(|p| b.x(k, p, t))),
            });
        }
    }
    let header = Header::new("simulate", cli.seed, a, &[&model_bytes]);
    let report = json!({
        "config": config,
        "factors": factors,
        "pairs": pair_stats(&model, &b),
    });
    write_json(&a.out, &header, &report)?;
    if let Some(path) = &a.dump_paths {
        let mut buf = Vec::new();
        b.write_csv(&mut buf)?;
        write_csv(path, &header, &buf)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Diagnostic {
    name: &'static str,
    passed: bool,
    worst: f64,
    tolerance: f64,
    detail: Vec<String>,
}

fn symmetry(b: &PathBundle, n: usize, tol: f64) -> Diagnostic {
    let mut worst: f64 = 0.0;
    for p in 0..b.n_paths {
        for t in 0..b.n_times() {
            for i in 0..n {
                for j in 0..n {
                    let direct = b.fx(i, j, p, t);
                    worst = worst.max((direct * b.fx(j, i, p, t) - 1.0).abs());
                    for k in 0..n {
                        worst = worst.max((b.fx(i, k, p, t) * b.fx(k, j, p, t) - direct).abs() / direct.abs());
                    }
                }
            }
        }
    }
    Diagnostic {
        name: "symmetry",
        passed: worst <= tol,
        worst,
        tolerance: tol,
        detail: vec![format!("{} paths x {} times", b.n_paths, b.n_times())],
    }
}

fn martingale(model: &FxModel, times: &[f64], tol: f64) -> Diagnostic {
    let n = model.n_economies();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    let mut passed = true;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let code = model.pair_code(Pair::new(i, j));
            match martingale_drift_check(model, i, j, times, 1e-12) {
                Ok(r) => {
                    worst = worst.max(r.max_gap);
                    if r.max_gap > tol {
                        passed = false;
                        detail.push(format!("{code}: gap {:.3e}", r.max_gap));
                    }
                }
                Err(e) => {
                    passed = false;
                    detail.push(format!("{code}: {e}"));
                }
            }
        }
    }
    Diagnostic {
        name: "martingale",
        passed,
        worst,
        tolerance: tol,
        detail,
    }
}

/// Parity on every pair that can be priced; pairs whose transform cannot be
/// expanded are listed as skipped rather than failed.
fn parity(cli: &Cli, model: &FxModel, times: &[f64], tol: f64, cfg: &CosConfig) -> Diagnostic {
    let n = model.n_economies();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    let mut priced = 0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let code = model.pair_code(Pair::new(i, j));
            for &t in times {
                log(cli, format!("parity {code} T={t}"));
                let f = forward(model, i, j, t);
                let df = (-model.economies[i].rate * t).exp();
                let ks: Vec<f64> = [0.8, 0.9, 1.0, 1.1, 1.2].iter().map(|m| m * f).collect();
                // One expansion for both legs: calls as usual, puts from their own payoff.
                let both = LogFxTransform::new(model, Pair::new(i, j))
                    .and_then(|tr| CosExpansion::new(model, &tr, t, cfg))
                    .and_then(|e| Ok((e.prices(&ks, CallPut::Call, false)?, e.prices(&ks, CallPut::Put, true)?)));
                match both {
                    Ok((calls, puts)) => {
                        priced += 1;
                        for ((c, p), k) in calls.iter().zip(&puts).zip(&ks) {
                            let err = (c - p - df * (f - k)).abs() / f;
                            if err > tol {
                                detail.push(format!("{code} T={t} K={k}: parity error {err:.3e}"));
                            }
                            worst = worst.max(err);
                        }
                    }
                    Err(e) => detail.push(format!("{code} T={t}: skipped, cannot price ({e})")),
                }
            }
        }
    }
    Diagnostic {
        name: "parity",
        passed: priced > 0 && worst <= tol,
        worst,
        tolerance: tol,
        detail,
    }
}

fn check(cli: &Cli, a: &CheckArgs) -> Result<(), CliError> {
    let (model, model_bytes) = load_model(&a.model)?;
    let cfg = a.cos.resolve(CosConfig::default())?;
    let horizon = a.times.iter().copied().fold(0.0, f64::max);
    let config = SimConfig {
        n_paths: a.paths,
        n_steps: a.steps,
        seed: derive_seed(cli.seed, "check.paths"),
        horizon,
        observe: a.times.clone(),
        ..SimConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    log(cli, "simulating paths for the symmetry check");
    let b = simulate_fx(&model, &config)?;
    let n = model.n_economies();
    let diagnostics = vec![
        symmetry(&b, n, a.symmetry_tol),
        martingale(&model, &a.times, a.gap_tol),
        parity(cli, &model, &a.times, a.parity_tol, &cfg),
    ];
    for d in &diagnostics {
        println!(
            "{:<10} {} worst {:.3e} (tol {:.0e})",
            d.name,
            if d.passed { "PASS" } else { "FAIL" },
            d.worst,
            d.tolerance
        );
        for line in &d.detail {
            println!("    {line}");
        }
    }
    if let Some(path) = &a.out {
        let header = Header::new("check", cli.seed, a, &[&model_bytes]);
        write_json(path, &header, &json!({ "diagnostics": diagnostics }))?;
    }
    let failed: Vec<&str> = diagnostics.iter().filter(|d| !d.passed).map(|d| d.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "diagnostics failed: {}",
            failed.join(", ")
        )))
    }
}

fn options(flags: &CalibrationFlags) -> Result<CalibrationOptions, CliError> {
    Ok(CalibrationOptions {
        max_iter: flags.max_iter,
        cos: flags.cos.resolve(CALIBRATION_COS)?,
        ..Default::default()
    })
}

fn write_result(path: &Path, header: &Header, method: &str, result: &CalibrationResult) -> Result<(), CliError> {
    let model = result.params.to_model()?;
    write_json(
        path,
        header,
        &json!({ "method": method, "model": model, "result": result }),
    )
}

fn summary(result: &CalibrationResult) {
    println!(
        "rmse {:.6e} after {} iterations ({:?})",
        result.rmse, result.iterations, result.stop_reason
    );
}

fn calibrate(cli: &Cli, a: &CalibrateArgs) -> Result<(), CliError> {
    if a.method == Method::Deep {
        let surrogate = a
            .surrogate
            .as_ref()
            .ok_or_else(|| CliError::Usage("--method deep needs --surrogate".into()))?;
        let deep = DeepCalibrateArgs {
            quotes: a.quotes.clone(),
            model: a.model.clone(),
            surrogate: surrogate.clone(),
            flags: a.flags.clone(),
            out: a.out.clone(),
        };
        return deep_calibrate(cli, &deep);
    }
    let (mut model, model_bytes) = load_model(&a.model)?;
    if a.heston {
        model = heston_restriction(&model);
    }
    let (grid, vols, quote_bytes) = load_quotes(&a.quotes, &model)?;
    let mut p0 = ParamVector::from_model(&model)?;
    for prefix in &a.freeze {
        p0.freeze_prefix(prefix);
    }
    if p0.n_free() == 0 {
        return Err(CliError::Usage("every parameter is frozen".into()));
    }
    let opts = options(&a.flags)?;
    log(
        cli,
        format!("calibrating {} parameters to {} vols", p0.n_free(), vols.len()),
    );
    let result = calibrator("standard", None)?.calibrate(&vols, &grid, &p0, &opts)?;
    summary(&result);
    let header = Header::new("calibrate", cli.seed, a, &[&model_bytes, &quote_bytes]);
    write_result(&a.out, &header, "standard", &result)
}

fn deep_train(cli: &Cli, a: &DeepTrainArgs) -> Result<(), CliError> {
    let (model, model_bytes) = load_model(&a.model)?;
    let cfg = a.cos.resolve(TRAINING_COS)?;
    let (grid, quote_bytes) = match &a.quotes {
        Some(path) => {
            let (g, _, bytes) = load_quotes(path, &model)?;
            (g, bytes)
        }
        None => (
            CalibrationGrid::from_model(&model, &default_pairs(&model), &STANDARD_TENORS, &cfg)?,
            Vec::new(),
        ),
    };
    let mut params = ParamVector::from_model(&model)?;
    for prefix in &a.freeze {
        params.freeze_prefix(prefix);
    }
    if a.samples < 2 || !(a.rel > 0.0 && a.rel < 1.0) {
        return Err(CliError::Usage("need --samples >= 2 and --rel in (0, 1)".into()));
    }
    let bounds = SamplerBounds::around(&params, a.rel);
    log(cli, format!("generating {} training surfaces", a.samples));
    let data = generate_training_set(
        &params,
        &grid,
        a.samples,
        &bounds,
        derive_seed(cli.seed, "deep-train.samples"),
        &cfg,
    )?;
    let config = TrainConfig {
        n_train: a.samples,
        batch_size: a.batch_size,
        epochs: a.epochs,
        patience: a.patience,
        learning_rate: a.learning_rate,
        seed: derive_seed(cli.seed, "deep-train.init"),
        ..Default::default()
    };
    log(cli, "training");
    let s = train(&data, &params, &grid, &config)?;
    println!(
        "trained {} epochs: train loss {:.3e}, validation loss {:.3e}",
        s.epochs_run, s.train_loss, s.val_loss
    );
    let header = Header::new("deep-train", cli.seed, a, &[&model_bytes, &quote_bytes]);
    write_json(&a.out, &header, &json!({ "surrogate": s }))
}

fn deep_calibrate(cli: &Cli, a: &DeepCalibrateArgs) -> Result<(), CliError> {
    let (model, model_bytes) = load_model(&a.model)?;
    let (surrogate, surrogate_bytes) = load_surrogate(&a.surrogate)?;
    let (grid, vols, quote_bytes) = load_quotes(&a.quotes, &model)?;
    let init = ParamVector::from_model(&model)?;
    let mut p0 = surrogate.params.clone();
    for e in p0.entries.iter_mut() {
        e.value = init
            .get(&e.name)
            .ok_or_else(|| CliError::Data(format!("initial model has no parameter {}", e.name)))?;
    }
    p0.to_model()?;
    let opts = options(&a.flags)?;
    let mut method = DeepCalibrator::new(Arc::new(surrogate));
    method.polish = !a.flags.no_polish;
    log(cli, format!("deep calibration of {} parameters", p0.n_free()));
    let result = method.calibrate(&vols, &grid, &p0, &opts)?;
    summary(&result);
    let header = Header::new(
        "deep-calibrate",
        cli.seed,
        a,
        &[&model_bytes, &surrogate_bytes, &quote_bytes],
    );
    write_result(&a.out, &header, "deep", &result)
}
