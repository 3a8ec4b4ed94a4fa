use super::*;
use crate::calibration::{standard_pairs, STANDARD_TENORS};
use crate::presets::synthetic_triangle;

fn train_cos() -> CosConfig {
    CosConfig {
        num_terms: 64,
        max_terms: 64,
        tol: 1e-5,
        cumulant_tol: 1e-7,
        parity_tol: 0.0,
        ..CosConfig::default()
    }
}

fn small_params() -> ParamVector {
    let mut p = ParamVector::from_model(&synthetic_triangle()).unwrap();
    for e in p.entries.iter_mut() {
        e.free = matches!(e.name.as_str(), "f0.sigma" | "f1.x0" | "USD.lambda0");
    }
    p
}

fn grid() -> CalibrationGrid {
    let m = synthetic_triangle();
    CalibrationGrid::from_model(&m, &standard_pairs(&m).unwrap(), &STANDARD_TENORS, &train_cos()).unwrap()
}

fn random_net(spec: &NetSpec, seed: u64) -> Net {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Net::init(spec, &mut rng);
    for b in net.b.iter_mut() {
        b.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
    }
    net
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn backprop_matches_central_differences() {
    let spec = NetSpec::new(5, 7);
    let mut net = random_net(&spec, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-2.0..2.0));
    let c = DMatrix::from_fn(7, 3, |_, _| rng.gen_range(-1.0..1.0));
    let loss = |net: &Net, x: &DMatrix<f64>| net.forward(x).0.component_mul(&c).sum();
    let (_, trace) = net.forward(&x);
    let (gw, gb, gx) = net.backward(&trace, c.clone());
    let h = 1e-6;
    for l in 0..net.n_layers() {
        for idx in 0..net.w[l].len() {
            let w0 = net.w[l][idx];
            net.w[l][idx] = w0 + h;
            let up = loss(&net, &x);
            net.w[l][idx] = w0 - h;
            let dn = loss(&net, &x);
            net.w[l][idx] = w0;
            let fd = (up - dn) / (2.0 * h);
            assert!(close(gw[l][idx], fd, 1e-5), "w[{l}][{idx}]: {} vs {fd}", gw[l][idx]);
        }
        for idx in 0..net.b[l].len() {
            let b0 = net.b[l][idx];
            net.b[l][idx] = b0 + h;
            let up = loss(&net, &x);
            net.b[l][idx] = b0 - h;
            let dn = loss(&net, &x);
            net.b[l][idx] = b0;
            let fd = (up - dn) / (2.0 * h);
            assert!(close(gb[l][idx], fd, 1e-5), "b[{l}][{idx}]: {} vs {fd}", gb[l][idx]);
        }
    }
    for idx in 0..x.len() {
        let mut xp = x.clone();
        xp[idx] += h;
        let mut xm = x.clone();
        xm[idx] -= h;
        let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
        assert!(close(gx[idx], fd, 1e-5), "x[{idx}]: {} vs {fd}", gx[idx]);
    }
}

#[test]
fn outputs_stay_inside_the_vol_bounds() {
    let spec = NetSpec::new(3, 4);
    let net = random_net(&spec, 9);
    let x = DMatrix::from_fn(3, 50, |i, j| (i as f64 - 1.0) * (j as f64 - 25.0) * 10.0);
    let (y, _) = net.forward(&x);
    assert!(y.iter().all(|v| *v >= spec.vol_min && *v <= spec.vol_max));
}

fn dummy_surrogate() -> TrainedSurrogate {
    let p = small_params();
    let g = grid();
    let spec = NetSpec::new(p.n_free(), g.len());
    let net = random_net(&spec, 5);
    TrainedSurrogate {
        version: FORMAT_VERSION,
        layers: net.to_layers(),
        input_mean: vec![0.1, -0.2, 0.3],
        input_std: vec![0.5, 2.0, 1.0],
        spec,
        params: p,
        grid: g,
        train_loss: 0.0,
        val_loss: 0.0,
        epochs_run: 0,
    }
}

#[test]
fn input_jacobian_matches_finite_differences() {
    let s = dummy_surrogate();
    let x = [0.3, -0.7, 0.2];
    let (y, jac) = s.evaluate_with_jacobian(&x).unwrap();
    assert_eq!(y, s.evaluate(&x).unwrap());
    let h = 1e-6;
    for c in 0..3 {
        let mut xp = x;
        xp[c] += h;
        let mut xm = x;
        xm[c] -= h;
        let (up, dn) = (s.evaluate(&xp).unwrap(), s.evaluate(&xm).unwrap());
        for r in 0..y.len() {
            let fd = (up[r] - dn[r]) / (2.0 * h);
            assert!((jac[(r, c)] - fd).abs() <= 1e-5 * fd.abs().max(1e-4), "({r},{c})");
        }
    }
}

#[test]
fn surrogate_json_round_trip() {
    let s = dummy_surrogate();
    let text = s.to_json().unwrap();
    let back = TrainedSurrogate::from_json(&text).unwrap();
    assert_eq!(back, s);
    let x = [0.1, 0.2, 0.3];
    assert_eq!(back.evaluate(&x).unwrap(), s.evaluate(&x).unwrap());
    assert_eq!(s.evaluate(&x).unwrap(), s.evaluate(&x).unwrap());
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["version"] = 99.into();
    assert!(TrainedSurrogate::from_json(&v.to_string()).is_err());
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["layers"][1]["rows"] = 29.into();
    assert!(TrainedSurrogate::from_json(&v.to_string()).is_err());
    assert!(s.evaluate(&[0.0; 2]).is_err());
}

#[test]
fn degenerate_bounds_give_the_centre() {
    let p = small_params();
    let g = grid();
    let bounds = SamplerBounds::around(&p, 0.0);
    let ds = generate_training_set(&p, &g, 1, &bounds, 1, &train_cos()).unwrap();
    assert_eq!(ds.inputs, vec![p.flatten()]);
    let direct: Vec<f64> = surface_map(&p.to_model().unwrap(), &g, &train_cos())
        .into_iter()
        .map(Option::unwrap)
        .collect();
    assert_eq!(ds.outputs, vec![direct]);
}

#[test]
fn training_set_is_reproducible_and_sane() {
    let p = small_params();
    let g = grid();
    let bounds = SamplerBounds::around(&p, 0.2);
    let a = generate_training_set(&p, &g, 100, &bounds, 7, &train_cos()).unwrap();
    let b = generate_training_set(&p, &g, 100, &bounds, 7, &train_cos()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.inputs.len(), 100);
    for (x, y) in a.inputs.iter().zip(&a.outputs) {
        assert!(y.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
        let q = p.unflatten(x).unwrap();
        for ((e, lo), hi) in q
            .entries
            .iter()
            .filter(|e| e.free)
            .zip(&bounds.lower)
            .zip(&bounds.upper)
        {
            assert!(e.value >= lo - 1e-12 && e.value <= hi + 1e-12, "{}", e.name);
        }
    }
}

#[test]
fn inadmissible_bounds_are_reported() {
    let p = small_params();
    let mut bounds = SamplerBounds::around(&p, 0.1);
    // USD.lambda0 far beyond the tempering of the base process
    bounds.lower[2] = 50.0;
    bounds.upper[2] = 60.0;
    let err = generate_training_set(&p, &grid(), 2, &bounds, 1, &train_cos()).unwrap_err();
    assert!(err.to_string().contains("rejection"), "{err}");
}

#[test]
fn network_memorizes_a_single_sample() {
    let p = small_params();
    let g = grid();
    let y = surface_map(&p.to_model().unwrap(), &g, &train_cos())
        .into_iter()
        .map(Option::unwrap)
        .collect::<Vec<_>>();
    let ds = Dataset {
        inputs: vec![p.flatten(); 320],
        outputs: vec![y.clone(); 320],
    };
    let s = train(&ds, &p, &g, &TrainConfig::default()).unwrap();
    assert!(s.train_loss <= 1e-6, "loss {}", s.train_loss);
    assert!(s.epochs_run <= 150);
    let err = s
        .evaluate(&p.flatten())
        .unwrap()
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 2e-3);
}

#[test]
fn training_validates_inputs() {
    let p = small_params();
    let g = grid();
    let empty = Dataset {
        inputs: vec![],
        outputs: vec![],
    };
    assert!(train(&empty, &p, &g, &TrainConfig::default()).is_err());
    let ragged = Dataset {
        inputs: vec![vec![0.0; 2]],
        outputs: vec![vec![0.1; 90]],
    };
    assert!(train(&ragged, &p, &g, &TrainConfig::default()).is_err());
    let tiny = Dataset {
        inputs: vec![p.flatten(); 4],
        outputs: vec![vec![0.1; 90]; 4],
    };
    assert!(train(&tiny, &p, &g, &TrainConfig::default()).is_err());
}

fn small_surrogate() -> (TrainedSurrogate, ParamVector, CalibrationGrid) {
    let p = small_params();
    let g = grid();
    let ds = generate_training_set(&p, &g, 400, &SamplerBounds::around(&p, 0.2), 2, &train_cos()).unwrap();
    let config = TrainConfig {
        epochs: 60,
        seed: 1,
        ..Default::default()
    };
    let s = train(&ds, &p, &g, &config).unwrap();
    assert_eq!(train(&ds, &p, &g, &config).unwrap(), s);
    (s, p, g)
}

#[test]
fn deep_calibration_round_trips() {
    let (s, p, g) = small_surrogate();
    assert!(s.val_loss.is_finite() && s.epochs_run > 0);
    let options = CalibrationOptions {
        cos: train_cos(),
        ..Default::default()
    };
    // a target produced by the surrogate itself is matched at once
    let own = s.evaluate(&p.flatten()).unwrap();
    let r = deep_calibrate(&s, &own, &g, &p, &options, false).unwrap();
    assert!(r.iterations <= 1 && r.converged);
    assert_eq!(r.params, p);

    // surrogate then polish recovers a true surface from a perturbed start
    let target: Vec<f64> = surface_map(&p.to_model().unwrap(), &g, &train_cos())
        .into_iter()
        .map(Option::unwrap)
        .collect();
    let mut p0 = p.clone();
    for (n, e) in p0.entries.iter_mut().filter(|e| e.free).enumerate() {
        e.value *= if n % 2 == 0 { 1.1 } else { 0.9 };
    }
    let rough = deep_calibrate(&s, &target, &g, &p0, &options, false).unwrap();
    let polished = DeepCalibrator::new(Arc::new(s.clone()))
        .calibrate(&target, &g, &p0, &options)
        .unwrap();
    assert!(polished.rmse <= 1e-4, "rmse {}", polished.rmse);
    assert!(polished.rmse <= rough.rmse);

    let mut other = g.clone();
    other.cells.pop();
    assert!(deep_calibrate(&s, &target[1..], &other, &p, &options, false).is_err());
}

#[test]
fn surrogate_is_much_faster_than_pricing() {
    let s = dummy_surrogate();
    let p = small_params();
    let model = p.to_model().unwrap();
    let x = p.flatten();
    let t0 = std::time::Instant::now();
    let _ = surface_map(&model, &s.grid, &CosConfig::default());
    let full = t0.elapsed();
    let reps = 200;
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        std::hint::black_box(s.evaluate(std::hint::black_box(&x)).unwrap());
    }
    let net = t0.elapsed() / reps;
    assert!(full >= net * 100, "full {full:?} vs surrogate {net:?}");
}
