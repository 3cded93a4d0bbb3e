use std::f64::consts::PI;

use nmm_tof::*;

fn single(autocorr: Autocorr) -> ToFModel {
    ToFModel {
        frequencies: vec![90e6],
        amplitudes: vec![1.3],
        n_steps: 4,
        autocorr,
    }
}

fn ramp_scene(model: ToFModel, lo: f64, hi: f64) -> ToFScene {
    let (h, w) = (8, 8);
    let depth = (0..h * w).map(|k| lo + (hi - lo) * k as f64 / (h * w - 1) as f64).collect();
    ToFScene {
        height: h,
        width: w,
        depth,
        background: vec![0.7; model.frequencies.len()],
        model,
    }
}

#[test]
fn cosine_differences_match_trig_identities() {
    let scene = ramp_scene(single(Autocorr::Cosine), 0.2, 1.5);
    let m = forward(&scene, 1, 0.0, 0).unwrap();
    for (k, &u) in scene.depth.iter().enumerate() {
        let phi = scene.model.phase(0, u);
        assert!((m.channel(0)[k] - 2.0 * 1.3 * phi.cos()).abs() < 1e-12);
        assert!((m.channel(1)[k] + 2.0 * 1.3 * phi.sin()).abs() < 1e-12);
    }
}

#[test]
fn background_cancels_exactly() {
    let mut scene = ToFScene::piecewise(16, 16, 3, (1.0, 5.0), 2, ToFModel::two_frequency(Autocorr::default()), 1);
    let a = forward(&scene, 2, 0.05, 9).unwrap();
    scene.background = vec![17.0, -3.0];
    let b = forward(&scene, 2, 0.05, 9).unwrap();
    assert_eq!(a, b);
    // The raw samples do see it.
    assert_ne!(scene.sample(0, 0, 1.0), scene.sample(0, 0, 1.0) - 17.0 + 0.5);
}

#[test]
fn sample_differences_are_the_channels() {
    let scene = ToFScene::piecewise(8, 8, 2, (1.0, 5.0), 1, ToFModel::two_frequency(Autocorr::default()), 4);
    let m = forward(&scene, 1, 0.0, 0).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            for (k, &u) in scene.depth.iter().enumerate() {
                let diff = scene.sample(i, j, u) - scene.sample(i, j + 2, u);
                assert!((m.channel(2 * i + j)[k] - diff).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn period_shift_is_invisible() {
    let model = single(Autocorr::default());
    let p = model.unambiguous_range(0);
    let a = ramp_scene(model.clone(), 0.3, 1.2);
    let mut b = a.clone();
    b.depth.iter_mut().for_each(|u| *u += p);
    let (ya, yb) = (forward(&a, 1, 0.0, 0).unwrap(), forward(&b, 1, 0.0, 0).unwrap());
    for (x, y) in ya.data.iter().zip(&yb.data) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn closed_form_round_trip() {
    let model = single(Autocorr::Cosine);
    let p = model.unambiguous_range(0);
    let scene = ramp_scene(model.clone(), 0.0, p * 0.999);
    let m = forward(&scene, 1, 0.0, 0).unwrap();
    let cf = closed_form_depth(&m, &model, 0).unwrap();
    assert!(cf.valid.iter().all(|&v| v));
    let err = rmse(&cf.depth, &scene.depth);
    assert!(err < 1e-9, "{err}");
    for d in &cf.depth {
        assert!((0.0..p).contains(d));
    }
}

#[test]
fn closed_form_wraps_long_depths() {
    let model = single(Autocorr::Cosine);
    let p = model.unambiguous_range(0);
    let scene = ramp_scene(model.clone(), p + 0.1, 2.0 * p + 0.5);
    let cf = closed_form_depth(&forward(&scene, 1, 0.0, 0).unwrap(), &model, 0).unwrap();
    for (d, u) in cf.depth.iter().zip(&scene.depth) {
        assert!((d - u.rem_euclid(p)).abs() < 1e-9);
    }
}

#[test]
fn closed_form_ignores_amplitude_and_flags_silence() {
    let model = single(Autocorr::Cosine);
    let scene = ramp_scene(model.clone(), 0.2, 1.4);
    let a = closed_form_depth(&forward(&scene, 1, 0.0, 0).unwrap(), &model, 0).unwrap();
    let mut loud = scene.clone();
    loud.model.amplitudes = vec![40.0];
    let b = closed_form_depth(&forward(&loud, 1, 0.0, 0).unwrap(), &loud.model, 0).unwrap();
    for (x, y) in a.depth.iter().zip(&b.depth) {
        assert!((x - y).abs() < 1e-12);
    }
    let silent = ToFMeasurements {
        height: 1,
        width: 1,
        factor: 1,
        sigma: 0.0,
        data: vec![0.0, 0.0],
    };
    assert!(!closed_form_depth(&silent, &model, 0).unwrap().valid[0]);
}

#[test]
fn energy_examples() {
    let model = ToFModel::two_frequency(Autocorr::default());
    let scene = ToFScene::piecewise(12, 12, 2, (1.0, 5.0), 2, model.clone(), 3);
    let m = forward(&scene, 2, 0.0, 0).unwrap();
    let tv = nmm_core::problem::TotalVariation {
        norm: nmm_core::problem::TvNorm::Anisotropic,
        ..nmm_core::problem::TotalVariation::new(12, 12, 0.2)
    };
    let e = tof_energy(&scene.depth, &m, &model, 0.2).unwrap();
    assert_eq!(e, tv.value(&scene.depth));
    let flat = vec![2.5; 144];
    let data_only = tof_energy(&flat, &m, &model, 0.0).unwrap();
    assert_eq!(tof_energy(&flat, &m, &model, 0.7).unwrap(), data_only);
}

#[test]
fn single_pixel_energy_by_hand() {
    let model = single(Autocorr::Cosine);
    let m = ToFMeasurements {
        height: 1,
        width: 1,
        factor: 1,
        sigma: 0.0,
        data: vec![0.4, -1.1],
    };
    let u = 0.8;
    let phi = model.phase(0, u);
    let a = 1.3;
    let hand = (0.4 - 2.0 * a * phi.cos()).powi(2) + (-1.1 + 2.0 * a * phi.sin()).powi(2);
    let e = tof_energy(&[u], &m, &model, 0.0).unwrap();
    assert!((e - hand).abs() < 1e-12);
    // 2π phase wrap.
    let e2 = tof_energy(&[u + model.unambiguous_range(0)], &m, &model, 0.0).unwrap();
    assert!((e - e2).abs() < 1e-9);
    let _ = PI;
}

#[test]
fn reconstruction_matches_closed_form_on_clean_single_frequency() {
    let model = single(Autocorr::Cosine);
    let scene = ToFScene::piecewise(16, 16, 3, (0.3, 1.5), 1, model.clone(), 5);
    let m = forward(&scene, 1, 0.0, 0).unwrap();
    let cf = closed_form_depth(&m, &model, 0).unwrap();
    let cfg = ReconConfig {
        alpha: 1e-3,
        depth_range: (0.2, 1.6),
        init_depth: 1.0,
        ..ReconConfig::default()
    };
    let rec = reconstruct(&m, &model, &cfg).unwrap();
    let spacing = 1.4 / (cfg.labels - 1) as f64;
    for (r, c) in rec.depth.iter().zip(&cf.depth) {
        assert!((r - c).abs() <= spacing, "{r} vs {c}");
    }
}

#[test]
fn trace_descends_and_truth_start_stays_below_truth() {
    let model = ToFModel::two_frequency(Autocorr::default());
    let scene = ToFScene::piecewise(16, 16, 3, (1.0, 5.4), 2, model.clone(), 12);
    let m = forward(&scene, 2, 0.05, 3).unwrap();
    let cfg = ReconConfig::default();
    let rec = reconstruct(&m, &model, &cfg).unwrap();
    let acc: Vec<f64> = rec.run.trace.iter().filter(|r| r.accepted).map(|r| r.energy).collect();
    assert!(acc.windows(2).all(|w| w[1] <= w[0]));
    assert!(!rec.guard_stopped);

    let e_truth = tof_energy(&scene.depth, &m, &model, cfg.alpha).unwrap();
    let from_truth = reconstruct_from(&m, &model, &cfg, Some(&scene.depth)).unwrap();
    assert!(from_truth.run.final_energy() <= e_truth);
}

#[test]
fn small_scene_unwraps() {
    let model = ToFModel::two_frequency(Autocorr::default());
    let scene = ToFScene::piecewise(24, 24, 4, (1.0, 5.4), 2, model.clone(), 2);
    let m = forward(&scene, 2, 0.05, 8).unwrap();
    let rec = reconstruct(&m, &model, &ReconConfig::default()).unwrap();
    assert!(unwrap_rate(&rec.depth, &scene.depth, &model) >= 0.95);
    let best_cf = (0..2)
        .map(|i| {
            let cf = closed_form_depth(&m, &model, i).unwrap();
            rmse(&upsample(&cf.depth, 12, 12, 2), &scene.depth)
        })
        .fold(f64::INFINITY, f64::min);
    assert!(rmse(&rec.depth, &scene.depth) < best_cf);
}

#[test]
fn bad_setups_are_rejected() {
    let scene = ToFScene::piecewise(10, 10, 1, (1.0, 2.0), 1, ToFModel::two_frequency(Autocorr::Cosine), 0);
    assert!(forward(&scene, 3, 0.0, 0).is_err());
    let mut odd = scene.clone();
    odd.model.n_steps = 3;
    assert!(forward(&odd, 1, 0.0, 0).is_err());
    let mut bad = scene;
    bad.model.autocorr = Autocorr::Trapezoid { p: 2.0 };
    assert!(forward(&bad, 1, 0.0, 0).is_err());
}

#[test]
fn pgm_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.pgm");
    let img = Gray16::from_values(&[0.5, 3.0, 6.0, 1.0], 2, 2, 0.5, 6.0);
    img.save(&path).unwrap();
    assert_eq!(Gray16::load(&path).unwrap(), img);
}
