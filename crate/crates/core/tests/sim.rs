use std::f64::consts::PI;

use proxicbo::oracles::LidarOracle;
use proxicbo::objective::LidarModel;
use proxicbo::sim::{
    crb, fisher_information, gen_lidar_events, read_instance, rng_from_seed, split_seed, write_instance,
    ExperimentSpec, Instance, LidarSpec, OneBitSparseSpec,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn lidar_spec() -> ExperimentSpec {
    ExperimentSpec::LidarStatic(LidarSpec::default())
}

fn lidar_oracle(model: &LidarModel) -> LidarOracle {
    LidarOracle {
        pulse_times: model.pulse_times().to_vec(),
        t_a: model.acquisition_time(),
        sigma: model.pulse_sigma(),
        doppler: model.is_doppler(),
        c: model.speed_of_light(),
    }
}

/// Two-sample chi-square homogeneity test on binned data; returns the p-value.
fn two_sample_p(a: &[f64], b: &[f64], edges: &[f64]) -> f64 {
    let bin = |x: f64| edges.iter().take_while(|e| x >= **e).count();
    let nb = edges.len() + 1;
    let (mut ca, mut cb) = (vec![0.0; nb], vec![0.0; nb]);
    a.iter().for_each(|x| ca[bin(*x)] += 1.0);
    b.iter().for_each(|x| cb[bin(*x)] += 1.0);
    let (na, nbt) = (a.len() as f64, b.len() as f64);
    let mut stat = 0.0;
    let mut used = 0;
    for k in 0..nb {
        let tot = ca[k] + cb[k];
        if tot == 0.0 {
            continue;
        }
        used += 1;
        let ea = tot * na / (na + nbt);
        let eb = tot * nbt / (na + nbt);
        stat += (ca[k] - ea).powi(2) / ea + (cb[k] - eb).powi(2) / eb;
    }
    1.0 - ChiSquared::new((used - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn onebit_sizes_and_dither() {
    let spec = ExperimentSpec::OneBitSparse(OneBitSparseSpec::default());
    let Instance::OneBit { model, x_true } = spec.generate(7).unwrap() else {
        panic!("wrong instance kind")
    };
    assert_eq!(model.a.rows(), 4 * x_true.len());
    assert_eq!(x_true.iter().filter(|v| **v != 0.0).count(), 10);
    let half = PI / (2.0 * model.omega);
    assert!(model.u.iter().all(|u| u.abs() <= half));
    assert!(model.y.iter().all(|y| *y == 1.0 || *y == -1.0));
}

#[test]
fn onebit_matrix_variance() {
    let spec = ExperimentSpec::OneBitSparse(OneBitSparseSpec::default());
    let d = spec.dim();
    let mut col_vars = Vec::new();
    for trial in 0..10 {
        let Instance::OneBit { model, .. } = spec.generate(split_seed(11, trial)).unwrap() else {
            unreachable!()
        };
        let m = model.a.rows();
        for j in 0..d {
            let col: Vec<f64> = (0..m).map(|i| model.a.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            col_vars.push(col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64);
        }
    }
    let n = col_vars.len() as f64;
    let mean = col_vars.iter().sum::<f64>() / n;
    let sd = (col_vars.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    let target = 1.0 / d as f64;
    assert!((mean - target).abs() <= 3.0 * se, "mean column variance {mean} vs {target} (se {se})");
}

#[test]
fn lidar_mean_count() {
    let spec = lidar_spec();
    let counts: Vec<f64> = (0..200)
        .map(|k| match spec.generate(split_seed(21, k)).unwrap() {
            Instance::Lidar { model, .. } => model.detections().len() as f64,
            _ => unreachable!(),
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / 200.0;
    // S K + b t_a = 50 + 50
    let sd_of_mean = (100.0f64 / 200.0).sqrt();
    assert!((mean - 100.0).abs() <= 3.0 * sd_of_mean, "mean count {mean}");
}

#[test]
fn lidar_sampler_matches_thinning() {
    let spec = lidar_spec();
    let theta = spec.lidar_truth().unwrap();
    let mut rng = rng_from_seed(31);
    let (mut count_a, mut count_b) = (Vec::new(), Vec::new());
    let (mut near_a, mut near_b) = (Vec::new(), Vec::new());
    // Distance from a detection to the nearest pulse centre, in units of σ.
    let offsets = |model: &LidarModel, dets: &[f64]| -> Vec<f64> {
        let sigma = model.pulse_sigma();
        let centers: Vec<f64> = model.pulse_times().iter().map(|t| t + theta[2]).collect();
        dets.iter()
            .map(|t| {
                let i = centers.partition_point(|c| c < t);
                let lo = if i > 0 { (t - centers[i - 1]).abs() } else { f64::INFINITY };
                let hi = if i < centers.len() { (centers[i] - t).abs() } else { f64::INFINITY };
                lo.min(hi) / sigma
            })
            .collect()
    };
    for k in 0..500 {
        let model = gen_lidar_events(&spec, &theta, split_seed(32, k)).unwrap();
        let thinned = lidar_oracle(&model).sample_thinning(&theta, &mut rng);
        count_a.push(model.detections().len() as f64);
        count_b.push(thinned.len() as f64);
        near_a.extend(offsets(&model, model.detections()));
        near_b.extend(offsets(&model, &thinned));
    }
    let p_count = two_sample_p(&count_a, &count_b, &[85.0, 90.0, 95.0, 100.0, 105.0, 110.0, 115.0]);
    let p_offset = two_sample_p(&near_a, &near_b, &[0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 10.0]);
    assert!(p_count > 0.01, "count distribution p = {p_count}");
    assert!(p_offset > 0.01, "offset distribution p = {p_offset}");
}

#[test]
fn crb_signal_free_background_limit() {
    let t_a = 5e5;
    let sigma = 0.1;
    let b = 1e-4;
    let model = LidarModel::new(vec![1000.0], Vec::new(), t_a, sigma, false).unwrap();
    let report = crb(&model, &[2e-8, b, 234.0]).unwrap();
    assert!((report.variance[1] / (b / t_a) - 1.0).abs() <= 1e-6, "{:?}", report.variance);
    // The exact small-signal limit removes the pulse footprint from the window.
    let exact = b / (t_a - 2.0 * sigma * PI.sqrt());
    assert!((report.variance[1] / exact - 1.0).abs() <= 1e-7);
}

#[test]
fn crb_invariant_under_pulse_permutation() {
    let spec = lidar_spec();
    let theta = spec.lidar_truth().unwrap();
    let model = gen_lidar_events(&spec, &theta, 41).unwrap();
    let mut shuffled = model.pulse_times().to_vec();
    shuffled.reverse();
    shuffled.swap(3, 100);
    let permuted = LidarModel::new(shuffled, Vec::new(), model.acquisition_time(), model.pulse_sigma(), false).unwrap();
    let a = crb(&model, &theta).unwrap();
    let b = crb(&permuted, &theta).unwrap();
    for (x, y) in a.variance.iter().zip(&b.variance) {
        assert!((x / y - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn fisher_quadrature_matches_riemann_sum() {
    let pulses = vec![1.0, 3.2, 7.5, 12.0, 20.0];
    for (doppler, theta) in [(false, vec![0.5, 0.01, 2.0]), (true, vec![0.5, 0.01, 2.0, 30.0])] {
        let model = LidarModel::new(pulses.clone(), Vec::new(), 30.0, 0.1, doppler)
            .unwrap()
            .with_speed_of_light(0.3)
            .unwrap();
        let quad = fisher_information(&model, &theta, 0.0, 30.0, 1e-8).unwrap();
        let riemann = lidar_oracle(&model).riemann_fisher(&theta, 0.0, 30.0, 10_000_000);
        let p = theta.len();
        for i in 0..p {
            for j in 0..p {
                let scale = (quad[i][i] * quad[j][j]).sqrt();
                let err = (quad[i][j] - riemann[i][j]).abs() / scale;
                assert!(err <= 1e-4, "doppler={doppler} ({i},{j}): {} vs {}", quad[i][j], riemann[i][j]);
            }
        }
    }
}

#[test]
fn generation_is_deterministic() {
    for spec in [lidar_spec(), ExperimentSpec::OneBitSparse(OneBitSparseSpec::default())] {
        let a = spec.generate(99).unwrap();
        let b = spec.generate(99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, spec.generate(100).unwrap());
        assert_eq!(spec.initial_ensemble(10, 5), spec.initial_ensemble(10, 5));
    }
}

#[test]
fn instance_file_regenerates() {
    let spec = lidar_spec();
    let inst = spec.generate(123).unwrap();
    let mut buf = Vec::new();
    write_instance(&mut buf, &spec, 123, &inst).unwrap();
    let (header, back) = read_instance(buf.as_slice()).unwrap();
    assert_eq!(back, inst);
    assert_eq!(header.spec.generate(header.seed).unwrap(), inst);
}
