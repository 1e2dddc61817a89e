use catprobe_core::ensemble::{averaged_density_matrix, estimate_moments};
use catprobe_core::experiment::{run_fluctuating_field, FieldRunConfig, Horizon};
use catprobe_core::field::{dephasing_envelope, evolve_trajectory, NoiseProcess};
use catprobe_core::qstate::TwoLevelState;

#[test]
fn dephasing_matches_gaussian_average() {
    let cfg = FieldRunConfig {
        delta: 0.0,
        process: NoiseProcess::new(1.0, 0.01, 2024).unwrap(),
        initial: TwoLevelState::plus(),
        n_trajectories: 10_000,
        k_max: 2,
        record_stride: 10,
        horizon: Horizon::Fixed { n_steps: 400 },
    };
    let run = run_fluctuating_field(&cfg).unwrap();
    let times: Vec<f64> = run.rows.iter().map(|r| r.t).collect();
    let env = dephasing_envelope(1.0, &times);
    for (row, e) in run.rows.iter().zip(env) {
        assert!((row.rho.rho_lr().norm() - 0.5 * e).abs() < 0.01, "t={}", row.t);
        // no population transfer without tunneling
        assert!((row.rho.rho_ll() - 0.5).abs() < 1e-12);
    }
    assert!(run.max_norm_defect < 1e-10);
}

#[test]
fn averaged_density_at_t2() {
    let process = NoiseProcess::new(1.0, 0.01, 77).unwrap();
    let states: Vec<_> = (0..10_000u64)
        .map(|id| {
            let tr = evolve_trajectory(0.0, &process, TwoLevelState::plus(), 200, 200, id).unwrap();
            (1.0, tr.final_state)
        })
        .collect();
    let rho = averaged_density_matrix(states).unwrap();
    assert!((rho.rho_lr().norm() - 0.5 * (-1.0f64).exp()).abs() < 0.01);
}

/// Per-trajectory window averages of `p^k` over `[T, 1.5T]` and `[1.5T, 2T]`.
#[test]
fn moments_are_stationary_at_late_times() {
    let process = NoiseProcess::new(1.0, 0.02, 5).unwrap();
    let t = 100.0;
    let steps = (2.0 * t / process.dt).round() as usize;
    let stride = 25;
    let n_traj = 2000u64;
    let mut windows = [Vec::new(), Vec::new()];
    for id in 0..n_traj {
        let tr = evolve_trajectory(1.0, &process, TwoLevelState::left(), steps, stride, id).unwrap();
        for (w, (lo, hi)) in [(t, 1.5 * t), (1.5 * t, 2.0 * t)].into_iter().enumerate() {
            let ps: Vec<f64> = tr
                .times
                .iter()
                .zip(&tr.p_ll)
                .filter(|(&s, _)| s >= lo - 1e-9 && s < hi - 1e-9)
                .map(|(_, &p)| p)
                .collect();
            windows[w].push(ps);
        }
    }
    for k in 1..=4 {
        let stats = |ws: &Vec<Vec<f64>>| {
            let samples: Vec<f64> =
                ws.iter().map(|ps| ps.iter().map(|p| p.powi(k)).sum::<f64>() / ps.len() as f64).collect();
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        };
        let (a, sa) = stats(&windows[0]);
        let (b, sb) = stats(&windows[1]);
        assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "k={k}: {a} vs {b}");
    }
}

#[test]
fn long_time_distribution_is_uniform() {
    let process = NoiseProcess::new(1.0, 0.02, 99).unwrap();
    let samples = (0..3000u64).map(|id| {
        let tr = evolve_trajectory(1.0, &process, TwoLevelState::left(), 3000, 3000, id).unwrap();
        (1.0, tr.final_state.p_left())
    });
    let r = estimate_moments(samples, 4).unwrap();
    for m in &r.moments {
        let exact = 1.0 / (1.0 + m.k as f64);
        assert!((m.estimate - exact).abs() < 0.02f64.max(3.0 * m.stderr), "{m:?}");
    }
    assert!(r.ks_statistic.unwrap() < 1.63 / (3000f64).sqrt());
}
