//! Error and performance quantities: velocity disagreement, the Lyapunov
//! function, trajectory metrics, exponential-rate fitting, and the ultimate
//! error bound over the compact domain.

use crate::error::{GpError, MetricsError};
use crate::gp::{pointwise_error_bound, ErrorBoundParams, GpModel};
use crate::network::Framework;
use crate::sim::TrajectoryRecord;
use crate::stacked::StackedVector;

/// Velocity disagreement `delta_i = v_i - v_mean` and the mean velocity.
pub fn disagreement(v: &StackedVector) -> (StackedVector, Vec<f64>) {
    let d = v.block_size();
    let n = v.block_count();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(v.block(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut delta = StackedVector::zeros(d, n);
    for i in 0..n {
        let src = v.block(i);
        let dst = delta.block_mut(i);
        for a in 0..d {
            dst[a] = src[a] - mean[a];
        }
    }
    (delta, mean)
}

/// Lyapunov candidate `V(e, delta) = 1/2 ||e||^2 + ||delta||^2`.
pub fn lyapunov(e: &StackedVector, delta: &StackedVector) -> f64 {
    let e_sq: f64 = e.as_slice().iter().map(|x| x * x).sum();
    let d_sq: f64 = delta.as_slice().iter().map(|x| x * x).sum();
    0.5 * e_sq + d_sq
}

/// Mean velocity at every trajectory sample, one `d`-vector per row.
pub fn average_velocity_trace(record: &TrajectoryRecord) -> Vec<Vec<f64>> {
    (0..record.sample_count())
        .map(|s| disagreement(&record.velocities(s)).1)
        .collect()
}

/// Mean edge length `mean_k ||z_k||` at every trajectory sample.
pub fn average_neighbor_distance_trace(fw: &Framework, record: &TrajectoryRecord) -> Vec<f64> {
    (0..record.sample_count())
        .map(|s| {
            let q = record.positions(s);
            let z = crate::network::relative_positions(fw, &q).expect("record matches framework");
            let total: f64 = (0..fw.edge_count())
                .map(|k| z.block(k).iter().map(|x| x * x).sum::<f64>().sqrt())
                .sum();
            total / fw.edge_count() as f64
        })
        .collect()
}

/// Least-squares slope of `ln(series)` over the time window; negative
/// means decay. Errors if the window selects non-positive values or fewer
/// than two samples.
pub fn fit_exponential_rate(
    times: &[f64],
    series: &[f64],
    window: (f64, f64),
) -> Result<f64, MetricsError> {
    assert_eq!(times.len(), series.len(), "times and series must align");
    let mut txs = Vec::new();
    for (&t, &y) in times.iter().zip(series) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(y > 0.0) {
            return Err(MetricsError::NonPositiveSeries { t, value: y });
        }
        txs.push((t, y.ln()));
    }
    if txs.len() < 2 {
        return Err(MetricsError::EmptyWindow(window.0, window.1));
    }
    let n = txs.len() as f64;
    let mean_t: f64 = txs.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_y: f64 = txs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in &txs {
        num += (t - mean_t) * (y - mean_y);
        den += (t - mean_t) * (t - mean_t);
    }
    Ok(num / den)
}

/// The ultimate bound `b = sqrt(2) * max over the Omega grid of the stacked
/// pointwise error bound`, with the maximizing state and grid bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct UltimateBound {
    pub b: f64,
    pub epsilon: f64,
    /// Grid points per axis actually evaluated.
    pub grid_points_per_axis: usize,
    /// Stacked state (`2 d n` coordinates) attaining the maximum.
    pub argmax: Vec<f64>,
    /// True when the requested resolution was reduced to fit the cell cap,
    /// making `b` a coarse lower estimate of the grid maximum.
    pub truncated_grid: bool,
    /// First sample time after which `||(e, delta)|| <= b` held for the
    /// rest of a given run; filled by [`first_containment_time`].
    pub t_eps: Option<f64>,
}

/// Evaluates the stacked error bound over the tensor grid on Omega.
///
/// The stacked squared bound decomposes as a sum of per-agent terms, each
/// depending only on that agent's `2d` coordinates, so the grid maximum is
/// found per agent and combined; the result is identical to evaluating the
/// full stacked tensor grid. `betas[i]` holds agent `i`'s per-output-
/// dimension coefficients.
pub fn ultimate_bound(
    params: &ErrorBoundParams,
    models: &[GpModel],
    betas: &[Vec<f64>],
) -> Result<UltimateBound, GpError> {
    let n = models.len();
    assert_eq!(betas.len(), n, "one beta vector per agent");
    assert_eq!(params.omega.dim() % n, 0, "omega axes must split evenly over agents");
    let per_agent_dim = params.omega.dim() / n;

    // Fit the per-agent tensor grid under the cell cap, coarsening uniformly.
    let mut points = params.grid_points_per_axis;
    let cap_per_agent = (params.cell_cap / n).max(1);
    while points > 2 && params.omega.slice(0, per_agent_dim).grid_cells(points) > cap_per_agent {
        points -= 1;
    }
    if params.omega.slice(0, per_agent_dim).grid_cells(points) > cap_per_agent {
        return Err(GpError::GridTooLarge {
            cells: params.omega.slice(0, per_agent_dim).grid_cells(points),
            cap: params.cell_cap,
        });
    }
    let truncated = points < params.grid_points_per_axis;

    let mut total_sq = 0.0;
    let mut argmax = Vec::with_capacity(params.omega.dim());
    for (i, model) in models.iter().enumerate() {
        let omega_i = params.omega.slice(i * per_agent_dim, per_agent_dim);
        let mut best = f64::NEG_INFINITY;
        let mut best_point = None;
        for point in omega_i.grid(points) {
            let val = pointwise_error_bound(model, &betas[i], &point)?;
            if val > best {
                best = val;
                best_point = Some(point);
            }
        }
        let point = best_point.expect("grid is never empty");
        total_sq += best * best;
        argmax.extend(point);
    }
    Ok(UltimateBound {
        b: 2.0_f64.sqrt() * total_sq.sqrt(),
        epsilon: params.epsilon,
        grid_points_per_axis: points,
        argmax,
        truncated_grid: truncated,
        t_eps: None,
    })
}

/// First sample time from which `||(e, delta)||` stays within `b` for the
/// remainder of the trajectory. Diagnostic only.
pub fn first_containment_time(record: &TrajectoryRecord, b: f64) -> Option<f64> {
    let mut candidate = None;
    for s in 0..record.sample_count() {
        let err = record.stacked_error_norm(s);
        if err <= b {
            if candidate.is_none() {
                candidate = Some(record.time(s));
            }
        } else {
            candidate = None;
        }
    }
    candidate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{AgentDataset, AxisBox, KernelParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn disagreement_cases() {
        let v = StackedVector::new(vec![1.0, 1.0, 1.0], 1, 3).unwrap();
        let (delta, mean) = disagreement(&v);
        assert_eq!(mean, vec![1.0]);
        assert!(delta.as_slice().iter().all(|&x| x == 0.0));

        let v = StackedVector::new(vec![2.0, 0.0], 1, 2).unwrap();
        let (delta, mean) = disagreement(&v);
        assert_eq!(mean, vec![1.0]);
        assert_eq!(delta.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn lyapunov_cases() {
        let zero = StackedVector::zeros(1, 2);
        assert_eq!(lyapunov(&zero, &zero), 0.0);
        let e = StackedVector::new(vec![2.0], 1, 1).unwrap();
        assert_eq!(lyapunov(&e, &StackedVector::zeros(1, 2)), 2.0);
        // 1/2 ||(e, d)||^2 <= V <= ||(e, d)||^2
        let d = StackedVector::new(vec![1.0, -3.0], 1, 2).unwrap();
        let v = lyapunov(&e, &d);
        let total_sq = e.norm().powi(2) + d.norm().powi(2);
        assert!(0.5 * total_sq <= v && v <= total_sq);
    }

    /// Momentum bookkeeping oracle: a constant force (0, -300) on one of
    /// three agents drifts the mean velocity at (0, -100).
    #[test]
    fn average_velocity_drifts_at_mean_force_rate() {
        let text = r#"{
            "version": 1,
            "framework": {"n": 3, "d": 2, "edges": [[1,2],[2,3],[3,1]], "desired_lengths": [200.0, 200.0, 200.0]},
            "initial_positions": [[0.0, 0.0], [210.0, -20.0], [120.0, 190.0]],
            "disturbances": [{"agent": 1, "components": [[], [{"amplitude": -300.0, "trig": "const"}]]}],
            "control": {"mode": "nominal", "k_align": 1.0, "k_shape": 0.0001, "prior": null},
            "sim": {"dt": 0.001, "t_end": 2.0, "sample_interval": 0.01, "freeze_time": 1.0,
                    "accel_noise_sigma": 0.0, "seed": 0}
        }"#;
        let cfg = crate::config::ScenarioConfig::parse_config_str(text).unwrap();
        let result = crate::sim::run_scenario(&cfg).unwrap();
        let trace = average_velocity_trace(&result.record);
        let last = trace.len() - 1;
        let t_span = result.record.time(last) - result.record.time(0);
        let rate_x = (trace[last][0] - trace[0][0]) / t_span;
        let rate_y = (trace[last][1] - trace[0][1]) / t_span;
        assert_relative_eq!(rate_x, 0.0, epsilon = 1e-9);
        assert_relative_eq!(rate_y, -100.0, max_relative = 1e-9);
    }

    #[test]
    fn average_neighbor_distance_examples() {
        let fw = Framework::new(3, 2, vec![(0, 1), (1, 2), (2, 0)], vec![2.0; 3]).unwrap();
        // Build a two-sample record by hand: desired equilateral shape, then
        // all agents coincident.
        let zero = crate::sim::DisturbanceSpec::zero(3, 2);
        let models: Vec<GpModel> = (0..3)
            .map(|_| GpModel::new(KernelParams::default_for_dim(4), 2))
            .collect();
        let mut record = crate::sim::TrajectoryRecord::new(3, 2, 3, 2);
        let equilateral = StackedVector::new(
            vec![0.0, 0.0, 2.0, 0.0, 1.0, 3.0_f64.sqrt()],
            2,
            3,
        )
        .unwrap();
        let coincident = StackedVector::new(vec![5.0, 5.0, 5.0, 5.0, 5.0, 5.0], 2, 3).unwrap();
        for (t, q) in [(0.0, equilateral), (1.0, coincident)] {
            record
                .push_row(
                    t,
                    &fw,
                    &crate::sim::SwarmState { q, v: StackedVector::zeros(2, 3) },
                    &StackedVector::zeros(2, 3),
                    &zero,
                    &models,
                    0,
                )
                .unwrap();
        }
        let trace = average_neighbor_distance_trace(&fw, &record);
        assert_relative_eq!(trace[0], 2.0, epsilon = 1e-12);
        assert_eq!(trace[1], 0.0);
    }

    #[test]
    fn rate_fit_exact_exponential() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let series: Vec<f64> = times.iter().map(|t| (-3.0 * t).exp()).collect();
        let rate = fit_exponential_rate(&times, &series, (0.0, 10.0)).unwrap();
        assert_relative_eq!(rate, -3.0, epsilon = 1e-9);

        let flat: Vec<f64> = times.iter().map(|_| 2.5).collect();
        let rate = fit_exponential_rate(&times, &flat, (0.0, 10.0)).unwrap();
        assert!(rate.abs() < 1e-12);
    }

    /// Synthetic oracle: e^{-t} (1 + 0.01 sin t) sampled on [0, 10] fits to
    /// -1 within 0.02 (least-squares value -1.00016 from the construction).
    #[test]
    fn rate_fit_wobbly_exponential() {
        let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let series: Vec<f64> = times.iter().map(|t| (-t).exp() * (1.0 + 0.01 * t.sin())).collect();
        let rate = fit_exponential_rate(&times, &series, (0.0, 10.0)).unwrap();
        assert!((rate + 1.0).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn rate_fit_rejects_non_positive() {
        let times = vec![0.0, 1.0, 2.0];
        let series = vec![1.0, 0.0, 1.0];
        assert!(matches!(
            fit_exponential_rate(&times, &series, (0.0, 2.0)),
            Err(MetricsError::NonPositiveSeries { .. })
        ));
        let ok = vec![1.0, 1.0, 1.0];
        assert!(matches!(
            fit_exponential_rate(&times, &ok, (5.0, 6.0)),
            Err(MetricsError::EmptyWindow(_, _))
        ));
    }

    fn empty_models(n: usize, input_dim: usize, output_dim: usize, sf2: f64) -> Vec<GpModel> {
        (0..n)
            .map(|_| GpModel::new(KernelParams::new(vec![1.0; input_dim], sf2, 1.0).unwrap(), output_dim))
            .collect()
    }

    #[test]
    fn ultimate_bound_prior_case() {
        // Empty datasets: b = sqrt(2) ||beta_stacked|| sigma_f.
        let models = empty_models(2, 2, 1, 4.0);
        let omega = AxisBox::new(vec![-1.0; 4], vec![1.0; 4]).unwrap();
        let params = ErrorBoundParams::new(0.5, vec![1.0, 1.0], omega, 3, 1_000_000).unwrap();
        let betas = vec![vec![3.0], vec![4.0]];
        let ub = ultimate_bound(&params, &models, &betas).unwrap();
        assert_relative_eq!(ub.b, 2.0_f64.sqrt() * 5.0 * 2.0, epsilon = 1e-12);
        assert!(!ub.truncated_grid);
    }

    #[test]
    fn ultimate_bound_collapsed_domain_zero_noise() {
        // sigma^2 = 0, Omega collapsed onto the single training state:
        // posterior variance vanishes there, so b = 0.
        let kernel = KernelParams::new(vec![1.0, 1.0], 1.0, 0.0).unwrap();
        let model = GpModel::new(kernel, 1)
            .add_observation(vec![0.25, -0.5], vec![1.0])
            .unwrap();
        let omega = AxisBox::new(vec![0.25, -0.5], vec![0.25, -0.5]).unwrap();
        let params = ErrorBoundParams::new(0.9, vec![1.0], omega, 3, 1_000_000).unwrap();
        let ub = ultimate_bound(&params, &[model], &[vec![10.0]]).unwrap();
        assert!(ub.b.abs() < 1e-12, "b = {}", ub.b);
    }

    /// Brute-force oracle: evaluate the stacked bound at every point of the
    /// full tensor grid and compare with the per-agent decomposition.
    #[test]
    fn ultimate_bound_matches_stacked_brute_force() {
        let kernel = KernelParams::new(vec![0.8, 1.3], 1.5, 0.3).unwrap();
        let mut ds1 = AgentDataset::new(2, 1);
        ds1.push(vec![0.1, 0.4], vec![0.7]).unwrap();
        ds1.push(vec![-0.3, 0.2], vec![-0.2]).unwrap();
        let m1 = GpModel::from_dataset(kernel.clone(), ds1).unwrap();
        let mut ds2 = AgentDataset::new(2, 1);
        ds2.push(vec![0.5, -0.1], vec![0.3]).unwrap();
        let m2 = GpModel::from_dataset(kernel, ds2).unwrap();
        let models = [m1, m2];
        let betas = vec![vec![2.0], vec![0.7]];
        let omega = AxisBox::new(vec![-1.0, -1.0, -0.8, -0.6], vec![1.0, 0.5, 0.9, 1.1]).unwrap();
        let params = ErrorBoundParams::new(0.5, vec![1.0, 1.0], omega.clone(), 3, 1_000_000).unwrap();
        let ub = ultimate_bound(&params, &models, &betas).unwrap();

        let mut best = f64::NEG_INFINITY;
        for point in omega.grid(3) {
            let mut sq = 0.0;
            for (i, m) in models.iter().enumerate() {
                let val = pointwise_error_bound(m, &betas[i], &point[i * 2..(i + 1) * 2]).unwrap();
                sq += val * val;
            }
            best = best.max(sq.sqrt());
        }
        assert_relative_eq!(ub.b, 2.0_f64.sqrt() * best, epsilon = 1e-12);

        // The argmax must reproduce the maximal value.
        let mut sq = 0.0;
        for (i, m) in models.iter().enumerate() {
            let val = pointwise_error_bound(m, &betas[i], &ub.argmax[i * 2..(i + 1) * 2]).unwrap();
            sq += val * val;
        }
        assert_relative_eq!(2.0_f64.sqrt() * sq.sqrt(), ub.b, epsilon = 1e-12);
    }

    #[test]
    fn ultimate_bound_grid_refinement_monotone() {
        let models = {
            let kernel = KernelParams::new(vec![1.0, 1.0], 2.0, 0.5).unwrap();
            let mut ds = AgentDataset::new(2, 1);
            ds.push(vec![0.0, 0.0], vec![1.0]).unwrap();
            vec![GpModel::from_dataset(kernel, ds).unwrap()]
        };
        let omega = AxisBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let betas = vec![vec![1.0]];
        let mut prev = 0.0;
        for points in [2, 3, 5, 9] {
            let params = ErrorBoundParams::new(0.5, vec![1.0], omega.clone(), points, 1_000_000).unwrap();
            let ub = ultimate_bound(&params, &models, &betas).unwrap();
            // Dyadic-style refinements keep previous points, so max never drops.
            assert!(ub.b >= prev - 1e-12, "points {points}: {} < {prev}", ub.b);
            prev = ub.b;
        }
    }

    #[test]
    fn containment_time_is_first_lasting_entry() {
        // Two agents on one edge with desired length 1; the separation
        // pattern makes the stacked error norm go 3, 0, 3, 0, 0 so the
        // bound b = 1 holds for good only from the fourth sample.
        let fw = Framework::new(2, 2, vec![(0, 1)], vec![1.0]).unwrap();
        let zero = crate::sim::DisturbanceSpec::zero(2, 2);
        let models: Vec<GpModel> = (0..2)
            .map(|_| GpModel::new(KernelParams::default_for_dim(4), 2))
            .collect();
        let mut record = crate::sim::TrajectoryRecord::new(2, 2, 1, 5);
        for (s, sep) in [2.0, 1.0, 2.0, 1.0, 1.0].iter().enumerate() {
            let q = StackedVector::new(vec![0.0, 0.0, *sep, 0.0], 2, 2).unwrap();
            record
                .push_row(
                    s as f64,
                    &fw,
                    &crate::sim::SwarmState { q, v: StackedVector::zeros(2, 2) },
                    &StackedVector::zeros(2, 2),
                    &zero,
                    &models,
                    0,
                )
                .unwrap();
        }
        assert_eq!(first_containment_time(&record, 1.0), Some(3.0));
        assert_eq!(first_containment_time(&record, 10.0), Some(0.0));

        // Ending outside the bound leaves no lasting containment time.
        let q = StackedVector::new(vec![0.0, 0.0, 2.0, 0.0], 2, 2).unwrap();
        record
            .push_row(
                5.0,
                &fw,
                &crate::sim::SwarmState { q, v: StackedVector::zeros(2, 2) },
                &StackedVector::zeros(2, 2),
                &zero,
                &models,
                0,
            )
            .unwrap();
        assert_eq!(first_containment_time(&record, 1.0), None);
    }

    #[test]
    fn ultimate_bound_cell_cap() {
        let models = empty_models(1, 6, 3, 1.0);
        let omega = AxisBox::new(vec![-1.0; 6], vec![1.0; 6]).unwrap();
        // cap of 100 cells: even 2^6 = 64 fits, 5^6 does not, so the grid
        // must coarsen and flag it.
        let params = ErrorBoundParams::new(0.5, vec![1.0; 3], omega.clone(), 5, 100).unwrap();
        let ub = ultimate_bound(&params, &models, &[vec![1.0; 3]]).unwrap();
        assert!(ub.truncated_grid);
        assert_eq!(ub.grid_points_per_axis, 2);

        let params = ErrorBoundParams::new(0.5, vec![1.0; 3], omega, 5, 10).unwrap();
        assert!(matches!(
            ultimate_bound(&params, &models, &[vec![1.0; 3]]),
            Err(GpError::GridTooLarge { .. })
        ));
    }

    proptest! {
        /// Centering is linear and idempotent: disagreement(delta) = (delta, 0).
        #[test]
        fn disagreement_idempotent(vals in prop::collection::vec(-100.0_f64..100.0, 12)) {
            let v = StackedVector::new(vals, 3, 4).unwrap();
            let (delta, _) = disagreement(&v);
            let sums: Vec<f64> = (0..3).map(|a| (0..4).map(|i| delta.block(i)[a]).sum()).collect();
            for s in &sums {
                prop_assert!(s.abs() < 1e-10);
            }
            let (delta2, mean2) = disagreement(&delta);
            for m in &mean2 {
                prop_assert!(m.abs() < 1e-12);
            }
            for (a, b) in delta.as_slice().iter().zip(delta2.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        /// Adding a common velocity never changes delta.
        #[test]
        fn disagreement_translation_invariant(
            vals in prop::collection::vec(-10.0_f64..10.0, 6),
            shift in prop::collection::vec(-5.0_f64..5.0, 2),
        ) {
            let v = StackedVector::new(vals.clone(), 2, 3).unwrap();
            let mut moved = vals;
            for i in 0..3 {
                moved[2 * i] += shift[0];
                moved[2 * i + 1] += shift[1];
            }
            let shifted = StackedVector::new(moved, 2, 3).unwrap();
            let (d0, _) = disagreement(&v);
            let (d1, _) = disagreement(&shifted);
            for (a, b) in d0.as_slice().iter().zip(d1.as_slice()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
