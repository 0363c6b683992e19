//! Flocking control laws: the nominal rigidity-based law and the
//! learning-based law that adds prior and GP compensation, in stacked and
//! per-agent (decentralized) forms.
//!
//! Both terms are accumulated edge by edge. For edge `k = (tail, head)` the
//! head contribution is the exact floating-point negation of the tail
//! contribution, so internal forces cancel and the decentralized law
//! reproduces the stacked law bit for bit.

use crate::error::ControlError;
use crate::gp::GpModel;
use crate::metrics::disagreement;
use crate::network::Framework;
use crate::stacked::StackedVector;

/// Scalar gains on the velocity-alignment and shape terms. The laws are
/// unit-gain; scenario configurations use these to set the timescale of
/// large coordinate ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub align: f64,
    pub shape: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self { align: 1.0, shape: 1.0 }
    }
}

/// A state-dependent per-agent force, used both for prior dynamics
/// estimates and for the simulated unknown disturbances.
pub trait StateForce {
    /// Writes the force on `agent` at state `(q_i, v_i)` into `out`.
    fn eval(&self, agent: usize, q_i: &[f64], v_i: &[f64], out: &mut [f64]);
}

/// The zero prior: no knowledge about the unknown dynamics.
pub struct ZeroForce;

impl StateForce for ZeroForce {
    fn eval(&self, _agent: usize, _q: &[f64], _v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Which control law the closed loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    Nominal,
    Learning,
}

/// Everything the control law needs beyond the framework and state.
pub struct ControlConfig<'a> {
    pub mode: ControlMode,
    pub gains: Gains,
    /// Prior estimate of the unknown dynamics; `None` means zero.
    pub prior: Option<&'a dyn StateForce>,
    /// One GP model per agent; required in learning mode.
    pub models: &'a [GpModel],
}

/// Edge potential `V_k(z_k) = 1/4 (||z_k||^2 - d_k^2)^2`.
pub fn potential_edge(z_k: &[f64], d_k: f64) -> f64 {
    let err = z_k.iter().map(|x| x * x).sum::<f64>() - d_k * d_k;
    0.25 * err * err
}

/// Shape potential `V_0 = sum_k V_k`; equals `1/4 ||e||^2`.
pub fn potential_shape(fw: &Framework, q: &StackedVector) -> f64 {
    let z = crate::network::relative_positions(fw, q).expect("positions match framework");
    (0..fw.edge_count())
        .map(|k| potential_edge(z.block(k), fw.desired_lengths()[k]))
        .sum()
}

/// Disagreement potential `V_1 = 1/2 sum_i ||delta_i||^2`.
pub fn potential_disagreement(v: &StackedVector) -> f64 {
    let (delta, _) = disagreement(v);
    0.5 * delta.as_slice().iter().map(|x| x * x).sum::<f64>()
}

/// Accumulates `-gain * (L ⊗ I_d) v` edge-wise into `u`.
fn add_alignment_term(fw: &Framework, v: &StackedVector, gain: f64, u: &mut StackedVector) {
    let d = fw.dimension();
    for &(tail, head) in fw.edges() {
        for a in 0..d {
            let diff = gain * (v.block(tail)[a] - v.block(head)[a]);
            u.block_mut(tail)[a] -= diff;
            u.block_mut(head)[a] += diff;
        }
    }
}

/// Accumulates `-gain * R(z)^T e` edge-wise into `u`.
fn add_shape_term(fw: &Framework, q: &StackedVector, gain: f64, u: &mut StackedVector) {
    let d = fw.dimension();
    for (k, &(tail, head)) in fw.edges().iter().enumerate() {
        let mut norm_sq = 0.0;
        for a in 0..d {
            let z = q.block(tail)[a] - q.block(head)[a];
            norm_sq += z * z;
        }
        let e_k = norm_sq - fw.desired_lengths()[k] * fw.desired_lengths()[k];
        let coeff = gain * e_k;
        for a in 0..d {
            let z = q.block(tail)[a] - q.block(head)[a];
            u.block_mut(tail)[a] -= coeff * z;
            u.block_mut(head)[a] += coeff * z;
        }
    }
}

/// Nominal flocking law `u = -(L ⊗ I_d) v - R(z)^T e`, with gains on the
/// two terms.
pub fn nominal_control(fw: &Framework, q: &StackedVector, v: &StackedVector, gains: &Gains) -> StackedVector {
    let mut u = StackedVector::zeros(fw.dimension(), fw.agent_count());
    add_alignment_term(fw, v, gains.align, &mut u);
    add_shape_term(fw, q, gains.shape, &mut u);
    u
}

/// Learning-based law: the nominal law minus the prior estimate and minus
/// the per-agent GP posterior means at `p_i = [q_i; v_i]`.
pub fn learning_control(
    fw: &Framework,
    q: &StackedVector,
    v: &StackedVector,
    cfg: &ControlConfig,
) -> Result<StackedVector, ControlError> {
    if cfg.models.len() != fw.agent_count() {
        return Err(ControlError::ModelCount {
            models: cfg.models.len(),
            agents: fw.agent_count(),
        });
    }
    let d = fw.dimension();
    let mut u = nominal_control(fw, q, v, &cfg.gains);
    let mut fhat = vec![0.0; d];
    let mut p = vec![0.0; 2 * d];
    for i in 0..fw.agent_count() {
        if let Some(prior) = cfg.prior {
            prior.eval(i, q.block(i), v.block(i), &mut fhat);
            for a in 0..d {
                u.block_mut(i)[a] -= fhat[a];
            }
        }
        p[..d].copy_from_slice(q.block(i));
        p[d..].copy_from_slice(v.block(i));
        let post = cfg.models[i].posterior(&p)?;
        for a in 0..d {
            u.block_mut(i)[a] -= post.mean[a];
        }
    }
    Ok(u)
}

/// Dispatches on the configured mode.
pub fn control_input(
    fw: &Framework,
    q: &StackedVector,
    v: &StackedVector,
    cfg: &ControlConfig,
) -> Result<StackedVector, ControlError> {
    match cfg.mode {
        ControlMode::Nominal => Ok(nominal_control(fw, q, v, &cfg.gains)),
        ControlMode::Learning => learning_control(fw, q, v, cfg),
    }
}

/// One neighbor's state as seen by an agent.
#[derive(Debug, Clone, Copy)]
pub struct NeighborState<'a> {
    pub agent: usize,
    pub q: &'a [f64],
    pub v: &'a [f64],
}

/// Agent `i`'s control from its own state, its neighbors' states, its own
/// GP model and prior only. Stacking these over all agents reproduces
/// [`learning_control`] exactly.
#[allow(clippy::too_many_arguments)]
pub fn decentralized_control_agent(
    fw: &Framework,
    i: usize,
    q_i: &[f64],
    v_i: &[f64],
    neighbors: &[NeighborState],
    prior: Option<&dyn StateForce>,
    model: Option<&GpModel>,
    gains: &Gains,
) -> Result<Vec<f64>, ControlError> {
    let d = fw.dimension();
    let find = |j: usize| -> Result<&NeighborState, ControlError> {
        neighbors
            .iter()
            .find(|ns| ns.agent == j)
            .ok_or(ControlError::MissingNeighbor(j))
    };
    let mut u = vec![0.0; d];
    // Alignment, incident edges in declared order; the tail-side expression
    // is reused with an exact sign flip on the head side.
    for &(tail, head) in fw.edges() {
        if tail == i {
            let other = find(head)?;
            for a in 0..d {
                u[a] -= gains.align * (v_i[a] - other.v[a]);
            }
        } else if head == i {
            let other = find(tail)?;
            for a in 0..d {
                u[a] += gains.align * (other.v[a] - v_i[a]);
            }
        }
    }
    // Shape term.
    for (k, &(tail, head)) in fw.edges().iter().enumerate() {
        let (sign_tail, other) = if tail == i {
            (true, find(head)?)
        } else if head == i {
            (false, find(tail)?)
        } else {
            continue;
        };
        let mut norm_sq = 0.0;
        for a in 0..d {
            let z = if sign_tail { q_i[a] - other.q[a] } else { other.q[a] - q_i[a] };
            norm_sq += z * z;
        }
        let e_k = norm_sq - fw.desired_lengths()[k] * fw.desired_lengths()[k];
        let coeff = gains.shape * e_k;
        for a in 0..d {
            let z = if sign_tail { q_i[a] - other.q[a] } else { other.q[a] - q_i[a] };
            if sign_tail {
                u[a] -= coeff * z;
            } else {
                u[a] += coeff * z;
            }
        }
    }
    if let Some(prior) = prior {
        let mut fhat = vec![0.0; d];
        prior.eval(i, q_i, v_i, &mut fhat);
        for a in 0..d {
            u[a] -= fhat[a];
        }
    }
    if let Some(model) = model {
        let mut p = vec![0.0; 2 * d];
        p[..d].copy_from_slice(q_i);
        p[d..].copy_from_slice(v_i);
        let post = model.posterior(&p)?;
        for a in 0..d {
            u[a] -= post.mean[a];
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{GpModel, KernelParams};
    use crate::network::{distance_errors, rigidity_matrix, Framework};
    use approx::assert_relative_eq;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triangle(side: f64) -> Framework {
        Framework::new(3, 2, vec![(0, 1), (1, 2), (2, 0)], vec![side; 3]).unwrap()
    }

    fn sv(data: &[f64], d: usize, n: usize) -> StackedVector {
        StackedVector::new(data.to_vec(), d, n).unwrap()
    }

    fn equilateral(side: f64) -> StackedVector {
        sv(&[0.0, 0.0, side, 0.0, side / 2.0, side * 3.0_f64.sqrt() / 2.0], 2, 3)
    }

    #[test]
    fn potential_edge_cases() {
        assert_eq!(potential_edge(&[2.0, 0.0], 2.0), 0.0);
        assert_eq!(potential_edge(&[1.0, 0.0], 2.0), 2.25);
        // Rotation invariance through the norm.
        let (s, c) = 0.7_f64.sin_cos();
        let z = [1.3, -0.4];
        let zr = [c * z[0] - s * z[1], s * z[0] + c * z[1]];
        assert_relative_eq!(potential_edge(&z, 0.9), potential_edge(&zr, 0.9), max_relative = 1e-12);
    }

    #[test]
    fn potential_shape_is_quarter_error_norm() {
        let fw = triangle(2.0);
        let q = sv(&[0.0, 0.0, 3.0, 1.0, -1.0, 2.0], 2, 3);
        let v0 = potential_shape(&fw, &q);
        let e = distance_errors(&fw, &q);
        let quarter = 0.25 * e.as_slice().iter().map(|x| x * x).sum::<f64>();
        assert_relative_eq!(v0, quarter, max_relative = 1e-12);
        assert!(potential_shape(&fw, &equilateral(2.0)) < 1e-30);
    }

    /// Central-difference oracle: grad_q V_0 must equal R(z)^T e.
    #[test]
    fn shape_gradient_matches_finite_differences() {
        let fw = triangle(2.0);
        let q0 = vec![0.1, -0.3, 2.2, 0.4, 0.8, 1.9];
        let r = rigidity_matrix(&fw, &sv(&q0, 2, 3));
        let e = distance_errors(&fw, &sv(&q0, 2, 3));
        let grad = r.transpose() * e.to_dvector();
        let h = 1e-5;
        for idx in 0..6 {
            let mut qp = q0.clone();
            let mut qm = q0.clone();
            qp[idx] += h;
            qm[idx] -= h;
            let fd = (potential_shape(&fw, &sv(&qp, 2, 3)) - potential_shape(&fw, &sv(&qm, 2, 3))) / (2.0 * h);
            assert_relative_eq!(grad[idx], fd, max_relative = 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn potential_disagreement_cases() {
        assert_eq!(potential_disagreement(&sv(&[3.0, 3.0, 3.0], 1, 3)), 0.0);
        assert_eq!(potential_disagreement(&sv(&[1.0, -1.0], 1, 2)), 1.0);
        // Common-velocity invariance.
        let v = sv(&[1.0, 2.0, -0.5, 0.3], 2, 2);
        let shifted = sv(&[1.0 + 5.0, 2.0 - 3.0, -0.5 + 5.0, 0.3 - 3.0], 2, 2);
        assert_relative_eq!(
            potential_disagreement(&v),
            potential_disagreement(&shifted),
            max_relative = 1e-12
        );
    }

    #[test]
    fn nominal_control_vanishes_at_equilibrium() {
        let fw = triangle(2.0);
        let q = equilateral(2.0);
        let v = sv(&[0.5, -0.2, 0.5, -0.2, 0.5, -0.2], 2, 3);
        let u = nominal_control(&fw, &q, &v, &Gains::default());
        assert!(u.norm() < 1e-12);
    }

    #[test]
    fn nominal_control_matches_matrix_form() {
        let fw = triangle(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let qs = sv(&q, 2, 3);
            let vs = sv(&v, 2, 3);
            let u = nominal_control(&fw, &qs, &vs, &Gains::default());

            let l = crate::network::laplacian(&fw);
            let lk = l.kronecker(&nalgebra::DMatrix::identity(2, 2));
            let r = rigidity_matrix(&fw, &qs);
            let e = distance_errors(&fw, &qs);
            let expect = -(&lk * vs.to_dvector()) - r.transpose() * e.to_dvector();
            for (a, b) in u.as_slice().iter().zip(expect.iter()) {
                assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-10);
            }

            // Internal forces sum to zero (up to accumulation rounding).
            let scale = u.as_slice().iter().fold(1.0_f64, |m, x| m.max(x.abs()));
            for a in 0..2 {
                let total: f64 = (0..3).map(|i| u.block(i)[a]).sum();
                assert!(total.abs() <= 1e-12 * scale, "momentum leak {total}");
            }
        }
    }

    #[test]
    fn nominal_control_rotation_equivariant() {
        let fw = triangle(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (s, c) = 1.1_f64.sin_cos();
        let rot = |w: &[f64]| -> Vec<f64> {
            w.chunks(2)
                .flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
                .collect()
        };
        let u = nominal_control(&fw, &sv(&q, 2, 3), &sv(&v, 2, 3), &Gains::default());
        let u_rot = nominal_control(&fw, &sv(&rot(&q), 2, 3), &sv(&rot(&v), 2, 3), &Gains::default());
        let rotated_u = rot(u.as_slice());
        for (a, b) in rotated_u.iter().zip(u_rot.as_slice()) {
            assert_relative_eq!(a, b, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn learning_with_empty_models_is_bitwise_nominal() {
        let fw = triangle(2.0);
        let models: Vec<GpModel> = (0..3)
            .map(|_| GpModel::new(KernelParams::default_for_dim(4), 2))
            .collect();
        let cfg = ControlConfig {
            mode: ControlMode::Learning,
            gains: Gains::default(),
            prior: None,
            models: &models,
        };
        let q = sv(&[0.3, 0.1, 2.5, 0.0, 1.0, 1.7], 2, 3);
        let v = sv(&[0.1, 0.2, -0.3, 0.4, 0.0, -0.1], 2, 3);
        let learned = learning_control(&fw, &q, &v, &cfg).unwrap();
        let nominal = nominal_control(&fw, &q, &v, &Gains::default());
        assert_eq!(learned.as_slice(), nominal.as_slice());
    }

    struct ConstForce(Vec<Vec<f64>>);

    impl StateForce for ConstForce {
        fn eval(&self, agent: usize, _q: &[f64], _v: &[f64], out: &mut [f64]) {
            out.copy_from_slice(&self.0[agent]);
        }
    }

    #[test]
    fn perfect_prior_cancels_in_closed_loop() {
        // u + f = nominal when fhat = f and the datasets are empty.
        let fw = triangle(2.0);
        let f = ConstForce(vec![vec![1.5, -2.0], vec![0.0, 3.0], vec![-1.0, 0.5]]);
        let models: Vec<GpModel> = (0..3)
            .map(|_| GpModel::new(KernelParams::default_for_dim(4), 2))
            .collect();
        let cfg = ControlConfig {
            mode: ControlMode::Learning,
            gains: Gains::default(),
            prior: Some(&f),
            models: &models,
        };
        let q = sv(&[0.3, 0.1, 2.5, 0.0, 1.0, 1.7], 2, 3);
        let v = sv(&[0.1, 0.2, -0.3, 0.4, 0.0, -0.1], 2, 3);
        let mut u = learning_control(&fw, &q, &v, &cfg).unwrap();
        for i in 0..3 {
            let fi = &f.0[i];
            for a in 0..2 {
                u.block_mut(i)[a] += fi[a];
            }
        }
        let nominal = nominal_control(&fw, &q, &v, &Gains::default());
        for (a, b) in u.as_slice().iter().zip(nominal.as_slice()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn trained_model_compensates_at_training_states() {
        // After noiseless training on y = f the compensation term equals f
        // at a training state.
        let fw = triangle(2.0);
        let kernel = KernelParams::new(vec![1.0; 4], 1.0, 0.0).unwrap();
        let f_values = [[1.0, -0.5], [2.0, 0.0], [-1.5, 0.75]];
        let mut models = Vec::new();
        let q = sv(&[0.0, 0.0, 2.0, 0.0, 1.0, 1.8], 2, 3);
        let v = sv(&[0.1, 0.0, 0.0, 0.2, -0.1, 0.0], 2, 3);
        for i in 0..3 {
            let mut p = q.block(i).to_vec();
            p.extend_from_slice(v.block(i));
            models.push(
                GpModel::new(kernel.clone(), 2)
                    .add_observation(p, f_values[i].to_vec())
                    .unwrap(),
            );
        }
        let cfg = ControlConfig {
            mode: ControlMode::Learning,
            gains: Gains::default(),
            prior: None,
            models: &models,
        };
        let u = learning_control(&fw, &q, &v, &cfg).unwrap();
        let nominal = nominal_control(&fw, &q, &v, &Gains::default());
        for i in 0..3 {
            for a in 0..2 {
                let compensation = nominal.block(i)[a] - u.block(i)[a];
                assert_relative_eq!(compensation, f_values[i][a], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn learning_requires_model_per_agent() {
        let fw = triangle(2.0);
        let models = vec![GpModel::new(KernelParams::default_for_dim(4), 2)];
        let cfg = ControlConfig {
            mode: ControlMode::Learning,
            gains: Gains::default(),
            prior: None,
            models: &models,
        };
        let q = equilateral(2.0);
        let v = StackedVector::zeros(2, 3);
        assert!(matches!(
            learning_control(&fw, &q, &v, &cfg),
            Err(ControlError::ModelCount { models: 1, agents: 3 })
        ));
    }

    #[test]
    fn decentralized_equals_stacked_bitwise() {
        let fw = triangle(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kernel = KernelParams::new(vec![1.0; 4], 1.0, 0.5).unwrap();
        let models: Vec<GpModel> = (0..3)
            .map(|i| {
                GpModel::new(kernel.clone(), 2)
                    .add_observation(vec![i as f64, 0.0, 0.1, 0.2], vec![0.3, -0.4])
                    .unwrap()
            })
            .collect();
        let gains = Gains { align: 0.7, shape: 1.3 };
        for _ in 0..50 {
            let q: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let qs = sv(&q, 2, 3);
            let vs = sv(&v, 2, 3);
            let cfg = ControlConfig {
                mode: ControlMode::Learning,
                gains,
                prior: None,
                models: &models,
            };
            let stacked = learning_control(&fw, &qs, &vs, &cfg).unwrap();
            for i in 0..3 {
                let neighbors: Vec<NeighborState> = (0..3)
                    .filter(|&j| j != i)
                    .map(|j| NeighborState { agent: j, q: qs.block(j), v: vs.block(j) })
                    .collect();
                let u_i = decentralized_control_agent(
                    &fw,
                    i,
                    qs.block(i),
                    vs.block(i),
                    &neighbors,
                    None,
                    Some(&models[i]),
                    &gains,
                )
                .unwrap();
                assert_eq!(u_i.as_slice(), stacked.block(i), "agent {i}");
            }
        }
    }

    #[test]
    fn decentralized_missing_neighbor_errors() {
        let fw = triangle(2.0);
        let q = equilateral(2.0);
        let v = StackedVector::zeros(2, 3);
        let neighbors = [NeighborState { agent: 1, q: q.block(1), v: v.block(1) }];
        let err = decentralized_control_agent(
            &fw,
            0,
            q.block(0),
            v.block(0),
            &neighbors,
            None,
            None,
            &Gains::default(),
        );
        assert!(matches!(err, Err(ControlError::MissingNeighbor(2))));
    }

    #[test]
    fn two_agent_line_attracts_when_stretched() {
        // e > 0: agents accelerate toward each other along the edge.
        let fw = Framework::new(2, 2, vec![(0, 1)], vec![1.0]).unwrap();
        let q = sv(&[0.0, 0.0, 2.0, 0.0], 2, 2);
        let v = StackedVector::zeros(2, 2);
        let u = nominal_control(&fw, &q, &v, &Gains::default());
        // -R^T e evaluated directly: e = 3, z = (-2, 0).
        let r = rigidity_matrix(&fw, &q);
        let e = distance_errors(&fw, &q);
        let direct = -(r.transpose() * e.to_dvector());
        for (a, b) in u.as_slice().iter().zip(direct.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        assert!(u.block(0)[0] > 0.0, "agent 0 pulls toward agent 1");
        assert!(u.block(1)[0] < 0.0, "agent 1 pulls toward agent 0");
        // Isolated shape term at the desired spacing vanishes.
        let q_eq = sv(&[0.0, 0.0, 1.0, 0.0], 2, 2);
        assert_eq!(nominal_control(&fw, &q_eq, &v, &Gains::default()).norm(), 0.0);
    }

    /// -grad_v of the alignment energy 1/2 v^T (L ⊗ I) v matches the
    /// alignment term by finite differences.
    #[test]
    fn alignment_term_is_gradient_of_laplacian_energy() {
        let fw = triangle(2.0);
        let v0: Vec<f64> = vec![0.4, -0.8, 1.2, 0.3, -0.5, 0.9];
        let l = crate::network::laplacian(&fw);
        let lk = l.kronecker(&nalgebra::DMatrix::identity(2, 2));
        let energy = |v: &[f64]| -> f64 {
            let vv = nalgebra::DVector::from_column_slice(v);
            0.5 * vv.dot(&(&lk * &vv))
        };
        let q = equilateral(2.0);
        let u = nominal_control(&fw, &q, &sv(&v0, 2, 3), &Gains::default());
        let h = 1e-6;
        for idx in 0..6 {
            let mut vp = v0.clone();
            let mut vm = v0.clone();
            vp[idx] += h;
            vm[idx] -= h;
            let fd = (energy(&vp) - energy(&vm)) / (2.0 * h);
            assert_relative_eq!(u.as_slice()[idx], -fd, epsilon = 1e-6, max_relative = 1e-6);
        }
    }
}
