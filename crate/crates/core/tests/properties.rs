use std::f64::consts::PI;

use cartmech_autodiff::fd;
use cartmech_core::constraints::{jacobian_phi, jacobian_psi, phi, psi, violation_rmse};
use cartmech_core::dynamics::{apply_j, projection_matrix};
use cartmech_core::{assemble_mass_matrix, Flavor, System, SystemConfig, SystemSpec, Tolerances};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn systems() -> Vec<System> {
    [
        SystemConfig::n_pendulum(3),
        SystemConfig::coupled_pendulums(3),
        SystemConfig::magnet_pendulum(),
        SystemConfig::gyroscope(),
        SystemConfig::rotor(),
    ]
    .iter()
    .map(|c| System::build(c).unwrap())
    .collect()
}

fn max_abs<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_is_idempotent_and_tangent(seed in any::<u64>(), which in 0usize..5) {
        let sys = &systems()[which];
        let z = sys.ctx.to_hamiltonian_state(&sys.sample(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap()).unwrap();
        let dpsi = sys.ctx.jacobian_psi(&z).unwrap();
        let p = projection_matrix(&dpsi).unwrap();
        prop_assert!(max_abs((&p * &p - &p).iter()) < 1e-8);
        let flow = &p * DVector::from_vec(apply_j(&sys.ctx.grad_hamiltonian(&z).unwrap()));
        prop_assert!(max_abs((&dpsi * &flow).iter()) < 1e-9);
    }

    #[test]
    fn generic_flow_matches_explicit_projection(seed in any::<u64>(), which in 0usize..5) {
        let sys = &systems()[which];
        let z = sys.ctx.to_hamiltonian_state(&sys.sample(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap()).unwrap();
        let p = projection_matrix(&sys.ctx.jacobian_psi(&z).unwrap()).unwrap();
        let explicit = &p * DVector::from_vec(sys.ctx.unconstrained_dynamics(&z).unwrap());
        let generic = sys.ctx.constrained_hamiltonian_dynamics(&z).unwrap();
        let multipliers = sys.ctx.multiplier_dynamics(&z).unwrap();
        let scale = max_abs(explicit.iter()).max(1.0);
        for ((a, b), c) in explicit.iter().zip(&generic).zip(&multipliers) {
            prop_assert!((a - b).abs() < 1e-8 * scale);
            prop_assert!((a - c).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn jacobians_match_central_differences(seed in any::<u64>(), which in 0usize..5) {
        let topo = systems()[which].ctx.topology.clone();
        let mass = assemble_mass_matrix(&topo.bodies).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dn = topo.dn();
        let x: Vec<f64> = (0..dn).map(|_| rand::Rng::random_range(&mut rng, -1.5..1.5)).collect();
        let p: Vec<f64> = (0..dn).map(|_| rand::Rng::random_range(&mut rng, -1.5..1.5)).collect();
        let num = fd::jacobian(|y| phi(&topo, y).unwrap().as_slice().to_vec(), &x, 1e-5);
        let ana = jacobian_phi(&topo, &x).unwrap();
        for (r, row) in num.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                prop_assert!((ana[(r, c)] - v).abs() < 1e-6);
            }
        }
        let z: Vec<f64> = x.iter().chain(&p).copied().collect();
        let num = fd::jacobian(|y| psi(&topo, &mass, &y[..dn], &y[dn..]).unwrap().as_slice().to_vec(), &z, 1e-5);
        let ana = jacobian_psi(&topo, &mass, &x, &p).unwrap();
        for (r, row) in num.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                prop_assert!((ana[(r, c)] - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn chain_mass_matrix_matches_kinetic_energy(
        q in prop::collection::vec(-PI..PI, 1..6),
        rates in prop::collection::vec(-2.0f64..2.0, 6),
        masses in prop::collection::vec(0.3f64..3.0, 6),
        lengths in prop::collection::vec(0.3f64..3.0, 6),
    ) {
        let n = q.len();
        let cfg = SystemConfig {
            spec: SystemSpec::NPendulum { n, masses: masses[..n].to_vec(), lengths: lengths[..n].to_vec() },
            ..SystemConfig::n_pendulum(n)
        };
        let oracle = System::build(&cfg).unwrap().pendulum_oracle().unwrap();
        let qd = &rates[..n];
        let (_, v) = oracle.embed(&q, qd);
        let brute: f64 = (0..n).map(|k| 0.5 * masses[k] * (v[2 * k].powi(2) + v[2 * k + 1].powi(2))).sum();
        let qdv = DVector::from_column_slice(qd);
        let quad = 0.5 * qdv.dot(&(oracle.mass_matrix(&q) * &qdv));
        prop_assert!((brute - quad).abs() < 1e-10 * brute.max(1.0));
    }

    #[test]
    fn embedding_round_trips_through_angles(q in prop::collection::vec(-3.0f64..3.0, 1..5), seed in any::<u64>()) {
        let n = q.len();
        let oracle = System::build(&SystemConfig::n_pendulum(n)).unwrap().pendulum_oracle().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qd: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect();
        let (x, v) = oracle.embed(&q, &qd);
        let (q2, qd2) = oracle.angles(&x, &v);
        for k in 0..n {
            prop_assert!((q[k] - q2[k]).abs() < 1e-12);
            prop_assert!((qd[k] - qd2[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn short_rollouts_conserve_energy_and_stay_on_the_manifold() {
    let times: Vec<f64> = (0..=33).map(|k| k as f64 * 0.03).collect();
    let tol = Tolerances::new(1e-9, 1e-11);
    for sys in systems() {
        if matches!(sys.config.spec, SystemSpec::MagnetPendulum { .. }) {
            continue;
        }
        let z0 = sys.sample(&mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let traj = sys.simulate(&z0, &times, &tol, Flavor::Hamiltonian).unwrap();
        let h0 = sys.energy(&z0).unwrap();
        for z in &traj.states {
            assert!((sys.energy(z).unwrap() - h0).abs() < 1e-7 * h0.abs().max(1.0), "{}", sys.name());
        }
        let rmse = violation_rmse(&sys.ctx.topology, traj.states.iter().map(|z| &z[..sys.dn()])).unwrap();
        assert!(rmse.iter().all(|&r| r < 1e-7), "{}", sys.name());
    }
}

#[test]
fn both_flavors_agree_on_the_double_pendulum() {
    let sys = System::build(&SystemConfig::n_pendulum(2)).unwrap();
    let z0 = sys.sample(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
    let tol = Tolerances::new(1e-10, 1e-12);
    let h = sys.simulate(&z0, &times, &tol, Flavor::Hamiltonian).unwrap();
    let l = sys.simulate(&z0, &times, &tol, Flavor::Lagrangian).unwrap();
    for (a, b) in h.states.iter().zip(&l.states) {
        assert!(a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-7));
    }
}

#[test]
fn cartesian_double_pendulum_tracks_the_closed_form() {
    let sys = System::build(&SystemConfig::n_pendulum(2)).unwrap();
    let oracle = sys.pendulum_oracle().unwrap();
    let z0 = sys.sample(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.02).collect();
    let tol = Tolerances::new(1e-10, 1e-12);
    let cart = sys.simulate(&z0, &times, &tol, Flavor::Hamiltonian).unwrap();
    let (q, qd) = oracle.angles(&z0[..4], &z0[4..]);
    let p = oracle.mass_matrix(&q) * DVector::from_vec(qd);
    let g0: Vec<f64> = q.iter().chain(p.iter()).copied().collect();
    let gen = cartmech_core::integrators::integrate_adaptive(|_, z| oracle.closed_form_two(z), &g0, &times, &tol).unwrap();
    for (c, g) in cart.states.iter().zip(&gen.states) {
        let qd = oracle.mass_matrix(&g[..2]).lu().solve(&DVector::from_column_slice(&g[2..])).unwrap();
        let (x, _) = oracle.embed(&g[..2], qd.as_slice());
        assert!(x.iter().zip(&c[..4]).all(|(a, b)| (a - b).abs() < 1e-6));
    }
}

#[test]
fn disabling_a_link_lets_the_chain_leave_the_manifold() {
    let full = System::build(&SystemConfig::n_pendulum(3)).unwrap();
    let cut = full.with_mask(&[true, true, false]).unwrap();
    let z0 = full.sample(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.03).collect();
    let tol = Tolerances::new(1e-8, 1e-10);
    let kept = full.simulate(&z0, &times, &tol, Flavor::Hamiltonian).unwrap();
    let freed = cut.simulate(&z0, &times, &tol, Flavor::Hamiltonian).unwrap();
    let rmse = |states: &[Vec<f64>]| violation_rmse(&full.ctx.topology, states.iter().map(|z| &z[..6])).unwrap();
    let (a, b) = (rmse(&kept.states), rmse(&freed.states));
    assert!(a.last().unwrap() < &1e-6);
    assert!(b.last().unwrap() > &1e-2, "violation {}", b.last().unwrap());
}

#[test]
fn tighter_tolerances_shrink_the_endpoint_error() {
    let sys = System::build(&SystemConfig::n_pendulum(2)).unwrap();
    let z0 = sys.sample(&mut ChaCha8Rng::seed_from_u64(21)).unwrap();
    let times = [0.0, 1.0];
    let reference = sys.simulate(&z0, &times, &Tolerances::new(1e-12, 1e-14), Flavor::Hamiltonian).unwrap();
    let mut last = f64::INFINITY;
    for rtol in [1e-3, 1e-5, 1e-7, 1e-9] {
        let t = sys.simulate(&z0, &times, &Tolerances::new(rtol, rtol / 100.0), Flavor::Hamiltonian).unwrap();
        let err = max_abs(t.states[1].iter().zip(&reference.states[1]).map(|(a, b)| a - b).collect::<Vec<_>>().iter());
        assert!(err < last, "rtol {rtol}: {err} ≥ {last}");
        last = err;
    }
}

fn exponential(_t: f64, z: &[f64]) -> cartmech_core::Result<Vec<f64>> {
    Ok(z.to_vec())
}

fn observed_order(errors: [f64; 2]) -> f64 {
    (errors[0] / errors[1]).log2()
}

#[test]
fn rk4_and_dp5_reach_their_orders() {
    let e = 1f64.exp();
    let rk4 = [10, 20].map(|n| {
        let t = cartmech_core::integrators::rollout_fixed(exponential, &[1.0], &[0.0, 1.0], n).unwrap();
        (t.states[1][0] - e).abs()
    });
    assert!(observed_order(rk4) >= 3.9, "rk4 order {}", observed_order(rk4));
    let dp5 = [8, 16].map(|n| (cartmech_core::integrators::dp5_fixed(exponential, &[1.0], 0.0, 1.0, n).unwrap()[0] - e).abs());
    assert!(observed_order(dp5) >= 4.8, "dp5 order {}", observed_order(dp5));
}

#[test]
fn harmonic_oscillator_returns_after_one_period() {
    let f = |_t: f64, z: &[f64]| Ok(vec![z[1], -z[0]]);
    let t = cartmech_core::integrators::rollout_fixed(f, &[1.0, 0.0], &[0.0, 2.0 * PI], 1000).unwrap();
    assert!((t.states[1][0] - 1.0).abs() < 1e-6 && t.states[1][1].abs() < 1e-6);
}

#[test]
fn adaptive_solver_meets_the_exponential_target() {
    let t = cartmech_core::integrators::integrate_adaptive(exponential, &[1.0], &[0.0, 1.0], &Tolerances::new(1e-7, 1e-9)).unwrap();
    assert!((t.states[1][0] - 1f64.exp()).abs() < 1e-6);
}

#[test]
fn rollouts_are_bit_reproducible() {
    let sys = System::build(&SystemConfig::gyroscope()).unwrap();
    let z0 = sys.sample(&mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.03).collect();
    let tol = Tolerances::new(1e-7, 1e-9);
    let a = sys.simulate(&z0, &times, &tol, Flavor::Hamiltonian).unwrap();
    let b = sys.simulate(&z0, &times, &tol, Flavor::Hamiltonian).unwrap();
    assert_eq!(a.states, b.states);
}
