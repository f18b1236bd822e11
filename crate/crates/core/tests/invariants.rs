use std::f64::consts::PI;

use approx::assert_relative_eq;
use num_complex::Complex64;
use proptest::prelude::*;

use semitrace_core::dynamics::{flow_map_with_jacobian, FlowOptions};
use semitrace_core::hamiltonians::{Builtin, Hamiltonian, PhaseSpacePoint};
use semitrace_core::linalg::symplectic_defect;
use semitrace_core::orbits::{repetition, EnergyShell, OrbitOptions};
use semitrace_core::oscillatory::trace_phase;
use semitrace_core::quantum_oracle::GridHamiltonian;
use semitrace_core::traceformula::shell_start_1d;
use semitrace_core::wavepackets::{coherent_overlap, CoherentState};
use semitrace_core::window::SpectralWindow;

fn pt(q: &[f64], p: &[f64]) -> PhaseSpacePoint {
    PhaseSpacePoint::new(q.to_vec(), p.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_jacobian_is_symplectic(q in -1.5..1.5f64, p in -1.5..1.5f64, t in 0.05..6.0f64, quartic in any::<bool>()) {
        let sys = if quartic { Builtin::Quartic1d { a: 0.0 } } else { Builtin::Ho1d };
        let z = [q, p];
        let (zt, f, _) = flow_map_with_jacobian(&sys, &z, t, &FlowOptions::default()).unwrap();
        prop_assert!(symplectic_defect(&f) < 1e-8);
        let (e0, e1) = (sys.energy(&z), sys.energy(&zt));
        prop_assert!((e1 - e0).abs() <= 1e-9 * e0.abs().max(1.0));
    }

    #[test]
    fn ho2d_flow_is_symplectic(z in prop::array::uniform4(-1.0..1.0f64), t in 0.05..4.0f64) {
        let sys = Builtin::Ho2dAniso { omega: (1.0 + 5f64.sqrt()) / 2.0 };
        let (_, f, _) = flow_map_with_jacobian(&sys, &z, t, &FlowOptions::default()).unwrap();
        prop_assert!(symplectic_defect(&f) < 1e-8);
    }

    #[test]
    fn overlap_matches_grid_quadrature(a in prop::array::uniform2(-1.0..1.0f64), b in prop::array::uniform2(-1.0..1.0f64)) {
        let hbar = 0.1;
        let n = 512;
        let grid = GridHamiltonian::from_potential_samples(1, 6.0, n, hbar, vec![0.0; n]).unwrap();
        let alpha = pt(&[a[0]], &[a[1]]);
        let beta = pt(&[b[0]], &[b[1]]);
        let fa = CoherentState::new(alpha.clone(), hbar).unwrap().sample(&grid).unwrap();
        let fb = CoherentState::new(beta.clone(), hbar).unwrap().sample(&grid).unwrap();
        let numeric = grid.inner(&fa, &fb);
        let closed = coherent_overlap(&alpha, &beta, hbar);
        prop_assert!((numeric - closed).norm() < 1e-9, "{numeric} vs {closed}");
        // modulus is exp(-|alpha - beta|^2 / 4 hbar)
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        prop_assert!((closed.norm() - (-d2 / (4.0 * hbar)).exp()).abs() < 1e-12);
    }

    #[test]
    fn trace_phase_has_nonnegative_imaginary_part(
        t in -4.0..4.0f64,
        y in prop::array::uniform2(-2.0..2.0f64),
        z in prop::array::uniform4(-1.0..1.0f64),
    ) {
        let sys = Builtin::Ho2dAniso { omega: 1.3 };
        let alpha = pt(&z[..2], &z[2..]);
        let phi = trace_phase(&sys, t, &y, &alpha, 1.0, &FlowOptions::default()).unwrap();
        prop_assert!(phi.im >= -1e-12, "Im Phi = {}", phi.im);
    }

    #[test]
    fn window_transform_pair(support in 1.0..6.0f64, x in -20.0..20.0f64) {
        let w = SpectralWindow::new(support, 0.0, 1.0).unwrap();
        prop_assert!((w.g(x) - w.g(-x)).abs() < 1e-14);
        prop_assert!((w.g_many(&[x])[0] - w.g(x)).abs() < 1e-14);
        prop_assert_eq!(w.ghat(0.0), 1.0);
        prop_assert_eq!(w.ghat(support), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ho1d_maslov_is_twice_the_winding(e in 0.3..3.0f64, k in 1i32..4, reversed in any::<bool>()) {
        let k = if reversed { -k } else { k };
        let shell = EnergyShell::new(Builtin::Ho1d, e, 0.5 * e).unwrap();
        let (start, period) = shell_start_1d(&Builtin::Ho1d, e).unwrap();
        let o = repetition(&shell, &start, period, k, &OrbitOptions::default()).unwrap();
        prop_assert_eq!(o.maslov, 2 * k);
        prop_assert!((o.action - 2.0 * PI * e * k as f64 / 2.0).abs() < 1e-8 * e.max(1.0) * k.abs() as f64,
            "S = {} for E = {e}, k = {k}", o.action);
    }
}

#[test]
fn window_integral_is_ghat_at_zero() {
    // int g dx = ĝ(0), by trapezoid over the fast-decaying kernel
    let w = SpectralWindow::new(3.5, 0.0, 1.0).unwrap().with_amplitude(2.5);
    let h = 0.01;
    let xs: Vec<f64> = (-8000..=8000).map(|i| i as f64 * h).collect();
    let total: f64 = w.g_many(&xs).iter().sum::<f64>() * h;
    assert_relative_eq!(total, 2.5, max_relative = 1e-8);
}

#[test]
fn grid_state_norm() {
    let hbar = 0.05;
    let grid = GridHamiltonian::build(&Builtin::Ho1d, 4.0, 512, hbar, 1.0, 0.5).unwrap();
    let psi = CoherentState::new(pt(&[0.4], &[-0.3]), hbar).unwrap().sample(&grid).unwrap();
    assert_relative_eq!(grid.norm(&psi), 1.0, epsilon = 1e-10);
    let z: Complex64 = grid.inner(&psi, &psi);
    assert_relative_eq!(z.re, 1.0, epsilon = 1e-10);
}
