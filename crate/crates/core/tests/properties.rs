use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use topolattice::fitting::{find_peaks, fit_level_repulsion, Branches, FitInit};
use topolattice::lattice::{bloch_hamiltonian, build_chain_hamiltonian, bulk_bands, LatticeSpec};
use topolattice::magnon::{edge_linewidth, effective_coupling, two_mode_hybrid};
use topolattice::scattering::{s_spectrum, PortConfig};
use topolattice::spectral::{eigendecompose, particle_hole_residual, Spectrum};
use topolattice::topology::{edge_sptb_threshold, winding_generalized, winding_hermitian};

fn chain_spec() -> impl Strategy<Value = LatticeSpec> {
    (1usize..=8, 5.0..6.0f64, 0.0..80.0f64, 0.0..80.0f64, 50.0..400.0f64, 50.0..400.0f64).prop_map(
        |(n_cells, omega0_ghz, gamma_a_mhz, gamma_b_mhz, v_mhz, w_mhz)| LatticeSpec {
            n_cells,
            omega0_ghz,
            gamma_a_mhz,
            gamma_b_mhz,
            v_mhz,
            w_mhz,
            hopping_imag_mhz: 0.0,
        },
    )
}

fn topological_spec() -> impl Strategy<Value = LatticeSpec> {
    (3usize..=7, 150.0..250.0f64, 1.3..2.0f64, 20.0..60.0f64).prop_map(|(n, v, ratio, bar)| LatticeSpec {
        n_cells: n,
        omega0_ghz: 5.48,
        gamma_a_mhz: bar,
        gamma_b_mhz: bar,
        v_mhz: v,
        w_mhz: v * ratio,
        hopping_imag_mhz: 0.0,
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn chain_matrix_is_complex_symmetric(spec in chain_spec(), gamma in -20.0..20.0f64) {
        let spec = LatticeSpec { hopping_imag_mhz: gamma, ..spec };
        let h = build_chain_hamiltonian(&spec).unwrap();
        prop_assert!(h.is_complex_symmetric(0.0));
    }

    #[test]
    fn uniform_loss_shift_moves_eigenvalues(spec in chain_spec(), c in 0.0..50.0f64) {
        let a = Spectrum::of_lattice(&spec).unwrap();
        let b = Spectrum::of_lattice(&spec.with_uniform_loss_shift(c)).unwrap();
        for z in a.values() {
            let target = z - Complex64::new(0.0, c);
            let nearest = b.values().iter().map(|w| (w - target).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest < 1e-6 * spec.hopping_sum().max(1.0));
        }
    }

    #[test]
    fn particle_hole_pairs(spec in chain_spec()) {
        let s = Spectrum::of_lattice(&spec).unwrap();
        prop_assert!(particle_hole_residual(&s).unwrap() <= 1e-8 * spec.hopping_sum() + 1e-9);
    }

    #[test]
    fn pdos_normalized_and_residual_bounded(spec in chain_spec()) {
        let h = build_chain_hamiltonian(&spec).unwrap();
        let s = eigendecompose(&h).unwrap();
        prop_assert_eq!(s.len(), 2 * spec.n_cells);
        for m in &s.modes {
            let total: f64 = m.amplitudes.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
        for pair in s.modes.windows(2) {
            prop_assert!(pair[0].value.re <= pair[1].value.re + 1e-6 * h.coupling_scale());
        }
    }

    #[test]
    fn bands_symmetric_in_k(spec in chain_spec(), k in -PI..PI) {
        let (a, b) = bulk_bands(&spec, k);
        let (c, d) = bulk_bands(&spec, -k);
        let direct = ((a - c).norm() + (b - d).norm()).min((a - d).norm() + (b - c).norm());
        prop_assert!(direct < 1e-9);
        // Bands agree with diagonalizing the Bloch matrix.
        let e = eigendecompose(&bloch_hamiltonian(&spec, k).unwrap()).unwrap().values();
        for band in [a, b] {
            prop_assert!(e.iter().map(|z| (z - band).norm()).fold(f64::INFINITY, f64::min) < 1e-6);
        }
    }

    #[test]
    fn winding_is_grid_independent(spec in chain_spec(), n_k in 64usize..400) {
        prop_assume!((spec.v_mhz - spec.w_mhz).abs() > 0.05 * spec.hopping_sum());
        let a = winding_hermitian(&spec, n_k).unwrap();
        prop_assert_eq!(a, winding_hermitian(&spec, 4 * n_k).unwrap());
        prop_assert_eq!(a, if spec.v_mhz < spec.w_mhz { 1 } else { 0 });
        let hermitian = LatticeSpec { gamma_b_mhz: spec.gamma_a_mhz, ..spec };
        prop_assert_eq!(winding_generalized(&hermitian, n_k).unwrap(), a);
    }

    #[test]
    fn hybrid_conserves_trace(
        a in (-500.0..500.0f64, 0.0..100.0f64),
        b in (-500.0..500.0f64, 0.0..100.0f64),
        g in 0.0..200.0f64,
    ) {
        let (x, y) = (Complex64::new(a.0, -a.1), Complex64::new(b.0, -b.1));
        let (p, m) = two_mode_hybrid(x, y, g);
        prop_assert!((p + m - x - y).norm() <= 1e-9 * (1.0 + x.norm() + y.norm()));
        prop_assert!((p * m - (x * y - g * g)).norm() <= 1e-9 * (1.0 + x.norm() * y.norm() + g * g));
    }

    #[test]
    fn couplings_complete_and_linewidths_convex(spec in topological_spec(), contrast in 0.0..30.0f64, g0 in 1.0..200.0f64) {
        let hermitian = Spectrum::of_lattice(&spec).unwrap();
        let n = spec.n_sites();
        for s in 1..=n {
            let total: f64 = (1..=n).map(|m| effective_coupling(&hermitian, m, s, g0).unwrap().powi(2)).sum();
            prop_assert!((total / (g0 * g0) - 1.0).abs() < 1e-9);
        }
        let lossy = Spectrum::of_lattice(&spec.with_delta_gamma(contrast)).unwrap();
        let edges = lossy.edge_modes();
        prop_assume!(edges.len() == 2);
        let lo = edges[0].loss_mhz().min(edges[1].loss_mhz());
        let hi = edges[0].loss_mhz().max(edges[1].loss_mhz());
        for s in 1..=n {
            let g = edge_linewidth(&lossy, s).unwrap();
            prop_assert!(g >= lo - 1e-9 && g <= hi + 1e-9);
        }
    }

    #[test]
    fn reciprocity_and_passivity(spec in chain_spec(), k1 in 0.0..20.0f64, k2 in 0.0..20.0f64) {
        prop_assume!(spec.n_sites() > 1);
        let h = build_chain_hamiltonian(&spec).unwrap();
        let ports = PortConfig { port1_site: 1, port2_site: spec.n_sites(), kappa1_mhz: k1, kappa2_mhz: k2 };
        let band = 1e-3 * (spec.hopping_sum() + 50.0);
        let omegas: Vec<f64> = (0..41).map(|i| spec.omega0_ghz - band + 2.0 * band * i as f64 / 40.0).collect();
        for s in s_spectrum(&h, &ports, &omegas).unwrap() {
            prop_assert!((s.s21 - s.s12).norm() <= 1e-12);
            prop_assert!(s.s11.norm_sqr() + s.s21.norm_sqr() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn peak_centres_ignore_amplitude_scale(center in 2.0..8.0f64, width in 0.2..1.0f64, scale in 1e-6..1e6f64) {
        let xs: Vec<f64> = (0..501).map(|i| i as f64 * 0.02).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 / ((x - center).powi(2) + 0.25 * width * width)).collect();
        let scaled: Vec<f64> = ys.iter().map(|y| y * scale).collect();
        let a = find_peaks(&xs, &ys).unwrap();
        let b = find_peaks(&xs, &scaled).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p.center - q.center).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_residual_ignores_branch_labels(g in 20.0..150.0f64, loss in 5.0..60.0f64) {
        let (c0, c1) = (5.2, 0.28);
        let mut br = Branches::default();
        for i in 0..31 {
            let current = i as f64 * 2.0 / 30.0;
            let wn = Complex64::new(1e3 * (c0 + c1 * current - 5.48), -1.0);
            let (x, y) = two_mode_hybrid(wn, Complex64::new(0.0, -loss), g);
            // Deterministic perturbation so the residual is nonzero.
            let wiggle = 1e-3 * (0.3 * (i as f64 * 1.7).sin());
            br.a.push((current, 5.48 + 1e-3 * x.re.max(y.re) + wiggle));
            br.b.push((current, 5.48 + 1e-3 * x.re.min(y.re) - wiggle));
        }
        let init = FitInit { g_mhz: None, omega_m_ghz: None, loss_m_mhz: 20.0, gamma_n_mhz: 1.0 };
        let fit = fit_level_repulsion(&br, c0, c1, &init).unwrap();
        let swapped = fit_level_repulsion(&Branches { a: br.b.clone(), b: br.a.clone() }, c0, c1, &init).unwrap();
        prop_assert_eq!(fit.residual, swapped.residual);
        prop_assert_eq!(fit.g_mhz, swapped.g_mhz);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn edge_threshold_ignores_uniform_loss(spec in topological_spec(), c in 0.0..40.0f64) {
        let a = edge_sptb_threshold(&spec).unwrap().delta_gamma_c;
        let b = edge_sptb_threshold(&spec.with_uniform_loss_shift(c)).unwrap().delta_gamma_c;
        prop_assert!((a - b).abs() <= 2e-6 * a);
    }
}
