use nalgebra::{Matrix3, Schur};
use num_complex::Complex64;
use topolattice::fitting::{find_peaks, fit_level_repulsion, Branches, FitInit};
use topolattice::lattice::LatticeSpec;
use topolattice::magnon::{anticrossing_sweep, effective_coupling, MagnonSpec};
use topolattice::scattering::{transmission_map, PortConfig};
use topolattice::spectral::Spectrum;

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Magnon plus the two Hermitian edge modes, in the chain eigenbasis.
fn three_mode_real_parts(spectrum: &Spectrum, magnon: &MagnonSpec, current: f64) -> [f64; 3] {
    let (e6, e7) = (spectrum.mode(6).unwrap(), spectrum.mode(7).unwrap());
    let g6 = magnon.g0_mhz * e6.amplitude(magnon.site);
    let g7 = magnon.g0_mhz * e7.amplitude(magnon.site);
    let wn = Complex64::new(1e3 * (magnon.frequency_ghz(current) - spectrum.reference_ghz), -magnon.gamma_n_mhz);
    let zero = Complex64::new(0.0, 0.0);
    let m = Matrix3::new(e6.value, zero, g6, zero, e7.value, g7, g6, g7, wn);
    let ev = Schur::new(m).eigenvalues().expect("3x3 Schur");
    let mut re = [ev[0].re, ev[1].re, ev[2].re];
    re.sort_by(f64::total_cmp);
    re
}

#[test]
fn hermitian_edge_anticrossing_matches_three_mode_model() {
    let spec = LatticeSpec::hermitian_device();
    let spectrum = Spectrum::of_lattice(&spec).unwrap();
    let magnon = MagnonSpec { site: 1, g0_mhz: 60.0, gamma_n_mhz: 1.0, c0_ghz: spec.omega0_ghz - 0.1, c1_ghz_per_a: 0.1 };
    let currents = grid(0.0, 2.0, 201);
    let sweep = anticrossing_sweep(&spec, &magnon, &currents).unwrap();
    assert!(sweep.ambiguities.is_empty());

    let (gap, at) = sweep.min_gap(5, 7);
    let oracle = currents
        .iter()
        .map(|&i| {
            let r = three_mode_real_parts(&spectrum, &magnon, i);
            r[2] - r[0]
        })
        .fold(f64::INFINITY, f64::min);
    assert!((gap - oracle).abs() < 0.02 * oracle, "full {gap} vs three-mode {oracle}");
    assert!((at - 1.0).abs() < 0.05);

    // Both edge modes take part: the gap is set by the collective coupling,
    // not by either mode alone.
    let g6 = effective_coupling(&spectrum, 6, 1, magnon.g0_mhz).unwrap();
    let g7 = effective_coupling(&spectrum, 7, 1, magnon.g0_mhz).unwrap();
    let collective = (g6 * g6 + g7 * g7).sqrt();
    assert!((gap - 2.0 * collective).abs() < 0.03 * 2.0 * collective);
    assert!(gap > 1.3 * 2.0 * g6);
}

#[test]
fn map_peaks_fit_recovers_collective_edge_coupling() {
    let spec = LatticeSpec::hermitian_device();
    let spectrum = Spectrum::of_lattice(&spec).unwrap();
    let magnon = MagnonSpec { site: 1, g0_mhz: 60.0, gamma_n_mhz: 1.0, c0_ghz: spec.omega0_ghz - 0.1, c1_ghz_per_a: 0.1 };
    let currents = grid(0.5, 1.5, 41);
    let omegas = grid(spec.omega0_ghz - 0.16, spec.omega0_ghz + 0.16, 641);
    let map = transmission_map(&spec, &magnon, &PortConfig::end_fed(spec.n_sites(), 5.0), &currents, &omegas).unwrap();

    let mut branches = Branches::default();
    for (i, &current) in currents.iter().enumerate() {
        let centers: Vec<f64> = find_peaks(&omegas, map.s21_cut(i))
            .unwrap()
            .iter()
            .map(|p| p.center)
            .filter(|w| (w - spec.omega0_ghz).abs() < 0.15)
            .collect();
        assert_eq!(centers.len(), 2, "at {current} A");
        branches.a.push((current, centers[1]));
        branches.b.push((current, centers[0]));
    }
    let init = FitInit { g_mhz: None, omega_m_ghz: None, loss_m_mhz: 30.0, gamma_n_mhz: 1.0 };
    let fit = fit_level_repulsion(&branches, magnon.c0_ghz, magnon.c1_ghz_per_a, &init).unwrap();
    assert!(fit.converged);

    let g6 = effective_coupling(&spectrum, 6, 1, magnon.g0_mhz).unwrap();
    let g7 = effective_coupling(&spectrum, 7, 1, magnon.g0_mhz).unwrap();
    let collective = (g6 * g6 + g7 * g7).sqrt();
    assert!((fit.g_mhz - collective).abs() < 0.05 * collective, "fit {} vs {collective}", fit.g_mhz);
    assert!((fit.omega_m_ghz - spec.omega0_ghz).abs() < 1e-3);
}
