//! Two-port response of a chain in temporal coupled-mode form.
//!
//! With `G(ω) = (ω - H_eff)^{-1}` and `H_eff` the Hamiltonian loaded by
//! the port rates,
//! `S_ab(ω) = δ_ab - 2i·sqrt(κ_a κ_b)·G_{p_a p_b}(ω)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{csv_line, sig9};
use crate::lattice::{build_chain_hamiltonian, ComplexMatrix, LatticeSpec};
use crate::magnon::{build_coupled_hamiltonian, MagnonSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortConfig {
    pub port1_site: usize,
    pub port2_site: usize,
    pub kappa1_mhz: f64,
    pub kappa2_mhz: f64,
}

impl PortConfig {
    /// End-fed ports on sites 1 and `n_sites` with equal rates.
    pub fn end_fed(n_sites: usize, kappa_mhz: f64) -> Self {
        PortConfig { port1_site: 1, port2_site: n_sites, kappa1_mhz: kappa_mhz, kappa2_mhz: kappa_mhz }
    }

    /// Checks sites against a `dim`-site system. Both ports may share the
    /// only site of a one-site system.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let mut problems = Vec::new();
        for (name, site) in [("port1_site", self.port1_site), ("port2_site", self.port2_site)] {
            if site == 0 || site > dim {
                problems.push(format!("{name} = {site} outside 1..={dim}"));
            }
        }
        if self.port1_site == self.port2_site && dim > 1 {
            problems.push(format!("both ports on site {}", self.port1_site));
        }
        for (name, k) in [("kappa1_mhz", self.kappa1_mhz), ("kappa2_mhz", self.kappa2_mhz)] {
            if !(k.is_finite() && k >= 0.0) {
                problems.push(format!("{name} must be finite and non-negative, got {k}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPorts(problems.join("; ")))
        }
    }

    fn sites(&self) -> [usize; 2] {
        [self.port1_site - 1, self.port2_site - 1]
    }

    fn kappas(&self) -> [f64; 2] {
        [self.kappa1_mhz, self.kappa2_mhz]
    }
}

/// `H - iκ1` at port 1 and `- iκ2` at port 2.
pub fn effective_hamiltonian(h: &ComplexMatrix, ports: &PortConfig) -> Result<ComplexMatrix> {
    ports.validate(h.dim())?;
    let mut out = h.clone();
    for (site, kappa) in ports.sites().into_iter().zip(ports.kappas()) {
        out[(site, site)] -= Complex64::new(0.0, kappa);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SParams {
    pub s11: Complex64,
    pub s12: Complex64,
    pub s21: Complex64,
    pub s22: Complex64,
}

impl SParams {
    /// `1 - |S_pp|² - |S_qp|²` for input port `p ∈ {1, 2}`.
    pub fn absorptivity(&self, input_port: u8) -> Result<f64> {
        match input_port {
            1 => Ok(1.0 - self.s11.norm_sqr() - self.s21.norm_sqr()),
            2 => Ok(1.0 - self.s22.norm_sqr() - self.s12.norm_sqr()),
            p => Err(Error::InvalidPorts(format!("input port must be 1 or 2, got {p}"))),
        }
    }
}

fn s_from_loaded(h_eff: &ComplexMatrix, ports: &PortConfig, omega_ghz: f64) -> Result<SParams> {
    let n = h_eff.dim();
    let w = Complex64::new(1e3 * (omega_ghz - h_eff.reference_ghz()), 0.0);
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { w - h_eff[(i, j)] } else { -h_eff[(i, j)] });
    let [p1, p2] = ports.sites();
    let mut rhs = DMatrix::zeros(n, 2);
    rhs[(p1, 0)] = Complex64::new(1.0, 0.0);
    rhs[(p2, 1)] = Complex64::new(1.0, 0.0);
    let g = a.lu().solve(&rhs).ok_or(Error::SingularResolvent { omega_ghz })?;
    if g.iter().any(|z| !z.is_finite()) {
        return Err(Error::SingularResolvent { omega_ghz });
    }
    let [k1, k2] = ports.kappas();
    let minus_2i = Complex64::new(0.0, -2.0);
    Ok(SParams {
        s11: 1.0 + minus_2i * k1 * g[(p1, 0)],
        s12: minus_2i * (k1 * k2).sqrt() * g[(p1, 1)],
        s21: minus_2i * (k1 * k2).sqrt() * g[(p2, 0)],
        s22: 1.0 + minus_2i * k2 * g[(p2, 1)],
    })
}

/// Scattering matrix of `h` (chain or magnon-coupled chain) at the probe
/// frequency `omega_ghz`.
pub fn s_matrix(h: &ComplexMatrix, ports: &PortConfig, omega_ghz: f64) -> Result<SParams> {
    let h_eff = effective_hamiltonian(h, ports)?;
    s_from_loaded(&h_eff, ports, omega_ghz)
}

/// Absorptivity for a signal loaded at `input_port` (1 or 2).
pub fn absorptivity(h: &ComplexMatrix, ports: &PortConfig, omega_ghz: f64, input_port: u8) -> Result<f64> {
    s_matrix(h, ports, omega_ghz)?.absorptivity(input_port)
}

/// S-parameters on a frequency grid, in grid order.
pub fn s_spectrum(h: &ComplexMatrix, ports: &PortConfig, omegas_ghz: &[f64]) -> Result<Vec<SParams>> {
    let h_eff = effective_hamiltonian(h, ports)?;
    omegas_ghz.par_iter().map(|&w| s_from_loaded(&h_eff, ports, w)).collect()
}

/// Grid metadata of a transmission map; round-trips through JSON exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapHeader {
    pub lattice: Option<LatticeSpec>,
    pub magnon: Option<MagnonSpec>,
    pub ports: Option<PortConfig>,
    pub currents_a: Vec<f64>,
    pub omegas_ghz: Vec<f64>,
}

impl MapHeader {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `|S21|²`, `A1` and `A2` on a current × frequency grid, stored
/// current-major (`index = i_current * n_omega + i_omega`).
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap {
    pub header: MapHeader,
    pub s21_sq: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
}

impl TransmissionMap {
    /// Assembles a map from raw grids, e.g. measured or synthetic data.
    pub fn from_parts(header: MapHeader, s21_sq: Vec<f64>, a1: Vec<f64>, a2: Vec<f64>) -> Result<Self> {
        let n = header.currents_a.len() * header.omegas_ghz.len();
        if n == 0 {
            return Err(Error::InvalidInput("map grids must be nonempty".into()));
        }
        if s21_sq.len() != n || a1.len() != n || a2.len() != n {
            return Err(Error::InvalidInput(format!(
                "map data lengths ({}, {}, {}) do not match the {}x{} grid",
                s21_sq.len(),
                a1.len(),
                a2.len(),
                header.currents_a.len(),
                header.omegas_ghz.len()
            )));
        }
        Ok(TransmissionMap { header, s21_sq, a1, a2 })
    }

    pub fn n_currents(&self) -> usize {
        self.header.currents_a.len()
    }

    pub fn n_omegas(&self) -> usize {
        self.header.omegas_ghz.len()
    }

    /// `|S21|²` versus frequency at current index `i`.
    pub fn s21_cut(&self, i: usize) -> &[f64] {
        let n = self.n_omegas();
        &self.s21_sq[i * n..(i + 1) * n]
    }

    /// CSV with header `current_a,omega_ghz,s21_sq,a1,a2`, current-major.
    pub fn to_csv(&self) -> String {
        let mut out = csv_line(["current_a", "omega_ghz", "s21_sq", "a1", "a2"]);
        let n = self.n_omegas();
        for (i, current) in self.header.currents_a.iter().enumerate() {
            for (j, omega) in self.header.omegas_ghz.iter().enumerate() {
                let k = i * n + j;
                out.push_str(&csv_line([
                    sig9(*current),
                    sig9(*omega),
                    sig9(self.s21_sq[k]),
                    sig9(self.a1[k]),
                    sig9(self.a2[k]),
                ]));
            }
        }
        out
    }
}

/// Transmission and absorptivities of the magnon-coupled chain on the full
/// current × frequency grid.
pub fn transmission_map(
    spec: &LatticeSpec,
    magnon: &MagnonSpec,
    ports: &PortConfig,
    currents_a: &[f64],
    omegas_ghz: &[f64],
) -> Result<TransmissionMap> {
    if currents_a.is_empty() || omegas_ghz.is_empty() {
        return Err(Error::InvalidInput("map grids must be nonempty".into()));
    }
    let h = build_chain_hamiltonian(spec)?;
    magnon.validate(h.dim())?;
    ports.validate(h.dim())?;
    let rows = currents_a
        .par_iter()
        .map(|&current| {
            let hc = build_coupled_hamiltonian(&h, magnon, magnon.frequency_ghz(current))?;
            let h_eff = effective_hamiltonian(&hc, ports)?;
            omegas_ghz
                .iter()
                .map(|&w| {
                    let s = s_from_loaded(&h_eff, ports, w)?;
                    Ok((s.s21.norm_sqr(), s.absorptivity(1)?, s.absorptivity(2)?))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::at_current(current, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s21_sq = Vec::with_capacity(currents_a.len() * omegas_ghz.len());
    let mut a1 = Vec::with_capacity(s21_sq.capacity());
    let mut a2 = Vec::with_capacity(s21_sq.capacity());
    for (t, x, y) in rows.into_iter().flatten() {
        s21_sq.push(t);
        a1.push(x);
        a2.push(y);
    }
    let header = MapHeader {
        lattice: Some(*spec),
        magnon: Some(*magnon),
        ports: Some(*ports),
        currents_a: currents_a.to_vec(),
        omegas_ghz: omegas_ghz.to_vec(),
    };
    TransmissionMap::from_parts(header, s21_sq, a1, a2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{eigendecompose, Spectrum};

    fn chain(spec: &LatticeSpec) -> ComplexMatrix {
        build_chain_hamiltonian(spec).unwrap()
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn port_validation() {
        assert!(PortConfig::end_fed(12, 5.0).validate(12).is_ok());
        assert!(PortConfig { port1_site: 3, ..PortConfig::end_fed(12, 5.0) }.validate(12).is_ok());
        assert!(PortConfig::end_fed(12, 5.0).validate(11).is_err());
        assert!(PortConfig { port2_site: 1, ..PortConfig::end_fed(12, 5.0) }.validate(12).is_err());
        assert!(PortConfig { kappa1_mhz: -1.0, ..PortConfig::end_fed(12, 5.0) }.validate(12).is_err());
        assert!(PortConfig::end_fed(1, 5.0).validate(1).is_ok());
        let v = serde_json::to_value(PortConfig::end_fed(12, 5.0)).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["kappa1_mhz", "kappa2_mhz", "port1_site", "port2_site"]);
    }

    #[test]
    fn loading_adds_port_losses() {
        let spec = LatticeSpec::lossy_device();
        let h = chain(&spec);
        let unloaded = effective_hamiltonian(&h, &PortConfig::end_fed(12, 0.0)).unwrap();
        assert_eq!(unloaded, h);
        let ports = PortConfig::end_fed(12, 8.0);
        let loaded = effective_hamiltonian(&h, &ports).unwrap();
        assert!((loaded[(0, 0)] - h[(0, 0)] + Complex64::new(0.0, 8.0)).norm() < 1e-12);
        assert!((loaded[(11, 11)] - h[(11, 11)] + Complex64::new(0.0, 8.0)).norm() < 1e-12);
        let a = eigendecompose(&h).unwrap();
        let b = eigendecompose(&loaded).unwrap();
        for (x, y) in a.modes.iter().zip(&b.modes) {
            assert!(y.loss_mhz() >= x.loss_mhz() - 1e-9);
        }
    }

    #[test]
    fn first_order_extrinsic_loss() {
        let spec = LatticeSpec::hermitian_device();
        let h = chain(&spec);
        let ports = PortConfig { port1_site: 1, port2_site: 12, kappa1_mhz: 0.01, kappa2_mhz: 0.02 };
        let bare = eigendecompose(&h).unwrap();
        let loaded = eigendecompose(&effective_hamiltonian(&h, &ports).unwrap()).unwrap();
        for m in 1..=12 {
            let phi = &bare.modes[m - 1].amplitudes;
            let predicted = 0.01 * phi[0].norm_sqr() + 0.02 * phi[11].norm_sqr();
            let extra = loaded.modes[m - 1].loss_mhz() - bare.modes[m - 1].loss_mhz();
            assert!((extra - predicted).abs() < 1e-3 * predicted.max(1e-6), "mode {m}");
        }
    }

    #[test]
    fn single_site_lorentzian() {
        let z = Complex64::new(0.0, -3.0);
        let h = ComplexMatrix::new(DMatrix::from_element(1, 1, z), 5.48).unwrap();
        let ports = PortConfig { port1_site: 1, port2_site: 1, kappa1_mhz: 2.0, kappa2_mhz: 4.0 };
        let peak = s_matrix(&h, &ports, 5.48).unwrap().s21.norm_sqr();
        // Closed form: |S21|² = 4κ1κ2 / (Δ² + (γ+κ1+κ2)²), half height at
        // Δ = ±(γ+κ1+κ2).
        assert!((peak - 4.0 * 8.0 / 81.0).abs() < 1e-12);
        let half = s_matrix(&h, &ports, 5.48 + 9e-3).unwrap().s21.norm_sqr();
        assert!((half / peak - 0.5).abs() < 1e-12);
    }

    #[test]
    fn off_resonant_limit() {
        let h = chain(&LatticeSpec::hermitian_device());
        let s = s_matrix(&h, &PortConfig::end_fed(12, 5.0), 50.0).unwrap();
        assert!(s.s21.norm() < 1e-6);
        assert!((s.s11.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reciprocity_and_passivity() {
        for spec in [LatticeSpec::hermitian_device(), LatticeSpec::lossy_device()] {
            let h = chain(&spec);
            let ports = PortConfig { port1_site: 1, port2_site: 12, kappa1_mhz: 3.0, kappa2_mhz: 9.0 };
            for s in s_spectrum(&h, &ports, &grid(4.8, 6.3, 301)).unwrap() {
                assert!((s.s21 - s.s12).norm() <= 1e-12);
                assert!(s.s11.norm_sqr() + s.s21.norm_sqr() <= 1.0 + 1e-12);
                assert!(s.s22.norm_sqr() + s.s12.norm_sqr() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn lossless_chain_is_unitary() {
        let spec = LatticeSpec { gamma_a_mhz: 0.0, gamma_b_mhz: 0.0, ..LatticeSpec::hermitian_device() };
        let h = chain(&spec);
        for w in [5.3, 5.62, 5.9] {
            let s = s_matrix(&h, &PortConfig::end_fed(12, 6.0), w).unwrap();
            assert!((s.s11.norm_sqr() + s.s21.norm_sqr() - 1.0).abs() < 1e-9);
            assert!(s.absorptivity(1).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn absorptivity_mirror_symmetry() {
        let omegas = grid(5.0, 6.2, 241);
        let herm = chain(&LatticeSpec::hermitian_device());
        let ports = PortConfig::end_fed(12, 5.0);
        for &w in &omegas {
            let a1 = absorptivity(&herm, &ports, w, 1).unwrap();
            let a2 = absorptivity(&herm, &ports, w, 2).unwrap();
            assert!((a1 - a2).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&a1));
        }
        let lossy = chain(&LatticeSpec::lossy_device());
        let worst = omegas
            .iter()
            .map(|&w| (absorptivity(&lossy, &ports, w, 1).unwrap() - absorptivity(&lossy, &ports, w, 2).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(worst > 1e-3);
        let closed = PortConfig::end_fed(12, 0.0);
        assert_eq!(absorptivity(&herm, &closed, 5.62, 1).unwrap(), 0.0);
        assert!(absorptivity(&herm, &ports, 5.62, 3).is_err());
    }

    #[test]
    fn transmission_peaks_sit_on_modes() {
        let spec = LatticeSpec::hermitian_device();
        let h = chain(&spec);
        let omegas = grid(5.0, 6.25, 2501);
        let t: Vec<f64> = s_spectrum(&h, &PortConfig::end_fed(12, 2.0), &omegas)
            .unwrap()
            .iter()
            .map(|s| s.s21.norm_sqr())
            .collect();
        let modes = Spectrum::of_lattice(&spec).unwrap();
        let centre = t[1250];
        let max = t.iter().cloned().fold(0.0, f64::max);
        // The edge pair merges into one mid-gap resonance at ω0.
        assert!(centre > 0.05 * max);
        for i in 1..t.len() - 1 {
            if t[i] > t[i - 1] && t[i] > t[i + 1] && t[i] > 0.05 * max {
                let f = omegas[i];
                let near = modes.modes.iter().map(|m| (m.re_ghz() - f).abs()).fold(f64::INFINITY, f64::min);
                assert!(near < 0.03, "peak at {f} GHz is {near} GHz from any mode");
            }
        }
    }

    #[test]
    fn map_shape_and_header_roundtrip() {
        let spec = LatticeSpec::hermitian_device();
        let magnon = MagnonSpec { site: 1, g0_mhz: 0.0, gamma_n_mhz: 1.0, c0_ghz: 3.62, c1_ghz_per_a: 2.0 };
        let ports = PortConfig::end_fed(12, 5.0);
        let currents = grid(0.9, 1.1, 5);
        let omegas = vec![5.1, 5.4 + 1.0 / 3.0, 5.62, 6.0];
        let map = transmission_map(&spec, &magnon, &ports, &currents, &omegas).unwrap();
        for i in 1..5 {
            assert_eq!(map.s21_cut(i), map.s21_cut(0));
        }
        let text = map.header.to_json().unwrap();
        let back = MapHeader::from_json(&text).unwrap();
        assert_eq!(back, map.header);
        for (x, y) in back.omegas_ghz.iter().zip(&omegas) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let csv = map.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "current_a,omega_ghz,s21_sq,a1,a2");
        assert_eq!(csv.lines().count(), 1 + 20);
        assert!(transmission_map(&spec, &magnon, &ports, &[], &omegas).is_err());
        assert!(TransmissionMap::from_parts(map.header.clone(), vec![0.0; 3], vec![0.0; 20], vec![0.0; 20]).is_err());
    }
}
