//! Diagonalization of chain Hamiltonians and per-mode diagnostics.
//!
//! Eigenvalues are kept as MHz offsets from the matrix reference, with the
//! imaginary part equal to minus the mode loss. Modes are numbered
//! `m = 1..=dim` in order of ascending real part; real parts closer than
//! the degeneracy tolerance count as ties and are ordered by ascending loss.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen;
use crate::error::{Error, Result};
use crate::format::{csv_line, sig9};
use crate::lattice::{build_chain_hamiltonian, ComplexMatrix, LatticeSpec};

/// Relative eigen-residual bound, in units of `‖H‖_F`.
pub const RESIDUAL_BOUND: f64 = 1e-8;
/// Eigenvalues closer than this many units of the coupling scale are
/// treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-6;
/// Loss window (MHz) around `γ̄` inside which a mode counts as PT-unbroken.
pub const PT_TAG_TOL_MHZ: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeClass {
    Edge,
    Bulk,
}

impl ModeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeClass::Edge => "edge",
            ModeClass::Bulk => "bulk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PtTag {
    Unbroken,
    BrokenLowLoss,
    BrokenHighLoss,
}

impl PtTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PtTag::Unbroken => "unbroken",
            PtTag::BrokenLowLoss => "broken-low-loss",
            PtTag::BrokenHighLoss => "broken-high-loss",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenMode {
    /// 1-based mode index.
    pub index: usize,
    /// Complex eigenvalue as an MHz offset from `reference_ghz`.
    pub value: Complex64,
    pub reference_ghz: f64,
    /// Unit-norm right eigenvector; `amplitudes[s - 1]` is site `s`.
    pub amplitudes: Vec<Complex64>,
    pub class: Option<ModeClass>,
    pub pt_tag: Option<PtTag>,
    /// Another eigenvalue lies within the degeneracy tolerance.
    pub degenerate: bool,
}

impl EigenMode {
    pub fn re_ghz(&self) -> f64 {
        self.reference_ghz + 1e-3 * self.value.re
    }

    pub fn loss_mhz(&self) -> f64 {
        -self.value.im
    }

    /// Amplitude at 1-based site `s`.
    pub fn amplitude(&self, s: usize) -> Complex64 {
        self.amplitudes[s - 1]
    }

    pub fn is_edge(&self) -> bool {
        self.class == Some(ModeClass::Edge)
    }
}

/// Per-site intensities `|φ_{m,s}|²` of a normalized mode.
pub fn pdos(mode: &EigenMode) -> Vec<f64> {
    mode.amplitudes.iter().map(|z| z.norm_sqr()).collect()
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub modes: Vec<EigenMode>,
    pub reference_ghz: f64,
    /// Coupling scale of the source matrix (MHz); tolerances are relative
    /// to it.
    pub scale: f64,
    pub lattice: Option<LatticeSpec>,
}

impl Spectrum {
    /// Builds, diagonalizes and classifies the chain described by `spec`.
    pub fn of_lattice(spec: &LatticeSpec) -> Result<Self> {
        let h = build_chain_hamiltonian(spec)?;
        let spectrum = eigendecompose(&h)?.with_lattice(*spec);
        classify_modes(spectrum)
    }

    pub fn with_lattice(mut self, spec: LatticeSpec) -> Self {
        self.lattice = Some(spec);
        self
    }

    pub fn lattice(&self) -> Result<&LatticeSpec> {
        self.lattice.as_ref().ok_or(Error::MissingLattice)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Mode with 1-based index `m`.
    pub fn mode(&self, m: usize) -> Result<&EigenMode> {
        m.checked_sub(1)
            .and_then(|i| self.modes.get(i))
            .ok_or_else(|| Error::InvalidInput(format!("mode {m} outside 1..={}", self.modes.len())))
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.modes.iter().map(|m| m.value).collect()
    }

    pub fn edge_modes(&self) -> Vec<&EigenMode> {
        self.modes.iter().filter(|m| m.is_edge()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let modes: Vec<ModeRecord> = self
            .modes
            .iter()
            .map(|m| ModeRecord {
                m: m.index,
                re_ghz: m.re_ghz(),
                loss_mhz: m.loss_mhz(),
                class: m.class.map_or("unclassified", |c| c.as_str()).to_owned(),
                pt_tag: m.pt_tag.map_or("unclassified", |t| t.as_str()).to_owned(),
                pdos: pdos(m),
            })
            .collect();
        let doc = SpectrumRecord { lattice: self.lattice, modes };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    /// CSV with header `m,re_ghz,loss_mhz,class,pt_tag,s1..s{dim}`.
    pub fn to_csv(&self) -> String {
        let dim = self.modes.first().map_or(0, |m| m.amplitudes.len());
        let mut header = vec!["m".to_owned(), "re_ghz".into(), "loss_mhz".into(), "class".into(), "pt_tag".into()];
        header.extend((1..=dim).map(|s| format!("s{s}")));
        let mut out = csv_line(&header);
        for m in &self.modes {
            let mut row = vec![
                m.index.to_string(),
                sig9(m.re_ghz()),
                sig9(m.loss_mhz()),
                m.class.map_or("unclassified", |c| c.as_str()).to_owned(),
                m.pt_tag.map_or("unclassified", |t| t.as_str()).to_owned(),
            ];
            row.extend(pdos(m).into_iter().map(sig9));
            out.push_str(&csv_line(&row));
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SpectrumRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    lattice: Option<LatticeSpec>,
    modes: Vec<ModeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModeRecord {
    m: usize,
    re_ghz: f64,
    loss_mhz: f64,
    class: String,
    pt_tag: String,
    pdos: Vec<f64>,
}

/// Full eigendecomposition with residual verification.
pub fn eigendecompose(h: &ComplexMatrix) -> Result<Spectrum> {
    let dec = eigen::eig(h.matrix())?;
    let n = h.dim();
    let scale = h.coupling_scale();
    let tie = DEGENERACY_TOL * scale;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.values[a].re.total_cmp(&dec.values[b].re));
    // Runs of (near-)equal real parts are ordered by ascending loss.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && dec.values[order[end]].re - dec.values[order[end - 1]].re <= tie {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| dec.values[b].im.total_cmp(&dec.values[a].im));
        start = end;
    }

    let bound = RESIDUAL_BOUND * h.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut modes = Vec::with_capacity(n);
    for (rank, &k) in order.iter().enumerate() {
        let value = dec.values[k];
        let amplitudes: Vec<Complex64> = dec.vectors.column(k).iter().copied().collect();
        let residual = (0..n)
            .map(|i| {
                let hv: Complex64 = (0..n).map(|j| h[(i, j)] * amplitudes[j]).sum();
                (hv - value * amplitudes[i]).norm_sqr()
            })
            .sum::<f64>()
            .sqrt();
        if residual > bound {
            return Err(Error::Residual { mode: rank + 1, residual, bound });
        }
        let degenerate = dec
            .values
            .iter()
            .enumerate()
            .any(|(j, other)| j != k && (other - value).norm() <= tie);
        modes.push(EigenMode {
            index: rank + 1,
            value,
            reference_ghz: h.reference_ghz(),
            amplitudes,
            class: None,
            pt_tag: None,
            degenerate,
        });
    }
    Ok(Spectrum { modes, reference_ghz: h.reference_ghz(), scale, lattice: None })
}

/// Fills in edge/bulk class and PT tag of every mode.
///
/// Edge modes sit in the middle half of the gap, `|Re ω̃ - ω₀| < |w - v|/2`.
/// The PT tag compares the mode loss with `γ̄` (window `PT_TAG_TOL_MHZ`).
pub fn classify_modes(mut spectrum: Spectrum) -> Result<Spectrum> {
    let spec = *spectrum.lattice()?;
    let half_gap = 0.5 * (spec.w_mhz - spec.v_mhz).abs();
    let offset = 1e3 * (spectrum.reference_ghz - spec.omega0_ghz);
    let bar = spec.gamma_bar();
    for mode in &mut spectrum.modes {
        let detuning = mode.value.re + offset;
        mode.class = Some(if detuning.abs() < half_gap { ModeClass::Edge } else { ModeClass::Bulk });
        let loss = mode.loss_mhz();
        mode.pt_tag = Some(if (loss - bar).abs() <= PT_TAG_TOL_MHZ {
            PtTag::Unbroken
        } else if loss < bar {
            PtTag::BrokenLowLoss
        } else {
            PtTag::BrokenHighLoss
        });
    }
    let edges = spectrum.modes.iter().filter(|m| m.is_edge()).count();
    // Past δγ/2 = (√3/2)|w - v| the bulk band edge, ±sqrt(t² - (δγ/2)²) with
    // t ≥ |w - v|, may itself fall inside the window, so the count says
    // nothing there.
    let bulk_clear = 0.5 * spec.delta_gamma().abs() <= 0.75f64.sqrt() * (spec.w_mhz - spec.v_mhz).abs();
    if spec.v_mhz < spec.w_mhz && edges != 2 && bulk_clear {
        log::warn!("{edges} edge modes found for a chain with v < w (expected 2)");
    }
    Ok(spectrum)
}

/// Dimensionless eigenvalues `(β_real, β_imag)` for every mode:
/// `β_real = (Re ω̃ - ω₀)/(v + w)`, `β_imag = (|Im ω̃| - γ̄)/(v + w)`.
pub fn normalized_eigenvalues(spectrum: &Spectrum) -> Result<Vec<(f64, f64)>> {
    let spec = spectrum.lattice()?;
    let scale = spec.hopping_sum();
    let offset = 1e3 * (spectrum.reference_ghz - spec.omega0_ghz);
    let bar = spec.gamma_bar();
    Ok(spectrum
        .modes
        .iter()
        .map(|m| ((m.value.re + offset) / scale, (m.value.im.abs() - bar) / scale))
        .collect())
}

/// Hausdorff distance between the multisets `{ε_m}` and `{-ε_m*}` with
/// `ε_m = (ω̃_m - ω₀) + iγ̄`. Zero certifies particle-hole symmetry of the
/// spectrum.
pub fn particle_hole_residual(spectrum: &Spectrum) -> Result<f64> {
    let spec = spectrum.lattice()?;
    let offset = 1e3 * (spectrum.reference_ghz - spec.omega0_ghz);
    let eps: Vec<Complex64> = spectrum
        .modes
        .iter()
        .map(|m| m.value + offset + Complex64::new(0.0, spec.gamma_bar()))
        .collect();
    let mirrored: Vec<Complex64> = eps.iter().map(|e| -e.conj()).collect();
    Ok(hausdorff(&eps, &mirrored))
}

fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let directed = |x: &[Complex64], y: &[Complex64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}
