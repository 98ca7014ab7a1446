//! Real-space and Bloch Hamiltonians of a dimerized resonator chain.
//!
//! Sites are numbered `1..=2N`. Odd sites form sublattice A (loss
//! `gamma_a`), even sites sublattice B (loss `gamma_b`). The bond between
//! sites `s` and `s + 1` carries the intracell hopping `v` when `s` is odd
//! and the intercell hopping `w` when `s` is even. An optional imaginary
//! correction `-i·hopping_imag` is added to every bond.
//!
//! Matrices are stored as MHz offsets from a reference frequency (the chain's
//! bare resonance `omega0`), which keeps GHz carriers and MHz couplings from
//! cancelling each other numerically.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Parameters of a finite dimerized chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// Number of unit cells `N`; the chain has `2N` sites.
    pub n_cells: usize,
    /// Bare site resonance, GHz.
    pub omega0_ghz: f64,
    /// Loss rate of odd (A) sites, MHz.
    pub gamma_a_mhz: f64,
    /// Loss rate of even (B) sites, MHz.
    pub gamma_b_mhz: f64,
    /// Intracell hopping, MHz.
    pub v_mhz: f64,
    /// Intercell hopping, MHz.
    pub w_mhz: f64,
    /// Imaginary hopping correction shared by both bond types, MHz.
    #[serde(default)]
    pub hopping_imag_mhz: f64,
}

impl LatticeSpec {
    /// The uniform-loss chain in its topological phase (`v < w`).
    pub fn hermitian_device() -> Self {
        LatticeSpec {
            n_cells: 6,
            omega0_ghz: 5.62,
            gamma_a_mhz: 24.42,
            gamma_b_mhz: 24.42,
            v_mhz: 216.5,
            w_mhz: 341.0,
            hopping_imag_mhz: 0.0,
        }
    }

    /// The chain with alternating on-site losses.
    pub fn lossy_device() -> Self {
        LatticeSpec {
            n_cells: 6,
            omega0_ghz: 5.48,
            gamma_a_mhz: 36.0,
            gamma_b_mhz: 73.0,
            v_mhz: 208.5,
            w_mhz: 335.5,
            hopping_imag_mhz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_cells == 0 {
            problems.push("n_cells must be at least 1".to_owned());
        }
        let rates = [
            ("gamma_a_mhz", self.gamma_a_mhz),
            ("gamma_b_mhz", self.gamma_b_mhz),
            ("v_mhz", self.v_mhz),
            ("w_mhz", self.w_mhz),
        ];
        for (name, value) in rates {
            if !value.is_finite() {
                problems.push(format!("{name} must be finite"));
            } else if value < 0.0 {
                problems.push(format!("{name} must be non-negative, got {value}"));
            }
        }
        if !self.omega0_ghz.is_finite() {
            problems.push("omega0_ghz must be finite".to_owned());
        }
        if !self.hopping_imag_mhz.is_finite() {
            problems.push("hopping_imag_mhz must be finite".to_owned());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidLattice(problems.join("; ")))
        }
    }

    pub fn n_sites(&self) -> usize {
        2 * self.n_cells
    }

    /// `gamma_b - gamma_a`, MHz.
    pub fn delta_gamma(&self) -> f64 {
        self.gamma_b_mhz - self.gamma_a_mhz
    }

    /// Mean loss `(gamma_a + gamma_b) / 2`, MHz.
    pub fn gamma_bar(&self) -> f64 {
        0.5 * (self.gamma_a_mhz + self.gamma_b_mhz)
    }

    /// `v + w`, the bandwidth scale used for normalized quantities.
    pub fn hopping_sum(&self) -> f64 {
        self.v_mhz + self.w_mhz
    }

    /// Uniform losses and purely real hoppings.
    pub fn is_hermitian(&self) -> bool {
        self.gamma_a_mhz == self.gamma_b_mhz && self.hopping_imag_mhz == 0.0
    }

    /// Same chain with loss contrast `delta_gamma` and unchanged mean loss.
    pub fn with_delta_gamma(&self, delta_gamma: f64) -> Self {
        let bar = self.gamma_bar();
        LatticeSpec {
            gamma_a_mhz: bar - 0.5 * delta_gamma,
            gamma_b_mhz: bar + 0.5 * delta_gamma,
            ..*self
        }
    }

    /// Same chain with `c` MHz of extra loss on every site.
    pub fn with_uniform_loss_shift(&self, c: f64) -> Self {
        LatticeSpec {
            gamma_a_mhz: self.gamma_a_mhz + c,
            gamma_b_mhz: self.gamma_b_mhz + c,
            ..*self
        }
    }

    pub fn with_cells(&self, n_cells: usize) -> Self {
        LatticeSpec { n_cells, ..*self }
    }

    /// Sublattice loss of 1-based site `s`.
    pub fn site_loss(&self, s: usize) -> f64 {
        if s % 2 == 1 {
            self.gamma_a_mhz
        } else {
            self.gamma_b_mhz
        }
    }

    pub(crate) fn intracell(&self) -> Complex64 {
        Complex64::new(self.v_mhz, -self.hopping_imag_mhz)
    }

    pub(crate) fn intercell(&self) -> Complex64 {
        Complex64::new(self.w_mhz, -self.hopping_imag_mhz)
    }

    /// Off-diagonal Bloch element `h(k) = v' + w'·e^{-ik}` with the
    /// (possibly complex) bond amplitudes `v' = v - iΓ`, `w' = w - iΓ`.
    pub fn bloch_offdiag(&self, k: f64) -> Complex64 {
        self.intracell() + self.intercell() * Complex64::from_polar(1.0, -k)
    }
}

/// Square complex matrix whose entries are MHz offsets from `reference_ghz`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    data: DMatrix<Complex64>,
    reference_ghz: f64,
}

impl ComplexMatrix {
    pub fn new(data: DMatrix<Complex64>, reference_ghz: f64) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::InvalidMatrix(format!(
                "expected a square matrix, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".to_owned()));
        }
        Ok(ComplexMatrix { data, reference_ghz })
    }

    pub fn zeros(dim: usize, reference_ghz: f64) -> Self {
        ComplexMatrix { data: DMatrix::zeros(dim, dim), reference_ghz }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn reference_ghz(&self) -> f64 {
        self.reference_ghz
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    /// Entry `(i, j)` (0-based) as an absolute frequency in MHz.
    pub fn absolute_mhz(&self, i: usize, j: usize) -> Complex64 {
        let z = self.data[(i, j)];
        if i == j {
            z + 1e3 * self.reference_ghz
        } else {
            z
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest row sum of off-diagonal magnitudes; `v + w` for a chain with
    /// at least two cells. Used as the coupling scale for tolerances.
    pub fn coupling_scale(&self) -> f64 {
        let n = self.dim();
        let scale = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| self.data[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max);
        if scale > 0.0 {
            scale
        } else {
            self.data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0)
        }
    }

    pub fn is_complex_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| (self.data[(i, j)] - self.data[(j, i)]).norm() <= tol))
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.data[idx]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut Complex64 {
        &mut self.data[idx]
    }
}

/// Real-space chain Hamiltonian, `2N x 2N`, referenced to `omega0`.
pub fn build_chain_hamiltonian(spec: &LatticeSpec) -> Result<ComplexMatrix> {
    spec.validate()?;
    let n = spec.n_sites();
    let mut h = ComplexMatrix::zeros(n, spec.omega0_ghz);
    for s in 1..=n {
        h[(s - 1, s - 1)] = -I * spec.site_loss(s);
    }
    for s in 1..n {
        let t = if s % 2 == 1 { spec.intracell() } else { spec.intercell() };
        h[(s - 1, s)] = t;
        h[(s, s - 1)] = t;
    }
    Ok(h)
}

/// Two-band Bloch matrix at wavenumber `k`, referenced to `omega0`.
///
/// The upper element is `h(k)`; the lower is `h(-k)`, the transpose partner
/// of the reciprocal real-space bonds (equal to `h(k)*` when the hoppings
/// are real).
pub fn bloch_hamiltonian(spec: &LatticeSpec, k: f64) -> Result<ComplexMatrix> {
    spec.validate()?;
    let mut h = ComplexMatrix::zeros(2, spec.omega0_ghz);
    h[(0, 0)] = -I * spec.gamma_a_mhz;
    h[(1, 1)] = -I * spec.gamma_b_mhz;
    h[(0, 1)] = spec.bloch_offdiag(k);
    h[(1, 0)] = spec.bloch_offdiag(-k);
    Ok(h)
}

/// Both bulk bands at `k` as offsets from `omega0`:
/// `-i·γ̄ ± sqrt(h(k)h(-k) - (δγ/2)²)`, principal branch, `+` first.
pub fn bulk_bands(spec: &LatticeSpec, k: f64) -> (Complex64, Complex64) {
    let half = 0.5 * spec.delta_gamma();
    let root = (spec.bloch_offdiag(k) * spec.bloch_offdiag(-k) - half * half).sqrt();
    let center = -I * spec.gamma_bar();
    (center + root, center - root)
}
