pub mod eigen;
pub mod error;
pub mod fitting;
pub mod format;
pub mod lattice;
pub mod magnon;
pub mod scattering;
pub mod spectral;
pub mod topology;

pub use error::{Error, Result};
pub use lattice::{bloch_hamiltonian, build_chain_hamiltonian, bulk_bands, ComplexMatrix, LatticeSpec};
pub use spectral::{classify_modes, eigendecompose, normalized_eigenvalues, particle_hole_residual, pdos, EigenMode, ModeClass, PtTag, Spectrum};
pub use topology::{beta_sweep, bulk_sptb_threshold, edge_sptb_threshold, ep_scan, threshold_vs_length, winding_generalized, winding_hermitian, EpKind, EpReport, ThresholdTable};
pub use magnon::{anticrossing_sweep, build_coupled_hamiltonian, edge_linewidth, effective_coupling, g_from_physical, two_mode_hybrid, AnticrossingSweep, MagnonSpec, PhysicalCouplingParams};
pub use scattering::{absorptivity, effective_hamiltonian, s_matrix, s_spectrum, transmission_map, MapHeader, PortConfig, SParams, TransmissionMap};
pub use fitting::{extract_linewidth, find_peaks, find_peaks_with, fit_level_repulsion, BranchSelector, Branches, FitInit, FitResult, Peak};
