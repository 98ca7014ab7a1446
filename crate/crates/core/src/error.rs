use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error(
        "eigensolver did not converge for a {dim}x{dim} matrix: {iterations} QR sweeps, \
         rows {block_lo}..={block_hi} still coupled (last subdiagonal {subdiagonal:e})"
    )]
    NoConvergence {
        dim: usize,
        iterations: usize,
        block_lo: usize,
        block_hi: usize,
        subdiagonal: f64,
    },

    #[error("eigen-residual {residual:e} of mode {mode} exceeds bound {bound:e}")]
    Residual { mode: usize, residual: f64, bound: f64 },

    #[error("spectrum carries no lattice parameters")]
    MissingLattice,

    #[error("Brillouin-zone grid too coarse: n_k = {0}, need at least 64")]
    GridTooCoarse(usize),

    #[error("winding number not quantized: raw value {raw} (critical point or grid too coarse)")]
    NonIntegerWinding { raw: f64 },

    #[error("outside the PT-unbroken bulk: delta_gamma/2 = {half_contrast} MHz >= |w - v| = {gap} MHz")]
    OutOfDomain { half_contrast: f64, gap: f64 },

    #[error("no mid-gap edge pair: {0}")]
    NoEdgePair(String),

    #[error("site {site} outside 1..={n_sites}")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("invalid port configuration: {0}")]
    InvalidPorts(String),

    #[error("singular resolvent at {omega_ghz} GHz")]
    SingularResolvent { omega_ghz: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("peak extraction: {0}")]
    Peaks(String),

    #[error("branch not resolvable at {current_a} A: {reason}")]
    BranchNotResolvable { current_a: f64, reason: String },

    #[error("at N = {n}: {source}")]
    AtChainLength {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("at current {current_a} A: {source}")]
    AtCurrent {
        current_a: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("at delta_gamma {delta_gamma_mhz} MHz: {source}")]
    AtDeltaGamma {
        delta_gamma_mhz: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_n(n: usize, source: Error) -> Self {
        Error::AtChainLength { n, source: Box::new(source) }
    }

    pub(crate) fn at_current(current_a: f64, source: Error) -> Self {
        Error::AtCurrent { current_a, source: Box::new(source) }
    }

    pub(crate) fn at_delta_gamma(delta_gamma_mhz: f64, source: Error) -> Self {
        Error::AtDeltaGamma { delta_gamma_mhz, source: Box::new(source) }
    }
}
