use thiserror::Error;

/// Errors raised anywhere in the stellar pipeline.
///
/// The variants map onto the exit-code classes of the command line driver:
/// configuration problems, numerical failures, and violated invariants.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("quadrature did not converge (achieved error {achieved:.3e}, requested {requested:.3e})")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("horizon formation at r = {r:.6e}: 2m/r = {compactness:.12}")]
    Horizon { r: f64, compactness: f64 },

    #[error("no stellar surface found before r_max = {r_max:.3e}")]
    NoSurface { r_max: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("coexistence detected at kappa = {kappa:.9e}: dM and d(M/R) both inside the noise floor")]
    Coexistence { kappa: f64 },

    #[error("at kappa = {kappa:.9e}: {source}")]
    AtKappa {
        kappa: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn at_kappa(self, kappa: f64) -> Self {
        match self {
            e @ Error::AtKappa { .. } => e,
            other => Error::AtKappa {
                kappa,
                source: Box::new(other),
            },
        }
    }

    /// Innermost error, looking through `AtKappa` annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtKappa { source, .. } => source.root(),
            e => e,
        }
    }

    /// Short machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Numerical(_) | Error::Quadrature { .. } => "numerical",
            Error::Horizon { .. } => "horizon",
            Error::NoSurface { .. } => "no_surface",
            Error::Invariant(_) => "invariant",
            Error::Coexistence { .. } => "coexistence",
            Error::Io(_) => "io",
            Error::AtKappa { .. } => unreachable!(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
