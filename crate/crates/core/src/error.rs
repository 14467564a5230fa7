use thiserror::Error;

#[derive(Debug, Error)]
pub enum GfmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("duplicate channel label `{0}`")]
    DuplicateLabel(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    EigenNoConvergence { iterations: usize },

    #[error("resolvent is singular at omega = {omega} rad/s (pole on the imaginary axis)")]
    PoleOnAxis { omega: f64 },

    #[error("system is not Hurwitz (max real part {max_real_part:.6e})")]
    Unstable { max_real_part: f64 },

    #[error("ill-posed interconnection: algebraic loop {path} is singular")]
    IllPosed { path: String },

    #[error("invalid parameter: {0}")]
    Domain(String),

    #[error("DC voltage {vdc:.3e} p.u. is below the singularity threshold")]
    Singularity { vdc: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Jacobian is singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("invalid controller element: {0}")]
    Element(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("missing tuning value `{0}`")]
    MissingTuning(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GfmError>;
