//! Error taxonomy shared by every module; CLI exit codes map from these.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A field evaluation produced a non-finite number. `index` identifies the
    /// derivative lane when the value itself was finite.
    #[error("non-finite field evaluation{}", match .index { Some(i) => format!(" in derivative lane {i}"), None => String::new() })]
    Domain { index: Option<usize> },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("constraint matrix is rank-deficient: smallest singular value {sigma_min:.3e} below {tol:.3e}")]
    Rank { sigma_min: f64, tol: f64 },

    /// KKT system unsolvable: degeneracy beyond the weakly-Chaplygin class.
    #[error("singular KKT system: {0}")]
    SingularKkt(String),

    #[error("state norm {norm:.3e} exceeded blow-up threshold at t = {t}")]
    BlowUp { t: f64, norm: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not a Chaplygin system: {0}")]
    NotChaplygin(String),

    #[error("reduced Legendre transform is singular at the sampled point")]
    SingularReducedLegendre,

    #[error("almost-symplectic matrix is singular at the sampled point")]
    SingularAlmostSymplectic,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Message used whenever a KKT solve fails in a way consistent with a
    /// velocity-linear Lagrangian; names the diagnostic the caller should run.
    pub fn singular_kkt_linear_velocity() -> Self {
        Error::SingularKkt(
            "velocity Hessian is numerically zero; the Lagrangian appears linear in velocity, \
             so the dynamics is first-order and the generalized-energy equation carries \
             level-set information only. Run hj::linear_velocity_diagnostic to confirm."
                .into(),
        )
    }

    pub fn singular_kkt_degenerate() -> Self {
        Error::SingularKkt(
            "KKT matrix has a singular value below 1e-12 and the step equations are \
             inconsistent; the system is degenerate beyond the weakly-Chaplygin class. \
             Run hj::linear_velocity_diagnostic to check for a velocity-linear Lagrangian."
                .into(),
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
