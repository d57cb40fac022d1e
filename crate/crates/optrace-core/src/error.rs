use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or function argument violates its stated domain.
    #[error("invalid parameter {name}={value}: {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    /// The requested quantity exists but degenerates at this parameter point
    /// (e.g. a density collapsing to a point mass at zero maturity).
    #[error("degenerate case: {0}")]
    Degenerate(String),

    /// The inputs break a structural precondition of the routine, such as a
    /// weight curve that is not symmetric about 1/2.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An asymptotic form was queried on the half of the support it does not
    /// cover; evaluate at the reflected point `1 - w` instead.
    #[error("asymptotic form covers w in (1/2, 1); reflect w={w} to {reflected}", reflected = 1.0 - *w)]
    UseSymmetry { w: f64 },

    /// Quadrature or root finding failed to reach its tolerance.
    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: &'static str, detail: String },
}

impl Error {
    pub fn invalid(name: &'static str, value: f64, requirement: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            requirement,
        }
    }

    pub fn numerical(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            detail: detail.into(),
        }
    }
}
