use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model parameter lies outside its admissible domain.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    /// Every mixture component assigns zero likelihood to one series.
    #[error("degenerate fit: no component gives positive likelihood to series {series}{}",
        iteration.map(|k| format!(" (EM iteration {k})")).unwrap_or_default())]
    DegenerateFit { series: usize, iteration: Option<usize> },

    #[error("panel contains no series")]
    EmptyPanel,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Model search where no candidate could be fitted.
    #[error("all {count} candidate models failed; first error: {first}")]
    AllCandidatesFailed { count: usize, first: String },
}
