use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "wavelength {wavelength_um} um outside the valid range [{lo}, {hi}] um of model `{model}`"
    )]
    OutOfRange {
        model: String,
        wavelength_um: f64,
        lo: f64,
        hi: f64,
    },

    #[error("no root found: {0}")]
    NoRoot(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error(
        "infeasible target: source quality {alpha_opt} is below the required {alpha_required}"
    )]
    Infeasible { alpha_opt: f64, alpha_required: f64 },

    #[error("non-finite objective at L = {length_mm} mm, pump FWHM = {pump_fwhm_nm} nm")]
    NonFinite { length_mm: f64, pump_fwhm_nm: f64 },

    #[error("resource guard: {0}")]
    Resource(String),

    #[error("unknown crystal `{0}`")]
    UnknownCrystal(String),

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
