use thiserror::Error;

use expander_core::fourier::FourierError;
use expander_core::grpenum::GroupError;
use expander_core::padic::PadicError;
use expander_core::qr::QrError;
use expander_core::spectral::SpectralError;
use expander_core::walk::WalkError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cap exceeded: {0}")]
    Cap(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Cap(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Compute(_) | CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Cap(_) => "cap",
            CliError::Invariant(_) => "invariant",
            CliError::Compute(_) => "compute",
            CliError::Io(_) => "io",
        }
    }
}

impl From<GroupError> for CliError {
    fn from(e: GroupError) -> Self {
        match e {
            GroupError::Overflow { .. } => CliError::Cap(e.to_string()),
            GroupError::Parse { .. } | GroupError::Dimension { .. } | GroupError::NotSpecialLinear { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<WalkError> for CliError {
    fn from(e: WalkError) -> Self {
        match e {
            WalkError::Group(g) => g.into(),
            WalkError::Parse { .. } => CliError::Config(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Group(g) => g.into(),
            SpectralError::Walk(w) => w.into(),
            SpectralError::CrossCheck { .. } => CliError::Invariant(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<FourierError> for CliError {
    fn from(e: FourierError) -> Self {
        match e {
            FourierError::StateCap { .. } => CliError::Cap(e.to_string()),
            FourierError::Precondition(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<PadicError> for CliError {
    fn from(e: PadicError) -> Self {
        match e {
            PadicError::Precision { .. } | PadicError::NotPrime(_) | PadicError::UnsupportedOrder(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<QrError> for CliError {
    fn from(e: QrError) -> Self {
        match e {
            QrError::OrderCap { .. } | QrError::TooManyClasses { .. } => CliError::Cap(e.to_string()),
            QrError::Group(g) => g.into(),
            QrError::NotPrime(_) | QrError::PrimeTooSmall { .. } => CliError::Config(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}
