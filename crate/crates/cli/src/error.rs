//! Command failures and their exit codes.

use ooalign::geometry::GeometryError;
use ooalign::harness::HarnessError;
use ooalign::optimizer::OptimError;

/// Exit codes: 0 success, 1 I/O or other runtime failure, 2 invalid
/// arguments or inputs, 3 guidance provider unavailable, 4 optimization failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    GuidanceUnavailable(String),
    Optimization(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::GuidanceUnavailable(_) => 3,
            CliError::Optimization(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::GuidanceUnavailable(m) | CliError::Optimization(m) | CliError::Runtime(m) => m,
        }
    }

    pub fn usage(m: impl std::fmt::Display) -> Self {
        CliError::Usage(m.to_string())
    }

    pub fn runtime(m: impl std::fmt::Display) -> Self {
        CliError::Runtime(m.to_string())
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        if e.is_guidance_unavailable() {
            CliError::GuidanceUnavailable(e.to_string())
        } else if matches!(e, OptimError::InvalidConfig(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Optimization(e.to_string())
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Optim(o) => o.into(),
            HarnessError::Geometry(GeometryError::Io(..)) => CliError::Runtime(e.to_string()),
            HarnessError::Manifest(_) | HarnessError::Geometry(_) | HarnessError::Invalid(_) | HarnessError::Pose(_) => CliError::Usage(e.to_string()),
            HarnessError::Io(..) | HarnessError::Metrics(_) => CliError::Runtime(e.to_string()),
        }
    }
}
