use thiserror::Error;

/// Broad failure classes, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum PlsError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("unparseable value '{value}' at row {row}, column '{column}'")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing response value at row {row}")]
    MissingResponse { row: usize },

    #[error("invalid {family} response '{value}' at row {row}")]
    InvalidResponse {
        family: &'static str,
        row: usize,
        value: f64,
    },

    #[error("column '{column}' is constant or has fewer than two present entries")]
    ConstantColumn { column: String },

    #[error("row '{row}' has no present predictor entries")]
    EmptyRow { row: String },

    #[error("degenerate component (achieved {achieved} components)")]
    DegenerateComponent { achieved: usize },

    #[error("degenerate PLSGLR component (achieved {achieved} components)")]
    DegenerateGlrComponent { achieved: usize },

    #[error("deflation collapse: P'W is singular")]
    DeflationCollapse,

    #[error("singular IRLS system")]
    SingularIrls,

    #[error("bootstrap instability: {attempts} attempts for {requested} resamples")]
    BootstrapInstability { attempts: usize, requested: usize },

    #[error("too many skipped folds: {skipped} of {total}")]
    TooManySkippedFolds { skipped: usize, total: usize },

    #[error("with {ncomp} components: {source}")]
    AtComponents {
        ncomp: usize,
        source: Box<PlsError>,
    },

    #[error("model did not converge: {0}")]
    NotConverged(String),

    #[error("infeasible missingness rate {0}")]
    InfeasibleMask(f64),

    #[error("figure payload does not match kind '{kind}': {reason}")]
    SchemaMismatch { kind: String, reason: String },
}

impl PlsError {
    pub fn class(&self) -> ErrorClass {
        use PlsError::*;
        match self {
            AtComponents { source, .. } => source.class(),
            InvalidArgument(_) | SchemaMismatch { .. } => ErrorClass::Config,
            Io(_) | Csv(_) | Json(_) | UnknownColumn(_) | Parse { .. } | MissingResponse { .. }
            | InvalidResponse { .. } | ConstantColumn { .. } | EmptyRow { .. }
            | InfeasibleMask(_) => ErrorClass::Data,
            DegenerateComponent { .. }
            | DegenerateGlrComponent { .. }
            | DeflationCollapse
            | SingularIrls
            | NotConverged(_)
            | BootstrapInstability { .. }
            | TooManySkippedFolds { .. } => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, PlsError>;
