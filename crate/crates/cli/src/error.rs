use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, flag or missing input path.
    #[error("{0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] gsl_core::Error),
}

impl CliError {
    /// 2 for problems with what the user asked for, 1 for failures while
    /// carrying it out.
    pub fn exit_code(&self) -> i32 {
        use gsl_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::Ingestion { .. } | E::CorruptRecord { .. } | E::Json(_) => 2,
                E::Io(err) if err.kind() == std::io::ErrorKind::NotFound => 2,
                _ => 1,
            },
        }
    }
}

pub(crate) fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}
