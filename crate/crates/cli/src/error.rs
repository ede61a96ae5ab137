use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {}{message}", field.as_deref().map(|f| format!("{f}: ")).unwrap_or_default())]
    Config { path: String, field: Option<String>, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Solver(#[from] contactdd::Error),
    #[error("{path}: {message}")]
    Data { path: String, message: String },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Io { .. } => "io",
            Self::Solver(_) => "solver",
            Self::Data { .. } => "data",
        }
    }

    /// `{"error": {"kind", "message", "field"?}}` for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            field: Option<&'a str>,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        let field = match self {
            Self::Config { field, .. } => field.as_deref(),
            _ => None,
        };
        serde_json::to_string(&Wrapper { error: Body { kind: self.kind(), message: self.to_string(), field } })
            .unwrap_or_else(|_| "{\"error\":{\"kind\":\"internal\",\"message\":\"unserializable error\"}}".into())
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.display().to_string(), source: e }
}
