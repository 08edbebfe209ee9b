use std::fmt;

use whff::analysis::AnalysisError;
use whff::codec::CodecError;
use whff::container::ContainerError;
use whff::model::ModelError;
use whff::mpgemv::GemvError;
use whff::pipeline::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    User,
    Corruption,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::User => "user",
            Kind::Corruption => "corruption",
        }
    }
}

/// A failure reported on one stderr line; the kind selects the exit code.
#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Usage,
            msg: msg.into(),
        }
    }

    pub fn user(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::User,
            msg: msg.into(),
        }
    }

    pub fn corruption(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Corruption,
            msg: msg.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Corruption => 2,
            Kind::Usage | Kind::User => 1,
        }
    }

    /// Prefixes the message with the object it concerns.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.msg = format!("{what}: {}", self.msg);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flat: String = self
            .msg
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .replace('\\', "\\\\")
            .replace('"', "\\\"");
        write!(f, "error kind={} msg=\"{flat}\"", self.kind.name())
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::user(e.to_string())
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Self::corruption(format!("truncated matrix file: {io}"))
            }
            ContainerError::Io(io) => io.into(),
            other => Self::corruption(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Container(c) => c.into(),
            ModelError::Io(io) => io.into(),
            ModelError::Manifest(_) | ModelError::Invariant(_) => Self::corruption(e.to_string()),
            other => Self::user(other.to_string()),
        }
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        if e.is_corruption() {
            Self::corruption(e.to_string())
        } else {
            Self::user(e.to_string())
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Model(m) => m.into(),
            PipelineError::Container(c) => c.into(),
            other if other.is_corruption() => Self::corruption(other.to_string()),
            other => Self::user(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        Self::user(e.to_string())
    }
}

impl From<GemvError> for CliError {
    fn from(e: GemvError) -> Self {
        Self::user(e.to_string())
    }
}
