use std::fmt;

use gridlift::Error;

/// Why a command failed; decides the process exit code.
#[derive(Debug)]
pub enum Failure {
    Library(Error),
    Usage(String),
    /// A self-check did not pass.
    Verification(String),
    /// A layout breaks the one-hot or adjacency constraints.
    Constraint(String),
}

pub type CmdResult<T = ()> = Result<T, Failure>;

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Constraint(_) => 5,
            Failure::Library(e) => match e {
                Error::NonFinite(_) | Error::NumericalAbort { .. } => 3,
                Error::Incompatible(_) => 4,
                Error::Uncovered { .. } => 5,
                Error::Shape(_)
                | Error::InvalidArgument(_)
                | Error::Parse { .. }
                | Error::Degenerate { .. }
                | Error::Io(_)
                | Error::Json(_) => 2,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Library(e) => write!(f, "{e}"),
            Failure::Usage(m) | Failure::Verification(m) | Failure::Constraint(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Library(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Library(Error::Io(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Library(Error::Json(e))
    }
}

/// Attaches the offending path to I/O and parse errors.
pub fn at_path<T>(path: &std::path::Path, r: gridlift::Result<T>) -> CmdResult<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Failure::Library(Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        ))),
        Error::Parse { line, msg } => Failure::Library(Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        }),
        other => Failure::Library(other),
    })
}

/// Writes to standard output; a closed pipe ends output quietly.
pub fn emit_stdout(text: &str) -> CmdResult {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
