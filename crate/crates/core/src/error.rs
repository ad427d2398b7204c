use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A pixel or grid index fell outside its container.
    Index { row: usize, col: usize, height: usize, width: usize },
    /// A coordinate or array entry was NaN or otherwise outside the function's domain.
    Domain(&'static str),
    /// Two inputs that must share a shape did not.
    Shape { expected: (usize, usize), found: (usize, usize) },
    /// A size was below the supported minimum (or too large to handle exactly).
    Size { what: &'static str, value: usize },
    /// Invalid configuration such as an empty target set.
    Config(&'static str),
    /// The iterative solver stopped before reaching its tolerance.
    Convergence { iterations: usize, residual: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Index { row, col, height, width } => {
                write!(f, "index ({row}, {col}) out of range for {height}x{width} grid")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Shape { expected, found } => write!(
                f,
                "shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::Size { what, value } => write!(f, "unsupported {what}: {value}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Convergence { iterations, residual } => write!(
                f,
                "solver did not converge after {iterations} iterations (residual {residual:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}
