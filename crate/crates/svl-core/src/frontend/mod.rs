//! Frontend: lexing, parsing, name resolution, wellformedness diagnostics,
//! and pretty-printing for `.svl` sources.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod resolve;
pub mod wellformed;

pub use ast::{Program, Span};
pub use parser::ParseError;
pub use resolve::{ResolveError, ResolvedProgram};
pub use wellformed::Diagnostic;

/// Errors turning source text into a resolved program.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrontError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}

impl FrontError {
    pub fn span(&self) -> Span {
        match self {
            FrontError::Parse(e) => e.span,
            FrontError::Resolve(e) => e.span,
        }
    }
}

/// Parses and resolves a source file. Deterministic: identical input yields
/// a structurally identical program.
pub fn parse(source: &str) -> Result<ResolvedProgram, FrontError> {
    let raw = parser::parse_tokens(source)?;
    Ok(resolve::resolve(raw)?)
}

/// Wellformedness diagnostics; empty means the program is type-correct.
pub fn check(rp: &ResolvedProgram) -> Vec<Diagnostic> {
    wellformed::wellformed(rp)
}
