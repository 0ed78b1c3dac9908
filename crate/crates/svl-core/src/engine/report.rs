//! Verification reports: per-obligation records, per-method and per-file
//! verdicts, and the machine-readable serialization consumed by the CLI.
//!
//! The JSON form contains no wall-clock timing, so repeated runs over
//! identical inputs serialize byte-identically; the CLI's text output may
//! add timing separately.

use crate::frontend::ast::Span;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObKind {
    Precondition,
    Postcondition,
    LoopInvariantEntry,
    LoopInvariantPreservation,
    Fold,
    Unfold,
    PureAssert,
}

impl ObKind {
    pub fn name(self) -> &'static str {
        match self {
            ObKind::Precondition => "precondition",
            ObKind::Postcondition => "postcondition",
            ObKind::LoopInvariantEntry => "loop-invariant-entry",
            ObKind::LoopInvariantPreservation => "loop-invariant-preservation",
            ObKind::Fold => "fold",
            ObKind::Unfold => "unfold",
            ObKind::PureAssert => "pure-assert",
        }
    }
}

/// Resource amounts exchanged by an atomic operation, as rendered fraction
/// terms of the protocol's invariant family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transfer {
    pub consumed: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub produced: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub produced_success: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub produced_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Obligation {
    pub line: u32,
    pub col: u32,
    pub kind: ObKind,
    pub what: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transfer: Option<Transfer>,
    /// True when the obligation held only because the state was
    /// inconsistent.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MethodReport {
    pub class: String,
    pub method: String,
    pub verdict: Verdict,
    pub obligations: Vec<Obligation>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MethodReport {
    pub fn failed(&self) -> usize {
        self.obligations
            .iter()
            .filter(|o| o.verdict == Verdict::Fail)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileStatus {
    Verified,
    Failed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileReport {
    pub path: String,
    pub status: FileStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<FileError>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    pub methods: Vec<MethodReport>,
    pub obligations: usize,
    pub failed: usize,
}

impl FileReport {
    pub fn from_methods(path: String, methods: Vec<MethodReport>) -> FileReport {
        let obligations = methods.iter().map(|m| m.obligations.len()).sum();
        let failed = methods.iter().map(MethodReport::failed).sum();
        FileReport {
            path,
            status: if failed == 0 {
                FileStatus::Verified
            } else {
                FileStatus::Failed
            },
            error: None,
            diagnostics: Vec::new(),
            methods,
            obligations,
            failed,
        }
    }

    pub fn error(path: String, span: Span, message: String) -> FileReport {
        FileReport {
            path,
            status: FileStatus::Error,
            error: Some(FileError {
                line: span.line,
                col: span.col,
                message,
            }),
            diagnostics: Vec::new(),
            methods: Vec::new(),
            obligations: 0,
            failed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub files: Vec<FileReport>,
    pub verdict: Verdict,
    pub obligations: usize,
    pub failed: usize,
}

impl Report {
    pub fn new(files: Vec<FileReport>) -> Report {
        let obligations = files.iter().map(|f| f.obligations).sum();
        let failed = files.iter().map(|f| f.failed).sum();
        let clean = failed == 0 && files.iter().all(|f| f.status == FileStatus::Verified);
        Report {
            files,
            verdict: if clean { Verdict::Pass } else { Verdict::Fail },
            obligations,
            failed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Collects obligations during a method run, merging repeated reports of the
/// same obligation site: a failure on any execution path makes the site
/// fail, and the first transfer annotation is kept.
#[derive(Debug, Default)]
pub struct ObSink {
    pub obligations: Vec<Obligation>,
    pub warnings: Vec<String>,
}

impl ObSink {
    pub fn record(
        &mut self,
        span: Span,
        kind: ObKind,
        what: &str,
        pass: bool,
        detail: Option<String>,
        vacuous: bool,
    ) {
        if let Some(existing) = self
            .obligations
            .iter_mut()
            .find(|o| o.line == span.line && o.col == span.col && o.kind == kind && o.what == what)
        {
            if !pass && existing.verdict == Verdict::Pass {
                existing.verdict = Verdict::Fail;
                existing.detail = detail;
                existing.vacuous = false;
            }
            return;
        }
        self.obligations.push(Obligation {
            line: span.line,
            col: span.col,
            kind,
            what: what.to_string(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            detail: if pass { None } else { detail },
            transfer: None,
            vacuous: pass && vacuous,
        });
    }

    pub fn attach_transfer(&mut self, span: Span, kind: ObKind, what: &str, transfer: Transfer) {
        if let Some(o) = self
            .obligations
            .iter_mut()
            .find(|o| o.line == span.line && o.col == span.col && o.kind == kind && o.what == what)
        {
            match &mut o.transfer {
                None => o.transfer = Some(transfer),
                Some(t) => merge_transfer(t, transfer),
            }
        }
    }

    pub fn warn(&mut self, message: String) {
        if !self.warnings.contains(&message) {
            self.warnings.push(message);
        }
    }
}

/// Distinct amounts from different execution branches are joined with ` | `.
fn merge_transfer(into: &mut Transfer, new: Transfer) {
    fn join(a: &mut String, b: String) {
        if !a.split(" | ").any(|x| x == b) {
            a.push_str(" | ");
            a.push_str(&b);
        }
    }
    join(&mut into.consumed, new.consumed);
    match (&mut into.produced, new.produced) {
        (Some(a), Some(b)) => join(a, b),
        (slot @ None, Some(b)) => *slot = Some(b),
        _ => {}
    }
    match (&mut into.produced_success, new.produced_success) {
        (Some(a), Some(b)) => join(a, b),
        (slot @ None, Some(b)) => *slot = Some(b),
        _ => {}
    }
    match (&mut into.produced_failure, new.produced_failure) {
        (Some(a), Some(b)) => join(a, b),
        (slot @ None, Some(b)) => *slot = Some(b),
        _ => {}
    }
}
