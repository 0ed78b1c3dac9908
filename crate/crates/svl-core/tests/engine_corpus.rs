//! End-to-end verification of the shipped corpus.

use svl_core::engine::report::{ObKind, Verdict};
use svl_core::engine::verify_program;
use svl_core::frontend;

fn corpus(name: &str) -> String {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/");
    std::fs::read_to_string(format!("{root}{name}")).expect("corpus file")
}

fn verify(name: &str) -> Vec<svl_core::engine::report::MethodReport> {
    let rp = frontend::parse(&corpus(name)).expect("parse");
    assert!(frontend::check(&rp).is_empty(), "{name} wellformed");
    verify_program(&rp)
}

#[test]
fn trivial_method_passes() {
    let src = r#"
public class C {
  /*@ ghost Set<role> roles = {T}; @*/
  /*@ group resource inv(frac p) = emp; @*/
  /*@ frac share(role r, int c) { return 0; } @*/
  /*@ boolean trans(role r, int c, int n) { return false; } @*/
  private AtomicInteger /*@ <roles, inv, share, trans, 1> @*/ sync;
  /*@ requires emp; ensures emp; @*/
  void m() { }
}
"#;
    let rp = frontend::parse(src).expect("parse");
    let reports = verify_program(&rp);
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].verdict, Verdict::Pass, "{:#?}", reports[0]);
}

#[test]
fn semaphore_verifies() {
    let reports = verify("semaphore.svl");
    for r in &reports {
        assert_eq!(
            r.verdict,
            Verdict::Pass,
            "{}::{} failed:\n{:#?}",
            r.class,
            r.method,
            r.obligations
                .iter()
                .filter(|o| o.verdict == Verdict::Fail)
                .collect::<Vec<_>>()
        );
        assert!(r.warnings.is_empty(), "{}::{}: {:?}", r.class, r.method, r.warnings);
        // Nothing passed vacuously.
        assert!(
            r.obligations.iter().all(|o| !o.vacuous),
            "{}::{} has vacuous obligations",
            r.class,
            r.method
        );
    }
}

#[test]
fn semaphore_acquire_transfer_amounts() {
    let reports = verify("semaphore.svl");
    let acquire = reports.iter().find(|r| r.method == "acquire").unwrap();
    let cas = acquire
        .obligations
        .iter()
        .find(|o| o.what == "compareAndSet precondition")
        .expect("cas obligation");
    let t = cas.transfer.as_ref().expect("transfer annotation");
    assert_eq!(t.consumed, "0");
    assert_eq!(t.produced_success.as_deref(), Some("1/num"));
    assert_eq!(t.produced_failure.as_deref(), Some("0"));

    let release = reports.iter().find(|r| r.method == "release").unwrap();
    let cas = release
        .obligations
        .iter()
        .find(|o| o.what == "compareAndSet precondition")
        .expect("cas obligation");
    let t = cas.transfer.as_ref().expect("transfer annotation");
    assert_eq!(t.consumed, "1/num");
    assert_eq!(t.produced_success.as_deref(), Some("0"));
    assert_eq!(t.produced_failure.as_deref(), Some("1/num"));
}

#[test]
fn countdownlatch_verifies() {
    let reports = verify("countdownlatch.svl");
    for r in &reports {
        assert_eq!(
            r.verdict,
            Verdict::Pass,
            "{}::{} failed:\n{:#?}",
            r.class,
            r.method,
            r.obligations
                .iter()
                .filter(|o| o.verdict == Verdict::Fail)
                .collect::<Vec<_>>()
        );
    }
}

#[test]
fn spinlock_verifies() {
    let reports = verify("spinlock.svl");
    for r in &reports {
        assert_eq!(
            r.verdict,
            Verdict::Pass,
            "{}::{} failed:\n{:#?}",
            r.class,
            r.method,
            r.obligations
                .iter()
                .filter(|o| o.verdict == Verdict::Fail)
                .collect::<Vec<_>>()
        );
    }
}

#[test]
fn obligations_are_deterministic() {
    let a = verify("semaphore.svl");
    let b = verify("semaphore.svl");
    assert_eq!(a, b);
}

#[test]
fn missing_handle_fails_get() {
    // A method that calls get without unfolding the token first.
    let src = r#"
/*@ given group (frac -> resource) rinv; @*/
public class C {
  /*@ ghost Set<role> roles = {T}; @*/
  /*@ group resource token(int d, frac p) = sync.handle(T, d, p); @*/
  /*@ group resource inv(frac p) = rinv(p); @*/
  /*@ frac share(role r, int c) { return 0; } @*/
  /*@ boolean trans(role r, int c, int n) { return false; } @*/
  private AtomicInteger /*@ <roles, inv, share, trans, 1> @*/ sync;
  /*@ given int d, frac p;
      requires token(d, p);
      ensures emp; @*/
  void m() {
    int c = sync.get() /*@ with { r = T, d = d, p = p } @*/;
  }
}
"#;
    let rp = frontend::parse(src).expect("parse");
    let reports = verify_program(&rp);
    let m = &reports[0];
    assert_eq!(m.verdict, Verdict::Fail);
    let failed: Vec<_> = m
        .obligations
        .iter()
        .filter(|o| o.verdict == Verdict::Fail)
        .collect();
    assert!(
        failed
            .iter()
            .any(|o| o.kind == ObKind::Precondition && o.what == "get precondition"),
        "{failed:#?}"
    );
}
