//! Frontend behaviour on the shipped corpus and on malformed inputs.

use svl_core::frontend::{self, ast, pretty};

fn corpus(name: &str) -> String {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/");
    std::fs::read_to_string(format!("{root}{name}")).expect("corpus file")
}

#[test]
fn semaphore_parses_to_expected_shape() {
    let rp = frontend::parse(&corpus("semaphore.svl")).expect("parse");
    assert_eq!(rp.program.classes.len(), 1);
    let class = &rp.program.classes[0];
    assert_eq!(class.name, "Semaphore");
    assert_eq!(class.methods.len(), 3);
    let (ctor, others): (Vec<_>, Vec<_>) =
        class.methods.iter().partition(|m| m.is_constructor);
    assert_eq!(ctor.len(), 1);
    let names: Vec<&str> = others.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, ["acquire", "release"]);
    // The atomic field names all four protocol parameters (plus the bound).
    let Some(ast::FieldDecl::Atomic { proto, .. }) = class
        .fields
        .iter()
        .find(|f| matches!(f, ast::FieldDecl::Atomic { .. }))
    else {
        panic!("expected atomic field");
    };
    assert_eq!(
        [&proto.roles, &proto.inv, &proto.share, &proto.trans],
        [&"roles".to_string(), &"inv".to_string(), &"share".to_string(), &"trans".to_string()]
    );
    assert!(proto.max.is_some());
    assert!(rp.program.harness.is_some());
    // Every statement carries a usable source location.
    for m in &class.methods {
        for s in &m.body {
            assert!(s.span().line > 0);
        }
    }
}

#[test]
fn empty_file_parses_to_empty_program() {
    let rp = frontend::parse("").expect("parse");
    assert!(rp.program.classes.is_empty());
    assert!(rp.program.harness.is_none());
}

#[test]
fn while_without_invariant_is_missing_loop_invariant() {
    let src = r#"
public class C {
  /*@ ghost Set<role> roles = {T}; @*/
  /*@ group resource inv(frac p) = emp; @*/
  /*@ frac share(role r, int c) { return 0; } @*/
  /*@ boolean trans(role r, int c, int n) { return false; } @*/
  private AtomicInteger /*@ <roles, inv, share, trans, 1> @*/ sync;
  /*@ requires emp; ensures emp; @*/
  void m() {
    boolean b = true;
    while (b) { }
  }
}
"#;
    let err = frontend::parse(src).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("missing loop invariant"), "got: {msg}");
}

#[test]
fn corpus_round_trips_through_pretty_printer() {
    for name in ["semaphore.svl", "countdownlatch.svl", "spinlock.svl"] {
        let first = frontend::parse(&corpus(name)).expect("parse");
        let printed = pretty::pretty(&first.program);
        let second = frontend::parse(&printed)
            .unwrap_or_else(|e| panic!("{name}: reparse of pretty output failed: {e}\n{printed}"));
        let mut a = first.program.clone();
        let mut b = second.program.clone();
        ast::strip_spans(&mut a);
        ast::strip_spans(&mut b);
        assert_eq!(a, b, "{name}: round trip changed structure");
    }
}

#[test]
fn parse_is_deterministic() {
    let src = corpus("semaphore.svl");
    let mut a = frontend::parse(&src).unwrap().program;
    let mut b = frontend::parse(&src).unwrap().program;
    ast::strip_spans(&mut a);
    ast::strip_spans(&mut b);
    assert_eq!(a, b);
}

#[test]
fn corpus_is_wellformed() {
    for name in ["semaphore.svl", "countdownlatch.svl", "spinlock.svl"] {
        let rp = frontend::parse(&corpus(name)).expect("parse");
        let diags = frontend::check(&rp);
        assert!(diags.is_empty(), "{name}: {diags:?}");
    }
}

#[test]
fn wrong_predicate_arity_is_one_diagnostic() {
    let src = r#"
public class C {
  /*@ ghost Set<role> roles = {T}; @*/
  /*@ group resource inv(frac p) = emp; @*/
  /*@ frac share(role r, int c) { return 0; } @*/
  /*@ boolean trans(role r, int c, int n) { return false; } @*/
  private AtomicInteger /*@ <roles, inv, share, trans, 1> @*/ sync;
  /*@ requires inv(1, 2); ensures emp; @*/
  void m() { }
}
"#;
    let rp = frontend::parse(src).expect("parse");
    let diags = frontend::check(&rp);
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert!(diags[0].message.contains("takes 1 argument"));
}

#[test]
fn impure_share_function_is_flagged() {
    let src = r#"
public class C {
  /*@ ghost Set<role> roles = {T}; @*/
  int data;
  /*@ group resource inv(frac p) = emp; @*/
  /*@ frac share(role r, int c) { data = c; return 0; } @*/
  /*@ boolean trans(role r, int c, int n) { return false; } @*/
  private AtomicInteger /*@ <roles, inv, share, trans, 1> @*/ sync;
}
"#;
    let rp = frontend::parse(src).expect("parse");
    let diags = frontend::check(&rp);
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert!(diags[0].message.contains("must be pure"), "{diags:?}");
}

#[test]
fn unknown_identifier_is_resolve_error() {
    let src = r#"
public class C {
  /*@ ghost Set<role> roles = {T}; @*/
  /*@ group resource inv(frac p) = emp; @*/
  /*@ frac share(role r, int c) { return 0; } @*/
  /*@ boolean trans(role r, int c, int n) { return false; } @*/
  private AtomicInteger /*@ <roles, inv, share, trans, 1> @*/ sync;
  /*@ requires mystery > 0; ensures emp; @*/
  void m() { }
}
"#;
    let err = frontend::parse(src).unwrap_err();
    assert!(err.to_string().contains("unknown identifier"));
}
