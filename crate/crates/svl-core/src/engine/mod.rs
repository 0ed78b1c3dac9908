//! Symbolic execution of method bodies and discharge of proof obligations.
//!
//! Execution starts from the produced precondition, walks each statement
//! (branching on guards and on the case splits the specification evaluator
//! introduces), applies the built-in atomic-cell contract at `get`, `set`,
//! `compareAndSet` and cell construction, and consumes the postcondition at
//! method end. A failed obligation does not abort the run: execution resumes
//! on the unconsumed state so one run reports every failure.

pub mod report;

use crate::frontend::ast::*;
use crate::frontend::pretty;
use crate::frontend::resolve::{ClassInfo, ResolvedProgram, HANDLE, SYNC_ROLE};
use crate::sym::eval::*;
use crate::sym::heap::{ArgV, Chunk, HeapState};
use crate::sym::rsrc::*;
use crate::sym::solver::{BoolF, LinCon, Rel};
use crate::sym::term::{FracTerm, LinTerm, Sort};
use report::{MethodReport, ObKind, ObSink, Transfer, Verdict};
use std::collections::{BTreeMap, BTreeSet};

const MAX_PATHS: usize = 512;

impl SpecSink for ObSink {
    fn side_check(&mut self, span: Span, what: &str, ok: bool, detail: String) {
        self.record(span, ObKind::PureAssert, what, ok, Some(detail), false);
    }
}

/// Verifies every method of every class, in declaration order. Each method
/// is verified independently from its own contract.
pub fn verify_program(rp: &ResolvedProgram) -> Vec<MethodReport> {
    let mut out = Vec::new();
    for class in &rp.program.classes {
        let info = &rp.classes[&class.name];
        for m in &class.methods {
            out.push(verify_method(rp, class, info, m));
        }
    }
    out
}

#[derive(Debug, Clone)]
struct PathSt {
    heap: HeapState,
    store: Env,
}

struct Run<'a> {
    ctx: SpecCtx<'a>,
    sink: ObSink,
}

pub fn verify_method(
    rp: &ResolvedProgram,
    class: &ClassDecl,
    info: &ClassInfo,
    m: &MethodDecl,
) -> MethodReport {
    let mut heap = HeapState::empty();
    let this = LinTerm::sym(heap.syms.fresh("this", Sort::Ref));
    let mut cells = BTreeMap::new();
    let mut consts = BTreeMap::new();
    for f in &class.fields {
        match f {
            FieldDecl::Atomic { name, .. } => {
                let s = heap.syms.fresh(format!("this.{name}"), Sort::Ref);
                cells.insert(name.clone(), LinTerm::sym(s));
            }
            FieldDecl::Data {
                name,
                ty,
                modifiers,
                ..
            } => {
                if *ty == Type::Int && modifiers.iter().any(|q| q == "final") {
                    let s = heap.syms.fresh(name.clone(), Sort::Int);
                    consts.insert(name.clone(), LinTerm::sym(s));
                }
            }
        }
    }
    for g in &class.ghost_fields {
        if g.ty == Type::Int {
            let s = heap.syms.fresh(g.name.clone(), Sort::Int);
            consts.insert(g.name.clone(), LinTerm::sym(s));
        }
    }
    let ctx = SpecCtx {
        rp,
        class,
        info,
        this,
        cells,
        consts,
    };
    let mut store = Env::new();
    for p in m.givens.iter().chain(&m.params) {
        let v = fresh_value(&mut heap, &p.name, &p.ty, &info.roles);
        store.insert(p.name.clone(), v);
    }

    let mut run = Run {
        ctx,
        sink: ObSink::default(),
    };

    // Inhale the precondition.
    let mut states = vec![PathSt { heap, store }];
    for clause in &m.requires {
        states = run.produce_clause(states, clause);
    }
    for st in &mut states {
        if let Some(v) = st.heap.wellformed_violation() {
            run.sink
                .warn(format!("contradictory precondition at {}: {v}", m.span));
        }
    }

    states = run.exec_block(states, &m.body);

    // Exhale the postcondition, threading existential witnesses across
    // clauses.
    for st in states {
        let mut branches = vec![(st.heap, st.store)];
        for clause in &m.ensures {
            branches = run.consume_clause(branches, clause, ObKind::Postcondition);
        }
    }

    let verdict = if run
        .sink
        .obligations
        .iter()
        .all(|o| o.verdict == Verdict::Pass)
    {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    MethodReport {
        class: class.name.clone(),
        method: m.name.clone(),
        verdict,
        obligations: run.sink.obligations,
        warnings: run.sink.warnings,
    }
}

fn fresh_value(h: &mut HeapState, name: &str, ty: &Type, roles: &[String]) -> Value {
    match ty {
        Type::Bool => {
            let s = h.syms.fresh(name.to_string(), Sort::Bool);
            let t = LinTerm::sym(s);
            let lo = LinCon::new(t.clone(), Rel::Ge, &h.syms);
            let hi = LinCon::new(t.neg().add_const(1), Rel::Ge, &h.syms);
            h.assume(lo);
            h.assume(hi);
            Value::Bool(t)
        }
        Type::Frac => {
            let s = h.syms.fresh(name.to_string(), Sort::Frac);
            let t = FracTerm::Sym(s);
            let lo = h.pure.frac_con(&h.syms, &t, &FracTerm::zero(), Rel::Ge);
            let hi = h.pure.frac_con(&h.syms, &FracTerm::one(), &t, Rel::Ge);
            if let Some(c) = lo {
                h.assume(c);
            }
            if let Some(c) = hi {
                h.assume(c);
            }
            Value::Frac(t)
        }
        Type::Role => Value::Role(roles.first().cloned().unwrap_or_else(|| SYNC_ROLE.into())),
        _ => Value::Int(LinTerm::sym(h.syms.fresh(name.to_string(), Sort::Int))),
    }
}

fn fresh_like(h: &mut HeapState, name: &str, v: &Value, roles: &[String]) -> Value {
    let ty = match v {
        Value::Int(_) => Type::Int,
        Value::Bool(_) => Type::Bool,
        Value::Frac(_) => Type::Frac,
        Value::Role(_) => Type::Role,
    };
    fresh_value(h, name, &ty, roles)
}

/// Variables assigned anywhere in a statement list (loop havoc set).
fn assigned_vars(stmts: &[Stmt], out: &mut BTreeSet<String>) {
    for s in stmts {
        match s {
            Stmt::Assign { target, .. } | Stmt::GhostSet { target, .. } => {
                out.insert(target.clone());
            }
            Stmt::VarDecl { name, init, .. } => {
                if matches!(init, Some(Expr::Atomic { .. })) {
                    out.insert(name.clone());
                }
            }
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => {
                assigned_vars(then_branch, out);
                assigned_vars(else_branch, out);
            }
            Stmt::While { body, .. } => assigned_vars(body, out),
            _ => {}
        }
    }
}

impl Run<'_> {
    // ----- clause helpers ----------------------------------------------------

    fn produce_clause(&mut self, states: Vec<PathSt>, clause: &ResourceExpr) -> Vec<PathSt> {
        let mut out = Vec::new();
        for st in states {
            match produce(&self.ctx, &mut self.sink, st.heap.clone(), clause, &st.store) {
                Ok(heaps) => out.extend(heaps.into_iter().map(|heap| PathSt {
                    heap,
                    store: st.store.clone(),
                })),
                Err(e) => {
                    self.sink.record(
                        e.span,
                        ObKind::PureAssert,
                        "specification evaluation",
                        false,
                        Some(e.msg),
                        false,
                    );
                    out.push(st);
                }
            }
        }
        out
    }

    fn consume_clause(
        &mut self,
        branches: Vec<(HeapState, Env)>,
        clause: &ResourceExpr,
        kind: ObKind,
    ) -> Vec<(HeapState, Env)> {
        let what = pretty::resource(clause);
        let span = clause.span();
        let mut out = Vec::new();
        for (heap, env) in branches {
            let vacuous = heap.inconsistent;
            match consume(
                &self.ctx,
                &mut self.sink,
                heap.clone(),
                clause,
                env.clone(),
            ) {
                Ok(rest) => {
                    self.sink.record(span, kind, &what, true, None, vacuous);
                    out.extend(rest);
                }
                Err(cf) => {
                    self.sink.record(
                        span,
                        kind,
                        &what,
                        false,
                        Some(format!("{} at {}: {}", cf.what, cf.span, cf.detail)),
                        false,
                    );
                    // Error recovery: resume as if the resource had been
                    // obtained and given back.
                    out.push((heap, env));
                }
            }
        }
        out
    }

    // ----- statement execution -------------------------------------------------

    fn exec_block(&mut self, states: Vec<PathSt>, stmts: &[Stmt]) -> Vec<PathSt> {
        let mut cur = states;
        for s in stmts {
            let mut next = Vec::new();
            for st in cur {
                next.extend(self.exec_stmt(st, s));
            }
            if next.len() > MAX_PATHS {
                self.sink.warn(format!(
                    "path explosion at {}: exploring the first {MAX_PATHS} paths",
                    s.span()
                ));
                next.truncate(MAX_PATHS);
            }
            cur = next;
        }
        cur
    }

    fn exec_stmt(&mut self, st: PathSt, stmt: &Stmt) -> Vec<PathSt> {
        match stmt {
            Stmt::VarDecl {
                ty, name, init, span,
            } => match init {
                Some(e @ Expr::Atomic { .. }) => self.exec_atomic(st, e, Some(name), *span),
                Some(e) => self.assign_eval(st, name, ty.clone(), e),
                None => {
                    let mut st = st;
                    let v = fresh_value(&mut st.heap, name, ty, &self.ctx.info.roles);
                    st.store.insert(name.clone(), v);
                    vec![st]
                }
            },
            Stmt::Assign {
                target,
                value,
                span,
            } => match value {
                e @ Expr::Atomic { .. } => self.exec_atomic(st, e, Some(target), *span),
                e => {
                    let ty = match st.store.get(target) {
                        Some(Value::Bool(_)) => Type::Bool,
                        Some(Value::Frac(_)) => Type::Frac,
                        _ => Type::Int,
                    };
                    self.assign_eval(st, target, ty, e)
                }
            },
            Stmt::FieldAssign { field, value, span } => {
                if self.ctx.cells.contains_key(field) {
                    let Expr::NewAtomic { proto, init, .. } = value else {
                        unreachable!("resolver enforces new for cells");
                    };
                    let proto = proto.clone();
                    return self.apply_constructor(st, field, &proto, init, *span);
                }
                if let Some(sym) = self.ctx.consts.get(field).cloned() {
                    // Final field: binding its constant symbol.
                    return self.with_int(st, value, move |_, mut s, v| {
                        let eq = LinCon::new(sym.sub(&v), Rel::Eq, &s.heap.syms);
                        s.heap.assume(eq);
                        vec![s]
                    });
                }
                // Mutable data field: requires the full permission.
                let recv = self.ctx.this.clone();
                let field = field.clone();
                let span = *span;
                self.with_int(st, value, move |run, mut s, v| {
                    let vacuous = s.heap.inconsistent;
                    let res = if vacuous {
                        Ok(LinTerm::konst(0))
                    } else {
                        s.heap.take_points_to(&recv, &field, &FracTerm::one())
                    };
                    match res {
                        Ok(_) => run.sink.record(
                            span,
                            ObKind::Precondition,
                            "write permission",
                            true,
                            None,
                            vacuous,
                        ),
                        Err(tf) => run.sink.record(
                            span,
                            ObKind::Precondition,
                            "write permission",
                            false,
                            Some(tf.detail()),
                            false,
                        ),
                    }
                    s.heap.add_chunk(Chunk::PointsTo {
                        recv: recv.clone(),
                        field: field.clone(),
                        perm: FracTerm::one(),
                        value: v,
                    });
                    vec![s]
                })
            }
            Stmt::ExprStmt { expr, span } => self.exec_atomic(st, expr, None, *span),
            Stmt::GhostDecl { ty, name, init, .. } => {
                self.assign_eval(st, name, ty.clone(), init)
            }
            Stmt::GhostSet {
                target,
                value,
                span,
            } => {
                if let Some(v) = st.store.get(target) {
                    let ty = match v {
                        Value::Bool(_) => Type::Bool,
                        Value::Frac(_) => Type::Frac,
                        Value::Role(_) => Type::Role,
                        Value::Int(_) => Type::Int,
                    };
                    return self.assign_eval(st, target, ty, value);
                }
                if let Some(sym) = self.ctx.consts.get(target).cloned() {
                    return self.with_int(st, value, move |_, mut s, v| {
                        let eq = LinCon::new(sym.sub(&v), Rel::Eq, &s.heap.syms);
                        s.heap.assume(eq);
                        vec![s]
                    });
                }
                self.sink.record(
                    *span,
                    ObKind::PureAssert,
                    "ghost assignment",
                    false,
                    Some(format!("`{target}` is not assignable here")),
                    false,
                );
                vec![st]
            }
            Stmt::If {
                cond,
                then_branch,
                else_branch,
                ..
            } => {
                let mut out = Vec::new();
                for (heap, f) in self.eval_guard(&st, cond) {
                    for (h2, taken) in branch(heap, &f) {
                        let side = PathSt {
                            heap: h2,
                            store: st.store.clone(),
                        };
                        let stmts = if taken { then_branch } else { else_branch };
                        out.extend(self.exec_block(vec![side], stmts));
                    }
                }
                out
            }
            Stmt::While {
                cond,
                invariants,
                body,
                span,
            } => self.exec_while(st, cond, invariants, body, *span),
            Stmt::Fold { pred, args, span } => {
                let what = format!("fold {pred}");
                let vacuous = st.heap.inconsistent;
                match fold_pred(
                    &self.ctx,
                    &mut self.sink,
                    st.heap.clone(),
                    pred,
                    args,
                    *span,
                    &st.store,
                ) {
                    Ok(heaps) => {
                        self.sink
                            .record(*span, ObKind::Fold, &what, true, None, vacuous);
                        heaps
                            .into_iter()
                            .map(|heap| PathSt {
                                heap,
                                store: st.store.clone(),
                            })
                            .collect()
                    }
                    Err(cf) => {
                        self.sink.record(
                            *span,
                            ObKind::Fold,
                            &what,
                            false,
                            Some(format!("{}: {}", cf.what, cf.detail)),
                            false,
                        );
                        vec![st]
                    }
                }
            }
            Stmt::Unfold { pred, args, span } => {
                let what = format!("unfold {pred}");
                let vacuous = st.heap.inconsistent;
                match unfold_pred(
                    &self.ctx,
                    &mut self.sink,
                    st.heap.clone(),
                    pred,
                    args,
                    *span,
                    &st.store,
                ) {
                    Ok(heaps) => {
                        self.sink
                            .record(*span, ObKind::Unfold, &what, true, None, vacuous);
                        heaps
                            .into_iter()
                            .map(|heap| PathSt {
                                heap,
                                store: st.store.clone(),
                            })
                            .collect()
                    }
                    Err(cf) => {
                        self.sink.record(
                            *span,
                            ObKind::Unfold,
                            &what,
                            false,
                            Some(format!("{}: {}", cf.what, cf.detail)),
                            false,
                        );
                        vec![st]
                    }
                }
            }
            Stmt::Assert { cond, span } => {
                let what = format!("assert {}", pretty::expr(cond));
                let vacuous = st.heap.inconsistent;
                match check_pure(&self.ctx, &mut self.sink, st.heap.clone(), cond, &st.store) {
                    Ok((heaps, ok)) => {
                        self.sink.record(
                            *span,
                            ObKind::PureAssert,
                            &what,
                            ok || vacuous,
                            (!ok).then(|| "not provable from the pure constraints".into()),
                            vacuous,
                        );
                        heaps
                            .into_iter()
                            .map(|heap| PathSt {
                                heap,
                                store: st.store.clone(),
                            })
                            .collect()
                    }
                    Err(e) => {
                        self.sink.record(
                            *span,
                            ObKind::PureAssert,
                            &what,
                            false,
                            Some(e.msg),
                            false,
                        );
                        vec![st]
                    }
                }
            }
        }
    }

    /// Evaluates a guard, reporting evaluation errors as failed assertions.
    fn eval_guard(&mut self, st: &PathSt, cond: &Expr) -> Vec<(HeapState, BoolF)> {
        match eval_bool(
            &self.ctx,
            &mut self.sink,
            vec![st.heap.clone()],
            &st.store,
            cond,
        ) {
            Ok(v) => v,
            Err(e) => {
                self.sink.record(
                    e.span,
                    ObKind::PureAssert,
                    "guard evaluation",
                    false,
                    Some(e.msg),
                    false,
                );
                vec![(st.heap.clone(), BoolF::Lit(true))]
            }
        }
    }

    fn assign_eval(&mut self, st: PathSt, name: &str, ty: Type, e: &Expr) -> Vec<PathSt> {
        let store = st.store.clone();
        let heap = st.heap.clone();
        let result: Result<Vec<(HeapState, Value)>, EvalErr> = match ty {
            Type::Bool => eval_bool(&self.ctx, &mut self.sink, vec![heap], &store, e).map(|v| {
                v.into_iter()
                    .flat_map(|(h, f)| {
                        branch(h, &f)
                            .into_iter()
                            .map(|(h2, b)| {
                                (h2, Value::Bool(LinTerm::konst(if b { 1 } else { 0 })))
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect()
            }),
            Type::Frac => eval_frac(&self.ctx, &mut self.sink, vec![heap], &store, e)
                .map(|v| v.into_iter().map(|(h, t)| (h, Value::Frac(t))).collect()),
            _ => eval_int(&self.ctx, &mut self.sink, vec![heap], &store, e)
                .map(|v| v.into_iter().map(|(h, t)| (h, Value::Int(t))).collect()),
        };
        match result {
            Ok(vals) => vals
                .into_iter()
                .map(|(heap, v)| {
                    let mut store = st.store.clone();
                    store.insert(name.to_string(), v);
                    PathSt { heap, store }
                })
                .collect(),
            Err(err) => {
                self.sink.record(
                    err.span,
                    ObKind::PureAssert,
                    "expression evaluation",
                    false,
                    Some(err.msg),
                    false,
                );
                let mut st = st;
                let v = fresh_value(&mut st.heap, name, &ty, &self.ctx.info.roles);
                st.store.insert(name.to_string(), v);
                vec![st]
            }
        }
    }

    /// Evaluates an integer expression and hands each result to `k`.
    fn with_int(
        &mut self,
        st: PathSt,
        e: &Expr,
        k: impl Fn(&mut Self, PathSt, LinTerm) -> Vec<PathSt>,
    ) -> Vec<PathSt> {
        match eval_int(
            &self.ctx,
            &mut self.sink,
            vec![st.heap.clone()],
            &st.store,
            e,
        ) {
            Ok(vals) => {
                let mut out = Vec::new();
                for (heap, v) in vals {
                    let s = PathSt {
                        heap,
                        store: st.store.clone(),
                    };
                    out.extend(k(self, s, v));
                }
                out
            }
            Err(err) => {
                self.sink.record(
                    err.span,
                    ObKind::PureAssert,
                    "expression evaluation",
                    false,
                    Some(err.msg),
                    false,
                );
                vec![st]
            }
        }
    }

    fn exec_while(
        &mut self,
        st: PathSt,
        cond: &Expr,
        invariants: &[ResourceExpr],
        body: &[Stmt],
        _span: Span,
    ) -> Vec<PathSt> {
        // Invariant must hold on entry.
        let mut frames = vec![(st.heap, st.store.clone())];
        for inv in invariants {
            frames = self.consume_clause(frames, inv, ObKind::LoopInvariantEntry);
        }

        let mut assigned = BTreeSet::new();
        assigned_vars(body, &mut assigned);

        let mut after = Vec::new();
        for (heap, _env) in frames {
            // Havoc loop-modified variables, then assume the invariant.
            let mut h = heap;
            let mut store = st.store.clone();
            for name in &assigned {
                if let Some(v) = store.get(name).cloned() {
                    let fresh = fresh_like(&mut h, name, &v, &self.ctx.info.roles);
                    store.insert(name.clone(), fresh);
                }
            }
            let mut produced = vec![PathSt { heap: h, store }];
            for inv in invariants {
                produced = self.produce_clause(produced, inv);
            }
            for ps in &mut produced {
                if let Some(v) = ps.heap.wellformed_violation() {
                    self.sink
                        .warn(format!("contradictory loop invariant: {v}"));
                }
            }
            for ps in produced {
                for (h2, f) in self.eval_guard(&ps, cond) {
                    for (h3, taken) in branch(h2, &f) {
                        let side = PathSt {
                            heap: h3,
                            store: ps.store.clone(),
                        };
                        if taken {
                            // Body must re-establish the invariant at the
                            // back edge; the path ends there.
                            let ends = self.exec_block(vec![side], body);
                            for end in ends {
                                let mut back = vec![(end.heap, end.store)];
                                for inv in invariants {
                                    back = self.consume_clause(
                                        back,
                                        inv,
                                        ObKind::LoopInvariantPreservation,
                                    );
                                }
                            }
                        } else {
                            after.push(side);
                        }
                    }
                }
            }
        }
        after
    }

    // ----- atomic operations -------------------------------------------------------

    fn exec_atomic(
        &mut self,
        st: PathSt,
        e: &Expr,
        target: Option<&str>,
        span: Span,
    ) -> Vec<PathSt> {
        let Expr::Atomic {
            cell,
            op,
            args,
            with_args,
            ..
        } = e
        else {
            self.sink.record(
                span,
                ObKind::PureAssert,
                "statement",
                false,
                Some("only atomic calls may appear here".into()),
                false,
            );
            return vec![st];
        };
        let proto = self.proto_of(cell);
        let with: BTreeMap<&str, &Expr> =
            with_args.iter().map(|(k, v)| (k.as_str(), v)).collect();

        let role = match eval_role(&self.ctx, &st.store, with["r"]) {
            Ok(r) => r,
            Err(err) => {
                self.sink.record(
                    err.span,
                    ObKind::PureAssert,
                    "ghost argument",
                    false,
                    Some(err.msg),
                    false,
                );
                return vec![st];
            }
        };

        match op {
            AtomicOp::Get => self.apply_get(st, cell, &proto, &role, &with, target, span),
            AtomicOp::Set => self.apply_set(st, cell, &proto, &role, args, &with, span),
            AtomicOp::Cas => self.apply_cas(st, cell, &proto, &role, args, &with, target, span),
        }
    }

    fn proto_of(&self, cell: &str) -> ProtoArgs {
        let idx = self.ctx.info.atomic_fields[cell];
        match &self.ctx.class.fields[idx] {
            FieldDecl::Atomic { proto, .. } => proto.clone(),
            FieldDecl::Data { .. } => unreachable!("atomic field index"),
        }
    }

    /// Evaluates `share(role, v)` by inlining the protocol's share function.
    fn share_eval(
        &mut self,
        heap: HeapState,
        proto: &ProtoArgs,
        role: &str,
        v: &LinTerm,
    ) -> Result<Vec<(HeapState, FracTerm)>, EvalErr> {
        let f = self.ctx.function(&proto.share).expect("resolved share");
        let mut fenv = Env::new();
        fenv.insert(f.params[0].name.clone(), Value::Role(role.to_string()));
        fenv.insert(f.params[1].name.clone(), Value::Int(v.clone()));
        eval_fn_body(&self.ctx, &mut self.sink, heap, f, fenv, |c, k, s, e2, ex| {
            eval_frac(c, k, vec![s], e2, ex)
        })
    }

    /// Provability of `trans(role, from, to)` in every branch of the state.
    fn trans_check(
        &mut self,
        heap: HeapState,
        proto: &ProtoArgs,
        role: &str,
        from: &LinTerm,
        to: &LinTerm,
    ) -> Result<(Vec<HeapState>, bool), EvalErr> {
        let f = self.ctx.function(&proto.trans).expect("resolved trans");
        let mut fenv = Env::new();
        fenv.insert(f.params[0].name.clone(), Value::Role(role.to_string()));
        fenv.insert(f.params[1].name.clone(), Value::Int(from.clone()));
        fenv.insert(f.params[2].name.clone(), Value::Int(to.clone()));
        let branches =
            eval_fn_body(&self.ctx, &mut self.sink, heap, f, fenv, |c, k, s, e2, ex| {
                eval_bool(c, k, vec![s], e2, ex)
            })?;
        let mut ok = true;
        let mut states = Vec::new();
        for (s, g) in branches {
            if !s.inconsistent && !s.pure.entails(&s.syms, &g) {
                ok = false;
            }
            states.push(s);
        }
        Ok((states, ok))
    }

    /// State-bound obligation `0 <= v <= max` when the protocol declares a
    /// maximum state; the bound is assumed afterwards.
    fn bound_check(
        &mut self,
        mut heap: HeapState,
        proto: &ProtoArgs,
        v: &LinTerm,
        what: &str,
        span: Span,
    ) -> HeapState {
        let Some(maxe) = &proto.max else {
            return heap;
        };
        let empty = Env::new();
        let max = match eval_int_quiet(&self.ctx, heap.clone(), &empty, maxe) {
            Ok(mut vals) if vals.len() == 1 => vals.pop().unwrap().1,
            _ => {
                self.sink.record(
                    span,
                    ObKind::Precondition,
                    what,
                    false,
                    Some("maximum-state expression must be a constant".into()),
                    false,
                );
                return heap;
            }
        };
        let lo = LinCon::new(v.clone(), Rel::Ge, &heap.syms);
        let hi = LinCon::new(max.sub(v), Rel::Ge, &heap.syms);
        let ok = heap.inconsistent
            || (heap.pure.entails_con(&heap.syms, &lo) && heap.pure.entails_con(&heap.syms, &hi));
        let vacuous = heap.inconsistent;
        self.sink.record(
            span,
            ObKind::Precondition,
            what,
            ok,
            (!ok).then(|| {
                format!(
                    "0 <= {} <= {} is not provable",
                    v.render(&heap.syms),
                    max.render(&heap.syms)
                )
            }),
            vacuous,
        );
        heap.assume(lo);
        heap.assume(hi);
        heap
    }

    /// Assumes `0 <= v <= max` without an obligation (used for get results).
    fn assume_bound(&self, heap: &mut HeapState, proto: &ProtoArgs, v: &LinTerm) {
        let Some(maxe) = &proto.max else {
            return;
        };
        let empty = Env::new();
        if let Ok(mut vals) = eval_int_quiet(&self.ctx, heap.clone(), &empty, maxe) {
            if vals.len() == 1 {
                let max = vals.pop().unwrap().1;
                let lo = LinCon::new(v.clone(), Rel::Ge, &heap.syms);
                let hi = LinCon::new(max.sub(v), Rel::Ge, &heap.syms);
                heap.assume(lo);
                heap.assume(hi);
            }
        }
    }

    fn take_handle(
        &mut self,
        heap: &mut HeapState,
        cell: &str,
        role: &str,
        view: &LinTerm,
        p: &FracTerm,
    ) -> Result<(), String> {
        if heap.inconsistent {
            return Ok(());
        }
        let cell_term = self.ctx.cells[cell].clone();
        heap.take_pred(
            &cell_term,
            HANDLE,
            &[
                Some(ArgV::Role(role.to_string())),
                Some(ArgV::Int(view.clone())),
            ],
            p,
        )
        .map(|_| ())
        .map_err(|tf| {
            format!(
                "missing {cell}.handle({role}, {}, {}): {}",
                view.render(&heap.syms),
                p.render(&heap.syms),
                tf.detail()
            )
        })
    }

    fn give_handle(
        &mut self,
        heap: &mut HeapState,
        cell: &str,
        role: &str,
        view: &LinTerm,
        p: &FracTerm,
    ) {
        let cell_term = self.ctx.cells[cell].clone();
        heap.add_chunk(Chunk::Pred {
            recv: cell_term,
            name: HANDLE.into(),
            args: vec![ArgV::Role(role.to_string()), ArgV::Int(view.clone())],
            scale: p.clone(),
        });
    }

    fn take_inv(
        &mut self,
        heap: &mut HeapState,
        proto: &ProtoArgs,
        scale: &FracTerm,
    ) -> Result<(), String> {
        if heap.inconsistent {
            return Ok(());
        }
        let this = self.ctx.this.clone();
        heap.take_pred(&this, &proto.inv, &[], scale)
            .map(|_| ())
            .map_err(|tf| {
                format!(
                    "missing {}({}): {}",
                    proto.inv,
                    scale.render(&heap.syms),
                    tf.detail()
                )
            })
    }

    fn give_inv(&mut self, heap: &mut HeapState, proto: &ProtoArgs, scale: &FracTerm) {
        let this = self.ctx.this.clone();
        heap.add_chunk(Chunk::Pred {
            recv: this,
            name: proto.inv.clone(),
            args: vec![],
            scale: scale.clone(),
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_get(
        &mut self,
        st: PathSt,
        cell: &str,
        proto: &ProtoArgs,
        role: &str,
        with: &BTreeMap<&str, &Expr>,
        target: Option<&str>,
        span: Span,
    ) -> Vec<PathSt> {
        let what = "get precondition";
        let mut out = Vec::new();
        let store = st.store.clone();
        let args = match self.ghost_dp(&st, with) {
            Ok(v) => v,
            Err(st) => return vec![st],
        };
        for (heap, d, p) in args {
            // Consume handle(r, d, p) ** inv(share(r, d)).
            let shares = match self.share_eval(heap, proto, role, &d) {
                Ok(v) => v,
                Err(err) => {
                    self.sink.record(
                        err.span,
                        ObKind::Precondition,
                        what,
                        false,
                        Some(err.msg),
                        false,
                    );
                    continue;
                }
            };
            for (mut h, pi_d) in shares {
                let vacuous = h.inconsistent;
                let step = self
                    .take_handle(&mut h, cell, role, &d, &p)
                    .and_then(|()| self.take_inv(&mut h, proto, &pi_d));
                match step {
                    Ok(()) => self
                        .sink
                        .record(span, ObKind::Precondition, what, true, None, vacuous),
                    Err(detail) => self.sink.record(
                        span,
                        ObKind::Precondition,
                        what,
                        false,
                        Some(detail),
                        false,
                    ),
                }
                // Fresh result constrained only by the declared state range.
                let ret = LinTerm::sym(h.syms.fresh("ret", Sort::Int));
                self.assume_bound(&mut h, proto, &ret);
                self.give_handle(&mut h, cell, role, &ret, &p);
                let rets = match self.share_eval(h, proto, role, &ret) {
                    Ok(v) => v,
                    Err(err) => {
                        self.sink.record(
                            err.span,
                            ObKind::Precondition,
                            what,
                            false,
                            Some(err.msg),
                            false,
                        );
                        continue;
                    }
                };
                for (mut h2, pi_ret) in rets {
                    self.sink.attach_transfer(
                        span,
                        ObKind::Precondition,
                        what,
                        Transfer {
                            consumed: pi_d.render(&h2.syms),
                            produced: Some(pi_ret.render(&h2.syms)),
                            produced_success: None,
                            produced_failure: None,
                        },
                    );
                    self.give_inv(&mut h2, proto, &pi_ret);
                    h2.normalize();
                    let mut store2 = store.clone();
                    if let Some(t) = target {
                        store2.insert(t.to_string(), Value::Int(ret.clone()));
                    }
                    out.push(PathSt {
                        heap: h2,
                        store: store2,
                    });
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_set(
        &mut self,
        st: PathSt,
        cell: &str,
        proto: &ProtoArgs,
        role: &str,
        args: &[Expr],
        with: &BTreeMap<&str, &Expr>,
        span: Span,
    ) -> Vec<PathSt> {
        let what = "set precondition";
        let store = st.store.clone();
        let ghost = match self.ghost_dp(&st, with) {
            Ok(v) => v,
            Err(st) => return vec![st],
        };
        let mut out = Vec::new();
        for (heap, d, p) in ghost {
            let ns = match eval_int(&self.ctx, &mut self.sink, vec![heap], &store, &args[0]) {
                Ok(v) => v,
                Err(err) => {
                    self.sink.record(
                        err.span,
                        ObKind::Precondition,
                        what,
                        false,
                        Some(err.msg),
                        false,
                    );
                    continue;
                }
            };
            for (h, n) in ns {
                // Legal transition trans(r, d, n), then the state bound.
                let (states, ok) = match self.trans_check(h, proto, role, &d, &n) {
                    Ok(v) => v,
                    Err(err) => {
                        self.sink.record(
                            err.span,
                            ObKind::Precondition,
                            "legal transition",
                            false,
                            Some(err.msg),
                            false,
                        );
                        continue;
                    }
                };
                for h2 in states {
                    let vacuous = h2.inconsistent;
                    self.sink.record(
                        span,
                        ObKind::Precondition,
                        "legal transition",
                        ok || vacuous,
                        (!ok).then(|| {
                            format!(
                                "illegal transition: trans({role}, {}, {}) is not provable",
                                d.render(&h2.syms),
                                n.render(&h2.syms)
                            )
                        }),
                        vacuous,
                    );
                    let h2 = self.bound_check(h2, proto, &n, "state bound", span);
                    let sn = match self.share_eval(h2, proto, SYNC_ROLE, &n) {
                        Ok(v) => v,
                        Err(err) => {
                            self.sink.record(
                                err.span,
                                ObKind::Precondition,
                                what,
                                false,
                                Some(err.msg),
                                false,
                            );
                            continue;
                        }
                    };
                    for (h3, pi_sn) in sn {
                        let rd = match self.share_eval(h3, proto, role, &d) {
                            Ok(v) => v,
                            Err(err) => {
                                self.sink.record(
                                    err.span,
                                    ObKind::Precondition,
                                    what,
                                    false,
                                    Some(err.msg),
                                    false,
                                );
                                continue;
                            }
                        };
                        for (mut h4, pi_rd) in rd {
                            let vac = h4.inconsistent;
                            let step = self
                                .take_handle(&mut h4, cell, role, &d, &p)
                                .and_then(|()| self.take_inv(&mut h4, proto, &pi_sn))
                                .and_then(|()| self.take_inv(&mut h4, proto, &pi_rd));
                            match step {
                                Ok(()) => self
                                    .sink
                                    .record(span, ObKind::Precondition, what, true, None, vac),
                                Err(detail) => self.sink.record(
                                    span,
                                    ObKind::Precondition,
                                    what,
                                    false,
                                    Some(detail),
                                    false,
                                ),
                            }
                            self.sink.attach_transfer(
                                span,
                                ObKind::Precondition,
                                what,
                                Transfer {
                                    consumed: format!(
                                        "{} + {}",
                                        pi_sn.render(&h4.syms),
                                        pi_rd.render(&h4.syms)
                                    ),
                                    produced: Some("0".into()),
                                    produced_success: None,
                                    produced_failure: None,
                                },
                            );
                            self.give_handle(&mut h4, cell, role, &n, &p);
                            h4.normalize();
                            out.push(PathSt {
                                heap: h4,
                                store: store.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_cas(
        &mut self,
        st: PathSt,
        cell: &str,
        proto: &ProtoArgs,
        role: &str,
        args: &[Expr],
        with: &BTreeMap<&str, &Expr>,
        target: Option<&str>,
        span: Span,
    ) -> Vec<PathSt> {
        let what = "compareAndSet precondition";
        let store = st.store.clone();
        let ps = match eval_frac(
            &self.ctx,
            &mut self.sink,
            vec![st.heap.clone()],
            &store,
            with["p"],
        ) {
            Ok(v) => v,
            Err(err) => {
                self.sink.record(
                    err.span,
                    ObKind::Precondition,
                    what,
                    false,
                    Some(err.msg),
                    false,
                );
                return vec![st];
            }
        };
        let mut out = Vec::new();
        for (heap, p) in ps {
            let xs = match eval_int(&self.ctx, &mut self.sink, vec![heap], &store, &args[0]) {
                Ok(v) => v,
                Err(err) => {
                    self.sink.record(
                        err.span,
                        ObKind::Precondition,
                        what,
                        false,
                        Some(err.msg),
                        false,
                    );
                    continue;
                }
            };
            for (hx, x) in xs {
                let ns = match eval_int(&self.ctx, &mut self.sink, vec![hx], &store, &args[1]) {
                    Ok(v) => v,
                    Err(err) => {
                        self.sink.record(
                            err.span,
                            ObKind::Precondition,
                            what,
                            false,
                            Some(err.msg),
                            false,
                        );
                        continue;
                    }
                };
                for (hn, n) in ns {
                    // Feasibility side condition: legal transition.
                    let (states, ok) = match self.trans_check(hn, proto, role, &x, &n) {
                        Ok(v) => v,
                        Err(err) => {
                            self.sink.record(
                                err.span,
                                ObKind::Precondition,
                                "legal transition",
                                false,
                                Some(err.msg),
                                false,
                            );
                            continue;
                        }
                    };
                    for h in states {
                        let vacuous = h.inconsistent;
                        self.sink.record(
                            span,
                            ObKind::Precondition,
                            "legal transition",
                            ok || vacuous,
                            (!ok).then(|| {
                                format!(
                                    "illegal transition: trans({role}, {}, {}) is not provable",
                                    x.render(&h.syms),
                                    n.render(&h.syms)
                                )
                            }),
                            vacuous,
                        );
                        let h = self.bound_check(h, proto, &n, "state bound", span);
                        out.extend(self.cas_core(
                            h, cell, proto, role, &x, &n, &p, &store, target, what, span,
                        ));
                    }
                }
            }
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn cas_core(
        &mut self,
        heap: HeapState,
        cell: &str,
        proto: &ProtoArgs,
        role: &str,
        x: &LinTerm,
        n: &LinTerm,
        p: &FracTerm,
        store: &Env,
        target: Option<&str>,
        what: &str,
        span: Span,
    ) -> Vec<PathSt> {
        let mut out = Vec::new();
        let sx = match self.share_eval(heap, proto, SYNC_ROLE, x) {
            Ok(v) => v,
            Err(err) => {
                self.sink.record(
                    err.span,
                    ObKind::Precondition,
                    what,
                    false,
                    Some(err.msg),
                    false,
                );
                return out;
            }
        };
        for (hx, pi_x) in sx {
            let sn = match self.share_eval(hx, proto, SYNC_ROLE, n) {
                Ok(v) => v,
                Err(err) => {
                    self.sink.record(
                        err.span,
                        ObKind::Precondition,
                        what,
                        false,
                        Some(err.msg),
                        false,
                    );
                    continue;
                }
            };
            for (hn, pi_n) in sn {
                // The call absorbs share(S,n) - share(S,x), cut off at zero.
                let pres = match cutoff_sub(hn, &pi_n, &pi_x, span) {
                    Ok(v) => v,
                    Err(err) => {
                        self.sink.record(
                            err.span,
                            ObKind::Precondition,
                            what,
                            false,
                            Some(err.msg),
                            false,
                        );
                        continue;
                    }
                };
                for (mut h, pre) in pres {
                    let vacuous = h.inconsistent;
                    let step = self
                        .take_handle(&mut h, cell, role, x, p)
                        .and_then(|()| self.take_inv(&mut h, proto, &pre));
                    match step {
                        Ok(()) => self
                            .sink
                            .record(span, ObKind::Precondition, what, true, None, vacuous),
                        Err(detail) => self.sink.record(
                            span,
                            ObKind::Precondition,
                            what,
                            false,
                            Some(detail),
                            false,
                        ),
                    }
                    // A success returns share(S,x) - share(S,n).
                    let succs = match cutoff_sub(h.clone(), &pi_x, &pi_n, span) {
                        Ok(v) => v,
                        Err(err) => {
                            self.sink.record(
                                err.span,
                                ObKind::Precondition,
                                what,
                                false,
                                Some(err.msg),
                                false,
                            );
                            continue;
                        }
                    };
                    for (h2, succ) in succs {
                        self.sink.attach_transfer(
                            span,
                            ObKind::Precondition,
                            what,
                            Transfer {
                                consumed: pre.render(&h2.syms),
                                produced: None,
                                produced_success: Some(succ.render(&h2.syms)),
                                produced_failure: Some(pre.render(&h2.syms)),
                            },
                        );
                        // Case split on the fresh boolean result.
                        let mut base = h2;
                        let b = LinTerm::sym(base.syms.fresh("cas", Sort::Bool));

                        let mut won = base.clone();
                        let eq1 = LinCon::new(b.clone().add_const(-1), Rel::Eq, &won.syms);
                        won.assume(eq1);
                        self.give_handle(&mut won, cell, role, n, p);
                        self.give_inv(&mut won, proto, &succ);
                        won.normalize();
                        let mut store_w = store.clone();
                        if let Some(t) = target {
                            store_w.insert(t.to_string(), Value::Bool(b.clone()));
                        }
                        out.push(PathSt {
                            heap: won,
                            store: store_w,
                        });

                        // A failure exchanges nothing: every resource from
                        // the precondition comes back.
                        let mut lost = base;
                        let eq0 = LinCon::new(b.clone(), Rel::Eq, &lost.syms);
                        lost.assume(eq0);
                        self.give_handle(&mut lost, cell, role, x, p);
                        self.give_inv(&mut lost, proto, &pre);
                        lost.normalize();
                        let mut store_l = store.clone();
                        if let Some(t) = target {
                            store_l.insert(t.to_string(), Value::Bool(b.clone()));
                        }
                        out.push(PathSt {
                            heap: lost,
                            store: store_l,
                        });
                    }
                }
            }
        }
        out
    }

    fn apply_constructor(
        &mut self,
        st: PathSt,
        field: &str,
        proto: &ProtoArgs,
        init: &Expr,
        span: Span,
    ) -> Vec<PathSt> {
        let what = "cell constructor precondition";
        let store = st.store.clone();
        let vs = match eval_int(
            &self.ctx,
            &mut self.sink,
            vec![st.heap.clone()],
            &store,
            init,
        ) {
            Ok(v) => v,
            Err(err) => {
                self.sink.record(
                    err.span,
                    ObKind::Precondition,
                    what,
                    false,
                    Some(err.msg),
                    false,
                );
                return vec![st];
            }
        };
        let mut out = Vec::new();
        for (h, v) in vs {
            let h = self.bound_check(h, proto, &v, "initial state bound", span);
            self.share_range_check(&h, proto, span);
            let svs = match self.share_eval(h, proto, SYNC_ROLE, &v) {
                Ok(x) => x,
                Err(err) => {
                    self.sink.record(
                        err.span,
                        ObKind::Precondition,
                        what,
                        false,
                        Some(err.msg),
                        false,
                    );
                    continue;
                }
            };
            for (mut h2, pi_v) in svs {
                let vacuous = h2.inconsistent;
                match self.take_inv(&mut h2, proto, &pi_v) {
                    Ok(()) => self
                        .sink
                        .record(span, ObKind::Precondition, what, true, None, vacuous),
                    Err(detail) => self.sink.record(
                        span,
                        ObKind::Precondition,
                        what,
                        false,
                        Some(detail),
                        false,
                    ),
                }
                self.sink.attach_transfer(
                    span,
                    ObKind::Precondition,
                    what,
                    Transfer {
                        consumed: pi_v.render(&h2.syms),
                        produced: None,
                        produced_success: None,
                        produced_failure: None,
                    },
                );
                // One full handle per declared role, at the initial view.
                let roles = self.ctx.info.roles.clone();
                for role in &roles {
                    self.give_handle(&mut h2, field, role, &v, &FracTerm::one());
                }
                h2.normalize();
                out.push(PathSt {
                    heap: h2,
                    store: store.clone(),
                });
            }
        }
        out
    }

    /// Instantiation obligation: share stays within `[0,1]` for every role
    /// over the declared state range.
    fn share_range_check(&mut self, heap: &HeapState, proto: &ProtoArgs, span: Span) {
        if proto.max.is_none() {
            return;
        }
        let mut roles = self.ctx.info.roles.clone();
        roles.push(SYNC_ROLE.to_string());
        for role in roles {
            let mut scratch = heap.clone();
            let w = LinTerm::sym(scratch.syms.fresh("w*", Sort::Int));
            self.assume_bound(&mut scratch, proto, &w);
            let what = format!("share range for role {role}");
            match self.share_eval(scratch, proto, &role, &w) {
                Ok(branches) => {
                    let mut ok = true;
                    let mut bad = String::new();
                    for (s, pi) in branches {
                        if s.inconsistent {
                            continue;
                        }
                        let lo = s.pure.frac_con(&s.syms, &pi, &FracTerm::zero(), Rel::Ge);
                        let hi = s.pure.frac_con(&s.syms, &FracTerm::one(), &pi, Rel::Ge);
                        let fine = match (lo, hi) {
                            (Some(l), Some(hc)) => {
                                s.pure.entails_con(&s.syms, &l)
                                    && s.pure.entails_con(&s.syms, &hc)
                            }
                            _ => matches!(pi, FracTerm::Lit(_)),
                        };
                        if !fine {
                            ok = false;
                            bad = format!("share({role}, v) = {}", pi.render(&s.syms));
                        }
                    }
                    self.sink.record(
                        span,
                        ObKind::Precondition,
                        &what,
                        ok,
                        (!ok).then(|| format!("{bad} is not provably within [0,1]")),
                        false,
                    );
                }
                Err(err) => {
                    self.sink.record(
                        err.span,
                        ObKind::Precondition,
                        &what,
                        false,
                        Some(err.msg),
                        false,
                    );
                }
            }
        }
    }

    /// Evaluates the `d` and `p` ghost arguments of get/set.
    fn ghost_dp(
        &mut self,
        st: &PathSt,
        with: &BTreeMap<&str, &Expr>,
    ) -> Result<Vec<(HeapState, LinTerm, FracTerm)>, PathSt> {
        let ds = eval_int(
            &self.ctx,
            &mut self.sink,
            vec![st.heap.clone()],
            &st.store,
            with["d"],
        );
        let ds = match ds {
            Ok(v) => v,
            Err(err) => {
                self.sink.record(
                    err.span,
                    ObKind::Precondition,
                    "ghost argument",
                    false,
                    Some(err.msg),
                    false,
                );
                return Err(st.clone());
            }
        };
        let mut out = Vec::new();
        for (h, d) in ds {
            match eval_frac(&self.ctx, &mut self.sink, vec![h], &st.store, with["p"]) {
                Ok(v) => {
                    for (h2, p) in v {
                        out.push((h2, d.clone(), p));
                    }
                }
                Err(err) => {
                    self.sink.record(
                        err.span,
                        ObKind::Precondition,
                        "ghost argument",
                        false,
                        Some(err.msg),
                        false,
                    );
                    return Err(st.clone());
                }
            }
        }
        Ok(out)
    }
}

/// Integer evaluation without recording side conditions.
fn eval_int_quiet(
    ctx: &SpecCtx,
    heap: HeapState,
    env: &Env,
    e: &Expr,
) -> Result<Vec<(HeapState, LinTerm)>, EvalErr> {
    let mut sink = NullSink;
    eval_int(ctx, &mut sink, vec![heap], env, e)
}
