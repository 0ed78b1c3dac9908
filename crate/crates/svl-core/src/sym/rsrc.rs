//! Resource-expression operations over symbolic heaps: produce (inhale an
//! assumption), consume (discharge an obligation, computing the residual
//! frame and existential witnesses), fold/unfold of declared predicates, and
//! the pure validity check.

use super::eval::*;
use super::heap::{ArgV, Chunk, HeapState};
use super::term::{FracTerm, LinTerm, Sort};
use crate::frontend::ast::*;
use crate::frontend::pretty;
use crate::Int;

const ITER_CAP: usize = 64;
const BACKTRACK_CAP: usize = 32;

/// A failed entailment: the first unprovable conjunct and what was tried.
#[derive(Debug, Clone)]
pub struct ConsumeFail {
    pub span: Span,
    pub what: String,
    pub detail: String,
}

impl From<EvalErr> for ConsumeFail {
    fn from(e: EvalErr) -> Self {
        ConsumeFail {
            span: e.span,
            what: "specification evaluation".into(),
            detail: e.msg,
        }
    }
}

// ----- produce -------------------------------------------------------------------

/// Extends the state with the resources denoted by `r`. Wildcard values
/// become fresh symbols; implication guards and share applications split the
/// state. A contradictory assumption keeps one state marked inconsistent.
pub fn produce(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    st: HeapState,
    r: &ResourceExpr,
    env: &Env,
) -> Result<Vec<HeapState>, EvalErr> {
    let mut states = vec![st];
    for conj in r.conjuncts() {
        let mut next = Vec::new();
        for s in states {
            next.extend(produce_one(ctx, sink, s, conj, env)?);
        }
        states = next;
    }
    for s in &mut states {
        s.normalize();
    }
    Ok(states)
}

fn produce_one(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    st: HeapState,
    r: &ResourceExpr,
    env: &Env,
) -> Result<Vec<HeapState>, EvalErr> {
    match r {
        ResourceExpr::Emp { .. } => Ok(vec![st]),
        ResourceExpr::Pure(e) => {
            let mut out = Vec::new();
            for (s, f) in eval_bool(ctx, sink, vec![st], env, e)? {
                let assumed = assume_formula(s.clone(), &f);
                if assumed.is_empty() {
                    // The assumption contradicts the state: keep it, marked.
                    let mut dead = s;
                    dead.inconsistent = true;
                    out.push(dead);
                } else {
                    out.extend(assumed);
                }
            }
            Ok(out)
        }
        ResourceExpr::PointsTo {
            recv,
            field,
            frac,
            value,
            span,
        } => {
            let mut out = Vec::new();
            for (s, rt) in eval_int(ctx, sink, vec![st], env, recv)? {
                for (mut s2, perm) in eval_frac(ctx, sink, vec![s.clone()], env, frac)? {
                    range_check(sink, &mut s2, &perm, *span);
                    let val = match value {
                        ValuePat::Wildcard(_) => {
                            LinTerm::sym(s2.syms.fresh(format!("{field}?"), Sort::Int))
                        }
                        ValuePat::Expr(e) => {
                            let mut vals = eval_int(ctx, sink, vec![s2.clone()], env, e)?;
                            if vals.len() != 1 {
                                // Splitting values inside produce is rare;
                                // take each split as its own state.
                                for (s3, v) in vals {
                                    let mut s4 = s3;
                                    s4.add_chunk(Chunk::PointsTo {
                                        recv: rt.clone(),
                                        field: field.clone(),
                                        perm: perm.clone(),
                                        value: v,
                                    });
                                    out.push(s4);
                                }
                                continue;
                            }
                            let (s3, v) = vals.pop().unwrap();
                            s2 = s3;
                            v
                        }
                        ValuePat::Bind(_, bspan) => {
                            return Err(EvalErr {
                                span: *bspan,
                                msg: "existential binder cannot be produced".into(),
                            })
                        }
                    };
                    s2.add_chunk(Chunk::PointsTo {
                        recv: rt.clone(),
                        field: field.clone(),
                        perm: perm.clone(),
                        value: val,
                    });
                    out.push(s2);
                }
            }
            Ok(out)
        }
        ResourceExpr::Pred { pred, args, span } => {
            let mut out = Vec::new();
            for (mut s, inst) in eval_pred_instance(ctx, sink, vec![st], env, pred, args, *span)? {
                if !inst.binds.is_empty() {
                    return Err(EvalErr {
                        span: *span,
                        msg: "existential binder cannot be produced".into(),
                    });
                }
                range_check(sink, &mut s, &inst.scale, *span);
                s.add_chunk(Chunk::Pred {
                    recv: inst.recv,
                    name: inst.name,
                    args: inst.args.into_iter().map(|a| a.expect("no binds")).collect(),
                    scale: inst.scale,
                });
                out.push(s);
            }
            Ok(out)
        }
        ResourceExpr::SepConj(a, b) => {
            let mut out = Vec::new();
            for s in produce_one(ctx, sink, st, a, env)? {
                out.extend(produce_one(ctx, sink, s, b, env)?);
            }
            Ok(out)
        }
        ResourceExpr::Implies { guard, body, .. } => {
            let mut out = Vec::new();
            for (s, f) in eval_bool(ctx, sink, vec![st], env, guard)? {
                for (s2, holds) in branch(s, &f) {
                    if holds {
                        out.extend(produce_one(ctx, sink, s2, body, env)?);
                    } else {
                        out.push(s2);
                    }
                }
            }
            Ok(out)
        }
        ResourceExpr::IterStar {
            binder,
            range,
            body,
            span,
        } => {
            let mut out = Vec::new();
            for (s, envs) in expand_iter(ctx, sink, st, binder, range, env, *span)? {
                let mut states = vec![s];
                for e2 in &envs {
                    let mut next = Vec::new();
                    for s2 in states {
                        next.extend(produce_one(ctx, sink, s2, body, e2)?);
                    }
                    states = next;
                }
                out.extend(states);
            }
            Ok(out)
        }
    }
}

/// Bounds an iterated star: evaluates the range predicate over a fresh
/// binder symbol, extracts literal bounds, and returns one environment per
/// feasible index.
fn expand_iter(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    st: HeapState,
    binder: &str,
    range: &Expr,
    env: &Env,
    span: Span,
) -> Result<Vec<(HeapState, Vec<Env>)>, EvalErr> {
    let mut scratch = st.clone();
    let b = scratch.syms.fresh(format!("{binder}*"), Sort::Int);
    let mut probe_env = env.clone();
    probe_env.insert(binder.to_string(), Value::Int(LinTerm::sym(b)));
    let mut out = Vec::new();
    for (mut s, f) in eval_bool(ctx, sink, vec![scratch], &probe_env, range)? {
        for d in f.dnf(&s.syms).into_iter().flatten() {
            s.pure.assume_all(d);
        }
        let Some((lo, hi)) = s.pure.literal_bounds(&s.syms, b) else {
            return Err(EvalErr {
                span,
                msg: format!("iterated star over `{binder}` cannot be bounded by pure facts"),
            });
        };
        if hi - lo >= ITER_CAP as i64 {
            return Err(EvalErr {
                span,
                msg: format!("iterated star expands to more than {ITER_CAP} instances"),
            });
        }
        let mut envs = Vec::new();
        for i in lo..=hi {
            let mut e2 = env.clone();
            e2.insert(binder.to_string(), Value::Int(LinTerm::konst(Int::from(i))));
            // Skip indices the range provably excludes.
            let feasible = eval_bool(ctx, sink, vec![st.clone()], &e2, range)?
                .into_iter()
                .all(|(s2, fi)| decide(&s2, &fi) != Some(false));
            if feasible {
                envs.push(e2);
            }
        }
        out.push((st.clone(), envs));
        // One bounding is enough; range splits agree on the bounds.
        break;
    }
    Ok(out)
}

// ----- consume -------------------------------------------------------------------

/// Finds and removes the resources denoted by `r`, binding existential `?x`
/// patterns. Returns the residual states with extended environments, or the
/// first unsatisfiable conjunct. Chunk selection is deterministic (insertion
/// order) with backtracking bounded at `BACKTRACK_CAP`.
pub fn consume(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    st: HeapState,
    r: &ResourceExpr,
    env: Env,
) -> Result<Vec<(HeapState, Env)>, ConsumeFail> {
    let conjs = r.conjuncts();
    let mut depth = 0usize;
    consume_seq(ctx, sink, st, env, &conjs, 0, &mut depth)
}

fn consume_seq(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    st: HeapState,
    env: Env,
    conjs: &[&ResourceExpr],
    i: usize,
    depth: &mut usize,
) -> Result<Vec<(HeapState, Env)>, ConsumeFail> {
    let Some(conj) = conjs.get(i) else {
        return Ok(vec![(st, env)]);
    };
    match conj {
        ResourceExpr::Emp { .. } => consume_seq(ctx, sink, st, env, conjs, i + 1, depth),
        ResourceExpr::Pure(e) => {
            let mut out = Vec::new();
            for (s, f) in eval_bool(ctx, sink, vec![st], &env, e)? {
                if !s.inconsistent && !s.pure.entails(&s.syms, &f) {
                    return Err(ConsumeFail {
                        span: e.span(),
                        what: pretty::expr(e),
                        detail: "pure conjunct is not provable".into(),
                    });
                }
                out.extend(consume_seq(ctx, sink, s, env.clone(), conjs, i + 1, depth)?);
            }
            Ok(out)
        }
        ResourceExpr::PointsTo {
            recv,
            field,
            frac,
            value,
            span,
        } => {
            let mut out = Vec::new();
            for (s, rt) in eval_int(ctx, sink, vec![st], &env, recv)? {
                for (mut s2, perm) in eval_frac(ctx, sink, vec![s.clone()], &env, frac)? {
                    range_check(sink, &mut s2, &perm, *span);
                    let taken = if s2.inconsistent {
                        LinTerm::sym(s2.syms.fresh(format!("{field}?"), Sort::Int))
                    } else {
                        match s2.take_points_to(&rt, field, &perm) {
                            Ok(v) => v,
                            Err(tf) => {
                                return Err(ConsumeFail {
                                    span: *span,
                                    what: format!(
                                        "{}.{field} at {}",
                                        rt.render(&s2.syms),
                                        perm.render(&s2.syms)
                                    ),
                                    detail: tf.detail(),
                                })
                            }
                        }
                    };
                    let mut env2 = env.clone();
                    match value {
                        ValuePat::Wildcard(_) => {}
                        ValuePat::Bind(name, _) => {
                            env2.insert(name.clone(), Value::Int(taken.clone()));
                        }
                        ValuePat::Expr(e) => {
                            let mut matched = false;
                            for (s3, want) in
                                eval_int(ctx, sink, vec![s2.clone()], &env2, e)?
                            {
                                if s3.inconsistent || s3.int_eq(&taken, &want) {
                                    s2 = s3;
                                    matched = true;
                                    break;
                                }
                            }
                            if !matched {
                                return Err(ConsumeFail {
                                    span: *span,
                                    what: format!("{}.{field}", rt.render(&s2.syms)),
                                    detail: format!(
                                        "stored value {} does not match the required pattern",
                                        taken.render(&s2.syms)
                                    ),
                                });
                            }
                        }
                    }
                    out.extend(consume_seq(ctx, sink, s2, env2, conjs, i + 1, depth)?);
                }
            }
            Ok(out)
        }
        ResourceExpr::Pred { pred, args, span } => {
            let mut out = Vec::new();
            for (mut s, inst) in
                eval_pred_instance(ctx, sink, vec![st], &env, pred, args, *span)?
            {
                range_check(sink, &mut s, &inst.scale, *span);
                out.extend(consume_pred_inst(
                    ctx, sink, s, env.clone(), &inst, *span, conjs, i, depth,
                )?);
            }
            Ok(out)
        }
        ResourceExpr::SepConj(..) => unreachable!("conjuncts() flattens"),
        ResourceExpr::Implies { guard, body, .. } => {
            let mut out = Vec::new();
            for (s, f) in eval_bool(ctx, sink, vec![st], &env, guard)? {
                for (s2, holds) in branch(s, &f) {
                    if holds {
                        let mut nested: Vec<&ResourceExpr> = body.conjuncts();
                        nested.extend_from_slice(&conjs[i + 1..]);
                        out.extend(consume_seq(
                            ctx,
                            sink,
                            s2,
                            env.clone(),
                            &nested,
                            0,
                            depth,
                        )?);
                    } else {
                        out.extend(consume_seq(
                            ctx,
                            sink,
                            s2,
                            env.clone(),
                            conjs,
                            i + 1,
                            depth,
                        )?);
                    }
                }
            }
            Ok(out)
        }
        ResourceExpr::IterStar {
            binder,
            range,
            body,
            span,
        } => {
            let mut out = Vec::new();
            for (s, envs) in expand_iter(ctx, sink, st, binder, range, &env, *span)? {
                let mut states = vec![(s, env.clone())];
                for e2 in &envs {
                    let mut next = Vec::new();
                    for (s2, _) in states {
                        let bodyc = body.conjuncts();
                        next.extend(consume_seq(
                            ctx,
                            sink,
                            s2,
                            e2.clone(),
                            &bodyc,
                            0,
                            depth,
                        )?);
                    }
                    states = next;
                }
                for (s2, _) in states {
                    out.extend(consume_seq(ctx, sink, s2, env.clone(), conjs, i + 1, depth)?);
                }
            }
            Ok(out)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn consume_pred_inst(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    mut st: HeapState,
    env: Env,
    inst: &PredInstance,
    span: Span,
    conjs: &[&ResourceExpr],
    i: usize,
    depth: &mut usize,
) -> Result<Vec<(HeapState, Env)>, ConsumeFail> {
    let demand = format!(
        "{}.{}(..) scale {}",
        inst.recv.render(&st.syms),
        inst.name,
        inst.scale.render(&st.syms)
    );
    if st.inconsistent || st.pure.frac_is_zero(&st.syms, &inst.scale) {
        // Vacuous or empty demand: bind existentials to fresh symbols.
        let mut env2 = env;
        for (_, name, ty) in &inst.binds {
            let v = fresh_of(&mut st, name, ty);
            env2.insert(name.clone(), v);
        }
        return consume_seq(ctx, sink, st, env2, conjs, i + 1, depth);
    }
    if inst.binds.is_empty() {
        match st.take_pred(&inst.recv, &inst.name, &inst.args, &inst.scale) {
            Ok(_) => consume_seq(ctx, sink, st, env, conjs, i + 1, depth),
            Err(tf) => Err(ConsumeFail {
                span,
                what: demand.clone(),
                detail: tf.detail(),
            }),
        }
    } else {
        // Existential arguments: try each matching candidate, backtracking
        // into the remaining conjuncts.
        let candidates = st.pred_candidates(&inst.recv, &inst.name, &inst.args, &inst.scale);
        if candidates.is_empty() {
            return Err(ConsumeFail {
                span,
                what: demand.clone(),
                detail: "no matching chunk in the heap".into(),
            });
        }
        let mut last_err = None;
        for idx in candidates {
            *depth += 1;
            if *depth > BACKTRACK_CAP {
                return Err(ConsumeFail {
                    span,
                    what: demand.clone(),
                    detail: format!("backtracking depth exceeded ({BACKTRACK_CAP})"),
                });
            }
            let mut s2 = st.clone();
            let got = s2.take_pred_at(idx, &inst.scale);
            let mut env2 = env.clone();
            for (pos, name, ty) in &inst.binds {
                env2.insert(name.clone(), arg_value(&got[*pos], ty));
            }
            match consume_seq(ctx, sink, s2, env2, conjs, i + 1, depth) {
                Ok(res) => return Ok(res),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("at least one candidate tried"))
    }
}

fn fresh_of(st: &mut HeapState, name: &str, ty: &Type) -> Value {
    match ty {
        Type::Frac => Value::Frac(FracTerm::Sym(st.syms.fresh(format!("{name}?"), Sort::Frac))),
        _ => Value::Int(LinTerm::sym(st.syms.fresh(format!("{name}?"), Sort::Int))),
    }
}

fn arg_value(a: &ArgV, ty: &Type) -> Value {
    match (a, ty) {
        (ArgV::Int(t), _) => Value::Int(t.clone()),
        (ArgV::Frac(f), _) => Value::Frac(f.clone()),
        (ArgV::Role(r), _) => Value::Role(r.clone()),
    }
}

// ----- fold / unfold ---------------------------------------------------------------

/// Packs a predicate instance: consumes the instantiated body at the given
/// scale and produces the predicate chunk.
pub fn fold_pred(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    st: HeapState,
    pred: &PredRef,
    args: &[Expr],
    span: Span,
    env: &Env,
) -> Result<Vec<HeapState>, ConsumeFail> {
    let (inst_states, decl) = pred_instances(ctx, sink, st, pred, args, span, env)?;
    let mut out = Vec::new();
    for (s, inst, body_env) in inst_states {
        for (mut s2, _) in consume(ctx, sink, s, &decl.body, body_env)? {
            s2.add_chunk(Chunk::Pred {
                recv: inst.recv.clone(),
                name: inst.name.clone(),
                args: inst.args.iter().map(|a| a.clone().expect("no binds")).collect(),
                scale: inst.scale.clone(),
            });
            s2.normalize();
            out.push(s2);
        }
    }
    Ok(out)
}

/// Unpacks a predicate instance: consumes the chunk at the given scale and
/// produces the instantiated body.
pub fn unfold_pred(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    st: HeapState,
    pred: &PredRef,
    args: &[Expr],
    span: Span,
    env: &Env,
) -> Result<Vec<HeapState>, ConsumeFail> {
    let (inst_states, decl) = pred_instances(ctx, sink, st, pred, args, span, env)?;
    let mut out = Vec::new();
    for (mut s, inst, body_env) in inst_states {
        if !s.inconsistent && !s.pure.frac_is_zero(&s.syms, &inst.scale) {
            if let Err(tf) = s.take_pred(&inst.recv, &inst.name, &inst.args, &inst.scale) {
                return Err(ConsumeFail {
                    span,
                    what: format!("{}({})", pred, render_args(&inst, &s)),
                    detail: tf.detail(),
                });
            }
        }
        out.extend(produce(ctx, sink, s, &decl.body, &body_env).map_err(ConsumeFail::from)?);
    }
    Ok(out)
}

fn render_args(inst: &PredInstance, s: &HeapState) -> String {
    inst.args
        .iter()
        .map(|a| match a {
            Some(ArgV::Int(t)) => t.render(&s.syms),
            Some(ArgV::Frac(f)) => f.render(&s.syms),
            Some(ArgV::Role(r)) => r.clone(),
            None => "?".into(),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

type InstState<'a> = (HeapState, PredInstance, Env);

/// Shared fold/unfold front half: evaluates the instance and builds the body
/// environment binding declared parameters to the evaluated arguments (the
/// final frac parameter of a group predicate binds the scale).
fn pred_instances<'a>(
    ctx: &SpecCtx<'a>,
    sink: &mut dyn SpecSink,
    st: HeapState,
    pred: &PredRef,
    args: &[Expr],
    span: Span,
    env: &Env,
) -> Result<(Vec<InstState<'a>>, &'a PredicateDecl), ConsumeFail> {
    let shape = pred_shape(ctx, pred, span).map_err(ConsumeFail::from)?;
    let Some((decl, _)) = shape.body else {
        return Err(ConsumeFail {
            span,
            what: pred.to_string(),
            detail: "abstract predicates cannot be folded or unfolded".into(),
        });
    };
    let pargs: Vec<PredArg> = args.iter().cloned().map(PredArg::Expr).collect();
    let inst_states = eval_pred_instance(ctx, sink, vec![st], env, pred, &pargs, span)
        .map_err(ConsumeFail::from)?;
    let mut out = Vec::new();
    for (s, inst) in inst_states {
        let mut body_env = Env::new();
        let mut pos = 0usize;
        for (pi, param) in decl.params.iter().enumerate() {
            let is_scale = shape.group && pi + 1 == decl.params.len();
            if is_scale {
                body_env.insert(param.name.clone(), Value::Frac(inst.scale.clone()));
            } else {
                let v = arg_value(inst.args[pos].as_ref().expect("no binds"), &param.ty);
                body_env.insert(param.name.clone(), v);
                pos += 1;
            }
        }
        out.push((s, inst, body_env));
    }
    Ok((out, decl))
}

// ----- pure checks -----------------------------------------------------------------

/// Validity of a boolean expression under the state's pure constraints.
/// `NotValid` (false) is conservative and may reflect solver incompleteness.
pub fn check_pure(
    ctx: &SpecCtx,
    sink: &mut dyn SpecSink,
    st: HeapState,
    e: &Expr,
    env: &Env,
) -> Result<(Vec<HeapState>, bool), EvalErr> {
    let branches = eval_bool(ctx, sink, vec![st], env, e)?;
    let mut ok = true;
    let mut states = Vec::new();
    for (s, f) in branches {
        if !s.inconsistent && !s.pure.entails(&s.syms, &f) {
            ok = false;
        }
        states.push(s);
    }
    Ok((states, ok))
}
