//! Canonical pretty-printer. Printing a parsed program and reparsing the
//! output yields a structurally identical program (spans aside).

use super::ast::*;
use std::fmt::Write;

pub fn pretty(p: &Program) -> String {
    let mut out = String::new();
    for c in &p.classes {
        class(&mut out, c);
        out.push('\n');
    }
    if let Some(h) = &p.harness {
        harness(&mut out, h);
    }
    out
}

fn class(out: &mut String, c: &ClassDecl) {
    for g in &c.givens {
        match g {
            GivenDecl::Var { name, ty, .. } => {
                let _ = writeln!(out, "/*@ given {ty} {name}; @*/");
            }
            GivenDecl::Family {
                name,
                params,
                ret,
                group,
                ..
            } => {
                let ps = params
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(", ");
                let grp = if *group { "group " } else { "" };
                let _ = writeln!(out, "/*@ given {grp}({ps} -> {ret}) {name}; @*/");
            }
        }
    }
    let _ = writeln!(out, "public class {} {{", c.name);
    for f in &c.ghost_fields {
        let fin = if f.final_ { "final " } else { "" };
        let _ = writeln!(out, "  /*@ ghost {fin}{} {}; @*/", f.ty, f.name);
    }
    if !c.roles.is_empty() {
        let _ = writeln!(
            out,
            "  /*@ ghost Set<role> roles = {{{}}}; @*/",
            c.roles.join(", ")
        );
    }
    for p in &c.predicates {
        let grp = if p.group { "group " } else { "" };
        let _ = writeln!(
            out,
            "  /*@ {grp}resource {}({}) = {}; @*/",
            p.name,
            params(&p.params),
            resource(&p.body)
        );
    }
    for f in &c.functions {
        let mut body = String::new();
        for s in &f.body {
            let _ = write!(body, "{} ", stmt_inline(s));
        }
        let _ = writeln!(
            out,
            "  /*@ {} {}({}) {{ {}return {}; }} @*/",
            f.ret,
            f.name,
            params(&f.params),
            body,
            expr(&f.ret_expr)
        );
    }
    for f in &c.fields {
        match f {
            FieldDecl::Atomic {
                modifiers,
                name,
                proto,
                ..
            } => {
                let _ = writeln!(
                    out,
                    "  {}AtomicInteger /*@ {} @*/ {};",
                    mods(modifiers),
                    proto_args(proto),
                    name
                );
            }
            FieldDecl::Data {
                modifiers,
                name,
                ty,
                ..
            } => {
                let _ = writeln!(out, "  {}{ty} {name};", mods(modifiers));
            }
        }
    }
    for m in &c.methods {
        out.push('\n');
        method(out, m);
    }
    out.push_str("}\n");
}

fn mods(m: &[String]) -> String {
    let mut s = m.join(" ");
    if !s.is_empty() {
        s.push(' ');
    }
    s
}

fn params(ps: &[Param]) -> String {
    ps.iter()
        .map(|p| format!("{} {}", p.ty, p.name))
        .collect::<Vec<_>>()
        .join(", ")
}

fn proto_args(p: &ProtoArgs) -> String {
    let mut s = format!("<{}, {}, {}, {}", p.roles, p.inv, p.share, p.trans);
    if let Some(m) = &p.max {
        let _ = write!(s, ", {}", expr(m));
    }
    s.push('>');
    s
}

fn method(out: &mut String, m: &MethodDecl) {
    if !m.givens.is_empty() {
        let _ = writeln!(out, "  /*@ given {}; @*/", params(&m.givens));
    }
    for r in &m.requires {
        let _ = writeln!(out, "  /*@ requires {}; @*/", resource(r));
    }
    for r in &m.ensures {
        let _ = writeln!(out, "  /*@ ensures {}; @*/", resource(r));
    }
    if m.is_constructor {
        let _ = writeln!(out, "  {}{}({}) {{", mods(&m.modifiers), m.name, params(&m.params));
    } else {
        let _ = writeln!(
            out,
            "  {}void {}({}) {{",
            mods(&m.modifiers),
            m.name,
            params(&m.params)
        );
    }
    for s in &m.body {
        stmt(out, s, 4);
    }
    out.push_str("  }\n");
}

fn indent(out: &mut String, n: usize) {
    for _ in 0..n {
        out.push(' ');
    }
}

fn stmt(out: &mut String, s: &Stmt, ind: usize) {
    match s {
        Stmt::While {
            cond,
            invariants,
            body,
            ..
        } => {
            for inv in invariants {
                indent(out, ind);
                let _ = writeln!(out, "/*@ loop_invariant {}; @*/", resource(inv));
            }
            indent(out, ind);
            let _ = writeln!(out, "while ({}) {{", expr(cond));
            for b in body {
                stmt(out, b, ind + 2);
            }
            indent(out, ind);
            out.push_str("}\n");
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            indent(out, ind);
            let _ = writeln!(out, "if ({}) {{", expr(cond));
            for b in then_branch {
                stmt(out, b, ind + 2);
            }
            indent(out, ind);
            if else_branch.is_empty() {
                out.push_str("}\n");
            } else {
                out.push_str("} else {\n");
                for b in else_branch {
                    stmt(out, b, ind + 2);
                }
                indent(out, ind);
                out.push_str("}\n");
            }
        }
        other => {
            indent(out, ind);
            let _ = writeln!(out, "{}", stmt_inline(other));
        }
    }
}

fn stmt_inline(s: &Stmt) -> String {
    match s {
        Stmt::VarDecl { ty, name, init, .. } => match init {
            Some(e) => format!("{ty} {name} = {};", expr(e)),
            None => format!("{ty} {name};"),
        },
        Stmt::Assign { target, value, .. } => format!("{target} = {};", expr(value)),
        Stmt::FieldAssign { field, value, .. } => format!("{field} = {};", expr(value)),
        Stmt::ExprStmt { expr: e, .. } => format!("{};", expr(e)),
        Stmt::GhostDecl { ty, name, init, .. } => {
            format!("/*@ ghost {ty} {name} = {}; @*/", expr(init))
        }
        Stmt::GhostSet { target, value, .. } => {
            format!("/*@ set {target} = {}; @*/", expr(value))
        }
        Stmt::Fold { pred, args, .. } => format!("/*@ fold {pred}({}); @*/", exprs(args)),
        Stmt::Unfold { pred, args, .. } => format!("/*@ unfold {pred}({}); @*/", exprs(args)),
        Stmt::Assert { cond, .. } => format!("/*@ assert {}; @*/", expr(cond)),
        Stmt::While { .. } | Stmt::If { .. } => unreachable!("handled in stmt()"),
    }
}

fn exprs(es: &[Expr]) -> String {
    es.iter().map(expr).collect::<Vec<_>>().join(", ")
}

pub fn resource(r: &ResourceExpr) -> String {
    match r {
        ResourceExpr::Pure(e) => expr(e),
        ResourceExpr::PointsTo {
            recv,
            field,
            frac,
            value,
            ..
        } => {
            let loc = format!("{}.{field}", expr(recv));
            match value {
                ValuePat::Wildcard(_) => format!("Perm({loc}, {})", expr(frac)),
                ValuePat::Bind(name, _) => {
                    format!("PointsTo({loc}, {}, ?{name})", expr(frac))
                }
                ValuePat::Expr(e) => format!("PointsTo({loc}, {}, {})", expr(frac), expr(e)),
            }
        }
        ResourceExpr::Pred { pred, args, .. } => {
            let rendered = args
                .iter()
                .map(|a| match a {
                    PredArg::Expr(e) => expr(e),
                    PredArg::Bind(name, _) => format!("?{name}"),
                })
                .collect::<Vec<_>>()
                .join(", ");
            format!("{pred}({rendered})")
        }
        ResourceExpr::SepConj(a, b) => format!("{} ** {}", resource(a), resource(b)),
        ResourceExpr::Implies { guard, body, .. } => {
            let b = resource(body);
            match body.as_ref() {
                ResourceExpr::SepConj(..) => format!("{} ==> ({b})", expr(guard)),
                _ => format!("{} ==> {b}", expr(guard)),
            }
        }
        ResourceExpr::IterStar {
            binder,
            range,
            body,
            ..
        } => format!(
            "(\\forall* int {binder}; {}; {})",
            expr(range),
            resource(body)
        ),
        ResourceExpr::Emp { .. } => "emp".into(),
    }
}

pub fn expr(e: &Expr) -> String {
    match e {
        Expr::IntLit(n, _) => n.to_string(),
        Expr::BoolLit(b, _) => b.to_string(),
        Expr::Var(n, _) | Expr::Field(n, _) => n.clone(),
        Expr::Hole(Some(n), _) => format!("?{n}"),
        Expr::Hole(None, _) => "?".into(),
        Expr::Unary { op, expr: inner, .. } => {
            let sigil = match op {
                UnOp::Not => "!",
                UnOp::Neg => "-",
            };
            format!("{sigil}{}", atom(inner))
        }
        Expr::Binary { op, lhs, rhs, .. } => {
            format!("{} {} {}", atom(lhs), op.sigil(), atom(rhs))
        }
        Expr::Ternary {
            cond,
            then_expr,
            else_expr,
            ..
        } => format!(
            "{} ? {} : {}",
            atom(cond),
            atom(then_expr),
            atom(else_expr)
        ),
        Expr::Call { cell, name, args, .. } => match cell {
            Some(c) => format!("{c}.{name}({})", exprs(args)),
            None => format!("{name}({})", exprs(args)),
        },
        Expr::Atomic {
            cell,
            op,
            args,
            with_args,
            ..
        } => {
            let with = if with_args.is_empty() {
                String::new()
            } else {
                let ws = with_args
                    .iter()
                    .map(|(k, v)| format!("{k} = {}", expr(v)))
                    .collect::<Vec<_>>()
                    .join(", ");
                format!(" /*@ with {{ {ws} }} @*/")
            };
            format!("{cell}.{}({}){with}", op.name(), exprs(args))
        }
        Expr::NewAtomic { proto, init, .. } => {
            format!(
                "new AtomicInteger /*@ {} @*/ ({})",
                proto_args(proto),
                expr(init)
            )
        }
    }
}

/// Parenthesizes compound subexpressions; redundant parentheses do not
/// change structure on reparse.
fn atom(e: &Expr) -> String {
    match e {
        Expr::Binary { .. } | Expr::Ternary { .. } => format!("({})", expr(e)),
        _ => expr(e),
    }
}

fn harness(out: &mut String, h: &Harness) {
    out.push_str("/*@ harness\n");
    let args = h
        .ctor_args
        .iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "    instance {}({args});", h.class);
    for t in &h.threads {
        let holds = match t.holds {
            Some((n, d)) => format!(" holds {n}/{d}"),
            None => String::new(),
        };
        let script = t
            .script
            .iter()
            .map(|op| match op {
                HarnessOp::Call { method, args, .. } => {
                    let a = args
                        .iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(", ");
                    format!("{method}({a})")
                }
                HarnessOp::AccessRead { .. } => "access read".into(),
                HarnessOp::AccessWrite { .. } => "access write".into(),
            })
            .collect::<Vec<_>>()
            .join(", ");
        let _ = writeln!(
            out,
            "    thread \"{}\" role {}{holds}: {script};",
            t.name, t.role
        );
    }
    if let Some(cap) = h.loop_cap {
        let _ = writeln!(out, "    loop_cap {cap};");
    }
    out.push_str("@*/\n");
}
