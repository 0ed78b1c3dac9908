//! Abstract syntax for SVL source files.
//!
//! Specification annotations live in `/*@ ... @*/` comments in the concrete
//! syntax; the lexer strips the markers, so ghost constructs appear here as
//! ordinary nodes. Every declaration and statement carries the source
//! position of its first token for obligation reports.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
    pub harness: Option<Harness>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Type {
    Int,
    Bool,
    Frac,
    Role,
    Resource,
    Void,
    RoleSet,
    Class(String),
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => write!(f, "int"),
            Type::Bool => write!(f, "boolean"),
            Type::Frac => write!(f, "frac"),
            Type::Role => write!(f, "role"),
            Type::Resource => write!(f, "resource"),
            Type::Void => write!(f, "void"),
            Type::RoleSet => write!(f, "Set<role>"),
            Type::Class(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDecl {
    pub name: String,
    /// Ghost class parameters, e.g. `given group (frac -> resource) rinv;`.
    pub givens: Vec<GivenDecl>,
    pub roles: Vec<String>,
    pub roles_span: Span,
    pub ghost_fields: Vec<GhostField>,
    pub fields: Vec<FieldDecl>,
    pub predicates: Vec<PredicateDecl>,
    pub functions: Vec<FunctionDecl>,
    pub methods: Vec<MethodDecl>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GivenDecl {
    /// `given int d` (also used for method-level givens).
    Var { name: String, ty: Type, span: Span },
    /// `given [group] (frac -> resource) rinv` or `given (role,int -> frac) f`.
    Family {
        name: String,
        params: Vec<Type>,
        ret: Type,
        group: bool,
        span: Span,
    },
}

impl GivenDecl {
    pub fn name(&self) -> &str {
        match self {
            GivenDecl::Var { name, .. } | GivenDecl::Family { name, .. } => name,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            GivenDecl::Var { span, .. } | GivenDecl::Family { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GhostField {
    pub name: String,
    pub ty: Type,
    pub final_: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldDecl {
    /// `private AtomicInteger<roles, inv, share, trans, max> sync;`
    Atomic {
        modifiers: Vec<String>,
        name: String,
        proto: ProtoArgs,
        span: Span,
    },
    /// `int x;`
    Data {
        modifiers: Vec<String>,
        name: String,
        ty: Type,
        span: Span,
    },
}

impl FieldDecl {
    pub fn name(&self) -> &str {
        match self {
            FieldDecl::Atomic { name, .. } | FieldDecl::Data { name, .. } => name,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            FieldDecl::Atomic { span, .. } | FieldDecl::Data { span, .. } => *span,
        }
    }
}

/// The four protocol parameters of an atomic cell plus the optional
/// maximum-state expression bounding the cell's feasible values.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoArgs {
    pub roles: String,
    pub inv: String,
    pub share: String,
    pub trans: String,
    pub max: Option<Box<Expr>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateDecl {
    pub name: String,
    pub group: bool,
    pub params: Vec<Param>,
    pub body: ResourceExpr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    pub ret: Type,
    pub params: Vec<Param>,
    /// Statements preceding the return; purity is a wellformedness check.
    pub body: Vec<Stmt>,
    pub ret_expr: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodDecl {
    pub modifiers: Vec<String>,
    pub name: String,
    pub is_constructor: bool,
    pub givens: Vec<Param>,
    pub params: Vec<Param>,
    pub requires: Vec<ResourceExpr>,
    pub ensures: Vec<ResourceExpr>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    VarDecl {
        ty: Type,
        name: String,
        init: Option<Expr>,
        span: Span,
    },
    Assign {
        target: String,
        value: Expr,
        span: Span,
    },
    /// `this.f = e;` — data fields only.
    FieldAssign {
        field: String,
        value: Expr,
        span: Span,
    },
    /// Expression statement: an atomic `set` call.
    ExprStmt { expr: Expr, span: Span },
    If {
        cond: Expr,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
        span: Span,
    },
    While {
        cond: Expr,
        invariants: Vec<ResourceExpr>,
        body: Vec<Stmt>,
        span: Span,
    },
    // Ghost statements.
    GhostDecl {
        ty: Type,
        name: String,
        init: Expr,
        span: Span,
    },
    GhostSet {
        target: String,
        value: Expr,
        span: Span,
    },
    Fold {
        pred: PredRef,
        args: Vec<Expr>,
        span: Span,
    },
    Unfold {
        pred: PredRef,
        args: Vec<Expr>,
        span: Span,
    },
    Assert { cond: Expr, span: Span },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::VarDecl { span, .. }
            | Stmt::Assign { span, .. }
            | Stmt::FieldAssign { span, .. }
            | Stmt::ExprStmt { span, .. }
            | Stmt::If { span, .. }
            | Stmt::While { span, .. }
            | Stmt::GhostDecl { span, .. }
            | Stmt::GhostSet { span, .. }
            | Stmt::Fold { span, .. }
            | Stmt::Unfold { span, .. }
            | Stmt::Assert { span, .. } => *span,
        }
    }
}

/// Reference to a predicate, optionally through an atomic field:
/// `initialized`, `sync.inv`, `sync.handle`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredRef {
    pub cell: Option<String>,
    pub name: String,
}

impl fmt::Display for PredRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.cell {
            Some(c) => write!(f, "{c}.{}", self.name),
            None => write!(f, "{}", self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResourceExpr {
    /// Pure boolean conjunct.
    Pure(Expr),
    /// `PointsTo(this.f, pi, pat)` or `Perm(this.f, pi)` (wildcard value).
    PointsTo {
        recv: Expr,
        field: String,
        frac: Expr,
        value: ValuePat,
        span: Span,
    },
    /// Predicate instance `held(d, p)` / `sync.inv(e)` / `sync.handle(T, d, p)`.
    Pred {
        pred: PredRef,
        args: Vec<PredArg>,
        span: Span,
    },
    SepConj(Box<ResourceExpr>, Box<ResourceExpr>),
    Implies {
        guard: Expr,
        body: Box<ResourceExpr>,
        span: Span,
    },
    /// `(\forall* int i; lo <= i && i < hi; R)`.
    IterStar {
        binder: String,
        range: Expr,
        body: Box<ResourceExpr>,
        span: Span,
    },
    Emp { span: Span },
}

impl ResourceExpr {
    pub fn span(&self) -> Span {
        match self {
            ResourceExpr::Pure(e) => e.span(),
            ResourceExpr::PointsTo { span, .. }
            | ResourceExpr::Pred { span, .. }
            | ResourceExpr::Implies { span, .. }
            | ResourceExpr::IterStar { span, .. }
            | ResourceExpr::Emp { span } => *span,
            ResourceExpr::SepConj(a, _) => a.span(),
        }
    }

    /// Flattens nested separating conjunctions left to right.
    pub fn conjuncts(&self) -> Vec<&ResourceExpr> {
        match self {
            ResourceExpr::SepConj(a, b) => {
                let mut out = a.conjuncts();
                out.extend(b.conjuncts());
                out
            }
            other => vec![other],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredArg {
    Expr(Expr),
    /// `?x`: existential binder (ensures clauses only).
    Bind(String, Span),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValuePat {
    Wildcard(Span),
    Bind(String, Span),
    Expr(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    NotEq,
    And,
    Or,
}

impl BinOp {
    pub fn sigil(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::EqEq => "==",
            BinOp::NotEq => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomicOp {
    Get,
    Set,
    Cas,
}

impl AtomicOp {
    pub fn name(self) -> &'static str {
        match self {
            AtomicOp::Get => "get",
            AtomicOp::Set => "set",
            AtomicOp::Cas => "compareAndSet",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    IntLit(i128, Span),
    BoolLit(bool, Span),
    Var(String, Span),
    /// `this.f` (ghost or data field read).
    Field(String, Span),
    Unary {
        op: UnOp,
        expr: Box<Expr>,
        span: Span,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: Span,
    },
    Ternary {
        cond: Box<Expr>,
        then_expr: Box<Expr>,
        else_expr: Box<Expr>,
        span: Span,
    },
    /// Pure function application: `share(S, c)`, `sync.share(S, c)`,
    /// `trans(T, c, n)`.
    Call {
        cell: Option<String>,
        name: String,
        args: Vec<Expr>,
        span: Span,
    },
    /// `sync.get()`, `sync.set(e)`, `sync.compareAndSet(x, n)`, each with a
    /// ghost-argument `with { ... }` clause.
    Atomic {
        cell: String,
        op: AtomicOp,
        args: Vec<Expr>,
        with_args: Vec<(String, Expr)>,
        span: Span,
    },
    /// `new AtomicInteger<roles, inv, share, trans, max>(v)`.
    NewAtomic { proto: ProtoArgs, init: Box<Expr>, span: Span },
    /// `?x` binder or bare `?` wildcard; legal only inside predicate-instance
    /// arguments and points-to value positions, enforced during resolution.
    Hole(Option<String>, Span),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
    Neg,
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::IntLit(_, s)
            | Expr::BoolLit(_, s)
            | Expr::Var(_, s)
            | Expr::Field(_, s)
            | Expr::Hole(_, s) => *s,
            Expr::Unary { span, .. }
            | Expr::Binary { span, .. }
            | Expr::Ternary { span, .. }
            | Expr::Call { span, .. }
            | Expr::Atomic { span, .. }
            | Expr::NewAtomic { span, .. } => *span,
        }
    }
}

// ----- harness ---------------------------------------------------------------

/// Concrete-execution harness embedded in a source file: one instance, a few
/// threads with straight-line scripts, and exploration bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Harness {
    pub class: String,
    pub ctor_args: Vec<i128>,
    pub threads: Vec<HarnessThread>,
    pub loop_cap: Option<u32>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessThread {
    pub name: String,
    pub role: String,
    /// Initial holding of the protected resource, as `num/den`.
    pub holds: Option<(i128, i128)>,
    pub script: Vec<HarnessOp>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HarnessOp {
    Call { method: String, args: Vec<i128>, span: Span },
    AccessRead { span: Span },
    AccessWrite { span: Span },
}

impl HarnessOp {
    pub fn span(&self) -> Span {
        match self {
            HarnessOp::Call { span, .. }
            | HarnessOp::AccessRead { span }
            | HarnessOp::AccessWrite { span } => *span,
        }
    }
}

/// Zeroes all spans; used by tests asserting structural equality of reparsed
/// programs.
pub fn strip_spans(p: &mut Program) {
    struct Zero;
    impl Zero {
        fn span(&self, s: &mut Span) {
            *s = Span::default();
        }
        fn expr(&self, e: &mut Expr) {
            match e {
                Expr::IntLit(_, s)
                | Expr::BoolLit(_, s)
                | Expr::Var(_, s)
                | Expr::Field(_, s)
                | Expr::Hole(_, s) => self.span(s),
                Expr::Unary { expr, span, .. } => {
                    self.span(span);
                    self.expr(expr);
                }
                Expr::Binary { lhs, rhs, span, .. } => {
                    self.span(span);
                    self.expr(lhs);
                    self.expr(rhs);
                }
                Expr::Ternary {
                    cond,
                    then_expr,
                    else_expr,
                    span,
                } => {
                    self.span(span);
                    self.expr(cond);
                    self.expr(then_expr);
                    self.expr(else_expr);
                }
                Expr::Call { args, span, .. } => {
                    self.span(span);
                    args.iter_mut().for_each(|a| self.expr(a));
                }
                Expr::Atomic {
                    args, with_args, span, ..
                } => {
                    self.span(span);
                    args.iter_mut().for_each(|a| self.expr(a));
                    with_args.iter_mut().for_each(|(_, a)| self.expr(a));
                }
                Expr::NewAtomic { proto, init, span } => {
                    self.span(span);
                    if let Some(m) = &mut proto.max {
                        self.expr(m);
                    }
                    self.expr(init);
                }
            }
        }
        fn res(&self, r: &mut ResourceExpr) {
            match r {
                ResourceExpr::Pure(e) => self.expr(e),
                ResourceExpr::PointsTo {
                    recv,
                    frac,
                    value,
                    span,
                    ..
                } => {
                    self.span(span);
                    self.expr(recv);
                    self.expr(frac);
                    match value {
                        ValuePat::Wildcard(s) | ValuePat::Bind(_, s) => self.span(s),
                        ValuePat::Expr(e) => self.expr(e),
                    }
                }
                ResourceExpr::Pred { args, span, .. } => {
                    self.span(span);
                    for a in args {
                        match a {
                            PredArg::Expr(e) => self.expr(e),
                            PredArg::Bind(_, s) => self.span(s),
                        }
                    }
                }
                ResourceExpr::SepConj(a, b) => {
                    self.res(a);
                    self.res(b);
                }
                ResourceExpr::Implies { guard, body, span } => {
                    self.span(span);
                    self.expr(guard);
                    self.res(body);
                }
                ResourceExpr::IterStar {
                    range, body, span, ..
                } => {
                    self.span(span);
                    self.expr(range);
                    self.res(body);
                }
                ResourceExpr::Emp { span } => self.span(span),
            }
        }
        fn stmt(&self, s: &mut Stmt) {
            match s {
                Stmt::VarDecl { init, span, .. } => {
                    self.span(span);
                    if let Some(e) = init {
                        self.expr(e);
                    }
                }
                Stmt::Assign { value, span, .. }
                | Stmt::FieldAssign { value, span, .. }
                | Stmt::GhostSet {
                    value, span, ..
                } => {
                    self.span(span);
                    self.expr(value);
                }
                Stmt::ExprStmt { expr, span } => {
                    self.span(span);
                    self.expr(expr);
                }
                Stmt::If {
                    cond,
                    then_branch,
                    else_branch,
                    span,
                } => {
                    self.span(span);
                    self.expr(cond);
                    then_branch.iter_mut().for_each(|s| self.stmt(s));
                    else_branch.iter_mut().for_each(|s| self.stmt(s));
                }
                Stmt::While {
                    cond,
                    invariants,
                    body,
                    span,
                } => {
                    self.span(span);
                    self.expr(cond);
                    invariants.iter_mut().for_each(|r| self.res(r));
                    body.iter_mut().for_each(|s| self.stmt(s));
                }
                Stmt::GhostDecl { init, span, .. } => {
                    self.span(span);
                    self.expr(init);
                }
                Stmt::Fold { args, span, .. } | Stmt::Unfold { args, span, .. } => {
                    self.span(span);
                    args.iter_mut().for_each(|a| self.expr(a));
                }
                Stmt::Assert { cond, span } => {
                    self.span(span);
                    self.expr(cond);
                }
            }
        }
    }
    let z = Zero;
    for c in &mut p.classes {
        z.span(&mut c.span);
        z.span(&mut c.roles_span);
        for g in &mut c.givens {
            match g {
                GivenDecl::Var { span, .. } | GivenDecl::Family { span, .. } => z.span(span),
            }
        }
        for f in &mut c.ghost_fields {
            z.span(&mut f.span);
        }
        for f in &mut c.fields {
            match f {
                FieldDecl::Atomic { proto, span, .. } => {
                    z.span(span);
                    if let Some(m) = &mut proto.max {
                        z.expr(m);
                    }
                }
                FieldDecl::Data { span, .. } => z.span(span),
            }
        }
        for pr in &mut c.predicates {
            z.span(&mut pr.span);
            pr.params.iter_mut().for_each(|p| z.span(&mut p.span));
            z.res(&mut pr.body);
        }
        for fun in &mut c.functions {
            z.span(&mut fun.span);
            fun.params.iter_mut().for_each(|p| z.span(&mut p.span));
            fun.body.iter_mut().for_each(|s| z.stmt(s));
            z.expr(&mut fun.ret_expr);
        }
        for m in &mut c.methods {
            z.span(&mut m.span);
            m.givens.iter_mut().for_each(|p| z.span(&mut p.span));
            m.params.iter_mut().for_each(|p| z.span(&mut p.span));
            m.requires.iter_mut().for_each(|r| z.res(r));
            m.ensures.iter_mut().for_each(|r| z.res(r));
            m.body.iter_mut().for_each(|s| z.stmt(s));
        }
    }
    if let Some(h) = &mut p.harness {
        z.span(&mut h.span);
        for t in &mut h.threads {
            z.span(&mut t.span);
            for op in &mut t.script {
                match op {
                    HarnessOp::Call { span, .. }
                    | HarnessOp::AccessRead { span }
                    | HarnessOp::AccessWrite { span } => z.span(span),
                }
            }
        }
    }
}
