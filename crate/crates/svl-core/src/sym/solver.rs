//! Decision procedure for the pure fragment: linear arithmetic over the
//! object language's unbounded integers and over fraction symbols, decided by
//! normalization, Fourier-Motzkin elimination, and bounded case-splitting on
//! finitely-ranged variables.
//!
//! The procedure is sound and deliberately incomplete: satisfiability errs
//! towards `true`, entailment towards `false`. Strict integer comparisons are
//! tightened at construction (`t > 0` becomes `t - 1 >= 0`), which recovers
//! integer reasoning for everything the corpus needs without a full integer
//! decision procedure.

use super::term::{FracTerm, LinTerm, Sort, SymId, SymTable};
use crate::Int;
use num_integer::Integer as _;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::collections::BTreeSet;

const MAX_ROWS: usize = 2048;
const MAX_NE_SPLITS: usize = 12;
const MAX_DNF: usize = 64;
const ENUM_RANGE: i64 = 16;

/// Relation of a linear constraint `term REL 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Ge,
    Gt,
    Eq,
    Ne,
}

/// A linear constraint over integer and fraction symbols. `ints` records
/// whether every symbol is integer-sorted, which licenses tightening.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinCon {
    pub term: LinTerm,
    pub rel: Rel,
    pub ints: bool,
}

impl LinCon {
    pub fn new(term: LinTerm, rel: Rel, syms: &SymTable) -> LinCon {
        let ints = term
            .syms()
            .all(|s| matches!(syms.sort(s), Sort::Int | Sort::Bool | Sort::Ref));
        let (term, rel) = if ints && rel == Rel::Gt {
            (term.add_const(-1), Rel::Ge)
        } else {
            (term, rel)
        };
        LinCon { term, rel, ints }
    }

    pub fn truth(v: bool) -> LinCon {
        // 0 >= 0 or -1 >= 0.
        LinCon {
            term: LinTerm::konst(if v { 0 } else { -1 }),
            rel: Rel::Ge,
            ints: true,
        }
    }

    pub fn negate(&self, syms: &SymTable) -> LinCon {
        match self.rel {
            Rel::Ge => LinCon::new(self.term.neg(), Rel::Gt, syms),
            Rel::Gt => LinCon::new(self.term.neg(), Rel::Ge, syms),
            Rel::Eq => LinCon::new(self.term.clone(), Rel::Ne, syms),
            Rel::Ne => LinCon::new(self.term.clone(), Rel::Eq, syms),
        }
    }

    fn subst(&self, var: SymId, value: &Int) -> LinCon {
        let mut term = self.term.clone();
        if let Some(c) = term.coeffs.remove(&var) {
            term.konst += c * value;
        }
        LinCon {
            term,
            rel: self.rel,
            ints: self.ints,
        }
    }
}

/// Boolean formula over linear constraints, used for guards and goals.
#[derive(Debug, Clone)]
pub enum BoolF {
    Lit(bool),
    Atom(LinCon),
    And(Vec<BoolF>),
    Or(Vec<BoolF>),
    Not(Box<BoolF>),
}

impl BoolF {
    pub fn and(mut parts: Vec<BoolF>) -> BoolF {
        parts.retain(|p| !matches!(p, BoolF::Lit(true)));
        if parts.iter().any(|p| matches!(p, BoolF::Lit(false))) {
            return BoolF::Lit(false);
        }
        match parts.len() {
            0 => BoolF::Lit(true),
            1 => parts.pop().unwrap(),
            _ => BoolF::And(parts),
        }
    }

    pub fn or(mut parts: Vec<BoolF>) -> BoolF {
        parts.retain(|p| !matches!(p, BoolF::Lit(false)));
        if parts.iter().any(|p| matches!(p, BoolF::Lit(true))) {
            return BoolF::Lit(true);
        }
        match parts.len() {
            0 => BoolF::Lit(false),
            1 => parts.pop().unwrap(),
            _ => BoolF::Or(parts),
        }
    }

    pub fn not(f: BoolF) -> BoolF {
        match f {
            BoolF::Lit(b) => BoolF::Lit(!b),
            BoolF::Not(inner) => *inner,
            other => BoolF::Not(Box::new(other)),
        }
    }

    /// Disjunctive normal form as conjunctions of constraints; `None` when
    /// the expansion would exceed the size cap.
    pub fn dnf(&self, syms: &SymTable) -> Option<Vec<Vec<LinCon>>> {
        match self {
            BoolF::Lit(true) => Some(vec![vec![]]),
            BoolF::Lit(false) => Some(vec![]),
            BoolF::Atom(c) => Some(vec![vec![c.clone()]]),
            BoolF::Not(inner) => match inner.as_ref() {
                BoolF::Lit(b) => Some(if *b { vec![] } else { vec![vec![]] }),
                BoolF::Atom(c) => Some(vec![vec![c.negate(syms)]]),
                BoolF::And(parts) => {
                    BoolF::or(parts.iter().cloned().map(BoolF::not).collect()).dnf(syms)
                }
                BoolF::Or(parts) => {
                    BoolF::and(parts.iter().cloned().map(BoolF::not).collect()).dnf(syms)
                }
                BoolF::Not(inner2) => inner2.dnf(syms),
            },
            BoolF::Or(parts) => {
                let mut out = Vec::new();
                for p in parts {
                    out.extend(p.dnf(syms)?);
                    if out.len() > MAX_DNF {
                        return None;
                    }
                }
                Some(out)
            }
            BoolF::And(parts) => {
                let mut out: Vec<Vec<LinCon>> = vec![vec![]];
                for p in parts {
                    let sub = p.dnf(syms)?;
                    let mut next = Vec::new();
                    for conj in &out {
                        for s in &sub {
                            let mut merged = conj.clone();
                            merged.extend(s.iter().cloned());
                            next.push(merged);
                            if next.len() > MAX_DNF {
                                return None;
                            }
                        }
                    }
                    out = next;
                }
                Some(out)
            }
        }
    }
}

/// A conjunction of assumed constraints: the pure part of a symbolic heap.
#[derive(Debug, Clone, Default)]
pub struct PureSet {
    pub cons: Vec<LinCon>,
}

impl PureSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assume(&mut self, c: LinCon) {
        // 0 >= 0 carries no information.
        if c.rel == Rel::Ge && c.term.is_const().map(|k| !k.is_negative()).unwrap_or(false) {
            return;
        }
        if !self.cons.contains(&c) {
            self.cons.push(c);
        }
    }

    pub fn assume_all(&mut self, cs: impl IntoIterator<Item = LinCon>) {
        for c in cs {
            self.assume(c);
        }
    }

    pub fn is_sat(&self, syms: &SymTable) -> bool {
        sat(&self.cons, syms, true)
    }

    pub fn sat_with(&self, syms: &SymTable, extra: &[LinCon]) -> bool {
        let mut all = self.cons.clone();
        all.extend(extra.iter().cloned());
        sat(&all, syms, true)
    }

    pub fn entails_con(&self, syms: &SymTable, c: &LinCon) -> bool {
        !self.sat_with(syms, &[c.negate(syms)])
    }

    /// Validity of an arbitrary boolean combination under the assumptions.
    /// Conservative: `false` may mean "outside the fragment".
    pub fn entails(&self, syms: &SymTable, f: &BoolF) -> bool {
        let neg = BoolF::not(f.clone());
        let Some(branches) = neg.dnf(syms) else {
            return false;
        };
        branches.iter().all(|conj| !self.sat_with(syms, conj))
    }

    // ----- fraction queries -------------------------------------------------

    /// Constraint equivalent to `a REL b` over fraction terms, or `None` when
    /// the pair cannot be cleared to a linear form (e.g. mixed symbolic
    /// denominators). Requires denominator positivity to be derivable.
    pub fn frac_con(
        &self,
        syms: &SymTable,
        a: &FracTerm,
        b: &FracTerm,
        rel: Rel,
    ) -> Option<LinCon> {
        let diff = frac_diff(self, syms, a, b)?;
        Some(LinCon::new(diff, rel, syms))
    }

    pub fn frac_le(&self, syms: &SymTable, a: &FracTerm, b: &FracTerm) -> bool {
        if a == b || a.is_lit_zero() {
            return true;
        }
        if let (FracTerm::Lit(x), FracTerm::Lit(y)) = (a, b) {
            return x <= y;
        }
        match self.frac_con(syms, b, a, Rel::Ge) {
            Some(c) => self.entails_con(syms, &c),
            None => false,
        }
    }

    pub fn frac_eq(&self, syms: &SymTable, a: &FracTerm, b: &FracTerm) -> bool {
        if a == b {
            return true;
        }
        if let (FracTerm::Lit(x), FracTerm::Lit(y)) = (a, b) {
            return x == y;
        }
        match self.frac_con(syms, a, b, Rel::Eq) {
            Some(c) => self.entails_con(syms, &c),
            None => false,
        }
    }

    pub fn frac_is_zero(&self, syms: &SymTable, a: &FracTerm) -> bool {
        self.frac_eq(syms, a, &FracTerm::zero())
    }

    /// Literal integer bounds `lo <= v <= hi` derivable from single-variable
    /// constraints, with integer rounding.
    pub fn literal_bounds(&self, syms: &SymTable, v: SymId) -> Option<(i64, i64)> {
        let mut lo: Option<Int> = None;
        let mut hi: Option<Int> = None;
        for c in &self.cons {
            if c.term.coeffs.len() != 1 || !c.term.coeffs.contains_key(&v) {
                continue;
            }
            if !matches!(syms.sort(v), Sort::Int | Sort::Bool) {
                return None;
            }
            let coeff = c.term.coeffs[&v].clone();
            let k = c.term.konst.clone();
            let mut record = |coeff: Int, k: Int| {
                if coeff.is_positive() {
                    let bound = (-k).div_ceil(&coeff);
                    lo = Some(match lo.take() {
                        Some(b) if b >= bound => b,
                        _ => bound,
                    });
                } else {
                    let bound = k.div_floor(&-coeff);
                    hi = Some(match hi.take() {
                        Some(b) if b <= bound => b,
                        _ => bound,
                    });
                }
            };
            match c.rel {
                Rel::Ge => record(coeff, k),
                Rel::Eq => {
                    record(coeff.clone(), k.clone());
                    record(-coeff, -k);
                }
                _ => {}
            }
        }
        match (lo, hi) {
            (Some(l), Some(h)) => Some((i64::try_from(&l).ok()?, i64::try_from(&h).ok()?)),
            _ => None,
        }
    }

    /// Definite ordering between two fraction terms, if derivable.
    pub fn frac_cmp(&self, syms: &SymTable, a: &FracTerm, b: &FracTerm) -> Option<Ordering> {
        if self.frac_eq(syms, a, b) {
            return Some(Ordering::Equal);
        }
        if self.frac_le(syms, a, b) {
            return Some(Ordering::Less);
        }
        if self.frac_le(syms, b, a) {
            return Some(Ordering::Greater);
        }
        None
    }
}

/// Linear integer form of `a - b` scaled by a positive constant, provided the
/// fraction terms share at most one symbolic denominator whose positivity is
/// derivable, and fraction symbols do not mix with symbolic quotients.
fn frac_diff(pure: &PureSet, syms: &SymTable, a: &FracTerm, b: &FracTerm) -> Option<LinTerm> {
    let mut parts: Vec<(i32, FracTerm)> = Vec::new();
    collect_signed(a, 1, &mut parts);
    collect_signed(b, -1, &mut parts);

    let mut den: Option<LinTerm> = None;
    for (_, p) in &parts {
        if let FracTerm::Quot(_, d) = p {
            match &den {
                None => den = Some(d.clone()),
                Some(existing) if existing == d => {}
                Some(_) => return None,
            }
        }
    }
    if let Some(d) = &den {
        // Needed to clear the denominator without flipping the relation.
        let pos = LinCon::new(d.clone(), Rel::Gt, syms);
        if !pure.entails_con(syms, &pos) {
            return None;
        }
        if parts.iter().any(|(_, p)| matches!(p, FracTerm::Sym(_))) {
            return None;
        }
    }

    // Common literal denominator.
    let mut lcm = Int::one();
    for (_, p) in &parts {
        if let FracTerm::Lit(l) = p {
            lcm = lcm.lcm(l.denom());
        }
    }

    let mut out = LinTerm::default();
    for (sign, p) in parts {
        let s = Int::from(sign);
        match p {
            FracTerm::Lit(l) => {
                let scaled = l.numer() * (&lcm / l.denom()) * &s;
                out = match &den {
                    Some(d) => out.add(&d.scale(&scaled)),
                    None => out.add_const(scaled),
                };
            }
            FracTerm::Sym(v) => {
                out = out.add(&LinTerm::sym(v).scale(&(&lcm * &s)));
            }
            FracTerm::Quot(n, _) => {
                out = out.add(&n.scale(&(&lcm * &s)));
            }
            FracTerm::Sum(_) => unreachable!("sums are flattened"),
        }
    }
    Some(out)
}

fn collect_signed(t: &FracTerm, sign: i32, out: &mut Vec<(i32, FracTerm)>) {
    match t {
        FracTerm::Sum(xs) => {
            for x in xs {
                collect_signed(x, sign, out);
            }
        }
        other => out.push((sign, other.clone())),
    }
}

// ----- core satisfiability ---------------------------------------------------

/// Row for Fourier-Motzkin: `term >= 0` or `term > 0`.
#[derive(Debug, Clone)]
struct Row {
    term: LinTerm,
    strict: bool,
}

impl Row {
    fn normalize(mut self) -> Row {
        let mut g = self.term.konst.abs();
        for c in self.term.coeffs.values() {
            g = num_integer::gcd(g, c.abs());
        }
        if g > Int::one() {
            self.term.coeffs = self
                .term
                .coeffs
                .iter()
                .map(|(s, c)| (*s, c / &g))
                .collect();
            self.term.konst = &self.term.konst / &g;
        }
        self
    }
}

/// Conservative satisfiability over the rationals with integer tightening
/// applied at construction. `allow_enum` additionally case-splits variables
/// with small literal ranges, recovering integer-only unsatisfiability.
fn sat(cons: &[LinCon], syms: &SymTable, allow_enum: bool) -> bool {
    let mut rows: Vec<Row> = Vec::new();
    let mut nes: Vec<LinCon> = Vec::new();
    for c in cons {
        match c.rel {
            Rel::Ge => rows.push(Row {
                term: c.term.clone(),
                strict: false,
            }),
            Rel::Gt => rows.push(Row {
                term: c.term.clone(),
                strict: true,
            }),
            Rel::Eq => {
                rows.push(Row {
                    term: c.term.clone(),
                    strict: false,
                });
                rows.push(Row {
                    term: c.term.neg(),
                    strict: false,
                });
            }
            Rel::Ne => nes.push(c.clone()),
        }
    }
    if !nes.is_empty() {
        if nes.len() > MAX_NE_SPLITS {
            return true; // too many disequalities: stay conservative
        }
        let rest: Vec<LinCon> = cons
            .iter()
            .filter(|c| c.rel != Rel::Ne)
            .cloned()
            .collect();
        return split_nes(&rest, &nes, syms, allow_enum);
    }
    if !fm_sat(rows) {
        return false;
    }
    if allow_enum {
        if let Some(false) = enum_refine(cons, syms) {
            return false;
        }
    }
    true
}

fn split_nes(base: &[LinCon], nes: &[LinCon], syms: &SymTable, allow_enum: bool) -> bool {
    let (first, rest) = nes.split_first().expect("nonempty");
    let lo = LinCon::new(first.term.clone(), Rel::Gt, syms);
    let hi = LinCon::new(first.term.neg(), Rel::Gt, syms);
    for side in [lo, hi] {
        let mut cons = base.to_vec();
        cons.push(side);
        cons.extend(rest.iter().cloned());
        if sat(&cons, syms, allow_enum) {
            return true;
        }
    }
    false
}

fn fm_sat(mut rows: Vec<Row>) -> bool {
    let vars: BTreeSet<SymId> = rows
        .iter()
        .flat_map(|r| r.term.syms().collect::<Vec<_>>())
        .collect();
    for v in vars {
        let mut lower = Vec::new(); // positive coefficient on v
        let mut upper = Vec::new(); // negative coefficient on v
        let mut rest = Vec::new();
        for r in rows.drain(..) {
            match r.term.coeffs.get(&v).map(|c| c.is_positive()) {
                Some(true) => lower.push(r),
                Some(false) => upper.push(r),
                None => rest.push(r),
            }
        }
        for l in &lower {
            let a = l.term.coeffs[&v].clone();
            for u in &upper {
                let b = -u.term.coeffs[&v].clone();
                // b·l + a·u eliminates v; both multipliers positive.
                let term = l.term.scale(&b).add(&u.term.scale(&a));
                debug_assert!(!term.coeffs.contains_key(&v));
                rest.push(
                    Row {
                        term,
                        strict: l.strict || u.strict,
                    }
                    .normalize(),
                );
                if rest.len() > MAX_ROWS {
                    return true; // give up conservatively
                }
            }
        }
        rows = rest;
    }
    for r in &rows {
        let k = r.term.is_const().expect("all vars eliminated");
        if k.is_negative() || (r.strict && k.is_zero()) {
            return false;
        }
    }
    true
}

/// Bounded case-splitting on finitely-ranged integer variables. Returns
/// `Some(false)` when integer bound tightening or enumeration refutes every
/// assignment, and `None` when no refinement applies.
fn enum_refine(cons: &[LinCon], syms: &SymTable) -> Option<bool> {
    match find_ranged_var(cons, syms)? {
        RangedVar::Conflict => Some(false),
        RangedVar::Range(v, lo, hi) => {
            let mut any_sat = false;
            let mut val = lo;
            while val <= hi {
                let sub: Vec<LinCon> =
                    cons.iter().map(|c| c.subst(v, &Int::from(val))).collect();
                if sat(&sub, syms, false) {
                    any_sat = true;
                    break;
                }
                val += 1;
            }
            Some(any_sat)
        }
    }
}

enum RangedVar {
    /// Integer-rounded bounds already contradict each other.
    Conflict,
    Range(SymId, i64, i64),
}

fn find_ranged_var(cons: &[LinCon], syms: &SymTable) -> Option<RangedVar> {
    use std::collections::BTreeMap;
    let mut lows: BTreeMap<SymId, Int> = BTreeMap::new();
    let mut highs: BTreeMap<SymId, Int> = BTreeMap::new();
    let mut record = |s: SymId, coeff: Int, k: Int| {
        // coeff·s + k >= 0 with integer rounding.
        if coeff.is_positive() {
            let bound = (-k).div_ceil(&coeff);
            lows.entry(s)
                .and_modify(|b| {
                    if bound > *b {
                        *b = bound.clone();
                    }
                })
                .or_insert(bound);
        } else {
            let bound = k.div_floor(&-coeff);
            highs
                .entry(s)
                .and_modify(|b| {
                    if bound < *b {
                        *b = bound.clone();
                    }
                })
                .or_insert(bound);
        }
    };
    for c in cons {
        if c.term.coeffs.len() != 1 {
            continue;
        }
        let (s, coeff) = c
            .term
            .coeffs
            .iter()
            .next()
            .map(|(s, c)| (*s, c.clone()))
            .expect("single entry");
        if !matches!(syms.sort(s), Sort::Int | Sort::Bool) {
            continue;
        }
        let k = c.term.konst.clone();
        match c.rel {
            Rel::Ge => record(s, coeff, k),
            Rel::Eq => {
                record(s, coeff.clone(), k.clone());
                record(s, -coeff, -k);
            }
            _ => {}
        }
    }
    let mut best: Option<RangedVar> = None;
    for (s, lo) in &lows {
        if let Some(hi) = highs.get(s) {
            if hi < lo {
                return Some(RangedVar::Conflict);
            }
            let (Ok(lo64), Ok(hi64)) = (i64::try_from(lo), i64::try_from(hi)) else {
                continue;
            };
            if best.is_none() && hi64 - lo64 <= ENUM_RANGE {
                best = Some(RangedVar::Range(*s, lo64, hi64));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sym::term::Sort;

    fn ge(t: LinTerm, syms: &SymTable) -> LinCon {
        LinCon::new(t, Rel::Ge, syms)
    }

    #[test]
    fn strict_integer_tightening() {
        // c > 0 entails c - 1 >= 0.
        let mut syms = SymTable::new();
        let c = syms.fresh("c", Sort::Int);
        let mut pure = PureSet::new();
        pure.assume(LinCon::new(LinTerm::sym(c), Rel::Gt, &syms));
        let goal = ge(LinTerm::sym(c).add_const(-1), &syms);
        assert!(pure.entails_con(&syms, &goal));
    }

    #[test]
    fn empty_context_proves_nothing() {
        let mut syms = SymTable::new();
        let c = syms.fresh("c", Sort::Int);
        let pure = PureSet::new();
        let goal = LinCon::new(LinTerm::sym(c), Rel::Gt, &syms);
        assert!(!pure.entails_con(&syms, &goal));
    }

    #[test]
    fn quotient_below_one() {
        // c >= 0, c < num, num = 4 entail c/num < 1.
        let mut syms = SymTable::new();
        let c = syms.fresh("c", Sort::Int);
        let num = syms.fresh("num", Sort::Int);
        let mut pure = PureSet::new();
        pure.assume(ge(LinTerm::sym(c), &syms));
        pure.assume(LinCon::new(
            LinTerm::sym(num).sub(&LinTerm::sym(c)),
            Rel::Gt,
            &syms,
        ));
        pure.assume(LinCon::new(
            LinTerm::sym(num).add_const(-4),
            Rel::Eq,
            &syms,
        ));
        let q = FracTerm::quot(LinTerm::sym(c), LinTerm::sym(num)).unwrap();
        let con = pure
            .frac_con(&syms, &FracTerm::one(), &q, Rel::Gt)
            .expect("clearable");
        assert!(pure.entails_con(&syms, &con));
        // And the ordering query agrees.
        assert!(pure.frac_le(&syms, &q, &FracTerm::one()));
        assert!(!pure.frac_eq(&syms, &q, &FracTerm::one()));
    }

    #[test]
    fn disequality_split() {
        // c >= 0, c <= 1, c != 0 entail c = 1.
        let mut syms = SymTable::new();
        let c = syms.fresh("c", Sort::Int);
        let mut pure = PureSet::new();
        pure.assume(ge(LinTerm::sym(c), &syms));
        pure.assume(ge(LinTerm::sym(c).neg().add_const(1), &syms));
        pure.assume(LinCon::new(LinTerm::sym(c), Rel::Ne, &syms));
        let goal = LinCon::new(LinTerm::sym(c).add_const(-1), Rel::Eq, &syms);
        assert!(pure.entails_con(&syms, &goal));
    }

    #[test]
    fn unsat_detection() {
        let mut syms = SymTable::new();
        let c = syms.fresh("c", Sort::Int);
        let mut pure = PureSet::new();
        pure.assume(ge(LinTerm::sym(c).add_const(-1), &syms)); // c >= 1
        pure.assume(ge(LinTerm::sym(c).neg(), &syms)); // c <= 0
        assert!(!pure.is_sat(&syms));
    }

    #[test]
    fn fraction_symbol_bounds() {
        // 0 <= p <= 1 and p + p <= 1 refutes p > 1/2.
        let mut syms = SymTable::new();
        let p = syms.fresh("p", Sort::Frac);
        let mut pure = PureSet::new();
        let pt = FracTerm::Sym(p);
        let half = FracTerm::Lit(crate::perm(1, 2));
        let sum = pt.add(&pt);
        let le_one = pure
            .frac_con(&syms, &sum, &FracTerm::one(), Rel::Ge)
            .map(|c| LinCon {
                term: c.term.neg(),
                rel: Rel::Ge,
                ints: c.ints,
            })
            .unwrap();
        pure.assume(le_one);
        assert!(pure.frac_le(&syms, &pt, &half));
    }

    #[test]
    fn enumeration_fallback() {
        // 0 <= c <= 3 and 2c = 3 is integer-unsat though rationally sat.
        let mut syms = SymTable::new();
        let c = syms.fresh("c", Sort::Int);
        let mut pure = PureSet::new();
        pure.assume(ge(LinTerm::sym(c), &syms));
        pure.assume(ge(LinTerm::sym(c).neg().add_const(3), &syms));
        pure.assume(LinCon::new(
            LinTerm::sym(c).scale(&Int::from(2)).add_const(-3),
            Rel::Eq,
            &syms,
        ));
        assert!(!pure.is_sat(&syms));
    }
}
