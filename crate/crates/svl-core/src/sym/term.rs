//! Symbolic terms: linear integer terms and fraction terms.
//!
//! Every symbol is identified by a [`SymId`] with a sort. Booleans are
//! integer-sorted symbols constrained to `{0,1}` by whoever creates them;
//! references are opaque integer symbols that only ever meet equality.
//!
//! Fraction terms are kept in a small normal form: literals, opaque fraction
//! symbols, quotients of linear integer terms (`c/num` and friends), and
//! flat sums of those. Quotients with a common denominator combine exactly;
//! anything outside the form stays symbolic and downstream queries answer
//! conservatively.

use crate::perm::FracError;
use crate::{Int, Perm};
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Index of a symbol in a [`SymTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Int,
    Frac,
    Bool,
    Ref,
}

/// Per-verification symbol table. Symbol numbering is deterministic: it
/// follows the order in which execution introduces symbols.
#[derive(Debug, Clone, Default)]
pub struct SymTable {
    entries: Vec<(String, Sort)>,
}

impl SymTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self, name: impl Into<String>, sort: Sort) -> SymId {
        let id = SymId(self.entries.len() as u32);
        self.entries.push((name.into(), sort));
        id
    }

    pub fn name(&self, id: SymId) -> &str {
        &self.entries[id.0 as usize].0
    }

    pub fn sort(&self, id: SymId) -> Sort {
        self.entries[id.0 as usize].1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Linear integer term `k + Σ cᵢ·xᵢ` with arbitrary-precision coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LinTerm {
    pub coeffs: BTreeMap<SymId, Int>,
    pub konst: Int,
}

impl LinTerm {
    pub fn konst(k: impl Into<Int>) -> Self {
        LinTerm {
            coeffs: BTreeMap::new(),
            konst: k.into(),
        }
    }

    pub fn sym(id: SymId) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(id, Int::one());
        LinTerm {
            coeffs,
            konst: Int::zero(),
        }
    }

    pub fn is_const(&self) -> Option<&Int> {
        if self.coeffs.is_empty() {
            Some(&self.konst)
        } else {
            None
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.konst += &other.konst;
        for (s, c) in &other.coeffs {
            let e = out.coeffs.entry(*s).or_insert_with(Int::zero);
            *e += c;
            if e.is_zero() {
                out.coeffs.remove(s);
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&Int::from(-1))
    }

    pub fn scale(&self, k: &Int) -> Self {
        if k.is_zero() {
            return LinTerm::default();
        }
        LinTerm {
            coeffs: self
                .coeffs
                .iter()
                .map(|(s, c)| (*s, c * k))
                .collect(),
            konst: &self.konst * k,
        }
    }

    pub fn add_const(&self, k: impl Into<Int>) -> Self {
        let mut out = self.clone();
        out.konst += k.into();
        out
    }

    pub fn syms(&self) -> impl Iterator<Item = SymId> + '_ {
        self.coeffs.keys().copied()
    }

    /// Divides all coefficients by their common content (gcd), preserving
    /// sign. Used to canonicalize quotient numerators/denominators.
    fn content(&self) -> Int {
        let mut g = self.konst.abs();
        for c in self.coeffs.values() {
            g = num_integer::gcd(g, c.abs());
        }
        g
    }

    pub fn render(&self, syms: &SymTable) -> String {
        if let Some(k) = self.is_const() {
            return k.to_string();
        }
        let mut out = String::new();
        let mut first = true;
        for (s, c) in &self.coeffs {
            let name = syms.name(*s);
            if first {
                if c.is_one() {
                    let _ = write!(out, "{name}");
                } else if *c == Int::from(-1) {
                    let _ = write!(out, "-{name}");
                } else {
                    let _ = write!(out, "{c}*{name}");
                }
                first = false;
            } else if c.is_negative() {
                if *c == Int::from(-1) {
                    let _ = write!(out, " - {name}");
                } else {
                    let _ = write!(out, " - {}*{name}", -c.clone());
                }
            } else if c.is_one() {
                let _ = write!(out, " + {name}");
            } else {
                let _ = write!(out, " + {c}*{name}");
            }
        }
        if !self.konst.is_zero() {
            if self.konst.is_negative() {
                let _ = write!(out, " - {}", -self.konst.clone());
            } else {
                let _ = write!(out, " + {}", self.konst);
            }
        }
        out
    }

    fn is_atom(&self) -> bool {
        (self.coeffs.len() == 1 && self.konst.is_zero() && self.coeffs.values().all(|c| c.is_one()))
            || self.coeffs.is_empty()
    }
}

/// Normalized symbolic fraction term.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FracTerm {
    Lit(Perm),
    Sym(SymId),
    /// `num/den`; introduced only where `den > 0` has been established.
    Quot(LinTerm, LinTerm),
    /// Flat sum, at least two addends, no nested sums, at most one literal.
    Sum(Vec<FracTerm>),
}

impl FracTerm {
    pub fn zero() -> Self {
        FracTerm::Lit(Perm::zero())
    }

    pub fn one() -> Self {
        FracTerm::Lit(Perm::one())
    }

    pub fn is_lit_zero(&self) -> bool {
        matches!(self, FracTerm::Lit(p) if p.is_zero())
    }

    /// Builds a canonical quotient: constant quotients fold into literals,
    /// common integer content is divided out, zero numerators collapse.
    pub fn quot(num: LinTerm, den: LinTerm) -> Result<Self, FracError> {
        if num.is_const().map(Int::is_zero).unwrap_or(false) {
            return Ok(FracTerm::zero());
        }
        if let (Some(n), Some(d)) = (num.is_const(), den.is_const()) {
            return Ok(FracTerm::Lit(Perm::new(n.clone(), d.clone())?));
        }
        let g = num_integer::gcd(num.content(), den.content());
        if g > Int::one() {
            let mut n = num.clone();
            let mut d = den.clone();
            n.coeffs = n.coeffs.iter().map(|(s, c)| (*s, c / &g)).collect();
            n.konst = &n.konst / &g;
            d.coeffs = d.coeffs.iter().map(|(s, c)| (*s, c / &g)).collect();
            d.konst = &d.konst / &g;
            if n == d {
                return Ok(FracTerm::one());
            }
            return Ok(FracTerm::Quot(n, d));
        }
        if num == den {
            return Ok(FracTerm::one());
        }
        Ok(FracTerm::Quot(num, den))
    }

    /// Structural addition. Literals and same-denominator quotients combine
    /// exactly; everything else becomes a flat sum.
    pub fn add(&self, other: &Self) -> Self {
        if self.is_lit_zero() {
            return other.clone();
        }
        if other.is_lit_zero() {
            return self.clone();
        }
        let mut parts = Vec::new();
        self.collect(&mut parts);
        other.collect(&mut parts);
        Self::rebuild(parts)
    }

    fn collect(&self, out: &mut Vec<FracTerm>) {
        match self {
            FracTerm::Sum(xs) => out.extend(xs.iter().cloned()),
            t => out.push(t.clone()),
        }
    }

    fn rebuild(mut parts: Vec<FracTerm>) -> FracTerm {
        // Fold literals together while the sum stays in range; merge
        // quotients over a shared denominator.
        let mut lit: Option<Perm> = None;
        let mut quots: Vec<(LinTerm, LinTerm)> = Vec::new();
        let mut rest: Vec<FracTerm> = Vec::new();
        parts.retain(|p| !p.is_lit_zero());
        for p in parts.drain(..) {
            match p {
                FracTerm::Lit(l) => {
                    lit = Some(match lit.take() {
                        None => l,
                        Some(acc) => match acc.add(&l) {
                            Ok(s) => s,
                            Err(_) => {
                                rest.push(FracTerm::Lit(acc));
                                l
                            }
                        },
                    });
                }
                FracTerm::Quot(n, d) => {
                    if let Some((en, _)) = quots.iter_mut().find(|(_, ed)| *ed == d) {
                        *en = en.add(&n);
                    } else {
                        quots.push((n, d));
                    }
                }
                other => rest.push(other),
            }
        }
        let mut out: Vec<FracTerm> = Vec::new();
        if let Some(l) = lit {
            if !l.is_zero() {
                out.push(FracTerm::Lit(l));
            }
        }
        for (n, d) in quots {
            match FracTerm::quot(n, d) {
                Ok(q) if q.is_lit_zero() => {}
                Ok(q) => out.push(q),
                Err(_) => {}
            }
        }
        out.extend(rest);
        match out.len() {
            0 => FracTerm::zero(),
            1 => out.pop().unwrap(),
            _ => {
                out.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
                FracTerm::Sum(out)
            }
        }
    }

    /// Exact structural subtraction `self - other`, `None` when the pair is
    /// outside the supported shape. Callers establish `other <= self` first.
    pub fn sub_exact(&self, other: &Self) -> Option<Self> {
        if self == other {
            return Some(FracTerm::zero());
        }
        if other.is_lit_zero() {
            return Some(self.clone());
        }
        match (self, other) {
            (FracTerm::Lit(a), FracTerm::Lit(b)) => a.sub(b).ok().map(FracTerm::Lit),
            (FracTerm::Quot(n1, d1), FracTerm::Quot(n2, d2)) if d1 == d2 => {
                FracTerm::quot(n1.sub(n2), d1.clone()).ok()
            }
            (FracTerm::Quot(n, d), FracTerm::Lit(b)) => {
                let num = n.scale(b.denom()).sub(&d.scale(b.numer()));
                FracTerm::quot(num, d.scale(b.denom())).ok()
            }
            (FracTerm::Lit(a), FracTerm::Quot(n, d)) => {
                let num = d.scale(a.numer()).sub(&n.scale(a.denom()));
                FracTerm::quot(num, d.scale(a.denom())).ok()
            }
            (FracTerm::Sum(xs), y) => {
                // Cancel one addend that matches exactly, or retry against
                // each addend structurally.
                if let Some(pos) = xs.iter().position(|x| x == y) {
                    let mut rest = xs.clone();
                    rest.remove(pos);
                    return Some(Self::rebuild(rest));
                }
                for (i, x) in xs.iter().enumerate() {
                    if let Some(diff) = x.sub_exact(y) {
                        let mut rest = xs.clone();
                        rest.remove(i);
                        rest.push(diff);
                        return Some(Self::rebuild(rest));
                    }
                }
                None
            }
            _ => None,
        }
    }

    pub fn syms(&self, out: &mut Vec<SymId>) {
        match self {
            FracTerm::Lit(_) => {}
            FracTerm::Sym(s) => out.push(*s),
            FracTerm::Quot(n, d) => {
                out.extend(n.syms());
                out.extend(d.syms());
            }
            FracTerm::Sum(xs) => {
                for x in xs {
                    x.syms(out);
                }
            }
        }
    }

    pub fn render(&self, syms: &SymTable) -> String {
        match self {
            FracTerm::Lit(p) => p.to_string(),
            FracTerm::Sym(s) => syms.name(*s).to_string(),
            FracTerm::Quot(n, d) => {
                let ns = if n.is_atom() {
                    n.render(syms)
                } else {
                    format!("({})", n.render(syms))
                };
                let ds = if d.is_atom() {
                    d.render(syms)
                } else {
                    format!("({})", d.render(syms))
                };
                format!("{ns}/{ds}")
            }
            FracTerm::Sum(xs) => xs
                .iter()
                .map(|x| x.render(syms))
                .collect::<Vec<_>>()
                .join(" + "),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm;

    #[test]
    fn quot_folds_constants_and_content() {
        let mut t = SymTable::new();
        let n = t.fresh("num", Sort::Int);
        let q = FracTerm::quot(LinTerm::konst(2), LinTerm::konst(4)).unwrap();
        assert_eq!(q, FracTerm::Lit(perm(1, 2)));
        let q2 = FracTerm::quot(LinTerm::sym(n).scale(&Int::from(2)), LinTerm::sym(n).scale(&Int::from(2))).unwrap();
        assert_eq!(q2, FracTerm::one());
        let q3 = FracTerm::quot(LinTerm::konst(0), LinTerm::sym(n)).unwrap();
        assert!(q3.is_lit_zero());
    }

    #[test]
    fn same_denominator_arithmetic() {
        let mut t = SymTable::new();
        let num = t.fresh("num", Sort::Int);
        let c = t.fresh("c", Sort::Int);
        let den = LinTerm::sym(num);
        let a = FracTerm::quot(LinTerm::sym(c), den.clone()).unwrap();
        let b = FracTerm::quot(LinTerm::sym(c).add_const(-1), den.clone()).unwrap();
        let d = a.sub_exact(&b).unwrap();
        assert_eq!(d, FracTerm::quot(LinTerm::konst(1), den.clone()).unwrap());
        assert_eq!(d.render(&t), "1/num");
        let s = b.add(&FracTerm::quot(LinTerm::konst(1), den).unwrap());
        assert_eq!(s, a);
    }

    #[test]
    fn sum_cancellation() {
        let mut t = SymTable::new();
        let p = t.fresh("p", Sort::Frac);
        let s = FracTerm::Sym(p).add(&FracTerm::Lit(perm(1, 3)));
        let back = s.sub_exact(&FracTerm::Sym(p)).unwrap();
        assert_eq!(back, FracTerm::Lit(perm(1, 3)));
    }

    #[test]
    fn render_linear() {
        let mut t = SymTable::new();
        let c = t.fresh("c", Sort::Int);
        let n = t.fresh("num", Sort::Int);
        let term = LinTerm::sym(c).add_const(-1);
        assert_eq!(term.render(&t), "c - 1");
        let q = FracTerm::quot(term, LinTerm::sym(n)).unwrap();
        assert_eq!(q.render(&t), "(c - 1)/num");
    }
}
