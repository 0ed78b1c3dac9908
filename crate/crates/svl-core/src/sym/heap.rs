//! Symbolic heaps: permission chunks plus pure constraints.
//!
//! A heap is a multiset of chunks — fractional points-to facts and scaled
//! predicate instances — together with the pure constraints in force and the
//! symbol table that owns every symbol the state mentions. Group predicates
//! carry their final fraction argument as the chunk scale, so instances of
//! one family combine additively and a zero scale is the empty resource.

use super::solver::{LinCon, PureSet, Rel};
use super::term::{FracTerm, LinTerm, SymTable};
use std::fmt::Write as _;

/// Chunk argument: integer term, fraction term, or role constant.
#[derive(Debug, Clone, PartialEq)]
pub enum ArgV {
    Int(LinTerm),
    Frac(FracTerm),
    Role(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Chunk {
    /// `recv.field |-[perm]-> value`
    PointsTo {
        recv: LinTerm,
        field: String,
        perm: FracTerm,
        value: LinTerm,
    },
    /// `name(args)` at `recv`, held at fraction `scale`.
    Pred {
        recv: LinTerm,
        name: String,
        args: Vec<ArgV>,
        scale: FracTerm,
    },
}

impl Chunk {
    pub fn perm(&self) -> &FracTerm {
        match self {
            Chunk::PointsTo { perm, .. } => perm,
            Chunk::Pred { scale, .. } => scale,
        }
    }

    fn set_perm(&mut self, p: FracTerm) {
        match self {
            Chunk::PointsTo { perm, .. } => *perm = p,
            Chunk::Pred { scale, .. } => *scale = p,
        }
    }

    pub fn render(&self, syms: &SymTable) -> String {
        match self {
            Chunk::PointsTo {
                recv,
                field,
                perm,
                value,
            } => format!(
                "{}.{field} |-[{}]-> {}",
                recv.render(syms),
                perm.render(syms),
                value.render(syms)
            ),
            Chunk::Pred {
                recv,
                name,
                args,
                scale,
            } => {
                let mut s = String::new();
                let _ = write!(s, "{}.{name}(", recv.render(syms));
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    match a {
                        ArgV::Int(t) => s.push_str(&t.render(syms)),
                        ArgV::Frac(f) => s.push_str(&f.render(syms)),
                        ArgV::Role(r) => s.push_str(r),
                    }
                }
                let _ = write!(s, ") scale {}", scale.render(syms));
                s
            }
        }
    }
}

/// The verifier's state: chunks, pure constraints, and the symbol table.
/// `inconsistent` marks states whose specification contradicts itself; every
/// later obligation on such a state holds vacuously but is reported with a
/// warning by the engine.
#[derive(Debug, Clone)]
pub struct HeapState {
    pub chunks: Vec<Chunk>,
    pub pure: PureSet,
    pub syms: SymTable,
    pub inconsistent: bool,
}

impl HeapState {
    pub fn empty() -> Self {
        HeapState {
            chunks: Vec::new(),
            pure: PureSet::new(),
            syms: SymTable::new(),
            inconsistent: false,
        }
    }

    pub fn render_chunks(&self) -> String {
        if self.chunks.is_empty() {
            return "emp".into();
        }
        self.chunks
            .iter()
            .map(|c| c.render(&self.syms))
            .collect::<Vec<_>>()
            .join(" ** ")
    }

    pub fn assume(&mut self, c: LinCon) {
        self.pure.assume(c);
    }

    /// Provable equality of integer terms under the current constraints.
    pub fn int_eq(&self, a: &LinTerm, b: &LinTerm) -> bool {
        if a == b {
            return true;
        }
        let con = LinCon::new(a.sub(b), Rel::Eq, &self.syms);
        self.pure.entails_con(&self.syms, &con)
    }

    fn same_identity(&self, a: &Chunk, b: &Chunk) -> bool {
        match (a, b) {
            (
                Chunk::PointsTo {
                    recv: r1, field: f1, ..
                },
                Chunk::PointsTo {
                    recv: r2, field: f2, ..
                },
            ) => f1 == f2 && self.int_eq(r1, r2),
            (
                Chunk::Pred {
                    recv: r1,
                    name: n1,
                    args: a1,
                    ..
                },
                Chunk::Pred {
                    recv: r2,
                    name: n2,
                    args: a2,
                    ..
                },
            ) => {
                n1 == n2
                    && a1.len() == a2.len()
                    && self.int_eq(r1, r2)
                    && a1.iter().zip(a2).all(|(x, y)| self.args_eq(x, y))
            }
            _ => false,
        }
    }

    pub fn args_eq(&self, a: &ArgV, b: &ArgV) -> bool {
        match (a, b) {
            (ArgV::Int(x), ArgV::Int(y)) => self.int_eq(x, y),
            (ArgV::Frac(x), ArgV::Frac(y)) => self.pure.frac_eq(&self.syms, x, y),
            (ArgV::Role(x), ArgV::Role(y)) => x == y,
            _ => false,
        }
    }

    /// Adds a chunk, merging into an existing chunk of the same identity
    /// when the scales combine structurally. Merging points-to chunks
    /// assumes value equality: two fractional views of one location always
    /// describe the same contents.
    pub fn add_chunk(&mut self, chunk: Chunk) {
        if self.pure.frac_is_zero(&self.syms, chunk.perm()) {
            return;
        }
        for i in 0..self.chunks.len() {
            if self.same_identity(&self.chunks[i], &chunk) {
                let combined = self.chunks[i].perm().add(chunk.perm());
                if let (
                    Chunk::PointsTo { value: v1, .. },
                    Chunk::PointsTo { value: v2, .. },
                ) = (&self.chunks[i], &chunk)
                {
                    let eq = LinCon::new(v1.sub(v2), Rel::Eq, &self.syms);
                    self.pure.assume(eq);
                }
                self.chunks[i].set_perm(combined);
                return;
            }
        }
        self.chunks.push(chunk);
    }

    /// Removes provably-zero chunks and re-merges duplicates. Idempotent.
    pub fn normalize(&mut self) {
        let old = std::mem::take(&mut self.chunks);
        for c in old {
            self.add_chunk(c);
        }
        if !self.pure.is_sat(&self.syms) {
            self.inconsistent = true;
        }
    }

    /// Permission-sum wellformedness: no location's permissions exceed 1 and
    /// the pure part is satisfiable. Returns a description of the first
    /// violation. Chunks above full permission mark the state inconsistent.
    pub fn wellformed_violation(&mut self) -> Option<String> {
        if !self.pure.is_sat(&self.syms) {
            self.inconsistent = true;
            return Some("pure constraints are unsatisfiable".into());
        }
        for i in 0..self.chunks.len() {
            if let Chunk::PointsTo { perm, .. } = &self.chunks[i] {
                let gt1 = self
                    .pure
                    .frac_con(&self.syms, perm, &FracTerm::one(), Rel::Gt)
                    .map(|con| self.pure.entails_con(&self.syms, &con))
                    .unwrap_or(false);
                if gt1 {
                    let what = self.chunks[i].render(&self.syms);
                    self.inconsistent = true;
                    return Some(format!("permission above 1 at {what}"));
                }
            }
        }
        None
    }

    /// Finds a consumable chunk matching the demand and removes `scale` of
    /// it. `None` argument positions are bound rather than matched. Returns
    /// the matched chunk's arguments on success.
    pub fn take_pred(
        &mut self,
        recv: &LinTerm,
        name: &str,
        args: &[Option<ArgV>],
        scale: &FracTerm,
    ) -> Result<Vec<ArgV>, TakeFail> {
        if self.pure.frac_is_zero(&self.syms, scale) {
            // Zero of anything is the empty resource.
            let bound = args.iter().flatten().cloned().collect();
            return Ok(bound);
        }
        let mut considered = Vec::new();
        for i in 0..self.chunks.len() {
            let Chunk::Pred {
                recv: cr,
                name: cn,
                args: ca,
                scale: cs,
            } = &self.chunks[i]
            else {
                continue;
            };
            if cn != name || ca.len() != args.len() || !self.int_eq(cr, recv) {
                continue;
            }
            considered.push(self.chunks[i].render(&self.syms));
            let (ca, cs) = (ca.clone(), cs.clone());
            let args_match = args
                .iter()
                .zip(&ca)
                .all(|(want, have)| want.as_ref().map(|w| self.args_eq(w, have)).unwrap_or(true));
            if !args_match {
                continue;
            }
            if !self.pure.frac_le(&self.syms, scale, &cs) {
                continue;
            }
            let Some(residual) = cs.sub_exact(scale) else {
                continue;
            };
            if self.pure.frac_is_zero(&self.syms, &residual) {
                self.chunks.remove(i);
            } else {
                self.chunks[i].set_perm(residual);
            }
            return Ok(ca);
        }
        Err(TakeFail { considered })
    }

    /// Indices of all chunks matching a predicate demand (open positions
    /// match anything), in insertion order. Used for backtracking over
    /// existential argument candidates.
    pub fn pred_candidates(
        &self,
        recv: &LinTerm,
        name: &str,
        args: &[Option<ArgV>],
        scale: &FracTerm,
    ) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, c) in self.chunks.iter().enumerate() {
            let Chunk::Pred {
                recv: cr,
                name: cn,
                args: ca,
                scale: cs,
            } = c
            else {
                continue;
            };
            if cn != name || ca.len() != args.len() || !self.int_eq(cr, recv) {
                continue;
            }
            let args_match = args
                .iter()
                .zip(ca)
                .all(|(want, have)| want.as_ref().map(|w| self.args_eq(w, have)).unwrap_or(true));
            if !args_match || !self.pure.frac_le(&self.syms, scale, cs) {
                continue;
            }
            if cs.sub_exact(scale).is_none() {
                continue;
            }
            out.push(i);
        }
        out
    }

    /// Takes `scale` of the chunk at a known index (from `pred_candidates`),
    /// returning the chunk's arguments.
    pub fn take_pred_at(&mut self, idx: usize, scale: &FracTerm) -> Vec<ArgV> {
        let Chunk::Pred { args, scale: cs, .. } = &self.chunks[idx] else {
            panic!("take_pred_at on a points-to chunk");
        };
        let args = args.clone();
        let residual = cs.sub_exact(scale).expect("candidate checked");
        if self.pure.frac_is_zero(&self.syms, &residual) {
            self.chunks.remove(idx);
        } else {
            self.chunks[idx].set_perm(residual);
        }
        args
    }

    /// Removes `perm` of a points-to chunk for the location, returning the
    /// value term stored there.
    pub fn take_points_to(
        &mut self,
        recv: &LinTerm,
        field: &str,
        perm: &FracTerm,
    ) -> Result<LinTerm, TakeFail> {
        let mut considered = Vec::new();
        for i in 0..self.chunks.len() {
            let Chunk::PointsTo {
                recv: cr,
                field: cf,
                perm: cp,
                value,
            } = &self.chunks[i]
            else {
                continue;
            };
            if cf != field || !self.int_eq(cr, recv) {
                continue;
            }
            considered.push(self.chunks[i].render(&self.syms));
            let (cp, value) = (cp.clone(), value.clone());
            if !self.pure.frac_le(&self.syms, perm, &cp) {
                continue;
            }
            let Some(residual) = cp.sub_exact(perm) else {
                continue;
            };
            if self.pure.frac_is_zero(&self.syms, &residual) {
                self.chunks.remove(i);
            } else {
                self.chunks[i].set_perm(residual);
            }
            return Ok(value);
        }
        Err(TakeFail { considered })
    }

    /// Read access to a location: any positive permission, value returned,
    /// chunk untouched.
    pub fn read_points_to(&self, recv: &LinTerm, field: &str) -> Result<LinTerm, TakeFail> {
        let mut considered = Vec::new();
        for c in &self.chunks {
            if let Chunk::PointsTo {
                recv: cr,
                field: cf,
                value,
                ..
            } = c
            {
                if cf == field && self.int_eq(cr, recv) {
                    return Ok(value.clone());
                }
                if cf == field {
                    considered.push(c.render(&self.syms));
                }
            }
        }
        Err(TakeFail { considered })
    }
}

/// A failed chunk match, carrying the candidates that were considered.
#[derive(Debug, Clone)]
pub struct TakeFail {
    pub considered: Vec<String>,
}

impl TakeFail {
    pub fn detail(&self) -> String {
        if self.considered.is_empty() {
            "no matching chunk in the heap".into()
        } else {
            format!("candidates considered: {}", self.considered.join("; "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perm;
    use crate::sym::term::Sort;

    fn state() -> (HeapState, LinTerm) {
        let mut st = HeapState::empty();
        let x = st.syms.fresh("x", Sort::Ref);
        (st, LinTerm::sym(x))
    }

    #[test]
    fn produce_merges_points_to_permissions() {
        // {x.f |-1/2-> 5} plus another half is the full permission.
        let (mut st, x) = state();
        let half = FracTerm::Lit(perm(1, 2));
        st.add_chunk(Chunk::PointsTo {
            recv: x.clone(),
            field: "f".into(),
            perm: half.clone(),
            value: LinTerm::konst(5),
        });
        st.add_chunk(Chunk::PointsTo {
            recv: x.clone(),
            field: "f".into(),
            perm: half,
            value: LinTerm::konst(5),
        });
        assert_eq!(st.chunks.len(), 1);
        assert_eq!(st.chunks[0].perm(), &FracTerm::one());
    }

    #[test]
    fn zero_permission_chunk_is_erased() {
        let (mut st, x) = state();
        st.add_chunk(Chunk::Pred {
            recv: x,
            name: "inv".into(),
            args: vec![],
            scale: FracTerm::zero(),
        });
        assert!(st.chunks.is_empty());
    }

    #[test]
    fn consume_splits_permission() {
        // consume({x.f |-1-> 5}, half) leaves half and reads 5.
        let (mut st, x) = state();
        st.add_chunk(Chunk::PointsTo {
            recv: x.clone(),
            field: "f".into(),
            perm: FracTerm::one(),
            value: LinTerm::konst(5),
        });
        let half = FracTerm::Lit(perm(1, 2));
        let v = st.take_points_to(&x, "f", &half).expect("split");
        assert_eq!(v, LinTerm::konst(5));
        assert_eq!(st.chunks[0].perm(), &half);
    }

    #[test]
    fn consume_insufficient_permission_fails() {
        let (mut st, x) = state();
        st.add_chunk(Chunk::PointsTo {
            recv: x.clone(),
            field: "f".into(),
            perm: FracTerm::Lit(perm(1, 2)),
            value: LinTerm::konst(5),
        });
        let fail = st.take_points_to(&x, "f", &FracTerm::one()).unwrap_err();
        assert_eq!(fail.considered.len(), 1);
    }

    #[test]
    fn exact_pred_consume_leaves_emp() {
        let (mut st, x) = state();
        st.add_chunk(Chunk::Pred {
            recv: x.clone(),
            name: "P".into(),
            args: vec![ArgV::Int(LinTerm::konst(3))],
            scale: FracTerm::one(),
        });
        st.take_pred(
            &x,
            "P",
            &[Some(ArgV::Int(LinTerm::konst(3)))],
            &FracTerm::one(),
        )
        .expect("exact match");
        assert!(st.chunks.is_empty());
    }

    #[test]
    fn merged_values_are_assumed_equal() {
        let (mut st, x) = state();
        let v = st.syms.fresh("v", Sort::Int);
        let half = FracTerm::Lit(perm(1, 2));
        st.add_chunk(Chunk::PointsTo {
            recv: x.clone(),
            field: "f".into(),
            perm: half.clone(),
            value: LinTerm::konst(7),
        });
        st.add_chunk(Chunk::PointsTo {
            recv: x,
            field: "f".into(),
            perm: half,
            value: LinTerm::sym(v),
        });
        assert_eq!(st.chunks.len(), 1);
        assert!(st.int_eq(&LinTerm::sym(v), &LinTerm::konst(7)));
    }
}
