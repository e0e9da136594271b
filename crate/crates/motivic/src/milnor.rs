//! The Milnor basis of the mod-2 motivic Steenrod algebra over an
//! algebraically closed field of characteristic zero.
//!
//! Basis elements are written P^R for a finite sequence R = (r_1, r_2, ...)
//! of non-negative integers; P^R is dual to the monomial
//! tau^{-sum floor(r_i/2)} zeta_1^{r_1} zeta_2^{r_2} ... of the dual algebra.
//! Products are computed by enumerating Milnor matrices with mod-2
//! multinomial coefficients; the power of tau attached to each output term
//! is forced by homogeneity of the bidegree.
//!
//! An independent oracle (`dual_pairing_product`) recomputes small products
//! by expanding the comultiplication of the dual algebra and reading off the
//! pairing, without touching the matrix enumeration.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;
use smallvec::SmallVec;
use thiserror::Error;

use crate::grading::{Bidegree, TauCoeff};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MilnorError {
    /// A matrix term with odd multinomial coefficient demanded a negative
    /// power of tau.  This contradicts homogeneity and signals a bug.
    #[error("negative tau exponent {0} in product of {1} and {2}")]
    NegativeTauExponent(i32, String, String),
    #[error("oracle refused: total degree {0} above bound {1}")]
    OracleBound(i32, i32),
}

/// A Milnor basis element P^R, stored with trailing zeros trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MilnorElt(SmallVec<[u32; 4]>);

impl MilnorElt {
    pub fn new(mut r: SmallVec<[u32; 4]>) -> Self {
        while r.last() == Some(&0) {
            r.pop();
        }
        MilnorElt(r)
    }

    pub fn from_slice(r: &[u32]) -> Self {
        Self::new(SmallVec::from_slice(r))
    }

    pub fn unit() -> Self {
        MilnorElt(SmallVec::new())
    }

    pub fn is_unit(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// Bidegree (sum r_i (2^i - 1), sum floor(r_i (2^i - 1) / 2)).
    pub fn bidegree(&self) -> Bidegree {
        let mut p: i64 = 0;
        let mut w: i64 = 0;
        for (idx, &r) in self.0.iter().enumerate() {
            let i = idx as u32 + 1;
            let d = (1i64 << i) - 1;
            p += r as i64 * d;
            w += (r as i64 * d) / 2;
        }
        Bidegree::new(p as i32, w as i32)
    }

    /// The May filtration v(R) = sum over i, k of i * a_{ik}, where
    /// r_i = sum_k a_{ik} 2^k is the binary expansion of r_i.
    pub fn may_filtration(&self) -> i32 {
        self.0
            .iter()
            .enumerate()
            .map(|(idx, &r)| (idx as i32 + 1) * r.count_ones() as i32)
            .sum()
    }

    /// sum floor(r_i / 2): the tau-denominator of the dual basis monomial.
    fn floor_half_sum(&self) -> i64 {
        self.0.iter().map(|&r| (r / 2) as i64).sum()
    }
}

impl PartialOrd for MilnorElt {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Ordered by length, then lexicographically; this is the enumeration order.
impl Ord for MilnorElt {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl fmt::Display for MilnorElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P(")?;
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{r}")?;
        }
        write!(f, ")")
    }
}

/// A finite F_2[tau]-combination of Milnor basis elements.
///
/// Motivic elements are homogeneous: each term's bidegree plus its
/// coefficient's tau shift (0, k) equals `bidegree`.  Classical-mode
/// elements carry weight 0 everywhere and only the topological degree is
/// meaningful, so only the p-component is asserted here; full homogeneity
/// is checked by the motivic test suites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SteenrodElt {
    terms: BTreeMap<MilnorElt, TauCoeff>,
    bidegree: Bidegree,
}

impl SteenrodElt {
    pub fn zero(bidegree: Bidegree) -> Self {
        SteenrodElt {
            terms: BTreeMap::new(),
            bidegree,
        }
    }

    pub fn single(elt: MilnorElt, coeff: TauCoeff) -> Self {
        let mut bidegree = elt.bidegree();
        if let TauCoeff::Tau(k) = coeff {
            bidegree = bidegree + Bidegree::new(0, k as i32);
        }
        let mut out = SteenrodElt::zero(bidegree);
        out.add_term(elt, coeff);
        out
    }

    pub fn unit() -> Self {
        Self::single(MilnorElt::unit(), TauCoeff::ONE)
    }

    pub fn bidegree(&self) -> Bidegree {
        self.bidegree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MilnorElt, TauCoeff)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, elt: &MilnorElt) -> TauCoeff {
        self.terms.get(elt).copied().unwrap_or(TauCoeff::Zero)
    }

    /// XOR a term in.  Equal coefficients on the same basis element cancel.
    pub fn add_term(&mut self, elt: MilnorElt, coeff: TauCoeff) {
        let TauCoeff::Tau(_) = coeff else { return };
        debug_assert_eq!(elt.bidegree().p, self.bidegree.p, "degree mismatch");
        match self.terms.entry(elt) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(e) => {
                debug_assert_eq!(*e.get(), coeff, "same basis element, two tau powers");
                e.remove();
            }
        }
    }

    pub fn add(&mut self, other: &SteenrodElt) {
        for (m, c) in other.terms() {
            self.add_term(m.clone(), c);
        }
    }

    /// Multiply every coefficient by tau^k, shifting the bidegree by (0, k).
    pub fn scale_tau(&self, k: u32) -> SteenrodElt {
        let mut out = SteenrodElt::zero(self.bidegree + Bidegree::new(0, k as i32));
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c.mul(TauCoeff::Tau(k)));
        }
        out
    }

    /// True if every term's bidegree plus its tau shift equals `bidegree`.
    pub fn is_homogeneous(&self) -> bool {
        self.terms.iter().all(|(m, c)| match c {
            TauCoeff::Zero => false,
            TauCoeff::Tau(k) => m.bidegree() + Bidegree::new(0, *k as i32) == self.bidegree,
        })
    }
}

impl fmt::Display for SteenrodElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match c {
                TauCoeff::Tau(0) => write!(f, "{m}")?,
                TauCoeff::Tau(1) => write!(f, "tau {m}")?,
                TauCoeff::Tau(k) => write!(f, "tau^{k} {m}")?,
                TauCoeff::Zero => unreachable!(),
            }
        }
        Ok(())
    }
}

/// One topological degree of the Milnor basis: the elements in enumeration
/// order, an index lookup, and cached weights.
pub struct BasisSlice {
    pub elts: Vec<MilnorElt>,
    pub index: HashMap<MilnorElt, usize>,
    pub weights: Vec<i32>,
}

impl BasisSlice {
    pub fn len(&self) -> usize {
        self.elts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elts.is_empty()
    }
}

/// Sparse table of right multiplication by a fixed P^S on a fixed source
/// degree: for each source basis index, the sorted target indices with odd
/// coefficient.  Tau exponents are not stored; homogeneity recovers them
/// from source and target weights, and the mod-2 support is the same in
/// motivic and classical mode.
pub struct MulTable {
    pub cols: Vec<Vec<u32>>,
    pub target_degree: i32,
}

type Expansion = HashMap<(MilnorElt, MilnorElt), i64>;

/// Basis enumeration and product tables, memoized and shareable across
/// threads.  Memo state never affects results.
pub struct MilnorAlgebra {
    basis: DashMap<i32, Arc<BasisSlice>>,
    tables: DashMap<(MilnorElt, i32), Arc<MulTable>>,
    expansions: DashMap<MilnorElt, Arc<Expansion>>,
    oracle_bound: i32,
}

impl Default for MilnorAlgebra {
    fn default() -> Self {
        Self::new()
    }
}

impl MilnorAlgebra {
    pub const DEFAULT_ORACLE_BOUND: i32 = 14;

    pub fn new() -> Self {
        MilnorAlgebra {
            basis: DashMap::new(),
            tables: DashMap::new(),
            expansions: DashMap::new(),
            oracle_bound: Self::DEFAULT_ORACLE_BOUND,
        }
    }

    pub fn with_oracle_bound(bound: i32) -> Self {
        let mut a = Self::new();
        a.oracle_bound = bound;
        a
    }

    /// All canonical R of topological degree p, ordered by length then
    /// lexicographically.
    pub fn basis(&self, p: i32) -> Arc<BasisSlice> {
        if let Some(b) = self.basis.get(&p) {
            return b.clone();
        }
        let mut elts = Vec::new();
        if p >= 0 {
            let mut current: SmallVec<[u32; 4]> = SmallVec::new();
            enumerate_rec(p, 1, &mut current, &mut elts);
            elts.sort();
        }
        let index = elts
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let weights = elts.iter().map(|e| e.bidegree().w).collect();
        let slice = Arc::new(BasisSlice {
            elts,
            index,
            weights,
        });
        self.basis.entry(p).or_insert(slice).clone()
    }

    /// Basis of degree p, filtered to weight w when given.
    pub fn enumerate_basis(&self, p: i32, w: Option<i32>) -> Vec<MilnorElt> {
        let slice = self.basis(p);
        match w {
            None => slice.elts.clone(),
            Some(w) => slice
                .elts
                .iter()
                .filter(|e| e.bidegree().w == w)
                .cloned()
                .collect(),
        }
    }

    /// The motivic Milnor product P^R P^S.
    pub fn product(&self, r: &MilnorElt, s: &MilnorElt) -> SteenrodElt {
        let total = r.bidegree() + s.bidegree();
        let mut out = SteenrodElt::zero(total);
        let w_in = total.w;
        multiply_into(r, s, &mut |t| {
            let u = w_in - t.bidegree().w;
            if u < 0 {
                panic!(
                    "{}",
                    MilnorError::NegativeTauExponent(u, r.to_string(), s.to_string())
                );
            }
            out.add_term(t, TauCoeff::Tau(u as u32));
        });
        debug_assert!(out.is_homogeneous());
        out
    }

    /// Product of two homogeneous elements.
    pub fn product_elts(&self, a: &SteenrodElt, b: &SteenrodElt) -> SteenrodElt {
        let mut out = SteenrodElt::zero(a.bidegree() + b.bidegree());
        for (r, cr) in a.terms() {
            for (s, cs) in b.terms() {
                let TauCoeff::Tau(k) = cr.mul(cs) else {
                    continue;
                };
                for (t, ct) in self.product(r, s).terms() {
                    out.add_term(t.clone(), ct.mul(TauCoeff::Tau(k)));
                }
            }
        }
        out
    }

    /// Right-multiplication table by P^S on source degree a.
    pub fn mul_table(&self, s: &MilnorElt, a: i32) -> Arc<MulTable> {
        let key = (s.clone(), a);
        if let Some(t) = self.tables.get(&key) {
            return t.clone();
        }
        let src = self.basis(a);
        let target_degree = a + s.bidegree().p;
        let dst = self.basis(target_degree);
        let mut cols = Vec::with_capacity(src.len());
        for r in &src.elts {
            let mut col: Vec<u32> = Vec::new();
            multiply_into(r, s, &mut |t| {
                col.push(dst.index[&t] as u32);
            });
            col.sort_unstable();
            cols.push(col);
        }
        let table = Arc::new(MulTable { cols, target_degree });
        self.tables.entry(key).or_insert(table).clone()
    }

    /// Independent product oracle through the dual algebra: expands the
    /// comultiplication of the dual monomial of every candidate target and
    /// reads off the coefficient of (dual of R) tensor (dual of S).
    pub fn dual_pairing_product(
        &self,
        r: &MilnorElt,
        s: &MilnorElt,
    ) -> Result<SteenrodElt, MilnorError> {
        let total = r.bidegree() + s.bidegree();
        if total.p > self.oracle_bound {
            return Err(MilnorError::OracleBound(total.p, self.oracle_bound));
        }
        let mut out = SteenrodElt::zero(total);
        let key = (r.clone(), s.clone());
        for t in self.basis(total.p).elts.iter() {
            let exp = self.expansion(t);
            if let Some(&e) = exp.get(&key) {
                let c = e + r.floor_half_sum() + s.floor_half_sum() - t.floor_half_sum();
                assert!(c >= 0, "negative pairing exponent for {t}");
                out.add_term(t.clone(), TauCoeff::Tau(c as u32));
            }
        }
        Ok(out)
    }

    /// Comultiplication of the dual monomial zeta^T, expanded in bare zeta
    /// monomials, keyed by the (left, right) exponent sequences; presence in
    /// the map means odd coefficient, the value is the tau exponent of the
    /// term (possibly negative before dual-basis normalization).
    fn expansion(&self, t: &MilnorElt) -> Arc<Expansion> {
        if let Some(e) = self.expansions.get(t) {
            return e.clone();
        }
        let mut acc: Expansion = HashMap::new();
        acc.insert((MilnorElt::unit(), MilnorElt::unit()), 0);
        for (idx, &tk) in t.entries().iter().enumerate() {
            let k = idx + 1;
            for _ in 0..tk {
                acc = expansion_mul_zeta(&acc, k);
            }
        }
        let arc = Arc::new(acc);
        self.expansions.entry(t.clone()).or_insert(arc).clone()
    }
}

/// Multiply an expansion by the comultiplication of zeta_k, which is
/// sum_{i=0..k} tau^{-2^{i-1}} zeta_{k-i}^{2^i} (x) zeta_i with the tau power
/// present only for 0 < i < k (zeta^2 = tau * (tau^{-1} zeta^2) in the dual
/// algebra, so even zeta powers cost inverse powers of tau).
fn expansion_mul_zeta(acc: &Expansion, k: usize) -> Expansion {
    let mut out: Expansion = HashMap::with_capacity(acc.len() * (k + 1));
    for ((u, v), &e) in acc {
        for i in 0..=k {
            let mut nu: SmallVec<[u32; 4]> = SmallVec::from_slice(u.entries());
            let mut nv: SmallVec<[u32; 4]> = SmallVec::from_slice(v.entries());
            let mut ne = e;
            if i < k {
                let pos = k - i;
                while nu.len() < pos {
                    nu.push(0);
                }
                nu[pos - 1] += 1u32 << i;
            }
            if i > 0 {
                while nv.len() < i {
                    nv.push(0);
                }
                nv[i - 1] += 1;
                if i < k {
                    ne -= 1i64 << (i - 1);
                }
            }
            let key = (MilnorElt::new(nu), MilnorElt::new(nv));
            match out.entry(key) {
                std::collections::hash_map::Entry::Vacant(en) => {
                    en.insert(ne);
                }
                std::collections::hash_map::Entry::Occupied(en) => {
                    assert_eq!(*en.get(), ne, "inhomogeneous dual expansion");
                    en.remove();
                }
            }
        }
    }
    out
}

fn enumerate_rec(
    remaining: i32,
    pos: u32,
    current: &mut SmallVec<[u32; 4]>,
    out: &mut Vec<MilnorElt>,
) {
    if remaining == 0 {
        out.push(MilnorElt::new(current.clone()));
        return;
    }
    let d = (1i64 << pos) - 1;
    if d > remaining as i64 {
        return;
    }
    for r in 0..=(remaining as i64 / d) {
        current.push(r as u32);
        enumerate_rec(remaining - (r as i64 * d) as i32, pos + 1, current, out);
        current.pop();
    }
}

/// State of the Milnor matrix enumeration for one product.
struct MatrixEnum<'a, F: FnMut(MilnorElt)> {
    r: &'a MilnorElt,
    cols: usize,
    rows: usize,
    /// Remaining column budgets s_j - (entries placed so far in column j).
    rem: SmallVec<[u64; 8]>,
    /// Per-diagonal OR of placed entries; an overlap means b(X) is even.
    masks: SmallVec<[u64; 16]>,
    /// Per-diagonal sums t_n.
    t: SmallVec<[u64; 16]>,
    emit: &'a mut F,
}

impl<F: FnMut(MilnorElt)> MatrixEnum<'_, F> {
    fn place(&mut self, n: usize, value: u64) -> bool {
        if self.masks[n] & value != 0 {
            return false;
        }
        self.masks[n] |= value;
        self.t[n] += value;
        true
    }

    fn unplace(&mut self, n: usize, value: u64) {
        self.masks[n] &= !value;
        self.t[n] -= value;
    }

    /// Enumerate entries of row i (1-based), from column `j` down to the
    /// remainder entry x_{i0}; `left` is what remains of r_i.
    fn row(&mut self, i: usize, j: usize, left: u64) {
        if j == 0 {
            if left != 0 {
                if !self.place(i, left) {
                    return;
                }
                self.next_row(i);
                self.unplace(i, left);
            } else {
                self.next_row(i);
            }
            return;
        }
        let step = 1u64 << j;
        let max = std::cmp::min(left / step, self.rem[j - 1]);
        for x in 0..=max {
            if x == 0 {
                self.row(i, j - 1, left);
                continue;
            }
            self.rem[j - 1] -= x;
            if self.place(i + j, x) {
                self.row(i, j - 1, left - x * step);
                self.unplace(i + j, x);
            }
            self.rem[j - 1] += x;
        }
    }

    fn next_row(&mut self, i: usize) {
        if i == self.rows {
            self.finish();
            return;
        }
        let ri = self.r.entries()[i] as u64;
        self.row(i + 1, self.cols, ri);
    }

    /// All rows placed; row 0 takes the remaining column budgets.
    fn finish(&mut self) {
        let mut placed: SmallVec<[usize; 8]> = SmallVec::new();
        let mut ok = true;
        for j in 1..=self.cols {
            let v = self.rem[j - 1];
            if v != 0 {
                if !self.place(j, v) {
                    ok = false;
                    break;
                }
                placed.push(j);
            }
        }
        if ok {
            let mut seq: SmallVec<[u32; 4]> = SmallVec::new();
            for n in 1..self.t.len() {
                seq.push(self.t[n] as u32);
            }
            (self.emit)(MilnorElt::new(seq));
        }
        for &j in placed.iter().rev() {
            let v = self.rem[j - 1];
            self.unplace(j, v);
        }
    }
}

/// Enumerate the Milnor matrices of P^R P^S, calling `emit` with T(X) for
/// every matrix X whose multinomial coefficient b(X) is odd.
///
/// Entries x_{ij} satisfy the row condition sum_j 2^j x_{ij} = r_i (i >= 1)
/// and the column condition sum_{i>=0} x_{ij} = s_j (j >= 1), with
/// t_n = sum_{i+j=n} x_{ij}.  b(X) is odd exactly when the entries on every
/// diagonal i + j = n are pairwise binary-disjoint, checked incrementally.
fn multiply_into(r: &MilnorElt, s: &MilnorElt, emit: &mut impl FnMut(MilnorElt)) {
    let rows = r.entries().len();
    let cols = s.entries().len();
    let ndiag = rows + cols + 1;
    let mut st = MatrixEnum {
        r,
        cols,
        rows,
        rem: s.entries().iter().map(|&x| x as u64).collect(),
        masks: smallvec::smallvec![0; ndiag],
        t: smallvec::smallvec![0; ndiag],
        emit,
    };
    st.next_row(0);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: &[u32]) -> MilnorElt {
        MilnorElt::from_slice(r)
    }

    #[test]
    fn bidegrees() {
        assert_eq!(m(&[]).bidegree(), Bidegree::new(0, 0));
        assert_eq!(m(&[0, 1]).bidegree(), Bidegree::new(3, 1));
        assert_eq!(m(&[2]).bidegree(), Bidegree::new(2, 1));
        assert_eq!(m(&[1, 1]).bidegree(), Bidegree::new(4, 1));
    }

    #[test]
    fn may_filtration() {
        assert_eq!(m(&[]).may_filtration(), 0);
        assert_eq!(m(&[3]).may_filtration(), 2);
        // single entry 2^j at position i has filtration i
        assert_eq!(m(&[0, 4]).may_filtration(), 2);
        assert_eq!(m(&[0, 0, 1]).may_filtration(), 3);
    }

    #[test]
    fn enumerate() {
        let alg = MilnorAlgebra::new();
        assert_eq!(alg.enumerate_basis(0, None), vec![m(&[])]);
        assert_eq!(alg.enumerate_basis(3, None), vec![m(&[3]), m(&[0, 1])]);
        assert_eq!(alg.enumerate_basis(2, Some(1)), vec![m(&[2])]);
    }

    #[test]
    fn products_match_known_relations() {
        let alg = MilnorAlgebra::new();
        // Sq1 Sq1 = 0
        assert!(alg.product(&m(&[1]), &m(&[1])).is_zero());
        // Sq2 Sq2 = tau Sq3 Sq1 = tau P(1,1)
        let p = alg.product(&m(&[2]), &m(&[2]));
        assert_eq!(p, SteenrodElt::single(m(&[1, 1]), TauCoeff::Tau(1)));
        // Sq1 Sq2 = Sq3
        let p = alg.product(&m(&[1]), &m(&[2]));
        assert_eq!(p, SteenrodElt::single(m(&[3]), TauCoeff::ONE));
        // Sq2 Sq1 = P(3) + P(0,1)
        let p = alg.product(&m(&[2]), &m(&[1]));
        let mut expect = SteenrodElt::single(m(&[3]), TauCoeff::ONE);
        expect.add_term(m(&[0, 1]), TauCoeff::ONE);
        assert_eq!(p, expect);
        // Sq3 Sq1 = P(1,1)
        let p = alg.product(&m(&[3]), &m(&[1]));
        assert_eq!(p, SteenrodElt::single(m(&[1, 1]), TauCoeff::ONE));
    }

    #[test]
    fn unit_products() {
        let alg = MilnorAlgebra::new();
        let x = m(&[0, 2]);
        assert_eq!(
            alg.product(&MilnorElt::unit(), &x),
            SteenrodElt::single(x.clone(), TauCoeff::ONE)
        );
        assert_eq!(
            alg.product(&x, &MilnorElt::unit()),
            SteenrodElt::single(x, TauCoeff::ONE)
        );
    }

    #[test]
    fn mul_table_matches_product() {
        let alg = MilnorAlgebra::new();
        for a in 0..=8 {
            for sdeg in 0..=6 {
                for s in alg.basis(sdeg).elts.iter() {
                    let table = alg.mul_table(s, a);
                    let dst = alg.basis(table.target_degree);
                    let src = alg.basis(a);
                    for (ci, r) in src.elts.iter().enumerate() {
                        let p = alg.product(r, s);
                        let mut expect: Vec<u32> =
                            p.terms().map(|(t, _)| dst.index[t] as u32).collect();
                        expect.sort_unstable();
                        assert_eq!(table.cols[ci], expect);
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_agrees_on_examples() {
        let alg = MilnorAlgebra::new();
        assert!(alg
            .dual_pairing_product(&m(&[1]), &m(&[1]))
            .unwrap()
            .is_zero());
        assert_eq!(
            alg.dual_pairing_product(&MilnorElt::unit(), &m(&[5])).unwrap(),
            SteenrodElt::single(m(&[5]), TauCoeff::ONE)
        );
        assert_eq!(
            alg.dual_pairing_product(&m(&[2]), &m(&[2])).unwrap(),
            SteenrodElt::single(m(&[1, 1]), TauCoeff::Tau(1))
        );
    }

    #[test]
    fn oracle_agrees_with_matrices_up_to_degree_10() {
        let alg = MilnorAlgebra::new();
        for total in 0..=10 {
            for a in 0..=total {
                let b = total - a;
                for r in alg.basis(a).elts.iter() {
                    for s in alg.basis(b).elts.iter() {
                        let lhs = alg.product(r, s);
                        let rhs = alg.dual_pairing_product(r, s).unwrap();
                        assert_eq!(lhs, rhs, "product mismatch for {r} * {s}");
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_refuses_above_bound() {
        let alg = MilnorAlgebra::with_oracle_bound(6);
        let err = alg.dual_pairing_product(&m(&[7]), &m(&[7])).unwrap_err();
        assert_eq!(err, MilnorError::OracleBound(14, 6));
    }

    #[test]
    fn associativity_small() {
        let alg = MilnorAlgebra::new();
        for total in 0..=9 {
            for a in 0..=total {
                for b in 0..=(total - a) {
                    let c = total - a - b;
                    for x in alg.basis(a).elts.iter() {
                        for y in alg.basis(b).elts.iter() {
                            for z in alg.basis(c).elts.iter() {
                                let xy = alg.product(x, y);
                                let yz = alg.product(y, z);
                                let zc = SteenrodElt::single(z.clone(), TauCoeff::ONE);
                                let xc = SteenrodElt::single(x.clone(), TauCoeff::ONE);
                                let left = alg.product_elts(&xy, &zc);
                                let right = alg.product_elts(&xc, &yz);
                                assert_eq!(left, right, "assoc fails on {x},{y},{z}");
                            }
                        }
                    }
                }
            }
        }
    }

    /// Every term of P^R P^S lies at least as deep in the filtration by
    /// powers of the augmentation ideal: v(T) >= v(R) + v(S).  This is what
    /// makes v a multiplicative filtration, and equality picks out the
    /// associated-graded part of the product.
    #[test]
    fn may_filtration_multiplicative() {
        let alg = MilnorAlgebra::new();
        for total in 0..=12 {
            for a in 0..=total {
                let b = total - a;
                for r in alg.basis(a).elts.iter() {
                    for s in alg.basis(b).elts.iter() {
                        let bound = r.may_filtration() + s.may_filtration();
                        let mut graded_part = 0usize;
                        for (t, _) in alg.product(r, s).terms() {
                            assert!(t.may_filtration() >= bound, "{r} * {s} -> {t}");
                            if t.may_filtration() == bound {
                                graded_part += 1;
                            }
                        }
                        let _ = graded_part;
                    }
                }
            }
        }
    }
}
