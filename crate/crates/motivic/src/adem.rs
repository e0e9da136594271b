//! The admissible-monomial presentation of the motivic Steenrod algebra:
//! motivic Adem rewriting and conversion to and from the Milnor basis.
//!
//! Sq^{2k} has bidegree (2k, k) and Sq^{2k-1} has bidegree (2k-1, k-1).  For
//! a < 2b the motivic Adem relation reads
//!
//!   Sq^a Sq^b = sum_c binom(b-1-c, a-2c) tau^? Sq^{a+b-c} Sq^c
//!
//! where the tau exponent is 0 or 1, appearing exactly when a and b are even
//! and c is odd; the rewriter recomputes the exponent from weight
//! homogeneity and asserts it equals the parity rule.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;

use crate::grading::{Bidegree, TauCoeff};
use crate::linalg::{MonomialMatrix, Reduction, WeightedBasis};
use crate::milnor::{MilnorAlgebra, MilnorElt, SteenrodElt};

/// Bidegree of a single Sq^a, a >= 0 (Sq^0 is the unit).
pub fn sq_bidegree(a: u32) -> Bidegree {
    Bidegree::new(a as i32, (a / 2) as i32)
}

pub fn word_bidegree(word: &[u32]) -> Bidegree {
    word.iter()
        .fold(Bidegree::ZERO, |d, &a| d + sq_bidegree(a))
}

/// True iff a_i >= 2 a_{i+1} for all i.
pub fn is_admissible(word: &[u32]) -> bool {
    word.windows(2).all(|p| p[0] >= 2 * p[1])
}

fn binom_odd(n: i64, k: i64) -> bool {
    if k < 0 || n < 0 || k > n {
        return false;
    }
    (n as u64) & (k as u64) == k as u64
}

/// A word Sq^{a_1} ... Sq^{a_k} with a scalar coefficient; not necessarily
/// admissible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqWord {
    pub word: Vec<u32>,
    pub coeff: TauCoeff,
}

impl SqWord {
    pub fn new(word: Vec<u32>) -> Self {
        assert!(word.iter().all(|&a| a >= 1));
        SqWord {
            word,
            coeff: TauCoeff::ONE,
        }
    }

    pub fn bidegree(&self) -> Bidegree {
        let mut d = word_bidegree(&self.word);
        if let TauCoeff::Tau(k) = self.coeff {
            d = d + Bidegree::new(0, k as i32);
        }
        d
    }
}

/// A homogeneous combination of admissible words with tau coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibleElt {
    terms: BTreeMap<Vec<u32>, TauCoeff>,
    bidegree: Bidegree,
}

impl AdmissibleElt {
    pub fn zero(bidegree: Bidegree) -> Self {
        AdmissibleElt {
            terms: BTreeMap::new(),
            bidegree,
        }
    }

    pub fn single(word: Vec<u32>, coeff: TauCoeff) -> Self {
        assert!(is_admissible(&word));
        let mut d = word_bidegree(&word);
        if let TauCoeff::Tau(k) = coeff {
            d = d + Bidegree::new(0, k as i32);
        }
        let mut out = AdmissibleElt::zero(d);
        out.add_term(word, coeff);
        out
    }

    pub fn unit() -> Self {
        Self::single(Vec::new(), TauCoeff::ONE)
    }

    pub fn bidegree(&self) -> Bidegree {
        self.bidegree
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, TauCoeff)> {
        self.terms.iter().map(|(w, &c)| (w, c))
    }

    pub fn add_term(&mut self, word: Vec<u32>, coeff: TauCoeff) {
        let TauCoeff::Tau(k) = coeff else { return };
        debug_assert!(is_admissible(&word));
        debug_assert_eq!(
            word_bidegree(&word) + Bidegree::new(0, k as i32),
            self.bidegree
        );
        match self.terms.entry(word) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(e) => {
                e.remove();
            }
        }
    }
}

impl fmt::Display for AdmissibleElt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (word, c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match c {
                TauCoeff::Tau(0) => {}
                TauCoeff::Tau(1) => write!(f, "tau ")?,
                TauCoeff::Tau(k) => write!(f, "tau^{k} ")?,
                TauCoeff::Zero => unreachable!(),
            }
            if word.is_empty() {
                write!(f, "1")?;
            } else {
                for (i, a) in word.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "Sq{a}")?;
                }
            }
        }
        Ok(())
    }
}

struct ConversionSlice {
    reduction: Reduction,
    words: Vec<Vec<u32>>,
}

/// Adem rewriting and the two change-of-basis maps, with memoized relation
/// and conversion tables.
pub struct AdemAlgebra {
    milnor: Arc<MilnorAlgebra>,
    relations: DashMap<(u32, u32), Arc<Vec<(Vec<u32>, u32)>>>,
    admissible: DashMap<i32, Arc<Vec<Vec<u32>>>>,
    conversions: DashMap<i32, Arc<ConversionSlice>>,
}

impl AdemAlgebra {
    pub fn new(milnor: Arc<MilnorAlgebra>) -> Self {
        AdemAlgebra {
            milnor,
            relations: DashMap::new(),
            admissible: DashMap::new(),
            conversions: DashMap::new(),
        }
    }

    pub fn milnor(&self) -> &Arc<MilnorAlgebra> {
        &self.milnor
    }

    /// The right side of the Adem relation for Sq^a Sq^b, a < 2b, as words
    /// with tau exponents.  Panics if the parity rule for the tau exponent
    /// disagrees with weight homogeneity; that would be a bug, not bad input.
    pub fn relation(&self, a: u32, b: u32) -> Arc<Vec<(Vec<u32>, u32)>> {
        debug_assert!(a < 2 * b);
        if let Some(r) = self.relations.get(&(a, b)) {
            return r.clone();
        }
        let lhs = sq_bidegree(a) + sq_bidegree(b);
        let mut out: Vec<(Vec<u32>, u32)> = Vec::new();
        for c in 0..=(a / 2) {
            if !binom_odd(b as i64 - 1 - c as i64, a as i64 - 2 * c as i64) {
                continue;
            }
            let word: Vec<u32> = if c == 0 {
                vec![a + b]
            } else {
                vec![a + b - c, c]
            };
            let parity_exp = u32::from(a % 2 == 0 && b % 2 == 0 && c % 2 == 1);
            let hom_exp = lhs.w - word_bidegree(&word).w;
            assert!(
                hom_exp == parity_exp as i32,
                "Adem tau exponent mismatch at ({a},{b},{c}): parity {parity_exp}, homogeneity {hom_exp}"
            );
            out.push((word, parity_exp));
        }
        let arc = Arc::new(out);
        self.relations.entry((a, b)).or_insert(arc).clone()
    }

    /// Rewrite the leftmost inadmissible adjacent pair until admissible.
    pub fn reduce(&self, x: &SqWord) -> AdmissibleElt {
        let mut out = AdmissibleElt::zero(x.bidegree());
        let mut work: Vec<(Vec<u32>, TauCoeff)> = vec![(x.word.clone(), x.coeff)];
        while let Some((word, coeff)) = work.pop() {
            if coeff.is_zero() {
                continue;
            }
            match (0..word.len().saturating_sub(1)).find(|&i| word[i] < 2 * word[i + 1]) {
                None => out.add_term(word, coeff),
                Some(i) => {
                    let rel = self.relation(word[i], word[i + 1]);
                    for (mid, exp) in rel.iter() {
                        let mut w = Vec::with_capacity(word.len() + mid.len());
                        w.extend_from_slice(&word[..i]);
                        w.extend_from_slice(mid);
                        w.extend_from_slice(&word[i + 2..]);
                        work.push((w, coeff.mul(TauCoeff::Tau(*exp))));
                    }
                }
            }
        }
        out
    }

    /// Product of admissible elements: concatenate and rewrite.
    pub fn product(&self, x: &AdmissibleElt, y: &AdmissibleElt) -> AdmissibleElt {
        let mut out = AdmissibleElt::zero(x.bidegree() + y.bidegree());
        for (wx, cx) in x.terms() {
            for (wy, cy) in y.terms() {
                let coeff = cx.mul(cy);
                if coeff.is_zero() {
                    continue;
                }
                let mut word = wx.clone();
                word.extend_from_slice(wy);
                let reduced = self.reduce(&SqWord { word, coeff });
                for (w, c) in reduced.terms() {
                    out.add_term(w.clone(), c);
                }
            }
        }
        out
    }

    /// Admissible words of topological degree p, deterministic order.
    pub fn admissible_basis(&self, p: i32) -> Arc<Vec<Vec<u32>>> {
        if let Some(b) = self.admissible.get(&p) {
            return b.clone();
        }
        let mut out = Vec::new();
        if p >= 0 {
            let mut word = Vec::new();
            admissible_rec(p as u32, u32::MAX, &mut word, &mut out);
            out.sort();
        }
        let arc = Arc::new(out);
        self.admissible.entry(p).or_insert(arc).clone()
    }

    /// Expand one admissible word in the Milnor basis: Sq^a maps to P^(a)
    /// and the word multiplies out left to right.
    pub fn word_to_milnor(&self, word: &[u32]) -> SteenrodElt {
        let mut acc = SteenrodElt::unit();
        for &a in word {
            let next = SteenrodElt::single(MilnorElt::from_slice(&[a]), TauCoeff::ONE);
            acc = self.milnor.product_elts(&acc, &next);
        }
        acc
    }

    pub fn admissible_to_milnor(&self, x: &AdmissibleElt) -> SteenrodElt {
        let mut out = SteenrodElt::zero(x.bidegree());
        for (word, c) in x.terms() {
            let TauCoeff::Tau(k) = c else { continue };
            let expanded = self.word_to_milnor(word).scale_tau(k);
            out.add(&expanded);
        }
        out
    }

    fn conversion(&self, p: i32) -> Arc<ConversionSlice> {
        if let Some(c) = self.conversions.get(&p) {
            return c.clone();
        }
        let milnor_basis = self.milnor.basis(p);
        let words = self.admissible_basis(p);
        assert_eq!(
            milnor_basis.len(),
            words.len(),
            "basis size mismatch in degree {p}"
        );
        // Chain-direction weights are negated so that the matrix convention
        // (entry exponent = row weight - column weight >= 0) holds.
        let row_weights = WeightedBasis(milnor_basis.weights.iter().map(|&w| -w).collect());
        let col_weights = WeightedBasis(
            words
                .iter()
                .map(|w| -word_bidegree(w).w)
                .collect(),
        );
        let mut m = MonomialMatrix::new(row_weights, col_weights);
        for (j, word) in words.iter().enumerate() {
            for (r, _) in self.word_to_milnor(word).terms() {
                m.set(milnor_basis.index[r], j)
                    .expect("conversion matrix homogeneous");
            }
        }
        let reduction = m.reduce();
        assert_eq!(reduction.rank(), words.len(), "conversion not invertible");
        assert!(
            reduction.pivots.iter().all(|p| p.exponent == 0),
            "conversion matrix has a non-unit invariant factor"
        );
        let slice = Arc::new(ConversionSlice {
            reduction,
            words: words.as_ref().clone(),
        });
        self.conversions.entry(p).or_insert(slice).clone()
    }

    /// Inverse change of basis, by a solve against the expansion matrix of
    /// all admissible words in this degree.
    pub fn milnor_to_admissible(&self, x: &SteenrodElt) -> AdmissibleElt {
        let p = x.bidegree().p;
        let conv = self.conversion(p);
        let milnor_basis = self.milnor.basis(p);
        let mut rhs = MonomialMatrix::new(
            WeightedBasis(milnor_basis.weights.iter().map(|&w| -w).collect()),
            WeightedBasis(vec![-x.bidegree().w]),
        );
        for (r, _) in x.terms() {
            rhs.set(milnor_basis.index[r], 0).expect("homogeneous input");
        }
        let sol = conv
            .reduction
            .solve_batch(&rhs)
            .expect("conversion system is invertible");
        let mut out = AdmissibleElt::zero(x.bidegree());
        for j in sol.bits.col_support(0) {
            let word = conv.words[j].clone();
            let k = x.bidegree().w - word_bidegree(&word).w;
            assert!(k >= 0);
            out.add_term(word, TauCoeff::Tau(k as u32));
        }
        out
    }
}

fn admissible_rec(p: u32, cap: u32, word: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if p == 0 {
        out.push(word.clone());
        return;
    }
    let hi = p.min(cap);
    for a in 1..=hi {
        // remaining degree must be expressible with head <= a/2
        word.push(a);
        admissible_rec(p - a, a / 2, word, out);
        word.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alg() -> AdemAlgebra {
        AdemAlgebra::new(Arc::new(MilnorAlgebra::new()))
    }

    #[test]
    fn admissibility() {
        assert!(is_admissible(&[4, 2, 1]));
        assert!(!is_admissible(&[2, 2]));
        assert!(is_admissible(&[]));
    }

    #[test]
    fn sq2sq2_is_tau_sq3sq1() {
        let a = alg();
        let r = a.reduce(&SqWord::new(vec![2, 2]));
        assert_eq!(r, AdmissibleElt::single(vec![3, 1], TauCoeff::Tau(1)));
    }

    #[test]
    fn sq1sq1_is_zero() {
        let a = alg();
        assert!(a.reduce(&SqWord::new(vec![1, 1])).is_zero());
    }

    #[test]
    fn sq2sq3_no_tau() {
        let a = alg();
        let r = a.reduce(&SqWord::new(vec![2, 3]));
        let mut expect = AdmissibleElt::single(vec![5], TauCoeff::ONE);
        expect.add_term(vec![4, 1], TauCoeff::ONE);
        assert_eq!(r, expect);
    }

    #[test]
    fn tau_parity_rule_matches_homogeneity() {
        // relation() asserts internally; drive it over the whole range
        let a = alg();
        for b in 1..=32u32 {
            for x in 1..(2 * b).min(33) {
                let _ = a.relation(x, b);
            }
        }
    }

    #[test]
    fn conversions_roundtrip() {
        let a = alg();
        for p in 0..=16 {
            for r in a.milnor.basis(p).elts.iter() {
                let elt = SteenrodElt::single(r.clone(), TauCoeff::ONE);
                let adm = a.milnor_to_admissible(&elt);
                let back = a.admissible_to_milnor(&adm);
                assert_eq!(back, elt, "roundtrip failed for {r}");
            }
        }
    }

    #[test]
    fn named_conversions() {
        let a = alg();
        // Sq3 -> P(3)
        let adm = AdmissibleElt::single(vec![3], TauCoeff::ONE);
        assert_eq!(
            a.admissible_to_milnor(&adm),
            SteenrodElt::single(MilnorElt::from_slice(&[3]), TauCoeff::ONE)
        );
        // Sq3 Sq1 -> P(1,1)
        let adm = AdmissibleElt::single(vec![3, 1], TauCoeff::ONE);
        assert_eq!(
            a.admissible_to_milnor(&adm),
            SteenrodElt::single(MilnorElt::from_slice(&[1, 1]), TauCoeff::ONE)
        );
        // P(3) -> Sq3, P(1,1) -> Sq3 Sq1
        let m = SteenrodElt::single(MilnorElt::from_slice(&[3]), TauCoeff::ONE);
        assert_eq!(
            a.milnor_to_admissible(&m),
            AdmissibleElt::single(vec![3], TauCoeff::ONE)
        );
        let m = SteenrodElt::single(MilnorElt::from_slice(&[1, 1]), TauCoeff::ONE);
        assert_eq!(
            a.milnor_to_admissible(&m),
            AdmissibleElt::single(vec![3, 1], TauCoeff::ONE)
        );
    }

    #[test]
    fn basis_sizes_agree_per_bidegree() {
        let a = alg();
        for p in 0..=20 {
            let milnor = a.milnor.basis(p);
            let words = a.admissible_basis(p);
            assert_eq!(milnor.len(), words.len(), "count mismatch in degree {p}");
            let mut mw: Vec<i32> = milnor.weights.clone();
            let mut aw: Vec<i32> = words.iter().map(|w| word_bidegree(w).w).collect();
            mw.sort_unstable();
            aw.sort_unstable();
            assert_eq!(mw, aw, "weight multiset mismatch in degree {p}");
        }
    }

    #[test]
    fn product_compatibility_small() {
        let a = alg();
        for total in 0..=12 {
            for pa in 0..=total {
                let pb = total - pa;
                for wx in a.admissible_basis(pa).iter() {
                    for wy in a.admissible_basis(pb).iter() {
                        let x = AdmissibleElt::single(wx.clone(), TauCoeff::ONE);
                        let y = AdmissibleElt::single(wy.clone(), TauCoeff::ONE);
                        let via_adem = a.admissible_to_milnor(&a.product(&x, &y));
                        let via_milnor = a
                            .milnor
                            .product_elts(&a.admissible_to_milnor(&x), &a.admissible_to_milnor(&y));
                        assert_eq!(via_adem, via_milnor, "mismatch for {wx:?} * {wy:?}");
                    }
                }
            }
        }
    }
}
