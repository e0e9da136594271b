//! The motivic May spectral sequence.
//!
//! The starting page is the cohomology of the differential graded algebra
//! F_2[tau, h_ij | i > 0, j >= 0] with d(h_ij) = sum_{0<k<i} h_kj h_{i-k,k+j}
//! and d(tau) = 0, graded by (May filtration m, stem s, Adams filtration f,
//! weight w); tau has degree (0,0,0,-1), h_i0 has (i, 2^i-2, 1, 2^{i-1}-1),
//! and h_ij with j > 0 has (i, 2^j(2^i-1)-1, 1, 2^{j-1}(2^i-1)).
//!
//! Higher differentials are ledger inputs, never derived: each page's
//! differentials are supplied on named generators and extended to every
//! class by the Leibniz rule on representative polynomials.  Pages are
//! stored as subquotients Z/B of the polynomial slices, so applying a
//! ledger is exact linear algebra over F_2[tau].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::grading::MayDegree;
use crate::linalg::{HomVec, MonomialMatrix, TorsionKind, WeightedBasis};
use crate::text::{ExpVal, Expr};

#[derive(Debug, Error)]
pub enum MayError {
    #[error("truncation too small: {0}")]
    Truncation(String),
    #[error("unknown name {0:?} in expression")]
    UnknownName(String),
    #[error("ledger source {0:?} does not match a page generator")]
    UnmatchedSource(String),
    #[error("ledger value is not a cocycle on the current page at (m={0}, s={1}, f={2})")]
    NotCocycle(i32, i32, i32),
    #[error("page basis does not span slice (m={0}, s={1}, f={2})")]
    SpanFailure(i32, i32, i32),
    #[error("{0}")]
    Other(String),
}

/// A polynomial generator h_{i,j} of the May DGA.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MayGen {
    pub i: u32,
    pub j: u32,
}

impl MayGen {
    pub fn degree(self) -> MayDegree {
        let (i, j) = (self.i, self.j);
        if j == 0 {
            MayDegree::new(i as i32, (1 << i) - 2, 1, (1 << (i - 1)) - 1)
        } else {
            MayDegree::new(
                i as i32,
                ((1i64 << j) * ((1i64 << i) - 1) - 1) as i32,
                1,
                ((1i64 << (j - 1)) * ((1i64 << i) - 1)) as i32,
            )
        }
    }

    pub fn name(self) -> String {
        format!("h_{}{}", self.i, self.j)
    }
}

/// Monomial in the DGA generators: exponent per generator index.
pub type Mono = Vec<u16>;

/// Mod-2 set of monomials.
pub type Poly = Vec<Mono>;

/// A homogeneous element: a set of monomials together with the element's
/// weight.  The tau exponent on a monomial is (its weight) - (the element
/// weight), which must be non-negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyElt {
    pub monos: Poly,
    pub weight: i32,
}

impl PolyElt {
    pub fn is_zero(&self) -> bool {
        self.monos.is_empty()
    }
}

/// Basis of one (m, s, f) slice, with per-monomial weights.
pub struct SliceBasis {
    pub monos: Vec<Mono>,
    pub index: HashMap<Mono, usize>,
    pub weights: Vec<i32>,
}

pub struct MayDga {
    pub gens: Vec<MayGen>,
    pub degrees: Vec<MayDegree>,
    /// d(h_ij) as pairs of generator indices.
    diffs: Vec<Vec<(usize, usize)>>,
    pub max_stem: i32,
    pub max_f: i32,
    slices: dashmap::DashMap<(i32, i32, i32), Arc<SliceBasis>>,
}

impl MayDga {
    /// Generators are included iff their stem is at most max_stem + 2,
    /// which leaves slack for boundary terms.
    pub fn new(max_stem: i32, max_f: i32) -> Self {
        let mut gens = Vec::new();
        for i in 1..=8u32 {
            for j in 0..=8u32 {
                let g = MayGen { i, j };
                if g.degree().s <= max_stem + 2 {
                    gens.push(g);
                }
            }
        }
        gens.sort_by_key(|g| (g.i, g.j));
        let degrees: Vec<MayDegree> = gens.iter().map(|g| g.degree()).collect();
        let index: HashMap<(u32, u32), usize> = gens
            .iter()
            .enumerate()
            .map(|(n, g)| ((g.i, g.j), n))
            .collect();
        let mut diffs = Vec::new();
        for g in &gens {
            let mut terms = Vec::new();
            for k in 1..g.i {
                // both factors have smaller stems, so they are in range
                let ia = index[&(k, g.j)];
                let ib = index[&(g.i - k, k + g.j)];
                terms.push((ia, ib));
            }
            diffs.push(terms);
        }
        MayDga {
            gens,
            degrees,
            diffs,
            max_stem,
            max_f,
            slices: dashmap::DashMap::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.gens.len()
    }

    pub fn gen_index(&self, i: u32, j: u32) -> Option<usize> {
        self.gens.iter().position(|g| (g.i, g.j) == (i, j))
    }

    pub fn mono_degree(&self, m: &Mono) -> MayDegree {
        let mut d = MayDegree::new(0, 0, 0, 0);
        for (v, &e) in m.iter().enumerate() {
            if e > 0 {
                let g = self.degrees[v];
                d = d
                    + MayDegree::new(
                        g.m * e as i32,
                        g.s * e as i32,
                        g.f * e as i32,
                        g.w * e as i32,
                    );
            }
        }
        d
    }

    /// (m, s, f) of a homogeneous element; None for zero.
    pub fn elt_msf(&self, e: &PolyElt) -> Option<(i32, i32, i32)> {
        let first = e.monos.first()?;
        let d = self.mono_degree(first);
        for m in &e.monos {
            let dm = self.mono_degree(m);
            assert_eq!((dm.m, dm.s, dm.f), (d.m, d.s, d.f), "inhomogeneous element");
            assert!(dm.w >= e.weight, "negative tau exponent in element");
        }
        Some((d.m, d.s, d.f))
    }

    /// All monomials of multidegree exactly (m, s, f), any weight.
    pub fn slice(&self, m: i32, s: i32, f: i32) -> Arc<SliceBasis> {
        if let Some(b) = self.slices.get(&(m, s, f)) {
            return b.clone();
        }
        let mut monos: Vec<Mono> = Vec::new();
        let mut current: Mono = vec![0; self.gens.len()];
        self.enumerate(0, m, s, f, &mut current, &mut monos);
        monos.sort();
        let index = monos
            .iter()
            .enumerate()
            .map(|(i, mo)| (mo.clone(), i))
            .collect();
        let weights = monos.iter().map(|mo| self.mono_degree(mo).w).collect();
        let basis = Arc::new(SliceBasis {
            monos,
            index,
            weights,
        });
        self.slices.entry((m, s, f)).or_insert(basis).clone()
    }

    fn enumerate(&self, v: usize, m: i32, s: i32, f: i32, cur: &mut Mono, out: &mut Vec<Mono>) {
        if m == 0 && s == 0 && f == 0 {
            out.push(cur.clone());
            return;
        }
        if v >= self.gens.len() || m < 0 || s < 0 || f < 0 {
            return;
        }
        let d = self.degrees[v];
        let mut cap = f / d.f.max(1);
        cap = cap.min(m / d.m.max(1));
        if d.s > 0 {
            cap = cap.min(s / d.s);
        }
        for e in 0..=cap {
            cur[v] = e as u16;
            self.enumerate(v + 1, m - e * d.m, s - e * d.s, f - e * d.f, cur, out);
        }
        cur[v] = 0;
    }

    /// Leibniz differential of a monomial (mod 2, cancelled).
    pub fn d_mono(&self, mono: &Mono) -> Vec<Mono> {
        let mut acc: HashMap<Mono, bool> = HashMap::new();
        for (v, &e) in mono.iter().enumerate() {
            if e % 2 == 0 {
                continue;
            }
            for &(a, b) in &self.diffs[v] {
                let mut t = mono.clone();
                t[v] -= 1;
                t[a] += 1;
                t[b] += 1;
                *acc.entry(t).or_insert(false) ^= true;
            }
        }
        let mut out: Vec<Mono> = acc
            .into_iter()
            .filter_map(|(t, p)| p.then_some(t))
            .collect();
        out.sort();
        out
    }

    /// Matrix of the DGA differential from slice (m, s, f) to (m, s-1, f+1).
    pub fn d_matrix(&self, m: i32, s: i32, f: i32) -> MonomialMatrix {
        let src = self.slice(m, s, f);
        let dst = self.slice(m, s - 1, f + 1);
        let mut mat = MonomialMatrix::new(
            WeightedBasis(dst.weights.clone()),
            WeightedBasis(src.weights.clone()),
        );
        for (c, mono) in src.monos.iter().enumerate() {
            for t in self.d_mono(mono) {
                let r = dst.index[&t];
                mat.set(r, c).expect("differential is weight-homogeneous");
            }
        }
        mat
    }

    /// Expand a homogeneous element into a vector over a slice.
    pub fn elt_vector(&self, e: &PolyElt, basis: &SliceBasis) -> HomVec {
        let mut support: Vec<usize> = e.monos.iter().map(|m| basis.index[m]).collect();
        support.sort_unstable();
        HomVec {
            weight: e.weight,
            support,
        }
    }
}

/// Multiply two mod-2 polynomials.
pub fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut acc: HashMap<Mono, bool> = HashMap::new();
    for x in a {
        for y in b {
            let t: Mono = x.iter().zip(y).map(|(p, q)| p + q).collect();
            *acc.entry(t).or_insert(false) ^= true;
        }
    }
    collect(acc)
}

pub fn poly_add(a: &Poly, b: &Poly) -> Poly {
    let mut acc: HashMap<Mono, bool> = HashMap::new();
    for x in a.iter().chain(b) {
        *acc.entry(x.clone()).or_insert(false) ^= true;
    }
    collect(acc)
}

fn collect(acc: HashMap<Mono, bool>) -> Poly {
    let mut out: Vec<Mono> = acc
        .into_iter()
        .filter_map(|(t, p)| p.then_some(t))
        .collect();
    out.sort();
    out
}

pub fn elt_mul(a: &PolyElt, b: &PolyElt) -> PolyElt {
    PolyElt {
        monos: poly_mul(&a.monos, &b.monos),
        weight: a.weight + b.weight,
    }
}

pub fn elt_pow(a: &PolyElt, e: u32, nvars: usize) -> PolyElt {
    let mut out = PolyElt {
        monos: vec![vec![0; nvars]],
        weight: 0,
    };
    for _ in 0..e {
        out = elt_mul(&out, a);
    }
    out
}

pub fn elt_add(a: &PolyElt, b: &PolyElt) -> PolyElt {
    if a.is_zero() {
        return b.clone();
    }
    if b.is_zero() {
        return a.clone();
    }
    assert_eq!(a.weight, b.weight, "inhomogeneous sum");
    PolyElt {
        monos: poly_add(&a.monos, &b.monos),
        weight: a.weight,
    }
}

/// A named class with its representative.
#[derive(Debug, Clone)]
pub struct NamedClass {
    pub name: String,
    pub rep: PolyElt,
    pub degree: MayDegree,
}

/// Named generator tables: the starting-page generators with their declared
/// degrees, plus the spanning generator lists for later pages.
pub struct NamedTable {
    pub dga: Arc<MayDga>,
    pub e2: Vec<NamedClass>,
    pub page_bases: BTreeMap<u32, Vec<NamedClass>>,
    /// Names dropped because their variables fall outside the truncation.
    pub skipped: Vec<String>,
    defined: HashMap<String, PolyElt>,
}

impl NamedTable {
    /// Parse the fixture text.  Lines:
    ///   gen NAME = EXPR degree (m,s,f,w)
    ///   page N basis NAME = EXPR
    ///   page N keep NAME NAME ...
    /// EXPR is a polynomial in the variables h_ij and previously defined
    /// names.  Generators outside the truncation are skipped and recorded.
    pub fn parse(dga: Arc<MayDga>, text: &str) -> Result<NamedTable, MayError> {
        let mut table = NamedTable {
            dga,
            e2: Vec::new(),
            page_bases: BTreeMap::new(),
            skipped: Vec::new(),
            defined: HashMap::new(),
        };
        for raw in text.lines() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("gen ") {
                let (name, rest) = rest
                    .split_once('=')
                    .ok_or_else(|| MayError::Other(format!("bad gen line {line:?}")))?;
                let name = name.trim().to_string();
                let (expr_text, deg_text) = rest
                    .split_once("degree")
                    .ok_or_else(|| MayError::Other(format!("missing degree in {line:?}")))?;
                let expr = crate::text::parse_expr(expr_text.trim())
                    .map_err(|e| MayError::Other(e.to_string()))?;
                let degree = parse_degree(deg_text.trim())?;
                if degree.s > table.dga.max_stem + 2 {
                    table.skipped.push(name);
                    continue;
                }
                let rep = table.eval(&expr)?;
                let computed = table.elt_degree(&rep)?;
                if computed != degree {
                    return Err(MayError::Other(format!(
                        "declared degree of {name} is {degree:?}, representative has {computed:?}"
                    )));
                }
                table.defined.insert(name.clone(), rep.clone());
                table.e2.push(NamedClass { name, rep, degree });
            } else if let Some(rest) = line.strip_prefix("page ") {
                let mut parts = rest.splitn(3, ' ');
                let page: u32 = parts
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| MayError::Other(format!("bad page line {line:?}")))?;
                match parts.next() {
                    Some("basis") => {
                        let rest = parts.next().unwrap_or("");
                        let (name, expr_text) = rest
                            .split_once('=')
                            .ok_or_else(|| MayError::Other(format!("bad basis line {line:?}")))?;
                        let name = name.trim().to_string();
                        let expr = crate::text::parse_expr(expr_text.trim())
                            .map_err(|e| MayError::Other(e.to_string()))?;
                        let rep = match table.eval(&expr) {
                            Ok(r) => r,
                            Err(MayError::UnknownName(n)) if table.skipped.contains(&n) => {
                                table.skipped.push(name);
                                continue;
                            }
                            Err(e) => return Err(e),
                        };
                        let degree = table.elt_degree(&rep)?;
                        table.defined.insert(name.clone(), rep.clone());
                        table
                            .page_bases
                            .entry(page)
                            .or_default()
                            .push(NamedClass { name, rep, degree });
                    }
                    Some("keep") => {
                        for n in parts.next().unwrap_or("").split_whitespace() {
                            if table.skipped.iter().any(|s| s == n) {
                                continue;
                            }
                            let rep = table
                                .defined
                                .get(n)
                                .cloned()
                                .ok_or_else(|| MayError::UnknownName(n.to_string()))?;
                            let degree = table.elt_degree(&rep)?;
                            table.page_bases.entry(page).or_default().push(NamedClass {
                                name: n.to_string(),
                                rep,
                                degree,
                            });
                        }
                    }
                    _ => return Err(MayError::Other(format!("bad page line {line:?}"))),
                }
            } else {
                return Err(MayError::Other(format!("unrecognized line {line:?}")));
            }
        }
        Ok(table)
    }

    pub fn class(&self, name: &str) -> Option<&NamedClass> {
        self.e2.iter().find(|c| c.name == name)
    }

    fn elt_degree(&self, e: &PolyElt) -> Result<MayDegree, MayError> {
        let (m, s, f) = self
            .dga
            .elt_msf(e)
            .ok_or_else(|| MayError::Other("zero representative".into()))?;
        Ok(MayDegree::new(m, s, f, e.weight))
    }

    /// Evaluate an expression in h_ij variables and defined names.
    pub fn eval(&self, expr: &Expr) -> Result<PolyElt, MayError> {
        let nvars = self.dga.nvars();
        let mut total = PolyElt {
            monos: Vec::new(),
            weight: 0,
        };
        for term in &expr.terms {
            let mut acc = PolyElt {
                monos: vec![vec![0; nvars]],
                weight: 0,
            };
            let tau = match term.tau {
                ExpVal::Const(c) => c as u32,
                ExpVal::KPlus(_) => return Err(MayError::Other("family exponent in table".into())),
            };
            for (name, e) in &term.factors {
                let e = match e {
                    ExpVal::Const(c) => *c as u32,
                    ExpVal::KPlus(_) => {
                        return Err(MayError::Other("family exponent in table".into()))
                    }
                };
                let factor = self.atom(name)?;
                acc = elt_mul(&acc, &elt_pow(&factor, e, nvars));
            }
            acc.weight -= tau as i32;
            if total.is_zero() {
                total = acc;
            } else if !acc.is_zero() {
                total = elt_add(&total, &acc);
            }
        }
        Ok(total)
    }

    fn atom(&self, name: &str) -> Result<PolyElt, MayError> {
        if let Some(rest) = name.strip_prefix("h_") {
            let digits: Vec<u32> = rest.chars().filter_map(|c| c.to_digit(10)).collect();
            if digits.len() != 2 || rest.len() != 2 {
                return Err(MayError::UnknownName(name.to_string()));
            }
            let v = self
                .dga
                .gen_index(digits[0], digits[1])
                .ok_or_else(|| MayError::UnknownName(name.to_string()))?;
            let mut unit = vec![0u16; self.dga.nvars()];
            unit[v] = 1;
            return Ok(PolyElt {
                weight: self.dga.degrees[v].w,
                monos: vec![unit],
            });
        }
        self.defined
            .get(name)
            .cloned()
            .ok_or_else(|| MayError::UnknownName(name.to_string()))
    }
}

fn parse_degree(text: &str) -> Result<MayDegree, MayError> {
    let t = text
        .trim()
        .strip_prefix('(')
        .and_then(|x| x.strip_suffix(')'))
        .ok_or_else(|| MayError::Other(format!("bad degree {text:?}")))?;
    let parts: Vec<i32> = t
        .split(',')
        .map(|x| x.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| MayError::Other(format!("bad degree {text:?}")))?;
    if parts.len() != 4 {
        return Err(MayError::Other(format!("bad degree {text:?}")));
    }
    Ok(MayDegree::new(parts[0], parts[1], parts[2], parts[3]))
}

// ---------------------------------------------------------------------------
// Pages
// ---------------------------------------------------------------------------

/// One slice of a page: cycles and boundaries as column spans of the
/// polynomial slice, with the current summand description.
pub struct PageSlice {
    pub basis: Arc<SliceBasis>,
    pub z: MonomialMatrix,
    pub b: MonomialMatrix,
    pub summands: Vec<(i32, TorsionKind)>,
}

pub struct MayPage {
    pub dga: Arc<MayDga>,
    pub r: u32,
    pub slices: BTreeMap<(i32, i32, i32), PageSlice>,
}

impl MayPage {
    /// The starting page (cohomology of the DGA) on every slice with
    /// stem <= max_stem and f <= max_f.
    pub fn start(dga: Arc<MayDga>, max_stem: i32, max_f: i32) -> MayPage {
        assert!(max_stem <= dga.max_stem && max_f <= dga.max_f);
        let mut keys: BTreeSet<(i32, i32, i32)> = BTreeSet::new();
        let mut cur: Mono = vec![0; dga.gens.len()];
        global_enumerate(&dga, 0, max_stem, max_f, &mut cur, &mut keys);
        let mut slices = BTreeMap::new();
        for &(m, s, f) in &keys {
            let basis = dga.slice(m, s, f);
            if basis.monos.is_empty() {
                continue;
            }
            let din = dga.d_matrix(m, s + 1, f - 1);
            let dout = dga.d_matrix(m, s, f);
            let z = dout.reduce().kernel();
            let src = dga.slice(m, s + 1, f - 1);
            let mut b = MonomialMatrix::new(
                WeightedBasis(basis.weights.clone()),
                WeightedBasis(src.weights.clone()),
            );
            b.bits = din.bits.clone();
            slices.insert(
                (m, s, f),
                PageSlice {
                    basis,
                    z,
                    b,
                    summands: Vec::new(),
                },
            );
        }
        let mut page = MayPage { dga, r: 2, slices };
        page.recompute_summands();
        page
    }

    pub fn slice(&self, m: i32, s: i32, f: i32) -> Option<&PageSlice> {
        self.slices.get(&(m, s, f))
    }

    fn recompute_summands(&mut self) {
        for slice in self.slices.values_mut() {
            slice.summands = subquotient_summands(&slice.z, &slice.b);
        }
    }

    pub fn in_z(&self, key: (i32, i32, i32), v: &HomVec) -> bool {
        match self.slices.get(&key) {
            Some(slice) => in_span(&slice.z, v),
            None => v.is_zero(),
        }
    }

    pub fn in_b(&self, key: (i32, i32, i32), v: &HomVec) -> bool {
        match self.slices.get(&key) {
            Some(slice) => in_span(&slice.b, v),
            None => v.is_zero(),
        }
    }

    /// Nonzero class check for a named representative.
    pub fn class_is_nonzero(&self, e: &PolyElt) -> bool {
        match self.dga.elt_msf(e) {
            None => false,
            Some(key) => {
                let basis = self.dga.slice(key.0, key.1, key.2);
                let v = self.dga.elt_vector(e, &basis);
                self.in_z(key, &v) && !self.in_b(key, &v)
            }
        }
    }

    /// Apply one even page of ledger differentials and advance to the next
    /// even page.  `basis` spans the current page on every slice with
    /// stem <= span_bound; `ledger` pairs (source rep, value rep) give d_r
    /// on basis names (all other basis names map to zero).
    pub fn apply_ledger(
        &mut self,
        basis: &[NamedClass],
        ledger: &[(PolyElt, PolyElt)],
        span_bound: i32,
    ) -> Result<(), MayError> {
        let r = self.r;
        let nvars = self.dga.nvars();
        // match ledger sources against the basis by representative
        let mut d_of: Vec<Option<PolyElt>> = vec![None; basis.len()];
        for (src, val) in ledger {
            let pos = basis
                .iter()
                .position(|c| c.rep == *src)
                .ok_or_else(|| MayError::UnmatchedSource(format!("{src:?}")))?;
            d_of[pos] = Some(val.clone());
        }
        // named monomials bucketed by source slice
        let monos = named_monomials(basis, span_bound, self.dga.max_f);
        let mut by_slice: BTreeMap<(i32, i32, i32), Vec<(PolyElt, PolyElt)>> = BTreeMap::new();
        for expvec in &monos {
            let mut rep = PolyElt {
                monos: vec![vec![0; nvars]],
                weight: 0,
            };
            for (vi, &e) in expvec.iter().enumerate() {
                if e > 0 {
                    rep = elt_mul(&rep, &elt_pow(&basis[vi].rep, e as u32, nvars));
                }
            }
            if rep.is_zero() {
                continue;
            }
            let mut val = PolyElt {
                monos: Vec::new(),
                weight: 0,
            };
            for (vi, &e) in expvec.iter().enumerate() {
                if e % 2 == 0 {
                    continue;
                }
                let Some(dv) = &d_of[vi] else { continue };
                let mut rest = PolyElt {
                    monos: vec![vec![0; nvars]],
                    weight: 0,
                };
                for (wi, &we) in expvec.iter().enumerate() {
                    let we = if wi == vi { we - 1 } else { we };
                    if we > 0 {
                        rest = elt_mul(&rest, &elt_pow(&basis[wi].rep, we as u32, nvars));
                    }
                }
                let term = elt_mul(&rest, dv);
                if !term.is_zero() {
                    val = if val.is_zero() {
                        term
                    } else {
                        elt_add(&val, &term)
                    };
                }
            }
            if let Some(key) = self.dga.elt_msf(&rep) {
                by_slice.entry(key).or_default().push((rep, val));
            }
        }
        // process each source slice
        let shift = |key: (i32, i32, i32)| (key.0 - (r as i32 - 1), key.1 - 1, key.2 + 1);
        let mut new_b: BTreeMap<(i32, i32, i32), Vec<HomVec>> = BTreeMap::new();
        let mut new_z: BTreeMap<(i32, i32, i32), Vec<HomVec>> = BTreeMap::new();
        for (key, items) in &by_slice {
            let Some(slice) = self.slices.get(key) else {
                continue;
            };
            let tkey = shift(*key);
            let tbasis = self.dga.slice(tkey.0, tkey.1, tkey.2);
            let mut src_cols: Vec<HomVec> = Vec::new();
            let mut val_cols: Vec<HomVec> = Vec::new();
            for (rep, val) in items {
                let sv = self.dga.elt_vector(rep, &slice.basis);
                if !in_span(&slice.z, &sv) {
                    return Err(MayError::NotCocycle(key.0, key.1, key.2));
                }
                let tv = if val.is_zero() {
                    HomVec::zero(sv.weight)
                } else {
                    let tv = self.dga.elt_vector(val, &tbasis);
                    assert_eq!(tv.weight, sv.weight, "differential must preserve weight");
                    if !self.in_z(tkey, &tv) {
                        return Err(MayError::NotCocycle(tkey.0, tkey.1, tkey.2));
                    }
                    tv
                };
                src_cols.push(sv);
                val_cols.push(tv);
            }
            if key.1 <= span_bound && !span_covers(&slice.basis, &slice.b, &src_cols, &slice.z) {
                return Err(MayError::SpanFailure(key.0, key.1, key.2));
            }
            // kernel of the induced map via the augmented matrix [VAL | B_t]
            let bt_cols: Vec<HomVec> = match self.slices.get(&tkey) {
                Some(ts) => matrix_columns(&ts.b),
                None => Vec::new(),
            };
            let mut aug_cols = val_cols.clone();
            aug_cols.extend(bt_cols);
            let aug = columns_matrix(&tbasis, &aug_cols);
            let kern = aug.reduce().kernel();
            let mut zvecs: Vec<HomVec> = Vec::new();
            for kc in 0..kern.ncols() {
                let mut touches = false;
                let mut acc: HashMap<usize, bool> = HashMap::new();
                for ri in kern.bits.col_support(kc) {
                    if ri < src_cols.len() {
                        touches = true;
                        for &x in &src_cols[ri].support {
                            *acc.entry(x).or_insert(false) ^= true;
                        }
                    }
                }
                if !touches {
                    continue;
                }
                let mut support: Vec<usize> = acc
                    .into_iter()
                    .filter_map(|(x, p)| p.then_some(x))
                    .collect();
                support.sort_unstable();
                zvecs.push(HomVec {
                    weight: kern.col_weights.weight(kc),
                    support,
                });
            }
            new_z.insert(*key, zvecs);
            new_b
                .entry(tkey)
                .or_default()
                .extend(val_cols.into_iter().filter(|v| !v.is_zero()));
        }
        // rebuild slices
        let keys: Vec<(i32, i32, i32)> = self.slices.keys().copied().collect();
        for key in keys {
            let spanned = key.1 <= span_bound && by_slice.contains_key(&key);
            let slice = self.slices.get_mut(&key).unwrap();
            let mut bcols = matrix_columns(&slice.b);
            if let Some(nb) = new_b.remove(&key) {
                bcols.extend(nb);
            }
            let b = columns_matrix(&slice.basis, &bcols);
            let z = if spanned {
                let mut cols = matrix_columns(&slice.b);
                cols.extend(new_z.remove(&key).unwrap_or_default());
                columns_matrix(&slice.basis, &cols)
            } else if key.1 <= span_bound {
                // no named monomials hit this slice: everything survives as
                // cycles only if nothing lives here; keep Z as-is (no
                // sources means the differential out of this slice is zero)
                let cols = matrix_columns(&slice.z);
                columns_matrix(&slice.basis, &cols)
            } else {
                let cols = matrix_columns(&slice.z);
                columns_matrix(&slice.basis, &cols)
            };
            slice.z = z;
            slice.b = b;
        }
        self.recompute_summands();
        self.r += 2;
        Ok(())
    }

    /// Aggregate summands per (stem, f) over all May filtrations.
    pub fn chart_summands(
        &self,
        max_stem: i32,
        max_f: i32,
    ) -> BTreeMap<(i32, i32), Vec<(i32, TorsionKind)>> {
        let mut out: BTreeMap<(i32, i32), Vec<(i32, TorsionKind)>> = BTreeMap::new();
        for (&(_m, s, f), slice) in &self.slices {
            if s > max_stem || f > max_f || s < 0 || slice.summands.is_empty() {
                continue;
            }
            out.entry((s, f))
                .or_default()
                .extend(slice.summands.iter().copied());
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }
}

fn matrix_columns(m: &MonomialMatrix) -> Vec<HomVec> {
    (0..m.ncols())
        .map(|c| HomVec {
            weight: m.col_weights.weight(c),
            support: m.bits.col_support(c),
        })
        .collect()
}

fn global_enumerate(
    dga: &MayDga,
    v: usize,
    s: i32,
    f: i32,
    cur: &mut Mono,
    out: &mut BTreeSet<(i32, i32, i32)>,
) {
    let d = dga.mono_degree(cur);
    out.insert((d.m, d.s, d.f));
    if v >= dga.gens.len() {
        return;
    }
    let dv = dga.degrees[v];
    let mut e = 1i32;
    loop {
        if dv.s * e > s || dv.f * e > f {
            break;
        }
        cur[v] = e as u16;
        global_enumerate(dga, v + 1, s - dv.s * e, f - dv.f * e, cur, out);
        e += 1;
    }
    cur[v] = 0;
    global_enumerate(dga, v + 1, s, f, cur, out);
}

/// Exponent vectors over the named basis with stem <= max_stem and
/// f <= max_f (every name has f >= 1, so this terminates).
fn named_monomials(names: &[NamedClass], max_stem: i32, max_f: i32) -> Vec<Vec<u16>> {
    fn rec(
        names: &[NamedClass],
        v: usize,
        s: i32,
        f: i32,
        cur: &mut Vec<u16>,
        out: &mut Vec<Vec<u16>>,
    ) {
        if v == names.len() {
            out.push(cur.clone());
            return;
        }
        let d = names[v].degree;
        let mut e = 0i32;
        loop {
            if d.s * e > s || d.f * e > f || (d.s == 0 && d.f == 0 && e > 0) {
                break;
            }
            cur[v] = e as u16;
            rec(names, v + 1, s - d.s * e, f - d.f * e, cur, out);
            e += 1;
        }
        cur[v] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u16; names.len()];
    rec(names, 0, max_stem, max_f, &mut cur, &mut out);
    out
}

fn columns_matrix(basis: &SliceBasis, cols: &[HomVec]) -> MonomialMatrix {
    let mut m = MonomialMatrix::new(
        WeightedBasis(basis.weights.clone()),
        WeightedBasis(cols.iter().map(|c| c.weight).collect()),
    );
    for (j, c) in cols.iter().enumerate() {
        for &r in &c.support {
            m.set(r, j).expect("homogeneous column");
        }
    }
    m
}

fn in_span(span: &MonomialMatrix, v: &HomVec) -> bool {
    if v.is_zero() {
        return true;
    }
    let mut rhs = MonomialMatrix::new(span.row_weights.clone(), WeightedBasis(vec![v.weight]));
    for &r in &v.support {
        if rhs.set(r, 0).is_err() {
            return false;
        }
    }
    span.clone().reduce().solve_batch(&rhs).is_ok()
}

/// Do the named columns, together with B, span Z?
fn span_covers(
    basis: &SliceBasis,
    b: &MonomialMatrix,
    named: &[HomVec],
    z: &MonomialMatrix,
) -> bool {
    let mut cols: Vec<HomVec> = named.to_vec();
    cols.extend(matrix_columns(b));
    let red = columns_matrix(basis, &cols).reduce();
    for v in matrix_columns(z) {
        let mut rhs =
            MonomialMatrix::new(WeightedBasis(basis.weights.clone()), WeightedBasis(vec![v.weight]));
        for &r in &v.support {
            rhs.set(r, 0).expect("homogeneous");
        }
        if red.solve_batch(&rhs).is_err() {
            return false;
        }
    }
    true
}

/// Summand description of Z/B.
fn subquotient_summands(z: &MonomialMatrix, b: &MonomialMatrix) -> Vec<(i32, TorsionKind)> {
    if z.ncols() == 0 {
        return Vec::new();
    }
    let zred = z.clone().reduce();
    let coords = zred.solve_batch(b).expect("boundaries lie inside cycles");
    let coker = coords.reduce().cokernel_min_gens();
    coker
        .generators
        .iter()
        .map(|(v, k)| (v.weight, *k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_degrees_match_table() {
        assert_eq!(MayGen { i: 1, j: 0 }.degree(), MayDegree::new(1, 0, 1, 0));
        assert_eq!(MayGen { i: 1, j: 1 }.degree(), MayDegree::new(1, 1, 1, 1));
        assert_eq!(MayGen { i: 1, j: 2 }.degree(), MayDegree::new(1, 3, 1, 2));
        assert_eq!(MayGen { i: 2, j: 0 }.degree(), MayDegree::new(2, 2, 1, 1));
        assert_eq!(MayGen { i: 2, j: 1 }.degree(), MayDegree::new(2, 5, 1, 3));
        assert_eq!(MayGen { i: 3, j: 0 }.degree(), MayDegree::new(3, 6, 1, 3));
    }

    #[test]
    fn dga_differential_examples() {
        let dga = MayDga::new(20, 10);
        let v = dga.gen_index(1, 1).unwrap();
        let mut mono = vec![0u16; dga.gens.len()];
        mono[v] = 1;
        assert!(dga.d_mono(&mono).is_empty());
        let v20 = dga.gen_index(2, 0).unwrap();
        let mut mono = vec![0u16; dga.gens.len()];
        mono[v20] = 1;
        let d = dga.d_mono(&mono);
        assert_eq!(d.len(), 1);
        let mut expect = vec![0u16; dga.gens.len()];
        expect[dga.gen_index(1, 0).unwrap()] = 1;
        expect[dga.gen_index(1, 1).unwrap()] = 1;
        assert_eq!(d[0], expect);
        let v30 = dga.gen_index(3, 0).unwrap();
        let mut mono = vec![0u16; dga.gens.len()];
        mono[v30] = 1;
        assert_eq!(dga.d_mono(&mono).len(), 2);
    }

    #[test]
    fn dd_zero_small() {
        let dga = MayDga::new(14, 8);
        for m in 0..=12 {
            for s in 0..=14 {
                for f in 0..=6 {
                    let basis = dga.slice(m, s, f);
                    for mono in basis.monos.iter() {
                        let mut acc: HashMap<Mono, bool> = HashMap::new();
                        for t in dga.d_mono(mono) {
                            for u in dga.d_mono(&t) {
                                *acc.entry(u).or_insert(false) ^= true;
                            }
                        }
                        assert!(acc.values().all(|&p| !p), "d d != 0 on {mono:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn weight_homogeneous_differential() {
        let dga = MayDga::new(16, 8);
        for m in 0..=10 {
            for s in 0..=16 {
                for f in 0..=5 {
                    let basis = dga.slice(m, s, f);
                    for mono in basis.monos.iter() {
                        let w = dga.mono_degree(mono).w;
                        for t in dga.d_mono(mono) {
                            assert_eq!(dga.mono_degree(&t).w, w);
                        }
                    }
                }
            }
        }
    }
}
