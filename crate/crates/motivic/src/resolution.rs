//! Minimal free resolutions of the coefficient ring over the motivic
//! Steenrod algebra, the charts extracted from them, and chain-level
//! products with h0, h1, h2.
//!
//! The resolution is built cell by cell: within filtration s, internal
//! degrees t are processed in increasing order.  At each cell the kernel of
//! the previous differential is computed over F_2[tau] (one bit matrix per
//! cell, weights carried alongside), the image of the already-chosen
//! generators is subtracted, and the minimal generators of the quotient are
//! adjoined, lowest weight first.  Torsion quotient classes produce the
//! tau-power entries that distinguish the motivic resolution from the
//! classical one.
//!
//! Charts are computed from the dual complex: dualizing against the
//! coefficients kills every positive-degree operation, leaving only the
//! tau-monomial parts of the differentials.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::chart::{Chart, ClassRef, Edge, HMul, Summand};
use crate::grading::{Mode, TauCoeff};
use crate::linalg::{matvec, HomVec, MonomialMatrix, Reduction, TorsionKind, WeightedBasis};
use crate::milnor::{MilnorAlgebra, MilnorElt, SteenrodElt};

#[derive(Debug, Error)]
pub enum ResolutionError {
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("insufficient frontier: needs cell (s={0}, t={1})")]
    InsufficientFrontier(u32, i32),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Index of a generator in the resolution's global table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GenId(pub u32);

#[derive(Debug, Clone)]
pub struct GenInfo {
    pub s: u32,
    pub t: i32,
    pub w: i32,
    /// Ordinal within (s, t, w).
    pub idx: u32,
    /// d(g): finite combination of generators one filtration down with
    /// Steenrod coefficients.  Empty for the filtration-0 generator.
    pub diff: Vec<(GenId, SteenrodElt)>,
}

/// Basis of one internal degree of a free module: pairs (generator, Milnor
/// basis index), with weights.
pub struct Slice {
    pub items: Vec<(GenId, u32)>,
    /// True motivic weights (zero in classical mode).
    pub weights: Vec<i32>,
    pub offsets: HashMap<GenId, usize>,
    pub degree: i32,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn index_of(&self, g: GenId, basis_idx: usize) -> usize {
        self.offsets[&g] + basis_idx
    }
}

pub struct CellReport {
    pub s: u32,
    pub t: i32,
    pub new_gens: Vec<GenId>,
    pub elapsed: Duration,
}

pub struct Resolution {
    mode: Mode,
    alg: Arc<MilnorAlgebra>,
    gens: Vec<GenInfo>,
    by_s: Vec<Vec<GenId>>,
    /// Per filtration s >= 1, the largest t through which every cell (s, t')
    /// with t' <= t is complete.
    complete: Vec<i32>,
}

impl Resolution {
    pub fn new(mode: Mode, alg: Arc<MilnorAlgebra>) -> Self {
        let g0 = GenInfo {
            s: 0,
            t: 0,
            w: 0,
            idx: 0,
            diff: Vec::new(),
        };
        Resolution {
            mode,
            alg,
            gens: vec![g0],
            by_s: vec![vec![GenId(0)]],
            complete: vec![i32::MAX],
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn algebra(&self) -> &Arc<MilnorAlgebra> {
        &self.alg
    }

    pub fn gen_info(&self, id: GenId) -> &GenInfo {
        &self.gens[id.0 as usize]
    }

    pub fn num_gens(&self) -> usize {
        self.gens.len()
    }

    pub fn max_s(&self) -> u32 {
        self.by_s.len() as u32 - 1
    }

    pub fn complete_through(&self, s: u32) -> i32 {
        self.complete.get(s as usize).copied().unwrap_or(-1)
    }

    pub fn gens_in(&self, s: u32) -> &[GenId] {
        self.by_s.get(s as usize).map_or(&[], |v| v.as_slice())
    }

    /// Generators at exactly (s, t), in adjoin order.
    pub fn gens_at(&self, s: u32, t: i32) -> Vec<GenId> {
        self.gens_in(s)
            .iter()
            .copied()
            .filter(|&g| self.gens[g.0 as usize].t == t)
            .collect()
    }

    fn weight_of(&self, g: GenId) -> i32 {
        if self.mode.is_classical() {
            0
        } else {
            self.gens[g.0 as usize].w
        }
    }

    /// The degree-t slice of the free module F_s.
    pub fn slice(&self, s: u32, t: i32) -> Slice {
        let mut items = Vec::new();
        let mut weights = Vec::new();
        let mut offsets = HashMap::new();
        for &g in self.gens_in(s) {
            let info = &self.gens[g.0 as usize];
            if info.t > t {
                continue;
            }
            let basis = self.alg.basis(t - info.t);
            if basis.is_empty() {
                continue;
            }
            offsets.insert(g, items.len());
            let gw = self.weight_of(g);
            for (bi, bw) in basis.weights.iter().enumerate() {
                items.push((g, bi as u32));
                weights.push(if self.mode.is_classical() { 0 } else { gw + bw });
            }
        }
        Slice {
            items,
            weights,
            offsets,
            degree: t,
        }
    }

    /// Matrix of the differential on the span of `col_gens` in degree t,
    /// mapping into the degree-t slice of the module one filtration down.
    /// Chain-direction weights are negated so the entry convention
    /// (exponent = row weight - column weight >= 0) holds.
    fn assemble(&self, col_gens: &[GenId], t: i32, rows: &Slice) -> (MonomialMatrix, Slice) {
        let cols = {
            let mut items = Vec::new();
            let mut weights = Vec::new();
            let mut offsets = HashMap::new();
            for &g in col_gens {
                let info = &self.gens[g.0 as usize];
                if info.t > t {
                    continue;
                }
                let basis = self.alg.basis(t - info.t);
                offsets.insert(g, items.len());
                let gw = self.weight_of(g);
                for (bi, bw) in basis.weights.iter().enumerate() {
                    items.push((g, bi as u32));
                    weights.push(if self.mode.is_classical() { 0 } else { gw + bw });
                }
            }
            Slice {
                items,
                weights,
                offsets,
                degree: t,
            }
        };
        let mut m = MonomialMatrix::new(
            WeightedBasis(rows.weights.iter().map(|&w| -w).collect()),
            WeightedBasis(cols.weights.iter().map(|&w| -w).collect()),
        );
        // Per-generator column blocks are disjoint, so the bit lists can be
        // produced in parallel and written sequentially.
        let blocks: Vec<(usize, Vec<(u32, u32)>)> = col_gens
            .par_iter()
            .filter_map(|&g| {
                let info = &self.gens[g.0 as usize];
                if info.t > t {
                    return None;
                }
                let a = t - info.t;
                let src_dim = self.alg.basis(a).len() as u32;
                let mut bits: Vec<(u32, u32)> = Vec::new();
                for (target, coeff) in &info.diff {
                    let Some(&row_off) = rows.offsets.get(target) else {
                        continue;
                    };
                    for (selt, _) in coeff.terms() {
                        let table = self.alg.mul_table(selt, a);
                        for ci in 0..src_dim {
                            for &ti in &table.cols[ci as usize] {
                                bits.push((ci, row_off as u32 + ti));
                            }
                        }
                    }
                }
                Some((cols.offsets[&g], bits))
            })
            .collect();
        for (base, bits) in blocks {
            for (ci, ri) in bits {
                let col = base + ci as usize;
                let cur = m.bits.get(ri as usize, col);
                m.bits.set(ri as usize, col, !cur);
            }
        }
        (m, cols)
    }

    /// Extend the resolution so that every cell (s, t) with s <= max_s and
    /// t <= max_t is complete.
    pub fn extend(&mut self, max_s: u32, max_t: i32) {
        self.extend_with(max_s, max_t, &mut |_, _| {});
    }

    pub fn extend_with(&mut self, max_s: u32, max_t: i32, on_cell: &mut dyn FnMut(&Resolution, &CellReport)) {
        for s in 1..=max_s {
            if self.by_s.len() <= s as usize {
                self.by_s.push(Vec::new());
                self.complete.push(0);
            }
            assert!(
                self.complete[s as usize - 1] >= max_t,
                "stage {} incomplete below stage {s}",
                s - 1
            );
            for t in self.complete[s as usize] + 1..=max_t {
                let start = Instant::now();
                let new_gens = self.cell(s, t);
                self.complete[s as usize] = t;
                let report = CellReport {
                    s,
                    t,
                    new_gens,
                    elapsed: start.elapsed(),
                };
                on_cell(self, &report);
            }
        }
    }

    /// Compute one cell: adjoin the minimal new generators of F_s in
    /// internal degree t.  Requires all cells (s, < t) and stage s-1 done.
    fn cell(&mut self, s: u32, t: i32) -> Vec<GenId> {
        // Kernel of d_{s-1} on the degree-t slice of F_{s-1}.  For s = 1 the
        // map is the augmentation, which vanishes in positive degree; t = 0
        // is skipped because the augmentation is injective there.
        if s == 1 && t == 0 {
            return Vec::new();
        }
        let ambient = self.slice(s - 1, t);
        if ambient.is_empty() {
            return Vec::new();
        }
        let rows = if s >= 2 {
            self.slice(s - 2, t)
        } else {
            Slice {
                items: Vec::new(),
                weights: Vec::new(),
                offsets: HashMap::new(),
                degree: t,
            }
        };
        let col_gens: Vec<GenId> = self.gens_in(s - 1).to_vec();
        let (m, cols) = self.assemble(&col_gens, t, &rows);
        debug_assert_eq!(cols.items, ambient.items);
        let m_kept = m.clone();
        let red = m.reduce();
        let kernel = red.kernel();
        if kernel.ncols() == 0 {
            return Vec::new();
        }

        // Image of the generators of F_s already chosen in lower degrees.
        let old_gens: Vec<GenId> = self
            .gens_in(s)
            .iter()
            .copied()
            .filter(|&g| self.gens[g.0 as usize].t < t)
            .collect();
        let (im, _im_cols) = self.assemble(&old_gens, t, &ambient);

        // Coordinates of the image inside the kernel.
        let kred = kernel.clone().reduce();
        let coords = kred
            .solve_batch(&im)
            .expect("image lies in the kernel (d o d = 0)");

        // Minimal generators of kernel / image.
        let coker = coords.reduce().cokernel_min_gens();
        let mut picks: Vec<(HomVec, TorsionKind)> = coker.generators;
        // Adjoin order: weight increasing; within a weight, torsion of
        // smallest order first, free generators last.  Note kernel-side
        // weights are negated (chain direction).
        picks.sort_by_key(|(v, kind)| {
            let w = -v.weight;
            let k = match kind {
                TorsionKind::Torsion(k) => (0u8, *k),
                TorsionKind::Free => (1u8, 0),
            };
            (w, k)
        });

        let mut new_ids = Vec::new();
        for (coords_vec, kind) in &picks {
            let ambient_vec = matvec(&kernel, coords_vec);
            let w = -ambient_vec.weight;
            // materialize d(g_new) from the ambient vector
            let mut diff: BTreeMap<GenId, SteenrodElt> = BTreeMap::new();
            for &r in &ambient_vec.support {
                let (g, bi) = ambient.items[r];
                let tgt = &self.gens[g.0 as usize];
                let elt = self.alg.basis(t - tgt.t).elts[bi as usize].clone();
                let exp = if self.mode.is_classical() {
                    0
                } else {
                    w - self.weight_of(g) - elt.bidegree().w
                };
                assert!(exp >= 0, "negative tau exponent in differential");
                diff.entry(g)
                    .or_insert_with(|| {
                        SteenrodElt::zero(crate::grading::Bidegree::new(
                            t - tgt.t,
                            if self.mode.is_classical() { 0 } else { w - self.weight_of(g) },
                        ))
                    })
                    .add_term(elt, TauCoeff::Tau(exp as u32));
            }
            let diff: Vec<(GenId, SteenrodElt)> =
                diff.into_iter().filter(|(_, e)| !e.is_zero()).collect();
            // Minimality: no unit entries.
            for (g, e) in &diff {
                let tgt = &self.gens[g.0 as usize];
                if tgt.t == t && e.coeff(&MilnorElt::unit()) == TauCoeff::ONE {
                    panic!("integrity: unit entry in differential at (s={s}, t={t})");
                }
            }
            // Independent d o d = 0 check against the assembled matrix.
            let boundary = matvec(&m_kept, &ambient_vec);
            if !boundary.is_zero() {
                panic!("integrity: d o d != 0 at (s={s}, t={t})");
            }
            let idx = self
                .gens_in(s)
                .iter()
                .filter(|&&g| {
                    let i = &self.gens[g.0 as usize];
                    i.t == t && i.w == w
                })
                .count() as u32
                + new_ids
                    .iter()
                    .filter(|&&g: &&GenId| self.gens[g.0 as usize].w == w)
                    .count() as u32;
            let id = GenId(self.gens.len() as u32);
            self.gens.push(GenInfo {
                s,
                t,
                w,
                idx,
                diff,
            });
            new_ids.push(id);
            let _ = kind;
        }
        for &id in &new_ids {
            self.by_s[s as usize].push(id);
        }
        new_ids
    }

    /// Re-verify d o d = 0 on every generator with s <= max_s, t <= max_t by
    /// expanding the composite against freshly assembled matrices.
    pub fn verify_dd(&self, max_s: u32, max_t: i32) -> Result<(), ResolutionError> {
        for s in 2..=max_s.min(self.max_s()) {
            let mut by_t: BTreeMap<i32, Vec<GenId>> = BTreeMap::new();
            for &g in self.gens_in(s) {
                let info = &self.gens[g.0 as usize];
                if info.t <= max_t {
                    by_t.entry(info.t).or_default().push(g);
                }
            }
            for (&t, gens) in &by_t {
                let rows = self.slice(s - 2, t);
                let cols = self.slice(s - 1, t);
                let col_gens: Vec<GenId> = self.gens_in(s - 1).to_vec();
                let (m, _) = self.assemble(&col_gens, t, &rows);
                for &g in gens {
                    let v = self.diff_vector(g, &cols);
                    let img = matvec(&m, &v);
                    if !img.is_zero() {
                        return Err(ResolutionError::Integrity(format!(
                            "d o d != 0 on generator at (s={s}, t={t})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Check minimality: no differential has a unit entry.
    pub fn verify_minimal(&self) -> Result<(), ResolutionError> {
        for info in &self.gens {
            for (g, e) in &info.diff {
                let tgt = &self.gens[g.0 as usize];
                if tgt.t == info.t && e.coeff(&MilnorElt::unit()) == TauCoeff::ONE {
                    return Err(ResolutionError::Integrity(format!(
                        "unit entry in differential at (s={}, t={})",
                        info.s, info.t
                    )));
                }
            }
        }
        Ok(())
    }

    /// The differential of g as a homogeneous vector over a degree slice.
    fn diff_vector(&self, g: GenId, slice: &Slice) -> HomVec {
        let info = &self.gens[g.0 as usize];
        let mut support = Vec::new();
        for (target, coeff) in &info.diff {
            let off = slice.offsets[target];
            let basis = self.alg.basis(slice.degree - self.gens[target.0 as usize].t);
            for (elt, _) in coeff.terms() {
                support.push(off + basis.index[elt]);
            }
        }
        support.sort_unstable();
        HomVec {
            weight: if self.mode.is_classical() { 0 } else { -info.w },
            support,
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

pub const CHECKPOINT_HEADER: &str = "motivic resolution checkpoint v1";

impl Resolution {
    /// Serialize one completed cell; lines are appended to the checkpoint.
    /// Differential targets are referenced by (t, w, ordinal), which is
    /// stable across extension schedules, unlike internal indices.
    pub fn checkpoint_cell(&self, s: u32, t: i32, new_gens: &[GenId]) -> String {
        let mut out = format!("cell {s} {t} {}\n", new_gens.len());
        for &g in new_gens {
            let info = &self.gens[g.0 as usize];
            out.push_str(&format!("gen {} {}\n", info.w, info.idx));
            for (tgt, e) in &info.diff {
                let ti = &self.gens[tgt.0 as usize];
                out.push_str(&format!("  d {} {} {} {e}\n", ti.t, ti.w, ti.idx));
            }
        }
        out
    }

    pub fn checkpoint_header(&self) -> String {
        format!("{CHECKPOINT_HEADER}\nmode {}\n", self.mode)
    }

    /// Serialize the whole resolution.
    pub fn to_checkpoint(&self) -> String {
        let mut out = self.checkpoint_header();
        let mut cells: Vec<(u32, i32)> = Vec::new();
        for s in 1..=self.max_s() {
            for t in 1..=self.complete[s as usize] {
                cells.push((s, t));
            }
        }
        // chronological order: stage-major
        for (s, t) in cells {
            let gens = self.gens_at(s, t);
            out.push_str(&self.checkpoint_cell(s, t, &gens));
        }
        out
    }

    /// Parse a checkpoint.  Cells must appear in the order they were
    /// computed; a gap is a frontier regression and is fatal.
    pub fn from_checkpoint(text: &str, alg: Arc<MilnorAlgebra>) -> Result<Resolution, ResolutionError> {
        let mut lines = text.lines().peekable();
        let bad = |m: &str| ResolutionError::Checkpoint(m.to_string());
        if lines.next() != Some(CHECKPOINT_HEADER) {
            return Err(bad("missing or unsupported header"));
        }
        let mode = match lines.next() {
            Some("mode motivic") => Mode::Motivic,
            Some("mode classical") => Mode::Classical,
            _ => return Err(bad("missing mode line")),
        };
        let mut res = Resolution::new(mode, alg);
        let mut lookup: HashMap<(u32, i32, i32, u32), GenId> = HashMap::new();
        lookup.insert((0, 0, 0, 0), GenId(0));
        while let Some(line) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            if parts.next() != Some("cell") {
                return Err(bad(&format!("expected cell line, got {line:?}")));
            }
            let s: u32 = parts
                .next()
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| bad("bad cell s"))?;
            let t: i32 = parts
                .next()
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| bad("bad cell t"))?;
            let n: usize = parts
                .next()
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| bad("bad cell count"))?;
            while res.by_s.len() <= s as usize {
                res.by_s.push(Vec::new());
                res.complete.push(0);
            }
            if res.complete[s as usize] != t - 1 {
                return Err(bad(&format!(
                    "frontier regression: cell ({s},{t}) after t={}",
                    res.complete[s as usize]
                )));
            }
            for _ in 0..n {
                let gl = lines.next().ok_or_else(|| bad("truncated gen"))?;
                let mut gp = gl.split_whitespace();
                if gp.next() != Some("gen") {
                    return Err(bad(&format!("expected gen line, got {gl:?}")));
                }
                let w: i32 = gp
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| bad("bad gen weight"))?;
                let idx: u32 = gp
                    .next()
                    .and_then(|x| x.parse().ok())
                    .ok_or_else(|| bad("bad gen ordinal"))?;
                let mut diff = Vec::new();
                while let Some(peek) = lines.peek() {
                    let trimmed = peek.trim_start();
                    if !trimmed.starts_with("d ") {
                        break;
                    }
                    let dl = lines.next().unwrap().trim_start();
                    let mut dp = dl[2..].splitn(4, ' ');
                    let tt: i32 = dp
                        .next()
                        .and_then(|x| x.parse().ok())
                        .ok_or_else(|| bad("bad target t"))?;
                    let tw: i32 = dp
                        .next()
                        .and_then(|x| x.parse().ok())
                        .ok_or_else(|| bad("bad target w"))?;
                    let tidx: u32 = dp
                        .next()
                        .and_then(|x| x.parse().ok())
                        .ok_or_else(|| bad("bad target ordinal"))?;
                    let elt_text = dp.next().ok_or_else(|| bad("missing element"))?;
                    let tgt = *lookup
                        .get(&(s - 1, tt, tw, tidx))
                        .ok_or_else(|| bad("differential target not yet defined"))?;
                    let elt = crate::text::parse_steenrod_elt(elt_text)
                        .map_err(|e| bad(&format!("bad element: {e}")))?;
                    diff.push((tgt, elt));
                }
                let id = GenId(res.gens.len() as u32);
                lookup.insert((s, t, w, idx), id);
                res.gens.push(GenInfo { s, t, w, idx, diff });
                res.by_s[s as usize].push(id);
            }
            res.complete[s as usize] = t;
        }
        Ok(res)
    }
}

// ---------------------------------------------------------------------------
// Charts, chain lifts, and products
// ---------------------------------------------------------------------------

/// One computed Ext cell: the generators at exactly (s, t), the summand
/// decomposition, and the solver used to express arbitrary cocycles in the
/// summand basis.
pub struct ExtCell {
    pub gens: Vec<GenId>,
    pub weights: Vec<i32>,
    pub summands: Vec<ExtSummand>,
    /// Reduction of [summand reps | boundary columns] over the dual basis.
    class_solver: Option<Reduction>,
}

pub struct ExtSummand {
    pub weight: i32,
    pub kind: TorsionKind,
    /// Cocycle representative over the cell's dual basis.
    pub rep: HomVec,
}

/// A class expression: tau-shifted multiples of cell summands.
pub type ClassExpr = Vec<(usize, u32)>;

pub struct ExtChartIndex {
    pub mode: Mode,
    pub max_s: u32,
    pub max_t: i32,
    pub cells: BTreeMap<(u32, i32), ExtCell>,
    /// Chain lifts of the h0/h1/h2 cocycles: for each generator of F_{k+1},
    /// the image in F_k.
    lifts: [HashMap<GenId, Vec<(GenId, SteenrodElt)>>; 3],
}

impl Resolution {
    /// Dual differential matrix from the (s_from, t) dual basis into the
    /// (s_to = s_from + 1, t) dual basis: entries are the tau-monomial
    /// coefficients of the unit Milnor element in the differentials.
    fn dual_matrix(&self, gens_to: &[GenId], gens_from: &[GenId]) -> MonomialMatrix {
        let rw = WeightedBasis(gens_to.iter().map(|&g| self.weight_of(g)).collect());
        let cw = WeightedBasis(gens_from.iter().map(|&g| self.weight_of(g)).collect());
        let col_index: HashMap<GenId, usize> =
            gens_from.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let mut m = MonomialMatrix::new(rw, cw);
        for (ri, &g) in gens_to.iter().enumerate() {
            for (tgt, e) in &self.gens[g.0 as usize].diff {
                if let Some(&ci) = col_index.get(tgt) {
                    if let TauCoeff::Tau(k) = e.coeff(&MilnorElt::unit()) {
                        debug_assert!(
                            self.mode.is_classical()
                                || k as i32 == self.weight_of(g) - self.weight_of(*tgt)
                        );
                        let _ = k;
                        m.set(ri, ci).expect("dual matrix homogeneous");
                    }
                }
            }
        }
        m
    }

    /// Compute the Ext cells for all (s, t) with s <= max_s, t <= max_t.
    /// Requires the resolution to be complete through (max_s + 1, max_t).
    pub fn ext_cells(&self, max_s: u32, max_t: i32) -> ExtChartIndex {
        assert!(
            self.max_s() >= max_s + 1 && (0..=max_s + 1).all(|s| self.complete_through(s) >= max_t),
            "resolution frontier too small for chart window"
        );
        let mut cells = BTreeMap::new();
        for s in 0..=max_s {
            let by_t: BTreeMap<i32, Vec<GenId>> = {
                let mut m: BTreeMap<i32, Vec<GenId>> = BTreeMap::new();
                for &g in self.gens_in(s) {
                    let t = self.gens[g.0 as usize].t;
                    if t <= max_t {
                        m.entry(t).or_default().push(g);
                    }
                }
                m
            };
            for (&t, gens) in &by_t {
                let cell = self.ext_cell(s, t, gens);
                cells.insert((s, t), cell);
            }
        }
        ExtChartIndex {
            mode: self.mode,
            max_s,
            max_t,
            cells,
            lifts: [HashMap::new(), HashMap::new(), HashMap::new()],
        }
    }

    fn ext_cell(&self, s: u32, t: i32, gens: &[GenId]) -> ExtCell {
        let weights: Vec<i32> = gens.iter().map(|&g| self.weight_of(g)).collect();
        let gens_up = self.gens_at(s + 1, t);
        let out = self.dual_matrix(&gens_up, gens);
        let red = out.reduce();
        let kernel = red.kernel();
        let boundaries: MonomialMatrix = if s >= 1 {
            let gens_down = self.gens_at(s - 1, t);
            self.dual_matrix(gens, &gens_down)
        } else {
            MonomialMatrix::new(
                WeightedBasis(weights.clone()),
                WeightedBasis(Vec::new()),
            )
        };
        let kred = kernel.clone().reduce();
        let coords = kred
            .solve_batch(&boundaries)
            .expect("boundaries are cocycles");
        let coker = coords.reduce().cokernel_min_gens();
        let mut summands = Vec::new();
        for (v, kind) in &coker.generators {
            let rep = matvec(&kernel, v);
            summands.push(ExtSummand {
                weight: v.weight,
                kind: *kind,
                rep,
            });
        }
        // Solver basis: summand reps then boundary columns.
        let class_solver = if summands.is_empty() {
            None
        } else {
            let mut cw: Vec<i32> = summands.iter().map(|x| x.weight).collect();
            for c in 0..boundaries.ncols() {
                cw.push(boundaries.col_weights.weight(c));
            }
            let mut m = MonomialMatrix::new(WeightedBasis(weights.clone()), WeightedBasis(cw));
            for (j, sm) in summands.iter().enumerate() {
                for &r in &sm.rep.support {
                    m.set(r, j).expect("rep homogeneous");
                }
            }
            for c in 0..boundaries.ncols() {
                for r in boundaries.bits.col_support(c) {
                    m.set(r, summands.len() + c).expect("boundary homogeneous");
                }
            }
            Some(m.reduce())
        };
        ExtCell {
            gens: gens.to_vec(),
            weights,
            summands,
            class_solver,
        }
    }
}

impl ExtChartIndex {
    pub fn cell(&self, s: u32, t: i32) -> Option<&ExtCell> {
        self.cells.get(&(s, t))
    }

    /// Express a cocycle (over the (s,t) dual basis) in the summand basis.
    /// Returns pairs (summand index, tau shift).
    pub fn classify(&self, s: u32, t: i32, v: &HomVec) -> Result<ClassExpr, ResolutionError> {
        if v.support.is_empty() {
            return Ok(Vec::new());
        }
        let cell = self
            .cells
            .get(&(s, t))
            .ok_or(ResolutionError::InsufficientFrontier(s, t))?;
        let solver = cell
            .class_solver
            .as_ref()
            .ok_or_else(|| ResolutionError::Integrity("nonzero cocycle in empty cell".into()))?;
        let mut rhs = MonomialMatrix::new(
            WeightedBasis(cell.weights.clone()),
            WeightedBasis(vec![v.weight]),
        );
        for &r in &v.support {
            rhs.set(r, 0)
                .map_err(|e| ResolutionError::Integrity(e.to_string()))?;
        }
        let sol = solver
            .solve_batch(&rhs)
            .map_err(|e| ResolutionError::Integrity(format!("not a cocycle class: {e}")))?;
        let mut out = Vec::new();
        for idx in sol.bits.col_support(0) {
            if idx < cell.summands.len() {
                let shift = cell.summands[idx].weight - v.weight;
                debug_assert!(shift >= 0);
                // Torsion summands absorb tau-shifts beyond their order.
                if let TorsionKind::Torsion(k) = cell.summands[idx].kind {
                    if shift as u32 >= k {
                        continue;
                    }
                }
                out.push((idx, shift as u32));
            }
        }
        Ok(out)
    }
}

impl Resolution {
    /// Compute the chain lifts of the h0/h1/h2 cocycles through filtration
    /// max_s, degree max_t, for use in products.
    pub fn compute_lifts(&self, index: &mut ExtChartIndex) {
        let max_s = index.max_s;
        let max_t = index.max_t;
        for (hi, h) in HMul::ALL.iter().enumerate() {
            let (_, p, _) = h.degree();
            // cocycle of h: the unique summand of cell (1, p)
            let cell = index
                .cells
                .get(&(1, p))
                .unwrap_or_else(|| panic!("cell (1,{p}) missing"));
            assert_eq!(cell.summands.len(), 1, "expected a single class for {}", h.name());
            let rep = cell.summands[0].rep.clone();
            let gens1 = cell.gens.clone();
            // Phi_0 on F_1: g |-> (coefficient of g in the cocycle) * g0
            let mut phi: HashMap<GenId, Vec<(GenId, SteenrodElt)>> = HashMap::new();
            for &g in self.gens_in(1) {
                let info = &self.gens[g.0 as usize];
                if info.t > max_t {
                    continue;
                }
                let mut val = Vec::new();
                if info.t == p {
                    if let Some(pos) = gens1.iter().position(|&x| x == g) {
                        if rep.support.contains(&pos) {
                            let k = if self.mode.is_classical() {
                                0
                            } else {
                                (self.weight_of(g) - rep.weight) as u32
                            };
                            val.push((
                                GenId(0),
                                SteenrodElt::single(MilnorElt::unit(), TauCoeff::Tau(k)),
                            ));
                        }
                    }
                }
                phi.insert(g, val);
            }
            // Phi_k on F_{k+1} by solving d_k x = Phi_{k-1}(d g).
            for k in 1..=max_s.min(self.max_s().saturating_sub(1)) {
                // group generators by solve degree
                let mut by_deg: BTreeMap<i32, Vec<GenId>> = BTreeMap::new();
                for &g in self.gens_in(k + 1) {
                    let t = self.gens[g.0 as usize].t;
                    if t >= p as i32 && t <= max_t {
                        by_deg.entry(t - p as i32).or_default().push(g);
                    }
                }
                for (&tp,glist) in &by_deg {
                    let rows = if k >= 1 {
                        self.slice(k - 1, tp)
                    } else {
                        unreachable!()
                    };
                    let col_gens: Vec<GenId> = self.gens_in(k).to_vec();
                    let (m, cols) = self.assemble(&col_gens, tp, &rows);
                    let red = m.reduce();
                    // Right-hand sides: Phi_{k-1}(d g) for each g.
                    let mut rhs = MonomialMatrix::new(
                        WeightedBasis(rows.weights.iter().map(|&w| -w).collect()),
                        WeightedBasis(
                            glist
                                .iter()
                                .map(|&g| {
                                    if self.mode.is_classical() {
                                        0
                                    } else {
                                        -(self.weight_of(g) - cellw(h))
                                    }
                                })
                                .collect(),
                        ),
                    );
                    for (j, &g) in glist.iter().enumerate() {
                        for r in self.lift_rhs_support(g, &phi, &rows) {
                            let cur = rhs.bits.get(r, j);
                            rhs.bits.set(r, j, !cur);
                        }
                    }
                    let sol = red
                        .solve_batch(&rhs)
                        .expect("chain lift solvable (resolution exact)");
                    for (j, &g) in glist.iter().enumerate() {
                        let mut val: BTreeMap<GenId, SteenrodElt> = BTreeMap::new();
                        let gw = if self.mode.is_classical() {
                            0
                        } else {
                            self.weight_of(g) - cellw(h)
                        };
                        for r in sol.bits.col_support(j) {
                            let (tg, bi) = cols.items[r];
                            let tgt = &self.gens[tg.0 as usize];
                            let elt = self.alg.basis(tp - tgt.t).elts[bi as usize].clone();
                            let exp = if self.mode.is_classical() {
                                0
                            } else {
                                gw - self.weight_of(tg) - elt.bidegree().w
                            };
                            assert!(exp >= 0);
                            val.entry(tg)
                                .or_insert_with(|| {
                                    SteenrodElt::zero(crate::grading::Bidegree::new(
                                        tp - tgt.t,
                                        gw - self.weight_of(tg),
                                    ))
                                })
                                .add_term(elt, TauCoeff::Tau(exp as u32));
                        }
                        phi.insert(g, val.into_iter().filter(|(_, e)| !e.is_zero()).collect());
                    }
                }
            }
            index.lifts[hi] = phi;
        }
    }

    /// Support of Phi_{k-1}(d g) over the given slice of F_{k-1}.
    fn lift_rhs_support(
        &self,
        g: GenId,
        phi: &HashMap<GenId, Vec<(GenId, SteenrodElt)>>,
        rows: &Slice,
    ) -> Vec<usize> {
        let mut acc: HashMap<usize, bool> = HashMap::new();
        for (mid, a) in &self.gens[g.0 as usize].diff {
            let Some(phi_mid) = phi.get(mid) else { continue };
            for (tgt, b) in phi_mid {
                let Some(&off) = rows.offsets.get(tgt) else {
                    continue;
                };
                // expand a * b over the Milnor basis
                let prod = self.alg.product_elts(a, b);
                let basis = self.alg.basis(rows.degree - self.gens[tgt.0 as usize].t);
                for (elt, _) in prod.terms() {
                    let r = off + basis.index[elt];
                    *acc.entry(r).or_insert(false) ^= true;
                }
            }
        }
        let mut out: Vec<usize> = acc
            .into_iter()
            .filter_map(|(r, p)| p.then_some(r))
            .collect();
        out.sort_unstable();
        out
    }

    /// Multiply a chart class by h, expressing the result in the target
    /// cell's summand basis.
    pub fn multiply_by(
        &self,
        index: &ExtChartIndex,
        s: u32,
        t: i32,
        expr: &ClassExpr,
        h: HMul,
    ) -> Result<(u32, i32, ClassExpr), ResolutionError> {
        let (_, p, _) = h.degree();
        let ts = s + 1;
        let tt = t + p;
        if ts > index.max_s || tt > index.max_t {
            return Err(ResolutionError::InsufficientFrontier(ts, tt));
        }
        let hi = HMul::ALL.iter().position(|&x| x == h).unwrap();
        let lifts = &index.lifts[hi];
        assert!(!lifts.is_empty(), "lifts not computed");
        let cell = index
            .cells
            .get(&(s, t))
            .ok_or(ResolutionError::InsufficientFrontier(s, t))?;
        let target_gens = self.gens_at(ts, tt);
        let mut total: ClassExpr = Vec::new();
        for &(idx, shift) in expr {
            let sm = &cell.summands[idx];
            let u = sm.weight - shift as i32;
            // evaluate (phi_class o Phi_s) on each generator of F_{s+1} at tt
            let mut support = Vec::new();
            for (gi, &g) in target_gens.iter().enumerate() {
                let Some(phig) = lifts.get(&g) else { continue };
                let mut parity = false;
                for (tgt, b) in phig {
                    if self.gens[tgt.0 as usize].t != t {
                        continue;
                    }
                    if let Some(pos) = cell.gens.iter().position(|&x| x == *tgt) {
                        if sm.rep.support.contains(&pos)
                            && b.coeff(&MilnorElt::unit()) != TauCoeff::Zero
                        {
                            parity ^= true;
                        }
                    }
                }
                if parity {
                    support.push(gi);
                }
            }
            let v = HomVec {
                weight: if self.mode.is_classical() {
                    0
                } else {
                    u + cellw(&h)
                },
                support,
            };
            let terms = index.classify(ts, tt, &v)?;
            for (j, k) in terms {
                // accumulate mod 2
                if let Some(pos) = total.iter().position(|&(jj, kk)| (jj, kk) == (j, k)) {
                    total.remove(pos);
                } else {
                    total.push((j, k));
                }
            }
        }
        total.sort_unstable();
        Ok((ts, tt, total))
    }
}

/// Weight of the h multiplier.
fn cellw(h: &HMul) -> i32 {
    h.degree().2
}

// ---------------------------------------------------------------------------
// Chart assembly
// ---------------------------------------------------------------------------

impl Resolution {
    /// Build the chart for stems <= max_stem, filtrations <= max_s, with
    /// labels from the given map (s, stem, weight) -> label, and product
    /// edges computed by chain-level multiplication.
    pub fn chart(
        &self,
        index: &ExtChartIndex,
        max_stem: i32,
        max_s: u32,
        labels: &BTreeMap<(u32, i32, i32), String>,
    ) -> Chart {
        let mut chart = Chart::new(self.mode, max_stem, max_s);
        for (&(s, t), cell) in &index.cells {
            let stem = t - s as i32;
            if s > max_s || stem > max_stem || stem < 0 {
                continue;
            }
            let summands: Vec<Summand> = cell
                .summands
                .iter()
                .map(|sm| Summand {
                    weight: sm.weight,
                    kind: sm.kind,
                    label: labels.get(&(s, stem, sm.weight)).cloned(),
                })
                .collect();
            if !summands.is_empty() {
                chart.cells.insert((stem, s), summands);
            }
        }
        // product edges
        for (&(s, t), cell) in &index.cells {
            let stem = t - s as i32;
            if s > max_s || stem > max_stem || stem < 0 {
                continue;
            }
            for (i, _) in cell.summands.iter().enumerate() {
                for h in HMul::ALL {
                    let (_, p, _) = h.degree();
                    let (ts, tt) = (s + 1, t + p);
                    if ts > index.max_s || tt > index.max_t {
                        continue;
                    }
                    let tstem = tt - ts as i32;
                    if ts > max_s || tstem > max_stem {
                        continue;
                    }
                    let Ok((_, _, terms)) = self.multiply_by(index, s, t, &vec![(i, 0)], h) else {
                        continue;
                    };
                    for (j, k) in terms {
                        chart.edges.push(Edge {
                            from: ClassRef { stem, s, index: i },
                            multiplier: h,
                            to: ClassRef {
                                stem: tstem,
                                s: ts,
                                index: j,
                            },
                            tau_shift: k,
                        });
                    }
                }
            }
        }
        chart
            .edges
            .sort_by_key(|e| (e.from, e.multiplier, e.to, e.tau_shift));
        chart
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_res(max_s: u32, max_t: i32) -> Resolution {
        let mut res = Resolution::new(Mode::Motivic, Arc::new(MilnorAlgebra::new()));
        res.extend(max_s, max_t);
        res
    }

    #[test]
    fn first_stage_generators() {
        let res = small_res(2, 8);
        // F_1 generators in t <= 8 are exactly at t in {1, 2, 4, 8}
        let ts: Vec<i32> = res
            .gens_in(1)
            .iter()
            .map(|&g| res.gen_info(g).t)
            .collect();
        assert_eq!(ts, vec![1, 2, 4, 8]);
        let ws: Vec<i32> = res
            .gens_in(1)
            .iter()
            .map(|&g| res.gen_info(g).w)
            .collect();
        assert_eq!(ws, vec![0, 1, 2, 4]);
    }

    #[test]
    fn first_syzygy() {
        let res = small_res(2, 4);
        // F_2 generator in t = 2: d includes Sq^1 * (Sq^1 generator)
        let gens = res.gens_at(2, 2);
        assert_eq!(gens.len(), 1);
        let info = res.gen_info(gens[0]);
        let (tgt, e) = &info.diff[0];
        assert_eq!(res.gen_info(*tgt).t, 1);
        assert_eq!(
            e.coeff(&MilnorElt::from_slice(&[1])),
            TauCoeff::ONE
        );
    }

    #[test]
    fn ext0_is_free_weight_zero() {
        let res = small_res(2, 4);
        let index = res.ext_cells(1, 3);
        let cell = index.cell(0, 0).unwrap();
        assert_eq!(cell.summands.len(), 1);
        assert_eq!(cell.summands[0].weight, 0);
        assert_eq!(cell.summands[0].kind, TorsionKind::Free);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let res = small_res(3, 10);
        let text = res.to_checkpoint();
        let back = Resolution::from_checkpoint(&text, res.alg.clone()).unwrap();
        assert_eq!(back.to_checkpoint(), text);
        assert_eq!(back.num_gens(), res.num_gens());
    }

    #[test]
    fn resume_matches_fresh() {
        let alg = Arc::new(MilnorAlgebra::new());
        let mut fresh = Resolution::new(Mode::Motivic, alg.clone());
        fresh.extend(4, 12);
        let mut partial = Resolution::new(Mode::Motivic, alg.clone());
        partial.extend(4, 7);
        let mut resumed = Resolution::from_checkpoint(&partial.to_checkpoint(), alg).unwrap();
        resumed.extend(4, 12);
        assert_eq!(resumed.to_checkpoint(), fresh.to_checkpoint());
    }

    #[test]
    fn dd_zero_and_minimal() {
        let res = small_res(4, 12);
        res.verify_minimal().unwrap();
        res.verify_dd(4, 12).unwrap();
    }

    #[test]
    fn h1_tower_torsion() {
        // tau h1^4 = 0 with h1^4 != 0: the (4,8) cell has a torsion summand
        let res = small_res(6, 14);
        let index = res.ext_cells(5, 12);
        let cell = index.cell(4, 8).unwrap();
        assert_eq!(cell.summands.len(), 1);
        assert_eq!(cell.summands[0].kind, TorsionKind::Torsion(1));
        assert_eq!(cell.summands[0].weight, 4);
    }

    #[test]
    fn h0_h2_relation_tau_h1_cubed() {
        // h0^2 h2 = tau h1^3 at (s,t) = (3,6)
        let res = small_res(5, 12);
        let mut index = res.ext_cells(4, 10);
        res.compute_lifts(&mut index);
        // h2 at (1,4): multiply by h0 twice
        let cell = index.cell(1, 4).unwrap();
        assert_eq!(cell.summands.len(), 1);
        let (s1, t1, e1) = res
            .multiply_by(&index, 1, 4, &vec![(0, 0)], HMul::H0)
            .unwrap();
        assert_eq!(e1.len(), 1);
        let (s2, t2, e2) = res.multiply_by(&index, s1, t1, &e1, HMul::H0).unwrap();
        assert_eq!((s2, t2), (3, 6));
        // result is tau * (the generator h1^3 of weight 3)
        assert_eq!(e2.len(), 1);
        let (idx, shift) = e2[0];
        assert_eq!(shift, 1);
        assert_eq!(index.cell(3, 6).unwrap().summands[idx].weight, 3);
        // and h1^3 itself: h1 * h1 * h1
        let (s1, t1, f1) = res
            .multiply_by(&index, 1, 2, &vec![(0, 0)], HMul::H1)
            .unwrap();
        let (s2, t2, f2) = res.multiply_by(&index, s1, t1, &f1, HMul::H1).unwrap();
        assert_eq!((s2, t2), (3, 6));
        assert_eq!(f2, vec![(idx, 0)]);
    }

    #[test]
    fn h0_h1_is_zero() {
        let res = small_res(4, 8);
        let mut index = res.ext_cells(3, 6);
        res.compute_lifts(&mut index);
        let (_, _, e) = res
            .multiply_by(&index, 1, 2, &vec![(0, 0)], HMul::H0)
            .unwrap();
        assert!(e.is_empty(), "h0 h1 should vanish, got {e:?}");
    }
}
