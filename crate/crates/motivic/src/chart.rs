//! Chart data model and its JSON file format.
//!
//! A chart stores, per (Adams filtration s, stem), the list of summands of
//! the computed group — each a free module or a tau-power torsion module
//! with a generator weight — together with the h0/h1/h2 product edges.
//! Files round-trip bit-exactly: records are kept sorted by (stem, s,
//! weight) and the writer is canonical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grading::Mode;
use crate::linalg::TorsionKind;

pub const CHART_SCHEMA: &str = "motivic-chart/1";

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad chart file: {0}")]
    Malformed(String),
}

/// Multiplier of a product edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HMul {
    H0,
    H1,
    H2,
}

impl HMul {
    pub const ALL: [HMul; 3] = [HMul::H0, HMul::H1, HMul::H2];

    /// Degree shift (s, t, w) of the multiplication.
    pub fn degree(self) -> (u32, i32, i32) {
        match self {
            HMul::H0 => (1, 1, 0),
            HMul::H1 => (1, 2, 1),
            HMul::H2 => (1, 4, 2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HMul::H0 => "h0",
            HMul::H1 => "h1",
            HMul::H2 => "h2",
        }
    }

    pub fn from_name(s: &str) -> Option<HMul> {
        match s {
            "h0" => Some(HMul::H0),
            "h1" => Some(HMul::H1),
            "h2" => Some(HMul::H2),
            _ => None,
        }
    }
}

/// One summand of a chart cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summand {
    pub weight: i32,
    pub kind: TorsionKind,
    pub label: Option<String>,
}

/// Reference to a summand by cell position and index within the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ClassRef {
    pub stem: i32,
    pub s: u32,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: ClassRef,
    pub multiplier: HMul,
    pub to: ClassRef,
    pub tau_shift: u32,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub mode: Mode,
    pub max_stem: i32,
    pub max_s: u32,
    pub cells: BTreeMap<(i32, u32), Vec<Summand>>,
    pub edges: Vec<Edge>,
    pub ledger_provenance: Vec<String>,
}

impl Chart {
    pub fn new(mode: Mode, max_stem: i32, max_s: u32) -> Self {
        Chart {
            mode,
            max_stem,
            max_s,
            cells: BTreeMap::new(),
            edges: Vec::new(),
            ledger_provenance: Vec::new(),
        }
    }

    pub fn cell(&self, stem: i32, s: u32) -> &[Summand] {
        self.cells.get(&(stem, s)).map_or(&[], |v| v.as_slice())
    }

    pub fn summand(&self, r: ClassRef) -> Option<&Summand> {
        self.cells.get(&(r.stem, r.s))?.get(r.index)
    }

    /// The multiset {(s, stem, weight, kind)} restricted to a window.
    pub fn summand_multiset(&self, max_stem: i32, max_s: u32) -> Vec<(u32, i32, i32, TorsionKind)> {
        let mut out = Vec::new();
        for (&(stem, s), summands) in &self.cells {
            if stem > max_stem || s > max_s {
                continue;
            }
            for sm in summands {
                out.push((s, stem, sm.weight, sm.kind));
            }
        }
        out.sort();
        out
    }

    /// Look up a class by label.
    pub fn by_label(&self, label: &str) -> Option<ClassRef> {
        for (&(stem, s), summands) in &self.cells {
            for (i, sm) in summands.iter().enumerate() {
                if sm.label.as_deref() == Some(label) {
                    return Some(ClassRef { stem, s, index: i });
                }
            }
        }
        None
    }

    /// Resolve a class at (s, stem) by weight; None if absent or ambiguous.
    pub fn by_weight(&self, stem: i32, s: u32, weight: i32) -> Option<ClassRef> {
        let cell = self.cell(stem, s);
        let mut found = None;
        for (i, sm) in cell.iter().enumerate() {
            if sm.weight == weight {
                if found.is_some() {
                    return None;
                }
                found = Some(ClassRef { stem, s, index: i });
            }
        }
        found
    }

    pub fn to_file(&self) -> ChartFile {
        let mut summands = Vec::new();
        for (&(stem, s), cell) in &self.cells {
            for sm in cell {
                let (kind, torsion_order) = match sm.kind {
                    TorsionKind::Free => ("free", None),
                    TorsionKind::Torsion(k) => ("torsion", Some(k)),
                };
                summands.push(SummandRecord {
                    stem,
                    s,
                    weight: sm.weight,
                    kind: kind.to_string(),
                    torsion_order,
                    label: sm.label.clone(),
                });
            }
        }
        summands.sort_by_key(|r| (r.stem, r.s, r.weight, r.torsion_order));
        let mut edges: Vec<EdgeRecord> = self
            .edges
            .iter()
            .map(|e| EdgeRecord {
                from: [e.from.stem as i64, e.from.s as i64, e.from.index as i64],
                multiplier: e.multiplier.name().to_string(),
                to: [e.to.stem as i64, e.to.s as i64, e.to.index as i64],
                tau_shift: e.tau_shift,
            })
            .collect();
        edges.sort_by(|a, b| (a.from, &a.multiplier, a.to).cmp(&(b.from, &b.multiplier, b.to)));
        ChartFile {
            schema: CHART_SCHEMA.to_string(),
            mode: self.mode.to_string(),
            max_stem: self.max_stem,
            max_s: self.max_s,
            summands,
            edges,
            ledger: self.ledger_provenance.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("chart serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Chart, ChartError> {
        let file: ChartFile = serde_json::from_str(text)?;
        file.into_chart()
    }
}

/// The serialized form.  `summands` are sorted by (stem, s, weight); the
/// index of a summand within its (stem, s) cell, in this order, is what
/// edge records reference.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ChartFile {
    pub schema: String,
    pub mode: String,
    pub max_stem: i32,
    pub max_s: u32,
    pub summands: Vec<SummandRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default)]
    pub ledger: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SummandRecord {
    pub stem: i32,
    pub s: u32,
    pub weight: i32,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torsion_order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct EdgeRecord {
    pub from: [i64; 3],
    pub multiplier: String,
    pub to: [i64; 3],
    pub tau_shift: u32,
}

impl ChartFile {
    pub fn into_chart(self) -> Result<Chart, ChartError> {
        if self.schema != CHART_SCHEMA {
            return Err(ChartError::Malformed(format!(
                "unknown schema {:?}",
                self.schema
            )));
        }
        let mode = match self.mode.as_str() {
            "motivic" => Mode::Motivic,
            "classical" => Mode::Classical,
            other => {
                return Err(ChartError::Malformed(format!("unknown mode {other:?}")));
            }
        };
        let mut chart = Chart::new(mode, self.max_stem, self.max_s);
        for r in &self.summands {
            let kind = match (r.kind.as_str(), r.torsion_order) {
                ("free", None) => TorsionKind::Free,
                ("torsion", Some(k)) if k >= 1 => TorsionKind::Torsion(k),
                _ => {
                    return Err(ChartError::Malformed(format!(
                        "bad kind {:?}/{:?} at stem {} s {}",
                        r.kind, r.torsion_order, r.stem, r.s
                    )));
                }
            };
            chart.cells.entry((r.stem, r.s)).or_default().push(Summand {
                weight: r.weight,
                kind,
                label: r.label.clone(),
            });
        }
        let lookup = |p: [i64; 3]| -> Result<ClassRef, ChartError> {
            let (stem, s, index) = (p[0] as i32, p[1] as u32, p[2] as usize);
            let cell = chart.cells.get(&(stem, s)).ok_or_else(|| {
                ChartError::Malformed(format!("edge references empty cell ({stem},{s})"))
            })?;
            if index >= cell.len() {
                return Err(ChartError::Malformed(format!(
                    "edge index {index} out of range at ({stem},{s})"
                )));
            }
            Ok(ClassRef { stem, s, index })
        };
        for e in &self.edges {
            let multiplier = HMul::from_name(&e.multiplier).ok_or_else(|| {
                ChartError::Malformed(format!("unknown multiplier {:?}", e.multiplier))
            })?;
            chart.edges.push(Edge {
                from: lookup(e.from)?,
                multiplier,
                to: lookup(e.to)?,
                tau_shift: e.tau_shift,
            });
        }
        chart.ledger_provenance = self.ledger;
        Ok(chart)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_json() {
        let mut chart = Chart::new(Mode::Motivic, 4, 4);
        chart.cells.insert(
            (0, 0),
            vec![Summand {
                weight: 0,
                kind: TorsionKind::Free,
                label: None,
            }],
        );
        chart.cells.insert(
            (4, 4),
            vec![Summand {
                weight: 4,
                kind: TorsionKind::Torsion(1),
                label: Some("h1^4".into()),
            }],
        );
        chart.cells.insert(
            (1, 1),
            vec![Summand {
                weight: 1,
                kind: TorsionKind::Free,
                label: Some("h1".into()),
            }],
        );
        chart.edges.push(Edge {
            from: ClassRef {
                stem: 0,
                s: 0,
                index: 0,
            },
            multiplier: HMul::H1,
            to: ClassRef {
                stem: 1,
                s: 1,
                index: 0,
            },
            tau_shift: 0,
        });
        let json = chart.to_json();
        let back = Chart::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert_eq!(back.cell(4, 4)[0].kind, TorsionKind::Torsion(1));
        assert_eq!(back.by_label("h1").unwrap(), ClassRef { stem: 1, s: 1, index: 0 });
    }

    #[test]
    fn rejects_bad_schema() {
        let mut chart = Chart::new(Mode::Motivic, 0, 0);
        chart.cells.insert(
            (0, 0),
            vec![Summand {
                weight: 0,
                kind: TorsionKind::Free,
                label: None,
            }],
        );
        let json = chart.to_json().replace("motivic-chart/1", "motivic-chart/9");
        assert!(Chart::from_json(&json).is_err());
    }
}
