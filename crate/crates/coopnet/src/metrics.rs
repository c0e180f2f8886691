//! Graph observables: degree statistics, degree assortativity, and
//! extraction of the binary cooperation graph from a cooperation state.

use crate::dynamics::CooperationState;
use crate::error::{Error, Result};
use crate::model::BinaryGraph;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub degrees: Vec<usize>,
    pub mean: f64,
    pub histogram: BTreeMap<usize, usize>,
}

/// Degree assortativity, or a marker for the configurations where the
/// Pearson correlation is undefined. Never silently 0 or NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Assortativity {
    Defined(f64),
    Undefined(UndefinedReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UndefinedReason {
    NoEdges,
    ZeroDegreeVariance,
}

impl UndefinedReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            UndefinedReason::NoEdges => "no edges",
            UndefinedReason::ZeroDegreeVariance => "zero degree variance at edge endpoints",
        }
    }
}

impl Assortativity {
    pub fn value(&self) -> Option<f64> {
        match self {
            Assortativity::Defined(v) => Some(*v),
            Assortativity::Undefined(_) => None,
        }
    }

    /// CSV token: the value, or the literal `NA` when undefined.
    pub fn csv_token(&self) -> String {
        match self {
            Assortativity::Defined(v) => crate::io::fmt_float(*v),
            Assortativity::Undefined(_) => "NA".to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct AssortativityRepr {
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

impl Serialize for Assortativity {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            Assortativity::Defined(v) => AssortativityRepr {
                value: Some(*v),
                reason: None,
            },
            Assortativity::Undefined(r) => AssortativityRepr {
                value: None,
                reason: Some(r.as_str().to_string()),
            },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Assortativity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = AssortativityRepr::deserialize(deserializer)?;
        match (repr.value, repr.reason.as_deref()) {
            (Some(v), _) => Ok(Assortativity::Defined(v)),
            (None, Some("no edges")) => Ok(Assortativity::Undefined(UndefinedReason::NoEdges)),
            (None, Some(_)) | (None, None) => Ok(Assortativity::Undefined(
                UndefinedReason::ZeroDegreeVariance,
            )),
        }
    }
}

/// Exact degree vector, mean 2|E|/N, and degree histogram.
pub fn degree_stats(g: &BinaryGraph) -> DegreeStats {
    let degrees = g.degrees();
    let mean = 2.0 * g.edge_count() as f64 / g.n() as f64;
    let mut histogram = BTreeMap::new();
    for &d in &degrees {
        *histogram.entry(d).or_insert(0) += 1;
    }
    DegreeStats {
        degrees,
        mean,
        histogram,
    }
}

/// Pearson correlation of degrees over the 2|E| ordered edge endpoint
/// pairs (each undirected edge contributes both orientations).
pub fn assortativity(g: &BinaryGraph) -> Assortativity {
    if g.edge_count() == 0 {
        return Assortativity::Undefined(UndefinedReason::NoEdges);
    }
    let deg = g.degrees();
    let m = 2.0 * g.edge_count() as f64;
    let mut sum_x = 0.0;
    let mut sum_x2 = 0.0;
    let mut sum_xy = 0.0;
    for &(a, b) in g.edges() {
        let da = deg[a as usize] as f64;
        let db = deg[b as usize] as f64;
        sum_x += da + db;
        sum_x2 += da * da + db * db;
        sum_xy += 2.0 * da * db;
    }
    let mean = sum_x / m;
    let var = sum_x2 / m - mean * mean;
    if var <= 0.0 {
        return Assortativity::Undefined(UndefinedReason::ZeroDegreeVariance);
    }
    let cov = sum_xy / m - mean * mean;
    Assortativity::Defined(cov / var)
}

/// Binarizes a cooperation state: edge {i, j} present iff
/// `e_ij + e_ji > threshold`. The symmetric sum is used because the
/// mutual benefit couples the two directions.
pub fn cooperation_graph(state: &CooperationState, threshold: f64) -> Result<BinaryGraph> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!(
            "cooperation threshold must be >= 0, got {threshold}"
        )));
    }
    let n = state.n();
    let e = state.weights();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if e.get(i, j) + e.get(j, i) > threshold {
                edges.push((i as u32, j as u32));
            }
        }
    }
    BinaryGraph::from_edges(n, edges)
}
