//! The piecewise-affine solution map: point location and JSON storage.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::avi::{ActivePiece, ActiveSet, PieceFlag};
use crate::error::{Error, Result};
use crate::game::{AgentBlock, CondensedAvi, ParamBox};
use crate::linalg::{mat_from_rows, mat_to_rows};
use crate::polyhedra::Polyhedron;

pub const FORMAT_VERSION: u32 = 1;
/// Membership tolerance of point location.
pub const LOCATE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapDims {
    pub n: usize,
    pub n_inputs: usize,
    pub n_constraints: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitMap {
    pub pieces: Vec<ActivePiece>,
    pub x_box: ParamBox,
    pub param_cuts: Polyhedron,
    pub dims: MapDims,
    pub agents: Vec<AgentBlock>,
    /// `(C, D, c)` of the feasible-input set, for infeasibility checks.
    pub c_u: DMatrix<f64>,
    pub d_x: DMatrix<f64>,
    pub c: DVector<f64>,
    pub completed: bool,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    Solution { u: DVector<f64>, piece: usize },
    Infeasible,
    Uncovered,
}

impl Evaluation {
    pub fn solution(&self) -> Option<&DVector<f64>> {
        match self {
            Evaluation::Solution { u, .. } => Some(u),
            _ => None,
        }
    }
}

/// Full pieces before lower-dimensional ones, each group by active set.
pub fn canonical_sort(pieces: &mut [ActivePiece]) {
    pieces.sort_by(|a, b| {
        let rank = |p: &ActivePiece| matches!(p.flag, PieceFlag::LowerDimensional) as u8;
        rank(a)
            .cmp(&rank(b))
            .then_with(|| a.active_set.cmp(&b.active_set))
    });
}

impl ExplicitMap {
    /// Wrap pieces computed for `avi`, sorting them canonically.
    pub fn new(avi: &CondensedAvi, mut pieces: Vec<ActivePiece>, completed: bool) -> Self {
        canonical_sort(&mut pieces);
        Self {
            pieces,
            x_box: avi.x_box.clone(),
            param_cuts: avi.param_cuts.clone(),
            dims: MapDims {
                n: avi.n,
                n_inputs: avi.n_inputs(),
                n_constraints: avi.n_constraints(),
            },
            agents: avi.agents.clone(),
            c_u: avi.c_u.clone(),
            d_x: avi.d_x.clone(),
            c: avi.c.clone(),
            completed,
            provenance: avi.digest(),
        }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Index of the first piece whose region contains `x`.
    pub fn locate(&self, x: &DVector<f64>) -> Option<usize> {
        self.pieces
            .iter()
            .position(|p| p.region.contains(x, LOCATE_TOL))
    }

    pub fn feasible_inputs(&self, x: &DVector<f64>) -> Polyhedron {
        Polyhedron::new(self.c_u.clone(), &self.c - &self.d_x * x)
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        if x.len() != self.dims.n {
            return Err(Error::Dimension(format!(
                "parameter has {} entries, expected {}",
                x.len(),
                self.dims.n
            )));
        }
        if !self.x_box.contains(x, 0.0) || !self.param_cuts.contains(x, 0.0) {
            return Ok(Evaluation::Uncovered);
        }
        if let Some(k) = self.locate(x) {
            return Ok(Evaluation::Solution {
                u: self.pieces[k].primal(x),
                piece: k,
            });
        }
        if self.feasible_inputs(x).feasibility()?.is_empty() {
            Ok(Evaluation::Infeasible)
        } else {
            Ok(Evaluation::Uncovered)
        }
    }

    pub fn serialize(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(&MapFile::from(self))?)
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let file: MapFile =
            serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("map payload: {e}")))?;
        file.into_map()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.serialize()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::deserialize(&std::fs::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    format_version: u32,
    dims: MapDims,
    #[serde(rename = "box")]
    x_box: BoxFile,
    param_cuts: HalfspaceFile,
    constraints: ConstraintFile,
    agents: Vec<AgentFile>,
    completed: bool,
    provenance: String,
    pieces: Vec<PieceFile>,
}

#[derive(Serialize, Deserialize)]
struct BoxFile {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HalfspaceFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConstraintFile {
    #[serde(rename = "C")]
    c_u: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d_x: Vec<Vec<f64>>,
    c: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AgentFile {
    offset: usize,
    m: usize,
    horizon: usize,
}

#[derive(Serialize, Deserialize)]
struct PieceFile {
    active_set: ActiveSet,
    #[serde(rename = "Ku")]
    ku: Vec<Vec<f64>>,
    #[serde(rename = "ku")]
    ku0: Vec<f64>,
    #[serde(rename = "Kl")]
    kl: Vec<Vec<f64>>,
    #[serde(rename = "kl")]
    kl0: Vec<f64>,
    #[serde(rename = "E")]
    e_mat: Vec<Vec<f64>>,
    e: Vec<f64>,
    flag: PieceFlag,
}

impl From<&ExplicitMap> for MapFile {
    fn from(m: &ExplicitMap) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dims: m.dims,
            x_box: BoxFile {
                lo: m.x_box.lo.iter().copied().collect(),
                hi: m.x_box.hi.iter().copied().collect(),
            },
            param_cuts: HalfspaceFile {
                a: mat_to_rows(&m.param_cuts.a),
                b: m.param_cuts.b.iter().copied().collect(),
            },
            constraints: ConstraintFile {
                c_u: mat_to_rows(&m.c_u),
                d_x: mat_to_rows(&m.d_x),
                c: m.c.iter().copied().collect(),
            },
            agents: m
                .agents
                .iter()
                .map(|a| AgentFile { offset: a.offset, m: a.m, horizon: a.horizon })
                .collect(),
            completed: m.completed,
            provenance: m.provenance.clone(),
            pieces: m
                .pieces
                .iter()
                .map(|p| PieceFile {
                    active_set: p.active_set.clone(),
                    ku: mat_to_rows(&p.ku),
                    ku0: p.ku0.iter().copied().collect(),
                    kl: mat_to_rows(&p.kl),
                    kl0: p.kl0.iter().copied().collect(),
                    e_mat: mat_to_rows(&p.region.a),
                    e: p.region.b.iter().copied().collect(),
                    flag: p.flag,
                })
                .collect(),
        }
    }
}

fn check_len(v: &[f64], len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::Format(format!("{what}: {} entries, expected {len}", v.len())));
    }
    Ok(())
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::Format(format!("{what}: {} rows, expected {nrows}", rows.len())));
    }
    mat_from_rows(rows, ncols, what).map_err(|e| Error::Format(e.to_string()))
}

impl MapFile {
    fn into_map(self) -> Result<ExplicitMap> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let MapDims { n, n_inputs, n_constraints: p } = self.dims;
        check_len(&self.x_box.lo, n, "box.lo")?;
        check_len(&self.x_box.hi, n, "box.hi")?;
        let cuts = matrix(&self.param_cuts.a, self.param_cuts.b.len(), n, "param_cuts.A")?;
        let c_u = matrix(&self.constraints.c_u, p, n_inputs, "constraints.C")?;
        let d_x = matrix(&self.constraints.d_x, p, n, "constraints.D")?;
        check_len(&self.constraints.c, p, "constraints.c")?;
        let mut pieces = Vec::with_capacity(self.pieces.len());
        for (k, pf) in self.pieces.into_iter().enumerate() {
            let na = pf.active_set.len();
            if pf.active_set.indices().iter().any(|&i| i >= p) {
                return Err(Error::Format(format!("piece {k}: active index out of range")));
            }
            check_len(&pf.ku0, n_inputs, "ku")?;
            check_len(&pf.kl0, na, "kl")?;
            let region = Polyhedron::new(
                matrix(&pf.e_mat, pf.e.len(), n, "E")?,
                DVector::from_vec(pf.e),
            );
            pieces.push(ActivePiece {
                ku: matrix(&pf.ku, n_inputs, n, "Ku")?,
                ku0: DVector::from_vec(pf.ku0),
                kl: matrix(&pf.kl, na, n, "Kl")?,
                kl0: DVector::from_vec(pf.kl0),
                active_set: pf.active_set,
                region,
                flag: pf.flag,
            });
        }
        Ok(ExplicitMap {
            pieces,
            x_box: ParamBox::new(self.x_box.lo, self.x_box.hi),
            param_cuts: Polyhedron::new(cuts, DVector::from_vec(self.param_cuts.b)),
            dims: self.dims,
            agents: self
                .agents
                .into_iter()
                .map(|a| AgentBlock { offset: a.offset, m: a.m, horizon: a.horizon })
                .collect(),
            c_u,
            d_x,
            c: DVector::from_vec(self.constraints.c),
            completed: self.completed,
            provenance: self.provenance,
        })
    }
}
