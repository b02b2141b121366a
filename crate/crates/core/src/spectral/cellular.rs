use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Scalar, SpectralError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    pub dim: usize,
}

/// An oriented edge `u -> v` with its two restriction maps into the edge stalk.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge<T: Scalar> {
    pub u: usize,
    pub v: usize,
    pub dim: usize,
    /// `dim x dim(u)`
    pub restriction_u: DMatrix<T>,
    /// `dim x dim(v)`
    pub restriction_v: DMatrix<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawEdge<T> {
    u: String,
    v: String,
    dim: usize,
    restriction_u: Vec<T>,
    restriction_v: Vec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawSheaf<T> {
    vertices: Vec<Vertex>,
    edges: Vec<RawEdge<T>>,
}

/// A cellular sheaf on a graph: a vector space on every vertex and edge and
/// a linear restriction map for every incidence.
///
/// Serializes with vertex ids and row-major restriction matrices:
/// `{"vertices":[{"id":"a","dim":1}],"edges":[{"u":"a","v":"b","dim":1,"restrictionU":[1],"restrictionV":[1]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSheaf<T>", into = "RawSheaf<T>", bound = "T: Scalar")]
pub struct CellularSheaf<T: Scalar> {
    vertices: Vec<Vertex>,
    edges: Vec<Edge<T>>,
    offsets: Vec<usize>,
}

impl<T: Scalar> CellularSheaf<T> {
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge<T>>) -> Result<Self, SpectralError> {
        let mut seen = BTreeMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if v.dim == 0 {
                return Err(SpectralError::ZeroDim(v.id.clone()));
            }
            if seen.insert(v.id.as_str(), i).is_some() {
                return Err(SpectralError::DuplicateVertex(v.id.clone()));
            }
        }
        for (k, e) in edges.iter().enumerate() {
            if e.u >= vertices.len() || e.v >= vertices.len() {
                return Err(SpectralError::UnknownVertex(format!("edge {k}")));
            }
            if e.u == e.v {
                return Err(SpectralError::SelfLoop(k));
            }
            if e.dim == 0 {
                return Err(SpectralError::ZeroDim(format!("edge {k}")));
            }
            for (m, vtx) in [(&e.restriction_u, e.u), (&e.restriction_v, e.v)] {
                let expected = (e.dim, vertices[vtx].dim);
                if m.shape() != expected {
                    return Err(SpectralError::ShapeMismatch {
                        edge: k,
                        expected,
                        found: m.shape(),
                    });
                }
            }
        }
        let offsets = vertices
            .iter()
            .scan(0, |acc, v| {
                let o = *acc;
                *acc += v.dim;
                Some(o)
            })
            .collect();
        Ok(Self {
            vertices,
            edges,
            offsets,
        })
    }

    /// The constant sheaf: scalar stalks and identity restrictions.
    /// Vertices are named `"0"`, `"1"`, ...
    pub fn constant(n: usize, edges: &[(usize, usize)]) -> Result<Self, SpectralError> {
        let vertices = (0..n)
            .map(|i| Vertex {
                id: i.to_string(),
                dim: 1,
            })
            .collect();
        let edges = edges
            .iter()
            .map(|&(u, v)| Edge {
                u,
                v,
                dim: 1,
                restriction_u: DMatrix::identity(1, 1),
                restriction_v: DMatrix::identity(1, 1),
            })
            .collect();
        Self::new(vertices, edges)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    /// Total vertex dimension, the length of a 0-cochain.
    pub fn dim(&self) -> usize {
        self.vertices.iter().map(|v| v.dim).sum()
    }

    /// Total edge dimension, the length of a 1-cochain.
    pub fn edge_dim(&self) -> usize {
        self.edges.iter().map(|e| e.dim).sum()
    }

    /// Offset of vertex `i`'s block in a flattened cochain.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// For each flat index, the vertex whose block contains it.
    pub(crate) fn block_of(&self) -> Vec<usize> {
        self.vertices
            .iter()
            .enumerate()
            .flat_map(|(i, v)| std::iter::repeat_n(i, v.dim))
            .collect()
    }

    /// `(δx)_e = F_u x_u - F_v x_v` for each edge `e = u -> v`.
    pub fn coboundary(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.edge_dim(), self.dim());
        let mut row = 0;
        for e in &self.edges {
            let (du, dv) = (self.vertices[e.u].dim, self.vertices[e.v].dim);
            d.view_mut((row, self.offsets[e.u]), (e.dim, du))
                .copy_from(&e.restriction_u);
            let mut block = d.view_mut((row, self.offsets[e.v]), (e.dim, dv));
            block -= &e.restriction_v;
            row += e.dim;
        }
        d
    }

    /// `L = δᵀδ`.
    pub fn laplacian(&self) -> DMatrix<T> {
        let d = self.coboundary();
        d.tr_mul(&d)
    }
}

impl<T: Scalar> TryFrom<RawSheaf<T>> for CellularSheaf<T> {
    type Error = SpectralError;

    fn try_from(raw: RawSheaf<T>) -> Result<Self, Self::Error> {
        let index: BTreeMap<&str, usize> = raw
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.as_str(), i))
            .collect();
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| SpectralError::UnknownVertex(id.to_string()))
        };
        let mut edges = Vec::with_capacity(raw.edges.len());
        for (k, e) in raw.edges.iter().enumerate() {
            let (u, v) = (lookup(&e.u)?, lookup(&e.v)?);
            let matrix = |data: &[T], vtx: usize| {
                let cols = raw.vertices[vtx].dim;
                if data.len() != e.dim * cols {
                    return Err(SpectralError::ShapeMismatch {
                        edge: k,
                        expected: (e.dim, cols),
                        found: (data.len(), 1),
                    });
                }
                Ok(DMatrix::from_row_slice(e.dim, cols, data))
            };
            edges.push(Edge {
                u,
                v,
                dim: e.dim,
                restriction_u: matrix(&e.restriction_u, u)?,
                restriction_v: matrix(&e.restriction_v, v)?,
            });
        }
        CellularSheaf::new(raw.vertices, edges)
    }
}

fn row_major<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    m.transpose().as_slice().to_vec()
}

impl<T: Scalar> From<CellularSheaf<T>> for RawSheaf<T> {
    fn from(s: CellularSheaf<T>) -> Self {
        let edges = s
            .edges
            .iter()
            .map(|e| RawEdge {
                u: s.vertices[e.u].id.clone(),
                v: s.vertices[e.v].id.clone(),
                dim: e.dim,
                restriction_u: row_major(&e.restriction_u),
                restriction_v: row_major(&e.restriction_v),
            })
            .collect();
        RawSheaf {
            vertices: s.vertices,
            edges,
        }
    }
}

/// A 0-cochain: one vector per vertex. Serializes as a list of blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct Cochain0<T: Scalar> {
    blocks: Vec<Vec<T>>,
}

impl<T: Scalar> Cochain0<T> {
    pub fn new(blocks: Vec<Vec<T>>) -> Self {
        Self { blocks }
    }

    pub fn zeros(s: &CellularSheaf<T>) -> Self {
        Self::new(s.vertices.iter().map(|v| vec![T::zero(); v.dim]).collect())
    }

    /// Split a flat vector into the sheaf's vertex blocks.
    pub fn from_flat(s: &CellularSheaf<T>, flat: &[T]) -> Result<Self, SpectralError> {
        if flat.len() != s.dim() {
            return Err(SpectralError::CochainShape {
                expected: s.dim(),
                found: flat.len(),
            });
        }
        Ok(Self::new(
            s.vertices
                .iter()
                .zip(&s.offsets)
                .map(|(v, &o)| flat[o..o + v.dim].to_vec())
                .collect(),
        ))
    }

    pub fn blocks(&self) -> &[Vec<T>] {
        &self.blocks
    }

    pub fn flatten(&self) -> DVector<T> {
        DVector::from_iterator(
            self.blocks.iter().map(Vec::len).sum(),
            self.blocks.iter().flatten().copied(),
        )
    }

    /// Check the block shapes against `s`.
    pub fn check(&self, s: &CellularSheaf<T>) -> Result<(), SpectralError> {
        let ok = self.blocks.len() == s.vertices.len()
            && self
                .blocks
                .iter()
                .zip(&s.vertices)
                .all(|(b, v)| b.len() == v.dim);
        if ok {
            Ok(())
        } else {
            Err(SpectralError::CochainShape {
                expected: s.dim(),
                found: self.blocks.iter().map(Vec::len).sum(),
            })
        }
    }
}
