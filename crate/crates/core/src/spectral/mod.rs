//! Cellular sheaves on agent graphs and the linear sheaf heat equation.
//!
//! A [`CellularSheaf`] attaches a vector space to every vertex and edge of a
//! graph. Its coboundary `δ` measures disagreement across each edge, and the
//! sheaf Laplacian `L = δᵀδ` generalises the graph Laplacian. Global
//! sections are `ker δ = ker L`; for a graph (no 2-cells) `H¹ = coker δ`.
//!
//! Everything here is generic over the [`Scalar`] type (`f32` or `f64`).
//! Dense linear algebra is delegated to `nalgebra`.

mod cellular;
mod diffusion;
mod scalar;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cellular::{CellularSheaf, Cochain0, Edge, Vertex};
pub use diffusion::{diffuse, dirichlet_energy, Diffusion, DiffusionConfig, DiffusionStatus};
pub use scalar::Scalar;

/// Largest total dimension [`spectrum`] will decompose densely.
pub const MAX_DENSE_DIM: usize = 2000;

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("edge {edge}: restriction has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        edge: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("edge {0} is a self-loop")]
    SelfLoop(usize),
    #[error("duplicate vertex id {0:?}")]
    DuplicateVertex(String),
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("{0} has zero-dimensional stalk")]
    ZeroDim(String),
    #[error("cochain has dimension {found}, sheaf expects {expected}")]
    CochainShape { expected: usize, found: usize },
    #[error("total dimension {dim} exceeds dense limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("step size {alpha} is not below the stability limit {limit}")]
    UnstableStep { alpha: f64, limit: f64 },
    #[error("invalid diffusion config: {0}")]
    InvalidConfig(&'static str),
    #[error("zero-eigenvalue multiplicity {zero_multiplicity} disagrees with h0 = {h0}")]
    MultiplicityMismatch { zero_multiplicity: usize, h0: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "T: Scalar")]
pub struct SpectralReport<T: Scalar> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    pub zero_multiplicity: usize,
    pub h0_dim: usize,
    pub h1_dim: usize,
    /// `½xᵀLx` before the first step and after each step; empty outside diffusion.
    pub dirichlet_trace: Vec<T>,
}

fn rank<T: Scalar>(m: &DMatrix<T>, tol: T) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    // singular values of δ are square roots of the eigenvalues of L
    m.clone().svd(false, false).rank(tol.sqrt())
}

/// `(dim H⁰, dim H¹)`: the kernel and cokernel dimensions of `δ`.
pub fn cohomology_dims<T: Scalar>(s: &CellularSheaf<T>, tol: T) -> (usize, usize) {
    let r = rank(&s.coboundary(), tol);
    (s.dim() - r, s.edge_dim() - r)
}

fn eigen<T: Scalar>(s: &CellularSheaf<T>) -> Result<(Vec<T>, DMatrix<T>), SpectralError> {
    let n = s.dim();
    if n > MAX_DENSE_DIM {
        return Err(SpectralError::DimensionTooLarge {
            dim: n,
            max: MAX_DENSE_DIM,
        });
    }
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = SymmetricEigen::new(s.laplacian());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[a].partial_cmp(&eigenvalues[b]).expect("finite"));
    let values = order.iter().map(|&i| eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// The full spectrum of `L` with the default zero threshold.
pub fn spectrum<T: Scalar>(s: &CellularSheaf<T>) -> Result<SpectralReport<T>, SpectralError> {
    spectrum_with_tol(s, T::default_tol())
}

/// The full spectrum of `L`, cross-checked against the rank of `δ`.
pub fn spectrum_with_tol<T: Scalar>(
    s: &CellularSheaf<T>,
    tol: T,
) -> Result<SpectralReport<T>, SpectralError> {
    let (eigenvalues, _) = eigen(s)?;
    let zero_multiplicity = eigenvalues.iter().filter(|&&l| l < tol).count();
    let (h0_dim, h1_dim) = cohomology_dims(s, tol);
    if zero_multiplicity != h0_dim {
        return Err(SpectralError::MultiplicityMismatch {
            zero_multiplicity,
            h0: h0_dim,
        });
    }
    Ok(SpectralReport {
        eigenvalues,
        zero_multiplicity,
        h0_dim,
        h1_dim,
        dirichlet_trace: Vec::new(),
    })
}

/// An orthonormal basis of `ker L`, i.e. of the global sections. Each vector
/// is signed so that its largest-magnitude entry is positive.
pub fn harmonic_basis<T: Scalar>(
    s: &CellularSheaf<T>,
    tol: T,
) -> Result<Vec<Cochain0<T>>, SpectralError> {
    let (values, vectors) = eigen(s)?;
    values
        .iter()
        .enumerate()
        .take_while(|(_, &l)| l < tol)
        .map(|(i, _)| {
            let mut v: Vec<T> = vectors.column(i).iter().copied().collect();
            let lead =
                v.iter().copied().fold(
                    T::zero(),
                    |best, x| if x.abs() > best.abs() { x } else { best },
                );
            if lead < T::zero() {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            Cochain0::from_flat(s, &v)
        })
        .collect()
}

/// Orthogonal projection of `x` onto `ker L`.
pub fn project_onto_kernel<T: Scalar>(
    s: &CellularSheaf<T>,
    x: &Cochain0<T>,
    tol: T,
) -> Result<Cochain0<T>, SpectralError> {
    x.check(s)?;
    let flat = x.flatten();
    let mut out = DVector::zeros(flat.len());
    for b in harmonic_basis(s, tol)? {
        let b = b.flatten();
        out += &b * b.dot(&flat);
    }
    Cochain0::from_flat(s, out.as_slice())
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn lambda_max<T: Scalar>(l: &DMatrix<T>) -> T {
    let n = l.nrows();
    if n == 0 {
        return T::zero();
    }
    // a fixed, irregular start vector so that no eigenvector is missed by symmetry
    let mut v = DVector::from_fn(n, |i, _| {
        T::lit(0.5 + ((i as f64 + 1.0) * 0.754_877_666).fract())
    });
    v.normalize_mut();
    let tol = T::lit(POWER_TOL);
    let mut lambda = T::zero();
    for _ in 0..POWER_MAX_ITERS {
        let w = l * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == T::zero() {
            return T::zero();
        }
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs().max(T::one()) {
            return next;
        }
        lambda = next;
    }
    lambda
}
