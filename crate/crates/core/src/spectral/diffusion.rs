use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    cohomology_dims, lambda_max, spectrum_with_tol, CellularSheaf, Cochain0, Scalar, SpectralError,
    SpectralReport, MAX_DENSE_DIM,
};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "T: Scalar")]
pub struct DiffusionConfig<T: Scalar> {
    pub alpha: T,
    pub max_iters: usize,
    pub tol: T,
    /// 0 runs synchronously; `D > 0` lets each vertex read neighbour blocks
    /// up to `D` iterations stale.
    #[serde(default)]
    pub delay_bound: usize,
    /// Seeds the delay schedule.
    #[serde(default)]
    pub seed: u64,
    /// Reject `alpha >= 2 / λmax` instead of running anyway.
    #[serde(default = "default_true")]
    pub enforce_stability: bool,
}

impl<T: Scalar> DiffusionConfig<T> {
    pub fn new(alpha: T, max_iters: usize, tol: T) -> Self {
        Self {
            alpha,
            max_iters,
            tol,
            delay_bound: 0,
            seed: 0,
            enforce_stability: true,
        }
    }

    pub fn with_delay(mut self, delay_bound: usize, seed: u64) -> Self {
        self.delay_bound = delay_bound;
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "status", bound = "T: Scalar")]
pub enum DiffusionStatus<T: Scalar> {
    Converged { iterations: usize },
    DidNotConverge { max_iters: usize, residual: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "T: Scalar")]
pub struct Diffusion<T: Scalar> {
    pub state: Cochain0<T>,
    pub status: DiffusionStatus<T>,
    pub report: SpectralReport<T>,
}

impl<T: Scalar> Diffusion<T> {
    pub fn converged(&self) -> bool {
        matches!(self.status, DiffusionStatus::Converged { .. })
    }
}

/// `½xᵀLx`.
pub fn dirichlet_energy<T: Scalar>(l: &DMatrix<T>, x: &DVector<T>) -> T {
    x.dot(&(l * x)) * T::lit(0.5)
}

fn sup_norm<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Explicit Euler steps `x ← x − αLx` until `‖Lx‖∞ < tol`.
///
/// Failing to converge within `max_iters` is reported in the status, not as
/// an error. The report carries the spectrum when the sheaf is small enough
/// for a dense decomposition; otherwise only the cohomology dimensions.
pub fn diffuse<T: Scalar>(
    s: &CellularSheaf<T>,
    x0: &Cochain0<T>,
    cfg: &DiffusionConfig<T>,
) -> Result<Diffusion<T>, SpectralError> {
    x0.check(s)?;
    if cfg.alpha.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(SpectralError::InvalidConfig("alpha must be positive"));
    }
    if cfg.tol.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(SpectralError::InvalidConfig("tol must be positive"));
    }
    if cfg.max_iters == 0 {
        return Err(SpectralError::InvalidConfig("maxIters must be positive"));
    }
    let l = s.laplacian();
    if cfg.enforce_stability {
        let lmax = lambda_max(&l);
        if lmax > T::zero() && cfg.alpha >= T::lit(2.0) / lmax {
            return Err(SpectralError::UnstableStep {
                alpha: cfg.alpha.to_f64().unwrap_or(f64::NAN),
                limit: (T::lit(2.0) / lmax).to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    let mut x = x0.flatten();
    let mut trace = vec![dirichlet_energy(&l, &x)];
    let mut status = None;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let block = s.block_of();
    // history[0] is the current iterate, history[k] is k steps stale
    let mut history: VecDeque<DVector<T>> = VecDeque::from([x.clone()]);

    for k in 0..cfg.max_iters {
        let lx = &l * &x;
        if sup_norm(&lx) < cfg.tol {
            status = Some(DiffusionStatus::Converged { iterations: k });
            break;
        }
        if cfg.delay_bound == 0 {
            x -= lx * cfg.alpha;
        } else {
            let stale: Vec<usize> = (0..s.vertices().len())
                .map(|_| rng.gen_range(0..=cfg.delay_bound).min(history.len() - 1))
                .collect();
            let mut next = x.clone();
            for r in 0..x.len() {
                let own = block[r];
                let view = &history[stale[own]];
                let mut acc = T::zero();
                for c in 0..x.len() {
                    let xc = if block[c] == own { x[c] } else { view[c] };
                    acc += l[(r, c)] * xc;
                }
                next[r] -= cfg.alpha * acc;
            }
            x = next;
            history.push_front(x.clone());
            history.truncate(cfg.delay_bound + 1);
        }
        trace.push(dirichlet_energy(&l, &x));
    }
    let status = status.unwrap_or_else(|| {
        let residual = sup_norm(&(&l * &x));
        if residual < cfg.tol {
            DiffusionStatus::Converged {
                iterations: cfg.max_iters,
            }
        } else {
            DiffusionStatus::DidNotConverge {
                max_iters: cfg.max_iters,
                residual,
            }
        }
    });

    let mut report = if s.dim() <= MAX_DENSE_DIM {
        spectrum_with_tol(s, T::default_tol())?
    } else {
        let (h0_dim, h1_dim) = cohomology_dims(s, T::default_tol());
        SpectralReport {
            eigenvalues: Vec::new(),
            zero_multiplicity: h0_dim,
            h0_dim,
            h1_dim,
            dirichlet_trace: Vec::new(),
        }
    };
    report.dirichlet_trace = trace;
    Ok(Diffusion {
        state: Cochain0::from_flat(s, x.as_slice())?,
        status,
        report,
    })
}
