//! Pointwise operators built on the horizontal gradient: the orthogonal
//! projectors onto `range(Xu)` and `null(Xu^T)`, the subelliptic
//! ∞-Laplacian, and the p-Laplacian in expanded and adjoint (divergence)
//! form.
//!
//! The ∞-Laplacian splits into two mutually orthogonal parts,
//!
//! ```text
//! total_a = X_i u_a X_j u_b X_i X_j u_b  +  |Xu|^2 [Xu]^⊥_{ab} X_i X_i u_b
//! ```
//!
//! with the tangential part valued in `range(Xu)` and the normal part in its
//! orthogonal complement.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::calculus::{self, HorizontalGradient, Jet2};
use crate::error::{Error, Result};
use crate::frames::Frame;
use crate::grid::GridField;

/// Orthogonal projections of `R^N` onto the range of `Xu` (`top`) and the
/// nullspace of `Xu^T` (`bot`). Always `top + bot = I`.
#[derive(Debug, Clone)]
pub struct ProjectorPair {
    pub top: DMatrix<f64>,
    pub bot: DMatrix<f64>,
    pub rank_used: usize,
    pub tol_used: f64,
    /// Set when `Xu = 0` identically; then `top = 0`, `bot = I`.
    pub degenerate: bool,
}

/// The ∞-Laplacian value at a point, split into its tangential and normal
/// parts (`total = term_tangential + term_normal` by construction).
#[derive(Debug, Clone, Serialize)]
pub struct OperatorValue {
    pub total: Vec<f64>,
    pub term_tangential: Vec<f64>,
    pub term_normal: Vec<f64>,
    /// Numerical rank of `Xu` at the point (the projector is only continuous
    /// where this is locally constant).
    pub rank: usize,
    pub degenerate: bool,
}

impl OperatorValue {
    pub fn total_norm(&self) -> f64 {
        self.total.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Inner product of the two parts; zero up to roundoff.
    pub fn split_inner_product(&self) -> f64 {
        self.term_tangential
            .iter()
            .zip(&self.term_normal)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Projector pair from the SVD of `Xu`: `top` projects onto the span of the
/// left singular vectors with `sigma > tol * sigma_max`, `bot = I - top`.
/// An identically zero `Xu` is not an error: it yields `top = 0`, `bot = I`
/// with the `degenerate` flag set, because the normal term of the operator
/// carries the vanishing factor `|Xu|^2`.
pub fn projectors(h: &HorizontalGradient, tol: f64) -> Result<ProjectorPair> {
    if tol <= 0.0 {
        return Err(Error::invalid("projector tolerance must be positive"));
    }
    let n_comp = h.components();
    let smax = h.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    if smax <= 0.0 {
        return Ok(ProjectorPair {
            top: DMatrix::zeros(n_comp, n_comp),
            bot: DMatrix::identity(n_comp, n_comp),
            rank_used: 0,
            tol_used: tol,
            degenerate: true,
        });
    }
    let rank = h
        .singular_values
        .iter()
        .filter(|&&s| s > tol * smax)
        .count();
    let mut top = DMatrix::zeros(n_comp, n_comp);
    for k in 0..rank {
        let u = h.left_vectors.column(k);
        top += &u * u.transpose();
    }
    let bot = DMatrix::identity(n_comp, n_comp) - &top;
    Ok(ProjectorPair {
        top,
        bot,
        rank_used: rank,
        tol_used: tol,
        degenerate: false,
    })
}

/// Subelliptic ∞-Laplacian at a point from a jet and frame data there.
pub fn infinity_laplacian(
    jet: &Jet2,
    frame_mat: &DMatrix<f64>,
    frame_dcoeff: &[DMatrix<f64>],
    tol: f64,
) -> Result<OperatorValue> {
    let h = calculus::horizontal_gradient(jet, frame_mat)?;
    let sh = calculus::second_horizontal(jet, frame_mat, frame_dcoeff)?;
    let proj = projectors(&h, tol)?;

    let n_comp = jet.components();
    let m = h.frame_size();

    // c_i = X_j u_b X_i X_j u_b = X_i(|Xu|^2)/2, contracted over (b, j).
    let mut c = vec![0.0f64; m];
    for (b, t) in sh.tensor.iter().enumerate() {
        for i in 0..m {
            for j in 0..m {
                c[i] += h.mat[(b, j)] * t[(i, j)];
            }
        }
    }

    let mut tangential = DVector::zeros(n_comp);
    for a in 0..n_comp {
        for i in 0..m {
            tangential[a] += h.mat[(a, i)] * c[i];
        }
    }

    let sums = sh.sum_of_squares();
    let normal = &proj.bot * &sums * h.normsq;

    let total = &tangential + &normal;
    Ok(OperatorValue {
        total: total.as_slice().to_vec(),
        term_tangential: tangential.as_slice().to_vec(),
        term_normal: normal.as_slice().to_vec(),
        rank: h.rank,
        degenerate: proj.degenerate,
    })
}

/// Expanded p-Laplacian at a point (the normalized form):
///
/// ```text
/// X_i u_a X_j u_b X_i X_j u_b + (|Xu|^2 / (p-2)) [X_i u_a D_A X_{iA} + X_i X_i u_a]
/// ```
///
/// For `p = 2` the normalization degenerates and the unnormalized
/// divergence-form residual `X_i u_a D_A X_{iA} + X_i X_i u_a` is returned
/// instead, keeping the family total on `[2, ∞)`.
pub fn p_laplacian_expanded(
    jet: &Jet2,
    frame_mat: &DMatrix<f64>,
    frame_dcoeff: &[DMatrix<f64>],
    p: f64,
) -> Result<DVector<f64>> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::invalid(format!("p must be finite and >= 2, got {p}")));
    }
    let h = calculus::horizontal_gradient(jet, frame_mat)?;
    let sh = calculus::second_horizontal(jet, frame_mat, frame_dcoeff)?;
    let m = h.frame_size();
    let n_comp = jet.components();

    // div_i = D_A X_{iA}
    let div: Vec<f64> = frame_dcoeff.iter().map(|d| d.trace()).collect();
    let sums = sh.sum_of_squares();
    let mut bracket = DVector::zeros(n_comp);
    for a in 0..n_comp {
        let mut acc = sums[a];
        for i in 0..m {
            acc += h.mat[(a, i)] * div[i];
        }
        bracket[a] = acc;
    }

    if p == 2.0 {
        return Ok(bracket);
    }

    let mut c = vec![0.0f64; m];
    for (b, t) in sh.tensor.iter().enumerate() {
        for i in 0..m {
            for j in 0..m {
                c[i] += h.mat[(b, j)] * t[(i, j)];
            }
        }
    }
    let mut tangential = DVector::zeros(n_comp);
    for a in 0..n_comp {
        for i in 0..m {
            tangential[a] += h.mat[(a, i)] * c[i];
        }
    }

    Ok(tangential + bracket * (h.normsq / (p - 2.0)))
}

/// Discrete adjoint-form (divergence-form) p-Laplacian residual
/// `D_A ( X_{iA} |Xu|^{p-2} X_i u_a )` at a lattice node, via nested central
/// differences of the flux. Needs a two-node margin from the boundary: one
/// for the outer divergence, one for the inner jets.
pub fn p_laplacian_adjoint(
    field: &GridField,
    frame: &Frame,
    p: f64,
    index: &[usize],
) -> Result<DVector<f64>> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::invalid(format!("p must be finite and >= 2, got {p}")));
    }
    let n = field.dim();
    for a in 0..n {
        if index[a] < 2 || index[a] + 2 >= field.nodes_per_axis()[a] {
            return Err(Error::BoundaryStencil {
                index: index.to_vec(),
            });
        }
    }
    let n_comp = field.components();

    // flux_{A,a}(node) = X_{iA} |Xu|^{p-2} X_i u_a at the node
    let flux = |idx: &[usize]| -> Result<DMatrix<f64>> {
        let x = field.node_coords(idx);
        let fmat = frame.eval(&x)?;
        let jet = calculus::fd_jet(field, idx)?;
        let h = calculus::horizontal_gradient(&jet, &fmat)?;
        let weight = if h.normsq == 0.0 && p > 2.0 {
            0.0 // continuous extension of |Xu|^{p-2} Xu at degenerate cells
        } else {
            h.normsq.powf((p - 2.0) / 2.0)
        };
        let mut out = DMatrix::zeros(n, n_comp);
        for aa in 0..n {
            for a in 0..n_comp {
                let mut acc = 0.0;
                for i in 0..frame.size() {
                    acc += fmat[(i, aa)] * h.mat[(a, i)];
                }
                out[(aa, a)] = weight * acc;
            }
        }
        Ok(out)
    };

    let mut residual = DVector::zeros(n_comp);
    let mut idx = index.to_vec();
    for aa in 0..n {
        let h_a = field.spacing()[aa];
        idx[aa] += 1;
        let plus = flux(&idx)?;
        idx[aa] -= 2;
        let minus = flux(&idx)?;
        idx[aa] += 1;
        for a in 0..n_comp {
            residual[a] += (plus[(aa, a)] - minus[(aa, a)]) / (2.0 * h_a);
        }
    }
    Ok(residual)
}

/// Moore–Penrose left inverse of a full-column-rank horizontal gradient
/// (`rank = m <= N`), so that `P * Xu = I_m`; computed from the normal
/// equations `P = (Xu^T Xu)^{-1} Xu^T`, which the full-rank precondition
/// keeps well posed.
pub fn left_pseudo_inverse(h: &HorizontalGradient) -> Result<DMatrix<f64>> {
    let m = h.frame_size();
    if h.components() < m || h.rank < m {
        return Err(Error::RankDeficient {
            rank: h.rank,
            needed: m,
        });
    }
    let gram = h.mat.transpose() * &h.mat;
    let inv = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient {
            rank: h.rank,
            needed: m,
        })?
        .inverse();
    Ok(inv * h.mat.transpose())
}
