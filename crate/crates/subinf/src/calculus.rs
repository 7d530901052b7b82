//! Second-order jets and horizontal calculus.
//!
//! Everything downstream consumes a [`Jet2`] (value, Euclidean gradient,
//! Euclidean Hessian) together with frame data at the same point. The
//! horizontal gradient is `(Xu)_{ai} = X_i u_a = X_{iA} D_A u_a` and the
//! second horizontal derivative expands as
//! `X_i X_j u_a = X_{iA} (D_A X_{jB}) D_B u_a + X_{iA} X_{jB} D_A D_B u_a`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::frames::{Frame, RANK_TOL};
use crate::grid::GridField;
use crate::maps::AnalyticMap;

/// A map's second-order jet at a point: value in `R^N`, Euclidean gradient
/// (`N x n`, entry `(a, A) = D_A u_a`) and Euclidean Hessian (per component,
/// `n x n`, entry `(A, B) = D_A D_B u_a`).
#[derive(Debug, Clone)]
pub struct Jet2 {
    pub value: DVector<f64>,
    pub egrad: DMatrix<f64>,
    pub ehess: Vec<DMatrix<f64>>,
}

impl Jet2 {
    pub fn new(value: DVector<f64>, egrad: DMatrix<f64>, ehess: Vec<DMatrix<f64>>) -> Result<Self> {
        let n_comp = value.len();
        let n = egrad.ncols();
        if egrad.nrows() != n_comp {
            return Err(Error::DimensionMismatch {
                expected: n_comp,
                got: egrad.nrows(),
                context: "jet gradient rows",
            });
        }
        if ehess.len() != n_comp || ehess.iter().any(|h| h.nrows() != n || h.ncols() != n) {
            return Err(Error::DimensionMismatch {
                expected: n_comp,
                got: ehess.len(),
                context: "jet hessian blocks",
            });
        }
        Ok(Self {
            value,
            egrad,
            ehess,
        })
    }

    /// Target dimension `N`.
    pub fn components(&self) -> usize {
        self.value.len()
    }

    /// Domain dimension `n`.
    pub fn dim(&self) -> usize {
        self.egrad.ncols()
    }

    /// Largest Hessian asymmetry `|D_A D_B u - D_B D_A u|`, which should be
    /// zero up to roundoff for analytic jets.
    pub fn hessian_asymmetry(&self) -> f64 {
        self.ehess
            .iter()
            .map(|h| {
                let d = h - h.transpose();
                d.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
            })
            .fold(0.0, f64::max)
    }
}

/// The horizontal gradient `Xu` at a point, with its SVD-derived data.
#[derive(Debug, Clone)]
pub struct HorizontalGradient {
    /// `N x m` matrix, entry `(a, i) = X_i u_a`.
    pub mat: DMatrix<f64>,
    /// `|Xu|^2`, the squared Frobenius norm of `mat`.
    pub normsq: f64,
    /// Numerical rank (singular values above `RANK_TOL * sigma_max`).
    pub rank: usize,
    /// Singular values, descending.
    pub singular_values: DVector<f64>,
    /// Orthonormal basis of `R^N` (`N x N`): the first `rank` columns span
    /// the range of `Xu`, the remaining columns its orthogonal complement
    /// (the nullspace of `Xu^T`).
    pub left_vectors: DMatrix<f64>,
}

impl HorizontalGradient {
    pub fn components(&self) -> usize {
        self.mat.nrows()
    }

    pub fn frame_size(&self) -> usize {
        self.mat.ncols()
    }

    pub fn norm(&self) -> f64 {
        self.normsq.sqrt()
    }
}

/// Second horizontal derivatives `X_i X_j u_a` at a point; per component a
/// `m x m` matrix with the outer derivative index first: entry
/// `(i, j) = X_i(X_j u_a)`.
#[derive(Debug, Clone)]
pub struct SecondHorizontal {
    pub tensor: Vec<DMatrix<f64>>,
}

impl SecondHorizontal {
    /// `X_i X_i u_a` (Hörmander's sum of squares applied to each component).
    pub fn sum_of_squares(&self) -> DVector<f64> {
        DVector::from_iterator(self.tensor.len(), self.tensor.iter().map(|t| t.trace()))
    }

    /// Worst violation of the commutator identity
    /// `X_i X_j u_a - X_j X_i u_a = [X_i, X_j]^A D_A u_a` at the evaluation
    /// point.
    pub fn commutator_residual(&self, frame: &Frame, jet: &Jet2, x: &[f64]) -> Result<f64> {
        let m = frame.size();
        let mut worst = 0.0f64;
        for i in 1..=m {
            for j in 1..=m {
                let bracket = frame.lie_bracket(i, j, x)?.vector;
                for (a, t) in self.tensor.iter().enumerate() {
                    let lhs = t[(i - 1, j - 1)] - t[(j - 1, i - 1)];
                    let rhs = jet.egrad.row(a).transpose().dot(&bracket);
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Horizontal gradient from a jet and the frame coefficient matrix at the
/// same point: `mat = egrad * F^T`.
pub fn horizontal_gradient(jet: &Jet2, frame_mat: &DMatrix<f64>) -> Result<HorizontalGradient> {
    if frame_mat.ncols() != jet.dim() {
        return Err(Error::DimensionMismatch {
            expected: jet.dim(),
            got: frame_mat.ncols(),
            context: "frame matrix columns vs jet dimension",
        });
    }
    let mat = &jet.egrad * frame_mat.transpose();
    let normsq = mat.iter().map(|v| v * v).sum();

    // Singular values from the values-only bidiagonal sweep (reliable for
    // small sigma), left vectors from the symmetric eigendecomposition of
    // the Gram matrix H H^T (the accumulated-U SVD can lose the factorization
    // on rank-deficient inputs).
    let svals = mat.clone().singular_values();
    let smax = svals.iter().fold(0.0f64, |m, &s| m.max(s));
    let rank = if smax > 0.0 {
        svals.iter().filter(|&&s| s > RANK_TOL * smax).count()
    } else {
        0
    };

    let n_comp = mat.nrows();
    let eig = (&mat * mat.transpose()).symmetric_eigen();
    let mut order: Vec<usize> = (0..n_comp).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let left = DMatrix::from_fn(n_comp, n_comp, |r, c| eig.eigenvectors[(r, order[c])]);

    Ok(HorizontalGradient {
        mat,
        normsq,
        rank,
        singular_values: DVector::from_iterator(svals.len(), svals.iter().copied()),
        left_vectors: left,
    })
}

/// Second horizontal derivatives from a jet plus frame coefficients and
/// coefficient derivatives at the same point.
pub fn second_horizontal(
    jet: &Jet2,
    frame_mat: &DMatrix<f64>,
    frame_dcoeff: &[DMatrix<f64>],
) -> Result<SecondHorizontal> {
    let n = jet.dim();
    let m = frame_mat.nrows();
    if frame_mat.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: frame_mat.ncols(),
            context: "frame matrix columns vs jet dimension",
        });
    }
    if frame_dcoeff.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: frame_dcoeff.len(),
            context: "frame derivative blocks",
        });
    }

    let mut tensor = Vec::with_capacity(jet.components());
    for a in 0..jet.components() {
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for aa in 0..n {
                    let fia = frame_mat[(i, aa)];
                    if fia == 0.0 {
                        continue;
                    }
                    for bb in 0..n {
                        acc += fia
                            * (frame_dcoeff[j][(bb, aa)] * jet.egrad[(a, bb)]
                                + frame_mat[(j, bb)] * jet.ehess[a][(aa, bb)]);
                    }
                }
                t[(i, j)] = acc;
            }
        }
        tensor.push(t);
    }
    Ok(SecondHorizontal { tensor })
}

/// Exact jet of a built-in or user map at `x`.
pub fn analytic_jet(map: &AnalyticMap, x: &[f64]) -> Result<Jet2> {
    map.jet(x)
}

/// Second-order central-difference jet of a grid field at an interior
/// lattice node (all neighbors must exist).
pub fn fd_jet(field: &GridField, index: &[usize]) -> Result<Jet2> {
    let n = field.dim();
    if index.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: index.len(),
            context: "lattice index",
        });
    }
    for a in 0..n {
        if index[a] < 1 || index[a] + 1 >= field.nodes_per_axis()[a] {
            return Err(Error::BoundaryStencil {
                index: index.to_vec(),
            });
        }
    }

    let n_comp = field.components();
    let value = field.value_at(index);
    let mut egrad = DMatrix::zeros(n_comp, n);
    let mut ehess = vec![DMatrix::zeros(n, n); n_comp];
    let mut idx = index.to_vec();
    for a in 0..n {
        let h_a = field.spacing()[a];
        idx[a] += 1;
        let plus = field.value_at(&idx);
        idx[a] -= 2;
        let minus = field.value_at(&idx);
        idx[a] += 1;
        for c in 0..n_comp {
            egrad[(c, a)] = (plus[c] - minus[c]) / (2.0 * h_a);
            ehess[c][(a, a)] = (plus[c] - 2.0 * value[c] + minus[c]) / (h_a * h_a);
        }
        for b in (a + 1)..n {
            let h_b = field.spacing()[b];
            idx[a] += 1;
            idx[b] += 1;
            let pp = field.value_at(&idx);
            idx[b] -= 2;
            let pm = field.value_at(&idx);
            idx[a] -= 2;
            let mm = field.value_at(&idx);
            idx[b] += 2;
            let mp = field.value_at(&idx);
            idx[a] += 1;
            idx[b] -= 1;
            for c in 0..n_comp {
                let cross = (pp[c] - pm[c] - mp[c] + mm[c]) / (4.0 * h_a * h_b);
                ehess[c][(a, b)] = cross;
                ehess[c][(b, a)] = cross;
            }
        }
    }
    Jet2::new(value, egrad, ehess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames;
    use crate::geometry::BoxDomain;
    use crate::maps;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn horizontal_gradient_of_coordinate_map() {
        let m = maps::coord(2, 1).unwrap();
        let f = frames::euclidean(2);
        let jet = m.jet(&[0.3, 0.4]).unwrap();
        let h = horizontal_gradient(&jet, &f.eval(&[0.3, 0.4]).unwrap()).unwrap();
        assert_eq!(h.mat, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_abs_diff_eq!(h.normsq, 1.0, epsilon = 1e-15);
        assert_eq!(h.rank, 1);
    }

    #[test]
    fn horizontal_gradient_of_t_on_heisenberg() {
        let m = maps::coord(3, 3).unwrap();
        let f = frames::heisenberg();
        let x = [1.0, 2.0, 0.0];
        let jet = m.jet(&x).unwrap();
        let h = horizontal_gradient(&jet, &f.eval(&x).unwrap()).unwrap();
        assert_abs_diff_eq!(h.mat[(0, 0)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.mat[(0, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h.normsq, 1.25, epsilon = 1e-15);
    }

    #[test]
    fn paper_exp_at_origin_is_rank_one() {
        let m = maps::paper_exp();
        let f = frames::euclidean(2);
        let jet = m.jet(&[0.0, 0.0]).unwrap();
        let h = horizontal_gradient(&jet, &f.eval(&[0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(
            h.mat,
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0])
        );
        assert_abs_diff_eq!(h.normsq, 2.0, epsilon = 1e-15);
        assert_eq!(h.rank, 1);
    }

    #[test]
    fn normsq_equals_frobenius_identity_on_random_jets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n_comp = rng.random_range(1..4usize);
            let egrad = DMatrix::from_fn(n_comp, 3, |_, _| rng.random_range(-2.0..2.0));
            let jet = Jet2::new(
                DVector::zeros(n_comp),
                egrad,
                vec![DMatrix::zeros(3, 3); n_comp],
            )
            .unwrap();
            let fmat = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
            let h = horizontal_gradient(&jet, &fmat).unwrap();
            let explicit: f64 = (&jet.egrad * fmat.transpose()).iter().map(|v| v * v).sum();
            assert_abs_diff_eq!(h.normsq, explicit, epsilon = 1e-12);
            assert!(h.rank <= h.components().min(h.frame_size()));
        }
    }

    #[test]
    fn second_horizontal_reduces_to_hessian_for_euclidean() {
        let m = maps::quad(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0])).unwrap();
        let f = frames::euclidean(2);
        let x = [1.0, 1.0];
        let jet = m.jet(&x).unwrap();
        let sh = second_horizontal(
            &jet,
            &f.eval(&x).unwrap(),
            &f.eval_dcoeff(&x).unwrap(),
        )
        .unwrap();
        assert_eq!(sh.tensor[0], DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn commutator_identity_for_t_on_heisenberg() {
        let m = maps::coord(3, 3).unwrap();
        let f = frames::heisenberg();
        for x in [[0.0, 0.0, 0.0], [0.7, -0.3, 0.2], [2.0, 1.0, -1.0]] {
            let jet = m.jet(&x).unwrap();
            let sh = second_horizontal(
                &jet,
                &f.eval(&x).unwrap(),
                &f.eval_dcoeff(&x).unwrap(),
            )
            .unwrap();
            // X1X2 u - X2X1 u = [X1,X2] u = D_t u = 1
            let anti = sh.tensor[0][(0, 1)] - sh.tensor[0][(1, 0)];
            assert_abs_diff_eq!(anti, 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(
                sh.commutator_residual(&f, &jet, &x).unwrap(),
                0.0,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn commutator_identity_on_five_scalar_maps() {
        let f = frames::heisenberg();
        let maps: Vec<AnalyticMap> = vec![
            maps::coord(3, 1).unwrap(),
            maps::coord(3, 3).unwrap(),
            maps::quad(DMatrix::from_row_slice(
                3,
                3,
                &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0],
            ))
            .unwrap(),
            maps::quad(DMatrix::from_row_slice(
                3,
                3,
                &[0.0, 1.0, 0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.0],
            ))
            .unwrap(),
            maps::gauss(3),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for map in &maps {
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let jet = map.jet(&x).unwrap();
                let sh = second_horizontal(
                    &jet,
                    &f.eval(&x).unwrap(),
                    &f.eval_dcoeff(&x).unwrap(),
                )
                .unwrap();
                assert!(sh.commutator_residual(&f, &jet, &x).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn fd_jet_exact_for_affine_and_quadratic() {
        let b = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let coord_map = maps::coord(2, 1).unwrap();
        let field = GridField::sample(&b, &[9, 9], 1, |x| coord_map.value(x).unwrap()).unwrap();
        let jet = fd_jet(&field, &[4, 4]).unwrap();
        assert_abs_diff_eq!(jet.egrad[(0, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(jet.egrad[(0, 1)], 0.0, epsilon = 1e-10);

        let sq = maps::quad(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])).unwrap();
        let field = GridField::sample(&b, &[9, 9], 1, |x| sq.value(x).unwrap()).unwrap();
        let jet = fd_jet(&field, &[4, 4]).unwrap();
        assert_abs_diff_eq!(jet.ehess[0][(0, 0)], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn fd_jet_rejects_boundary_adjacent_nodes() {
        let b = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let field = GridField::sample(&b, &[5, 5], 1, |x| {
            DVector::from_vec(vec![x[0]])
        })
        .unwrap();
        assert!(matches!(
            fd_jet(&field, &[0, 2]),
            Err(Error::BoundaryStencil { .. })
        ));
        assert!(matches!(
            fd_jet(&field, &[2, 4]),
            Err(Error::BoundaryStencil { .. })
        ));
    }

    #[test]
    fn fd_jet_is_second_order_on_sine() {
        // Richardson: halving h divides the gradient error by ~4.
        let err_at = |nodes: usize| -> f64 {
            let b = BoxDomain::cube(1, 0.0, 1.0).unwrap();
            let field = GridField::sample(&b, &[nodes], 1, |x| {
                DVector::from_vec(vec![x[0].sin()])
            })
            .unwrap();
            let mid = nodes / 2;
            let jet = fd_jet(&field, &[mid]).unwrap();
            let x = field.node_coords(&[mid])[0];
            (jet.egrad[(0, 0)] - x.cos()).abs()
        };
        let e1 = err_at(17);
        let e2 = err_at(33);
        let ratio = e1 / e2;
        assert!(
            (3.0..5.5).contains(&ratio),
            "expected ~4, got {ratio} (e1={e1:.3e}, e2={e2:.3e})"
        );
    }

    #[test]
    fn fd_jet_matches_analytic_jets_at_second_order() {
        // For each built-in analytic map, sample a fine local grid around
        // random points and compare jets.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let test_maps = vec![maps::paper_exp(), maps::gauss(2)];
        for map in &test_maps {
            for _ in 0..25 {
                let cx = rng.random_range(-0.5..0.5);
                let cy = rng.random_range(-0.5..0.5);
                let h = 1e-3;
                let b = BoxDomain::new(vec![cx - 2.0 * h, cy - 2.0 * h], vec![cx + 2.0 * h, cy + 2.0 * h])
                    .unwrap();
                let field =
                    GridField::sample(&b, &[5, 5], map.components(), |x| map.value(x).unwrap())
                        .unwrap();
                let fd = fd_jet(&field, &[2, 2]).unwrap();
                let exact = map.jet(&[cx, cy]).unwrap();
                for a in 0..map.components() {
                    for aa in 0..2 {
                        assert_abs_diff_eq!(
                            fd.egrad[(a, aa)],
                            exact.egrad[(a, aa)],
                            epsilon = 1e-5
                        );
                        for bb in 0..2 {
                            assert_abs_diff_eq!(
                                fd.ehess[a][(aa, bb)],
                                exact.ehess[a][(aa, bb)],
                                epsilon = 1e-3
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn analytic_hessians_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for map in [maps::paper_exp(), maps::gauss(2)] {
            for _ in 0..20 {
                let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let jet = map.jet(&x).unwrap();
                assert!(jet.hessian_asymmetry() < 1e-10);
            }
        }
    }
}
