//! Vector-field frames `X = {X_1, ..., X_m}` on a domain in `R^n`.
//!
//! A frame is stored through its coefficient functions `X_{iA}(x)` (so that
//! `X_i = X_{iA} D_A` in the standard basis of partial derivatives) together
//! with their first derivatives `D_B X_{iA}(x)`. Built-ins cover the
//! Euclidean frame, the first Heisenberg group, and the Grushin plane.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Step used when synthesizing coefficient derivatives by central
/// differences (accuracy `O(h^2)`).
pub const FD_STEP: f64 = 1e-5;

/// Relative singular-value cutoff for numerical rank decisions, shared with
/// the `operators` module.
pub const RANK_TOL: f64 = 1e-8;

type CoeffFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
type DcoeffFn = dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync;

/// A frame of `m` vector fields on `R^n`, `1 <= m <= n`.
///
/// `coeff(x)` is the `m x n` matrix with row `i` holding the coefficients of
/// `X_i` at `x`. `dcoeff(x)[i]` is the `n x n` matrix with entry
/// `(A, B) = D_B X_{iA}(x)`. Frames are immutable after construction and all
/// evaluations are pure, so they are safe to share across workers.
#[derive(Clone)]
pub struct Frame {
    name: String,
    n: usize,
    m: usize,
    coeff: Arc<CoeffFn>,
    dcoeff: Arc<DcoeffFn>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish()
    }
}

/// Value of a Lie bracket `[X_i, X_j]` at a point.
#[derive(Debug, Clone)]
pub struct BracketResult {
    /// Components of `[X_i, X_j](x)` in `R^n`.
    pub vector: DVector<f64>,
    /// Word length of the bracket (a single bracket of frame fields has
    /// order 2).
    pub order: usize,
}

impl Frame {
    /// Frame from an analytic coefficient function and its analytic
    /// derivative.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        coeff: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        dcoeff: impl Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::invalid(format!(
                "frame size must satisfy 1 <= m <= n, got m={m}, n={n}"
            )));
        }
        Ok(Self {
            name: name.into(),
            n,
            m,
            coeff: Arc::new(coeff),
            dcoeff: Arc::new(dcoeff),
        })
    }

    /// Frame from a coefficient function only; derivatives are synthesized
    /// by central differences with step [`FD_STEP`].
    pub fn from_coeff(
        name: impl Into<String>,
        n: usize,
        m: usize,
        coeff: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        let coeff = Arc::new(coeff);
        let for_dcoeff = Arc::clone(&coeff);
        let dc = move |x: &[f64]| -> Vec<DMatrix<f64>> {
            let mut out = vec![DMatrix::zeros(n, n); m];
            let mut xp = x.to_vec();
            for b in 0..n {
                xp[b] = x[b] + FD_STEP;
                let plus = for_dcoeff(&xp);
                xp[b] = x[b] - FD_STEP;
                let minus = for_dcoeff(&xp);
                xp[b] = x[b];
                for i in 0..m {
                    for a in 0..n {
                        out[i][(a, b)] = (plus[(i, a)] - minus[(i, a)]) / (2.0 * FD_STEP);
                    }
                }
            }
            out
        };
        Ok(Self {
            name: name.into(),
            n,
            m,
            coeff: Arc::new(move |x: &[f64]| coeff(x)),
            dcoeff: Arc::new(dc),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of frame fields `m`.
    pub fn size(&self) -> usize {
        self.m
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
                context: "frame evaluation point",
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("frame point {x:?}")));
        }
        Ok(())
    }

    /// Coefficient matrix `X_{iA}(x)`, `m x n`; row `i` is the coefficient
    /// vector of `X_i` at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        Ok((self.coeff)(x))
    }

    /// Coefficient derivatives: `dcoeff(x)[i][(A, B)] = D_B X_{iA}(x)`.
    pub fn eval_dcoeff(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_point(x)?;
        Ok((self.dcoeff)(x))
    }

    /// Divergence-style contraction `D_A X_{iA}(x)` per field, used by the
    /// expanded p-Laplacian.
    pub fn coeff_divergence(&self, x: &[f64]) -> Result<DVector<f64>> {
        let dc = self.eval_dcoeff(x)?;
        Ok(DVector::from_iterator(self.m, dc.iter().map(|d| d.trace())))
    }

    /// Lie bracket `[X_i, X_j](x)` with 1-based field indices.
    ///
    /// `[X_i, X_j]^A = X_{iB} D_B X_{jA} - X_{jB} D_B X_{iA}`.
    pub fn lie_bracket(&self, i: usize, j: usize, x: &[f64]) -> Result<BracketResult> {
        for idx in [i, j] {
            if idx == 0 || idx > self.m {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    max: self.m,
                    context: "lie_bracket field index",
                });
            }
        }
        let f = self.eval(x)?;
        let dc = self.eval_dcoeff(x)?;
        let (i, j) = (i - 1, j - 1);
        let mut v = DVector::zeros(self.n);
        for a in 0..self.n {
            let mut acc = 0.0;
            for b in 0..self.n {
                acc += f[(i, b)] * dc[j][(a, b)] - f[(j, b)] * dc[i][(a, b)];
            }
            v[a] = acc;
        }
        Ok(BracketResult { vector: v, order: 2 })
    }

    /// Rank of the span of all iterated brackets of depth `<= max_order`
    /// at `x` (numerical rank, cutoff [`RANK_TOL`] relative to the largest
    /// singular value). Equals `n` iff Hörmander's condition holds at `x`
    /// up to that order.
    pub fn hormander_rank(&self, x: &[f64], max_order: usize) -> Result<usize> {
        if max_order == 0 {
            return Err(Error::invalid("max_order must be >= 1"));
        }
        self.check_point(x)?;

        // Depth-1 generators carry analytic Jacobians; deeper brackets fall
        // back to central differences of their own evaluation.
        let generators: Vec<VField> = (0..self.m).map(|i| VField::frame_field(self, i)).collect();
        let mut layer = generators.clone();
        let mut vectors: Vec<DVector<f64>> = layer.iter().map(|v| v.eval(x)).collect();

        for _depth in 2..=max_order {
            let mut next = Vec::new();
            for v in &layer {
                for g in &generators {
                    let b = VField::bracket(v.clone(), g.clone());
                    vectors.push(b.eval(x));
                    next.push(b);
                }
            }
            layer = next;
        }

        Ok(numerical_rank(&vectors, self.n))
    }
}

/// A vector field given by an evaluation closure and a Jacobian closure,
/// used internally for iterated brackets.
#[derive(Clone)]
struct VField {
    eval: Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>,
    // jac(x)[(A, B)] = D_B V_A(x)
    jac: Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>,
}

impl VField {
    fn frame_field(frame: &Frame, i: usize) -> Self {
        let f1 = frame.clone();
        let f2 = frame.clone();
        VField {
            eval: Arc::new(move |x| f1.eval(x).expect("frame eval").row(i).transpose()),
            jac: Arc::new(move |x| {
                f2.eval_dcoeff(x).expect("frame dcoeff")[i].clone()
            }),
        }
    }

    fn eval(&self, x: &[f64]) -> DVector<f64> {
        (self.eval)(x)
    }

    fn bracket(v: VField, w: VField) -> VField {
        let (ve, we) = (Arc::clone(&v.eval), Arc::clone(&w.eval));
        let (vj, wj) = (Arc::clone(&v.jac), Arc::clone(&w.jac));
        let eval = Arc::new(move |x: &[f64]| -> DVector<f64> {
            wj(x) * ve(x) - vj(x) * we(x)
        });
        let eval_for_jac = Arc::clone(&eval);
        let jac = Arc::new(move |x: &[f64]| -> DMatrix<f64> {
            let n = x.len();
            let mut j = DMatrix::zeros(n, n);
            let mut xp = x.to_vec();
            for b in 0..n {
                xp[b] = x[b] + FD_STEP;
                let plus = eval_for_jac(&xp);
                xp[b] = x[b] - FD_STEP;
                let minus = eval_for_jac(&xp);
                xp[b] = x[b];
                for a in 0..n {
                    j[(a, b)] = (plus[a] - minus[a]) / (2.0 * FD_STEP);
                }
            }
            j
        });
        VField { eval, jac }
    }
}

fn numerical_rank(vectors: &[DVector<f64>], n: usize) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let mat = DMatrix::from_fn(n, vectors.len(), |a, k| vectors[k][a]);
    let svals = mat.singular_values();
    let smax = svals.max();
    if smax <= 0.0 {
        return 0;
    }
    svals.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Euclidean frame on `R^n`: `X_i = D_i`, coefficients the identity.
pub fn euclidean(n: usize) -> Frame {
    Frame::new(
        format!("euclidean:{n}"),
        n,
        n,
        move |_x| DMatrix::identity(n, n),
        move |_x| vec![DMatrix::zeros(n, n); n],
    )
    .expect("euclidean frame")
}

/// First Heisenberg group frame on `R^3` with coordinates `(x, y, t)`:
/// `X_1 = D_x - (y/2) D_t`, `X_2 = D_y + (x/2) D_t`, so `[X_1, X_2] = D_t`.
pub fn heisenberg() -> Frame {
    Frame::new(
        "heisenberg1",
        3,
        2,
        |p| {
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -p[1] / 2.0, 0.0, 1.0, p[0] / 2.0])
        },
        |_p| {
            let mut d1 = DMatrix::zeros(3, 3);
            d1[(2, 1)] = -0.5; // D_y X_{1t}
            let mut d2 = DMatrix::zeros(3, 3);
            d2[(2, 0)] = 0.5; // D_x X_{2t}
            vec![d1, d2]
        },
    )
    .expect("heisenberg frame")
}

/// Grushin plane frame on `R^2`: `X_1 = D_x`, `X_2 = x D_y`. The horizontal
/// subspace degenerates to dimension 1 on `{x = 0}`; the bracket restores
/// the span.
pub fn grushin() -> Frame {
    Frame::new(
        "grushin",
        2,
        2,
        |p| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, p[0]]),
        |_p| {
            let d1 = DMatrix::zeros(2, 2);
            let mut d2 = DMatrix::zeros(2, 2);
            d2[(1, 0)] = 1.0; // D_x X_{2y}
            vec![d1, d2]
        },
    )
    .expect("grushin frame")
}

/// Resolve a frame by name: `euclidean:n`, `heisenberg1`, `grushin`.
pub fn by_name(name: &str) -> Result<Frame> {
    if let Some(rest) = name.strip_prefix("euclidean:") {
        let n: usize = rest
            .parse()
            .map_err(|_| Error::invalid(format!("bad euclidean dimension `{rest}`")))?;
        if n == 0 {
            return Err(Error::invalid("euclidean dimension must be >= 1"));
        }
        return Ok(euclidean(n));
    }
    match name {
        "heisenberg1" => Ok(heisenberg()),
        "grushin" => Ok(grushin()),
        _ => Err(Error::UnknownName {
            name: name.to_string(),
            kind: "frame",
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn euclidean_coeff_is_identity() {
        let f = euclidean(2);
        let c = f.eval(&[0.3, -0.7]).unwrap();
        assert_eq!(c, DMatrix::identity(2, 2));
        let dc = f.eval_dcoeff(&[0.3, -0.7]).unwrap();
        assert!(dc.iter().all(|d| d.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn heisenberg_coeff_at_origin_and_off_origin() {
        let f = heisenberg();
        let at0 = f.eval(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            at0,
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
        let c = f.eval(&[1.0, 2.0, 0.0]).unwrap();
        assert_eq!(
            c,
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, 0.5])
        );
    }

    #[test]
    fn bracket_euclidean_vanishes() {
        let f = euclidean(3);
        let b = f.lie_bracket(1, 3, &[0.2, 0.4, -0.1]).unwrap();
        assert!(b.vector.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bracket_heisenberg_is_dt() {
        let f = heisenberg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = random_point(&mut rng, 3);
            let b = f.lie_bracket(1, 2, &x).unwrap();
            assert_abs_diff_eq!(b.vector[0], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(b.vector[1], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(b.vector[2], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn bracket_grushin_at_origin() {
        let f = grushin();
        let b = f.lie_bracket(1, 2, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(b.vector[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.vector[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn bracket_antisymmetry_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for frame in [euclidean(3), heisenberg(), grushin()] {
            let n = frame.dim();
            let m = frame.size();
            for _ in 0..30 {
                let x = random_point(&mut rng, n);
                for i in 1..=m {
                    for j in 1..=m {
                        let bij = frame.lie_bracket(i, j, &x).unwrap().vector;
                        let bji = frame.lie_bracket(j, i, &x).unwrap().vector;
                        assert_abs_diff_eq!((bij + bji).norm(), 0.0, epsilon = 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn bracket_index_out_of_range() {
        let f = heisenberg();
        assert!(f.lie_bracket(0, 1, &[0.0; 3]).is_err());
        assert!(f.lie_bracket(1, 3, &[0.0; 3]).is_err());
    }

    #[test]
    fn hormander_ranks_of_builtins() {
        let e = euclidean(2);
        assert_eq!(e.hormander_rank(&[0.4, 0.1], 1).unwrap(), 2);

        let h = heisenberg();
        assert_eq!(h.hormander_rank(&[0.0; 3], 1).unwrap(), 2);
        assert_eq!(h.hormander_rank(&[0.0; 3], 2).unwrap(), 3);

        let g = grushin();
        assert_eq!(g.hormander_rank(&[0.0, 0.0], 1).unwrap(), 1);
        assert_eq!(g.hormander_rank(&[0.0, 0.0], 2).unwrap(), 2);
        // Away from {x = 0} the frame already spans.
        assert_eq!(g.hormander_rank(&[0.5, 0.0], 1).unwrap(), 2);
    }

    #[test]
    fn hormander_rank_monotone_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for frame in [euclidean(2), heisenberg(), grushin()] {
            let x = random_point(&mut rng, frame.dim());
            let mut prev = 0;
            for order in 1..=3 {
                let r = frame.hormander_rank(&x, order).unwrap();
                assert!(r >= prev, "rank must not decrease with order");
                prev = r;
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let f = heisenberg();
        assert!(f.eval(&[0.0, 0.0]).is_err());
        assert!(f.eval(&[0.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn builtin_dcoeff_matches_finite_differences() {
        // All built-in coefficient functions are (at most) linear in x, so
        // second-order central differences reproduce dcoeff exactly up to
        // roundoff; check agreement directly at random interior points.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for frame in [euclidean(3), heisenberg(), grushin()] {
            let n = frame.dim();
            let m = frame.size();
            for _ in 0..100 {
                let x = random_point(&mut rng, n);
                let dc = frame.eval_dcoeff(&x).unwrap();
                let h = 1e-4;
                let mut xp = x.clone();
                for b in 0..n {
                    xp[b] = x[b] + h;
                    let plus = frame.eval(&xp).unwrap();
                    xp[b] = x[b] - h;
                    let minus = frame.eval(&xp).unwrap();
                    xp[b] = x[b];
                    for i in 0..m {
                        for a in 0..n {
                            let fd = (plus[(i, a)] - minus[(i, a)]) / (2.0 * h);
                            assert_abs_diff_eq!(fd, dc[i][(a, b)], epsilon = 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn fd_dcoeff_is_second_order_on_nonlinear_frame() {
        // Built-ins have linear coefficients (central differences are exact
        // for them), so the O(h^2) signature is checked on a user-defined
        // frame with genuinely curved coefficients.
        let curved = Frame::new(
            "curved",
            2,
            2,
            |p| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, p[0].exp()]),
            |p| {
                let d1 = DMatrix::zeros(2, 2);
                let mut d2 = DMatrix::zeros(2, 2);
                d2[(1, 0)] = p[0].exp();
                vec![d1, d2]
            },
        )
        .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let x = random_point(&mut rng, 2);
            let exact = curved.eval_dcoeff(&x).unwrap()[1][(1, 0)];
            let fd = |h: f64| {
                let p = curved.eval(&[x[0] + h, x[1]]).unwrap()[(1, 1)];
                let m = curved.eval(&[x[0] - h, x[1]]).unwrap()[(1, 1)];
                (p - m) / (2.0 * h)
            };
            let e1 = (fd(1e-2) - exact).abs();
            let e2 = (fd(5e-3) - exact).abs();
            let ratio = e1 / e2;
            assert!(
                (3.0..5.0).contains(&ratio),
                "expected ~4x error reduction, got {ratio} (e1={e1:.3e}, e2={e2:.3e})"
            );
        }
    }

    #[test]
    fn synthesized_dcoeff_close_to_analytic() {
        let synth = Frame::from_coeff("synth", 2, 2, |p| {
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, (p[0] * 1.3).sin()])
        })
        .unwrap();
        let x = [0.4, -0.2];
        let dc = synth.eval_dcoeff(&x).unwrap();
        let exact = 1.3 * (0.4f64 * 1.3).cos();
        assert_abs_diff_eq!(dc[1][(1, 0)], exact, epsilon = 1e-8);
    }

    #[test]
    fn by_name_resolves_builtins() {
        assert_eq!(by_name("euclidean:4").unwrap().dim(), 4);
        assert_eq!(by_name("heisenberg1").unwrap().size(), 2);
        assert_eq!(by_name("grushin").unwrap().dim(), 2);
        assert!(by_name("nope").is_err());
    }
}
