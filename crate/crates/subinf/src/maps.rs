//! Built-in analytic test maps with exact second-order jets.
//!
//! Maps are addressable by name from the CLI and config files:
//!
//! - `paper_exp` — `u(x, y) = (cos x - cos y, sin x - sin y)`, the standard
//!   smooth example whose gradient norm is constant and whose rank drops on
//!   the diagonal `{x = y}`
//! - `aronsson` — `u(x, y) = x^{4/3} - y^{4/3}` with the signed-power
//!   convention `s^{4/3} = sign(s) |s|^{4/3}`
//! - `affine:ROWS|B` — affine map, e.g. `affine:1,0;0,1|0,0`
//! - `coord:k` — scalar `u(x) = x_k`, 1-based
//! - `quad:ROWS` — scalar `u(x) = (1/2) x^T Q x`, e.g. `quad:0,1;1,0` for `xy`
//! - `gauss` — scalar radial bump `u(x) = exp(-|x|^2)`
//!
//! User maps can be registered as closures via [`AnalyticMap::from_fn`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::calculus::Jet2;
use crate::error::{Error, Result};

type JetFn = dyn Fn(&[f64]) -> Result<Jet2> + Send + Sync;

/// An analytic map `u : R^n -> R^N` with closed-form jets.
#[derive(Clone)]
pub struct AnalyticMap {
    name: String,
    n: usize,
    n_comp: usize,
    jet: Arc<JetFn>,
}

impl std::fmt::Debug for AnalyticMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticMap")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("n_comp", &self.n_comp)
            .finish()
    }
}

impl AnalyticMap {
    pub fn from_fn(
        name: impl Into<String>,
        n: usize,
        n_comp: usize,
        jet: impl Fn(&[f64]) -> Result<Jet2> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            n_comp,
            jet: Arc::new(jet),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Domain dimension `n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Target dimension `N`.
    pub fn components(&self) -> usize {
        self.n_comp
    }

    /// Exact value / gradient / Hessian at `x`.
    pub fn jet(&self, x: &[f64]) -> Result<Jet2> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
                context: "map evaluation point",
            });
        }
        (self.jet)(x)
    }

    /// Value only.
    pub fn value(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.jet(x)?.value)
    }
}

/// `u(x, y) = (cos x - cos y, sin x - sin y)`.
pub fn paper_exp() -> AnalyticMap {
    AnalyticMap::from_fn("paper_exp", 2, 2, |p| {
        let (x, y) = (p[0], p[1]);
        let value = DVector::from_vec(vec![x.cos() - y.cos(), x.sin() - y.sin()]);
        let egrad = DMatrix::from_row_slice(2, 2, &[-x.sin(), y.sin(), x.cos(), -y.cos()]);
        let h0 = DMatrix::from_row_slice(2, 2, &[-x.cos(), 0.0, 0.0, y.cos()]);
        let h1 = DMatrix::from_row_slice(2, 2, &[-x.sin(), 0.0, 0.0, y.sin()]);
        Jet2::new(value, egrad, vec![h0, h1])
    })
}

/// Signed power `sign(s) |s|^p`.
fn signed_pow(s: f64, p: f64) -> f64 {
    s.signum() * s.abs().powf(p)
}

/// The Aronsson map `u(x, y) = x^{4/3} - y^{4/3}` (signed powers). The
/// Hessian blows up on the axes; requesting a jet there is a singular-point
/// error.
pub fn aronsson() -> AnalyticMap {
    AnalyticMap::from_fn("aronsson", 2, 1, |p| {
        let (x, y) = (p[0], p[1]);
        if x == 0.0 || y == 0.0 {
            return Err(Error::SingularPoint {
                map: "aronsson".into(),
                point: p.to_vec(),
                reason: "second derivatives of |s|^{4/3} are singular at s = 0",
            });
        }
        let value = DVector::from_vec(vec![signed_pow(x, 4.0 / 3.0) - signed_pow(y, 4.0 / 3.0)]);
        // d/ds sign(s)|s|^{4/3} = (4/3) |s|^{1/3}
        let egrad = DMatrix::from_row_slice(
            1,
            2,
            &[
                4.0 / 3.0 * x.abs().powf(1.0 / 3.0),
                -4.0 / 3.0 * y.abs().powf(1.0 / 3.0),
            ],
        );
        // d2/ds2 = (4/9) sign(s) |s|^{-2/3}
        let hess = DMatrix::from_row_slice(
            2,
            2,
            &[
                4.0 / 9.0 * x.signum() * x.abs().powf(-2.0 / 3.0),
                0.0,
                0.0,
                -4.0 / 9.0 * y.signum() * y.abs().powf(-2.0 / 3.0),
            ],
        );
        Jet2::new(value, egrad, vec![hess])
    })
}

/// Affine map `u(x) = A x + b`.
pub fn affine(a: DMatrix<f64>, b: DVector<f64>) -> Result<AnalyticMap> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
            context: "affine offset",
        });
    }
    let (n_comp, n) = (a.nrows(), a.ncols());
    Ok(AnalyticMap::from_fn("affine", n, n_comp, move |p| {
        let x = DVector::from_column_slice(p);
        let value = &a * &x + &b;
        Jet2::new(value, a.clone(), vec![DMatrix::zeros(n, n); n_comp])
    }))
}

/// Scalar coordinate map `u(x) = x_k`, 1-based `k`.
pub fn coord(n: usize, k: usize) -> Result<AnalyticMap> {
    if k == 0 || k > n {
        return Err(Error::IndexOutOfRange {
            index: k,
            max: n,
            context: "coordinate map index",
        });
    }
    Ok(AnalyticMap::from_fn(
        format!("coord:{k}"),
        n,
        1,
        move |p| {
            let mut egrad = DMatrix::zeros(1, n);
            egrad[(0, k - 1)] = 1.0;
            Jet2::new(
                DVector::from_vec(vec![p[k - 1]]),
                egrad,
                vec![DMatrix::zeros(n, n)],
            )
        },
    ))
}

/// Scalar quadratic form `u(x) = (1/2) x^T Q x` (Q symmetrized).
pub fn quad(q: DMatrix<f64>) -> Result<AnalyticMap> {
    if q.nrows() != q.ncols() {
        return Err(Error::invalid("quadratic form matrix must be square"));
    }
    let n = q.nrows();
    let sym = (&q + q.transpose()) * 0.5;
    Ok(AnalyticMap::from_fn("quad", n, 1, move |p| {
        let x = DVector::from_column_slice(p);
        let sx = &sym * &x;
        let egrad = DMatrix::from_fn(1, n, |_, a| sx[a]);
        Jet2::new(DVector::from_vec(vec![0.5 * x.dot(&sx)]), egrad, vec![sym.clone()])
    }))
}

/// Scalar radial bump `u(x) = exp(-|x|^2)`; its gradient norm
/// `2 |x| exp(-|x|^2)` peaks at `|x| = 1/sqrt(2)`, strictly inside any box
/// containing that sphere.
pub fn gauss(n: usize) -> AnalyticMap {
    AnalyticMap::from_fn("gauss", n, 1, move |p| {
        let q: f64 = p.iter().map(|v| v * v).sum();
        let e = (-q).exp();
        let egrad = DMatrix::from_fn(1, n, |_, a| -2.0 * p[a] * e);
        let hess = DMatrix::from_fn(n, n, |a, b| {
            let kron = if a == b { 1.0 } else { 0.0 };
            (4.0 * p[a] * p[b] - 2.0 * kron) * e
        });
        Jet2::new(DVector::from_vec(vec![e]), egrad, vec![hess])
    })
}

fn parse_matrix(rows: &str, context: &'static str) -> Result<DMatrix<f64>> {
    let parsed: Vec<Vec<f64>> = rows
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad number `{v}` in {context}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let nrows = parsed.len();
    let ncols = parsed.first().map(|r| r.len()).unwrap_or(0);
    if nrows == 0 || ncols == 0 || parsed.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid(format!("ragged or empty matrix in {context}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| parsed[r][c]))
}

/// Resolve a map by name. `n_hint` fixes the domain dimension for maps that
/// work in any dimension (`coord:k`, `gauss`).
pub fn by_name(name: &str, n_hint: Option<usize>) -> Result<AnalyticMap> {
    if let Some(rest) = name.strip_prefix("affine:") {
        let (rows, b) = rest.split_once('|').ok_or_else(|| {
            Error::invalid("affine map syntax is affine:ROWS|B, e.g. affine:1,0;0,1|0,0")
        })?;
        let a = parse_matrix(rows, "affine matrix")?;
        let b: Vec<f64> = b
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad number `{v}` in affine offset")))
            })
            .collect::<Result<_>>()?;
        return affine(a, DVector::from_vec(b));
    }
    if let Some(rest) = name.strip_prefix("coord:") {
        let k: usize = rest
            .parse()
            .map_err(|_| Error::invalid(format!("bad coordinate index `{rest}`")))?;
        let n = n_hint.unwrap_or(k.max(2));
        return coord(n, k);
    }
    if let Some(rest) = name.strip_prefix("quad:") {
        return quad(parse_matrix(rest, "quadratic form")?);
    }
    match name {
        "paper_exp" => Ok(paper_exp()),
        "aronsson" => Ok(aronsson()),
        "gauss" => Ok(gauss(n_hint.unwrap_or(2))),
        _ => Err(Error::UnknownName {
            name: name.to_string(),
            kind: "map",
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn paper_exp_jet_at_origin() {
        let m = paper_exp();
        let j = m.jet(&[0.0, 0.0]).unwrap();
        assert_eq!(j.value, DVector::from_vec(vec![0.0, 0.0]));
        assert_eq!(
            j.egrad,
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0])
        );
    }

    #[test]
    fn aronsson_gradient_and_singularity() {
        let m = aronsson();
        let j = m.jet(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(j.egrad[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j.egrad[(0, 1)], -4.0 / 3.0, epsilon = 1e-14);
        assert!(matches!(
            m.jet(&[0.0, 1.0]),
            Err(Error::SingularPoint { .. })
        ));
    }

    #[test]
    fn affine_parses_and_has_zero_hessian() {
        let m = by_name("affine:1,2;3,4|0.5,-0.5", None).unwrap();
        let j = m.jet(&[1.0, 1.0]).unwrap();
        assert_eq!(j.value, DVector::from_vec(vec![3.5, 6.5]));
        assert_eq!(j.egrad, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(j.ehess.iter().all(|h| h.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn coord_and_quad_jets() {
        let c = by_name("coord:3", Some(3)).unwrap();
        let j = c.jet(&[0.1, 0.2, 0.7]).unwrap();
        assert_eq!(j.value[0], 0.7);
        assert_eq!(j.egrad[(0, 2)], 1.0);

        // quad:0,1;1,0 is u = xy
        let q = by_name("quad:0,1;1,0", None).unwrap();
        let j = q.jet(&[2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(j.value[0], 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j.egrad[(0, 0)], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j.egrad[(0, 1)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(j.ehess[0][(0, 1)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_jet_matches_hand_derivatives() {
        let g = gauss(2);
        let j = g.jet(&[0.5, -0.25]).unwrap();
        let e = (-0.3125f64).exp();
        assert_abs_diff_eq!(j.value[0], e, epsilon = 1e-14);
        assert_abs_diff_eq!(j.egrad[(0, 0)], -1.0 * e, epsilon = 1e-14);
        assert_abs_diff_eq!(j.ehess[0][(0, 0)], (4.0 * 0.25 - 2.0) * e, epsilon = 1e-14);
        assert_abs_diff_eq!(j.ehess[0][(0, 1)], 4.0 * 0.5 * -0.25 * e, epsilon = 1e-14);
    }

    #[test]
    fn unknown_map_is_an_error() {
        assert!(by_name("mystery", None).is_err());
    }
}
