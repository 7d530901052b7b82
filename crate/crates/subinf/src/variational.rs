//! Sup- and p-energies on subdomains, the rank-one and vertical variation
//! tests, and the maximum–minimum principle check.
//!
//! The two variation classes mirror the minimality notion for the supremal
//! energy `E_inf(u, D) = sup_D |Xu|`:
//!
//! - rank-one: `u + g xi` with a scalar bump `g` vanishing on the subdomain
//!   boundary and a fixed unit direction `xi` in `R^N`;
//! - vertical: `u + h nu` with a free scalar `h` on the closure and a unit
//!   vertical field `nu` valued in the nullspace of `Xu^T`.
//!
//! Energies are sampled maxima / midpoint-rule integrals over a lattice;
//! reports carry the sampling density they were computed with.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calculus::{self, HorizontalGradient};
use crate::error::{Error, Result};
use crate::frames::Frame;
use crate::geometry::{lattice_indices, BoxDomain};
use crate::maps::AnalyticMap;
use crate::operators;

/// A sampled compactly-contained box subdomain: interior samples are cell
/// centers of a regular partition (midpoint rule), boundary samples the face
/// lattice of the same partition.
#[derive(Debug, Clone)]
pub struct Subdomain {
    pub box_domain: BoxDomain,
    cells_per_axis: Vec<usize>,
    spacing: Vec<f64>,
    cell_volume: f64,
    pub samples: Vec<Vec<f64>>,
    pub boundary_samples: Vec<Vec<f64>>,
}

impl Subdomain {
    pub fn new(box_domain: &BoxDomain, cells_per_axis: &[usize]) -> Result<Self> {
        let n = box_domain.dim();
        if cells_per_axis.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cells_per_axis.len(),
                context: "subdomain cell counts",
            });
        }
        if cells_per_axis.iter().any(|&c| c < 2) {
            return Err(Error::invalid("need at least 2 cells per axis"));
        }
        let spacing: Vec<f64> = (0..n)
            .map(|a| box_domain.side(a) / cells_per_axis[a] as f64)
            .collect();
        let cell_volume: f64 = spacing.iter().product();

        let samples: Vec<Vec<f64>> = lattice_indices(cells_per_axis)
            .into_iter()
            .map(|idx| {
                (0..n)
                    .map(|a| box_domain.lo[a] + (idx[a] as f64 + 0.5) * spacing[a])
                    .collect()
            })
            .collect();

        let vertex_counts: Vec<usize> = cells_per_axis.iter().map(|&c| c + 1).collect();
        let boundary_samples: Vec<Vec<f64>> = lattice_indices(&vertex_counts)
            .into_iter()
            .filter(|idx| {
                idx.iter()
                    .enumerate()
                    .any(|(a, &i)| i == 0 || i == cells_per_axis[a])
            })
            .map(|idx| {
                (0..n)
                    .map(|a| box_domain.lo[a] + idx[a] as f64 * spacing[a])
                    .collect()
            })
            .collect();

        Ok(Self {
            box_domain: box_domain.clone(),
            cells_per_axis: cells_per_axis.to_vec(),
            spacing,
            cell_volume,
            samples,
            boundary_samples,
        })
    }

    /// Uniform partition with `cells` cells on every axis.
    pub fn uniform(box_domain: &BoxDomain, cells: usize) -> Result<Self> {
        Self::new(box_domain, &vec![cells; box_domain.dim()])
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    /// Index of the sample whose cell contains `x` (clamped to the box).
    fn anchor_index(&self, x: &[f64]) -> usize {
        let mut flat = 0usize;
        for a in 0..self.box_domain.dim() {
            let rel = (x[a] - self.box_domain.lo[a]) / self.spacing[a];
            let k = (rel.floor() as i64).clamp(0, self.cells_per_axis[a] as i64 - 1) as usize;
            flat = flat * self.cells_per_axis[a] + k;
        }
        flat
    }
}

fn hgrad_at(map: &AnalyticMap, frame: &Frame, x: &[f64]) -> Result<HorizontalGradient> {
    let jet = map.jet(x)?;
    let fmat = frame.eval(x)?;
    calculus::horizontal_gradient(&jet, &fmat)
}

/// `sup` of `|Xu|` over interior and boundary samples.
pub fn sup_energy(map: &AnalyticMap, frame: &Frame, d: &Subdomain) -> Result<f64> {
    let mut sup = 0.0f64;
    for x in d.samples.iter().chain(&d.boundary_samples) {
        sup = sup.max(hgrad_at(map, frame, x)?.norm());
    }
    Ok(sup)
}

/// Midpoint-rule integral of `|Xu|^p` over the subdomain.
pub fn p_energy(map: &AnalyticMap, frame: &Frame, d: &Subdomain, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("p_energy requires p >= 1"));
    }
    let mut acc = 0.0;
    for x in &d.samples {
        acc += hgrad_at(map, frame, x)?.norm().powf(p);
    }
    Ok(acc * d.cell_volume())
}

/// Bump profile: products of per-axis quadratics vanishing on the support
/// faces. The squared variant has vanishing gradient on the faces too, so
/// its extension by zero stays C^1 (used to localize variations strictly
/// inside a subdomain).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BumpProfile {
    Quadratic,
    SquaredQuadratic,
}

/// A scalar bump `g` with `g = 0` on the boundary of its support box,
/// positive inside, maximal (= amplitude) at the center, with analytic
/// gradient. Points outside the support evaluate to zero.
#[derive(Debug, Clone, Serialize)]
pub struct Bump {
    pub support: BoxDomain,
    pub amplitude: f64,
    pub profile: BumpProfile,
}

impl Bump {
    pub fn new(support: BoxDomain, amplitude: f64, profile: BumpProfile) -> Result<Self> {
        if !(amplitude > 0.0) {
            return Err(Error::invalid("bump amplitude must be positive"));
        }
        Ok(Self {
            support,
            amplitude,
            profile,
        })
    }

    /// Per-axis factor in [0, 1] and its derivative.
    fn factor(&self, a: usize, z: f64) -> (f64, f64) {
        let lo = self.support.lo[a];
        let hi = self.support.hi[a];
        let s = hi - lo;
        let q = 4.0 * (z - lo) * (hi - z) / (s * s);
        let dq = 4.0 * (lo + hi - 2.0 * z) / (s * s);
        match self.profile {
            BumpProfile::Quadratic => (q, dq),
            BumpProfile::SquaredQuadratic => (q * q, 2.0 * q * dq),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if !self.support.contains(x) {
            return 0.0;
        }
        let mut g = self.amplitude;
        for a in 0..x.len() {
            g *= self.factor(a, x[a]).0;
        }
        g
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if !self.support.contains(x) {
            return vec![0.0; n];
        }
        let factors: Vec<(f64, f64)> = (0..n).map(|a| self.factor(a, x[a])).collect();
        (0..n)
            .map(|a| {
                let mut g = self.amplitude * factors[a].1;
                for (b, f) in factors.iter().enumerate() {
                    if b != a {
                        g *= f.0;
                    }
                }
                g
            })
            .collect()
    }
}

/// Bump supported on the whole subdomain (the classic rank-one variation).
pub fn make_bump(d: &Subdomain, amplitude: f64) -> Result<Bump> {
    Bump::new(d.box_domain.clone(), amplitude, BumpProfile::Quadratic)
}

/// Which variation class a report came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VariationKind {
    RankOne,
    Vertical,
}

/// Energies before and after one variation.
#[derive(Debug, Clone, Serialize)]
pub struct VariationReport {
    pub base_energy: f64,
    pub varied_energy: f64,
    /// `varied - base`; negative margins witness non-minimality.
    pub margin: f64,
    pub variation_kind: VariationKind,
    /// Human-readable descriptor of `(g, xi)` or `(h, nu)`.
    pub parameters: String,
    /// Samples per axis the energies were computed with.
    pub sampling: Vec<usize>,
}

/// Compare `E_inf(u, D)` against `E_inf(u + g xi, D)` with the varied jet
/// formed analytically (`Xw = Xu + xi (x) Xg`).
pub fn rank_one_test(
    map: &AnalyticMap,
    frame: &Frame,
    d: &Subdomain,
    g: &Bump,
    xi: &DVector<f64>,
) -> Result<VariationReport> {
    if (xi.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::invalid("rank-one direction must be a unit vector"));
    }
    if xi.len() != map.components() {
        return Err(Error::DimensionMismatch {
            expected: map.components(),
            got: xi.len(),
            context: "rank-one direction",
        });
    }
    let m = frame.size();
    // Variation energies sample the open subdomain: on boxes, every C^1
    // variation vanishing on the boundary has zero gradient at the corners,
    // so a closed-box sup pinned there could never move and the test would
    // lose its discriminating power.
    let mut base = 0.0f64;
    let mut varied = 0.0f64;
    for x in &d.samples {
        let jet = map.jet(x)?;
        let fmat = frame.eval(x)?;
        let h = calculus::horizontal_gradient(&jet, &fmat)?;
        base = base.max(h.norm());

        let dg = g.gradient(x);
        let mut normsq = 0.0;
        for alpha in 0..map.components() {
            for i in 0..m {
                let xg_i: f64 = (0..x.len()).map(|a| fmat[(i, a)] * dg[a]).sum();
                let w = h.mat[(alpha, i)] + xi[alpha] * xg_i;
                normsq += w * w;
            }
        }
        varied = varied.max(normsq.sqrt());
    }
    Ok(VariationReport {
        base_energy: base,
        varied_energy: varied,
        margin: varied - base,
        variation_kind: VariationKind::RankOne,
        parameters: format!(
            "bump amplitude {:.3e} ({:?}), xi {:?}",
            g.amplitude,
            g.profile,
            xi.as_slice()
        ),
        sampling: d.cells_per_axis.clone(),
    })
}

/// Seeded batch of rank-one variations: amplitudes log-spaced in
/// `[1e-3, 1e-1]`, directions uniform on the unit sphere of `R^N`.
pub fn rank_one_draws(
    map: &AnalyticMap,
    frame: &Frame,
    d: &Subdomain,
    draws: usize,
    seed: u64,
) -> Result<Vec<VariationReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_comp = map.components();
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let level = rng.random_range(0..9);
        let amplitude = 1e-3 * 10f64.powf(level as f64 / 4.0);
        let xi = random_unit(&mut rng, n_comp);
        let g = make_bump(d, amplitude)?;
        out.push(rank_one_test(map, frame, d, &g, &xi)?);
    }
    Ok(out)
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| {
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

/// A unit vertical field `nu` over a subdomain: `nu(x) . X_i u(x) = 0` for
/// every `i`. Constructed at the first sample from the SVD nullspace of
/// `Xu^T` and continued by projecting the previous sample's vector with the
/// nullspace projector along the lexicographic sweep.
#[derive(Debug, Clone)]
pub struct VerticalField {
    map: AnalyticMap,
    frame: Frame,
    subdomain: Subdomain,
    pub basis_index: usize,
    vectors: Vec<DVector<f64>>,
}

impl VerticalField {
    /// The continued unit vector at `x`: the stored vector of the cell
    /// containing `x`, re-projected with the nullspace projector at `x` and
    /// renormalized.
    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        let anchor = self.subdomain.anchor_index(x);
        let h = hgrad_at(&self.map, &self.frame, x)?;
        let proj = operators::projectors(&h, crate::frames::RANK_TOL)?;
        let v = &proj.bot * &self.vectors[anchor];
        let norm = v.norm();
        if norm < 1e-6 {
            return Err(Error::ProjectionCollapse {
                sample: anchor,
                norm,
            });
        }
        Ok(v / norm)
    }

    /// Stored vector at each interior sample.
    pub fn at_samples(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    /// `X_i nu` at `x` by central differences of the continued field with
    /// step half the sample spacing, contracted with the frame.
    pub fn horizontal_derivative(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.frame.dim();
        let n_comp = self.map.components();
        let step = 0.5
            * self
                .subdomain
                .spacing()
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
        let fmat = self.frame.eval(x)?;
        // Dnu[(alpha, a)] = D_a nu_alpha
        let mut dnu = DMatrix::zeros(n_comp, n);
        let mut xp = x.to_vec();
        for a in 0..n {
            xp[a] = x[a] + step;
            let plus = self.eval(&xp)?;
            xp[a] = x[a] - step;
            let minus = self.eval(&xp)?;
            xp[a] = x[a];
            for alpha in 0..n_comp {
                dnu[(alpha, a)] = (plus[alpha] - minus[alpha]) / (2.0 * step);
            }
        }
        Ok(dnu * fmat.transpose())
    }
}

/// Construct a vertical field over the subdomain; errors if the rank of
/// `Xu` varies across samples (then the vertical bundle may be empty) or if
/// the projection continuation collapses.
pub fn vertical_field(
    map: &AnalyticMap,
    frame: &Frame,
    d: &Subdomain,
    basis_index: usize,
) -> Result<VerticalField> {
    let n_comp = map.components();
    let mut ranks = Vec::new();
    let mut grads = Vec::with_capacity(d.samples.len());
    for x in &d.samples {
        let h = hgrad_at(map, frame, x)?;
        if !ranks.contains(&h.rank) {
            ranks.push(h.rank);
        }
        grads.push(h);
    }
    if ranks.len() != 1 {
        ranks.sort();
        return Err(Error::RankVariation { ranks });
    }
    let rank = ranks[0];
    let null_dim = n_comp - rank;
    if null_dim == 0 {
        return Err(Error::invalid(format!(
            "no vertical directions: rank(Xu) = N = {n_comp} on the subdomain"
        )));
    }
    if basis_index >= null_dim {
        return Err(Error::IndexOutOfRange {
            index: basis_index,
            max: null_dim - 1,
            context: "vertical nullspace basis index",
        });
    }

    // Base vector: an orthonormal basis of null(Xu^T) at the first sample is
    // the left singular vectors beyond the rank; complete the basis when the
    // thin SVD does not carry enough columns.
    let base = nullspace_basis(&grads[0], rank, basis_index)?;

    let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(d.samples.len());
    let mut prev = base;
    for (k, h) in grads.iter().enumerate() {
        let proj = operators::projectors(h, crate::frames::RANK_TOL)?;
        let v = &proj.bot * &prev;
        let norm = v.norm();
        if norm < 1e-6 {
            return Err(Error::ProjectionCollapse { sample: k, norm });
        }
        let unit = v / norm;
        vectors.push(unit.clone());
        prev = unit;
    }

    Ok(VerticalField {
        map: map.clone(),
        frame: frame.clone(),
        subdomain: d.clone(),
        basis_index,
        vectors,
    })
}

fn nullspace_basis(
    h: &HorizontalGradient,
    rank: usize,
    basis_index: usize,
) -> Result<DVector<f64>> {
    let n_comp = h.components();
    // Columns of a full orthonormal basis of R^N orthogonal to range(Xu):
    // start from the thin-SVD left vectors, extend with Gram-Schmidt over
    // the coordinate basis.
    let mut basis: Vec<DVector<f64>> = (0..h.left_vectors.ncols().min(rank))
        .map(|k| h.left_vectors.column(k).into_owned())
        .collect();
    let mut null_vectors: Vec<DVector<f64>> = Vec::new();
    for k in rank..h.left_vectors.ncols() {
        let col = h.left_vectors.column(k).into_owned();
        if col.norm() > 0.5 {
            null_vectors.push(col.clone());
            basis.push(col);
        }
    }
    let mut coord = 0;
    while basis.len() < n_comp && coord < n_comp {
        let mut v = DVector::zeros(n_comp);
        v[coord] = 1.0;
        for b in &basis {
            let d = b.dot(&v);
            v -= b * d;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            let unit = v / norm;
            null_vectors.push(unit.clone());
            basis.push(unit);
        }
        coord += 1;
    }
    null_vectors
        .get(basis_index)
        .cloned()
        .ok_or_else(|| Error::invalid("nullspace basis extraction failed"))
}

/// The scalar factor `h` of a vertical variation `u + h nu`. Unlike the
/// rank-one bump, `h` need not vanish on the subdomain boundary.
#[derive(Debug, Clone)]
pub enum HVariation {
    Constant(f64),
    Bump(Bump),
}

impl HVariation {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            HVariation::Constant(c) => *c,
            HVariation::Bump(b) => b.eval(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            HVariation::Constant(_) => vec![0.0; x.len()],
            HVariation::Bump(b) => b.gradient(x),
        }
    }

    fn describe(&self) -> String {
        match self {
            HVariation::Constant(c) => format!("h = const {c}"),
            HVariation::Bump(b) => format!("h = bump amplitude {:.3e}", b.amplitude),
        }
    }
}

/// The varied horizontal gradient `X(u + h nu)` at a point:
/// `X_i u + nu X_i h + h X_i nu`, with `X_i nu` from the continued field.
fn varied_vertical_norm(
    map: &AnalyticMap,
    frame: &Frame,
    x: &[f64],
    h_var: &HVariation,
    field: &VerticalField,
    t: f64,
) -> Result<f64> {
    let jet = map.jet(x)?;
    let fmat = frame.eval(x)?;
    let hg = calculus::horizontal_gradient(&jet, &fmat)?;
    let m = frame.size();
    let n = frame.dim();
    let n_comp = map.components();

    let nu = field.eval(x)?;
    let xnu = field.horizontal_derivative(x)?;
    let hval = h_var.eval(x);
    let dh = h_var.gradient(x);

    let mut normsq = 0.0;
    for i in 0..m {
        let xh_i: f64 = (0..n).map(|a| fmat[(i, a)] * dh[a]).sum();
        for alpha in 0..n_comp {
            let w = hg.mat[(alpha, i)] + t * (nu[alpha] * xh_i + hval * xnu[(alpha, i)]);
            normsq += w * w;
        }
    }
    Ok(normsq.sqrt())
}

/// Compare `E_inf(u, D)` against `E_inf(u + h nu, D)`.
pub fn vertical_test(
    map: &AnalyticMap,
    frame: &Frame,
    d: &Subdomain,
    h_var: &HVariation,
    field: &VerticalField,
) -> Result<VariationReport> {
    let mut base = 0.0f64;
    let mut varied = 0.0f64;
    for x in &d.samples {
        base = base.max(hgrad_at(map, frame, x)?.norm());
        varied = varied.max(varied_vertical_norm(map, frame, x, h_var, field, 1.0)?);
    }
    Ok(VariationReport {
        base_energy: base,
        varied_energy: varied,
        margin: varied - base,
        variation_kind: VariationKind::Vertical,
        parameters: format!(
            "{}, nu basis index {}",
            h_var.describe(),
            field.basis_index
        ),
        sampling: d.cells_per_axis.clone(),
    })
}

/// Seeded batch of vertical variations: alternating constant `h` in
/// `[-1, 1]` and bump `h` with log-spaced-ish amplitudes.
pub fn vertical_draws(
    map: &AnalyticMap,
    frame: &Frame,
    d: &Subdomain,
    field: &VerticalField,
    draws: usize,
    seed: u64,
) -> Result<Vec<VariationReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(draws);
    for k in 0..draws {
        let h_var = if k % 2 == 0 {
            HVariation::Constant(rng.random_range(-1.0..1.0))
        } else {
            HVariation::Bump(make_bump(d, rng.random_range(0.001..1.0))?)
        };
        out.push(vertical_test(map, frame, d, &h_var, field)?);
    }
    Ok(out)
}

/// `E_p(u + t h nu, D)` as a function of `t` (midpoint rule over interior
/// samples); convex in `t` for `p >= 2`.
pub fn vertical_p_energy_profile(
    map: &AnalyticMap,
    frame: &Frame,
    d: &Subdomain,
    h_var: &HVariation,
    field: &VerticalField,
    p: f64,
    t_values: &[f64],
) -> Result<Vec<f64>> {
    if !(p >= 2.0) {
        return Err(Error::invalid("profile requires p >= 2"));
    }
    let mut out = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let mut acc = 0.0;
        for x in &d.samples {
            let norm = varied_vertical_norm(map, frame, x, h_var, field, t)?;
            acc += norm.powf(p);
        }
        out.push(acc * d.cell_volume());
    }
    Ok(out)
}

/// Max–min principle comparison of `|Xu|` between interior and boundary
/// samples.
#[derive(Debug, Clone, Serialize)]
pub struct MaxMinReport {
    pub sup_interior: f64,
    pub max_boundary: f64,
    pub inf_interior: f64,
    pub min_boundary: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn max_principle_check(
    map: &AnalyticMap,
    frame: &Frame,
    d: &Subdomain,
    tolerance: f64,
) -> Result<MaxMinReport> {
    let mut sup_int = f64::NEG_INFINITY;
    let mut inf_int = f64::INFINITY;
    for x in &d.samples {
        let norm = hgrad_at(map, frame, x)?.norm();
        sup_int = sup_int.max(norm);
        inf_int = inf_int.min(norm);
    }
    let mut max_bdry = f64::NEG_INFINITY;
    let mut min_bdry = f64::INFINITY;
    for x in &d.boundary_samples {
        let norm = hgrad_at(map, frame, x)?.norm();
        max_bdry = max_bdry.max(norm);
        min_bdry = min_bdry.min(norm);
    }
    let pass = sup_int <= max_bdry + tolerance && inf_int >= min_bdry - tolerance;
    Ok(MaxMinReport {
        sup_interior: sup_int,
        max_boundary: max_bdry,
        inf_interior: inf_int,
        min_boundary: min_bdry,
        tolerance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames;
    use crate::maps;
    use approx::assert_abs_diff_eq;

    fn unit_square() -> Subdomain {
        Subdomain::uniform(&BoxDomain::cube(2, 0.0, 1.0).unwrap(), 9).unwrap()
    }

    #[test]
    fn subdomain_samples_are_strictly_interior() {
        let d = unit_square();
        assert_eq!(d.samples.len(), 81);
        for x in &d.samples {
            assert!(d.box_domain.contains_strict(x, 1e-9));
        }
        for x in &d.boundary_samples {
            assert!(x
                .iter()
                .zip(d.box_domain.lo.iter().zip(&d.box_domain.hi))
                .any(|(&v, (&lo, &hi))| v == lo || v == hi));
        }
    }

    #[test]
    fn sup_energy_examples() {
        let e2 = frames::euclidean(2);
        let d = unit_square();
        let coord = maps::coord(2, 1).unwrap();
        assert_abs_diff_eq!(sup_energy(&coord, &e2, &d).unwrap(), 1.0, epsilon = 1e-12);

        let pe = maps::paper_exp();
        assert_abs_diff_eq!(
            sup_energy(&pe, &e2, &d).unwrap(),
            2.0f64.sqrt(),
            epsilon = 1e-12
        );

        // u = t on the Heisenberg group over [-1,1]^3: |Xu| = sqrt(x^2+y^2)/2
        // peaks at the corners.
        let h = frames::heisenberg();
        let dh = Subdomain::uniform(&BoxDomain::cube(3, -1.0, 1.0).unwrap(), 6).unwrap();
        let t_map = maps::coord(3, 3).unwrap();
        assert_abs_diff_eq!(
            sup_energy(&t_map, &h, &dh).unwrap(),
            2.0f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn p_energy_examples() {
        let e2 = frames::euclidean(2);
        let d = unit_square();
        let coord = maps::coord(2, 1).unwrap();
        for p in [1.0, 2.0, 5.0, 16.0] {
            assert_abs_diff_eq!(p_energy(&coord, &e2, &d, p).unwrap(), 1.0, epsilon = 1e-12);
        }
        let pe = maps::paper_exp();
        assert_abs_diff_eq!(p_energy(&pe, &e2, &d, 4.0).unwrap(), 4.0, epsilon = 1e-12);
        assert!(p_energy(&coord, &e2, &d, 0.5).is_err());
    }

    #[test]
    fn lp_means_increase_to_sup() {
        let e2 = frames::euclidean(2);
        let d = unit_square();
        for map in [maps::paper_exp(), maps::gauss(2)] {
            let sup = sup_energy(&map, &e2, &d).unwrap();
            let volume = d.box_domain.volume();
            let mut prev = 0.0;
            for p in [2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
                let mean = (p_energy(&map, &e2, &d, p).unwrap() / volume).powf(1.0 / p);
                assert!(mean + 1e-12 >= prev, "L^p means must be nondecreasing");
                assert!(mean <= sup + 1e-12, "L^p mean exceeding the sup");
                prev = mean;
            }
        }
    }

    #[test]
    fn bump_shape() {
        let d = unit_square();
        let g = make_bump(&d, 0.25).unwrap();
        assert_eq!(g.eval(&[0.0, 0.5]), 0.0);
        assert_eq!(g.eval(&[0.3, 1.0]), 0.0);
        assert_abs_diff_eq!(g.eval(&[0.5, 0.5]), 0.25, epsilon = 1e-14);
        let grad = g.gradient(&[0.5, 0.5]);
        assert_abs_diff_eq!(grad[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(grad[1], 0.0, epsilon = 1e-14);
        // interior positivity
        assert!(g.eval(&[0.2, 0.7]) > 0.0);
    }

    #[test]
    fn bump_gradient_matches_finite_differences() {
        let d = unit_square();
        for profile in [BumpProfile::Quadratic, BumpProfile::SquaredQuadratic] {
            let g = Bump::new(d.box_domain.clone(), 0.1, profile).unwrap();
            let x = [0.3, 0.6];
            let grad = g.gradient(&x);
            let h = 1e-6;
            for a in 0..2 {
                let mut xp = x;
                xp[a] += h;
                let mut xm = x;
                xm[a] -= h;
                let fd = (g.eval(&xp) - g.eval(&xm)) / (2.0 * h);
                assert_abs_diff_eq!(grad[a], fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn zero_variation_has_zero_margin() {
        let e2 = frames::euclidean(2);
        let d = unit_square();
        let pe = maps::paper_exp();
        // amplitude must be positive; emulate g = 0 with a tiny amplitude
        let g = make_bump(&d, 1e-300).unwrap();
        let xi = DVector::from_vec(vec![1.0, 0.0]);
        let r = rank_one_test(&pe, &e2, &d, &g, &xi).unwrap();
        assert_abs_diff_eq!(r.margin, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn paper_exp_resists_rank_one_variations() {
        let e2 = frames::euclidean(2);
        // off-diagonal box inside {x > y}
        let b = BoxDomain::new(vec![0.5, -0.9], vec![1.4, -0.1]).unwrap();
        let d = Subdomain::uniform(&b, 9).unwrap();
        let pe = maps::paper_exp();
        let reports = rank_one_draws(&pe, &e2, &d, 100, 2024).unwrap();
        assert_eq!(reports.len(), 100);
        for r in &reports {
            assert!(
                r.margin >= -1e-8,
                "rank-one margin {} for {}",
                r.margin,
                r.parameters
            );
        }
    }

    #[test]
    fn non_solution_admits_negative_margin() {
        // u = x^2 on [0.5, 1.5] x [0, 1]: a bump with nonzero normal
        // derivative on the face x = 1.5 lowers the sup.
        let e2 = frames::euclidean(2);
        let b = BoxDomain::new(vec![0.5, 0.0], vec![1.5, 1.0]).unwrap();
        let d = Subdomain::uniform(&b, 11).unwrap();
        let sq = maps::quad(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])).unwrap();
        let mut best = f64::INFINITY;
        for level in 0..9 {
            let amplitude = 1e-3 * 10f64.powf(level as f64 / 4.0);
            let g = make_bump(&d, amplitude).unwrap();
            for xi in [DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])] {
                let r = rank_one_test(&sq, &e2, &d, &g, &xi).unwrap();
                best = best.min(r.margin);
            }
        }
        assert!(best < -1e-4, "expected a negative margin, best = {best}");
    }

    #[test]
    fn localized_variation_cannot_move_a_remote_sup() {
        // u = x^2 on [0.5, 1.5] x [0, 1] peaks at the x = 1.5 face; a tiny
        // variation compactly supported in the left half cannot change the
        // max, so the margin is exactly zero.
        let e2 = frames::euclidean(2);
        let b = BoxDomain::new(vec![0.5, 0.0], vec![1.5, 1.0]).unwrap();
        let d = Subdomain::uniform(&b, 11).unwrap();
        let sq = maps::quad(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])).unwrap();
        let support = BoxDomain::new(vec![0.55, 0.1], vec![0.85, 0.9]).unwrap();
        let g = Bump::new(support, 1e-3, BumpProfile::SquaredQuadratic).unwrap();
        let xi = DVector::from_vec(vec![1.0]);
        let r = rank_one_test(&sq, &e2, &d, &g, &xi).unwrap();
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn vertical_field_constant_nullspace() {
        // u = (x, y, 0): nullspace of Xu^T is the z-axis.
        let e2 = frames::euclidean(2);
        let m = maps::by_name("affine:1,0;0,1;0,0|0,0,0", None).unwrap();
        let d = unit_square();
        let field = vertical_field(&m, &e2, &d, 0).unwrap();
        for v in field.at_samples() {
            assert_abs_diff_eq!(v[2].abs(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(v[0], 0.0, epsilon = 1e-10);
        }
        // invariants at every sample
        for (x, v) in d.samples.iter().zip(field.at_samples()) {
            let h = hgrad_at(&m, &e2, x).unwrap();
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-10);
            let dot = (h.mat.transpose() * v).abs().max();
            assert!(dot < 1e-8);
        }
    }

    #[test]
    fn vertical_field_of_tilted_plane() {
        // u = (x, y, x + y): nullspace spanned by (1, 1, -1)/sqrt(3).
        let e2 = frames::euclidean(2);
        let m = maps::by_name("affine:1,0;0,1;1,1|0,0,0", None).unwrap();
        let d = unit_square();
        let field = vertical_field(&m, &e2, &d, 0).unwrap();
        let want = DVector::from_vec(vec![1.0, 1.0, -1.0]) / 3.0f64.sqrt();
        for v in field.at_samples() {
            let align = v.dot(&want).abs();
            assert_abs_diff_eq!(align, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn full_rank_map_has_no_vertical_directions() {
        let e2 = frames::euclidean(2);
        let pe = maps::paper_exp();
        let b = BoxDomain::new(vec![0.5, -0.9], vec![1.4, -0.1]).unwrap();
        let d = Subdomain::uniform(&b, 5).unwrap();
        let err = vertical_field(&pe, &e2, &d, 0);
        assert!(err.is_err());
    }

    #[test]
    fn vertical_margins_for_harmonic_graph_map() {
        // u = (x, y, x + y) has Delta(Xu) = 0, so vertical variations with
        // constant nu cannot lower the sup energy.
        let e2 = frames::euclidean(2);
        let m = maps::by_name("affine:1,0;0,1;1,1|0,0,0", None).unwrap();
        let d = unit_square();
        let field = vertical_field(&m, &e2, &d, 0).unwrap();
        for h_var in [
            HVariation::Constant(1.0),
            HVariation::Constant(-0.5),
            HVariation::Bump(make_bump(&d, 0.3).unwrap()),
        ] {
            let r = vertical_test(&m, &e2, &d, &h_var, &field).unwrap();
            assert!(r.margin >= -1e-6, "margin {} for {}", r.margin, r.parameters);
        }
    }

    #[test]
    fn curved_graph_map_admits_negative_vertical_margin() {
        // u = (x, y, x^2) on [0.5, 1]^2: nu . Delta(Xu) != 0, so one sign of
        // a constant h lowers the energy.
        let e2 = frames::euclidean(2);
        let m = AnalyticMap::from_fn("graph_x2", 2, 3, |p| {
            let (x, y) = (p[0], p[1]);
            let value = DVector::from_vec(vec![x, y, x * x]);
            let egrad = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0 * x, 0.0]);
            let mut h2 = DMatrix::zeros(2, 2);
            h2[(0, 0)] = 2.0;
            crate::calculus::Jet2::new(value, egrad, vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), h2])
        });
        let b = BoxDomain::new(vec![0.5, 0.0], vec![1.0, 0.5]).unwrap();
        let d = Subdomain::uniform(&b, 9).unwrap();
        let field = vertical_field(&m, &e2, &d, 0).unwrap();
        let plus = vertical_test(&m, &e2, &d, &HVariation::Constant(0.05), &field).unwrap();
        let minus = vertical_test(&m, &e2, &d, &HVariation::Constant(-0.05), &field).unwrap();
        assert!(
            plus.margin.min(minus.margin) < -1e-5,
            "one sign should lower the energy: {} / {}",
            plus.margin,
            minus.margin
        );
    }

    #[test]
    fn vertical_p_energy_is_convex_in_t() {
        let e2 = frames::euclidean(2);
        let m = maps::by_name("affine:1,0;0,1;1,1|0,0,0", None).unwrap();
        let d = unit_square();
        let field = vertical_field(&m, &e2, &d, 0).unwrap();
        let ts: Vec<f64> = (0..21).map(|k| -1.0 + k as f64 * 0.1).collect();
        for h_var in [
            HVariation::Constant(1.0),
            HVariation::Bump(make_bump(&d, 0.5).unwrap()),
        ] {
            let f = vertical_p_energy_profile(&m, &e2, &d, &h_var, &field, 4.0, &ts).unwrap();
            for k in 1..f.len() - 1 {
                let midpoint_gap = f[k - 1] + f[k + 1] - 2.0 * f[k];
                assert!(
                    midpoint_gap >= -1e-9 * (1.0 + f[k].abs()),
                    "convexity violated at t = {}: gap {midpoint_gap}",
                    ts[k]
                );
            }
        }
    }

    #[test]
    fn max_principle_examples() {
        let e2 = frames::euclidean(2);
        let d = unit_square();

        let pe = maps::paper_exp();
        let r = max_principle_check(&pe, &e2, &d, 1e-10).unwrap();
        assert!(r.pass);
        assert_abs_diff_eq!(r.sup_interior, r.max_boundary, epsilon = 1e-10);
        assert_abs_diff_eq!(r.inf_interior, r.min_boundary, epsilon = 1e-10);

        let aff = maps::by_name("affine:1,2|0", None).unwrap();
        let r = max_principle_check(&aff, &e2, &d, 1e-10).unwrap();
        assert!(r.pass);

        // Radial gaussian: |Du| = 2 r exp(-r^2) peaks at r = 1/sqrt(2),
        // strictly inside [-1, 1]^2, so the check must fail.
        let g = maps::gauss(2);
        let db = Subdomain::uniform(&BoxDomain::cube(2, -1.0, 1.0).unwrap(), 12).unwrap();
        let r = max_principle_check(&g, &e2, &db, 1e-6).unwrap();
        assert!(!r.pass);
        assert!(r.sup_interior > r.max_boundary + 0.05);
    }
}
