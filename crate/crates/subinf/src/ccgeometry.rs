//! Admissible horizontal curves and Carnot–Carathéodory distance
//! approximation.
//!
//! `cc_distance` runs Dijkstra over an implicit lattice graph. From each
//! node, candidate moves integrate a unit control `a` (drawn from a
//! symmetric menu of directions on the sphere of `R^m`, plus the `±basis`
//! controls) for a few explicit-Euler substeps of size `resolution`, then
//! snap to the nearest lattice node. Each realized node-to-node displacement
//! is re-timed by the minimal horizontal traversal time of that
//! displacement: the control is least-squares fitted against the frame at
//! the segment midpoint and the edge weight is the norm of the fitted
//! coefficients. Displacements the frame cannot produce (residual above a
//! fraction of the cell size) are rejected, so every edge of the graph is an
//! admissible move and the reconstructed witness passes `is_admissible` at a
//! tolerance proportional to the resolution.
//!
//! Axes that are reachable only through brackets (e.g. the vertical axis of
//! the Heisenberg group, whose increments per step are quadratically small)
//! can be given a finer lattice via per-axis `cell_scales`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frames::Frame;
use crate::geometry::BoxDomain;

/// A time-sampled horizontal path with its control coefficients.
/// `controls[k]` is the control active on `[times[k], times[k+1])`; the last
/// entry is zero padding.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibleCurve {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl AdmissibleCurve {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>, controls: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || times.len() != points.len() || times.len() != controls.len() {
            return Err(Error::invalid(
                "curve needs >= 2 samples with matching times/points/controls",
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("curve times must be strictly increasing"));
        }
        Ok(Self {
            times,
            points,
            controls,
        })
    }

    /// Build a curve from sampled points, fitting the controls at each step
    /// by least squares against the frame at the segment midpoint.
    pub fn from_points(times: Vec<f64>, points: Vec<Vec<f64>>, frame: &Frame) -> Result<Self> {
        if times.len() < 2 || times.len() != points.len() {
            return Err(Error::invalid("need >= 2 samples with matching times"));
        }
        let m = frame.size();
        let mut controls = Vec::with_capacity(times.len());
        for k in 0..times.len() - 1 {
            let dt = times[k + 1] - times[k];
            let mid: Vec<f64> = points[k]
                .iter()
                .zip(&points[k + 1])
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let fmat = frame.eval(&mid)?;
            let v: Vec<f64> = points[k + 1]
                .iter()
                .zip(&points[k])
                .map(|(b, a)| (b - a) / dt)
                .collect();
            let (xi, _res) = fit_horizontal(&fmat, &v);
            controls.push(xi);
        }
        controls.push(vec![0.0; m]);
        Self::new(times, points, controls)
    }

    pub fn total_time(&self) -> f64 {
        *self.times.last().unwrap() - self.times[0]
    }

    pub fn segment_count(&self) -> usize {
        self.times.len() - 1
    }
}

/// Outcome of an admissibility check.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// Largest `sum_i a_i^2` over samples.
    pub max_control_norm_sq: f64,
    /// Largest `|velocity - a_i X_i(midpoint)|` over segments.
    pub max_velocity_residual: f64,
    pub control_tol: f64,
    pub velocity_tol: f64,
}

/// Check the two admissibility invariants: control norms `<= 1 + tol` and
/// discrete velocities matching `a_i X_i` at segment midpoints to
/// `tol + C dt`, with `C` estimated from the frame's local Lipschitz
/// constant by sampling along the curve.
pub fn is_admissible(
    curve: &AdmissibleCurve,
    frame: &Frame,
    tol: f64,
) -> Result<AdmissibilityReport> {
    if curve.times.len() < 2 {
        return Err(Error::invalid("curve needs at least 2 samples"));
    }
    let m = frame.size();
    let n = frame.dim();

    let mut max_norm_sq = 0.0f64;
    for a in &curve.controls {
        if a.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: a.len(),
                context: "curve control",
            });
        }
        max_norm_sq = max_norm_sq.max(a.iter().map(|v| v * v).sum());
    }

    // Local Lipschitz estimate of the coefficient functions along the curve.
    let mut lip = 0.0f64;
    let probe = 1e-3;
    let stride = (curve.points.len() / 8).max(1);
    for p in curve.points.iter().step_by(stride) {
        let base = frame.eval(p)?;
        for axis in 0..n {
            let mut q = p.clone();
            q[axis] += probe;
            let shifted = frame.eval(&q)?;
            let diff = (&shifted - &base).abs().max() / probe;
            lip = lip.max(diff);
        }
    }

    let mut max_residual = 0.0f64;
    let mut max_dt = 0.0f64;
    let mut speed = 1.0f64;
    for k in 0..curve.segment_count() {
        let dt = curve.times[k + 1] - curve.times[k];
        max_dt = max_dt.max(dt);
        let mid: Vec<f64> = curve.points[k]
            .iter()
            .zip(&curve.points[k + 1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let fmat = frame.eval(&mid)?;
        let mut residual_sq = 0.0;
        for axis in 0..n {
            let v = (curve.points[k + 1][axis] - curve.points[k][axis]) / dt;
            let predicted: f64 = (0..m)
                .map(|i| curve.controls[k][i] * fmat[(i, axis)])
                .sum();
            residual_sq += (v - predicted) * (v - predicted);
            speed = speed.max(predicted.abs());
        }
        max_residual = max_residual.max(residual_sq.sqrt());
    }

    let control_tol = 1.0 + tol.max(1e-9);
    let velocity_tol = tol + lip * (speed + 1.0) * max_dt;
    Ok(AdmissibilityReport {
        admissible: max_norm_sq <= control_tol && max_residual <= velocity_tol,
        max_control_norm_sq: max_norm_sq,
        max_velocity_residual: max_residual,
        control_tol,
        velocity_tol,
    })
}

/// Rescale a curve in time: times stretch by `1/speed`, controls shrink by
/// `speed`. Admissibility is preserved for `speed` in `(0, 1]`.
pub fn curve_time_rescale(curve: &AdmissibleCurve, speed: f64) -> Result<AdmissibleCurve> {
    if !(speed > 0.0 && speed <= 1.0) {
        return Err(Error::invalid(format!(
            "rescale speed must lie in (0, 1], got {speed}"
        )));
    }
    AdmissibleCurve::new(
        curve.times.iter().map(|t| t / speed).collect(),
        curve.points.clone(),
        curve
            .controls
            .iter()
            .map(|a| a.iter().map(|v| v * speed).collect())
            .collect(),
    )
}

/// Approximate CC distance with a witness curve.
#[derive(Debug, Clone, Serialize)]
pub struct CCDistanceResult {
    /// Approximate `d_X(x, y)`; equals the witness curve's total time.
    pub value: f64,
    pub curve: AdmissibleCurve,
    pub grid_resolution: f64,
}

/// `cc_distance` outcome: unreachability is a value, not an error, because
/// non-bracket-generating frames are admitted inputs.
#[derive(Debug, Clone, Serialize)]
pub enum CcOutcome {
    Reached(CCDistanceResult),
    Unreachable {
        explored: usize,
        grid_resolution: f64,
    },
}

impl CcOutcome {
    pub fn reached(self) -> Option<CCDistanceResult> {
        match self {
            CcOutcome::Reached(r) => Some(r),
            CcOutcome::Unreachable { .. } => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            CcOutcome::Reached(r) => Some(r.value),
            CcOutcome::Unreachable { .. } => None,
        }
    }
}

/// Tuning knobs for the lattice graph.
#[derive(Debug, Clone)]
pub struct CcOptions {
    /// Euler substeps per candidate move; longer moves reduce direction
    /// quantization error at the cost of endgame granularity (single-cell
    /// moves are always included).
    pub substeps: usize,
    /// Per-axis multiplier on `resolution` for the lattice cell size.
    /// Defaults to 1 on every axis.
    pub cell_scales: Option<Vec<f64>>,
    /// Seed for the direction menu when `m >= 3` (for `m <= 2` the menu is
    /// a deterministic uniform fan).
    pub direction_seed: u64,
    /// Stop exploring beyond this travel time.
    pub max_time: f64,
}

impl Default for CcOptions {
    fn default() -> Self {
        Self {
            substeps: 4,
            cell_scales: None,
            direction_seed: 0,
            max_time: f64::INFINITY,
        }
    }
}

/// Shortest-arrival-time approximation of `d_X(x, y)` over the box lattice.
pub fn cc_distance(
    frame: &Frame,
    domain: &BoxDomain,
    x: &[f64],
    y: &[f64],
    resolution: f64,
    controls_per_step: usize,
) -> Result<CcOutcome> {
    cc_distance_with(
        frame,
        domain,
        x,
        y,
        resolution,
        controls_per_step,
        &CcOptions::default(),
    )
}

struct Lattice {
    lo: Vec<f64>,
    cells: Vec<f64>,
    counts: Vec<usize>,
}

impl Lattice {
    fn total(&self) -> usize {
        self.counts.iter().product()
    }

    fn flat(&self, idx: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            if i < 0 || i as usize >= self.counts[a] {
                return None;
            }
            flat = flat * self.counts[a] + i as usize;
        }
        Some(flat)
    }

    fn unflat(&self, mut flat: usize) -> Vec<i64> {
        let mut idx = vec![0i64; self.counts.len()];
        for a in (0..self.counts.len()).rev() {
            idx[a] = (flat % self.counts[a]) as i64;
            flat /= self.counts[a];
        }
        idx
    }

    fn coords(&self, idx: &[i64]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.lo[a] + i as f64 * self.cells[a])
            .collect()
    }

    fn snap(&self, p: &[f64]) -> Vec<i64> {
        p.iter()
            .enumerate()
            .map(|(a, &v)| ((v - self.lo[a]) / self.cells[a]).round() as i64)
            .collect()
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other.dist.total_cmp(&self.dist)
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Least-squares fit of `v ~ sum_i xi_i X_i` against the frame rows:
/// solves the normal equations `(F F^T) xi = F v` with partial pivoting,
/// zeroing directions the frame does not span. Returns the coefficients and
/// the per-axis residual `v - F^T xi`.
fn fit_horizontal(fmat: &DMatrix<f64>, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = fmat.nrows();
    let n = fmat.ncols();
    let mut g = vec![0.0f64; m * m];
    let mut rhs = vec![0.0f64; m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for a in 0..n {
                acc += fmat[(i, a)] * fmat[(j, a)];
            }
            g[i * m + j] = acc;
        }
        rhs[i] = (0..n).map(|a| fmat[(i, a)] * v[a]).sum();
    }

    // Gaussian elimination with partial pivoting; tiny pivots mark
    // directions outside the frame's span and get a zero coefficient.
    let scale = g
        .iter()
        .fold(0.0f64, |mx, &t| mx.max(t.abs()))
        .max(f64::MIN_POSITIVE);
    let mut rowperm: Vec<usize> = (0..m).collect();
    for col in 0..m {
        let (best, best_val) = (col..m)
            .map(|r| (r, g[rowperm[r] * m + col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        rowperm.swap(col, best);
        if best_val <= 1e-12 * scale {
            g[rowperm[col] * m + col] = 0.0;
            continue;
        }
        let pivot = g[rowperm[col] * m + col];
        for r in col + 1..m {
            let factor = g[rowperm[r] * m + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..m {
                g[rowperm[r] * m + c] -= factor * g[rowperm[col] * m + c];
            }
            rhs[rowperm[r]] -= factor * rhs[rowperm[col]];
        }
    }
    let mut xi = vec![0.0f64; m];
    for col in (0..m).rev() {
        let pivot = g[rowperm[col] * m + col];
        if pivot == 0.0 {
            xi[col] = 0.0;
            continue;
        }
        let mut acc = rhs[rowperm[col]];
        for c in col + 1..m {
            acc -= g[rowperm[col] * m + c] * xi[c];
        }
        xi[col] = acc / pivot;
    }

    let mut residual = vec![0.0f64; n];
    for a in 0..n {
        let fitted: f64 = (0..m).map(|i| xi[i] * fmat[(i, a)]).sum();
        residual[a] = v[a] - fitted;
    }
    (xi, residual)
}

/// Symmetric menu of unit controls: a uniform fan for `m = 2`, seeded
/// antipodal samples for `m >= 3`, `±1` for `m = 1`. The `±basis` controls
/// are always included.
fn control_directions(m: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; m];
            e[i] = sign;
            dirs.push(e);
        }
    }
    if m == 2 {
        let k = count.max(8);
        for j in 0..k {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            dirs.push(vec![theta.cos(), theta.sin()]);
        }
    } else if m >= 3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count.div_ceil(2) {
            let v: Vec<f64> = (0..m)
                .map(|_| {
                    // Box-Muller standard normal
                    let u1: f64 = rng.random_range(1e-12..1.0);
                    let u2: f64 = rng.random_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect();
            let norm: f64 = v.iter().map(|t| t * t).sum::<f64>().sqrt();
            if norm < 1e-9 {
                continue;
            }
            let unit: Vec<f64> = v.iter().map(|t| t / norm).collect();
            dirs.push(unit.iter().map(|t| -t).collect());
            dirs.push(unit);
        }
    }
    // Dedup near-identical directions.
    let mut out: Vec<Vec<f64>> = Vec::new();
    for d in dirs {
        if !out.iter().any(|e| {
            e.iter()
                .zip(&d)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
                < 1e-9
        }) {
            out.push(d);
        }
    }
    out
}

pub fn cc_distance_with(
    frame: &Frame,
    domain: &BoxDomain,
    x: &[f64],
    y: &[f64],
    resolution: f64,
    controls_per_step: usize,
    opts: &CcOptions,
) -> Result<CcOutcome> {
    let n = frame.dim();
    if domain.dim() != n || x.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: domain.dim(),
            context: "cc_distance dimensions",
        });
    }
    if resolution <= 0.0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    if !domain.contains(x) || !domain.contains(y) {
        return Err(Error::invalid("endpoints must lie inside the box"));
    }

    let scales = match &opts.cell_scales {
        Some(s) => {
            if s.len() != n || s.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("cell_scales must be positive, one per axis"));
            }
            s.clone()
        }
        None => vec![1.0; n],
    };
    let cells: Vec<f64> = scales.iter().map(|s| s * resolution).collect();
    let counts: Vec<usize> = (0..n)
        .map(|a| (domain.side(a) / cells[a]).floor() as usize + 1)
        .collect();
    let lattice = Lattice {
        lo: domain.lo.clone(),
        cells,
        counts,
    };
    let total = lattice.total();
    if total > 80_000_000 {
        return Err(Error::invalid(format!(
            "lattice too large ({total} nodes); coarsen the resolution or shrink the box"
        )));
    }

    let start = lattice
        .flat(&lattice.snap(x))
        .ok_or_else(|| Error::invalid("start point snaps outside the lattice"))?;
    let target = lattice
        .flat(&lattice.snap(y))
        .ok_or_else(|| Error::invalid("target point snaps outside the lattice"))?;

    let directions = control_directions(frame.size(), controls_per_step, opts.direction_seed);
    let lengths: Vec<usize> = if opts.substeps > 1 {
        vec![1, opts.substeps]
    } else {
        vec![1]
    };

    let mut dist = vec![f64::INFINITY; total];
    let mut prev = vec![u32::MAX; total];
    let mut done = vec![false; total];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: start,
    });

    let mut explored = 0usize;
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if done[node] || d > dist[node] {
            continue;
        }
        done[node] = true;
        explored += 1;
        if node == target {
            break;
        }
        if d > opts.max_time {
            continue;
        }

        let idx = lattice.unflat(node);
        let z = lattice.coords(&idx);

        for dir in &directions {
            for &len in &lengths {
                // Integrate the control for `len` Euler substeps.
                let mut p = z.clone();
                let mut ok = true;
                for _ in 0..len {
                    let fmat = match frame.eval(&p) {
                        Ok(f) => f,
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    };
                    for a in 0..n {
                        let mut va = 0.0;
                        for i in 0..frame.size() {
                            va += dir[i] * fmat[(i, a)];
                        }
                        p[a] += resolution * va;
                    }
                    if !domain.contains(&p) {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                let mut nidx = lattice.snap(&p);

                // Snapping perturbs the endpoint; pull it back onto the
                // horizontal chord by refitting and re-snapping the
                // chord-consistent endpoint (two fixed-point passes). Axes
                // the frame only reaches through brackets (quadratically
                // small increments) are thereby constructed from the chord
                // instead of inheriting the snap noise of the large axes.
                let mut accepted = None;
                for _pass in 0..3 {
                    let Some(nflat) = lattice.flat(&nidx) else {
                        break;
                    };
                    if nflat == node {
                        break;
                    }
                    let np = lattice.coords(&nidx);
                    let mid: Vec<f64> = z.iter().zip(&np).map(|(a, b)| 0.5 * (a + b)).collect();
                    let Ok(fmid) = frame.eval(&mid) else {
                        break;
                    };
                    let delta: Vec<f64> = np.iter().zip(&z).map(|(b, a)| b - a).collect();
                    let (xi, residual) = fit_horizontal(&fmid, &delta);
                    if residual
                        .iter()
                        .enumerate()
                        .all(|(a, r)| r.abs() <= 0.75 * lattice.cells[a])
                    {
                        accepted = Some((nflat, xi));
                        break;
                    }
                    // Re-snap the fitted (horizontal) endpoint.
                    let fitted: Vec<f64> = (0..n)
                        .map(|a| np[a] - residual[a])
                        .collect();
                    if !domain.contains(&fitted) {
                        break;
                    }
                    let refit = lattice.snap(&fitted);
                    if refit == nidx {
                        break;
                    }
                    nidx = refit;
                }
                let Some((nflat, xi)) = accepted else {
                    continue;
                };
                if done[nflat] {
                    continue;
                }
                let w: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                if w <= 0.0 {
                    continue;
                }

                let cand = d + w;
                if cand < dist[nflat] {
                    dist[nflat] = cand;
                    prev[nflat] = node as u32;
                    heap.push(HeapEntry {
                        dist: cand,
                        node: nflat,
                    });
                }
            }
        }
    }

    if !dist[target].is_finite() {
        return Ok(CcOutcome::Unreachable {
            explored,
            grid_resolution: resolution,
        });
    }

    // Reconstruct the node path and refit the controls on each edge.
    let mut path = vec![target];
    let mut cur = target;
    while cur != start {
        let p = prev[cur];
        if p == u32::MAX {
            break;
        }
        cur = p as usize;
        path.push(cur);
    }
    path.reverse();

    let m = frame.size();
    let mut times = vec![0.0];
    let mut points = Vec::with_capacity(path.len());
    let mut controls = Vec::with_capacity(path.len());
    points.push(lattice.coords(&lattice.unflat(path[0])));
    for win in path.windows(2) {
        let a = lattice.coords(&lattice.unflat(win[0]));
        let b = lattice.coords(&lattice.unflat(win[1]));
        let mid: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
        let fmid = frame.eval(&mid)?;
        let delta: Vec<f64> = b.iter().zip(&a).map(|(v, u)| v - u).collect();
        let (xi, _) = fit_horizontal(&fmid, &delta);
        let w: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let control: Vec<f64> = xi.iter().map(|v| v / w).collect();
        times.push(times.last().unwrap() + w);
        points.push(b);
        controls.push(control);
    }
    controls.push(vec![0.0; m]);

    if points.len() < 2 {
        // Start and target snapped to the same node.
        let p = lattice.coords(&lattice.unflat(start));
        times = vec![0.0, resolution];
        points = vec![p.clone(), p];
        controls = vec![vec![0.0; m], vec![0.0; m]];
    }

    let curve = AdmissibleCurve::new(times, points, controls)?;
    Ok(CcOutcome::Reached(CCDistanceResult {
        value: curve.total_time(),
        curve,
        grid_resolution: resolution,
    }))
}
