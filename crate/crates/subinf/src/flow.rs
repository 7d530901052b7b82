//! The horizontal gradient flow
//!
//! ```text
//! r'_A(t) = ( |Xu|^2 / (xi_a X_i u_a  xi_b X_i u_b) ) X_{iA} xi_c X_i u_c
//! ```
//!
//! and its two invariants: along trajectories of a solution,
//! `|Xu(r(t))|` stays constant and `t -> xi . u(r(t))` is affine with slope
//! `|Xu|^2`. Integration is fixed-step classical RK4 so invariant-drift
//! measurements carry a clean order signature.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::calculus::{self, Jet2};
use crate::error::{Error, Result};
use crate::frames::Frame;
use crate::geometry::BoxDomain;
use crate::maps::AnalyticMap;

/// Relative floor for the flow denominator `|xi . Xu|^2`; below
/// `DENOM_FLOOR * |Xu|^2` the direction is degenerate and the flow fails
/// loudly rather than regularize.
pub const DENOM_FLOOR: f64 = 1e-12;

/// A flow trajectory with its recorded invariants.
#[derive(Debug, Clone, Serialize)]
pub struct FlowTrajectory {
    /// Flow parameter, unit vector in `R^N`.
    pub xi: Vec<f64>,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// `|Xu(r(t_k))|^2`.
    pub hnorms: Vec<f64>,
    /// `xi . u(r(t_k))`.
    pub projections: Vec<f64>,
    /// Bisection-refined boundary crossing time, when the trajectory left
    /// the domain.
    pub exit_time: Option<f64>,
    /// Reason the integration stopped early, if it did.
    pub truncated: Option<String>,
}

/// Least-squares affinity diagnostics for a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct AffinityReport {
    /// Slope of the least-squares line through `(t_k, xi . u(r(t_k)))`.
    pub slope: f64,
    /// Max absolute deviation from that line.
    pub linear_fit_residual: f64,
    /// `max_k |hnorms[k] - hnorms[0]|`.
    pub hnorm_drift: f64,
    /// `hnorms[0]`, the value the slope should match for solutions.
    pub initial_hnorm_sq: f64,
}

/// Flow velocity at a point from its jet, the frame matrix there, and the
/// unit parameter `xi`.
pub fn flow_velocity(jet: &Jet2, frame_mat: &DMatrix<f64>, xi: &DVector<f64>) -> Result<DVector<f64>> {
    if xi.len() != jet.components() {
        return Err(Error::DimensionMismatch {
            expected: jet.components(),
            got: xi.len(),
            context: "flow parameter xi",
        });
    }
    let h = calculus::horizontal_gradient(jet, frame_mat)?;
    let m = h.frame_size();
    let n = jet.dim();

    // s_i = xi_a X_i u_a
    let s = DVector::<f64>::from_fn(m, |i, _| {
        (0..jet.components())
            .map(|a| xi[a] * h.mat[(a, i)])
            .sum::<f64>()
    });
    let denom: f64 = s.iter().map(|v| v * v).sum();
    let floor = DENOM_FLOOR * h.normsq;
    if denom <= floor || h.normsq == 0.0 {
        return Err(Error::DegenerateDirection { denom, floor });
    }

    let scale = h.normsq / denom;
    let mut v = DVector::zeros(n);
    for a in 0..n {
        let mut acc = 0.0;
        for i in 0..m {
            acc += frame_mat[(i, a)] * s[i];
        }
        v[a] = scale * acc;
    }
    Ok(v)
}

/// Integration options.
#[derive(Debug, Clone)]
pub struct FlowOpts {
    pub max_steps: usize,
}

impl Default for FlowOpts {
    fn default() -> Self {
        Self { max_steps: 10_000 }
    }
}

/// Integrate the flow from `x0` with classical RK4 until the trajectory
/// leaves `domain`, a degenerate direction is hit, or `max_steps` elapse.
/// The boundary crossing is refined by bisection to `dt * 1e-3`.
pub fn integrate_flow(
    map: &AnalyticMap,
    frame: &Frame,
    x0: &[f64],
    xi: &DVector<f64>,
    dt: f64,
    domain: &BoxDomain,
    opts: &FlowOpts,
) -> Result<FlowTrajectory> {
    if dt <= 0.0 {
        return Err(Error::invalid("flow step dt must be positive"));
    }
    let norm = xi.norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "flow parameter must be a unit vector, |xi| = {norm}"
        )));
    }
    if !domain.contains(x0) {
        return Err(Error::invalid("flow start point outside the domain"));
    }

    let velocity = |x: &[f64]| -> Result<DVector<f64>> {
        let jet = map.jet(x)?;
        let fmat = frame.eval(x)?;
        flow_velocity(&jet, &fmat, xi)
    };
    let observe = |x: &[f64]| -> Result<(f64, f64)> {
        let jet = map.jet(x)?;
        let fmat = frame.eval(x)?;
        let h = calculus::horizontal_gradient(&jet, &fmat)?;
        Ok((h.normsq, xi.dot(&jet.value)))
    };

    let mut traj = FlowTrajectory {
        xi: xi.as_slice().to_vec(),
        times: vec![0.0],
        points: vec![x0.to_vec()],
        hnorms: Vec::new(),
        projections: Vec::new(),
        exit_time: None,
        truncated: None,
    };
    let (h0, p0) = observe(x0)?;
    traj.hnorms.push(h0);
    traj.projections.push(p0);

    let mut x = DVector::from_column_slice(x0);
    let mut t = 0.0;
    for _ in 0..opts.max_steps {
        let next = match rk4_step(&velocity, &x, dt) {
            Ok(v) => v,
            Err(Error::DegenerateDirection { .. }) => {
                traj.truncated = Some("degenerate direction".to_string());
                break;
            }
            Err(e) => return Err(e),
        };

        if !domain.contains(next.as_slice()) {
            // Bisection refinement of the crossing on the RK4 one-step map.
            let mut lo = 0.0;
            let mut hi = dt;
            let tol = dt * 1e-3;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                let candidate = rk4_step(&velocity, &x, mid)?;
                if domain.contains(candidate.as_slice()) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            traj.exit_time = Some(t + 0.5 * (lo + hi));
            break;
        }

        x = next;
        t += dt;
        traj.times.push(t);
        traj.points.push(x.as_slice().to_vec());
        let (hn, pr) = observe(x.as_slice())?;
        traj.hnorms.push(hn);
        traj.projections.push(pr);
    }

    Ok(traj)
}

fn rk4_step(
    velocity: &impl Fn(&[f64]) -> Result<DVector<f64>>,
    x: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    let k1 = velocity(x.as_slice())?;
    let k2 = velocity((x + &k1 * (dt / 2.0)).as_slice())?;
    let k3 = velocity((x + &k2 * (dt / 2.0)).as_slice())?;
    let k4 = velocity((x + &k3 * dt).as_slice())?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Least-squares affinity report for a trajectory with at least 3 samples.
pub fn affinity_report(traj: &FlowTrajectory) -> Result<AffinityReport> {
    let k = traj.times.len();
    if k < 3 {
        return Err(Error::invalid("affinity report needs at least 3 samples"));
    }
    let tbar: f64 = traj.times.iter().sum::<f64>() / k as f64;
    let pbar: f64 = traj.projections.iter().sum::<f64>() / k as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, p) in traj.times.iter().zip(&traj.projections) {
        num += (t - tbar) * (p - pbar);
        den += (t - tbar) * (t - tbar);
    }
    let slope = num / den;
    let intercept = pbar - slope * tbar;
    let residual = traj
        .times
        .iter()
        .zip(&traj.projections)
        .map(|(t, p)| (p - (intercept + slope * t)).abs())
        .fold(0.0, f64::max);
    let drift = traj
        .hnorms
        .iter()
        .map(|h| (h - traj.hnorms[0]).abs())
        .fold(0.0, f64::max);
    Ok(AffinityReport {
        slope,
        linear_fit_residual: residual,
        hnorm_drift: drift,
        initial_hnorm_sq: traj.hnorms[0],
    })
}
