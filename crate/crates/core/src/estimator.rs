//! Joint posture from tendon measurements.
//!
//! Unknowns are the joint angles `θ` and the elongations `ℓ_ct` of the
//! connected (non-root) segments. Each branch contributes an excursion
//! equation and each junction a force balance:
//!
//! ```text
//! r_b = L_b(θ) + C_bm ΔL_m − L_b0 − C_bm K_m⁻¹ f_m − C_bct ℓ_ct      [mm]
//! r_j = (C_jm f_m + C_jct K_ct ℓ_ct) / k̄                            [mm]
//! ```
//!
//! with `k̄` the median segment stiffness. The stacked residual is driven to
//! zero by Levenberg-Marquardt with `θ` kept inside the joint limits and
//! `ℓ_ct ≥ 0`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tendon_model::TendonModel;

/// Tensions below this count as slack (N).
pub const SLACK_TENSION: f64 = 1e-6;

/// Motor-side readings at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Coil length per motor (mm); positive means wound up on the shaft.
    pub delta_l_m: DVector<f64>,
    /// Root tension per motor (N).
    pub f_m: DVector<f64>,
}

impl Measurement {
    pub fn new(delta_l_m: DVector<f64>, f_m: DVector<f64>) -> Result<Self> {
        if delta_l_m.len() != f_m.len() {
            return Err(Error::Dimension {
                what: "measurement",
                expected: delta_l_m.len(),
                got: f_m.len(),
            });
        }
        if !delta_l_m.iter().chain(f_m.iter()).all(|v| v.is_finite()) {
            return Err(Error::config("measurement contains non-finite values"));
        }
        if f_m.iter().any(|f| *f < 0.0) {
            return Err(Error::config("measured tensions must be nonnegative"));
        }
        Ok(Measurement { delta_l_m, f_m })
    }

    pub fn zero(n_m: usize) -> Self {
        Measurement {
            delta_l_m: DVector::zeros(n_m),
            f_m: DVector::zeros(n_m),
        }
    }

    pub fn is_slack(&self) -> bool {
        self.f_m.iter().all(|f| *f < SLACK_TENSION)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub max_iterations: usize,
    /// Stop once the residual norm (mm) falls to this value.
    pub residual_tolerance: f64,
    /// Relative step size below which the iteration is considered stalled.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Largest joint change per iteration (rad); longer steps are shortened.
    pub max_joint_step: f64,
    /// When a solve fails, retry from fixed alternative starts: the middle
    /// of the joint box, then each joint moved to a quarter and three
    /// quarters of its range.
    pub restart_on_failure: bool,
    /// Keep a per-iteration log in [`Estimate::trace`].
    pub record_trace: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            max_iterations: 100,
            residual_tolerance: 1e-8,
            step_tolerance: 1e-14,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.1,
            max_joint_step: 0.1,
            restart_on_failure: true,
            record_trace: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.residual_tolerance,
            self.step_tolerance,
            self.initial_damping,
            self.max_joint_step,
        ]
        .iter()
        .all(|v| *v > 0.0);
        if !positive || self.max_iterations == 0 {
            return Err(Error::config("estimator tolerances must be positive and max_iterations >= 1"));
        }
        if !(self.damping_increase > 1.0 && self.damping_decrease > 0.0 && self.damping_decrease < 1.0) {
            return Err(Error::config("damping factors must satisfy increase > 1 > decrease > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateStatus {
    Converged,
    /// Iteration budget exhausted; the best iterate is returned.
    MaxIter,
    /// No further decrease possible above the tolerance (inconsistent data).
    Stalled,
    /// The model produced non-finite values.
    Infeasible,
}

impl fmt::Display for EstimateStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimateStatus::Converged => "converged",
            EstimateStatus::MaxIter => "max_iter",
            EstimateStatus::Stalled => "stalled",
            EstimateStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta: Vec<f64>,
    pub ell_ct: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub status: EstimateStatus,
    /// All measured tensions were below [`SLACK_TENSION`].
    pub slack: bool,
    pub trace: Vec<IterationRecord>,
}

impl Estimate {
    /// Per-iteration log as CSV.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,residual_norm,lambda,step_norm,accepted\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{:.8e},{:.8e},{:.8e},{}\n",
                r.iteration, r.residual_norm, r.lambda, r.step_norm, r.accepted as u8
            ));
        }
        out
    }
}

/// Problem data that does not depend on the iterate.
pub struct Estimator<'m> {
    model: &'m TendonModel,
    config: EstimatorConfig,
    c_bm: DMatrix<f64>,
    c_bct: DMatrix<f64>,
    c_jm: DMatrix<f64>,
    /// `C_jct K_ct / k̄`.
    c_jct_scaled: DMatrix<f64>,
    k_m: DVector<f64>,
    k_bar: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl<'m> Estimator<'m> {
    pub fn new(model: &'m TendonModel, config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        let m = model.matrices();
        let k_bar = median(model.stiffness().as_slice());
        let k_ct = model.k_ct();
        let mut c_jct_scaled = m.c_jct();
        for (j, k) in k_ct.iter().enumerate() {
            c_jct_scaled.column_mut(j).scale_mut(*k / k_bar);
        }
        Ok(Estimator {
            model,
            config,
            c_bm: m.c_bm(),
            c_bct: m.c_bct(),
            c_jm: m.c_jm(),
            c_jct_scaled,
            k_m: model.k_m(),
            k_bar,
        })
    }

    pub fn model(&self) -> &TendonModel {
        self.model
    }
    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }
    /// Characteristic stiffness used to scale the junction rows (N/mm).
    pub fn k_bar(&self) -> f64 {
        self.k_bar
    }
    fn n_b(&self) -> usize {
        self.c_bm.nrows()
    }
    fn n_j(&self) -> usize {
        self.c_jm.nrows()
    }
    fn n_ct(&self) -> usize {
        self.c_bct.ncols()
    }

    fn check(&self, theta: &[f64], ell: &DVector<f64>, meas: &Measurement) -> Result<()> {
        let n_m = self.c_bm.ncols();
        for (what, expected, got) in [
            ("joint vector", self.model.n_joints(), theta.len()),
            ("connected elongations", self.n_ct(), ell.len()),
            ("measured coil lengths", n_m, meas.delta_l_m.len()),
            ("measured tensions", n_m, meas.f_m.len()),
        ] {
            if expected != got {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        Ok(())
    }

    /// Terms of `r_b` that do not depend on the unknowns.
    fn branch_offset(&self, meas: &Measurement) -> DVector<f64> {
        let root_stretch = meas.f_m.component_div(&self.k_m);
        &self.c_bm * (&meas.delta_l_m - root_stretch) - self.model.rest_branch_lengths()
    }

    fn assemble(&self, l_b: &DVector<f64>, ell: &DVector<f64>, offset: &DVector<f64>, jf: &DVector<f64>) -> DVector<f64> {
        let r_b = l_b + offset - &self.c_bct * ell;
        let r_j = jf + &self.c_jct_scaled * ell;
        let mut r = DVector::zeros(self.n_b() + self.n_j());
        r.rows_mut(0, self.n_b()).copy_from(&r_b);
        r.rows_mut(self.n_b(), self.n_j()).copy_from(&r_j);
        r
    }

    /// Stacked residual `(r_b, r_j)` of length `n_b + n_j`, both blocks in mm.
    pub fn residuals(&self, theta: &[f64], ell_ct: &DVector<f64>, meas: &Measurement) -> Result<DVector<f64>> {
        self.check(theta, ell_ct, meas)?;
        let l_b = self.model.branch_lengths(theta)?;
        let jf = (&self.c_jm * &meas.f_m) / self.k_bar;
        let mut r = self.assemble(&l_b, ell_ct, &self.branch_offset(meas), &jf);
        self.relax_slack(&self.slack_rows(meas), &mut r, None);
        Ok(r)
    }

    /// Residual and its Jacobian with respect to `(θ, ℓ_ct)`.
    pub fn residuals_and_jacobian(
        &self,
        theta: &[f64],
        ell_ct: &DVector<f64>,
        meas: &Measurement,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check(theta, ell_ct, meas)?;
        let (l_s, j_s) = self.model.segment_jacobian(theta)?;
        let c_bs = &self.model.matrices().c_bs;
        let l_b = c_bs * l_s;
        let jf = (&self.c_jm * &meas.f_m) / self.k_bar;
        let mut r = self.assemble(&l_b, ell_ct, &self.branch_offset(meas), &jf);
        let mut jac = self.jacobian_from(c_bs * j_s);
        self.relax_slack(&self.slack_rows(meas), &mut r, Some(&mut jac));
        Ok((r, jac))
    }

    /// Root branches of muscles whose measured tension is below
    /// [`SLACK_TENSION`]. Such a tendon can be longer than its path, so its
    /// branch equation only holds as `r_b <= 0`.
    fn slack_rows(&self, meas: &Measurement) -> Vec<usize> {
        (0..self.n_b())
            .filter(|&b| (0..self.c_bm.ncols()).any(|m| self.c_bm[(b, m)] != 0.0 && meas.f_m[m] < SLACK_TENSION))
            .collect()
    }

    fn relax_slack(&self, rows: &[usize], r: &mut DVector<f64>, jac: Option<&mut DMatrix<f64>>) {
        let mut jac = jac;
        for &b in rows {
            if r[b] < 0.0 {
                r[b] = 0.0;
                if let Some(j) = jac.as_deref_mut() {
                    j.row_mut(b).fill(0.0);
                }
            }
        }
    }

    fn jacobian_from(&self, j_b: DMatrix<f64>) -> DMatrix<f64> {
        let (n_b, n_j, n_ct) = (self.n_b(), self.n_j(), self.n_ct());
        let n_t = j_b.ncols();
        let mut jac = DMatrix::zeros(n_b + n_j, n_t + n_ct);
        jac.view_mut((0, 0), (n_b, n_t)).copy_from(&j_b);
        jac.view_mut((0, n_t), (n_b, n_ct)).copy_from(&(-&self.c_bct));
        jac.view_mut((n_b, n_t), (n_j, n_ct)).copy_from(&self.c_jct_scaled);
        jac
    }

    fn project(&self, x: &mut DVector<f64>) {
        let n_t = self.model.n_joints();
        for (i, (lo, hi)) in self.model.finger().joint_limits().iter().enumerate() {
            x[i] = x[i].clamp(*lo, *hi);
        }
        for i in n_t..x.len() {
            x[i] = x[i].max(0.0);
        }
    }

    /// Variables sitting on a bound with the descent direction pointing outward.
    fn active_bounds(&self, x: &DVector<f64>, grad: &DVector<f64>) -> Vec<bool> {
        let n_t = self.model.n_joints();
        let limits = self.model.finger().joint_limits();
        (0..x.len())
            .map(|i| {
                let (lo, hi) = if i < n_t { limits[i] } else { (0.0, f64::INFINITY) };
                (x[i] <= lo && grad[i] > 0.0) || (x[i] >= hi && grad[i] < 0.0)
            })
            .collect()
    }

    /// Solves for `(θ, ℓ_ct)` from a warm start (default: rest pose,
    /// `ℓ_ct = 0`). Iteration counts of restarts are added up.
    pub fn estimate(&self, meas: &Measurement, warm_start: Option<(&[f64], &DVector<f64>)>) -> Result<Estimate> {
        let first = self.solve(meas, warm_start)?;
        if first.status == EstimateStatus::Converged || !self.config.restart_on_failure {
            return Ok(first);
        }
        let limits = self.model.finger().joint_limits();
        let base: Vec<f64> = match warm_start {
            Some((theta, _)) => theta.to_vec(),
            None => self.model.finger().rest_pose().to_vec(),
        };
        let mut starts = vec![limits.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect::<Vec<_>>()];
        for (j, (lo, hi)) in limits.iter().enumerate() {
            for frac in [0.25, 0.75] {
                let mut t = base.clone();
                t[j] = lo + frac * (hi - lo);
                starts.push(t);
            }
        }
        let zero = DVector::zeros(self.n_ct());
        let mut best = first;
        let mut iterations = best.iterations;
        for start in starts {
            let e = self.solve(meas, Some((&start, &zero)))?;
            iterations += e.iterations;
            let done = e.status == EstimateStatus::Converged;
            if done || e.residual_norm < best.residual_norm {
                best = e;
            }
            if done {
                break;
            }
        }
        best.iterations = iterations;
        Ok(best)
    }

    fn solve(&self, meas: &Measurement, warm_start: Option<(&[f64], &DVector<f64>)>) -> Result<Estimate> {
        let n_t = self.model.n_joints();
        let n_ct = self.n_ct();
        let mut x = DVector::zeros(n_t + n_ct);
        match warm_start {
            Some((theta, ell)) => {
                self.check(theta, ell, meas)?;
                x.rows_mut(0, n_t).copy_from_slice(theta);
                x.rows_mut(n_t, n_ct).copy_from(ell);
            }
            None => {
                self.check(self.model.finger().rest_pose(), &DVector::zeros(n_ct), meas)?;
                x.rows_mut(0, n_t).copy_from_slice(self.model.finger().rest_pose());
            }
        }
        self.project(&mut x);

        let offset = self.branch_offset(meas);
        let jf = (&self.c_jm * &meas.f_m) / self.k_bar;
        let c_bs = &self.model.matrices().c_bs;
        let slack = self.slack_rows(meas);
        let eval = |x: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
            let theta = x.rows(0, n_t);
            let (l_s, j_s) = self.model.segment_jacobian(theta.as_slice())?;
            let ell = x.rows(n_t, n_ct).into_owned();
            let mut r = self.assemble(&(c_bs * l_s), &ell, &offset, &jf);
            let mut jac = self.jacobian_from(c_bs * j_s);
            self.relax_slack(&slack, &mut r, Some(&mut jac));
            Ok((r, jac))
        };
        let finish = |x: &DVector<f64>, norm: f64, iterations: usize, status: EstimateStatus, trace: Vec<IterationRecord>| Estimate {
            theta: x.rows(0, n_t).iter().copied().collect(),
            ell_ct: x.rows(n_t, n_ct).into_owned(),
            residual_norm: norm,
            iterations,
            status,
            slack: meas.is_slack(),
            trace,
        };

        let cfg = &self.config;
        let (mut r, mut jac) = eval(&x)?;
        let mut norm = r.norm();
        let mut lambda = cfg.initial_damping;
        let mut trace = Vec::new();
        if !norm.is_finite() {
            return Ok(finish(&x, norm, 0, EstimateStatus::Infeasible, trace));
        }
        for iteration in 1..=cfg.max_iterations {
            if norm <= cfg.residual_tolerance {
                return Ok(finish(&x, norm, iteration - 1, EstimateStatus::Converged, trace));
            }
            let grad = jac.transpose() * &r;
            let active = self.active_bounds(&x, &grad);
            let mut jtj = jac.transpose() * &jac;
            for i in 0..x.len() {
                if active[i] {
                    jtj.row_mut(i).fill(0.0);
                    jtj.column_mut(i).fill(0.0);
                    jtj[(i, i)] = 1.0;
                }
            }
            let scale = (0..x.len()).map(|i| jtj[(i, i)]).fold(0.0, f64::max).max(1e-300);
            let mut rhs = -grad;
            for i in 0..x.len() {
                if active[i] {
                    rhs[i] = 0.0;
                }
            }

            let mut accepted = false;
            while lambda <= 1e16 {
                let mut a = jtj.clone();
                for i in 0..x.len() {
                    a[(i, i)] += lambda * jtj[(i, i)].max(1e-9 * scale);
                }
                let Some(mut step) = a.cholesky().map(|c| c.solve(&rhs)) else {
                    lambda *= cfg.damping_increase;
                    continue;
                };
                let joint_step = step.rows(0, n_t).amax();
                if joint_step > cfg.max_joint_step {
                    step *= cfg.max_joint_step / joint_step;
                }
                let mut candidate = &x + &step;
                self.project(&mut candidate);
                let moved = (&candidate - &x).norm();
                if moved <= cfg.step_tolerance * (1.0 + x.norm()) {
                    if cfg.record_trace {
                        trace.push(IterationRecord {
                            iteration,
                            residual_norm: norm,
                            lambda,
                            step_norm: moved,
                            accepted: false,
                        });
                    }
                    return Ok(finish(&x, norm, iteration, EstimateStatus::Stalled, trace));
                }
                let (r_new, jac_new) = eval(&candidate)?;
                let norm_new = r_new.norm();
                let ok = norm_new.is_finite() && norm_new < norm;
                if cfg.record_trace {
                    trace.push(IterationRecord {
                        iteration,
                        residual_norm: if ok { norm_new } else { norm },
                        lambda,
                        step_norm: moved,
                        accepted: ok,
                    });
                }
                if ok {
                    x = candidate;
                    r = r_new;
                    jac = jac_new;
                    norm = norm_new;
                    lambda = (lambda * cfg.damping_decrease).max(1e-15);
                    accepted = true;
                    break;
                }
                lambda *= cfg.damping_increase;
            }
            if !accepted {
                return Ok(finish(&x, norm, iteration, EstimateStatus::Stalled, trace));
            }
        }
        let status = if norm <= cfg.residual_tolerance {
            EstimateStatus::Converged
        } else {
            EstimateStatus::MaxIter
        };
        Ok(finish(&x, norm, cfg.max_iterations, status, trace))
    }
}

/// Consistent synthetic data for a known posture.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMeasurement {
    pub measurement: Measurement,
    pub ell_ct: DVector<f64>,
    /// Multiplier applied to the requested tension direction.
    pub tension_scale: f64,
}

/// Builds `(ΔL_m, f_m, ℓ_ct)` that zero the residual at `theta_star`.
///
/// The residual equations are linear in `(ℓ_ct, ΔL_m)` for fixed `θ` and
/// tensions, so for `f_m = s·direction` the solution is affine in `s`. The
/// smallest `s ≥ min_scale` that keeps every `ℓ_ct` nonnegative is used.
pub fn synthesize_measurement(
    model: &TendonModel,
    theta_star: &[f64],
    direction: &[f64],
    min_scale: f64,
) -> Result<SyntheticMeasurement> {
    let m = model.matrices();
    let (n_b, n_j, n_m, n_ct) = (m.n_b(), m.n_j(), m.n_m(), m.n_ct());
    if direction.len() != n_m {
        return Err(Error::Dimension {
            what: "tension direction",
            expected: n_m,
            got: direction.len(),
        });
    }
    if direction.iter().any(|d| *d < 0.0 || !d.is_finite()) || min_scale < 0.0 {
        return Err(Error::Infeasible("tension direction must be nonnegative".into()));
    }
    if n_b + n_j != n_ct + n_m {
        return Err(Error::Infeasible(format!(
            "linear system is {}x{}; expected square",
            n_b + n_j,
            n_ct + n_m
        )));
    }
    let dir = DVector::from_column_slice(direction);
    let k_m = model.k_m();
    let k_ct = model.k_ct();

    let mut a = DMatrix::zeros(n_b + n_j, n_ct + n_m);
    a.view_mut((0, 0), (n_b, n_ct)).copy_from(&(-m.c_bct()));
    a.view_mut((0, n_ct), (n_b, n_m)).copy_from(&m.c_bm());
    let mut c_jct_k = m.c_jct();
    for (j, k) in k_ct.iter().enumerate() {
        c_jct_k.column_mut(j).scale_mut(*k);
    }
    a.view_mut((n_b, 0), (n_j, n_ct)).copy_from(&c_jct_k);
    let lu = a.lu();

    let excursion = model.branch_lengths(theta_star)? - model.rest_branch_lengths();
    let mut b0 = DVector::zeros(n_b + n_j);
    b0.rows_mut(0, n_b).copy_from(&(-excursion));
    let mut b1 = DVector::zeros(n_b + n_j);
    b1.rows_mut(0, n_b).copy_from(&(m.c_bm() * dir.component_div(&k_m)));
    b1.rows_mut(n_b, n_j).copy_from(&(-(m.c_jm() * &dir)));
    let x0 = lu
        .solve(&b0)
        .ok_or_else(|| Error::Infeasible("singular excursion system".into()))?;
    let x1 = lu
        .solve(&b1)
        .ok_or_else(|| Error::Infeasible("singular excursion system".into()))?;

    let tol = 1e-12;
    let (mut lo, mut hi) = (min_scale, f64::INFINITY);
    for i in 0..n_ct {
        let (c, d) = (x0[i], x1[i]);
        if d > tol {
            lo = lo.max(-c / d);
        } else if d < -tol {
            hi = hi.min(-c / d);
        } else if c < -1e-9 {
            return Err(Error::Infeasible(format!(
                "segment {} needs negative elongation for every tension scale",
                n_m + i + 1
            )));
        }
    }
    if lo > hi {
        return Err(Error::Infeasible(format!(
            "no tension scale keeps all elongations nonnegative (needs {lo:.3e} <= s <= {hi:.3e})"
        )));
    }
    let s = lo;
    let x = x0 + x1 * s;
    let ell_ct = x.rows(0, n_ct).map(|v| v.max(0.0));
    let delta_l_m = x.rows(n_ct, n_m).into_owned();
    Ok(SyntheticMeasurement {
        measurement: Measurement::new(delta_l_m, dir * s)?,
        ell_ct,
        tension_scale: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn measurement_rejects_negative_tension() {
        let err = Measurement::new(DVector::zeros(2), DVector::from_vec(vec![0.0, -1.0]));
        assert!(err.is_err());
        assert!(Measurement::zero(3).is_slack());
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let bad = EstimatorConfig {
            max_iterations: 0,
            ..EstimatorConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
