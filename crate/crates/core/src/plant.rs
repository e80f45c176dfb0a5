//! Quasi-static elastic finger.
//!
//! For commanded coil lengths `ΔL` the posture minimises
//!
//! ```text
//! U(θ, u) = ½ Σ_s k_s max(0, e_s)²  + ½ κ_r ‖θ − θ0‖²  + κ_lim Σ_i excess_i(θ)²
//! e_s     = L_s(θ) − L_s0 + u_from(s) − u_to(s)
//! ```
//!
//! over the joint angles and the material positions `u` of the tendon
//! junctions. A segment leaving a coil has `u_from = ΔL_m`; terminals have
//! `u = 0`. For an unbranched tendon this is `½ K (L_t + ΔL − L_t0)²`.
//! Segments are one-sided springs; `excess_i` is the distance of joint `i`
//! beyond its limit.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::estimator::Measurement;
use crate::tendon_model::{TendonModel, Vertex};

/// Tendon-level view of a tendon-driven chain, used for control.
pub trait TendonKinematics {
    fn n_joints(&self) -> usize;
    fn n_tendons(&self) -> usize;
    fn rest_pose(&self) -> &[f64];
    fn joint_limits(&self) -> &[(f64, f64)];
    fn rest_tendon_lengths(&self) -> DVector<f64>;
    /// Tendon lengths and `R = ∂L_t/∂θ`.
    fn lengths_and_arms(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

/// End of a segment as seen by the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    /// Driven by coil `m`.
    Coil(usize),
    /// Free junction `j`.
    Free(usize),
    Fixed,
}

/// Segment-level view used by the plant.
pub trait TendonNetwork: TendonKinematics {
    fn n_free_nodes(&self) -> usize;
    /// `(proximal, distal)` end of every segment.
    fn segment_nodes(&self) -> Vec<(Node, Node)>;
    fn rest_segment_lengths(&self) -> DVector<f64>;
    /// Default segment stiffness (N/mm).
    fn segment_stiffness(&self) -> DVector<f64>;
    /// Segment lengths and `∂L_s/∂θ`.
    fn segment_lengths_and_jacobian(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

impl TendonKinematics for TendonModel {
    fn n_joints(&self) -> usize {
        TendonModel::n_joints(self)
    }
    fn n_tendons(&self) -> usize {
        self.n_muscles()
    }
    fn rest_pose(&self) -> &[f64] {
        self.finger().rest_pose()
    }
    fn joint_limits(&self) -> &[(f64, f64)] {
        self.finger().joint_limits()
    }
    fn rest_tendon_lengths(&self) -> DVector<f64> {
        TendonModel::rest_tendon_lengths(self).clone()
    }
    fn lengths_and_arms(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.tendon_lengths_and_moment_arms(theta)
    }
}

impl TendonNetwork for TendonModel {
    fn n_free_nodes(&self) -> usize {
        self.graph().junctions.len()
    }
    fn segment_nodes(&self) -> Vec<(Node, Node)> {
        let node = |v: Vertex| match v {
            Vertex::Muscle(m) => Node::Coil(m),
            Vertex::Junction(j) => Node::Free(j),
            Vertex::Terminal(_) => Node::Fixed,
        };
        let mut segs = self.graph().segments.clone();
        segs.sort_by_key(|s| s.id);
        segs.iter().map(|s| (node(s.from), node(s.to))).collect()
    }
    fn rest_segment_lengths(&self) -> DVector<f64> {
        TendonModel::rest_segment_lengths(self).clone()
    }
    fn segment_stiffness(&self) -> DVector<f64> {
        self.stiffness().clone()
    }
    fn segment_lengths_and_jacobian(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.segment_jacobian(theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    /// Passive return stiffness toward the rest pose (N·mm/rad).
    pub return_stiffness: f64,
    /// Soft joint-limit penalty weight (N·mm/rad²).
    pub limit_stiffness: f64,
    /// Overrides the per-segment stiffness (N/mm).
    pub segment_stiffness: Option<Vec<f64>>,
    pub max_iterations: usize,
    /// Stop once `‖∇U‖∞` falls to this value.
    pub gradient_tolerance: f64,
    /// Standard deviation of coil-length readings (mm).
    pub noise_delta_l: f64,
    /// Standard deviation of tension readings (N).
    pub noise_force: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            return_stiffness: 0.5,
            limit_stiffness: 1.0e4,
            segment_stiffness: None,
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            noise_delta_l: 0.0,
            noise_force: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub theta: Vec<f64>,
    /// Material positions of the free junctions (mm).
    pub junctions: Vec<f64>,
    pub delta_l: DVector<f64>,
    /// Tension at each coil (N).
    pub tensions: DVector<f64>,
    pub segment_tensions: DVector<f64>,
    pub energy: f64,
    /// How far each joint sits beyond its limit (rad, nonnegative).
    pub limit_violation: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub struct Plant<'k, K: TendonNetwork + ?Sized> {
    kin: &'k K,
    config: PlantConfig,
    stiffness: DVector<f64>,
    rest_lengths: DVector<f64>,
    nodes: Vec<(Node, Node)>,
}

struct Eval {
    energy: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
    segment_tensions: DVector<f64>,
}

impl<'k, K: TendonNetwork + ?Sized> Plant<'k, K> {
    pub fn new(kin: &'k K, config: PlantConfig) -> Result<Self> {
        if !(config.return_stiffness > 0.0 && config.limit_stiffness >= 0.0 && config.gradient_tolerance > 0.0) {
            return Err(Error::config("plant stiffnesses and tolerance must be positive"));
        }
        if config.noise_delta_l < 0.0 || config.noise_force < 0.0 {
            return Err(Error::config("noise levels must be nonnegative"));
        }
        let nodes = kin.segment_nodes();
        let stiffness = match &config.segment_stiffness {
            Some(k) => {
                if k.len() != nodes.len() {
                    return Err(Error::Dimension {
                        what: "segment stiffness",
                        expected: nodes.len(),
                        got: k.len(),
                    });
                }
                if k.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::config("segment stiffness must be positive"));
                }
                DVector::from_column_slice(k)
            }
            None => kin.segment_stiffness(),
        };
        for (from, to) in &nodes {
            for n in [from, to] {
                match *n {
                    Node::Coil(m) if m >= kin.n_tendons() => return Err(Error::config(format!("segment driven by unknown coil {m}"))),
                    Node::Free(j) if j >= kin.n_free_nodes() => return Err(Error::config(format!("segment touches unknown junction {j}"))),
                    _ => {}
                }
            }
        }
        let rest_lengths = kin.rest_segment_lengths();
        Ok(Plant {
            kin,
            config,
            stiffness,
            rest_lengths,
            nodes,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }
    pub fn stiffness(&self) -> &DVector<f64> {
        &self.stiffness
    }

    fn node_position(node: Node, u: &[f64], delta_l: &DVector<f64>) -> f64 {
        match node {
            Node::Coil(m) => delta_l[m],
            Node::Free(j) => u[j],
            Node::Fixed => 0.0,
        }
    }

    /// Segment elongations `e_s`; positive entries are taut.
    pub fn segment_stretch(&self, theta: &[f64], junctions: &[f64], delta_l: &DVector<f64>) -> Result<DVector<f64>> {
        let (l, _) = self.kin.segment_lengths_and_jacobian(theta)?;
        Ok(self.stretch_from(&l, junctions, delta_l))
    }

    fn stretch_from(&self, l: &DVector<f64>, u: &[f64], delta_l: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(l.len(), |s, _| {
            let (from, to) = self.nodes[s];
            l[s] - self.rest_lengths[s] + Self::node_position(from, u, delta_l) - Self::node_position(to, u, delta_l)
        })
    }

    pub fn limit_violation(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.kin.joint_limits())
            .map(|(t, (lo, hi))| (lo - t).max(t - hi).max(0.0))
            .collect()
    }

    fn coil_tensions(&self, segment_tensions: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(self.kin.n_tendons());
        for (s, (from, _)) in self.nodes.iter().enumerate() {
            if let Node::Coil(m) = *from {
                f[m] += segment_tensions[s];
            }
        }
        f
    }

    fn evaluate(&self, x: &DVector<f64>, delta_l: &DVector<f64>) -> Result<Eval> {
        let n = self.kin.n_joints();
        let nx = x.len();
        let theta = x.rows(0, n);
        let u = x.rows(n, nx - n);
        let (l, js) = self.kin.segment_lengths_and_jacobian(theta.as_slice())?;
        let stretch = self.stretch_from(&l, u.as_slice(), delta_l);
        let mut segment_tensions = DVector::zeros(stretch.len());
        let mut energy = 0.0;
        let mut gradient = DVector::zeros(nx);
        let mut hessian = DMatrix::zeros(nx, nx);
        for s in 0..stretch.len() {
            if stretch[s] <= 0.0 {
                continue;
            }
            let k = self.stiffness[s];
            let t = k * stretch[s];
            segment_tensions[s] = t;
            energy += 0.5 * k * stretch[s] * stretch[s];
            let mut g = DVector::zeros(nx);
            g.rows_mut(0, n).copy_from(&js.row(s).transpose());
            let (from, to) = self.nodes[s];
            if let Node::Free(j) = from {
                g[n + j] += 1.0;
            }
            if let Node::Free(j) = to {
                g[n + j] -= 1.0;
            }
            gradient.axpy(t, &g, 1.0);
            hessian.ger(k, &g, &g, 1.0);
        }
        let rest = self.kin.rest_pose();
        for i in 0..n {
            let d = theta[i] - rest[i];
            energy += 0.5 * self.config.return_stiffness * d * d;
            gradient[i] += self.config.return_stiffness * d;
            hessian[(i, i)] += self.config.return_stiffness;
            let (lo, hi) = self.kin.joint_limits()[i];
            let excess = if theta[i] > hi {
                theta[i] - hi
            } else if theta[i] < lo {
                theta[i] - lo
            } else {
                0.0
            };
            if excess != 0.0 {
                energy += self.config.limit_stiffness * excess * excess;
                gradient[i] += 2.0 * self.config.limit_stiffness * excess;
                hessian[(i, i)] += 2.0 * self.config.limit_stiffness;
            }
        }
        Ok(Eval {
            energy,
            gradient,
            hessian,
            segment_tensions,
        })
    }

    fn stack(&self, theta: &[f64], junctions: &[f64]) -> DVector<f64> {
        DVector::from_iterator(theta.len() + junctions.len(), theta.iter().chain(junctions).copied())
    }

    /// Potential energy (N·mm).
    pub fn energy(&self, theta: &[f64], junctions: &[f64], delta_l: &DVector<f64>) -> Result<f64> {
        self.check(theta, junctions, delta_l)?;
        Ok(self.evaluate(&self.stack(theta, junctions), delta_l)?.energy)
    }

    /// Gradient of the potential with respect to `(θ, u)`.
    pub fn gradient(&self, theta: &[f64], junctions: &[f64], delta_l: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(theta, junctions, delta_l)?;
        Ok(self.evaluate(&self.stack(theta, junctions), delta_l)?.gradient)
    }

    fn check(&self, theta: &[f64], junctions: &[f64], delta_l: &DVector<f64>) -> Result<()> {
        for (what, expected, got) in [
            ("coil command", self.kin.n_tendons(), delta_l.len()),
            ("joint vector", self.kin.n_joints(), theta.len()),
            ("junction positions", self.kin.n_free_nodes(), junctions.len()),
        ] {
            if expected != got {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        if !delta_l.iter().all(|v| v.is_finite()) {
            return Err(Error::config("coil command contains non-finite values"));
        }
        Ok(())
    }

    /// Gauss-Newton descent with Armijo backtracking from `warm_start`
    /// (default: rest pose with junctions at zero).
    pub fn equilibrium(&self, delta_l: &DVector<f64>, warm_start: Option<&PlantState>) -> Result<PlantState> {
        let n = self.kin.n_joints();
        let zeros = vec![0.0; self.kin.n_free_nodes()];
        let (theta0, u0) = match warm_start {
            Some(s) => (s.theta.as_slice(), s.junctions.as_slice()),
            None => (self.kin.rest_pose(), zeros.as_slice()),
        };
        self.check(theta0, u0, delta_l)?;
        let mut x = self.stack(theta0, u0);
        let tol = self.config.gradient_tolerance;
        // Junctions between slack segments have no stiffness; a tiny floor
        // keeps the Newton system definite without moving them.
        let floor = 1e-10 * self.stiffness.max().max(1.0);
        let mut ev = self.evaluate(&x, delta_l)?;
        let mut iterations = 0;
        let mut converged = ev.gradient.amax() <= tol;
        while !converged && iterations < self.config.max_iterations {
            iterations += 1;
            let mut h = ev.hessian.clone();
            h.view_mut((0, 0), (n, n)).add_assign(&self.tension_curvature(&x, &ev.segment_tensions)?);
            for i in n..x.len() {
                h[(i, i)] += floor;
            }
            let step = self.newton_step(h, &ev.gradient)?;
            let slope = ev.gradient.dot(&step);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial = &x + alpha * &step;
                let tr = self.evaluate(&trial, delta_l)?;
                if tr.energy <= ev.energy + 1e-4 * alpha * slope || tr.gradient.amax() <= tol {
                    accepted = Some((trial, tr));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((t, e)) => {
                    x = t;
                    ev = e;
                    converged = ev.gradient.amax() <= tol;
                }
                // Round-off floor: energy can no longer decrease.
                None => break,
            }
        }
        let theta: Vec<f64> = x.rows(0, n).iter().copied().collect();
        Ok(PlantState {
            limit_violation: self.limit_violation(&theta),
            theta,
            junctions: x.rows(n, x.len() - n).iter().copied().collect(),
            delta_l: delta_l.clone(),
            tensions: self.coil_tensions(&ev.segment_tensions),
            segment_tensions: ev.segment_tensions,
            energy: ev.energy,
            gradient_norm: ev.gradient.amax(),
            iterations,
            converged,
        })
    }

    /// `Σ_s T_s ∂²L_s/∂θ²` by central differences of `J_sᵀ T`.
    fn tension_curvature(&self, x: &DVector<f64>, tensions: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.kin.n_joints();
        let mut c = DMatrix::zeros(n, n);
        if tensions.iter().all(|t| *t == 0.0) {
            return Ok(c);
        }
        let h = 1e-6;
        let mut theta: Vec<f64> = x.rows(0, n).iter().copied().collect();
        for i in 0..n {
            let t0 = theta[i];
            theta[i] = t0 + h;
            let (_, jp) = self.kin.segment_lengths_and_jacobian(&theta)?;
            theta[i] = t0 - h;
            let (_, jm) = self.kin.segment_lengths_and_jacobian(&theta)?;
            theta[i] = t0;
            c.set_column(i, &((jp - jm).transpose() * tensions / (2.0 * h)));
        }
        Ok((&c + c.transpose()) * 0.5)
    }

    /// Newton step, shifted toward gradient descent until the system is
    /// positive definite.
    fn newton_step(&self, h: DMatrix<f64>, gradient: &DVector<f64>) -> Result<DVector<f64>> {
        let scale = h.diagonal().amax().max(1e-12);
        let mut shift = 0.0;
        for _ in 0..60 {
            let mut a = h.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += shift;
            }
            if let Some(c) = a.cholesky() {
                return Ok(c.solve(&(-gradient)));
            }
            shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
        }
        Err(Error::Infeasible("plant Hessian could not be regularised".into()))
    }

    /// Sensor readings at `state` with optional Gaussian noise. Tension
    /// readings are clipped at zero.
    pub fn measure(&self, state: &PlantState, seed: u64) -> Result<Measurement> {
        let mut delta_l = state.delta_l.clone();
        let mut f = state.tensions.clone();
        if self.config.noise_delta_l > 0.0 || self.config.noise_force > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nl = Normal::new(0.0, self.config.noise_delta_l).map_err(|e| Error::config(e.to_string()))?;
            let nf = Normal::new(0.0, self.config.noise_force).map_err(|e| Error::config(e.to_string()))?;
            for i in 0..delta_l.len() {
                delta_l[i] += nl.sample(&mut rng);
                f[i] = (f[i] + nf.sample(&mut rng)).max(0.0);
            }
        }
        Measurement::new(delta_l, f)
    }
}
