//! Reference generation and the tendon-space PI + feedforward law.
//!
//! ```text
//! ΔL⁺ = ΔL + (ΔL̂ − ΔL̂⁻) − R(θ̂) (K_p θ̃ + K_i Σ h θ̃),   θ̃ = θ_d − θ̂
//! ```
//!
//! `ΔL̂` is the feedforward prediction of the coil lengths that realise the
//! current reference; without feedforward the increment is zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::plant::TendonKinematics;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedforwardMode {
    /// `ΔL̂(θ_d) = L_t(θ0) − L_t(θ_d)` from the routing geometry.
    Kinematic,
    /// Interpolation of recorded per-gesture coil lengths.
    DataAssisted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Proportional gain per joint (dimensionless, applied every step).
    pub kp: Vec<f64>,
    /// Integral gain per joint (1/s).
    pub ki: Vec<f64>,
    /// Sample period (s).
    pub h: f64,
    pub feedforward: Option<FeedforwardMode>,
    /// Bound on each integral accumulator (rad·s).
    pub integral_clamp: f64,
}

impl ControllerConfig {
    /// Equal gains on every joint with `K_i = K_p / 10`.
    pub fn uniform(n_joints: usize, kp: f64) -> Self {
        ControllerConfig {
            kp: vec![kp; n_joints],
            ki: vec![kp / 10.0; n_joints],
            h: 0.01,
            feedforward: Some(FeedforwardMode::Kinematic),
            integral_clamp: 20f64.to_radians(),
        }
    }

    pub fn validate(&self, n_joints: usize) -> Result<()> {
        for (what, v) in [("kp", &self.kp), ("ki", &self.ki)] {
            if v.len() != n_joints {
                return Err(Error::Dimension {
                    what,
                    expected: n_joints,
                    got: v.len(),
                });
            }
            if v.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                return Err(Error::config(format!("{what} gains must be finite and nonnegative")));
            }
        }
        if !(self.h > 0.0) || !(self.integral_clamp >= 0.0) {
            return Err(Error::config("sample period must be positive and the integral clamp nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub delta_l: DVector<f64>,
    /// `Σ h θ̃` per joint (rad·s).
    pub integral: DVector<f64>,
    /// Feedforward prediction applied at the previous step (mm).
    pub prev_ff: DVector<f64>,
}

impl ControllerState {
    pub fn at_rest(n_tendons: usize, n_joints: usize) -> Self {
        ControllerState {
            delta_l: DVector::zeros(n_tendons),
            integral: DVector::zeros(n_joints),
            prev_ff: DVector::zeros(n_tendons),
        }
    }
}

/// Target posture with optional recorded coil lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Gesture {
    pub name: String,
    pub theta_d: Vec<f64>,
    pub recorded_delta_l: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Transition,
    Hold,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Transition => "transition",
            Phase::Hold => "hold",
        }
    }
}

/// Where the reference is at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    /// Index into the gesture sequence.
    pub gesture: usize,
    pub phase: Phase,
    /// Interpolation weight toward the current gesture (1 during hold).
    pub alpha: f64,
}

/// Piecewise-linear joint reference through a gesture sequence, starting
/// from the rest pose. Each gesture gets a ramp of `transition` seconds and
/// then a hold of `hold` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePlan {
    rest: Gesture,
    gestures: Vec<Gesture>,
    transition: f64,
    hold: f64,
}

impl ReferencePlan {
    pub fn new(rest_pose: &[f64], gestures: Vec<Gesture>, transition: f64, hold: f64) -> Result<Self> {
        if gestures.is_empty() {
            return Err(Error::config("gesture sequence is empty"));
        }
        if !(transition >= 0.0 && hold > 0.0) {
            return Err(Error::config("transition must be nonnegative and hold positive"));
        }
        for g in &gestures {
            if g.theta_d.len() != rest_pose.len() {
                return Err(Error::Dimension {
                    what: "gesture joint vector",
                    expected: rest_pose.len(),
                    got: g.theta_d.len(),
                });
            }
        }
        let n_t = gestures[0].recorded_delta_l.as_ref().map(|v| v.len()).unwrap_or(0);
        Ok(ReferencePlan {
            rest: Gesture {
                name: "rest".into(),
                theta_d: rest_pose.to_vec(),
                recorded_delta_l: Some(DVector::zeros(n_t)),
            },
            gestures,
            transition,
            hold,
        })
    }

    pub fn gestures(&self) -> &[Gesture] {
        &self.gestures
    }
    pub fn transition(&self) -> f64 {
        self.transition
    }
    pub fn hold(&self) -> f64 {
        self.hold
    }
    pub fn window(&self) -> f64 {
        self.transition + self.hold
    }
    pub fn duration(&self) -> f64 {
        self.window() * self.gestures.len() as f64
    }

    pub fn locate(&self, t: f64) -> ReferencePoint {
        let t = t.max(0.0);
        let w = self.window();
        let gesture = ((t / w).floor() as usize).min(self.gestures.len() - 1);
        let local = t - gesture as f64 * w;
        if local < self.transition {
            ReferencePoint {
                gesture,
                phase: Phase::Transition,
                alpha: local / self.transition,
            }
        } else {
            ReferencePoint {
                gesture,
                phase: Phase::Hold,
                alpha: 1.0,
            }
        }
    }

    fn endpoints(&self, gesture: usize) -> (&Gesture, &Gesture) {
        let from = if gesture == 0 { &self.rest } else { &self.gestures[gesture - 1] };
        (from, &self.gestures[gesture])
    }

    /// `θ_d(t)`.
    pub fn reference(&self, t: f64) -> Vec<f64> {
        let p = self.locate(t);
        let (from, to) = self.endpoints(p.gesture);
        from.theta_d
            .iter()
            .zip(&to.theta_d)
            .map(|(a, b)| a + p.alpha * (b - a))
            .collect()
    }

    /// Recorded coil lengths interpolated with the same weights as `θ_d`.
    pub fn recorded_feedforward(&self, t: f64) -> Result<DVector<f64>> {
        let p = self.locate(t);
        let (from, to) = self.endpoints(p.gesture);
        let missing = |g: &Gesture| Error::config(format!("gesture `{}` has no recorded coil lengths", g.name));
        let a = from.recorded_delta_l.as_ref().ok_or_else(|| missing(from))?;
        let b = to.recorded_delta_l.as_ref().ok_or_else(|| missing(to))?;
        if a.len() != b.len() {
            return Err(Error::Dimension {
                what: "recorded coil lengths",
                expected: b.len(),
                got: a.len(),
            });
        }
        Ok(a + (b - a) * p.alpha)
    }
}

pub struct Controller<'k, K: TendonKinematics + ?Sized> {
    kin: &'k K,
    config: ControllerConfig,
    rest_lengths: DVector<f64>,
}

impl<'k, K: TendonKinematics + ?Sized> Controller<'k, K> {
    pub fn new(kin: &'k K, config: ControllerConfig) -> Result<Self> {
        config.validate(kin.n_joints())?;
        Ok(Controller {
            kin,
            rest_lengths: kin.rest_tendon_lengths(),
            config,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn moment_arms(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.kin.lengths_and_arms(theta)?.1)
    }

    /// `L_t(θ0) − L_t(θ_d)`: positive entries wind the tendon in.
    pub fn kinematic_feedforward(&self, theta_d: &[f64]) -> Result<DVector<f64>> {
        let (l, _) = self.kin.lengths_and_arms(theta_d)?;
        Ok(&self.rest_lengths - l)
    }

    /// Feedforward prediction for time `t` of `plan`, or zeros when disabled.
    pub fn feedforward(&self, plan: &ReferencePlan, t: f64) -> Result<DVector<f64>> {
        match self.config.feedforward {
            None => Ok(DVector::zeros(self.kin.n_tendons())),
            Some(FeedforwardMode::Kinematic) => self.kinematic_feedforward(&plan.reference(t)),
            Some(FeedforwardMode::DataAssisted) => {
                let v = plan.recorded_feedforward(t)?;
                if v.len() != self.kin.n_tendons() {
                    return Err(Error::Dimension {
                        what: "recorded coil lengths",
                        expected: self.kin.n_tendons(),
                        got: v.len(),
                    });
                }
                Ok(v)
            }
        }
    }

    fn correction(&self, state: &ControllerState, theta_hat: &[f64], theta_d: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.kin.n_joints();
        for (what, got) in [("estimate", theta_hat.len()), ("reference", theta_d.len()), ("integral", state.integral.len())] {
            if got != n {
                return Err(Error::Dimension { what, expected: n, got });
            }
        }
        let err = DVector::from_iterator(n, theta_d.iter().zip(theta_hat).map(|(d, e)| d - e));
        let clamp = self.config.integral_clamp;
        let integral = DVector::from_iterator(
            n,
            state
                .integral
                .iter()
                .zip(err.iter())
                .map(|(acc, e)| (acc + self.config.h * e).clamp(-clamp, clamp)),
        );
        let drive = DVector::from_iterator(
            n,
            (0..n).map(|j| self.config.kp[j] * err[j] + self.config.ki[j] * integral[j]),
        );
        let r = self.moment_arms(theta_hat)?;
        Ok((r * drive, integral))
    }

    /// Feedback-only update.
    pub fn pi_step(&self, state: &ControllerState, theta_hat: &[f64], theta_d: &[f64]) -> Result<ControllerState> {
        let (corr, integral) = self.correction(state, theta_hat, theta_d)?;
        Ok(ControllerState {
            delta_l: &state.delta_l - corr,
            integral,
            prev_ff: state.prev_ff.clone(),
        })
    }

    /// Feedback plus the feedforward increment `ff − state.prev_ff`.
    pub fn ff_pi_step(
        &self,
        state: &ControllerState,
        theta_hat: &[f64],
        theta_d: &[f64],
        ff: &DVector<f64>,
    ) -> Result<ControllerState> {
        if ff.len() != state.prev_ff.len() {
            return Err(Error::Dimension {
                what: "feedforward",
                expected: state.prev_ff.len(),
                got: ff.len(),
            });
        }
        let (corr, integral) = self.correction(state, theta_hat, theta_d)?;
        let increment = ff - &state.prev_ff;
        Ok(ControllerState {
            delta_l: &state.delta_l + increment - corr,
            integral,
            prev_ff: ff.clone(),
        })
    }
}
