//! Tendon-driven finger modelling: DH kinematics, tendon routing graphs,
//! posture estimation from tendon measurements, a quasi-static elastic
//! plant and a PI + feedforward tendon controller.

pub mod config;
pub mod controller;
pub mod dual;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod kinematics;
pub mod plant;
pub mod tendon_model;

pub use error::{Error, Result};
