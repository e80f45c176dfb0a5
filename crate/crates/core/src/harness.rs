//! Closed-loop experiments: plant → measurement → estimate → control, with
//! the trace kept as a flat numeric table that round-trips through CSV.
//!
//! Metrics are always computed from a [`TraceTable`], so recomputing them
//! from a persisted CSV gives the same numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{load_json, parse_json, GestureFile, HandFile, TendonFile};
use crate::controller::{Controller, ControllerConfig, ControllerState, FeedforwardMode, Gesture, ReferencePlan};
use crate::error::{Error, Result};
use crate::estimator::{EstimateStatus, Estimator, EstimatorConfig};
use crate::kinematics::{is_distal_pitch, FingerModel};
use crate::plant::{Plant, PlantConfig};
use crate::tendon_model::TendonModel;

pub const DEFAULT_SEQUENCE: [&str; 6] = ["G1", "G2", "G3", "G4", "G5", "G6"];
/// Hold duration used by `--paper-scale` (s).
pub const LONG_HOLD_S: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    #[serde(rename = "pi")]
    Pi,
    #[serde(rename = "pi+ff")]
    PiFf,
    #[serde(rename = "ff-only")]
    FfOnly,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Pi => "pi",
            RunMode::PiFf => "pi+ff",
            RunMode::FfOnly => "ff-only",
        }
    }
}

impl std::str::FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pi" => Ok(RunMode::Pi),
            "pi+ff" => Ok(RunMode::PiFf),
            "ff-only" => Ok(RunMode::FfOnly),
            other => Err(Error::config(format!("unknown mode `{other}` (pi, pi+ff, ff-only)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedforwardSource {
    Kinematic,
    DataAssisted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingSection {
    pub h_s: f64,
    pub transition_s: f64,
    pub hold_s: f64,
}

impl Default for TimingSection {
    fn default() -> Self {
        TimingSection {
            h_s: 0.01,
            transition_s: 2.0,
            hold_s: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub kp: f64,
    /// Defaults to `kp / 10`.
    pub ki: Option<f64>,
    /// Per-joint overrides keyed by joint name.
    pub kp_joint: BTreeMap<String, f64>,
    pub ki_joint: BTreeMap<String, f64>,
    pub integral_clamp_deg_s: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            kp: 0.02,
            ki: None,
            kp_joint: BTreeMap::new(),
            ki_joint: BTreeMap::new(),
            integral_clamp_deg_s: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub return_stiffness_nmm_per_rad: f64,
    pub limit_stiffness_nmm_per_rad2: f64,
    pub noise_delta_l_mm: f64,
    pub noise_force_n: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        let p = PlantConfig::default();
        PlantSection {
            return_stiffness_nmm_per_rad: p.return_stiffness,
            limit_stiffness_nmm_per_rad2: p.limit_stiffness,
            noise_delta_l_mm: p.noise_delta_l,
            noise_force_n: p.noise_force,
            max_iterations: p.max_iterations,
            gradient_tolerance: p.gradient_tolerance,
        }
    }
}

impl PlantSection {
    pub fn plant_config(&self) -> PlantConfig {
        PlantConfig {
            return_stiffness: self.return_stiffness_nmm_per_rad,
            limit_stiffness: self.limit_stiffness_nmm_per_rad2,
            segment_stiffness: None,
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            noise_delta_l: self.noise_delta_l_mm,
            noise_force: self.noise_force_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub max_iterations: usize,
    pub residual_tolerance: f64,
    pub max_joint_step_deg: f64,
    pub restart_on_failure: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        EstimatorSection {
            max_iterations: e.max_iterations,
            residual_tolerance: e.residual_tolerance,
            max_joint_step_deg: e.max_joint_step.to_degrees(),
            // Tracking relies on the warm start; cold restarts mostly cost time.
            restart_on_failure: false,
        }
    }
}

impl EstimatorSection {
    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            max_iterations: self.max_iterations,
            residual_tolerance: self.residual_tolerance,
            max_joint_step: self.max_joint_step_deg.to_radians(),
            restart_on_failure: self.restart_on_failure,
            ..EstimatorConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    pub joint_threshold_deg: f64,
    pub task_threshold_mm: f64,
    /// Steady-state sample offset before the next gesture starts (s).
    pub steady_state_offset_s: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            joint_threshold_deg: 5.0,
            task_threshold_mm: 5.0,
            steady_state_offset_s: 0.1,
        }
    }
}

/// One closed-loop experiment. Relative paths are resolved against the
/// directory of the file the config was loaded from; absent description
/// files fall back to the built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub hand: Option<PathBuf>,
    pub tendons: Option<PathBuf>,
    pub gestures: Option<PathBuf>,
    pub sequence: Vec<String>,
    pub fingers: Vec<String>,
    pub mode: RunMode,
    pub feedforward: FeedforwardSource,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub timing: TimingSection,
    pub controller: ControllerSection,
    pub plant: PlantSection,
    pub estimator: EstimatorSection,
    pub metrics: MetricOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            hand: None,
            tendons: None,
            gestures: None,
            sequence: DEFAULT_SEQUENCE.iter().map(|s| s.to_string()).collect(),
            fingers: vec!["F2".into()],
            mode: RunMode::PiFf,
            feedforward: FeedforwardSource::Kinematic,
            seed: 1,
            output_dir: PathBuf::from("runs/default"),
            timing: TimingSection::default(),
            controller: ControllerSection::default(),
            plant: PlantSection::default(),
            estimator: EstimatorSection::default(),
            metrics: MetricOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = load_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.hand, &mut cfg.tendons, &mut cfg.gestures].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_json(text, "experiment config")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.timing;
        if !(t.h_s > 0.0 && t.transition_s >= 0.0 && t.hold_s > 0.0) {
            return Err(Error::config("timing: h and hold must be positive, transition nonnegative"));
        }
        if self.sequence.is_empty() {
            return Err(Error::config("gesture sequence is empty"));
        }
        if self.fingers.is_empty() {
            return Err(Error::config("no fingers in scope"));
        }
        if self.metrics.steady_state_offset_s < 0.0 {
            return Err(Error::config("steady-state offset must be nonnegative"));
        }
        Ok(())
    }

    fn controller_config(&self, model: &FingerModel) -> Result<ControllerConfig> {
        let names = model.joints().names();
        let c = &self.controller;
        for key in c.kp_joint.keys().chain(c.ki_joint.keys()) {
            if model.joints().index_of(key).is_none() {
                return Err(Error::UnknownJoint(format!("{key} (controller gains)")));
            }
        }
        let kp: Vec<f64> = names.iter().map(|n| *c.kp_joint.get(n).unwrap_or(&c.kp)).collect();
        let ki: Vec<f64> = names
            .iter()
            .zip(&kp)
            .map(|(n, p)| *c.ki_joint.get(n).unwrap_or(&c.ki.unwrap_or(p / 10.0)))
            .collect();
        let (kp, ki) = match self.mode {
            RunMode::FfOnly => (vec![0.0; kp.len()], vec![0.0; ki.len()]),
            _ => (kp, ki),
        };
        let feedforward = match (self.mode, self.feedforward) {
            (RunMode::Pi, _) => None,
            (_, FeedforwardSource::Kinematic) => Some(FeedforwardMode::Kinematic),
            (_, FeedforwardSource::DataAssisted) => Some(FeedforwardMode::DataAssisted),
        };
        Ok(ControllerConfig {
            kp,
            ki,
            h: self.timing.h_s,
            feedforward,
            integral_clamp: c.integral_clamp_deg_s.to_radians(),
        })
    }
}

/// Description files resolved from a config.
#[derive(Debug, Clone)]
pub struct Descriptions {
    pub hand: HandFile,
    pub tendons: TendonFile,
    pub gestures: GestureFile,
}

impl Descriptions {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Descriptions {
            hand: match &cfg.hand {
                Some(p) => load_json(p)?,
                None => HandFile::embedded()?,
            },
            tendons: match &cfg.tendons {
                Some(p) => load_json(p)?,
                None => TendonFile::embedded()?,
            },
            gestures: match &cfg.gestures {
                Some(p) => load_json(p)?,
                None => GestureFile::embedded()?,
            },
        })
    }
}

/// Joint indices in reporting order: joints grouped as in the chain, and
/// within a joint Pitch, Yaw, Roll.
pub fn report_order(model: &FingerModel) -> Vec<usize> {
    let names = model.joints().names();
    let group = |n: &str| n.rsplit_once(' ').map(|(g, _)| g.to_string()).unwrap_or_default();
    let mut groups: Vec<String> = Vec::new();
    for n in names {
        let g = group(n);
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    let axis_rank = |n: &str| match n.rsplit(' ').next() {
        Some("Pitch") => 0,
        Some("Yaw") => 1,
        _ => 2,
    };
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by_key(|&i| {
        let n = &names[i];
        (groups.iter().position(|g| *g == group(n)).unwrap_or(0), axis_rank(n))
    });
    order
}

fn col_joint(finger: &str, joint: &str, suffix: &str) -> String {
    format!("{finger}_{}_{suffix}", joint.replace(' ', "_"))
}

/// Numeric trace plus the gesture name and phase of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub gesture: Vec<String>,
    pub phase: Vec<String>,
}

/// Rounds to the precision written to CSV (9 significant digits).
pub fn to_csv_precision(v: f64) -> f64 {
    format!("{v:.8e}").parse().unwrap_or(v)
}

impl TraceTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn values(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[col])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push_str(",gesture,phase\n");
        for (i, row) in self.rows.iter().enumerate() {
            for v in row {
                let _ = write!(out, "{v:.8e},");
            }
            let _ = writeln!(out, "{},{}", self.gesture[i], self.phase[i]);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| Error::Trace("empty file".into()))?.split(',').collect();
        if header.len() < 3 || header[header.len() - 2] != "gesture" || header[header.len() - 1] != "phase" || header[0] != "t" {
            return Err(Error::Trace("header must start with `t` and end with `gesture,phase`".into()));
        }
        let n_num = header.len() - 2;
        let mut table = TraceTable {
            columns: header[..n_num].iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            gesture: Vec::new(),
            phase: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(Error::Trace(format!("row {}: expected {} fields, got {}", i + 1, header.len(), fields.len())));
            }
            let row = fields[..n_num]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::Trace(format!("row {}: `{f}`: {e}", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            table.rows.push(row);
            table.gesture.push(fields[n_num].to_string());
            table.phase.push(fields[n_num + 1].to_string());
        }
        if table.rows.is_empty() {
            return Err(Error::Trace("no data rows".into()));
        }
        Ok(table)
    }

    pub fn sample_period(&self) -> f64 {
        if self.rows.len() < 2 {
            return 0.0;
        }
        self.rows[1][0] - self.rows[0][0]
    }

    /// Consecutive runs of rows with the same gesture index.
    pub fn windows(&self) -> Result<Vec<Window>> {
        let gi = self
            .column("gesture_index")
            .ok_or_else(|| Error::Trace("missing gesture_index column".into()))?;
        let mut out: Vec<Window> = Vec::new();
        for (k, row) in self.rows.iter().enumerate() {
            let idx = row[gi] as usize;
            match out.last_mut() {
                Some(w) if w.index == idx && w.end == k => w.end = k + 1,
                _ => out.push(Window {
                    index: idx,
                    name: self.gesture[k].clone(),
                    start: k,
                    end: k + 1,
                    hold_start: k,
                }),
            }
        }
        for w in &mut out {
            w.hold_start = (w.start..w.end).find(|&k| self.phase[k] == "hold").unwrap_or(w.end);
        }
        Ok(out)
    }

    /// `(finger, joint, des column, act column)` for every joint in the table.
    pub fn joint_columns(&self) -> Vec<(String, String, usize, usize)> {
        let mut out = Vec::new();
        for (i, c) in self.columns.iter().enumerate() {
            let Some(stem) = c.strip_suffix("_des") else { continue };
            let Some((finger, joint)) = stem.split_once('_') else { continue };
            if joint.starts_with("tip_") {
                continue;
            }
            if let Some(a) = self.column(&format!("{stem}_act")) {
                out.push((finger.to_string(), joint.replace('_', " "), i, a));
            }
        }
        out
    }

    pub fn fingers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (f, ..) in self.joint_columns() {
            if !out.contains(&f) {
                out.push(f);
            }
        }
        out
    }

    /// Fingertip des/act column triples per finger.
    fn tip_columns(&self) -> Vec<([usize; 3], [usize; 3])> {
        self.fingers()
            .iter()
            .filter_map(|f| {
                let get = |axis: &str, kind: &str| self.column(&format!("{f}_tip_{axis}_{kind}"));
                Some((
                    [get("x", "des")?, get("y", "des")?, get("z", "des")?],
                    [get("x", "act")?, get("y", "act")?, get("z", "act")?],
                ))
            })
            .collect()
    }

    /// Largest absolute joint error per row (deg).
    pub fn joint_envelope(&self, include_distal: bool) -> Vec<f64> {
        let cols: Vec<(usize, usize)> = self
            .joint_columns()
            .into_iter()
            .filter(|(_, j, ..)| include_distal || !is_distal_pitch(j))
            .map(|(_, _, d, a)| (d, a))
            .collect();
        self.rows
            .iter()
            .map(|r| cols.iter().map(|(d, a)| (r[*a] - r[*d]).abs()).fold(0.0, f64::max))
            .collect()
    }

    /// Largest fingertip distance per row (mm).
    pub fn task_envelope(&self) -> Vec<f64> {
        let tips = self.tip_columns();
        self.rows
            .iter()
            .map(|r| {
                tips.iter()
                    .map(|(d, a)| (0..3).map(|i| (r[a[i]] - r[d[i]]).powi(2)).sum::<f64>().sqrt())
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

/// Rows `start..end` belong to one gesture; rows from `hold_start` on are
/// past the reference transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub index: usize,
    pub name: String,
    pub start: usize,
    pub end: usize,
    pub hold_start: usize,
}

/// Time after `times[from]` at which `envelope` first drops below
/// `threshold`, linearly interpolated between samples. `None` if it never
/// does within `from..to`.
pub fn settling_time(times: &[f64], envelope: &[f64], from: usize, to: usize, threshold: f64) -> Option<f64> {
    if from >= to {
        return None;
    }
    let k = (from..to).find(|&k| envelope[k] < threshold)?;
    if k == from {
        return Some(0.0);
    }
    let (e0, e1) = (envelope[k - 1], envelope[k]);
    let frac = (e0 - threshold) / (e0 - e1);
    Some(times[k - 1] + frac * (times[k] - times[k - 1]) - times[from])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureMetrics {
    pub name: String,
    pub settling_joint_s: Option<f64>,
    pub settling_joint_with_distal_s: Option<f64>,
    pub settling_task_s: Option<f64>,
    /// `|θ − θ_d|` per joint at the steady-state sample (deg).
    pub steady_state_deg: BTreeMap<String, f64>,
    pub steady_state_tip_mm: BTreeMap<String, f64>,
    /// Largest excursion beyond the joint limits; joints that never left
    /// their range are absent.
    pub max_violation_deg: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub gestures: Vec<GestureMetrics>,
    pub settled_joint: usize,
    pub settled_task: usize,
    /// Mean joint settling time; gestures that never settle count as the
    /// full hold duration.
    pub mean_settling_joint_s: f64,
    pub mean_estimator_iterations: Option<f64>,
    pub roll_error_rms_deg: Option<f64>,
}

pub fn compute_metrics(table: &TraceTable, opts: &MetricOptions) -> Result<TraceMetrics> {
    let times: Vec<f64> = table.values(0).collect();
    let h = table.sample_period();
    let env_joint = table.joint_envelope(false);
    let env_joint_all = table.joint_envelope(true);
    let env_task = table.task_envelope();
    let joints = table.joint_columns();
    let tips = table.tip_columns();
    let fingers = table.fingers();
    let mut gestures = Vec::new();
    let mut censored_sum = 0.0;
    for w in table.windows()? {
        let hold_len = if w.end > w.hold_start {
            times[w.end - 1] - times[w.hold_start] + h
        } else {
            0.0
        };
        let sj = settling_time(&times, &env_joint, w.hold_start, w.end, opts.joint_threshold_deg);
        censored_sum += sj.unwrap_or(hold_len);
        let offset = if h > 0.0 { (opts.steady_state_offset_s / h).round() as usize } else { 0 };
        let ss_row = (w.end.saturating_sub(offset)).clamp(w.start, w.end - 1);
        let row = &table.rows[ss_row];
        let mut steady_state_deg = BTreeMap::new();
        let mut max_violation_deg = BTreeMap::new();
        for (f, j, d, a) in &joints {
            steady_state_deg.insert(format!("{f} {j}"), (row[*a] - row[*d]).abs());
            if let Some(vc) = table.column(&col_joint(f, j, "viol")) {
                let peak = (w.start..w.end).map(|k| table.rows[k][vc]).fold(0.0, f64::max);
                if peak > 0.0 {
                    max_violation_deg.insert(format!("{f} {j}"), peak);
                }
            }
        }
        let steady_state_tip_mm = fingers
            .iter()
            .zip(&tips)
            .map(|(f, (d, a))| (f.clone(), (0..3).map(|i| (row[a[i]] - row[d[i]]).powi(2)).sum::<f64>().sqrt()))
            .collect();
        gestures.push(GestureMetrics {
            name: w.name.clone(),
            settling_joint_s: sj,
            settling_joint_with_distal_s: settling_time(&times, &env_joint_all, w.hold_start, w.end, opts.joint_threshold_deg),
            settling_task_s: settling_time(&times, &env_task, w.hold_start, w.end, opts.task_threshold_mm),
            steady_state_deg,
            steady_state_tip_mm,
            max_violation_deg,
        });
    }
    let mean = |v: &[f64]| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
    let mut iters = Vec::new();
    let mut roll_sq = Vec::new();
    for f in &fingers {
        if let Some(c) = table.column(&format!("{f}_est_iter")) {
            iters.extend(table.values(c));
        }
        for (ff, j, _, a) in &joints {
            if ff == f && j.ends_with("Roll") {
                if let Some(e) = table.column(&col_joint(f, j, "est")) {
                    roll_sq.extend(table.rows.iter().map(|r| (r[e] - r[*a]).powi(2)));
                }
            }
        }
    }
    Ok(TraceMetrics {
        settled_joint: gestures.iter().filter(|g| g.settling_joint_s.is_some()).count(),
        settled_task: gestures.iter().filter(|g| g.settling_task_s.is_some()).count(),
        mean_settling_joint_s: censored_sum / gestures.len().max(1) as f64,
        gestures,
        mean_estimator_iterations: mean(&iters),
        roll_error_rms_deg: mean(&roll_sq).map(f64::sqrt),
    })
}

impl TraceMetrics {
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map(|s| format!("{s:.3}")).unwrap_or_else(|| "--".into());
        let mut out = String::from("gesture  settle_joint_s  settle_joint_dist_s  settle_task_s  ss_max_deg  ss_tip_mm  max_viol_deg\n");
        for g in &self.gestures {
            let ss = g.steady_state_deg.values().copied().fold(0.0, f64::max);
            let tip = g.steady_state_tip_mm.values().copied().fold(0.0, f64::max);
            let viol = g.max_violation_deg.values().copied().fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.max(b))));
            let _ = writeln!(
                out,
                "{:<8} {:>14} {:>20} {:>14} {:>11.3} {:>10.3} {:>13}",
                g.name,
                opt(g.settling_joint_s),
                opt(g.settling_joint_with_distal_s),
                opt(g.settling_task_s),
                ss,
                tip,
                opt(viol)
            );
        }
        let _ = writeln!(
            out,
            "settled (joint) {}/{}  settled (task) {}/{}  mean joint settling {:.3} s",
            self.settled_joint,
            self.gestures.len(),
            self.settled_task,
            self.gestures.len(),
            self.mean_settling_joint_s
        );
        if let Some(i) = self.mean_estimator_iterations {
            let _ = write!(out, "estimator iterations/step {i:.2}");
            if let Some(r) = self.roll_error_rms_deg {
                let _ = write!(out, "  roll estimate rms error {r:.3} deg");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub plant_unconverged_steps: usize,
    pub estimator_unconverged_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: TraceTable,
    pub metrics: TraceMetrics,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub seed: u64,
    pub fingers: Vec<String>,
    pub h_s: f64,
    pub transition_s: f64,
    pub hold_s: f64,
    pub stats: RunStats,
    pub metrics: TraceMetrics,
}

impl RunOutput {
    pub fn summary(&self, cfg: &ExperimentConfig) -> RunSummary {
        RunSummary {
            mode: cfg.mode.as_str().into(),
            seed: cfg.seed,
            fingers: cfg.fingers.clone(),
            h_s: cfg.timing.h_s,
            transition_s: cfg.timing.transition_s,
            hold_s: cfg.timing.hold_s,
            stats: self.stats.clone(),
            metrics: self.metrics.clone(),
        }
    }

    /// Writes `trace.csv` and `summary.json` into `dir`.
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| Error::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let trace = dir.join("trace.csv");
        std::fs::write(&trace, self.trace.to_csv()).map_err(io(&trace))?;
        let summary = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&self.summary(cfg)).map_err(|source| Error::Json {
            path: summary.display().to_string(),
            source,
        })?;
        std::fs::write(&summary, text + "\n").map_err(io(&summary))?;
        Ok(())
    }
}

struct Rig {
    name: String,
    model: TendonModel,
    plan: ReferencePlan,
    order: Vec<usize>,
}

fn build_rig(cfg: &ExperimentConfig, desc: &Descriptions, finger: &str) -> Result<Rig> {
    if !desc.tendons.fingers.iter().any(|f| f == finger) {
        return Err(Error::config(format!(
            "finger `{finger}` has no tendon network; tendon file covers {:?}",
            desc.tendons.fingers
        )));
    }
    let model = desc.tendons.bind(&desc.hand, finger)?;
    let fm = model.finger();
    let n_t = model.n_muscles();
    let gestures = cfg
        .sequence
        .iter()
        .map(|name| {
            let entry = desc
                .gestures
                .get(name)
                .ok_or_else(|| Error::config(format!("unknown gesture `{name}`")))?;
            let recorded = match entry.recorded_delta_l_mm.get(finger) {
                Some(v) if v.len() != n_t => {
                    return Err(Error::Dimension {
                        what: "recorded coil lengths",
                        expected: n_t,
                        got: v.len(),
                    })
                }
                Some(v) => Some(DVector::from_column_slice(v)),
                None => None,
            };
            Ok(Gesture {
                name: name.clone(),
                theta_d: entry.joint_vector(fm)?,
                recorded_delta_l: recorded,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = ReferencePlan::new(fm.rest_pose(), gestures, cfg.timing.transition_s, cfg.timing.hold_s)?;
    let order = report_order(fm);
    Ok(Rig {
        name: finger.to_string(),
        model,
        plan,
        order,
    })
}

fn noise_seed(seed: u64, finger: usize, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((finger as u64) << 48) ^ step as u64
}

/// Runs the closed loop for every finger in scope.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let desc = Descriptions::load(cfg)?;
    let plant_cfg = cfg.plant.plant_config();
    let est_cfg = cfg.estimator.estimator_config();
    let rigs = cfg
        .fingers
        .iter()
        .map(|f| build_rig(cfg, &desc, f))
        .collect::<Result<Vec<_>>>()?;

    struct Loop<'a> {
        plant: Plant<'a, TendonModel>,
        estimator: Estimator<'a>,
        controller: Controller<'a, TendonModel>,
        state: ControllerState,
        plant_state: Option<crate::plant::PlantState>,
        theta_hat: Vec<f64>,
        ell: DVector<f64>,
    }
    let mut loops = rigs
        .iter()
        .map(|rig| {
            let m = &rig.model;
            Ok(Loop {
                plant: Plant::new(m, plant_cfg.clone())?,
                estimator: Estimator::new(m, est_cfg.clone())?,
                controller: Controller::new(m, cfg.controller_config(m.finger())?)?,
                state: ControllerState::at_rest(m.n_muscles(), m.n_joints()),
                plant_state: None,
                theta_hat: m.finger().rest_pose().to_vec(),
                ell: DVector::zeros(m.matrices().n_ct()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for (lp, rig) in loops.iter_mut().zip(&rigs) {
        lp.state.prev_ff = lp.controller.feedforward(&rig.plan, 0.0)?;
        lp.state.delta_l = lp.state.prev_ff.clone();
    }

    let mut columns = vec!["t".to_string()];
    for rig in &rigs {
        let names = rig.model.finger().joints().names();
        for &j in &rig.order {
            for s in ["des", "act", "est"] {
                columns.push(col_joint(&rig.name, &names[j], s));
            }
        }
    }
    for rig in &rigs {
        for m in &rig.model.graph().muscles {
            columns.push(format!("{}_{m}_cmd", rig.name));
            columns.push(format!("{}_{m}_f", rig.name));
        }
    }
    for rig in &rigs {
        let names = rig.model.finger().joints().names();
        for &j in &rig.order {
            columns.push(col_joint(&rig.name, &names[j], "viol"));
        }
    }
    for rig in &rigs {
        for kind in ["des", "act"] {
            for axis in ["x", "y", "z"] {
                columns.push(format!("{}_tip_{axis}_{kind}", rig.name));
            }
        }
        columns.push(format!("{}_est_residual", rig.name));
        columns.push(format!("{}_est_iter", rig.name));
    }
    columns.push("gesture_index".into());

    let h = cfg.timing.h_s;
    let plan0 = &rigs[0].plan;
    let n_steps = (plan0.duration() / h).round() as usize;
    let mut table = TraceTable {
        columns,
        rows: Vec::with_capacity(n_steps),
        gesture: Vec::with_capacity(n_steps),
        phase: Vec::with_capacity(n_steps),
    };
    let mut stats = RunStats {
        steps: n_steps,
        ..RunStats::default()
    };

    for k in 0..n_steps {
        let t = k as f64 * h;
        let t_next = (k + 1) as f64 * h;
        let mut block_joint = Vec::new();
        let mut block_tendon = Vec::new();
        let mut block_viol = Vec::new();
        let mut block_tip = Vec::new();
        for (i, (lp, rig)) in loops.iter_mut().zip(&rigs).enumerate() {
            let fm = rig.model.finger();
            let step = |e: Error| e.at_step(k);
            let ps = lp.plant.equilibrium(&lp.state.delta_l, lp.plant_state.as_ref()).map_err(step)?;
            if !ps.converged {
                stats.plant_unconverged_steps += 1;
            }
            let meas = lp.plant.measure(&ps, noise_seed(cfg.seed, i, k)).map_err(step)?;
            let est = lp
                .estimator
                .estimate(&meas, Some((&lp.theta_hat, &lp.ell)))
                .map_err(step)?;
            if est.status != EstimateStatus::Converged {
                stats.estimator_unconverged_steps += 1;
            }
            let theta_d = rig.plan.reference(t);
            for &j in &rig.order {
                block_joint.extend([theta_d[j].to_degrees(), ps.theta[j].to_degrees(), est.theta[j].to_degrees()]);
                block_viol.push(ps.limit_violation[j].to_degrees());
            }
            for m in 0..rig.model.n_muscles() {
                block_tendon.extend([lp.state.delta_l[m], meas.f_m[m]]);
            }
            block_tip.extend(fm.fingertip(&theta_d).map_err(step)?);
            block_tip.extend(fm.fingertip(&ps.theta).map_err(step)?);
            block_tip.extend([est.residual_norm, est.iterations as f64]);

            let theta_d_next = rig.plan.reference(t_next);
            lp.state = match lp.controller.config().feedforward {
                Some(_) => {
                    let ff = lp.controller.feedforward(&rig.plan, t_next).map_err(step)?;
                    lp.controller.ff_pi_step(&lp.state, &est.theta, &theta_d_next, &ff)
                }
                None => lp.controller.pi_step(&lp.state, &est.theta, &theta_d_next),
            }
            .map_err(step)?;
            lp.theta_hat = est.theta;
            lp.plant_state = Some(ps);
            lp.ell = est.ell_ct;
        }
        let loc = plan0.locate(t);
        let mut row = Vec::with_capacity(table.columns.len());
        row.push(t);
        row.extend(block_joint);
        row.extend(block_tendon);
        row.extend(block_viol);
        row.extend(block_tip);
        row.push(loc.gesture as f64);
        table.rows.push(row.into_iter().map(to_csv_precision).collect());
        table.gesture.push(plan0.gestures()[loc.gesture].name.clone());
        table.phase.push(loc.phase.as_str().to_string());
    }
    let metrics = compute_metrics(&table, &cfg.metrics)?;
    Ok(RunOutput {
        trace: table,
        metrics,
        stats,
    })
}
