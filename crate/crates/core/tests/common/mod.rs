//! Shared fixtures and criterion checks for the integration tests.
#![allow(dead_code)]


use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tendon_hand::config::{GestureFile, HandFile, TendonFile};
use tendon_hand::controller::{Gesture, ReferencePlan};
use tendon_hand::estimator::{synthesize_measurement, EstimateStatus, Estimator, EstimatorConfig};
use tendon_hand::harness::{ExperimentConfig, RunMode, RunOutput};
use tendon_hand::kinematics::{build_generic_chain, ChainSpec, DofMask, FingerModel, JointSpec, Transform};
use tendon_hand::plant::{Node, Plant, PlantConfig, TendonKinematics, TendonNetwork};
use tendon_hand::tendon_model::{
    build_connection_matrices, count_branches, long_finger_graph, validate_graph, SegmentEdge, TendonGraph, TendonModel,
    Vertex,
};
use tendon_hand::Result;

pub fn bind(finger: &str) -> TendonModel {
    let hand = HandFile::embedded().unwrap();
    TendonFile::embedded().unwrap().bind(&hand, finger).unwrap()
}

pub fn f2() -> TendonModel {
    bind("F2")
}

pub fn random_pose(model: &FingerModel, rng: &mut impl Rng) -> Vec<f64> {
    model
        .joint_limits()
        .iter()
        .map(|(lo, hi)| rng.gen_range(*lo..*hi))
        .collect()
}

/// The default gesture sequence as a reference plan for `model`.
pub fn default_plan(model: &FingerModel, transition: f64, hold: f64) -> ReferencePlan {
    let file = GestureFile::embedded().unwrap();
    let gestures = ExperimentConfig::default()
        .sequence
        .iter()
        .map(|name| Gesture {
            name: name.clone(),
            theta_d: file.get(name).unwrap().joint_vector(model).unwrap(),
            recorded_delta_l: None,
        })
        .collect();
    ReferencePlan::new(model.rest_pose(), gestures, transition, hold).unwrap()
}

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

// ---- connection matrices ----

/// Parses a labelled CSV matrix; entries may be written as fractions `p/q`.
pub fn read_matrix_csv(text: &str) -> (Vec<String>, Vec<String>, DMatrix<f64>) {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let cols: Vec<String> = lines.next().unwrap().split(',').skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for line in lines {
        let mut it = line.split(',');
        rows.push(it.next().unwrap().to_string());
        for cell in it {
            let v = match cell.split_once('/') {
                Some((p, q)) => p.trim().parse::<f64>().unwrap() / q.trim().parse::<f64>().unwrap(),
                None => cell.trim().parse::<f64>().unwrap(),
            };
            values.push(v);
        }
    }
    let m = DMatrix::from_row_slice(rows.len(), cols.len(), &values);
    (rows, cols, m)
}

pub const GOLDEN_BS: &str = include_str!("../golden/c_bs.csv");
pub const GOLDEN_JS: &str = include_str!("../golden/c_js.csv");
pub const GOLDEN_TB: &str = include_str!("../golden/c_tb.csv");

pub fn check_golden_matrices() -> Outcome {
    let mut mismatches = Vec::new();
    let graphs = [
        ("built-in graph", long_finger_graph()),
        ("default tendon file", TendonFile::embedded().unwrap().graph().unwrap()),
    ];
    for (label, g) in &graphs {
        let m = build_connection_matrices(g).unwrap();
        for (name, golden, got) in [("C_bs", GOLDEN_BS, &m.c_bs), ("C_js", GOLDEN_JS, &m.c_js), ("C_tb", GOLDEN_TB, &m.c_tb)] {
            let (_, _, want) = read_matrix_csv(golden);
            if want.shape() != got.shape() || want != *got {
                mismatches.push(format!("{label} {name}"));
            }
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "C_bs 10x18, C_js 8x18, C_tb 5x10 equal the reference tables exactly".into()
        } else {
            format!("mismatch in {}", mismatches.join(", "))
        },
    )
}

// ---- counting ----

/// Random network: fan-out trees from each muscle, then optional merges
/// of the tree leaves, then one terminal per remaining end.
pub fn random_graph(rng: &mut impl Rng) -> TendonGraph {
    let n_m = rng.gen_range(1..=5);
    let mut n_j = 0;
    let mut edges: Vec<(Vertex, Vertex)> = Vec::new();
    let mut leaves = Vec::new();
    let mut open: Vec<(Vertex, usize)> = (0..n_m).map(|m| (Vertex::Muscle(m), 0)).collect();
    while let Some((from, depth)) = open.pop() {
        if depth < 3 && rng.gen_bool(0.45) {
            let j = Vertex::Junction(n_j);
            n_j += 1;
            edges.push((from, j));
            for _ in 0..rng.gen_range(2..=3) {
                open.push((j, depth + 1));
            }
        } else {
            leaves.push(from);
        }
    }
    leaves.shuffle(rng);
    while leaves.len() >= 2 && rng.gen_bool(0.5) {
        let k = rng.gen_range(2..=leaves.len().min(3));
        let j = Vertex::Junction(n_j);
        n_j += 1;
        for from in leaves.split_off(leaves.len() - k) {
            edges.push((from, j));
        }
        leaves.insert(rng.gen_range(0..=leaves.len()), j);
    }
    let mut n_t = 0;
    for from in leaves {
        edges.push((from, Vertex::Terminal(n_t)));
        n_t += 1;
    }
    // Root segments take ids 1..n_m in muscle order.
    edges.sort_by_key(|(from, _)| match from {
        Vertex::Muscle(m) => (0, *m),
        _ => (1, 0),
    });
    TendonGraph {
        muscles: (0..n_m).map(|i| format!("M{i}")).collect(),
        junctions: (0..n_j).map(|i| format!("J{i}")).collect(),
        terminals: (0..n_t).map(|i| format!("T{i}")).collect(),
        segments: edges
            .into_iter()
            .enumerate()
            .map(|(i, (from, to))| SegmentEdge { id: i + 1, from, to })
            .collect(),
    }
}

/// Muscle-to-terminal path count by exhaustive depth-first search.
pub fn count_paths(g: &TendonGraph) -> usize {
    fn walk(g: &TendonGraph, v: Vertex) -> usize {
        if let Vertex::Terminal(_) = v {
            return 1;
        }
        g.segments.iter().filter(|s| s.from == v).map(|s| walk(g, s.to)).sum()
    }
    (0..g.muscles.len()).map(|m| walk(g, Vertex::Muscle(m))).sum()
}

pub fn check_counting(n_graphs: usize) -> Outcome {
    let c = count_branches(&long_finger_graph()).unwrap();
    let long_ok = (c.n_b, c.n_j, c.n_ct, c.n_s, c.n_m) == (10, 8, 13, 18, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0;
    for _ in 0..n_graphs {
        let g = random_graph(&mut rng);
        let ok = validate_graph(&g).is_valid()
            && match count_branches(&g) {
                Ok(k) => {
                    let fan: usize = (0..g.junctions.len())
                        .map(|j| g.segments.iter().filter(|s| s.from == Vertex::Junction(j)).count() - 1)
                        .sum();
                    k.n_b == count_paths(&g)
                        && k.n_b == k.n_m + fan
                        && k.n_b + k.n_j == k.n_s
                        && k.n_s == g.segments.len()
                        && k.n_ct == k.n_s - k.n_m
                }
                Err(_) => false,
            };
        if !ok {
            failures += 1;
        }
    }
    Outcome::new(
        long_ok && failures == 0,
        format!(
            "long finger (n_b,n_j,n_ct,n_s,n_m) = ({},{},{},{},{}); n_b + n_j = n_s on {}/{} random graphs",
            c.n_b,
            c.n_j,
            c.n_ct,
            c.n_s,
            c.n_m,
            n_graphs - failures,
            n_graphs
        ),
    )
}

// ---- moment arms ----

/// Worst entrywise error of `R` against central differences of `L_t`,
/// relative to `max(|entry|, floor)`.
pub fn moment_arm_fd_error(model: &TendonModel, theta: &[f64], h: f64, floor: f64) -> f64 {
    let r = model.moment_arm_matrix(theta).unwrap();
    let mut worst = 0.0f64;
    for j in 0..theta.len() {
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[j] += h;
        tm[j] -= h;
        let fd = (model.tendon_lengths(&tp).unwrap() - model.tendon_lengths(&tm).unwrap()) / (2.0 * h);
        for i in 0..fd.len() {
            let err = (r[(i, j)] - fd[i]).abs() / fd[i].abs().max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn check_jacobian(n: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for finger in ["F2", "F3", "F4", "F5"] {
        let model = bind(finger);
        for _ in 0..n / 4 {
            let theta = random_pose(model.finger(), &mut rng);
            worst = worst.max(moment_arm_fd_error(&model, &theta, 1e-6, 1e-2));
        }
    }
    Outcome::new(
        worst <= 1e-4,
        format!("{n} random poses over F2-F5, max relative error {worst:.2e} (limit 1e-4)"),
    )
}

// ---- estimator ----

pub struct RoundTrip {
    pub trials: usize,
    pub converged: usize,
    pub accurate: usize,
    pub worst_pitch_yaw_deg: f64,
    pub roll_errors_deg: Vec<f64>,
}

pub fn round_trip(trials: usize, seed: u64) -> RoundTrip {
    let model = f2();
    let est = Estimator::new(&model, EstimatorConfig::default()).unwrap();
    let names = model.finger().joints().names().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = RoundTrip {
        trials,
        converged: 0,
        accurate: 0,
        worst_pitch_yaw_deg: 0.0,
        roll_errors_deg: Vec::new(),
    };
    for _ in 0..trials {
        let theta = random_pose(model.finger(), &mut rng);
        let s = synthesize_measurement(&model, &theta, &[1.0; 5], 0.0).unwrap();
        let e = est.estimate(&s.measurement, None).unwrap();
        if e.status != EstimateStatus::Converged || e.residual_norm > 1e-8 {
            continue;
        }
        out.converged += 1;
        let mut worst = 0.0f64;
        for (i, n) in names.iter().enumerate() {
            let err = (e.theta[i] - theta[i]).abs().to_degrees();
            if n.ends_with("Roll") {
                out.roll_errors_deg.push(err);
            } else {
                worst = worst.max(err);
            }
        }
        out.worst_pitch_yaw_deg = out.worst_pitch_yaw_deg.max(worst);
        if worst <= 0.5 {
            out.accurate += 1;
        }
    }
    out
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

pub fn check_round_trip() -> Outcome {
    let rt = round_trip(200, 5);
    let mut roll = rt.roll_errors_deg.clone();
    roll.sort_by(f64::total_cmp);
    let need = (0.95 * rt.trials as f64).ceil() as usize;
    Outcome::new(
        rt.accurate >= need,
        format!(
            "{}/{} converged (residual <= 1e-8), {}/{} also within 0.5 deg on pitch/yaw (need {need}); \
             worst pitch/yaw {:.2} deg; roll error median {:.2}, p95 {:.2}, max {:.2} deg",
            rt.converged,
            rt.trials,
            rt.accurate,
            rt.trials,
            rt.worst_pitch_yaw_deg,
            percentile(&roll, 0.5),
            percentile(&roll, 0.95),
            percentile(&roll, 1.0)
        ),
    )
}

// ---- row removal ----

fn index_like_chain(pip_yaw: bool) -> ChainSpec {
    let j = |name: &str, bone: &str, dof: DofMask, off: [f64; 3], yaw_off: bool, len: f64| JointSpec {
        name: name.into(),
        bone: bone.into(),
        dof,
        roll_offset: Some(off[0].to_radians()),
        yaw_offset: yaw_off.then(|| off[1].to_radians()),
        pitch_offset: Some(off[2].to_radians()),
        link_length: len,
    };
    let pip_dof = if pip_yaw { DofMask::YAW_PITCH } else { DofMask::PITCH };
    ChainSpec {
        name: "index".into(),
        origin: [12.0, 0.0, 0.0],
        joints: vec![
            j("CMC", "MC", DofMask::NONE, [-1.0, 5.0, 1.0], true, 66.0),
            j("MCP", "PP", DofMask::FULL, [-1.3, -5.0, 10.0], true, 40.0),
            j("PIP", "MP", pip_dof, [-1.0, 0.0, 10.0], pip_yaw, 23.0),
            j("DIP", "DP", DofMask::PITCH, [7.0, 0.0, 10.0], false, 17.0),
        ],
    }
}

fn frame_difference(a: &Transform<f64>, b: &Transform<f64>) -> f64 {
    let mut d = 0.0f64;
    for i in 0..3 {
        d = d.max((a.translation[i] - b.translation[i]).abs());
        for k in 0..3 {
            d = d.max((a.rotation[i][k] - b.rotation[i][k]).abs());
        }
    }
    d
}

pub fn check_row_removal(n: usize) -> Outcome {
    let absent = build_generic_chain(&index_like_chain(false)).unwrap();
    let frozen = build_generic_chain(&index_like_chain(true)).unwrap();
    let yaw = frozen.joints().index_of("PIP Yaw").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let theta: Vec<f64> = (0..absent.joint_count()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut theta_frozen = Vec::with_capacity(frozen.joint_count());
        for name in frozen.joints().names() {
            theta_frozen.push(match absent.joints().index_of(name) {
                Some(i) => theta[i],
                None => 0.0,
            });
        }
        debug_assert_eq!(theta_frozen[yaw], 0.0);
        let a = absent.forward_kinematics(&theta).unwrap();
        let b = frozen.forward_kinematics(&theta_frozen).unwrap();
        worst = worst.max(frame_difference(&a[absent.tip_frame()], &b[frozen.tip_frame()]));
    }
    Outcome::new(
        worst <= 1e-12,
        format!("{n} random poses, max fingertip frame difference {worst:.2e} (limit 1e-12)"),
    )
}

// ---- plant toy ----

/// One joint, one tendon with constant moment arm: `L = L0 − r θ`.
pub struct Pulley {
    pub r: f64,
    pub k: f64,
    pub limits: [(f64, f64); 1],
}

const PULLEY_L0: f64 = 100.0;

impl TendonKinematics for Pulley {
    fn n_joints(&self) -> usize {
        1
    }
    fn n_tendons(&self) -> usize {
        1
    }
    fn rest_pose(&self) -> &[f64] {
        &[0.0]
    }
    fn joint_limits(&self) -> &[(f64, f64)] {
        &self.limits
    }
    fn rest_tendon_lengths(&self) -> DVector<f64> {
        DVector::from_element(1, PULLEY_L0)
    }
    fn lengths_and_arms(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((
            DVector::from_element(1, PULLEY_L0 - self.r * theta[0]),
            DMatrix::from_element(1, 1, -self.r),
        ))
    }
}

impl TendonNetwork for Pulley {
    fn n_free_nodes(&self) -> usize {
        0
    }
    fn segment_nodes(&self) -> Vec<(Node, Node)> {
        vec![(Node::Coil(0), Node::Fixed)]
    }
    fn rest_segment_lengths(&self) -> DVector<f64> {
        self.rest_tendon_lengths()
    }
    fn segment_stiffness(&self) -> DVector<f64> {
        DVector::from_element(1, self.k)
    }
    fn segment_lengths_and_jacobian(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.lengths_and_arms(theta)
    }
}

/// Minimizer of a convex scalar function on `[lo, hi]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-13 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

pub fn check_plant_toy() -> Outcome {
    let kappa = PlantConfig::default().return_stiffness;
    let k = 10.0;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let (mut worst_plant, mut worst_oracle) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let delta = rng.gen_range(0.1..5.0);
        let r = rng.gen_range(2.0..15.0);
        let p = Pulley {
            r,
            k,
            limits: [(-10.0, 10.0)],
        };
        let plant = Plant::new(&p, PlantConfig::default()).unwrap();
        let s = plant.equilibrium(&DVector::from_element(1, delta), None).unwrap();
        let closed = k * r * delta / (kappa + k * r * r);
        let energy = |t: f64| 0.5 * k * (delta - r * t).max(0.0).powi(2) + 0.5 * kappa * t * t;
        let brute = golden_section(energy, -3.0, 3.0);
        worst_plant = worst_plant.max((s.theta[0] - brute).abs());
        worst_oracle = worst_oracle.max((closed - brute).abs());
    }
    Outcome::new(
        worst_plant <= 1e-6 && worst_oracle <= 1e-6,
        format!(
            "20 (delta, r) pairs, plant vs brute force {worst_plant:.2e} rad, closed form vs brute force {worst_oracle:.2e} rad (limit 1e-6)"
        ),
    )
}

// ---- closed loop ----

pub fn run_mode(mode: RunMode) -> RunOutput {
    let cfg = ExperimentConfig {
        mode,
        ..ExperimentConfig::default()
    };
    tendon_hand::harness::run_experiment(&cfg).unwrap()
}

pub fn check_closed_loop(out: &RunOutput) -> Outcome {
    let m = &out.metrics;
    let n = m.gestures.len();
    Outcome::new(
        m.settled_joint >= 4 && m.settled_task >= 5,
        format!(
            "F2 pi+ff: joint envelope settled {}/{n} (need 4), task envelope settled {}/{n} (need 5), mean settling {:.3} s",
            m.settled_joint, m.settled_task, m.mean_settling_joint_s
        ),
    )
}

/// Largest deviation of the ff-only command columns from `L_t(θ0) − L_t(θ_d(t))`.
pub fn ff_only_deviation(out: &RunOutput) -> f64 {
    let model = f2();
    let cfg = ExperimentConfig::default();
    let plan = default_plan(model.finger(), cfg.timing.transition_s, cfg.timing.hold_s);
    let rest = model.tendon_lengths(model.finger().rest_pose()).unwrap();
    let t_col = out.trace.column("t").unwrap();
    let cols: Vec<usize> = model
        .graph()
        .muscles
        .iter()
        .map(|m| out.trace.column(&format!("F2_{m}_cmd")).unwrap())
        .collect();
    let mut worst = 0.0f64;
    for row in &out.trace.rows {
        let ideal = &rest - model.tendon_lengths(&plan.reference(row[t_col])).unwrap();
        for (i, c) in cols.iter().enumerate() {
            worst = worst.max((row[*c] - ideal[i]).abs() / ideal[i].abs().max(1.0));
        }
    }
    worst
}

pub fn check_ablation(pi: &RunOutput, piff: &RunOutput, ff_only: &RunOutput) -> Outcome {
    let (a, b) = (&piff.metrics, &pi.metrics);
    let mut regressions = Vec::new();
    for (g_ff, g_pi) in a.gestures.iter().zip(&b.gestures) {
        let (x, y) = (g_ff.settling_joint_s, g_pi.settling_joint_s);
        let worse = match (x, y) {
            (Some(x), Some(y)) => x > y,
            (None, Some(_)) => true,
            _ => false,
        };
        if worse {
            regressions.push(g_ff.name.clone());
        }
    }
    let dev = ff_only_deviation(ff_only);
    let pass = a.mean_settling_joint_s <= b.mean_settling_joint_s && dev <= 1e-8;
    Outcome::new(
        pass,
        format!(
            "mean joint settling pi+ff {:.3} s vs pi {:.3} s; per-gesture regressions: {}; ff-only command vs ideal sequence {dev:.1e} (relative, CSV precision)",
            a.mean_settling_joint_s,
            b.mean_settling_joint_s,
            if regressions.is_empty() { "none".to_string() } else { regressions.join(",") }
        ),
    )
}

pub fn check_determinism(first: &RunOutput, second: &RunOutput) -> Outcome {
    let (a, b) = (first.trace.to_csv(), second.trace.to_csv());
    Outcome::new(
        a == b,
        format!("two runs, seed 1: {} bytes, identical = {}", a.len(), a == b),
    )
}
