//! Tendon routing graphs, connection matrices and gesture-dependent lengths.
//!
//! A [`TendonGraph`] is the bare directed graph: muscles (starting sites),
//! junctions and terminal attachments joined by numbered segments. A
//! [`TendonModel`] binds a graph to a [`FingerModel`] through per-segment
//! site paths and evaluates segment, branch and tendon lengths and the
//! moment-arm matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::dual::{Dual, Scalar, DUAL_WIDTH};
use crate::error::{Error, Result};
use crate::kinematics::{site_position, FingerModel, SitePoint};

/// Default tendon axial rigidity E·A (N): a 100 mm segment gets 10 N/mm.
pub const DEFAULT_EA: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Muscle(usize),
    Junction(usize),
    Terminal(usize),
}

/// A directed tendon segment. Ids are 1-based and contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentEdge {
    pub id: usize,
    pub from: Vertex,
    pub to: Vertex,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TendonGraph {
    /// Muscle names in muscle order; muscle `i` drives root segment `i + 1`.
    pub muscles: Vec<String>,
    pub junctions: Vec<String>,
    pub terminals: Vec<String>,
    pub segments: Vec<SegmentEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    DuplicateName,
    DuplicateSegment(usize),
    SegmentIdGap { expected: usize },
    DanglingEndpoint(usize),
    MuscleInDegree(usize),
    MuscleOutDegree(usize),
    TerminalInDegree(usize),
    TerminalOutDegree(usize),
    TrivialJunction,
    IsolatedJunction { in_degree: usize, out_degree: usize },
    RootOrder { segment: usize },
    Cycle,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub vertex: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = &self.vertex;
        match &self.kind {
            ViolationKind::DuplicateName => write!(f, "{v}: vertex name used more than once"),
            ViolationKind::DuplicateSegment(id) => write!(f, "segment {id}: id used more than once"),
            ViolationKind::SegmentIdGap { expected } => {
                write!(f, "segment ids must be 1..n_s; {expected} is missing")
            }
            ViolationKind::DanglingEndpoint(id) => {
                write!(f, "segment {id}: endpoint `{v}` does not exist")
            }
            ViolationKind::MuscleInDegree(d) => {
                write!(f, "{v}: starting site has in-degree {d}, expected 0")
            }
            ViolationKind::MuscleOutDegree(d) => {
                write!(f, "{v}: starting site has out-degree {d}, expected 1")
            }
            ViolationKind::TerminalInDegree(d) => {
                write!(f, "{v}: terminal site has in-degree {d}, expected 1")
            }
            ViolationKind::TerminalOutDegree(d) => {
                write!(f, "{v}: terminal site has out-degree {d}, expected 0")
            }
            ViolationKind::TrivialJunction => {
                write!(f, "{v}: trivial junction (in-degree 1, out-degree 1)")
            }
            ViolationKind::IsolatedJunction {
                in_degree,
                out_degree,
            } => write!(
                f,
                "{v}: junction needs in- and out-degree >= 1 (has {in_degree}, {out_degree})"
            ),
            ViolationKind::RootOrder { segment } => {
                write!(f, "{v}: root segment should be {segment}")
            }
            ViolationKind::Cycle => write!(f, "{v}: lies on a cycle"),
            ViolationKind::Empty => write!(f, "graph has no muscles"),
        }
    }
}

/// Structural problems found by [`validate_graph`]. Empty means valid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, vertex: impl Into<String>, kind: ViolationKind) {
        self.violations.push(Violation {
            vertex: vertex.into(),
            kind,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl TendonGraph {
    pub fn vertex_name(&self, v: Vertex) -> Option<&str> {
        match v {
            Vertex::Muscle(i) => self.muscles.get(i),
            Vertex::Junction(i) => self.junctions.get(i),
            Vertex::Terminal(i) => self.terminals.get(i),
        }
        .map(String::as_str)
    }

    fn vertex_label(&self, v: Vertex) -> String {
        self.vertex_name(v)
            .map(str::to_string)
            .unwrap_or_else(|| format!("{v:?}"))
    }

    fn exists(&self, v: Vertex) -> bool {
        self.vertex_name(v).is_some()
    }

    fn degrees(&self, v: Vertex) -> (usize, usize) {
        let inn = self.segments.iter().filter(|s| s.to == v).count();
        let out = self.segments.iter().filter(|s| s.from == v).count();
        (inn, out)
    }

    /// Outgoing segments of `v`, sorted by id.
    pub fn outgoing(&self, v: Vertex) -> Vec<SegmentEdge> {
        let mut out: Vec<_> = self.segments.iter().filter(|s| s.from == v).copied().collect();
        out.sort_by_key(|s| s.id);
        out
    }

    pub fn segment(&self, id: usize) -> Option<&SegmentEdge> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn n_m(&self) -> usize {
        self.muscles.len()
    }
    pub fn n_j(&self) -> usize {
        self.junctions.len()
    }
    pub fn n_s(&self) -> usize {
        self.segments.len()
    }

    fn all_vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.muscles.len())
            .map(Vertex::Muscle)
            .chain((0..self.junctions.len()).map(Vertex::Junction))
            .chain((0..self.terminals.len()).map(Vertex::Terminal))
    }
}

/// Checks the degree rules, root numbering and acyclicity. Never panics.
pub fn validate_graph(g: &TendonGraph) -> ValidationReport {
    let mut report = ValidationReport::default();
    if g.muscles.is_empty() {
        report.push("graph", ViolationKind::Empty);
    }

    let mut seen = BTreeSet::new();
    for name in g.muscles.iter().chain(&g.junctions).chain(&g.terminals) {
        if !seen.insert(name.as_str()) {
            report.push(name.clone(), ViolationKind::DuplicateName);
        }
    }

    let mut ids = BTreeSet::new();
    for s in &g.segments {
        if !ids.insert(s.id) {
            report.push(format!("segment {}", s.id), ViolationKind::DuplicateSegment(s.id));
        }
        for end in [s.from, s.to] {
            if !g.exists(end) {
                report.push(format!("{end:?}"), ViolationKind::DanglingEndpoint(s.id));
            }
        }
    }
    for expected in 1..=g.segments.len() {
        if !ids.contains(&expected) {
            report.push("segments", ViolationKind::SegmentIdGap { expected });
        }
    }

    for (i, name) in g.muscles.iter().enumerate() {
        let v = Vertex::Muscle(i);
        let (inn, out) = g.degrees(v);
        if inn != 0 {
            report.push(name.clone(), ViolationKind::MuscleInDegree(inn));
        }
        if out != 1 {
            report.push(name.clone(), ViolationKind::MuscleOutDegree(out));
        } else if g.outgoing(v)[0].id != i + 1 {
            report.push(name.clone(), ViolationKind::RootOrder { segment: i + 1 });
        }
    }
    for (i, name) in g.terminals.iter().enumerate() {
        let (inn, out) = g.degrees(Vertex::Terminal(i));
        if inn != 1 {
            report.push(name.clone(), ViolationKind::TerminalInDegree(inn));
        }
        if out != 0 {
            report.push(name.clone(), ViolationKind::TerminalOutDegree(out));
        }
    }
    for (i, name) in g.junctions.iter().enumerate() {
        let (inn, out) = g.degrees(Vertex::Junction(i));
        if inn == 1 && out == 1 {
            report.push(name.clone(), ViolationKind::TrivialJunction);
        } else if inn.min(out) < 1 {
            report.push(
                name.clone(),
                ViolationKind::IsolatedJunction {
                    in_degree: inn,
                    out_degree: out,
                },
            );
        }
    }

    // Kahn's algorithm over existing endpoints.
    let vertices: Vec<Vertex> = g.all_vertices().collect();
    let mut indeg: BTreeMap<Vertex, usize> = vertices.iter().map(|v| (*v, 0)).collect();
    for s in g.segments.iter().filter(|s| g.exists(s.from) && g.exists(s.to)) {
        *indeg.get_mut(&s.to).expect("existing vertex") += 1;
    }
    let mut ready: Vec<Vertex> = indeg.iter().filter(|(_, d)| **d == 0).map(|(v, _)| *v).collect();
    let mut done = BTreeSet::new();
    while let Some(v) = ready.pop() {
        done.insert(v);
        for s in g.segments.iter().filter(|s| s.from == v && g.exists(s.to)) {
            let d = indeg.get_mut(&s.to).expect("existing vertex");
            *d -= 1;
            if *d == 0 {
                ready.push(s.to);
            }
        }
    }
    for v in vertices.into_iter().filter(|v| !done.contains(v)) {
        report.push(g.vertex_label(v), ViolationKind::Cycle);
    }
    report
}

fn ensure_valid(g: &TendonGraph) -> Result<()> {
    let report = validate_graph(g);
    if report.is_valid() {
        Ok(())
    } else {
        Err(Error::InvalidGraph(report))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphCounts {
    pub n_b: usize,
    pub n_j: usize,
    pub n_ct: usize,
    pub n_s: usize,
    pub n_m: usize,
}

/// A muscle-to-bone path of segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    /// Segment ids, root first.
    pub segments: Vec<usize>,
    /// Index into the muscle order.
    pub muscle: usize,
    /// Index into the terminal list.
    pub terminal: usize,
}

/// Branches in canonical order: muscle order, then depth first by segment id.
pub fn enumerate_branches(g: &TendonGraph) -> Result<Vec<Branch>> {
    ensure_valid(g)?;
    fn walk(g: &TendonGraph, seg: SegmentEdge, muscle: usize, path: &mut Vec<usize>, out: &mut Vec<Branch>) {
        path.push(seg.id);
        match seg.to {
            Vertex::Terminal(t) => out.push(Branch {
                segments: path.clone(),
                muscle,
                terminal: t,
            }),
            v => {
                for next in g.outgoing(v) {
                    walk(g, next, muscle, path, out);
                }
            }
        }
        path.pop();
    }
    let mut out = Vec::new();
    for m in 0..g.n_m() {
        let root = g.outgoing(Vertex::Muscle(m))[0];
        walk(g, root, m, &mut Vec::new(), &mut out);
    }
    Ok(out)
}

/// Graph sizes. The branch count is obtained by path enumeration and
/// cross-checked against `n_m + sum over junctions of (out-degree - 1)`.
pub fn count_branches(g: &TendonGraph) -> Result<GraphCounts> {
    let enumerated = enumerate_branches(g)?.len();
    let n_m = g.n_m();
    let formula = n_m
        + (0..g.n_j())
            .map(|j| g.degrees(Vertex::Junction(j)).1 - 1)
            .sum::<usize>();
    if enumerated != formula {
        return Err(Error::BranchCount { enumerated, formula });
    }
    Ok(GraphCounts {
        n_b: enumerated,
        n_j: g.n_j(),
        n_ct: g.n_s() - n_m,
        n_s: g.n_s(),
        n_m,
    })
}

/// `C_bs`, `C_js` and `C_tb` with their muscle / connected partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionMatrices {
    /// n_b x n_s, 1 where the branch contains the segment.
    pub c_bs: DMatrix<f64>,
    /// n_j x n_s, -1 for segments entering a junction and +1 for those leaving it.
    pub c_js: DMatrix<f64>,
    /// n_m x n_b, uniform weights over each muscle's branches.
    pub c_tb: DMatrix<f64>,
    pub branches: Vec<Branch>,
    n_m: usize,
}

impl ConnectionMatrices {
    pub fn n_m(&self) -> usize {
        self.n_m
    }
    pub fn n_b(&self) -> usize {
        self.c_bs.nrows()
    }
    pub fn n_s(&self) -> usize {
        self.c_bs.ncols()
    }
    pub fn n_j(&self) -> usize {
        self.c_js.nrows()
    }
    pub fn n_ct(&self) -> usize {
        self.n_s() - self.n_m
    }
    pub fn c_bm(&self) -> DMatrix<f64> {
        self.c_bs.columns(0, self.n_m).into_owned()
    }
    pub fn c_bct(&self) -> DMatrix<f64> {
        self.c_bs.columns(self.n_m, self.n_ct()).into_owned()
    }
    pub fn c_jm(&self) -> DMatrix<f64> {
        self.c_js.columns(0, self.n_m).into_owned()
    }
    pub fn c_jct(&self) -> DMatrix<f64> {
        self.c_js.columns(self.n_m, self.n_ct()).into_owned()
    }
}

pub fn build_connection_matrices(g: &TendonGraph) -> Result<ConnectionMatrices> {
    let counts = count_branches(g)?;
    let branches = enumerate_branches(g)?;
    let mut c_bs = DMatrix::zeros(counts.n_b, counts.n_s);
    for (b, branch) in branches.iter().enumerate() {
        for &s in &branch.segments {
            c_bs[(b, s - 1)] = 1.0;
        }
    }
    let mut c_js = DMatrix::zeros(counts.n_j, counts.n_s);
    for s in &g.segments {
        if let Vertex::Junction(j) = s.to {
            c_js[(j, s.id - 1)] = -1.0;
        }
        if let Vertex::Junction(j) = s.from {
            c_js[(j, s.id - 1)] = 1.0;
        }
    }
    let mut c_tb = DMatrix::zeros(counts.n_m, counts.n_b);
    for m in 0..counts.n_m {
        let mine: Vec<usize> = (0..branches.len()).filter(|&b| branches[b].muscle == m).collect();
        let w = 1.0 / mine.len() as f64;
        for b in mine {
            c_tb[(m, b)] = w;
        }
    }
    Ok(ConnectionMatrices {
        c_bs,
        c_js,
        c_tb,
        branches,
        n_m: counts.n_m,
    })
}

/// Writes a matrix as CSV with a header row of column labels.
pub fn matrix_csv(m: &DMatrix<f64>, row_labels: &[String], col_labels: &[String]) -> String {
    let mut out = String::from("row");
    for c in col_labels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, label) in row_labels.iter().enumerate() {
        out.push_str(label);
        for j in 0..m.ncols() {
            out.push(',');
            out.push_str(&format_entry(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

fn format_entry(v: f64) -> String {
    if v == v.trunc() {
        format!("{}", v as i64)
    } else {
        format!("{v:.12}")
    }
}

/// Linear spring law `k_i = E·A / L_s0,i` shared by all segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringModel {
    pub ea: f64,
}

impl Default for SpringModel {
    fn default() -> Self {
        SpringModel { ea: DEFAULT_EA }
    }
}

/// A tendon graph routed over a finger.
#[derive(Debug, Clone)]
pub struct TendonModel {
    finger: FingerModel,
    graph: TendonGraph,
    matrices: ConnectionMatrices,
    paths: Vec<Vec<SitePoint>>,
    spring: SpringModel,
    rest_segments: DVector<f64>,
    rest_branches: DVector<f64>,
    rest_tendons: DVector<f64>,
    stiffness: DVector<f64>,
}

impl TendonModel {
    /// `paths[i]` is the full site path of segment `i + 1`, endpoints included.
    pub fn new(finger: FingerModel, graph: TendonGraph, paths: Vec<Vec<SitePoint>>, spring: SpringModel) -> Result<Self> {
        let matrices = build_connection_matrices(&graph)?;
        if paths.len() != graph.n_s() {
            return Err(Error::Dimension {
                what: "segment site paths",
                expected: graph.n_s(),
                got: paths.len(),
            });
        }
        if !(spring.ea > 0.0) {
            return Err(Error::config(format!("E·A must be positive, got {}", spring.ea)));
        }
        for (i, path) in paths.iter().enumerate() {
            if path.len() < 2 {
                return Err(Error::DegenerateSegment { segment: i + 1 });
            }
            for site in path {
                if site.frame_index >= finger.frame_count() {
                    return Err(Error::InvalidFrame {
                        index: site.frame_index,
                        count: finger.frame_count(),
                    });
                }
            }
        }
        let n_theta = finger.joint_count();
        let (n_m, n_ct, n_b, n_j) = (matrices.n_m(), matrices.n_ct(), matrices.n_b(), matrices.n_j());
        if n_theta <= n_m && n_theta + n_ct > n_b + n_j {
            return Err(Error::config(format!(
                "{}: {} unknowns exceed {} equations",
                finger.name(),
                n_theta + n_ct,
                n_b + n_j
            )));
        }
        let mut model = TendonModel {
            finger,
            graph,
            matrices,
            paths,
            spring,
            rest_segments: DVector::zeros(0),
            rest_branches: DVector::zeros(0),
            rest_tendons: DVector::zeros(0),
            stiffness: DVector::zeros(0),
        };
        let rest = model.segment_lengths(model.finger.rest_pose())?;
        for (i, path) in model.paths.iter().enumerate() {
            let frames = model.finger.forward_kinematics(model.finger.rest_pose())?;
            let pts: Vec<[f64; 3]> = path
                .iter()
                .map(|s| site_position(&frames, s))
                .collect::<Result<_>>()?;
            if pts.windows(2).any(|w| dist(&w[0], &w[1]) < 1e-9) {
                return Err(Error::DegenerateSegment { segment: i + 1 });
            }
        }
        let rest = DVector::from_vec(rest);
        model.stiffness = rest.map(|l| spring.ea / l);
        model.rest_branches = &model.matrices.c_bs * &rest;
        model.rest_tendons = &model.matrices.c_tb * &model.rest_branches;
        model.rest_segments = rest;
        Ok(model)
    }

    pub fn finger(&self) -> &FingerModel {
        &self.finger
    }
    pub fn graph(&self) -> &TendonGraph {
        &self.graph
    }
    pub fn matrices(&self) -> &ConnectionMatrices {
        &self.matrices
    }
    pub fn paths(&self) -> &[Vec<SitePoint>] {
        &self.paths
    }
    pub fn spring(&self) -> SpringModel {
        self.spring
    }
    pub fn n_joints(&self) -> usize {
        self.finger.joint_count()
    }
    pub fn n_muscles(&self) -> usize {
        self.matrices.n_m()
    }
    pub fn rest_segment_lengths(&self) -> &DVector<f64> {
        &self.rest_segments
    }
    pub fn rest_branch_lengths(&self) -> &DVector<f64> {
        &self.rest_branches
    }
    pub fn rest_tendon_lengths(&self) -> &DVector<f64> {
        &self.rest_tendons
    }
    /// Segment stiffnesses `k_i` (N/mm), segment order.
    pub fn stiffness(&self) -> &DVector<f64> {
        &self.stiffness
    }
    pub fn k_m(&self) -> DVector<f64> {
        self.stiffness.rows(0, self.matrices.n_m()).into_owned()
    }
    pub fn k_ct(&self) -> DVector<f64> {
        self.stiffness
            .rows(self.matrices.n_m(), self.matrices.n_ct())
            .into_owned()
    }

    /// Polyline length of every segment, auxiliary points included.
    pub fn segment_lengths<T: Scalar>(&self, theta: &[T]) -> Result<Vec<T>> {
        let frames = self.finger.forward_kinematics(theta)?;
        self.paths
            .iter()
            .map(|path| {
                let mut total = T::zero();
                let mut prev = site_position(&frames, &path[0])?;
                for site in &path[1..] {
                    let p = site_position(&frames, site)?;
                    let d = [p[0] - prev[0], p[1] - prev[1], p[2] - prev[2]];
                    total += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    prev = p;
                }
                Ok(total)
            })
            .collect()
    }

    /// Segment lengths and their Jacobian `dL_s/dθ` (n_s x n_θ).
    pub fn segment_jacobian(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = theta.len();
        let mut jac = DMatrix::zeros(self.graph.n_s(), n);
        let mut values = DVector::zeros(self.graph.n_s());
        if n == 0 {
            let l = self.segment_lengths(theta)?;
            return Ok((DVector::from_vec(l), jac));
        }
        for start in (0..n).step_by(DUAL_WIDTH) {
            let width = DUAL_WIDTH.min(n - start);
            let seeded: Vec<Dual> = theta
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    if (start..start + width).contains(&i) {
                        Dual::variable(t, i - start)
                    } else {
                        Dual::constant(t)
                    }
                })
                .collect();
            let lengths = self.segment_lengths(&seeded)?;
            for (s, l) in lengths.iter().enumerate() {
                values[s] = l.re;
                for k in 0..width {
                    jac[(s, start + k)] = l.eps[k];
                }
            }
        }
        Ok((values, jac))
    }

    /// `L_b = C_bs · L_s`.
    pub fn branch_lengths(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let ls = DVector::from_vec(self.segment_lengths(theta)?);
        Ok(&self.matrices.c_bs * ls)
    }

    /// `L_t = C_tb · L_b`.
    pub fn tendon_lengths(&self, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.matrices.c_tb * self.branch_lengths(theta)?)
    }

    /// `R = dL_t/dθ` (n_m x n_θ, mm/rad).
    pub fn moment_arm_matrix(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let (_, js) = self.segment_jacobian(theta)?;
        Ok(&self.matrices.c_tb * (&self.matrices.c_bs * js))
    }

    /// Tendon lengths together with the moment-arm matrix.
    pub fn tendon_lengths_and_moment_arms(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (ls, js) = self.segment_jacobian(theta)?;
        let ctbs = &self.matrices.c_tb * &self.matrices.c_bs;
        Ok((&ctbs * ls, ctbs * js))
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// The five-muscle, eighteen-segment long-finger network.
pub fn long_finger_graph() -> TendonGraph {
    use Vertex::{Junction as J, Muscle as M, Terminal as T};
    let edges = [
        (M(0), T(0)),
        (M(1), J(0)),
        (M(2), J(1)),
        (M(3), J(2)),
        (M(4), J(3)),
        (J(0), T(1)),
        (J(0), T(2)),
        (J(1), J(4)),
        (J(1), J(5)),
        (J(2), J(4)),
        (J(2), J(5)),
        (J(2), J(6)),
        (J(3), J(5)),
        (J(3), J(6)),
        (J(4), J(7)),
        (J(5), T(3)),
        (J(6), J(7)),
        (J(7), T(4)),
    ];
    TendonGraph {
        muscles: ["FDP", "FDS", "UI", "EDC", "LUM"].map(String::from).to_vec(),
        junctions: (1..=8).map(|i| format!("J{i}")).collect(),
        terminals: ["T_FDP", "T_FDS_U", "T_FDS_R", "T_CS", "T_TE"].map(String::from).to_vec(),
        segments: edges
            .iter()
            .enumerate()
            .map(|(i, &(from, to))| SegmentEdge { id: i + 1, from, to })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> TendonGraph {
        TendonGraph {
            muscles: vec!["M".into()],
            junctions: vec![],
            terminals: vec!["T".into()],
            segments: vec![SegmentEdge {
                id: 1,
                from: Vertex::Muscle(0),
                to: Vertex::Terminal(0),
            }],
        }
    }

    fn fan(n: usize) -> TendonGraph {
        let mut segments = vec![SegmentEdge {
            id: 1,
            from: Vertex::Muscle(0),
            to: Vertex::Junction(0),
        }];
        for t in 0..n {
            segments.push(SegmentEdge {
                id: t + 2,
                from: Vertex::Junction(0),
                to: Vertex::Terminal(t),
            });
        }
        TendonGraph {
            muscles: vec!["M".into()],
            junctions: vec!["J".into()],
            terminals: (0..n).map(|t| format!("T{t}")).collect(),
            segments,
        }
    }

    #[test]
    fn long_finger_graph_is_valid() {
        let report = validate_graph(&long_finger_graph());
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn trivial_junction_is_reported() {
        let mut g = fan(1);
        let report = validate_graph(&g);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::TrivialJunction);
        assert_eq!(report.violations[0].vertex, "J");
        g.segments.pop();
        assert!(!validate_graph(&g).is_valid());
    }

    #[test]
    fn starting_site_with_two_outgoing_segments_is_reported() {
        let mut g = single();
        g.terminals.push("T2".into());
        g.segments.push(SegmentEdge {
            id: 2,
            from: Vertex::Muscle(0),
            to: Vertex::Terminal(1),
        });
        let report = validate_graph(&g);
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::MuscleOutDegree(2) && v.vertex == "M"));
    }

    #[test]
    fn cycles_and_bad_ids_are_reported() {
        let mut g = fan(2);
        g.segments[1].to = Vertex::Junction(0);
        g.segments[2].id = 7;
        let report = validate_graph(&g);
        let kinds: Vec<_> = report.violations.iter().map(|v| v.kind.clone()).collect();
        assert!(kinds.contains(&ViolationKind::Cycle));
        assert!(kinds.contains(&ViolationKind::SegmentIdGap { expected: 3 }));
        assert!(matches!(count_branches(&g), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn small_counts() {
        let c = count_branches(&single()).unwrap();
        assert_eq!((c.n_b, c.n_j, c.n_ct, c.n_s, c.n_m), (1, 0, 0, 1, 1));
        let c = count_branches(&fan(3)).unwrap();
        assert_eq!((c.n_b, c.n_j, c.n_ct, c.n_s, c.n_m), (3, 1, 3, 4, 1));
        assert_eq!(enumerate_branches(&single()).unwrap()[0].segments, vec![1]);
    }

    #[test]
    fn diamond_fan_out_is_rejected_by_the_cross_check() {
        // Two muscles merge at J0 which then splits in two: 4 paths, formula 3.
        use Vertex::*;
        let g = TendonGraph {
            muscles: vec!["A".into(), "B".into()],
            junctions: vec!["J0".into()],
            terminals: vec!["T0".into(), "T1".into()],
            segments: vec![
                SegmentEdge { id: 1, from: Muscle(0), to: Junction(0) },
                SegmentEdge { id: 2, from: Muscle(1), to: Junction(0) },
                SegmentEdge { id: 3, from: Junction(0), to: Terminal(0) },
                SegmentEdge { id: 4, from: Junction(0), to: Terminal(1) },
            ],
        };
        assert!(validate_graph(&g).is_valid());
        assert!(matches!(
            count_branches(&g),
            Err(Error::BranchCount { enumerated: 4, formula: 3 })
        ));
    }

    #[test]
    fn connection_matrix_partitions() {
        let m = build_connection_matrices(&long_finger_graph()).unwrap();
        assert_eq!(m.c_bm().shape(), (10, 5));
        assert_eq!(m.c_bct().shape(), (10, 13));
        assert_eq!(m.c_jm().shape(), (8, 5));
        assert_eq!(m.c_jct().shape(), (8, 13));
        for j in 0..m.c_js.ncols() {
            let col = m.c_js.column(j);
            assert!(col.iter().filter(|v| **v == -1.0).count() <= 1);
            assert!(col.iter().filter(|v| **v == 1.0).count() <= 1);
        }
        for r in 0..m.c_tb.nrows() {
            assert!((m.c_tb.row(r).sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matrix_csv_formats_integers_and_fractions() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 1.0 / 3.0]);
        let csv = matrix_csv(&m, &["r".into()], &["a".into(), "b".into()]);
        assert_eq!(csv, "row,a,b\nr,1,0.333333333333\n");
    }
}
