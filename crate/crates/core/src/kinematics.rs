//! Denavit-Hartenberg finger chains built from irregular 3-DoF joints.
//!
//! Every joint contributes up to six DH rows: a fixed block carrying the
//! yaw and pitch offsets (with the free roll rotation in between) followed
//! by a block carrying the free yaw and pitch rotations and the link length.
//! Missing yaw rotations and missing yaw offsets drop the corresponding
//! `Rx(90°)·Rx(-90°)` row pair; rows left with a structural zero twist are
//! then fused with a following row whose angle is a structural zero.
//! The resulting tables coincide with the published long-finger and thumb
//! tables.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use crate::dual::Scalar;
use crate::error::{Error, Result};

/// Angle slot of a DH row.
#[derive(Debug, Clone, PartialEq)]
pub enum DhEntry {
    /// A constant angle. `Fixed(0.0)` marks a structurally absent rotation.
    Fixed(f64),
    /// A named anatomical offset (constant, but carried by name).
    Offset { name: String, value: f64 },
    /// Bound to a free joint variable.
    Joint(String),
}

impl DhEntry {
    fn is_structural_zero(&self) -> bool {
        matches!(self, DhEntry::Fixed(v) if *v == 0.0)
    }

    pub fn joint_name(&self) -> Option<&str> {
        match self {
            DhEntry::Joint(name) => Some(name),
            _ => None,
        }
    }

    fn constant(&self) -> Option<f64> {
        match self {
            DhEntry::Fixed(v) => Some(*v),
            DhEntry::Offset { value, .. } => Some(*value),
            DhEntry::Joint(_) => None,
        }
    }
}

/// One row `Rz(theta)·Tz(d)·Tx(a)·Rx(alpha)` of a DH table (lengths in mm).
#[derive(Debug, Clone, PartialEq)]
pub struct DhRow {
    /// Row label as it appears in the generic table (`P1`, `P2`, `1`, `2`, ...).
    pub label: String,
    pub d: f64,
    pub theta: DhEntry,
    pub a: f64,
    pub alpha: DhEntry,
    /// Bone whose distal end this row reaches, if the row carries a link length.
    pub bone: Option<String>,
}

impl DhRow {
    pub fn fixed(label: &str, d: f64, theta: f64, a: f64, alpha: f64) -> Self {
        DhRow {
            label: label.to_string(),
            d,
            theta: DhEntry::Fixed(theta),
            a,
            alpha: DhEntry::Fixed(alpha),
            bone: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.theta.joint_name().is_some() && self.alpha.joint_name().is_some() {
            return Err(Error::config(format!(
                "DH row {} binds both theta and alpha to joints",
                self.label
            )));
        }
        let finite = [self.d, self.a]
            .into_iter()
            .chain(self.theta.constant())
            .chain(self.alpha.constant())
            .all(f64::is_finite);
        if !finite {
            return Err(Error::config(format!(
                "DH row {} has a non-finite entry",
                self.label
            )));
        }
        Ok(())
    }
}

/// Rigid transform stored as a rotation block and a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform<T> {
    pub rotation: [[T; 3]; 3],
    pub translation: [T; 3],
}

impl<T: Scalar> Transform<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::from_f64(1.0), T::zero());
        Transform {
            rotation: [[o, z, z], [z, o, z], [z, z, o]],
            translation: [z; 3],
        }
    }

    /// `Rz(theta)·Tz(d)·Tx(a)·Rx(alpha)`.
    pub fn dh(d: f64, theta: T, a: f64, alpha: T) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sa, ca) = alpha.sin_cos();
        Transform {
            rotation: [
                [ct, -(st * ca), st * sa],
                [st, ct * ca, -(ct * sa)],
                [T::zero(), sa, ca],
            ],
            translation: [ct * a, st * a, T::from_f64(d)],
        }
    }

    pub fn compose(&self, rhs: &Transform<T>) -> Transform<T> {
        let mut rotation = [[T::zero(); 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, out) in row.iter_mut().enumerate() {
                *out = self.rotation[i][0] * rhs.rotation[0][j]
                    + self.rotation[i][1] * rhs.rotation[1][j]
                    + self.rotation[i][2] * rhs.rotation[2][j];
            }
        }
        Transform {
            rotation,
            translation: self.apply_t(&rhs.translation),
        }
    }

    fn apply_t(&self, p: &[T; 3]) -> [T; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }

    /// Maps a point given in this frame to the parent frame.
    pub fn apply(&self, p: &[f64; 3]) -> [T; 3] {
        let r = &self.rotation;
        let mut out = self.translation;
        for (i, o) in out.iter_mut().enumerate() {
            *o += r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2];
        }
        out
    }

    pub fn value(&self) -> Transform<f64> {
        Transform {
            rotation: self.rotation.map(|row| row.map(|v| v.value())),
            translation: self.translation.map(|v| v.value()),
        }
    }
}

/// Ordered joint-variable names; the index of a name is its slot in a joint vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointMap {
    names: Vec<String>,
}

impl JointMap {
    pub fn new(names: Vec<String>) -> Self {
        JointMap { names }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn resolve<T: Scalar>(entry: &DhEntry, joints: &JointMap, values: &[T]) -> Result<T> {
    match entry {
        DhEntry::Fixed(v) | DhEntry::Offset { value: v, .. } => Ok(T::from_f64(*v)),
        DhEntry::Joint(name) => joints
            .index_of(name)
            .and_then(|i| values.get(i).copied())
            .ok_or_else(|| Error::UnknownJoint(name.clone())),
    }
}

/// Homogeneous transform of a single row with its joint-bound entries taken from `values`.
pub fn dh_transform<T: Scalar>(row: &DhRow, joints: &JointMap, values: &[T]) -> Result<Transform<T>> {
    let theta = resolve(&row.theta, joints, values)?;
    let alpha = resolve(&row.alpha, joints, values)?;
    Ok(Transform::dh(row.d, theta, row.a, alpha))
}

/// Which of the three rotations a joint can perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DofMask {
    pub roll: bool,
    pub yaw: bool,
    pub pitch: bool,
}

impl DofMask {
    pub const NONE: DofMask = DofMask {
        roll: false,
        yaw: false,
        pitch: false,
    };
    pub const FULL: DofMask = DofMask {
        roll: true,
        yaw: true,
        pitch: true,
    };
    pub const PITCH: DofMask = DofMask {
        roll: false,
        yaw: false,
        pitch: true,
    };
    pub const YAW_PITCH: DofMask = DofMask {
        roll: false,
        yaw: true,
        pitch: true,
    };

    pub fn count(&self) -> usize {
        [self.roll, self.yaw, self.pitch].iter().filter(|b| **b).count()
    }
}

/// One joint of a chain together with the link that follows it. Angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    /// Joint name (`MCP`, `PIP`, ...); free rotations are named `"<name> Roll"` etc.
    pub name: String,
    /// Bone distal to the joint (`MC`, `PP`, ...).
    pub bone: String,
    pub dof: DofMask,
    /// `None` marks an offset that is absent from the table.
    pub roll_offset: Option<f64>,
    pub yaw_offset: Option<f64>,
    pub pitch_offset: Option<f64>,
    pub link_length: f64,
}

/// Description of a serial chain with `n = joints.len()` links.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub name: String,
    /// Position of the first joint (mm).
    pub origin: [f64; 3],
    pub joints: Vec<JointSpec>,
}

impl ChainSpec {
    /// Suspicious-but-legal combinations: a joint with free rotations but no
    /// pitch that still carries a nonzero pitch offset.
    pub fn warnings(&self) -> Vec<String> {
        self.joints
            .iter()
            .filter(|j| j.dof.count() > 0 && !j.dof.pitch)
            .filter(|j| j.pitch_offset.is_some_and(|v| v != 0.0))
            .map(|j| format!("{}: pitch offset set on a joint without free pitch", j.name))
            .collect()
    }
}

/// Finger variants with fixed joint layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FingerKind {
    Long,
    Thumb,
    Generic,
}

/// Anatomical parameters of a finger (angles in radians, lengths in mm).
#[derive(Debug, Clone, PartialEq)]
pub struct FingerParams {
    pub name: String,
    pub origin: [f64; 3],
    /// Offsets per joint name, `[roll, yaw, pitch]`.
    pub offsets: BTreeMap<String, [f64; 3]>,
    pub link_lengths: BTreeMap<String, f64>,
    pub joint_limits: BTreeMap<String, (f64, f64)>,
    pub rest_pose: BTreeMap<String, f64>,
}

/// A site point rigidly attached to one of the model's frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SitePoint {
    pub frame_index: usize,
    pub local_position: [f64; 3],
    pub is_auxiliary: bool,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Const(f64),
    Joint(usize),
}

impl Slot {
    #[inline]
    fn get<T: Scalar>(self, values: &[T]) -> T {
        match self {
            Slot::Const(v) => T::from_f64(v),
            Slot::Joint(i) => values[i],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct CompiledRow {
    d: f64,
    a: f64,
    theta: Slot,
    alpha: Slot,
}

/// An immutable finger chain.
#[derive(Debug, Clone)]
pub struct FingerModel {
    name: String,
    kind: FingerKind,
    rows: Vec<DhRow>,
    compiled: Vec<CompiledRow>,
    joints: JointMap,
    frame_aliases: BTreeMap<String, usize>,
    link_lengths: BTreeMap<String, f64>,
    origin: [f64; 3],
    limits: Vec<(f64, f64)>,
    rest_pose: Vec<f64>,
}

impl FingerModel {
    /// Assembles a model from explicit rows. Joint variables are numbered in
    /// order of first appearance; limits default to `[-pi, pi]` and the rest
    /// pose to zero.
    pub fn from_rows(name: &str, kind: FingerKind, origin: [f64; 3], rows: Vec<DhRow>) -> Result<Self> {
        let mut names = Vec::new();
        for row in &rows {
            row.check()?;
            for entry in [&row.theta, &row.alpha] {
                if let Some(j) = entry.joint_name() {
                    if names.iter().any(|n| n == j) {
                        return Err(Error::config(format!("joint `{j}` bound by more than one DH entry")));
                    }
                    names.push(j.to_string());
                }
            }
        }
        let joints = JointMap::new(names);
        let slot = |e: &DhEntry| match e {
            DhEntry::Joint(n) => Slot::Joint(joints.index_of(n).expect("collected above")),
            other => Slot::Const(other.constant().expect("non-joint entry")),
        };
        let compiled = rows
            .iter()
            .map(|r| CompiledRow {
                d: r.d,
                a: r.a,
                theta: slot(&r.theta),
                alpha: slot(&r.alpha),
            })
            .collect();
        let mut frame_aliases = BTreeMap::new();
        frame_aliases.insert("base".to_string(), 0);
        let mut link_lengths = BTreeMap::new();
        for (i, row) in rows.iter().enumerate() {
            if let Some(bone) = &row.bone {
                frame_aliases.insert(bone.clone(), i + 1);
                link_lengths.insert(bone.clone(), row.a);
            }
        }
        let n = joints.len();
        Ok(FingerModel {
            name: name.to_string(),
            kind,
            rows,
            compiled,
            joints,
            frame_aliases,
            link_lengths,
            origin,
            limits: vec![(-std::f64::consts::PI, std::f64::consts::PI); n],
            rest_pose: vec![0.0; n],
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn kind(&self) -> FingerKind {
        self.kind
    }
    pub fn rows(&self) -> &[DhRow] {
        &self.rows
    }
    pub fn joints(&self) -> &JointMap {
        &self.joints
    }
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }
    pub fn joint_limits(&self) -> &[(f64, f64)] {
        &self.limits
    }
    pub fn rest_pose(&self) -> &[f64] {
        &self.rest_pose
    }
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }
    pub fn link_lengths(&self) -> &BTreeMap<String, f64> {
        &self.link_lengths
    }
    /// Number of frames returned by [`FingerModel::forward_kinematics`].
    pub fn frame_count(&self) -> usize {
        self.rows.len() + 1
    }

    /// Frame index for `base` or a bone name (`MC`, `PP`, `MP`, `DP`).
    pub fn frame_index(&self, alias: &str) -> Option<usize> {
        self.frame_aliases.get(alias).copied()
    }

    pub fn frame_aliases(&self) -> &BTreeMap<String, usize> {
        &self.frame_aliases
    }

    /// Frame of the most distal bone; its origin is the fingertip.
    pub fn tip_frame(&self) -> usize {
        self.rows
            .iter()
            .rposition(|r| r.bone.is_some())
            .map_or(self.rows.len(), |i| i + 1)
    }

    /// Sets limits and rest pose; the rest pose must lie inside the limits.
    pub fn with_limits(mut self, limits: Vec<(f64, f64)>, rest_pose: Vec<f64>) -> Result<Self> {
        let n = self.joint_count();
        if limits.len() != n {
            return Err(Error::Dimension {
                what: "joint limits",
                expected: n,
                got: limits.len(),
            });
        }
        if rest_pose.len() != n {
            return Err(Error::Dimension {
                what: "rest pose",
                expected: n,
                got: rest_pose.len(),
            });
        }
        for (i, ((lo, hi), r)) in limits.iter().zip(&rest_pose).enumerate() {
            if !(lo <= r && r <= hi) {
                return Err(Error::config(format!(
                    "{}: rest pose of `{}` ({r}) outside limits [{lo}, {hi}]",
                    self.name,
                    self.joints.names()[i]
                )));
            }
        }
        self.limits = limits;
        self.rest_pose = rest_pose;
        Ok(self)
    }

    pub fn clamp_to_limits(&self, theta: &mut [f64]) {
        for (t, (lo, hi)) in theta.iter_mut().zip(&self.limits) {
            *t = t.clamp(*lo, *hi);
        }
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.joint_count() {
            return Err(Error::Dimension {
                what: "joint vector",
                expected: self.joint_count(),
                got,
            });
        }
        Ok(())
    }

    /// World frames at every row boundary; `frames[0]` is the base (identity).
    pub fn forward_kinematics<T: Scalar>(&self, theta: &[T]) -> Result<Vec<Transform<T>>> {
        self.check_len(theta.len())?;
        let mut frames = Vec::with_capacity(self.compiled.len() + 1);
        let mut current = Transform::identity();
        frames.push(current);
        for row in &self.compiled {
            let step = Transform::dh(row.d, row.theta.get(theta), row.a, row.alpha.get(theta));
            current = current.compose(&step);
            frames.push(current);
        }
        Ok(frames)
    }

    pub fn site_world_position(&self, theta: &[f64], site: &SitePoint) -> Result<[f64; 3]> {
        let frames = self.forward_kinematics(theta)?;
        site_position(&frames, site)
    }

    pub fn fingertip(&self, theta: &[f64]) -> Result<[f64; 3]> {
        let frames = self.forward_kinematics(theta)?;
        Ok(frames[self.tip_frame()].translation)
    }
}

/// World position of `site` given precomputed frames.
pub fn site_position<T: Scalar>(frames: &[Transform<T>], site: &SitePoint) -> Result<[T; 3]> {
    let frame = frames.get(site.frame_index).ok_or(Error::InvalidFrame {
        index: site.frame_index,
        count: frames.len(),
    })?;
    Ok(frame.apply(&site.local_position))
}

fn joint_entry(present: bool, name: String) -> DhEntry {
    if present {
        DhEntry::Joint(name)
    } else {
        DhEntry::Fixed(0.0)
    }
}

fn offset_entry(value: Option<f64>, name: String) -> DhEntry {
    match value {
        Some(value) => DhEntry::Offset { name, value },
        None => DhEntry::Fixed(0.0),
    }
}

/// Rows of the generic table before any removal, with their table indices.
fn full_rows(spec: &ChainSpec) -> Vec<(usize, DhRow)> {
    let n = spec.joints.len();
    let [xo, yo, zo] = spec.origin;
    let first = &spec.joints[0];
    let mut rows = vec![
        (0, DhRow::fixed("P1", zo, 0.0, xo, -FRAC_PI_2)),
        (
            0,
            DhRow {
                label: "P2".into(),
                d: yo,
                theta: DhEntry::Fixed(-FRAC_PI_2),
                a: 0.0,
                alpha: offset_entry(first.roll_offset, format!("{} Roll Offset", first.name)),
                bone: None,
            },
        ),
    ];
    for (k0, joint) in spec.joints.iter().enumerate() {
        let k = k0 + 1;
        let base = 6 * k;
        let row = |i: usize, theta: DhEntry, a: f64, alpha: DhEntry| {
            (
                i,
                DhRow {
                    label: i.to_string(),
                    d: 0.0,
                    theta,
                    a,
                    alpha,
                    bone: None,
                },
            )
        };
        let jn = &joint.name;
        rows.push(row(
            base - 5,
            offset_entry(joint.yaw_offset, format!("{jn} Yaw Offset")),
            0.0,
            DhEntry::Fixed(-FRAC_PI_2),
        ));
        rows.push(row(
            base - 4,
            offset_entry(joint.pitch_offset, format!("{jn} Pitch Offset")),
            0.0,
            joint_entry(joint.dof.roll, format!("{jn} Roll")),
        ));
        rows.push(row(base - 3, DhEntry::Fixed(0.0), 0.0, DhEntry::Fixed(FRAC_PI_2)));
        rows.push(row(
            base - 2,
            joint_entry(joint.dof.yaw, format!("{jn} Yaw")),
            0.0,
            DhEntry::Fixed(-FRAC_PI_2),
        ));
        let next_roll = if k < n {
            let next = &spec.joints[k];
            offset_entry(next.roll_offset, format!("{} Roll Offset", next.name))
        } else {
            DhEntry::Fixed(0.0)
        };
        let mut link = row(
            base - 1,
            joint_entry(joint.dof.pitch, format!("{jn} Pitch")),
            joint.link_length,
            next_roll,
        );
        link.1.bone = Some(joint.bone.clone());
        rows.push(link);
        if k < n {
            rows.push(row(base, DhEntry::Fixed(0.0), 0.0, DhEntry::Fixed(FRAC_PI_2)));
        }
    }
    rows
}

/// Table indices dropped by the row-removal convention.
fn removed_rows(spec: &ChainSpec) -> Vec<usize> {
    let mut removed = Vec::new();
    for (k0, joint) in spec.joints.iter().enumerate() {
        let k = k0 + 1;
        if k >= 2 && joint.yaw_offset.is_none() {
            removed.extend([6 * k - 6, 6 * k - 5]);
        }
        if !joint.dof.yaw {
            removed.extend([6 * k - 3, 6 * k - 2]);
        }
    }
    removed
}

/// Fuses `A` and `B` when `A` has no twist and `B` has no angle or offset along z.
fn fuse_rows(rows: Vec<DhRow>) -> Vec<DhRow> {
    let mut out: Vec<DhRow> = Vec::with_capacity(rows.len());
    for row in rows {
        if let Some(prev) = out.last_mut() {
            let fusable = prev.alpha.is_structural_zero()
                && row.theta.is_structural_zero()
                && row.d == 0.0
                && !(prev.bone.is_some() && row.bone.is_some());
            if fusable {
                prev.a += row.a;
                prev.alpha = row.alpha;
                prev.bone = prev.bone.take().or(row.bone);
                continue;
            }
        }
        out.push(row);
    }
    out
}

/// DH rows of a chain after row removal and fusion.
pub fn chain_rows(spec: &ChainSpec) -> Result<Vec<DhRow>> {
    if spec.joints.is_empty() {
        return Err(Error::config(format!("{}: chain needs at least one link", spec.name)));
    }
    for j in &spec.joints {
        if !(j.link_length > 0.0) || !j.link_length.is_finite() {
            return Err(Error::NonPositiveLink {
                name: j.bone.clone(),
                length: j.link_length,
            });
        }
        let finite = [j.roll_offset, j.yaw_offset, j.pitch_offset]
            .into_iter()
            .flatten()
            .all(f64::is_finite);
        if !finite {
            return Err(Error::config(format!("{}: non-finite offset", j.name)));
        }
    }
    if !spec.origin.iter().all(|v| v.is_finite()) {
        return Err(Error::config(format!("{}: non-finite origin", spec.name)));
    }
    let removed = removed_rows(spec);
    let kept = full_rows(spec)
        .into_iter()
        .filter(|(i, _)| *i == 0 || !removed.contains(i))
        .map(|(_, r)| r)
        .collect();
    Ok(fuse_rows(kept))
}

/// Builds a chain from the generic table.
pub fn build_generic_chain(spec: &ChainSpec) -> Result<FingerModel> {
    FingerModel::from_rows(&spec.name, FingerKind::Generic, spec.origin, chain_rows(spec)?)
}

fn lookup<'a, V>(map: &'a BTreeMap<String, V>, key: &str, finger: &str, what: &str) -> Result<&'a V> {
    map.get(key)
        .ok_or_else(|| Error::config(format!("{finger}: missing {what} for `{key}`")))
}

fn finish(model: FingerModel, params: &FingerParams) -> Result<FingerModel> {
    let mut limits = Vec::new();
    let mut rest = Vec::new();
    for name in model.joints().names() {
        limits.push(*lookup(&params.joint_limits, name, &params.name, "joint limits")?);
        rest.push(*lookup(&params.rest_pose, name, &params.name, "rest pose")?);
    }
    for key in params.joint_limits.keys().chain(params.rest_pose.keys()) {
        if model.joints().index_of(key).is_none() {
            return Err(Error::UnknownJoint(key.clone()));
        }
    }
    model.with_limits(limits, rest)
}

/// Long finger: fixed CMC, 3-DoF MCP, 1-DoF PIP and DIP (5 free joints).
pub fn build_long_finger(params: &FingerParams) -> Result<FingerModel> {
    let name = &params.name;
    let offs = |j: &str| lookup(&params.offsets, j, name, "offsets").copied();
    let len = |b: &str| lookup(&params.link_lengths, b, name, "link length").copied();
    let (cmc, mcp, pip, dip) = (offs("CMC")?, offs("MCP")?, offs("PIP")?, offs("DIP")?);
    let spec = ChainSpec {
        name: name.clone(),
        origin: params.origin,
        joints: vec![
            JointSpec {
                name: "CMC".into(),
                bone: "MC".into(),
                dof: DofMask::NONE,
                roll_offset: Some(cmc[0]),
                yaw_offset: Some(cmc[1]),
                pitch_offset: Some(cmc[2]),
                link_length: len("MC")?,
            },
            JointSpec {
                name: "MCP".into(),
                bone: "PP".into(),
                dof: DofMask::FULL,
                roll_offset: Some(mcp[0]),
                yaw_offset: Some(mcp[1]),
                pitch_offset: Some(mcp[2]),
                link_length: len("PP")?,
            },
            JointSpec {
                name: "PIP".into(),
                bone: "MP".into(),
                dof: DofMask::PITCH,
                roll_offset: Some(pip[0]),
                yaw_offset: None,
                pitch_offset: Some(pip[2]),
                link_length: len("MP")?,
            },
            JointSpec {
                name: "DIP".into(),
                bone: "DP".into(),
                dof: DofMask::PITCH,
                roll_offset: Some(dip[0]),
                yaw_offset: None,
                pitch_offset: Some(dip[2]),
                link_length: len("DP")?,
            },
        ],
    };
    if pip[1] != 0.0 || dip[1] != 0.0 {
        return Err(Error::config(format!("{name}: long fingers carry no PIP/DIP yaw offset")));
    }
    let model = FingerModel::from_rows(name, FingerKind::Long, params.origin, chain_rows(&spec)?)?;
    finish(model, params)
}

/// Thumb: 2-DoF TCMC, 3-DoF MCP, 1-DoF IP (6 free joints).
pub fn build_thumb(params: &FingerParams) -> Result<FingerModel> {
    let name = &params.name;
    let offs = |j: &str| lookup(&params.offsets, j, name, "offsets").copied();
    let len = |b: &str| lookup(&params.link_lengths, b, name, "link length").copied();
    let (tcmc, mcp, ip) = (offs("TCMC")?, offs("MCP")?, offs("IP")?);
    if mcp[1] != 0.0 || ip[1] != 0.0 {
        return Err(Error::config(format!("{name}: the thumb carries no MCP/IP yaw offset")));
    }
    let spec = ChainSpec {
        name: name.clone(),
        origin: params.origin,
        joints: vec![
            JointSpec {
                name: "TCMC".into(),
                bone: "MC".into(),
                dof: DofMask::YAW_PITCH,
                roll_offset: Some(tcmc[0]),
                yaw_offset: Some(tcmc[1]),
                pitch_offset: Some(tcmc[2]),
                link_length: len("MC")?,
            },
            JointSpec {
                name: "MCP".into(),
                bone: "PP".into(),
                dof: DofMask::FULL,
                roll_offset: Some(mcp[0]),
                yaw_offset: None,
                pitch_offset: Some(mcp[2]),
                link_length: len("PP")?,
            },
            JointSpec {
                name: "IP".into(),
                bone: "DP".into(),
                dof: DofMask::PITCH,
                roll_offset: Some(ip[0]),
                yaw_offset: None,
                pitch_offset: Some(ip[2]),
                link_length: len("DP")?,
            },
        ],
    };
    let model = FingerModel::from_rows(name, FingerKind::Thumb, params.origin, chain_rows(&spec)?)?;
    finish(model, params)
}

/// True for the distal pitch joints (`DIP Pitch`, `IP Pitch`).
pub fn is_distal_pitch(joint_name: &str) -> bool {
    joint_name == "DIP Pitch" || joint_name == "IP Pitch"
}
