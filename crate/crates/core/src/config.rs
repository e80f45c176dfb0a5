//! JSON description files: hand geometry, tendon networks and gestures.
//!
//! Angles are given in degrees and converted to radians on load. All
//! structures reject unknown keys.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{build_long_finger, build_thumb, FingerModel, FingerParams, SitePoint};
use crate::tendon_model::{SegmentEdge, SpringModel, TendonGraph, TendonModel, Vertex, DEFAULT_EA};

pub const DEFAULT_HAND: &str = include_str!("../data/default_hand.json");
pub const DEFAULT_TENDONS: &str = include_str!("../data/default_tendons.json");
pub const DEFAULT_GESTURES: &str = include_str!("../data/default_gestures.json");

pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        path: origin.to_string(),
        source,
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_json(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerKindEntry {
    Long,
    Thumb,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetEntry {
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteEntry {
    /// `base` or a bone name.
    pub frame: String,
    pub local_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub auxiliary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerEntry {
    pub name: String,
    pub kind: FingerKindEntry,
    pub origin_mm: [f64; 3],
    pub offsets_deg: BTreeMap<String, OffsetEntry>,
    pub link_lengths_mm: BTreeMap<String, f64>,
    pub joint_limits_deg: BTreeMap<String, [f64; 2]>,
    pub rest_pose_deg: BTreeMap<String, f64>,
    #[serde(default)]
    pub sites: BTreeMap<String, SiteEntry>,
}

impl FingerEntry {
    pub fn params(&self) -> FingerParams {
        let rad = f64::to_radians;
        FingerParams {
            name: self.name.clone(),
            origin: self.origin_mm,
            offsets: self
                .offsets_deg
                .iter()
                .map(|(k, o)| (k.clone(), [rad(o.roll), rad(o.yaw), rad(o.pitch)]))
                .collect(),
            link_lengths: self.link_lengths_mm.clone(),
            joint_limits: self
                .joint_limits_deg
                .iter()
                .map(|(k, [lo, hi])| (k.clone(), (rad(*lo), rad(*hi))))
                .collect(),
            rest_pose: self.rest_pose_deg.iter().map(|(k, v)| (k.clone(), rad(*v))).collect(),
        }
    }

    pub fn build(&self) -> Result<FingerModel> {
        let params = self.params();
        match self.kind {
            FingerKindEntry::Long => build_long_finger(&params),
            FingerKindEntry::Thumb => build_thumb(&params),
        }
    }

    pub fn site(&self, model: &FingerModel, name: &str) -> Result<SitePoint> {
        let entry = self
            .sites
            .get(name)
            .ok_or_else(|| Error::config(format!("{}: unknown site `{name}`", self.name)))?;
        let frame_index = model.frame_index(&entry.frame).ok_or_else(|| {
            Error::config(format!("{}: site `{name}` uses unknown frame `{}`", self.name, entry.frame))
        })?;
        Ok(SitePoint {
            frame_index,
            local_position: entry.local_mm,
            is_auxiliary: entry.auxiliary,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandFile {
    #[serde(default)]
    pub note: Option<String>,
    pub fingers: Vec<FingerEntry>,
}

impl HandFile {
    pub fn embedded() -> Result<Self> {
        parse_json(DEFAULT_HAND, "default_hand.json")
    }

    pub fn finger(&self, name: &str) -> Result<&FingerEntry> {
        self.fingers
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::config(format!("hand has no finger `{name}`")))
    }

    /// Builds every finger, collecting all problems.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for f in &self.fingers {
            match f.build() {
                Ok(model) => {
                    for (name, site) in &f.sites {
                        if model.frame_index(&site.frame).is_none() {
                            problems.push(format!("{}: site `{name}` uses unknown frame `{}`", f.name, site.frame));
                        }
                    }
                }
                Err(e) => problems.push(format!("{}: {e}", f.name)),
            }
        }
        problems
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub id: usize,
    pub from: String,
    pub to: String,
    /// Intermediate site names between the two vertex sites.
    #[serde(default)]
    pub via: Vec<String>,
}

/// A tendon network. Each vertex is routed through the site of the same
/// name in the finger's site table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TendonFile {
    #[serde(default)]
    pub note: Option<String>,
    /// Fingers this network is instantiated on.
    pub fingers: Vec<String>,
    #[serde(default = "default_ea")]
    pub ea_n: f64,
    pub muscles: Vec<String>,
    pub junctions: Vec<String>,
    pub terminals: Vec<String>,
    pub segments: Vec<SegmentEntry>,
}

fn default_ea() -> f64 {
    DEFAULT_EA
}

impl TendonFile {
    pub fn embedded() -> Result<Self> {
        parse_json(DEFAULT_TENDONS, "default_tendons.json")
    }

    fn vertex(&self, name: &str) -> Result<Vertex> {
        let pos = |list: &[String]| list.iter().position(|n| n == name);
        pos(&self.muscles)
            .map(Vertex::Muscle)
            .or_else(|| pos(&self.junctions).map(Vertex::Junction))
            .or_else(|| pos(&self.terminals).map(Vertex::Terminal))
            .ok_or_else(|| Error::config(format!("segment endpoint `{name}` is not a declared vertex")))
    }

    pub fn graph(&self) -> Result<TendonGraph> {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                Ok(SegmentEdge {
                    id: s.id,
                    from: self.vertex(&s.from)?,
                    to: self.vertex(&s.to)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(TendonGraph {
            muscles: self.muscles.clone(),
            junctions: self.junctions.clone(),
            terminals: self.terminals.clone(),
            segments,
        })
    }

    /// Binds the network to one finger of `hand`.
    pub fn bind(&self, hand: &HandFile, finger: &str) -> Result<TendonModel> {
        let entry = hand.finger(finger)?;
        let model = entry.build()?;
        let graph = self.graph()?;
        let mut ordered: Vec<&SegmentEntry> = self.segments.iter().collect();
        ordered.sort_by_key(|s| s.id);
        let paths = ordered
            .iter()
            .map(|s| {
                std::iter::once(&s.from)
                    .chain(&s.via)
                    .chain(std::iter::once(&s.to))
                    .map(|name| entry.site(&model, name))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        TendonModel::new(model, graph, paths, SpringModel { ea: self.ea_n })
    }
}

/// One named target posture; joint values per finger in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureEntry {
    pub name: String,
    #[serde(default)]
    pub label: Option<String>,
    pub joints_deg: BTreeMap<String, BTreeMap<String, f64>>,
    /// Recorded per-muscle coil lengths (mm) for data-assisted feedforward.
    #[serde(default)]
    pub recorded_delta_l_mm: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureFile {
    #[serde(default)]
    pub note: Option<String>,
    pub gestures: Vec<GestureEntry>,
}

impl GestureFile {
    pub fn embedded() -> Result<Self> {
        parse_json(DEFAULT_GESTURES, "default_gestures.json")
    }

    pub fn get(&self, name: &str) -> Option<&GestureEntry> {
        self.gestures.iter().find(|g| g.name == name)
    }
}

impl GestureEntry {
    /// Joint vector for `model`; joints not listed keep their rest value.
    pub fn joint_vector(&self, model: &FingerModel) -> Result<Vec<f64>> {
        let mut theta = model.rest_pose().to_vec();
        if let Some(values) = self.joints_deg.get(model.name()) {
            for (joint, deg) in values {
                let i = model
                    .joints()
                    .index_of(joint)
                    .ok_or_else(|| Error::UnknownJoint(format!("{} (gesture {})", joint, self.name)))?;
                theta[i] = deg.to_radians();
            }
        }
        for (i, (t, (lo, hi))) in theta.iter().zip(model.joint_limits()).enumerate() {
            if t < lo || t > hi {
                return Err(Error::config(format!(
                    "gesture {}: {} {} = {:.2} deg outside limits",
                    self.name,
                    model.name(),
                    model.joints().names()[i],
                    t.to_degrees()
                )));
            }
        }
        Ok(theta)
    }
}
