//! Skeleton topologies: joint naming, symmetric pairs, axial joints, and the
//! row order of the paired-joint grid.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of the grid: a left/right pair, or an axial joint that fills both
/// halves of the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridEntry {
    Pair { left: usize, right: usize },
    Axial(usize),
}

impl GridEntry {
    /// Joints stored in the first and second half of the row.
    pub fn halves(&self) -> (usize, usize) {
        match *self {
            GridEntry::Pair { left, right } => (left, right),
            GridEntry::Axial(j) => (j, j),
        }
    }
}

/// On-disk topology description. Joints are referenced by name.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopologyFile {
    #[serde(default)]
    pub name: Option<String>,
    pub joints: Vec<String>,
    pub pairs: Vec<[String; 2]>,
    pub axial: Vec<String>,
    /// One joint name per grid row; a paired joint names its pair's row.
    pub grid_order: Vec<String>,
    #[serde(default)]
    pub head_pair: Option<[String; 2]>,
    /// For a reduced topology: reduced joint name → full topology joint name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downsample_map: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    name: String,
    joint_names: Vec<String>,
    pairs: Vec<(usize, usize)>,
    axial: Vec<usize>,
    grid_order: Vec<GridEntry>,
    head_pair: Option<(usize, usize)>,
    downsample_map: Option<BTreeMap<String, String>>,
}

const MPI_INF_3DHP_28: &str = include_str!("../assets/mpi_inf_3dhp_28.json");
const COARSE_12: &str = include_str!("../assets/coarse_12.json");

impl SkeletonTopology {
    /// The 28-joint full-resolution skeleton.
    pub fn mpi_inf_3dhp_28() -> Self {
        Self::from_json(MPI_INF_3DHP_28).expect("bundled 28-joint topology is valid")
    }

    /// The 12-joint limb skeleton shared by common 2D pose estimators.
    pub fn coarse_12() -> Self {
        Self::from_json(COARSE_12).expect("bundled 12-joint topology is valid")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "mpi_inf_3dhp_28" => Some(Self::mpi_inf_3dhp_28()),
            "coarse_12" => Some(Self::coarse_12()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TopologyFile =
            serde_json::from_str(text).map_err(|e| Error::Topology(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TopologyFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        Self::from_file(file)
    }

    pub fn from_file(file: TopologyFile) -> Result<Self> {
        let mut ids = HashMap::new();
        for (i, name) in file.joints.iter().enumerate() {
            if ids.insert(name.as_str(), i).is_some() {
                return Err(Error::Topology(format!("duplicate joint name {name:?}")));
            }
        }
        let lookup = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::Topology(format!("unknown joint {name:?}")))
        };

        let mut seen = HashSet::new();
        let mut claim = |j: usize| {
            if seen.insert(j) {
                Ok(())
            } else {
                Err(Error::Topology(format!(
                    "joint {:?} appears in more than one pair/axial slot",
                    file.joints[j]
                )))
            }
        };
        let mut pairs = Vec::with_capacity(file.pairs.len());
        let mut pair_of = HashMap::new();
        for [l, r] in &file.pairs {
            let (l, r) = (lookup(l)?, lookup(r)?);
            claim(l)?;
            claim(r)?;
            pair_of.insert(l, pairs.len());
            pair_of.insert(r, pairs.len());
            pairs.push((l, r));
        }
        let mut axial = Vec::with_capacity(file.axial.len());
        for name in &file.axial {
            let j = lookup(name)?;
            claim(j)?;
            axial.push(j);
        }
        if 2 * pairs.len() + axial.len() != file.joints.len() {
            return Err(Error::Topology(format!(
                "{} pairs and {} axial joints do not cover {} joints",
                pairs.len(),
                axial.len(),
                file.joints.len()
            )));
        }

        let mut rows_used = HashSet::new();
        let mut grid_order = Vec::with_capacity(file.grid_order.len());
        for name in &file.grid_order {
            let j = lookup(name)?;
            let entry = match pair_of.get(&j) {
                Some(&p) => GridEntry::Pair {
                    left: pairs[p].0,
                    right: pairs[p].1,
                },
                None => GridEntry::Axial(j),
            };
            if !rows_used.insert(entry.halves()) {
                return Err(Error::Topology(format!("grid row for {name:?} listed twice")));
            }
            grid_order.push(entry);
        }
        if grid_order.len() != pairs.len() + axial.len() {
            return Err(Error::Topology(format!(
                "grid_order has {} rows, expected {}",
                grid_order.len(),
                pairs.len() + axial.len()
            )));
        }

        let head_pair = match &file.head_pair {
            Some([a, b]) => {
                let (a, b) = (lookup(a)?, lookup(b)?);
                if a == b {
                    return Err(Error::Topology("head_pair joints must differ".into()));
                }
                Some((a, b))
            }
            None => None,
        };
        if let Some(map) = &file.downsample_map {
            for reduced in map.keys() {
                lookup(reduced)?;
            }
            if map.len() != file.joints.len() {
                return Err(Error::Topology(
                    "downsample_map must cover every joint of the reduced topology".into(),
                ));
            }
        }

        Ok(Self {
            name: file.name.unwrap_or_else(|| "custom".to_string()),
            joint_names: file.joints,
            pairs,
            axial,
            grid_order,
            head_pair,
            downsample_map: file.downsample_map,
        })
    }

    pub fn to_file(&self) -> TopologyFile {
        let name = |j: usize| self.joint_names[j].clone();
        TopologyFile {
            name: Some(self.name.clone()),
            joints: self.joint_names.clone(),
            pairs: self.pairs.iter().map(|&(l, r)| [name(l), name(r)]).collect(),
            axial: self.axial.iter().map(|&j| name(j)).collect(),
            grid_order: self.grid_order.iter().map(|e| name(e.halves().0)).collect(),
            head_pair: self.head_pair.map(|(a, b)| [name(a), name(b)]),
            downsample_map: self.downsample_map.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    /// Number of grid rows (H).
    pub fn grid_height(&self) -> usize {
        self.grid_order.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_id(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn axial(&self) -> &[usize] {
        &self.axial
    }

    pub fn grid_order(&self) -> &[GridEntry] {
        &self.grid_order
    }

    pub fn head_pair(&self) -> Option<(usize, usize)> {
        self.head_pair
    }

    pub fn downsample_map(&self) -> Option<&BTreeMap<String, String>> {
        self.downsample_map.as_ref()
    }

    /// For each joint of `self` (a reduced topology), the id of the joint it
    /// maps to in `full`.
    pub fn embedding_into(&self, full: &SkeletonTopology) -> Result<Vec<usize>> {
        let map = self.downsample_map.as_ref().ok_or_else(|| {
            Error::Topology(format!("topology {:?} has no downsample_map", self.name))
        })?;
        let mut targets = HashSet::new();
        self.joint_names
            .iter()
            .map(|reduced| {
                let target = &map[reduced];
                let id = full.joint_id(target).ok_or_else(|| {
                    Error::Topology(format!(
                        "downsample_map target {target:?} is not a joint of {:?}",
                        full.name
                    ))
                })?;
                if !targets.insert(id) {
                    return Err(Error::Topology(format!("joint {target:?} mapped twice")));
                }
                Ok(id)
            })
            .collect()
    }

    /// Bone segments for drawing: consecutive joints along limbs and spine.
    pub fn bones(&self) -> Vec<(usize, usize)> {
        const CHAINS: &[&[&str]] = &[
            &["head_top", "head", "neck", "spine4", "spine3", "spine2", "spine", "pelvis"],
            &["neck", "left_clavicle", "left_shoulder", "left_elbow", "left_wrist", "left_hand"],
            &["neck", "right_clavicle", "right_shoulder", "right_elbow", "right_wrist", "right_hand"],
            &["pelvis", "left_hip", "left_knee", "left_ankle", "left_foot", "left_toe"],
            &["pelvis", "right_hip", "right_knee", "right_ankle", "right_foot", "right_toe"],
            &["left_shoulder", "right_shoulder"],
            &["left_hip", "right_hip"],
            &["left_shoulder", "left_hip"],
            &["right_shoulder", "right_hip"],
        ];
        let mut bones = Vec::new();
        for chain in CHAINS {
            // Skip joints this topology lacks, joining the remaining ones.
            let present: Vec<usize> = chain.iter().filter_map(|n| self.joint_id(n)).collect();
            for w in present.windows(2) {
                if !bones.contains(&(w[0], w[1])) {
                    bones.push((w[0], w[1]));
                }
            }
        }
        bones
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> TopologyFile {
        TopologyFile {
            name: Some("toy".into()),
            joints: ["la", "ra", "lb", "rb", "mid"].map(String::from).to_vec(),
            pairs: vec![["la".into(), "ra".into()], ["lb".into(), "rb".into()]],
            axial: vec!["mid".into()],
            grid_order: vec!["la".into(), "mid".into(), "rb".into()],
            head_pair: Some(["mid".into(), "la".into()]),
            downsample_map: None,
        }
    }

    #[test]
    fn bundled_topologies_satisfy_invariants() {
        let full = SkeletonTopology::mpi_inf_3dhp_28();
        assert_eq!(full.joint_count(), 28);
        assert_eq!(full.grid_height(), 18);
        assert_eq!(2 * full.pairs().len() + full.axial().len(), 28);
        let (a, b) = full.head_pair().unwrap();
        assert_ne!(a, b);

        let coarse = SkeletonTopology::coarse_12();
        assert_eq!(coarse.joint_count(), 12);
        let ids = coarse.embedding_into(&full).unwrap();
        assert_eq!(ids.len(), 12);
        for (i, &id) in ids.iter().enumerate() {
            assert_eq!(coarse.joint_names()[i], full.joint_names()[id]);
        }
    }

    #[test]
    fn grid_order_resolves_pairs_and_axial() {
        let topo = SkeletonTopology::from_file(toy()).unwrap();
        assert_eq!(
            topo.grid_order(),
            &[
                GridEntry::Pair { left: 0, right: 1 },
                GridEntry::Axial(4),
                GridEntry::Pair { left: 2, right: 3 }
            ]
        );
    }

    #[test]
    fn rejects_uncovered_joint() {
        let mut f = toy();
        f.axial.clear();
        f.grid_order.retain(|n| n != "mid");
        assert!(matches!(SkeletonTopology::from_file(f), Err(Error::Topology(_))));
    }

    #[test]
    fn rejects_duplicate_membership_and_bad_head_pair() {
        let mut f = toy();
        f.axial = vec!["la".into()];
        assert!(SkeletonTopology::from_file(f).is_err());

        let mut f = toy();
        f.head_pair = Some(["mid".into(), "mid".into()]);
        assert!(SkeletonTopology::from_file(f).is_err());

        let mut f = toy();
        f.grid_order = vec!["la".into(), "ra".into(), "mid".into()];
        assert!(SkeletonTopology::from_file(f).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let full = SkeletonTopology::mpi_inf_3dhp_28();
        let again = SkeletonTopology::from_file(full.to_file()).unwrap();
        assert_eq!(full, again);
    }

    #[test]
    fn unknown_downsample_target_is_rejected() {
        let mut f = SkeletonTopology::coarse_12().to_file();
        f.downsample_map
            .as_mut()
            .unwrap()
            .insert("left_ankle".into(), "left_paw".into());
        let reduced = SkeletonTopology::from_file(f).unwrap();
        assert!(reduced
            .embedding_into(&SkeletonTopology::mpi_inf_3dhp_28())
            .is_err());
    }
}
