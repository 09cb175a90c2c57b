//! Shape-goal datasets: generation by driving the simulator to random gripper
//! poses, a train/test split, and a line-oriented text file format.
//!
//! File layout (all numbers in shortest round-trip decimal form):
//!
//! ```text
//! # multiac6 dataset
//! version 1
//! box small
//! seed 1
//! m 4
//! sim_hash 0123456789abcdef
//! records 1000
//! end_header
//! <id> <F_d: 3m values> <zeta: 3> <pose position: 3> <pose orientation: 3> <settle_residual>
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use glam::DVec3;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::rng::{derive_seed, stream};
use crate::sim::{feature_indices, GripperPose, Simulator};
use crate::task::{DeformationGoal, FEATURE_POINTS};

pub const DATASET_VERSION: u32 = 1;

/// Height of the bottom face of every box above the anchor, meters.
pub const BOX_BASE_HEIGHT: f64 = 0.5;

/// Named workspace presets, centered laterally on the anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkspaceBox {
    Small,
    Medium,
    Large,
}

impl WorkspaceBox {
    pub const ALL: [WorkspaceBox; 3] = [WorkspaceBox::Small, WorkspaceBox::Medium, WorkspaceBox::Large];

    /// `(x, y, z)` side lengths in meters.
    pub fn extents(self) -> DVec3 {
        match self {
            WorkspaceBox::Small => DVec3::new(0.15, 0.40, 0.25),
            WorkspaceBox::Medium => DVec3::new(0.20, 0.50, 0.25),
            WorkspaceBox::Large => DVec3::new(0.20, 0.65, 0.30),
        }
    }

    /// Center of the bottom face relative to the anchor.
    pub fn origin(self) -> DVec3 {
        DVec3::new(0.0, 0.0, BOX_BASE_HEIGHT)
    }

    pub fn aabb(self) -> Aabb {
        let e = self.extents();
        let o = self.origin();
        Aabb {
            min: DVec3::new(o.x - e.x / 2.0, o.y - e.y / 2.0, o.z),
            max: DVec3::new(o.x + e.x / 2.0, o.y + e.y / 2.0, o.z + e.z),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WorkspaceBox::Small => "small",
            WorkspaceBox::Medium => "medium",
            WorkspaceBox::Large => "large",
        }
    }
}

impl fmt::Display for WorkspaceBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkspaceBox {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(WorkspaceBox::Small),
            "medium" => Ok(WorkspaceBox::Medium),
            "large" => Ok(WorkspaceBox::Large),
            other => Err(Error::Usage(format!(
                "unknown box '{other}', expected small, medium or large"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub m: usize,
    /// Roll and pitch are sampled in `[-limit, limit]`, radians.
    pub roll_pitch_limit: f64,
    /// Yaw is sampled in `[-limit, limit]`, radians.
    pub yaw_limit: f64,
    /// Gripper position the object is reset at before each move.
    pub home: DVec3,
    /// Speed of the interpolated move to the sampled pose, m/s.
    pub move_speed: f64,
    /// Settled means max particle speed below this for `quiet_window` seconds.
    pub quiet_speed: f64,
    pub quiet_window: f64,
    pub max_settle_time: f64,
    /// Configurations straighter than this are resampled.
    pub max_straightness: f64,
    /// Resamples allowed across the whole dataset.
    pub resample_budget: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            m: FEATURE_POINTS,
            roll_pitch_limit: 60f64.to_radians(),
            yaw_limit: 180f64.to_radians(),
            home: WorkspaceBox::Small.aabb().center(),
            move_speed: 0.10,
            quiet_speed: 1e-3,
            quiet_window: 0.5,
            max_settle_time: 30.0,
            max_straightness: 0.995,
            resample_budget: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationRecord {
    pub goal: DeformationGoal,
    pub generating_pose: GripperPose,
    /// Largest particle motion over the final quiet window, meters.
    pub settle_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub box_name: WorkspaceBox,
    pub seed: u64,
    pub m: usize,
    pub sim_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub records: Vec<DeformationRecord>,
    /// Set on load when the file came from different simulator parameters.
    pub cross_simulator: bool,
}

impl DatasetFile {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn goals(&self) -> impl Iterator<Item = &DeformationGoal> {
        self.records.iter().map(|r| &r.goal)
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut out = format!(
            "# multiac6 dataset\nversion {}\nbox {}\nseed {}\nm {}\nsim_hash {}\nrecords {}\nend_header\n",
            h.version,
            h.box_name,
            h.seed,
            h.m,
            h.sim_hash,
            self.records.len()
        );
        for (i, r) in self.records.iter().enumerate() {
            let mut fields = vec![i.to_string()];
            let vecs = r
                .goal
                .f_d
                .iter()
                .chain([&r.goal.zeta, &r.generating_pose.position, &r.generating_pose.orientation]);
            for v in vecs {
                fields.extend(v.to_array().iter().map(|x| x.to_string()));
            }
            fields.push(r.settle_residual.to_string());
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
        out
    }

    /// Strict parse; `expected_hash` flags files from other simulators.
    pub fn parse(text: &str, expected_hash: Option<&str>) -> Result<DatasetFile> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut header_line = |key: &str| -> Result<(usize, String)> {
            loop {
                let Some((n, line)) = lines.next() else {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("missing header field '{key}'"),
                    });
                };
                if line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once(' ').unwrap_or((line, ""));
                if k != key {
                    return Err(Error::Parse {
                        line: n,
                        message: format!("expected '{key}', found '{k}'"),
                    });
                }
                return Ok((n, v.trim().to_string()));
            }
        };
        fn num<T: FromStr>(n: usize, v: &str, what: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Parse {
                line: n,
                message: format!("invalid {what} '{v}'"),
            })
        }
        let (n, v) = header_line("version")?;
        let version: u32 = num(n, &v, "version")?;
        if version != DATASET_VERSION {
            return Err(Error::Incompatible(format!(
                "dataset version {version}, this build reads {DATASET_VERSION}"
            )));
        }
        let (n, v) = header_line("box")?;
        let box_name: WorkspaceBox = v.parse().map_err(|_| Error::Parse {
            line: n,
            message: format!("unknown box '{v}'"),
        })?;
        let (n, v) = header_line("seed")?;
        let seed: u64 = num(n, &v, "seed")?;
        let (n, v) = header_line("m")?;
        let m: usize = num(n, &v, "m")?;
        if m == 0 {
            return Err(Error::Parse { line: n, message: "m must be positive".into() });
        }
        let (_, sim_hash) = header_line("sim_hash")?;
        let (n, v) = header_line("records")?;
        let count: usize = num(n, &v, "record count")?;
        header_line("end_header")?;

        let width = 1 + 3 * m + 3 + 6 + 1;
        let mut records = Vec::with_capacity(count);
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != width {
                return Err(Error::Parse {
                    line: n,
                    message: format!("expected {width} fields, found {}", fields.len()),
                });
            }
            let id: usize = num(n, fields[0], "record id")?;
            if id != records.len() {
                return Err(Error::Parse {
                    line: n,
                    message: format!("record id {id} out of sequence"),
                });
            }
            let vals = fields[1..]
                .iter()
                .map(|f| num::<f64>(n, f, "number"))
                .collect::<Result<Vec<f64>>>()?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse { line: n, message: "non-finite value".into() });
            }
            let vec_at = |i: usize| DVec3::from_slice(&vals[3 * i..3 * i + 3]);
            let f_d = (0..m).map(vec_at).collect();
            records.push(DeformationRecord {
                goal: DeformationGoal::new(f_d, vec_at(m)),
                generating_pose: GripperPose::new(vec_at(m + 1), vec_at(m + 2)),
                settle_residual: vals[3 * m + 9],
            });
        }
        if records.len() != count {
            return Err(Error::Parse {
                line: text.lines().count(),
                message: format!("header declares {count} records, found {}", records.len()),
            });
        }
        let cross_simulator = expected_hash.is_some_and(|h| h != sim_hash);
        Ok(DatasetFile {
            header: DatasetHeader {
                version,
                box_name,
                seed,
                m,
                sim_hash,
            },
            records,
            cross_simulator,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, expected_hash: Option<&str>) -> Result<DatasetFile> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DatasetFile::parse(&text, expected_hash)
    }

    /// Hex digest of the serialized file, recorded in checkpoints.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_text().as_bytes())[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Warning text for a cross-simulator load.
    pub fn warning(&self) -> Option<String> {
        self.cross_simulator.then(|| {
            format!(
                "dataset was generated with simulator {} which differs from the current one; \
                 goals may not be exactly reachable",
                self.header.sim_hash
            )
        })
    }
}

/// Feature points of the chain standing straight along the clamp direction.
pub fn straight_features(sim: &Simulator, m: usize) -> Result<Vec<DVec3>> {
    let p = sim.params();
    let dir = p.base_direction.normalize();
    Ok(feature_indices(p.num_particles, m)?
        .into_iter()
        .map(|i| p.ground_anchor + dir * (p.rest_length() * i as f64))
        .collect())
}

/// Max distance between a goal's feature points and the straight configuration.
pub fn deformation_magnitude(goal: &DeformationGoal, straight: &[DVec3]) -> Result<f64> {
    crate::rewards::max_distance(&goal.f_d, straight)
}

/// Runs the simulator from home to one sampled pose and records the settled shape.
pub fn generate_record(
    sim: &Simulator,
    config: &GenerationConfig,
    pose: GripperPose,
) -> Result<Option<DeformationRecord>> {
    let mut state = sim.reset(GripperPose::new(config.home, pose.orientation))?;
    let dt = sim.config().control_dt;
    let distance = pose.position.distance(config.home);
    let moves = (distance / (config.move_speed * dt)).ceil().max(1.0) as usize;
    for k in 1..=moves {
        let t = k as f64 / moves as f64;
        sim.step_in_place(&mut state, GripperPose::new(config.home.lerp(pose.position, t), pose.orientation))?;
    }
    let settled = sim.settle_to_quiescence(&state, config.quiet_speed, config.quiet_window, config.max_settle_time)?;
    if settled.state.straightness() > config.max_straightness {
        return Ok(None);
    }
    Ok(Some(DeformationRecord {
        goal: DeformationGoal::new(settled.state.feature_points(config.m)?, settled.state.tip_orientation()),
        generating_pose: pose,
        settle_residual: settled.residual,
    }))
}

pub fn sample_pose(rng: &mut impl Rng, workspace: WorkspaceBox, config: &GenerationConfig) -> GripperPose {
    let b = workspace.aabb();
    let mut uniform = |lo: f64, hi: f64| if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let position = DVec3::new(
        uniform(b.min.x, b.max.x),
        uniform(b.min.y, b.max.y),
        uniform(b.min.z, b.max.z),
    );
    let (rp, yw) = (config.roll_pitch_limit, config.yaw_limit);
    let orientation = DVec3::new(uniform(-rp, rp), uniform(-rp, rp), uniform(-yw, yw));
    GripperPose::new(position, orientation)
}

/// `n` records from poses sampled uniformly in `workspace`. Record `i` draws
/// from its own seeded stream, so content depends only on `(box, n, seed)`.
/// Unreachable, divergent, unsettled, or near-straight samples are redrawn
/// against a shared budget.
pub fn generate(
    sim: &Simulator,
    workspace: WorkspaceBox,
    n: usize,
    seed: u64,
    config: &GenerationConfig,
) -> Result<DatasetFile> {
    generate_with_progress(sim, workspace, n, seed, config, |_| {})
}

pub fn generate_with_progress(
    sim: &Simulator,
    workspace: WorkspaceBox,
    n: usize,
    seed: u64,
    config: &GenerationConfig,
    mut progress: impl FnMut(usize),
) -> Result<DatasetFile> {
    if n == 0 {
        return Err(Error::Usage("dataset size must be at least 1".into()));
    }
    feature_indices(sim.params().num_particles, config.m)?;
    let mut budget = config.resample_budget;
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(derive_seed(seed, 0x5eed), i as u64);
        loop {
            let pose = sample_pose(&mut rng, workspace, config);
            match generate_record(sim, config, pose) {
                Ok(Some(r)) => {
                    records.push(r);
                    break;
                }
                Ok(None) | Err(Error::Config(_)) | Err(Error::Divergence { .. }) | Err(Error::Usage(_)) => {
                    if budget == 0 {
                        return Err(Error::Config(format!(
                            "resample budget of {} exhausted at record {i}",
                            config.resample_budget
                        )));
                    }
                    budget -= 1;
                }
                Err(e) => return Err(e),
            }
        }
        progress(i + 1);
    }
    Ok(DatasetFile {
        header: DatasetHeader {
            version: DATASET_VERSION,
            box_name: workspace,
            seed,
            m: config.m,
            sim_hash: sim.parameter_hash(),
        },
        records,
        cross_simulator: false,
    })
}

/// Random disjoint split with `round(fraction * n)` records in the first part.
pub fn split_seen(dataset: &DatasetFile, fraction: f64, seed: u64) -> Result<(DatasetFile, DatasetFile)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Usage(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n = dataset.len();
    let first = (fraction * n as f64).round() as usize;
    if first == 0 || first == n {
        return Err(Error::Usage(format!(
            "split fraction {fraction} leaves an empty part of {n} records"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, 0x5b1));
    let (a, b) = order.split_at(first);
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let part = |idx: &[usize]| DatasetFile {
        header: dataset.header.clone(),
        records: idx.iter().map(|&i| dataset.records[i].clone()).collect(),
        cross_simulator: dataset.cross_simulator,
    };
    Ok((part(&a), part(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DloParams, SimConfig};

    fn sim() -> Simulator {
        Simulator::new(DloParams::default(), SimConfig::default()).unwrap()
    }

    #[test]
    fn presets() {
        let s = WorkspaceBox::Small.aabb();
        assert!((s.max - s.min - DVec3::new(0.15, 0.40, 0.25)).length() < 1e-12);
        assert_eq!(s.center(), DVec3::new(0.0, 0.0, 0.625));
        for b in WorkspaceBox::ALL {
            assert_eq!(b.name().parse::<WorkspaceBox>().unwrap(), b);
            let a = b.aabb();
            let far = DVec3::new(a.max.x, a.max.y, a.max.z);
            assert!(far.length() < DloParams::default().total_length);
        }
        assert!("huge".parse::<WorkspaceBox>().is_err());
    }

    #[test]
    fn small_generation_round_trips() {
        let s = sim();
        let d = generate(&s, WorkspaceBox::Small, 3, 9, &GenerationConfig::default()).unwrap();
        assert_eq!(d.len(), 3);
        for r in &d.records {
            assert!(WorkspaceBox::Small.aabb().contains(r.generating_pose.position));
            assert_eq!(r.goal.f_d.len(), 4);
            assert!(r.settle_residual <= 1e-3 * 0.5);
            assert!((*r.goal.f_d.last().unwrap() - r.generating_pose.position).length() < 1e-12);
        }
        let text = d.to_text();
        let back = DatasetFile::parse(&text, Some(&s.parameter_hash())).unwrap();
        assert_eq!(back, d);
        assert!(!back.cross_simulator);
        let flagged = DatasetFile::parse(&text, Some("other")).unwrap();
        assert!(flagged.cross_simulator && flagged.warning().is_some());
        let truncated: String = text.lines().take(9).map(|l| format!("{l}\n")).collect();
        assert!(matches!(DatasetFile::parse(&truncated, None), Err(Error::Parse { .. })));
        let bumped = text.replacen("version 1", "version 2", 1);
        assert!(matches!(DatasetFile::parse(&bumped, None), Err(Error::Incompatible(_))));
    }

    #[test]
    fn split_examples() {
        let rec = DeformationRecord {
            goal: DeformationGoal::new(vec![DVec3::ZERO; 4], DVec3::ZERO),
            generating_pose: GripperPose::new(DVec3::ZERO, DVec3::ZERO),
            settle_residual: 0.0,
        };
        let d = DatasetFile {
            header: DatasetHeader {
                version: 1,
                box_name: WorkspaceBox::Small,
                seed: 0,
                m: 4,
                sim_hash: "x".into(),
            },
            records: (0..1000)
                .map(|i| DeformationRecord { settle_residual: i as f64, ..rec.clone() })
                .collect(),
            cross_simulator: false,
        };
        let (a, b) = split_seen(&d, 0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (800, 200));
        let mut ids: Vec<i64> = a.records.iter().chain(&b.records).map(|r| r.settle_residual as i64).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..1000).collect::<Vec<_>>());
        assert_eq!(split_seen(&d, 0.8, 3).unwrap(), (a, b));
        assert!(split_seen(&d, 1.0, 3).is_err());
        assert!(split_seen(&d, 0.0, 3).is_err());
        assert!(split_seen(&d, 1e-6, 3).is_err());
    }
}
