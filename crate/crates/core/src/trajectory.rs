//! TUM-format trajectories (`timestamp tx ty tz qx qy qz qw`) and
//! correspondence matching between two trajectories.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Pose, RotationQuaternion, Vec3};

/// Timestamps closer than this are considered the same frame.
pub const TIMESTAMP_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<StampedPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<StampedPose>) -> Self {
        Self { poses }
    }

    /// Frames stamped `0, 1, 2, ...`.
    pub fn from_poses(poses: impl IntoIterator<Item = Pose>) -> Self {
        Self {
            poses: poses
                .into_iter()
                .enumerate()
                .map(|(i, pose)| StampedPose {
                    timestamp: i as f64,
                    pose,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut poses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
            if vals.len() != 8 {
                return Err(format!("line {}: expected 8 values, found {}", lineno + 1, vals.len()));
            }
            let rotation = RotationQuaternion::from_wxyz(vals[7], vals[4], vals[5], vals[6])
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
            poses.push(StampedPose {
                timestamp: vals[0],
                pose: Pose::new(rotation, Vec3::new(vals[1], vals[2], vals[3])),
            });
        }
        Ok(Self { poses })
    }

    pub fn to_tum_string(&self) -> String {
        let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
        for sp in &self.poses {
            let (t, q) = (&sp.pose.translation, &sp.pose.rotation);
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                sp.timestamp, t.x, t.y, t.z, q.x, q.y, q.z, q.w
            );
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|r| Error::format(path, r))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tum_string()).map_err(|e| Error::io(path, e))
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.pose.center()).collect()
    }
}

/// Pairs frames of `a` and `b`.
///
/// Each frame of `a` is matched to the nearest unused timestamp of `b`
/// within [`TIMESTAMP_TOLERANCE`]; unmatched frames are dropped. When
/// timestamps yield fewer than three pairs, frames are paired by index.
pub fn match_trajectories(a: &Trajectory, b: &Trajectory) -> Vec<(usize, usize)> {
    let mut used = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (i, pa) in a.poses.iter().enumerate() {
        let best = b
            .poses
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, pb)| (j, (pb.timestamp - pa.timestamp).abs()))
            .filter(|(_, dt)| *dt <= TIMESTAMP_TOLERANCE)
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        if let Some((j, _)) = best {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.len() >= 3 {
        return pairs;
    }
    (0..a.len().min(b.len())).map(|i| (i, i)).collect()
}
