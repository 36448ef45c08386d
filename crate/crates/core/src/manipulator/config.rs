use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Joint, LinkInertia, ManipulatorModel, ModelError};
use crate::spatial::{Mat3, Pose, Rotation, Vec3};

/// Fixed transform given as a translation plus roll-pitch-yaw angles (rad).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl FrameConfig {
    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            xyz: [x, y, z],
            rpy: [0.0; 3],
        }
    }

    pub fn to_pose(&self) -> Pose {
        let [r, p, y] = self.rpy;
        Pose::new(Rotation::from_euler_angles(r, p, y), Vec3::from(self.xyz))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub origin: FrameConfig,
    pub axis: [f64; 3],
    pub mass: f64,
    pub com: [f64; 3],
    /// `[ixx, iyy, izz, ixy, ixz, iyz]` about the center of mass, link frame.
    pub inertia: [f64; 6],
}

/// File representation of a [`ManipulatorModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub gravity: [f64; 3],
    pub scope_length: f64,
    pub tool: FrameConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<Vec<f64>>,
    pub joints: Vec<JointConfig>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ManipulatorModel, ModelError> {
        let joints = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let axis = Vec3::from(j.axis);
                let [ixx, iyy, izz, ixy, ixz, iyz] = j.inertia;
                Joint {
                    name: j.name.clone().unwrap_or_else(|| format!("joint{}", i + 1)),
                    origin: j.origin.to_pose(),
                    axis,
                    link: LinkInertia {
                        mass: j.mass,
                        com: Vec3::from(j.com),
                        inertia: Mat3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
                    },
                }
            })
            .collect();
        ManipulatorModel::new(
            self.name.clone(),
            joints,
            self.tool.to_pose(),
            Vec3::from(self.gravity),
            self.scope_length,
            self.home.as_ref().map(|h| DVector::from_column_slice(h)),
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("model config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn default_seven() -> Self {
        // (origin z offset, axis, mass, com z, ixx = iyy, izz)
        const LINKS: [(f64, [f64; 3], f64, f64, f64, f64); 7] = [
            (0.15, [0.0, 0.0, 1.0], 4.0, 0.10, 0.01563, 0.0072),
            (0.19, [0.0, 1.0, 0.0], 4.0, 0.105, 0.0183, 0.0072),
            (0.21, [0.0, 0.0, 1.0], 3.0, 0.095, 0.01173, 0.0054),
            (0.19, [0.0, 1.0, 0.0], 2.7, 0.105, 0.01161, 0.003375),
            (0.21, [0.0, 0.0, 1.0], 1.7, 0.095, 0.006177, 0.002125),
            (0.19, [0.0, 1.0, 0.0], 1.2, 0.04, 0.00112, 0.00096),
            (0.08, [0.0, 0.0, 1.0], 0.6, 0.11, 0.0067, 0.0006),
        ];
        let joints = LINKS
            .iter()
            .enumerate()
            .map(|(i, &(z, axis, mass, com, ixx, izz))| JointConfig {
                name: Some(format!("joint{}", i + 1)),
                origin: FrameConfig::translation(0.0, 0.0, z),
                axis,
                mass,
                com: [0.0, 0.0, com],
                inertia: [ixx, ixx, izz, 0.0, 0.0, 0.0],
            })
            .collect();
        Self {
            name: "default7".into(),
            gravity: [0.0, 0.0, -9.81],
            scope_length: 0.29,
            tool: FrameConfig::translation(0.0, 0.0, 0.05),
            home: Some(vec![
                0.0,
                0.318498336165428,
                0.0,
                1.6095560309445978,
                0.0,
                1.2135382864797675,
                0.0,
            ]),
            joints,
        }
    }

    pub fn planar_two_link() -> Self {
        let link = |x: f64| JointConfig {
            name: None,
            origin: FrameConfig::translation(x, 0.0, 0.0),
            axis: [0.0, 0.0, 1.0],
            mass: 1.0,
            com: [1.0, 0.0, 0.0],
            inertia: [0.0; 6],
        };
        Self {
            name: "planar2".into(),
            gravity: [0.0, -9.81, 0.0],
            scope_length: 0.29,
            tool: FrameConfig::translation(1.0, 0.0, 0.0),
            home: None,
            joints: vec![link(0.0), link(1.0)],
        }
    }

    pub fn point_pendulum() -> Self {
        Self {
            name: "pendulum".into(),
            gravity: [0.0, -9.81, 0.0],
            scope_length: 0.29,
            tool: FrameConfig::translation(1.0, 0.0, 0.0),
            home: None,
            joints: vec![JointConfig {
                name: None,
                origin: FrameConfig::translation(0.0, 0.0, 0.0),
                axis: [0.0, 0.0, 1.0],
                mass: 1.0,
                com: [1.0, 0.0, 0.0],
                inertia: [0.0; 6],
            }],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        for cfg in [
            ModelConfig::default_seven(),
            ModelConfig::planar_two_link(),
            ModelConfig::point_pendulum(),
        ] {
            let text = cfg.to_toml_string();
            assert_eq!(ModelConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn shipped_model_file_matches_builtin() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/default7.toml");
        let cfg = ModelConfig::load(&path).unwrap();
        assert_eq!(cfg.build().unwrap(), ManipulatorModel::default_seven());
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = ModelConfig::planar_two_link();
        cfg.joints[0].axis = [0.0, 0.0, 2.0];
        assert!(matches!(
            cfg.build(),
            Err(ModelError::InvalidJoint { index: 0, .. })
        ));

        let mut cfg = ModelConfig::planar_two_link();
        cfg.joints[1].mass = 0.0;
        assert!(cfg.build().is_err());

        let mut cfg = ModelConfig::planar_two_link();
        cfg.joints[1].inertia = [1.0, 1.0, -1.0, 0.0, 0.0, 0.0];
        assert!(cfg.build().is_err());

        let mut cfg = ModelConfig::planar_two_link();
        cfg.home = Some(vec![0.0]);
        assert!(cfg.build().is_err());

        let text = ModelConfig::point_pendulum().to_toml_string() + "\nextra = 1\n";
        assert!(ModelConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn small_models_are_not_rcm_capable() {
        assert!(ManipulatorModel::planar_two_link()
            .ensure_rcm_capable()
            .is_err());
        assert!(ManipulatorModel::default_seven()
            .ensure_rcm_capable()
            .is_ok());
    }
}
