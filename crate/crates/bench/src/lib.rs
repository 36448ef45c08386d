//! Fixtures shared by the benchmarks.

use laparo_core::adaptation::RcmState;
use laparo_core::controller::{Controller, ControllerConfig};
use laparo_core::manipulator::{JointState, ManipulatorModel};
use laparo_core::rcm::{init_rcm_point, scope_axis};
use laparo_core::sim::{ExogenousInputs, SimConfig, SimState, Simulator};
use laparo_core::spatial::{Vec3, Wrench};
use laparo_core::wrenches::TactileFrame;

/// Default arm at home with the RCM at 80% of the scope, plus inputs that
/// exercise every wrench source: a gripped handle, one instrument in view
/// and a displaced trocar.
pub fn busy_home() -> (Simulator, ExogenousInputs) {
    let model = ManipulatorModel::default_seven();
    let q = model.home().clone();
    let pose = model.forward_kinematics(&q).expect("home pose");
    let d = scope_axis(&pose.rotation);
    let p_r = init_rcm_point(&pose.position, &d, 0.8, model.scope_length()).expect("home RCM");
    let config = ControllerConfig::default();
    let camera = config.geometry.camera_pose(&pose, model.scope_length());
    let state = SimState::new(JointState::at_rest(q), RcmState::new(p_r), 0);
    let sim = Simulator::new(model, Controller::new(config), SimConfig::default(), state);
    let inputs = ExogenousInputs {
        handle_wrench: Wrench::from_force(Vec3::new(2.0, 0.0, 0.0)),
        tactile: TactileFrame::uniform(10, 200),
        instruments: vec![Some(camera.transform_point(&Vec3::new(0.02, 0.01, 0.08)))],
        trocar_center: p_r + Vec3::new(0.005, 0.0, 0.0),
    };
    (sim, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_steps() {
        let (mut sim, inputs) = busy_home();
        let rec = sim.step(&inputs).unwrap();
        assert!(rec.control.delta > 0.0);
        assert_eq!(rec.sensors.detections.len(), 1);
    }
}
