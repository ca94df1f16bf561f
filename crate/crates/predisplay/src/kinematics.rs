//! Future pose prediction from buffered velocity commands.
//!
//! The robot follows skid-steer kinematics `x' = mu*v*cos(theta)`,
//! `y' = mu*v*sin(theta)`, `theta' = eta*omega`; with unit friction
//! coefficients this is the Dubins car. Commands are piecewise constant, so
//! each segment has a closed-form arc solution and no numeric integrator is
//! needed.
//!
//! Planar frame: x forward (at zero heading), y left, heading positive
//! counter-clockwise (seen from above). [`planar_to_camera`] embeds this onto
//! the camera world (x right, y down, z forward): planar x maps to world +z,
//! planar y to world -x, and heading rotates about world -y (up).

use std::f64::consts::PI;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::RigidPose;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("command timestamps must be strictly increasing: {prev} followed by {next}")]
    NonMonotonicCommands { prev: f64, next: f64 },
}

/// Ground-plane robot pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, normalized to (-pi, pi].
    pub theta: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn origin() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a % two_pi;
    if r <= -PI {
        r += two_pi;
    } else if r > PI {
        r -= two_pi;
    }
    r
}

/// A linear/angular velocity command, active from its own timestamp until
/// superseded by the next command in the buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityCommand {
    /// Linear velocity, m/s.
    pub v: f64,
    /// Angular velocity, rad/s.
    pub omega: f64,
    /// Seconds.
    pub timestamp: f64,
}

/// Friction coefficients and the static base-to-camera mount.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KinematicParams {
    pub mu: f64,
    pub eta: f64,
    pub camera_mount: RigidPose,
}

impl Default for KinematicParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            eta: 1.0,
            camera_mount: RigidPose::identity(),
        }
    }
}

/// Immutable, timestamp-ordered command history. Construction validates
/// strict monotonicity; readers get consistent snapshots.
#[derive(Debug, Clone, Default)]
pub struct CommandBuffer {
    commands: Vec<VelocityCommand>,
}

impl CommandBuffer {
    pub fn new(commands: Vec<VelocityCommand>) -> Result<Self, KinematicsError> {
        for pair in commands.windows(2) {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(KinematicsError::NonMonotonicCommands {
                    prev: pair[0].timestamp,
                    next: pair[1].timestamp,
                });
            }
        }
        Ok(Self { commands })
    }

    pub fn push(&mut self, cmd: VelocityCommand) -> Result<(), KinematicsError> {
        if let Some(last) = self.commands.last() {
            if cmd.timestamp <= last.timestamp {
                return Err(KinematicsError::NonMonotonicCommands {
                    prev: last.timestamp,
                    next: cmd.timestamp,
                });
            }
        }
        self.commands.push(cmd);
        Ok(())
    }

    pub fn commands(&self) -> &[VelocityCommand] {
        &self.commands
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    /// Commands visible at `time`: everything issued at or before it.
    pub fn snapshot_until(&self, time: f64) -> CommandBuffer {
        let end = self.commands.partition_point(|c| c.timestamp <= time);
        CommandBuffer {
            commands: self.commands[..end].to_vec(),
        }
    }
}

const OMEGA_STRAIGHT_EPS: f64 = 1e-9;

/// Advances a pose under a constant command for `dt` seconds using the exact
/// arc solution (straight line when the effective turn rate is negligible).
pub fn step(pose: PlanarPose, cmd: &VelocityCommand, dt: f64, params: &KinematicParams) -> PlanarPose {
    debug_assert!(dt >= 0.0);
    let v = params.mu * cmd.v;
    let w = params.eta * cmd.omega;
    if w.abs() < OMEGA_STRAIGHT_EPS {
        PlanarPose {
            x: pose.x + v * pose.theta.cos() * dt,
            y: pose.y + v * pose.theta.sin() * dt,
            theta: normalize_angle(pose.theta + w * dt),
        }
    } else {
        let theta_end = pose.theta + w * dt;
        let r = v / w;
        PlanarPose {
            x: pose.x + r * (theta_end.sin() - pose.theta.sin()),
            y: pose.y + r * (pose.theta.cos() - theta_end.cos()),
            theta: normalize_angle(theta_end),
        }
    }
}

/// Result of [`predict`]; `command_starved` is set when the buffer held no
/// command covering the horizon and the pose was held with zero velocity.
#[derive(Debug, Clone, Copy)]
pub struct PredictedPose {
    pub pose: PlanarPose,
    pub command_starved: bool,
}

/// Integrates piecewise-constant commands from `pose_time` to `horizon_end`.
/// Each command is active from its own timestamp until the next command's;
/// the last one extends to the horizon. A command issued before `pose_time`
/// is still active at `pose_time`.
pub fn predict(
    pose: PlanarPose,
    pose_time: f64,
    commands: &CommandBuffer,
    horizon_end: f64,
    params: &KinematicParams,
) -> PredictedPose {
    assert!(
        horizon_end >= pose_time,
        "horizon {horizon_end} precedes pose time {pose_time}"
    );
    if commands.is_empty() {
        return PredictedPose {
            pose,
            command_starved: true,
        };
    }
    let cmds = commands.commands();
    // Index of the command active at pose_time (last with timestamp <= pose_time).
    let first_after = cmds.partition_point(|c| c.timestamp <= pose_time);
    let mut current = first_after.checked_sub(1);
    let mut t = pose_time;
    let mut pose = pose;
    let mut idx = first_after;
    loop {
        let seg_end = if idx < cmds.len() {
            cmds[idx].timestamp.min(horizon_end)
        } else {
            horizon_end
        };
        if let Some(ci) = current {
            pose = step(pose, &cmds[ci], seg_end - t, params);
        }
        // else: no command active yet; hold still until the first one.
        t = seg_end;
        if t >= horizon_end {
            break;
        }
        current = Some(idx);
        idx += 1;
    }
    PredictedPose {
        pose,
        command_starved: false,
    }
}

/// Embeds a planar pose as an SE(3) camera pose: ground-plane translation,
/// yaw about the vertical axis, then the static camera mount.
pub fn planar_to_camera(pose: &PlanarPose, params: &KinematicParams) -> RigidPose {
    let up = Vector3::new(0.0, -1.0, 0.0);
    let base = RigidPose::from_axis_angle(
        &up,
        pose.theta,
        Vector3::new(-pose.y, 0.0, pose.x),
    );
    base.compose(&params.camera_mount)
}

/// Factors the camera mount out of an SE(3) camera pose and recovers the
/// planar pose. Exact for poses produced by [`planar_to_camera`]; for noisy
/// poses the heading comes from the forward axis projected to the ground
/// plane.
pub fn camera_to_planar(pose: &RigidPose, params: &KinematicParams) -> PlanarPose {
    let base = pose.compose(&params.camera_mount.inverse());
    let forward = base.rotation() * Vector3::new(0.0, 0.0, 1.0);
    let theta = (-forward.x).atan2(forward.z);
    PlanarPose {
        x: base.translation().z,
        y: -base.translation().x,
        theta: normalize_angle(theta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cmd(v: f64, omega: f64, timestamp: f64) -> VelocityCommand {
        VelocityCommand { v, omega, timestamp }
    }

    #[test]
    fn straight_line_step() {
        let p = step(
            PlanarPose::origin(),
            &cmd(1.0, 0.0, 0.0),
            1.0,
            &KinematicParams::default(),
        );
        assert_abs_diff_eq!(p.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.theta, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quarter_circle_arc() {
        // v=1, omega=pi/2 over 1 s sweeps a quarter circle of radius 2/pi.
        let p = step(
            PlanarPose::origin(),
            &cmd(1.0, PI / 2.0, 0.0),
            1.0,
            &KinematicParams::default(),
        );
        assert_abs_diff_eq!(p.x, 2.0 / PI, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 2.0 / PI, epsilon = 1e-12);
        assert_abs_diff_eq!(p.theta, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn turn_in_place() {
        let p = step(
            PlanarPose::new(3.0, -2.0, 0.4),
            &cmd(0.0, 0.5, 0.0),
            2.0,
            &KinematicParams::default(),
        );
        assert_abs_diff_eq!(p.x, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.theta, 1.4, epsilon = 1e-12);
    }

    #[test]
    fn mu_scales_displacement_linearly() {
        let params2 = KinematicParams {
            mu: 2.0,
            ..Default::default()
        };
        let p1 = step(PlanarPose::origin(), &cmd(1.0, 0.0, 0.0), 1.0, &KinematicParams::default());
        let p2 = step(PlanarPose::origin(), &cmd(1.0, 0.0, 0.0), 1.0, &params2);
        assert_abs_diff_eq!(p2.x, 2.0 * p1.x, epsilon = 1e-12);
    }

    #[test]
    fn predict_single_command() {
        let buf = CommandBuffer::new(vec![cmd(1.0, 0.0, 0.0)]).unwrap();
        let out = predict(
            PlanarPose::origin(),
            0.0,
            &buf,
            0.5,
            &KinematicParams::default(),
        );
        assert!(!out.command_starved);
        assert_abs_diff_eq!(out.pose.x, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn predict_piecewise() {
        // 1 s straight then 0.5 s turning in place at pi rad/s.
        let buf = CommandBuffer::new(vec![cmd(1.0, 0.0, 0.0), cmd(0.0, PI, 1.0)]).unwrap();
        let out = predict(
            PlanarPose::origin(),
            0.0,
            &buf,
            1.5,
            &KinematicParams::default(),
        );
        assert_abs_diff_eq!(out.pose.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.pose.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.pose.theta, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn predict_zero_horizon_returns_input() {
        let buf = CommandBuffer::new(vec![cmd(1.0, 0.3, 0.0)]).unwrap();
        let start = PlanarPose::new(1.0, 2.0, 0.5);
        let out = predict(start, 4.0, &buf, 4.0, &KinematicParams::default());
        assert_eq!(out.pose, start);
    }

    #[test]
    fn predict_empty_buffer_flags_starvation() {
        let buf = CommandBuffer::default();
        let start = PlanarPose::new(1.0, 2.0, 0.5);
        let out = predict(start, 0.0, &buf, 3.0, &KinematicParams::default());
        assert!(out.command_starved);
        assert_eq!(out.pose, start);
    }

    #[test]
    fn predict_command_issued_before_pose_time_is_active() {
        let buf = CommandBuffer::new(vec![cmd(1.0, 0.0, -5.0)]).unwrap();
        let out = predict(
            PlanarPose::origin(),
            0.0,
            &buf,
            1.0,
            &KinematicParams::default(),
        );
        assert_abs_diff_eq!(out.pose.x, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn command_buffer_rejects_non_monotonic() {
        assert!(CommandBuffer::new(vec![cmd(0.0, 0.0, 1.0), cmd(0.0, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn planar_embedding_trivials() {
        let params = KinematicParams::default();
        let id = planar_to_camera(&PlanarPose::origin(), &params);
        assert_abs_diff_eq!(
            (id.rotation() - nalgebra::Matrix3::identity()).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(id.translation().norm(), 0.0, epsilon = 1e-15);

        // Heading pi/2 turns the camera toward world -x (left), a rotation of
        // pi/2 about the vertical axis.
        let left = planar_to_camera(&PlanarPose::new(0.0, 0.0, PI / 2.0), &params);
        let fwd = left.rotation() * Vector3::new(0.0, 0.0, 1.0);
        assert_abs_diff_eq!(fwd.x, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fwd.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fwd.z, 0.0, epsilon = 1e-12);

        // Forward motion lands on world +z.
        let ahead = planar_to_camera(&PlanarPose::new(2.0, 0.0, 0.0), &params);
        assert_abs_diff_eq!(ahead.translation().z, 2.0, epsilon = 1e-15);

        // Leftward planar y lands on world -x.
        let lateral = planar_to_camera(&PlanarPose::new(0.0, 1.5, 0.0), &params);
        assert_abs_diff_eq!(lateral.translation().x, -1.5, epsilon = 1e-15);
    }

    // Independent fine-step Euler integrator used as the oracle for the
    // exact-arc solution.
    fn euler_oracle(
        pose: PlanarPose,
        cmd: &VelocityCommand,
        duration: f64,
        params: &KinematicParams,
        dt: f64,
    ) -> PlanarPose {
        let mut x = pose.x;
        let mut y = pose.y;
        let mut theta = pose.theta;
        let steps = (duration / dt).round() as usize;
        for _ in 0..steps {
            x += params.mu * cmd.v * theta.cos() * dt;
            y += params.mu * cmd.v * theta.sin() * dt;
            theta += params.eta * cmd.omega * dt;
        }
        PlanarPose { x, y, theta: normalize_angle(theta) }
    }

    #[test]
    fn exact_arc_matches_fine_euler() {
        let params = KinematicParams::default();
        for (v, omega) in [(1.0, 0.7), (0.5, -2.0), (2.0, 0.0), (0.0, 1.0), (1.5, 3.0)] {
            let c = cmd(v, omega, 0.0);
            let exact = step(PlanarPose::origin(), &c, 1.0, &params);
            let euler = euler_oracle(PlanarPose::origin(), &c, 1.0, &params, 1e-5);
            let pos_err = ((exact.x - euler.x).powi(2) + (exact.y - euler.y).powi(2)).sqrt();
            assert!(pos_err <= 1e-4, "v={v} omega={omega}: pos err {pos_err}");
            assert!(
                normalize_angle(exact.theta - euler.theta).abs() <= 1e-6,
                "heading err"
            );
        }
    }

    proptest! {
        #[test]
        fn step_composes(
            v in -2.0f64..2.0,
            omega in -3.0f64..3.0,
            a in 0.0f64..2.0,
            b in 0.0f64..2.0,
            theta0 in -3.0f64..3.0,
        ) {
            let params = KinematicParams::default();
            let c = cmd(v, omega, 0.0);
            let start = PlanarPose::new(0.3, -0.7, theta0);
            let two = step(step(start, &c, a, &params), &c, b, &params);
            let one = step(start, &c, a + b, &params);
            prop_assert!((two.x - one.x).abs() < 1e-12);
            prop_assert!((two.y - one.y).abs() < 1e-12);
            prop_assert!(normalize_angle(two.theta - one.theta).abs() < 1e-12);
        }

        #[test]
        fn mount_roundtrip(
            x in -5.0f64..5.0,
            y in -5.0f64..5.0,
            theta in -3.1f64..3.1,
            mount_yaw in -1.0f64..1.0,
            mount_dx in -0.5f64..0.5,
        ) {
            // planar_to_camera then factoring the mount back out recovers the
            // planar pose.
            let params = KinematicParams {
                camera_mount: RigidPose::from_axis_angle(
                    &Vector3::new(0.0, -1.0, 0.0),
                    mount_yaw,
                    Vector3::new(mount_dx, -0.1, 0.2),
                ),
                ..Default::default()
            };
            let planar = PlanarPose::new(x, y, theta);
            let cam = planar_to_camera(&planar, &params);
            let back = camera_to_planar(&cam, &params);
            prop_assert!((back.x - planar.x).abs() < 1e-12);
            prop_assert!((back.y - planar.y).abs() < 1e-12);
            prop_assert!(normalize_angle(back.theta - planar.theta).abs() < 1e-12);
        }
    }
}
