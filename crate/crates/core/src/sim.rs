//! Mass-spring model of a deformable linear object.
//!
//! The object is a chain of particles. Particle 0 is pinned to the ground
//! anchor and the first segment is clamped along `base_direction`. The tip
//! particle is the gripper grasp point and the particle before it sits one
//! rest length back along the gripper axis, which makes the last segment
//! rigid with the gripper. Interior particles feel stretch springs, a
//! second-difference bending term, gravity, and viscous damping, and are
//! advanced with semi-implicit Euler.

use glam::DVec3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{angular_difference, grasp_axis, wrap_euler};

/// Any coordinate beyond this magnitude (meters) is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

/// Largest `omega_max * substep_dt` accepted at construction; semi-implicit
/// Euler is unstable above 2.
pub const STABILITY_LIMIT: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DloParams {
    pub num_particles: usize,
    /// Meters.
    pub total_length: f64,
    /// Total mass in kilograms, spread evenly over the particles.
    pub mass: f64,
    /// Per-segment axial spring constant, N/m.
    pub stretch_stiffness: f64,
    /// Bending rigidity, N m^2.
    pub bend_stiffness: f64,
    /// Fraction of the critical damping of one particle on one stretch spring.
    pub damping_ratio: f64,
    pub gravity: DVec3,
    pub ground_anchor: DVec3,
    /// Clamp direction of the first segment at the anchor.
    pub base_direction: DVec3,
}

impl Default for DloParams {
    /// 16 particles over 1.03 m and 0.2 kg. The bending rigidity is
    /// calibrated so a horizontally clamped chain with a free tip sags about
    /// 0.2 m under gravity; see [`Simulator::cantilever_sag`].
    fn default() -> Self {
        DloParams {
            num_particles: 16,
            total_length: 1.03,
            mass: 0.2,
            stretch_stiffness: 20_000.0,
            bend_stiffness: 1.3,
            damping_ratio: 0.01,
            gravity: DVec3::new(0.0, 0.0, -9.81),
            ground_anchor: DVec3::ZERO,
            base_direction: DVec3::Z,
        }
    }
}

impl DloParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_particles < 4 {
            return Err(Error::Config(format!(
                "num_particles must be at least 4, got {}",
                self.num_particles
            )));
        }
        for (name, v) in [
            ("total_length", self.total_length),
            ("mass", self.mass),
            ("stretch_stiffness", self.stretch_stiffness),
            ("bend_stiffness", self.bend_stiffness),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.damping_ratio.is_finite() && self.damping_ratio >= 0.0) {
            return Err(Error::Config("damping_ratio must be non-negative".into()));
        }
        if !self.gravity.is_finite() || !self.ground_anchor.is_finite() {
            return Err(Error::Config("gravity and anchor must be finite".into()));
        }
        if !(self.base_direction.length() > 0.0) {
            return Err(Error::Config("base_direction must be non-zero".into()));
        }
        Ok(())
    }

    pub fn rest_length(&self) -> f64 {
        self.total_length / (self.num_particles - 1) as f64
    }

    pub fn particle_mass(&self) -> f64 {
        self.mass / self.num_particles as f64
    }

    /// Viscous coefficient `c = 2 * zeta * sqrt(k_s * m)`.
    pub fn damping_coefficient(&self) -> f64 {
        2.0 * self.damping_ratio * (self.stretch_stiffness * self.particle_mass()).sqrt()
    }

    fn bend_coefficient(&self) -> f64 {
        self.bend_stiffness / self.rest_length().powi(3)
    }

    /// Upper bound on the highest natural frequency (Gershgorin estimate).
    pub fn max_angular_frequency(&self) -> f64 {
        ((4.0 * self.stretch_stiffness + 16.0 * self.bend_coefficient()) / self.particle_mass()).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Seconds per control step.
    pub control_dt: f64,
    pub substeps: usize,
    /// Seconds the chain relaxes with the gripper held after a reset.
    pub settle_time: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            control_dt: 0.06,
            substeps: 220,
            settle_time: 3.0,
        }
    }
}

impl SimConfig {
    pub fn substep_dt(&self) -> f64 {
        self.control_dt / self.substeps as f64
    }

    pub fn validate(&self, params: &DloParams) -> Result<()> {
        if !(self.control_dt.is_finite() && self.control_dt > 0.0) || self.substeps == 0 {
            return Err(Error::Config("control_dt and substeps must be positive".into()));
        }
        if !(self.settle_time.is_finite() && self.settle_time >= 0.0) {
            return Err(Error::Config("settle_time must be non-negative".into()));
        }
        let ratio = params.max_angular_frequency() * self.substep_dt();
        if ratio > STABILITY_LIMIT {
            let needed = (params.max_angular_frequency() * self.control_dt / STABILITY_LIMIT).ceil();
            return Err(Error::Config(format!(
                "substep too coarse for the stiffness: omega*dt = {ratio:.3} > {STABILITY_LIMIT}; \
                 use at least {needed} substeps"
            )));
        }
        Ok(())
    }
}

/// Gripper position (meters) and Euler orientation (radians).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperPose {
    pub position: DVec3,
    pub orientation: DVec3,
}

impl GripperPose {
    pub fn new(position: DVec3, orientation: DVec3) -> Self {
        GripperPose {
            position,
            orientation: wrap_euler(orientation),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.orientation.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DloState {
    pub positions: Vec<DVec3>,
    pub velocities: Vec<DVec3>,
    /// Seconds since the end of the reset relaxation.
    pub time: f64,
    /// Last commanded gripper pose.
    pub gripper: GripperPose,
    substeps_run: u64,
}

impl DloState {
    pub fn num_particles(&self) -> usize {
        self.positions.len()
    }

    pub fn kinetic_energy(&self, particle_mass: f64) -> f64 {
        0.5 * particle_mass * self.velocities.iter().map(|v| v.length_squared()).sum::<f64>()
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.length()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|p| p.is_finite())
    }

    /// `m` particle positions ordered base to tip; see [`feature_indices`].
    pub fn feature_points(&self, m: usize) -> Result<Vec<DVec3>> {
        Ok(feature_indices(self.num_particles(), m)?
            .into_iter()
            .map(|i| self.positions[i])
            .collect())
    }

    /// The rigid tip follows the gripper, so this is the commanded orientation.
    pub fn tip_orientation(&self) -> DVec3 {
        wrap_euler(self.gripper.orientation)
    }

    /// Chord from anchor to tip over arc length along the particles; 1 is straight.
    pub fn straightness(&self) -> f64 {
        straightness(&self.positions)
    }

    pub fn total_substeps(&self) -> u64 {
        self.substeps_run
    }
}

/// For `m < n`, indices `round(k (n - 1) / m)` for `k = 1..=m`, which always
/// ends at the tip. `m == n` returns every particle.
pub fn feature_indices(n: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::Usage(format!(
            "feature point count must lie in 1..={n}, got {m}"
        )));
    }
    if m == n {
        return Ok((0..n).collect());
    }
    Ok((1..=m)
        .map(|k| ((k * (n - 1)) as f64 / m as f64).round() as usize)
        .collect())
}

pub fn straightness(points: &[DVec3]) -> f64 {
    let arc: f64 = points.windows(2).map(|w| w[0].distance(w[1])).sum();
    if arc == 0.0 {
        return 1.0;
    }
    points[0].distance(points[points.len() - 1]) / arc
}

/// Result of holding the gripper until the chain comes to rest.
#[derive(Clone, Debug)]
pub struct Quiescence {
    pub state: DloState,
    /// Largest particle displacement over the final quiet window, meters.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulator {
    params: DloParams,
    config: SimConfig,
}

impl Simulator {
    pub fn new(params: DloParams, config: SimConfig) -> Result<Self> {
        params.validate()?;
        config.validate(&params)?;
        Ok(Simulator { params, config })
    }

    pub fn params(&self) -> &DloParams {
        &self.params
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Hex digest identifying the physics, recorded in generated datasets.
    pub fn parameter_hash(&self) -> String {
        let p = &self.params;
        let c = &self.config;
        let mut h = Sha256::new();
        let vec_bits = |v: DVec3| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
        h.update((p.num_particles as u64).to_le_bytes());
        for v in [
            p.total_length,
            p.mass,
            p.stretch_stiffness,
            p.bend_stiffness,
            p.damping_ratio,
            c.control_dt,
            c.settle_time,
        ] {
            h.update(v.to_bits().to_le_bytes());
        }
        for v in [p.gravity, p.ground_anchor, p.base_direction] {
            for b in vec_bits(v) {
                h.update(b.to_le_bytes());
            }
        }
        h.update((c.substeps as u64).to_le_bytes());
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Places the chain on a smooth curve leaving the anchor along the clamp
    /// direction and entering the gripper along its axis, with the specified
    /// arc length, then relaxes it for `settle_time` with the gripper held.
    pub fn reset(&self, gripper: GripperPose) -> Result<DloState> {
        let p = &self.params;
        let n = p.num_particles;
        let l0 = p.rest_length();
        if !gripper.is_finite() {
            return Err(Error::Config("gripper pose must be finite".into()));
        }
        let gripper = GripperPose::new(gripper.position, gripper.orientation);
        let reach = gripper.position.distance(p.ground_anchor);
        if reach > p.total_length {
            return Err(Error::Config(format!(
                "gripper at {reach:.3} m from the anchor is beyond the {:.3} m object",
                p.total_length
            )));
        }
        let axis = grasp_axis(gripper.orientation);
        let inner = gripper.position - l0 * axis;
        let base = p.base_direction.normalize();
        let points = hermite_with_length(p.ground_anchor, base, inner, axis, p.total_length - l0, n - 1)
            .ok_or_else(|| {
                Error::Config(format!(
                    "gripper pose {:?} is unreachable with orientation {:?}",
                    gripper.position, gripper.orientation
                ))
            })?;
        let mut positions = points;
        positions.push(gripper.position);
        let mut state = DloState {
            velocities: vec![DVec3::ZERO; n],
            positions,
            time: 0.0,
            gripper,
            substeps_run: 0,
        };
        let settle_steps = (self.config.settle_time / self.config.control_dt).round() as usize;
        for _ in 0..settle_steps {
            self.step_in_place(&mut state, gripper)?;
        }
        state.time = 0.0;
        Ok(state)
    }

    pub fn step(&self, state: &DloState, command: GripperPose) -> Result<DloState> {
        let mut next = state.clone();
        self.step_in_place(&mut next, command)?;
        Ok(next)
    }

    /// Advances one control step. The gripper pose is interpolated linearly
    /// (shortest arc for angles) from the previous command across the substeps.
    pub fn step_in_place(&self, state: &mut DloState, command: GripperPose) -> Result<()> {
        if !command.is_finite() {
            return Err(Error::Config("gripper command must be finite".into()));
        }
        let n = state.num_particles();
        if n != self.params.num_particles {
            return Err(Error::dim("state particles", self.params.num_particles, n));
        }
        let start = state.gripper;
        let target = GripperPose::new(command.position, command.orientation);
        let turn = angular_difference(target.orientation, start.orientation);
        let substeps = self.config.substeps;
        let dt = self.config.substep_dt();
        let l0 = self.params.rest_length();
        let mut forces = vec![DVec3::ZERO; n];

        for s in 1..=substeps {
            let alpha = s as f64 / substeps as f64;
            let (tip, orientation) = if s == substeps {
                (target.position, target.orientation)
            } else {
                (
                    start.position.lerp(target.position, alpha),
                    start.orientation + turn * alpha,
                )
            };
            let inner = tip - l0 * grasp_axis(orientation);
            for (idx, goal) in [(n - 2, inner), (n - 1, tip)] {
                state.velocities[idx] = (goal - state.positions[idx]) / dt;
                state.positions[idx] = goal;
            }
            self.integrate_free(&mut state.positions, &mut state.velocities, &mut forces, 1..n - 2, dt);
            state.substeps_run += 1;
            if !state
                .positions
                .iter()
                .all(|q| q.is_finite() && q.abs().max_element() <= DIVERGENCE_LIMIT)
            {
                return Err(Error::Divergence {
                    substep: state.substeps_run,
                });
            }
        }
        state.gripper = target;
        state.time += self.config.control_dt;
        Ok(())
    }

    /// Holds the gripper until the maximum particle speed stays below
    /// `speed_tol` for `window` seconds, giving up after `max_time` seconds.
    pub fn settle_to_quiescence(
        &self,
        state: &DloState,
        speed_tol: f64,
        window: f64,
        max_time: f64,
    ) -> Result<Quiescence> {
        let hold = state.gripper;
        let mut state = state.clone();
        let window_steps = (window / self.config.control_dt).ceil().max(1.0) as usize;
        let max_steps = (max_time / self.config.control_dt).ceil() as usize;
        let mut quiet = 0usize;
        let mut window_start = state.positions.clone();
        for _ in 0..max_steps {
            self.step_in_place(&mut state, hold)?;
            if state.max_speed() < speed_tol {
                if quiet == 0 {
                    window_start = state.positions.clone();
                }
                quiet += 1;
                if quiet >= window_steps {
                    let residual = window_start
                        .iter()
                        .zip(&state.positions)
                        .map(|(a, b)| a.distance(*b))
                        .fold(0.0, f64::max);
                    return Ok(Quiescence { state, residual });
                }
            } else {
                quiet = 0;
            }
        }
        Err(Error::Usage(format!(
            "chain did not settle below {speed_tol} m/s within {max_time} s"
        )))
    }

    /// Static tip deflection of the chain clamped along `+x` with a free tip,
    /// with gravity along `-z`: the calibration probe for `bend_stiffness`.
    pub fn cantilever_sag(&self) -> Result<f64> {
        let p = DloParams {
            base_direction: DVec3::X,
            gravity: DVec3::new(0.0, 0.0, -self.params.gravity.length()),
            ..self.params.clone()
        };
        let probe = Simulator {
            params: p.clone(),
            config: self.config.clone(),
        };
        let n = p.num_particles;
        let l0 = p.rest_length();
        let mut positions: Vec<DVec3> = (0..n)
            .map(|i| p.ground_anchor + DVec3::X * (i as f64 * l0))
            .collect();
        let mut velocities = vec![DVec3::ZERO; n];
        let mut forces = vec![DVec3::ZERO; n];
        let dt = self.config.substep_dt();
        let total = (20.0 / dt) as usize;
        for _ in 0..total {
            probe.integrate_free(&mut positions, &mut velocities, &mut forces, 1..n, dt);
            if !positions.iter().all(|q| q.is_finite()) {
                return Err(Error::Divergence { substep: 0 });
            }
        }
        Ok(p.ground_anchor.z - positions[n - 1].z)
    }

    fn integrate_free(
        &self,
        positions: &mut [DVec3],
        velocities: &mut [DVec3],
        forces: &mut [DVec3],
        free: std::ops::Range<usize>,
        dt: f64,
    ) {
        let p = &self.params;
        let mass = p.particle_mass();
        let damping = p.damping_coefficient();
        self.internal_forces(positions, forces);
        for i in free {
            let f = forces[i] + p.gravity * mass - damping * velocities[i];
            velocities[i] += f * (dt / mass);
            positions[i] += velocities[i] * dt;
        }
    }

    /// Stretch and bending forces, written into `forces`.
    fn internal_forces(&self, positions: &[DVec3], forces: &mut [DVec3]) {
        let p = &self.params;
        let n = positions.len();
        let ks = p.stretch_stiffness;
        let kb = p.bend_coefficient();
        let l0 = p.rest_length();

        for f in forces.iter_mut() {
            *f = DVec3::ZERO;
        }
        for i in 0..n - 1 {
            let d = positions[i + 1] - positions[i];
            let len = d.length();
            if len > 0.0 {
                let f = d * (ks * (len - l0) / len);
                forces[i] += f;
                forces[i + 1] -= f;
            }
        }
        // Discrete curvature energy (kt / 2) * |t_i - t_{i-1}|^2 over unit
        // segment tangents, with the clamp direction as the tangent before the
        // first segment. Unlike a second difference of positions it does not
        // reward shortening a curved chain.
        let kt = kb * l0 * l0;
        let mut prev_t = p.base_direction.normalize();
        let mut prev_len = 0.0;
        for i in 0..n - 1 {
            let e = positions[i + 1] - positions[i];
            let len = e.length();
            if len == 0.0 {
                prev_len = 0.0;
                continue;
            }
            let t = e / len;
            let g = kt * (t - prev_t);
            // dE/de = (I - t t^T) g / |e|
            let de = (g - t * t.dot(g)) / len;
            forces[i] += de;
            forces[i + 1] -= de;
            if i > 0 && prev_len > 0.0 {
                let dp = (g - prev_t * prev_t.dot(g)) / prev_len;
                forces[i] += dp;
                forces[i - 1] -= dp;
            }
            prev_t = t;
            prev_len = len;
        }
    }

    /// Potential energy of the stretch and bending terms, excluding gravity.
    pub fn internal_energy(&self, positions: &[DVec3]) -> f64 {
        let p = &self.params;
        let l0 = p.rest_length();
        let kt = p.bend_coefficient() * l0 * l0;
        let mut energy = 0.0;
        let mut prev_t = p.base_direction.normalize();
        for w in positions.windows(2) {
            let e = w[1] - w[0];
            let len = e.length();
            energy += 0.5 * p.stretch_stiffness * (len - l0).powi(2);
            if len > 0.0 {
                let t = e / len;
                energy += 0.5 * kt * (t - prev_t).length_squared();
                prev_t = t;
            }
        }
        energy
    }
}

/// Cubic Hermite curve from `p0` (tangent `t0`) to `p1` (tangent `t1`) whose
/// arc length equals `length`, resampled at `count` points of equal spacing.
fn hermite_with_length(
    p0: DVec3,
    t0: DVec3,
    p1: DVec3,
    t1: DVec3,
    length: f64,
    count: usize,
) -> Option<Vec<DVec3>> {
    const SAMPLES: usize = 512;
    let curve = |scale: f64, u: f64| {
        let (u2, u3) = (u * u, u * u * u);
        p0 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + t0 * (scale * (u3 - 2.0 * u2 + u))
            + p1 * (-2.0 * u3 + 3.0 * u2)
            + t1 * (scale * (u3 - u2))
    };
    let polyline = |scale: f64| -> Vec<DVec3> {
        (0..=SAMPLES)
            .map(|i| curve(scale, i as f64 / SAMPLES as f64))
            .collect()
    };
    let arc = |pts: &[DVec3]| pts.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>();

    let chord = p0.distance(p1);
    if chord > length + 1e-12 {
        return None;
    }
    let mut pts = polyline(0.0);
    if length - arc(&pts) > 1e-12 {
        let mut hi = chord.max(length);
        let mut grown = 0;
        while arc(&polyline(hi)) < length {
            hi *= 2.0;
            grown += 1;
            if grown > 40 {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if arc(&polyline(mid)) < length {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        pts = polyline(0.5 * (lo + hi));
    }

    let mut cumulative = Vec::with_capacity(pts.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in pts.windows(2) {
        acc += w[0].distance(w[1]);
        cumulative.push(acc);
    }
    let total = acc;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for k in 0..count {
        if k == 0 {
            out.push(p0);
            continue;
        }
        if k == count - 1 {
            out.push(p1);
            continue;
        }
        let target = total * k as f64 / (count - 1) as f64;
        while cumulative[j + 1] < target {
            j += 1;
        }
        let span = cumulative[j + 1] - cumulative[j];
        let t = if span > 0.0 { (target - cumulative[j]) / span } else { 0.0 };
        out.push(pts[j].lerp(pts[j + 1], t));
    }
    Some(out)
}

/// Column names for [`trajectory_row`].
pub fn trajectory_header(num_particles: usize) -> String {
    let mut cols = vec![
        "time".to_string(),
        "x".into(),
        "y".into(),
        "z".into(),
        "roll".into(),
        "pitch".into(),
        "yaw".into(),
    ];
    for i in 0..num_particles {
        for axis in ["x", "y", "z"] {
            cols.push(format!("p{i}_{axis}"));
        }
    }
    cols.join(",")
}

/// `time, gripper pose (6), particle positions (3 per particle)`.
pub fn trajectory_row(state: &DloState) -> String {
    let g = state.gripper;
    let mut vals = vec![
        state.time,
        g.position.x,
        g.position.y,
        g.position.z,
        g.orientation.x,
        g.orientation.y,
        g.orientation.z,
    ];
    for p in &state.positions {
        vals.extend([p.x, p.y, p.z]);
    }
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}
