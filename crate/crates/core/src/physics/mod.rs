//! Deterministic rigid-body drop simulation.
//!
//! Dynamic bodies are convex hulls; the environment is a static triangle
//! mesh whose triangles push along their front side only. Each step applies
//! gravity, builds contact manifolds (GJK/EPA plus face clipping, with
//! speculative contacts inside a small margin), runs a warm-started
//! sequential-impulse solver and integrates with semi-implicit Euler.
//! Bodies and contacts are always processed in index order, so a run is a
//! fixed sequence of floating-point operations.

mod contact;
mod gjk;
mod hull;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

pub use gjk::{epa, gjk, Gjk, Penetration, Support};
pub use hull::{ConvexHull, HullFace};

use crate::compose::RigidTransform;
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use contact::{manifold, ContactPoint, PlacedHull, Triangle};

/// Simulation constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    pub dt: f64,
    pub gravity: [f64; 3],
    pub friction: f64,
    pub restitution: f64,
    /// Approach speed below which contacts do not bounce, m/s.
    pub restitution_threshold: f64,
    pub iterations: usize,
    pub baumgarte: f64,
    pub slop: f64,
    /// Gap within which speculative contacts are created, m.
    pub contact_margin: f64,
    pub linear_sleep: f64,
    pub angular_sleep: f64,
    pub settle_steps: usize,
    pub max_time: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            dt: 1.0 / 240.0,
            gravity: [0.0, 0.0, -9.81],
            friction: 0.5,
            restitution: 0.1,
            restitution_threshold: 0.1,
            iterations: 10,
            baumgarte: 0.2,
            slop: 5e-4,
            contact_margin: 5e-3,
            linear_sleep: 1e-3,
            angular_sleep: 1e-2,
            settle_steps: 120,
            max_time: 10.0,
        }
    }
}

/// Kinematic state about the centre of mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub mass: f64,
    /// Body-frame inertia tensor, kg m².
    pub inertia: Matrix3<f64>,
}

impl RigidBodyState {
    pub fn at_rest(position: Vector3<f64>, orientation: UnitQuaternion<f64>, mass: f64, inertia: Matrix3<f64>) -> Self {
        RigidBodyState {
            position,
            orientation,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            mass,
            inertia,
        }
    }

    pub fn check(&self) -> Result<()> {
        let sym = (self.inertia - self.inertia.transpose()).abs().max() <= 1e-12 * self.inertia.abs().max();
        let pd = self.inertia.symmetric_eigenvalues().iter().all(|&e| e > 0.0);
        if !(self.mass > 0.0) || !sym || !pd {
            return Err(Error::Parameter(format!(
                "body needs positive mass and a symmetric positive-definite inertia, got {} and {}",
                self.mass, self.inertia
            )));
        }
        Ok(())
    }

    fn world_inertia(&self) -> Matrix3<f64> {
        let r = self.orientation.to_rotation_matrix().into_inner();
        r * self.inertia * r.transpose()
    }

    pub fn linear_momentum(&self) -> Vector3<f64> {
        self.linear_velocity * self.mass
    }

    /// Angular momentum about the centre of mass, world frame.
    pub fn angular_momentum(&self) -> Vector3<f64> {
        self.world_inertia() * self.angular_velocity
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.linear_velocity.norm_squared()
            + 0.5 * self.angular_velocity.dot(&(self.world_inertia() * self.angular_velocity))
    }
}

/// What a dynamic body is made of.
#[derive(Debug, Clone)]
pub struct BodyDesc {
    pub object_id: u32,
    pub shape: Arc<ConvexHull>,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct Body {
    pub object_id: u32,
    pub shape: Arc<ConvexHull>,
    pub state: RigidBodyState,
    pub escaped: bool,
    /// Consecutive steps below both sleep thresholds.
    pub calm_steps: usize,
    inv_inertia: Matrix3<f64>,
}

impl Body {
    /// Pose of the model frame the hull was built in.
    pub fn object_to_world(&self) -> RigidTransform {
        let q = self.state.orientation;
        RigidTransform::new(q, self.state.position - q * self.shape.model_com)
    }

    fn inv_world_inertia(&self) -> Matrix3<f64> {
        let r = self.state.orientation.to_rotation_matrix().into_inner();
        r * self.inv_inertia * r.transpose()
    }

    fn placed(&self) -> PlacedHull<'_> {
        PlacedHull {
            hull: &self.shape,
            rot: self.state.orientation.to_rotation_matrix().into_inner(),
            pos: self.state.position,
        }
    }
}

/// Static collision geometry.
#[derive(Debug, Clone)]
pub struct StaticEnvironment {
    triangles: Vec<Triangle>,
    boxes: Vec<(Vector3<f64>, Vector3<f64>)>,
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

impl StaticEnvironment {
    /// Degenerate triangles are dropped.
    pub fn from_mesh(mesh: &TriangleMesh) -> Result<Self> {
        let triangles: Vec<Triangle> = mesh
            .triangles
            .iter()
            .filter_map(|t| Triangle::new(mesh.corners(t)))
            .collect();
        if triangles.is_empty() {
            return Err(Error::InvalidAsset("environment mesh has no triangles".into()));
        }
        let boxes: Vec<_> = triangles
            .iter()
            .map(|t| {
                (
                    t.v[0].inf(&t.v[1]).inf(&t.v[2]),
                    t.v[0].sup(&t.v[1]).sup(&t.v[2]),
                )
            })
            .collect();
        let lo = boxes.iter().fold(boxes[0].0, |a, b| a.inf(&b.0));
        let hi = boxes.iter().fold(boxes[0].1, |a, b| a.sup(&b.1));
        Ok(StaticEnvironment { triangles, boxes, lo, hi })
    }

    /// Box a body must stay inside: the environment box scaled by two about
    /// its centre, with flat axes padded to the largest half-extent.
    pub fn escape_bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let c = (self.lo + self.hi) * 0.5;
        let half = (self.hi - self.lo) * 0.5;
        let m = half.max();
        let h = half.map(|x| 2.0 * x.max(m));
        (c - h, c + h)
    }

    /// Highest environment point over the xy rectangle.
    pub fn max_height_in(&self, region: &DropRegion) -> Option<f64> {
        self.boxes
            .iter()
            .filter(|(lo, hi)| lo.x <= region.x[1] && hi.x >= region.x[0] && lo.y <= region.y[1] && hi.y >= region.y[0])
            .map(|(_, hi)| hi.z)
            .reduce(f64::max)
    }
}

/// Axis-aligned xy rectangle, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropRegion {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

/// Initial states for dropping `bodies` over `region`.
///
/// Each body gets a uniform xy in the region, a height of the highest
/// environment point below plus its bounding radius plus U(0.05, 0.15) m,
/// and a uniform random orientation. Bounding spheres are kept apart by
/// rejection sampling; after 100 failed tries a body is stacked above the
/// ones already placed.
pub fn spawn_drop<R: Rng>(
    bodies: &[BodyDesc],
    region: &DropRegion,
    env: &StaticEnvironment,
    rng: &mut R,
) -> Result<Vec<RigidBodyState>> {
    let eps = 1e-9 * (env.hi - env.lo).norm().max(1.0);
    let inside = region.x[0] <= region.x[1]
        && region.y[0] <= region.y[1]
        && region.x[0] >= env.lo.x - eps
        && region.x[1] <= env.hi.x + eps
        && region.y[0] >= env.lo.y - eps
        && region.y[1] <= env.hi.y + eps;
    if !inside {
        return Err(Error::Placement(format!(
            "drop region {region:?} is not inside the environment xy bounds [{}, {}] x [{}, {}]",
            env.lo.x, env.hi.x, env.lo.y, env.hi.y
        )));
    }
    let base = env
        .max_height_in(region)
        .ok_or_else(|| Error::Placement("no environment geometry under the drop region".into()))?;
    let ceiling = env.escape_bounds().1.z;
    let lift = Uniform::new_inclusive(0.05, 0.15).unwrap();
    let mut placed: Vec<(Vector3<f64>, f64)> = Vec::new();
    let mut out = Vec::with_capacity(bodies.len());
    for (i, desc) in bodies.iter().enumerate() {
        let r = desc.shape.radius;
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let orientation = UnitQuaternion::from_quaternion(q);
        let pick = |rng: &mut R, z: f64| {
            Vector3::new(
                rng.random_range(region.x[0]..=region.x[1]),
                rng.random_range(region.y[0]..=region.y[1]),
                z,
            )
        };
        let mut position = None;
        for _ in 0..100 {
            let z = base + r + rng.sample(lift);
            let p = pick(rng, z);
            if placed.iter().all(|(c, rc)| (c - p).norm() > r + rc) {
                position = Some(p);
                break;
            }
        }
        let position = match position {
            Some(p) => p,
            None => {
                let top = placed.iter().map(|(c, rc)| c.z + rc).fold(base, f64::max);
                let z = top + r + rng.sample(lift);
                if z + r > ceiling {
                    return Err(Error::Placement(format!(
                        "cannot fit body {i} (object {}): stacking would exceed the simulation bounds",
                        desc.object_id
                    )));
                }
                pick(rng, z)
            }
        };
        placed.push((position, r));
        out.push(RigidBodyState::at_rest(position, orientation, desc.mass, desc.shape.inertia(desc.mass)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct SolverContact {
    a: Option<usize>,
    b: usize,
    normal: Vector3<f64>,
    t1: Vector3<f64>,
    t2: Vector3<f64>,
    ra: Vector3<f64>,
    rb: Vector3<f64>,
    mass_n: f64,
    mass_t1: f64,
    mass_t2: f64,
    target: f64,
    acc_n: f64,
    acc_t1: f64,
    acc_t2: f64,
    local_b: Vector3<f64>,
}

#[derive(Debug, Clone, Copy)]
struct CachedImpulse {
    a: Option<usize>,
    b: usize,
    local_b: Vector3<f64>,
    impulse: [f64; 3],
}

/// Distance under which a new contact inherits a previous step's impulse.
const WARM_START_RADIUS: f64 = 2e-3;

pub struct World {
    pub params: PhysicsParams,
    pub env: StaticEnvironment,
    pub bodies: Vec<Body>,
    pub time: f64,
    pub steps: u64,
    cache: Vec<CachedImpulse>,
}

impl World {
    pub fn new(env: StaticEnvironment, params: PhysicsParams) -> Self {
        World {
            params,
            env,
            bodies: Vec::new(),
            time: 0.0,
            steps: 0,
            cache: Vec::new(),
        }
    }

    pub fn add_body(&mut self, desc: &BodyDesc, state: RigidBodyState) -> Result<usize> {
        state.check()?;
        let inv_inertia = state
            .inertia
            .try_inverse()
            .ok_or_else(|| Error::Parameter("singular inertia".into()))?;
        self.bodies.push(Body {
            object_id: desc.object_id,
            shape: desc.shape.clone(),
            state,
            escaped: false,
            calm_steps: 0,
            inv_inertia,
        });
        Ok(self.bodies.len() - 1)
    }

    fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.params.gravity)
    }

    /// Advances the world by one time step.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.params.dt;
        let g = self.gravity();
        for b in self.bodies.iter_mut().filter(|b| !b.escaped) {
            b.state.linear_velocity += g * dt;
        }
        let mut contacts = self.prepare_contacts(self.detect());
        self.warm_start(&mut contacts);
        for _ in 0..self.params.iterations {
            for c in contacts.iter_mut() {
                self.solve_contact(c);
            }
        }
        self.cache = contacts
            .iter()
            .map(|c| CachedImpulse {
                a: c.a,
                b: c.b,
                local_b: c.local_b,
                impulse: [c.acc_n, c.acc_t1, c.acc_t2],
            })
            .collect();
        self.integrate()?;
        self.time = (self.steps + 1) as f64 * dt;
        self.steps += 1;
        self.update_status();
        Ok(())
    }

    fn integrate(&mut self) -> Result<()> {
        let dt = self.params.dt;
        let step = self.steps;
        for (i, b) in self.bodies.iter_mut().enumerate().filter(|(_, b)| !b.escaped) {
            let s = &mut b.state;
            s.position += s.linear_velocity * dt;
            let w = s.angular_velocity;
            if w != Vector3::zeros() {
                let momentum = s.world_inertia() * w;
                let q = s.orientation.into_inner();
                let dq = Quaternion::from_imag(w) * q * (0.5 * dt);
                s.orientation = UnitQuaternion::from_quaternion(q + dq);
                let r = s.orientation.to_rotation_matrix().into_inner();
                s.angular_velocity = r * b.inv_inertia * r.transpose() * momentum;
            }
            let finite = s.position.iter().chain(s.linear_velocity.iter()).chain(s.angular_velocity.iter()).all(|x| x.is_finite())
                && s.orientation.coords.iter().all(|x| x.is_finite());
            if !finite {
                return Err(Error::SimulationDiverged { body: i, step });
            }
        }
        Ok(())
    }

    fn update_status(&mut self) {
        let (lo, hi) = self.env.escape_bounds();
        let p = &self.params;
        for (i, b) in self.bodies.iter_mut().enumerate().filter(|(_, b)| !b.escaped) {
            let x = b.state.position;
            if (0..3).any(|k| x[k] < lo[k] || x[k] > hi[k]) {
                warn!("body {i} (object {}) left the environment at t = {:.3} s", b.object_id, self.time);
                b.escaped = true;
                b.calm_steps = 0;
                continue;
            }
            if b.state.linear_velocity.norm() < p.linear_sleep && b.state.angular_velocity.norm() < p.angular_sleep {
                b.calm_steps += 1;
            } else {
                b.calm_steps = 0;
            }
        }
    }

    fn margin(&self, b: &Body, other: Option<&Body>) -> f64 {
        let sweep = |b: &Body| b.state.linear_velocity.norm() + b.state.angular_velocity.norm() * b.shape.radius;
        self.params.contact_margin + (sweep(b) + other.map_or(0.0, sweep)) * self.params.dt
    }

    fn detect(&self) -> Vec<(Option<usize>, usize, ContactPoint)> {
        let mut out = Vec::new();
        for (bi, b) in self.bodies.iter().enumerate() {
            if b.escaped {
                continue;
            }
            let placed = b.placed();
            let margin = self.margin(b, None);
            let reach = b.shape.radius + margin;
            let c = b.state.position;
            for (t, (lo, hi)) in self.env.triangles.iter().zip(&self.env.boxes) {
                if (0..3).any(|k| c[k] + reach < lo[k] || c[k] - reach > hi[k]) {
                    continue;
                }
                for cp in manifold(t, &placed, margin, Some(t.normal)) {
                    out.push((None, bi, cp));
                }
            }
            for (ai, a) in self.bodies.iter().enumerate().take(bi) {
                if a.escaped {
                    continue;
                }
                let margin = self.margin(b, Some(a));
                if (a.state.position - c).norm() > a.shape.radius + b.shape.radius + margin {
                    continue;
                }
                for cp in manifold(&a.placed(), &placed, margin, None) {
                    out.push((Some(ai), bi, cp));
                }
            }
        }
        out
    }

    fn prepare_contacts(&self, raw: Vec<(Option<usize>, usize, ContactPoint)>) -> Vec<SolverContact> {
        let p = &self.params;
        let dt = p.dt;
        raw.into_iter()
            .map(|(a, b, cp)| {
                let body_b = &self.bodies[b];
                let n = cp.normal;
                let t1 = if n.x.abs() < 0.9 { n.cross(&Vector3::x()) } else { n.cross(&Vector3::y()) }.normalize();
                let t2 = n.cross(&t1);
                let rb = cp.point - body_b.state.position;
                let ib = body_b.inv_world_inertia();
                let (ra, inv_ma, ia) = match a {
                    Some(ai) => {
                        let ba = &self.bodies[ai];
                        (cp.point - ba.state.position, 1.0 / ba.state.mass, ba.inv_world_inertia())
                    }
                    None => (Vector3::zeros(), 0.0, Matrix3::zeros()),
                };
                let k = |d: &Vector3<f64>| {
                    let ca = ra.cross(d);
                    let cb = rb.cross(d);
                    inv_ma + 1.0 / body_b.state.mass + ca.dot(&(ia * ca)) + cb.dot(&(ib * cb))
                };
                let vn = self.relative_velocity(a, b, &ra, &rb).dot(&n);
                let mut target = if cp.separation > 0.0 {
                    -cp.separation / dt
                } else {
                    p.baumgarte / dt * (-cp.separation - p.slop).max(0.0)
                };
                if vn < -p.restitution_threshold && vn * dt + cp.separation < 0.0 {
                    target = target.max(-p.restitution * vn);
                }
                let r = body_b.state.orientation.to_rotation_matrix().into_inner();
                SolverContact {
                    a,
                    b,
                    normal: n,
                    t1,
                    t2,
                    ra,
                    rb,
                    mass_n: 1.0 / k(&n),
                    mass_t1: 1.0 / k(&t1),
                    mass_t2: 1.0 / k(&t2),
                    target,
                    acc_n: 0.0,
                    acc_t1: 0.0,
                    acc_t2: 0.0,
                    local_b: r.transpose() * rb,
                }
            })
            .collect()
    }

    fn relative_velocity(&self, a: Option<usize>, b: usize, ra: &Vector3<f64>, rb: &Vector3<f64>) -> Vector3<f64> {
        let sb = &self.bodies[b].state;
        let vb = sb.linear_velocity + sb.angular_velocity.cross(rb);
        let va = a.map_or(Vector3::zeros(), |ai| {
            let sa = &self.bodies[ai].state;
            sa.linear_velocity + sa.angular_velocity.cross(ra)
        });
        vb - va
    }

    fn apply(&mut self, c: &SolverContact, impulse: Vector3<f64>) {
        let b = &mut self.bodies[c.b];
        let ib = b.inv_world_inertia();
        b.state.linear_velocity += impulse / b.state.mass;
        b.state.angular_velocity += ib * c.rb.cross(&impulse);
        if let Some(ai) = c.a {
            let a = &mut self.bodies[ai];
            let ia = a.inv_world_inertia();
            a.state.linear_velocity -= impulse / a.state.mass;
            a.state.angular_velocity -= ia * c.ra.cross(&impulse);
        }
    }

    fn warm_start(&mut self, contacts: &mut [SolverContact]) {
        let mut used = vec![false; self.cache.len()];
        for c in contacts.iter_mut() {
            let hit = self.cache.iter().enumerate().find(|(k, old)| {
                !used[*k] && old.a == c.a && old.b == c.b && (old.local_b - c.local_b).norm() < WARM_START_RADIUS
            });
            if let Some((k, old)) = hit {
                used[k] = true;
                [c.acc_n, c.acc_t1, c.acc_t2] = old.impulse;
            }
        }
        for c in contacts.iter() {
            let j = c.normal * c.acc_n + c.t1 * c.acc_t1 + c.t2 * c.acc_t2;
            if j != Vector3::zeros() {
                self.apply(c, j);
            }
        }
    }

    fn solve_contact(&mut self, c: &mut SolverContact) {
        let mu = self.params.friction;
        for (t, mass, acc) in [(c.t1, c.mass_t1, 0), (c.t2, c.mass_t2, 1)] {
            let vt = self.relative_velocity(c.a, c.b, &c.ra, &c.rb).dot(&t);
            let limit = mu * c.acc_n;
            let old = if acc == 0 { c.acc_t1 } else { c.acc_t2 };
            let new = (old - mass * vt).clamp(-limit, limit);
            if acc == 0 {
                c.acc_t1 = new;
            } else {
                c.acc_t2 = new;
            }
            self.apply(c, t * (new - old));
        }
        let vn = self.relative_velocity(c.a, c.b, &c.ra, &c.rb).dot(&c.normal);
        let old = c.acc_n;
        c.acc_n = (old + c.mass_n * (c.target - vn)).max(0.0);
        self.apply(c, c.normal * (c.acc_n - old));
    }

    /// Deepest interpenetration among active bodies and the environment,
    /// measured by EPA on the current poses.
    pub fn max_penetration(&self) -> f64 {
        self.detect().iter().map(|(_, _, c)| -c.separation).fold(0.0, f64::max)
    }

    fn all_settled(&self) -> bool {
        self.bodies
            .iter()
            .filter(|b| !b.escaped)
            .all(|b| b.calm_steps >= self.params.settle_steps)
    }
}

/// One recorded pose of a body's model frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyTrajectory {
    pub object_id: u32,
    pub body: usize,
    pub samples: Vec<TrajectorySample>,
    pub settled: bool,
    /// Time at which the body completed its final calm streak.
    pub settle_time: Option<f64>,
    pub escaped: bool,
}

impl BodyTrajectory {
    pub fn final_pose(&self) -> RigidTransform {
        self.samples.last().expect("trajectory has samples").pose
    }
}

/// Steps `world` until every remaining body has been calm for
/// `settle_steps` consecutive steps, or `max_time` has elapsed. The poses
/// of every step, including the initial one, are recorded.
pub fn simulate_until_settled(world: &mut World) -> Result<Vec<BodyTrajectory>> {
    let mut trajs: Vec<BodyTrajectory> = world
        .bodies
        .iter()
        .enumerate()
        .map(|(i, b)| BodyTrajectory {
            object_id: b.object_id,
            body: i,
            samples: vec![TrajectorySample {
                t: world.time,
                pose: b.object_to_world(),
            }],
            settled: false,
            settle_time: None,
            escaped: false,
        })
        .collect();
    let max_steps = (world.params.max_time / world.params.dt).round() as u64;
    let start = world.steps;
    while world.steps - start < max_steps && !(world.all_settled() && world.steps > start) {
        world.step()?;
        for (tr, b) in trajs.iter_mut().zip(&world.bodies) {
            tr.samples.push(TrajectorySample {
                t: world.time,
                pose: b.object_to_world(),
            });
            if b.calm_steps == world.params.settle_steps {
                tr.settle_time = Some(world.time);
            } else if b.calm_steps == 0 {
                tr.settle_time = None;
            }
        }
    }
    for (tr, b) in trajs.iter_mut().zip(&world.bodies) {
        tr.escaped = b.escaped;
        tr.settled = !b.escaped && b.calm_steps >= world.params.settle_steps;
        if !tr.settled {
            tr.settle_time = None;
        }
    }
    Ok(trajs)
}

#[derive(Serialize)]
struct TrajectoryLine {
    t: f64,
    object_id: u32,
    body: usize,
    q: [f64; 4],
    p: [f64; 3],
}

/// Writes one JSON object per body per step, ordered by time then body.
pub fn write_trajectories_jsonl(trajs: &[BodyTrajectory], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    let steps = trajs.iter().map(|t| t.samples.len()).max().unwrap_or(0);
    for k in 0..steps {
        for tr in trajs {
            let Some(s) = tr.samples.get(k) else { continue };
            let q = s.pose.rotation.quaternion();
            let line = TrajectoryLine {
                t: s.t,
                object_id: tr.object_id,
                body: tr.body,
                q: [q.w, q.i, q.j, q.k],
                p: s.pose.translation.into(),
            };
            serde_json::to_writer(&mut out, &line).expect("serializable");
            out.write_all(b"\n").expect("in-memory write");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn floor(half: f64) -> StaticEnvironment {
        let v = vec![
            Vector3::new(-half, -half, 0.0),
            Vector3::new(half, -half, 0.0),
            Vector3::new(half, half, 0.0),
            Vector3::new(-half, half, 0.0),
        ];
        StaticEnvironment::from_mesh(&TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]])).unwrap()
    }

    fn cube(h: f64) -> Arc<ConvexHull> {
        let pts: Vec<Vector3<f64>> = (0..8)
            .map(|i| Vector3::new(
                if i & 1 == 0 { -h } else { h },
                if i & 2 == 0 { -h } else { h },
                if i & 4 == 0 { -h } else { h },
            ))
            .collect();
        Arc::new(ConvexHull::from_points(&pts).unwrap())
    }

    #[test]
    fn free_fall_matches_closed_form() {
        let mut w = World::new(floor(1.0), PhysicsParams::default());
        let desc = BodyDesc { object_id: 1, shape: cube(0.02), mass: 0.1 };
        let z0 = 0.9;
        w.add_body(&desc, RigidBodyState::at_rest(Vector3::new(0.0, 0.0, z0), UnitQuaternion::identity(), 0.1, desc.shape.inertia(0.1))).unwrap();
        let g = 9.81;
        let dt = w.params.dt;
        for n in 1..=60u64 {
            w.step().unwrap();
            let expect = z0 - g * dt * dt * (n * (n + 1)) as f64 / 2.0;
            assert!((w.bodies[0].state.position.z - expect).abs() < 1e-12, "step {n}");
        }
    }

    #[test]
    fn zero_gravity_conserves_momentum() {
        let params = PhysicsParams { gravity: [0.0; 3], ..Default::default() };
        let mut w = World::new(floor(1.0), params);
        let pts: Vec<Vector3<f64>> = (0..8)
            .map(|i| Vector3::new(((i & 1) as f64) * 0.08, ((i >> 1 & 1) as f64) * 0.04, ((i >> 2 & 1) as f64) * 0.02))
            .collect();
        let desc = BodyDesc { object_id: 1, shape: Arc::new(ConvexHull::from_points(&pts).unwrap()), mass: 0.2 };
        let mut s = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 0.5), UnitQuaternion::from_euler_angles(0.3, 0.2, 0.1), 0.2, desc.shape.inertia(0.2));
        s.linear_velocity = Vector3::new(0.01, 0.0, 0.0);
        s.angular_velocity = Vector3::new(1.0, 2.0, -0.5);
        w.add_body(&desc, s).unwrap();
        let (p0, l0) = (s.linear_momentum(), s.angular_momentum());
        for _ in 0..200 {
            let before = w.bodies[0].state.angular_momentum();
            w.step().unwrap();
            let st = &w.bodies[0].state;
            assert!((st.linear_momentum() - p0).norm() < 1e-12);
            assert!((st.angular_momentum() - before).norm() < 1e-12);
        }
        assert!((w.bodies[0].state.angular_momentum() - l0).norm() < 1e-11);
    }

    #[test]
    fn resting_cube_settles_quickly() {
        let params = PhysicsParams::default();
        let mut w = World::new(floor(1.0), params);
        let desc = BodyDesc { object_id: 1, shape: cube(0.03), mass: 0.1 };
        w.add_body(&desc, RigidBodyState::at_rest(Vector3::new(0.0, 0.0, 0.03), UnitQuaternion::identity(), 0.1, desc.shape.inertia(0.1))).unwrap();
        let tr = simulate_until_settled(&mut w).unwrap();
        assert!(tr[0].settled);
        assert!(w.steps <= 121, "{} steps", w.steps);
        assert!((w.bodies[0].state.position.z - 0.03).abs() < 1e-3);
    }

    #[test]
    fn spawn_height_and_determinism() {
        let env = floor(1.0);
        let desc = BodyDesc { object_id: 1, shape: cube(0.05 / 3f64.sqrt()), mass: 0.1 };
        let region = DropRegion { x: [-0.5, 0.5], y: [-0.5, 0.5] };
        let a = spawn_drop(&[desc.clone()], &region, &env, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let z = a[0].position.z;
        assert!((0.10 - 1e-12..=0.20 + 1e-12).contains(&z), "{z}");
        let b = spawn_drop(&[desc], &region, &env, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crowded_region_stacks_then_fails() {
        let env = floor(1.0);
        let desc = BodyDesc { object_id: 1, shape: cube(0.05), mass: 0.1 };
        let region = DropRegion { x: [0.0, 0.0], y: [0.0, 0.0] };
        let few = spawn_drop(&vec![desc.clone(); 3], &region, &env, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(few[1].position.z > few[0].position.z);
        let many = spawn_drop(&vec![desc; 40], &region, &env, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(matches!(many, Err(Error::Placement(_))));
        let outside = DropRegion { x: [0.5, 1.5], y: [0.0, 0.1] };
        assert!(spawn_drop(&[], &outside, &env, &mut ChaCha8Rng::seed_from_u64(2)).is_err());
    }
}
