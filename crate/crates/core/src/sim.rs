//! Deterministic three-lane highway world.
//!
//! Vehicles are point masses integrated with a discrete-time double
//! integrator longitudinally and a kinematic lateral model. A lane change is
//! a latched maneuver: the lateral speed is held at `lane_width / T_lc` until
//! the vehicle reaches the target lane center, where it snaps exactly.
//!
//! Lane 0 is the rightmost lane at `y = 0`; "left" means a larger lane index.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{EpisodeConfig, SafetyParams, LANE_COUNT, MAX_TRAFFIC};
use crate::error::{Error, Result};
use crate::safety::{gap_rule, safe_fallback, time_to_collision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Longitudinal {
    Maintain,
    Accelerate,
    Brake,
    HardBrake,
}

impl Longitudinal {
    pub fn acceleration(self, cfg: &EpisodeConfig) -> f64 {
        match self {
            Longitudinal::Maintain => 0.0,
            Longitudinal::Accelerate => cfg.accel,
            Longitudinal::Brake => cfg.brake,
            Longitudinal::HardBrake => cfg.hard_brake,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lateral {
    Keep,
    Left,
    Right,
}

/// One of the eight discrete driving decisions.
///
/// | id | longitudinal | lateral |
/// |----|--------------|---------|
/// | 0  | maintain     | keep    |
/// | 1  | accelerate   | keep    |
/// | 2  | brake        | keep    |
/// | 3  | hard brake   | keep    |
/// | 4  | maintain     | left    |
/// | 5  | brake        | left    |
/// | 6  | maintain     | right   |
/// | 7  | brake        | right   |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Maintain = 0,
    Accelerate = 1,
    Brake = 2,
    HardBrake = 3,
    LeftMaintain = 4,
    LeftBrake = 5,
    RightMaintain = 6,
    RightBrake = 7,
}

impl Action {
    pub const COUNT: usize = 8;

    pub const ALL: [Action; Action::COUNT] = [
        Action::Maintain,
        Action::Accelerate,
        Action::Brake,
        Action::HardBrake,
        Action::LeftMaintain,
        Action::LeftBrake,
        Action::RightMaintain,
        Action::RightBrake,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Action> {
        Action::ALL.get(id).copied()
    }

    pub fn longitudinal(self) -> Longitudinal {
        match self {
            Action::Maintain | Action::LeftMaintain | Action::RightMaintain => Longitudinal::Maintain,
            Action::Accelerate => Longitudinal::Accelerate,
            Action::Brake | Action::LeftBrake | Action::RightBrake => Longitudinal::Brake,
            Action::HardBrake => Longitudinal::HardBrake,
        }
    }

    pub fn lateral(self) -> Lateral {
        match self {
            Action::LeftMaintain | Action::LeftBrake => Lateral::Left,
            Action::RightMaintain | Action::RightBrake => Lateral::Right,
            _ => Lateral::Keep,
        }
    }

    /// Inverse of the decomposition; `None` for the four pairs that are not
    /// in the action set (lane change while accelerating or hard braking).
    pub fn compose(lon: Longitudinal, lat: Lateral) -> Option<Action> {
        Action::ALL
            .into_iter()
            .find(|a| a.longitudinal() == lon && a.lateral() == lat)
    }

    pub fn keep_lane(lon: Longitudinal) -> Action {
        Action::compose(lon, Lateral::Keep).expect("every longitudinal choice keeps lane")
    }

    pub fn is_lane_change(self) -> bool {
        self.lateral() != Lateral::Keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneChange {
    pub target_lane: usize,
    pub steps_remaining: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    /// Commanded longitudinal acceleration for the current step.
    pub ax: f64,
    pub lane_change: Option<LaneChange>,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, vx: f64) -> Self {
        Self {
            x,
            y,
            vx,
            vy: 0.0,
            ax: 0.0,
            lane_change: None,
        }
    }

    pub fn in_lane(cfg: &EpisodeConfig, x: f64, lane: usize, vx: f64) -> Self {
        Self::new(x, cfg.lane_center(lane), vx)
    }

    pub fn lane(&self, cfg: &EpisodeConfig) -> usize {
        cfg.lane_of(self.y)
    }

    /// The lane this vehicle is in or merging into.
    fn occupies(&self, cfg: &EpisodeConfig, lane: usize) -> bool {
        self.lane(cfg) == lane || self.lane_change.is_some_and(|lc| lc.target_lane == lane)
    }
}

/// Longitudinal double integrator. Position advances with the pre-update
/// speed; the new speed is clipped to `[0, v_max]`.
pub fn step_longitudinal(s: &VehicleState, ax: f64, dt: f64, v_max: f64) -> VehicleState {
    VehicleState {
        x: s.x + s.vx * dt,
        vx: (s.vx + ax * dt).clamp(0.0, v_max),
        ax,
        ..*s
    }
}

/// Kinematic lateral step. During a latched maneuver the vehicle snaps to
/// the target lane center once it is within the snap tolerance, crosses the
/// center, or runs out of maneuver steps; the maneuver then clears.
pub fn step_lateral(s: &VehicleState, vy: f64, dt: f64, cfg: &EpisodeConfig) -> VehicleState {
    let y = s.y + vy * dt;
    let Some(lc) = s.lane_change else {
        return VehicleState { y, vy, ..*s };
    };
    let center = cfg.lane_center(lc.target_lane);
    let remaining = lc.steps_remaining.saturating_sub(1);
    let crossed = (center - s.y) * (center - y) <= 0.0;
    if (y - center).abs() < cfg.snap_tolerance || crossed || remaining == 0 {
        VehicleState {
            y: center,
            vy: 0.0,
            lane_change: None,
            ..*s
        }
    } else {
        VehicleState {
            y,
            vy,
            lane_change: Some(LaneChange {
                target_lane: lc.target_lane,
                steps_remaining: remaining,
            }),
            ..*s
        }
    }
}

/// Result of turning an action into vehicle commands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commanded {
    pub state: VehicleState,
    /// A lane change toward a lane that does not exist was replaced by
    /// lane keeping.
    pub rejected: bool,
}

/// Sets the commanded acceleration and lateral motion for `a` without
/// integrating. A latched maneuver ignores further lateral commands.
pub fn apply_action(s: &VehicleState, a: Action, cfg: &EpisodeConfig) -> Commanded {
    let mut next = VehicleState {
        ax: a.longitudinal().acceleration(cfg),
        ..*s
    };
    if s.lane_change.is_some() {
        return Commanded {
            state: next,
            rejected: false,
        };
    }
    let lane = s.lane(cfg);
    let target = match a.lateral() {
        Lateral::Keep => None,
        Lateral::Left => Some(lane + 1).filter(|&l| l < LANE_COUNT),
        Lateral::Right => lane.checked_sub(1),
    };
    match target {
        Some(target_lane) => {
            let dir = if target_lane > lane { 1.0 } else { -1.0 };
            next.vy = dir * cfg.lane_change_speed();
            next.lane_change = Some(LaneChange {
                target_lane,
                steps_remaining: cfg.lane_change_steps(),
            });
            Commanded {
                state: next,
                rejected: false,
            }
        }
        None => {
            next.vy = 0.0;
            Commanded {
                state: next,
                rejected: a.is_lane_change(),
            }
        }
    }
}

/// Integrates one step of the commanded motion.
pub fn advance(s: &VehicleState, dt: f64, v_cap: f64, cfg: &EpisodeConfig) -> VehicleState {
    let lon = step_longitudinal(s, s.ax, dt, v_cap);
    step_lateral(&lon, s.vy, dt, cfg)
}

/// Rectangle overlap with strict inequalities; touching is not a collision.
pub fn detect_collision(a: &VehicleState, b: &VehicleState, cfg: &EpisodeConfig) -> bool {
    (a.x - b.x).abs() < cfg.car_length && (a.y - b.y).abs() < cfg.car_width
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficVehicle {
    pub state: VehicleState,
    /// Cruise speed, also the vehicle's speed cap.
    pub desired_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub ego: VehicleState,
    pub traffic: Vec<TrafficVehicle>,
    pub t: usize,
    pub done: bool,
    /// Set when spawning could not place the requested traffic count.
    pub spawn_reduced: bool,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvents {
    pub collided: bool,
    /// The ego's proposed action failed the gap rule (set by the agent loop).
    pub static_violation: bool,
    /// The executed action differs from the proposed one (set by the agent loop).
    pub proposed_action_replaced: bool,
    pub lane_change_rejected: bool,
    pub episode_done: bool,
}

/// Spawns an episode with a traffic count drawn uniformly from the
/// configured range.
pub fn spawn_episode(cfg: &EpisodeConfig, mut rng: ChaCha8Rng) -> Result<WorldState> {
    if cfg.traffic_min > cfg.traffic_max || cfg.traffic_max > MAX_TRAFFIC {
        return Err(Error::contract(format!(
            "traffic range [{}, {}] is not within [0, {MAX_TRAFFIC}]",
            cfg.traffic_min, cfg.traffic_max
        )));
    }
    let count = rng.gen_range(cfg.traffic_min..=cfg.traffic_max);
    spawn_with_traffic(cfg, count, rng)
}

/// Spawns the ego in the center lane and `count` traffic vehicles in a
/// random subset of the six neighbor slots (front/rear of each lane).
pub fn spawn_with_traffic(cfg: &EpisodeConfig, count: usize, mut rng: ChaCha8Rng) -> Result<WorldState> {
    if count > MAX_TRAFFIC {
        return Err(Error::contract(format!(
            "traffic count {count} exceeds {MAX_TRAFFIC}"
        )));
    }
    let ego = VehicleState::in_lane(cfg, 0.0, 1, cfg.ego_initial_speed);
    let mut slots: Vec<(usize, f64)> = (0..LANE_COUNT)
        .flat_map(|lane| [(lane, 1.0), (lane, -1.0)])
        .collect();
    slots.shuffle(&mut rng);

    let mut traffic: Vec<TrafficVehicle> = Vec::with_capacity(count);
    let mut reduced = false;
    for &(lane, side) in slots.iter().take(count) {
        let mut placed = None;
        for _ in 0..cfg.spawn_retries.max(1) {
            let offset = rng.gen_range(cfg.spawn_gap_min..=cfg.spawn_gap_max);
            let desired = rng.gen_range(cfg.traffic_speed_min..=cfg.traffic_speed_max);
            let state = VehicleState::in_lane(cfg, side * offset, lane, desired);
            let clear = !detect_collision(&state, &ego, cfg)
                && traffic.iter().all(|t| !detect_collision(&state, &t.state, cfg));
            if clear {
                placed = Some(TrafficVehicle {
                    state,
                    desired_speed: desired,
                });
                break;
            }
        }
        match placed {
            Some(v) => traffic.push(v),
            None => reduced = true,
        }
    }
    Ok(WorldState {
        ego,
        traffic,
        t: 0,
        done: false,
        spawn_reduced: reduced,
        rng,
    })
}

/// Nearest vehicle ahead of `me` in `lane` (distance center to center).
fn lead_in_lane<'a>(
    me: &VehicleState,
    others: impl Iterator<Item = &'a VehicleState>,
    lane: usize,
    cfg: &EpisodeConfig,
) -> Option<&'a VehicleState> {
    others
        .filter(|o| o.occupies(cfg, lane) && o.x >= me.x)
        .min_by(|a, b| a.x.total_cmp(&b.x))
}

fn follower_in_lane<'a>(
    me: &VehicleState,
    others: impl Iterator<Item = &'a VehicleState>,
    lane: usize,
    cfg: &EpisodeConfig,
) -> Option<&'a VehicleState> {
    others
        .filter(|o| o.occupies(cfg, lane) && o.x < me.x)
        .max_by(|a, b| a.x.total_cmp(&b.x))
}

fn bumper_gap(front: &VehicleState, rear: &VehicleState, cfg: &EpisodeConfig) -> f64 {
    (front.x - rear.x - cfg.car_length).max(0.0)
}

/// Acceleration an intelligent-driver-model follower wants behind `lead`.
pub fn idm_acceleration(me: &TrafficVehicle, lead: &VehicleState, cfg: &EpisodeConfig) -> f64 {
    let s = &me.state;
    let gap = bumper_gap(lead, s, cfg).max(0.1);
    let closing = s.vx - lead.vx;
    let a = cfg.accel.max(0.1);
    let desired_gap = cfg.traffic_standstill_gap
        + (s.vx * cfg.traffic_time_headway + s.vx * closing / (2.0 * (a * cfg.traffic_comfort_decel).sqrt())).max(0.0);
    let free = if me.desired_speed > 0.0 {
        (s.vx / me.desired_speed).powi(4)
    } else {
        1.0
    };
    a * (1.0 - free - (desired_gap / gap).powi(2))
}

/// The discrete level nearest to `accel`; ties go to the stronger brake.
fn nearest_level(accel: f64, cfg: &EpisodeConfig) -> Longitudinal {
    [
        Longitudinal::HardBrake,
        Longitudinal::Brake,
        Longitudinal::Maintain,
        Longitudinal::Accelerate,
    ]
    .into_iter()
    .min_by(|x, y| {
        let dx = (x.acceleration(cfg) - accel).abs();
        let dy = (y.acceleration(cfg) - accel).abs();
        dx.total_cmp(&dy)
    })
    .expect("four levels")
}

/// Rule-based traffic controller.
///
/// Longitudinal: the weakest of three choices. Speed tracking accelerates
/// below `desired - band` and brakes above `desired + band`. Car following
/// rounds the intelligent-driver-model acceleration toward the lead to the
/// nearest discrete level. When the gap rule fails against the lead, the
/// fallback ladder's choice for its time to collision also applies.
/// Lateral: a lane change is proposed with probability
/// `lane_change_rate * dt` per step and executed only when the gap rule
/// holds toward both the front and rear vehicle of the target lane.
/// Exactly two uniforms are drawn per call.
pub fn traffic_policy(
    me: &TrafficVehicle,
    others: &[VehicleState],
    cfg: &EpisodeConfig,
    safety: &SafetyParams,
    rng: &mut ChaCha8Rng,
) -> Action {
    let propose: f64 = rng.gen();
    let side: f64 = rng.gen();
    let s = &me.state;
    let lane = s.lane(cfg);
    let in_range = |o: &&VehicleState| (o.x - s.x).abs() <= cfg.sensing_range;

    let mut lon = if s.vx < me.desired_speed - cfg.traffic_speed_band {
        Longitudinal::Accelerate
    } else if s.vx > me.desired_speed + cfg.traffic_speed_band {
        Longitudinal::Brake
    } else {
        Longitudinal::Maintain
    };
    if let Some(lead) = lead_in_lane(s, others.iter().filter(in_range), lane, cfg) {
        let mut weaker = |c: Longitudinal| {
            if c.acceleration(cfg) < lon.acceleration(cfg) {
                lon = c;
            }
        };
        weaker(nearest_level(idm_acceleration(me, lead, cfg), cfg));
        let gap = bumper_gap(lead, s, cfg);
        if !gap_rule(gap, s.vx - lead.vx, safety) {
            weaker(safe_fallback(time_to_collision(gap, s.vx - lead.vx), safety).longitudinal());
        }
    }

    let wants_change = s.lane_change.is_none()
        && lon != Longitudinal::HardBrake
        && propose < cfg.lane_change_rate * cfg.dt;
    if wants_change {
        let candidates: Vec<(usize, Lateral)> = [
            (lane + 1 < LANE_COUNT).then(|| (lane + 1, Lateral::Left)),
            lane.checked_sub(1).map(|l| (l, Lateral::Right)),
        ]
        .into_iter()
        .flatten()
        .collect();
        if !candidates.is_empty() {
            let pick = ((side * candidates.len() as f64) as usize).min(candidates.len() - 1);
            let (target, lat) = candidates[pick];
            let front_ok = lead_in_lane(s, others.iter().filter(in_range), target, cfg)
                .is_none_or(|f| gap_rule(bumper_gap(f, s, cfg), s.vx - f.vx, safety));
            let rear_ok = follower_in_lane(s, others.iter().filter(in_range), target, cfg)
                .is_none_or(|r| gap_rule(bumper_gap(s, r, cfg), r.vx - s.vx, safety));
            if front_ok && rear_ok {
                let lon = match lon {
                    Longitudinal::Brake => Longitudinal::Brake,
                    _ => Longitudinal::Maintain,
                };
                if let Some(a) = Action::compose(lon, lat) {
                    return a;
                }
            }
        }
    }
    Action::keep_lane(lon)
}

/// Advances the world by one step: the ego takes `ego_action`, every traffic
/// vehicle takes its controller's action computed from the same pre-step
/// snapshot, all vehicles integrate, and ego collisions are checked.
pub fn step_world(
    w: &mut WorldState,
    ego_action: Action,
    cfg: &EpisodeConfig,
    safety: &SafetyParams,
) -> Result<StepEvents> {
    if w.done {
        return Err(Error::contract("step on a finished episode"));
    }
    let snapshot: Vec<VehicleState> = std::iter::once(w.ego)
        .chain(w.traffic.iter().map(|t| t.state))
        .collect();

    let mut traffic_actions = Vec::with_capacity(w.traffic.len());
    for (i, vehicle) in w.traffic.iter().enumerate() {
        let others: Vec<VehicleState> = snapshot
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i + 1)
            .map(|(_, s)| *s)
            .collect();
        traffic_actions.push(traffic_policy(vehicle, &others, cfg, safety, &mut w.rng));
    }

    let ego_cmd = apply_action(&w.ego, ego_action, cfg);
    w.ego = advance(&ego_cmd.state, cfg.dt, cfg.v_max, cfg);
    for (vehicle, action) in w.traffic.iter_mut().zip(traffic_actions) {
        let cmd = apply_action(&vehicle.state, action, cfg);
        vehicle.state = advance(&cmd.state, cfg.dt, vehicle.desired_speed, cfg);
    }

    w.t += 1;
    let collided = w
        .traffic
        .iter()
        .any(|t| detect_collision(&w.ego, &t.state, cfg));
    w.done = collided || w.t >= cfg.episode_steps;
    Ok(StepEvents {
        collided,
        lane_change_rejected: ego_cmd.rejected,
        episode_done: w.done,
        ..StepEvents::default()
    })
}
