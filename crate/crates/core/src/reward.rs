//! Shaped driving reward: a speed term, a lane-offset term and a headway
//! term, each in (-1, 0] and zero exactly at its target.

use serde::Serialize;

use crate::affordance::{extract_affordance, AffordanceVector, RelLane, Side, Slot};
use crate::config::{EpisodeConfig, RewardParams};
use crate::sim::WorldState;

/// `exp(-(v - v_des)^2 / 10) - 1`
pub fn reward_speed(v_ex: f64, v_des: f64) -> f64 {
    let e = v_ex - v_des;
    (-(e * e) / 10.0).exp() - 1.0
}

/// `exp(-(y - y_des)^2 / 10) - 1`
pub fn reward_lane(d_ey: f64, y_des: f64) -> f64 {
    let e = d_ey - y_des;
    (-(e * e) / 10.0).exp() - 1.0
}

/// `exp(-(d_lead - d_safe)^2 / (10 d_safe)) - 1` inside the safe distance,
/// zero outside.
pub fn reward_headway(d_lead: f64, d_safe: f64) -> f64 {
    if d_lead < d_safe {
        let e = d_lead - d_safe;
        (-(e * e) / (10.0 * d_safe)).exp() - 1.0
    } else {
        0.0
    }
}

/// Safe following distance: `max(d_min, headway_time * v)`.
pub fn safe_distance(v_ex: f64, p: &RewardParams) -> f64 {
    p.d_min.max(p.headway_time * v_ex)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub speed: f64,
    pub lane: f64,
    pub headway: f64,
    pub total: f64,
}

/// Weighted sum of the three terms for the state `a`. Only the ego-lane
/// front slot enters the headway term (the sentinel distance when absent).
pub fn reward_from_affordance(a: &AffordanceVector, p: &RewardParams, cfg: &EpisodeConfig) -> RewardBreakdown {
    let v = a.ego_speed();
    let y = a.ego_lateral();
    let y_des = match p.desired_lane {
        Some(lane) => cfg.lane_center(lane),
        None => cfg.lane_center(cfg.lane_of(y)),
    };
    let d_lead = a.distance(Slot::new(RelLane::Center, Side::Front));
    let speed = p.speed_weight * reward_speed(v, p.v_des);
    let lane = p.lane_weight * reward_lane(y, y_des);
    let headway = p.headway_weight * reward_headway(d_lead, safe_distance(v, p));
    RewardBreakdown {
        speed,
        lane,
        headway,
        total: speed + lane + headway,
    }
}

pub fn total_reward(w: &WorldState, p: &RewardParams, cfg: &EpisodeConfig) -> f64 {
    reward_from_affordance(&extract_affordance(w, cfg), p, cfg).total
}
