//! Rule-based safety layer.
//!
//! The gap rule requires `d - T_min * v > d_min` toward a traffic vehicle,
//! where `d` is the bumper-to-bumper gap and `v` the closing speed (positive
//! when the gap shrinks). When a proposed ego action brings a relevant
//! vehicle under the rule, the action is replaced by a lane-keeping
//! fallback picked from a time-to-collision ladder.

use crate::affordance::{extract_affordance, AffordanceVector, RelLane, Side, Slot};
use crate::config::{EpisodeConfig, SafetyParams};
use crate::sim::{Action, Lateral, WorldState};

/// True when the gap is safe. Receding vehicles have a negative closing
/// speed, which widens the margin.
pub fn gap_rule(d_tv: f64, v_tv: f64, p: &SafetyParams) -> bool {
    d_tv - p.min_ttc * v_tv > p.min_gap
}

/// `d / v_closing`, infinite when the gap is not closing.
pub fn time_to_collision(d: f64, v_closing: f64) -> f64 {
    if v_closing > 0.0 {
        d / v_closing
    } else {
        f64::INFINITY
    }
}

/// Hard brake at or under `T_hb`, brake at or under `T_b`, otherwise
/// maintain; always lane keeping.
pub fn safe_fallback(ttc: f64, p: &SafetyParams) -> Action {
    if ttc <= p.hard_brake_ttc {
        Action::HardBrake
    } else if ttc <= p.brake_ttc {
        Action::Brake
    } else {
        Action::Maintain
    }
}

/// Bumper gap and closing speed toward the vehicle in `slot`, from its
/// relative distance and velocity.
pub fn gap_and_closing(slot: Slot, dx: f64, dv: f64, car_length: f64) -> (f64, f64) {
    match slot.side {
        Side::Front => ((dx - car_length).max(0.0), -dv),
        Side::Rear => ((-dx - car_length).max(0.0), dv),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterOutcome {
    pub executed: Action,
    pub original: Action,
    pub violated: bool,
}

/// One gap-rule evaluation against a present neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotCheck {
    pub slot: Slot,
    pub safe: bool,
    pub ttc: f64,
}

pub fn check_slot(a: &AffordanceVector, slot: Slot, p: &SafetyParams, cfg: &EpisodeConfig) -> SlotCheck {
    let (gap, closing) = gap_and_closing(slot, a.distance(slot), a.rel_velocity(slot), cfg.car_length);
    SlotCheck {
        slot,
        safe: gap_rule(gap, closing, p),
        ttc: time_to_collision(gap, closing),
    }
}

/// Slots the gap rule is evaluated on for `proposed`: the ego-lane front
/// vehicle always; the target lane's front and rear vehicle for a lane
/// change; during a latched maneuver, the front vehicle of the lane being
/// entered.
pub fn relevant_slots(
    a: &AffordanceVector,
    proposed: Action,
    maneuver_target: Option<usize>,
    cfg: &EpisodeConfig,
) -> Vec<Slot> {
    let ego_lane = cfg.lane_of(a.ego_lateral());
    let mut slots = vec![Slot::new(RelLane::Center, Side::Front)];
    let side_lane = |lane: usize| -> Option<RelLane> {
        if lane == ego_lane + 1 {
            Some(RelLane::Left)
        } else if lane + 1 == ego_lane {
            Some(RelLane::Right)
        } else {
            None
        }
    };
    match maneuver_target {
        Some(target) => {
            if let Some(lane) = side_lane(target) {
                slots.push(Slot::new(lane, Side::Front));
            }
        }
        None => {
            let target = match proposed.lateral() {
                Lateral::Keep => None,
                Lateral::Left => Some(RelLane::Left),
                Lateral::Right => Some(RelLane::Right),
            };
            let on_road = |lane: RelLane| Slot::new(lane, Side::Front).absolute_lane(ego_lane).is_some();
            if let Some(lane) = target.filter(|&l| on_road(l)) {
                slots.push(Slot::new(lane, Side::Front));
                slots.push(Slot::new(lane, Side::Rear));
            }
        }
    }
    slots
}

/// Filters `proposed` against the state `a`. Absent neighbors (sentinel
/// slots) pass trivially. On violation the fallback ladder is fed the
/// smallest time to collision among the front vehicles checked, since the
/// fallback only acts longitudinally in the current lane.
pub fn filter_affordance(
    a: &AffordanceVector,
    proposed: Action,
    maneuver_target: Option<usize>,
    p: &SafetyParams,
    cfg: &EpisodeConfig,
) -> FilterOutcome {
    let mut violated = false;
    let mut ttc = f64::INFINITY;
    for slot in relevant_slots(a, proposed, maneuver_target, cfg) {
        if is_sentinel(a, slot, cfg) {
            continue;
        }
        let check = check_slot(a, slot, p, cfg);
        violated |= !check.safe;
        if slot.side == Side::Front {
            ttc = ttc.min(check.ttc);
        }
    }
    let executed = if violated { safe_fallback(ttc, p) } else { proposed };
    FilterOutcome {
        executed,
        original: proposed,
        violated,
    }
}

pub fn filter_action(w: &WorldState, proposed: Action, p: &SafetyParams, cfg: &EpisodeConfig) -> FilterOutcome {
    let a = extract_affordance(w, cfg);
    let target = w.ego.lane_change.map(|lc| lc.target_lane);
    filter_affordance(&a, proposed, target, p, cfg)
}

/// Exact sentinel check for observed states.
fn is_sentinel(a: &AffordanceVector, slot: Slot, cfg: &EpisodeConfig) -> bool {
    a.distance(slot) == slot.sentinel_distance(cfg.sensing_range) && a.rel_velocity(slot) == 0.0
}
