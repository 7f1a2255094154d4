//! The 20-component driving state.
//!
//! Layout (fixed; also the CSV column order). Each of the six neighbor
//! slots holds three values, followed by two ego values:
//!
//! | index     | meaning |
//! |-----------|---------|
//! | 0, 1, 2   | left lane, front: Δx = x_other − x_ego (m), Δv = vx_other − vx_ego (m/s), Δy = y_other − y_ego (m) |
//! | 3, 4, 5   | left lane, rear |
//! | 6, 7, 8   | ego lane, front |
//! | 9, 10, 11 | ego lane, rear |
//! | 12, 13, 14 | right lane, front |
//! | 15, 16, 17 | right lane, rear |
//! | 18        | ego longitudinal speed (m/s) |
//! | 19        | ego lateral position (m) |
//!
//! An absent neighbor is encoded as `(+d_max, 0, lane offset)` in a front
//! slot and `(-d_max, 0, lane offset)` in a rear slot, where `d_max` is the
//! sensing range and the lane offset is the slot lane's nominal offset
//! (`+lane_width`, `0`, `-lane_width` for left, center, right). Lane
//! membership is by nearest lane center.

use crate::config::{EpisodeConfig, LANE_COUNT};
use crate::sim::WorldState;

pub const AFFORDANCE_DIM: usize = 20;
pub const SLOT_COUNT: usize = 6;
pub const EGO_SPEED: usize = 18;
pub const EGO_LATERAL: usize = 19;

/// Lane relative to the ego's lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelLane {
    Left,
    Center,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Front,
    Rear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub lane: RelLane,
    pub side: Side,
}

impl Slot {
    pub const ALL: [Slot; SLOT_COUNT] = [
        Slot { lane: RelLane::Left, side: Side::Front },
        Slot { lane: RelLane::Left, side: Side::Rear },
        Slot { lane: RelLane::Center, side: Side::Front },
        Slot { lane: RelLane::Center, side: Side::Rear },
        Slot { lane: RelLane::Right, side: Side::Front },
        Slot { lane: RelLane::Right, side: Side::Rear },
    ];

    pub const fn new(lane: RelLane, side: Side) -> Self {
        Slot { lane, side }
    }

    pub fn index(self) -> usize {
        let lane = match self.lane {
            RelLane::Left => 0,
            RelLane::Center => 1,
            RelLane::Right => 2,
        };
        let side = match self.side {
            Side::Front => 0,
            Side::Rear => 1,
        };
        lane * 2 + side
    }

    /// The slot's lane as an absolute index, if it is on the road.
    pub fn absolute_lane(self, ego_lane: usize) -> Option<usize> {
        match self.lane {
            RelLane::Left => Some(ego_lane + 1).filter(|&l| l < LANE_COUNT),
            RelLane::Center => Some(ego_lane),
            RelLane::Right => ego_lane.checked_sub(1),
        }
    }

    pub fn nominal_offset(self, lane_width: f64) -> f64 {
        match self.lane {
            RelLane::Left => lane_width,
            RelLane::Center => 0.0,
            RelLane::Right => -lane_width,
        }
    }

    pub fn sentinel_distance(self, d_max: f64) -> f64 {
        match self.side {
            Side::Front => d_max,
            Side::Rear => -d_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into `WorldState::traffic`.
    pub index: usize,
    pub dx: f64,
    pub dv: f64,
    pub dy: f64,
}

/// Nearest traffic vehicle per slot, ordered as [`Slot::ALL`].
///
/// A vehicle at exactly the ego's x counts as front. Ties in |Δx| go to the
/// lower traffic index.
pub fn nearest_neighbors(w: &WorldState, cfg: &EpisodeConfig) -> [Option<Neighbor>; SLOT_COUNT] {
    let mut slots: [Option<Neighbor>; SLOT_COUNT] = [None; SLOT_COUNT];
    let ego_lane = w.ego.lane(cfg) as isize;
    for (index, t) in w.traffic.iter().enumerate() {
        let dx = t.state.x - w.ego.x;
        if dx.abs() > cfg.sensing_range {
            continue;
        }
        let lane = match t.state.lane(cfg) as isize - ego_lane {
            1 => RelLane::Left,
            0 => RelLane::Center,
            -1 => RelLane::Right,
            _ => continue,
        };
        let side = if dx >= 0.0 { Side::Front } else { Side::Rear };
        let i = Slot::new(lane, side).index();
        if slots[i].is_none_or(|n| dx.abs() < n.dx.abs()) {
            slots[i] = Some(Neighbor {
                index,
                dx,
                dv: t.state.vx - w.ego.vx,
                dy: t.state.y - w.ego.y,
            });
        }
    }
    slots
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffordanceVector(pub [f64; AFFORDANCE_DIM]);

impl AffordanceVector {
    pub fn distance(&self, slot: Slot) -> f64 {
        self.0[3 * slot.index()]
    }

    pub fn rel_velocity(&self, slot: Slot) -> f64 {
        self.0[3 * slot.index() + 1]
    }

    pub fn rel_lateral(&self, slot: Slot) -> f64 {
        self.0[3 * slot.index() + 2]
    }

    pub fn ego_speed(&self) -> f64 {
        self.0[EGO_SPEED]
    }

    pub fn ego_lateral(&self) -> f64 {
        self.0[EGO_LATERAL]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// CSV header names in layout order.
    pub fn column_names() -> [String; AFFORDANCE_DIM] {
        let mut names: [String; AFFORDANCE_DIM] = Default::default();
        for slot in Slot::ALL {
            let lane = match slot.lane {
                RelLane::Left => "left",
                RelLane::Center => "center",
                RelLane::Right => "right",
            };
            let side = match slot.side {
                Side::Front => "front",
                Side::Rear => "rear",
            };
            names[3 * slot.index()] = format!("{lane}_{side}_dx");
            names[3 * slot.index() + 1] = format!("{lane}_{side}_dv");
            names[3 * slot.index() + 2] = format!("{lane}_{side}_dy");
        }
        names[EGO_SPEED] = "ego_vx".into();
        names[EGO_LATERAL] = "ego_y".into();
        names
    }
}

pub fn extract_affordance(w: &WorldState, cfg: &EpisodeConfig) -> AffordanceVector {
    let mut v = [0.0; AFFORDANCE_DIM];
    for (slot, n) in Slot::ALL.iter().zip(nearest_neighbors(w, cfg)) {
        let (dx, dv, dy) = match n {
            Some(n) => (n.dx, n.dv, n.dy),
            None => (
                slot.sentinel_distance(cfg.sensing_range),
                0.0,
                slot.nominal_offset(cfg.lane_width),
            ),
        };
        v[3 * slot.index()] = dx;
        v[3 * slot.index() + 1] = dv;
        v[3 * slot.index() + 2] = dy;
    }
    v[EGO_SPEED] = w.ego.vx;
    v[EGO_LATERAL] = w.ego.y;
    AffordanceVector(v)
}

/// Network scale: longitudinal distances divided by the sensing range,
/// velocities by `v_max`, lateral offsets and the ego lateral position by the
/// road width (3 lanes of `lane_width`, so a centered ego in lane 1 maps
/// to 1/3).
pub fn normalize(v: &AffordanceVector, cfg: &EpisodeConfig) -> [f64; AFFORDANCE_DIM] {
    let mut out = [0.0; AFFORDANCE_DIM];
    for (i, (o, x)) in out.iter_mut().zip(v.0).enumerate() {
        *o = x / scale(i, cfg);
    }
    out
}

pub fn denormalize(n: &[f64], cfg: &EpisodeConfig) -> AffordanceVector {
    let mut out = [0.0; AFFORDANCE_DIM];
    for (i, (o, x)) in out.iter_mut().zip(n).enumerate() {
        *o = x * scale(i, cfg);
    }
    AffordanceVector(out)
}

fn scale(i: usize, cfg: &EpisodeConfig) -> f64 {
    match i {
        EGO_LATERAL => cfg.road_width(),
        EGO_SPEED => cfg.v_max,
        i if i % 3 == 0 => cfg.sensing_range,
        i if i % 3 == 1 => cfg.v_max,
        _ => cfg.road_width(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{TrafficVehicle, VehicleState};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(ego_lane: usize, ego_vx: f64, traffic: &[(f64, usize, f64)]) -> WorldState {
        let c = EpisodeConfig::default();
        WorldState {
            ego: VehicleState::in_lane(&c, 0.0, ego_lane, ego_vx),
            traffic: traffic
                .iter()
                .map(|&(x, lane, vx)| TrafficVehicle {
                    state: VehicleState::in_lane(&c, x, lane, vx),
                    desired_speed: vx,
                })
                .collect(),
            t: 0,
            done: false,
            spawn_reduced: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    const CF: Slot = Slot::new(RelLane::Center, Side::Front);

    #[test]
    fn slot_indices_follow_layout() {
        for (i, s) in Slot::ALL.iter().enumerate() {
            assert_eq!(s.index(), i);
        }
        let names = AffordanceVector::column_names();
        assert_eq!(names[6], "center_front_dx");
        assert_eq!(names[8], "center_front_dy");
        assert_eq!(names[19], "ego_y");
    }

    #[test]
    fn neighbor_examples() {
        let c = EpisodeConfig::default();
        assert!(nearest_neighbors(&world(1, 30.0, &[]), &c).iter().all(Option::is_none));

        let n = nearest_neighbors(&world(1, 30.0, &[(40.0, 1, 25.0)]), &c);
        assert_eq!(n[CF.index()].unwrap().dx, 40.0);
        assert_eq!(n.iter().filter(|s| s.is_some()).count(), 1);

        let n = nearest_neighbors(&world(1, 30.0, &[(50.0, 1, 25.0), (30.0, 1, 25.0)]), &c);
        assert_eq!(n[CF.index()].unwrap().index, 1);

        let n = nearest_neighbors(&world(1, 30.0, &[(150.0, 1, 25.0)]), &c);
        assert!(n[CF.index()].is_none());
    }

    #[test]
    fn extract_examples() {
        let c = EpisodeConfig::default();
        let v = extract_affordance(&world(1, 30.0, &[]), &c);
        for slot in Slot::ALL {
            assert_eq!(v.distance(slot), slot.sentinel_distance(100.0));
            assert_eq!(v.rel_velocity(slot), 0.0);
            assert_eq!(v.rel_lateral(slot), slot.nominal_offset(3.7));
        }
        assert_eq!((v.ego_speed(), v.ego_lateral()), (30.0, 3.7));

        let v = extract_affordance(&world(1, 30.0, &[(40.0, 1, 25.0)]), &c);
        assert_eq!((v.distance(CF), v.rel_velocity(CF), v.rel_lateral(CF)), (40.0, -5.0, 0.0));

        // Leftmost lane: a vehicle two lanes to the right is not a neighbor,
        // and the left slots stay at their sentinels.
        let v = extract_affordance(&world(2, 30.0, &[(10.0, 0, 25.0), (-20.0, 1, 31.0)]), &c);
        assert_eq!(v.distance(Slot::new(RelLane::Left, Side::Front)), 100.0);
        assert_eq!(v.distance(Slot::new(RelLane::Left, Side::Rear)), -100.0);
        let rr = Slot::new(RelLane::Right, Side::Rear);
        assert_eq!((v.distance(rr), v.rel_velocity(rr)), (-20.0, 1.0));
    }

    #[test]
    fn normalize_examples() {
        let c = EpisodeConfig::default();
        let mut raw = extract_affordance(&world(1, 30.0, &[]), &c);
        raw.0[CF.index() * 3 + 1] = -40.0;
        let n = normalize(&raw, &c);
        assert_eq!(n[CF.index() * 3], 1.0);
        assert_eq!(n[CF.index() * 3 + 1], -1.0);
        assert_eq!(n[CF.index() * 3 + 2], 0.0);
        assert!((n[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!((n[EGO_LATERAL] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(n[EGO_SPEED], 0.75);
        let back = denormalize(&n, &c);
        for (a, b) in back.0.iter().zip(raw.0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn affordance_properties(
            ego_lane in 0usize..3,
            ego_vx in 0.0f64..40.0,
            shift in -1e4f64..1e4,
            cars in proptest::collection::vec((-150.0f64..150.0, 0usize..3, 0.0f64..40.0), 0..6),
        ) {
            let c = EpisodeConfig::default();
            let w = world(ego_lane, ego_vx, &cars);
            let v = extract_affordance(&w, &c);
            prop_assert!(v.0.iter().all(|x| x.is_finite()));
            prop_assert!(v.distance(CF) >= 0.0);
            prop_assert!(v.distance(Slot::new(RelLane::Center, Side::Rear)) <= 0.0);
            for slot in Slot::ALL {
                prop_assert!(v.distance(slot).abs() <= c.sensing_range);
            }
            prop_assert!(normalize(&v, &c).iter().all(|x| x.abs() <= 1.5));

            // Translation invariance, up to rounding of the shifted positions.
            let mut shifted = w.clone();
            shifted.ego.x += shift;
            for t in &mut shifted.traffic {
                t.state.x += shift;
            }
            let s = extract_affordance(&shifted, &c);
            for (a, b) in v.0.iter().zip(s.0) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
