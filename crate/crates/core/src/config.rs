//! Run configuration.
//!
//! Every constant of the simulator, reward, safety layers, agent and
//! predictor is a key here with its default. Files are TOML with one table
//! per section; unknown keys are rejected by name.
//!
//! ```toml
//! [episode]
//! traffic_min = 1
//! traffic_max = 6
//!
//! [agent]
//! episodes = 500
//! safety = "handcrafted"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of lanes on the road. Lane 0 is the rightmost lane (y = 0) and
/// lane indices grow to the left.
pub const LANE_COUNT: usize = 3;

/// Most traffic vehicles an episode can start with (one per neighbor slot).
pub const MAX_TRAFFIC: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Integration step (s).
    pub dt: f64,
    pub episode_steps: usize,
    /// Ego speed cap (m/s).
    pub v_max: f64,
    pub lane_width: f64,
    pub car_length: f64,
    pub car_width: f64,
    /// Duration of a lane-change maneuver (s).
    pub lane_change_time: f64,
    /// Distance to the target lane center at which a maneuver snaps (m).
    pub snap_tolerance: f64,
    pub accel: f64,
    pub brake: f64,
    pub hard_brake: f64,
    pub ego_initial_speed: f64,
    /// Inclusive range of the traffic count drawn at spawn.
    pub traffic_min: usize,
    pub traffic_max: usize,
    /// Traffic desired speeds (also their speed caps) are uniform in this range.
    pub traffic_speed_min: f64,
    pub traffic_speed_max: f64,
    /// Traffic holds its speed inside `desired ± band` (m/s).
    pub traffic_speed_band: f64,
    /// Random lane-change proposals per second per traffic vehicle.
    pub lane_change_rate: f64,
    /// Desired time headway of the traffic car-following law (s).
    pub traffic_time_headway: f64,
    /// Bumper gap traffic keeps at standstill (m).
    pub traffic_standstill_gap: f64,
    /// Comfortable deceleration of the traffic car-following law (m/s²).
    pub traffic_comfort_decel: f64,
    /// Longitudinal spawn offset range from the ego, center to center (m).
    pub spawn_gap_min: f64,
    pub spawn_gap_max: f64,
    pub spawn_retries: usize,
    /// Sensing range for neighbor slots (m).
    pub sensing_range: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            episode_steps: 200,
            v_max: 40.0,
            lane_width: 3.7,
            car_length: 5.0,
            car_width: 2.0,
            lane_change_time: 2.0,
            snap_tolerance: 0.05,
            accel: 2.0,
            brake: -4.0,
            hard_brake: -8.0,
            ego_initial_speed: 25.0,
            traffic_min: 1,
            traffic_max: 6,
            traffic_speed_min: 22.0,
            traffic_speed_max: 32.0,
            traffic_speed_band: 0.5,
            lane_change_rate: 0.02,
            traffic_time_headway: 1.5,
            traffic_standstill_gap: 2.0,
            traffic_comfort_decel: 3.0,
            spawn_gap_min: 15.0,
            spawn_gap_max: 60.0,
            spawn_retries: 20,
            sensing_range: 100.0,
        }
    }
}

impl EpisodeConfig {
    pub fn lane_center(&self, lane: usize) -> f64 {
        lane as f64 * self.lane_width
    }

    /// Lane whose center is nearest to `y`, clamped to the road.
    pub fn lane_of(&self, y: f64) -> usize {
        let raw = (y / self.lane_width).round();
        raw.clamp(0.0, (LANE_COUNT - 1) as f64) as usize
    }

    /// Full paved width, from the right edge of lane 0 to the left edge of
    /// the last lane.
    pub fn road_width(&self) -> f64 {
        LANE_COUNT as f64 * self.lane_width
    }

    /// Lateral speed of a lane-change maneuver (m/s).
    pub fn lane_change_speed(&self) -> f64 {
        self.lane_width / self.lane_change_time
    }

    /// Steps a maneuver is latched for: ceil(T_lc / dt).
    pub fn lane_change_steps(&self) -> u32 {
        // The epsilon absorbs ratios such as 2.0 / 0.1 landing a hair above 20.
        ((self.lane_change_time / self.dt) - 1e-9).ceil().max(1.0) as u32
    }

    fn validate(&self) -> Result<()> {
        check(self.dt > 0.0, "episode.dt must be positive")?;
        check(self.episode_steps > 0, "episode.episode_steps must be positive")?;
        check(self.v_max > 0.0, "episode.v_max must be positive")?;
        check(self.lane_width > 0.0, "episode.lane_width must be positive")?;
        check(
            self.car_length > 0.0 && self.car_width > 0.0,
            "episode car dimensions must be positive",
        )?;
        check(
            self.lane_change_time > 0.0,
            "episode.lane_change_time must be positive",
        )?;
        check(
            self.traffic_min <= self.traffic_max && self.traffic_max <= MAX_TRAFFIC,
            "episode traffic range must lie within [0, 6]",
        )?;
        check(
            0.0 <= self.traffic_speed_min && self.traffic_speed_min <= self.traffic_speed_max,
            "episode traffic speed range is empty",
        )?;
        check(
            self.traffic_time_headway >= 0.0
                && self.traffic_standstill_gap >= 0.0
                && self.traffic_comfort_decel > 0.0,
            "episode traffic following parameters must be non-negative, comfort_decel positive",
        )?;
        check(
            self.spawn_gap_min <= self.spawn_gap_max,
            "episode spawn gap range is empty",
        )?;
        check(
            self.sensing_range > self.spawn_gap_max,
            "episode.sensing_range must exceed spawn_gap_max",
        )?;
        check(
            self.accel >= 0.0 && self.brake <= 0.0 && self.hard_brake <= self.brake,
            "episode acceleration levels must satisfy hard_brake <= brake <= 0 <= accel",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub v_des: f64,
    /// Time headway for the safe following distance (s).
    pub headway_time: f64,
    /// Floor of the safe following distance (m).
    pub d_min: f64,
    /// Fixed desired lane; when absent the ego's current lane is desired.
    pub desired_lane: Option<usize>,
    pub speed_weight: f64,
    pub lane_weight: f64,
    pub headway_weight: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            v_des: 30.0,
            headway_time: 1.5,
            d_min: 10.0,
            desired_lane: None,
            speed_weight: 1.0,
            lane_weight: 1.0,
            headway_weight: 1.0,
        }
    }
}

impl RewardParams {
    fn validate(&self) -> Result<()> {
        check(self.v_des > 0.0, "reward.v_des must be positive")?;
        check(self.headway_time > 0.0, "reward.headway_time must be positive")?;
        check(self.d_min > 0.0, "reward.d_min must be positive")?;
        check(
            self.desired_lane.is_none_or(|l| l < LANE_COUNT),
            "reward.desired_lane is off the road",
        )?;
        check(
            [self.speed_weight, self.lane_weight, self.headway_weight]
                .iter()
                .all(|w| (0.0..=1.0).contains(w)),
            "reward weights must lie in [0, 1]",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    /// Minimum time to collision in the gap rule (s).
    pub min_ttc: f64,
    /// Minimum gap in the gap rule (m).
    pub min_gap: f64,
    /// Hard-brake threshold of the fallback ladder (s).
    pub hard_brake_ttc: f64,
    /// Brake threshold of the fallback ladder (s).
    pub brake_ttc: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            min_ttc: 2.0,
            min_gap: 10.0,
            hard_brake_ttc: 1.5,
            brake_ttc: 3.0,
        }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Result<()> {
        check(self.min_ttc > 0.0, "safety.min_ttc must be positive")?;
        check(self.min_gap > 0.0, "safety.min_gap must be positive")?;
        check(
            0.0 < self.hard_brake_ttc && self.hard_brake_ttc < self.brake_ttc,
            "safety thresholds must satisfy 0 < hard_brake_ttc < brake_ttc",
        )
    }
}

/// Which safety layers are active while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SafetyMode {
    /// Plain double DQN.
    None,
    /// Rule-based filter only.
    Handcrafted,
    /// Rule-based filter plus the learned lookahead penalty.
    Both,
}

impl SafetyMode {
    pub fn name(self) -> &'static str {
        match self {
            SafetyMode::None => "none",
            SafetyMode::Handcrafted => "handcrafted",
            SafetyMode::Both => "both",
        }
    }

    pub fn handcrafted(self) -> bool {
        !matches!(self, SafetyMode::None)
    }

    pub fn dynamic(self) -> bool {
        matches!(self, SafetyMode::Both)
    }
}

impl std::str::FromStr for SafetyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SafetyMode::None),
            "handcrafted" => Ok(SafetyMode::Handcrafted),
            "both" => Ok(SafetyMode::Both),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected none, handcrafted or both)"
            ))),
        }
    }
}

impl std::fmt::Display for SafetyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub episodes: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Safe-buffer size before gradient steps begin.
    pub learning_starts: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Gradient steps between hard target-network syncs.
    pub target_update_period: usize,
    pub r_handcraft: f64,
    pub r_dynamic: f64,
    pub safety: SafetyMode,
    /// Episodes between greedy partial evaluations.
    pub partial_eval_period: usize,
    pub partial_eval_episodes: usize,
    pub checkpoint_period: usize,
    /// Per-step reward charged for every step of the time budget left over
    /// after a collision when cumulative rewards are reported.
    pub post_collision_step_reward: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 1e-3,
            episodes: 3500,
            hidden_layers: 2,
            hidden_units: 100,
            batch_size: 32,
            buffer_capacity: 100_000,
            learning_starts: 32,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.7,
            target_update_period: 1000,
            r_handcraft: 10.0,
            r_dynamic: 5.0,
            safety: SafetyMode::Handcrafted,
            partial_eval_period: 100,
            partial_eval_episodes: 10,
            checkpoint_period: 100,
            post_collision_step_reward: -3.0,
        }
    }
}

impl AgentConfig {
    fn validate(&self) -> Result<()> {
        check(
            0.0 < self.gamma && self.gamma < 1.0,
            "agent.gamma must lie in (0, 1)",
        )?;
        check(self.learning_rate > 0.0, "agent.learning_rate must be positive")?;
        check(
            self.batch_size > 0 && self.batch_size % 2 == 0,
            "agent.batch_size must be positive and even",
        )?;
        check(self.buffer_capacity > 0, "agent.buffer_capacity must be positive")?;
        check(self.hidden_layers > 0 && self.hidden_units > 0, "agent network must have hidden units")?;
        check(
            (0.0..=1.0).contains(&self.epsilon_end)
                && (0.0..=1.0).contains(&self.epsilon_start)
                && (0.0..=1.0).contains(&self.epsilon_decay_fraction),
            "agent epsilon schedule values must lie in [0, 1]",
        )?;
        check(
            self.target_update_period > 0,
            "agent.target_update_period must be positive",
        )?;
        check(
            self.r_handcraft > 0.0 && self.r_dynamic > 0.0,
            "agent penalty magnitudes must be positive",
        )?;
        check(
            self.partial_eval_period > 0 && self.checkpoint_period > 0,
            "agent periods must be positive",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// Number of (state, action) pairs fed to the recurrent predictor.
    pub history: usize,
    /// Number of future states predicted.
    pub horizon: usize,
    pub hidden_units: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    /// Episodes of driving data gathered by `collect`.
    pub collect_episodes: usize,
    /// At evaluation time, replace a greedy action whose predicted horizon
    /// breaks the gap rule with the best-valued action that does not.
    pub veto: bool,
    /// Neighbor slots the gap rule is checked on in predicted states.
    pub slot_scope: SlotScope,
}

/// Slots examined in a predicted state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotScope {
    /// The slots the rule-based filter checks for the executed action.
    Relevant,
    /// Every present neighbor.
    All,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            history: 4,
            horizon: 4,
            hidden_units: 64,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            validation_fraction: 0.1,
            collect_episodes: 50,
            veto: false,
            slot_scope: SlotScope::Relevant,
        }
    }
}

impl PredictorConfig {
    fn validate(&self) -> Result<()> {
        check(
            self.history >= 1 && self.horizon >= 1,
            "predictor history and horizon must be at least 1",
        )?;
        check(self.hidden_units > 0, "predictor.hidden_units must be positive")?;
        check(self.batch_size > 0, "predictor.batch_size must be positive")?;
        check(
            0.0 < self.validation_fraction && self.validation_fraction < 1.0,
            "predictor.validation_fraction must lie in (0, 1)",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub densities: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 300,
            densities: vec![1, 2, 3, 4, 5, 6],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub episode: EpisodeConfig,
    pub reward: RewardParams,
    pub safety: SafetyParams,
    pub agent: AgentConfig,
    pub predictor: PredictorConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.reward.validate()?;
        self.safety.validate()?;
        self.agent.validate()?;
        self.predictor.validate()?;
        check(
            self.eval.densities.iter().all(|&d| d <= MAX_TRAFFIC),
            "eval.densities must lie within [0, 6]",
        )
    }
}

fn check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.to_string()))
    }
}
