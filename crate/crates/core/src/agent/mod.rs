//! Double DQN agent: epsilon-greedy selection, safe and collision replay
//! buffers sampled half and half, the two-case temporal-difference target,
//! hard target syncs, and the per-episode loop wiring in both safety layers.

pub mod replay;

pub use replay::{sample_minibatch, BufferTag, Features, Minibatch, ReplayBuffer, Sample, Transition};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::affordance::{extract_affordance, normalize, AffordanceVector, AFFORDANCE_DIM};
use crate::config::{AgentConfig, Config};
use crate::error::{Error, Result};
use crate::lookahead::{dynamic_check, predict_horizon, History, Predictor};
use crate::neural::{AdamState, Mlp, MlpCache, Parameters};
use crate::reward::reward_from_affordance;
use crate::safety::filter_action;
use crate::seeding::{rng_for, stream};
use crate::sim::{spawn_episode, spawn_with_traffic, step_world, Action, WorldState};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_action(q: &[f64]) -> Action {
    Action::from_id(argmax(q)).expect("Q-network has one output per action")
}

/// With probability `epsilon` a uniformly random action, else the greedy one.
pub fn select_action(q: &[f64], epsilon: f64, rng: &mut impl Rng) -> Action {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if rng.gen::<f64>() < epsilon {
        Action::ALL[rng.gen_range(0..Action::COUNT)]
    } else {
        greedy_action(q)
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end` over the first
/// `epsilon_decay_fraction` of the episodes, constant afterwards.
pub fn epsilon_at(episode: usize, cfg: &AgentConfig) -> f64 {
    let span = cfg.epsilon_decay_fraction * cfg.episodes as f64;
    let frac = if span > 0.0 {
        (episode as f64 / span).min(1.0)
    } else {
        1.0
    };
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

pub fn q_network_sizes(cfg: &AgentConfig) -> Vec<usize> {
    let mut sizes = vec![AFFORDANCE_DIM];
    sizes.extend(std::iter::repeat_n(cfg.hidden_units, cfg.hidden_layers));
    sizes.push(Action::COUNT);
    sizes
}

/// Collision-buffer samples and terminal records: `y = r`. Safe samples:
/// `y = r + gamma * Q_target(s', argmax_a Q_online(s', a))`.
pub fn td_target(tag: BufferTag, t: &Transition, online: &Mlp, target: &Mlp, gamma: f64) -> Result<f64> {
    if tag == BufferTag::Collision || t.terminal {
        return Ok(t.r);
    }
    let s_next = t
        .s_next
        .as_ref()
        .ok_or_else(|| Error::contract("safe-buffer transition without a successor state"))?;
    let a_star = argmax(&online.forward(s_next));
    Ok(t.r + gamma * target.forward(s_next)[a_star])
}

/// One Adam step on the mean squared TD error of `batch`; the target
/// network is held fixed. Returns the mean loss before the update.
pub fn train_step(
    batch: &[Sample<'_>],
    online: &mut Mlp,
    target: &Mlp,
    adam: &mut AdamState<Mlp>,
    gamma: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("empty training batch"));
    }
    let n = batch.len() as f64;
    let mut grad = online.zeros_like();
    let mut cache = MlpCache::default();
    let mut d_out = vec![0.0; online.output_dim()];
    let mut loss = 0.0;
    for sample in batch {
        let y = td_target(sample.tag, sample.t, online, target, gamma)?;
        online.forward_cached(&sample.t.s, &mut cache);
        let a = sample.t.a.id();
        let err = cache.output()[a] - y;
        loss += err * err;
        d_out.fill(0.0);
        d_out[a] = 2.0 * err / n;
        online.accumulate_gradient(&cache, &d_out, &mut grad);
    }
    adam.step(online, &grad);
    Ok(loss / n)
}

pub fn sync_target(online: &Mlp, target: &mut Mlp) {
    target.copy_from(online);
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub steps: usize,
    pub collided: bool,
    /// Sum of step rewards; a collision adds `-r_handcraft` plus the
    /// post-collision charge for every step of the unused time budget.
    pub cumulative_reward: f64,
    pub traffic: usize,
    pub handcraft_violations: usize,
    pub dynamic_penalties: usize,
    pub vetoes: usize,
    pub lane_change_rejections: usize,
    pub collision_fallback_batches: usize,
    pub gradient_steps: usize,
    pub mean_loss: f64,
}

impl EpisodeMetrics {
    fn record_collision(&mut self, cfg: &Config, t: usize) {
        let left = cfg.episode.episode_steps.saturating_sub(t) as f64;
        self.collided = true;
        self.cumulative_reward += -cfg.agent.r_handcraft + cfg.agent.post_collision_step_reward * left;
    }
}

/// Learner state for one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: Config,
    pub seed: u64,
    pub online: Mlp,
    pub target: Mlp,
    pub adam: AdamState<Mlp>,
    pub safe: ReplayBuffer,
    pub collision: ReplayBuffer,
    pub predictor: Option<Predictor>,
    pub gradient_steps: u64,
    pub target_syncs: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    /// Fresh networks from the run seed. The dynamic module needs a
    /// predictor; it is ignored for the other modes.
    pub fn new(cfg: &Config, seed: u64, predictor: Option<Predictor>) -> Result<Self> {
        cfg.validate()?;
        let predictor = if cfg.agent.safety.dynamic() {
            let p = predictor.ok_or_else(|| {
                Error::contract("the dynamic safety module needs a trained predictor")
            })?;
            p.check_compatible(&cfg.predictor)?;
            Some(p)
        } else {
            None
        };
        let mut init = rng_for(seed, stream::INIT, 0);
        let online = Mlp::random(&q_network_sizes(&cfg.agent), &mut init);
        Ok(Self {
            target: online.clone(),
            adam: AdamState::new(&online, cfg.agent.learning_rate),
            online,
            safe: ReplayBuffer::new(BufferTag::Safe, cfg.agent.buffer_capacity),
            collision: ReplayBuffer::new(BufferTag::Collision, cfg.agent.buffer_capacity),
            predictor,
            gradient_steps: 0,
            target_syncs: 0,
            rng: rng_for(seed, stream::AGENT, 0),
            cfg: cfg.clone(),
            seed,
        })
    }

    /// Runs training episode `episode` on its seeded world.
    pub fn run_episode(&mut self, episode: usize) -> Result<EpisodeMetrics> {
        let world = spawn_episode(&self.cfg.episode, rng_for(self.seed, stream::WORLD, episode as u64))?;
        let eps = epsilon_at(episode, &self.cfg.agent);
        self.run_episode_in(world, eps)
    }

    /// The training loop on a given world: select, filter, step, store,
    /// check the horizon, learn, sync.
    pub fn run_episode_in(&mut self, mut world: WorldState, epsilon: f64) -> Result<EpisodeMetrics> {
        let Self {
            cfg,
            online,
            target,
            adam,
            safe,
            collision,
            predictor,
            gradient_steps,
            target_syncs,
            rng,
            ..
        } = self;
        let ec = &cfg.episode;
        let ac = &cfg.agent;
        let mut history = predictor.as_ref().map(|p| History::new(p.history()));
        let mut m = EpisodeMetrics {
            traffic: world.traffic.len(),
            ..Default::default()
        };
        let mut loss_sum = 0.0;
        let mut cache = MlpCache::default();
        let mut s = normalize(&extract_affordance(&world, ec), ec);

        while !world.done {
            online.forward_cached(&s, &mut cache);
            let proposed = select_action(cache.output(), epsilon, rng);
            let mut executed = proposed;
            if ac.safety.handcrafted() {
                let out = filter_action(&world, proposed, &cfg.safety, ec);
                if out.violated {
                    collision.push(Transition {
                        s,
                        a: proposed,
                        s_next: None,
                        r: -ac.r_handcraft,
                        terminal: true,
                    });
                    m.handcraft_violations += 1;
                    executed = out.executed;
                }
            }

            let events = step_world(&mut world, executed, ec, &cfg.safety)?;
            m.steps += 1;
            m.lane_change_rejections += usize::from(events.lane_change_rejected);
            let raw_next = extract_affordance(&world, ec);
            let s_next = normalize(&raw_next, ec);
            if events.collided {
                collision.push(Transition {
                    s,
                    a: executed,
                    s_next: None,
                    r: -ac.r_handcraft,
                    terminal: true,
                });
                m.record_collision(cfg, world.t);
            } else {
                let r = reward_from_affordance(&raw_next, &cfg.reward, ec).total;
                safe.push(Transition {
                    s,
                    a: executed,
                    s_next: Some(s_next),
                    r,
                    terminal: false,
                });
                m.cumulative_reward += r;
            }

            if let (Some(p), Some(h)) = (predictor.as_ref(), history.as_mut()) {
                if let Some(rec) = dynamic_check(
                    h,
                    &s,
                    executed,
                    p,
                    ac.r_dynamic,
                    cfg.predictor.slot_scope,
                    &cfg.safety,
                    ec,
                )? {
                    collision.push(rec);
                    m.dynamic_penalties += 1;
                }
                h.push(&s, executed);
            }

            if safe.len() >= ac.learning_starts.max(1) {
                let batch = sample_minibatch(safe, collision, ac.batch_size, rng)?;
                m.collision_fallback_batches += usize::from(batch.collision_fallback);
                loss_sum += train_step(&batch.samples, online, target, adam, ac.gamma)?;
                m.gradient_steps += 1;
                *gradient_steps += 1;
                if *gradient_steps % ac.target_update_period as u64 == 0 {
                    sync_target(online, target);
                    *target_syncs += 1;
                }
            }
            s = s_next;
        }
        if m.gradient_steps > 0 {
            m.mean_loss = loss_sum / m.gradient_steps as f64;
        }
        Ok(m)
    }

    /// Greedy policy used for the periodic partial evaluation: the
    /// handcrafted filter whenever the variant trains with it, and the
    /// predictor veto when configured for the dynamic variant.
    pub fn greedy_policy(&self) -> GreedyPolicy<'_> {
        GreedyPolicy {
            net: &self.online,
            filter: self.cfg.agent.safety.handcrafted(),
            veto: self.predictor.as_ref().filter(|_| self.cfg.predictor.veto),
        }
    }

    /// Frozen-policy rollouts on the fixed partial-evaluation worlds.
    pub fn partial_evaluation(&self) -> Result<Vec<EpisodeMetrics>> {
        let policy = self.greedy_policy();
        (0..self.cfg.agent.partial_eval_episodes)
            .into_par_iter()
            .map(|i| {
                let world = spawn_episode(&self.cfg.episode, rng_for(self.seed, stream::PARTIAL_EVAL, i as u64))?;
                run_greedy_episode(&policy, world, &self.cfg, None)
            })
            .collect()
    }
}

/// A frozen Q-network acting greedily, optionally behind the handcrafted
/// filter and the predictor veto.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a> {
    pub net: &'a Mlp,
    pub filter: bool,
    pub veto: Option<&'a Predictor>,
}

/// One step of a greedy rollout, in raw affordance units.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub s: AffordanceVector,
    pub a: Action,
    pub s_next: AffordanceVector,
}

/// Runs `policy` to the end of the episode without learning. With the
/// veto, actions are tried in decreasing Q order and the first whose
/// predicted horizon keeps the gap rule is proposed (the greedy action
/// when none does). Executed steps are appended to `log`.
pub fn run_greedy_episode(
    policy: &GreedyPolicy<'_>,
    mut world: WorldState,
    cfg: &Config,
    mut log: Option<&mut Vec<StepRecord>>,
) -> Result<EpisodeMetrics> {
    let ec = &cfg.episode;
    let mut history = policy.veto.map(|p| History::new(p.history()));
    let mut m = EpisodeMetrics {
        traffic: world.traffic.len(),
        ..Default::default()
    };
    let mut cache = MlpCache::default();
    let mut raw = extract_affordance(&world, ec);
    let mut s = normalize(&raw, ec);
    while !world.done {
        policy.net.forward_cached(&s, &mut cache);
        let q = cache.output();
        let mut proposed = greedy_action(q);
        if let (Some(p), Some(h)) = (policy.veto, history.as_ref()) {
            let mut order: Vec<usize> = (0..Action::COUNT).collect();
            order.sort_by(|&i, &j| q[j].total_cmp(&q[i]).then(i.cmp(&j)));
            for id in order {
                let a = Action::ALL[id];
                let Some(window) = h.window(&s, a) else { break };
                if !predict_horizon(p, &window, a, cfg.predictor.slot_scope, &cfg.safety, ec)?.violation {
                    if a != proposed {
                        m.vetoes += 1;
                    }
                    proposed = a;
                    break;
                }
            }
        }
        let mut executed = proposed;
        if policy.filter {
            let out = filter_action(&world, proposed, &cfg.safety, ec);
            if out.violated {
                m.handcraft_violations += 1;
                executed = out.executed;
            }
        }
        let events = step_world(&mut world, executed, ec, &cfg.safety)?;
        m.steps += 1;
        m.lane_change_rejections += usize::from(events.lane_change_rejected);
        let raw_next = extract_affordance(&world, ec);
        if events.collided {
            m.record_collision(cfg, world.t);
        } else {
            m.cumulative_reward += reward_from_affordance(&raw_next, &cfg.reward, ec).total;
        }
        if let Some(h) = history.as_mut() {
            h.push(&s, executed);
        }
        if let Some(log) = log.as_deref_mut() {
            log.push(StepRecord {
                s: raw,
                a: executed,
                s_next: raw_next,
            });
        }
        raw = raw_next;
        s = normalize(&raw, ec);
    }
    Ok(m)
}

/// Greedy rollouts of `episodes` worlds, fanned out over the worker pool.
/// Worlds come from `(seed, stream, index)`, with `density` fixing the
/// traffic count (drawn from the configured range when `None`).
pub fn evaluate_greedy(
    policy: &GreedyPolicy<'_>,
    cfg: &Config,
    density: Option<usize>,
    episodes: usize,
    seed: u64,
    stream_tag: u64,
) -> Result<Vec<EpisodeMetrics>> {
    let base = density.map_or(u64::MAX, |d| d as u64) << 32;
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let rng = rng_for(seed, stream_tag, base | i as u64);
            let world = match density {
                Some(n) => spawn_with_traffic(&cfg.episode, n, rng)?,
                None => spawn_episode(&cfg.episode, rng)?,
            };
            run_greedy_episode(policy, world, cfg, None)
        })
        .collect()
}
