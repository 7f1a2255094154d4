//! Learned lookahead safety: driving data from a frozen policy, a recurrent
//! predictor of the next `k` states from the last `h` (state, action)
//! pairs, and the horizon check that turns predicted gap-rule breaches
//! into penalty transitions.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::affordance::{denormalize, normalize, AffordanceVector, RelLane, Side, Slot, AFFORDANCE_DIM};
use crate::agent::{run_greedy_episode, Features, GreedyPolicy, StepRecord, Transition};
use crate::config::{Config, EpisodeConfig, PredictorConfig, SafetyParams, SlotScope};
use crate::error::{Error, Result};
use crate::neural::{AdamState, Mlp, Parameters, Rnn};
use crate::safety::{check_slot, relevant_slots};
use crate::seeding::{rng_for, stream};
use crate::sim::{spawn_episode, Action};

/// One (state, one-hot action) pair as fed to the predictor.
pub const PAIR_DIM: usize = AFFORDANCE_DIM + Action::COUNT;

/// Fewest windows `train_predictor` accepts.
pub const MIN_WINDOWS: usize = 100;

pub fn encode_pair(s: &Features, a: Action) -> [f64; PAIR_DIM] {
    let mut out = [0.0; PAIR_DIM];
    out[..AFFORDANCE_DIM].copy_from_slice(s);
    out[AFFORDANCE_DIM + a.id()] = 1.0;
    out
}

/// Recurrent predictor whose readout holds `horizon` normalized states.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub rnn: Rnn,
}

impl Predictor {
    pub fn new(rnn: Rnn) -> Result<Self> {
        if rnn.input_dim != PAIR_DIM || rnn.output_dim == 0 || rnn.output_dim % AFFORDANCE_DIM != 0 {
            return Err(Error::contract(format!(
                "predictor must map {PAIR_DIM}-wide pairs to whole states, got {} -> {}",
                rnn.input_dim, rnn.output_dim
            )));
        }
        Ok(Self { rnn })
    }

    pub fn random(pc: &PredictorConfig, rng: &mut impl rand::Rng) -> Self {
        Self {
            rnn: Rnn::random(PAIR_DIM, pc.hidden_units, pc.horizon * AFFORDANCE_DIM, pc.history, rng),
        }
    }

    pub fn history(&self) -> usize {
        self.rnn.steps
    }

    pub fn horizon(&self) -> usize {
        self.rnn.output_dim / AFFORDANCE_DIM
    }

    pub fn check_compatible(&self, pc: &PredictorConfig) -> Result<()> {
        if self.history() != pc.history || self.horizon() != pc.horizon {
            return Err(Error::contract(format!(
                "predictor uses h={} k={}, configuration asks for h={} k={}",
                self.history(),
                self.horizon(),
                pc.history,
                pc.horizon
            )));
        }
        Ok(())
    }

    /// Normalized predictions for the next `horizon` states.
    pub fn predict(&self, window: &[f64]) -> Result<Vec<Features>> {
        let out = self.rnn.forward(window)?;
        Ok(out
            .chunks_exact(AFFORDANCE_DIM)
            .map(|c| c.try_into().expect("chunk of one state"))
            .collect())
    }
}

/// The last `h - 1` encoded pairs of the current episode.
#[derive(Debug, Clone)]
pub struct History {
    keep: usize,
    pairs: VecDeque<[f64; PAIR_DIM]>,
}

impl History {
    pub fn new(h: usize) -> Self {
        let keep = h.saturating_sub(1);
        Self {
            keep,
            pairs: VecDeque::with_capacity(keep + 1),
        }
    }

    pub fn push(&mut self, s: &Features, a: Action) {
        if self.keep == 0 {
            return;
        }
        if self.pairs.len() == self.keep {
            self.pairs.pop_front();
        }
        self.pairs.push_back(encode_pair(s, a));
    }

    /// The flattened window ending at `(s, a)`, once enough steps have
    /// been seen this episode.
    pub fn window(&self, s: &Features, a: Action) -> Option<Vec<f64>> {
        if self.pairs.len() < self.keep {
            return None;
        }
        let mut w = Vec::with_capacity((self.keep + 1) * PAIR_DIM);
        for p in &self.pairs {
            w.extend_from_slice(p);
        }
        w.extend_from_slice(&encode_pair(s, a));
        Some(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPrediction {
    /// Predicted states in raw units.
    pub states: Vec<AffordanceVector>,
    /// Normalized prediction of the next state.
    pub next: Features,
    pub violation: bool,
    pub first_violation_step: Option<usize>,
}

/// Gap rule on the slots of a predicted state selected by `scope`, plus
/// the collision proxy (ego-lane lead closer than one car length). With
/// [`SlotScope::Relevant`] the slots are those the rule-based filter checks
/// for `action`. Slots within 10% of the sensing range of their sentinel
/// distance count as absent.
pub fn predicted_state_violates(
    a: &AffordanceVector,
    action: Action,
    scope: SlotScope,
    p: &SafetyParams,
    cfg: &EpisodeConfig,
) -> bool {
    let tol = 0.1 * cfg.sensing_range;
    let lead = Slot::new(RelLane::Center, Side::Front);
    let slots = match scope {
        SlotScope::All => Slot::ALL.to_vec(),
        SlotScope::Relevant => relevant_slots(a, action, None, cfg),
    };
    slots.into_iter().any(|slot| {
        let d = a.distance(slot);
        if (d - slot.sentinel_distance(cfg.sensing_range)).abs() <= tol {
            return false;
        }
        !check_slot(a, slot, p, cfg).safe || (slot == lead && d < cfg.car_length)
    })
}

/// Predicts the horizon after the window ending in `action` and checks each
/// predicted state.
pub fn predict_horizon(
    pred: &Predictor,
    window: &[f64],
    action: Action,
    scope: SlotScope,
    p: &SafetyParams,
    cfg: &EpisodeConfig,
) -> Result<HorizonPrediction> {
    let rows = pred.predict(window)?;
    let states: Vec<AffordanceVector> = rows.iter().map(|r| denormalize(r, cfg)).collect();
    let first_violation_step = states
        .iter()
        .position(|s| predicted_state_violates(s, action, scope, p, cfg));
    Ok(HorizonPrediction {
        next: rows[0],
        states,
        violation: first_violation_step.is_some(),
        first_violation_step,
    })
}

/// Penalty record `(s, a, s_hat_next, -r_dynamic)` when the horizon
/// predicted from the window ending at `(s, a)` breaks the gap rule. No
/// record during warm-up.
pub fn dynamic_check(
    history: &History,
    s: &Features,
    a: Action,
    pred: &Predictor,
    r_dynamic: f64,
    scope: SlotScope,
    p: &SafetyParams,
    cfg: &EpisodeConfig,
) -> Result<Option<Transition>> {
    let Some(window) = history.window(s, a) else {
        return Ok(None);
    };
    let h = predict_horizon(pred, &window, a, scope, p, cfg)?;
    Ok(h.violation.then(|| Transition {
        s: *s,
        a,
        s_next: Some(h.next),
        r: -r_dynamic,
        terminal: true,
    }))
}

/// One episode of (state, executed action) pairs. `next_safe[t]` is the
/// gap rule evaluated on every neighbor of the true state after step `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeData {
    pub states: Vec<AffordanceVector>,
    pub actions: Vec<Action>,
    pub next_safe: Vec<bool>,
}

impl EpisodeData {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn from_records(records: &[StepRecord], p: &SafetyParams, cfg: &EpisodeConfig) -> Self {
        Self {
            states: records.iter().map(|r| r.s).collect(),
            actions: records.iter().map(|r| r.a).collect(),
            next_safe: records
                .iter()
                .map(|r| !predicted_state_violates(&r.s_next, r.a, SlotScope::All, p, cfg))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DrivingDataset {
    pub episodes: Vec<EpisodeData>,
}

impl DrivingDataset {
    pub fn total_pairs(&self) -> usize {
        self.episodes.iter().map(EpisodeData::len).sum()
    }

    /// One row per step: episode, step, the 20 state values, action id,
    /// next-state safety label.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["episode".to_string(), "step".to_string()];
        header.extend(AffordanceVector::column_names());
        header.push("action".into());
        header.push("next_state_safe".into());
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for (e, ep) in self.episodes.iter().enumerate() {
            for t in 0..ep.len() {
                let mut row = vec![e.to_string(), t.to_string()];
                row.extend(ep.states[t].0.iter().map(|x| x.to_string()));
                row.push(ep.actions[t].id().to_string());
                row.push(u8::from(ep.next_safe[t]).to_string());
                w.write_record(&row).map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let bad = |msg: String| Error::contract(format!("{}: {msg}", path.display()));
        let mut episodes: Vec<EpisodeData> = Vec::new();
        let mut current: Option<usize> = None;
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            if rec.len() != AFFORDANCE_DIM + 4 {
                return Err(bad(format!("row {} has {} fields", line + 1, rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("row {}: bad number {:?}", line + 1, &rec[i])))
            };
            let int = |i: usize| -> Result<usize> {
                rec[i]
                    .parse::<usize>()
                    .map_err(|_| bad(format!("row {}: bad integer {:?}", line + 1, &rec[i])))
            };
            let (e, t) = (int(0)?, int(1)?);
            if current != Some(e) {
                if current.is_some_and(|c| e <= c) {
                    return Err(bad(format!("row {}: episodes out of order", line + 1)));
                }
                current = Some(e);
                episodes.push(EpisodeData::default());
            }
            let ep = episodes.last_mut().expect("episode opened above");
            if t != ep.len() {
                return Err(bad(format!("row {}: step {t} breaks the sequence", line + 1)));
            }
            let mut s = [0.0; AFFORDANCE_DIM];
            for (k, v) in s.iter_mut().enumerate() {
                *v = num(2 + k)?;
            }
            let a = Action::from_id(int(AFFORDANCE_DIM + 2)?)
                .ok_or_else(|| bad(format!("row {}: unknown action", line + 1)))?;
            ep.states.push(AffordanceVector(s));
            ep.actions.push(a);
            ep.next_safe.push(int(AFFORDANCE_DIM + 3)? != 0);
        }
        Ok(Self { episodes })
    }
}

/// Greedy rollouts of the frozen policy behind the handcrafted filter,
/// recording every executed step.
pub fn collect_dataset(net: &Mlp, cfg: &Config, n_episodes: usize, seed: u64) -> Result<DrivingDataset> {
    let policy = GreedyPolicy {
        net,
        filter: true,
        veto: None,
    };
    let episodes = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let world = spawn_episode(&cfg.episode, rng_for(seed, stream::COLLECT, i as u64))?;
            let mut log = Vec::new();
            run_greedy_episode(&policy, world, cfg, Some(&mut log))?;
            Ok(EpisodeData::from_records(&log, &cfg.safety, &cfg.episode))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DrivingDataset { episodes })
}

/// Predictor training pair: `h` encoded pairs and the next `k` normalized
/// states.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Sliding windows that stay inside one episode: an episode of length `n`
/// yields `n - h - k + 1` of them.
pub fn make_windows(d: &DrivingDataset, h: usize, k: usize, cfg: &EpisodeConfig) -> Vec<Window> {
    assert!(h >= 1 && k >= 1, "history and horizon must be positive");
    let mut out = Vec::new();
    for ep in &d.episodes {
        let n = ep.len();
        if n < h + k {
            continue;
        }
        let norm: Vec<Features> = ep.states.iter().map(|s| normalize(s, cfg)).collect();
        for i in 0..=n - h - k {
            let mut input = Vec::with_capacity(h * PAIR_DIM);
            for j in i..i + h {
                input.extend_from_slice(&encode_pair(&norm[j], ep.actions[j]));
            }
            let mut target = Vec::with_capacity(k * AFFORDANCE_DIM);
            for s in &norm[i + h..i + h + k] {
                target.extend_from_slice(s);
            }
            out.push(Window { input, target });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictorReport {
    pub train_windows: usize,
    pub validation_windows: usize,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Held-out one-step RMSE per feature, normalized units.
    pub validation_rmse: Vec<f64>,
    pub max_validation_rmse: f64,
    /// Held-out mean squared error over the whole horizon.
    pub validation_mse: f64,
}

/// Seeded train/validation split, minibatch Adam on the horizon MSE.
pub fn train_predictor(windows: &[Window], pc: &PredictorConfig, seed: u64) -> Result<(Predictor, PredictorReport)> {
    if windows.len() < MIN_WINDOWS {
        return Err(Error::contract(format!(
            "predictor training needs at least {MIN_WINDOWS} windows, got {}",
            windows.len()
        )));
    }
    let mut rng = rng_for(seed, stream::PREDICTOR, 0);
    let mut pred = Predictor::random(pc, &mut rng);
    if windows[0].input.len() != pred.rnn.steps * PAIR_DIM || windows[0].target.len() != pred.rnn.output_dim {
        return Err(Error::contract("windows do not match the configured history and horizon"));
    }
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((windows.len() as f64 * pc.validation_fraction).round() as usize).clamp(1, windows.len() - 1);
    let (val, train) = order.split_at(n_val);
    let mut train = train.to_vec();

    let mut adam = AdamState::new(&pred.rnn, pc.learning_rate);
    let mut grad = pred.rnn.zeros_like();
    let mut epoch_losses = Vec::with_capacity(pc.epochs);
    for _ in 0..pc.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train.chunks(pc.batch_size.max(1)) {
            grad.scale(0.0);
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                total += pred
                    .rnn
                    .accumulate_mse_gradient(&windows[i].input, &windows[i].target, w, &mut grad)?;
            }
            adam.step(&mut pred.rnn, &grad);
        }
        epoch_losses.push(total / train.len() as f64);
    }

    let mut sq = vec![0.0; AFFORDANCE_DIM];
    let mut mse = 0.0;
    for &i in val {
        let y = pred.rnn.forward(&windows[i].input)?;
        for (j, (p, t)) in y.iter().zip(&windows[i].target).enumerate() {
            let e = p - t;
            mse += e * e;
            if j < AFFORDANCE_DIM {
                sq[j] += e * e;
            }
        }
    }
    let validation_rmse: Vec<f64> = sq.iter().map(|s| (s / val.len() as f64).sqrt()).collect();
    let report = PredictorReport {
        train_windows: train.len(),
        validation_windows: val.len(),
        epoch_losses,
        max_validation_rmse: validation_rmse.iter().cloned().fold(0.0, f64::max),
        validation_rmse,
        validation_mse: mse / (val.len() * pred.rnn.output_dim) as f64,
    };
    Ok((pred, report))
}
