//! Closed-loop execution under coordinated, delayed-connection, and
//! self-triggered communication regimes, plus the exhaustive adversarial
//! oracle that validates the delay-robust chain.

use crate::controller::Controller;
use crate::coordination::LayerMap;
use crate::sets::{InputSet, StateSet};
use crate::space::Partition;
use crate::synthesis::max_invariant;
use crate::system::TransitionSystem;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// How the nondeterminism of a permissive closed loop is resolved: first the
/// joint input from the allowed set, then the successor within the box.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolutionPolicy {
    /// Uniform choices from independent seeded streams.
    UniformRandom { seed: u64 },
    /// Inputs ranked by position in the list (unlisted inputs follow in
    /// ascending index order); the successor is the lowest cell index.
    FixedPreference { ranking: Vec<usize> },
    /// Input minimizing the best successor countdown, then the successor
    /// minimizing the countdown; states outside the invariant set rank
    /// below countdown zero, blocking inputs below that. Ties break toward
    /// the lowest index. Needs a layer map.
    AdversarialGreedy,
    /// Full tree search over every uncoordinated resolution; usable only
    /// for whole-run verdicts on small systems.
    Exhaustive { max_nodes: u64 },
}

impl ResolutionPolicy {
    fn seed(&self) -> u64 {
        match self {
            ResolutionPolicy::UniformRandom { seed } => *seed,
            _ => 0,
        }
    }
}

/// Two independent seeded streams, one per decision kind, derived from
/// `(seed, run_id)` so runs are reproducible regardless of scheduling.
pub struct RunRng {
    input: ChaCha20Rng,
    successor: ChaCha20Rng,
}

fn mix(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RunRng {
    pub fn new(seed: u64, run_id: u64) -> Self {
        Self {
            input: ChaCha20Rng::seed_from_u64(mix(seed, 2 * run_id)),
            successor: ChaCha20Rng::seed_from_u64(mix(seed, 2 * run_id + 1)),
        }
    }
}

/// One time step of a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub state: usize,
    /// Joint input chosen at this step; `None` on the final record.
    pub input: Option<usize>,
    /// Countdown value, present in self-triggered runs.
    pub countdown: Option<usize>,
    /// Whether this step used the coordinated controller.
    pub coordination: bool,
    /// Whether the state is inside the safe set.
    pub safe: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<StepRecord>,
}

impl Trace {
    pub fn states(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.state).collect()
    }

    pub fn last_state(&self) -> Option<usize> {
        self.records.last().map(|r| r.state)
    }
}

/// Outcome of a delayed-connection run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Safe,
    /// Some visited state left the safe set.
    LeftSafeSet { step: usize },
    /// The run jammed: no admissible input, or the chosen input blocks.
    Blocked { step: usize },
    /// Every simulated state stayed safe but the state reached when
    /// coordination was established is outside the invariant set, so the
    /// infinite tail is not certified.
    TailNotInvariant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayRun {
    pub trace: Trace,
    pub verdict: Verdict,
}

fn row_count(row: &[u64]) -> usize {
    row.iter().map(|w| w.count_ones() as usize).sum()
}

fn row_nth(row: &[u64], mut k: usize) -> Option<usize> {
    for (wi, &w) in row.iter().enumerate() {
        let ones = w.count_ones() as usize;
        if k < ones {
            let mut rest = w;
            for _ in 0..k {
                rest &= rest - 1;
            }
            return Some(wi * 64 + rest.trailing_zeros() as usize);
        }
        k -= ones;
    }
    None
}

fn row_iter(row: &[u64]) -> impl Iterator<Item = usize> + '_ {
    row.iter().enumerate().flat_map(|(wi, &w)| {
        let mut rest = w;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + bit)
            }
        })
    })
}

/// Countdown rank used by the adversarial policy: outside the invariant set
/// is worst, then layer 0 upward. Blocking inputs rank below everything.
fn countdown_rank(layers: &LayerMap, state: usize) -> i64 {
    match layers.countdown(state) {
        None => -1,
        Some(k) => k as i64,
    }
}

fn choose_input(
    ts: &TransitionSystem,
    row: &[u64],
    state: usize,
    policy: &ResolutionPolicy,
    rng: &mut RunRng,
    layers: Option<&LayerMap>,
) -> Result<Option<usize>> {
    match policy {
        ResolutionPolicy::UniformRandom { .. } => {
            let n = row_count(row);
            if n == 0 {
                return Ok(None);
            }
            Ok(row_nth(row, rng.input.random_range(0..n)))
        }
        ResolutionPolicy::FixedPreference { ranking } => {
            for &u in ranking {
                if u < ts.num_joint_inputs() && row[u / 64] & (1u64 << (u % 64)) != 0 {
                    return Ok(Some(u));
                }
            }
            for u in row_iter(row) {
                if !ranking.contains(&u) {
                    return Ok(Some(u));
                }
            }
            Ok(None)
        }
        ResolutionPolicy::AdversarialGreedy => {
            let layers = layers.ok_or_else(|| {
                Error::PolicyUnsupported("adversarial-greedy needs a layer map".into())
            })?;
            let mut best: Option<(i64, usize)> = None;
            for u in row_iter(row) {
                let score = if ts.has_entry(state, u) {
                    let mut s = i64::MAX;
                    ts.for_each_cell(state, u, |c| s = s.min(countdown_rank(layers, c)));
                    s
                } else {
                    -2
                };
                if best.map_or(true, |(b, _)| score < b) {
                    best = Some((score, u));
                }
            }
            Ok(best.map(|(_, u)| u))
        }
        ResolutionPolicy::Exhaustive { .. } => Err(Error::PolicyUnsupported(
            "the exhaustive policy decides whole runs, not single steps".into(),
        )),
    }
}

fn choose_successor(
    ts: &TransitionSystem,
    state: usize,
    input: usize,
    policy: &ResolutionPolicy,
    rng: &mut RunRng,
    layers: Option<&LayerMap>,
) -> Result<usize> {
    let n = ts.cell_count(state, input);
    debug_assert!(n > 0);
    match policy {
        ResolutionPolicy::UniformRandom { .. } => {
            Ok(ts.nth_cell(state, input, rng.successor.random_range(0..n)).unwrap())
        }
        ResolutionPolicy::FixedPreference { .. } => Ok(ts.nth_cell(state, input, 0).unwrap()),
        ResolutionPolicy::AdversarialGreedy => {
            let layers = layers.ok_or_else(|| {
                Error::PolicyUnsupported("adversarial-greedy needs a layer map".into())
            })?;
            let mut best: Option<(i64, usize)> = None;
            ts.for_each_cell(state, input, |c| {
                let score = countdown_rank(layers, c);
                if best.map_or(true, |(b, bc)| score < b || (score == b && c < bc)) {
                    best = Some((score, c));
                }
            });
            Ok(best.unwrap().1)
        }
        ResolutionPolicy::Exhaustive { .. } => Err(Error::PolicyUnsupported(
            "the exhaustive policy decides whole runs, not single steps".into(),
        )),
    }
}

/// One closed-loop step: pick `u` from `allowed`, then a successor in
/// `f(x, u)`. Deterministic given the rng state. The allowed set must be
/// nonempty and its inputs nonblocking at `x`.
pub fn step(
    ts: &TransitionSystem,
    allowed: &InputSet,
    state: usize,
    policy: &ResolutionPolicy,
    rng: &mut RunRng,
    layers: Option<&LayerMap>,
) -> Result<(usize, usize)> {
    if allowed.len() != ts.num_joint_inputs() {
        return Err(Error::DimensionMismatch {
            context: "allowed inputs vs system",
            expected: ts.num_joint_inputs(),
            got: allowed.len(),
        });
    }
    let input = choose_input(ts, allowed.words(), state, policy, rng, layers)?
        .ok_or(Error::Blocking { state, step: 0 })?;
    if !ts.has_entry(state, input) {
        return Err(Error::Blocking { state, step: 0 });
    }
    let next = choose_successor(ts, state, input, policy, rng, layers)?;
    Ok((input, next))
}

/// Closed-loop executor holding the coordinated controller, its independent
/// counterpart, the invariant set, and optionally a layer map.
pub struct Simulator<'a> {
    ts: &'a TransitionSystem,
    ctrl: &'a Controller,
    ind: Controller,
    safe: &'a StateSet,
    invariant: StateSet,
    layers: Option<&'a LayerMap>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        ts: &'a TransitionSystem,
        ctrl: &'a Controller,
        partition: &Partition,
        safe: &'a StateSet,
    ) -> Result<Self> {
        let ind = crate::coordination::ind_controller(ts.inputs(), ctrl, partition)?;
        let (invariant, _) = max_invariant(ts, ctrl, safe)?;
        Ok(Self {
            ts,
            ctrl,
            ind,
            safe,
            invariant,
            layers: None,
        })
    }

    pub fn with_layers(mut self, layers: &'a LayerMap) -> Result<Self> {
        if layers.num_states() != self.ts.num_states() {
            return Err(Error::DimensionMismatch {
                context: "layer map vs system",
                expected: self.ts.num_states(),
                got: layers.num_states(),
            });
        }
        self.layers = Some(layers);
        Ok(self)
    }

    pub fn invariant_set(&self) -> &StateSet {
        &self.invariant
    }

    pub fn independent_controller(&self) -> &Controller {
        &self.ind
    }

    /// Connection-initialization scenario: the first `delay` steps resolve
    /// over the independent controller, everything after over the
    /// coordinated one. The verdict is safe when every visited state stays
    /// in the safe set, nothing blocks, and the state at the connection
    /// instant lies in the invariant set (certifying the infinite tail).
    pub fn run_delay_scenario(
        &self,
        x0: usize,
        delay: usize,
        horizon: usize,
        policy: &ResolutionPolicy,
        run_id: u64,
    ) -> Result<DelayRun> {
        if horizon < delay {
            return Err(Error::PolicyUnsupported(format!(
                "horizon {horizon} shorter than the delay {delay}"
            )));
        }
        if x0 >= self.ts.num_states() {
            return Err(Error::IndexOutOfRange {
                context: "initial state",
                index: x0,
                size: self.ts.num_states(),
            });
        }
        if let ResolutionPolicy::Exhaustive { max_nodes } = policy {
            return self.exhaustive_delay(x0, delay, horizon, *max_nodes);
        }
        let mut rng = RunRng::new(policy.seed(), run_id);
        let mut trace = Trace::default();
        let mut x = x0;
        let mut states = vec![x0];
        let mut blocked_at = None;
        for k in 0..horizon {
            let coordinated = k >= delay;
            let row = if coordinated {
                self.ctrl.row(x)
            } else {
                self.ind.row(x)
            };
            let chosen = choose_input(self.ts, row, x, policy, &mut rng, self.layers)?;
            let input = match chosen {
                Some(u) if self.ts.has_entry(x, u) => u,
                other => {
                    trace.records.push(StepRecord {
                        k,
                        state: x,
                        input: other,
                        countdown: None,
                        coordination: coordinated,
                        safe: self.safe.contains(x),
                    });
                    blocked_at = Some(k);
                    break;
                }
            };
            trace.records.push(StepRecord {
                k,
                state: x,
                input: Some(input),
                countdown: None,
                coordination: coordinated,
                safe: self.safe.contains(x),
            });
            x = choose_successor(self.ts, x, input, policy, &mut rng, self.layers)?;
            states.push(x);
        }
        if blocked_at.is_none() {
            trace.records.push(StepRecord {
                k: horizon,
                state: x,
                input: None,
                countdown: None,
                coordination: horizon >= delay,
                safe: self.safe.contains(x),
            });
        }
        let verdict = if let Some(step) = states.iter().position(|&s| !self.safe.contains(s)) {
            Verdict::LeftSafeSet { step }
        } else if let Some(step) = blocked_at {
            Verdict::Blocked { step }
        } else if !self.invariant.contains(states[delay]) {
            Verdict::TailNotInvariant
        } else {
            Verdict::Safe
        };
        Ok(DelayRun { trace, verdict })
    }

    fn exhaustive_delay(
        &self,
        x0: usize,
        delay: usize,
        horizon: usize,
        max_nodes: u64,
    ) -> Result<DelayRun> {
        let outcome = adversarial_reach_unsafe(
            self.ts,
            &self.ind,
            x0,
            delay,
            self.safe,
            &self.invariant,
            max_nodes,
        )?;
        match outcome {
            AdversarialOutcome::Witness(w) => {
                let mut trace = Trace::default();
                for (k, &s) in w.states.iter().enumerate() {
                    trace.records.push(StepRecord {
                        k,
                        state: s,
                        input: w.inputs.get(k).copied(),
                        countdown: None,
                        coordination: false,
                        safe: self.safe.contains(s),
                    });
                }
                let verdict = match w.violation {
                    WitnessViolation::LeftSafeSet => Verdict::LeftSafeSet {
                        step: w.states.len() - 1,
                    },
                    WitnessViolation::Jammed => Verdict::Blocked {
                        step: w.states.len() - 1,
                    },
                    WitnessViolation::MissedInvariant => Verdict::TailNotInvariant,
                };
                Ok(DelayRun { trace, verdict })
            }
            AdversarialOutcome::CertifiedSafe => {
                // No uncoordinated resolution violates; report the canonical
                // lowest-index run out to the horizon.
                let canonical = ResolutionPolicy::FixedPreference { ranking: vec![] };
                self.run_delay_scenario(x0, delay, horizon, &canonical, 0)
            }
        }
    }

    /// Self-triggered execution: agents act independently while their
    /// countdown is positive and coordinate (choosing from the full
    /// controller) when it reaches zero, resetting the countdown to the
    /// layer of the state reached next.
    pub fn run_self_triggered(
        &self,
        x0: usize,
        horizon: usize,
        policy: &ResolutionPolicy,
        run_id: u64,
    ) -> Result<Trace> {
        let layers = self.layers.ok_or_else(|| {
            Error::PolicyUnsupported("self-triggered runs need a layer map".into())
        })?;
        if matches!(policy, ResolutionPolicy::Exhaustive { .. }) {
            return Err(Error::PolicyUnsupported(
                "the exhaustive policy decides verdicts, not self-triggered traces".into(),
            ));
        }
        let mut countdown = layers
            .countdown(x0)
            .ok_or(Error::OutsideInvariantSet { state: x0 })?;
        let mut rng = RunRng::new(policy.seed(), run_id);
        let mut trace = Trace::default();
        let mut x = x0;
        for k in 0..horizon {
            let coordinate_now = countdown == 0;
            let row = if coordinate_now {
                self.ctrl.row(x)
            } else {
                self.ind.row(x)
            };
            let input = choose_input(self.ts, row, x, policy, &mut rng, self.layers)?
                .filter(|&u| self.ts.has_entry(x, u))
                .ok_or(Error::Blocking { state: x, step: k })?;
            trace.records.push(StepRecord {
                k,
                state: x,
                input: Some(input),
                countdown: Some(countdown),
                coordination: coordinate_now,
                safe: self.safe.contains(x),
            });
            x = choose_successor(self.ts, x, input, policy, &mut rng, self.layers)?;
            countdown = if coordinate_now {
                layers
                    .countdown(x)
                    .ok_or(Error::OutsideInvariantSet { state: x })?
            } else {
                countdown - 1
            };
        }
        trace.records.push(StepRecord {
            k: horizon,
            state: x,
            input: None,
            countdown: Some(countdown),
            coordination: false,
            safe: self.safe.contains(x),
        });
        Ok(trace)
    }
}

/// How an adversarial witness run violates the uncoordinated-safety claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessViolation {
    /// A visited state left the safe set.
    LeftSafeSet,
    /// The run jammed on a blocking input or an empty independent set.
    Jammed,
    /// The final state missed the invariant set.
    MissedInvariant,
}

/// A concrete uncoordinated run demonstrating a violation. `inputs[i]` was
/// taken from `states[i]`; a jammed run ends with the blocking input and no
/// further state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessRun {
    pub states: Vec<usize>,
    pub inputs: Vec<usize>,
    pub violation: WitnessViolation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversarialOutcome {
    Witness(WitnessRun),
    CertifiedSafe,
}

/// Exhaustive search for a `≤ d`-step uncoordinated run that leaves the
/// safe set, jams, or ends outside the invariant set. Either returns such a
/// witness or certifies that none exists. Refuses (never guesses) when the
/// search would exceed `max_nodes`.
pub fn adversarial_reach_unsafe(
    ts: &TransitionSystem,
    indctrl: &Controller,
    x0: usize,
    d: usize,
    safe: &StateSet,
    invariant: &StateSet,
    max_nodes: u64,
) -> Result<AdversarialOutcome> {
    if x0 >= ts.num_states() {
        return Err(Error::IndexOutOfRange {
            context: "initial state",
            index: x0,
            size: ts.num_states(),
        });
    }
    let needed = (d as u64 + 1)
        .saturating_mul(ts.num_states() as u64)
        .saturating_mul(ts.num_joint_inputs() as u64);
    if needed > max_nodes {
        return Err(Error::BudgetExceeded {
            needed,
            budget: max_nodes,
        });
    }

    // memo[r * |X| + x]: 0 unknown, 1 safe for r more steps, 2 unsafe.
    let num_states = ts.num_states();
    let mut memo = vec![0u8; (d + 1) * num_states];

    fn safe_for(
        ts: &TransitionSystem,
        ind: &Controller,
        safe: &StateSet,
        invariant: &StateSet,
        memo: &mut [u8],
        num_states: usize,
        x: usize,
        r: usize,
    ) -> bool {
        let slot = r * num_states + x;
        match memo[slot] {
            1 => return true,
            2 => return false,
            _ => {}
        }
        let ok = if r == 0 {
            invariant.contains(x)
        } else if !safe.contains(x) || ind.is_empty_at(x) {
            false
        } else {
            let mut all = true;
            'inputs: for u in ind.iter_allowed(x) {
                if !ts.has_entry(x, u) {
                    all = false;
                    break;
                }
                let n = ts.cell_count(x, u);
                for k in 0..n {
                    let c = ts.nth_cell(x, u, k).unwrap();
                    if !safe_for(ts, ind, safe, invariant, memo, num_states, c, r - 1) {
                        all = false;
                        break 'inputs;
                    }
                }
            }
            all
        };
        memo[slot] = if ok { 1 } else { 2 };
        ok
    }

    if safe_for(ts, indctrl, safe, invariant, &mut memo, num_states, x0, d) {
        return Ok(AdversarialOutcome::CertifiedSafe);
    }

    // Reconstruct a witness by following failing branches, lowest input and
    // lowest successor first.
    let mut states = vec![x0];
    let mut inputs = Vec::new();
    let mut x = x0;
    let mut r = d;
    let violation = loop {
        if r == 0 {
            break if !safe.contains(x) {
                WitnessViolation::LeftSafeSet
            } else {
                WitnessViolation::MissedInvariant
            };
        }
        if !safe.contains(x) {
            break WitnessViolation::LeftSafeSet;
        }
        if indctrl.is_empty_at(x) {
            break WitnessViolation::Jammed;
        }
        let mut advanced = false;
        'outer: for u in indctrl.iter_allowed(x) {
            if !ts.has_entry(x, u) {
                inputs.push(u);
                return Ok(AdversarialOutcome::Witness(WitnessRun {
                    states,
                    inputs,
                    violation: WitnessViolation::Jammed,
                }));
            }
            let n = ts.cell_count(x, u);
            for k in 0..n {
                let c = ts.nth_cell(x, u, k).unwrap();
                if !safe_for(ts, indctrl, safe, invariant, &mut memo, num_states, c, r - 1) {
                    inputs.push(u);
                    states.push(c);
                    x = c;
                    r -= 1;
                    advanced = true;
                    break 'outer;
                }
            }
        }
        debug_assert!(advanced, "unsafe verdict must have a failing branch");
        if !advanced {
            break WitnessViolation::MissedInvariant;
        }
    };
    Ok(AdversarialOutcome::Witness(WitnessRun {
        states,
        inputs,
        violation,
    }))
}

/// Check trace consistency against a system: every consecutive pair is a
/// stored transition of the recorded input.
pub fn validate_trace(ts: &TransitionSystem, trace: &Trace) -> bool {
    for pair in trace.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        match a.input {
            Some(u) => {
                if !ts.has_entry(a.state, u) {
                    return false;
                }
                let mut found = false;
                ts.for_each_cell(a.state, u, |c| found |= c == b.state);
                if !found {
                    return false;
                }
            }
            None => return false,
        }
    }
    true
}
