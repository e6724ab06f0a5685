//! Scenario definitions: builtin presets, the JSON schema, and realization
//! into a transition system, safe set, and coordination partition.
//!
//! Builtins carry two parameter sets: `paper` fidelity uses the original
//! grid parameters, `desk` fidelity uses coarser grids sized for a single
//! workstation. Safe-set membership is evaluated at cell centers.

use crate::abstraction::{abstract_system, AbstractionSpec, DynamicsSpec, Integrator};
use crate::grid::UniformGrid;
use crate::sets::StateSet;
use crate::space::{enumerated_space, FactoredInputSpace, Partition};
use crate::system::TransitionSystem;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    /// Original grid parameters.
    Paper,
    /// Coarser grids sized for desk-scale runs.
    Desk,
}

impl std::str::FromStr for Fidelity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Fidelity::Paper),
            "desk" => Ok(Fidelity::Desk),
            other => Err(Error::Scenario(format!(
                "unknown fidelity {other:?} (expected \"paper\" or \"desk\")"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinDynamics {
    /// Two agents steering one axis each inside a disc.
    Circle,
    /// Two vehicles with quadratic drag approaching an intersection.
    Intersection,
    /// Two planar agents avoiding each other in a box.
    Gridworld,
}

/// Explicit finite system given as a table (states are an enumerated 1-D
/// grid; successor boxes are index intervals on it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSystem {
    pub num_states: usize,
    pub component_sizes: Vec<usize>,
    pub entries: Vec<TabulatedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedEntry {
    pub state: usize,
    /// Per-component input indices.
    pub input: Vec<usize>,
    pub lo: Vec<u32>,
    pub hi: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsSelector {
    Builtin(BuiltinDynamics),
    Tabulated(TabulatedSystem),
}

/// Grid and sampling parameters for continuous dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionParams {
    pub state_bounds: Vec<(f64, f64)>,
    pub eta: Vec<f64>,
    pub input_bounds: Vec<(f64, f64)>,
    pub eps: Vec<f64>,
    pub component_dims: Vec<usize>,
    pub tau: f64,
    #[serde(default)]
    pub inflation: Option<Vec<f64>>,
    /// Substeps per sampling period for the fixed-step integrator.
    #[serde(default)]
    pub substeps: Option<usize>,
}

/// Safe-set predicate, evaluated at cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SafeSetSpec {
    /// `‖x‖₂ ≤ radius` over all state dimensions.
    Disc { radius: f64 },
    /// `|x_d| ≥ threshold` for at least one of the listed dimensions.
    AnyCoordinateAtLeast { dims: Vec<usize>, threshold: f64 },
    /// `max over pairs |x_a - x_b| ≥ min_distance` (outside the collision
    /// region).
    PairSeparation {
        pairs: Vec<(usize, usize)>,
        min_distance: f64,
    },
    Indices { indices: Vec<usize> },
    All,
}

impl SafeSetSpec {
    pub fn evaluate(&self, grid: &UniformGrid) -> Result<StateSet> {
        match self {
            SafeSetSpec::Indices { indices } => {
                for &i in indices {
                    if i >= grid.len() {
                        return Err(Error::IndexOutOfRange {
                            context: "safe set index",
                            index: i,
                            size: grid.len(),
                        });
                    }
                }
                Ok(StateSet::from_indices(grid.len(), indices.iter().copied()))
            }
            SafeSetSpec::All => Ok(StateSet::full(grid.len())),
            SafeSetSpec::Disc { radius } => {
                let r2 = radius * radius;
                let mut p = vec![0.0; grid.num_dims()];
                Ok(StateSet::from_fn(grid.len(), |i| {
                    grid.point_into(i, &mut p);
                    p.iter().map(|&x| x * x).sum::<f64>() <= r2
                }))
            }
            SafeSetSpec::AnyCoordinateAtLeast { dims, threshold } => {
                for &d in dims {
                    if d >= grid.num_dims() {
                        return Err(Error::IndexOutOfRange {
                            context: "safe set dimension",
                            index: d,
                            size: grid.num_dims(),
                        });
                    }
                }
                let mut p = vec![0.0; grid.num_dims()];
                Ok(StateSet::from_fn(grid.len(), |i| {
                    grid.point_into(i, &mut p);
                    dims.iter().any(|&d| p[d].abs() >= *threshold)
                }))
            }
            SafeSetSpec::PairSeparation {
                pairs,
                min_distance,
            } => {
                for &(a, b) in pairs {
                    if a >= grid.num_dims() || b >= grid.num_dims() {
                        return Err(Error::IndexOutOfRange {
                            context: "safe set dimension",
                            index: a.max(b),
                            size: grid.num_dims(),
                        });
                    }
                }
                let mut p = vec![0.0; grid.num_dims()];
                Ok(StateSet::from_fn(grid.len(), |i| {
                    grid.point_into(i, &mut p);
                    pairs
                        .iter()
                        .map(|&(a, b)| (p[a] - p[b]).abs())
                        .fold(f64::NEG_INFINITY, f64::max)
                        >= *min_distance
                }))
            }
        }
    }
}

/// Where simulations start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSetSpec {
    /// Sample uniformly from the controlled invariant set.
    #[default]
    Invariant,
    Indices { indices: Vec<usize> },
    Points { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Uniform,
    FixedPreference { ranking: Vec<usize> },
    AdversarialGreedy,
    Exhaustive { max_nodes: u64 },
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec::Uniform
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub delay: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub policy: PolicySpec,
}

fn default_horizon() -> usize {
    1000
}

fn default_seed() -> u64 {
    1
}

fn default_runs() -> usize {
    10
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            delay: 0,
            seed: default_seed(),
            runs: default_runs(),
            policy: PolicySpec::default(),
        }
    }
}

/// A fully parameterized analysis problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub dynamics: DynamicsSelector,
    #[serde(default)]
    pub abstraction: Option<AbstractionParams>,
    pub safe_set: SafeSetSpec,
    /// Coordination classes over input components.
    pub partition: Vec<Vec<usize>>,
    #[serde(default)]
    pub initial_set: InitialSetSpec,
    #[serde(default)]
    pub simulation: SimulationSettings,
}

/// A scenario realized into concrete analysis inputs.
#[derive(Debug, Clone)]
pub struct RealizedScenario {
    pub name: String,
    pub system: TransitionSystem,
    pub safe: StateSet,
    pub partition: Partition,
    pub initial_set: InitialSetSpec,
    pub settings: SimulationSettings,
    pub scenario: Scenario,
}

pub const BUILTIN_NAMES: [&str; 4] = ["circle", "intersection", "gridworld", "headon"];

impl Scenario {
    /// Builtin scenario by name at the requested fidelity.
    pub fn builtin(name: &str, fidelity: Fidelity) -> Result<Self> {
        match name {
            "circle" => Ok(Self::circle(fidelity)),
            "intersection" => Ok(Self::intersection(fidelity)),
            "gridworld" => Ok(Self::gridworld(fidelity)),
            "headon" => Ok(Self::head_on()),
            other => Err(Error::Scenario(format!(
                "unknown builtin scenario {other:?} (expected one of {BUILTIN_NAMES:?})"
            ))),
        }
    }

    /// Interpret `arg` as a builtin name, else as a path to a scenario file.
    pub fn load_or_builtin(arg: &str, fidelity: Fidelity) -> Result<Self> {
        if BUILTIN_NAMES.contains(&arg) {
            Self::builtin(arg, fidelity)
        } else {
            load_scenario(std::path::Path::new(arg))
        }
    }

    fn circle(fidelity: Fidelity) -> Self {
        let (eta, eps) = match fidelity {
            Fidelity::Paper => (0.01, 0.05),
            Fidelity::Desk => (0.02, 0.1),
        };
        Scenario {
            name: format!("circle-{}", fidelity_tag(fidelity)),
            dynamics: DynamicsSelector::Builtin(BuiltinDynamics::Circle),
            abstraction: Some(AbstractionParams {
                state_bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
                eta: vec![eta, eta],
                input_bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
                eps: vec![eps, eps],
                component_dims: vec![1, 1],
                tau: 0.01,
                inflation: None,
                substeps: None,
            }),
            safe_set: SafeSetSpec::Disc { radius: 0.8 },
            partition: vec![vec![0], vec![1]],
            initial_set: InitialSetSpec::Points {
                points: vec![vec![0.0, 0.0]],
            },
            simulation: SimulationSettings::default(),
        }
    }

    fn intersection(fidelity: Fidelity) -> Self {
        let (eta, eps) = match fidelity {
            Fidelity::Paper => (vec![0.1, 0.1, 0.1, 0.1], vec![0.1, 0.1]),
            Fidelity::Desk => (vec![0.5, 0.25, 0.5, 0.25], vec![0.25, 0.25]),
        };
        Scenario {
            name: format!("intersection-{}", fidelity_tag(fidelity)),
            dynamics: DynamicsSelector::Builtin(BuiltinDynamics::Intersection),
            abstraction: Some(AbstractionParams {
                state_bounds: vec![(-10.0, 10.0), (0.0, 3.0), (-10.0, 10.0), (0.0, 3.0)],
                eta,
                input_bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
                eps,
                component_dims: vec![1, 1],
                tau: 0.2,
                inflation: None,
                substeps: None,
            }),
            safe_set: SafeSetSpec::AnyCoordinateAtLeast {
                dims: vec![0, 2],
                threshold: 2.0,
            },
            partition: vec![vec![0], vec![1]],
            initial_set: InitialSetSpec::Invariant,
            simulation: SimulationSettings::default(),
        }
    }

    fn gridworld(fidelity: Fidelity) -> Self {
        let (eta, eps) = match fidelity {
            Fidelity::Paper => (0.01, 0.2),
            Fidelity::Desk => (0.02, 0.4),
        };
        Scenario {
            name: format!("gridworld-{}", fidelity_tag(fidelity)),
            dynamics: DynamicsSelector::Builtin(BuiltinDynamics::Gridworld),
            abstraction: Some(AbstractionParams {
                state_bounds: vec![(-0.2, 0.2); 4],
                eta: vec![eta; 4],
                input_bounds: vec![(-1.0, 1.0); 4],
                eps: vec![eps; 4],
                component_dims: vec![2, 2],
                tau: 0.01,
                inflation: None,
                substeps: None,
            }),
            // Collision when both axis gaps between the agents drop under
            // the separation threshold; dims are (x1¹, x2¹, x1², x2²).
            safe_set: SafeSetSpec::PairSeparation {
                pairs: vec![(0, 2), (1, 3)],
                min_distance: 0.1,
            },
            partition: vec![vec![0], vec![1]],
            initial_set: InitialSetSpec::Invariant,
            simulation: SimulationSettings::default(),
        }
    }

    /// Two vehicles facing each other, one lane each to swerve into:
    /// negotiation succeeds only when exactly one changes lane.
    fn head_on() -> Self {
        // States: 0 = facing off, 1 = passed safely, 2 = crashed.
        // Component input values: 0 = change lane, 1 = stay.
        let all_inputs = [[0, 0], [1, 0], [0, 1], [1, 1]];
        let mut entries = Vec::new();
        for input in all_inputs {
            let crash = input[0] == input[1];
            let target = if crash { 2 } else { 1 };
            entries.push(TabulatedEntry {
                state: 0,
                input: input.to_vec(),
                lo: vec![target],
                hi: vec![target],
            });
            entries.push(TabulatedEntry {
                state: 1,
                input: input.to_vec(),
                lo: vec![1],
                hi: vec![1],
            });
            entries.push(TabulatedEntry {
                state: 2,
                input: input.to_vec(),
                lo: vec![2],
                hi: vec![2],
            });
        }
        Scenario {
            name: "headon".into(),
            dynamics: DynamicsSelector::Tabulated(TabulatedSystem {
                num_states: 3,
                component_sizes: vec![2, 2],
                entries,
            }),
            abstraction: None,
            safe_set: SafeSetSpec::Indices { indices: vec![0, 1] },
            partition: vec![vec![0], vec![1]],
            initial_set: InitialSetSpec::Indices { indices: vec![0] },
            simulation: SimulationSettings {
                horizon: 10,
                ..SimulationSettings::default()
            },
        }
    }

    /// Canonical byte representation used for content hashing.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("scenario serializes")
    }

    /// Build the transition system, safe set, and partition.
    pub fn realize(&self, memory_budget: Option<u64>) -> Result<RealizedScenario> {
        let (system, num_components) = match &self.dynamics {
            DynamicsSelector::Tabulated(tab) => {
                let n = tab.component_sizes.len();
                (realize_tabulated(tab, memory_budget)?, n)
            }
            DynamicsSelector::Builtin(builtin) => {
                let params = self.abstraction.as_ref().ok_or_else(|| {
                    Error::Scenario(
                        "builtin continuous dynamics need an \"abstraction\" block".into(),
                    )
                })?;
                let dynamics = builtin_dynamics(*builtin, params)?;
                let spec = AbstractionSpec {
                    state_bounds: params.state_bounds.clone(),
                    eta: params.eta.clone(),
                    input_bounds: params.input_bounds.clone(),
                    eps: params.eps.clone(),
                    component_dims: params.component_dims.clone(),
                    dynamics,
                    memory_budget,
                };
                (abstract_system(&spec)?, params.component_dims.len())
            }
        };
        let safe = self.safe_set.evaluate(system.state_grid())?;
        let partition = Partition::new(self.partition.clone(), num_components)?;
        partition.check_against(system.inputs())?;
        validate_initial_set(&self.initial_set, system.state_grid())?;
        Ok(RealizedScenario {
            name: self.name.clone(),
            system,
            safe,
            partition,
            initial_set: self.initial_set.clone(),
            settings: self.simulation.clone(),
            scenario: self.clone(),
        })
    }
}

fn fidelity_tag(f: Fidelity) -> &'static str {
    match f {
        Fidelity::Paper => "paper",
        Fidelity::Desk => "desk",
    }
}

fn validate_initial_set(spec: &InitialSetSpec, grid: &UniformGrid) -> Result<()> {
    match spec {
        InitialSetSpec::Invariant => Ok(()),
        InitialSetSpec::Indices { indices } => {
            for &i in indices {
                if i >= grid.len() {
                    return Err(Error::Scenario(format!(
                        "initial state index {i} out of range for {} states",
                        grid.len()
                    )));
                }
            }
            if indices.is_empty() {
                return Err(Error::Scenario("initial set is empty".into()));
            }
            Ok(())
        }
        InitialSetSpec::Points { points } => {
            if points.is_empty() {
                return Err(Error::Scenario("initial set is empty".into()));
            }
            for p in points {
                grid.index_of(p)?;
            }
            Ok(())
        }
    }
}

fn realize_tabulated(
    tab: &TabulatedSystem,
    memory_budget: Option<u64>,
) -> Result<TransitionSystem> {
    if tab.num_states == 0 {
        return Err(Error::Scenario("tabulated system has no states".into()));
    }
    let grid = UniformGrid::enumerated(tab.num_states)?;
    let space = enumerated_space(&tab.component_sizes)?;
    let mut ts = TransitionSystem::new(grid, space, memory_budget)?;
    for (i, e) in tab.entries.iter().enumerate() {
        if e.input.len() != tab.component_sizes.len() {
            return Err(Error::Scenario(format!(
                "entry {i}: input tuple has {} components, expected {}",
                e.input.len(),
                tab.component_sizes.len()
            )));
        }
        for (c, (&v, &size)) in e.input.iter().zip(&tab.component_sizes).enumerate() {
            if v >= size {
                return Err(Error::Scenario(format!(
                    "entry {i}: input component {c} value {v} out of range {size}"
                )));
            }
        }
        let u = ts.inputs().encode(&e.input);
        ts.set_entry(e.state, u, &e.lo, &e.hi)?;
    }
    Ok(ts)
}

fn builtin_dynamics(builtin: BuiltinDynamics, params: &AbstractionParams) -> Result<DynamicsSpec> {
    let substeps = params.substeps.unwrap_or(8);
    let spec = match builtin {
        BuiltinDynamics::Circle => {
            expect_dims(params, 2, 2, builtin)?;
            DynamicsSpec::new(2, 2, params.tau, |_x, u, dx| {
                dx[0] = u[0];
                dx[1] = u[1];
            })?
            .declare_affine()
            .with_integrator(Integrator::ExactAffine)?
        }
        BuiltinDynamics::Gridworld => {
            expect_dims(params, 4, 4, builtin)?;
            DynamicsSpec::new(4, 4, params.tau, |_x, u, dx| {
                dx.copy_from_slice(u);
            })?
            .declare_affine()
            .with_integrator(Integrator::ExactAffine)?
        }
        BuiltinDynamics::Intersection => {
            expect_dims(params, 4, 2, builtin)?;
            // Velocity saturates at its declared bounds as part of the
            // vehicle model, not the integrator.
            let (v_lo, v_hi) = params.state_bounds[1];
            let drag = 0.2;
            let clamp = move |v: f64, vdot: f64| -> f64 {
                if (v <= v_lo && vdot < 0.0) || (v >= v_hi && vdot > 0.0) {
                    0.0
                } else {
                    vdot
                }
            };
            let mut growth = vec![0.0; 16];
            growth[1] = 1.0; // ∂ṗ1/∂v1
            growth[2 * 4 + 3] = 1.0; // ∂ṗ2/∂v2
            DynamicsSpec::new(4, 2, params.tau, move |x, u, dx| {
                dx[0] = x[1];
                dx[1] = clamp(x[1], u[0] - drag * x[1] * x[1]);
                dx[2] = x[3];
                dx[3] = clamp(x[3], u[1] - drag * x[3] * x[3]);
            })?
            .with_integrator(Integrator::FixedStep { substeps })?
            .with_growth(growth)?
        }
    };
    Ok(spec)
}

fn expect_dims(
    params: &AbstractionParams,
    state: usize,
    input: usize,
    builtin: BuiltinDynamics,
) -> Result<()> {
    if params.state_bounds.len() != state
        || params.eta.len() != state
        || params.input_bounds.len() != input
        || params.eps.len() != input
    {
        return Err(Error::Scenario(format!(
            "{builtin:?} dynamics need {state} state and {input} input dimensions"
        )));
    }
    Ok(())
}

/// Load and validate a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let scenario: Scenario = serde_json::from_str(&text)?;
    validate_scenario(&scenario)?;
    Ok(scenario)
}

fn validate_scenario(s: &Scenario) -> Result<()> {
    if s.name.is_empty() {
        return Err(Error::Scenario("scenario name is empty".into()));
    }
    if let Some(a) = &s.abstraction {
        if !(a.tau.is_finite() && a.tau > 0.0) {
            return Err(Error::Scenario(format!(
                "sampling period {} must be finite and positive",
                a.tau
            )));
        }
        for (d, &e) in a.eta.iter().chain(&a.eps).enumerate() {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::Scenario(format!(
                    "grid parameter {e} (entry {d}) must be finite and positive"
                )));
            }
        }
        if let Some(inf) = &a.inflation {
            if inf.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
                return Err(Error::Scenario("inflation radii must be nonnegative".into()));
            }
        }
    }
    let num_components = match &s.dynamics {
        DynamicsSelector::Tabulated(t) => t.component_sizes.len(),
        DynamicsSelector::Builtin(_) => s
            .abstraction
            .as_ref()
            .map(|a| a.component_dims.len())
            .unwrap_or(0),
    };
    Partition::new(s.partition.clone(), num_components)?;
    Ok(())
}

/// The two-vehicle head-on fixture, realized.
pub fn head_on_fixture() -> RealizedScenario {
    Scenario::builtin("headon", Fidelity::Desk)
        .expect("builtin exists")
        .realize(None)
        .expect("fixture realizes")
}

/// Factored input space of the fixture (used by tests).
pub fn head_on_input_space() -> FactoredInputSpace {
    enumerated_space(&[2, 2]).expect("valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_paper_parameters() {
        let s = Scenario::builtin("circle", Fidelity::Paper).unwrap();
        let a = s.abstraction.as_ref().unwrap();
        assert_eq!(a.tau, 0.01);
        assert_eq!(a.eta, vec![0.01, 0.01]);
        assert_eq!(a.eps, vec![0.05, 0.05]);
        assert_eq!(a.state_bounds, vec![(-1.0, 1.0), (-1.0, 1.0)]);
        assert_eq!(s.safe_set, SafeSetSpec::Disc { radius: 0.8 });
    }

    #[test]
    fn intersection_parameters() {
        let s = Scenario::builtin("intersection", Fidelity::Paper).unwrap();
        let a = s.abstraction.as_ref().unwrap();
        assert_eq!(a.tau, 0.2);
        assert_eq!(a.eta, vec![0.1, 0.1, 0.1, 0.1]);
        assert_eq!(a.eps, vec![0.1, 0.1]);
        assert_eq!(
            s.safe_set,
            SafeSetSpec::AnyCoordinateAtLeast {
                dims: vec![0, 2],
                threshold: 2.0
            }
        );
    }

    #[test]
    fn gridworld_parameters() {
        let s = Scenario::builtin("gridworld", Fidelity::Paper).unwrap();
        let a = s.abstraction.as_ref().unwrap();
        assert_eq!(a.tau, 0.01);
        assert_eq!(a.eps, vec![0.2; 4]);
        assert_eq!(
            s.safe_set,
            SafeSetSpec::PairSeparation {
                pairs: vec![(0, 2), (1, 3)],
                min_distance: 0.1
            }
        );
    }

    #[test]
    fn head_on_fixture_realizes_as_specified() {
        let fx = head_on_fixture();
        assert_eq!(fx.system.num_states(), 3);
        assert_eq!(fx.system.num_joint_inputs(), 4);
        assert_eq!(fx.safe.indices(), vec![0, 1]);
        // (C,S) and (S,C) pass, (C,C) and (S,S) crash.
        assert_eq!(fx.system.successor_cells(0, 1), vec![1]);
        assert_eq!(fx.system.successor_cells(0, 2), vec![1]);
        assert_eq!(fx.system.successor_cells(0, 0), vec![2]);
        assert_eq!(fx.system.successor_cells(0, 3), vec![2]);
        // Absorbing states.
        for u in 0..4 {
            assert_eq!(fx.system.successor_cells(1, u), vec![1]);
            assert_eq!(fx.system.successor_cells(2, u), vec![2]);
        }
    }

    #[test]
    fn desk_circle_realizes() {
        let fx = Scenario::builtin("circle", Fidelity::Desk)
            .unwrap()
            .realize(None)
            .unwrap();
        assert_eq!(fx.system.num_states(), 101 * 101);
        assert_eq!(fx.system.num_joint_inputs(), 21 * 21);
        // The safe disc has the right cardinality ballpark (π r² / η²).
        let frac = fx.safe.count() as f64 / fx.system.num_states() as f64;
        assert!((frac - std::f64::consts::PI * 0.64 / 4.0).abs() < 0.01);
    }

    #[test]
    fn scenario_files_round_trip() {
        let s = Scenario::builtin("circle", Fidelity::Desk).unwrap();
        let dir = std::env::temp_dir().join("coordfree-scenario-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("circle.json");
        std::fs::write(&path, serde_json::to_string_pretty(&s).unwrap()).unwrap();
        let loaded = load_scenario(&path).unwrap();
        assert_eq!(loaded, s);
    }

    #[test]
    fn parse_errors_name_the_location() {
        let dir = std::env::temp_dir().join("coordfree-scenario-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("broken.json");
        std::fs::write(&path, "{\"name\": \"x\", \"dynamics\": }").unwrap();
        match load_scenario(&path) {
            Err(Error::Json(e)) => {
                assert!(e.line() >= 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn semantic_validation_names_the_violation() {
        let mut s = Scenario::builtin("circle", Fidelity::Desk).unwrap();
        s.partition = vec![vec![0], vec![0, 1]];
        let dir = std::env::temp_dir().join("coordfree-scenario-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("badpartition.json");
        std::fs::write(&path, serde_json::to_string(&s).unwrap()).unwrap();
        match load_scenario(&path) {
            Err(Error::InvalidPartition(msg)) => assert!(msg.contains("0")),
            other => panic!("expected partition error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(Scenario::builtin("triangle", Fidelity::Desk).is_err());
    }
}
