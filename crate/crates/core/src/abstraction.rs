//! Finite abstraction of sampled continuous dynamics.
//!
//! For each grid cell and input grid point, [`overapprox_successor_box`]
//! bounds the time-`τ` image of the whole cell with an axis-aligned box:
//! the cell center is integrated forward while the cell half-widths are
//! propagated through a declared per-dimension-pair growth bound, then the
//! configured inflation is added. [`abstract_system`] turns those boxes into
//! a [`TransitionSystem`] by covering each box with grid cells; boxes that
//! leave the covered region make the pair blocking.

use crate::grid::UniformGrid;
use crate::space::FactoredInputSpace;
use crate::system::TransitionSystem;
use crate::{Error, Result};
use std::sync::Arc;

/// Right-hand side of `ẋ = g(x, u)`: fills `dx` from `(x, u)`.
pub type Rhs = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Exact flow for fields affine in the input and constant in the state
    /// (`ẋ = B·u + c`): one field evaluation, cell radius preserved.
    ExactAffine,
    /// Fixed-step explicit 4-stage integration with the given number of
    /// substeps per sampling period.
    FixedStep { substeps: usize },
}

/// Sampled dynamics plus the declared bounds the abstraction relies on.
#[derive(Clone)]
pub struct DynamicsSpec {
    state_dim: usize,
    input_dim: usize,
    rhs: Arc<Rhs>,
    tau: f64,
    inflation: Vec<f64>,
    /// Row-major `n x n` growth bound: entry `(i, j)` bounds `∂g_i/∂x_j`
    /// (off-diagonal entries by absolute value, diagonal entries from
    /// above). Cell radii evolve along `ṙ = G·r`.
    growth: Vec<f64>,
    integrator: Integrator,
    declared_affine: bool,
}

impl std::fmt::Debug for DynamicsSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicsSpec")
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("tau", &self.tau)
            .field("inflation", &self.inflation)
            .field("growth", &self.growth)
            .field("integrator", &self.integrator)
            .field("declared_affine", &self.declared_affine)
            .finish()
    }
}

impl DynamicsSpec {
    /// Defaults: 4-stage fixed-step integration with 8 substeps, zero
    /// inflation, zero growth bound, not declared affine.
    pub fn new(
        state_dim: usize,
        input_dim: usize,
        tau: f64,
        rhs: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Scenario(format!(
                "sampling period {tau} must be finite and positive"
            )));
        }
        Ok(Self {
            state_dim,
            input_dim,
            rhs: Arc::new(rhs),
            tau,
            inflation: vec![0.0; state_dim],
            growth: vec![0.0; state_dim * state_dim],
            integrator: Integrator::FixedStep { substeps: 8 },
            declared_affine: false,
        })
    }

    /// Declare the field affine in the input and constant in the state,
    /// unlocking [`Integrator::ExactAffine`].
    pub fn declare_affine(mut self) -> Self {
        self.declared_affine = true;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Result<Self> {
        if matches!(integrator, Integrator::ExactAffine) && !self.declared_affine {
            return Err(Error::NotAffine);
        }
        if let Integrator::FixedStep { substeps } = integrator {
            if substeps == 0 {
                return Err(Error::Scenario("substeps must be positive".into()));
            }
        }
        self.integrator = integrator;
        Ok(self)
    }

    /// Additive per-dimension radius added to every successor box.
    pub fn with_inflation(mut self, inflation: Vec<f64>) -> Result<Self> {
        if inflation.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "inflation vs state dimension",
                expected: self.state_dim,
                got: inflation.len(),
            });
        }
        if inflation.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
            return Err(Error::Scenario("inflation radii must be nonnegative".into()));
        }
        self.inflation = inflation;
        Ok(self)
    }

    /// Row-major `n x n` growth bound matrix.
    pub fn with_growth(mut self, growth: Vec<f64>) -> Result<Self> {
        if growth.len() != self.state_dim * self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "growth matrix vs state dimension",
                expected: self.state_dim * self.state_dim,
                got: growth.len(),
            });
        }
        self.growth = growth;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn inflation(&self) -> &[f64] {
        &self.inflation
    }

    pub fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        (self.rhs)(x, u, dx);
    }
}

/// Real-valued axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct RealBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RealBox {
    pub fn center(&self, d: usize) -> f64 {
        (self.lo[d] + self.hi[d]) / 2.0
    }

    pub fn half_width(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / 2.0
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        p.iter()
            .enumerate()
            .all(|(d, &x)| x >= self.lo[d] && x <= self.hi[d])
    }
}

struct Workspace {
    center: Vec<f64>,
    radius: Vec<f64>,
    k: [Vec<f64>; 4],
    rk: [Vec<f64>; 4],
    stage: Vec<f64>,
    rstage: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            radius: vec![0.0; n],
            k: std::array::from_fn(|_| vec![0.0; n]),
            rk: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
            rstage: vec![0.0; n],
        }
    }
}

fn matvec(n: usize, m: &[f64], v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += m[i * n + j] * v[j];
        }
        out[i] = acc;
    }
}

/// One 4-stage step of `h` on the center and, in lockstep, on the radius
/// dynamics `ṙ = G·r`.
fn rk4_substep(spec: &DynamicsSpec, u: &[f64], h: f64, ws: &mut Workspace) {
    let n = spec.state_dim;
    let weights = [h / 2.0, h / 2.0, h];
    spec.eval(&ws.center, u, &mut ws.k[0]);
    matvec(n, &spec.growth, &ws.radius, &mut ws.rk[0]);
    for s in 0..3 {
        for i in 0..n {
            ws.stage[i] = ws.center[i] + weights[s] * ws.k[s][i];
            ws.rstage[i] = ws.radius[i] + weights[s] * ws.rk[s][i];
        }
        spec.eval(&ws.stage, u, &mut ws.k[s + 1]);
        matvec(n, &spec.growth, &ws.rstage, &mut ws.rk[s + 1]);
    }
    for i in 0..n {
        ws.center[i] += h / 6.0 * (ws.k[0][i] + 2.0 * ws.k[1][i] + 2.0 * ws.k[2][i] + ws.k[3][i]);
        ws.radius[i] += h / 6.0 * (ws.rk[0][i] + 2.0 * ws.rk[1][i] + 2.0 * ws.rk[2][i] + ws.rk[3][i]);
        ws.radius[i] = ws.radius[i].max(0.0);
    }
}

fn propagate(spec: &DynamicsSpec, u: &[f64], ws: &mut Workspace) -> Result<()> {
    match spec.integrator {
        Integrator::ExactAffine => {
            if !spec.declared_affine {
                return Err(Error::NotAffine);
            }
            let n = spec.state_dim;
            spec.eval(&ws.center, u, &mut ws.k[0]);
            for i in 0..n {
                ws.center[i] += spec.tau * ws.k[0][i];
            }
        }
        Integrator::FixedStep { substeps } => {
            let h = spec.tau / substeps as f64;
            for _ in 0..substeps {
                rk4_substep(spec, u, h, ws);
            }
        }
    }
    for (d, (&c, &r)) in ws.center.iter().zip(&ws.radius).enumerate() {
        if !c.is_finite() || !r.is_finite() {
            return Err(Error::NonFinite { dim: d });
        }
    }
    Ok(())
}

/// Box containing the time-`τ` image of every state within `radius` of
/// `center` under constant input `u`, inflated by the spec's inflation
/// radii.
pub fn overapprox_successor_box(
    spec: &DynamicsSpec,
    center: &[f64],
    radius: &[f64],
    u: &[f64],
) -> Result<RealBox> {
    if center.len() != spec.state_dim || radius.len() != spec.state_dim {
        return Err(Error::DimensionMismatch {
            context: "cell vs state dimension",
            expected: spec.state_dim,
            got: center.len().min(radius.len()),
        });
    }
    if u.len() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            context: "input point vs input dimension",
            expected: spec.input_dim,
            got: u.len(),
        });
    }
    let mut ws = Workspace::new(spec.state_dim);
    ws.center.copy_from_slice(center);
    ws.radius.copy_from_slice(radius);
    propagate(spec, u, &mut ws)?;
    let n = spec.state_dim;
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for d in 0..n {
        let r = ws.radius[d] + spec.inflation[d];
        lo[d] = ws.center[d] - r;
        hi[d] = ws.center[d] + r;
    }
    Ok(RealBox { lo, hi })
}

/// Everything needed to build a finite abstraction.
#[derive(Debug, Clone)]
pub struct AbstractionSpec {
    pub state_bounds: Vec<(f64, f64)>,
    pub eta: Vec<f64>,
    /// Input bounds and grid parameters, flat over all input dimensions.
    pub input_bounds: Vec<(f64, f64)>,
    pub eps: Vec<f64>,
    /// How the flat input dimensions split into per-agent components.
    pub component_dims: Vec<usize>,
    pub dynamics: DynamicsSpec,
    pub memory_budget: Option<u64>,
}

impl AbstractionSpec {
    pub fn state_grid(&self) -> Result<UniformGrid> {
        UniformGrid::new(&self.state_bounds, &self.eta)
    }

    pub fn input_space(&self) -> Result<FactoredInputSpace> {
        if self.component_dims.iter().sum::<usize>() != self.input_bounds.len()
            || self.input_bounds.len() != self.eps.len()
        {
            return Err(Error::DimensionMismatch {
                context: "input component split vs input dimensions",
                expected: self.input_bounds.len(),
                got: self.component_dims.iter().sum(),
            });
        }
        let mut grids = Vec::with_capacity(self.component_dims.len());
        let mut offset = 0;
        for &nd in &self.component_dims {
            grids.push(UniformGrid::new(
                &self.input_bounds[offset..offset + nd],
                &self.eps[offset..offset + nd],
            )?);
            offset += nd;
        }
        FactoredInputSpace::new(grids)
    }
}

/// Build the finite abstraction: for every in-bounds cell and input grid
/// point, the entry covers [`overapprox_successor_box`] with grid cells;
/// the entry is absent when the box leaves the covered region.
pub fn abstract_system(spec: &AbstractionSpec) -> Result<TransitionSystem> {
    let grid = spec.state_grid()?;
    let inputs = spec.input_space()?;
    let n = grid.num_dims();
    if n != spec.dynamics.state_dim {
        return Err(Error::DimensionMismatch {
            context: "state grid vs dynamics",
            expected: spec.dynamics.state_dim,
            got: n,
        });
    }
    if inputs.total_dims() != spec.dynamics.input_dim {
        return Err(Error::DimensionMismatch {
            context: "input space vs dynamics",
            expected: spec.dynamics.input_dim,
            got: inputs.total_dims(),
        });
    }
    let mut ts = TransitionSystem::new(grid, inputs, spec.memory_budget)?;
    let grid = ts.state_grid().clone();
    let inputs = ts.inputs().clone();
    let joint = inputs.joint_len();

    let radius: Vec<f64> = (0..n).map(|d| grid.step(d) / 2.0).collect();
    let mut input_points = vec![0.0; joint * spec.dynamics.input_dim];
    for u in 0..joint {
        inputs.joint_point_into(
            u,
            &mut input_points[u * spec.dynamics.input_dim..(u + 1) * spec.dynamics.input_dim],
        );
    }

    // For the exact affine integrator the displacement depends only on the
    // input, so it is computed once per input point.
    let affine_delta: Option<Vec<f64>> = match spec.dynamics.integrator {
        Integrator::ExactAffine => {
            if !spec.dynamics.declared_affine {
                return Err(Error::NotAffine);
            }
            let probe = vec![0.0; n];
            let mut deltas = vec![0.0; joint * n];
            let mut dx = vec![0.0; n];
            for u in 0..joint {
                let up = &input_points[u * spec.dynamics.input_dim..(u + 1) * spec.dynamics.input_dim];
                spec.dynamics.eval(&probe, up, &mut dx);
                for d in 0..n {
                    let v = spec.dynamics.tau * dx[d];
                    if !v.is_finite() {
                        return Err(Error::NonFinite { dim: d });
                    }
                    deltas[u * n + d] = v;
                }
            }
            Some(deltas)
        }
        Integrator::FixedStep { .. } => None,
    };

    let mut ws = Workspace::new(n);
    let mut center = vec![0.0; n];
    let mut lo_idx = vec![0u32; n];
    let mut hi_idx = vec![0u32; n];
    for x in 0..grid.len() {
        grid.point_into(x, &mut center);
        for u in 0..joint {
            let (box_lo, box_hi): (&[f64], &[f64]) = if let Some(deltas) = &affine_delta {
                for d in 0..n {
                    let c = center[d] + deltas[u * n + d];
                    let r = radius[d] + spec.dynamics.inflation[d];
                    ws.stage[d] = c - r;
                    ws.rstage[d] = c + r;
                }
                (&ws.stage, &ws.rstage)
            } else {
                ws.center.copy_from_slice(&center);
                ws.radius.copy_from_slice(&radius);
                let up =
                    &input_points[u * spec.dynamics.input_dim..(u + 1) * spec.dynamics.input_dim];
                propagate(&spec.dynamics, up, &mut ws)?;
                for d in 0..n {
                    let r = ws.radius[d] + spec.dynamics.inflation[d];
                    ws.stage[d] = ws.center[d] - r;
                    ws.rstage[d] = ws.center[d] + r;
                }
                (&ws.stage, &ws.rstage)
            };
            let mut in_bounds = true;
            for d in 0..n {
                if !grid.interval_within_cover(d, box_lo[d], box_hi[d]) {
                    in_bounds = false;
                    break;
                }
                match grid.cover_dim(d, box_lo[d], box_hi[d]) {
                    Some((lo, hi)) => {
                        lo_idx[d] = lo as u32;
                        hi_idx[d] = hi as u32;
                    }
                    None => {
                        in_bounds = false;
                        break;
                    }
                }
            }
            if in_bounds {
                ts.set_entry(x, u, &lo_idx, &hi_idx)?;
            }
        }
    }
    Ok(ts)
}
