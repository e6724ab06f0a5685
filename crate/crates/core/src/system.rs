//! Finite transition systems with box-compressed successor sets.
//!
//! The transition table maps `(state, joint input)` to an optional
//! [`SuccessorBox`]: a per-dimension closed interval of grid indices whose
//! Cartesian product is the successor cell set. An absent entry means the
//! pair is blocking (`f(x, u) = ∅`).

use crate::grid::UniformGrid;
use crate::sets::{BitSet, InputSet, StateSet};
use crate::space::FactoredInputSpace;
use crate::{Error, Result};

/// Axis-aligned box of state-grid indices, `lo[d] <= hi[d]` per dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuccessorBox {
    lo: Vec<u32>,
    hi: Vec<u32>,
}

impl SuccessorBox {
    pub fn new(lo: Vec<u32>, hi: Vec<u32>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                context: "successor box lo vs hi",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (d, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if l > h {
                return Err(Error::InvalidBox { dim: d, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> &[u32] {
        &self.lo
    }

    pub fn hi(&self) -> &[u32] {
        &self.hi
    }

    /// Number of cells in the box.
    pub fn cell_count(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| (h - l + 1) as usize)
            .product()
    }
}

/// Packed per-entry interval bounds; u8 when every state dimension has at
/// most 256 points, u16 otherwise.
#[derive(Debug, Clone, PartialEq)]
enum BoxWords {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

impl BoxWords {
    #[inline]
    fn get(&self, i: usize) -> u32 {
        match self {
            BoxWords::U8(v) => v[i] as u32,
            BoxWords::U16(v) => v[i] as u32,
        }
    }

    #[inline]
    fn set(&mut self, i: usize, value: u32) {
        match self {
            BoxWords::U8(v) => v[i] = value as u8,
            BoxWords::U16(v) => v[i] = value as u16,
        }
    }

    fn bytes_per_value(&self) -> usize {
        match self {
            BoxWords::U8(_) => 1,
            BoxWords::U16(_) => 2,
        }
    }
}

/// Finite nondeterministic dynamics over a state grid and a factored input
/// space.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSystem {
    state_grid: UniformGrid,
    inputs: FactoredInputSpace,
    /// Presence bits, one word-aligned row per state.
    present: Vec<u64>,
    words_per_state: usize,
    bounds: BoxWords,
    values_per_entry: usize,
}

impl TransitionSystem {
    /// Allocate an all-blocking system; entries are added with
    /// [`set_entry`](Self::set_entry). `memory_budget` bounds the table
    /// allocation in bytes.
    pub fn new(
        state_grid: UniformGrid,
        inputs: FactoredInputSpace,
        memory_budget: Option<u64>,
    ) -> Result<Self> {
        let states = state_grid.len();
        let joint = inputs.joint_len();
        let ndims = state_grid.num_dims();
        if ndims > 16 {
            return Err(Error::DimensionMismatch {
                context: "state grid dimensions (at most 16 supported)",
                expected: 16,
                got: ndims,
            });
        }
        let max_count = (0..ndims).map(|d| state_grid.dim_count(d)).max().unwrap_or(1);
        let value_bytes: usize = if max_count <= u8::MAX as usize + 1 {
            1
        } else if max_count <= u16::MAX as usize + 1 {
            2
        } else {
            return Err(Error::GridTooLarge {
                count: max_count,
                max: u16::MAX as usize + 1,
            });
        };
        let values_per_entry = 2 * ndims;
        let words_per_state = joint.div_ceil(64);
        let table_values = states
            .checked_mul(joint)
            .and_then(|n| n.checked_mul(values_per_entry))
            .ok_or(Error::GridTooLarge {
                count: states,
                max: usize::MAX,
            })?;
        let estimated_bytes =
            table_values as u64 * value_bytes as u64 + (states * words_per_state) as u64 * 8;
        if let Some(budget) = memory_budget {
            if estimated_bytes > budget {
                return Err(Error::MemoryBudget {
                    states,
                    inputs: joint,
                    estimated_bytes,
                    budget_bytes: budget,
                });
            }
        }
        let bounds = if value_bytes == 1 {
            BoxWords::U8(vec![0; table_values])
        } else {
            BoxWords::U16(vec![0; table_values])
        };
        Ok(Self {
            state_grid,
            inputs,
            present: vec![0; states * words_per_state],
            words_per_state,
            bounds,
            values_per_entry,
        })
    }

    pub fn state_grid(&self) -> &UniformGrid {
        &self.state_grid
    }

    pub fn inputs(&self) -> &FactoredInputSpace {
        &self.inputs
    }

    pub fn num_states(&self) -> usize {
        self.state_grid.len()
    }

    pub fn num_joint_inputs(&self) -> usize {
        self.inputs.joint_len()
    }

    /// Approximate heap footprint of the table, in bytes.
    pub fn table_bytes(&self) -> u64 {
        let values = self.num_states() * self.num_joint_inputs() * self.values_per_entry;
        values as u64 * self.bounds.bytes_per_value() as u64 + self.present.len() as u64 * 8
    }

    #[inline]
    fn entry_base(&self, state: usize, input: usize) -> usize {
        (state * self.num_joint_inputs() + input) * self.values_per_entry
    }

    /// Store `f(state, input)` as the box `[lo, hi]` (grid indices, per
    /// dimension). Overwrites any previous entry.
    pub fn set_entry(&mut self, state: usize, input: usize, lo: &[u32], hi: &[u32]) -> Result<()> {
        let ndims = self.state_grid.num_dims();
        if lo.len() != ndims || hi.len() != ndims {
            return Err(Error::DimensionMismatch {
                context: "successor box vs state grid",
                expected: ndims,
                got: lo.len().max(hi.len()),
            });
        }
        self.check_indices(state, input)?;
        for d in 0..ndims {
            if lo[d] > hi[d] || hi[d] as usize >= self.state_grid.dim_count(d) {
                return Err(Error::InvalidBox {
                    dim: d,
                    lo: lo[d],
                    hi: hi[d],
                });
            }
        }
        let base = self.entry_base(state, input);
        for d in 0..ndims {
            self.bounds.set(base + 2 * d, lo[d]);
            self.bounds.set(base + 2 * d + 1, hi[d]);
        }
        self.present[state * self.words_per_state + input / 64] |= 1u64 << (input % 64);
        Ok(())
    }

    /// Mark `(state, input)` blocking.
    pub fn clear_entry(&mut self, state: usize, input: usize) -> Result<()> {
        self.check_indices(state, input)?;
        self.present[state * self.words_per_state + input / 64] &= !(1u64 << (input % 64));
        Ok(())
    }

    fn check_indices(&self, state: usize, input: usize) -> Result<()> {
        if state >= self.num_states() {
            return Err(Error::IndexOutOfRange {
                context: "state",
                index: state,
                size: self.num_states(),
            });
        }
        if input >= self.num_joint_inputs() {
            return Err(Error::IndexOutOfRange {
                context: "joint input",
                index: input,
                size: self.num_joint_inputs(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn has_entry(&self, state: usize, input: usize) -> bool {
        self.present[state * self.words_per_state + input / 64] & (1u64 << (input % 64)) != 0
    }

    /// The stored box, or `None` when `(state, input)` is blocking.
    pub fn successor_box(&self, state: usize, input: usize) -> Option<SuccessorBox> {
        if !self.has_entry(state, input) {
            return None;
        }
        let ndims = self.state_grid.num_dims();
        let base = self.entry_base(state, input);
        let lo = (0..ndims).map(|d| self.bounds.get(base + 2 * d)).collect();
        let hi = (0..ndims).map(|d| self.bounds.get(base + 2 * d + 1)).collect();
        Some(SuccessorBox { lo, hi })
    }

    /// Nonblocking inputs `U(x)` at a state.
    pub fn nonblocking_inputs(&self, state: usize) -> InputSet {
        let row = &self.present
            [state * self.words_per_state..(state + 1) * self.words_per_state];
        BitSet::from_words(self.num_joint_inputs(), row.to_vec())
    }

    pub(crate) fn present_row(&self, state: usize) -> &[u64] {
        &self.present[state * self.words_per_state..(state + 1) * self.words_per_state]
    }

    /// Number of successor cells of an entry (0 when blocking).
    pub fn cell_count(&self, state: usize, input: usize) -> usize {
        if !self.has_entry(state, input) {
            return 0;
        }
        let base = self.entry_base(state, input);
        (0..self.state_grid.num_dims())
            .map(|d| (self.bounds.get(base + 2 * d + 1) - self.bounds.get(base + 2 * d) + 1) as usize)
            .product()
    }

    /// `k`-th successor cell in ascending flat order, if the entry exists
    /// and has that many cells.
    pub fn nth_cell(&self, state: usize, input: usize, k: usize) -> Option<usize> {
        if !self.has_entry(state, input) {
            return None;
        }
        let base = self.entry_base(state, input);
        let strides = self.state_grid.strides();
        let mut rest = k;
        let mut flat = 0usize;
        for d in 0..self.state_grid.num_dims() {
            let lo = self.bounds.get(base + 2 * d) as usize;
            let hi = self.bounds.get(base + 2 * d + 1) as usize;
            let width = hi - lo + 1;
            flat += (lo + rest % width) * strides[d];
            rest /= width;
        }
        if rest > 0 {
            None
        } else {
            Some(flat)
        }
    }

    /// Visit every successor cell of `(state, input)` as a flat state index.
    pub fn for_each_cell(&self, state: usize, input: usize, mut visit: impl FnMut(usize)) {
        let n = self.cell_count(state, input);
        for k in 0..n {
            visit(self.nth_cell(state, input, k).unwrap());
        }
    }

    /// Whether the entry exists and every successor cell lies in `set`:
    /// the atom `∅ ≠ f(x, u) ⊆ Z` of every predecessor operator.
    pub fn entry_within(&self, state: usize, input: usize, set: &StateSet) -> bool {
        if !self.has_entry(state, input) {
            return false;
        }
        let base = self.entry_base(state, input);
        let strides = self.state_grid.strides();
        let ndims = self.state_grid.num_dims();
        // Walk the box with per-dimension counters; dimension 0 innermost.
        let mut idx = [0usize; 16];
        let mut lo = [0usize; 16];
        let mut hi = [0usize; 16];
        debug_assert!(ndims <= 16);
        let mut flat = 0usize;
        for d in 0..ndims {
            lo[d] = self.bounds.get(base + 2 * d) as usize;
            hi[d] = self.bounds.get(base + 2 * d + 1) as usize;
            idx[d] = lo[d];
            flat += lo[d] * strides[d];
        }
        loop {
            if !set.contains(flat) {
                return false;
            }
            let mut d = 0;
            loop {
                if d == ndims {
                    return true;
                }
                if idx[d] < hi[d] {
                    idx[d] += 1;
                    flat += strides[d];
                    break;
                }
                flat -= (idx[d] - lo[d]) * strides[d];
                idx[d] = lo[d];
                d += 1;
            }
        }
    }

    /// Successor cells as a list of flat indices (allocates; for tests and
    /// oracles).
    pub fn successor_cells(&self, state: usize, input: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cell_count(state, input));
        self.for_each_cell(state, input, |c| out.push(c));
        out
    }

    // Raw table access for the artifact container.

    pub(crate) fn present_words(&self) -> &[u64] {
        &self.present
    }

    /// Bytes per stored interval bound: 1 or 2.
    pub(crate) fn bounds_width(&self) -> u8 {
        self.bounds.bytes_per_value() as u8
    }

    pub(crate) fn bounds_raw_u8(&self) -> Option<&[u8]> {
        match &self.bounds {
            BoxWords::U8(v) => Some(v),
            BoxWords::U16(_) => None,
        }
    }

    pub(crate) fn bounds_raw_u16(&self) -> Option<&[u16]> {
        match &self.bounds {
            BoxWords::U16(v) => Some(v),
            BoxWords::U8(_) => None,
        }
    }

    /// Rebuild a system from persisted raw parts, revalidating every
    /// present entry against the grid.
    pub(crate) fn from_raw(
        state_grid: UniformGrid,
        inputs: FactoredInputSpace,
        present: Vec<u64>,
        bounds: RawBounds,
    ) -> Result<Self> {
        let mut ts = Self::new(state_grid, inputs, None)?;
        if present.len() != ts.present.len() {
            return Err(Error::Artifact(format!(
                "presence bitmap has {} words, expected {}",
                present.len(),
                ts.present.len()
            )));
        }
        let expected_values =
            ts.num_states() * ts.num_joint_inputs() * ts.values_per_entry;
        let ok = match (&ts.bounds, &bounds) {
            (BoxWords::U8(_), RawBounds::U8(v)) => v.len() == expected_values,
            (BoxWords::U16(_), RawBounds::U16(v)) => v.len() == expected_values,
            _ => false,
        };
        if !ok {
            return Err(Error::Artifact(
                "table width or length does not match the grids".into(),
            ));
        }
        ts.present = present;
        ts.bounds = match bounds {
            RawBounds::U8(v) => BoxWords::U8(v),
            RawBounds::U16(v) => BoxWords::U16(v),
        };
        let ndims = ts.state_grid.num_dims();
        for x in 0..ts.num_states() {
            for u in 0..ts.num_joint_inputs() {
                if !ts.has_entry(x, u) {
                    continue;
                }
                let base = ts.entry_base(x, u);
                for d in 0..ndims {
                    let lo = ts.bounds.get(base + 2 * d);
                    let hi = ts.bounds.get(base + 2 * d + 1);
                    if lo > hi || hi as usize >= ts.state_grid.dim_count(d) {
                        return Err(Error::Artifact(format!(
                            "entry ({x}, {u}) stores an invalid box in dimension {d}"
                        )));
                    }
                }
            }
        }
        Ok(ts)
    }
}

/// Raw persisted table bounds.
pub(crate) enum RawBounds {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::enumerated_space;

    fn small_system() -> TransitionSystem {
        let grid = UniformGrid::new(&[(0.0, 3.0), (0.0, 2.0)], &[1.0, 1.0]).unwrap();
        let inputs = enumerated_space(&[2]).unwrap();
        TransitionSystem::new(grid, inputs, None).unwrap()
    }

    #[test]
    fn entries_round_trip() {
        let mut ts = small_system();
        ts.set_entry(0, 0, &[1, 0], &[2, 1]).unwrap();
        let b = ts.successor_box(0, 0).unwrap();
        assert_eq!(b.lo(), &[1, 0]);
        assert_eq!(b.hi(), &[2, 1]);
        assert_eq!(b.cell_count(), 4);
        assert!(ts.successor_box(0, 1).is_none());
        assert_eq!(ts.cell_count(0, 1), 0);
    }

    #[test]
    fn cells_enumerate_the_box() {
        let mut ts = small_system();
        ts.set_entry(5, 1, &[1, 1], &[2, 2]).unwrap();
        // Grid strides: dim0 stride 1 (4 points), dim1 stride 4 (3 points).
        assert_eq!(ts.successor_cells(5, 1), vec![5, 6, 9, 10]);
        assert_eq!(ts.nth_cell(5, 1, 3), Some(10));
        assert_eq!(ts.nth_cell(5, 1, 4), None);
    }

    #[test]
    fn entry_within_checks_every_cell() {
        let mut ts = small_system();
        ts.set_entry(0, 0, &[0, 0], &[1, 1]).unwrap();
        let all = StateSet::full(ts.num_states());
        assert!(ts.entry_within(0, 0, &all));
        let missing_one = StateSet::from_fn(ts.num_states(), |i| i != 4);
        assert!(!ts.entry_within(0, 0, &missing_one));
        // Blocking entries never satisfy the atom.
        assert!(!ts.entry_within(0, 1, &all));
    }

    #[test]
    fn nonblocking_inputs_tracks_entries() {
        let mut ts = small_system();
        assert!(ts.nonblocking_inputs(2).is_empty());
        ts.set_entry(2, 1, &[0, 0], &[0, 0]).unwrap();
        assert_eq!(ts.nonblocking_inputs(2).indices(), vec![1]);
        ts.clear_entry(2, 1).unwrap();
        assert!(ts.nonblocking_inputs(2).is_empty());
    }

    #[test]
    fn rejects_boxes_outside_grid() {
        let mut ts = small_system();
        assert!(ts.set_entry(0, 0, &[2, 0], &[1, 0]).is_err());
        assert!(ts.set_entry(0, 0, &[0, 0], &[4, 0]).is_err());
        assert!(ts.set_entry(0, 0, &[0, 0], &[0, 3]).is_err());
    }

    #[test]
    fn memory_budget_is_enforced() {
        let grid = UniformGrid::new(&[(0.0, 99.0)], &[1.0]).unwrap();
        let inputs = enumerated_space(&[100]).unwrap();
        match TransitionSystem::new(grid, inputs, Some(1000)) {
            Err(Error::MemoryBudget {
                states,
                inputs,
                estimated_bytes,
                ..
            }) => {
                assert_eq!(states, 100);
                assert_eq!(inputs, 100);
                assert!(estimated_bytes > 1000);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn wide_grids_use_u16_indices() {
        let grid = UniformGrid::new(&[(0.0, 300.0)], &[1.0]).unwrap();
        let inputs = enumerated_space(&[2]).unwrap();
        let mut ts = TransitionSystem::new(grid, inputs, None).unwrap();
        ts.set_entry(0, 0, &[299], &[300]).unwrap();
        assert_eq!(ts.successor_box(0, 0).unwrap().hi(), &[300]);
    }
}
