//! Memoryless permissive controllers.
//!
//! A controller maps each state to a set of admissible joint inputs, stored
//! as one word-aligned bit row per state. States with an empty row form the
//! blocking set; the rest form the controller domain.

use crate::sets::{BitSet, InputSet, StateSet};
use crate::system::TransitionSystem;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Controller {
    num_states: usize,
    joint_len: usize,
    words_per_state: usize,
    words: Vec<u64>,
}

impl Controller {
    /// Controller admitting nothing anywhere.
    pub fn empty(num_states: usize, joint_len: usize) -> Self {
        let words_per_state = joint_len.div_ceil(64);
        Self {
            num_states,
            joint_len,
            words_per_state,
            words: vec![0; num_states * words_per_state],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn joint_len(&self) -> usize {
        self.joint_len
    }

    #[inline]
    pub fn contains(&self, state: usize, input: usize) -> bool {
        self.words[state * self.words_per_state + input / 64] & (1u64 << (input % 64)) != 0
    }

    #[inline]
    pub fn insert(&mut self, state: usize, input: usize) {
        debug_assert!(state < self.num_states && input < self.joint_len);
        self.words[state * self.words_per_state + input / 64] |= 1u64 << (input % 64);
    }

    /// Bit row for a state.
    #[inline]
    pub(crate) fn row(&self, state: usize) -> &[u64] {
        &self.words[state * self.words_per_state..(state + 1) * self.words_per_state]
    }

    pub(crate) fn row_mut(&mut self, state: usize) -> &mut [u64] {
        &mut self.words[state * self.words_per_state..(state + 1) * self.words_per_state]
    }

    pub fn is_empty_at(&self, state: usize) -> bool {
        self.row(state).iter().all(|&w| w == 0)
    }

    pub fn count_at(&self, state: usize) -> usize {
        self.row(state).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Admissible inputs at a state as an owned set.
    pub fn allowed(&self, state: usize) -> InputSet {
        BitSet::from_words(self.joint_len, self.row(state).to_vec())
    }

    pub fn set_allowed(&mut self, state: usize, inputs: &InputSet) {
        assert_eq!(inputs.len(), self.joint_len);
        self.row_mut(state).copy_from_slice(inputs.words());
    }

    /// Iterate admissible inputs at a state in ascending order.
    pub fn iter_allowed(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        let row = self.row(state);
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

    /// Domain `π_X(C) = {x : C(x) ≠ ∅}`.
    pub fn domain(&self) -> StateSet {
        StateSet::from_fn(self.num_states, |x| !self.is_empty_at(x))
    }

    /// Blocking set `B = {x : C(x) = ∅}`, the domain's complement.
    pub fn blocking_set(&self) -> StateSet {
        self.domain().complement()
    }

    /// Check `C(x) ⊆ U(x)` against a system (admissible inputs never
    /// blocking in the dynamics).
    pub fn validate_against(&self, ts: &TransitionSystem) -> Result<()> {
        if self.num_states != ts.num_states() || self.joint_len != ts.num_joint_inputs() {
            return Err(Error::DimensionMismatch {
                context: "controller vs system",
                expected: ts.num_states(),
                got: self.num_states,
            });
        }
        for x in 0..self.num_states {
            for (cw, uw) in self.row(x).iter().zip(ts.present_row(x)) {
                if cw & !uw != 0 {
                    return Err(Error::Blocking { state: x, step: 0 });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid;
    use crate::space::enumerated_space;
    use crate::system::TransitionSystem;

    #[test]
    fn domain_and_blocking_set_are_complements() {
        let mut c = Controller::empty(5, 3);
        c.insert(0, 1);
        c.insert(3, 0);
        c.insert(3, 2);
        assert_eq!(c.domain().indices(), vec![0, 3]);
        assert_eq!(c.blocking_set().indices(), vec![1, 2, 4]);
        assert_eq!(c.count_at(3), 2);
        assert_eq!(c.allowed(3).indices(), vec![0, 2]);
    }

    #[test]
    fn validation_detects_blocking_inputs() {
        let grid = UniformGrid::enumerated(2).unwrap();
        let inputs = enumerated_space(&[2]).unwrap();
        let mut ts = TransitionSystem::new(grid, inputs, None).unwrap();
        ts.set_entry(0, 0, &[1], &[1]).unwrap();
        let mut c = Controller::empty(2, 2);
        c.insert(0, 0);
        assert!(c.validate_against(&ts).is_ok());
        c.insert(0, 1);
        assert!(c.validate_against(&ts).is_err());
    }
}
