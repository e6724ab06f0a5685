//! Centralized safety analysis: predecessor operators, the invariance fixed
//! point, and maximally permissive controller extraction.

use crate::controller::Controller;
use crate::sets::StateSet;
use crate::system::TransitionSystem;
use crate::{Error, Result};

fn check_dims(ts: &TransitionSystem, ctrl: &Controller, sets: &[&StateSet]) -> Result<()> {
    if ctrl.num_states() != ts.num_states() || ctrl.joint_len() != ts.num_joint_inputs() {
        return Err(Error::DimensionMismatch {
            context: "controller vs system",
            expected: ts.num_states(),
            got: ctrl.num_states(),
        });
    }
    for s in sets {
        if s.len() != ts.num_states() {
            return Err(Error::DimensionMismatch {
                context: "state set vs system",
                expected: ts.num_states(),
                got: s.len(),
            });
        }
    }
    Ok(())
}

/// Whether every input the controller admits at `x` is nonblocking with all
/// successors inside `z`, and at least one input is admitted.
#[inline]
pub(crate) fn state_in_pre(
    ts: &TransitionSystem,
    ctrl: &Controller,
    z: &StateSet,
    x: usize,
) -> bool {
    let mut any = false;
    for u in ctrl.iter_allowed(x) {
        if !ts.entry_within(x, u, z) {
            return false;
        }
        any = true;
    }
    any
}

/// Controllable predecessor under a given controller:
/// `{x ∈ π_X(C) : ∀u ∈ C(x), ∅ ≠ f(x,u) ⊆ Z}`.
///
/// States where some admitted input blocks are excluded.
pub fn pre(ts: &TransitionSystem, ctrl: &Controller, z: &StateSet) -> Result<StateSet> {
    check_dims(ts, ctrl, &[z])?;
    Ok(StateSet::from_fn(ts.num_states(), |x| {
        state_in_pre(ts, ctrl, z, x)
    }))
}

/// Safe controllable predecessor `Z ∩ PRE(Z) ∩ K`.
pub fn spre(
    ts: &TransitionSystem,
    ctrl: &Controller,
    z: &StateSet,
    safe: &StateSet,
) -> Result<StateSet> {
    check_dims(ts, ctrl, &[z, safe])?;
    // Only states in Z ∩ K can survive, so the predicate runs on those.
    let mut out = z.intersection(safe);
    let candidates: Vec<usize> = out.iter().collect();
    for x in candidates {
        if !state_in_pre(ts, ctrl, z, x) {
            out.remove(x);
        }
    }
    Ok(out)
}

/// Greatest fixed point of `SPRE_K` from the full state space: the set of
/// states the controller keeps inside `safe` forever. Also returns the
/// number of operator applications until the fixed point was confirmed.
pub fn max_invariant(
    ts: &TransitionSystem,
    ctrl: &Controller,
    safe: &StateSet,
) -> Result<(StateSet, usize)> {
    check_dims(ts, ctrl, &[safe])?;
    let mut z = StateSet::full(ts.num_states());
    let mut iterations = 0usize;
    loop {
        let next = spre(ts, ctrl, &z, safe)?;
        iterations += 1;
        if next == z {
            return Ok((z, iterations));
        }
        z = next;
    }
}

/// Maximally permissive safety controller for `safe`: domain is the
/// greatest fixed point `W*` of `Z ↦ K ∩ {x : ∃u, ∅ ≠ f(x,u) ⊆ Z}` and
/// `C(x) = {u : ∅ ≠ f(x,u) ⊆ W*}` on it. An empty domain is not an error.
pub fn synthesize_safety_controller(
    ts: &TransitionSystem,
    safe: &StateSet,
) -> Result<Controller> {
    if safe.len() != ts.num_states() {
        return Err(Error::DimensionMismatch {
            context: "state set vs system",
            expected: ts.num_states(),
            got: safe.len(),
        });
    }
    let joint = ts.num_joint_inputs();
    let mut z = safe.clone();
    loop {
        let mut next = z.clone();
        for x in z.iter() {
            let keeps = (0..joint).any(|u| ts.entry_within(x, u, &z));
            if !keeps {
                next.remove(x);
            }
        }
        if next == z {
            break;
        }
        z = next;
    }
    let mut ctrl = Controller::empty(ts.num_states(), joint);
    for x in z.iter() {
        for u in 0..joint {
            if ts.entry_within(x, u, &z) {
                ctrl.insert(x, u);
            }
        }
    }
    Ok(ctrl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::head_on_fixture;
    use crate::sets::StateSet;

    // Head-on fixture layout: states x0=0, xS=1, xC=2; joint inputs over
    // two binary components (change=0, stay=1), component 0 least
    // significant: (C,C)=0, (S,C)=1, (C,S)=2, (S,S)=3.
    const CC: usize = 0;
    const SC: usize = 1;
    const CS: usize = 2;
    const SS: usize = 3;

    #[test]
    fn synthesized_head_on_controller_matches_enumeration() {
        let fx = head_on_fixture();
        let ctrl = synthesize_safety_controller(&fx.system, &fx.safe).unwrap();
        assert_eq!(ctrl.allowed(0).indices(), vec![SC, CS]);
        assert_eq!(ctrl.allowed(1).indices(), vec![CC, SC, CS, SS]);
        assert!(ctrl.is_empty_at(2));
        assert_eq!(ctrl.domain().indices(), vec![0, 1]);
        ctrl.validate_against(&fx.system).unwrap();
    }

    #[test]
    fn pre_on_head_on_fixture() {
        let fx = head_on_fixture();
        let ctrl = synthesize_safety_controller(&fx.system, &fx.safe).unwrap();
        let z = StateSet::from_indices(3, [0, 1]);
        assert_eq!(pre(&fx.system, &ctrl, &z).unwrap().indices(), vec![0, 1]);
    }

    #[test]
    fn pre_of_full_space_is_controller_domain() {
        let fx = head_on_fixture();
        let ctrl = synthesize_safety_controller(&fx.system, &fx.safe).unwrap();
        let all = StateSet::full(3);
        assert_eq!(pre(&fx.system, &ctrl, &all).unwrap(), ctrl.domain());
    }

    #[test]
    fn pre_of_empty_is_empty() {
        let fx = head_on_fixture();
        let ctrl = synthesize_safety_controller(&fx.system, &fx.safe).unwrap();
        let none = StateSet::empty(3);
        assert!(pre(&fx.system, &ctrl, &none).unwrap().is_empty());
    }

    #[test]
    fn pre_excludes_states_with_blocking_admitted_inputs() {
        let fx = head_on_fixture();
        let mut ts = fx.system.clone();
        // Make one admitted input at x0 blocking.
        ts.clear_entry(0, CS).unwrap();
        let mut ctrl = Controller::empty(3, 4);
        ctrl.insert(0, CS);
        ctrl.insert(0, SC);
        ctrl.insert(1, CC);
        let all = StateSet::full(3);
        assert_eq!(pre(&ts, &ctrl, &all).unwrap().indices(), vec![1]);
    }

    #[test]
    fn spre_is_the_three_way_intersection() {
        let fx = head_on_fixture();
        let ctrl = synthesize_safety_controller(&fx.system, &fx.safe).unwrap();
        let z = StateSet::from_indices(3, [0, 1]);
        let got = spre(&fx.system, &ctrl, &z, &fx.safe).unwrap();
        assert_eq!(got.indices(), vec![0, 1]);
        let full = StateSet::full(3);
        assert!(spre(&fx.system, &ctrl, &full, &StateSet::empty(3))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn max_invariant_on_head_on_fixture() {
        let fx = head_on_fixture();
        let ctrl = synthesize_safety_controller(&fx.system, &fx.safe).unwrap();
        let (w, iterations) = max_invariant(&fx.system, &ctrl, &fx.safe).unwrap();
        assert_eq!(w.indices(), vec![0, 1]);
        assert!(iterations <= 3, "took {iterations} iterations");
        // Idempotence at the fixed point.
        assert_eq!(spre(&fx.system, &ctrl, &w, &fx.safe).unwrap(), w);
    }

    #[test]
    fn total_system_with_full_controller_converges_immediately() {
        let fx = head_on_fixture();
        // Make every input everywhere admissible and every entry total.
        let mut ts = fx.system.clone();
        for x in 0..3 {
            for u in 0..4 {
                if !ts.has_entry(x, u) {
                    ts.set_entry(x, u, &[x as u32], &[x as u32]).unwrap();
                }
            }
        }
        let mut ctrl = Controller::empty(3, 4);
        for x in 0..3 {
            for u in 0..4 {
                ctrl.insert(x, u);
            }
        }
        let all = StateSet::full(3);
        let (w, iterations) = max_invariant(&ts, &ctrl, &all).unwrap();
        assert_eq!(w, all);
        assert_eq!(iterations, 1);
    }

    #[test]
    fn controller_domain_equals_its_invariant_set() {
        let fx = head_on_fixture();
        let ctrl = synthesize_safety_controller(&fx.system, &fx.safe).unwrap();
        let (w, _) = max_invariant(&fx.system, &ctrl, &fx.safe).unwrap();
        assert_eq!(w, ctrl.domain());
    }
}
