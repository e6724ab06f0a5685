//! Coordination-free analysis: independent controllers, the
//! coordination-free predecessor, the delay-robust chain, and its layer
//! decomposition.
//!
//! Membership in chain element `S_d` guarantees `d` uncoordinated steps
//! that stay inside the safe set and land in the controlled invariant set,
//! after which coordination restores the infinite-horizon guarantee. The
//! layer label of a state is exactly its uncoordinated budget and doubles
//! as the self-trigger countdown.

use crate::controller::Controller;
use crate::sets::{BitSet, StateSet};
use crate::space::{class_index_of, FactoredInputSpace, Partition};
use crate::synthesis::{spre, state_in_pre};
use crate::system::TransitionSystem;
use crate::{Error, Result};

/// Minimal independent controller: per state, the product of the per-class
/// projections of the admitted input set. Always a superset of the original
/// controller on the same domain.
pub fn ind_controller(
    space: &FactoredInputSpace,
    ctrl: &Controller,
    partition: &Partition,
) -> Result<Controller> {
    partition.check_against(space)?;
    if ctrl.joint_len() != space.joint_len() {
        return Err(Error::DimensionMismatch {
            context: "controller vs input space",
            expected: space.joint_len(),
            got: ctrl.joint_len(),
        });
    }
    let num_classes = partition.num_classes();
    let class_lens: Vec<usize> = (0..num_classes)
        .map(|l| {
            partition
                .members(l)
                .iter()
                .map(|&c| space.component(c).len())
                .product()
        })
        .collect();
    // Class-local index of every joint input, per class, computed once.
    let joint = space.joint_len();
    let class_idx: Vec<Vec<u32>> = (0..num_classes)
        .map(|l| {
            let members = partition.members(l);
            (0..joint)
                .map(|u| class_index_of(space, members, u) as u32)
                .collect()
        })
        .collect();

    let mut out = Controller::empty(ctrl.num_states(), joint);
    let mut class_sets: Vec<BitSet> = class_lens.iter().map(|&n| BitSet::empty(n)).collect();
    for x in 0..ctrl.num_states() {
        if ctrl.is_empty_at(x) {
            continue;
        }
        for s in &mut class_sets {
            *s = BitSet::empty(s.len());
        }
        for u in ctrl.iter_allowed(x) {
            for l in 0..num_classes {
                class_sets[l].insert(class_idx[l][u] as usize);
            }
        }
        'joint: for u in 0..joint {
            for l in 0..num_classes {
                if !class_sets[l].contains(class_idx[l][u] as usize) {
                    continue 'joint;
                }
            }
            out.insert(x, u);
        }
    }
    Ok(out)
}

/// Coordination-free controllable predecessor: states where the independent
/// controller admits something and every admitted input is nonblocking with
/// all successors inside `z`.
pub fn cpre_ind(
    ts: &TransitionSystem,
    indctrl: &Controller,
    z: &StateSet,
) -> Result<StateSet> {
    if indctrl.num_states() != ts.num_states() || indctrl.joint_len() != ts.num_joint_inputs() {
        return Err(Error::DimensionMismatch {
            context: "independent controller vs system",
            expected: ts.num_states(),
            got: indctrl.num_states(),
        });
    }
    if z.len() != ts.num_states() {
        return Err(Error::DimensionMismatch {
            context: "state set vs system",
            expected: ts.num_states(),
            got: z.len(),
        });
    }
    Ok(StateSet::from_fn(ts.num_states(), |x| {
        state_in_pre(ts, indctrl, z, x)
    }))
}

/// Safe coordination-free predecessor `Z ∩ CPre(Z) ∩ K`.
pub fn spre_ind(
    ts: &TransitionSystem,
    indctrl: &Controller,
    z: &StateSet,
    safe: &StateSet,
) -> Result<StateSet> {
    if safe.len() != ts.num_states() || z.len() != ts.num_states() {
        return Err(Error::DimensionMismatch {
            context: "state set vs system",
            expected: ts.num_states(),
            got: safe.len().min(z.len()),
        });
    }
    let mut out = z.intersection(safe);
    let candidates: Vec<usize> = out.iter().collect();
    for x in candidates {
        if !state_in_pre(ts, indctrl, z, x) {
            out.remove(x);
        }
    }
    Ok(out)
}

/// Iterate the safe coordination-free predecessor from the invariance set
/// `w` down to its fixed point.
///
/// Returns the descending chain `S_0 = w ⊇ S_1 ⊇ ... ⊇ S_F` together with
/// the minimal fixed-point index `F` (so `S_{F+1} = S_F` and the chain is
/// strictly decreasing before that). The independent controller is built
/// once from `ctrl` and reused for every iterate.
///
/// `w` must be invariant under `ctrl` within `safe`; this is checked via
/// `spre(w) = w`.
pub fn delay_robust_chain(
    ts: &TransitionSystem,
    ctrl: &Controller,
    partition: &Partition,
    safe: &StateSet,
    w: &StateSet,
) -> Result<(Vec<StateSet>, usize)> {
    if spre(ts, ctrl, w, safe)? != *w {
        return Err(Error::NotInvariant);
    }
    let ind = ind_controller(ts.inputs(), ctrl, partition)?;
    let mut chain = vec![w.clone()];
    loop {
        let last = chain.last().unwrap();
        let next = spre_ind(ts, &ind, last, safe)?;
        if next == *last {
            let f = chain.len() - 1;
            return Ok((chain, f));
        }
        chain.push(next);
    }
}

/// Disjoint decomposition of the invariance set by uncoordinated budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMap {
    labels: Vec<u32>,
    fixed_point_index: usize,
    chain: Vec<StateSet>,
}

/// Label for states outside the invariance set.
pub const OUTSIDE: u32 = u32::MAX;

/// Build the layer decomposition `T(k) = S_k \ S_{k+1}` (with `T(F) = S_F`)
/// from a chain produced by [`delay_robust_chain`].
pub fn layer_map(chain: &[StateSet], fixed_point_index: usize) -> Result<LayerMap> {
    if chain.is_empty() || fixed_point_index != chain.len() - 1 {
        return Err(Error::NotAFixedPoint {
            index: fixed_point_index,
        });
    }
    for d in 1..chain.len() {
        if !chain[d].is_subset_of(&chain[d - 1]) {
            return Err(Error::NotDescending { index: d });
        }
        if chain[d] == chain[d - 1] {
            return Err(Error::NotAFixedPoint { index: d });
        }
    }
    let num_states = chain[0].len();
    let mut labels = vec![OUTSIDE; num_states];
    for (k, s) in chain.iter().enumerate() {
        for x in s.iter() {
            labels[x] = k as u32;
        }
    }
    Ok(LayerMap {
        labels,
        fixed_point_index,
        chain: chain.to_vec(),
    })
}

impl LayerMap {
    /// The fixed-point index `F`: the largest uncoordinated budget.
    pub fn fixed_point_index(&self) -> usize {
        self.fixed_point_index
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn chain(&self) -> &[StateSet] {
        &self.chain
    }

    /// Chain element `S_d`, the states safe for `d` uncoordinated steps.
    pub fn chain_set(&self, d: usize) -> &StateSet {
        &self.chain[d]
    }

    /// Layer `T(k)`: states whose budget is exactly `k`.
    pub fn layer(&self, k: usize) -> StateSet {
        StateSet::from_fn(self.labels.len(), |x| self.labels[x] == k as u32)
    }

    /// Self-trigger countdown: the unique layer containing `x`, or `None`
    /// outside the invariance set. Zero means coordination is required at
    /// this step.
    pub fn countdown(&self, x: usize) -> Option<usize> {
        match self.labels[x] {
            OUTSIDE => None,
            k => Some(k as usize),
        }
    }

    /// Reassemble the layer map from per-state labels (artifact loading).
    pub fn from_labels(labels: Vec<u32>, fixed_point_index: usize) -> Result<Self> {
        let num_states = labels.len();
        for (x, &l) in labels.iter().enumerate() {
            if l != OUTSIDE && l as usize > fixed_point_index {
                return Err(Error::Artifact(format!(
                    "state {x} has layer {l} beyond the fixed point {fixed_point_index}"
                )));
            }
        }
        let chain: Vec<StateSet> = (0..=fixed_point_index)
            .map(|d| {
                StateSet::from_fn(num_states, |x| {
                    labels[x] != OUTSIDE && labels[x] as usize >= d
                })
            })
            .collect();
        Ok(Self {
            labels,
            fixed_point_index,
            chain,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::head_on_fixture;
    use crate::space::{enumerated_space, Partition};
    use crate::synthesis::{max_invariant, pre, synthesize_safety_controller};

    const CC: usize = 0;
    const SC: usize = 1;
    const CS: usize = 2;
    const SS: usize = 3;

    fn head_on_pipeline() -> (
        crate::scenario::RealizedScenario,
        Controller,
        StateSet,
    ) {
        let fx = head_on_fixture();
        let ctrl = synthesize_safety_controller(&fx.system, &fx.safe).unwrap();
        let (w, _) = max_invariant(&fx.system, &ctrl, &fx.safe).unwrap();
        (fx, ctrl, w)
    }

    #[test]
    fn independent_controller_fills_the_product() {
        let (fx, ctrl, _) = head_on_pipeline();
        let ind = ind_controller(fx.system.inputs(), &ctrl, &fx.partition).unwrap();
        // C(x0) = {(S,C),(C,S)} projects to full components, so the
        // independent controller admits all four joint inputs.
        assert_eq!(ind.allowed(0).indices(), vec![CC, SC, CS, SS]);
        assert_eq!(ind.allowed(1).indices(), vec![CC, SC, CS, SS]);
        assert!(ind.is_empty_at(2));
        assert_eq!(ind.domain(), ctrl.domain());
        // Containment C(x) ⊆ IND_C(x).
        for x in 0..3 {
            assert!(ctrl.allowed(x).is_subset_of(&ind.allowed(x)));
        }
    }

    #[test]
    fn singleton_admitted_sets_are_fixed_points_of_independence() {
        let space = enumerated_space(&[2, 2]).unwrap();
        let mut ctrl = Controller::empty(2, 4);
        ctrl.insert(0, 3);
        let ind = ind_controller(&space, &ctrl, &Partition::singletons(2)).unwrap();
        assert_eq!(ind.allowed(0).indices(), vec![3]);
        assert!(ind.is_empty_at(1));
    }

    #[test]
    fn one_class_partition_reproduces_the_controller() {
        let (fx, ctrl, _) = head_on_pipeline();
        let ind = ind_controller(
            fx.system.inputs(),
            &ctrl,
            &Partition::single_class(2),
        )
        .unwrap();
        for x in 0..3 {
            assert_eq!(ind.allowed(x), ctrl.allowed(x));
        }
    }

    #[test]
    fn cpre_ind_drops_the_negotiation_state() {
        let (fx, ctrl, w) = head_on_pipeline();
        let ind = ind_controller(fx.system.inputs(), &ctrl, &fx.partition).unwrap();
        let got = cpre_ind(&fx.system, &ind, &w).unwrap();
        // x0 drops out: (C,C) and (S,S) reach the collision state.
        assert_eq!(got.indices(), vec![1]);
        assert!(cpre_ind(&fx.system, &ind, &StateSet::empty(3))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn cpre_ind_with_one_class_equals_pre() {
        let (fx, ctrl, _) = head_on_pipeline();
        let ind = ind_controller(
            fx.system.inputs(),
            &ctrl,
            &Partition::single_class(2),
        )
        .unwrap();
        for bits in 0u32..8 {
            let z = StateSet::from_fn(3, |i| bits & (1 << i) != 0);
            assert_eq!(
                cpre_ind(&fx.system, &ind, &z).unwrap(),
                pre(&fx.system, &ctrl, &z).unwrap()
            );
        }
    }

    #[test]
    fn spre_ind_on_head_on_fixture() {
        let (fx, ctrl, w) = head_on_pipeline();
        let ind = ind_controller(fx.system.inputs(), &ctrl, &fx.partition).unwrap();
        let got = spre_ind(&fx.system, &ind, &w, &fx.safe).unwrap();
        assert_eq!(got.indices(), vec![1]);
    }

    #[test]
    fn chain_and_layers_on_head_on_fixture() {
        let (fx, ctrl, w) = head_on_pipeline();
        let (chain, f) =
            delay_robust_chain(&fx.system, &ctrl, &fx.partition, &fx.safe, &w).unwrap();
        assert_eq!(f, 1);
        assert_eq!(chain.len(), 2);
        assert_eq!(chain[0].indices(), vec![0, 1]);
        assert_eq!(chain[1].indices(), vec![1]);

        let layers = layer_map(&chain, f).unwrap();
        assert_eq!(layers.layer(0).indices(), vec![0]);
        assert_eq!(layers.layer(1).indices(), vec![1]);
        assert_eq!(layers.countdown(0), Some(0));
        assert_eq!(layers.countdown(1), Some(1));
        assert_eq!(layers.countdown(2), None);
    }

    #[test]
    fn chain_with_one_class_stays_at_the_invariance_set() {
        let (fx, ctrl, w) = head_on_pipeline();
        let (chain, f) = delay_robust_chain(
            &fx.system,
            &ctrl,
            &Partition::single_class(2),
            &fx.safe,
            &w,
        )
        .unwrap();
        assert_eq!(f, 0);
        assert_eq!(chain, vec![w]);
    }

    #[test]
    fn chain_rejects_non_invariant_input() {
        let (fx, ctrl, _) = head_on_pipeline();
        let not_invariant = StateSet::from_indices(3, [0, 1, 2]);
        assert!(matches!(
            delay_robust_chain(&fx.system, &ctrl, &fx.partition, &fx.safe, &not_invariant),
            Err(Error::NotInvariant)
        ));
    }

    #[test]
    fn layer_map_rejects_bad_chains() {
        let a = StateSet::from_indices(3, [0, 1]);
        let b = StateSet::from_indices(3, [1, 2]);
        assert!(matches!(
            layer_map(&[a.clone(), b], 1),
            Err(Error::NotDescending { index: 1 })
        ));
        let c = StateSet::from_indices(3, [0, 1]);
        assert!(layer_map(&[a.clone(), c], 1).is_err());
        assert!(layer_map(&[a], 1).is_err());
    }

    #[test]
    fn zero_budget_chain_has_a_single_layer() {
        let w = StateSet::from_indices(4, [1, 2]);
        let layers = layer_map(&[w.clone()], 0).unwrap();
        assert_eq!(layers.layer(0), w);
        assert_eq!(layers.countdown(1), Some(0));
        assert_eq!(layers.countdown(0), None);
    }

    #[test]
    fn labels_round_trip_through_from_labels() {
        let (fx, ctrl, w) = head_on_pipeline();
        let (chain, f) =
            delay_robust_chain(&fx.system, &ctrl, &fx.partition, &fx.safe, &w).unwrap();
        let layers = layer_map(&chain, f).unwrap();
        let rebuilt = LayerMap::from_labels(layers.labels().to_vec(), f).unwrap();
        assert_eq!(rebuilt, layers);
    }
}
