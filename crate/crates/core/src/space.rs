//! Factored input spaces and coordination partitions.
//!
//! A joint input space is a product of per-agent component grids; joint
//! indices use a mixed-radix codec with component 0 least significant. A
//! [`Partition`] groups components into equivalence classes of agents that
//! can coordinate within a time step. [`project_inputs`] and
//! [`product_expand`] are the projection/product pair every coordination-free
//! operator is built from.

use crate::grid::UniformGrid;
use crate::sets::{BitSet, InputSet};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Product of per-component input grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredInputSpace {
    components: Vec<UniformGrid>,
    strides: Vec<usize>,
    joint_len: usize,
}

impl FactoredInputSpace {
    pub fn new(components: Vec<UniformGrid>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidPartition(
                "input space needs at least one component".into(),
            ));
        }
        let mut strides = Vec::with_capacity(components.len());
        let mut joint_len = 1usize;
        for c in &components {
            strides.push(joint_len);
            joint_len = joint_len
                .checked_mul(c.len())
                .ok_or(Error::GridTooLarge {
                    count: usize::MAX,
                    max: usize::MAX,
                })?;
        }
        Ok(Self {
            components,
            strides,
            joint_len,
        })
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &UniformGrid {
        &self.components[i]
    }

    pub fn components(&self) -> &[UniformGrid] {
        &self.components
    }

    /// Number of joint inputs (product of component sizes).
    pub fn joint_len(&self) -> usize {
        self.joint_len
    }

    /// Total input dimension (sum of component dimensions).
    pub fn total_dims(&self) -> usize {
        self.components.iter().map(|c| c.num_dims()).sum()
    }

    /// Encode per-component indices into a joint index.
    pub fn encode(&self, component_indices: &[usize]) -> usize {
        debug_assert_eq!(component_indices.len(), self.components.len());
        component_indices
            .iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c * s)
            .sum()
    }

    /// Decode a joint index into per-component indices.
    pub fn decode(&self, joint: usize) -> Vec<usize> {
        let mut out = vec![0; self.components.len()];
        self.decode_into(joint, &mut out);
        out
    }

    pub fn decode_into(&self, joint: usize, out: &mut [usize]) {
        debug_assert!(joint < self.joint_len);
        let mut rest = joint;
        for (i, c) in self.components.iter().enumerate() {
            out[i] = rest % c.len();
            rest /= c.len();
        }
    }

    /// Component `i`'s index within a joint index.
    #[inline]
    pub fn component_index(&self, joint: usize, i: usize) -> usize {
        (joint / self.strides[i]) % self.components[i].len()
    }

    /// Real-valued joint input point (component points concatenated).
    pub fn joint_point(&self, joint: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dims());
        let mut rest = joint;
        for c in &self.components {
            let ci = rest % c.len();
            rest /= c.len();
            out.extend(c.point_of(ci));
        }
        out
    }

    pub fn joint_point_into(&self, joint: usize, out: &mut [f64]) {
        let mut rest = joint;
        let mut offset = 0;
        for c in &self.components {
            let ci = rest % c.len();
            rest /= c.len();
            c.point_into(ci, &mut out[offset..offset + c.num_dims()]);
            offset += c.num_dims();
        }
    }
}

/// Assignment of input components to coordination classes.
///
/// Components in the same class coordinate instantly; distinct classes only
/// see each other's projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    classes: Vec<Vec<usize>>,
    num_components: usize,
}

impl Partition {
    /// Build from explicit classes; members are sorted, and every component
    /// of `0..num_components` must appear exactly once.
    pub fn new(mut classes: Vec<Vec<usize>>, num_components: usize) -> Result<Self> {
        let mut seen = vec![false; num_components];
        for class in &mut classes {
            if class.is_empty() {
                return Err(Error::InvalidPartition("empty class".into()));
            }
            class.sort_unstable();
            for &c in class.iter() {
                if c >= num_components {
                    return Err(Error::InvalidPartition(format!(
                        "component {c} out of range (space has {num_components})"
                    )));
                }
                if seen[c] {
                    return Err(Error::InvalidPartition(format!(
                        "component {c} appears in more than one class"
                    )));
                }
                seen[c] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidPartition(format!(
                "component {missing} belongs to no class"
            )));
        }
        Ok(Self {
            classes,
            num_components,
        })
    }

    /// Fully decentralized: one class per component.
    pub fn singletons(num_components: usize) -> Self {
        Self {
            classes: (0..num_components).map(|c| vec![c]).collect(),
            num_components,
        }
    }

    /// Fully coordinated: every component in one class.
    pub fn single_class(num_components: usize) -> Self {
        Self {
            classes: vec![(0..num_components).collect()],
            num_components,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.classes[class]
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn check_against(&self, space: &FactoredInputSpace) -> Result<()> {
        if self.num_components != space.num_components() {
            return Err(Error::DimensionMismatch {
                context: "partition vs input space components",
                expected: space.num_components(),
                got: self.num_components,
            });
        }
        Ok(())
    }
}

/// Size of class `l`'s local space (product of its member component sizes).
pub fn class_space_len(space: &FactoredInputSpace, partition: &Partition, class: usize) -> Result<usize> {
    if class >= partition.num_classes() {
        return Err(Error::UnknownClass {
            class,
            classes: partition.num_classes(),
        });
    }
    Ok(partition
        .members(class)
        .iter()
        .map(|&c| space.component(c).len())
        .product())
}

/// Class-local index of a joint input: mixed-radix over the class members in
/// ascending component order, first member least significant.
#[inline]
pub fn class_index_of(
    space: &FactoredInputSpace,
    members: &[usize],
    joint: usize,
) -> usize {
    let mut idx = 0usize;
    let mut stride = 1usize;
    for &c in members {
        idx += space.component_index(joint, c) * stride;
        stride *= space.component(c).len();
    }
    idx
}

/// Project a set of joint inputs onto one equivalence class.
///
/// Returns the set of class-local tuples `{π_class(u) : u ∈ inputs}` as a
/// bit set over the class space.
pub fn project_inputs(
    space: &FactoredInputSpace,
    partition: &Partition,
    inputs: &InputSet,
    class: usize,
) -> Result<BitSet> {
    partition.check_against(space)?;
    let class_len = class_space_len(space, partition, class)?;
    if inputs.len() != space.joint_len() {
        return Err(Error::DimensionMismatch {
            context: "input set vs joint space",
            expected: space.joint_len(),
            got: inputs.len(),
        });
    }
    let members = partition.members(class);
    let mut out = BitSet::empty(class_len);
    for u in inputs.iter() {
        out.insert(class_index_of(space, members, u));
    }
    Ok(out)
}

/// Recombine per-class tuple sets into a joint input set (their Cartesian
/// product). Any empty class set yields the empty joint set, which signals
/// blocking rather than an error.
pub fn product_expand(
    space: &FactoredInputSpace,
    partition: &Partition,
    class_sets: &[BitSet],
) -> Result<InputSet> {
    partition.check_against(space)?;
    if class_sets.len() != partition.num_classes() {
        return Err(Error::DimensionMismatch {
            context: "class sets vs partition classes",
            expected: partition.num_classes(),
            got: class_sets.len(),
        });
    }
    for (l, s) in class_sets.iter().enumerate() {
        let expect = class_space_len(space, partition, l)?;
        if s.len() != expect {
            return Err(Error::DimensionMismatch {
                context: "class set vs class space",
                expected: expect,
                got: s.len(),
            });
        }
    }
    let mut out = InputSet::empty(space.joint_len());
    if class_sets.iter().any(|s| s.is_empty()) {
        return Ok(out);
    }
    'joint: for u in 0..space.joint_len() {
        for (l, s) in class_sets.iter().enumerate() {
            if !s.contains(class_index_of(space, partition.members(l), u)) {
                continue 'joint;
            }
        }
        out.insert(u);
    }
    Ok(out)
}

/// Uniform factored space of `counts[i]`-point components, each the
/// enumerated grid `{0..counts[i]-1}`. Used by tabulated systems and tests.
pub fn enumerated_space(counts: &[usize]) -> Result<FactoredInputSpace> {
    FactoredInputSpace::new(
        counts
            .iter()
            .map(|&n| UniformGrid::enumerated(n))
            .collect::<Result<Vec<_>>>()?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> FactoredInputSpace {
        enumerated_space(&[2, 2]).unwrap()
    }

    #[test]
    fn codec_component_zero_least_significant() {
        let s = two_by_two();
        assert_eq!(s.encode(&[0, 0]), 0);
        assert_eq!(s.encode(&[1, 0]), 1);
        assert_eq!(s.encode(&[0, 1]), 2);
        assert_eq!(s.encode(&[1, 1]), 3);
        for j in 0..4 {
            assert_eq!(s.encode(&s.decode(j)), j);
        }
    }

    #[test]
    fn projection_keeps_class_coordinates() {
        let s = two_by_two();
        let p = Partition::singletons(2);
        // {(0,1), (1,0)}: joint indices 2 and 1.
        let inputs = InputSet::from_indices(4, [2, 1]);
        let on_first = project_inputs(&s, &p, &inputs, 0).unwrap();
        let on_second = project_inputs(&s, &p, &inputs, 1).unwrap();
        assert_eq!(on_first.indices(), vec![0, 1]);
        assert_eq!(on_second.indices(), vec![0, 1]);
    }

    #[test]
    fn projection_of_empty_is_empty() {
        let s = two_by_two();
        let p = Partition::singletons(2);
        let empty = InputSet::empty(4);
        assert!(project_inputs(&s, &p, &empty, 0).unwrap().is_empty());
    }

    #[test]
    fn projection_of_product_is_factor() {
        let s = enumerated_space(&[3, 4]).unwrap();
        let p = Partition::singletons(2);
        let all = InputSet::full(12);
        assert_eq!(project_inputs(&s, &p, &all, 0).unwrap().count(), 3);
        assert_eq!(project_inputs(&s, &p, &all, 1).unwrap().count(), 4);
    }

    #[test]
    fn unknown_class_is_an_error() {
        let s = two_by_two();
        let p = Partition::singletons(2);
        let all = InputSet::full(4);
        assert!(matches!(
            project_inputs(&s, &p, &all, 2),
            Err(Error::UnknownClass { class: 2, .. })
        ));
    }

    #[test]
    fn expand_rebuilds_the_product() {
        let s = two_by_two();
        let p = Partition::singletons(2);
        let both = BitSet::from_indices(2, [0, 1]);
        let joint = product_expand(&s, &p, &[both.clone(), both]).unwrap();
        assert_eq!(joint.count(), 4);
    }

    #[test]
    fn expand_of_singletons_is_a_singleton() {
        let s = enumerated_space(&[3, 4]).unwrap();
        let p = Partition::singletons(2);
        let a = BitSet::from_indices(3, [2]);
        let b = BitSet::from_indices(4, [1]);
        let joint = product_expand(&s, &p, &[a, b]).unwrap();
        assert_eq!(joint.indices(), vec![s.encode(&[2, 1])]);
    }

    #[test]
    fn expand_with_empty_class_set_signals_blocking() {
        let s = two_by_two();
        let p = Partition::singletons(2);
        let joint =
            product_expand(&s, &p, &[BitSet::empty(2), BitSet::from_indices(2, [0])]).unwrap();
        assert!(joint.is_empty());
    }

    #[test]
    fn single_class_expand_is_identity() {
        let s = two_by_two();
        let p = Partition::single_class(2);
        let inputs = InputSet::from_indices(4, [2]);
        let projected = project_inputs(&s, &p, &inputs, 0).unwrap();
        let back = product_expand(&s, &p, &[projected]).unwrap();
        assert_eq!(back, inputs);
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![0], vec![1]], 2).is_ok());
        assert!(Partition::new(vec![vec![0, 1]], 2).is_ok());
        assert!(Partition::new(vec![vec![0], vec![0, 1]], 2).is_err());
        assert!(Partition::new(vec![vec![0]], 2).is_err());
        assert!(Partition::new(vec![vec![0], vec![]], 1).is_err());
        assert!(Partition::new(vec![vec![0], vec![2]], 2).is_err());
    }

    #[test]
    fn containment_in_expanded_projection_exhaustive() {
        // Every subset of a small joint space is contained in the product of
        // its class projections, with equality exactly for product sets.
        let s = enumerated_space(&[2, 3]).unwrap();
        let p = Partition::singletons(2);
        for mask in 0u32..(1 << 6) {
            let a = InputSet::from_fn(6, |i| mask & (1 << i) != 0);
            let proj: Vec<BitSet> = (0..2)
                .map(|l| project_inputs(&s, &p, &a, l).unwrap())
                .collect();
            let expanded = product_expand(&s, &p, &proj).unwrap();
            assert!(a.is_subset_of(&expanded));
            let product_card: usize = proj.iter().map(|s| s.count()).product();
            assert_eq!(expanded == a, a.count() == product_card);
        }
    }
}
