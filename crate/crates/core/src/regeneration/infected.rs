use std::collections::BTreeMap;

use crate::env::Edge;

/// Multiset of edge copies `e_{i,j}`.
///
/// Per edge the present copy indices are kept explicitly, because removing
/// `e_{i,1}` while `e_{i,2}` is present leaves a gap that the next attempt on
/// that edge must fill. Copies are ordered by `(edge, index)` with edges in
/// lexicographic `(site, axis)` order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InfectedSet {
    copies: BTreeMap<Edge, Vec<u32>>,
    total: usize,
}

impl InfectedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn distinct_edges(&self) -> usize {
        self.copies.len()
    }

    /// Whether the first copy `e_{i,1}` is present, which holds the edge's value fixed.
    pub fn is_frozen(&self, e: &Edge) -> bool {
        self.copies.get(e).is_some_and(|v| v.first() == Some(&1))
    }

    pub fn copies_of(&self, e: &Edge) -> &[u32] {
        self.copies.get(e).map_or(&[], |v| v.as_slice())
    }

    /// Adds the smallest missing copy of `e` and returns its index.
    pub fn add(&mut self, e: Edge) -> u32 {
        let v = self.copies.entry(e).or_default();
        let mut j = 1u32;
        let mut pos = 0;
        while pos < v.len() && v[pos] == j {
            j += 1;
            pos += 1;
        }
        v.insert(pos, j);
        self.total += 1;
        j
    }

    /// Removes the copy at zero-based position `k` of the ordering.
    pub fn remove_at(&mut self, k: usize) -> (Edge, u32) {
        assert!(k < self.total, "index {k} out of range for {} copies", self.total);
        let mut rest = k;
        let mut hit = None;
        for (e, v) in self.copies.iter() {
            if rest < v.len() {
                hit = Some((*e, rest));
                break;
            }
            rest -= v.len();
        }
        let (e, pos) = hit.expect("index within total");
        let v = self.copies.get_mut(&e).expect("edge present");
        let j = v.remove(pos);
        if v.is_empty() {
            self.copies.remove(&e);
        }
        self.total -= 1;
        (e, j)
    }

    pub fn clear(&mut self) {
        self.copies.clear();
        self.total = 0;
    }

    /// Copies in the canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (Edge, u32)> + '_ {
        self.copies.iter().flat_map(|(e, v)| v.iter().map(move |&j| (*e, j)))
    }
}
