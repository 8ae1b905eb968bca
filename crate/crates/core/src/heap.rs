//! Min-heap entry for label-setting solvers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Heap entry ordered as a min-heap on `key`, breaking ties by the lowest
/// `id`. The deterministic tie-break keeps solver outputs reproducible.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MinEntry {
    pub key: f64,
    pub id: usize,
}

impl Eq for MinEntry {}

impl Ord for MinEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so that BinaryHeap (a max-heap) pops the smallest key;
        // among equal keys the smallest id pops first.
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for MinEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap over `(key, id)` pairs.
pub type MinHeap = BinaryHeap<MinEntry>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_smallest_key_then_smallest_id() {
        let mut h = MinHeap::new();
        h.push(MinEntry { key: 2.0, id: 0 });
        h.push(MinEntry { key: 1.0, id: 7 });
        h.push(MinEntry { key: 1.0, id: 3 });
        assert_eq!(h.pop().unwrap().id, 3);
        assert_eq!(h.pop().unwrap().id, 7);
        assert_eq!(h.pop().unwrap().id, 0);
    }
}
