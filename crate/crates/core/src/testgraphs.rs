//! Tiny shared graph fixtures used across unit and integration tests.

#![doc(hidden)]

/// Seven vertices, nine edges. Under P=2 with alpha=3 the balanced split is
/// [0,3,7]; with batch size 2, node 1 holds batches {3,4} and {5,6}.
pub const G7_EDGES: &[(u64, u64)] = &[
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 3),
    (2, 5),
    (3, 4),
    (4, 5),
    (5, 6),
    (6, 0),
];

pub const G7_VERTICES: u64 = 7;

/// G7 edges sorted by (src, dst), the order the preprocessor requires.
pub fn g7_sorted() -> Vec<(u64, u64)> {
    let mut e = G7_EDGES.to_vec();
    e.sort_unstable();
    e
}
