//! Pickrun generation: random order lines grouped into runs and sorted in
//! S-shape (traversal) order.

use serde::{Deserialize, Serialize};

use crate::layout::{NodeId, WarehouseLayout};
use crate::stochastic::{CatalogConfig, Product, RandomStream};

/// One order line: `n_items` units of the product stored at `node`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub node: NodeId,
    pub n_items: u32,
    /// Total mass of the line in kg.
    pub mass: f64,
    /// Expected pick time in seconds.
    pub expected_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pickrun {
    pub id: usize,
    pub lines: Vec<Line>,
}

impl Pickrun {
    pub fn n_items(&self) -> u64 {
        self.lines.iter().map(|l| l.n_items as u64).sum()
    }
}

/// Traversal key: aisles left to right, and inside an aisle along the AMR
/// travel direction, so consecutive aisles are entered from opposite ends.
pub fn s_shape_key(layout: &WarehouseLayout, v: NodeId) -> (usize, usize, usize) {
    (layout.aisle_of(v), layout.position_along_direction(v), v.index() % 2)
}

pub fn sort_s_shape(layout: &WarehouseLayout, lines: &mut [Line]) {
    lines.sort_by_key(|l| s_shape_key(layout, l.node));
}

/// Draws pickruns until exactly `total_picks` items are requested; the last
/// run is cut short to hit the budget. Run lengths are uniform in
/// `len_bounds` (clamped to the number of locations) and locations within a
/// run are distinct.
pub fn generate_pickruns(
    rs: &mut RandomStream,
    layout: &WarehouseLayout,
    products: &[Product],
    catalog: &CatalogConfig,
    total_picks: u64,
    len_bounds: (usize, usize),
) -> Vec<Pickrun> {
    let n_nodes = layout.n_nodes();
    let lo = len_bounds.0.clamp(1, n_nodes);
    let hi = len_bounds.1.clamp(lo, n_nodes);
    let mut runs = Vec::new();
    let mut remaining = total_picks;
    let mut pool: Vec<usize> = (0..n_nodes).collect();
    let mut line_id = 0;
    while remaining > 0 {
        let len = rs.int_inclusive(lo, hi);
        // Partial Fisher-Yates: the first `len` entries become the run's locations.
        for i in 0..len {
            let j = i + rs.index(n_nodes - i);
            pool.swap(i, j);
        }
        let mut lines = Vec::with_capacity(len);
        for &v in &pool[..len] {
            if remaining == 0 {
                break;
            }
            let wanted = catalog.items_per_line.sample(rs) as u64;
            let n = wanted.min(remaining) as u32;
            remaining -= n as u64;
            let product = &products[v];
            let expected_time = catalog
                .pick_time
                .expected_pick_time(product, n)
                .expect("line has at least one item");
            lines.push(Line {
                id: line_id,
                node: NodeId::from(v),
                n_items: n,
                mass: n as f64 * product.weight,
                expected_time,
            });
            line_id += 1;
        }
        sort_s_shape(layout, &mut lines);
        runs.push(Pickrun { id: runs.len(), lines });
    }
    runs
}
