//! Random sampling for the simulator: speeds, pick times, disruptions,
//! overtaking delays and the synthetic product catalog.
//!
//! Everything draws from one [`RandomStream`] per episode, so a seed replays
//! an episode exactly.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Side, WarehouseLayout};

/// Seeded ChaCha8 stream. ChaCha output is specified bit-for-bit, so samples
/// agree across platforms.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent sub-stream, e.g. for worker `index` of a run seeded with `seed`.
    pub fn derived(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index.wrapping_add(1));
        RandomStream { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Normal(mean, sd) resampled until the draw is at least `floor`.
    pub fn truncated_normal(&mut self, g: Gaussian) -> f64 {
        if g.sd == 0.0 {
            return g.mean.max(g.floor);
        }
        let dist = Normal::new(g.mean, g.sd).expect("validated standard deviation");
        loop {
            let x = dist.sample(&mut self.rng);
            if x >= g.floor {
                return x;
            }
        }
    }

    /// Index drawn from unnormalised weights.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        // Rounding left `u` past the end: take the last category that can occur.
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
    }
}

/// Normal distribution truncated below at `floor`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
    pub floor: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, sd: f64, floor: f64) -> Self {
        Gaussian { mean, sd, floor }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.mean.is_finite() && self.sd.is_finite() && self.sd >= 0.0 && self.floor.is_finite()) {
            return Err(Error::config(format!("{what}: bad distribution {self:?}")));
        }
        if self.mean < self.floor {
            return Err(Error::config(format!("{what}: mean below truncation floor")));
        }
        Ok(())
    }
}

/// Parameters of every stochastic process in the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub picker_speed: Gaussian,
    pub amr_speed: Gaussian,
    /// Pick-time standard deviation as a fraction of the expected pick time.
    pub pick_time_rel_sd: f64,
    pub pick_time_floor: f64,
    /// Per-pick probability that the picker gets disrupted.
    pub disruption_prob: f64,
    pub disruption: Gaussian,
    pub overtake_enabled: bool,
    pub overtake: Gaussian,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            picker_speed: Gaussian::new(1.25, 0.15, 0.3),
            amr_speed: Gaussian::new(1.5, 0.15, 0.3),
            pick_time_rel_sd: 0.1,
            pick_time_floor: 0.5,
            disruption_prob: 1.0 / 50.0,
            disruption: Gaussian::new(60.0, 7.5, 5.0),
            overtake_enabled: true,
            overtake: Gaussian::new(15.0, 2.5, 1.0),
        }
    }
}

impl NoiseConfig {
    /// Fixed speeds, expected pick times, no disruptions or overtaking.
    pub fn deterministic(picker_speed: f64, amr_speed: f64) -> Self {
        NoiseConfig {
            picker_speed: Gaussian::new(picker_speed, 0.0, 0.0),
            amr_speed: Gaussian::new(amr_speed, 0.0, 0.0),
            pick_time_rel_sd: 0.0,
            pick_time_floor: 0.0,
            disruption_prob: 0.0,
            disruption: Gaussian::new(0.0, 0.0, 0.0),
            overtake_enabled: false,
            overtake: Gaussian::new(0.0, 0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.picker_speed.validate("picker_speed")?;
        self.amr_speed.validate("amr_speed")?;
        self.disruption.validate("disruption")?;
        self.overtake.validate("overtake")?;
        if self.picker_speed.mean <= 0.0 || self.amr_speed.mean <= 0.0 {
            return Err(Error::config("speeds must be positive"));
        }
        if self.picker_speed.sd > 0.0 && self.picker_speed.floor <= 0.0
            || self.amr_speed.sd > 0.0 && self.amr_speed.floor <= 0.0
        {
            return Err(Error::config("noisy speeds need a positive floor"));
        }
        if !(0.0..=1.0).contains(&self.disruption_prob) {
            return Err(Error::config("disruption_prob must lie in [0, 1]"));
        }
        if !(self.pick_time_rel_sd >= 0.0 && self.pick_time_floor >= 0.0) {
            return Err(Error::config("pick time noise must be non-negative"));
        }
        Ok(())
    }

    pub fn sample_picker_speed(&self, rs: &mut RandomStream) -> f64 {
        rs.truncated_normal(self.picker_speed)
    }

    pub fn sample_amr_speed(&self, rs: &mut RandomStream) -> f64 {
        rs.truncated_normal(self.amr_speed)
    }

    pub fn sample_pick_time(&self, rs: &mut RandomStream, t_expected: f64) -> f64 {
        debug_assert!(t_expected > 0.0);
        rs.truncated_normal(Gaussian::new(
            t_expected,
            self.pick_time_rel_sd * t_expected,
            self.pick_time_floor.min(t_expected),
        ))
    }

    /// Disruption drawn for a single pick: `Some(duration)` with the per-pick probability.
    pub fn sample_disruption(&self, rs: &mut RandomStream) -> Option<f64> {
        if self.disruption_prob > 0.0 && rs.bernoulli(self.disruption_prob) {
            Some(rs.truncated_normal(self.disruption))
        } else {
            None
        }
    }

    /// Disruptions for `n_picks` consecutive picks as (pick index, duration).
    pub fn sample_disruption_schedule(&self, rs: &mut RandomStream, n_picks: usize) -> Vec<(usize, f64)> {
        (0..n_picks)
            .filter_map(|i| self.sample_disruption(rs).map(|d| (i, d)))
            .collect()
    }

    pub fn sample_overtake_delay(&self, rs: &mut RandomStream) -> f64 {
        rs.truncated_normal(self.overtake)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: usize,
    /// Unit weight in kg.
    pub weight: f64,
    /// Unit volume in litres.
    pub volume: f64,
    pub category: usize,
}

/// Linear pick-time model in item pairs, single items, weight and volume.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PickTimeModel {
    pub base: f64,
    pub per_pair: f64,
    pub per_single: f64,
    pub per_kg: f64,
    pub per_litre: f64,
}

impl Default for PickTimeModel {
    fn default() -> Self {
        PickTimeModel {
            base: 2.0,
            per_pair: 2.5,
            per_single: 1.5,
            per_kg: 0.35,
            per_litre: 0.08,
        }
    }
}

impl PickTimeModel {
    pub fn expected_pick_time(&self, product: &Product, n_items: u32) -> Result<f64> {
        if n_items == 0 {
            return Err(Error::config("an order line needs at least one item"));
        }
        Ok(self.base
            + self.per_pair * n_items.div_ceil(2) as f64
            + self.per_single * (n_items % 2) as f64
            + self.per_kg * product.weight
            + self.per_litre * product.volume)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryConfig {
    pub name: String,
    /// Relative frequency among storage locations.
    pub frequency: f64,
    pub weight_median_kg: f64,
    pub weight_log_sd: f64,
    pub volume_median_l: f64,
    pub volume_log_sd: f64,
}

/// Finite discrete distribution over positive integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    pub values: Vec<u32>,
    pub weights: Vec<f64>,
}

impl DiscreteDist {
    pub fn sample(&self, rs: &mut RandomStream) -> u32 {
        self.values[rs.categorical(&self.weights)]
    }

    pub fn mean(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| v as f64 * w)
            .sum::<f64>()
            / total
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.values.is_empty()
            || self.values.len() != self.weights.len()
            || self.values.contains(&0)
            || self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::config(format!("{what}: malformed discrete distribution")));
        }
        Ok(())
    }
}

/// Synthetic product catalog: categories, placement run lengths and order-line sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogConfig {
    pub categories: Vec<CategoryConfig>,
    /// Number of consecutive storage locations holding the same category.
    pub run_length: DiscreteDist,
    /// Items requested per order line.
    pub items_per_line: DiscreteDist,
    pub pick_time: PickTimeModel,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        let cat = |name: &str, frequency, wm, ws, vm, vs| CategoryConfig {
            name: name.to_string(),
            frequency,
            weight_median_kg: wm,
            weight_log_sd: ws,
            volume_median_l: vm,
            volume_log_sd: vs,
        };
        CatalogConfig {
            categories: vec![
                cat("light-bulky", 0.25, 0.4, 0.5, 3.0, 0.4),
                cat("small", 0.30, 1.0, 0.5, 1.5, 0.4),
                cat("dense", 0.15, 1.2, 0.4, 1.2, 0.3),
                cat("medium", 0.15, 2.5, 0.4, 1.5, 0.3),
                cat("heavy", 0.15, 8.0, 0.35, 7.0, 0.3),
            ],
            run_length: DiscreteDist {
                values: vec![1, 2, 3, 4, 5, 6, 8],
                weights: vec![0.15, 0.2, 0.2, 0.15, 0.12, 0.1, 0.08],
            },
            items_per_line: DiscreteDist {
                values: vec![1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48],
                weights: vec![0.38, 0.17, 0.09, 0.08, 0.07, 0.06, 0.05, 0.035, 0.03, 0.02, 0.015],
            },
            pick_time: PickTimeModel::default(),
        }
    }
}

impl CatalogConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: CatalogConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::config("catalog needs at least one category"));
        }
        for c in &self.categories {
            let ok = c.frequency >= 0.0
                && c.weight_median_kg > 0.0
                && c.volume_median_l > 0.0
                && c.weight_log_sd >= 0.0
                && c.volume_log_sd >= 0.0;
            if !ok {
                return Err(Error::config(format!("category {}: invalid parameters", c.name)));
            }
        }
        if self.categories.iter().map(|c| c.frequency).sum::<f64>() <= 0.0 {
            return Err(Error::config("category frequencies sum to zero"));
        }
        self.run_length.validate("run_length")?;
        self.items_per_line.validate("items_per_line")?;
        Ok(())
    }

    fn frequencies(&self) -> Vec<f64> {
        self.categories.iter().map(|c| c.frequency).collect()
    }

    pub fn sample_product(&self, rs: &mut RandomStream, id: usize, category: usize) -> Product {
        let c = &self.categories[category];
        let w = LogNormal::new(c.weight_median_kg.ln(), c.weight_log_sd).expect("validated");
        let v = LogNormal::new(c.volume_median_l.ln(), c.volume_log_sd).expect("validated");
        Product {
            id,
            weight: w.sample(rs.rng()),
            volume: v.sample(rs.rng()),
            category,
        }
    }

    /// A free-standing order line (product and item count), as drawn for
    /// calibration of the pick-time model.
    pub fn sample_order_line(&self, rs: &mut RandomStream) -> (Product, u32) {
        let category = rs.categorical(&self.frequencies());
        let product = self.sample_product(rs, 0, category);
        let n = self.items_per_line.sample(rs);
        (product, n)
    }
}

/// Product stored at every node, plus the category runs used to lay them out.
#[derive(Clone, Debug)]
pub struct Placement {
    pub products: Vec<Product>,
    /// (category, run length) in fill order.
    pub runs: Vec<(usize, usize)>,
}

/// Fill order: aisle by aisle, left rack then right rack, bottom to top, so
/// that category runs are contiguous shelf stretches.
pub fn fill_order(layout: &WarehouseLayout) -> Vec<crate::layout::NodeId> {
    let mut order = Vec::with_capacity(layout.n_nodes());
    for a in 0..layout.n_aisles() {
        for side in [Side::Left, Side::Right] {
            for d in 0..layout.depth() {
                order.push(layout.node(a, d, side));
            }
        }
    }
    order
}

pub fn generate_product_placement(
    rs: &mut RandomStream,
    layout: &WarehouseLayout,
    catalog: &CatalogConfig,
) -> Placement {
    let order = fill_order(layout);
    let freqs = catalog.frequencies();
    let mut products: Vec<Option<Product>> = vec![None; layout.n_nodes()];
    let mut runs = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let category = rs.categorical(&freqs);
        let len = catalog.run_length.sample(rs) as usize;
        runs.push((category, len));
        for &v in order.iter().skip(i).take(len) {
            products[v.index()] = Some(catalog.sample_product(rs, v.index(), category));
        }
        i += len;
    }
    Placement {
        products: products
            .into_iter()
            .map(|p| p.expect("fill order covers every node"))
            .collect(),
        runs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::build_layout;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn picker_speed_moments_and_floor() {
        let cfg = NoiseConfig::default();
        let mut rs = RandomStream::new(1);
        let xs: Vec<f64> = (0..100_000).map(|_| cfg.sample_picker_speed(&mut rs)).collect();
        let (m, s) = moments(&xs);
        assert!((m - 1.25).abs() < 0.01, "{m}");
        assert!((s - 0.15).abs() < 0.01, "{s}");
        assert!(xs.iter().all(|&x| x >= 0.3));
    }

    #[test]
    fn amr_speed_moments() {
        let cfg = NoiseConfig::default();
        let mut rs = RandomStream::new(2);
        let xs: Vec<f64> = (0..100_000).map(|_| cfg.sample_amr_speed(&mut rs)).collect();
        let (m, s) = moments(&xs);
        assert!((m - 1.5).abs() < 0.01);
        assert!((s - 0.15).abs() < 0.01);
        assert!(xs.iter().all(|&x| x >= 0.3));
    }

    #[test]
    fn same_seed_same_samples() {
        let cfg = NoiseConfig::default();
        let mut a = RandomStream::new(42);
        let mut b = RandomStream::new(42);
        for _ in 0..100 {
            assert_eq!(cfg.sample_picker_speed(&mut a), cfg.sample_picker_speed(&mut b));
            assert_eq!(cfg.sample_overtake_delay(&mut a), cfg.sample_overtake_delay(&mut b));
            assert_eq!(cfg.sample_pick_time(&mut a, 9.0), cfg.sample_pick_time(&mut b, 9.0));
        }
    }

    #[test]
    fn derived_streams_differ() {
        let mut a = RandomStream::derived(7, 0);
        let mut b = RandomStream::derived(7, 1);
        let xa: Vec<f64> = (0..4).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..4).map(|_| b.uniform()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn pick_time_formula() {
        let m = PickTimeModel::default();
        let p = Product {
            id: 0,
            weight: 1.0,
            volume: 1.0,
            category: 0,
        };
        assert!((m.expected_pick_time(&p, 1).unwrap() - 6.43).abs() < 1e-12);
        // two items: one pair, no single
        assert!((m.expected_pick_time(&p, 2).unwrap() - (2.0 + 2.5 + 0.43)).abs() < 1e-12);
        assert!(m.expected_pick_time(&p, 0).is_err());
        let heavy = Product {
            weight: 2.0,
            ..p.clone()
        };
        assert!(m.expected_pick_time(&heavy, 1).unwrap() > m.expected_pick_time(&p, 1).unwrap());
    }

    #[test]
    fn pick_time_noise() {
        let cfg = NoiseConfig::default();
        let mut rs = RandomStream::new(3);
        let xs: Vec<f64> = (0..100_000).map(|_| cfg.sample_pick_time(&mut rs, 10.0)).collect();
        let (m, s) = moments(&xs);
        assert!((m - 10.0).abs() < 0.05);
        assert!((s - 1.0).abs() < 0.05);
        assert!(xs.iter().all(|&x| x >= 0.5));
    }

    #[test]
    fn disruption_rate_and_duration() {
        let cfg = NoiseConfig::default();
        let mut total = 0usize;
        let seeds = 200;
        for seed in 0..seeds {
            let mut rs = RandomStream::new(seed);
            total += cfg.sample_disruption_schedule(&mut rs, 5000).len();
        }
        let mean = total as f64 / seeds as f64;
        assert!((mean - 100.0).abs() < 5.0, "{mean}");

        let mut rs = RandomStream::new(9);
        let d: Vec<f64> = (0..10_000).map(|_| rs.truncated_normal(cfg.disruption)).collect();
        assert!((moments(&d).0 - 60.0).abs() < 1.0);
        assert!(cfg.sample_disruption_schedule(&mut rs, 0).is_empty());
    }

    #[test]
    fn overtake_delay() {
        let cfg = NoiseConfig::default();
        let mut rs = RandomStream::new(5);
        let xs: Vec<f64> = (0..10_000).map(|_| cfg.sample_overtake_delay(&mut rs)).collect();
        assert!((moments(&xs).0 - 15.0).abs() < 0.2);
        assert!(xs.iter().all(|&x| x >= 1.0));
    }

    #[test]
    fn order_line_population_calibration() {
        let cat = CatalogConfig::default();
        let mut rs = RandomStream::new(11);
        let ts: Vec<f64> = (0..100_000)
            .map(|_| {
                let (p, n) = cat.sample_order_line(&mut rs);
                cat.pick_time.expected_pick_time(&p, n).unwrap()
            })
            .collect();
        let (m, s) = moments(&ts);
        assert!((10.3..=13.3).contains(&m), "mean {m}");
        assert!((8.0..=13.0).contains(&s), "sd {s}");
    }

    #[test]
    fn placement_covers_layout() {
        let layout = build_layout(10, 10).unwrap();
        let cat = CatalogConfig::default();
        let mut rs = RandomStream::new(4);
        let pl = generate_product_placement(&mut rs, &layout, &cat);
        assert_eq!(pl.products.len(), 200);
        assert!(pl.products.iter().all(|p| p.weight > 0.0 && p.volume > 0.0));
        let weights: Vec<f64> = pl.products.iter().map(|p| p.weight).collect();
        assert!(weights.iter().cloned().fold(f64::INFINITY, f64::min) < 1.0);
    }

    #[test]
    fn run_lengths_follow_configured_mean() {
        let layout = build_layout(10, 10).unwrap();
        let cat = CatalogConfig::default();
        let mut rs = RandomStream::new(8);
        let mut lens = Vec::new();
        for _ in 0..100 {
            let pl = generate_product_placement(&mut rs, &layout, &cat);
            lens.extend(pl.runs.iter().map(|&(_, l)| l as f64));
        }
        // Direct sampling from the configured distribution as the reference.
        let mut ref_rs = RandomStream::new(99);
        let reference: Vec<f64> = (0..lens.len())
            .map(|_| cat.run_length.sample(&mut ref_rs) as f64)
            .collect();
        let (m, _) = moments(&lens);
        let (r, _) = moments(&reference);
        assert!((m - r).abs() / r < 0.1, "{m} vs {r}");
        assert!((r - cat.run_length.mean()).abs() / r < 0.05);
    }

    #[test]
    fn catalog_json_round_trip() {
        let cat = CatalogConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.json");
        std::fs::write(&path, serde_json::to_string_pretty(&cat).unwrap()).unwrap();
        assert_eq!(CatalogConfig::from_json_file(&path).unwrap(), cat);

        let mut bad = cat.clone();
        bad.run_length.values[0] = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn deterministic_noise_has_no_variance() {
        let cfg = NoiseConfig::deterministic(1.25, 1.5);
        cfg.validate().unwrap();
        let mut rs = RandomStream::new(0);
        assert_eq!(cfg.sample_picker_speed(&mut rs), 1.25);
        assert_eq!(cfg.sample_pick_time(&mut rs, 7.5), 7.5);
        assert!(cfg.sample_disruption(&mut rs).is_none());
    }
}
