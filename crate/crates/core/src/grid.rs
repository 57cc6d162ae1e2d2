//! Equal-area discretization of S^1 and S^2 and boolean sets on it.
//!
//! The circle is split into uniform arcs; S^2 into a product grid uniform
//! in azimuth and uniform in height, so every cell has measure exactly
//! `1/n_cells` (Archimedes). Both grids are treated as a stack of
//! azimuthal rings — one ring covering the whole circle when d = 1 —
//! which makes the inner product between two cell centers a function of
//! the ring pair and the azimuthal index difference alone.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{north, Cap, Point};

const TWO_PI: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GridKind {
    /// d = 1: `n` uniform angular cells.
    Circle { n: usize },
    /// d = 2: `n_phi` azimuth cells by `n_t` height cells.
    Sphere { n_phi: usize, n_t: usize },
}

/// An immutable grid; share it behind an [`Arc`].
#[derive(Debug)]
pub struct Grid {
    kind: GridKind,
    /// Height of each ring's cell centers (single zero entry for d = 1).
    ring_t: Vec<f64>,
    /// `sqrt(1 - t^2)` per ring (single unit entry for d = 1).
    ring_s: Vec<f64>,
    /// `cos(2π k / ring_len)` for k = 0..=ring_len/2, forced nonincreasing.
    cos_table: Vec<f64>,
    north_order: OnceLock<Vec<u32>>,
    nodes_xyz: OnceLock<Vec<[f64; 3]>>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Grid {
    pub fn circle(n: usize) -> Arc<Grid> {
        assert!(n >= 4, "circle grid needs at least 4 cells");
        Arc::new(Grid {
            kind: GridKind::Circle { n },
            ring_t: vec![0.0],
            ring_s: vec![1.0],
            cos_table: build_cos_table(n),
            north_order: OnceLock::new(),
            nodes_xyz: OnceLock::new(),
        })
    }

    pub fn sphere(n_phi: usize, n_t: usize) -> Arc<Grid> {
        assert!(
            n_phi >= 4 && n_t >= 2,
            "sphere grid needs n_phi >= 4, n_t >= 2"
        );
        let mut ring_t = Vec::with_capacity(n_t);
        let mut ring_s = Vec::with_capacity(n_t);
        for k in 0..n_t {
            // t_k = -1 + (2k+1)/n_t; form 1 - t^2 as (1-t)(1+t) to keep
            // precision at the poles.
            let eps = (2.0 * k as f64 + 1.0) / n_t as f64;
            let t = eps - 1.0;
            ring_t.push(t);
            ring_s.push((eps * (2.0 - eps)).max(0.0).sqrt());
        }
        Arc::new(Grid {
            kind: GridKind::Sphere { n_phi, n_t },
            ring_t,
            ring_s,
            cos_table: build_cos_table(n_phi),
            north_order: OnceLock::new(),
            nodes_xyz: OnceLock::new(),
        })
    }

    /// Default experiment grid for a dimension: 4096 arcs for the circle,
    /// 256 x 256 for S^2.
    pub fn default_for(d: u8) -> Result<Arc<Grid>> {
        match d {
            1 => Ok(Grid::circle(4096)),
            2 => Ok(Grid::sphere(256, 256)),
            _ => Err(Error::Argument(format!("no grid for dimension {d}"))),
        }
    }

    pub fn dim(&self) -> u8 {
        match self.kind {
            GridKind::Circle { .. } => 1,
            GridKind::Sphere { .. } => 2,
        }
    }

    pub fn n_cells(&self) -> usize {
        match self.kind {
            GridKind::Circle { n } => n,
            GridKind::Sphere { n_phi, n_t } => n_phi * n_t,
        }
    }

    pub fn cell_measure(&self) -> f64 {
        1.0 / self.n_cells() as f64
    }

    /// Number of azimuthal rings (1 for the circle).
    pub fn rings(&self) -> usize {
        self.ring_t.len()
    }

    /// Cells per ring.
    pub fn ring_len(&self) -> usize {
        match self.kind {
            GridKind::Circle { n } => n,
            GridKind::Sphere { n_phi, .. } => n_phi,
        }
    }

    pub fn n_t(&self) -> usize {
        match self.kind {
            GridKind::Circle { .. } => 1,
            GridKind::Sphere { n_t, .. } => n_t,
        }
    }

    #[inline]
    pub fn ring_t(&self, k: usize) -> f64 {
        self.ring_t[k]
    }

    #[inline]
    pub fn ring_s(&self, k: usize) -> f64 {
        self.ring_s[k]
    }

    /// Height step of a d = 2 ring (the full interval for d = 1).
    pub fn dt(&self) -> f64 {
        2.0 / self.n_t() as f64
    }

    pub fn azimuth_step(&self) -> f64 {
        TWO_PI / self.ring_len() as f64
    }

    /// `cos(2π k / ring_len)` for an index distance k <= ring_len/2.
    #[inline]
    pub fn cos_idx(&self, k: usize) -> f64 {
        self.cos_table[k]
    }

    pub fn cos_table(&self) -> &[f64] {
        &self.cos_table
    }

    #[inline]
    pub fn cell_index(&self, ring: usize, az: usize) -> usize {
        ring * self.ring_len() + az
    }

    #[inline]
    pub fn split_index(&self, cell: usize) -> (usize, usize) {
        let len = self.ring_len();
        (cell / len, cell % len)
    }

    pub fn azimuth_angle(&self, az: usize) -> f64 {
        (az as f64 + 0.5) * self.azimuth_step()
    }

    /// Cell-center coordinates in R^3.
    pub fn node(&self, cell: usize) -> Point {
        let (k, q) = self.split_index(cell);
        let phi = self.azimuth_angle(q);
        match self.kind {
            GridKind::Circle { .. } => Point::new(phi.cos(), phi.sin(), 0.0),
            GridKind::Sphere { .. } => {
                let s = self.ring_s[k];
                Point::new(s * phi.cos(), s * phi.sin(), self.ring_t[k])
            }
        }
    }

    /// Splits a point into (height, co-height, azimuth) relative to this
    /// grid's ring structure. For d = 1 the height is identically zero.
    pub fn decompose(&self, p: &Point) -> PolarPoint {
        match self.kind {
            GridKind::Circle { .. } => PolarPoint {
                t: 0.0,
                s: (p.x() * p.x() + p.y() * p.y()).sqrt(),
                phi: p.y().atan2(p.x()),
            },
            GridKind::Sphere { .. } => PolarPoint {
                t: p.z(),
                s: (p.x() * p.x() + p.y() * p.y()).sqrt(),
                phi: p.y().atan2(p.x()),
            },
        }
    }

    /// Inner product between a cell center and an arbitrary point,
    /// evaluated in ring coordinates. This is the canonical form used by
    /// every cap/overlap predicate in the crate, so that membership
    /// decisions agree bit-for-bit across operations.
    #[inline]
    pub fn node_dot(&self, cell: usize, p: &PolarPoint) -> f64 {
        let (k, q) = self.split_index(cell);
        self.ring_t[k] * p.t + self.ring_s[k] * p.s * (self.azimuth_angle(q) - p.phi).cos()
    }

    /// Height of a cell center (its inner product with the pole).
    pub fn node_height(&self, cell: usize) -> f64 {
        let (k, q) = self.split_index(cell);
        match self.kind {
            GridKind::Circle { .. } => (self.azimuth_angle(q) - std::f64::consts::FRAC_PI_2).cos(),
            GridKind::Sphere { .. } => self.ring_t[k],
        }
    }

    /// Index of the cell containing a point (boundary ties go to the
    /// lexicographically smaller cell).
    pub fn locate(&self, p: &Point) -> usize {
        let len = self.ring_len();
        let mut phi = p.y().atan2(p.x());
        if phi < 0.0 {
            phi += TWO_PI;
        }
        let q = ((phi / self.azimuth_step()) as usize).min(len - 1);
        match self.kind {
            GridKind::Circle { .. } => q,
            GridKind::Sphere { n_t, .. } => {
                let k = (((p.z() + 1.0) * 0.5 * n_t as f64).floor() as isize)
                    .clamp(0, n_t as isize - 1) as usize;
                self.cell_index(k, q)
            }
        }
    }

    /// Cell indices ordered by decreasing cell-center height, ties broken
    /// by ascending azimuth index.
    pub fn north_order(&self) -> &[u32] {
        self.north_order.get_or_init(|| {
            let n = self.n_cells();
            let mut order: Vec<u32> = (0..n as u32).collect();
            match self.kind {
                GridKind::Sphere { n_phi, n_t } => {
                    // Rings already sort by height; emit them top-down.
                    order.clear();
                    for k in (0..n_t).rev() {
                        for q in 0..n_phi {
                            order.push((k * n_phi + q) as u32);
                        }
                    }
                }
                GridKind::Circle { .. } => {
                    let heights: Vec<f64> = (0..n).map(|i| self.node_height(i)).collect();
                    order.sort_by(|&a, &b| {
                        heights[b as usize]
                            .partial_cmp(&heights[a as usize])
                            .unwrap()
                            .then(a.cmp(&b))
                    });
                }
            }
            order
        })
    }

    /// Cached cell-center coordinates (built on first use).
    pub fn nodes_xyz(&self) -> &[[f64; 3]] {
        self.nodes_xyz
            .get_or_init(|| (0..self.n_cells()).map(|i| self.node(i).0).collect())
    }

    /// Upper bound on the geodesic diameter of any cell.
    pub fn cell_diameter(&self) -> f64 {
        match self.kind {
            GridKind::Circle { n } => TWO_PI / n as f64,
            GridKind::Sphere { n_phi, n_t } => {
                let dphi = TWO_PI / n_phi as f64;
                let mut worst: f64 = 0.0;
                for k in 0..n_t {
                    let t_lo = -1.0 + 2.0 * k as f64 / n_t as f64;
                    let t_hi = -1.0 + 2.0 * (k + 1) as f64 / n_t as f64;
                    let dpsi = t_lo.clamp(-1.0, 1.0).acos() - t_hi.clamp(-1.0, 1.0).acos();
                    let s_max = if t_lo < 0.0 && t_hi > 0.0 {
                        1.0
                    } else {
                        (1.0 - t_lo * t_lo).max(1.0 - t_hi * t_hi).max(0.0).sqrt()
                    };
                    worst = worst.max(dpsi + s_max * dphi);
                }
                worst
            }
        }
    }

    /// Comparison slack used by grid-level inequality checks.
    pub fn eps_grid(&self) -> f64 {
        4.0 * self.cell_diameter()
    }
}

fn build_cos_table(len: usize) -> Vec<f64> {
    let half = len / 2;
    let mut table = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let mut c = (TWO_PI * k as f64 / len as f64).cos();
        if let Some(&prev) = table.last() {
            // The window search assumes a nonincreasing table.
            if c > prev {
                c = prev;
            }
        }
        table.push(c);
    }
    table
}

/// A point in ring coordinates: height, co-height, azimuth.
#[derive(Debug, Clone, Copy)]
pub struct PolarPoint {
    pub t: f64,
    pub s: f64,
    pub phi: f64,
}

/// A measurable subset of the sphere, as cell occupancy over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSet {
    grid: Arc<Grid>,
    words: Vec<u64>,
    count: usize,
}

impl SphericalSet {
    pub fn empty(grid: Arc<Grid>) -> Self {
        let words = vec![0u64; grid.n_cells().div_ceil(64)];
        SphericalSet {
            grid,
            words,
            count: 0,
        }
    }

    pub fn full(grid: Arc<Grid>) -> Self {
        let n = grid.n_cells();
        let mut set = SphericalSet::empty(grid);
        for i in 0..n {
            set.insert(i);
        }
        set
    }

    pub fn from_indices(grid: Arc<Grid>, cells: impl IntoIterator<Item = usize>) -> Self {
        let mut set = SphericalSet::empty(grid);
        for c in cells {
            set.insert(c);
        }
        set
    }

    /// Builds a set from a membership predicate on cell indices.
    pub fn from_fn(grid: Arc<Grid>, mut pred: impl FnMut(usize) -> bool) -> Self {
        let n = grid.n_cells();
        let mut set = SphericalSet::empty(grid);
        for i in 0..n {
            if pred(i) {
                set.insert(i);
            }
        }
        set
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn contains(&self, cell: usize) -> bool {
        (self.words[cell >> 6] >> (cell & 63)) & 1 == 1
    }

    pub fn insert(&mut self, cell: usize) {
        let w = &mut self.words[cell >> 6];
        let bit = 1u64 << (cell & 63);
        if *w & bit == 0 {
            *w |= bit;
            self.count += 1;
        }
    }

    pub fn remove(&mut self, cell: usize) {
        let w = &mut self.words[cell >> 6];
        let bit = 1u64 << (cell & 63);
        if *w & bit != 0 {
            *w &= !bit;
            self.count -= 1;
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.count
    }

    pub fn measure(&self) -> f64 {
        self.count as f64 * self.grid.cell_measure()
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.grid.n_cells();
        (0..n).filter(move |&i| self.contains(i))
    }

    pub fn complement(&self) -> SphericalSet {
        let n = self.grid.n_cells();
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let tail = n & 63;
        if tail != 0 {
            *words.last_mut().unwrap() &= (1u64 << tail) - 1;
        }
        SphericalSet {
            grid: self.grid.clone(),
            words,
            count: n - self.count,
        }
    }

    fn check_same_grid(&self, other: &SphericalSet) -> Result<()> {
        if self.grid.as_ref() != other.grid.as_ref() {
            return Err(Error::GridMismatch("sets live on different grids".into()));
        }
        Ok(())
    }

    /// Number of cells occupied in exactly one of the two sets.
    pub fn symm_diff_count(&self, other: &SphericalSet) -> Result<u64> {
        self.check_same_grid(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as u64)
            .sum())
    }

    /// Measure of the symmetric difference.
    pub fn symm_diff_measure(&self, other: &SphericalSet) -> Result<f64> {
        Ok(self.symm_diff_count(other)? as f64 * self.grid.cell_measure())
    }

    /// Equimeasurable set occupying the top cells of the grid in the
    /// canonical decreasing-height order: the discrete polar cap.
    pub fn rearrange(&self) -> SphericalSet {
        let order = self.grid.north_order();
        SphericalSet::from_indices(
            self.grid.clone(),
            order[..self.count].iter().map(|&i| i as usize),
        )
    }

    /// South-pole counterpart of [`rearrange`](Self::rearrange), filling the
    /// exact reverse of the canonical order.
    pub fn rearrange_south(&self) -> SphericalSet {
        let order = self.grid.north_order();
        let n = order.len();
        SphericalSet::from_indices(
            self.grid.clone(),
            order[n - self.count..].iter().map(|&i| i as usize),
        )
    }

    /// Rotates the set by a whole number of azimuth cells (an exact
    /// symmetry of the grid).
    pub fn rotate_azimuth(&self, shift: usize) -> SphericalSet {
        let len = self.grid.ring_len();
        let shift = shift % len;
        SphericalSet::from_indices(
            self.grid.clone(),
            self.occupied().map(|i| {
                let (k, q) = self.grid.split_index(i);
                self.grid.cell_index(k, (q + shift) % len)
            }),
        )
    }

    /// Per-ring occupied counts.
    pub fn ring_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.grid.rings()];
        for i in self.occupied() {
            counts[self.grid.split_index(i).0] += 1;
        }
        counts
    }

    /// Serializes as a one-line JSON header followed by the packed
    /// occupancy bitset, row-major (ring index, then azimuth index),
    /// least-significant bit first within each byte.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = SetHeader {
            d: self.grid.dim(),
            n_phi: self.grid.ring_len(),
            n_t: self.grid.n_t(),
            seed: None,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let n_bytes = self.grid.n_cells().div_ceil(8);
        let mut bytes = Vec::with_capacity(n_bytes);
        for word in &self.words {
            bytes.extend_from_slice(&word.to_le_bytes());
        }
        bytes.truncate(n_bytes);
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read_from(mut r: impl Read) -> Result<SphericalSet> {
        let mut header_bytes = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header_bytes.push(byte[0]);
        }
        let header: SetHeader = serde_json::from_slice(&header_bytes)?;
        let grid = match header.d {
            1 => Grid::circle(header.n_phi),
            2 => Grid::sphere(header.n_phi, header.n_t),
            d => return Err(Error::Argument(format!("unsupported dimension {d}"))),
        };
        let n = grid.n_cells();
        let mut bytes = vec![0u8; n.div_ceil(8)];
        r.read_exact(&mut bytes)?;
        let mut set = SphericalSet::empty(grid);
        for (i, word) in set.words.iter_mut().enumerate() {
            let mut buf = [0u8; 8];
            let lo = i * 8;
            let hi = (lo + 8).min(bytes.len());
            buf[..hi - lo].copy_from_slice(&bytes[lo..hi]);
            *word = u64::from_le_bytes(buf);
        }
        let tail = n & 63;
        if tail != 0 {
            *set.words.last_mut().unwrap() &= (1u64 << tail) - 1;
        }
        set.count = set.words.iter().map(|w| w.count_ones() as usize).sum();
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SphericalSet> {
        let f = std::fs::File::open(path)?;
        SphericalSet::read_from(std::io::BufReader::new(f))
    }
}

#[derive(Serialize, Deserialize)]
struct SetHeader {
    d: u8,
    n_phi: usize,
    n_t: usize,
    seed: Option<u64>,
}

/// Marks the cells whose centers lie in the cap.
pub fn rasterize_cap(cap: &Cap, grid: &Arc<Grid>) -> Result<SphericalSet> {
    if cap.dim != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "cap dimension {} vs grid dimension {}",
            cap.dim,
            grid.dim()
        )));
    }
    let p = grid.decompose(&cap.center);
    let h = cap.height;
    Ok(SphericalSet::from_fn(grid.clone(), |i| {
        grid.node_dot(i, &p) >= h
    }))
}

/// Rasterized polar cap of measure `e` centered at the pole.
pub fn north_cap(e: f64, grid: &Arc<Grid>) -> Result<SphericalSet> {
    let cap = Cap::from_measure(north(grid.dim()), e, grid.dim())?;
    rasterize_cap(&cap, grid)
}

/// A seeded random set occupying exactly `round(e * n_cells)` cells.
pub fn random_set(e: f64, seed: u64, grid: &Arc<Grid>) -> Result<SphericalSet> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::Argument(format!("measure {e} outside [0, 1]")));
    }
    let n = grid.n_cells();
    let k = (e * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<u32> = (0..n as u32).collect();
    let (chosen, _) = cells.partial_shuffle(&mut rng, k);
    Ok(SphericalSet::from_indices(
        grid.clone(),
        chosen.iter().map(|&i| i as usize),
    ))
}
