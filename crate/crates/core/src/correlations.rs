//! Connected two- and three-point correlators of atom loss over stacks of
//! site-resolved occupancy images.
//!
//! The hole variable is h = 1 − occupancy. Expectations are shot averages
//! taken per site, then averaged over all positions R′ whose referenced
//! sites lie inside the region of interest. Moments are accumulated as exact
//! integer sums, so estimates do not depend on summation order.

use std::ops::Neg;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::parallel::par_map;

/// Site offset in lattice units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Offset {
    pub dx: i32,
    pub dy: i32,
}

impl Offset {
    pub const ZERO: Offset = Offset { dx: 0, dy: 0 };

    pub const fn new(dx: i32, dy: i32) -> Self {
        Self { dx, dy }
    }

    pub fn scale(self, k: i32) -> Self {
        Self::new(self.dx * k, self.dy * k)
    }
}

impl Neg for Offset {
    type Output = Offset;
    fn neg(self) -> Offset {
        Offset::new(-self.dx, -self.dy)
    }
}

impl std::ops::Add for Offset {
    type Output = Offset;
    fn add(self, o: Offset) -> Offset {
        Offset::new(self.dx + o.dx, self.dy + o.dy)
    }
}

/// One binary occupancy image, row-major (index y·width + x).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeImage {
    width: usize,
    height: usize,
    occupancy: Vec<u8>,
}

impl LatticeImage {
    pub fn new(width: usize, height: usize, occupancy: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(config("image dimensions must be at least 1"));
        }
        if occupancy.len() != width * height {
            return Err(config(format!(
                "image has {} sites, expected {}",
                occupancy.len(),
                width * height
            )));
        }
        if occupancy.iter().any(|&o| o > 1) {
            return Err(config("occupancy values must be 0 or 1"));
        }
        Ok(Self { width, height, occupancy })
    }

    pub fn filled(width: usize, height: usize) -> Self {
        Self { width, height, occupancy: vec![1; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn occupancy(&self) -> &[u8] {
        &self.occupancy
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.occupancy[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.occupancy[y * self.width + x] = value as u8;
    }
}

/// Half-open rectangle [x0, x1) × [y0, y1) of sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Roi {
    pub fn full(width: usize, height: usize) -> Self {
        Self { x0: 0, y0: 0, x1: width, y1: height }
    }

    /// A `size`×`size` window centred in the image, clipped to it.
    pub fn centered(width: usize, height: usize, size: usize) -> Self {
        let sx = size.min(width);
        let sy = size.min(height);
        let x0 = (width - sx) / 2;
        let y0 = (height - sy) / 2;
        Self { x0, y0, x1: x0 + sx, y1: y0 + sy }
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 as i64 && x < self.x1 as i64 && y >= self.y0 as i64 && y < self.y1 as i64
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSet {
    width: usize,
    height: usize,
    roi: Roi,
    images: Vec<LatticeImage>,
}

impl ImageSet {
    pub fn new(images: Vec<LatticeImage>, roi: Roi) -> Result<Self> {
        let first = images.first().ok_or_else(|| config("an image set needs at least one image"))?;
        let (width, height) = (first.width, first.height);
        if images.iter().any(|im| im.width != width || im.height != height) {
            return Err(config("all images must share the same dimensions"));
        }
        if roi.x0 >= roi.x1 || roi.y0 >= roi.y1 || roi.x1 > width || roi.y1 > height {
            return Err(config(format!("ROI {roi:?} is empty or outside the {width}x{height} image")));
        }
        Ok(Self { width, height, roi, images })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn roi(&self) -> Roi {
        self.roi
    }

    pub fn images(&self) -> &[LatticeImage] {
        &self.images
    }

    pub fn n_shots(&self) -> usize {
        self.images.len()
    }

    pub fn with_roi(&self, roi: Roi) -> Result<Self> {
        Self::new(self.images.clone(), roi)
    }

    /// Mean occupancy inside the ROI.
    pub fn mean_occupancy(&self) -> f64 {
        let mut total = 0u64;
        for im in &self.images {
            for y in self.roi.y0..self.roi.y1 {
                for x in self.roi.x0..self.roi.x1 {
                    total += im.get(x, y) as u64;
                }
            }
        }
        total as f64 / (self.n_shots() * self.roi.width() * self.roi.height()) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrResult {
    pub value: f64,
    /// Delete-1 jackknife standard error; zero for a single shot.
    pub error: f64,
    pub n_shots: usize,
    /// Number of positions R′ averaged.
    pub n_sites: usize,
}

/// Holes per site across shots, site-major.
struct HoleTable {
    n_shots: usize,
    width: usize,
    holes: Vec<u8>,
    sums: Vec<i64>,
}

impl HoleTable {
    fn new(set: &ImageSet) -> Self {
        let n = set.n_shots();
        let sites = set.width * set.height;
        let mut holes = vec![0u8; sites * n];
        for (s, im) in set.images.iter().enumerate() {
            for (site, &o) in im.occupancy.iter().enumerate() {
                holes[site * n + s] = 1 - o;
            }
        }
        let sums = holes.chunks(n).map(|c| c.iter().map(|&h| h as i64).sum()).collect();
        Self { n_shots: n, width: set.width, holes, sums }
    }

    fn site(&self, x: i64, y: i64) -> usize {
        y as usize * self.width + x as usize
    }

    fn shots(&self, site: usize) -> &[u8] {
        &self.holes[site * self.n_shots..(site + 1) * self.n_shots]
    }
}

/// All R′ for which every R′ + offset lies in the ROI.
fn valid_positions(roi: &Roi, offsets: &[Offset]) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for y in roi.y0..roi.y1 {
        for x in roi.x0..roi.x1 {
            let (x, y) = (x as i64, y as i64);
            if offsets.iter().all(|o| roi.contains(x + o.dx as i64, y + o.dy as i64)) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Delete-1 jackknife standard error from leave-one-out replicates,
/// sqrt((n−1)/n · Σ(θ_i − θ̄)²).
pub fn jackknife_from_replicates(replicates: &[f64]) -> Result<f64> {
    let n = replicates.len();
    if n < 2 {
        return Err(domain(format!("jackknife needs at least 2 shots, got {n}")));
    }
    let mean = replicates.iter().sum::<f64>() / n as f64;
    let ss: f64 = replicates.iter().map(|t| (t - mean).powi(2)).sum();
    Ok(((n - 1) as f64 / n as f64 * ss).sqrt())
}

/// Delete-1 jackknife standard error of `estimator` over per-shot data.
pub fn jackknife_error<T>(shots: &[T], estimator: impl Fn(&[&T]) -> f64) -> Result<f64> {
    if shots.len() < 2 {
        return Err(domain(format!("jackknife needs at least 2 shots, got {}", shots.len())));
    }
    let replicates: Vec<f64> = (0..shots.len())
        .map(|skip| {
            let subset: Vec<&T> =
                shots.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, s)| s).collect();
            estimator(&subset)
        })
        .collect();
    jackknife_from_replicates(&replicates)
}

fn finish(numerator: i128, replicates: &[i128], n: usize, order: i32, n_sites: usize) -> CorrResult {
    let denom = (n as f64).powi(order) * n_sites as f64;
    let value = numerator as f64 / denom;
    let error = if n >= 2 && !replicates.is_empty() {
        let d = ((n - 1) as f64).powi(order) * n_sites as f64;
        let theta: Vec<f64> = replicates.iter().map(|&r| r as f64 / d).collect();
        jackknife_from_replicates(&theta).unwrap_or(0.0)
    } else {
        0.0
    };
    CorrResult { value, error, n_shots: n, n_sites }
}

/// Connected two-point hole correlator at offset `dr`.
pub fn g2(set: &ImageSet, dr: Offset) -> Result<CorrResult> {
    g2_with(&HoleTable::new(set), &set.roi, dr, true)
}

fn g2_with(table: &HoleTable, roi: &Roi, dr: Offset, errors: bool) -> Result<CorrResult> {
    if dr == Offset::ZERO {
        return Err(domain("g2 needs a non-zero offset"));
    }
    let positions = valid_positions(roi, &[Offset::ZERO, dr]);
    if positions.is_empty() {
        return Err(domain(format!("no site pair at offset ({}, {}) fits in the ROI", dr.dx, dr.dy)));
    }
    let n = table.n_shots as i128;
    let mut total: i128 = 0;
    let mut loo = vec![0i128; if errors { table.n_shots } else { 0 }];
    for &(x, y) in &positions {
        let a = table.site(x, y);
        let b = table.site(x + dr.dx as i64, y + dr.dy as i64);
        let (ha, hb) = (table.shots(a), table.shots(b));
        let (sa, sb) = (table.sums[a] as i128, table.sums[b] as i128);
        let sab: i128 = ha.iter().zip(hb).map(|(&p, &q)| (p & q) as i128).sum();
        total += n * sab - sa * sb;
        for (s, slot) in loo.iter_mut().enumerate() {
            let (pa, pb) = (ha[s] as i128, hb[s] as i128);
            *slot += (n - 1) * (sab - pa * pb) - (sa - pa) * (sb - pb);
        }
    }
    Ok(finish(total, &loo, table.n_shots, 2, positions.len()))
}

/// Connected three-point hole correlator of R′, R′ + r0 and R′ + dr.
pub fn g3(set: &ImageSet, r0: Offset, dr: Offset) -> Result<CorrResult> {
    g3_with(&HoleTable::new(set), &set.roi, r0, dr, true)
}

/// G2(r0) and G3_r0(−r0) values without jackknife errors; used where a
/// search evaluates many candidate sets.
pub(crate) fn pair_triple_values(set: &ImageSet, r0: Offset) -> Result<(f64, f64)> {
    let table = HoleTable::new(set);
    let a = g2_with(&table, &set.roi, r0, false)?;
    let b = g3_with(&table, &set.roi, r0, -r0, false)?;
    Ok((a.value, b.value))
}

fn g3_with(table: &HoleTable, roi: &Roi, r0: Offset, dr: Offset, errors: bool) -> Result<CorrResult> {
    if r0 == Offset::ZERO || dr == Offset::ZERO || r0 == dr {
        return Err(domain("g3 needs three distinct sites (0, R0, dR pairwise different)"));
    }
    let positions = valid_positions(roi, &[Offset::ZERO, r0, dr]);
    if positions.is_empty() {
        return Err(domain("no site triple fits in the ROI"));
    }
    let n = table.n_shots as i128;
    // n³·m₃ = n²S_abc − n(S_a S_bc + S_b S_ac + S_c S_ab) + 2 S_a S_b S_c
    let numerator = |n: i128, sa: i128, sb: i128, sc: i128, sab: i128, sac: i128, sbc: i128, sabc: i128| {
        n * n * sabc - n * (sa * sbc + (sb * sac + sc * sab)) + 2 * sa * sb * sc
    };
    let mut total: i128 = 0;
    let mut loo = vec![0i128; if errors { table.n_shots } else { 0 }];
    for &(x, y) in &positions {
        let a = table.site(x, y);
        let b = table.site(x + r0.dx as i64, y + r0.dy as i64);
        let c = table.site(x + dr.dx as i64, y + dr.dy as i64);
        let (ha, hb, hc) = (table.shots(a), table.shots(b), table.shots(c));
        let (sa, sb, sc) = (table.sums[a] as i128, table.sums[b] as i128, table.sums[c] as i128);
        let (mut sab, mut sac, mut sbc, mut sabc) = (0i128, 0i128, 0i128, 0i128);
        for s in 0..table.n_shots {
            let (p, q, r) = (ha[s], hb[s], hc[s]);
            sab += (p & q) as i128;
            sac += (p & r) as i128;
            sbc += (q & r) as i128;
            sabc += (p & q & r) as i128;
        }
        total += numerator(n, sa, sb, sc, sab, sac, sbc, sabc);
        for (s, slot) in loo.iter_mut().enumerate() {
            let (p, q, r) = (ha[s] as i128, hb[s] as i128, hc[s] as i128);
            *slot += numerator(
                n - 1,
                sa - p,
                sb - q,
                sc - r,
                sab - p * q,
                sac - p * r,
                sbc - q * r,
                sabc - p * q * r,
            );
        }
    }
    Ok(finish(total, &loo, table.n_shots, 3, positions.len()))
}

/// Correlator values over the square window of offsets |dx|, |dy| ≤ `half`;
/// excluded or unsupported offsets are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrMap {
    pub half: i32,
    pub cells: Vec<(Offset, Option<CorrResult>)>,
}

impl CorrMap {
    pub fn get(&self, dr: Offset) -> Option<CorrResult> {
        self.cells.iter().find(|(o, _)| *o == dr).and_then(|(_, r)| *r)
    }

    /// Offset of the largest value. Equal values go to the shorter offset,
    /// then to the earlier cell; collinear triples give exactly equal values
    /// at −R0 and 2R0.
    pub fn argmax(&self) -> Option<Offset> {
        let len2 = |o: &Offset| o.dx * o.dx + o.dy * o.dy;
        self.cells
            .iter()
            .filter_map(|(o, r)| r.map(|r| (*o, r.value)))
            .reduce(|best, c| match c.1.total_cmp(&best.1) {
                std::cmp::Ordering::Greater => c,
                std::cmp::Ordering::Equal if len2(&c.0) < len2(&best.0) => c,
                _ => best,
            })
            .map(|(o, _)| o)
    }
}

fn window(half: i32) -> Vec<Offset> {
    if half < 0 {
        return Vec::new();
    }
    (-half..=half).flat_map(|dy| (-half..=half).map(move |dx| Offset::new(dx, dy))).collect()
}

pub fn g2_map(set: &ImageSet, half: i32) -> CorrMap {
    let table = HoleTable::new(set);
    let offsets = window(half);
    let values = par_map(&offsets, |&dr| g2_with(&table, &set.roi, dr, true).ok());
    CorrMap { half, cells: offsets.into_iter().zip(values).collect() }
}

pub fn g3_map(set: &ImageSet, r0: Offset, half: i32) -> CorrMap {
    let table = HoleTable::new(set);
    let offsets = window(half);
    let values = par_map(&offsets, |&dr| g3_with(&table, &set.roi, r0, dr, true).ok());
    CorrMap { half, cells: offsets.into_iter().zip(values).collect() }
}
