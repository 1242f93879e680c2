//! Synthetic occupancy images with uncorrelated, pair and triple loss, and
//! the search for pair/triple loss probabilities that reproduce observed
//! correlator strengths.
//!
//! Every shot draws from its own ChaCha8 stream keyed by (seed, shot), and
//! every candidate event consumes one uniform whether or not it is eligible.
//! Changing a probability therefore changes only the outcomes, never the
//! random numbers, which keeps the fit's objective smooth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correlations::{g2, g3, pair_triple_values, CorrResult, ImageSet, LatticeImage, Offset, Roi};
use crate::error::{config, domain, Result};
use crate::parallel::par_map;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub width: usize,
    pub height: usize,
    /// Side of the centred square region of interest.
    pub roi_size: usize,
    pub n_shots: usize,
    pub filling: f64,
    /// Loss probability per eligible neighbouring pair and direction.
    pub p2: f64,
    /// Loss probability per eligible collinear triple {s, s+d, s+2d}.
    pub p3: f64,
    /// Independent single-site loss probability, applied last.
    pub p_bg: f64,
    /// Diagonal unit offsets along which pairs and triples form.
    pub directions: Vec<Offset>,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            width: 19,
            height: 19,
            roi_size: 15,
            n_shots: 1000,
            filling: 0.9,
            p2: 0.0,
            p3: 0.0,
            p_bg: 0.0,
            directions: vec![Offset::new(-1, 1)],
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("filling", self.filling), ("p2", self.p2), ("p3", self.p3), ("p_bg", self.p_bg)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.width == 0 || self.height == 0 || self.n_shots == 0 {
            return Err(config("width, height and n_shots must be at least 1"));
        }
        if self.roi_size == 0 {
            return Err(config("roi_size must be at least 1"));
        }
        if self.directions.is_empty() {
            return Err(config("at least one loss direction is required"));
        }
        if self.directions.contains(&Offset::ZERO) {
            return Err(config("loss directions must be non-zero"));
        }
        Ok(())
    }

    /// The pair separation R0 probed by the fit: the first direction.
    pub fn pair_offset(&self) -> Offset {
        self.directions[0]
    }

    pub fn roi(&self) -> Roi {
        Roi::centered(self.width, self.height, self.roi_size)
    }
}

/// Applied loss events, summed over shots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub pairs: u64,
    pub triples: u64,
    pub singles: u64,
}

impl EventCounts {
    fn add(self, o: EventCounts) -> EventCounts {
        EventCounts {
            pairs: self.pairs + o.pairs,
            triples: self.triples + o.triples,
            singles: self.singles + o.singles,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub images: ImageSet,
    pub events: EventCounts,
}

fn shot(cfg: &SampleConfig, index: u64) -> (LatticeImage, EventCounts) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let (w, h) = (cfg.width as i64, cfg.height as i64);
    let mut occ = vec![0u8; cfg.width * cfg.height];
    for o in occ.iter_mut() {
        *o = (rng.random::<f64>() < cfg.filling) as u8;
    }
    let at = |x: i64, y: i64| -> Option<usize> {
        (x >= 0 && x < w && y >= 0 && y < h).then(|| (y * w + x) as usize)
    };
    let mut events = EventCounts::default();

    // Collinear run of `len` sites starting at (x, y) along d; lost together
    // with probability p if all are occupied.
    let sweep = |occ: &mut [u8], rng: &mut ChaCha8Rng, len: i64, p: f64| -> u64 {
        let mut applied = 0;
        for d in &cfg.directions {
            for y in 0..h {
                for x in 0..w {
                    let u = rng.random::<f64>();
                    let mut sites = [0usize; 3];
                    let mut inside = true;
                    for k in 0..len {
                        match at(x + k * d.dx as i64, y + k * d.dy as i64) {
                            Some(s) => sites[k as usize] = s,
                            None => inside = false,
                        }
                    }
                    let run = &sites[..len as usize];
                    if inside && u < p && run.iter().all(|&s| occ[s] == 1) {
                        run.iter().for_each(|&s| occ[s] = 0);
                        applied += 1;
                    }
                }
            }
        }
        applied
    };
    events.triples = sweep(&mut occ, &mut rng, 3, cfg.p3);
    events.pairs = sweep(&mut occ, &mut rng, 2, cfg.p2);
    for o in occ.iter_mut() {
        let u = rng.random::<f64>();
        if *o == 1 && u < cfg.p_bg {
            *o = 0;
            events.singles += 1;
        }
    }
    let image = LatticeImage::new(cfg.width, cfg.height, occ).expect("sampler builds binary images");
    (image, events)
}

/// Generates the shots described by `cfg` together with their event counts.
pub fn generate(cfg: &SampleConfig) -> Result<Sample> {
    cfg.validate()?;
    let indices: Vec<u64> = (0..cfg.n_shots as u64).collect();
    let shots = par_map(&indices, |&i| shot(cfg, i));
    let events = shots.iter().fold(EventCounts::default(), |acc, (_, e)| acc.add(*e));
    let images = ImageSet::new(shots.into_iter().map(|(im, _)| im).collect(), cfg.roi())?;
    Ok(Sample { images, events })
}

pub fn generate_images(cfg: &SampleConfig) -> Result<ImageSet> {
    generate(cfg).map(|s| s.images)
}

/// Pair correlator at R0 and triple correlator G3_R0(−R0) of a set.
pub fn signature(set: &ImageSet, r0: Offset) -> Result<(CorrResult, CorrResult)> {
    Ok((g2(set, r0)?, g3(set, r0, -r0)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum EventRatio {
    /// Applied pair events per applied triple event.
    Finite(f64),
    /// No triple events: three-atom loss is statistically absent.
    Large,
}

impl EventRatio {
    pub fn from_counts(e: EventCounts) -> Self {
        if e.triples == 0 {
            EventRatio::Large
        } else {
            EventRatio::Finite(e.pairs as f64 / e.triples as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            EventRatio::Finite(r) => Some(r),
            EventRatio::Large => None,
        }
    }
}

impl std::fmt::Display for EventRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EventRatio::Finite(r) => write!(f, "{r:.2}:1"),
            EventRatio::Large => write!(f, "large"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioFit {
    pub p2: f64,
    pub p3: f64,
    pub ratio: EventRatio,
    pub events: EventCounts,
    pub g2: CorrResult,
    pub g3: CorrResult,
    /// Relative residual, see [`fit_ratio`].
    pub residual: f64,
    pub converged: bool,
}

/// Tunes p2 and p3 of `template` so that the generated images reproduce
/// `target_g2` at R0 and `target_g3` at (R0, −R0).
///
/// The search alternates root finding in p2 (G2 grows with it) and in p3 (G3
/// grows with it) on a fixed seed and shot budget. The residual is the root
/// sum of squares of the misfits relative to each target's magnitude. A
/// non-positive G3 target pins p3 to zero and the ratio to `Large`.
pub fn fit_ratio(target_g2: f64, target_g3: f64, template: &SampleConfig, tolerance: f64) -> Result<RatioFit> {
    if !target_g2.is_finite() || !target_g3.is_finite() {
        return Err(domain("correlator targets must be finite"));
    }
    if target_g2 <= 0.0 {
        return Err(domain(format!("target G2 = {target_g2} cannot be produced by pair or triple loss")));
    }
    template.validate()?;
    let r0 = template.pair_offset();
    let fit_triples = target_g3 > 0.0;

    let evaluate = |p2: f64, p3: f64| -> Result<(f64, f64)> {
        let cfg = SampleConfig { p2, p3, ..template.clone() };
        pair_triple_values(&generate_images(&cfg)?, r0)
    };
    // Smallest p whose statistic reaches the target, searched from the
    // previous estimate. Both correlators turn over once losses saturate the
    // lattice, so an upward search keeps the root on the rising branch. An
    // unreachable target yields the p that came closest.
    let solve = |f: &dyn Fn(f64) -> Result<f64>, target: f64, start: f64| -> Result<f64> {
        if f(0.0)? >= target {
            return Ok(0.0);
        }
        let mut hi = start.max(1e-3);
        let mut lo;
        if f(hi)? >= target {
            // shrink towards zero until the bracket holds the root
            while hi > 1e-6 && f(0.5 * hi)? >= target {
                hi *= 0.5;
            }
            lo = if hi > 1e-6 { 0.5 * hi } else { 0.0 };
        } else {
            let mut closest = (hi, target - f(hi)?);
            loop {
                if hi >= 1.0 {
                    return Ok(closest.0);
                }
                lo = hi;
                hi = (2.0 * hi).min(1.0);
                let v = f(hi)?;
                if v >= target {
                    break;
                }
                if target - v < closest.1 {
                    closest = (hi, target - v);
                }
            }
        }
        while hi - lo > 1e-5 * hi {
            let mid = 0.5 * (lo + hi);
            if f(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    };

    let (mut p2, mut p3) = (0.0, 0.0);
    for _ in 0..12 {
        let prev = (p2, p3);
        p2 = solve(&|p| evaluate(p, p3).map(|v| v.0), target_g2, p2)?;
        if fit_triples {
            p3 = solve(&|p| evaluate(p2, p).map(|v| v.1), target_g3, p3)?;
        }
        if (p2 - prev.0).abs() <= 1e-4 * p2 && (p3 - prev.1).abs() <= 1e-4 * p3 {
            break;
        }
    }

    let cfg = SampleConfig { p2, p3, ..template.clone() };
    let sample = generate(&cfg)?;
    let (c2, c3) = signature(&sample.images, r0)?;
    let mut residual = ((c2.value - target_g2) / target_g2).powi(2);
    if fit_triples {
        residual += ((c3.value - target_g3) / target_g3).powi(2);
    }
    let residual = residual.sqrt();
    Ok(RatioFit {
        p2,
        p3,
        ratio: if fit_triples { EventRatio::from_counts(sample.events) } else { EventRatio::Large },
        events: sample.events,
        g2: c2,
        g3: c3,
        residual,
        converged: residual <= tolerance,
    })
}

/// G3_R0(−R0) of images generated with pair loss only.
///
/// Each pair event removes a neighbour that could otherwise have formed a
/// second pair with the middle site, so pair loss alone drives the triple
/// correlator negative.
pub fn pair_only_g3_background(cfg: &SampleConfig) -> Result<CorrResult> {
    if cfg.p3 != 0.0 {
        return Err(domain("pair-only background requires p3 = 0"));
    }
    let set = generate_images(cfg)?;
    let r0 = cfg.pair_offset();
    g3(&set, r0, -r0)
}
