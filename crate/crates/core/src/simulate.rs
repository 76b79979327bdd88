//! Photon arrival simulation, dead-time culling, thinning and binning.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::scene::{BinGrid, SceneModel};

/// Deterministic generator for a `(seed, stream)` pair. Streams keep the
/// arrival, thinning and background draws of one trial independent.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const STREAM_ARRIVALS: u64 = 0;
pub(crate) const STREAM_THINNING: u64 = 1;
pub(crate) const STREAM_BACKGROUND: u64 = 2;
pub(crate) const STREAM_DELAY: u64 = 3;

/// Strictly increasing absolute photon times over `n_r` illumination periods.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    times: Vec<f64>,
    n_periods: u64,
    period: f64,
}

impl EventSequence {
    /// Wraps a list of times, checking order and range.
    pub fn new(times: Vec<f64>, n_periods: u64, period: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "period must be positive, got {period}"
            )));
        }
        let end = n_periods as f64 * period;
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "event times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
            if first < 0.0 || last >= end {
                return Err(Error::InvalidArgument(format!(
                    "event times must lie in [0, {end})"
                )));
            }
        }
        Ok(EventSequence {
            times,
            n_periods,
            period,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_periods(&self) -> u64 {
        self.n_periods
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// One timestamp per line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for t in &self.times {
            writeln!(w, "{t}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, n_periods: u64, period: f64) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut times = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let t: f64 = line.parse().map_err(|_| Error::Parse {
                path: path.into(),
                msg: format!("line {}: not a number: {line:?}", i + 1),
            })?;
            times.push(t);
        }
        Self::new(times, n_periods, period)
    }

    /// Raw little-endian f64 records.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for t in &self.times {
            w.write_all(&t.to_le_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path, n_periods: u64, period: f64) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Parse {
                path: path.into(),
                msg: format!("length {} is not a multiple of 8 bytes", bytes.len()),
            });
        }
        let times = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::new(times, n_periods, period)
    }
}

/// Draws one realization of the periodic inhomogeneous Poisson arrival
/// process over `[0, n_r · t_r)`.
///
/// Per period the signal and background counts are independent Poisson
/// draws; signal photons are placed at `τ + σZ` wrapped into the period and
/// background photons uniformly.
pub fn sample_arrivals(model: &SceneModel, n_periods: u64, seed: u64) -> Result<EventSequence> {
    sample_arrivals_on(model, n_periods, seed, STREAM_ARRIVALS)
}

pub(crate) fn sample_arrivals_on(
    model: &SceneModel,
    n_periods: u64,
    seed: u64,
    stream: u64,
) -> Result<EventSequence> {
    model.validate()?;
    if n_periods == 0 {
        return Err(Error::InvalidArgument("n_r must be at least 1".into()));
    }
    let mut rng = rng_for(seed, stream);
    let signal = (model.signal > 0.0).then(|| Poisson::new(model.signal).expect("positive mean"));
    let background =
        (model.background > 0.0).then(|| Poisson::new(model.background).expect("positive mean"));
    let pulse = Normal::new(model.tau, model.sigma).expect("positive sigma");

    let t_r = model.t_r;
    let expected = (model.total_flux() * n_periods as f64 * 1.05) as usize + 16;
    let mut times = Vec::with_capacity(expected);
    let mut period_buf: Vec<f64> = Vec::new();
    for k in 0..n_periods {
        period_buf.clear();
        let start = k as f64 * t_r;
        if let Some(d) = &signal {
            let n = d.sample(&mut rng) as usize;
            for _ in 0..n {
                let x = pulse.sample(&mut rng).rem_euclid(t_r);
                period_buf.push(x);
            }
        }
        if let Some(d) = &background {
            let n = d.sample(&mut rng) as usize;
            for _ in 0..n {
                period_buf.push(rng.random::<f64>() * t_r);
            }
        }
        period_buf.sort_by(|a, b| a.total_cmp(b));
        for &x in &period_buf {
            let t = start + x;
            // Coincident draws are measure-zero; keep the sequence strict.
            if times.last().is_none_or(|&last| t > last) && t < start + t_r {
                times.push(t);
            }
        }
    }
    Ok(EventSequence {
        times,
        n_periods,
        period: t_r,
    })
}

/// Non-paralyzable dead time: an event is kept iff it is later than the
/// last kept event plus `t_d`. The first event is always kept.
pub fn apply_dead_time(arrivals: &EventSequence, t_d: f64) -> EventSequence {
    let mut kept = Vec::with_capacity(arrivals.len());
    let mut last = f64::NEG_INFINITY;
    for &t in &arrivals.times {
        if t > last + t_d {
            kept.push(t);
            last = t;
        }
    }
    EventSequence {
        times: kept,
        n_periods: arrivals.n_periods,
        period: arrivals.period,
    }
}

/// Independent Bernoulli thinning with retention probability `keep_prob`.
pub fn thin(arrivals: &EventSequence, keep_prob: f64, seed: u64) -> Result<EventSequence> {
    if !(0.0..=1.0).contains(&keep_prob) {
        return Err(Error::InvalidArgument(format!(
            "keep probability must lie in [0, 1], got {keep_prob}"
        )));
    }
    let times = if keep_prob == 1.0 {
        arrivals.times.clone()
    } else {
        let mut rng = rng_for(seed, STREAM_THINNING);
        arrivals
            .times
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < keep_prob)
            .collect()
    };
    Ok(EventSequence {
        times,
        n_periods: arrivals.n_periods,
        period: arrivals.period,
    })
}

/// Histogram of detection phases over one period.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedHistogram {
    counts: Vec<u64>,
    grid: BinGrid,
}

impl BinnedHistogram {
    pub fn from_counts(counts: Vec<u64>, grid: BinGrid) -> Result<Self> {
        if counts.len() != grid.n_bins() {
            return Err(Error::InvalidArgument(format!(
                "{} counts for a grid of {} bins",
                counts.len(),
                grid.n_bins()
            )));
        }
        Ok(BinnedHistogram { counts, grid })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Frequencies `counts_k / Σ counts`; all zeros for an empty histogram.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        let total = total as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// Bins absolute event times by their phase `T mod t_r`.
pub fn bin_detections(events: &EventSequence, grid: &BinGrid) -> BinnedHistogram {
    let mut counts = vec![0u64; grid.n_bins()];
    for &t in &events.times {
        counts[grid.bin_of(t)] += 1;
    }
    BinnedHistogram {
        counts,
        grid: *grid,
    }
}

/// Whole periods between each detector reset and the next detection,
/// `r_i = ⌊(T_{i+1} − T_i − t_d) / t_r⌋`.
pub fn interdetection_periods(detections: &EventSequence, model: &SceneModel) -> Vec<u64> {
    detections
        .times
        .windows(2)
        .map(|w| {
            let idle = (w[1] - (w[0] + model.t_d)).max(0.0);
            (idle / model.t_r).floor() as u64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(times: &[f64]) -> EventSequence {
        EventSequence::new(times.to_vec(), 3, 100.0).unwrap()
    }

    #[test]
    fn culling_hand_trace() {
        let out = apply_dead_time(&seq(&[0.0, 10.0, 80.0, 200.0]), 75.0);
        assert_eq!(out.times(), &[0.0, 80.0, 200.0]);
    }

    #[test]
    fn zero_dead_time_and_empty_input() {
        let s = seq(&[0.0, 0.5, 1.0, 250.0]);
        assert_eq!(apply_dead_time(&s, 0.0), s);
        let empty = seq(&[]);
        assert!(apply_dead_time(&empty, 75.0).is_empty());
    }

    #[test]
    fn thinning_extremes() {
        let s = seq(&[1.0, 2.0, 3.0, 150.0]);
        assert_eq!(thin(&s, 1.0, 7).unwrap(), s);
        assert!(thin(&s, 0.0, 7).unwrap().is_empty());
        assert!(thin(&s, 1.5, 7).is_err());
    }

    #[test]
    fn binning_by_phase() {
        let m = SceneModel::new(100.0, 75.0, 2.0, 1.0, 1.0, 50.0).unwrap();
        let grid = BinGrid::for_model(&m, 100).unwrap();
        let h = bin_detections(&seq(&[0.1, 100.1, 200.1]), &grid);
        assert_eq!(h.counts()[0], 3);
        assert_eq!(h.total(), 3);
        let single = bin_detections(&seq(&[0.5]), &grid);
        assert_eq!(single.counts()[0], 1);
        let none = bin_detections(&seq(&[]), &grid);
        assert!(none.counts().iter().all(|&c| c == 0));
        assert!(none.normalized().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interdetection_hand_values() {
        let m = SceneModel::new(100.0, 75.0, 2.0, 1.0, 1.0, 50.0).unwrap();
        assert_eq!(interdetection_periods(&seq(&[0.0, 80.0]), &m), vec![0]);
        assert_eq!(interdetection_periods(&seq(&[0.0, 275.0]), &m), vec![2]);
        assert!(interdetection_periods(&seq(&[5.0]), &m).is_empty());
    }

    #[test]
    fn zero_flux_gives_no_arrivals() {
        let m = SceneModel::new(100.0, 75.0, 2.0, 0.0, 0.0, 50.0).unwrap();
        assert!(sample_arrivals(&m, 1000, 1).unwrap().is_empty());
    }

    #[test]
    fn sampling_is_seeded() {
        let m = SceneModel::new(100.0, 75.0, 2.0, 1.0, 1.0, 50.0).unwrap();
        let a = sample_arrivals(&m, 200, 42).unwrap();
        let b = sample_arrivals(&m, 200, 42).unwrap();
        let c = sample_arrivals(&m, 200, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_unordered_sequences() {
        assert!(EventSequence::new(vec![1.0, 1.0], 1, 100.0).is_err());
        assert!(EventSequence::new(vec![2.0, 1.0], 1, 100.0).is_err());
        assert!(EventSequence::new(vec![100.0], 1, 100.0).is_err());
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = seq(&[0.125, 1.0 / 3.0, 99.99, 201.5]);
        let csv = dir.path().join("t.csv");
        s.write_csv(&csv).unwrap();
        assert_eq!(EventSequence::read_csv(&csv, 3, 100.0).unwrap(), s);
        let bin = dir.path().join("t.bin");
        s.write_binary(&bin).unwrap();
        assert_eq!(EventSequence::read_binary(&bin, 3, 100.0).unwrap(), s);
    }

    fn chi_square_passes(observed: &[f64], expected: &[f64], alpha: f64) -> bool {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let stat: f64 = observed
            .iter()
            .zip(expected)
            .map(|(o, e)| (o - e) * (o - e) / e)
            .sum();
        let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
        stat < dist.inverse_cdf(1.0 - alpha)
    }

    #[test]
    fn background_phases_are_uniform() {
        let m = SceneModel::new(100.0, 75.0, 2.0, 0.0, 2.0, 50.0).unwrap();
        let a = sample_arrivals(&m, 20_000, 5).unwrap();
        let mut counts = vec![0.0; 20];
        for &t in a.times() {
            counts[((t.rem_euclid(100.0)) / 5.0) as usize] += 1.0;
        }
        let e = vec![a.len() as f64 / 20.0; 20];
        assert!(chi_square_passes(&counts, &e, 0.01));
    }

    #[test]
    fn arrival_and_thinned_counts_match_flux() {
        let m = SceneModel::new(100.0, 75.0, 2.0, 3.16, 0.562, 50.0).unwrap();
        let n = 20_000u64;
        let a = sample_arrivals(&m, n, 9).unwrap();
        let mean = 3.722 * n as f64;
        assert!((a.len() as f64 - mean).abs() < 4.0 * mean.sqrt());
        let t = thin(&a, 0.1, 9).unwrap();
        let mt = 0.1 * a.len() as f64;
        assert!((t.len() as f64 - mt).abs() < 4.0 * (mt * 0.9).sqrt());
    }

    #[test]
    fn interdetection_periods_are_geometric() {
        let m = SceneModel::new(100.0, 75.0, 2.0, 0.562, 0.562, 30.0).unwrap();
        let det = apply_dead_time(&sample_arrivals(&m, 40_000, 11).unwrap(), m.t_d);
        let r = interdetection_periods(&det, &m);
        let q = (-m.total_flux()).exp();
        let cells = 5;
        let mut obs = vec![0.0; cells];
        for &k in &r {
            obs[(k as usize).min(cells - 1)] += 1.0;
        }
        let n = r.len() as f64;
        let exp: Vec<f64> = (0..cells)
            .map(|k| {
                let p = if k + 1 < cells {
                    q.powi(k as i32) * (1.0 - q)
                } else {
                    q.powi(k as i32)
                };
                n * p
            })
            .collect();
        assert!(r.len() >= 10_000);
        assert!(chi_square_passes(&obs, &exp, 0.01));
    }

    proptest::proptest! {
        #[test]
        fn dead_time_is_idempotent_subsequence(
            gaps in proptest::collection::vec(1e-3f64..60.0, 0..60),
            t_d in 0.0f64..120.0,
        ) {
            let mut times = Vec::with_capacity(gaps.len());
            let mut t = 0.0;
            for g in gaps {
                t += g;
                times.push(t);
            }
            let n = (t / 100.0).floor() as u64 + 1;
            let s = EventSequence::new(times, n, 100.0).unwrap();
            let once = apply_dead_time(&s, t_d);
            proptest::prop_assert_eq!(&apply_dead_time(&once, t_d), &once);
            let mut it = s.times().iter();
            for &x in once.times() {
                proptest::prop_assert!(it.any(|&y| y == x));
            }
            for w in once.times().windows(2) {
                proptest::prop_assert!(w[1] - w[0] >= t_d);
            }
            if !s.is_empty() {
                proptest::prop_assert_eq!(once.times()[0], s.times()[0]);
            }
        }
    }
}
