//! Eruption scenario sampling.
//!
//! An [`EventTable`] partitions eruptions into rectangular duration/volume
//! classes, each with an occurrence probability. Scenarios are drawn with a
//! weighted die over the classes (Vose alias method, O(1) per draw) and the
//! number of vent activations per forecast run comes from a Poisson count
//! (Knuth multiplication method).

use std::io::BufRead;
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Error, Result};

/// One eruption class: a half-open duration bin in days crossed with a
/// half-open volume bin in millions of cubic meters, plus its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct EventClass {
    pub duration_lo: f64,
    pub duration_hi: f64,
    pub volume_lo: f64,
    pub volume_hi: f64,
    pub probability: f64,
}

const CUBIC_METERS_PER_UNIT: f64 = 1e6;

impl EventClass {
    /// The class realized at its bin centers; needs no randomness.
    pub fn midpoint(&self, class_id: usize) -> EventRealization {
        EventRealization {
            duration_days: 0.5 * (self.duration_lo + self.duration_hi),
            volume_m3: 0.5 * (self.volume_lo + self.volume_hi) * CUBIC_METERS_PER_UNIT,
            class_id,
        }
    }

    /// Turns the class into concrete duration and volume values.
    ///
    /// `Midpoint` uses bin centers; `Uniform` draws both coordinates
    /// independently from the half-open bins.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        class_id: usize,
        mode: RealizationMode,
        rng: &mut R,
    ) -> EventRealization {
        match mode {
            RealizationMode::Midpoint => self.midpoint(class_id),
            RealizationMode::Uniform => EventRealization {
                duration_days: rng.random_range(self.duration_lo..self.duration_hi),
                volume_m3: rng.random_range(self.volume_lo..self.volume_hi)
                    * CUBIC_METERS_PER_UNIT,
                class_id,
            },
        }
    }
}

/// How to turn a sampled class into concrete duration/volume values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealizationMode {
    Midpoint,
    Uniform,
}

/// A concrete eruption: duration in days, volume in cubic meters, and the
/// class it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRealization {
    pub duration_days: f64,
    pub volume_m3: f64,
    pub class_id: usize,
}

/// Validated set of eruption classes.
///
/// Invariants: every bin is non-empty (`lo < hi`), probabilities are in
/// (0, 1], classes do not overlap in the duration x volume plane, and the
/// probabilities sum to 1 within 2e-3.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    classes: Vec<EventClass>,
}

/// The bundled default table: 41 duration/volume classes covering eruptions
/// up to 240 days and 160 million cubic meters.
pub const BUILTIN_TABLE_CSV: &str = include_str!("../data/event_table.csv");

const TABLE_HEADER: &str = "dur_lo,dur_hi,vol_lo,vol_hi,probability";
const SUM_TOLERANCE: f64 = 2e-3;

impl EventTable {
    pub fn new(classes: Vec<EventClass>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("event table has no classes"));
        }
        for (i, c) in classes.iter().enumerate() {
            validate_class(c).map_err(|e| Error::invalid(format!("class {i}: {e}")))?;
        }
        for i in 0..classes.len() {
            for j in 0..i {
                if bins_overlap(&classes[j], &classes[i]) {
                    return Err(Error::invalid(format!(
                        "classes {j} and {i} overlap in the duration x volume plane"
                    )));
                }
            }
        }
        let sum: f64 = classes.iter().map(|c| c.probability).sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "table not normalized: probabilities sum to {sum}, expected 1 within {SUM_TOLERANCE}"
            )));
        }
        Ok(EventTable { classes })
    }

    /// Parses the CSV form: a `dur_lo,dur_hi,vol_lo,vol_hi,probability`
    /// header, then one class per line. Blank lines and `#` comments are
    /// skipped. Durations are days, volumes millions of cubic meters.
    pub fn from_csv_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut classes = Vec::new();
        let mut saw_header = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !saw_header {
                if !trimmed.eq_ignore_ascii_case(TABLE_HEADER) {
                    return Err(Error::parse(
                        lineno,
                        format!("expected header '{TABLE_HEADER}', got '{trimmed}'"),
                    ));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::parse(
                    lineno,
                    format!("expected 5 comma-separated fields, got {}", fields.len()),
                ));
            }
            let mut nums = [0.0_f64; 5];
            for (slot, field) in nums.iter_mut().zip(&fields) {
                *slot = field
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("invalid number '{field}'")))?;
            }
            let class = EventClass {
                duration_lo: nums[0],
                duration_hi: nums[1],
                volume_lo: nums[2],
                volume_hi: nums[3],
                probability: nums[4],
            };
            validate_class(&class).map_err(|e| Error::parse(lineno, e.to_string()))?;
            classes.push(class);
        }
        if !saw_header {
            return Err(Error::parse(1, format!("expected header '{TABLE_HEADER}'")));
        }
        EventTable::new(classes)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::from_csv_reader(text.as_bytes())
    }

    /// The bundled default table, parsed once.
    pub fn builtin() -> &'static EventTable {
        static TABLE: OnceLock<EventTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            EventTable::from_csv_str(BUILTIN_TABLE_CSV).expect("bundled event table is valid")
        })
    }

    pub fn classes(&self) -> &[EventClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.classes.iter().map(|c| c.probability).sum()
    }
}

impl std::ops::Index<usize> for EventTable {
    type Output = EventClass;

    fn index(&self, i: usize) -> &EventClass {
        &self.classes[i]
    }
}

fn validate_class(c: &EventClass) -> Result<()> {
    let all = [c.duration_lo, c.duration_hi, c.volume_lo, c.volume_hi, c.probability];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite field"));
    }
    if c.duration_lo < 0.0 || c.duration_lo >= c.duration_hi {
        return Err(Error::invalid(format!(
            "duration bin ({}, {}) is empty or negative",
            c.duration_lo, c.duration_hi
        )));
    }
    if c.volume_lo < 0.0 || c.volume_lo >= c.volume_hi {
        return Err(Error::invalid(format!(
            "volume bin ({}, {}) is empty or negative",
            c.volume_lo, c.volume_hi
        )));
    }
    if !(c.probability > 0.0 && c.probability <= 1.0) {
        return Err(Error::invalid(format!(
            "probability {} outside (0, 1]",
            c.probability
        )));
    }
    Ok(())
}

fn bins_overlap(a: &EventClass, b: &EventClass) -> bool {
    a.duration_lo < b.duration_hi
        && b.duration_lo < a.duration_hi
        && a.volume_lo < b.volume_hi
        && b.volume_lo < a.volume_hi
}

/// Vose alias table: O(n) construction, O(1) sampling, exact in the sense
/// that class i is drawn with probability w[i] / sum(w).
///
/// Weights are normalized internally, so scaling every weight by the same
/// factor yields an equivalent table.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("alias table needs at least one weight"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("alias weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("alias weights sum to zero"));
        }

        let n = weights.len();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / sum).collect();
        let mut prob = vec![1.0_f64; n];
        let mut alias: Vec<usize> = (0..n).collect();

        let mut small: Vec<usize> = Vec::with_capacity(n);
        let mut large: Vec<usize> = Vec::with_capacity(n);
        for (i, s) in scaled.iter().enumerate() {
            if *s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }

        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Entries left in either stack have scaled mass 1 up to rounding.
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Draws one index: a fair die picks a column, a biased coin picks
    /// between the column and its alias.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Weighted die over the classes of an [`EventTable`].
#[derive(Debug, Clone)]
pub struct EventSampler<'a> {
    table: &'a EventTable,
    alias: AliasTable,
}

impl<'a> EventSampler<'a> {
    pub fn new(table: &'a EventTable) -> Result<Self> {
        let weights: Vec<f64> = table.classes().iter().map(|c| c.probability).collect();
        Ok(EventSampler {
            table,
            alias: AliasTable::new(&weights)?,
        })
    }

    pub fn table(&self) -> &'a EventTable {
        self.table
    }

    /// Draws a class id.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    /// Draws a class and realizes it in one step.
    pub fn sample_event<R: Rng + ?Sized>(
        &self,
        mode: RealizationMode,
        rng: &mut R,
    ) -> EventRealization {
        let id = self.sample(rng);
        self.table[id].realize(id, mode, rng)
    }
}

/// Poisson draw by Knuth's multiplication method: multiply uniforms until
/// the product drops below e^-mean. Runtime is O(mean); intended for the
/// small means of activation counts.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::invalid(format!(
            "poisson mean must be finite and non-negative, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let limit = (-mean).exp();
    let mut k = 0u64;
    let mut product = 1.0_f64;
    loop {
        product *= rng.random::<f64>();
        if product <= limit {
            return Ok(k);
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn toy_table() -> EventTable {
        EventTable::from_csv_str(
            "dur_lo,dur_hi,vol_lo,vol_hi,probability\n0,1,0,1,0.75\n1,2,0,1,0.25\n",
        )
        .unwrap()
    }

    #[test]
    fn builtin_has_41_classes_and_documented_sum() {
        let t = EventTable::builtin();
        assert_eq!(t.len(), 41);
        assert!((t.total_probability() - 1.00002).abs() <= 1e-5);
        let first = &t[0];
        assert_eq!(
            (first.duration_lo, first.duration_hi, first.volume_lo, first.volume_hi),
            (0.0, 15.0, 0.0, 32.0)
        );
        assert_eq!(first.probability, 0.24255);
    }

    #[test]
    fn unnormalized_table_rejected() {
        let err = EventTable::from_csv_str(
            "dur_lo,dur_hi,vol_lo,vol_hi,probability\n0,1,0,1,0.6\n1,2,0,1,0.5\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("table not normalized"), "got: {err}");
    }

    #[test]
    fn overlapping_classes_rejected() {
        let err = EventTable::from_csv_str(
            "dur_lo,dur_hi,vol_lo,vol_hi,probability\n0,2,0,1,0.5\n1,3,0.5,2,0.5\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("classes 0 and 1 overlap"), "got: {err}");
    }

    #[test]
    fn touching_bins_do_not_overlap() {
        // Shared edges (hi == lo) are fine; bins are half-open.
        assert!(EventTable::from_csv_str(
            "dur_lo,dur_hi,vol_lo,vol_hi,probability\n0,1,0,1,0.5\n1,2,0,1,0.3\n0,1,1,2,0.2\n",
        )
        .is_ok());
    }

    #[test]
    fn empty_bin_rejected_with_line() {
        let err = EventTable::from_csv_str(
            "dur_lo,dur_hi,vol_lo,vol_hi,probability\n0,1,0,1,0.5\n2,2,0,1,0.5\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "got: {msg}");
        assert!(msg.contains("duration bin"), "got: {msg}");
    }

    #[test]
    fn bad_field_count_reports_line() {
        let err = EventTable::from_csv_str(
            "dur_lo,dur_hi,vol_lo,vol_hi,probability\n0,1,0,1\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("line 2"), "got: {err}");
    }

    #[test]
    fn single_class_table_always_samples_it() {
        let t = EventTable::from_csv_str("dur_lo,dur_hi,vol_lo,vol_hi,probability\n0,1,0,1,1\n")
            .unwrap();
        let s = EventSampler::new(&t).unwrap();
        let mut r = rng(7);
        for _ in 0..100 {
            assert_eq!(s.sample(&mut r), 0);
        }
    }

    #[test]
    fn sampling_frequencies_match_weights() {
        let t = toy_table();
        let s = EventSampler::new(&t).unwrap();
        let mut r = rng(42);
        let n = 1_000_000;
        let mut count0 = 0usize;
        for _ in 0..n {
            if s.sample(&mut r) == 0 {
                count0 += 1;
            }
        }
        let freq = count0 as f64 / n as f64;
        assert!((freq - 0.75).abs() < 5e-3, "freq {freq}");
    }

    #[test]
    fn builtin_first_class_frequency() {
        let s = EventSampler::new(EventTable::builtin()).unwrap();
        let mut r = rng(1);
        let n = 1_000_000;
        let expected = 0.24255 / EventTable::builtin().total_probability();
        let hits = (0..n).filter(|_| s.sample(&mut r) == 0).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - expected).abs() < 2e-3, "freq {freq} vs {expected}");
    }

    /// Independent route for comparison: linear CDF inversion.
    fn cdf_sample<R: Rng>(cumulative: &[f64], rng: &mut R) -> usize {
        let total = *cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        cumulative.iter().position(|c| u < *c).unwrap_or(cumulative.len() - 1)
    }

    #[test]
    fn alias_agrees_with_cdf_inversion() {
        let t = EventTable::builtin();
        let weights: Vec<f64> = t.classes().iter().map(|c| c.probability).collect();
        let cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();

        let alias = AliasTable::new(&weights).unwrap();
        let n = 1_000_000;
        let mut ha = vec![0u32; t.len()];
        let mut hc = vec![0u32; t.len()];
        let mut ra = rng(11);
        let mut rc = rng(12);
        for _ in 0..n {
            ha[alias.sample(&mut ra)] += 1;
            hc[cdf_sample(&cumulative, &mut rc)] += 1;
        }
        let tv: f64 = ha
            .iter()
            .zip(&hc)
            .map(|(a, c)| ((*a as f64 - *c as f64) / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn alias_table_is_scale_invariant() {
        let a = AliasTable::new(&[0.75, 0.25]).unwrap();
        let b = AliasTable::new(&[7.5, 2.5]).unwrap();
        let mut ra = rng(3);
        let mut rb = rng(3);
        for _ in 0..1000 {
            assert_eq!(a.sample(&mut ra), b.sample(&mut rb));
        }
    }

    #[test]
    fn alias_rejects_bad_weights() {
        assert!(AliasTable::new(&[]).is_err());
        assert!(AliasTable::new(&[0.0, 0.0]).is_err());
        assert!(AliasTable::new(&[1.0, -0.5]).is_err());
        assert!(AliasTable::new(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn poisson_zero_mean_is_always_zero() {
        let mut r = rng(5);
        for _ in 0..100 {
            assert_eq!(sample_poisson(0.0, &mut r).unwrap(), 0);
        }
    }

    #[test]
    fn poisson_rejects_negative_mean() {
        assert!(sample_poisson(-1.0, &mut rng(5)).is_err());
        assert!(sample_poisson(f64::NAN, &mut rng(5)).is_err());
    }

    #[test]
    fn poisson_moments_match() {
        let mut r = rng(99);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let k = sample_poisson(13.0, &mut r).unwrap() as f64;
            sum += k;
            sumsq += k * k;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((mean - 13.0).abs() < 0.05, "mean {mean}");
        assert!((var - 13.0).abs() < 0.3, "var {var}");
    }

    #[test]
    fn poisson_zero_count_rate_matches() {
        // P(N = 0) for mean 7 is e^-7, about 9.1e-4.
        let mut r = rng(17);
        let n = 1_000_000;
        let zeros = (0..n)
            .filter(|_| sample_poisson(7.0, &mut r).unwrap() == 0)
            .count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - (-7.0f64).exp()).abs() < 3e-4, "freq {freq}");
    }

    #[test]
    fn midpoint_realization_uses_bin_centers() {
        let t = EventTable::builtin();
        let mut r = rng(0);
        let ev = t[0].realize(0, RealizationMode::Midpoint, &mut r);
        assert_eq!(ev.duration_days, 7.5);
        assert_eq!(ev.volume_m3, 16.0e6);
        assert_eq!(ev.class_id, 0);
        let last = t.len() - 1;
        let ev = t[last].realize(last, RealizationMode::Midpoint, &mut r);
        assert_eq!(ev.duration_days, 225.0);
        assert_eq!(ev.volume_m3, 144.0e6);
    }

    #[test]
    fn uniform_realization_stays_inside_bin() {
        let t = toy_table();
        let mut r = rng(21);
        for _ in 0..10_000 {
            let ev = t[1].realize(1, RealizationMode::Uniform, &mut r);
            assert!(ev.duration_days >= 1.0 && ev.duration_days < 2.0);
            assert!(ev.volume_m3 >= 0.0 && ev.volume_m3 < 1.0e6);
        }
    }
}
