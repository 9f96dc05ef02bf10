//! Blackout statistics over simulated years: EENS per cause, complementary
//! cumulative blackout frequencies and their Poisson confidence bands.

use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::fsm::OutageCause;

/// One blackout: the interval during which some demand was not served.
#[derive(Debug, Clone, PartialEq)]
pub struct BlackoutRecord {
    /// Replication (year) index, starting at 1.
    pub year: u64,
    pub start_h: f64,
    pub end_h: f64,
    /// Unserved energy per cause, MWh, indexed by [`OutageCause::index`].
    pub energy_by_cause: [f64; 3],
    pub max_unserved_mw: f64,
    /// Still open at the end of the year and cut there.
    pub truncated: bool,
}

impl BlackoutRecord {
    pub fn energy(&self) -> f64 {
        self.energy_by_cause.iter().sum()
    }

    pub fn energy_of(&self, cause: OutageCause) -> f64 {
        self.energy_by_cause[cause.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeMetric {
    /// Unserved energy, MWh.
    Energy,
    /// Largest unserved demand during the event, MW.
    MaxDemand,
}

impl SizeMetric {
    pub fn size(self, r: &BlackoutRecord) -> f64 {
        match self {
            SizeMetric::Energy => r.energy(),
            SizeMetric::MaxDemand => r.max_unserved_mw,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SizeMetric::Energy => "energy",
            SizeMetric::MaxDemand => "max-demand",
        }
    }
}

impl std::str::FromStr for SizeMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(SizeMetric::Energy),
            "max-demand" => Ok(SizeMetric::MaxDemand),
            other => Err(Error::Parameter(format!("unknown size metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyCurve {
    pub metric: SizeMetric,
    pub confidence: f64,
    pub thresholds: Vec<f64>,
    /// Events per year larger than each threshold.
    pub fc: Vec<f64>,
    /// Number of such events over all years.
    pub counts: Vec<u64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Complementary cumulative frequency: for each threshold `C`, events
/// strictly larger than `C` divided by the number of years, with a Poisson
/// confidence band at level `confidence`.
pub fn frequency_curve(
    records: &[BlackoutRecord],
    n_years: u64,
    thresholds: &[f64],
    metric: SizeMetric,
    confidence: f64,
) -> Result<FrequencyCurve> {
    if n_years == 0 {
        return Err(Error::Parameter("frequency curve needs at least one year".into()));
    }
    let mut sizes: Vec<f64> = records.iter().map(|r| metric.size(r)).collect();
    sizes.sort_by(f64::total_cmp);
    let n = n_years as f64;
    let mut curve = FrequencyCurve {
        metric,
        confidence,
        thresholds: thresholds.to_vec(),
        fc: Vec::with_capacity(thresholds.len()),
        counts: Vec::with_capacity(thresholds.len()),
        lower: Vec::with_capacity(thresholds.len()),
        upper: Vec::with_capacity(thresholds.len()),
    };
    for &c in thresholds {
        let above = (sizes.len() - sizes.partition_point(|&s| s <= c)) as u64;
        let (lo, hi) = poisson_confidence_interval(above, n_years, confidence)?;
        curve.counts.push(above);
        curve.fc.push(above as f64 / n);
        curve.lower.push(lo);
        curve.upper.push(hi);
    }
    Ok(curve)
}

/// Chi-square distribution function with `dof` degrees of freedom.
pub fn chi_square_cdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(dof / 2.0, x / 2.0)
    }
}

/// Quantile of the chi-square distribution, found by bisection on a
/// bracket grown until it encloses `p`.
pub fn chi_square_quantile(p: f64, dof: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(dof > 0.0) {
        return Err(Error::Parameter(format!("chi-square quantile needs 0 < p < 1 and dof > 0, got p={p}, dof={dof}")));
    }
    let mut hi = dof + 10.0 * (2.0 * dof).sqrt() + 10.0;
    while chi_square_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi_square_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Two-sided interval for a Poisson rate per year from `total` events in
/// `n_years` years: lower `chi2(2 total; a/2) / 2N`, upper
/// `chi2(2 (total + 1); 1 - a/2) / 2N` with `a = 1 - confidence`. No events
/// gives a lower bound of zero.
pub fn poisson_confidence_interval(total: u64, n_years: u64, confidence: f64) -> Result<(f64, f64)> {
    if n_years == 0 {
        return Err(Error::Parameter("confidence interval needs at least one year".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Parameter(format!("confidence must be in (0, 1), got {confidence}")));
    }
    let alpha = 1.0 - confidence;
    let two_n = 2.0 * n_years as f64;
    let lower = if total == 0 { 0.0 } else { chi_square_quantile(alpha / 2.0, 2.0 * total as f64)? / two_n };
    let upper = chi_square_quantile(1.0 - alpha / 2.0, 2.0 * (total as f64 + 1.0))? / two_n;
    Ok((lower, upper))
}

/// Expected energy not supplied per cause, MWh per year.
pub fn eens_by_cause(records: &[BlackoutRecord], n_years: u64) -> Result<[f64; 3]> {
    if n_years == 0 {
        return Err(Error::Parameter("EENS needs at least one year".into()));
    }
    let mut out = [0.0; 3];
    for r in records {
        for (o, e) in out.iter_mut().zip(r.energy_by_cause) {
            *o += e;
        }
    }
    Ok(out.map(|e| e / n_years as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauseHistogram {
    /// Bin edges; bin `k` is `[edges[k], edges[k + 1])`.
    pub edges: Vec<f64>,
    /// Counts per cause (by [`OutageCause::index`]) per bin.
    pub counts: [Vec<u64>; 3],
    /// Components outside the edges.
    pub out_of_range: u64,
}

/// Absolute frequency of blackouts by size, separately per cause: every
/// cause with positive energy in a record adds one count in that cause's
/// row, at the bin of that cause's share of the energy.
pub fn cause_histogram(records: &[BlackoutRecord], edges: &[f64]) -> Result<CauseHistogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter("histogram edges must be increasing with at least two entries".into()));
    }
    let bins = edges.len() - 1;
    let mut h = CauseHistogram { edges: edges.to_vec(), counts: [vec![0; bins], vec![0; bins], vec![0; bins]], out_of_range: 0 };
    for r in records {
        for cause in OutageCause::ALL {
            let e = r.energy_of(cause);
            if e <= 0.0 {
                continue;
            }
            let k = edges.partition_point(|&x| x <= e);
            if k == 0 || k > bins {
                h.out_of_range += 1;
            } else {
                h.counts[cause.index()][k - 1] += 1;
            }
        }
    }
    Ok(h)
}

/// Log-spaced edges, `per_decade` per power of ten, from the decade below
/// `min` to the decade above `max`.
pub fn log_edges(min: f64, max: f64, per_decade: usize) -> Vec<f64> {
    if !(min > 0.0) || !(max >= min) || per_decade == 0 {
        return Vec::new();
    }
    let lo = min.log10().floor() as i32;
    let mut hi = max.log10().ceil() as i32;
    if hi == lo {
        hi += 1;
    }
    let steps = (hi - lo) as usize * per_decade;
    (0..=steps).map(|k| 10f64.powf(lo as f64 + k as f64 / per_decade as f64)).collect()
}

/// Default thresholds: 20 per decade across the observed event sizes.
pub fn default_thresholds(records: &[BlackoutRecord], metric: SizeMetric) -> Vec<f64> {
    let sizes = records.iter().map(|r| metric.size(r)).filter(|&s| s > 0.0);
    let (min, max) = sizes.fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s), hi.max(s)));
    if max > 0.0 {
        log_edges(min, max, 20)
    } else {
        vec![1.0]
    }
}

/// Mergeable summary of many replications.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsAccumulator {
    pub n_years: u64,
    pub aborted: u64,
    pub records: Vec<BlackoutRecord>,
    pub energy_by_cause: [f64; 3],
}

impl StatsAccumulator {
    pub fn add_year(&mut self, records: &[BlackoutRecord]) {
        self.n_years += 1;
        for r in records {
            for (o, e) in self.energy_by_cause.iter_mut().zip(r.energy_by_cause) {
                *o += e;
            }
        }
        self.records.extend_from_slice(records);
    }

    pub fn add_aborted(&mut self) {
        self.aborted += 1;
    }

    /// Combines two accumulators; records are kept ordered by year and start.
    pub fn merge(mut self, other: StatsAccumulator) -> StatsAccumulator {
        self.n_years += other.n_years;
        self.aborted += other.aborted;
        for (o, e) in self.energy_by_cause.iter_mut().zip(other.energy_by_cause) {
            *o += e;
        }
        self.records.extend(other.records);
        self.records.sort_by(|a, b| a.year.cmp(&b.year).then(a.start_h.total_cmp(&b.start_h)));
        self
    }

    pub fn eens_by_cause(&self) -> Result<[f64; 3]> {
        eens_by_cause(&self.records, self.n_years)
    }

    pub fn frequency_curve(&self, thresholds: &[f64], metric: SizeMetric, confidence: f64) -> Result<FrequencyCurve> {
        frequency_curve(&self.records, self.n_years, thresholds, metric, confidence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(year: u64, energy: [f64; 3], max: f64) -> BlackoutRecord {
        BlackoutRecord { year, start_h: 0.0, end_h: 1.0, energy_by_cause: energy, max_unserved_mw: max, truncated: false }
    }

    #[test]
    fn frequency_is_mean_count_above_threshold() {
        let recs = vec![rec(1, [50.0, 0.0, 0.0], 5.0), rec(1, [20.0, 0.0, 0.0], 5.0), rec(3, [30.0, 0.0, 0.0], 5.0)];
        let c = frequency_curve(&recs, 3, &[10.0, 1000.0, 0.0, 30.0], SizeMetric::Energy, 0.9).unwrap();
        assert_eq!(c.fc, vec![1.0, 0.0, 1.0, 1.0 / 3.0]);
        assert!(frequency_curve(&recs, 0, &[1.0], SizeMetric::Energy, 0.9).is_err());
        let d = frequency_curve(&recs, 3, &[4.0, 5.0], SizeMetric::MaxDemand, 0.9).unwrap();
        assert_eq!(d.fc, vec![1.0, 0.0]);
    }

    #[test]
    fn interval_examples() {
        let (lo, hi) = poisson_confidence_interval(0, 10, 0.9).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.299573).abs() < 1e-6, "{hi}");
        let (lo, hi) = poisson_confidence_interval(5, 10, 0.9).unwrap();
        assert!((lo - 0.197015).abs() < 1e-6, "{lo}");
        assert!((hi - 1.051303).abs() < 1e-6, "{hi}");
        let (lo_big, hi_big) = poisson_confidence_interval(50_000, 100_000, 0.9).unwrap();
        assert!(hi_big - lo_big < 0.01);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for dof in [1.0, 2.0, 7.0, 50.0, 2000.0] {
            for p in [0.001, 0.05, 0.5, 0.95, 0.999] {
                let x = chi_square_quantile(p, dof).unwrap();
                assert!((chi_square_cdf(x, dof) - p).abs() < 1e-10, "dof {dof} p {p}");
            }
        }
        assert!(chi_square_quantile(1.0, 2.0).is_err());
    }

    #[test]
    fn eens_per_cause() {
        let r = rec(1, [0.0, 200.0, 0.0], 100.0);
        assert_eq!(eens_by_cause(&[r], 1).unwrap(), [0.0, 200.0, 0.0]);
        assert_eq!(eens_by_cause(&[], 5).unwrap(), [0.0; 3]);
        let mixed = rec(1, [100.0, 50.0, 0.0], 10.0);
        assert_eq!(eens_by_cause(&[mixed], 1).unwrap(), [100.0, 50.0, 0.0]);
    }

    #[test]
    fn histogram_rows_per_cause() {
        let edges = log_edges(1.0, 1e5, 1);
        assert_eq!(edges.len(), 6);
        let one = rec(1, [0.0, 1e3, 0.0], 1.0);
        let h = cause_histogram(&[one], &edges).unwrap();
        assert_eq!(h.counts[OutageCause::SystemSplitting.index()][3], 1);
        assert_eq!(h.counts.iter().flatten().sum::<u64>(), 1);
        let h = cause_histogram(&[], &edges).unwrap();
        assert!(h.counts.iter().flatten().all(|&c| c == 0));
        let a = rec(1, [2e3, 0.0, 0.0], 1.0);
        let b = rec(1, [0.0, 0.0, 3e3], 1.0);
        let h = cause_histogram(&[a, b], &edges).unwrap();
        assert_eq!(h.counts[0][3], 1);
        assert_eq!(h.counts[2][3], 1);
    }

    #[test]
    fn merge_matches_concatenation() {
        let y1 = vec![rec(1, [10.0, 0.0, 0.0], 1.0)];
        let y2 = vec![rec(2, [0.0, 30.0, 0.0], 2.0), rec(2, [5.0, 0.0, 1.0], 3.0)];
        let mut a = StatsAccumulator::default();
        a.add_year(&y1);
        let mut b = StatsAccumulator::default();
        b.add_year(&y2);
        let mut whole = StatsAccumulator::default();
        whole.add_year(&y1);
        whole.add_year(&y2);
        let ab = a.clone().merge(b.clone());
        let ba = b.merge(a);
        assert_eq!(ab, whole);
        assert_eq!(ba, whole);
        let t = [0.5, 6.0, 20.0];
        assert_eq!(
            ab.frequency_curve(&t, SizeMetric::Energy, 0.9).unwrap(),
            whole.frequency_curve(&t, SizeMetric::Energy, 0.9).unwrap()
        );
    }

    #[test]
    fn default_thresholds_span_the_data() {
        let recs = vec![rec(1, [3.0, 0.0, 0.0], 1.0), rec(1, [4.0e4, 0.0, 0.0], 1.0)];
        let t = default_thresholds(&recs, SizeMetric::Energy);
        assert_eq!(t.len(), 5 * 20 + 1);
        assert!((t[0] - 1.0).abs() < 1e-12 && (t[100] - 1e5).abs() < 1e-6);
    }
}
