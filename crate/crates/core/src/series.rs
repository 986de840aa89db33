//! Calendar-anchored series containers shared by the whole pipeline.

use nalgebra::DMatrix;

use crate::calendar::{DateRange, Frequency, Month, Units};
use crate::error::{Error, Result};

/// A gap-free univariate series with a declared frequency and units.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    start: Month,
    frequency: Frequency,
    units: Units,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start: Month, frequency: Frequency, units: Units, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("series must hold at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("series contains a non-finite value".into()));
        }
        Ok(TimeSeries { start, frequency, units, values })
    }

    pub fn start(&self) -> Month {
        self.start
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Calendar period of index `i`.
    pub fn date_at(&self, i: usize) -> Month {
        self.start.plus(i as i32 * self.frequency.months_per_period())
    }

    /// Period of the last observation.
    pub fn end(&self) -> Month {
        self.date_at(self.len() - 1)
    }

    /// Index of the period anchored at `m`, if it falls on this series' grid.
    pub fn index_of(&self, m: Month) -> Option<usize> {
        let step = self.frequency.months_per_period();
        let diff = m.months_since(self.start);
        if diff < 0 || diff % step != 0 {
            return None;
        }
        let idx = (diff / step) as usize;
        (idx < self.len()).then_some(idx)
    }

    /// Sub-series on the closed index range `[lo, hi]`.
    pub fn slice(&self, lo: usize, hi: usize) -> Result<TimeSeries> {
        if lo > hi || hi >= self.len() {
            return Err(Error::DimensionError(format!(
                "slice [{lo}, {hi}] out of bounds for length {}",
                self.len()
            )));
        }
        TimeSeries::new(
            self.date_at(lo),
            self.frequency,
            self.units,
            self.values[lo..=hi].to_vec(),
        )
    }

    /// Same calendar, new values.
    pub fn with_values(&self, units: Units, values: Vec<f64>) -> Result<TimeSeries> {
        if values.len() != self.len() {
            return Err(Error::DimensionError(format!(
                "replacement values have length {} but series has {}",
                values.len(),
                self.len()
            )));
        }
        TimeSeries::new(self.start, self.frequency, units, values)
    }

    /// Multiply a ratio series by 100.
    pub fn to_percent(&self) -> TimeSeries {
        match self.units {
            Units::Ratio => TimeSeries {
                start: self.start,
                frequency: self.frequency,
                units: Units::Percent,
                values: self.values.iter().map(|v| v * 100.0).collect(),
            },
            _ => self.clone(),
        }
    }
}

/// Trim two same-frequency series to their common span.
pub fn align(a: &TimeSeries, b: &TimeSeries) -> Result<(TimeSeries, TimeSeries)> {
    if a.frequency() != b.frequency() {
        return Err(Error::FrequencyError(format!(
            "cannot align {} with {}",
            a.frequency(),
            b.frequency()
        )));
    }
    let step = a.frequency().months_per_period();
    let phase_a = a.start().0.rem_euclid(step);
    let phase_b = b.start().0.rem_euclid(step);
    if phase_a != phase_b {
        return Err(Error::FrequencyError(
            "series share a frequency but sit on different grids".into(),
        ));
    }
    let start = a.start().max(b.start());
    let end = a.end().min(b.end());
    if end < start {
        return Err(Error::NoOverlap(format!(
            "[{}, {}] vs [{}, {}]",
            a.start(),
            a.end(),
            b.start(),
            b.end()
        )));
    }
    let ai = a.index_of(start).expect("aligned start on grid");
    let aj = a.index_of(end).expect("aligned end on grid");
    let bi = b.index_of(start).expect("aligned start on grid");
    let bj = b.index_of(end).expect("aligned end on grid");
    Ok((a.slice(ai, aj)?, b.slice(bi, bj)?))
}

/// One row of a descriptive-statistics table. `sharpe` is `mean / std` and
/// is reported as `None` when the window has zero dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptiveRow {
    pub window: DateRange,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub sharpe: Option<f64>,
}

/// Per-window mean/median/std/Sharpe of a series.
pub fn descriptive_stats(s: &TimeSeries, windows: &[DateRange]) -> Result<Vec<DescriptiveRow>> {
    let mut rows = Vec::with_capacity(windows.len());
    for w in windows {
        let lo = s
            .index_of(clamp_to_grid_up(s, w.start))
            .filter(|_| w.start <= s.end());
        let hi_m = clamp_to_grid_down(s, w.end);
        let hi = s.index_of(hi_m);
        let (lo, hi) = match (lo, hi) {
            (Some(lo), Some(hi)) if lo <= hi => (lo, hi),
            _ => {
                return Err(Error::EmptyWindow(format!(
                    "window [{}, {}] contains no observations",
                    w.start, w.end
                )))
            }
        };
        let vals = &s.values()[lo..=hi];
        let mean = mean(vals);
        let std = sample_std(vals);
        rows.push(DescriptiveRow {
            window: *w,
            n: vals.len(),
            mean,
            median: quantile(vals, 0.5),
            std,
            sharpe: (std > 0.0).then(|| mean / std),
        });
    }
    Ok(rows)
}

fn clamp_to_grid_up(s: &TimeSeries, m: Month) -> Month {
    let step = s.frequency().months_per_period();
    let diff = m.months_since(s.start());
    if diff <= 0 {
        return s.start();
    }
    let k = (diff + step - 1) / step;
    s.start().plus(k * step)
}

fn clamp_to_grid_down(s: &TimeSeries, m: Month) -> Month {
    let step = s.frequency().months_per_period();
    let diff = m.months_since(s.start());
    if diff < 0 {
        return s.start().plus(-step); // off-grid sentinel below start
    }
    let k = diff / step;
    s.start().plus((k.min(s.len() as i32 - 1)) * step)
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (divisor n-1); zero for a single point.
pub(crate) fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile on a copy of the data (R type 7).
pub(crate) fn quantile(v: &[f64], p: f64) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// N portfolios by T months of excess returns in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    start: Month,
    names: Vec<String>,
    /// N x T, row i = portfolio i.
    returns: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(start: Month, names: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() != names.len() {
            return Err(Error::DimensionError(format!(
                "{} names but {} return rows",
                names.len(),
                returns.nrows()
            )));
        }
        if returns.nrows() < 2 || returns.ncols() < 2 {
            return Err(Error::InvalidInput(
                "a panel needs at least 2 portfolios and 2 months".into(),
            ));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("panel contains a non-finite value".into()));
        }
        Ok(ReturnPanel { start, names, returns })
    }

    pub fn start(&self) -> Month {
        self.start
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn n_portfolios(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.returns.ncols()
    }

    pub fn date_at(&self, t: usize) -> Month {
        self.start.plus(t as i32)
    }

    pub fn dates(&self) -> Vec<Month> {
        (0..self.n_periods()).map(|t| self.date_at(t)).collect()
    }

    /// Panel restricted to the closed month range `[lo, hi]`.
    pub fn window(&self, lo: usize, hi: usize) -> Result<ReturnPanel> {
        if lo > hi || hi >= self.n_periods() {
            return Err(Error::DimensionError(format!(
                "window [{lo}, {hi}] out of bounds for T={}",
                self.n_periods()
            )));
        }
        Ok(ReturnPanel {
            start: self.date_at(lo),
            names: self.names.clone(),
            returns: self.returns.columns(lo, hi - lo + 1).into_owned(),
        })
    }
}

/// Named monthly factor columns on a shared calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    start: Month,
    names: Vec<String>,
    /// T x K, column j = factor j.
    columns: DMatrix<f64>,
}

impl FactorSet {
    pub fn new(start: Month, names: Vec<String>, columns: DMatrix<f64>) -> Result<Self> {
        if columns.ncols() != names.len() {
            return Err(Error::DimensionError(format!(
                "{} names but {} factor columns",
                names.len(),
                columns.ncols()
            )));
        }
        if columns.nrows() == 0 {
            return Err(Error::InvalidInput("factor set has no rows".into()));
        }
        Ok(FactorSet { start, names, columns })
    }

    /// Assemble from monthly series, trimming to the common span.
    pub fn from_series(named: &[(&str, &TimeSeries)]) -> Result<FactorSet> {
        if named.is_empty() {
            return Err(Error::InvalidInput("no factor series supplied".into()));
        }
        for (_, s) in named {
            if s.frequency() != Frequency::Monthly {
                return Err(Error::FrequencyError("factor sets are monthly".into()));
            }
        }
        let start = named.iter().map(|(_, s)| s.start()).max().unwrap();
        let end = named.iter().map(|(_, s)| s.end()).min().unwrap();
        if end < start {
            return Err(Error::NoOverlap("factor series do not overlap".into()));
        }
        let t = (end.months_since(start) + 1) as usize;
        let mut columns = DMatrix::zeros(t, named.len());
        for (j, (_, s)) in named.iter().enumerate() {
            let off = s.index_of(start).expect("monthly grid");
            for i in 0..t {
                columns[(i, j)] = s.values()[off + i];
            }
        }
        FactorSet::new(start, named.iter().map(|(n, _)| n.to_string()).collect(), columns)
    }

    pub fn start(&self) -> Month {
        self.start
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn n_periods(&self) -> usize {
        self.columns.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.columns.ncols()
    }

    pub fn date_at(&self, t: usize) -> Month {
        self.start.plus(t as i32)
    }

    pub fn window(&self, lo: usize, hi: usize) -> Result<FactorSet> {
        if lo > hi || hi >= self.n_periods() {
            return Err(Error::DimensionError(format!(
                "window [{lo}, {hi}] out of bounds for T={}",
                self.n_periods()
            )));
        }
        Ok(FactorSet {
            start: self.date_at(lo),
            names: self.names.clone(),
            columns: self.columns.rows(lo, hi - lo + 1).into_owned(),
        })
    }
}

/// Trim a panel and a factor set to their common monthly span.
pub fn align_panel_factors(panel: &ReturnPanel, factors: &FactorSet) -> Result<(ReturnPanel, FactorSet)> {
    let start = panel.start().max(factors.start());
    let end = panel
        .date_at(panel.n_periods() - 1)
        .min(factors.date_at(factors.n_periods() - 1));
    if end < start {
        return Err(Error::NoOverlap("panel and factors do not overlap".into()));
    }
    let p_lo = start.months_since(panel.start()) as usize;
    let p_hi = end.months_since(panel.start()) as usize;
    let f_lo = start.months_since(factors.start()) as usize;
    let f_hi = end.months_since(factors.start()) as usize;
    Ok((panel.window(p_lo, p_hi)?, factors.window(f_lo, f_hi)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn monthly(start: (i32, u32), values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(Month::new(start.0, start.1), Frequency::Monthly, Units::Percent, values)
            .unwrap()
    }

    #[test]
    fn align_identical_spans_is_identity() {
        let a = monthly((1964, 1), vec![1.0, 2.0, 3.0]);
        let b = monthly((1964, 1), vec![4.0, 5.0, 6.0]);
        let (a2, b2) = align(&a, &b).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn align_trims_to_intersection() {
        // 1964-01..2018-08 vs 1974-01..2018-08 -> 536 common months.
        let a = monthly((1964, 1), vec![0.0; 656]);
        let b = monthly((1974, 1), vec![0.0; 536]);
        let (a2, b2) = align(&a, &b).unwrap();
        assert_eq!(a2.len(), 536);
        assert_eq!(b2.len(), 536);
        assert_eq!(a2.start(), Month::new(1974, 1));
        assert_eq!(a2.end(), Month::new(2018, 8));
    }

    #[test]
    fn align_rejects_frequency_mismatch() {
        let a = monthly((1964, 1), vec![1.0, 2.0]);
        let b = TimeSeries::new(
            Month::new(1964, 1),
            Frequency::Quarterly,
            Units::Percent,
            vec![1.0, 2.0],
        )
        .unwrap();
        assert!(matches!(align(&a, &b), Err(Error::FrequencyError(_))));
    }

    #[test]
    fn align_rejects_disjoint_spans() {
        let a = monthly((1964, 1), vec![1.0, 2.0]);
        let b = monthly((1970, 1), vec![1.0, 2.0]);
        assert!(matches!(align(&a, &b), Err(Error::NoOverlap(_))));
    }

    #[test]
    fn stats_constant_series() {
        let s = monthly((2000, 1), vec![3.5; 10]);
        let w = DateRange::new(Month::new(2000, 1), Month::new(2000, 10));
        let rows = descriptive_stats(&s, &[w]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean, 3.5);
        assert_eq!(rows[0].median, 3.5);
        assert_eq!(rows[0].std, 0.0);
        assert_eq!(rows[0].sharpe, None);
    }

    #[test]
    fn stats_match_hand_oracle() {
        // (1, 2, 3, 4, 10): mean 4, median 3, std sqrt(sum((x-4)^2)/4).
        let s = monthly((2000, 1), vec![1.0, 2.0, 3.0, 4.0, 10.0]);
        let w = DateRange::new(Month::new(2000, 1), Month::new(2000, 5));
        let r = &descriptive_stats(&s, &[w]).unwrap()[0];
        assert_relative_eq!(r.mean, 4.0);
        assert_relative_eq!(r.median, 3.0);
        let ss = 9.0 + 4.0 + 1.0 + 0.0 + 36.0;
        assert_relative_eq!(r.std, (ss / 4.0f64).sqrt());
        assert_relative_eq!(r.sharpe.unwrap(), 4.0 / (ss / 4.0f64).sqrt());
    }

    #[test]
    fn stats_empty_window_errors() {
        let s = monthly((2000, 1), vec![1.0, 2.0]);
        let w = DateRange::new(Month::new(1990, 1), Month::new(1990, 12));
        assert!(matches!(descriptive_stats(&s, &[w]), Err(Error::EmptyWindow(_))));
    }

    #[test]
    fn two_pass_mean_std_oracle() {
        // Streaming two-pass oracle, 1e-12 relative.
        let vals: Vec<f64> = (0..200).map(|i| (i as f64 * 0.7).sin() * 3.0 + 1.0).collect();
        let s = monthly((2000, 1), vals.clone());
        let w = DateRange::new(s.start(), s.end());
        let r = &descriptive_stats(&s, &[w]).unwrap()[0];
        let m: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert_relative_eq!(r.mean, m, max_relative = 1e-12);
        assert_relative_eq!(r.std, var.sqrt(), max_relative = 1e-12);
    }
}
