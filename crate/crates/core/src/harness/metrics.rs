use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::sampler::{RunTrace, Strategy};

/// Share of runs that must have a defined estimate before a budget level
/// counts as reliable.
pub const RELIABLE_FRACTION: f64 = 0.95;

/// Estimate of one run indexed by distinct-label budget. Entry `b` is the
/// estimate after the last iteration that had used at most `b` labels;
/// budgets past the end of the run carry the final estimate forward.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetCurve {
    estimates: Vec<Option<f64>>,
}

impl BudgetCurve {
    pub fn from_trace(trace: &RunTrace) -> Self {
        let mut estimates: Vec<Option<f64>> = Vec::with_capacity(trace.final_budget() + 1);
        estimates.push(None);
        for r in &trace.records {
            while estimates.len() <= r.budget {
                let last = estimates[estimates.len() - 1];
                estimates.push(last);
            }
            estimates[r.budget] = r.estimate;
        }
        BudgetCurve { estimates }
    }

    pub fn max_budget(&self) -> usize {
        self.estimates.len() - 1
    }

    pub fn at(&self, budget: usize) -> Option<f64> {
        let b = budget.min(self.max_budget());
        self.estimates[b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub budget: usize,
    pub runs_defined: usize,
    pub fraction_defined: f64,
    /// Mean `|F̂ - F|` over runs with a defined estimate.
    pub abs_err: Option<f64>,
    /// Sample standard deviation of `F̂` over runs with a defined estimate.
    pub std_dev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    pub strategy: Strategy,
    pub true_f: f64,
    pub replications: usize,
    pub rows: Vec<MetricRow>,
}

impl MetricSeries {
    pub fn from_curves(strategy: Strategy, curves: &[BudgetCurve], true_f: f64) -> Self {
        Self::from_curves_to(strategy, curves, true_f, 0)
    }

    /// Like [`MetricSeries::from_curves`] with the budget grid extended to
    /// at least `grid_max`. Runs that stopped earlier carry their final
    /// estimate forward.
    pub fn from_curves_to(strategy: Strategy, curves: &[BudgetCurve], true_f: f64, grid_max: usize) -> Self {
        let reached = curves.iter().map(BudgetCurve::max_budget).max().unwrap_or(0);
        let max_budget = reached.max(grid_max);
        let r = curves.len();
        let rows = (1..=max_budget)
            .map(|budget| {
                let defined: Vec<f64> = curves.iter().filter_map(|c| c.at(budget)).collect();
                let n = defined.len();
                let abs_err =
                    (n > 0).then(|| defined.iter().map(|f| (f - true_f).abs()).sum::<f64>() / n as f64);
                let std_dev = (n > 1).then(|| {
                    let mean = defined.iter().sum::<f64>() / n as f64;
                    let ss: f64 = defined.iter().map(|f| (f - mean) * (f - mean)).sum();
                    (ss / (n - 1) as f64).sqrt()
                });
                MetricRow { budget, runs_defined: n, fraction_defined: n as f64 / r as f64, abs_err, std_dev }
            })
            .collect();
        MetricSeries { strategy, true_f, replications: r, rows }
    }

    pub fn from_traces(strategy: Strategy, traces: &[RunTrace], true_f: f64) -> Self {
        let curves: Vec<BudgetCurve> = traces.iter().map(BudgetCurve::from_trace).collect();
        Self::from_curves(strategy, &curves, true_f)
    }

    pub fn row(&self, budget: usize) -> Option<&MetricRow> {
        budget.checked_sub(1).and_then(|i| self.rows.get(i))
    }

    /// First budget at which at least 95% of runs have a defined estimate.
    pub fn first_reliable_budget(&self) -> Option<usize> {
        self.rows.iter().find(|r| r.fraction_defined >= RELIABLE_FRACTION).map(|r| r.budget)
    }

    /// Rows from the first reliable budget onwards.
    pub fn reliable_rows(&self) -> &[MetricRow] {
        match self.first_reliable_budget() {
            Some(b) => &self.rows[b - 1..],
            None => &[],
        }
    }

    /// Smallest reliable budget whose expected absolute error is at most
    /// `threshold`.
    pub fn first_budget_within(&self, threshold: f64) -> Option<usize> {
        self.reliable_rows().iter().find(|r| r.abs_err.is_some_and(|e| e <= threshold)).map(|r| r.budget)
    }
}

pub const METRICS_HEADER: [&str; 5] = ["budget", "runs_defined", "fraction_defined", "abs_err", "std_dev"];

/// Writes every row; undefined aggregates are left blank.
pub fn write_metrics<W: Write>(series: &MetricSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(METRICS_HEADER)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in &series.rows {
        wtr.write_record([
            r.budget.to_string(),
            r.runs_defined.to_string(),
            r.fraction_defined.to_string(),
            opt(r.abs_err),
            opt(r.std_dev),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::TraceRecord;

    fn trace(points: &[(usize, Option<f64>)]) -> RunTrace {
        RunTrace {
            strategy: Strategy::Passive,
            records: points
                .iter()
                .enumerate()
                .map(|(i, &(budget, estimate))| TraceRecord {
                    t: i + 1,
                    pair_index: 0,
                    stratum: None,
                    weight: 1.0,
                    label: false,
                    prediction: false,
                    estimate,
                    budget,
                })
                .collect(),
            final_posterior: None,
            final_instrumental: None,
        }
    }

    #[test]
    fn curve_carries_forward() {
        let c = BudgetCurve::from_trace(&trace(&[(1, None), (1, Some(0.2)), (3, Some(0.4))]));
        assert_eq!(c.at(0), None);
        assert_eq!(c.at(1), Some(0.2));
        assert_eq!(c.at(2), Some(0.2));
        assert_eq!(c.at(3), Some(0.4));
        assert_eq!(c.at(10), Some(0.4));
        assert_eq!(c.max_budget(), 3);
    }

    #[test]
    fn single_run_has_no_spread() {
        let s =
            MetricSeries::from_traces(Strategy::Passive, &[trace(&[(1, Some(0.5)), (2, Some(0.7))])], 0.6);
        assert_eq!(s.rows.len(), 2);
        assert!((s.rows[0].abs_err.unwrap() - 0.1).abs() < 1e-15);
        assert!((s.rows[1].abs_err.unwrap() - 0.1).abs() < 1e-15);
        assert!(s.rows.iter().all(|r| r.std_dev.is_none()));
    }

    #[test]
    fn aggregates_over_defined_runs() {
        let runs = [trace(&[(1, None), (2, Some(1.0))]), trace(&[(1, Some(0.0)), (2, Some(0.5))])];
        let s = MetricSeries::from_traces(Strategy::Passive, &runs, 0.5);
        assert_eq!(s.rows[0].runs_defined, 1);
        assert_eq!(s.rows[0].fraction_defined, 0.5);
        assert_eq!(s.rows[0].abs_err, Some(0.5));
        assert_eq!(s.rows[0].std_dev, None);
        assert_eq!(s.rows[1].abs_err, Some(0.25));
        assert!((s.rows[1].std_dev.unwrap() - 0.125f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.first_reliable_budget(), Some(2));
        assert_eq!(s.first_budget_within(0.3), Some(2));
        assert_eq!(s.first_budget_within(0.1), None);
    }

    #[test]
    fn runs_of_different_length_align() {
        let runs = [trace(&[(1, Some(0.5))]), trace(&[(1, Some(0.5)), (2, Some(0.5)), (3, Some(0.5))])];
        let s = MetricSeries::from_traces(Strategy::Passive, &runs, 0.5);
        assert_eq!(s.rows.len(), 3);
        assert!(s.rows.iter().all(|r| r.runs_defined == 2 && r.abs_err == Some(0.0)));
        let extended = MetricSeries::from_curves_to(
            Strategy::Passive,
            &runs.iter().map(BudgetCurve::from_trace).collect::<Vec<_>>(),
            0.5,
            10,
        );
        assert_eq!(extended.rows.len(), 10);
        assert_eq!(extended.row(10).unwrap().runs_defined, 2);
    }
}
