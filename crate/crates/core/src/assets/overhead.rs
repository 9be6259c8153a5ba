//! Customization-overhead statistics for benchmark runs.

use serde::{Deserialize, Serialize};

use crate::events::Phase;
use crate::policy::EnactmentReport;

pub const BENCH_CSV_HEADER: &str = "requestId,tenantId,phase,overheadMs,cumulativeMs,eventCount,actionCount";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchRow {
    pub request_id: String,
    pub tenant_id: String,
    pub phase: Phase,
    pub overhead_ms: f64,
    pub cumulative_ms: f64,
    pub event_count: usize,
    pub action_count: usize,
}

impl BenchRow {
    /// Appends a row for `report`, accumulating over `previous`.
    pub fn from_report(report: &EnactmentReport, tenant: &str, previous: Option<&BenchRow>) -> Self {
        BenchRow {
            request_id: report.request_id.clone(),
            tenant_id: tenant.to_string(),
            phase: report.phase,
            overhead_ms: report.overhead_ms,
            cumulative_ms: previous.map_or(0.0, |p| p.cumulative_ms) + report.overhead_ms,
            event_count: report.events.len(),
            action_count: report.action_count(),
        }
    }

    pub fn csv_line(&self) -> String {
        let phase = match self.phase {
            Phase::Configuration => "Configuration",
            Phase::Reconfiguration => "Reconfiguration",
        };
        format!(
            "{},{},{},{:.6},{:.6},{},{}",
            self.request_id, self.tenant_id, phase, self.overhead_ms, self.cumulative_ms, self.event_count, self.action_count
        )
    }

    pub fn to_csv(rows: &[BenchRow]) -> String {
        let mut out = String::from(BENCH_CSV_HEADER);
        out.push('\n');
        for r in rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares over paired samples. `r2` is 1 when `ys` is
/// constant and the fit is exact.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    LinearFit { slope, intercept, r2 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OverheadSummary {
    pub requests: usize,
    /// Fit of cumulative overhead against request count.
    pub fit: LinearFit,
    pub median_ms: f64,
    pub max_ms: f64,
    pub max_over_median: f64,
}

pub fn summarize(rows: &[BenchRow]) -> OverheadSummary {
    let xs: Vec<f64> = (1..=rows.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.cumulative_ms).collect();
    let mut per: Vec<f64> = rows.iter().map(|r| r.overhead_ms).collect();
    per.sort_by(f64::total_cmp);
    let median = match per.len() {
        0 => 0.0,
        n if n % 2 == 1 => per[n / 2],
        n => (per[n / 2 - 1] + per[n / 2]) / 2.0,
    };
    let max = per.last().copied().unwrap_or(0.0);
    OverheadSummary {
        requests: rows.len(),
        fit: linear_fit(&xs, &ys),
        median_ms: median,
        max_ms: max,
        max_over_median: if median > 0.0 { max / median } else { 0.0 },
    }
}

/// Provisions `requests` fresh tenants `bench-0001..` with `config`, one at a
/// time, after `warmup` unrecorded provisioning requests.
pub fn run_overhead_bench(
    target: &dyn super::ServiceTarget,
    config: &crate::feature_model::FeatureConfiguration,
    requests: usize,
    warmup: usize,
) -> Result<Vec<BenchRow>, super::ScenarioError> {
    let provision = |tenant: &str| {
        target.prepare_tenant(tenant)?;
        let mut cfg = config.clone();
        cfg.tenant_id = tenant.to_string();
        target.apply(tenant, &cfg)
    };
    for i in 0..warmup {
        provision(&format!("bench-warmup-{:04}", i + 1))?;
    }
    let mut rows: Vec<BenchRow> = Vec::with_capacity(requests);
    for i in 0..requests {
        let tenant = format!("bench-{:04}", i + 1);
        let report = provision(&tenant)?;
        rows.push(BenchRow::from_report(&report, &tenant, rows.last()));
    }
    Ok(rows)
}
