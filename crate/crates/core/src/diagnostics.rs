//! Chain diagnostics: autocorrelation, effective sample size and
//! posterior summaries.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::runtime::{format_value, ModelValues};

/// Minimum chain length accepted by [`effective_sample_size`].
pub const MIN_ESS_LENGTH: usize = 100;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Centered chain and its sum of squares; errors on a (numerically)
/// constant chain.
fn centered(chain: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = mean(chain);
    let c: Vec<f64> = chain.iter().map(|v| v - m).collect();
    let ss: f64 = c.iter().map(|v| v * v).sum();
    let sd = (ss / chain.len() as f64).sqrt();
    if sd.is_nan() || sd <= 1e-12 * m.abs().max(1.0) {
        return Err(Error::Degenerate(format!(
            "chain has (near) zero variance: sd {sd:e} around mean {m}"
        )));
    }
    Ok((c, ss))
}

fn lag_sum(c: &[f64], k: usize) -> f64 {
    c[..c.len() - k]
        .iter()
        .zip(&c[k..])
        .map(|(a, b)| a * b)
        .sum()
}

/// Sample autocorrelations at lags `0..=max_lag`.
pub fn acf(chain: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag == 0 || chain.len() <= max_lag {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= max_lag < chain length, got max_lag {max_lag} for {} values",
            chain.len()
        )));
    }
    let (c, ss) = centered(chain)?;
    Ok((0..=max_lag).map(|k| lag_sum(&c, k) / ss).collect())
}

/// `n / (1 + 2 * sum of autocorrelations)`, with the sum truncated by
/// Geyer's initial positive sequence rule and the result capped at `n`.
pub fn effective_sample_size(chain: &[f64]) -> Result<f64> {
    let n = chain.len();
    if n < MIN_ESS_LENGTH {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_ESS_LENGTH} values for an effective sample size, got {n}"
        )));
    }
    let (c, ss) = centered(chain)?;
    let rho = |k: usize| lag_sum(&c, k) / ss;
    // tau = -1 + 2 * sum of the pair sums rho(2k) + rho(2k+1)
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    Ok((n as f64 / tau).min(n as f64))
}

/// Type 7 (linear interpolation) sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// Autocorrelations from lag 0; empty for degenerate or short chains.
    pub acf: Vec<f64>,
    /// `None` when the chain is too short or degenerate.
    pub ess: Option<f64>,
    pub ess_per_second: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub rows: usize,
    pub wall_seconds: f64,
    pub columns: Vec<ColumnSummary>,
    /// Row-major sample correlation matrix of the columns; NaN where a
    /// column has no variance.
    pub correlation: Vec<f64>,
}

/// Summaries of every column of a non-empty container.
pub fn summarize(mv: &ModelValues, wall_seconds: f64, max_lag: usize) -> Result<ChainSummary> {
    let rows = mv.rows();
    if rows == 0 {
        return Err(Error::InvalidArgument(
            "cannot summarize an empty container".into(),
        ));
    }
    let names = mv.column_names();
    let data: Vec<Vec<f64>> = names.iter().map(|n| mv.column(n)).collect::<Result<_>>()?;
    let mut columns = Vec::with_capacity(names.len());
    for (name, x) in names.iter().zip(&data) {
        let m = mean(x);
        let sd = if rows > 1 {
            (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (rows - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let lag = max_lag.min(rows.saturating_sub(1));
        let acf = if lag >= 1 {
            acf(x, lag).unwrap_or_default()
        } else {
            Vec::new()
        };
        let ess = effective_sample_size(x).ok();
        columns.push(ColumnSummary {
            name: name.clone(),
            mean: m,
            sd,
            q025: quantile(&sorted, 0.025),
            q50: quantile(&sorted, 0.5),
            q975: quantile(&sorted, 0.975),
            acf,
            ess,
            ess_per_second: ess.filter(|_| wall_seconds > 0.0).map(|e| e / wall_seconds),
        });
    }
    let k = data.len();
    let mut correlation = vec![f64::NAN; k * k];
    for i in 0..k {
        for j in 0..=i {
            let (mi, mj) = (columns[i].mean, columns[j].mean);
            let mut sij = 0.0;
            let mut sii = 0.0;
            let mut sjj = 0.0;
            for r in 0..rows {
                let (a, b) = (data[i][r] - mi, data[j][r] - mj);
                sij += a * b;
                sii += a * a;
                sjj += b * b;
            }
            let c = if sii > 0.0 && sjj > 0.0 {
                sij / (sii * sjj).sqrt()
            } else {
                f64::NAN
            };
            correlation[i * k + j] = c;
            correlation[j * k + i] = c;
        }
    }
    Ok(ChainSummary {
        rows,
        wall_seconds,
        columns,
        correlation,
    })
}

impl ChainSummary {
    pub fn column(&self, name: &str) -> Option<&ColumnSummary> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn correlation_between(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c.name == a)?;
        let j = self.columns.iter().position(|c| c.name == b)?;
        Some(self.correlation[i * self.columns.len() + j])
    }

    /// One row per column: mean, sd, quantiles, ESS and ESS per second.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "name",
            "mean",
            "sd",
            "q2.5",
            "q50",
            "q97.5",
            "ess",
            "ess_per_second",
        ])?;
        for c in &self.columns {
            let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), format_value);
            w.write_record([
                c.name.clone(),
                format_value(c.mean),
                format_value(c.sd),
                format_value(c.q025),
                format_value(c.q50),
                format_value(c.q975),
                opt(c.ess),
                opt(c.ess_per_second),
            ])?;
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }

    /// Long-format autocorrelation table: name, lag, acf.
    pub fn write_acf_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["name", "lag", "acf"])?;
        for c in &self.columns {
            for (lag, v) in c.acf.iter().enumerate() {
                w.write_record([c.name.clone(), lag.to_string(), format_value(*v)])?;
            }
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }

    /// Plain-text table for reports.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "rows: {}  wall seconds: {:.3}",
            self.rows, self.wall_seconds
        );
        let _ = writeln!(
            s,
            "{:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10}",
            "name", "mean", "sd", "2.5%", "50%", "97.5%", "acf(1)", "ess", "ess/s"
        );
        for c in &self.columns {
            let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.1}"));
            let acf1 = c
                .acf
                .get(1)
                .map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:<16} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>10} {:>10} {:>10}",
                c.name,
                c.mean,
                c.sd,
                c.q025,
                c.q50,
                c.q975,
                acf1,
                opt(c.ess),
                opt(c.ess_per_second)
            );
        }
        s
    }
}
