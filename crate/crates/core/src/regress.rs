//! Pooled cross-sectional regression of daily excess stock returns on the
//! market excess return and the per-group signed herding series, with
//! year dummies (first year is the base).

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::panel::TradePanel;
use crate::stats::{self, Matrix, StatsError};

/// Daily risk-free rate = annual yield / 247 (trading-day convention).
pub const TRADING_DAYS_PER_YEAR: f64 = 247.0;

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("no complete rows to assemble")]
    EmptyAssembly,
    #[error("risk-free series does not cover the panel calendar")]
    MissingRiskFree,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Signed herding value per (stock index, calendar day index) for one
/// member group; days skipped by the herding rules are simply absent.
pub type HerdingByDay = HashMap<(usize, u32), i8>;

#[derive(Debug, Clone)]
pub struct AssembledDesign {
    pub design: Matrix,
    pub target: Vec<f64>,
    pub column_names: Vec<String>,
    /// Candidate (stock, day) rows dropped for a missing regressor.
    pub dropped: usize,
}

/// One row per (stock, day) with every regressor present; candidate days
/// start at the second calendar day (the first has no return). Year
/// dummies cover every panel year except the first.
pub fn assemble_design(
    panel: &TradePanel,
    stocks: &[usize],
    h_dsm: &HerdingByDay,
    h_dim: &HerdingByDay,
    h_frm: &HerdingByDay,
    market: &[f64],
    riskfree: &[f64],
) -> Result<AssembledDesign, RegressError> {
    let n_days = panel.n_days();
    assert_eq!(market.len(), n_days, "market series must align to the calendar");
    assert_eq!(riskfree.len(), n_days, "risk-free series must align to the calendar");

    let years = panel.years();
    let dummy_years: Vec<i32> = years.iter().skip(1).map(|y| y.year).collect();
    let mut day_year = vec![0i32; n_days];
    for y in years {
        for d in y.range() {
            day_year[d] = y.year;
        }
    }

    let mut column_names = vec![
        "alpha".to_string(),
        "market".to_string(),
        "h_dsm".to_string(),
        "h_dim".to_string(),
        "h_frm".to_string(),
    ];
    column_names.extend(dummy_years.iter().map(|y| format!("year_{y}")));

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut target = Vec::new();
    let mut dropped = 0usize;
    for &s in stocks {
        let returns = panel.returns(s);
        for day in 1..n_days {
            let r = returns[day];
            let mkt = market[day];
            let rf = riskfree[day];
            let key = (s, day as u32);
            let (dsm, dim, frm) = match (h_dsm.get(&key), h_dim.get(&key), h_frm.get(&key)) {
                (Some(&a), Some(&b), Some(&c)) => (a, b, c),
                _ => {
                    dropped += 1;
                    continue;
                }
            };
            if !r.is_finite() || !mkt.is_finite() || !rf.is_finite() {
                dropped += 1;
                continue;
            }
            let mut row = vec![1.0, mkt - rf, dsm as f64, dim as f64, frm as f64];
            for &y in &dummy_years {
                row.push(if day_year[day] == y { 1.0 } else { 0.0 });
            }
            rows.push(row);
            target.push(r - rf);
        }
    }
    if rows.is_empty() {
        return Err(RegressError::EmptyAssembly);
    }
    Ok(AssembledDesign {
        design: Matrix::from_rows(&rows)?,
        target,
        column_names,
        dropped,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub coef: f64,
    pub std_err: f64,
    pub t: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionResult {
    pub rows: Vec<CoefficientRow>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub n_obs: usize,
    pub dropped: usize,
}

impl RegressionResult {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.coef)
    }
}

/// OLS fit of an assembled design, formatted as a coefficient table.
pub fn run_regression(assembled: &AssembledDesign) -> Result<RegressionResult, RegressError> {
    let fit = stats::ols(&assembled.design, &assembled.target)?;
    let n = fit.n_obs;
    let p = assembled.design.ncols();
    let rows = assembled
        .column_names
        .iter()
        .enumerate()
        .map(|(j, name)| CoefficientRow {
            name: name.clone(),
            coef: fit.coefficients[j],
            std_err: fit.std_errors[j],
            t: fit.t_stats[j],
            p: fit.p_values[j],
            ci_low: fit.coefficients[j] - 1.96 * fit.std_errors[j],
            ci_high: fit.coefficients[j] + 1.96 * fit.std_errors[j],
        })
        .collect();
    let adj = if n > p {
        1.0 - (1.0 - fit.r_squared) * (n as f64 - 1.0) / (n as f64 - p as f64)
    } else {
        fit.r_squared
    };
    Ok(RegressionResult {
        rows,
        r_squared: fit.r_squared,
        adj_r_squared: adj,
        n_obs: n,
        dropped: assembled.dropped,
    })
}

/// R-squared of the market-only model (herding columns removed) and of
/// the full model, fitted on the same rows so the full fit can never be
/// worse.
pub fn r2_delta(assembled: &AssembledDesign) -> Result<(f64, f64), RegressError> {
    let full = stats::ols(&assembled.design, &assembled.target)?;
    let keep: Vec<usize> = assembled
        .column_names
        .iter()
        .enumerate()
        .filter(|(_, n)| !n.starts_with("h_"))
        .map(|(j, _)| j)
        .collect();
    let n = assembled.design.nrows();
    let mut reduced = Matrix::zeros(n, keep.len());
    for i in 0..n {
        for (jj, &j) in keep.iter().enumerate() {
            reduced.set(i, jj, assembled.design.get(i, j));
        }
    }
    let market_only = stats::ols(&reduced, &assembled.target)?;
    Ok((market_only.r_squared, full.r_squared))
}

/// Value-weighted mean return of one decile's stocks, used as the default
/// market proxy; aligned to the calendar with NaN on the first day.
pub fn value_weighted_market(panel: &TradePanel, decile: u8) -> Vec<f64> {
    let stocks = panel.stocks_in_decile(decile);
    let total_cap: f64 = stocks.iter().map(|&s| panel.stocks()[s].market_cap).sum();
    let n_days = panel.n_days();
    let mut out = vec![f64::NAN; n_days];
    if stocks.is_empty() || total_cap <= 0.0 {
        return out;
    }
    for (day, v) in out.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        for &s in &stocks {
            acc += panel.stocks()[s].market_cap * panel.returns(s)[day];
        }
        *v = acc / total_cap;
    }
    out
}

/// Convert (date, annual yield) points into a daily rate series aligned
/// to the panel calendar: rate = yield/247, forward-filled between
/// points and back-filled before the first.
pub fn resolve_riskfree(
    panel: &TradePanel,
    series: Option<&[(NaiveDate, f64)]>,
) -> Result<Vec<f64>, RegressError> {
    let n_days = panel.n_days();
    let series = match series {
        None => return Ok(vec![0.0; n_days]),
        Some(s) => s,
    };
    let mut points: Vec<(NaiveDate, f64)> = series.to_vec();
    points.sort_by_key(|p| p.0);
    if points.is_empty() || points[0].0 > *panel.calendar().last().unwrap() {
        return Err(RegressError::MissingRiskFree);
    }
    let mut out = Vec::with_capacity(n_days);
    let mut idx = 0usize;
    for &d in panel.calendar() {
        while idx + 1 < points.len() && points[idx + 1].0 <= d {
            idx += 1;
        }
        out.push(points[idx].1 / TRADING_DAYS_PER_YEAR);
    }
    Ok(out)
}
