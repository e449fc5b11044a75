//! Random-matrix analysis of the member inventory-variation correlation
//! matrix per stock and year: eigenvalue spectrum against the
//! Marchenko-Pastur null, the leading-eigenvector factor series, and the
//! factor-return correlation summarized by market-cap decile.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::panel::{PanelError, TradePanel};
use crate::stats::{self, Matrix, StatsError};

pub const DEFAULT_MIN_MEMBERS: usize = 10;
pub const DEFAULT_MIN_ACTIVE_DAYS: usize = 60;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("aspect ratio Q must be positive, got {0}")]
    NonPositiveQ(f64),
    #[error("variance scale must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("only {found} members meet the activity floor (need {need})")]
    InsufficientMembers { found: usize, need: usize },
    #[error("factor or return series has no variance")]
    ZeroVariance,
    #[error("decile {decile}: only {computed} of {total} stocks computable")]
    InsufficientCoverage {
        decile: u8,
        computed: usize,
        total: usize,
    },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Marchenko-Pastur support edges for aspect ratio Q = T/N and variance
/// scale sigma^2: lambda_{min,max} = sigma^2 (1 + 1/Q -+ 2 sqrt(1/Q)).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MpBounds {
    pub q: f64,
    pub sigma2: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn mp_bounds(q: f64, sigma2: f64) -> Result<MpBounds, SpectralError> {
    if !(q > 0.0) {
        return Err(SpectralError::NonPositiveQ(q));
    }
    if !(sigma2 > 0.0) {
        return Err(SpectralError::NonPositiveSigma(sigma2));
    }
    let inv = 1.0 / q;
    let root = 2.0 * inv.sqrt();
    Ok(MpBounds {
        q,
        sigma2,
        lambda_min: sigma2 * (1.0 + inv - root),
        lambda_max: sigma2 * (1.0 + inv + root),
    })
}

/// Marchenko-Pastur eigenvalue density at `lambda`; zero outside the
/// support.
pub fn mp_density(lambda: f64, bounds: &MpBounds) -> f64 {
    if lambda <= 0.0 || lambda < bounds.lambda_min || lambda > bounds.lambda_max {
        return 0.0;
    }
    let num = ((bounds.lambda_max - lambda) * (lambda - bounds.lambda_min)).max(0.0);
    bounds.q / (2.0 * std::f64::consts::PI * bounds.sigma2) * num.sqrt() / lambda
}

/// Which series the factor projection multiplies by the eigenvector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorMode {
    /// Standardized net flows, matching the correlation matrix. Default.
    Standardized,
    /// Raw net flows (zero on inactive days).
    Raw,
}

/// Spectrum, leading-eigenvector factor and factor-return correlation of
/// one stock over one year.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub stock_id: String,
    pub year: i32,
    pub n_members: usize,
    pub n_days: usize,
    pub member_ids: Vec<String>,
    pub eigenvalues: Vec<f64>,
    pub bounds: MpBounds,
    pub leading_eigenvector: Vec<f64>,
    /// Daily factor series aligned to the year's calendar slice.
    pub factor: Vec<f64>,
    /// Non-negative by sign convention; the eigenvector orientation that
    /// achieves it is recorded in `eigenvector_flipped`.
    pub factor_return_corr: f64,
    pub eigenvector_flipped: bool,
}

pub fn spectral_report(
    panel: &TradePanel,
    stock_id: &str,
    year: i32,
    mode: FactorMode,
    min_members: usize,
    min_active_days: usize,
) -> Result<SpectralReport, SpectralError> {
    let stock = panel
        .stock_idx(stock_id)
        .ok_or_else(|| PanelError::UnknownStock(stock_id.to_string()))?;
    let slice = panel
        .year_slice(year)
        .ok_or_else(|| PanelError::UnknownReference(format!("year {year}")))?;
    let len = slice.len();

    // Standardize each member's net flow over its active days; inactive
    // days contribute zero.
    let mut member_ids = Vec::new();
    let mut z_rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_rows: Vec<Vec<f64>> = Vec::new();
    for (m, info) in panel.members().iter().enumerate() {
        let obs: Vec<(usize, f64)> = panel
            .trade_obs(m, stock)
            .iter()
            .filter(|o| o.day >= slice.days.0 && o.day < slice.days.1)
            .map(|o| ((o.day - slice.days.0) as usize, o.buy - o.sell))
            .collect();
        if obs.len() < min_active_days {
            continue;
        }
        let mean: f64 = obs.iter().map(|&(_, x)| x).sum::<f64>() / obs.len() as f64;
        let var: f64 =
            obs.iter().map(|&(_, x)| (x - mean) * (x - mean)).sum::<f64>() / obs.len() as f64;
        if var <= 0.0 {
            continue;
        }
        let sd = var.sqrt();
        let mut z = vec![0.0; len];
        let mut raw = vec![0.0; len];
        for &(t, x) in &obs {
            z[t] = (x - mean) / sd;
            raw[t] = x;
        }
        member_ids.push(info.id.clone());
        z_rows.push(z);
        raw_rows.push(raw);
    }
    let n = member_ids.len();
    if n < min_members {
        return Err(SpectralError::InsufficientMembers {
            found: n,
            need: min_members,
        });
    }

    let mut corr = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = match stats::pearson(&z_rows[i], &z_rows[j]) {
                Ok(c) => c,
                Err(StatsError::ZeroVariance) => 0.0,
                Err(e) => return Err(e.into()),
            };
            corr.set(i, j, c);
            corr.set(j, i, c);
        }
    }
    let (eigenvalues, vectors) = stats::symmetric_eigen(&corr)?;
    let mut leading: Vec<f64> = (0..n).map(|i| vectors.get(i, 0)).collect();

    let projected: &[Vec<f64>] = match mode {
        FactorMode::Standardized => &z_rows,
        FactorMode::Raw => &raw_rows,
    };
    let mut factor = vec![0.0; len];
    for (i, series) in projected.iter().enumerate() {
        for t in 0..len {
            factor[t] += series[t] * leading[i];
        }
    }

    let returns = panel.returns(stock);
    let range = panel.return_range(slice);
    let fs: Vec<f64> = range
        .clone()
        .map(|d| factor[d - slice.days.0 as usize])
        .collect();
    let rs: Vec<f64> = range.map(|d| returns[d]).collect();
    let mut corr_fr = match stats::pearson(&fs, &rs) {
        Ok(c) => c,
        Err(StatsError::ZeroVariance) => return Err(SpectralError::ZeroVariance),
        Err(e) => return Err(e.into()),
    };
    let mut flipped = false;
    if corr_fr < 0.0 {
        corr_fr = -corr_fr;
        flipped = true;
        for v in leading.iter_mut() {
            *v = -*v;
        }
        for v in factor.iter_mut() {
            *v = -*v;
        }
    }

    Ok(SpectralReport {
        stock_id: stock_id.to_string(),
        year,
        n_members: n,
        n_days: len,
        member_ids,
        eigenvalues,
        bounds: mp_bounds(len as f64 / n as f64, 1.0)?,
        leading_eigenvector: leading,
        factor,
        factor_return_corr: corr_fr,
        eigenvector_flipped: flipped,
    })
}

/// Per-decile averages of the leading eigenvalue and |factor-return
/// correlation| over the decile's stocks for one year.
#[derive(Debug, Clone, Serialize)]
pub struct DecileSpectralSummary {
    pub decile: u8,
    pub year: i32,
    pub n_stocks_used: usize,
    pub n_stocks_total: usize,
    pub mean_lambda1: f64,
    pub mean_abs_factor_return_corr: f64,
}

pub fn decile_spectral_summary(
    panel: &TradePanel,
    year: i32,
    mode: FactorMode,
    decile_filter: Option<u8>,
    min_members: usize,
    min_active_days: usize,
) -> Result<Vec<DecileSpectralSummary>, SpectralError> {
    let mut out = Vec::new();
    for decile in 1..=10u8 {
        if decile_filter.is_some_and(|d| d != decile) {
            continue;
        }
        let stocks = panel.stocks_in_decile(decile);
        if stocks.is_empty() {
            continue;
        }
        let reports: Vec<Option<SpectralReport>> = stocks
            .par_iter()
            .map(|&s| {
                spectral_report(
                    panel,
                    &panel.stocks()[s].id,
                    year,
                    mode,
                    min_members,
                    min_active_days,
                )
                .ok()
            })
            .collect();
        let used: Vec<&SpectralReport> = reports.iter().flatten().collect();
        if used.len() * 2 < stocks.len() {
            return Err(SpectralError::InsufficientCoverage {
                decile,
                computed: used.len(),
                total: stocks.len(),
            });
        }
        let mean_lambda1 =
            used.iter().map(|r| r.eigenvalues[0]).sum::<f64>() / used.len() as f64;
        let mean_corr =
            used.iter().map(|r| r.factor_return_corr).sum::<f64>() / used.len() as f64;
        out.push(DecileSpectralSummary {
            decile,
            year,
            n_stocks_used: used.len(),
            n_stocks_total: stocks.len(),
            mean_lambda1,
            mean_abs_factor_return_corr: mean_corr,
        });
    }
    Ok(out)
}
