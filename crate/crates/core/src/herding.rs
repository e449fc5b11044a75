//! Binomial-null herding indicators per stock/day and member group: the
//! herding flag h, its signed form H (+1 buy herding, -1 sell herding),
//! and the herding direction DH = corr(H, r) per stock and year.

use serde::Serialize;
use thiserror::Error;

use crate::panel::TradePanel;
use crate::stats::{self, StatsError};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Days with fewer net traders than this are skipped: below five the
/// point-mass rule can never fire (2^-4 > 0.05).
pub const MIN_TRADERS: u32 = 5;

#[derive(Debug, Error)]
pub enum HerdingError {
    #[error("binomial arguments out of range: k={k}, n={n}, p={p}")]
    OutOfRange { k: u64, n: u64, p: f64 },
    #[error("no traders on this stock/day")]
    NoTraders,
    #[error("member group is empty")]
    EmptyGroup,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// How the day-level herding flag is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HerdingTest {
    /// Flag when the binomial point mass at the observed buyer count is
    /// at most alpha. Literal rule; this is the default.
    PmfAtObserved,
    /// Flag when the two-sided binomial tail probability is at most
    /// alpha. Available for robustness studies.
    TwoSidedTail,
}

/// One scored stock/day.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HerdingDay {
    pub day: u32,
    pub n_buyers: u32,
    pub n_sellers: u32,
    /// Herding flag h.
    pub herds: bool,
    /// Signed herding H = h * sign(n_buyers - n_sellers).
    pub signed: i8,
}

/// All scored days of one stock over one year, plus the count of days
/// skipped for having fewer than `MIN_TRADERS` net traders.
#[derive(Debug, Clone)]
pub struct HerdingSeries {
    pub stock: usize,
    pub year: i32,
    pub days: Vec<HerdingDay>,
    pub skipped_days: usize,
}

/// Binomial probability mass C(n,k) p^k (1-p)^(n-k), computed in log
/// space so counts up to 10^4 stay finite.
pub fn binom_pmf(k: u64, n: u64, p: f64) -> Result<f64, HerdingError> {
    if k > n || !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(HerdingError::OutOfRange { k, n, p });
    }
    if p == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    // ln C(n,k) accumulated over the smaller tail.
    let kk = k.min(n - k);
    let mut ln_choose = 0.0f64;
    for i in 1..=kk {
        ln_choose += ((n - kk + i) as f64).ln() - (i as f64).ln();
    }
    let ln_pmf = ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln();
    Ok(ln_pmf.exp())
}

/// Score one stock/day from its buyer and seller counts.
pub fn herding_day(
    n_buyers: u32,
    n_sellers: u32,
    alpha: f64,
    test: HerdingTest,
) -> Result<HerdingDay, HerdingError> {
    let n = (n_buyers + n_sellers) as u64;
    if n == 0 {
        return Err(HerdingError::NoTraders);
    }
    let k = n_buyers as u64;
    let stat = match test {
        HerdingTest::PmfAtObserved => binom_pmf(k, n, 0.5)?,
        HerdingTest::TwoSidedTail => {
            let mut lower = 0.0;
            for i in 0..=k {
                lower += binom_pmf(i, n, 0.5)?;
            }
            let mut upper = 0.0;
            for i in k..=n {
                upper += binom_pmf(i, n, 0.5)?;
            }
            (2.0 * lower.min(upper)).min(1.0)
        }
    };
    let herds = stat <= alpha;
    let signed = if !herds {
        0
    } else {
        match n_buyers.cmp(&n_sellers) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => 0,
        }
    };
    Ok(HerdingDay {
        day: 0,
        n_buyers,
        n_sellers,
        herds,
        signed,
    })
}

/// Score every (stock, day) of one year for one member group. Members
/// with buy > sell count as buyers, sell > buy as sellers; balanced
/// members count in neither. Days with fewer than `min_traders` net
/// traders are skipped and counted.
pub fn herding_panel(
    panel: &TradePanel,
    members: &[usize],
    stocks: &[usize],
    year: i32,
    alpha: f64,
    test: HerdingTest,
    min_traders: u32,
) -> Result<Vec<HerdingSeries>, HerdingError> {
    if members.is_empty() {
        return Err(HerdingError::EmptyGroup);
    }
    let slice = match panel.year_slice(year) {
        Some(s) => s,
        None => return Ok(Vec::new()),
    };
    let mut out = Vec::with_capacity(stocks.len());
    for &stock in stocks {
        let len = slice.len();
        let mut buyers = vec![0u32; len];
        let mut sellers = vec![0u32; len];
        for &m in members {
            for o in panel.trade_obs(m, stock) {
                if o.day < slice.days.0 || o.day >= slice.days.1 {
                    continue;
                }
                let t = (o.day - slice.days.0) as usize;
                if o.buy > o.sell {
                    buyers[t] += 1;
                } else if o.sell > o.buy {
                    sellers[t] += 1;
                }
            }
        }
        let mut days = Vec::new();
        let mut skipped = 0usize;
        for t in 0..len {
            let n = buyers[t] + sellers[t];
            if n < min_traders {
                skipped += 1;
                continue;
            }
            let mut scored = herding_day(buyers[t], sellers[t], alpha, test)?;
            scored.day = slice.days.0 + t as u32;
            days.push(scored);
        }
        out.push(HerdingSeries {
            stock,
            year,
            days,
            skipped_days: skipped,
        });
    }
    Ok(out)
}

/// Herding direction DH: Pearson correlation of the signed herding
/// series with the same-day returns.
pub fn herding_direction(signed: &[i8], returns: &[f64]) -> Result<f64, HerdingError> {
    let h: Vec<f64> = signed.iter().map(|&v| v as f64).collect();
    stats::pearson(&h, returns).map_err(HerdingError::from)
}

/// DH for one scored series, pairing each kept day with its return.
/// The first calendar day carries no return and is dropped.
pub fn series_direction(panel: &TradePanel, series: &HerdingSeries) -> Result<f64, HerdingError> {
    let returns = panel.returns(series.stock);
    let mut hs = Vec::with_capacity(series.days.len());
    let mut rs = Vec::with_capacity(series.days.len());
    for d in &series.days {
        if d.day == 0 {
            continue;
        }
        hs.push(d.signed);
        rs.push(returns[d.day as usize]);
    }
    herding_direction(&hs, &rs)
}
