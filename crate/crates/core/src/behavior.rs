//! Trading-behavior measures per entity: directionality (how one-way the
//! daily flow is), trend (co-movement of net flow with same-day returns),
//! and the correlation-based classification of members into DIM / DSM /
//! FRM groups.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::panel::{Domicile, Entity, InvestorType, Obs, PanelError, TradePanel};
use crate::stats::{self, StatsError};

/// Stocks with fewer overlapping active days than this are skipped when
/// averaging per-stock measures; short overlaps are noise.
pub const MIN_OVERLAP_DAYS: usize = 30;

pub const DEFAULT_THETA: f64 = 0.2;

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("entity has no usable activity in the requested decile/year")]
    NoActivity,
    #[error("member has insufficient history for type correlations")]
    InsufficientHistory,
    #[error("theta must be in (0,1), got {0}")]
    BadTheta(f64),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MemberClass {
    Dim,
    Dsm,
    Frm,
    Excluded,
}

impl MemberClass {
    pub fn label(self) -> &'static str {
        match self {
            MemberClass::Dim => "DIM",
            MemberClass::Dsm => "DSM",
            MemberClass::Frm => "FRM",
            MemberClass::Excluded => "EXCLUDED",
        }
    }
}

/// Directionality and trend of one entity over one decile and year,
/// averaged over the same per-stock sample.
#[derive(Debug, Clone, Serialize)]
pub struct BehaviorScore {
    pub entity: String,
    pub decile: u8,
    pub year: i32,
    pub directionality: f64,
    pub trend: f64,
    pub n_stocks: usize,
}

/// Per-member correlation coordinates against the three investor types,
/// plus the assigned class.
#[derive(Debug, Clone, Serialize)]
pub struct MemberProfile {
    pub member_id: String,
    pub name: String,
    pub domicile: Domicile,
    pub corr_individual: f64,
    pub corr_institution: f64,
    pub corr_foreigner: f64,
    pub volume: f64,
    pub class: MemberClass,
}

fn entity_obs<'a>(
    panel: &'a TradePanel,
    entity: Entity<'_>,
    stock: usize,
) -> Result<&'a [Obs], BehaviorError> {
    match entity {
        Entity::Member(id) => {
            let m = panel
                .member_idx(id)
                .ok_or_else(|| PanelError::UnknownEntity(id.to_string()))?;
            Ok(panel.trade_obs(m, stock))
        }
        Entity::Investor(t) => Ok(panel.flow_obs(t, stock)),
    }
}

/// Directionality and trend of `entity` over the stocks of one decile in
/// one year. A stock enters the average when the entity has at least
/// `min_days` days there with nonzero gross amount and a defined return,
/// and its net flow is not constant over those days.
pub fn behavior_score(
    panel: &TradePanel,
    entity: Entity<'_>,
    decile: u8,
    year: i32,
    theta: f64,
    min_days: usize,
) -> Result<BehaviorScore, BehaviorError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(BehaviorError::BadTheta(theta));
    }
    let slice = panel
        .year_slice(year)
        .ok_or_else(|| PanelError::UnknownReference(format!("year {year}")))?;
    let days = panel.return_range(slice);

    let mut d_sum = 0.0;
    let mut t_sum = 0.0;
    let mut n_stocks = 0usize;
    for stock in panel.stocks_in_decile(decile) {
        let obs = entity_obs(panel, entity, stock)?;
        let returns = panel.returns(stock);
        let mut xs = Vec::new();
        let mut rs = Vec::new();
        let mut one_way = 0usize;
        for o in obs {
            let day = o.day as usize;
            let gross = o.buy + o.sell;
            if day < days.start || day >= days.end || gross <= 0.0 {
                continue;
            }
            if (o.buy - o.sell).abs() / gross >= theta {
                one_way += 1;
            }
            xs.push(o.buy - o.sell);
            rs.push(returns[day]);
        }
        if xs.len() < min_days.max(2) {
            continue;
        }
        match stats::pearson(&xs, &rs) {
            Ok(t) => {
                d_sum += one_way as f64 / xs.len() as f64;
                t_sum += t;
                n_stocks += 1;
            }
            Err(StatsError::ZeroVariance) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    if n_stocks == 0 {
        return Err(BehaviorError::NoActivity);
    }
    let entity_name = match entity {
        Entity::Member(id) => id.to_string(),
        Entity::Investor(t) => t.code().to_string(),
    };
    Ok(BehaviorScore {
        entity: entity_name,
        decile,
        year,
        directionality: d_sum / n_stocks as f64,
        trend: t_sum / n_stocks as f64,
        n_stocks,
    })
}

/// Fraction of active days the entity's flow ratio |B-S|/(B+S) reaches
/// `theta`, averaged over the decile stocks it traded. Unlike the joint
/// `behavior_score`, this needs no return data: every day with nonzero
/// gross amount counts.
pub fn directionality(
    panel: &TradePanel,
    entity: Entity<'_>,
    decile: u8,
    year: i32,
    theta: f64,
    min_days: usize,
) -> Result<f64, BehaviorError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(BehaviorError::BadTheta(theta));
    }
    let slice = panel
        .year_slice(year)
        .ok_or_else(|| PanelError::UnknownReference(format!("year {year}")))?;
    let mut d_sum = 0.0;
    let mut n_stocks = 0usize;
    for stock in panel.stocks_in_decile(decile) {
        let obs = entity_obs(panel, entity, stock)?;
        let mut active = 0usize;
        let mut one_way = 0usize;
        for o in obs {
            let gross = o.buy + o.sell;
            if o.day < slice.days.0 || o.day >= slice.days.1 || gross <= 0.0 {
                continue;
            }
            active += 1;
            if (o.buy - o.sell).abs() / gross >= theta {
                one_way += 1;
            }
        }
        if active >= min_days.max(1) {
            d_sum += one_way as f64 / active as f64;
            n_stocks += 1;
        }
    }
    if n_stocks == 0 {
        return Err(BehaviorError::NoActivity);
    }
    Ok(d_sum / n_stocks as f64)
}

/// Mean per-stock Pearson correlation between the entity's net flow and
/// same-day returns over the decile stocks it traded.
pub fn trend(
    panel: &TradePanel,
    entity: Entity<'_>,
    decile: u8,
    year: i32,
    min_days: usize,
) -> Result<f64, BehaviorError> {
    behavior_score(panel, entity, decile, year, DEFAULT_THETA, min_days).map(|b| b.trend)
}

/// Mean correlation of a member's net flow against each investor type's
/// net flow, per (decile stock, year) with at least `min_days` of overlap.
pub fn member_type_correlations(
    panel: &TradePanel,
    member_id: &str,
    decile: u8,
    min_days: usize,
) -> Result<(f64, f64, f64), BehaviorError> {
    let m = panel
        .member_idx(member_id)
        .ok_or_else(|| PanelError::UnknownEntity(member_id.to_string()))?;
    let stocks = panel.stocks_in_decile(decile);
    let mut sums = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for &stock in &stocks {
        let member_obs = panel.trade_obs(m, stock);
        if member_obs.is_empty() {
            continue;
        }
        for slice in panel.years() {
            let lo = slice.days.0;
            let hi = slice.days.1;
            let member_map: HashMap<u32, f64> = member_obs
                .iter()
                .filter(|o| o.day >= lo && o.day < hi)
                .map(|o| (o.day, o.buy - o.sell))
                .collect();
            if member_map.len() < min_days {
                continue;
            }
            for (k, t) in InvestorType::ALL.into_iter().enumerate() {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for o in panel.flow_obs(t, stock) {
                    if o.day < lo || o.day >= hi {
                        continue;
                    }
                    if let Some(&x) = member_map.get(&o.day) {
                        xs.push(x);
                        ys.push(o.buy - o.sell);
                    }
                }
                if xs.len() < min_days {
                    continue;
                }
                match stats::pearson(&xs, &ys) {
                    Ok(c) => {
                        sums[k] += c;
                        counts[k] += 1;
                    }
                    Err(StatsError::ZeroVariance) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(BehaviorError::InsufficientHistory);
    }
    Ok((
        sums[0] / counts[0] as f64,
        sums[1] / counts[1] as f64,
        sums[2] / counts[2] as f64,
    ))
}

/// Build the profile of every member against decile-`decile` stocks.
/// Members with insufficient history keep NaN correlations and are
/// classified Excluded.
pub fn build_member_profiles(
    panel: &TradePanel,
    decile: u8,
    min_days: usize,
    min_volume_ratio: f64,
) -> Vec<MemberProfile> {
    let mut profiles: Vec<MemberProfile> = panel
        .members()
        .iter()
        .map(|m| {
            let (ci, cs, cf) = member_type_correlations(panel, &m.id, decile, min_days)
                .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
            MemberProfile {
                member_id: m.id.clone(),
                name: m.name.clone(),
                domicile: m.domicile,
                corr_individual: ci,
                corr_institution: cs,
                corr_foreigner: cf,
                volume: m.volume,
                class: MemberClass::Excluded,
            }
        })
        .collect();
    classify_members(&mut profiles, min_volume_ratio);
    profiles
}

/// Assign classes in place and return the id -> class map.
///
/// Foreign domicile maps to FRM; domestic members go to DIM when their
/// individual correlation is at least the institution one, else DSM.
/// Members trading under `min_volume_ratio` of the mean member volume
/// (or with undefined correlations) are Excluded.
pub fn classify_members(
    profiles: &mut [MemberProfile],
    min_volume_ratio: f64,
) -> HashMap<String, MemberClass> {
    let traded: Vec<f64> = profiles
        .iter()
        .map(|p| p.volume)
        .filter(|&v| v > 0.0)
        .collect();
    let mean_volume = if traded.is_empty() {
        0.0
    } else {
        traded.iter().sum::<f64>() / traded.len() as f64
    };
    let floor = min_volume_ratio * mean_volume;
    let mut out = HashMap::with_capacity(profiles.len());
    for p in profiles.iter_mut() {
        p.class = if p.volume < floor || p.volume <= 0.0 {
            MemberClass::Excluded
        } else if p.domicile == Domicile::Foreign {
            MemberClass::Frm
        } else if p.corr_individual.is_nan() || p.corr_institution.is_nan() {
            MemberClass::Excluded
        } else if p.corr_individual >= p.corr_institution {
            MemberClass::Dim
        } else {
            MemberClass::Dsm
        };
        out.insert(p.member_id.clone(), p.class);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{
        build_panel, InvestorFlowRecord, MemberMetaRecord, PriceRecord, RawBundle,
        StockMetaRecord, TradeRecord,
    };
    use approx::assert_relative_eq;
    use chrono::NaiveDate;

    fn day(i: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 1, 1).unwrap() + chrono::Days::new(i as u64)
    }

    /// Panel with 10 stocks and one member trading stock S00 with
    /// prescribed (buy, sell) pairs; prices follow `closes`.
    fn panel_with(buys_sells: &[(f64, f64)], closes: &[f64]) -> TradePanel {
        let n_days = closes.len();
        assert!(buys_sells.len() <= n_days);
        let mut bundle = RawBundle::default();
        for i in 0..10 {
            bundle.stocks.push(StockMetaRecord {
                stock_id: format!("S{:02}", i),
                market_cap: 1000.0 - i as f64,
            });
        }
        bundle.members.push(MemberMetaRecord {
            member_id: "M1".into(),
            name: "Alpha".into(),
            domicile: Domicile::Domestic,
        });
        for t in 0..n_days {
            for i in 0..10 {
                bundle.prices.push(PriceRecord {
                    date: day(t as u32),
                    stock_id: format!("S{:02}", i),
                    close: if i == 0 { closes[t] } else { 100.0 },
                });
            }
        }
        for (t, &(b, s)) in buys_sells.iter().enumerate() {
            bundle.trades.push(TradeRecord {
                date: day(t as u32),
                stock_id: "S00".into(),
                member_id: "M1".into(),
                buy_amount: b,
                sell_amount: s,
            });
            bundle.flows.push(InvestorFlowRecord {
                date: day(t as u32),
                stock_id: "S00".into(),
                investor_type: InvestorType::Individual,
                buy_amount: b,
                sell_amount: s,
            });
        }
        build_panel(bundle).unwrap()
    }

    #[test]
    fn directionality_all_one_way() {
        let trades: Vec<(f64, f64)> = (0..6).map(|i| (10.0 + i as f64, 0.0)).collect();
        let closes: Vec<f64> = (0..6).map(|i| 100.0 + (i % 3) as f64).collect();
        let panel = panel_with(&trades, &closes);
        let d = directionality(&panel, Entity::Member("M1"), 1, 2015, 0.2, 1).unwrap();
        assert_relative_eq!(d, 1.0);
    }

    #[test]
    fn directionality_balanced_is_zero() {
        // B = S every day: the flow ratio is 0 < theta throughout
        let trades: Vec<(f64, f64)> = (0..6).map(|i| (5.0 + i as f64, 5.0 + i as f64)).collect();
        let closes: Vec<f64> = (0..6).map(|i| 100.0 + (i % 3) as f64).collect();
        let panel = panel_with(&trades, &closes);
        let d = directionality(&panel, Entity::Member("M1"), 1, 2015, 0.2, 1).unwrap();
        assert_relative_eq!(d, 0.0);
        // the joint score still needs a defined trend, so it errors here
        assert!(matches!(
            behavior_score(&panel, Entity::Member("M1"), 1, 2015, 0.2, 1),
            Err(BehaviorError::NoActivity)
        ));
    }

    #[test]
    fn directionality_hand_ratios() {
        // ratios: 0.1, 0.3, 0.25, 0.05 -> two of four reach theta=0.2;
        // the zero-gross day 0 is excluded from the denominator
        let trades = vec![
            (0.0, 0.0),
            (5.5, 4.5),   // 0.1
            (6.5, 3.5),   // 0.3
            (6.25, 3.75), // 0.25
            (5.25, 4.75), // 0.05
        ];
        let closes = vec![100.0, 101.0, 99.0, 102.0, 100.5];
        let panel = panel_with(&trades, &closes);
        let d = directionality(&panel, Entity::Member("M1"), 1, 2015, 0.2, 1).unwrap();
        assert_relative_eq!(d, 0.5);
    }

    #[test]
    fn directionality_scale_invariant() {
        let trades = vec![(0.0, 0.0), (5.5, 4.5), (6.5, 3.5), (6.25, 3.75), (5.25, 4.75)];
        let closes = vec![100.0, 101.0, 99.0, 102.0, 100.5];
        let scaled: Vec<(f64, f64)> = trades.iter().map(|&(b, s)| (7.0 * b, 7.0 * s)).collect();
        let d1 = directionality(&panel_with(&trades, &closes), Entity::Member("M1"), 1, 2015, 0.2, 1)
            .unwrap();
        let d2 = directionality(&panel_with(&scaled, &closes), Entity::Member("M1"), 1, 2015, 0.2, 1)
            .unwrap();
        assert_relative_eq!(d1, d2);
    }

    #[test]
    fn theta_monotonicity() {
        let trades = vec![(1.0, 1.0), (5.5, 4.5), (6.5, 3.5), (6.25, 3.75), (5.25, 4.75)];
        let closes = vec![100.0, 101.0, 99.0, 102.0, 100.5];
        let panel = panel_with(&trades, &closes);
        let mut prev = 1.0f64;
        for theta in [0.05, 0.2, 0.35, 0.6, 0.9] {
            let d = directionality(&panel, Entity::Member("M1"), 1, 2015, theta, 1).unwrap();
            assert!(d <= prev + 1e-12, "D increased when theta grew");
            prev = d;
        }
    }

    #[test]
    fn trend_perfectly_aligned() {
        // net flow proportional to the same-day return
        let closes = vec![100.0, 102.0, 101.0, 104.0, 103.0, 106.0];
        let mut trades = vec![(1.0, 0.0)];
        for t in 1..closes.len() {
            let r = closes[t] / closes[t - 1] - 1.0;
            let x = 1000.0 * r;
            trades.push(if x >= 0.0 { (x + 1.0, 1.0) } else { (1.0, 1.0 - x) });
        }
        let panel = panel_with(&trades, &closes);
        let t = trend(&panel, Entity::Member("M1"), 1, 2015, 1).unwrap();
        assert_relative_eq!(t, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trend_contrarian() {
        let closes = vec![100.0, 102.0, 101.0, 104.0, 103.0, 106.0];
        let mut trades = vec![(1.0, 0.0)];
        for t in 1..closes.len() {
            let r = closes[t] / closes[t - 1] - 1.0;
            let x = -1000.0 * r;
            trades.push(if x >= 0.0 { (x + 1.0, 1.0) } else { (1.0, 1.0 - x) });
        }
        let panel = panel_with(&trades, &closes);
        let t = trend(&panel, Entity::Member("M1"), 1, 2015, 1).unwrap();
        assert_relative_eq!(t, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn no_activity_error() {
        let closes = vec![100.0, 101.0, 102.0];
        let panel = panel_with(&[], &closes);
        assert!(matches!(
            behavior_score(&panel, Entity::Member("M1"), 1, 2015, 0.2, 1),
            Err(BehaviorError::NoActivity)
        ));
    }

    #[test]
    fn bad_theta_rejected() {
        let closes = vec![100.0, 101.0, 102.0];
        let panel = panel_with(&[(1.0, 0.0)], &closes);
        assert!(matches!(
            behavior_score(&panel, Entity::Member("M1"), 1, 2015, 1.5, 1),
            Err(BehaviorError::BadTheta(_))
        ));
    }

    #[test]
    fn member_matching_individual_flow_has_unit_correlation() {
        // the fixture writes identical member trades and individual flows
        let trades = vec![(1.0, 1.0), (9.0, 1.0), (2.0, 7.0), (8.0, 3.0), (1.0, 6.0)];
        let closes = vec![100.0, 101.0, 99.0, 102.0, 100.5];
        let panel = panel_with(&trades, &closes);
        // institutions/foreigners never trade, so only a member-vs-itself
        // sample exists for individuals; the other two types are missing
        assert!(matches!(
            member_type_correlations(&panel, "M1", 1, 2),
            Err(BehaviorError::InsufficientHistory)
        ));
        // add flat institution/foreigner flows with variance
        let mut bundle = RawBundle::default();
        for i in 0..10 {
            bundle.stocks.push(StockMetaRecord {
                stock_id: format!("S{:02}", i),
                market_cap: 1000.0 - i as f64,
            });
        }
        bundle.members.push(MemberMetaRecord {
            member_id: "M1".into(),
            name: "Alpha".into(),
            domicile: Domicile::Domestic,
        });
        for (t, &(b, s)) in trades.iter().enumerate() {
            for i in 0..10 {
                bundle.prices.push(PriceRecord {
                    date: day(t as u32),
                    stock_id: format!("S{:02}", i),
                    close: closes[t],
                });
            }
            bundle.trades.push(TradeRecord {
                date: day(t as u32),
                stock_id: "S00".into(),
                member_id: "M1".into(),
                buy_amount: b,
                sell_amount: s,
            });
            for (k, ty) in InvestorType::ALL.into_iter().enumerate() {
                let (fb, fs) = match k {
                    0 => (b, s),
                    1 => (2.0 + (t % 3) as f64, 1.0),
                    _ => (1.0, 2.0 + ((t + 1) % 2) as f64),
                };
                bundle.flows.push(InvestorFlowRecord {
                    date: day(t as u32),
                    stock_id: "S00".into(),
                    investor_type: ty,
                    buy_amount: fb,
                    sell_amount: fs,
                });
            }
        }
        let panel = build_panel(bundle).unwrap();
        let (ci, _cs, _cf) = member_type_correlations(&panel, "M1", 1, 2).unwrap();
        assert_relative_eq!(ci, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn classification_rules() {
        let mk = |id: &str, dom: Domicile, ci: f64, cs: f64, vol: f64| MemberProfile {
            member_id: id.into(),
            name: id.into(),
            domicile: dom,
            corr_individual: ci,
            corr_institution: cs,
            corr_foreigner: 0.0,
            volume: vol,
            class: MemberClass::Excluded,
        };
        let mut profiles = vec![
            mk("F1", Domicile::Foreign, -0.9, 0.9, 100.0),
            mk("D1", Domicile::Domestic, 0.5, 0.1, 100.0),
            mk("D2", Domicile::Domestic, 0.1, 0.5, 100.0),
            mk("D3", Domicile::Domestic, 0.3, 0.3, 100.0), // tie -> DIM
            mk("D4", Domicile::Domestic, 0.9, 0.0, 1.0),   // under volume filter
        ];
        let classes = classify_members(&mut profiles, 0.1);
        assert_eq!(classes["F1"], MemberClass::Frm);
        assert_eq!(classes["D1"], MemberClass::Dim);
        assert_eq!(classes["D2"], MemberClass::Dsm);
        assert_eq!(classes["D3"], MemberClass::Dim);
        assert_eq!(classes["D4"], MemberClass::Excluded);
        // among non-excluded members: FRM iff foreign domicile
        for p in &profiles {
            if p.class != MemberClass::Excluded {
                assert_eq!(p.class == MemberClass::Frm, p.domicile == Domicile::Foreign);
            }
        }
    }
}
