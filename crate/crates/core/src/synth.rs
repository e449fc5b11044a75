//! Synthetic market generator with planted agent behaviors. Every
//! analysis module is validated against bundles produced here: the
//! manifest records the planted trend signs, directionality targets,
//! group herding directions, community blocks and regression
//! coefficients, and the test harnesses read only that manifest.
//!
//! # Randomness contract
//!
//! All draws come from ChaCha8 (rand_chacha's `ChaCha8Rng`), keyed by
//! `seed_from_u64(seed)` and split into independent substreams with
//! `set_stream`:
//!
//! * stream 0 — returns: per day, one standard normal for the market
//!   factor, then one per stock for the idiosyncratic part;
//! * stream 1 — group moods: per (day, stock), one standard normal per
//!   plant class in DIM, DSM, FRM order;
//! * stream 2 — herding-driven mode: per (day, stock), one normal for
//!   the pre-trade signal and one for the return noise;
//! * stream 100+i — agent i: per (stock, day) in stock-major order,
//!   exactly six uniforms: follow, eta (two, Box-Muller), one-way,
//!   ratio, volume.
//!
//! Uniforms are `(next_u64() >> 11) * 2^-53`; normals are Box-Muller
//! (`r = sqrt(-2 ln(1-u1))`, angle `2 pi u2`, cosine branch).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use crate::herding::{self, HerdingTest};
use crate::panel::{
    self, Domicile, InvestorFlowRecord, InvestorType, MemberMetaRecord, PanelError, PriceRecord,
    RawBundle, StockMetaRecord, TradePanel, TradeRecord,
};

pub const BASE_DAY_VOLUME: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Panel(#[from] PanelError),
}

/// Seedable random source with the documented bit-stream layout.
pub struct SynthRng {
    inner: ChaCha8Rng,
}

impl SynthRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SynthRng { inner }
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller; consumes two uniforms.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).max(f64::MIN_POSITIVE).ln()).sqrt();
        r * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlantClass {
    Dim,
    Dsm,
    Frm,
}

impl PlantClass {
    pub fn label(self) -> &'static str {
        match self {
            PlantClass::Dim => "DIM",
            PlantClass::Dsm => "DSM",
            PlantClass::Frm => "FRM",
        }
    }

    fn index(self) -> usize {
        match self {
            PlantClass::Dim => 0,
            PlantClass::Dsm => 1,
            PlantClass::Frm => 2,
        }
    }

    /// Herding direction of the group mood relative to the return
    /// signal: domestic groups fade it, foreign members follow it.
    fn mood_direction(self) -> f64 {
        match self {
            PlantClass::Dim | PlantClass::Dsm => -1.0,
            PlantClass::Frm => 1.0,
        }
    }
}

/// One planted agent.
#[derive(Debug, Clone, Serialize)]
pub struct AgentSpec {
    pub member_id: String,
    pub domicile: Domicile,
    pub class: PlantClass,
    /// Loading of the agent's own daily direction on the return signal.
    pub trend_loading: f64,
    /// Probability of a one-way day (|B-S|/(B+S) drawn above 0.25).
    pub directionality_target: f64,
    /// Probability of following the group mood instead of the own signal.
    pub herding_coupling: f64,
    pub volume_scale: f64,
    /// Fraction of the agent's flow booked to individuals, institutions,
    /// foreigners. Sums to one.
    pub client_mix: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum GenMode {
    /// Agents react to the realized return innovations; returns carry a
    /// per-decile common factor that fades down the cap ranking.
    ReturnDriven,
    /// Agents react to a pre-trade signal and returns are assembled from
    /// the realized group herding plus the market factor and noise.
    HerdingDriven {
        beta_market: f64,
        beta_h_dsm: f64,
        beta_h_dim: f64,
        beta_h_frm: f64,
        noise_sd: f64,
    },
}

#[derive(Debug, Clone)]
pub struct MarketSpec {
    pub n_stocks: usize,
    pub n_years: usize,
    pub days_per_year: usize,
    pub start_year: i32,
    pub base_volatility: f64,
    /// Common-factor strength for decile 1; decays linearly to
    /// `factor_strength_bottom` at decile 10.
    pub factor_strength_top: f64,
    pub factor_strength_bottom: f64,
    /// Correlation of each group mood with the return signal (kappa).
    pub mood_return_coupling: f64,
    pub riskfree_annual: f64,
    pub seed: u64,
    pub mode: GenMode,
}

pub fn default_market(seed: u64) -> MarketSpec {
    MarketSpec {
        n_stocks: 40,
        n_years: 2,
        days_per_year: 247,
        start_year: 2007,
        base_volatility: 0.02,
        factor_strength_top: 1.0,
        factor_strength_bottom: 0.1,
        mood_return_coupling: 0.32,
        riskfree_annual: 0.0247,
        seed,
        mode: GenMode::ReturnDriven,
    }
}

/// The default plant: 12 DIM, 14 DSM and 21 FRM agents with the group
/// phenomenology (contrarian low-directionality DIMs, mildly contrarian
/// DSMs, trending one-way FRMs).
pub fn default_agents() -> Vec<AgentSpec> {
    let mut agents = Vec::new();
    let mut idx = 0usize;
    let mut push = |class: PlantClass, count: usize, agents: &mut Vec<AgentSpec>| {
        let (trend, dir, coupling, mix, domicile) = match class {
            PlantClass::Dim => (-0.35, 0.35, 0.65, [0.85, 0.15, 0.0], Domicile::Domestic),
            PlantClass::Dsm => (-0.12, 0.50, 0.60, [0.25, 0.75, 0.0], Domicile::Domestic),
            PlantClass::Frm => (0.55, 0.80, 0.45, [0.03, 0.02, 0.95], Domicile::Foreign),
        };
        for _ in 0..count {
            idx += 1;
            agents.push(AgentSpec {
                member_id: format!("M{:02}", idx),
                domicile,
                class,
                trend_loading: trend,
                directionality_target: dir,
                herding_coupling: coupling,
                volume_scale: 0.6 + 0.1 * ((idx - 1) % 9) as f64,
                client_mix: mix,
            });
        }
    };
    push(PlantClass::Dim, 12, &mut agents);
    push(PlantClass::Dsm, 14, &mut agents);
    push(PlantClass::Frm, 21, &mut agents);
    agents
}

/// Agents with no coupling and no loading: independent coin-flip
/// direction every day. Used for null calibrations.
pub fn null_agents(n: usize) -> Vec<AgentSpec> {
    (1..=n)
        .map(|i| AgentSpec {
            member_id: format!("M{:02}", i),
            domicile: Domicile::Domestic,
            class: PlantClass::Dim,
            trend_loading: 0.0,
            directionality_target: 0.5,
            herding_coupling: 0.0,
            volume_scale: 1.0,
            client_mix: [0.6, 0.2, 0.2],
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentExpectation {
    pub member_id: String,
    pub class: String,
    pub domicile: String,
    /// Sign of the expected decile-1 trend; 0 when the plant is too weak
    /// to call.
    pub expected_trend_sign: i8,
    /// Analytic decile-1 trend estimate from the sign/magnitude mixture.
    pub trend_center: f64,
    pub directionality_target: f64,
    pub volume_scale: f64,
    pub client_mix: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupExpectation {
    /// Expected sign of the mean herding direction DH.
    pub direction_sign: i8,
    /// Bound the mean DH is expected to clear (upper bound for negative
    /// plants, lower bound for positive ones).
    pub dh_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionPlant {
    pub beta_market: f64,
    pub beta_h_dsm: f64,
    pub beta_h_dim: f64,
    pub beta_h_frm: f64,
    pub noise_sd: f64,
}

/// Machine-readable expected values for a generated bundle.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub seed: u64,
    pub mode: String,
    pub n_stocks: usize,
    pub n_years: usize,
    pub days_per_year: usize,
    pub factor_strength_by_decile: Vec<f64>,
    pub agents: Vec<AgentExpectation>,
    pub groups: BTreeMap<String, GroupExpectation>,
    /// Planted community structure: member id -> block index.
    pub partition: BTreeMap<String, usize>,
    pub regression: Option<RegressionPlant>,
}

/// Analytic attenuation of corr(x, signal) caused by the ratio/volume
/// mixture: E[rho V] / sqrt(E[rho^2 V^2]) for the generator's draws.
fn ratio_attenuation(p_one_way: f64) -> f64 {
    let e_rho = p_one_way * 0.60 + (1.0 - p_one_way) * 0.08;
    let e_rho2 = p_one_way * (0.0625 + 0.25 * 0.95 + 0.9025) / 3.0
        + (1.0 - p_one_way) * (0.0001 + 0.01 * 0.15 + 0.0225) / 3.0;
    let e_v2 = (0.25 + 0.5 * 1.5 + 2.25) / 3.0;
    e_rho / (e_rho2 * e_v2).sqrt()
}

fn trend_center(agent: &AgentSpec, kappa: f64, strength: f64) -> f64 {
    let comb = agent.herding_coupling * kappa * agent.class.mood_direction()
        + (1.0 - agent.herding_coupling) * agent.trend_loading;
    (2.0 / std::f64::consts::PI).sqrt()
        * ratio_attenuation(agent.directionality_target)
        * strength
        * comb
}

/// Expected values implied by a spec; `generate` embeds this in the
/// bundle it produces.
pub fn oracle_manifest(market: &MarketSpec, agents: &[AgentSpec]) -> Manifest {
    let strengths: Vec<f64> = (1..=10u8).map(|d| factor_strength(market, d)).collect();
    let agent_rows = agents
        .iter()
        .map(|a| {
            let center = trend_center(a, market.mood_return_coupling, strengths[0]);
            AgentExpectation {
                member_id: a.member_id.clone(),
                class: a.class.label().to_string(),
                domicile: a.domicile.code().to_string(),
                expected_trend_sign: if center.abs() < 0.02 {
                    0
                } else {
                    center.signum() as i8
                },
                trend_center: center,
                directionality_target: a.directionality_target,
                volume_scale: a.volume_scale,
                client_mix: a.client_mix,
            }
        })
        .collect();
    let mut groups = BTreeMap::new();
    let coupled = |class: PlantClass| {
        agents
            .iter()
            .any(|a| a.class == class && a.herding_coupling > 0.2)
    };
    if coupled(PlantClass::Dim) {
        groups.insert(
            "DIM".to_string(),
            GroupExpectation {
                direction_sign: -1,
                dh_bound: -0.2,
            },
        );
    }
    if coupled(PlantClass::Dsm) {
        groups.insert(
            "DSM".to_string(),
            GroupExpectation {
                direction_sign: -1,
                dh_bound: -0.2,
            },
        );
    }
    if coupled(PlantClass::Frm) {
        groups.insert(
            "FRM".to_string(),
            GroupExpectation {
                direction_sign: 1,
                dh_bound: 0.1,
            },
        );
    }
    let partition = agents
        .iter()
        .map(|a| (a.member_id.clone(), a.class.index()))
        .collect();
    let regression = match &market.mode {
        GenMode::ReturnDriven => None,
        GenMode::HerdingDriven {
            beta_market,
            beta_h_dsm,
            beta_h_dim,
            beta_h_frm,
            noise_sd,
        } => Some(RegressionPlant {
            beta_market: *beta_market,
            beta_h_dsm: *beta_h_dsm,
            beta_h_dim: *beta_h_dim,
            beta_h_frm: *beta_h_frm,
            noise_sd: *noise_sd,
        }),
    };
    Manifest {
        seed: market.seed,
        mode: match market.mode {
            GenMode::ReturnDriven => "return_driven".to_string(),
            GenMode::HerdingDriven { .. } => "herding_driven".to_string(),
        },
        n_stocks: market.n_stocks,
        n_years: market.n_years,
        days_per_year: market.days_per_year,
        factor_strength_by_decile: strengths,
        agents: agent_rows,
        groups,
        partition,
        regression,
    }
}

/// A generated CSV bundle plus its manifest, still in memory.
pub struct Bundle {
    pub raw: RawBundle,
    pub market_index: Vec<(NaiveDate, f64)>,
    pub riskfree: Vec<(NaiveDate, f64)>,
    pub manifest: Manifest,
}

impl Bundle {
    /// Validate and index the bundle as a trade panel.
    pub fn into_panel(self) -> Result<TradePanel, PanelError> {
        panel::build_panel(self.raw)
    }

    /// Write the bundle as the CSV input directory plus market_index.csv,
    /// riskfree.csv and manifest.json. Deterministic byte-for-byte.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("trades.csv"))?);
        writeln!(w, "date,stock_id,member_id,buy_amount,sell_amount")?;
        let mut trades: Vec<&TradeRecord> = self.raw.trades.iter().collect();
        trades.sort_by(|a, b| {
            (a.date, &a.stock_id, &a.member_id).cmp(&(b.date, &b.stock_id, &b.member_id))
        });
        for t in trades {
            writeln!(
                w,
                "{},{},{},{},{}",
                t.date, t.stock_id, t.member_id, t.buy_amount, t.sell_amount
            )?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("investor_flows.csv"))?);
        writeln!(w, "date,stock_id,investor_type,buy_amount,sell_amount")?;
        let mut flows: Vec<&InvestorFlowRecord> = self.raw.flows.iter().collect();
        flows.sort_by(|a, b| {
            (a.date, &a.stock_id, a.investor_type.code())
                .cmp(&(b.date, &b.stock_id, b.investor_type.code()))
        });
        for f in flows {
            writeln!(
                w,
                "{},{},{},{},{}",
                f.date,
                f.stock_id,
                f.investor_type.code(),
                f.buy_amount,
                f.sell_amount
            )?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("prices.csv"))?);
        writeln!(w, "date,stock_id,close")?;
        for p in &self.raw.prices {
            writeln!(w, "{},{},{}", p.date, p.stock_id, p.close)?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("stocks.csv"))?);
        writeln!(w, "stock_id,market_cap")?;
        for s in &self.raw.stocks {
            writeln!(w, "{},{}", s.stock_id, s.market_cap)?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("members.csv"))?);
        writeln!(w, "member_id,name,domicile")?;
        for m in &self.raw.members {
            writeln!(w, "{},{},{}", m.member_id, m.name, m.domicile.code())?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("market_index.csv"))?);
        writeln!(w, "date,return")?;
        for (d, r) in &self.market_index {
            writeln!(w, "{},{}", d, r)?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("riskfree.csv"))?);
        writeln!(w, "date,annual_yield")?;
        for (d, y) in &self.riskfree {
            writeln!(w, "{},{}", d, y)?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &self.manifest)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// First `days_per_year` weekdays of each calendar year.
pub fn trading_calendar(
    start_year: i32,
    n_years: usize,
    days_per_year: usize,
) -> Result<Vec<NaiveDate>, SynthError> {
    let mut out = Vec::with_capacity(n_years * days_per_year);
    for y in 0..n_years as i32 {
        let year = start_year + y;
        let mut d = NaiveDate::from_ymd_opt(year, 1, 1)
            .ok_or_else(|| SynthError::InvalidSpec(format!("bad year {year}")))?;
        let mut taken = 0usize;
        while taken < days_per_year {
            if d.year() != year {
                return Err(SynthError::InvalidSpec(format!(
                    "{days_per_year} trading days do not fit in year {year}"
                )));
            }
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                out.push(d);
                taken += 1;
            }
            d = d.succ_opt().expect("date overflow");
        }
    }
    Ok(out)
}

fn factor_strength(market: &MarketSpec, decile: u8) -> f64 {
    let f = (decile - 1) as f64 / 9.0;
    market.factor_strength_top + (market.factor_strength_bottom - market.factor_strength_top) * f
}

fn validate(market: &MarketSpec, agents: &[AgentSpec]) -> Result<(), SynthError> {
    let bad = |msg: String| Err(SynthError::InvalidSpec(msg));
    if market.n_stocks < 10 {
        return bad(format!("n_stocks must be at least 10, got {}", market.n_stocks));
    }
    if market.n_years == 0 || market.days_per_year < 2 || market.days_per_year > 250 {
        return bad("need n_years >= 1 and 2 <= days_per_year <= 250".into());
    }
    if !(market.base_volatility > 0.0 && market.base_volatility <= 0.2) {
        return bad(format!("base_volatility out of range: {}", market.base_volatility));
    }
    for v in [market.factor_strength_top, market.factor_strength_bottom] {
        if !(0.0..=1.0).contains(&v) {
            return bad(format!("factor strength out of range: {v}"));
        }
    }
    if market.factor_strength_bottom > market.factor_strength_top {
        return bad("factor strength must be non-increasing in decile".into());
    }
    if !(0.0..1.0).contains(&market.mood_return_coupling) {
        return bad(format!(
            "mood_return_coupling out of range: {}",
            market.mood_return_coupling
        ));
    }
    if agents.is_empty() {
        return bad("at least one agent required".into());
    }
    let mut ids = std::collections::HashSet::new();
    for a in agents {
        if !ids.insert(a.member_id.clone()) {
            return bad(format!("duplicate member id {}", a.member_id));
        }
        if !(-1.0..=1.0).contains(&a.trend_loading) {
            return bad(format!("{}: trend loading out of range", a.member_id));
        }
        for p in [a.directionality_target, a.herding_coupling] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{}: probability out of range", a.member_id));
            }
        }
        if !(a.volume_scale > 0.0) {
            return bad(format!("{}: volume scale must be positive", a.member_id));
        }
        if a.client_mix.iter().any(|&m| m < 0.0)
            || (a.client_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!("{}: client mix must sum to one", a.member_id));
        }
    }
    if let GenMode::HerdingDriven { noise_sd, .. } = market.mode {
        if !(noise_sd > 0.0) {
            return bad("return noise must be positive in herding-driven mode".into());
        }
    }
    Ok(())
}

/// Generate a full bundle from a market spec and agent plants.
pub fn generate(market: &MarketSpec, agents: &[AgentSpec]) -> Result<Bundle, SynthError> {
    validate(market, agents)?;
    let calendar = trading_calendar(market.start_year, market.n_years, market.days_per_year)?;
    let n_days = calendar.len();
    let n_stocks = market.n_stocks;
    let rf_daily = market.riskfree_annual / 247.0;
    let market_vol = 0.75 * market.base_volatility;

    let stock_ids: Vec<String> = (0..n_stocks).map(|s| format!("S{:03}", s)).collect();
    let caps: Vec<f64> = (0..n_stocks).map(|s| 1e12 * 0.95f64.powi(s as i32)).collect();
    let decile_map = panel::assign_deciles(
        &stock_ids
            .iter()
            .cloned()
            .zip(caps.iter().copied())
            .collect::<Vec<_>>(),
    )?;
    let deciles: Vec<u8> = stock_ids.iter().map(|id| decile_map[id]).collect();
    let strength: Vec<f64> = deciles.iter().map(|&d| factor_strength(market, d)).collect();

    // Stream 0: market factor and idiosyncratic return innovations.
    let mut rng_ret = SynthRng::new(market.seed, 0);
    let mut m_factor = vec![0.0; n_days];
    let mut innovations = vec![vec![0.0; n_days]; n_stocks];
    for t in 0..n_days {
        m_factor[t] = rng_ret.normal();
        for s in 0..n_stocks {
            innovations[s][t] = rng_ret.normal();
        }
    }

    // Stream 1: group mood noise.
    let mut rng_mood = SynthRng::new(market.seed, 1);
    let mut mood_noise = vec![vec![[0.0f64; 3]; n_stocks]; n_days];
    for t in 0..n_days {
        for s in 0..n_stocks {
            for g in 0..3 {
                mood_noise[t][s][g] = rng_mood.normal();
            }
        }
    }

    // Stream 2: herding-driven extras.
    let herding_mode = matches!(market.mode, GenMode::HerdingDriven { .. });
    let mut pre_signal = vec![vec![0.0; n_days]; n_stocks];
    let mut ret_noise = vec![vec![0.0; n_days]; n_stocks];
    if herding_mode {
        let mut rng_pre = SynthRng::new(market.seed, 2);
        for t in 0..n_days {
            for s in 0..n_stocks {
                pre_signal[s][t] = rng_pre.normal();
                ret_noise[s][t] = rng_pre.normal();
            }
        }
    }

    // The signal agents react to: realized return innovation or the
    // pre-trade signal, depending on mode.
    let signal = |s: usize, t: usize| -> f64 {
        if herding_mode {
            pre_signal[s][t]
        } else {
            let phi = (0.3 + 0.5 * strength[s]).min(0.95);
            phi * m_factor[t] + (1.0 - phi * phi).sqrt() * innovations[s][t]
        }
    };

    // Group moods per (day, stock): sign of kappa_eff * dir * signal plus
    // noise, with kappa attenuated by the stock's decile strength.
    let kappa = market.mood_return_coupling;
    let mut moods = vec![vec![[1i8; 3]; n_stocks]; n_days];
    for t in 0..n_days {
        for s in 0..n_stocks {
            let z = signal(s, t);
            for (g, class) in [PlantClass::Dim, PlantClass::Dsm, PlantClass::Frm]
                .into_iter()
                .enumerate()
            {
                let k_eff = (kappa * strength[s]).clamp(0.0, 0.999);
                let latent = class.mood_direction() * k_eff * z
                    + (1.0 - k_eff * k_eff).sqrt() * mood_noise[t][s][g];
                moods[t][s][g] = if latent >= 0.0 { 1 } else { -1 };
            }
        }
    }

    // Agent flows; exactly six uniforms per (stock, day) cell.
    let mut trades = Vec::with_capacity(agents.len() * n_stocks * n_days);
    let mut flow_buy = vec![vec![[0.0f64; 3]; n_days]; n_stocks];
    let mut flow_sell = vec![vec![[0.0f64; 3]; n_days]; n_stocks];
    // net direction per (group, stock, day) counts for herding-driven mode
    let mut group_buyers = vec![vec![[0u32; 3]; n_days]; n_stocks];
    let mut group_sellers = vec![vec![[0u32; 3]; n_days]; n_stocks];
    for (i, agent) in agents.iter().enumerate() {
        let mut rng = SynthRng::new(market.seed, 100 + i as u64);
        for s in 0..n_stocks {
            let beta_eff = (agent.trend_loading * strength[s]).clamp(-0.999, 0.999);
            for t in 0..n_days {
                let u_follow = rng.uniform();
                let eta = rng.normal();
                let u_dir = rng.uniform();
                let u_rho = rng.uniform();
                let u_vol = rng.uniform();

                let sign = if u_follow < agent.herding_coupling {
                    moods[t][s][agent.class.index()] as f64
                } else {
                    let latent = beta_eff * signal(s, t)
                        + (1.0 - beta_eff * beta_eff).sqrt() * eta;
                    if latent >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                };
                let rho = if u_dir < agent.directionality_target {
                    0.25 + 0.70 * u_rho
                } else {
                    0.01 + 0.14 * u_rho
                };
                let volume =
                    (BASE_DAY_VOLUME * agent.volume_scale * (0.5 + u_vol)).round().max(1.0);
                let buy = (volume * (1.0 + sign * rho) / 2.0).round().clamp(0.0, volume);
                let sell = volume - buy;

                trades.push(TradeRecord {
                    date: calendar[t],
                    stock_id: stock_ids[s].clone(),
                    member_id: agent.member_id.clone(),
                    buy_amount: buy,
                    sell_amount: sell,
                });
                for k in 0..3 {
                    flow_buy[s][t][k] += agent.client_mix[k] * buy;
                    flow_sell[s][t][k] += agent.client_mix[k] * sell;
                }
                let g = agent.class.index();
                if buy > sell {
                    group_buyers[s][t][g] += 1;
                } else if sell > buy {
                    group_sellers[s][t][g] += 1;
                }
            }
        }
    }

    // Returns and prices.
    let mut returns = vec![vec![0.0; n_days]; n_stocks];
    match &market.mode {
        GenMode::ReturnDriven => {
            for s in 0..n_stocks {
                let vol = market.base_volatility * (1.5 - 0.5 * strength[s]);
                for t in 0..n_days {
                    returns[s][t] = (vol * signal(s, t)).max(-0.5);
                }
            }
        }
        GenMode::HerdingDriven {
            beta_market,
            beta_h_dsm,
            beta_h_dim,
            beta_h_frm,
            noise_sd,
        } => {
            for s in 0..n_stocks {
                for t in 0..n_days {
                    let h_of = |g: usize| -> f64 {
                        let nb = group_buyers[s][t][g];
                        let ns = group_sellers[s][t][g];
                        if nb + ns < herding::MIN_TRADERS {
                            return 0.0;
                        }
                        herding::herding_day(nb, ns, herding::DEFAULT_ALPHA, HerdingTest::PmfAtObserved)
                            .map(|d| d.signed as f64)
                            .unwrap_or(0.0)
                    };
                    let mkt_excess = market_vol * m_factor[t];
                    let r = rf_daily
                        + beta_market * mkt_excess
                        + beta_h_dsm * h_of(PlantClass::Dsm.index())
                        + beta_h_dim * h_of(PlantClass::Dim.index())
                        + beta_h_frm * h_of(PlantClass::Frm.index())
                        + noise_sd * ret_noise[s][t];
                    returns[s][t] = r.max(-0.5);
                }
            }
        }
    }
    let mut prices = Vec::with_capacity(n_stocks * n_days);
    for s in 0..n_stocks {
        let mut close = 5_000.0 + 100.0 * s as f64;
        for t in 0..n_days {
            if t > 0 {
                close *= 1.0 + returns[s][t];
            }
            prices.push(PriceRecord {
                date: calendar[t],
                stock_id: stock_ids[s].clone(),
                close,
            });
        }
    }
    prices.sort_by(|a, b| (a.date, &a.stock_id).cmp(&(b.date, &b.stock_id)));

    let mut flows = Vec::with_capacity(n_stocks * n_days * 3);
    for s in 0..n_stocks {
        for t in 0..n_days {
            for (k, ty) in InvestorType::ALL.into_iter().enumerate() {
                flows.push(InvestorFlowRecord {
                    date: calendar[t],
                    stock_id: stock_ids[s].clone(),
                    investor_type: ty,
                    buy_amount: flow_buy[s][t][k],
                    sell_amount: flow_sell[s][t][k],
                });
            }
        }
    }

    let raw = RawBundle {
        trades,
        flows,
        prices,
        stocks: stock_ids
            .iter()
            .zip(&caps)
            .map(|(id, &cap)| StockMetaRecord {
                stock_id: id.clone(),
                market_cap: cap,
            })
            .collect(),
        members: agents
            .iter()
            .map(|a| MemberMetaRecord {
                member_id: a.member_id.clone(),
                name: format!("Member {}", &a.member_id[1..]),
                domicile: a.domicile,
            })
            .collect(),
    };
    let market_index = (0..n_days)
        .map(|t| (calendar[t], rf_daily + market_vol * m_factor[t]))
        .collect();
    let riskfree = calendar
        .iter()
        .map(|&d| (d, market.riskfree_annual))
        .collect();
    Ok(Bundle {
        raw,
        market_index,
        riskfree,
        manifest: oracle_manifest(market, agents),
    })
}

/// Parse the plain-text key-value spec format (`key = value`, `#`
/// comments). Group counts (`dim_count` etc.) expand into the default
/// per-class agents; explicit `agent = id,domicile,class,trend,
/// dir_target,coupling,volume_scale,mix_ind,mix_ins,mix_frg` lines are
/// appended. Without any agent keys the default plant is used.
pub fn parse_spec(text: &str) -> Result<(MarketSpec, Vec<AgentSpec>), SynthError> {
    let mut market = default_market(42);
    let mut counts: Option<(usize, usize, usize)> = None;
    let mut explicit: Vec<AgentSpec> = Vec::new();
    let mut mode_name = "return_driven".to_string();
    let mut betas = (0.9, 0.0015, -0.03, 0.002);
    let mut noise_sd = 0.004;

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| SynthError::InvalidSpec(format!("line {}: {msg}", lineno + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad("expected key = value"))?;
        let key = key.trim();
        let value = value.trim();
        let parse_f = |v: &str| -> Result<f64, SynthError> {
            v.parse().map_err(|_| bad(&format!("bad number {v:?}")))
        };
        let parse_u = |v: &str| -> Result<usize, SynthError> {
            v.parse().map_err(|_| bad(&format!("bad integer {v:?}")))
        };
        match key {
            "n_stocks" => market.n_stocks = parse_u(value)?,
            "n_years" => market.n_years = parse_u(value)?,
            "days_per_year" => market.days_per_year = parse_u(value)?,
            "start_year" => {
                market.start_year = value
                    .parse()
                    .map_err(|_| bad(&format!("bad year {value:?}")))?
            }
            "seed" => {
                market.seed = value
                    .parse()
                    .map_err(|_| bad(&format!("bad seed {value:?}")))?
            }
            "base_volatility" => market.base_volatility = parse_f(value)?,
            "factor_strength_top" => market.factor_strength_top = parse_f(value)?,
            "factor_strength_bottom" => market.factor_strength_bottom = parse_f(value)?,
            "mood_return_coupling" => market.mood_return_coupling = parse_f(value)?,
            "riskfree_annual" => market.riskfree_annual = parse_f(value)?,
            "mode" => mode_name = value.to_string(),
            "beta_market" => betas.0 = parse_f(value)?,
            "beta_h_dsm" => betas.1 = parse_f(value)?,
            "beta_h_dim" => betas.2 = parse_f(value)?,
            "beta_h_frm" => betas.3 = parse_f(value)?,
            "return_noise_sd" => noise_sd = parse_f(value)?,
            "dim_count" | "dsm_count" | "frm_count" => {
                let mut c = counts.unwrap_or((0, 0, 0));
                let n = parse_u(value)?;
                match key {
                    "dim_count" => c.0 = n,
                    "dsm_count" => c.1 = n,
                    _ => c.2 = n,
                }
                counts = Some(c);
            }
            "agent" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 10 {
                    return Err(bad("agent needs 10 comma-separated fields"));
                }
                let domicile = Domicile::parse(parts[1])
                    .ok_or_else(|| bad(&format!("bad domicile {:?}", parts[1])))?;
                let class = match parts[2] {
                    "DIM" => PlantClass::Dim,
                    "DSM" => PlantClass::Dsm,
                    "FRM" => PlantClass::Frm,
                    other => return Err(bad(&format!("bad class {other:?}"))),
                };
                explicit.push(AgentSpec {
                    member_id: parts[0].to_string(),
                    domicile,
                    class,
                    trend_loading: parse_f(parts[3])?,
                    directionality_target: parse_f(parts[4])?,
                    herding_coupling: parse_f(parts[5])?,
                    volume_scale: parse_f(parts[6])?,
                    client_mix: [parse_f(parts[7])?, parse_f(parts[8])?, parse_f(parts[9])?],
                });
            }
            other => {
                return Err(bad(&format!("unknown key {other:?}")));
            }
        }
    }

    market.mode = match mode_name.as_str() {
        "return_driven" => GenMode::ReturnDriven,
        "herding_driven" => GenMode::HerdingDriven {
            beta_market: betas.0,
            beta_h_dsm: betas.1,
            beta_h_dim: betas.2,
            beta_h_frm: betas.3,
            noise_sd,
        },
        other => {
            return Err(SynthError::InvalidSpec(format!("unknown mode {other:?}")));
        }
    };

    let mut agents = match counts {
        None => {
            if explicit.is_empty() {
                default_agents()
            } else {
                Vec::new()
            }
        }
        Some((dim, dsm, frm)) => {
            let defaults = default_agents();
            let take = |class: PlantClass, n: usize| -> Vec<AgentSpec> {
                defaults
                    .iter()
                    .filter(|a| a.class == class)
                    .take(n)
                    .cloned()
                    .collect()
            };
            let mut v = take(PlantClass::Dim, dim);
            if dim > 12 || dsm > 14 || frm > 21 {
                return Err(SynthError::InvalidSpec(
                    "group counts beyond the default plant sizes (12/14/21) need explicit agent lines".into(),
                ));
            }
            v.extend(take(PlantClass::Dsm, dsm));
            v.extend(take(PlantClass::Frm, frm));
            v
        }
    };
    agents.extend(explicit);
    Ok((market, agents))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior;
    use crate::panel::Entity;
    use approx::assert_relative_eq;

    fn small_market(seed: u64) -> MarketSpec {
        MarketSpec {
            n_stocks: 10,
            n_years: 1,
            days_per_year: 60,
            ..default_market(seed)
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let market = small_market(7);
        let agents = default_agents()[..6].to_vec();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate(&market, &agents).unwrap().write_dir(d1.path()).unwrap();
        generate(&market, &agents).unwrap().write_dir(d2.path()).unwrap();
        for name in [
            "trades.csv",
            "investor_flows.csv",
            "prices.csv",
            "stocks.csv",
            "members.csv",
            "market_index.csv",
            "riskfree.csv",
            "manifest.json",
        ] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn different_seed_differs() {
        let agents = default_agents()[..6].to_vec();
        let b1 = generate(&small_market(1), &agents).unwrap();
        let b2 = generate(&small_market(2), &agents).unwrap();
        assert_ne!(
            b1.raw.trades[0].buy_amount, b2.raw.trades[0].buy_amount,
            "seeds produced identical first trades"
        );
    }

    #[test]
    fn aggregation_identity_holds_exactly() {
        let market = small_market(11);
        let agents = default_agents()[..8].to_vec();
        let bundle = generate(&market, &agents).unwrap();
        let panel = bundle.into_panel().unwrap();
        // the builder cross-checks member vs investor-type totals per
        // stock/day at 1e-6 relative; a consistent bundle has no warnings
        assert!(panel.warnings().is_empty(), "{:?}", panel.warnings());
    }

    #[test]
    fn planted_share_split_recovered() {
        // all agents book 60/20/20 -> decile shares equal the mix exactly
        let market = small_market(3);
        let agents = null_agents(8);
        let panel = generate(&market, &agents).unwrap().into_panel().unwrap();
        for decile in [1u8, 5, 10] {
            let shares = panel.investor_share(decile).unwrap();
            assert_relative_eq!(shares[&InvestorType::Individual], 0.6, epsilon = 0.02);
            assert_relative_eq!(shares[&InvestorType::Institution], 0.2, epsilon = 0.02);
            assert_relative_eq!(shares[&InvestorType::Foreigner], 0.2, epsilon = 0.02);
        }
    }

    #[test]
    fn pure_trend_plant_lands_in_band() {
        // beta_T = +0.7, no coupling: measured decile-1 trend in [0.4, 0.9]
        let market = MarketSpec {
            n_stocks: 10,
            n_years: 1,
            days_per_year: 247,
            ..default_market(5)
        };
        let agents: Vec<AgentSpec> = (0..12)
            .map(|i| AgentSpec {
                member_id: format!("M{:02}", i),
                domicile: Domicile::Foreign,
                class: PlantClass::Frm,
                trend_loading: 0.7,
                directionality_target: 0.8,
                herding_coupling: 0.0,
                volume_scale: 1.0,
                client_mix: [0.0, 0.0, 1.0],
            })
            .collect();
        let panel = generate(&market, &agents).unwrap().into_panel().unwrap();
        let mut trends = Vec::new();
        for a in 0..12 {
            let t = behavior::trend(
                &panel,
                Entity::Member(&format!("M{:02}", a)),
                1,
                market.start_year,
                30,
            )
            .unwrap();
            trends.push(t);
        }
        let mean = trends.iter().sum::<f64>() / trends.len() as f64;
        assert!(
            (0.4..=0.9).contains(&mean),
            "planted trend 0.7 measured at {mean}"
        );
    }

    #[test]
    fn directionality_matches_target() {
        let market = MarketSpec {
            n_stocks: 10,
            n_years: 1,
            days_per_year: 247,
            ..default_market(9)
        };
        let mut agents = null_agents(6);
        for (i, a) in agents.iter_mut().enumerate() {
            a.directionality_target = 0.2 + 0.1 * i as f64;
        }
        let panel = generate(&market, &agents).unwrap().into_panel().unwrap();
        for (i, a) in agents.iter().enumerate() {
            let d = behavior::directionality(
                &panel,
                Entity::Member(&a.member_id),
                1,
                market.start_year,
                0.2,
                30,
            )
            .unwrap();
            let target = 0.2 + 0.1 * i as f64;
            assert!(
                (d - target).abs() < 0.09,
                "agent {i}: D = {d}, target {target}"
            );
        }
    }

    #[test]
    fn manifest_echoes_plants() {
        let market = MarketSpec {
            mode: GenMode::HerdingDriven {
                beta_market: 0.9,
                beta_h_dsm: 0.001,
                beta_h_dim: -0.03,
                beta_h_frm: 0.002,
                noise_sd: 0.004,
            },
            ..small_market(1)
        };
        let agents = default_agents();
        let manifest = oracle_manifest(&market, &agents);
        assert_eq!(manifest.mode, "herding_driven");
        let reg = manifest.regression.as_ref().unwrap();
        assert_relative_eq!(reg.beta_market, 0.9);
        assert_relative_eq!(reg.beta_h_dim, -0.03);
        // DIM plants expect a negative trend
        let dim = manifest
            .agents
            .iter()
            .find(|a| a.class == "DIM")
            .unwrap();
        assert_eq!(dim.expected_trend_sign, -1);
        let frm = manifest
            .agents
            .iter()
            .find(|a| a.class == "FRM")
            .unwrap();
        assert_eq!(frm.expected_trend_sign, 1);
        // three planted blocks
        let blocks: std::collections::HashSet<usize> =
            manifest.partition.values().copied().collect();
        assert_eq!(blocks.len(), 3);
        assert_eq!(manifest.groups["DIM"].direction_sign, -1);
        assert_eq!(manifest.groups["FRM"].direction_sign, 1);
    }

    #[test]
    fn invalid_specs_rejected() {
        let agents = default_agents();
        let mut m = small_market(1);
        m.n_stocks = 5;
        assert!(matches!(generate(&m, &agents), Err(SynthError::InvalidSpec(_))));
        let m = small_market(1);
        let mut bad = agents.clone();
        bad[0].client_mix = [0.5, 0.2, 0.2];
        assert!(matches!(generate(&m, &bad), Err(SynthError::InvalidSpec(_))));
        let mut bad = agents.clone();
        bad[3].herding_coupling = 1.4;
        assert!(matches!(generate(&m, &bad), Err(SynthError::InvalidSpec(_))));
        let mut bad = agents;
        bad[1].member_id = bad[0].member_id.clone();
        assert!(matches!(generate(&m, &bad), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn spec_file_round_trip() {
        let text = "
# synthetic market
n_stocks = 20
n_years = 1
days_per_year = 100
seed = 99
mode = herding_driven
beta_market = 0.8
beta_h_dim = -0.02
dim_count = 3
dsm_count = 2
frm_count = 4
agent = MX1,F,FRM,0.5,0.7,0.3,1.2,0.0,0.0,1.0
";
        let (market, agents) = parse_spec(text).unwrap();
        assert_eq!(market.n_stocks, 20);
        assert_eq!(market.seed, 99);
        match market.mode {
            GenMode::HerdingDriven {
                beta_market,
                beta_h_dim,
                ..
            } => {
                assert_relative_eq!(beta_market, 0.8);
                assert_relative_eq!(beta_h_dim, -0.02);
            }
            _ => panic!("wrong mode"),
        }
        assert_eq!(agents.len(), 3 + 2 + 4 + 1);
        assert_eq!(agents.last().unwrap().member_id, "MX1");
        // bad lines carry their line number
        let err = parse_spec("n_stocks = ten").unwrap_err();
        assert!(err.to_string().contains("line 1"));
        assert!(parse_spec("nonsense_key = 3").is_err());
    }

    #[test]
    fn calendar_stays_within_years() {
        let cal = trading_calendar(2007, 2, 247).unwrap();
        assert_eq!(cal.len(), 494);
        assert!(cal.iter().take(247).all(|d| d.year() == 2007));
        assert!(cal.iter().skip(247).all(|d| d.year() == 2008));
        for w in cal.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(trading_calendar(2007, 1, 280).is_err());
    }
}
