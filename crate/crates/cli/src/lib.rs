//! Pipeline orchestration behind the `mfl` binary. Each subcommand loads
//! the validated panel, computes one module's artifacts and writes flat
//! CSV/JSON files; `all` runs the full chain on a single panel load and
//! produces byte-identical outputs.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use mfl_core::behavior::{self, BehaviorScore, MemberClass, MemberProfile};
use mfl_core::herding::{self, HerdingSeries, HerdingTest};
use mfl_core::network::{self, MemberNetwork, Partition};
use mfl_core::panel::{self, Entity, InvestorType, ReturnKind, TradePanel};
use mfl_core::regress::{self, HerdingByDay, RegressionResult};
use mfl_core::spectral::{self, DecileSpectralSummary, FactorMode, SpectralReport};
use mfl_core::synth;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Panel(#[from] panel::PanelError),
    #[error(transparent)]
    Behavior(#[from] behavior::BehaviorError),
    #[error(transparent)]
    Herding(#[from] herding::HerdingError),
    #[error(transparent)]
    Network(#[from] network::NetworkError),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
    #[error(transparent)]
    Regress(#[from] regress::RegressError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    pub fn module(&self) -> &'static str {
        match self {
            PipelineError::Panel(_) => "panel",
            PipelineError::Behavior(_) => "behavior",
            PipelineError::Herding(_) => "herding",
            PipelineError::Network(_) => "network",
            PipelineError::Spectral(_) => "spectral",
            PipelineError::Regress(_) => "regress",
            PipelineError::Synth(_) => "synth",
            PipelineError::Config(_) => "config",
            PipelineError::Io(_) => "io",
        }
    }
}

/// Shared run options; defaults follow the measure definitions
/// (theta = 0.2, alpha = 0.05, edge threshold = 0.015, volume filter 0.1).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub theta: f64,
    pub alpha: f64,
    pub edge_threshold: f64,
    pub min_volume_ratio: f64,
    pub seed: u64,
    pub decile: Option<u8>,
    pub year: Option<i32>,
    pub market_index: Option<PathBuf>,
    pub riskfree: Option<PathBuf>,
    pub log_returns: bool,
    pub two_sided_herding: bool,
    pub raw_factor: bool,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            input: input.into(),
            out: out.into(),
            theta: behavior::DEFAULT_THETA,
            alpha: herding::DEFAULT_ALPHA,
            edge_threshold: network::DEFAULT_EDGE_THRESHOLD,
            min_volume_ratio: network::DEFAULT_MIN_VOLUME_RATIO,
            seed: 42,
            decile: None,
            year: None,
            market_index: None,
            riskfree: None,
            log_returns: false,
            two_sided_herding: false,
            raw_factor: false,
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(PipelineError::Config(format!(
                "theta must be in (0,1), got {}",
                self.theta
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PipelineError::Config(format!(
                "alpha must be in (0,1), got {}",
                self.alpha
            )));
        }
        if !self.edge_threshold.is_finite() || self.edge_threshold < 0.0 {
            return Err(PipelineError::Config(format!(
                "edge threshold must be non-negative, got {}",
                self.edge_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_volume_ratio) {
            return Err(PipelineError::Config(format!(
                "min volume ratio must be in [0,1], got {}",
                self.min_volume_ratio
            )));
        }
        if let Some(d) = self.decile {
            if !(1..=10).contains(&d) {
                return Err(PipelineError::Config(format!("decile must be 1..=10, got {d}")));
            }
        }
        Ok(())
    }

    fn herding_test(&self) -> HerdingTest {
        if self.two_sided_herding {
            HerdingTest::TwoSidedTail
        } else {
            HerdingTest::PmfAtObserved
        }
    }

    fn factor_mode(&self) -> FactorMode {
        if self.raw_factor {
            FactorMode::Raw
        } else {
            FactorMode::Standardized
        }
    }

    fn years<'a>(&self, panel: &'a TradePanel) -> Vec<i32> {
        panel
            .years()
            .iter()
            .map(|y| y.year)
            .filter(|&y| self.year.map_or(true, |want| want == y))
            .collect()
    }
}

pub fn load_panel(cfg: &RunConfig) -> Result<TradePanel, PipelineError> {
    cfg.validate()?;
    let kind = if cfg.log_returns {
        ReturnKind::Log
    } else {
        ReturnKind::Simple
    };
    Ok(panel::ingest_with(&cfg.input, kind)?)
}

fn out_writer(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>, PipelineError> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(BufWriter::new(File::create(cfg.out.join(name))?))
}

fn write_json<T: Serialize>(cfg: &RunConfig, name: &str, value: &T) -> Result<(), PipelineError> {
    let mut w = out_writer(cfg, name)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// ingest

#[derive(Serialize)]
pub struct PanelSummary {
    pub n_stocks: usize,
    pub n_members: usize,
    pub n_days: usize,
    pub years: Vec<i32>,
    pub n_trade_records: usize,
    /// Per-decile share of the (buy+sell) amount by investor type.
    pub investor_shares: BTreeMap<u8, BTreeMap<String, f64>>,
    pub warnings: Vec<String>,
}

pub fn panel_summary(panel: &TradePanel) -> PanelSummary {
    let mut shares = BTreeMap::new();
    for d in 1..=10u8 {
        if let Ok(s) = panel.investor_share(d) {
            shares.insert(
                d,
                s.into_iter()
                    .map(|(t, v)| (t.code().to_string(), v))
                    .collect(),
            );
        }
    }
    PanelSummary {
        n_stocks: panel.stocks().len(),
        n_members: panel.members().len(),
        n_days: panel.n_days(),
        years: panel.years().iter().map(|y| y.year).collect(),
        n_trade_records: panel.n_trade_records(),
        investor_shares: shares,
        warnings: panel.warnings().to_vec(),
    }
}

pub fn run_ingest(cfg: &RunConfig) -> Result<(), PipelineError> {
    let panel = load_panel(cfg)?;
    write_ingest(cfg, &panel)
}

fn write_ingest(cfg: &RunConfig, panel: &TradePanel) -> Result<(), PipelineError> {
    write_json(cfg, "panel_summary.json", &panel_summary(panel))
}

// ---------------------------------------------------------------------
// synth

pub fn run_synth(cfg: &RunConfig, spec: Option<&Path>) -> Result<(), PipelineError> {
    let (mut market, agents) = match spec {
        Some(path) => synth::parse_spec(&std::fs::read_to_string(path)?)?,
        None => (synth::default_market(cfg.seed), synth::default_agents()),
    };
    if spec.is_none() {
        market.seed = cfg.seed;
    }
    let bundle = synth::generate(&market, &agents)?;
    bundle.write_dir(&cfg.out)?;
    Ok(())
}

// ---------------------------------------------------------------------
// classify

pub fn classify_artifacts(
    cfg: &RunConfig,
    panel: &TradePanel,
) -> (Vec<MemberProfile>, HashMap<String, MemberClass>) {
    let decile = cfg.decile.unwrap_or(1);
    let mut profiles = behavior::build_member_profiles(
        panel,
        decile,
        behavior::MIN_OVERLAP_DAYS,
        cfg.min_volume_ratio,
    );
    let classes = behavior::classify_members(&mut profiles, cfg.min_volume_ratio);
    (profiles, classes)
}

pub fn run_classify(cfg: &RunConfig) -> Result<(), PipelineError> {
    let panel = load_panel(cfg)?;
    let (profiles, _) = classify_artifacts(cfg, &panel);
    write_classify(cfg, &profiles)
}

fn write_classify(cfg: &RunConfig, profiles: &[MemberProfile]) -> Result<(), PipelineError> {
    let mut w = out_writer(cfg, "member_profiles.csv")?;
    writeln!(
        w,
        "member_id,name,domicile,corr_individual,corr_institution,corr_foreigner,total_volume,class"
    )?;
    for p in profiles {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.2},{}",
            p.member_id,
            p.name,
            p.domicile.code(),
            p.corr_individual,
            p.corr_institution,
            p.corr_foreigner,
            p.volume,
            p.class.label()
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// measures

pub fn measures_artifacts(cfg: &RunConfig, panel: &TradePanel) -> Vec<BehaviorScore> {
    let deciles: Vec<u8> = match cfg.decile {
        Some(d) => vec![d],
        None => (1..=10).collect(),
    };
    let years = cfg.years(panel);
    let mut entities: Vec<Entity<'_>> = panel
        .members()
        .iter()
        .map(|m| Entity::Member(m.id.as_str()))
        .collect();
    entities.extend(InvestorType::ALL.map(Entity::Investor));

    let mut rows = Vec::new();
    for entity in entities {
        for &decile in &deciles {
            for &year in &years {
                if let Ok(score) = behavior::behavior_score(
                    panel,
                    entity,
                    decile,
                    year,
                    cfg.theta,
                    behavior::MIN_OVERLAP_DAYS,
                ) {
                    rows.push(score);
                }
            }
        }
    }
    rows.sort_by(|a, b| (&a.entity, a.decile, a.year).cmp(&(&b.entity, b.decile, b.year)));
    rows
}

pub fn run_measures(cfg: &RunConfig) -> Result<(), PipelineError> {
    let panel = load_panel(cfg)?;
    let rows = measures_artifacts(cfg, &panel);
    write_measures(cfg, &rows)
}

fn write_measures(cfg: &RunConfig, rows: &[BehaviorScore]) -> Result<(), PipelineError> {
    let mut w = out_writer(cfg, "behavior_scores.csv")?;
    writeln!(w, "entity,decile,year,D,T,n_stocks")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{}",
            r.entity, r.decile, r.year, r.directionality, r.trend, r.n_stocks
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// herding

pub const HERD_GROUPS: [&str; 4] = ["ALL", "DIM", "DSM", "FRM"];

pub fn group_members(
    panel: &TradePanel,
    classes: &HashMap<String, MemberClass>,
    group: &str,
) -> Vec<usize> {
    (0..panel.members().len())
        .filter(|&m| {
            let id = &panel.members()[m].id;
            match group {
                "ALL" => true,
                "DIM" => classes.get(id) == Some(&MemberClass::Dim),
                "DSM" => classes.get(id) == Some(&MemberClass::Dsm),
                "FRM" => classes.get(id) == Some(&MemberClass::Frm),
                _ => false,
            }
        })
        .collect()
}

pub struct HerdingArtifacts {
    /// (group label, scored series) per stock and year.
    pub series: Vec<(String, HerdingSeries)>,
    /// (stock id, year, group, DH) rows.
    pub directions: Vec<(String, i32, String, f64)>,
}

pub fn herding_artifacts(
    cfg: &RunConfig,
    panel: &TradePanel,
    classes: &HashMap<String, MemberClass>,
) -> Result<HerdingArtifacts, PipelineError> {
    let stocks = panel.stocks_in_decile(cfg.decile.unwrap_or(1));
    let years = cfg.years(panel);
    let mut series = Vec::new();
    let mut directions = Vec::new();
    for group in HERD_GROUPS {
        let members = group_members(panel, classes, group);
        if members.is_empty() {
            continue;
        }
        for &year in &years {
            let scored = herding::herding_panel(
                panel,
                &members,
                &stocks,
                year,
                cfg.alpha,
                cfg.herding_test(),
                herding::MIN_TRADERS,
            )?;
            for s in scored {
                if let Ok(dh) = herding::series_direction(panel, &s) {
                    directions.push((
                        panel.stocks()[s.stock].id.clone(),
                        year,
                        group.to_string(),
                        dh,
                    ));
                }
                series.push((group.to_string(), s));
            }
        }
    }
    directions.sort_by(|a, b| (&a.0, a.1, &a.2).cmp(&(&b.0, b.1, &b.2)));
    Ok(HerdingArtifacts { series, directions })
}

pub fn run_herding(cfg: &RunConfig) -> Result<(), PipelineError> {
    let panel = load_panel(cfg)?;
    let (_, classes) = classify_artifacts(cfg, &panel);
    let artifacts = herding_artifacts(cfg, &panel, &classes)?;
    write_herding(cfg, &panel, &artifacts)
}

fn write_herding(
    cfg: &RunConfig,
    panel: &TradePanel,
    artifacts: &HerdingArtifacts,
) -> Result<(), PipelineError> {
    let mut rows: Vec<(String, NaiveDate, &str, u32, u32, u8, i8)> = Vec::new();
    for (group, series) in &artifacts.series {
        let stock_id = &panel.stocks()[series.stock].id;
        for d in &series.days {
            rows.push((
                stock_id.clone(),
                panel.calendar()[d.day as usize],
                group,
                d.n_buyers,
                d.n_sellers,
                d.herds as u8,
                d.signed,
            ));
        }
    }
    rows.sort_by(|a, b| (&a.0, a.1, a.2).cmp(&(&b.0, b.1, b.2)));
    let mut w = out_writer(cfg, "herding.csv")?;
    writeln!(w, "stock,date,group,n_buy,n_sell,h,H")?;
    for (stock, date, group, nb, ns, h, hh) in rows {
        writeln!(w, "{stock},{date},{group},{nb},{ns},{h},{hh}")?;
    }
    w.flush()?;

    let mut w = out_writer(cfg, "herding_direction.csv")?;
    writeln!(w, "stock,year,group,DH")?;
    for (stock, year, group, dh) in &artifacts.directions {
        writeln!(w, "{stock},{year},{group},{dh:.6}")?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// network

pub fn network_artifacts(
    cfg: &RunConfig,
    panel: &TradePanel,
) -> Result<(MemberNetwork, Partition), PipelineError> {
    let net = network::build_network(
        panel,
        cfg.decile.unwrap_or(1),
        cfg.edge_threshold,
        cfg.min_volume_ratio,
        network::DEFAULT_MIN_HISTORY_DAYS,
        network::DEFAULT_MIN_OVERLAP_DAYS,
    )?;
    let partition = network::detect_communities(&net, cfg.seed)?;
    Ok((net, partition))
}

#[derive(Serialize)]
struct NetworkNodeOut<'a> {
    member_id: &'a str,
    domicile: &'a str,
    class: &'a str,
    volume: f64,
    community: usize,
}

#[derive(Serialize)]
struct NetworkEdgeOut<'a> {
    source: &'a str,
    target: &'a str,
    weight: f64,
}

#[derive(Serialize)]
struct NetworkOut<'a> {
    threshold: f64,
    n_nodes: usize,
    n_edges: usize,
    n_communities: usize,
    modularity: f64,
    codelength_bits: f64,
    nodes: Vec<NetworkNodeOut<'a>>,
    edges: Vec<NetworkEdgeOut<'a>>,
}

pub fn run_network(cfg: &RunConfig) -> Result<(), PipelineError> {
    let panel = load_panel(cfg)?;
    let (_, classes) = classify_artifacts(cfg, &panel);
    let (net, partition) = network_artifacts(cfg, &panel)?;
    write_network(cfg, &classes, &net, &partition)
}

fn write_network(
    cfg: &RunConfig,
    classes: &HashMap<String, MemberClass>,
    net: &MemberNetwork,
    partition: &Partition,
) -> Result<(), PipelineError> {
    let nodes: Vec<NetworkNodeOut<'_>> = net
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| NetworkNodeOut {
            member_id: &n.member_id,
            domicile: n.domicile.code(),
            class: classes
                .get(&n.member_id)
                .copied()
                .unwrap_or(MemberClass::Excluded)
                .label(),
            volume: n.volume,
            community: partition.labels[i],
        })
        .collect();
    let edges: Vec<NetworkEdgeOut<'_>> = net
        .edges
        .iter()
        .map(|&(a, b, w)| NetworkEdgeOut {
            source: &net.nodes[a].member_id,
            target: &net.nodes[b].member_id,
            weight: w,
        })
        .collect();
    write_json(
        cfg,
        "network.json",
        &NetworkOut {
            threshold: net.threshold,
            n_nodes: net.n_nodes(),
            n_edges: net.edges.len(),
            n_communities: partition.n_communities,
            modularity: partition.modularity,
            codelength_bits: partition.codelength,
            nodes,
            edges,
        },
    )
}

// ---------------------------------------------------------------------
// rmt

pub struct RmtArtifacts {
    pub reports: Vec<SpectralReport>,
    pub summaries: Vec<DecileSpectralSummary>,
}

pub fn rmt_artifacts(cfg: &RunConfig, panel: &TradePanel) -> Result<RmtArtifacts, PipelineError> {
    let years = cfg.years(panel);
    let mut reports = Vec::new();
    let mut summaries = Vec::new();
    for &year in &years {
        for d in 1..=10u8 {
            if cfg.decile.is_some_and(|want| want != d) {
                continue;
            }
            for s in panel.stocks_in_decile(d) {
                if let Ok(rep) = spectral::spectral_report(
                    panel,
                    &panel.stocks()[s].id,
                    year,
                    cfg.factor_mode(),
                    spectral::DEFAULT_MIN_MEMBERS,
                    spectral::DEFAULT_MIN_ACTIVE_DAYS,
                ) {
                    reports.push(rep);
                }
            }
        }
        match spectral::decile_spectral_summary(
            panel,
            year,
            cfg.factor_mode(),
            cfg.decile,
            spectral::DEFAULT_MIN_MEMBERS,
            spectral::DEFAULT_MIN_ACTIVE_DAYS,
        ) {
            Ok(rows) => summaries.extend(rows),
            Err(spectral::SpectralError::InsufficientCoverage { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    reports.sort_by(|a, b| (&a.stock_id, a.year).cmp(&(&b.stock_id, b.year)));
    Ok(RmtArtifacts { reports, summaries })
}

pub fn run_rmt(cfg: &RunConfig) -> Result<(), PipelineError> {
    let panel = load_panel(cfg)?;
    let artifacts = rmt_artifacts(cfg, &panel)?;
    write_rmt(cfg, &panel, &artifacts)
}

fn write_rmt(
    cfg: &RunConfig,
    panel: &TradePanel,
    artifacts: &RmtArtifacts,
) -> Result<(), PipelineError> {
    let mut w = out_writer(cfg, "spectrum.csv")?;
    writeln!(w, "stock,year,rank,eigenvalue")?;
    for rep in &artifacts.reports {
        for (rank, lambda) in rep.eigenvalues.iter().enumerate() {
            writeln!(w, "{},{},{},{:.6}", rep.stock_id, rep.year, rank + 1, lambda)?;
        }
    }
    w.flush()?;

    // reference density on the panel's average aspect ratio
    let mut w = out_writer(cfg, "mp_reference.csv")?;
    writeln!(w, "lambda,density")?;
    if !artifacts.reports.is_empty() {
        let mean_q = artifacts
            .reports
            .iter()
            .map(|r| r.n_days as f64 / r.n_members as f64)
            .sum::<f64>()
            / artifacts.reports.len() as f64;
        let bounds = spectral::mp_bounds(mean_q, 1.0)?;
        let hi = bounds.lambda_max * 1.25;
        let steps = 400usize;
        for i in 0..=steps {
            let lambda = hi * i as f64 / steps as f64;
            writeln!(w, "{:.6},{:.6}", lambda, spectral::mp_density(lambda, &bounds))?;
        }
    }
    w.flush()?;

    let mut w = out_writer(cfg, "factors.csv")?;
    writeln!(w, "stock,year,date,factor")?;
    for rep in &artifacts.reports {
        let slice = panel.year_slice(rep.year).expect("report year exists");
        for (k, f) in rep.factor.iter().enumerate() {
            let date = panel.calendar()[slice.days.0 as usize + k];
            writeln!(w, "{},{},{},{:.6}", rep.stock_id, rep.year, date, f)?;
        }
    }
    w.flush()?;

    let mut w = out_writer(cfg, "decile_summary.csv")?;
    writeln!(
        w,
        "year,decile,n_stocks_used,n_stocks_total,mean_lambda1,mean_abs_factor_return_corr"
    )?;
    for s in &artifacts.summaries {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6}",
            s.year,
            s.decile,
            s.n_stocks_used,
            s.n_stocks_total,
            s.mean_lambda1,
            s.mean_abs_factor_return_corr
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// regress

pub struct RegressArtifacts {
    pub result: RegressionResult,
    pub r2_market_only: f64,
    pub r2_full: f64,
}

fn load_market_index(path: &Path, panel: &TradePanel) -> Result<Vec<f64>, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut by_date: HashMap<NaiveDate, f64> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (d, r) = (parts.next(), parts.next());
        let (d, r) = match (d, r) {
            (Some(d), Some(r)) => (d.trim(), r.trim()),
            _ => {
                return Err(PipelineError::Config(format!(
                    "{}: line {}: expected date,return",
                    path.display(),
                    i + 1
                )))
            }
        };
        let date = NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|_| {
            PipelineError::Config(format!("{}: line {}: bad date {d:?}", path.display(), i + 1))
        })?;
        let ret: f64 = r.parse().map_err(|_| {
            PipelineError::Config(format!("{}: line {}: bad return {r:?}", path.display(), i + 1))
        })?;
        by_date.insert(date, ret);
    }
    Ok(panel
        .calendar()
        .iter()
        .map(|d| by_date.get(d).copied().unwrap_or(f64::NAN))
        .collect())
}

fn load_riskfree_points(path: &Path) -> Result<Vec<(NaiveDate, f64)>, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        match (parts.next(), parts.next()) {
            (Some(d), Some(y)) => {
                let date = NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").map_err(|_| {
                    PipelineError::Config(format!(
                        "{}: line {}: bad date {d:?}",
                        path.display(),
                        i + 1
                    ))
                })?;
                let yld: f64 = y.trim().parse().map_err(|_| {
                    PipelineError::Config(format!(
                        "{}: line {}: bad yield {y:?}",
                        path.display(),
                        i + 1
                    ))
                })?;
                out.push((date, yld));
            }
            _ => {
                return Err(PipelineError::Config(format!(
                    "{}: line {}: expected date,annual_yield",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Signed herding per (stock, day) for one member set over all years.
pub fn herding_by_day(
    cfg: &RunConfig,
    panel: &TradePanel,
    members: &[usize],
    stocks: &[usize],
) -> Result<HerdingByDay, PipelineError> {
    let mut map = HerdingByDay::new();
    for slice in panel.years() {
        let scored = herding::herding_panel(
            panel,
            members,
            stocks,
            slice.year,
            cfg.alpha,
            cfg.herding_test(),
            herding::MIN_TRADERS,
        )?;
        for series in scored {
            for d in &series.days {
                map.insert((series.stock, d.day), d.signed);
            }
        }
    }
    Ok(map)
}

pub fn regress_artifacts(
    cfg: &RunConfig,
    panel: &TradePanel,
    classes: &HashMap<String, MemberClass>,
) -> Result<RegressArtifacts, PipelineError> {
    let stocks = panel.stocks_in_decile(cfg.decile.unwrap_or(1));
    let dsm = group_members(panel, classes, "DSM");
    let dim = group_members(panel, classes, "DIM");
    let frm = group_members(panel, classes, "FRM");
    for (name, members) in [("DSM", &dsm), ("DIM", &dim), ("FRM", &frm)] {
        if members.is_empty() {
            return Err(PipelineError::Config(format!(
                "cannot regress: classified group {name} is empty"
            )));
        }
    }
    let h_dsm = herding_by_day(cfg, panel, &dsm, &stocks)?;
    let h_dim = herding_by_day(cfg, panel, &dim, &stocks)?;
    let h_frm = herding_by_day(cfg, panel, &frm, &stocks)?;
    let market = match &cfg.market_index {
        Some(path) => load_market_index(path, panel)?,
        None => regress::value_weighted_market(panel, 1),
    };
    let riskfree = match &cfg.riskfree {
        Some(path) => {
            let points = load_riskfree_points(path)?;
            regress::resolve_riskfree(panel, Some(&points))?
        }
        None => regress::resolve_riskfree(panel, None)?,
    };
    let assembled =
        regress::assemble_design(panel, &stocks, &h_dsm, &h_dim, &h_frm, &market, &riskfree)?;
    let result = regress::run_regression(&assembled)?;
    let (r2_market_only, r2_full) = regress::r2_delta(&assembled)?;
    Ok(RegressArtifacts {
        result,
        r2_market_only,
        r2_full,
    })
}

pub fn run_regress(cfg: &RunConfig) -> Result<(), PipelineError> {
    let panel = load_panel(cfg)?;
    let (_, classes) = classify_artifacts(cfg, &panel);
    let artifacts = regress_artifacts(cfg, &panel, &classes)?;
    write_regress(cfg, &artifacts)
}

#[derive(Serialize)]
struct RegressionOut<'a> {
    #[serde(flatten)]
    result: &'a RegressionResult,
    r2_market_only: f64,
    r2_full: f64,
}

fn write_regress(cfg: &RunConfig, artifacts: &RegressArtifacts) -> Result<(), PipelineError> {
    write_json(
        cfg,
        "regression.json",
        &RegressionOut {
            result: &artifacts.result,
            r2_market_only: artifacts.r2_market_only,
            r2_full: artifacts.r2_full,
        },
    )?;
    let mut w = out_writer(cfg, "regression.txt")?;
    let r = &artifacts.result;
    writeln!(w, "{:=<78}", "")?;
    writeln!(w, "Dep. Variable: excess_return        Method: Least Squares")?;
    writeln!(
        w,
        "No. Observations: {:<12} R-squared: {:.3}    Adj. R-squared: {:.3}",
        r.n_obs, r.r_squared, r.adj_r_squared
    )?;
    writeln!(
        w,
        "Dropped rows: {:<16} Market-only R-squared: {:.3}",
        r.dropped, artifacts.r2_market_only
    )?;
    writeln!(w, "{:-<78}", "")?;
    writeln!(
        w,
        "{:<12} {:>10} {:>10} {:>10} {:>8} {:>10} {:>10}",
        "", "coef", "std err", "t", "P>|t|", "[0.025", "0.975]"
    )?;
    writeln!(w, "{:-<78}", "")?;
    for row in &r.rows {
        writeln!(
            w,
            "{:<12} {:>10.4} {:>10.4} {:>10.3} {:>8.3} {:>10.4} {:>10.4}",
            row.name, row.coef, row.std_err, row.t, row.p, row.ci_low, row.ci_high
        )?;
    }
    writeln!(w, "{:=<78}", "")?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------
// report

#[derive(Serialize)]
pub struct GroupHerdingSummary {
    pub mean_h: f64,
    pub mean_dh: f64,
    pub n_direction_samples: usize,
}

#[derive(Serialize)]
pub struct Summary {
    pub panel: PanelSummary,
    pub class_counts: BTreeMap<String, usize>,
    pub behavior_by_class: BTreeMap<String, BTreeMap<String, f64>>,
    pub herding_by_group: BTreeMap<String, GroupHerdingSummary>,
    pub network: NetworkSummary,
    pub decile_spectral: Vec<DecileSpectralSummary>,
    pub regression: RegressionSummaryOut,
}

#[derive(Serialize)]
pub struct NetworkSummary {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_communities: usize,
    pub modularity: f64,
    pub codelength_bits: f64,
}

#[derive(Serialize)]
pub struct RegressionSummaryOut {
    pub coefficients: BTreeMap<String, f64>,
    pub r_squared: f64,
    pub r2_market_only: f64,
    pub n_obs: usize,
}

#[allow(clippy::too_many_arguments)]
fn build_summary(
    cfg: &RunConfig,
    panel: &TradePanel,
    profiles: &[MemberProfile],
    classes: &HashMap<String, MemberClass>,
    herding_art: &HerdingArtifacts,
    net: &MemberNetwork,
    partition: &Partition,
    rmt: &RmtArtifacts,
    reg: &RegressArtifacts,
) -> Summary {
    let mut class_counts = BTreeMap::new();
    for p in profiles {
        *class_counts.entry(p.class.label().to_string()).or_insert(0) += 1;
    }

    // mean decile-1 D and T per class over the members of that class
    let scores = measures_artifacts(
        &RunConfig {
            decile: Some(cfg.decile.unwrap_or(1)),
            ..cfg.clone()
        },
        panel,
    );
    let mut behavior_by_class: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for s in &scores {
        if let Some(class) = classes.get(&s.entity) {
            let e = behavior_by_class
                .entry(class.label().to_string())
                .or_insert((0.0, 0.0, 0));
            e.0 += s.directionality;
            e.1 += s.trend;
            e.2 += 1;
        }
    }
    let behavior_by_class = behavior_by_class
        .into_iter()
        .map(|(k, (d, t, n))| {
            let mut m = BTreeMap::new();
            m.insert("mean_directionality".to_string(), d / n as f64);
            m.insert("mean_trend".to_string(), t / n as f64);
            m.insert("n_scores".to_string(), n as f64);
            (k, m)
        })
        .collect();

    let mut herding_by_group = BTreeMap::new();
    for group in HERD_GROUPS {
        let series: Vec<&HerdingSeries> = herding_art
            .series
            .iter()
            .filter(|(g, _)| g == group)
            .map(|(_, s)| s)
            .collect();
        if series.is_empty() {
            continue;
        }
        let (mut fired, mut total) = (0usize, 0usize);
        for s in &series {
            fired += s.days.iter().filter(|d| d.herds).count();
            total += s.days.len();
        }
        let dirs: Vec<f64> = herding_art
            .directions
            .iter()
            .filter(|(_, _, g, _)| g == group)
            .map(|&(_, _, _, dh)| dh)
            .collect();
        herding_by_group.insert(
            group.to_string(),
            GroupHerdingSummary {
                mean_h: if total > 0 { fired as f64 / total as f64 } else { 0.0 },
                mean_dh: if dirs.is_empty() {
                    f64::NAN
                } else {
                    dirs.iter().sum::<f64>() / dirs.len() as f64
                },
                n_direction_samples: dirs.len(),
            },
        );
    }

    Summary {
        panel: panel_summary(panel),
        class_counts,
        behavior_by_class,
        herding_by_group,
        network: NetworkSummary {
            n_nodes: net.n_nodes(),
            n_edges: net.edges.len(),
            n_communities: partition.n_communities,
            modularity: partition.modularity,
            codelength_bits: partition.codelength,
        },
        decile_spectral: rmt.summaries.clone(),
        regression: RegressionSummaryOut {
            coefficients: reg
                .result
                .rows
                .iter()
                .map(|r| (r.name.clone(), r.coef))
                .collect(),
            r_squared: reg.result.r_squared,
            r2_market_only: reg.r2_market_only,
            n_obs: reg.result.n_obs,
        },
    }
}

pub fn run_report(cfg: &RunConfig) -> Result<(), PipelineError> {
    let panel = load_panel(cfg)?;
    let (profiles, classes) = classify_artifacts(cfg, &panel);
    let herding_art = herding_artifacts(cfg, &panel, &classes)?;
    let (net, partition) = network_artifacts(cfg, &panel)?;
    let rmt = rmt_artifacts(cfg, &panel)?;
    let reg = regress_artifacts(cfg, &panel, &classes)?;
    let summary = build_summary(
        cfg, &panel, &profiles, &classes, &herding_art, &net, &partition, &rmt, &reg,
    );
    write_json(cfg, "summary.json", &summary)
}

// ---------------------------------------------------------------------
// all

pub fn run_all(cfg: &RunConfig) -> Result<(), PipelineError> {
    let panel = load_panel(cfg)?;
    write_ingest(cfg, &panel)?;
    let (profiles, classes) = classify_artifacts(cfg, &panel);
    write_classify(cfg, &profiles)?;
    let scores = measures_artifacts(cfg, &panel);
    write_measures(cfg, &scores)?;
    let herding_art = herding_artifacts(cfg, &panel, &classes)?;
    write_herding(cfg, &panel, &herding_art)?;
    let (net, partition) = network_artifacts(cfg, &panel)?;
    write_network(cfg, &classes, &net, &partition)?;
    let rmt = rmt_artifacts(cfg, &panel)?;
    write_rmt(cfg, &panel, &rmt)?;
    let reg = regress_artifacts(cfg, &panel, &classes)?;
    write_regress(cfg, &reg)?;
    let summary = build_summary(
        cfg, &panel, &profiles, &classes, &herding_art, &net, &partition, &rmt, &reg,
    );
    write_json(cfg, "summary.json", &summary)
}
