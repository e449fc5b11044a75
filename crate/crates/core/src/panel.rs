//! Ingestion of the daily buy/sell CSV inputs into a validated in-memory
//! panel, plus the panel-level statistics (market-cap deciles, per-decile
//! investor shares, inventory series).
//!
//! Input bundle (CSV, UTF-8, header row required):
//!   trades.csv          date,stock_id,member_id,buy_amount,sell_amount
//!   investor_flows.csv  date,stock_id,investor_type{IND|INS|FRG},buy_amount,sell_amount
//!   prices.csv          date,stock_id,close
//!   stocks.csv          stock_id,market_cap
//!   members.csv         member_id,name,domicile{D|F}

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("missing input file: {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: malformed row: {msg}")]
    MalformedRow {
        file: String,
        line: u64,
        msg: String,
    },
    #[error("{file}: duplicate key {key}")]
    DuplicateKey { file: String, key: String },
    #[error("unknown reference: {0}")]
    UnknownReference(String),
    #[error("non-positive price for {stock} on {date}")]
    NonPositivePrice { stock: String, date: NaiveDate },
    #[error("stock {stock}: prices cover {found} of {expected} trading days")]
    IncompletePrices {
        stock: String,
        found: usize,
        expected: usize,
    },
    #[error("need at least 10 stocks for decile assignment, got {0}")]
    TooFewStocks(usize),
    #[error("decile {0} has no investor flow activity")]
    EmptyDecile(u8),
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
    #[error("unknown stock: {0}")]
    UnknownStock(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The three investor categories reported alongside member trades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum InvestorType {
    Individual,
    Institution,
    Foreigner,
}

impl InvestorType {
    pub const ALL: [InvestorType; 3] = [
        InvestorType::Individual,
        InvestorType::Institution,
        InvestorType::Foreigner,
    ];

    pub fn code(self) -> &'static str {
        match self {
            InvestorType::Individual => "IND",
            InvestorType::Institution => "INS",
            InvestorType::Foreigner => "FRG",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "IND" => Some(InvestorType::Individual),
            "INS" => Some(InvestorType::Institution),
            "FRG" => Some(InvestorType::Foreigner),
            _ => None,
        }
    }

    fn index(self) -> usize {
        match self {
            InvestorType::Individual => 0,
            InvestorType::Institution => 1,
            InvestorType::Foreigner => 2,
        }
    }
}

impl fmt::Display for InvestorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Domicile {
    Domestic,
    Foreign,
}

impl Domicile {
    pub fn code(self) -> &'static str {
        match self {
            Domicile::Domestic => "D",
            Domicile::Foreign => "F",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "D" => Some(Domicile::Domestic),
            "F" => Some(Domicile::Foreign),
            _ => None,
        }
    }
}

/// One member/stock/day buy-sell observation (raw ingestion row).
#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord {
    pub date: NaiveDate,
    pub stock_id: String,
    pub member_id: String,
    pub buy_amount: f64,
    pub sell_amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvestorFlowRecord {
    pub date: NaiveDate,
    pub stock_id: String,
    pub investor_type: InvestorType,
    pub buy_amount: f64,
    pub sell_amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceRecord {
    pub date: NaiveDate,
    pub stock_id: String,
    pub close: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StockMetaRecord {
    pub stock_id: String,
    pub market_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberMetaRecord {
    pub member_id: String,
    pub name: String,
    pub domicile: Domicile,
}

/// Compact per-day observation stored against a (member, stock) or
/// (investor type, stock) pair; `day` indexes the trading calendar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs {
    pub day: u32,
    pub buy: f64,
    pub sell: f64,
}

#[derive(Debug, Clone)]
pub struct StockInfo {
    pub id: String,
    pub market_cap: f64,
    pub decile: u8,
}

#[derive(Debug, Clone)]
pub struct MemberInfo {
    pub id: String,
    pub name: String,
    pub domicile: Domicile,
    /// First/last calendar day the member traded, if it traded at all.
    pub first_day: Option<u32>,
    pub last_day: Option<u32>,
    pub active_days: usize,
    /// Total buy+sell over the whole panel.
    pub volume: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct YearSlice {
    pub year: i32,
    pub days: (u32, u32), // half-open day-index range
}

impl YearSlice {
    pub fn range(&self) -> Range<usize> {
        self.days.0 as usize..self.days.1 as usize
    }

    pub fn len(&self) -> usize {
        (self.days.1 - self.days.0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.days.0 == self.days.1
    }
}

/// An entity whose inventory variation can be extracted from the panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entity<'a> {
    Member(&'a str),
    Investor(InvestorType),
}

/// Daily net flow x(t) = buy(t) - sell(t) of one entity on one stock,
/// aligned to one year of the trading calendar. Days with no record are
/// zero-filled and flagged inactive.
#[derive(Debug, Clone)]
pub struct InventorySeries {
    pub stock_id: String,
    pub year: i32,
    pub values: Vec<f64>,
    pub active: Vec<bool>,
}

/// The validated master dataset. Immutable once built; all analysis
/// modules read it concurrently.
#[derive(Debug)]
pub struct TradePanel {
    calendar: Vec<NaiveDate>,
    years: Vec<YearSlice>,
    stocks: Vec<StockInfo>,
    stock_index: HashMap<String, usize>,
    members: Vec<MemberInfo>,
    member_index: HashMap<String, usize>,
    trades: HashMap<(u32, u32), Vec<Obs>>, // (member, stock)
    flows: HashMap<(u8, u32), Vec<Obs>>,   // (investor type, stock)
    closes: Vec<Vec<f64>>,                 // per stock, aligned to calendar
    returns: Vec<Vec<f64>>,                // r[0] is NaN (no prior close)
    warnings: Vec<String>,
}

impl TradePanel {
    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn n_days(&self) -> usize {
        self.calendar.len()
    }

    pub fn years(&self) -> &[YearSlice] {
        &self.years
    }

    pub fn year_slice(&self, year: i32) -> Option<YearSlice> {
        self.years.iter().copied().find(|y| y.year == year)
    }

    /// Day-index range of a year restricted to days with a defined return
    /// (the very first calendar day has none).
    pub fn return_range(&self, slice: YearSlice) -> Range<usize> {
        (slice.days.0 as usize).max(1)..slice.days.1 as usize
    }

    pub fn stocks(&self) -> &[StockInfo] {
        &self.stocks
    }

    pub fn members(&self) -> &[MemberInfo] {
        &self.members
    }

    pub fn stock_idx(&self, id: &str) -> Option<usize> {
        self.stock_index.get(id).copied()
    }

    pub fn member_idx(&self, id: &str) -> Option<usize> {
        self.member_index.get(id).copied()
    }

    pub fn stocks_in_decile(&self, decile: u8) -> Vec<usize> {
        (0..self.stocks.len())
            .filter(|&s| self.stocks[s].decile == decile)
            .collect()
    }

    pub fn trade_obs(&self, member: usize, stock: usize) -> &[Obs] {
        self.trades
            .get(&(member as u32, stock as u32))
            .map_or(&[], |v| v.as_slice())
    }

    pub fn flow_obs(&self, investor: InvestorType, stock: usize) -> &[Obs] {
        self.flows
            .get(&(investor.index() as u8, stock as u32))
            .map_or(&[], |v| v.as_slice())
    }

    pub fn closes(&self, stock: usize) -> &[f64] {
        &self.closes[stock]
    }

    /// Daily simple returns close(t)/close(t-1) - 1; index 0 is NaN.
    pub fn returns(&self, stock: usize) -> &[f64] {
        &self.returns[stock]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn n_trade_records(&self) -> usize {
        self.trades.values().map(|v| v.len()).sum()
    }

    /// Mean total volume over members that traded at all; the volume
    /// exclusion filters compare against a tenth of this.
    pub fn mean_member_volume(&self) -> f64 {
        let traded: Vec<f64> = self
            .members
            .iter()
            .filter(|m| m.volume > 0.0)
            .map(|m| m.volume)
            .collect();
        if traded.is_empty() {
            0.0
        } else {
            traded.iter().sum::<f64>() / traded.len() as f64
        }
    }

    /// Daily net flow of an entity on a stock over one year.
    pub fn inventory_series(
        &self,
        entity: Entity<'_>,
        stock_id: &str,
        year: i32,
    ) -> Result<InventorySeries, PanelError> {
        let stock = self
            .stock_idx(stock_id)
            .ok_or_else(|| PanelError::UnknownStock(stock_id.to_string()))?;
        let slice = self
            .year_slice(year)
            .ok_or_else(|| PanelError::UnknownReference(format!("year {year}")))?;
        let obs: &[Obs] = match entity {
            Entity::Member(id) => {
                let m = self
                    .member_idx(id)
                    .ok_or_else(|| PanelError::UnknownEntity(id.to_string()))?;
                self.trade_obs(m, stock)
            }
            Entity::Investor(t) => self.flow_obs(t, stock),
        };
        let mut values = vec![0.0; slice.len()];
        let mut active = vec![false; slice.len()];
        for o in obs {
            if o.day >= slice.days.0 && o.day < slice.days.1 {
                let k = (o.day - slice.days.0) as usize;
                values[k] = o.buy - o.sell;
                active[k] = true;
            }
        }
        Ok(InventorySeries {
            stock_id: stock_id.to_string(),
            year,
            values,
            active,
        })
    }

    /// Per-investor-type share of the total (buy+sell) transaction amount
    /// within one market-cap decile.
    pub fn investor_share(&self, decile: u8) -> Result<HashMap<InvestorType, f64>, PanelError> {
        let stocks = self.stocks_in_decile(decile);
        if stocks.is_empty() {
            return Err(PanelError::EmptyDecile(decile));
        }
        let mut totals = [0.0f64; 3];
        for &s in &stocks {
            for t in InvestorType::ALL {
                for o in self.flow_obs(t, s) {
                    totals[t.index()] += o.buy + o.sell;
                }
            }
        }
        let denom: f64 = totals.iter().sum();
        if denom <= 0.0 {
            return Err(PanelError::EmptyDecile(decile));
        }
        Ok(InvestorType::ALL
            .into_iter()
            .map(|t| (t, totals[t.index()] / denom))
            .collect())
    }

    /// Write the panel back out as the five-file CSV bundle. Rows are in
    /// canonical order, so export is a fix point under re-ingestion.
    pub fn export(&self, dir: &Path) -> Result<(), PanelError> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv_writer(dir, "trades.csv")?;
        writeln!(w, "date,stock_id,member_id,buy_amount,sell_amount")?;
        let mut keys: Vec<&(u32, u32)> = self.trades.keys().collect();
        keys.sort();
        let mut rows: Vec<(u32, &str, &str, f64, f64)> = Vec::new();
        for &&(m, s) in &keys {
            for o in &self.trades[&(m, s)] {
                rows.push((
                    o.day,
                    &self.stocks[s as usize].id,
                    &self.members[m as usize].id,
                    o.buy,
                    o.sell,
                ));
            }
        }
        rows.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        for (day, sid, mid, buy, sell) in rows {
            writeln!(w, "{},{},{},{},{}", self.calendar[day as usize], sid, mid, buy, sell)?;
        }
        w.flush()?;

        let mut w = csv_writer(dir, "investor_flows.csv")?;
        writeln!(w, "date,stock_id,investor_type,buy_amount,sell_amount")?;
        let mut rows: Vec<(u32, &str, &'static str, f64, f64)> = Vec::new();
        for t in InvestorType::ALL {
            for s in 0..self.stocks.len() {
                for o in self.flow_obs(t, s) {
                    rows.push((o.day, &self.stocks[s].id, t.code(), o.buy, o.sell));
                }
            }
        }
        rows.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        for (day, sid, code, buy, sell) in rows {
            writeln!(w, "{},{},{},{},{}", self.calendar[day as usize], sid, code, buy, sell)?;
        }
        w.flush()?;

        let mut w = csv_writer(dir, "prices.csv")?;
        writeln!(w, "date,stock_id,close")?;
        let mut sids: Vec<usize> = (0..self.stocks.len()).collect();
        sids.sort_by(|&a, &b| self.stocks[a].id.cmp(&self.stocks[b].id));
        for day in 0..self.calendar.len() {
            for &s in &sids {
                writeln!(
                    w,
                    "{},{},{}",
                    self.calendar[day], self.stocks[s].id, self.closes[s][day]
                )?;
            }
        }
        w.flush()?;

        let mut w = csv_writer(dir, "stocks.csv")?;
        writeln!(w, "stock_id,market_cap")?;
        for &s in &sids {
            writeln!(w, "{},{}", self.stocks[s].id, self.stocks[s].market_cap)?;
        }
        w.flush()?;

        let mut w = csv_writer(dir, "members.csv")?;
        writeln!(w, "member_id,name,domicile")?;
        let mut mids: Vec<usize> = (0..self.members.len()).collect();
        mids.sort_by(|&a, &b| self.members[a].id.cmp(&self.members[b].id));
        for &m in &mids {
            let info = &self.members[m];
            writeln!(w, "{},{},{}", info.id, info.name, info.domicile.code())?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_writer(dir: &Path, name: &str) -> Result<BufWriter<File>, PanelError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Market-cap decile assignment: decile 1 holds the largest caps, group
/// sizes differ by at most one, ties broken by lexicographic stock id.
pub fn assign_deciles(caps: &[(String, f64)]) -> Result<HashMap<String, u8>, PanelError> {
    if caps.len() < 10 {
        return Err(PanelError::TooFewStocks(caps.len()));
    }
    let mut order: Vec<&(String, f64)> = caps.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let n = order.len();
    let mut out = HashMap::with_capacity(n);
    for (rank, entry) in order.into_iter().enumerate() {
        // Split ranks into 10 near-equal contiguous groups.
        let decile = (rank * 10 / n) as u8 + 1;
        out.insert(entry.0.clone(), decile);
    }
    Ok(out)
}

/// Raw record bundle accepted by the panel builder; produced either by
/// the CSV reader or directly by the synthetic generator.
#[derive(Debug, Clone, Default)]
pub struct RawBundle {
    pub trades: Vec<TradeRecord>,
    pub flows: Vec<InvestorFlowRecord>,
    pub prices: Vec<PriceRecord>,
    pub stocks: Vec<StockMetaRecord>,
    pub members: Vec<MemberMetaRecord>,
}

/// How daily returns are derived from closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReturnKind {
    /// close(t)/close(t-1) - 1
    #[default]
    Simple,
    /// ln(close(t)/close(t-1))
    Log,
}

/// Read and validate a CSV input directory (simple returns).
pub fn ingest(dir: &Path) -> Result<TradePanel, PanelError> {
    ingest_with(dir, ReturnKind::Simple)
}

pub fn ingest_with(dir: &Path, returns: ReturnKind) -> Result<TradePanel, PanelError> {
    let bundle = read_bundle(dir)?;
    build_panel_with(bundle, returns)
}

fn read_bundle(dir: &Path) -> Result<RawBundle, PanelError> {
    let mut bundle = RawBundle::default();

    let mut rdr = open_csv(dir, "trades.csv")?;
    for (line, rec) in rdr.records().enumerate() {
        let rec = csv_record("trades.csv", line, rec)?;
        let f = fields("trades.csv", line, &rec, 5)?;
        bundle.trades.push(TradeRecord {
            date: parse_date("trades.csv", line, f[0])?,
            stock_id: f[1].to_string(),
            member_id: f[2].to_string(),
            buy_amount: parse_amount("trades.csv", line, f[3])?,
            sell_amount: parse_amount("trades.csv", line, f[4])?,
        });
    }

    let mut rdr = open_csv(dir, "investor_flows.csv")?;
    for (line, rec) in rdr.records().enumerate() {
        let rec = csv_record("investor_flows.csv", line, rec)?;
        let f = fields("investor_flows.csv", line, &rec, 5)?;
        let investor_type = InvestorType::parse(f[2]).ok_or_else(|| PanelError::MalformedRow {
            file: "investor_flows.csv".into(),
            line: line as u64 + 2,
            msg: format!("bad investor type {:?}", f[2]),
        })?;
        bundle.flows.push(InvestorFlowRecord {
            date: parse_date("investor_flows.csv", line, f[0])?,
            stock_id: f[1].to_string(),
            investor_type,
            buy_amount: parse_amount("investor_flows.csv", line, f[3])?,
            sell_amount: parse_amount("investor_flows.csv", line, f[4])?,
        });
    }

    let mut rdr = open_csv(dir, "prices.csv")?;
    for (line, rec) in rdr.records().enumerate() {
        let rec = csv_record("prices.csv", line, rec)?;
        let f = fields("prices.csv", line, &rec, 3)?;
        bundle.prices.push(PriceRecord {
            date: parse_date("prices.csv", line, f[0])?,
            stock_id: f[1].to_string(),
            close: parse_number("prices.csv", line, f[2])?,
        });
    }

    let mut rdr = open_csv(dir, "stocks.csv")?;
    for (line, rec) in rdr.records().enumerate() {
        let rec = csv_record("stocks.csv", line, rec)?;
        let f = fields("stocks.csv", line, &rec, 2)?;
        let cap = parse_number("stocks.csv", line, f[1])?;
        if cap <= 0.0 {
            return Err(PanelError::MalformedRow {
                file: "stocks.csv".into(),
                line: line as u64 + 2,
                msg: format!("non-positive market cap {cap}"),
            });
        }
        bundle.stocks.push(StockMetaRecord {
            stock_id: f[0].to_string(),
            market_cap: cap,
        });
    }

    let mut rdr = open_csv(dir, "members.csv")?;
    for (line, rec) in rdr.records().enumerate() {
        let rec = csv_record("members.csv", line, rec)?;
        let f = fields("members.csv", line, &rec, 3)?;
        let domicile = Domicile::parse(f[2]).ok_or_else(|| PanelError::MalformedRow {
            file: "members.csv".into(),
            line: line as u64 + 2,
            msg: format!("bad domicile {:?}", f[2]),
        })?;
        bundle.members.push(MemberMetaRecord {
            member_id: f[0].to_string(),
            name: f[1].to_string(),
            domicile,
        });
    }

    Ok(bundle)
}

fn open_csv(dir: &Path, name: &str) -> Result<csv::Reader<File>, PanelError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(PanelError::MissingFile(path));
    }
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(File::open(path)?))
}

fn csv_record(
    file: &str,
    line: usize,
    rec: Result<csv::StringRecord, csv::Error>,
) -> Result<csv::StringRecord, PanelError> {
    rec.map_err(|e| PanelError::MalformedRow {
        file: file.into(),
        line: line as u64 + 2,
        msg: e.to_string(),
    })
}

fn fields<'a>(
    file: &str,
    line: usize,
    rec: &'a csv::StringRecord,
    want: usize,
) -> Result<Vec<&'a str>, PanelError> {
    if rec.len() != want {
        return Err(PanelError::MalformedRow {
            file: file.into(),
            line: line as u64 + 2,
            msg: format!("expected {want} fields, got {}", rec.len()),
        });
    }
    Ok(rec.iter().collect())
}

fn parse_date(file: &str, line: usize, s: &str) -> Result<NaiveDate, PanelError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| PanelError::MalformedRow {
        file: file.into(),
        line: line as u64 + 2,
        msg: format!("bad date {s:?}"),
    })
}

fn parse_number(file: &str, line: usize, s: &str) -> Result<f64, PanelError> {
    let v: f64 = s.parse().map_err(|_| PanelError::MalformedRow {
        file: file.into(),
        line: line as u64 + 2,
        msg: format!("bad number {s:?}"),
    })?;
    if !v.is_finite() {
        return Err(PanelError::MalformedRow {
            file: file.into(),
            line: line as u64 + 2,
            msg: format!("non-finite number {s:?}"),
        });
    }
    Ok(v)
}

fn parse_amount(file: &str, line: usize, s: &str) -> Result<f64, PanelError> {
    let v = parse_number(file, line, s)?;
    if v < 0.0 {
        return Err(PanelError::MalformedRow {
            file: file.into(),
            line: line as u64 + 2,
            msg: format!("negative amount {v}"),
        });
    }
    Ok(v)
}

/// Validate a raw bundle and assemble the panel (simple returns).
pub fn build_panel(bundle: RawBundle) -> Result<TradePanel, PanelError> {
    build_panel_with(bundle, ReturnKind::Simple)
}

/// Validate a raw bundle and assemble the panel. This is the single
/// construction path shared by CSV ingestion and the synthetic generator.
pub fn build_panel_with(bundle: RawBundle, return_kind: ReturnKind) -> Result<TradePanel, PanelError> {
    // Trading calendar is defined by the price file.
    let mut calendar: Vec<NaiveDate> = bundle.prices.iter().map(|p| p.date).collect();
    calendar.sort();
    calendar.dedup();
    if calendar.is_empty() {
        return Err(PanelError::UnknownReference(
            "prices.csv defines no trading days".into(),
        ));
    }
    let date_index: HashMap<NaiveDate, u32> = calendar
        .iter()
        .enumerate()
        .map(|(i, &d)| (d, i as u32))
        .collect();

    let mut years: Vec<YearSlice> = Vec::new();
    for (i, d) in calendar.iter().enumerate() {
        match years.last_mut() {
            Some(y) if y.year == d.year() => y.days.1 = i as u32 + 1,
            _ => years.push(YearSlice {
                year: d.year(),
                days: (i as u32, i as u32 + 1),
            }),
        }
    }

    // Stocks with deciles.
    let caps: Vec<(String, f64)> = bundle
        .stocks
        .iter()
        .map(|s| (s.stock_id.clone(), s.market_cap))
        .collect();
    {
        let mut seen = HashMap::new();
        for s in &bundle.stocks {
            if seen.insert(s.stock_id.clone(), ()).is_some() {
                return Err(PanelError::DuplicateKey {
                    file: "stocks.csv".into(),
                    key: s.stock_id.clone(),
                });
            }
        }
    }
    let deciles = assign_deciles(&caps)?;
    let mut stocks: Vec<StockInfo> = bundle
        .stocks
        .iter()
        .map(|s| StockInfo {
            id: s.stock_id.clone(),
            market_cap: s.market_cap,
            decile: deciles[&s.stock_id],
        })
        .collect();
    stocks.sort_by(|a, b| a.id.cmp(&b.id));
    let stock_index: HashMap<String, usize> = stocks
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.clone(), i))
        .collect();

    let mut members: Vec<MemberInfo> = Vec::new();
    {
        let mut seen = HashMap::new();
        for m in &bundle.members {
            if seen.insert(m.member_id.clone(), ()).is_some() {
                return Err(PanelError::DuplicateKey {
                    file: "members.csv".into(),
                    key: m.member_id.clone(),
                });
            }
            members.push(MemberInfo {
                id: m.member_id.clone(),
                name: m.name.clone(),
                domicile: m.domicile,
                first_day: None,
                last_day: None,
                active_days: 0,
                volume: 0.0,
            });
        }
    }
    members.sort_by(|a, b| a.id.cmp(&b.id));
    let member_index: HashMap<String, usize> = members
        .iter()
        .enumerate()
        .map(|(i, m)| (m.id.clone(), i))
        .collect();

    // Prices, densely aligned to the calendar.
    let n_days = calendar.len();
    let mut closes = vec![vec![f64::NAN; n_days]; stocks.len()];
    {
        let mut seen: HashMap<(u32, u32), ()> = HashMap::new();
        for p in &bundle.prices {
            let s = *stock_index
                .get(&p.stock_id)
                .ok_or_else(|| PanelError::UnknownReference(format!("stock {}", p.stock_id)))?;
            let d = date_index[&p.date];
            if seen.insert((d, s as u32), ()).is_some() {
                return Err(PanelError::DuplicateKey {
                    file: "prices.csv".into(),
                    key: format!("({}, {})", p.date, p.stock_id),
                });
            }
            if p.close <= 0.0 {
                return Err(PanelError::NonPositivePrice {
                    stock: p.stock_id.clone(),
                    date: p.date,
                });
            }
            closes[s][d as usize] = p.close;
        }
    }
    for (s, series) in closes.iter().enumerate() {
        let found = series.iter().filter(|c| c.is_finite()).count();
        if found != n_days {
            return Err(PanelError::IncompletePrices {
                stock: stocks[s].id.clone(),
                found,
                expected: n_days,
            });
        }
    }
    let returns: Vec<Vec<f64>> = closes
        .iter()
        .map(|series| {
            let mut r = vec![f64::NAN; series.len()];
            for t in 1..series.len() {
                r[t] = match return_kind {
                    ReturnKind::Simple => series[t] / series[t - 1] - 1.0,
                    ReturnKind::Log => (series[t] / series[t - 1]).ln(),
                };
            }
            r
        })
        .collect();

    // Trades.
    let mut trades: HashMap<(u32, u32), Vec<Obs>> = HashMap::new();
    let mut member_day_sets: Vec<HashMap<u32, ()>> = vec![HashMap::new(); members.len()];
    let mut member_buy = HashMap::<(u32, u32), f64>::new(); // (stock, day) totals
    {
        let mut seen: HashMap<(u32, u32, u32), ()> = HashMap::new();
        for t in &bundle.trades {
            let s = *stock_index
                .get(&t.stock_id)
                .ok_or_else(|| PanelError::UnknownReference(format!("stock {}", t.stock_id)))?;
            let m = *member_index
                .get(&t.member_id)
                .ok_or_else(|| PanelError::UnknownReference(format!("member {}", t.member_id)))?;
            let d = *date_index
                .get(&t.date)
                .ok_or_else(|| PanelError::UnknownReference(format!("trading day {}", t.date)))?;
            if seen.insert((d, s as u32, m as u32), ()).is_some() {
                return Err(PanelError::DuplicateKey {
                    file: "trades.csv".into(),
                    key: format!("({}, {}, {})", t.date, t.stock_id, t.member_id),
                });
            }
            trades.entry((m as u32, s as u32)).or_default().push(Obs {
                day: d,
                buy: t.buy_amount,
                sell: t.sell_amount,
            });
            let info = &mut members[m];
            info.volume += t.buy_amount + t.sell_amount;
            info.first_day = Some(info.first_day.map_or(d, |f| f.min(d)));
            info.last_day = Some(info.last_day.map_or(d, |l| l.max(d)));
            member_day_sets[m].insert(d, ());
            *member_buy.entry((s as u32, d)).or_default() += t.buy_amount;
        }
    }
    for v in trades.values_mut() {
        v.sort_by_key(|o| o.day);
    }
    for (m, days) in member_day_sets.into_iter().enumerate() {
        members[m].active_days = days.len();
    }

    // Investor flows.
    let mut flows: HashMap<(u8, u32), Vec<Obs>> = HashMap::new();
    let mut type_buy = HashMap::<(u32, u32), f64>::new();
    {
        let mut seen: HashMap<(u32, u32, u8), ()> = HashMap::new();
        for r in &bundle.flows {
            let s = *stock_index
                .get(&r.stock_id)
                .ok_or_else(|| PanelError::UnknownReference(format!("stock {}", r.stock_id)))?;
            let d = *date_index
                .get(&r.date)
                .ok_or_else(|| PanelError::UnknownReference(format!("trading day {}", r.date)))?;
            let ty = r.investor_type.index() as u8;
            if seen.insert((d, s as u32, ty), ()).is_some() {
                return Err(PanelError::DuplicateKey {
                    file: "investor_flows.csv".into(),
                    key: format!("({}, {}, {})", r.date, r.stock_id, r.investor_type),
                });
            }
            flows.entry((ty, s as u32)).or_default().push(Obs {
                day: d,
                buy: r.buy_amount,
                sell: r.sell_amount,
            });
            *type_buy.entry((s as u32, d)).or_default() += r.buy_amount;
        }
    }
    for v in flows.values_mut() {
        v.sort_by_key(|o| o.day);
    }

    // Cross-source consistency: member buys should aggregate to investor
    // type buys per stock/day. Inconsistency is a warning, never an error.
    let mut warnings = Vec::new();
    let mut mismatches = 0usize;
    let mut keys: Vec<&(u32, u32)> = member_buy.keys().collect();
    keys.sort();
    for key in keys {
        let mb = member_buy[key];
        let tb = type_buy.get(key).copied().unwrap_or(0.0);
        let scale = mb.abs().max(tb.abs());
        if scale > 0.0 && (mb - tb).abs() > 1e-6 * scale {
            mismatches += 1;
            if warnings.len() < 20 {
                warnings.push(format!(
                    "stock {} day {}: member buy total {} != investor-type buy total {}",
                    stocks[key.0 as usize].id, calendar[key.1 as usize], mb, tb
                ));
            }
        }
    }
    if mismatches > warnings.len() {
        warnings.push(format!(
            "{} further member/investor-type aggregation mismatches",
            mismatches - warnings.len()
        ));
    }

    Ok(TradePanel {
        calendar,
        years,
        stocks,
        stock_index,
        members,
        member_index,
        trades,
        flows,
        closes,
        returns,
        warnings,
    })
}
