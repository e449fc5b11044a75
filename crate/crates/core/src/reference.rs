//! Published reference statistics for the KRX member-firm dataset
//! (January 2007 - December 2017, 1210 continuously traded stocks, 62
//! member firms). The underlying exchange data is proprietary, so these
//! values are shipped for qualitative comparison only; nothing in the
//! pipeline depends on them.

/// Individual-investor share of the decile-1 transaction amount.
pub const INDIVIDUAL_SHARE_DECILE_1: f64 = 0.4311;
/// Individual-investor share of the decile-10 transaction amount.
pub const INDIVIDUAL_SHARE_DECILE_10: f64 = 0.9654;
/// Individual-investor share of the total transaction amount.
pub const INDIVIDUAL_SHARE_TOTAL: f64 = 0.6027;

/// Modularity of the decile-1 member correlation network at the 0.015
/// edge threshold.
pub const NETWORK_MODULARITY: f64 = 0.312;

/// Typical yearly aspect ratio of the member panel: ~247 trading days
/// over ~62 members.
pub const ASPECT_RATIO_Q: f64 = 3.98;

/// Pooled-regression headline values (excess returns on the market
/// factor and per-group herding, with year dummies).
pub const REGRESSION_BETA_MARKET: f64 = 0.9326;
pub const REGRESSION_BETA_H_DSM: f64 = 0.0014;
pub const REGRESSION_BETA_H_DIM: f64 = -0.0285;
pub const REGRESSION_BETA_H_FRM: f64 = 0.0019;
pub const REGRESSION_R_SQUARED: f64 = 0.410;
pub const REGRESSION_N_OBSERVATIONS: u64 = 329_362;

/// One entry of the member-firm directory: id number, name, domicile
/// code ("D" domestic / "F" foreign), trading period (yymm-yymm), number
/// of trading days, number of traded stocks, and total transaction
/// amount in 10^12 KRW.
pub struct MemberDirectoryEntry {
    pub no: u8,
    pub name: &'static str,
    pub domicile: &'static str,
    pub period: &'static str,
    pub trading_days: u32,
    pub stocks_traded: u32,
    pub volume: f64,
}

/// The 62-member directory: entries 1-41 are domestic, 42-62 foreign.
pub const MEMBER_DIRECTORY: &[MemberDirectoryEntry] = &[
    MemberDirectoryEntry { no: 1, name: "Kyobo", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 368.57 },
    MemberDirectoryEntry { no: 2, name: "Shinhan Invest", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 1554.91 },
    MemberDirectoryEntry { no: 3, name: "Korea Invest", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 1789.34 },
    MemberDirectoryEntry { no: 4, name: "Daishin", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 1115.13 },
    MemberDirectoryEntry { no: 5, name: "Mirae Daewoo", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 1993.64 },
    MemberDirectoryEntry { no: 6, name: "Shinyoung", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 187.56 },
    MemberDirectoryEntry { no: 7, name: "Eugene", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 418.8 },
    MemberDirectoryEntry { no: 8, name: "Hanyang", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 106.51 },
    MemberDirectoryEntry { no: 9, name: "Meritz", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 310.94 },
    MemberDirectoryEntry { no: 10, name: "NH Invest", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 1808.78 },
    MemberDirectoryEntry { no: 11, name: "Bookook", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1209, volume: 88.63 },
    MemberDirectoryEntry { no: 12, name: "KB", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 1350.58 },
    MemberDirectoryEntry { no: 13, name: "Hanwha", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 533.85 },
    MemberDirectoryEntry { no: 14, name: "Hyundai Motor", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 202.37 },
    MemberDirectoryEntry { no: 15, name: "Yuhwa", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 40.29 },
    MemberDirectoryEntry { no: 16, name: "Yuanta", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 1206.15 },
    MemberDirectoryEntry { no: 17, name: "SK", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 525.92 },
    MemberDirectoryEntry { no: 18, name: "Golden Bridge", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 107.24 },
    MemberDirectoryEntry { no: 19, name: "Samsung", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 1907.22 },
    MemberDirectoryEntry { no: 20, name: "DB Financial", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 422.38 },
    MemberDirectoryEntry { no: 21, name: "HI Invest", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 321.7 },
    MemberDirectoryEntry { no: 22, name: "Kiwoom", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 3969.51 },
    MemberDirectoryEntry { no: 23, name: "Leading Invest", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1206, volume: 56.88 },
    MemberDirectoryEntry { no: 24, name: "Hana Financial", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 917.87 },
    MemberDirectoryEntry { no: 25, name: "eBEST", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1210, volume: 531.28 },
    MemberDirectoryEntry { no: 26, name: "Korea Asset", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1189, volume: 37.05 },
    MemberDirectoryEntry { no: 27, name: "Heungkuk", domicile: "D", period: "0701-1712", trading_days: 2722, stocks_traded: 1117, volume: 44.98 },
    MemberDirectoryEntry { no: 28, name: "IBK", domicile: "D", period: "0807-1712", trading_days: 2336, stocks_traded: 1210, volume: 128.6 },
    MemberDirectoryEntry { no: 29, name: "Baro Invest", domicile: "D", period: "0807-1712", trading_days: 2336, stocks_traded: 1129, volume: 32.57 },
    MemberDirectoryEntry { no: 30, name: "Taurus Invest", domicile: "D", period: "0807-1712", trading_days: 2336, stocks_traded: 1204, volume: 49.42 },
    MemberDirectoryEntry { no: 31, name: "KTB", domicile: "D", period: "0807-1712", trading_days: 2334, stocks_traded: 1210, volume: 149.51 },
    MemberDirectoryEntry { no: 32, name: "CAPE", domicile: "D", period: "0807-1712", trading_days: 2336, stocks_traded: 1210, volume: 82.65 },
    MemberDirectoryEntry { no: 33, name: "BNK", domicile: "D", period: "0912-1712", trading_days: 1987, stocks_traded: 1210, volume: 41.64 },
    MemberDirectoryEntry { no: 34, name: "IM", domicile: "D", period: "0701-1509", trading_days: 2154, stocks_traded: 1207, volume: 47.1 },
    MemberDirectoryEntry { no: 35, name: "NH (Nonghyup)", domicile: "D", period: "0701-1505", trading_days: 2071, stocks_traded: 1210, volume: 221.41 },
    MemberDirectoryEntry { no: 36, name: "KB Invest", domicile: "D", period: "0701-1705", trading_days: 2567, stocks_traded: 1210, volume: 428.53 },
    MemberDirectoryEntry { no: 37, name: "Mirae Asset", domicile: "D", period: "0701-1612", trading_days: 2479, stocks_traded: 1210, volume: 2002.43 },
    MemberDirectoryEntry { no: 38, name: "Hanwha Invest", domicile: "D", period: "0701-1208", trading_days: 1412, stocks_traded: 1210, volume: 75.05 },
    MemberDirectoryEntry { no: 39, name: "BNG", domicile: "D", period: "0701-1411", trading_days: 1913, stocks_traded: 1198, volume: 24.04 },
    MemberDirectoryEntry { no: 40, name: "Apple", domicile: "D", period: "0808-1311", trading_days: 1290, stocks_traded: 1164, volume: 12.94 },
    MemberDirectoryEntry { no: 41, name: "Hanmag", domicile: "D", period: "0902-1401", trading_days: 1219, stocks_traded: 1170, volume: 22.63 },
    MemberDirectoryEntry { no: 42, name: "JP Morgan", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 1193, volume: 353.63 },
    MemberDirectoryEntry { no: 43, name: "Macquarie", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 919, volume: 261.92 },
    MemberDirectoryEntry { no: 44, name: "Morgan Stanley", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 1207, volume: 794.98 },
    MemberDirectoryEntry { no: 45, name: "Citigroup", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 981, volume: 434.7 },
    MemberDirectoryEntry { no: 46, name: "HSBC", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 900, volume: 111.2 },
    MemberDirectoryEntry { no: 47, name: "CLSA", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 939, volume: 333.71 },
    MemberDirectoryEntry { no: 48, name: "Credit Suisse", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 1208, volume: 833.59 },
    MemberDirectoryEntry { no: 49, name: "UBS", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 1195, volume: 512.25 },
    MemberDirectoryEntry { no: 50, name: "Merrill Lynch", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 1205, volume: 636.5 },
    MemberDirectoryEntry { no: 51, name: "Goldman Sachs", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 1203, volume: 491.1 },
    MemberDirectoryEntry { no: 52, name: "Societe Generale", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 947, volume: 107.49 },
    MemberDirectoryEntry { no: 53, name: "Nomura", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 1004, volume: 154.34 },
    MemberDirectoryEntry { no: 54, name: "Deutsche", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 1193, volume: 382.49 },
    MemberDirectoryEntry { no: 55, name: "Daiwa", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 876, volume: 70.98 },
    MemberDirectoryEntry { no: 56, name: "BNP Paribas", domicile: "F", period: "0701-1712", trading_days: 2722, stocks_traded: 855, volume: 106.72 },
    MemberDirectoryEntry { no: 57, name: "Standard Chartered", domicile: "F", period: "0808-1501", trading_days: 1292, stocks_traded: 390, volume: 10.0 },
    MemberDirectoryEntry { no: 58, name: "CIMB", domicile: "F", period: "1302-1712", trading_days: 1175, stocks_traded: 683, volume: 12.79 },
    MemberDirectoryEntry { no: 59, name: "RBS", domicile: "F", period: "0701-1203", trading_days: 1301, stocks_traded: 658, volume: 35.32 },
    MemberDirectoryEntry { no: 60, name: "Newedge", domicile: "F", period: "0701-1412", trading_days: 844, stocks_traded: 120, volume: 1.69 },
    MemberDirectoryEntry { no: 61, name: "Barclays", domicile: "F", period: "1108-1602", trading_days: 1057, stocks_traded: 724, volume: 30.31 },
    MemberDirectoryEntry { no: 62, name: "ING", domicile: "F", period: "0906-1303", trading_days: 214, stocks_traded: 58, volume: 0.03 },
];
