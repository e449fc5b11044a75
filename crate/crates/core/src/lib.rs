//! Analytics over daily member-firm buy/sell inventory panels: investor-flow
//! correlations, directionality/trend measures, signed herding, correlation
//! networks with community detection, random-matrix spectral factors, and
//! pooled cross-sectional return regressions — plus a synthetic market
//! generator with planted agent behaviors used as the test oracle for all
//! of the above.

pub mod behavior;
pub mod herding;
pub mod network;
pub mod panel;
pub mod reference;
pub mod regress;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use panel::{Domicile, Entity, InvestorType, TradePanel};
pub use stats::Matrix;
