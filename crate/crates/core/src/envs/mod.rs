//! The four simulated worlds: a taxed household economy, a cobweb market, a
//! market entrance game and a market-making desk.

pub mod cobweb;
pub mod entry;
pub mod mm;
pub mod taxai;

pub use cobweb::{Cobweb, CobwebConfig};
pub use entry::{EntryConfig, EntryGame};
pub use mm::{MarketMaking, MmConfig};
pub use taxai::{TaxAi, TaxAiConfig};
