//! Simulated chain: wallets, fixed-point balances, NFT mints, token
//! deployments and sales on a hash-chained, append-only ledger.

pub mod amount;
pub mod art;
pub mod ledger;

pub use amount::{Amount, DECIMALS, UNITS_PER_COIN};
pub use art::{generate_art, ArtBlob, DEFAULT_HEIGHT, DEFAULT_WIDTH};
pub use ledger::{
    implied_market_cap, parse_entries, read_entries, validate_symbol, verify_entries, verify_ledger, Address, Asset,
    ChainConfig, ChainError, EntryKind, Ledger, LedgerEntry, MintRecord, SaleAsset, TokenParams, TokenRecord,
    VerifyReport, Wallet, FEE_SINK, GENESIS,
};
