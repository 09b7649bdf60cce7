use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::amount::Amount;
use super::art::ArtBlob;
use crate::clock::{Clock, SimClock};
use crate::hashing::sha256_hex;
use crate::journal::{self, JournalError, JournalLine, JournalWriter};

/// Source of endowments; never holds a balance.
pub const GENESIS: &str = "genesis";
/// Destination of fees; fees are tracked separately from balances.
pub const FEE_SINK: &str = "fee-sink";

const ZERO_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    /// Stable address for a wallet seed.
    pub fn from_seed(seed: u64) -> Self {
        Address(format!(
            "sim1{}",
            &sha256_hex(format!("wallet:{seed}").as_bytes())[..38]
        ))
    }

    pub fn genesis() -> Self {
        Address(GENESIS.to_string())
    }

    pub fn fee_sink() -> Self {
        Address(FEE_SINK.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Address(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wallet {
    pub address: Address,
    pub balance: Amount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Transfer,
    Mint,
    Deploy,
    Sale,
    Fee,
}

impl EntryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntryKind::Transfer => "transfer",
            EntryKind::Mint => "mint",
            EntryKind::Deploy => "deploy",
            EntryKind::Sale => "sale",
            EntryKind::Fee => "fee",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "transfer" => EntryKind::Transfer,
            "mint" => EntryKind::Mint,
            "deploy" => EntryKind::Deploy,
            "sale" => EntryKind::Sale,
            "fee" => EntryKind::Fee,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Asset {
    Nft {
        token_id: u64,
    },
    Tokens {
        symbol: String,
        units: u64,
    },
    TokenDefinition {
        name: String,
        symbol: String,
        total_supply: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub sequence: u64,
    pub kind: EntryKind,
    pub from: Address,
    pub to: Address,
    pub amount: Amount,
    pub payload_hash: String,
    pub asset: Option<Asset>,
    pub timestamp: i64,
    /// `sha256(previous hash | entry body)`; chains every entry to its prefix.
    pub hash: String,
}

#[derive(Serialize)]
struct EntryBody<'a> {
    sequence: u64,
    kind: EntryKind,
    from: &'a Address,
    to: &'a Address,
    amount: Amount,
    payload_hash: &'a str,
    asset: &'a Option<Asset>,
    timestamp: i64,
}

impl LedgerEntry {
    fn body_hash(&self, prev_hash: &str) -> String {
        let body = EntryBody {
            sequence: self.sequence,
            kind: self.kind,
            from: &self.from,
            to: &self.to,
            amount: self.amount,
            payload_hash: &self.payload_hash,
            asset: &self.asset,
            timestamp: self.timestamp,
        };
        let json = serde_json::to_string(&body).expect("entry body serializes");
        sha256_hex(format!("{prev_hash}|{json}").as_bytes())
    }

    fn to_journal_line(&self) -> JournalLine {
        #[derive(Serialize)]
        struct Payload<'a> {
            from: &'a Address,
            to: &'a Address,
            amount: Amount,
            payload_hash: &'a str,
            asset: &'a Option<Asset>,
            hash: &'a str,
        }
        let payload = Payload {
            from: &self.from,
            to: &self.to,
            amount: self.amount,
            payload_hash: &self.payload_hash,
            asset: &self.asset,
            hash: &self.hash,
        };
        JournalLine {
            offset: self.sequence,
            kind: self.kind.as_str().to_string(),
            timestamp: self.timestamp,
            payload: serde_json::to_string(&payload).expect("entry payload serializes"),
        }
    }

    fn from_journal_line(line: JournalLine) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Payload {
            from: Address,
            to: Address,
            amount: Amount,
            payload_hash: String,
            asset: Option<Asset>,
            hash: String,
        }
        let kind = EntryKind::parse(&line.kind).ok_or_else(|| format!("unknown entry kind {:?}", line.kind))?;
        let p: Payload = serde_json::from_str(&line.payload).map_err(|e| e.to_string())?;
        Ok(LedgerEntry {
            sequence: line.offset,
            kind,
            from: p.from,
            to: p.to,
            amount: p.amount,
            payload_hash: p.payload_hash,
            asset: p.asset,
            timestamp: line.timestamp,
            hash: p.hash,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MintRecord {
    pub token_id: u64,
    pub creator: Address,
    pub art_hash: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub name: String,
    pub symbol: String,
    pub total_supply: u64,
    pub deployer: Address,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenParams {
    pub name: String,
    pub symbol: String,
    pub total_supply: u64,
}

/// What changes hands in a sale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SaleAsset {
    Nft(u64),
    TokenUnits { symbol: String, units: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub mint_fee: Amount,
    pub deploy_fee: Amount,
    pub sale_fee: Amount,
    pub transfer_fee: Amount,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            mint_fee: Amount::from_units(10_000_000),
            deploy_fee: Amount::from_units(20_000_000),
            sale_fee: Amount::ZERO,
            transfer_fee: Amount::from_units(5_000),
        }
    }
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: Amount, available: Amount },
    #[error("art already minted as token {existing_token}")]
    DuplicateArt { existing_token: u64 },
    #[error("symbol {0} is already deployed")]
    SymbolTaken(String),
    #[error("bad symbol {0:?}: need 1-10 characters A-Z")]
    BadSymbol(String),
    #[error("bad token params: {0}")]
    BadParams(String),
    #[error("{0} does not own the asset")]
    NotOwner(Address),
    #[error("unknown wallet {0}")]
    UnknownWallet(Address),
    #[error("wallet {0} already exists")]
    WalletExists(Address),
    #[error("unknown asset: {0}")]
    UnknownAsset(String),
    #[error("amount overflow")]
    Overflow,
    #[error("injected fault")]
    InjectedFault,
    #[error("ledger I/O failed: {0}")]
    Io(std::io::Error),
    #[error("corrupt ledger: {0}")]
    Corrupt(String),
}

impl From<JournalError> for ChainError {
    fn from(e: JournalError) -> Self {
        match e {
            JournalError::Io(io) => ChainError::Io(io),
            other => ChainError::Corrupt(other.to_string()),
        }
    }
}

pub fn validate_symbol(symbol: &str) -> Result<(), ChainError> {
    let ok = (1..=10).contains(&symbol.len()) && symbol.bytes().all(|b| b.is_ascii_uppercase());
    if ok {
        Ok(())
    } else {
        Err(ChainError::BadSymbol(symbol.to_string()))
    }
}

/// Price per unit times supply.
pub fn implied_market_cap(total_supply: u64, price_per_unit: Amount) -> Option<Amount> {
    price_per_unit.checked_mul(total_supply)
}

/// Everything derivable from the entry sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
struct LedgerState {
    balances: BTreeMap<Address, Amount>,
    fees_collected: Amount,
    endowed: Amount,
    mints: Vec<MintRecord>,
    art_index: BTreeMap<String, u64>,
    nft_owner: BTreeMap<u64, Address>,
    tokens: BTreeMap<String, TokenRecord>,
    token_balances: BTreeMap<(String, Address), u64>,
    last_hash: String,
}

impl Default for LedgerState {
    fn default() -> Self {
        Self {
            balances: BTreeMap::new(),
            fees_collected: Amount::ZERO,
            endowed: Amount::ZERO,
            mints: Vec::new(),
            art_index: BTreeMap::new(),
            nft_owner: BTreeMap::new(),
            tokens: BTreeMap::new(),
            token_balances: BTreeMap::new(),
            last_hash: ZERO_HASH.to_string(),
        }
    }
}

impl LedgerState {
    fn balance(&self, a: &Address) -> Amount {
        self.balances.get(a).copied().unwrap_or(Amount::ZERO)
    }

    fn debit(&mut self, a: &Address, amount: Amount) -> Result<(), String> {
        let available = self
            .balances
            .get(a)
            .copied()
            .ok_or_else(|| format!("unknown wallet {a}"))?;
        let left = available
            .checked_sub(amount)
            .ok_or_else(|| format!("balance of {a} would go negative ({available} - {amount})"))?;
        self.balances.insert(a.clone(), left);
        Ok(())
    }

    fn credit(&mut self, a: &Address, amount: Amount) -> Result<(), String> {
        let slot = self.balances.entry(a.clone()).or_insert(Amount::ZERO);
        *slot = slot.checked_add(amount).ok_or("balance overflow")?;
        Ok(())
    }

    fn token_balance(&self, symbol: &str, a: &Address) -> u64 {
        self.token_balances
            .get(&(symbol.to_string(), a.clone()))
            .copied()
            .unwrap_or(0)
    }

    /// Apply one entry. Any rule violation leaves `self` unspecified; callers
    /// validate first or discard the state on error.
    fn apply(&mut self, e: &LedgerEntry) -> Result<(), String> {
        let zero_amount = |kind: &str| {
            if e.amount == Amount::ZERO {
                Ok(())
            } else {
                Err(format!("{kind} entry carries amount {}", e.amount))
            }
        };
        match e.kind {
            EntryKind::Transfer => {
                if e.asset.is_some() {
                    return Err("transfer carries an asset".into());
                }
                if e.from.as_str() == GENESIS {
                    self.credit(&e.to, e.amount)?;
                    self.endowed = self.endowed.checked_add(e.amount).ok_or("endowment overflow")?;
                } else {
                    if e.to.as_str() == GENESIS || e.to.as_str() == FEE_SINK {
                        return Err(format!("transfer to reserved address {}", e.to));
                    }
                    self.debit(&e.from, e.amount)?;
                    self.credit(&e.to, e.amount)?;
                }
            }
            EntryKind::Fee => {
                if e.to.as_str() != FEE_SINK {
                    return Err(format!("fee paid to {} instead of the fee sink", e.to));
                }
                self.debit(&e.from, e.amount)?;
                self.fees_collected = self.fees_collected.checked_add(e.amount).ok_or("fee overflow")?;
            }
            EntryKind::Mint => {
                zero_amount("mint")?;
                let Some(Asset::Nft { token_id }) = e.asset else {
                    return Err("mint without an nft asset".into());
                };
                if !self.balances.contains_key(&e.from) {
                    return Err(format!("unknown wallet {}", e.from));
                }
                if token_id != self.mints.len() as u64 {
                    return Err(format!(
                        "token id {token_id} is not the next dense id {}",
                        self.mints.len()
                    ));
                }
                if let Some(existing) = self.art_index.get(&e.payload_hash) {
                    return Err(format!("art {} already minted as token {existing}", e.payload_hash));
                }
                self.art_index.insert(e.payload_hash.clone(), token_id);
                self.nft_owner.insert(token_id, e.from.clone());
                self.mints.push(MintRecord {
                    token_id,
                    creator: e.from.clone(),
                    art_hash: e.payload_hash.clone(),
                    timestamp: e.timestamp,
                });
            }
            EntryKind::Deploy => {
                zero_amount("deploy")?;
                let Some(Asset::TokenDefinition {
                    name,
                    symbol,
                    total_supply,
                }) = &e.asset
                else {
                    return Err("deploy without a token definition".into());
                };
                validate_symbol(symbol).map_err(|err| err.to_string())?;
                if *total_supply == 0 {
                    return Err("zero total supply".into());
                }
                if self.tokens.contains_key(symbol) {
                    return Err(format!("symbol {symbol} deployed twice"));
                }
                if !self.balances.contains_key(&e.from) {
                    return Err(format!("unknown wallet {}", e.from));
                }
                self.tokens.insert(
                    symbol.clone(),
                    TokenRecord {
                        name: name.clone(),
                        symbol: symbol.clone(),
                        total_supply: *total_supply,
                        deployer: e.from.clone(),
                    },
                );
                self.token_balances
                    .insert((symbol.clone(), e.from.clone()), *total_supply);
            }
            EntryKind::Sale => {
                let (seller, buyer) = (&e.from, &e.to);
                if !self.balances.contains_key(seller) {
                    return Err(format!("unknown wallet {seller}"));
                }
                match &e.asset {
                    Some(Asset::Nft { token_id }) => {
                        if self.nft_owner.get(token_id) != Some(seller) {
                            return Err(format!("{seller} does not own nft {token_id}"));
                        }
                        self.nft_owner.insert(*token_id, buyer.clone());
                    }
                    Some(Asset::Tokens { symbol, units }) => {
                        if self.token_balance(symbol, seller) < *units {
                            return Err(format!("{seller} holds fewer than {units} {symbol}"));
                        }
                        let from_key = (symbol.clone(), seller.clone());
                        *self.token_balances.get_mut(&from_key).expect("checked above") -= units;
                        *self.token_balances.entry((symbol.clone(), buyer.clone())).or_insert(0) += units;
                    }
                    _ => return Err("sale without a transferable asset".into()),
                }
                self.debit(buyer, e.amount)?;
                self.credit(seller, e.amount)?;
            }
        }
        self.last_hash = e.hash.clone();
        Ok(())
    }

    fn conserved(&self) -> bool {
        let held: u128 = self.balances.values().map(|a| u128::from(a.units())).sum();
        held + u128::from(self.fees_collected.units()) == u128::from(self.endowed.units())
    }
}

/// Outcome of re-verifying a ledger from its entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyReport {
    Ok {
        entries: usize,
    },
    /// The prefix ending at `sequence` is the first one that fails.
    Violation {
        sequence: u64,
        reason: String,
    },
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, VerifyReport::Ok { .. })
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyReport::Ok { .. } => f.write_str("ok"),
            VerifyReport::Violation { sequence, reason } => {
                write!(f, "violation at sequence {sequence}: {reason}")
            }
        }
    }
}

fn replay(entries: &[LedgerEntry]) -> Result<LedgerState, (u64, String)> {
    let mut state = LedgerState::default();
    for (i, e) in entries.iter().enumerate() {
        let fail = |reason: String| (i as u64, reason);
        if e.sequence != i as u64 {
            return Err(fail(format!("sequence {} where {i} expected", e.sequence)));
        }
        let expected = e.body_hash(&state.last_hash);
        if e.hash != expected {
            return Err(fail("hash chain broken (entry altered)".into()));
        }
        state.apply(e).map_err(fail)?;
        if !state.conserved() {
            return Err(fail("balances plus fees differ from endowments".into()));
        }
    }
    Ok(state)
}

/// Check dense sequencing, the hash chain, non-negative balances, ownership
/// and provenance rules, and conservation at every prefix.
pub fn verify_entries(entries: &[LedgerEntry]) -> VerifyReport {
    match replay(entries) {
        Ok(_) => VerifyReport::Ok { entries: entries.len() },
        Err((sequence, reason)) => VerifyReport::Violation { sequence, reason },
    }
}

/// [`verify_entries`] plus a check that replaying reproduces the live state.
pub fn verify_ledger(ledger: &Ledger) -> VerifyReport {
    match replay(&ledger.entries) {
        Ok(state) if state == ledger.state => VerifyReport::Ok {
            entries: ledger.entries.len(),
        },
        Ok(_) => VerifyReport::Violation {
            sequence: ledger.entries.len().saturating_sub(1) as u64,
            reason: "replayed state differs from live state".into(),
        },
        Err((sequence, reason)) => VerifyReport::Violation { sequence, reason },
    }
}

/// Single-writer simulated chain. Every operation validates completely before
/// appending anything, so a failed operation leaves the ledger unchanged.
pub struct Ledger {
    config: ChainConfig,
    clock: Arc<dyn Clock>,
    entries: Vec<LedgerEntry>,
    state: LedgerState,
    fail_next_commit: bool,
}

impl fmt::Debug for Ledger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ledger")
            .field("config", &self.config)
            .field("entries", &self.entries.len())
            .finish_non_exhaustive()
    }
}

struct Draft {
    kind: EntryKind,
    from: Address,
    to: Address,
    amount: Amount,
    payload_hash: String,
    asset: Option<Asset>,
}

impl Ledger {
    pub fn new(config: ChainConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            config,
            clock,
            entries: Vec::new(),
            state: LedgerState::default(),
            fail_next_commit: false,
        }
    }

    pub fn with_defaults() -> Self {
        Self::new(ChainConfig::default(), Arc::new(SimClock::default()))
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn wallet(&self, address: &Address) -> Option<Wallet> {
        self.state.balances.get(address).map(|b| Wallet {
            address: address.clone(),
            balance: *b,
        })
    }

    pub fn wallets(&self) -> impl Iterator<Item = Wallet> + '_ {
        self.state.balances.iter().map(|(a, b)| Wallet {
            address: a.clone(),
            balance: *b,
        })
    }

    pub fn balance(&self, address: &Address) -> Amount {
        self.state.balance(address)
    }

    pub fn fees_collected(&self) -> Amount {
        self.state.fees_collected
    }

    pub fn total_endowment(&self) -> Amount {
        self.state.endowed
    }

    pub fn mints(&self) -> &[MintRecord] {
        &self.state.mints
    }

    pub fn nft_owner(&self, token_id: u64) -> Option<&Address> {
        self.state.nft_owner.get(&token_id)
    }

    pub fn token(&self, symbol: &str) -> Option<&TokenRecord> {
        self.state.tokens.get(symbol)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &TokenRecord> {
        self.state.tokens.values()
    }

    pub fn token_balance(&self, symbol: &str, holder: &Address) -> u64 {
        self.state.token_balance(symbol, holder)
    }

    pub fn token_for_art(&self, art_hash: &str) -> Option<u64> {
        self.state.art_index.get(art_hash).copied()
    }

    /// Make the next otherwise-valid operation fail before it commits.
    pub fn inject_commit_failure(&mut self) {
        self.fail_next_commit = true;
    }

    /// Disarm a pending injected failure. Returns whether one was pending.
    pub fn clear_commit_failure(&mut self) -> bool {
        std::mem::take(&mut self.fail_next_commit)
    }

    fn require_wallet(&self, a: &Address) -> Result<Amount, ChainError> {
        self.state
            .balances
            .get(a)
            .copied()
            .ok_or_else(|| ChainError::UnknownWallet(a.clone()))
    }

    fn require_funds(&self, a: &Address, needed: Amount) -> Result<(), ChainError> {
        let available = self.require_wallet(a)?;
        if available < needed {
            return Err(ChainError::InsufficientFunds { needed, available });
        }
        Ok(())
    }

    fn fee_draft(&self, payer: &Address, fee: Amount) -> Option<Draft> {
        (fee > Amount::ZERO).then(|| Draft {
            kind: EntryKind::Fee,
            from: payer.clone(),
            to: Address::fee_sink(),
            amount: fee,
            payload_hash: String::new(),
            asset: None,
        })
    }

    fn commit(&mut self, drafts: Vec<Draft>) -> Result<Vec<LedgerEntry>, ChainError> {
        if std::mem::take(&mut self.fail_next_commit) {
            return Err(ChainError::InjectedFault);
        }
        let timestamp = self.clock.now_ms();
        let mut written = Vec::with_capacity(drafts.len());
        for d in drafts {
            let mut entry = LedgerEntry {
                sequence: self.entries.len() as u64,
                kind: d.kind,
                from: d.from,
                to: d.to,
                amount: d.amount,
                payload_hash: d.payload_hash,
                asset: d.asset,
                timestamp,
                hash: String::new(),
            };
            entry.hash = entry.body_hash(&self.state.last_hash);
            self.state.apply(&entry).expect("operation was validated before commit");
            self.entries.push(entry.clone());
            written.push(entry);
        }
        Ok(written)
    }

    /// Register the wallet for `seed` with an initial endowment.
    pub fn create_wallet(&mut self, seed: u64, endowment: Amount) -> Result<Wallet, ChainError> {
        let address = Address::from_seed(seed);
        if self.state.balances.contains_key(&address) {
            return Err(ChainError::WalletExists(address));
        }
        self.state.endowed.checked_add(endowment).ok_or(ChainError::Overflow)?;
        self.commit(vec![Draft {
            kind: EntryKind::Transfer,
            from: Address::genesis(),
            to: address.clone(),
            amount: endowment,
            payload_hash: String::new(),
            asset: None,
        }])?;
        Ok(self.wallet(&address).expect("just created"))
    }

    pub fn transfer(&mut self, from: &Address, to: &Address, amount: Amount) -> Result<LedgerEntry, ChainError> {
        self.require_wallet(to)?;
        let fee = self.config.transfer_fee;
        let needed = amount.checked_add(fee).ok_or(ChainError::Overflow)?;
        self.require_funds(from, needed)?;
        let mut drafts = vec![Draft {
            kind: EntryKind::Transfer,
            from: from.clone(),
            to: to.clone(),
            amount,
            payload_hash: String::new(),
            asset: None,
        }];
        drafts.extend(self.fee_draft(from, fee));
        Ok(self.commit(drafts)?.remove(0))
    }

    /// Mint `art` to `creator`, charging the configured mint fee.
    pub fn mint_nft(&mut self, creator: &Address, art: &ArtBlob) -> Result<MintRecord, ChainError> {
        let art_hash = art.content_hash();
        if let Some(existing_token) = self.token_for_art(&art_hash) {
            return Err(ChainError::DuplicateArt { existing_token });
        }
        let fee = self.config.mint_fee;
        self.require_funds(creator, fee)?;
        let token_id = self.state.mints.len() as u64;
        let mut drafts = vec![Draft {
            kind: EntryKind::Mint,
            from: creator.clone(),
            to: creator.clone(),
            amount: Amount::ZERO,
            payload_hash: art_hash,
            asset: Some(Asset::Nft { token_id }),
        }];
        drafts.extend(self.fee_draft(creator, fee));
        self.commit(drafts)?;
        Ok(self.state.mints[token_id as usize].clone())
    }

    /// Register a fungible token; the deployer receives the whole supply.
    pub fn deploy_token(&mut self, deployer: &Address, params: TokenParams) -> Result<TokenRecord, ChainError> {
        validate_symbol(&params.symbol)?;
        if params.name.trim().is_empty() {
            return Err(ChainError::BadParams("empty token name".into()));
        }
        if params.total_supply == 0 {
            return Err(ChainError::BadParams("total supply must be positive".into()));
        }
        if self.state.tokens.contains_key(&params.symbol) {
            return Err(ChainError::SymbolTaken(params.symbol));
        }
        let fee = self.config.deploy_fee;
        self.require_funds(deployer, fee)?;
        let payload_hash = sha256_hex(format!("{}|{}|{}", params.name, params.symbol, params.total_supply).as_bytes());
        let symbol = params.symbol.clone();
        let mut drafts = vec![Draft {
            kind: EntryKind::Deploy,
            from: deployer.clone(),
            to: deployer.clone(),
            amount: Amount::ZERO,
            payload_hash,
            asset: Some(Asset::TokenDefinition {
                name: params.name,
                symbol: params.symbol,
                total_supply: params.total_supply,
            }),
        }];
        drafts.extend(self.fee_draft(deployer, fee));
        self.commit(drafts)?;
        Ok(self.state.tokens[&symbol].clone())
    }

    /// Move `asset` from seller to buyer for `price`. A self-sale is recorded
    /// but changes neither balances nor ownership.
    pub fn execute_sale(
        &mut self,
        asset: &SaleAsset,
        seller: &Address,
        buyer: &Address,
        price: Amount,
    ) -> Result<LedgerEntry, ChainError> {
        self.require_wallet(seller)?;
        let fee = self.config.sale_fee;
        let needed = price.checked_add(fee).ok_or(ChainError::Overflow)?;
        self.require_funds(buyer, needed)?;
        let asset = match asset {
            SaleAsset::Nft(token_id) => {
                let owner = self
                    .state
                    .nft_owner
                    .get(token_id)
                    .ok_or_else(|| ChainError::UnknownAsset(format!("nft {token_id}")))?;
                if owner != seller {
                    return Err(ChainError::NotOwner(seller.clone()));
                }
                Asset::Nft { token_id: *token_id }
            }
            SaleAsset::TokenUnits { symbol, units } => {
                if !self.state.tokens.contains_key(symbol) {
                    return Err(ChainError::UnknownAsset(format!("token {symbol}")));
                }
                if *units == 0 {
                    return Err(ChainError::BadParams("zero units".into()));
                }
                if self.state.token_balance(symbol, seller) < *units {
                    return Err(ChainError::NotOwner(seller.clone()));
                }
                Asset::Tokens {
                    symbol: symbol.clone(),
                    units: *units,
                }
            }
        };
        let mut drafts = vec![Draft {
            kind: EntryKind::Sale,
            from: seller.clone(),
            to: buyer.clone(),
            amount: price,
            payload_hash: String::new(),
            asset: Some(asset),
        }];
        drafts.extend(self.fee_draft(buyer, fee));
        Ok(self.commit(drafts)?.remove(0))
    }

    /// Entries in the dense-offset journal format.
    pub fn to_journal_text(&self) -> String {
        self.entries.iter().map(|e| e.to_journal_line().render()).collect()
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), ChainError> {
        let mut w = JournalWriter::create(path)?;
        for e in &self.entries {
            let line = e.to_journal_line();
            w.append(&line.kind, line.timestamp, &line.payload)?;
        }
        Ok(())
    }

    /// Load a persisted ledger; it must verify.
    pub fn load(path: impl AsRef<Path>, config: ChainConfig, clock: Arc<dyn Clock>) -> Result<Self, ChainError> {
        let entries = read_entries(path)?;
        let state =
            replay(&entries).map_err(|(seq, reason)| ChainError::Corrupt(format!("sequence {seq}: {reason}")))?;
        Ok(Self {
            config,
            clock,
            entries,
            state,
            fail_next_commit: false,
        })
    }
}

pub fn parse_entries(text: &str) -> Result<Vec<LedgerEntry>, ChainError> {
    journal::parse(text)?
        .into_iter()
        .map(|l| LedgerEntry::from_journal_line(l).map_err(ChainError::Corrupt))
        .collect()
}

pub fn read_entries(path: impl AsRef<Path>) -> Result<Vec<LedgerEntry>, ChainError> {
    let text = std::fs::read_to_string(path).map_err(ChainError::Io)?;
    parse_entries(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::art::generate_art;

    fn coins(s: &str) -> Amount {
        s.parse().unwrap()
    }

    fn ledger_with(balance: &str) -> (Ledger, Address) {
        let config = ChainConfig {
            mint_fee: coins("0.01"),
            ..ChainConfig::default()
        };
        let mut l = Ledger::new(config, Arc::new(SimClock::default()));
        let w = l.create_wallet(1, coins(balance)).unwrap();
        (l, w.address)
    }

    #[test]
    fn fresh_ledger_verifies() {
        assert!(verify_ledger(&Ledger::with_defaults()).is_ok());
    }

    #[test]
    fn mint_charges_fee() {
        let (mut l, w) = ledger_with("1.0");
        let rec = l.mint_nft(&w, &generate_art(1, "a", 8, 8)).unwrap();
        assert_eq!(rec.token_id, 0);
        assert_eq!(l.balance(&w), coins("0.99"));
        let kinds: Vec<_> = l.entries()[1..].iter().map(|e| e.kind).collect();
        assert_eq!(kinds, [EntryKind::Mint, EntryKind::Fee]);
        assert!(verify_ledger(&l).is_ok());
    }

    #[test]
    fn mint_insufficient_funds_is_atomic() {
        let (mut l, w) = ledger_with("0.005");
        let before = l.to_journal_text();
        assert!(matches!(
            l.mint_nft(&w, &generate_art(1, "a", 8, 8)),
            Err(ChainError::InsufficientFunds { .. })
        ));
        assert_eq!(l.to_journal_text(), before);
        assert_eq!(l.balance(&w), coins("0.005"));
    }

    #[test]
    fn duplicate_art_rejected() {
        let (mut l, w) = ledger_with("1");
        let art = generate_art(9, "dup", 8, 8);
        l.mint_nft(&w, &art).unwrap();
        assert!(matches!(
            l.mint_nft(&w, &art),
            Err(ChainError::DuplicateArt { existing_token: 0 })
        ));
    }

    #[test]
    fn deploy_and_market_cap() {
        let (mut l, w) = ledger_with("1");
        let t = l
            .deploy_token(
                &w,
                TokenParams {
                    name: "Static Hum".into(),
                    symbol: "HUM".into(),
                    total_supply: 1_000_000_000,
                },
            )
            .unwrap();
        assert_eq!(l.token_balance("HUM", &w), 1_000_000_000);
        let cap = implied_market_cap(t.total_supply, coins("0.013")).unwrap();
        assert_eq!(cap, Amount::from_coins(13_000_000));

        let again = TokenParams {
            name: "Other".into(),
            symbol: "HUM".into(),
            total_supply: 5,
        };
        assert!(matches!(l.deploy_token(&w, again), Err(ChainError::SymbolTaken(_))));
        let bad = TokenParams {
            name: "x".into(),
            symbol: "toolongsymbol99".into(),
            total_supply: 5,
        };
        assert!(matches!(l.deploy_token(&w, bad), Err(ChainError::BadSymbol(_))));
    }

    #[test]
    fn sale_conserves_and_transfers() {
        let (mut l, seller) = ledger_with("1");
        let buyer = l.create_wallet(2, coins("5")).unwrap().address;
        let rec = l.mint_nft(&seller, &generate_art(1, "s", 8, 8)).unwrap();
        let sum_before = l.balance(&seller).units() + l.balance(&buyer).units();
        l.execute_sale(&SaleAsset::Nft(rec.token_id), &seller, &buyer, coins("2.5"))
            .unwrap();
        assert_eq!(l.balance(&seller).units() + l.balance(&buyer).units(), sum_before);
        assert_eq!(l.nft_owner(rec.token_id), Some(&buyer));
        assert!(matches!(
            l.execute_sale(&SaleAsset::Nft(rec.token_id), &seller, &buyer, coins("1")),
            Err(ChainError::NotOwner(_))
        ));
        assert!(verify_ledger(&l).is_ok());
    }

    #[test]
    fn self_sale_is_recorded_without_effect() {
        let (mut l, w) = ledger_with("1");
        let rec = l.mint_nft(&w, &generate_art(1, "self", 8, 8)).unwrap();
        let before = l.balance(&w);
        let n = l.entries().len();
        l.execute_sale(&SaleAsset::Nft(rec.token_id), &w, &w, coins("0.5"))
            .unwrap();
        assert_eq!(l.balance(&w), before);
        assert_eq!(l.nft_owner(rec.token_id), Some(&w));
        assert_eq!(l.entries().len(), n + 1);
        assert_eq!(l.entries()[n].kind, EntryKind::Sale);
    }

    #[test]
    fn corrupted_amount_names_first_failing_prefix() {
        let (mut l, w) = ledger_with("3");
        let other = l.create_wallet(2, coins("1")).unwrap().address;
        l.transfer(&w, &other, coins("1")).unwrap();
        l.mint_nft(&w, &generate_art(1, "c", 8, 8)).unwrap();
        let mut entries = l.entries().to_vec();
        let idx = entries
            .iter()
            .position(|e| e.kind == EntryKind::Transfer && e.from == w)
            .unwrap();
        entries[idx].amount = coins("2");
        assert_eq!(
            verify_entries(&entries),
            VerifyReport::Violation {
                sequence: idx as u64,
                reason: "hash chain broken (entry altered)".into()
            }
        );
    }

    #[test]
    fn injected_commit_failure_is_atomic() {
        let (mut l, w) = ledger_with("1");
        l.inject_commit_failure();
        let before = l.to_journal_text();
        assert!(matches!(
            l.mint_nft(&w, &generate_art(4, "f", 8, 8)),
            Err(ChainError::InjectedFault)
        ));
        assert_eq!(l.to_journal_text(), before);
        assert!(l.mint_nft(&w, &generate_art(4, "f", 8, 8)).is_ok());
    }

    #[test]
    fn persist_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.log");
        let (mut l, w) = ledger_with("2");
        l.mint_nft(&w, &generate_art(1, "p", 8, 8)).unwrap();
        l.persist(&path).unwrap();
        let back = Ledger::load(&path, *l.config(), Arc::new(SimClock::default())).unwrap();
        assert_eq!(back.entries(), l.entries());
        assert_eq!(back.balance(&w), l.balance(&w));
        assert!(verify_ledger(&back).is_ok());

        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"amount\":0", "\"amount\":7");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            Ledger::load(&path, *l.config(), Arc::new(SimClock::default())),
            Err(ChainError::Corrupt(_))
        ));
    }

    #[test]
    fn address_stable_per_seed() {
        assert_eq!(Address::from_seed(5), Address::from_seed(5));
        assert_ne!(Address::from_seed(5), Address::from_seed(6));
    }
}
