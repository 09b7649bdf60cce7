use std::path::PathBuf;
use std::sync::Arc;

use anyhow::bail;
use zerebro_core::agent::DEFAULT_TOKEN_SUPPLY;
use zerebro_core::chain::{
    generate_art, implied_market_cap, read_entries, validate_symbol, verify_entries, verify_ledger, Address, Amount,
    ChainConfig, Ledger, TokenParams, DEFAULT_HEIGHT, DEFAULT_WIDTH,
};
use zerebro_core::clock::{SimClock, SIM_EPOCH_MS};

use crate::run::Run;

const CLOCK_STEP_MS: i64 = 1_000;

fn chain_config(run: &mut Run) -> anyhow::Result<ChainConfig> {
    let d = ChainConfig::default();
    let c = &mut run.config;
    c.set_default("chain.mint_fee", d.mint_fee);
    c.set_default("chain.deploy_fee", d.deploy_fee);
    c.set_default("chain.sale_fee", d.sale_fee);
    c.set_default("chain.transfer_fee", d.transfer_fee);
    Ok(ChainConfig {
        mint_fee: c.parsed_or("chain.mint_fee", d.mint_fee)?,
        deploy_fee: c.parsed_or("chain.deploy_fee", d.deploy_fee)?,
        sale_fee: c.parsed_or("chain.sale_fee", d.sale_fee)?,
        transfer_fee: c.parsed_or("chain.transfer_fee", d.transfer_fee)?,
    })
}

/// Load the ledger at `chain.ledger_path` (or start one) and make sure the
/// operator wallet exists.
fn open(run: &mut Run) -> anyhow::Result<(Ledger, Address, PathBuf)> {
    let config = chain_config(run)?;
    let path = run.path_or_default("chain.ledger_path", "ledger.journal");
    let wallet_seed: u64 = run.config.parsed_or("chain.wallet_seed", run.seed)?;
    let endowment: Amount = run.config.parsed_or("chain.endowment", Amount::from_coins(100))?;
    run.config.set_default("chain.wallet_seed", wallet_seed);
    run.config.set_default("chain.endowment", endowment);
    let mut ledger = if path.exists() {
        let entries = read_entries(&path)?;
        let start = entries.last().map_or(SIM_EPOCH_MS, |e| e.timestamp + CLOCK_STEP_MS);
        Ledger::load(&path, config, Arc::new(SimClock::new(start, CLOCK_STEP_MS)))?
    } else {
        Ledger::new(config, Arc::new(SimClock::default()))
    };
    let address = Address::from_seed(wallet_seed);
    if ledger.wallet(&address).is_none() {
        ledger.create_wallet(wallet_seed, endowment)?;
    }
    Ok((ledger, address, path))
}

pub fn mint(run: &mut Run) -> anyhow::Result<()> {
    let theme = run.require("chain.theme", "--theme")?;
    run.config.set_default("chain.art_width", DEFAULT_WIDTH);
    run.config.set_default("chain.art_height", DEFAULT_HEIGHT);
    let width = run.config.parsed_or("chain.art_width", DEFAULT_WIDTH)?;
    let height = run.config.parsed_or("chain.art_height", DEFAULT_HEIGHT)?;
    if width == 0 || height == 0 {
        return Err(run.usage("art dimensions must be positive"));
    }
    let (mut ledger, address, path) = open(run)?;
    let art = generate_art(run.seed, &theme, width, height);
    let record = ledger.mint_nft(&address, &art)?;
    let art_path = art.write_to_dir(run.out)?;
    run.record(art_path);
    ledger.persist(&path)?;
    run.record(path);
    println!("token_id={}", record.token_id);
    println!("art_hash={}", record.art_hash);
    println!("owner={address}");
    println!("balance={}", ledger.balance(&address));
    Ok(())
}

pub fn deploy(run: &mut Run) -> anyhow::Result<()> {
    let name = run.require("chain.name", "--name")?;
    let symbol = run.require("chain.symbol", "--symbol")?;
    validate_symbol(&symbol).map_err(|e| run.usage(e))?;
    run.config.set_default("chain.supply", DEFAULT_TOKEN_SUPPLY);
    let total_supply = run.config.parsed_or("chain.supply", DEFAULT_TOKEN_SUPPLY)?;
    let price: Option<Amount> = run.config.parsed("chain.price")?;
    let (mut ledger, address, path) = open(run)?;
    let token = ledger.deploy_token(
        &address,
        TokenParams {
            name,
            symbol,
            total_supply,
        },
    )?;
    ledger.persist(&path)?;
    run.record(path);
    println!("symbol={}", token.symbol);
    println!("name={}", token.name);
    println!("total_supply={}", token.total_supply);
    println!("deployer={}", token.deployer);
    if let Some(price) = price {
        match implied_market_cap(token.total_supply, price) {
            Some(cap) => println!("implied_market_cap={cap}"),
            None => println!("implied_market_cap=overflow"),
        }
    }
    println!("balance={}", ledger.balance(&address));
    Ok(())
}

pub fn verify(run: &mut Run) -> anyhow::Result<()> {
    let path = run.path_or_default("chain.ledger_path", "ledger.journal");
    let report = if path.exists() {
        verify_entries(&read_entries(&path)?)
    } else {
        verify_ledger(&Ledger::with_defaults())
    };
    println!("{report}");
    if !report.is_ok() {
        bail!("ledger {} failed verification", path.display());
    }
    Ok(())
}
