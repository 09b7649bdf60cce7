use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use zerebro_core::backrooms::parse_transcript_summary;
use zerebro_core::config::ConfigMap;

use super::backrooms::TRANSCRIPT_FILE;
use super::collapse::REPORT_FILE;
use crate::run::Run;

pub const MERGED_FILE: &str = "report.txt";

/// A directory argument means the conventional file inside it.
fn locate(arg: &str, file_name: &str) -> PathBuf {
    let p = Path::new(arg);
    if p.is_dir() {
        p.join(file_name)
    } else {
        p.to_path_buf()
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn collapse_section(path: &Path, out: &mut String) -> anyhow::Result<()> {
    let text = read(path)?;
    let kv = ConfigMap::parse(&text).with_context(|| format!("{} is not a collapse report", path.display()))?;
    let _ = writeln!(out, "collapse ({})", path.display());
    let get = |k: &str| kv.get(k).unwrap_or("?");
    let _ = writeln!(
        out,
        "  model {} with m={}, G={}, rho={} over {} seeds from {}",
        get("model"),
        get("m"),
        get("generations"),
        get("rho"),
        get("seeds"),
        get("base_seed")
    );
    if let Some(mean) = kv.get("mean_final_variance_ratio") {
        let _ = write!(out, "  final variance ratio {mean}");
        if let (Some(exp), Some(err)) = (kv.get("expected_variance_ratio"), kv.parsed::<f64>("relative_error")?) {
            let _ = write!(out, " (expected {exp}, relative error {:.2}%)", err * 100.0);
        }
        out.push('\n');
    }
    if let Some(d1) = kv.get("mean_distinct_generation_1") {
        let _ = write!(out, "  distinct symbols after one generation {d1}");
        if let Some(exp) = kv.get("expected_distinct_generation_1") {
            let _ = write!(out, " (expected {exp})");
        }
        out.push('\n');
    }
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        if let Some((k, v)) = line.split_once('=') {
            let _ = writeln!(out, "  {k:<34}{v}");
        }
    }
    Ok(())
}

fn backrooms_section(path: &Path, out: &mut String) -> anyhow::Result<()> {
    let text = read(path)?;
    let s =
        parse_transcript_summary(&text).ok_or_else(|| anyhow!("{} has no backrooms summary line", path.display()))?;
    let header = text.lines().next().unwrap_or_default().trim_start_matches("# ");
    let _ = writeln!(out, "backrooms ({})", path.display());
    let _ = writeln!(out, "  {header}");
    let _ = writeln!(out, "  {:<34}{}", "turns", s.turns);
    let _ = writeln!(out, "  {:<34}{}", "injected_turns", s.injected_turns);
    let _ = writeln!(out, "  {:<34}{}", "mean_distinct_2 (last window)", s.mean_distinct_2);
    let _ = writeln!(out, "  {:<34}{}", "mean_dispersion (last window)", s.mean_dispersion);
    let r = s.final_report;
    let _ = writeln!(out, "  {:<34}{}", "final shannon_entropy_bits", r.shannon_entropy_bits);
    let _ = writeln!(out, "  {:<34}{}", "final distinct_1", r.distinct_1);
    let _ = writeln!(out, "  {:<34}{}", "final distinct_2", r.distinct_2);
    let _ = writeln!(out, "  {:<34}{}", "final embedding_dispersion", r.embedding_dispersion);
    let _ = writeln!(out, "  {:<34}{}", "final tail_mass", r.tail_mass);
    Ok(())
}

pub fn run(run: &mut Run) -> anyhow::Result<()> {
    let collapse = run.config.get("report.collapse").map(|a| locate(a, REPORT_FILE));
    let backrooms = run.config.get("report.backrooms").map(|a| locate(a, TRANSCRIPT_FILE));
    if collapse.is_none() && backrooms.is_none() {
        return Err(run.usage("give --collapse and/or --backrooms"));
    }
    let mut out = String::from("zerebro report\n");
    if let Some(p) = &collapse {
        out.push('\n');
        collapse_section(p, &mut out)?;
    }
    if let Some(p) = &backrooms {
        out.push('\n');
        backrooms_section(p, &mut out)?;
    }
    run.write(MERGED_FILE, &out)?;
    print!("{out}");
    Ok(())
}
