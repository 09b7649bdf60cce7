use std::fmt::Write as _;

use zerebro_core::collapse::{
    compare_regimens, expected_variance_ratio, run_seeds, seed_range, CategoricalModel, CollapseTrajectory,
    GaussianModel, GenerationMetrics, Model, RecursionConfig, TrajectoryStatus,
};

use crate::run::Run;

pub const REPORT_FILE: &str = "collapse-report.txt";
pub const TRAJECTORY_FILE: &str = "collapse-trajectory.tsv";
pub const FINALS_FILE: &str = "collapse-finals.tsv";
pub const REGIMENS_FILE: &str = "collapse-regimens.tsv";

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn final_line(seed: u64, t: &CollapseTrajectory) -> String {
    let status = match t.status {
        TrajectoryStatus::Complete => "complete".to_string(),
        TrajectoryStatus::Collapsed { generation } => format!("collapsed@{generation}"),
    };
    let last = t.rows.len() - 1;
    match t.final_row() {
        GenerationMetrics::Gaussian {
            variance_ratio,
            tail_mass,
            ..
        } => format!("{seed}\t{status}\t{last}\t{variance_ratio}\t{tail_mass}\n"),
        GenerationMetrics::Categorical {
            distinct,
            entropy_bits,
            tail_mass,
        } => format!("{seed}\t{status}\t{last}\t{distinct}\t{entropy_bits}\t{tail_mass}\n"),
    }
}

pub fn run(run: &mut Run) -> anyhow::Result<()> {
    let model = run.require("collapse.model", "--model (gaussian|categorical)")?;
    run.config.set_default("collapse.m", 100);
    run.config.set_default("collapse.generations", 50);
    run.config.set_default("collapse.rho", 0);
    run.config.set_default("collapse.seeds", 100);
    let m: usize = run.config.parsed_or("collapse.m", 100)?;
    let generations: usize = run.config.parsed_or("collapse.generations", 50)?;
    let rho: f64 = run.config.parsed_or("collapse.rho", 0.0)?;
    let n_seeds: usize = run.config.parsed_or("collapse.seeds", 100)?;
    let rhos: Option<Vec<f64>> = run.config.list("collapse.rhos")?;
    if n_seeds == 0 {
        return Err(run.usage("--seeds must be positive"));
    }

    let origin = match model.as_str() {
        "gaussian" => {
            run.config.set_default("collapse.mu", 0);
            run.config.set_default("collapse.sigma2", 1);
            let mu = run.config.parsed_or("collapse.mu", 0.0)?;
            let sigma2 = run.config.parsed_or("collapse.sigma2", 1.0)?;
            Model::Gaussian(GaussianModel::new(mu, sigma2).map_err(|e| run.usage(e))?)
        }
        "categorical" => {
            run.config.set_default("collapse.symbols", 1000);
            let symbols = run.config.parsed_or("collapse.symbols", 1000u32)?;
            Model::Categorical(CategoricalModel::uniform(symbols).map_err(|e| run.usage(e))?)
        }
        other => return Err(run.usage(format!("unknown model {other:?}, expected gaussian or categorical"))),
    };
    let base = RecursionConfig {
        m,
        generations,
        rho,
        seed: run.seed,
        origin,
    };
    base.validate().map_err(|e| run.usage(e))?;
    for r in rhos.iter().flatten() {
        base.with_rho(*r).validate().map_err(|e| run.usage(e))?;
    }

    let seeds = seed_range(run.seed, n_seeds);
    let runs = run_seeds(&base, &seeds)?;
    run.write(TRAJECTORY_FILE, runs[0].to_tsv())?;

    let mut finals = String::from("seed\tstatus\tfinal_generation\t");
    finals.push_str(match &base.origin {
        Model::Gaussian(_) => "variance_ratio\ttail_mass\n",
        Model::Categorical(_) => "distinct\tentropy_bits\ttail_mass\n",
    });
    for (seed, t) in seeds.iter().zip(&runs) {
        finals.push_str(&final_line(*seed, t));
    }
    run.write(FINALS_FILE, finals)?;

    let collapsed = runs
        .iter()
        .filter(|t| matches!(t.status, TrajectoryStatus::Collapsed { .. }))
        .count();
    let mut report = String::from("# collapse report\n");
    let _ = writeln!(report, "model={model}");
    let _ = writeln!(report, "m={m}\ngenerations={generations}\nrho={rho}");
    let _ = writeln!(report, "seeds={n_seeds}\nbase_seed={}", run.seed);
    let _ = writeln!(report, "collapsed_runs={collapsed}");
    let tails: Vec<f64> = runs.iter().map(|t| t.final_row().tail_mass()).collect();
    match &base.origin {
        Model::Gaussian(g) => {
            let ratios: Vec<f64> = runs.iter().filter_map(|t| t.final_row().variance_ratio()).collect();
            let (mean, se) = mean_and_se(&ratios);
            let _ = writeln!(report, "origin_mu={}\norigin_sigma2={}", g.mu, g.sigma2);
            let _ = writeln!(report, "variance_estimator=mle-biased");
            let _ = writeln!(report, "mean_final_variance_ratio={mean}");
            let _ = writeln!(report, "se_final_variance_ratio={se}");
            if rho == 0.0 {
                let expected = expected_variance_ratio(m, generations);
                let _ = writeln!(report, "expected_variance_ratio={expected}");
                let _ = writeln!(report, "relative_error={}", (mean - expected).abs() / expected);
            }
        }
        Model::Categorical(c) => {
            let symbols = c.distinct();
            let distinct: Vec<f64> = runs
                .iter()
                .filter_map(|t| t.final_row().distinct())
                .map(|d| d as f64)
                .collect();
            let entropies: Vec<f64> = runs.iter().filter_map(|t| t.final_row().entropy_bits()).collect();
            let _ = writeln!(report, "origin_symbols={symbols}");
            let _ = writeln!(report, "mean_final_distinct={}", mean_and_se(&distinct).0);
            let _ = writeln!(report, "mean_final_entropy_bits={}", mean_and_se(&entropies).0);
            if generations >= 1 {
                let gen1: Vec<f64> = runs
                    .iter()
                    .filter_map(|t| t.rows.get(1).and_then(GenerationMetrics::distinct))
                    .map(|d| d as f64)
                    .collect();
                let _ = writeln!(report, "mean_distinct_generation_1={}", mean_and_se(&gen1).0);
                if rho == 0.0 {
                    let s = symbols as f64;
                    let expected = s * (1.0 - (1.0 - 1.0 / s).powi(m as i32));
                    let _ = writeln!(report, "expected_distinct_generation_1={expected}");
                }
            }
            if rho == 0.0 {
                let monotone = runs
                    .iter()
                    .all(|t| t.rows.windows(2).all(|w| w[1].distinct() <= w[0].distinct()));
                let _ = writeln!(report, "distinct_nonincreasing_all_seeds={monotone}");
            }
        }
    }
    let _ = writeln!(report, "mean_final_tail_mass={}", mean_and_se(&tails).0);

    if let Some(rhos) = rhos {
        let regimens = compare_regimens(&base, &rhos, n_seeds)?;
        run.write(REGIMENS_FILE, regimens.to_string())?;
        let _ = writeln!(
            report,
            "regimens={}",
            rhos.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
        );
    }
    run.write(REPORT_FILE, &report)?;
    print!("{report}");
    Ok(())
}
