use rayon::prelude::*;
use zerebro_core::backrooms::{run_backrooms, BackroomsConfig, BackroomsSummary};
use zerebro_core::generator::MarkovGenerator;
use zerebro_core::memory::{MemoryStore, Source};

const SEEDS: u64 = 20;

fn run(rate: f64, seed: u64) -> (BackroomsSummary, usize, usize) {
    let cfg = BackroomsConfig {
        turns: 200,
        seed,
        injection_rate: rate,
        ..BackroomsConfig::default()
    };
    let mut mem = MemoryStore::default();
    let t = run_backrooms(&cfg, &mut mem, &MarkovGenerator::bundled()).unwrap();
    let agent_records = mem.records().filter(|r| r.source == Source::Agent).count();
    (t.summary(), mem.len(), agent_records)
}

#[test]
fn injection_raises_windowed_diversity_on_matched_seeds() {
    let mean = |rate: f64| {
        let runs: Vec<_> = (0..SEEDS).into_par_iter().map(|s| run(rate, s)).collect();
        for (_, total, agent) in &runs {
            assert_eq!(*total, 200);
            assert_eq!(*agent, 200);
        }
        let n = runs.len() as f64;
        (
            runs.iter().map(|r| r.0.mean_distinct_2).sum::<f64>() / n,
            runs.iter().map(|r| r.0.mean_dispersion).sum::<f64>() / n,
        )
    };
    let (d0, e0) = mean(0.0);
    let (d5, e5) = mean(0.5);
    assert!(d5 >= d0, "distinct-2 {d5} < {d0}");
    assert!(e5 >= e0, "dispersion {e5} < {e0}");
}

#[test]
fn window_and_length_are_as_configured() {
    let cfg = BackroomsConfig {
        turns: 40,
        seed: 9,
        window: 7,
        injection_rate: 0.3,
        ..BackroomsConfig::default()
    };
    let mut mem = MemoryStore::default();
    let t = run_backrooms(&cfg, &mut mem, &MarkovGenerator::bundled()).unwrap();
    assert_eq!(t.turns.len(), 40);
    // The first turn's window holds a single text, so pairwise dispersion is undefined.
    assert_eq!(t.turns[0].report.embedding_dispersion, 0.0);
    assert!(t.turns[1].report.embedding_dispersion > 0.0);
    assert!(t.turns.iter().all(|turn| turn.report.is_finite()));
    let text = t.to_text();
    assert_eq!(
        text.matches("\nturn ").count() + usize::from(text.starts_with("turn ")),
        40
    );
}
