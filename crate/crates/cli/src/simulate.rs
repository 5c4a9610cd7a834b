use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::json;

use jam_core::driver::simulate_game;
use jam_core::stats::{SimReport, StatsRecord};
use jam_core::{GameConfig, GameContext, Gateway};

use crate::table::{num, render};
use crate::{CliError, Format};

pub struct Options {
    pub games: usize,
    pub seed: u64,
    pub config: GameConfig,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub format: Format,
}

pub fn log_name(seed: u64) -> String {
    format!("game-{seed}.jsonl")
}

/// Runs the games on worker threads. Each game is independent and fully
/// determined by its seed, so the result does not depend on scheduling.
pub fn run(opts: &Options) -> Result<String, CliError> {
    if opts.games == 0 {
        return Err(CliError::InvalidConfig("--games must be at least 1".into()));
    }
    opts.config.validate()?;
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    }
    let ctx = GameContext::default();
    let gateway = Gateway::offline();
    let jobs = opts
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, opts.games);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<StatsRecord, CliError>>>> =
        Mutex::new((0..opts.games).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= opts.games {
                    break;
                }
                let seed = opts.seed + i as u64;
                let outcome = play(opts, seed, &ctx, &gateway);
                results.lock().expect("results lock")[i] = Some(outcome);
            });
        }
    });
    let records = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every game ran"))
        .collect::<Result<Vec<_>, _>>()?;
    let report = SimReport::aggregate(&records);
    if let Some(dir) = &opts.out {
        let path = dir.join("report.json");
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&path, text + "\n").map_err(CliError::io(format!("writing {}", path.display())))?;
    }
    Ok(match opts.format {
        Format::Lines => lines(&records, &report),
        Format::Table => table(&report),
    })
}

fn play(opts: &Options, seed: u64, ctx: &GameContext, gateway: &Gateway) -> Result<StatsRecord, CliError> {
    let game = simulate_game(&opts.config, seed, ctx, gateway).map_err(|e| match e {
        jam_core::driver::DriverError::Game(g) => CliError::from(g),
        e => CliError::Game(e.to_string()),
    })?;
    if let Some(dir) = &opts.out {
        let path = dir.join(log_name(seed));
        std::fs::write(&path, game.to_log()).map_err(CliError::io(format!("writing {}", path.display())))?;
    }
    Ok(StatsRecord::from_game(&game))
}

fn lines(records: &[StatsRecord], report: &SimReport) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&json!({ "type": "game", "game": r }).to_string());
        out.push('\n');
    }
    out.push_str(&json!({ "type": "report", "report": report }).to_string());
    out.push('\n');
    out
}

fn table(report: &SimReport) -> String {
    let mut out = format!(
        "games {}  seeds {}..={}\n\nPerformanceScore by round (human seat)\n",
        report.games, report.seed_first, report.seed_last
    );
    let rows: Vec<Vec<String>> = report
        .performance_by_round
        .iter()
        .enumerate()
        .map(|(i, m)| vec![(i + 1).to_string(), m.n.to_string(), num(m.mean), num(m.stddev)])
        .collect();
    out.push_str(&render(&["round", "n", "mean", "stddev"], &rows));
    let rb = &report.rules_broken;
    out.push_str(&format!(
        "\nRulesBroken per speech\nn {}  mean {}  stddev {}  min {}  median {}  max {}\n",
        rb.summary.n,
        num(rb.summary.mean),
        num(rb.summary.stddev),
        num(rb.min),
        num(rb.median),
        num(rb.max)
    ));
    let rows: Vec<Vec<String>> = rb
        .buckets
        .iter()
        .map(|b| {
            let range = match b.hi {
                Some(hi) => format!("[{:.2}, {:.2})", b.lo, hi),
                None => format!("[{:.2}, inf)", b.lo),
            };
            vec![range, b.count.to_string()]
        })
        .collect();
    out.push_str(&render(&["bucket", "speeches"], &rows));
    out.push_str("\nWin rate by archetype\n");
    let rows: Vec<Vec<String>> = report
        .archetypes
        .iter()
        .map(|a| vec![a.archetype.clone(), a.seats.to_string(), a.wins.to_string(), num(a.win_rate)])
        .collect();
    out.push_str(&render(&["archetype", "seats", "wins", "win_rate"], &rows));
    out
}
