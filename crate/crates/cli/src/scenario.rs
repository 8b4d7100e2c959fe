//! `factsflow scenario`: one CSV row per seeded trial.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use anyhow::{bail, Context, Result};
use clap::Args;

use factsflow::case_io::{self, RunRecord, ScenarioSpec, TrialConfig};

use crate::MipArgs;

#[derive(Args)]
pub struct ScenarioArgs {
    net: PathBuf,
    #[arg(long, default_value_t = 0)]
    remove_lines: usize,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Share of lines that get a FACTS device.
    #[arg(long, default_value_t = 0.3)]
    facts_frac: f64,
    /// FACTS interval half-width in percent of the nominal susceptance.
    #[arg(long, default_value_t = 30.0)]
    interval_pct: f64,
    #[arg(long, default_value_t = 1.0)]
    gen_factor: f64,
    #[arg(long, default_value_t = 1.0)]
    load_factor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; rows are written in trial order regardless.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Gap and time box for each trial's MFF (default box 600 s).
    #[command(flatten)]
    mip: MipArgs,
    /// Append a wall-clock `runtime_s` column.
    #[arg(long)]
    timings: bool,
    #[arg(short, long)]
    output: PathBuf,
}

pub fn run(args: ScenarioArgs) -> Result<()> {
    if args.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let base = crate::read_network(&args.net)?;
    let spec = ScenarioSpec {
        seed: args.seed,
        lines_removed: args.remove_lines,
        facts_fraction: args.facts_frac,
        interval_pct: args.interval_pct,
        gen_factor: args.gen_factor,
        load_factor: args.load_factor,
    };
    spec.validate()?;
    let mut mff = args.mip.config()?;
    if args.mip.time_limit.is_none() {
        mff.time_limit = TrialConfig::default().mff.time_limit;
    }
    let config = TrialConfig { mff };

    let file = File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", case_io::csv_header(args.timings))?;
    out.flush()?;

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, factsflow::Result<RunRecord>)>();
    thread::scope(|scope| -> Result<()> {
        for _ in 0..args.jobs.min(args.trials.max(1)) {
            let tx = tx.clone();
            let (next, base, spec, config) = (&next, &base, &spec, &config);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= args.trials {
                    break;
                }
                let name = format!("trial{k}");
                let r = case_io::run_trial(base, &spec.for_trial(k as u64), &name, config);
                if tx.send((k, r)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut written = 0;
        for (k, r) in rx {
            pending.insert(k, r);
            while let Some(r) = pending.remove(&written) {
                let record = match r {
                    Ok(record) => record,
                    Err(err) => {
                        // Stop handing out trials; rows written so far stay on disk.
                        next.store(args.trials, Ordering::SeqCst);
                        return Err(err).with_context(|| format!("trial {written}"));
                    }
                };
                writeln!(out, "{}", record.csv_row(args.timings))?;
                out.flush()?;
                log::info!("trial {written}: mpf {:.6} mff {:.6}", record.mpf, record.mff);
                written += 1;
            }
        }
        Ok(())
    })
}
