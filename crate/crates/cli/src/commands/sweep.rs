use std::collections::BTreeMap;

use driftflow::eval::mmd2_median;
use driftflow::flow::{run_flow, two_delta_experiment, write_two_delta_csv, FlowConfig, TargetSource};
use driftflow::generator::train::sample_noise;
use driftflow::{sample_dataset, streams, DatasetName, DatasetSpec, DriftKind, ParticleBatch, RngHandle, Role};
use rayon::prelude::*;

use super::{column, read_table, OK};
use crate::cli::SweepArgs;
use crate::config::{resolve_sweep, ResolvedSweep};
use crate::error::{is_runtime, CliError, CliResult};
use crate::manifest::Recorder;
use crate::svg::{self, Series, PALETTE};

#[derive(Debug, Clone, Copy)]
struct Cell {
    drift: DriftKind,
    tau: f64,
    dataset: DatasetName,
    seed: u64,
}

struct CellResult {
    final_mmd2: f64,
    diverged: bool,
}

fn cells(r: &ResolvedSweep) -> Vec<Cell> {
    let mut out = Vec::new();
    for &drift in &r.drifts {
        for &tau in &r.taus {
            for &dataset in &r.datasets {
                for &seed in &r.seeds {
                    out.push(Cell { drift, tau, dataset, seed });
                }
            }
        }
    }
    out
}

/// Runs one flow; numeric failures count as divergence, anything else aborts.
fn run_cell(r: &ResolvedSweep, c: Cell) -> Result<CellResult, driftflow::Error> {
    let mut drift = r.drift_template.clone();
    drift.kind = c.drift;
    drift.tau = c.tau;
    let cfg = FlowConfig {
        drift,
        eta: r.eta,
        n_steps: r.steps,
        snapshot_every: r.steps,
        seed: c.seed,
    };
    let spec = DatasetSpec::new(c.dataset);
    let dim = c.dataset.dim();
    let init = sample_noise(r.n, dim, RngHandle::new(c.seed, streams::INIT)) * r.init_std;
    let init = ParticleBatch::new(init, Role::Model, c.seed)?;
    let target = if r.fixed_target {
        TargetSource::Fixed(sample_dataset(&spec, r.n, RngHandle::new(c.seed, streams::DATA).substream(0))?)
    } else {
        TargetSource::Resampled { spec: spec.clone(), n: r.n }
    };
    let out = match run_flow(&cfg, &init, &target) {
        Ok(out) => out,
        Err(e) if is_runtime(&e) => {
            eprintln!("cell {} tau={} {} seed={}: {e}", c.drift, c.tau, c.dataset, c.seed);
            return Ok(CellResult {
                final_mmd2: f64::NAN,
                diverged: true,
            });
        }
        Err(e) => return Err(e),
    };
    if out.diverged_at.is_some() {
        return Ok(CellResult {
            final_mmd2: f64::NAN,
            diverged: true,
        });
    }
    let reference = sample_dataset(&spec, r.n, RngHandle::new(c.seed, streams::EVAL))?;
    Ok(CellResult {
        final_mmd2: mmd2_median(&out.final_batch, &reference)?,
        diverged: false,
    })
}

pub fn run(args: &SweepArgs) -> CliResult<i32> {
    let r = resolve_sweep(args)?;
    let mut rec = Recorder::new(&args.out)?;

    if !r.drifts.is_empty() {
        let grid = cells(&r);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(r.threads)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        let results: Vec<Result<CellResult, driftflow::Error>> =
            pool.install(|| grid.par_iter().map(|&c| run_cell(&r, c)).collect());

        let mut w = csv::Writer::from_writer(rec.create("sweep.csv")?);
        w.write_record(["drift", "tau", "dataset", "seed", "final_mmd2", "diverged"])?;
        for (c, res) in grid.iter().zip(results) {
            let res = res?;
            w.write_record([
                c.drift.to_string(),
                c.tau.to_string(),
                c.dataset.to_string(),
                c.seed.to_string(),
                res.final_mmd2.to_string(),
                (res.diverged as u8).to_string(),
            ])?;
        }
        w.flush()?;
        drop(w);
        sweep_plots(&mut rec)?;
    }

    if let Some(t) = &r.two_delta {
        let rows = two_delta_experiment(t.half_gap, t.alpha, t.beta, &t.taus)?;
        write_two_delta_csv(&rows, rec.create("two_delta.csv")?)?;
        two_delta_plot(&mut rec)?;
    }

    rec.finish(&r, r.seeds.first().copied(), "ok")?;
    Ok(OK)
}

/// One log-log panel per dataset: seed-averaged final MMD² against τ, one
/// line per drift kind. Diverged cells are left out of the average.
fn sweep_plots(rec: &mut Recorder) -> CliResult<()> {
    let mut r = csv::Reader::from_path(rec.root().join("sweep.csv"))?;
    // dataset -> drift -> tau bits -> (sum, count)
    let mut acc: BTreeMap<String, BTreeMap<String, BTreeMap<u64, (f64, usize)>>> = BTreeMap::new();
    for row in r.records() {
        let row = row?;
        let tau: f64 = row[1].parse().unwrap_or(f64::NAN);
        let v: f64 = row[4].parse().unwrap_or(f64::NAN);
        let e = acc
            .entry(row[2].to_string())
            .or_default()
            .entry(row[0].to_string())
            .or_default()
            .entry(tau.to_bits())
            .or_insert((0.0, 0));
        if v.is_finite() {
            e.0 += v;
            e.1 += 1;
        }
    }
    for (dataset, drifts) in &acc {
        let series: Vec<Series<'_>> = drifts
            .iter()
            .enumerate()
            .map(|(k, (drift, taus))| {
                let mut points: Vec<(f64, f64)> = taus
                    .iter()
                    .filter(|(_, (_, n))| *n > 0)
                    .map(|(bits, (s, n))| (f64::from_bits(*bits), s / *n as f64))
                    .collect();
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series {
                    label: drift,
                    color: PALETTE[k % PALETTE.len()],
                    points,
                }
            })
            .collect();
        let text = svg::line_plot(&format!("final mmd2, {dataset}"), "tau", "final mmd2", &series, true, true);
        rec.write_text(&format!("plots/sweep_{dataset}.svg"), &text)?;
    }
    Ok(())
}

fn two_delta_plot(rec: &mut Recorder) -> CliResult<()> {
    let (h, rows) = read_table(&rec.root().join("two_delta.csv"))?;
    let ce = column(&h, "eps")?;
    let series: Vec<Series<'_>> = ["v_kl", "v_sp", "v_w2"]
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let c = column(&h, name)?;
            Ok(Series {
                label: name,
                color: PALETTE[k],
                points: rows.iter().map(|r| (r[ce], r[c].abs())).collect(),
            })
        })
        .collect::<CliResult<_>>()?;
    let text = svg::line_plot("two-atom velocities at +D", "eps", "|velocity|", &series, true, true);
    rec.write_text("plots/two_delta.svg", &text)
}
