use driftflow::flow::{run_flow, write_metrics_csv, TargetSource};
use driftflow::generator::train::sample_noise;
use driftflow::{sample_dataset, streams, ParticleBatch, RngHandle, Role};

use super::{column, read_points, read_table, step_name, DIVERGED, OK};
use crate::cli::FlowArgs;
use crate::config::resolve_flow;
use crate::error::{is_runtime, CliResult};
use crate::manifest::Recorder;
use crate::svg::{self, Series, PALETTE};

pub fn run(args: &FlowArgs) -> CliResult<i32> {
    let r = resolve_flow(args)?;
    let seed = r.flow.seed;
    let mut rec = Recorder::new(&args.out)?;

    let dim = r.dataset.name.dim();
    let init = sample_noise(r.n, dim, RngHandle::new(seed, streams::INIT)) * r.init_std;
    let init = ParticleBatch::new(init, Role::Model, seed)?;
    let first = sample_dataset(&r.dataset, r.n, RngHandle::new(seed, streams::DATA).substream(0))?;
    first.write_csv(rec.create("target.csv")?)?;
    let target = if r.fixed_target {
        TargetSource::Fixed(first)
    } else {
        TargetSource::Resampled {
            spec: r.dataset.clone(),
            n: r.n,
        }
    };

    let out = match run_flow(&r.flow, &init, &target) {
        Ok(out) => out,
        Err(e) if is_runtime(&e) => {
            eprintln!("flow stopped: {e}");
            rec.finish(&r, Some(seed), &format!("error: {e}"))?;
            return Ok(DIVERGED);
        }
        Err(e) => return Err(e.into()),
    };

    write_metrics_csv(&out.records, rec.create("metrics.csv")?)?;
    let mut snaps = Vec::new();
    for (step, batch) in &out.snapshots {
        let rel = format!("snapshots/{}.csv", step_name(*step));
        batch.write_csv(rec.create(&rel)?)?;
        snaps.push((*step, rel));
    }

    // Plots are built from the CSVs just written.
    let target_pts = read_points(&rec.root().join("target.csv"))?;
    for (step, rel) in &snaps {
        let pts = read_points(&rec.root().join(rel))?;
        let title = format!("{} on {}, step {step}", r.flow.drift.kind, r.dataset.name);
        let text = svg::scatter(
            &title,
            &[
                Series {
                    label: "data",
                    color: PALETTE[0],
                    points: target_pts.clone(),
                },
                Series {
                    label: "particles",
                    color: PALETTE[1],
                    points: pts,
                },
            ],
        );
        rec.write_text(&format!("plots/{}.svg", step_name(*step)), &text)?;
    }
    let (h, rows) = read_table(&rec.root().join("metrics.csv"))?;
    let (cs, ce) = (column(&h, "step")?, column(&h, "energy_mmd2")?);
    let energy = Series {
        label: "energy_mmd2",
        color: PALETTE[0],
        points: rows.iter().map(|r| (r[cs], r[ce])).collect(),
    };
    rec.write_text("plots/energy.svg", &svg::line_plot("energy", "step", "mmd2", &[energy], false, true))?;

    let (status, code) = match out.diverged_at {
        Some(s) => (format!("diverged at step {s}"), DIVERGED),
        None => ("ok".to_string(), OK),
    };
    if code != OK {
        eprintln!("flow {status}");
    }
    rec.finish(&r, Some(seed), &status)?;
    Ok(code)
}

