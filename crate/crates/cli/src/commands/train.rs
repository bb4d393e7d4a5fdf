use driftflow::generator::train::{write_train_metrics_csv, Holdout};
use driftflow::generator::{train_with, Checkpoint, GeneratorModel, TrainRecord};
use driftflow::{streams, ParticleBatch, RngHandle, Role};

use super::{column, read_points, read_table, step_name, DIVERGED, OK};
use crate::cli::TrainArgs;
use crate::config::resolve_train;
use crate::error::{is_runtime, CliResult};
use crate::manifest::Recorder;
use crate::svg::{self, Series, PALETTE};

/// Generated panels shown next to the data panel in `samples_grid.svg`.
const GRID_PANELS: usize = 5;

struct Logged {
    record: TrainRecord,
    samples: Option<ParticleBatch>,
    checkpoint: Option<Checkpoint>,
}

pub fn run(args: &TrainArgs) -> CliResult<i32> {
    let r = resolve_train(args)?;
    let cfg = &r.train;
    let mut rec = Recorder::new(&args.out)?;

    let holdout = Holdout::new(cfg)?;
    holdout.data.write_csv(rec.create("data.csv")?)?;
    let model = GeneratorModel::init(cfg.arch.clone(), RngHandle::new(cfg.seed, streams::INIT))?;

    let mut logged: Vec<Logged> = Vec::new();
    let result = train_with(cfg, model, |record, m| {
        let samples = m
            .forward(holdout.noise.view())
            .ok()
            .and_then(|out| ParticleBatch::new(out, Role::Model, cfg.seed).ok());
        let checkpoint = (record.step % r.checkpoint_every == 0 || record.step == cfg.n_steps)
            .then(|| Checkpoint::new(record.step, m));
        logged.push(Logged {
            record: *record,
            samples,
            checkpoint,
        });
    });
    let (status, code) = match &result {
        Ok(o) => match o.diverged_at {
            Some(s) => (format!("diverged at step {s}"), DIVERGED),
            None => ("ok".to_string(), OK),
        },
        Err(e) if is_runtime(e) => (format!("error: {e}"), DIVERGED),
        Err(_) => return Err(result.err().expect("error").into()),
    };

    let records: Vec<TrainRecord> = logged.iter().map(|l| l.record).collect();
    write_train_metrics_csv(&records, rec.create("train_metrics.csv")?)?;
    let mut sample_files = Vec::new();
    for l in &logged {
        let name = step_name(l.record.step);
        if let Some(b) = &l.samples {
            let rel = format!("samples/{name}.csv");
            b.write_csv(rec.create(&rel)?)?;
            sample_files.push((l.record.step, rel));
        }
        if let Some(c) = &l.checkpoint {
            c.write_json(rec.create(&format!("checkpoints/{name}.json"))?)?;
        }
    }

    plots(&mut rec, &sample_files, &format!("{} on {}", cfg.drift.kind, cfg.dataset.name))?;
    if code != OK {
        eprintln!("training {status}");
    }
    rec.finish(&r, Some(cfg.seed), &status)?;
    Ok(code)
}

/// Evenly spaced picks from `files`, always keeping the last one.
fn pick<T: Clone>(files: &[T], k: usize) -> Vec<T> {
    if files.len() <= k {
        return files.to_vec();
    }
    (0..k).map(|i| files[i * (files.len() - 1) / (k - 1)].clone()).collect()
}

fn plots(rec: &mut Recorder, sample_files: &[(usize, String)], title: &str) -> CliResult<()> {
    let data = read_points(&rec.root().join("data.csv"))?;
    let mut panels = vec![(
        "data".to_string(),
        vec![Series {
            label: "data",
            color: PALETTE[0],
            points: data,
        }],
    )];
    for (step, rel) in pick(sample_files, GRID_PANELS) {
        panels.push((
            format!("step {step}"),
            vec![Series {
                label: "generated",
                color: PALETTE[1],
                points: read_points(&rec.root().join(rel))?,
            }],
        ));
    }
    rec.write_text("plots/samples_grid.svg", &svg::scatter_grid(title, &panels, 3))?;

    let (h, rows) = read_table(&rec.root().join("train_metrics.csv"))?;
    let (cs, cm, cl) = (column(&h, "step")?, column(&h, "mmd2_holdout")?, column(&h, "loss")?);
    let mmd = Series {
        label: "mmd2_holdout",
        color: PALETTE[0],
        points: rows.iter().map(|r| (r[cs], r[cm])).collect(),
    };
    let loss = Series {
        label: "loss",
        color: PALETTE[1],
        points: rows.iter().map(|r| (r[cs], r[cl])).collect(),
    };
    rec.write_text("plots/mmd.svg", &svg::line_plot(title, "step", "mmd2_holdout", &[mmd], false, true))?;
    rec.write_text("plots/loss.svg", &svg::line_plot(title, "step", "loss", &[loss], false, true))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::pick;

    #[test]
    fn pick_keeps_ends() {
        let v: Vec<usize> = (0..21).collect();
        assert_eq!(pick(&v, 5), vec![0, 5, 10, 15, 20]);
        assert_eq!(pick(&v[..3], 5), vec![0, 1, 2]);
    }
}
