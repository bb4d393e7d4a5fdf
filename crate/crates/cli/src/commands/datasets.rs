use driftflow::{sample_dataset, streams, DatasetName, DatasetSpec, RngHandle};

use super::{read_points, OK};
use crate::cli::DatasetsArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;
use crate::svg::{self, Series, PALETTE};

fn names(selector: &[String]) -> CliResult<Vec<DatasetName>> {
    let mut out = Vec::new();
    for s in selector {
        let found: Vec<DatasetName> = if s.trim() == "all" {
            DatasetName::ALL.to_vec()
        } else {
            vec![s.parse()?]
        };
        for n in found {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no datasets selected".into()));
    }
    Ok(out)
}

pub fn run(args: &DatasetsArgs) -> CliResult<i32> {
    let names = names(&args.dataset)?;
    let mut rec = Recorder::new(&args.out)?;
    let mut specs = Vec::new();
    for name in names {
        let mut spec = DatasetSpec::new(name);
        if let Some(noise) = args.noise {
            spec = spec.with_noise(noise);
        }
        let batch = sample_dataset(&spec, args.n, RngHandle::new(args.seed, streams::DATA))?;
        let csv = format!("{name}.csv");
        batch.write_csv(rec.create(&csv)?)?;
        let pts = read_points(&rec.root().join(&csv))?;
        let series = [Series {
            label: name.as_str(),
            color: PALETTE[0],
            points: pts,
        }];
        rec.write_text(&format!("{name}.svg"), &svg::scatter(name.as_str(), &series))?;
        specs.push(spec);
    }
    let config = serde_json::json!({ "datasets": specs, "n": args.n, "seed": args.seed });
    rec.finish(&config, Some(args.seed), "ok")?;
    Ok(OK)
}
