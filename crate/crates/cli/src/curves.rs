use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use forcerl_core::experiments::{line_chart, moving_average, Series};

use crate::manifest::{RunManifest, METRICS_FILE};
use crate::{io_err, output_root, CliError};

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Run directories holding metrics.csv and manifest.json.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Moving-average window in epochs.
    #[arg(long, default_value_t = 10)]
    window: usize,
    /// Output directory; defaults to `$FORCERL_OUT/curves`.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct RunCurve {
    variant: String,
    score: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

fn read_run(dir: &Path) -> Result<RunCurve, CliError> {
    let variant = match RunManifest::read(dir) {
        Ok(m) => m.variant,
        Err(_) => dir.file_name().map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned()),
    };
    let path = dir.join(METRICS_FILE);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Runtime(format!("{}: missing column {name}", path.display())))
    };
    let (s, l, r) = (col("score")?, col("score_left")?, col("score_right")?);
    let mut curve = RunCurve {
        variant,
        score: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
    };
    for row in reader.records() {
        let row = row.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let num = |i: usize| row.get(i).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
        curve.score.push(num(s));
        curve.left.push(num(l));
        curve.right.push(num(r));
    }
    Ok(curve)
}

/// Mean and sample standard deviation of the finite entries.
fn mean_std(values: &[f64]) -> (f64, f64, usize) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN, 0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt(), v.len())
}

pub fn curves(args: CurvesArgs) -> Result<(), CliError> {
    if args.window == 0 {
        return Err(CliError::Config("--window must be positive".into()));
    }
    let out = args.out.unwrap_or_else(|| output_root().join("curves"));
    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;

    let mut groups: BTreeMap<String, Vec<RunCurve>> = BTreeMap::new();
    for dir in &args.runs {
        let run = read_run(dir)?;
        groups.entry(run.variant.clone()).or_default().push(run);
    }

    let mut csv = String::from("variant,epoch,runs,mean,std,mean_left,mean_right\n");
    let mut series = Vec::new();
    for (variant, runs) in &groups {
        let smooth = |pick: fn(&RunCurve) -> &Vec<f64>| -> Vec<Vec<f64>> {
            runs.iter().map(|r| moving_average(pick(r), args.window)).collect()
        };
        let (score, left, right) = (smooth(|r| &r.score), smooth(|r| &r.left), smooth(|r| &r.right));
        let epochs = runs.iter().map(|r| r.score.len()).max().unwrap_or(0);
        let at = |curves: &[Vec<f64>], e: usize| -> Vec<f64> { curves.iter().filter_map(|c| c.get(e).copied()).collect() };
        let (mut xs, mut means, mut stds) = (Vec::new(), Vec::new(), Vec::new());
        for e in 0..epochs {
            let (m, sd, n) = mean_std(&at(&score, e));
            let (ml, _, _) = mean_std(&at(&left, e));
            let (mr, _, _) = mean_std(&at(&right, e));
            csv.push_str(&format!("{variant},{},{n},{m},{sd},{ml},{mr}\n", e + 1));
            xs.push((e + 1) as f64);
            means.push(m);
            stds.push(sd);
        }
        series.push(Series {
            label: format!("{variant} (n={})", runs.len()),
            x: xs,
            y: means,
            band: Some(stds),
        });
    }
    let csv_path = out.join("curves.csv");
    std::fs::write(&csv_path, csv).map_err(|e| io_err(&csv_path, e))?;
    let svg_path = out.join("curves.svg");
    let svg = line_chart(
        &format!("Evaluation score, {}-epoch moving average", args.window),
        "epoch",
        "score",
        &series,
    );
    std::fs::write(&svg_path, svg).map_err(|e| io_err(&svg_path, e))?;
    println!("curves written to {}", out.display());
    Ok(())
}
