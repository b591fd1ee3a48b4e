//! Command-line interface of the point cloud quality assessment toolkit.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pcqa::evaluator::{mock_score, score_point_cloud, EndpointConfig};
use pcqa::experiment::{run_experiment, ExperimentConfig};
use pcqa::features::{extract_structural_features, feature_names};
use pcqa::manifest::{group_kfold, load_manifest};
use pcqa::metrics::compute_report;
use pcqa::projection::{pad_and_resize, render_cube_projections, RenderConfig};
use pcqa::rating::{level_text, MosRange, LEVELS};
use pcqa::svr::{train_svr, save_model, FusedFeature, SvrHyper};

#[derive(Parser)]
#[command(
    name = "pcqa",
    about = "No-reference point cloud quality assessment toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RenderArgs {
    /// Pixels per image side.
    #[arg(long, default_value_t = 1024)]
    resolution: u32,
    /// Splat half-width in pixels.
    #[arg(long, default_value_t = 2)]
    splat_radius: u32,
    /// Frame margin as a fraction of the box extent.
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
    /// Background color as R,G,B.
    #[arg(long, default_value = "255,255,255", value_parser = parse_rgb)]
    background: [u8; 3],
}

impl RenderArgs {
    fn to_config(&self) -> Result<RenderConfig> {
        let cfg = RenderConfig {
            resolution: self.resolution,
            splat_radius: self.splat_radius,
            background: self.background,
            margin: self.margin,
        };
        cfg.validate().map_err(|e| anyhow!(e))?;
        Ok(cfg)
    }
}

fn parse_rgb(text: &str) -> Result<[u8; 3], String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err("expected R,G,B".into());
    }
    let mut rgb = [0u8; 3];
    for (slot, part) in rgb.iter_mut().zip(parts) {
        *slot = part.trim().parse().map_err(|_| format!("bad channel '{part}'"))?;
    }
    Ok(rgb)
}

#[derive(Subcommand)]
enum Command {
    /// Render the six cube-face projections of a cloud to PNG files.
    Project {
        /// Input PLY file.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for <cloud>_face1..6.png.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Print the structural feature row of a cloud as CSV.
    Features {
        #[arg(long)]
        input: PathBuf,
        /// Neighborhood sizes, e.g. 10,20.
        #[arg(long, value_delimiter = ',', default_value = "10,20")]
        scales: Vec<usize>,
    },
    /// Export the fine-tuning question-answer dataset of one fold.
    ExportSft {
        #[arg(long)]
        manifest: PathBuf,
        /// Total fold count.
        #[arg(long)]
        folds: usize,
        /// Which fold's training split to export.
        #[arg(long)]
        fold: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory holding the rendered projections.
        #[arg(long)]
        projections_dir: PathBuf,
        /// Output JSONL path; a .meta.json sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one cloud: print the five rating probabilities as CSV.
    Score {
        #[arg(long)]
        input: PathBuf,
        /// Use the deterministic mock instead of an endpoint.
        #[arg(long, conflicts_with = "endpoint_url")]
        mock: bool,
        /// True MOS of the cloud (mock only).
        #[arg(long, required_if_eq("mock", "true"))]
        mos: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        mos_min: f64,
        #[arg(long, default_value_t = 100.0)]
        mos_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Chat-completions base URL.
        #[arg(long)]
        endpoint_url: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Where to write intermediate projections (default: temp dir).
        #[arg(long)]
        proj_dir: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Train the fusion SVR from a features CSV and a scores CSV.
    Train {
        /// Manifest supplying the MOS targets.
        #[arg(long)]
        manifest: PathBuf,
        /// CSV with name plus the 12 structural feature columns.
        #[arg(long)]
        features: PathBuf,
        /// CSV with name plus the 5 rating probability columns.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        c: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// RBF width; defaults to 1/17.
        #[arg(long)]
        gamma: Option<f64>,
        /// Select C and gamma by inner group 3-fold grid search.
        #[arg(long)]
        grid_search: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full k-fold experiment from a TOML config.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute SRCC/PLCC/KRCC/RMSE between two value files.
    Metrics {
        /// CSV of predictions (either `value` rows or `name,value`).
        #[arg(long)]
        pred: PathBuf,
        /// CSV of MOS values in the same format.
        #[arg(long)]
        mos: PathBuf,
        /// Apply the four-parameter logistic mapping before PLCC/RMSE.
        #[arg(long)]
        logistic: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        // Single-line, machine-parseable error on stderr.
        let msg = format!("{err:#}").replace('\n', " ");
        eprintln!("pcqa: error: {msg}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Project { input, out_dir, render } => {
            let cfg = render.to_config()?;
            let pc = pcqa::load_ply(&input).context("loading input cloud")?;
            let set = render_cube_projections(&pc, &cfg);
            let paths = set.save_pngs(&out_dir)?;
            for p in paths {
                println!("{}", p.display());
            }
        }
        Command::Features { input, scales } => {
            let pc = pcqa::load_ply(&input).context("loading input cloud")?;
            let fv = extract_structural_features(&pc, &scales)?;
            println!("name,{}", feature_names(fv.scales()).join(","));
            let row: Vec<String> = fv.values().iter().map(|v| v.to_string()).collect();
            println!("{},{}", pc.name(), row.join(","));
        }
        Command::ExportSft {
            manifest,
            folds,
            fold,
            seed,
            projections_dir,
            out,
        } => {
            let m = load_manifest(&manifest)?;
            let splits = group_kfold(&m, folds, seed)?;
            let split = splits
                .get(fold)
                .ok_or_else(|| anyhow!("fold {fold} out of range (k = {folds})"))?;
            let n = pcqa::evaluator::export_sft_dataset(&m, split, &projections_dir, &out)?;
            println!("{n}");
        }
        Command::Score {
            input,
            mock,
            mos,
            mos_min,
            mos_max,
            seed,
            sigma,
            endpoint_url,
            model,
            proj_dir,
            render,
        } => {
            let pc = pcqa::load_ply(&input).context("loading input cloud")?;
            let eval = if mock {
                let mos = mos.ok_or_else(|| anyhow!("--mos is required with --mock"))?;
                let range = MosRange::new(mos_min, mos_max)?;
                mock_score(pc.name(), mos, range, seed, sigma)
            } else {
                let url = endpoint_url.ok_or_else(|| anyhow!("--endpoint-url or --mock required"))?;
                let model = model.ok_or_else(|| anyhow!("--model is required with an endpoint"))?;
                let cfg = render.to_config()?;
                let tmp;
                let dir = match &proj_dir {
                    Some(d) => d.clone(),
                    None => {
                        tmp = std::env::temp_dir().join(format!("pcqa-score-{}", std::process::id()));
                        tmp.clone()
                    }
                };
                let set = render_cube_projections(&pc, &cfg);
                let raw_paths = set.save_pngs(&dir)?;
                let mut resized_paths = Vec::with_capacity(6);
                for p in &raw_paths {
                    let img = image::open(p)?.to_rgb8();
                    let resized = pad_and_resize(&img, 448, cfg.background);
                    let rp = p.with_file_name(format!(
                        "r448_{}",
                        p.file_name().unwrap().to_string_lossy()
                    ));
                    resized.save_with_format(&rp, image::ImageFormat::Png)?;
                    resized_paths.push(rp);
                }
                score_point_cloud(&resized_paths, &EndpointConfig::new(url, model))?
            };
            let header: Vec<&str> = LEVELS.iter().map(|l| level_text(*l)).collect();
            println!("cloud_name,{}", header.join(","));
            let probs: Vec<String> = eval.probs.iter().map(|p| p.to_string()).collect();
            println!("{},{}", pc.name(), probs.join(","));
        }
        Command::Train {
            manifest,
            features,
            scores,
            out,
            c,
            epsilon,
            gamma,
            grid_search,
            seed,
        } => {
            let m = load_manifest(&manifest)?;
            let feature_rows = read_named_rows(&features, 12)?;
            let score_rows = read_named_rows(&scores, 5)?;
            let mut xs = Vec::new();
            let mut y = Vec::new();
            let mut groups = Vec::new();
            for entry in &m.entries {
                let f = feature_rows
                    .iter()
                    .find(|(n, _)| n == &entry.cloud_name)
                    .ok_or_else(|| anyhow!("no feature row for '{}'", entry.cloud_name))?;
                let s = score_rows
                    .iter()
                    .find(|(n, _)| n == &entry.cloud_name)
                    .ok_or_else(|| anyhow!("no score row for '{}'", entry.cloud_name))?;
                let mut values = s.1.clone();
                values.extend_from_slice(&f.1);
                xs.push(FusedFeature::new(values)?);
                y.push(entry.mos);
                groups.push(entry.group_id.clone());
            }
            let mut hyper = SvrHyper {
                c,
                epsilon,
                ..SvrHyper::default()
            };
            if let Some(g) = gamma {
                hyper.gamma = g;
            }
            if grid_search {
                let rows: Vec<Vec<f64>> = xs.iter().map(|x| x.values().to_vec()).collect();
                hyper = pcqa::svr::grid_search(&rows, &y, &groups, &hyper, seed)?;
                eprintln!("grid search selected C = {}, gamma = {}", hyper.c, hyper.gamma);
            }
            let model = train_svr(&xs, &y, &hyper)?;
            save_model(&model, &out)?;
            eprintln!(
                "trained on {} samples, {} support vectors -> {}",
                y.len(),
                model.support_vectors.len(),
                out.display()
            );
        }
        Command::Evaluate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let output = run_experiment(&cfg)?;
            println!("fold,srcc,plcc,krcc,rmse");
            for fold in &output.per_fold {
                let r = &fold.report;
                println!("{},{},{},{},{}", fold.fold_index, r.srcc, r.plcc, r.krcc, r.rmse);
            }
            let m = &output.mean;
            println!("mean,{},{},{},{}", m.srcc, m.plcc, m.krcc, m.rmse);
            eprintln!(
                "wrote {}, {}, {}",
                output.metrics_csv.display(),
                output.predictions_csv.display(),
                output.record_json.display()
            );
        }
        Command::Metrics { pred, mos, logistic } => {
            let (p, m) = read_value_pair(&pred, &mos)?;
            let report = compute_report(&p, &m, logistic)?;
            println!("srcc,plcc,krcc,rmse,n,logistic");
            println!(
                "{},{},{},{},{},{}",
                report.srcc, report.plcc, report.krcc, report.rmse, report.n, report.logistic_applied
            );
        }
    }
    Ok(())
}

/// Reads a CSV of `name,v1..vN` rows with a header line.
fn read_named_rows(path: &PathBuf, expect: usize) -> Result<Vec<(String, Vec<f64>)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let name = fields
            .next()
            .ok_or_else(|| anyhow!("{}:{}: empty row", path.display(), i + 1))?
            .to_string();
        let values: Result<Vec<f64>, _> = fields.map(|f| f.trim().parse::<f64>()).collect();
        let values = values.map_err(|_| anyhow!("{}:{}: non-numeric value", path.display(), i + 1))?;
        if values.len() != expect {
            bail!(
                "{}:{}: expected {} value columns, got {}",
                path.display(),
                i + 1,
                expect,
                values.len()
            );
        }
        rows.push((name, values));
    }
    Ok(rows)
}

/// Reads two single-value CSVs (plain values or `name,value` rows, optional
/// header) and aligns them by name when both carry names, by position
/// otherwise.
fn read_value_pair(pred_path: &PathBuf, mos_path: &PathBuf) -> Result<(Vec<f64>, Vec<f64>)> {
    let pred = read_value_column(pred_path)?;
    let mos = read_value_column(mos_path)?;
    let named = pred.iter().all(|(n, _)| n.is_some()) && mos.iter().all(|(n, _)| n.is_some());
    if named {
        let mut p = Vec::new();
        let mut m = Vec::new();
        for (name, value) in &pred {
            let name = name.as_ref().unwrap();
            let partner = mos
                .iter()
                .find(|(n, _)| n.as_ref() == Some(name))
                .ok_or_else(|| anyhow!("no mos row named '{name}'"))?;
            p.push(*value);
            m.push(partner.1);
        }
        Ok((p, m))
    } else {
        if pred.len() != mos.len() {
            bail!("row counts differ: {} vs {}", pred.len(), mos.len());
        }
        Ok((
            pred.into_iter().map(|(_, v)| v).collect(),
            mos.into_iter().map(|(_, v)| v).collect(),
        ))
    }
}

fn read_value_column(path: &PathBuf) -> Result<Vec<(Option<String>, f64)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match fields.as_slice() {
            [value] => match value.parse::<f64>() {
                Ok(v) => out.push((None, v)),
                Err(_) if out.is_empty() => continue, // header
                Err(_) => bail!("{}: non-numeric value '{value}'", path.display()),
            },
            [name, value] => match value.trim().parse::<f64>() {
                Ok(v) => out.push((Some(name.trim().to_string()), v)),
                Err(_) if out.is_empty() => continue, // header
                Err(_) => bail!("{}: non-numeric value '{value}'", path.display()),
            },
            _ => bail!("{}: expected 1 or 2 columns", path.display()),
        }
    }
    if out.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(out)
}
