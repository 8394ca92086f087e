use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use paver_core::density::{self, DensityThreshold, DistressVector, FeatureUnit};
use paver_core::gep::{self, FunctionSet, GepConfig, Sample};
use paver_core::ingest::{self, CropRect};
use paver_core::metrics::{self, ClassCounts, MetricsError, PairedSeries};
use paver_core::pipeline::{self, PipelineError, ReportConfig};
use paver_core::predictors::{self, PaserModel, PredictError};

/// Pavement condition (PASER) scoring from distress detections and crack masks.
#[derive(Parser)]
#[command(name = "paver", version)]
struct Cli {
    /// JSON run configuration (corpus paths, threshold, models, window, spacing_m, ...).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for splits, permutations and evolution; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-class distress densities for one mask, or for the configured corpus.
    Density(DensityArgs),
    /// Score feature vectors with a model.
    Predict(PredictArgs),
    /// Evolve a PASER formula with gene expression programming.
    TrainGep(TrainGepArgs),
    /// Fit the deduct regression coefficients.
    FitLinreg(FitLinregArgs),
    /// Regression or detection metrics.
    Metrics(MetricsArgs),
    /// Per-image PASER and moving average along each section.
    Profile(ProfileArgs),
    /// Write the full report bundle for the configured corpus.
    Report(ReportArgs),
    /// Print street-view request URLs for every manifest image.
    FetchUrls(FetchUrlsArgs),
}

#[derive(Args)]
struct DensityArgs {
    /// Binary PGM (P5) mask; without it the configured corpus is used.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Detections JSONL (only rows for --image-id are used).
    #[arg(long, requires = "mask")]
    detections: Option<PathBuf>,
    #[arg(long, default_value = "image")]
    image_id: String,
    #[arg(long)]
    threshold: Option<u8>,
    /// Road window as X,Y,W,H.
    #[arg(long, value_parser = parse_crop)]
    crop: Option<CropRect>,
}

#[derive(Args)]
struct PredictArgs {
    /// Built-in model: gep, weights or linreg.
    #[arg(long, conflicts_with = "model_file")]
    model: Option<String>,
    /// Model JSON (as written by fit-linreg or train-gep).
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// CSV with an id column and feature columns <prefix>1..<prefix>9.
    #[arg(long, conflicts_with = "values")]
    features: Option<PathBuf>,
    /// Feature column prefix (default: c for count models, d for density models).
    #[arg(long)]
    prefix: Option<String>,
    /// Nine comma-separated feature values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    Counts,
    Percent,
}

impl From<Unit> for FeatureUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Counts => FeatureUnit::CountPerImage,
            Unit::Percent => FeatureUnit::PercentDensity,
        }
    }
}

#[derive(Args)]
struct TrainGepArgs {
    /// Training table, e.g. sections.csv from a report.
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value = "paser")]
    target: String,
    #[arg(long, value_enum, default_value = "counts")]
    unit: Unit,
    /// Feature column prefix (default: c for counts, d for percent).
    #[arg(long)]
    prefix: Option<String>,
    /// Output directory for model.json and history.csv.
    #[arg(long, default_value = "gep-out")]
    out: PathBuf,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    genes: Option<usize>,
    #[arg(long)]
    head: Option<usize>,
    #[arg(long)]
    tries: Option<usize>,
    #[arg(long)]
    generations_without_change: Option<u64>,
    #[arg(long)]
    max_generations: Option<u64>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    /// Use the low mutation rate (0.00138).
    #[arg(long, conflicts_with = "mutation_rate")]
    low_mutation: bool,
    #[arg(long)]
    max_complexity: Option<usize>,
    /// Function set: standard or extended.
    #[arg(long, default_value = "standard")]
    functions: String,
}

#[derive(Args)]
struct FitLinregArgs {
    /// Table with density columns <prefix>1..<prefix>9 and a PASER column.
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value = "d")]
    prefix: String,
    #[arg(long, default_value = "paser")]
    target: String,
    /// Write the fitted model JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// CSV of paired measured/predicted values.
    #[arg(long, required_unless_present = "counts")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "measured")]
    measured: String,
    #[arg(long, default_value = "predicted")]
    predicted: String,
    /// CSV of per-class detection counts (class,tp,fp,fn) for precision/recall/F1.
    #[arg(long, conflicts_with = "input")]
    counts: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Restrict to one model (default: all configured models).
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory (default: the config's out_dir, else ./report).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FetchUrlsArgs {
    /// Manifest to use instead of the configured one.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn parse_crop(s: &str) -> Result<CropRect, String> {
    let v: Vec<u32> =
        s.split(',').map(|p| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] => Ok(CropRect::new(x, y, w, h)),
        _ => Err("expected X,Y,W,H".into()),
    }
}

struct RunContext {
    config: Option<(ReportConfig, PathBuf)>,
    seed: Option<u64>,
}

impl RunContext {
    fn require_config(&self) -> Result<(ReportConfig, &Path)> {
        let (cfg, base) = self.config.as_ref().ok_or_else(|| anyhow!("this command needs --config"))?;
        let mut cfg = cfg.clone();
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok((cfg, base))
    }

    fn seed(&self) -> u64 {
        self.seed.or(self.config.as_ref().map(|(c, _)| c.seed)).unwrap_or(0)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn stdout_bytes(bytes: &[u8]) -> Result<()> {
    io::stdout().lock().write_all(bytes)?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn density(ctx: &RunContext, args: DensityArgs) -> Result<()> {
    let Some(mask_path) = args.mask else {
        let (mut cfg, base) = ctx.require_config()?;
        if let Some(t) = args.threshold {
            cfg.threshold = t;
        }
        cfg.models = vec![json!("weights")];
        let bundle = pipeline::build_report(&cfg, base)?;
        return stdout_bytes(bundle.get("densities.csv").expect("bundle has densities"));
    };
    let threshold =
        args.threshold.or(ctx.config.as_ref().map(|(c, _)| c.threshold)).map(DensityThreshold::new).unwrap_or_default();
    let mut mask = ingest::read_mask(&read(&mask_path)?).with_context(|| mask_path.display().to_string())?;
    let mut dets = match &args.detections {
        Some(p) => ingest::parse_detections(read(p)?.as_slice()).with_context(|| p.display().to_string())?,
        None => vec![],
    };
    dets.retain(|d| d.image_id == args.image_id);
    if let Some(rect) = args.crop {
        mask = ingest::apply_crop(&mask, &rect)?;
        dets = dets.iter().filter_map(|d| ingest::clip_detection(d, &rect)).collect();
    }
    let bm = density::binarize(&mask, threshold);
    let d = density::density_vector(&bm, &dets)?;
    let mut out = String::from("image_id,d1,d2,d3,d4,d5,d6,d7,d8,d9,global_density,threshold\n");
    let mut row = vec![args.image_id.clone()];
    row.extend(d.values().iter().map(|&v| num(v)));
    row.push(num(density::global_density(&bm)?));
    row.push(threshold.lo.to_string());
    out.push_str(&row.join(","));
    out.push('\n');
    stdout_bytes(out.as_bytes())
}

fn load_model(name: Option<&str>, file: Option<&Path>) -> Result<PaserModel> {
    match (name, file) {
        (_, Some(p)) => {
            let text = String::from_utf8(read(p)?).with_context(|| p.display().to_string())?;
            PaserModel::from_json(&text).with_context(|| p.display().to_string())
        }
        (Some(n), None) => {
            PaserModel::by_name(n).ok_or_else(|| anyhow!("unknown model {n:?} (expected gep, weights or linreg)"))
        }
        (None, None) => bail!("give --model or --model-file"),
    }
}

fn default_prefix(unit: FeatureUnit) -> &'static str {
    match unit {
        FeatureUnit::CountPerImage => "c",
        FeatureUnit::PercentDensity => "d",
    }
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = load_model(args.model.as_deref(), args.model_file.as_deref())?;
    let unit = model.unit();
    let (ids, features) = match (&args.features, &args.values) {
        (Some(p), _) => {
            let prefix = args.prefix.as_deref().unwrap_or(default_prefix(unit));
            let t = pipeline::read_feature_table(read(p)?.as_slice(), prefix, unit, None)
                .with_context(|| p.display().to_string())?;
            (t.ids, t.features)
        }
        (None, Some(v)) => {
            let values: [f64; 9] = v.as_slice().try_into().map_err(|_| anyhow!("--values needs nine numbers"))?;
            (vec!["values".to_string()], vec![DistressVector::new(values, unit)?])
        }
        (None, None) => bail!("give --features or --values"),
    };
    let mut out = String::from("id,model,paser,paser_raw\n");
    for (id, d) in ids.iter().zip(&features) {
        let s = model.predict(d).with_context(|| format!("row {id}"))?;
        out.push_str(&format!("{id},{},{},{}\n", model.name(), num(s.value), num(s.raw)));
    }
    stdout_bytes(out.as_bytes())
}

fn train_gep(ctx: &RunContext, args: TrainGepArgs) -> Result<()> {
    let unit = FeatureUnit::from(args.unit);
    let prefix = args.prefix.as_deref().unwrap_or(default_prefix(unit));
    let table = pipeline::read_feature_table(read(&args.table)?.as_slice(), prefix, unit, Some(&args.target))
        .with_context(|| args.table.display().to_string())?;
    let targets = table.targets.expect("target requested");
    let samples: Vec<Sample> =
        table.features.iter().zip(&targets).map(|(d, &t)| Sample { inputs: *d.values(), target: t }).collect();

    let mut cfg = if args.low_mutation { GepConfig::low_mutation() } else { GepConfig::default() };
    cfg.seed = ctx.seed();
    cfg.function_set =
        FunctionSet::by_name(&args.functions).ok_or_else(|| anyhow!("unknown function set {:?}", args.functions))?;
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { cfg.$field = v; })* };
    }
    set!(population, genes, head, tries, generations_without_change, max_generations, mutation_rate, max_complexity);

    let result = gep::evolve(&samples, &cfg)?;
    let model = PaserModel::Program { chromosome: result.best.clone(), unit };

    let mut history = String::from("generation,best_fitness,mean_fitness\n");
    for h in &result.history {
        history.push_str(&format!("{},{},{}\n", h.generation, num(h.best_fitness), num(h.mean_fitness)));
    }
    let mut model_json = model.to_json_value();
    model_json["training"] = json!({
        "seed": cfg.seed,
        "best_try": result.best_try,
        "training_fitness": result.training_fitness,
        "validation_fitness": result.validation_fitness,
        "n_samples": samples.len(),
    });
    let mut text = serde_json::to_string_pretty(&model_json)?;
    text.push('\n');
    write(&args.out.join("model.json"), text.as_bytes())?;
    write(&args.out.join("history.csv"), history.as_bytes())?;

    let predicted: Vec<f64> = samples.iter().map(|s| gep::evaluate_raw(&result.best, &s.inputs)).collect();
    let series = PairedSeries::new(targets, predicted)?;
    let test = if result.split.test.is_empty() { None } else { series.select(&result.split.test).ok() };
    println!("formula: {}", gep::render_program(&result.best));
    println!("training fitness: {}", num(result.training_fitness));
    println!("validation fitness: {}", num(result.validation_fitness));
    if let Some(t) = test {
        println!("test rmse: {}", num(metrics::rmse(&t)));
        if let Ok(r2) = metrics::r_squared(&t) {
            println!("test r2: {}", num(r2));
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn fit_linreg(args: FitLinregArgs) -> Result<()> {
    let t = pipeline::read_feature_table(
        read(&args.table)?.as_slice(),
        &args.prefix,
        FeatureUnit::PercentDensity,
        Some(&args.target),
    )
    .with_context(|| args.table.display().to_string())?;
    let fit = predictors::fit_linreg(&t.features, t.targets.as_deref().expect("target requested"))?;
    print!("{}", fit.table());
    println!("n = {}, residual df = {}", fit.n_samples, fit.degrees_of_freedom);
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string_pretty(&PaserModel::Linreg(fit.coefficients).to_json_value())?;
        text.push('\n');
        write(out, text.as_bytes())?;
    }
    Ok(())
}

fn metrics_cmd(ctx: &RunContext, args: MetricsArgs) -> Result<()> {
    if let Some(p) = &args.counts {
        let bytes = read(p)?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
        let mut names = Vec::new();
        let mut counts = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.with_context(|| format!("{}: line {}", p.display(), i + 2))?;
            let field = |k: usize| -> Result<u64> {
                rec.get(k)
                    .unwrap_or("")
                    .parse()
                    .with_context(|| format!("{}: line {}: column {}", p.display(), i + 2, k + 1))
            };
            names.push(rec.get(0).unwrap_or("").to_string());
            counts.push(ClassCounts {
                true_positives: field(1)?,
                false_positives: field(2)?,
                false_negatives: field(3)?,
            });
        }
        let report = metrics::precision_recall_f1(&counts);
        let per_class: Vec<_> =
            names.iter().zip(&report.per_class).map(|(n, p)| json!({"class": n, "prf": p})).collect();
        let out = json!({"per_class": per_class, "macro_average": report.average, "warnings": report.warnings});
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    let p = args.input.as_ref().expect("clap requires input or counts");
    let bytes = read(p)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("{}: missing column {name:?}", p.display()))
    };
    let (mc, pc) = (col(&args.measured)?, col(&args.predicted)?);
    let (mut measured, mut predicted) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |c: usize| -> Result<f64> {
            let s = rec.get(c).unwrap_or("");
            s.parse().map_err(|_| anyhow!("{}: line {}: not a number: {s:?}", p.display(), i + 2))
        };
        measured.push(cell(mc)?);
        predicted.push(cell(pc)?);
    }
    let report = pipeline::metrics_report(&measured, &predicted, ctx.seed())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn profile(ctx: &RunContext, args: ProfileArgs) -> Result<()> {
    let (mut cfg, base) = ctx.require_config()?;
    if let Some(m) = args.model {
        cfg.models = vec![json!(m)];
    }
    let bundle = pipeline::build_report(&cfg, base)?;
    stdout_bytes(bundle.get("profiles.csv").expect("bundle has profiles"))
}

fn report(ctx: &RunContext, args: ReportArgs) -> Result<()> {
    let (cfg, base) = ctx.require_config()?;
    let out = args.out.unwrap_or_else(|| cfg.out_dir.as_ref().map(|d| base.join(d)).unwrap_or_else(|| "report".into()));
    let bundle = pipeline::build_report(&cfg, base)?;
    pipeline::write_bundle(&bundle, &out)?;
    for (name, _) in &bundle.files {
        println!("{}", out.join(name).display());
    }
    Ok(())
}

fn fetch_urls(ctx: &RunContext, args: FetchUrlsArgs) -> Result<()> {
    let (cfg, base) = match (&ctx.config, &args.manifest) {
        (Some(_), _) => {
            let (c, b) = ctx.require_config()?;
            (c, b.to_path_buf())
        }
        (None, Some(_)) => (ReportConfig::default(), PathBuf::from(".")),
        (None, None) => bail!("give --config or --manifest"),
    };
    let path = match &args.manifest {
        Some(p) => p.clone(),
        None => base.join(cfg.corpus.manifest.as_ref().ok_or_else(|| anyhow!("corpus.manifest is not set"))?),
    };
    let sections = ingest::parse_manifest_with_defaults(read(&path)?.as_slice(), cfg.spacing_m, cfg.view_m)
        .with_context(|| path.display().to_string())?;
    let urls = pipeline::streetview_urls(&sections, &cfg.streetview)?;
    let mut out = String::from("section_id,image_id,heading,nonstandard_pitch,url\n");
    for u in urls {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            u.section_id,
            u.image_id,
            num(u.heading),
            u.nonstandard_pitch,
            u.url
        ));
    }
    stdout_bytes(out.as_bytes())
}

/// Exit status 2 for numeric failures (non-finite results, rank deficiency,
/// zero variance), 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err.chain().any(|e| {
        if let Some(p) = e.downcast_ref::<PipelineError>() {
            return p.is_numeric();
        }
        if let Some(p) = e.downcast_ref::<PredictError>() {
            return matches!(p, PredictError::NonFinite { .. } | PredictError::RankDeficient { .. });
        }
        matches!(e.downcast_ref::<MetricsError>(), Some(MetricsError::ZeroVariance(_)))
    });
    if numeric {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    let config = match &cli.config {
        Some(p) => {
            let cfg = ReportConfig::load(p)?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Some((cfg, base))
        }
        None => None,
    };
    let ctx = RunContext { config, seed: cli.seed };
    match cli.command {
        Command::Density(a) => density(&ctx, a),
        Command::Predict(a) => predict(a),
        Command::TrainGep(a) => train_gep(&ctx, a),
        Command::FitLinreg(a) => fit_linreg(a),
        Command::Metrics(a) => metrics_cmd(&ctx, a),
        Command::Profile(a) => profile(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::FetchUrls(a) => fetch_urls(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
