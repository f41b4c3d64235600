use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vlaudit::analysis::ScoreMode;
use vlaudit::dataset::{
    builtin_region_table, fetch_images, load_manifest, plan_queries_with, plans_to_csv, validate_dataset,
    FetcherAdapter, LocalDirectoryFetcher, Region, TranslationTable, PROTOCOL_IMAGES_PER_CELL,
};
use vlaudit::encoder::{
    build_backend, encode_images_with, encode_texts_with, BackendConfig, BackendKind, EmbeddingCache, EncodeOptions,
    ImageInput, LayerSelector,
};
use vlaudit::geometry::PixelRect;
use vlaudit::lexicon::{build_prompts, builtin_lexicon, Lexicon};
use vlaudit::report::{emit_report, parse_formats, reproduce_appendix, run_pipeline, AuditConfig, AuditReport};
use vlaudit::saliency::{answer_region, grad_cam, write_saliency_artifacts, GradCamOptions, Question};
use vlaudit::synthetic::SyntheticFetcher;
use vlaudit::{AuditError, Result};

/// Region- and gender-stratified bias audit for vision-language models.
#[derive(Parser)]
#[command(name = "vlaudit", version)]
struct Cli {
    /// Log more detail (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the per-region query plan as CSV.
    Plan {
        #[arg(long, default_value_t = PROTOCOL_IMAGES_PER_CELL)]
        quota: usize,
        /// Comma-separated region abbreviations (default: all nine).
        #[arg(long, value_delimiter = ',')]
        regions: Vec<String>,
        /// Translation table CSV (`language,term_man,term_woman`).
        #[arg(long)]
        translations: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fetch images for every plan and write a manifest.
    Ingest {
        #[arg(long)]
        out: PathBuf,
        /// Import from `<dir>/<egress_country>/<term>/`.
        #[arg(long, conflicts_with = "synthetic")]
        source_dir: Option<PathBuf>,
        /// Generate this many synthetic images per query instead.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = PROTOCOL_IMAGES_PER_CELL)]
        quota: usize,
        #[arg(long)]
        translations: Option<PathBuf>,
    },
    /// Check per-cell image counts; exits 1 when the dataset is not conformant.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = PROTOCOL_IMAGES_PER_CELL)]
        per_cell: usize,
    },
    /// Encode prompts and images into the embedding cache.
    Encode {
        #[arg(long)]
        config: PathBuf,
        /// Cache file (overrides `output.cache`).
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Skip unreadable images instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Run the full audit and write tables, report and figures.
    Score {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of csv,json,png.
        #[arg(long)]
        formats: Option<String>,
        /// `abbreviation,gggi` CSV enabling the correlation step.
        #[arg(long)]
        gggi: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Record the wall-clock time in the report.
        #[arg(long)]
        timestamp: bool,
    },
    /// Recompute the summary table from per-keyword trait means.
    ReproducePaper {
        /// Per-keyword mean table (default: the bundled one).
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Reproduce)]
        mode: Mode,
        /// Also write `table2.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grad-CAM heatmap for a question about one image.
    Saliency {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        question: String,
        /// Audit config whose `[backend]` is used.
        #[arg(long, conflicts_with = "patch_region")]
        config: Option<PathBuf>,
        /// Use the patterned test backend with this `row,col,rows,cols` region.
        #[arg(long, value_delimiter = ',', value_name = "ROW,COL,ROWS,COLS")]
        patch_region: Option<Vec<usize>>,
        #[arg(long, default_value = "final")]
        layer: String,
        /// Keep negative contributions.
        #[arg(long)]
        signed: bool,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Candidates::Halves)]
        candidates: Candidates,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-emit artifacts from a saved `report.json`.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv,json,png")]
        formats: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Raw,
    Reproduce,
}

impl From<Mode> for ScoreMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Raw => ScoreMode::Raw,
            Mode::Reproduce => ScoreMode::Reproduce,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Candidates {
    Halves,
    Quadrants,
    None,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let top = e.to_string();
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let msg = s.to_string();
                if !top.contains(&msg) {
                    eprintln!("  caused by: {msg}");
                }
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Plan {
            quota,
            regions,
            translations,
            out,
        } => {
            let table = load_translations(translations.as_deref())?;
            let specs = select_regions(&regions)?;
            let csv = plans_to_csv(&plan_queries_with(&specs, quota, &table)?);
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|e| AuditError::io(&path, e)),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
        Command::Ingest {
            out,
            source_dir,
            synthetic,
            seed,
            quota,
            translations,
        } => {
            let fetcher: Box<dyn FetcherAdapter> = match (source_dir, synthetic) {
                (Some(root), None) => Box::new(LocalDirectoryFetcher { root }),
                (None, Some(n)) => Box::new(SyntheticFetcher::new(seed, n)),
                _ => return Err(AuditError::Config("ingest needs --source-dir or --synthetic".into())),
            };
            let table = load_translations(translations.as_deref())?;
            let plans = plan_queries_with(&builtin_region_table(), quota, &table)?;
            let report = fetch_images(&plans, fetcher.as_ref(), &out)?;
            for o in &report.outcomes {
                if o.shortfall > 0 || o.error.is_some() || !o.skipped.is_empty() {
                    println!(
                        "{} {}: kept {}, short {}{}{}",
                        o.plan.region,
                        o.plan.gender,
                        o.kept,
                        o.shortfall,
                        o.error.as_ref().map(|e| format!(", error: {e}")).unwrap_or_default(),
                        if o.skipped.is_empty() { String::new() } else { format!(", skipped {}", o.skipped.len()) }
                    );
                }
            }
            println!("{} images -> {}", report.dataset.len(), report.manifest_path.display());
            Ok(())
        }
        Command::Validate { manifest, per_cell } => {
            let report = validate_dataset(&load_manifest(&manifest)?, per_cell)?;
            println!("{report}");
            if report.conformant {
                Ok(())
            } else {
                let cells: Vec<String> =
                    report.failing_cells().map(|c| format!("{}/{} ({})", c.region, c.gender, c.count)).collect();
                Err(AuditError::Validation(format!("non-conformant cells: {}", cells.join(", "))))
            }
        }
        Command::Encode { config, cache, lenient } => {
            let cfg = AuditConfig::load(&config)?;
            let cache_path = cache
                .or(cfg.output.cache.clone())
                .ok_or_else(|| AuditError::Config("encode needs --cache or output.cache".into()))?;
            let backend = build_backend(&cfg.backend)?;
            let lexicon = match &cfg.lexicon.path {
                Some(p) => Lexicon::load_csv(p)?,
                None => builtin_lexicon(),
            };
            let dataset = load_manifest(&cfg.dataset.manifest)?;
            let prompts = build_prompts(lexicon.keywords(), &cfg.lexicon.template)?;
            let options = EncodeOptions {
                batch_size: cfg.backend.batch_size(),
                strict: !lenient,
            };
            let mut cache = EmbeddingCache::open(&cache_path)?;
            let texts = encode_texts_with(backend.as_ref(), &prompts, &options, Some(&mut cache))?;
            let images = encode_images_with(backend.as_ref(), &dataset, &options, Some(&mut cache))?;
            cache.save()?;
            println!(
                "{}: {} prompts ({} cached), {} images ({} cached), {} failed -> {}",
                backend.info().name,
                texts.batch.len(),
                texts.cache_hits,
                images.batch.len(),
                images.cache_hits,
                images.failures.len(),
                cache_path.display()
            );
            for f in &images.failures {
                println!("  {}: {}", f.id, f.message);
            }
            Ok(())
        }
        Command::Score {
            config,
            mode,
            out,
            formats,
            gggi,
            cache,
            timestamp,
        } => {
            let mut cfg = AuditConfig::load(&config)?;
            if let Some(m) = mode {
                cfg.analysis.mode = m.into();
            }
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            if let Some(f) = formats {
                cfg.output.formats = parse_formats(&f)?;
            }
            if gggi.is_some() {
                cfg.dataset.gggi = gggi;
            }
            if cache.is_some() {
                cfg.output.cache = cache;
            }
            cfg.output.timestamp |= timestamp;
            let report = run_pipeline(&cfg)?;
            print!("{}", report.table2().to_text());
            for c in &report.correlations {
                println!(
                    "{}: r = {:.3}, p = {:.4} (n = {})",
                    c.set.as_str(),
                    c.correlation.correlation.r,
                    c.correlation.correlation.p,
                    c.correlation.correlation.n
                );
            }
            println!("artifacts in {}", cfg.output.dir.display());
            Ok(())
        }
        Command::ReproducePaper { fixture, mode, out } => {
            let started = std::time::Instant::now();
            let table = reproduce_appendix(fixture.as_deref(), mode.into())?;
            print!("{}", table.to_text());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| AuditError::io(&dir, e))?;
                let path = dir.join("table2.csv");
                std::fs::write(&path, table.to_csv()).map_err(|e| AuditError::io(&path, e))?;
            }
            log::info!("reproduced in {:?}", started.elapsed());
            Ok(())
        }
        Command::Saliency {
            image,
            question,
            config,
            patch_region,
            layer,
            signed,
            alpha,
            candidates,
            out,
        } => {
            let backend_cfg = match (config, patch_region) {
                (Some(path), None) => AuditConfig::load(&path)?.backend,
                (None, Some(r)) if r.len() == 4 => BackendConfig {
                    kind: BackendKind::PatternedMock,
                    patch_region: Some([r[0], r[1], r[2], r[3]]),
                    ..BackendConfig::mock(0, 64)
                },
                (None, Some(_)) => return Err(AuditError::Config("--patch-region takes row,col,rows,cols".into())),
                _ => return Err(AuditError::Config("saliency needs --config or --patch-region".into())),
            };
            let backend = build_backend(&backend_cfg)?;
            let id = image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into());
            let bytes = std::fs::read(&image).map_err(|e| AuditError::io(&image, e))?;
            let input = ImageInput::from_bytes(id, bytes)?;
            let options = GradCamOptions {
                layer: layer.parse::<LayerSelector>().map_err(AuditError::Config)?,
                signed,
            };
            let map = grad_cam(backend.as_ref(), &input, &Question::new(question)?, &options)?;
            let rects: Vec<PixelRect> = match candidates {
                Candidates::Halves => PixelRect::halves(map.width, map.height).to_vec(),
                Candidates::Quadrants => PixelRect::quadrants(map.width, map.height).to_vec(),
                Candidates::None => Vec::new(),
            };
            let answer = if rects.is_empty() { None } else { Some(answer_region(&map, &rects)?) };
            let paths = write_saliency_artifacts(&out, &input, &map, answer.as_ref(), alpha)?;
            println!("similarity {:.4}", map.similarity);
            if let Some(a) = answer {
                println!(
                    "answer region x={} y={} w={} h={} (mass {:.3})",
                    a.bbox.x, a.bbox.y, a.bbox.width, a.bbox.height, a.mass_fraction
                );
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Report { input, out, formats } => {
            let report = AuditReport::load_json(&input)?;
            let formats: BTreeSet<_> = parse_formats(&formats)?;
            for p in emit_report(&report, &out, &formats)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn load_translations(path: Option<&Path>) -> Result<TranslationTable> {
    match path {
        Some(p) => TranslationTable::load(p),
        None => Ok(TranslationTable::builtin()),
    }
}

fn select_regions(abbrs: &[String]) -> Result<Vec<vlaudit::dataset::RegionSpec>> {
    let table = builtin_region_table();
    if abbrs.is_empty() {
        return Ok(table);
    }
    abbrs
        .iter()
        .map(|a| {
            let region: Region = a.parse().map_err(AuditError::Config)?;
            Ok(table.iter().find(|s| s.abbreviation == region).expect("builtin table covers all regions").clone())
        })
        .collect()
}
