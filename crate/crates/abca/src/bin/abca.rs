use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abca::backend::embed::NullEmbeddingCache;
use abca::backend::http::HttpBackend;
use abca::backend::mock::{MockBackend, MockScript};
use abca::{emit_report, load_config, load_dataset, run_benchmark, BenchmarkOptions, CachedBackend, HttpEmbedder, MockEmbedder, ReportFormat};
use abca_core::{run_pipeline, AbcaConfig, AnswerMode, AuditBundle, ChatBackend, Embedder, JudgeMode, Question};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "abca", version, about = "Aspect-based causal abstention for LLM question answering")]
struct Cli {
    /// TOML config file; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Mock)]
    backend: BackendKind,
    /// Mock script (JSON); required with `--backend mock`.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Directory for the completion cache; no caching when absent.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Ignore cached entries (fresh results are still written).
    #[arg(long, global = true)]
    no_cache_read: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Records processed concurrently by `eval`.
    #[arg(long, global = true, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, global = true, value_enum)]
    judge: Option<JudgeArg>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question and print the verdict.
    Ask {
        question: String,
        #[arg(long, default_value = "q")]
        id: String,
        /// Answer options; makes the question categorical.
        #[arg(long = "option")]
        options: Vec<String>,
        /// Where to write the audit bundle; `abca-audit-<id>.json` by default.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Run a JSONL dataset and report metrics.
    Eval {
        dataset: PathBuf,
        /// Write the per-record results (JSON array) here.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a saved audit bundle or results file.
    Inspect { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Http,
    Mock,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum JudgeArg {
    StringMatch,
    LlmJudge,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Markdown,
}

struct Backends {
    chat: Box<dyn ChatBackend>,
    embedder: Box<dyn Embedder>,
}

fn build_backends(cli: &Cli, cfg: &AbcaConfig) -> Result<Backends> {
    let (chat, embedder): (Box<dyn ChatBackend>, Box<dyn Embedder>) = match cli.backend {
        BackendKind::Mock => {
            let path = cli.script.as_deref().context("--backend mock needs --script")?;
            let script = MockScript::load(path)?;
            let embedder = MockEmbedder::new(cfg.seed, cfg.embedding_dim).with_aliases(&script.embedding_aliases);
            (Box::new(MockBackend::new(script)?), Box::new(embedder))
        }
        BackendKind::Http => (
            Box::new(HttpBackend::from_env()?),
            Box::new(HttpEmbedder::from_env(cfg.embedding_dim)?),
        ),
    };
    let chat: Box<dyn ChatBackend> = match &cli.cache_dir {
        Some(dir) => Box::new(
            CachedBackend::new(chat, dir)
                .with_context(|| format!("creating cache dir {}", dir.display()))?
                .with_bypass(cli.no_cache_read),
        ),
        None => chat,
    };
    Ok(Backends { chat, embedder })
}

fn resolve_config(cli: &Cli) -> Result<AbcaConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => AbcaConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(j) = cli.judge {
        cfg.judge_mode = match j {
            JudgeArg::StringMatch => JudgeMode::StringMatch,
            JudgeArg::LlmJudge => JudgeMode::LlmJudge,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_bundle(b: &AuditBundle) {
    println!("question: {}", b.question.text);
    if let Some(frame) = &b.frame {
        println!("dimension: {}", frame.dimension.name);
        for a in &frame.aspects {
            println!("  aspect {:<32} weight {:.3}", a.aspect.value, a.weight);
        }
    }
    if let Some(err) = &b.discovery_error {
        println!("discovery failed: {err}");
    }
    for s in &b.summaries {
        println!("  {:<40} tau {:.3} alpha {:.3} -> {}", s.aspect, s.tau, s.alpha, s.representative_answer);
    }
    if let Some(v) = &b.verdict {
        println!("verdict: {:?}  cad {:.3}  null distance {:.3}", v.kind(), v.gate.cad, v.gate.null_distance);
        if !v.gate.caveat_aspects.is_empty() {
            println!("caveats: {}", v.gate.caveat_aspects.join(", "));
        }
    }
    if !b.degraded.is_empty() {
        println!("degraded: {}", b.degraded.join(", "));
    }
    println!("response: {}", b.final_text);
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Inspect { path } => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            if let Ok(b) = serde_json::from_str::<AuditBundle>(&text) {
                print_bundle(&b);
            } else {
                let results: Vec<abca::RecordResult> =
                    serde_json::from_str(&text).context("neither an audit bundle nor a results file")?;
                for r in &results {
                    match (&r.bundle, &r.error) {
                        (Some(b), _) => {
                            println!("== {} ({:?})", r.id, r.cell);
                            print_bundle(b);
                        }
                        (None, Some(e)) => println!("== {} aborted: {e}", r.id),
                        (None, None) => println!("== {} (empty)", r.id),
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ask { question, id, options, audit } => {
            let cfg = resolve_config(&cli)?;
            let b = build_backends(&cli, &cfg)?;
            let q = if options.is_empty() {
                Question::open_ended(id.clone(), question.clone())?
            } else {
                Question::new(id.clone(), question.clone(), AnswerMode::Categorical, Some(options.clone()))?
            };
            let null = NullEmbeddingCache::new().get(&cfg.null_phrases, b.embedder.as_ref())?;
            let bundle = run_pipeline(&q, &cfg, b.chat.as_ref(), b.embedder.as_ref(), &null)?;
            match cli.format {
                FormatArg::Json => println!("{}", serde_json::to_string_pretty(&bundle)?),
                FormatArg::Markdown => print_bundle(&bundle),
            }
            let audit = audit.clone().unwrap_or_else(|| PathBuf::from(format!("abca-audit-{id}.json")));
            write_file(&audit, &serde_json::to_string_pretty(&bundle)?)?;
            if matches!(cli.format, FormatArg::Markdown) {
                println!("audit: {}", audit.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { dataset, results, out } => {
            let cfg = resolve_config(&cli)?;
            let b = build_backends(&cli, &cfg)?;
            let records = load_dataset(dataset)?;
            let parallelism = cli.parallelism;
            if parallelism == 0 {
                bail!("--parallelism must be at least 1");
            }
            let judge = (cfg.judge_mode == JudgeMode::LlmJudge).then_some(b.chat.as_ref());
            let report = run_benchmark(
                &records,
                &cfg,
                b.chat.as_ref(),
                b.embedder.as_ref(),
                BenchmarkOptions { parallelism },
                judge,
            )?;
            let format = match cli.format {
                FormatArg::Json => ReportFormat::Json,
                FormatArg::Markdown => ReportFormat::Markdown,
            };
            let text = emit_report(&report, format)?;
            match out {
                Some(p) => write_file(p, &text)?,
                None => print!("{text}"),
            }
            if let Some(p) = results {
                write_file(p, &serde_json::to_string_pretty(&report.results)?)?;
            }
            if !report.aborted.is_empty() {
                eprintln!("{} record(s) aborted: {}", report.aborted.len(), report.aborted.join(", "));
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
