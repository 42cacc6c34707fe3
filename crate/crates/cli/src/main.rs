use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use schemamatch_core::eval::{
    ablation, eval_matcher, generate_corpus, generate_default_corpora, prefix_robustness, standard_arms, sweep_kshot,
    LabeledCorpus, MatcherSpec, DOMAINS,
};
use schemamatch_core::ingest::ingest_csv;
use schemamatch_core::{BackendConfig, FilterConfig, Pipeline, PipelineConfig, SessionStore};
use schemamatch_server::{AppState, ServerOptions};

#[derive(Parser)]
#[command(name = "map", version, about = "Map source table columns onto a target schema")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    /// Similarity argmax, no network.
    Oracle,
    /// The remote model configured under `backend` in the config file.
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Map the columns of a CSV file and write the session JSON.
    Run {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        no_ner: bool,
        #[arg(long)]
        no_rag: bool,
        #[arg(long, value_enum)]
        backend: Option<Backend>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also store the session under the configured data directory.
        #[arg(long)]
        save: bool,
    },
    /// Score matchers on labelled corpora.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Corpus JSON files. Without any, synthetic corpora are generated.
        #[arg(long, value_delimiter = ',')]
        corpus: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "no-filter,ner,rag,both")]
        arms: Vec<String>,
        /// Extra matchers: cupid, lsd.
        #[arg(long, value_delimiter = ',')]
        baselines: Vec<String>,
        /// k-shot values for an exemplar-count sweep.
        #[arg(long, value_delimiter = ',')]
        shots: Vec<usize>,
        /// Prefix added to every column name for a robustness row.
        #[arg(long)]
        prefix: Option<String>,
        /// Size multiplier for generated corpora.
        #[arg(long, default_value_t = 0.1)]
        scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Environment variable holding a bearer token required on /v1.
        #[arg(long)]
        token_env: Option<String>,
        /// Directory of static files for the review console.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long)]
        cors: bool,
    },
    /// Write a synthetic labelled corpus.
    GenCorpus {
        #[arg(long)]
        config: PathBuf,
        /// One of the standard domains; all of them when omitted.
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file for one domain, directory for all.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn write_json(out: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn arm(name: &str, base: FilterConfig) -> Result<FilterConfig> {
    standard_arms(base)
        .into_iter()
        .find(|a| a.arm_name() == name)
        .with_context(|| format!("unknown arm `{name}` (expected no-filter, ner, rag or both)"))
}

fn run(
    table: &Path,
    config: &Path,
    no_ner: bool,
    no_rag: bool,
    backend: Option<Backend>,
    out: Option<&Path>,
    save: bool,
) -> Result<()> {
    let mut config = load_config(config)?;
    let mut filters = config.filter_config();
    filters.ner &= !no_ner;
    filters.double_rag &= !no_rag;
    config.set_filters(filters);
    match backend {
        Some(Backend::Oracle) => config.backend = BackendConfig::Oracle,
        Some(Backend::Llm) if config.backend == BackendConfig::Oracle => {
            bail!("--backend llm needs a remote_llm backend in the config file")
        }
        _ => {}
    }
    let data_dir = config.data_dir.clone();
    let pipeline = Pipeline::from_config(config)?;
    let table =
        ingest_csv(table, pipeline.config().sample_limit).with_context(|| format!("reading {}", table.display()))?;
    if !table.warnings.ragged_rows.is_empty() {
        eprintln!("warning: {} ragged rows", table.warnings.ragged_rows.len());
    }
    let session = pipeline.run(&table.columns)?;
    for e in &session.errors {
        eprintln!("error: {e}");
    }
    if save {
        let store = SessionStore::open(&data_dir)?;
        store.save(&session)?;
        eprintln!("saved {}", store.session_path(&session.id).display());
    }
    write_json(out, &session)
}

#[allow(clippy::too_many_arguments)]
fn eval(
    config: &Path,
    corpus: &[PathBuf],
    arms: &[String],
    baselines: &[String],
    shots: &[usize],
    prefix: Option<&str>,
    scale: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let pipeline = Pipeline::from_config(load_config(config)?)?;
    let corpora: Vec<LabeledCorpus> = if corpus.is_empty() {
        generate_default_corpora(pipeline.schema(), seed, scale, pipeline.labeler())
    } else {
        corpus
            .iter()
            .map(|p| {
                let c = LabeledCorpus::load(p)?;
                c.validate(pipeline.schema())?;
                Ok(c)
            })
            .collect::<Result<_>>()?
    };
    if corpora.is_empty() {
        bail!("no corpora: pass --corpus or use a schema with the standard object types");
    }
    let base = pipeline.filters();
    let arms = arms.iter().map(|a| arm(a, base)).collect::<Result<Vec<_>>>()?;
    let mut report = ablation(&corpora, &pipeline, &arms);
    for b in baselines {
        let spec = match b.as_str() {
            "cupid" => MatcherSpec::Cupid { w_struct: 0.5 },
            "lsd" => MatcherSpec::Lsd,
            other => bail!("unknown baseline `{other}` (expected cupid or lsd)"),
        };
        report.rows.push(eval_matcher(&corpora, &pipeline, &spec));
    }
    if !shots.is_empty() {
        report.rows.extend(sweep_kshot(&corpora, &pipeline, shots).rows);
    }
    if let Some(prefix) = prefix {
        let r = prefix_robustness(&corpora, &pipeline, &MatcherSpec::Pipeline { filters: base }, prefix);
        eprintln!("prefix {prefix:?}: {:+.2} points", r.delta);
        report.rows.push(r.perturbed);
    }
    print!("{}", report.table());
    if let Some(out) = out {
        write_json(Some(out), &report)?;
    }
    Ok(())
}

fn gen_corpus(config: &Path, domain: Option<&str>, size: Option<usize>, seed: u64, out: &Path) -> Result<()> {
    let pipeline = Pipeline::from_config(load_config(config)?)?;
    match domain {
        Some(name) => {
            let spec = DOMAINS
                .iter()
                .find(|d| d.domain.eq_ignore_ascii_case(name))
                .with_context(|| format!("unknown domain `{name}`"))?;
            let c = generate_corpus(
                pipeline.schema(),
                spec.domain,
                spec.object_type,
                size.unwrap_or(spec.size),
                seed,
                pipeline.labeler(),
            )?;
            write_json(Some(out), &c)
        }
        None => {
            std::fs::create_dir_all(out)?;
            let scale = size.map_or(1.0, |n| n as f64 / DOMAINS[0].size as f64);
            for c in generate_default_corpora(pipeline.schema(), seed, scale, pipeline.labeler()) {
                write_json(Some(&out.join(format!("{}.json", c.domain.to_lowercase()))), &c)?;
            }
            Ok(())
        }
    }
}

fn serve(config: &Path, addr: SocketAddr, token_env: Option<&str>, ui_dir: Option<PathBuf>, cors: bool) -> Result<()> {
    let config = load_config(config)?;
    let store = SessionStore::open(&config.data_dir)?;
    let pipeline = Pipeline::from_config(config)?;
    let token = match token_env {
        Some(var) => Some(std::env::var(var).with_context(|| format!("{var} is not set"))?),
        None => None,
    };
    let options = ServerOptions { token, ui_dir, cors };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(schemamatch_server::serve(AppState::new(pipeline, store), options, addr))?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run {
            table,
            config,
            no_ner,
            no_rag,
            backend,
            out,
            save,
        } => run(&table, &config, no_ner, no_rag, backend, out.as_deref(), save),
        Command::Eval {
            config,
            corpus,
            arms,
            baselines,
            shots,
            prefix,
            scale,
            seed,
            out,
        } => eval(
            &config,
            &corpus,
            &arms,
            &baselines,
            &shots,
            prefix.as_deref(),
            scale,
            seed,
            out.as_deref(),
        ),
        Command::Serve {
            config,
            port,
            host,
            token_env,
            ui_dir,
            cors,
        } => serve(&config, SocketAddr::new(host, port), token_env.as_deref(), ui_dir, cors),
        Command::GenCorpus {
            config,
            domain,
            size,
            seed,
            out,
        } => gen_corpus(&config, domain.as_deref(), size, seed, &out),
    }
}
