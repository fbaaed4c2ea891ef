use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecosearch_analysis::{MortalityValue, MTBS_SEVERITY};
use ecosearch_core::{FilterOptions, FilterSpec, GeoBox, Quantization};
use ecosearch_service::analyze::{self, Table};
use ecosearch_service::{
    api, build_index_dir, BuildOptions, CorpusBundle, Encoder, EncoderSpec, SearchRequest, SearchService,
    ServiceConfig, ServiceError, SessionStore, DEFAULT_LINK_TEMPLATE,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "ecosearch", version, about = "Text-to-image retrieval over ecological observation corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index directory from an embedding file and metadata.
    BuildIndex(BuildArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Run one query and print the ranked results.
    Query(QueryArgs),
    /// Write a stored session's latest results as CSV.
    Export(ExportArgs),
    /// Statistics over exported CSV files.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum QuantizeArg {
    None,
    Int8,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, env = "ECOSEARCH_EMBEDDINGS")]
    embeddings: PathBuf,
    #[arg(long, env = "ECOSEARCH_METADATA")]
    metadata: PathBuf,
    #[arg(long, env = "ECOSEARCH_OUT")]
    out: PathBuf,
    /// Number of inverted lists [default: round(sqrt(count))]
    #[arg(long, env = "ECOSEARCH_NLIST")]
    nlist: Option<usize>,
    #[arg(long, env = "ECOSEARCH_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "ECOSEARCH_QUANTIZE", value_enum, default_value = "none")]
    quantize: QuantizeArg,
    /// Round coordinates to 0.01 degrees before indexing.
    #[arg(long, env = "ECOSEARCH_ROUND_COORDS")]
    round_coords: bool,
}

#[derive(Args)]
struct EncoderArgs {
    /// `remote URL`, `lookup FILE` or `test`.
    #[arg(long, env = "ECOSEARCH_ENCODER", num_args = 1..=2, required = true, value_name = "KIND [ARG]")]
    encoder: Vec<String>,
    /// Remote encoder timeout in seconds.
    #[arg(long, env = "ECOSEARCH_ENCODER_TIMEOUT", default_value_t = 10)]
    encoder_timeout: u64,
}

impl EncoderArgs {
    fn build(&self, dim: usize) -> Result<Encoder, ServiceError> {
        let spec: EncoderSpec = self.encoder.join(" ").parse().map_err(ServiceError::Config)?;
        Encoder::from_spec(&spec, dim, Duration::from_secs(self.encoder_timeout))
    }
}

#[derive(Args)]
struct SearchArgs {
    /// Lists probed per query [default: max(1, nlist / 16)]
    #[arg(long, env = "ECOSEARCH_NPROBE")]
    nprobe: Option<usize>,
    /// Largest candidate set scored exhaustively by filtered search.
    #[arg(long, env = "ECOSEARCH_PREFILTER_THRESHOLD", default_value_t = FilterOptions::default().prefilter_threshold)]
    prefilter_threshold: usize,
    #[arg(long, env = "ECOSEARCH_LINK_TEMPLATE", default_value = DEFAULT_LINK_TEMPLATE)]
    link_template: String,
}

impl SearchArgs {
    fn config(&self) -> ServiceConfig {
        ServiceConfig {
            link_template: self.link_template.clone(),
            filter: FilterOptions {
                prefilter_threshold: self.prefilter_threshold,
            },
            nprobe: self.nprobe,
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "ECOSEARCH_INDEX")]
    index: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, env = "ECOSEARCH_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// 0 picks a free port; the bound address is printed on startup.
    #[arg(long, env = "ECOSEARCH_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "ECOSEARCH_SESSIONS_DIR", default_value = "ecosearch-sessions")]
    sessions_dir: PathBuf,
    /// Static files served under /ui.
    #[arg(long, env = "ECOSEARCH_UI_DIR")]
    ui_dir: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, env = "ECOSEARCH_INDEX")]
    index: PathBuf,
    #[arg(long)]
    text: String,
    #[arg(long)]
    taxon: Option<u32>,
    /// Comma-separated months, e.g. 6,7,8
    #[arg(long, value_delimiter = ',')]
    months: Option<Vec<u8>>,
    /// lat_min,lat_max,lon_min,lon_max
    #[arg(long, value_delimiter = ',', num_args = 1..=4, allow_negative_numbers = true)]
    bbox: Option<Vec<f64>>,
    #[arg(short, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    session: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "ECOSEARCH_SESSIONS_DIR", default_value = "ecosearch-sessions")]
    sessions_dir: PathBuf,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Share of rows per value of a column.
    Proportions {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        by: String,
        #[arg(long)]
        marked_only: bool,
        #[arg(long)]
        json: bool,
    },
    /// Monthly mortality index from a deaths export and an observations export.
    Mortality {
        #[arg(long)]
        deaths: PathBuf,
        #[arg(long)]
        observations: PathBuf,
        /// Count only marked rows of the deaths export.
        #[arg(long)]
        marked_only: bool,
        #[arg(long)]
        json: bool,
    },
    /// ANOVA and Tukey HSD of a date or numeric column across groups.
    Phenology {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "observed_at")]
        column: String,
        #[arg(long, default_value = "stage")]
        group: String,
        #[arg(long)]
        marked_only: bool,
        #[arg(long)]
        json: bool,
    },
    /// Block-mode downsampling of a categorical grid given as CSV ordinals.
    GridMode {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        factor: usize,
        /// Input cell size in degrees.
        #[arg(long, default_value_t = 0.00027)]
        cell_size: f64,
        /// Category names by ordinal [default: burn severity classes]
        #[arg(long, value_delimiter = ',')]
        categories: Option<Vec<String>>,
        #[arg(long)]
        json: bool,
    },
}

type CliResult = Result<(), ServiceError>;

fn build_index(a: BuildArgs) -> CliResult {
    let opts = BuildOptions {
        nlist: a.nlist,
        seed: a.seed,
        quantization: match a.quantize {
            QuantizeArg::None => Quantization::None,
            QuantizeArg::Int8 => Quantization::Int8,
        },
        round_coords: a.round_coords,
    };
    let m = build_index_dir(&a.embeddings, &a.metadata, &a.out, &opts)?;
    println!(
        "indexed {} vectors (dim {}, nlist {}, {}) into {}",
        m.count,
        m.dim,
        m.nlist,
        m.quantization,
        a.out.display()
    );
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let bundle = CorpusBundle::open(&a.index)?;
    let encoder = a.encoder.build(bundle.index.dim())?;
    let sessions = SessionStore::open(&a.sessions_dir)?;
    let svc = Arc::new(SearchService::new(bundle, encoder, sessions, a.search.config())?);
    let app = api::router(svc, a.ui_dir);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(a.host, a.port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}

fn query(a: QueryArgs) -> CliResult {
    let bundle = CorpusBundle::open(&a.index)?;
    let encoder = a.encoder.build(bundle.index.dim())?;
    let svc = SearchService::new(bundle, encoder, SessionStore::in_memory(), a.search.config())?;
    let geo = match a.bbox.as_deref() {
        None => None,
        Some(&[lat_min, lat_max, lon_min, lon_max]) => Some(GeoBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        }),
        Some(_) => return Err(ServiceError::InvalidRequest("--bbox takes four numbers".into())),
    };
    let req = SearchRequest {
        query_text: a.text,
        filters: FilterSpec {
            taxon_id: a.taxon,
            months: a.months,
            geo,
        },
        k: a.k,
        nprobe: None,
    };
    let rows = svc.search(&req)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(());
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    println!(
        "{:>5}  {:>12}  {:>10}  {:>8}  {:>10}  {:>9}  {:>10}  image_url",
        "rank", "observation", "score", "taxon", "observed", "lat", "lon"
    );
    for r in &rows {
        println!(
            "{:>5}  {:>12}  {:>10.6}  {:>8}  {:>10}  {:>9}  {:>10}  {}",
            r.rank,
            r.observation_id,
            r.score,
            r.leaf_taxon_id().map(|t| t.to_string()).unwrap_or_default(),
            r.observed_at,
            opt(r.latitude),
            opt(r.longitude),
            r.image_url
        );
    }
    Ok(())
}

fn export(a: ExportArgs) -> CliResult {
    let session = SessionStore::load_session(&a.sessions_dir, &a.session)?;
    let bytes = ecosearch_service::export_csv(&session)?;
    std::fs::write(&a.out, &bytes)?;
    let rows = session.results.as_ref().map_or(0, Vec::len);
    println!("wrote {rows} rows to {}", a.out.display());
    Ok(())
}

fn print_json<T: Serialize>(v: &T) -> CliResult {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn fmt_mortality(v: MortalityValue) -> String {
    match v {
        MortalityValue::Finite(x) => format!("{x:.4}"),
        MortalityValue::NegInfinite => "-inf".into(),
        MortalityValue::Undefined => "undefined".into(),
    }
}

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

fn analyze_cmd(cmd: AnalyzeCommand) -> CliResult {
    match cmd {
        AnalyzeCommand::Proportions {
            input,
            by,
            marked_only,
            json,
        } => {
            let r = analyze::proportions(&Table::from_path(&input)?, &by, marked_only)?;
            if json {
                return print_json(&r);
            }
            println!("{:<24} {:>8} {:>9}", by, "count", "percent");
            for (k, p) in &r.proportions {
                println!("{:<24} {:>8} {:>8.1}%", k, r.counts[k], 100.0 * p);
            }
            println!("{:<24} {:>8}", "total", r.total);
        }
        AnalyzeCommand::Mortality {
            deaths,
            observations,
            marked_only,
            json,
        } => {
            let r = analyze::mortality(
                &Table::from_path(&deaths)?,
                &Table::from_path(&observations)?,
                marked_only,
            )?;
            if json {
                return print_json(&r);
            }
            println!("{:<6} {:>8} {:>13} {:>10}", "month", "deaths", "observations", "index");
            for m in 0..12 {
                println!(
                    "{:<6} {:>8} {:>13} {:>10}",
                    MONTHS[m],
                    r.series.deaths[m],
                    r.series.observations[m],
                    fmt_mortality(r.index[m])
                );
            }
        }
        AnalyzeCommand::Phenology {
            input,
            column,
            group,
            marked_only,
            json,
        } => {
            let r = analyze::phenology(&Table::from_path(&input)?, &column, &group, marked_only)?;
            if json {
                return print_json(&r);
            }
            println!("{:<20} {:>6} {:>10} {:>12}", group, "n", "mean", "return rate");
            for g in &r.groups {
                let rate = g.return_rate.map(|x| format!("{:.1}%", 100.0 * x)).unwrap_or_default();
                println!("{:<20} {:>6} {:>10.2} {:>12}", g.group, g.n, g.mean, rate);
            }
            println!(
                "\nANOVA: F({}, {}) = {:.4}, p = {:.4e}",
                r.anova.df_between, r.anova.df_within, r.anova.f, r.anova.p_value
            );
            println!("\n{:<20} {:<20} {:>10} {:>8} {:>8}  significant", "group a", "group b", "diff", "q", "q crit");
            for p in &r.tukey {
                println!(
                    "{:<20} {:<20} {:>10.2} {:>8.3} {:>8.3}  {}",
                    r.groups[p.i].group, r.groups[p.j].group, p.mean_diff, p.q, p.critical, p.significant
                );
            }
        }
        AnalyzeCommand::GridMode {
            grid,
            factor,
            cell_size,
            categories,
            json,
        } => {
            let categories = categories
                .unwrap_or_else(|| MTBS_SEVERITY.iter().map(|s| s.to_string()).collect());
            let g = analyze::read_grid(std::fs::File::open(&grid)?, cell_size, categories)?;
            let r = analyze::grid_mode(&g, factor)?;
            if json {
                return print_json(&r);
            }
            println!(
                "{}x{} cells of {} degrees",
                r.grid.width(),
                r.grid.height(),
                r.grid.cell_size()
            );
            for row in r.grid.rows() {
                let line: Vec<String> = row.iter().map(u16::to_string).collect();
                println!("{}", line.join(","));
            }
            println!();
            for (k, p) in &r.proportions {
                println!("{:<24} {:>6.1}%", k, 100.0 * p);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildIndex(a) => build_index(a),
        Command::Serve(a) => serve(a),
        Command::Query(a) => query(a),
        Command::Export(a) => export(a),
        Command::Analyze(c) => analyze_cmd(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
