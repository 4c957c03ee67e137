mod artifacts;
mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use streamtune::clustering::{assign_to_nearest, elbow_scan, kmeans_ged_with};
use streamtune::dag::LogicalDag;
use streamtune::encoder::TrainedEncoder;
use streamtune::finetune::{session_jsonl, tune, ClusterContext, Termination};
use streamtune::ged::{edit_script, ged, GedResult, LabeledGraph};
use streamtune::par::Execution;
use streamtune::pipeline::{cluster_samples, compare, comparison_csv, pretrain, tuning_cases, Pretrained};
use streamtune::simulator::{brute_force_min_assignment, GroundTruthProfile};
use streamtune::workload::{generate_corpus, generate_histories};

use artifacts::Result;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "streamtune", version, about = "Parallelism tuning for simulated dataflow jobs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    p_max: Option<u32>,
    /// Utilization threshold for bottleneck labels.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Similarity threshold for cluster centers.
    #[arg(long, global = true)]
    tau: Option<u32>,
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Encoder training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    iteration_cap: Option<usize>,
    /// Number of queries `compare` tunes.
    #[arg(long, global = true)]
    queries: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus and its execution histories.
    Generate {
        /// Reuse the queries of an existing corpus directory and only
        /// regenerate histories.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Cluster a corpus and train one encoder per cluster.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Tune one deployed DAG against its ground-truth profile.
    Tune {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        /// Also report the exhaustive-search minimum per operator.
        #[arg(long)]
        bruteforce: bool,
    },
    /// Tuner vs DS2 vs the unconstrained ablation on corpus queries.
    Compare {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Exact edit distance between two DAG files.
    Ged { first: PathBuf, second: PathBuf },
    /// Cluster a corpus, or scan k when the config sets `elbow`.
    Cluster {
        #[arg(long)]
        corpus: PathBuf,
    },
}

fn err<E: Display>(e: E) -> String {
    e.to_string()
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => artifacts::read_json(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:expr),*) => {
            $(if let Some(v) = c.$flag { $field = v; })*
        };
    }
    set!(seed => cfg.seed, p_max => cfg.p_max, threshold => cfg.threshold, tau => cfg.tau, k => cfg.k,
        epochs => cfg.encoder.epochs, iteration_cap => cfg.iteration_cap, queries => cfg.queries);
    Ok(cfg.resolve())
}

fn cmd_generate(cfg: &RunConfig, out: &Path, from: Option<&Path>) -> Result<()> {
    let corpus = match from {
        Some(dir) => artifacts::read_queries(dir)?,
        None => generate_corpus(&cfg.corpus, cfg.seed),
    };
    let histories = generate_histories(&corpus, &cfg.history, cfg.seed).map_err(err)?;
    artifacts::write_corpus(out, &corpus, &histories)?;
    println!("{} queries, {} histories", corpus.len(), histories.len());
    Ok(())
}

fn cmd_pretrain(cfg: &RunConfig, out: &Path, corpus_dir: &Path) -> Result<()> {
    let corpus = artifacts::read_queries(corpus_dir)?;
    let histories = artifacts::read_histories(corpus_dir, corpus.len())?;
    let pre = pretrain(Execution::Parallel, &corpus, &histories, &cfg.pretrain()).map_err(err)?;
    artifacts::write(&artifacts::model_path(out), artifacts::json(&pre.model))?;
    for (&c, params) in &pre.encoders {
        artifacts::write(&artifacts::encoder_path(out, c), params.to_json())?;
        let trained = TrainedEncoder {
            params: params.clone(),
            loss_curve: pre.loss_curves[&c].clone(),
        };
        artifacts::write(&artifacts::loss_path(out, c), trained.loss_curve_csv())?;
    }
    println!("{} clusters, {} encoders", pre.model.k, pre.encoders.len());
    Ok(())
}

/// Cluster model, the encoders `dags` need and the cluster histories.
fn load_pretrained(corpus_dir: &Path, model_dir: &Path, dags: &[&LogicalDag]) -> Result<(Pretrained, Vec<streamtune::workload::Query>)> {
    let corpus = artifacts::read_queries(corpus_dir)?;
    let histories = artifacts::read_histories(corpus_dir, corpus.len())?;
    let model = artifacts::read_model(model_dir)?;
    if model.membership.len() != corpus.len() {
        return Err(format!(
            "{} covers {} queries but {} has {}",
            artifacts::model_path(model_dir).display(),
            model.membership.len(),
            corpus_dir.display(),
            corpus.len()
        ));
    }
    let mut needed = BTreeSet::new();
    for dag in dags {
        needed.insert(assign_to_nearest(dag, &model).map_err(err)?);
    }
    let mut encoders = BTreeMap::new();
    for c in needed {
        encoders.insert(c, artifacts::read_encoder(model_dir, c)?);
    }
    let samples = cluster_samples(&corpus, &histories, &model);
    Ok((
        Pretrained {
            model,
            encoders,
            loss_curves: BTreeMap::new(),
            samples,
        },
        corpus,
    ))
}

#[derive(Serialize)]
struct SessionSummary {
    cluster: Option<usize>,
    termination: Termination,
    reconfigurations: usize,
    backpressure_occurrences: usize,
    final_backpressure: bool,
    final_total_parallelism: u64,
    restored_from: Option<usize>,
}

#[derive(Serialize)]
struct ReportRow {
    operator: u32,
    recommended_p: u32,
    bruteforce_min_p: Option<u32>,
}

fn cmd_tune(cfg: &RunConfig, out: &Path, corpus_dir: &Path, model_dir: &Path, dag_path: &Path, profile_path: &Path, bruteforce: bool) -> Result<()> {
    let dag = artifacts::read_dag(dag_path)?;
    let profile: GroundTruthProfile = artifacts::read_json(profile_path)?;
    let (pre, _) = load_pretrained(corpus_dir, model_dir, &[&dag])?;
    let ctx = ClusterContext {
        model: &pre.model,
        encoders: &pre.encoders,
        histories: &pre.samples,
    };
    let session = tune(&dag, &profile, ctx, &cfg.tune).map_err(err)?;
    let last = session.last();
    let bf = if bruteforce {
        Some(brute_force_min_assignment(&dag, &profile, cfg.p_max).map_err(err)?)
    } else {
        None
    };
    let mut report = csv::Writer::from_writer(Vec::new());
    for (id, p) in session.final_assignment().iter() {
        report
            .serialize(ReportRow {
                operator: id,
                recommended_p: p,
                bruteforce_min_p: bf.as_ref().and_then(|b| b.get(id)),
            })
            .map_err(err)?;
    }
    artifacts::write(&out.join("session.jsonl"), session_jsonl(&session))?;
    artifacts::write(&out.join("final_assignment.json"), artifacts::json(session.final_assignment()))?;
    artifacts::write(&out.join("report.csv"), report.into_inner().map_err(err)?)?;
    let summary = SessionSummary {
        cluster: session.cluster,
        termination: session.termination,
        reconfigurations: session.reconfigurations(),
        backpressure_occurrences: session.backpressure_occurrences(),
        final_backpressure: last.job_backpressure,
        final_total_parallelism: last.total_parallelism,
        restored_from: session.restored_from,
    };
    artifacts::write(&out.join("session_summary.json"), artifacts::json(&summary))?;
    println!(
        "{:?} after {} reconfigurations, total parallelism {}",
        session.termination,
        session.reconfigurations(),
        last.total_parallelism
    );
    Ok(())
}

fn cmd_compare(cfg: &RunConfig, out: &Path, corpus_dir: &Path, model_dir: &Path) -> Result<()> {
    let corpus = artifacts::read_queries(corpus_dir)?;
    let cases = tuning_cases(&corpus, &cfg.schedule, cfg.queries, cfg.seed);
    let dags: Vec<&LogicalDag> = cases.iter().map(|(_, d)| d).collect();
    let (pre, corpus) = load_pretrained(corpus_dir, model_dir, &dags)?;
    let results = compare(Execution::Sequential, &corpus, &cases, &pre, &cfg.tune, &cfg.ds2()).map_err(err)?;
    artifacts::write(&out.join("comparison.csv"), comparison_csv(&corpus, &results))?;
    println!("{} queries compared", results.len());
    Ok(())
}

#[derive(Serialize)]
struct GedReport<'a> {
    #[serde(flatten)]
    result: &'a GedResult,
    edit_script: Vec<streamtune::ged::EditOperation>,
}

fn cmd_ged(out: &Path, first: &Path, second: &Path) -> Result<()> {
    let (a, b) = (artifacts::read_dag(first)?, artifacts::read_dag(second)?);
    let result = ged(&a, &b).map_err(err)?;
    let script = edit_script(&LabeledGraph::from_dag(&a), &LabeledGraph::from_dag(&b), &result.optimal_mapping);
    artifacts::write(
        &out.join("ged.json"),
        artifacts::json(&GedReport {
            result: &result,
            edit_script: script,
        }),
    )?;
    println!("{}", result.distance);
    Ok(())
}

fn cmd_cluster(cfg: &RunConfig, out: &Path, corpus_dir: &Path) -> Result<()> {
    let corpus = artifacts::read_queries(corpus_dir)?;
    let dags: Vec<LogicalDag> = corpus.iter().map(|q| q.dag.clone()).collect();
    if let Some([lo, hi]) = cfg.elbow {
        let ks: Vec<usize> = (lo..=hi).collect();
        let scan = elbow_scan(&dags, &ks, cfg.seed, cfg.max_iter, cfg.tau).map_err(err)?;
        let mut text = String::from("k,objective\n");
        for (k, objective) in scan {
            text.push_str(&format!("{k},{objective}\n"));
        }
        artifacts::write(&out.join("elbow.csv"), text)?;
        println!("scanned k = {lo}..={hi}");
        return Ok(());
    }
    let model = kmeans_ged_with(Execution::Sequential, &dags, cfg.k, cfg.max_iter, cfg.seed, cfg.tau).map_err(err)?;
    let mut text = String::from("query,cluster\n");
    for (q, c) in corpus.iter().zip(&model.membership) {
        text.push_str(&format!("{},{c}\n", q.name));
    }
    artifacts::write(&artifacts::model_path(out), artifacts::json(&model))?;
    artifacts::write(&out.join("membership.csv"), text)?;
    println!("k = {}, objective {}", model.k, model.objective());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    artifacts::write(&out.join("config.json"), artifacts::json(&cfg))?;
    match cli.command {
        Command::Generate { from } => cmd_generate(&cfg, out, from.as_deref()),
        Command::Pretrain { corpus } => cmd_pretrain(&cfg, out, &corpus),
        Command::Tune {
            corpus,
            model,
            dag,
            profile,
            bruteforce,
        } => cmd_tune(&cfg, out, &corpus, &model, &dag, &profile, bruteforce),
        Command::Compare { corpus, model } => cmd_compare(&cfg, out, &corpus, &model),
        Command::Ged { first, second } => cmd_ged(out, &first, &second),
        Command::Cluster { corpus } => cmd_cluster(&cfg, out, &corpus),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STREAMTUNE_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
