mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Geolocalized knowledge graphs: ingestion, statistics, and distance
/// prediction between Places.
#[derive(Debug, Parser)]
#[command(name = "geokg", version)]
pub struct Cli {
    /// Flat key = value config file; flags take precedence over its values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log more (repeat for debug output)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a graph for one city from offline dumps or live endpoints
    Ingest(IngestArgs),
    /// Print dataset statistics of a persisted graph
    Stats(StatsArgs),
    /// Write the supervised Place pairs of a graph as JSON lines
    Pairs(PairsArgs),
    /// Train one model variant on the training split
    Train(TrainArgs),
    /// Score a trained model on the held-out split
    Evaluate(EvaluateArgs),
    /// Train and score all five variants on one shared split
    Ablate(AblateArgs),
    /// Predict the distance in km between two Places
    Predict(PredictArgs),
    /// Compare analytic gradients with finite differences on a toy instance
    Gradcheck(GradcheckArgs),
    /// Generate the seeded grid-city graph and its word vectors
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// City name looked up in the bbox table or geocoder [key: city]
    #[arg(long)]
    pub city: Option<String>,
    /// Directory holding the offline dump files [key: offline_dir]
    #[arg(long, value_name = "DIR", conflicts_with = "live")]
    pub offline: Option<PathBuf>,
    /// Query the live endpoints instead of offline dumps [key: live]
    #[arg(long)]
    pub live: bool,
    /// Output graph directory [key: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Expansion hops from the Places [key: hops, default 3]
    #[arg(long)]
    pub hops: Option<usize>,
    /// Comma-separated class identifiers a Place must have [key: whitelist]
    #[arg(long, value_name = "IDS")]
    pub whitelist: Option<String>,
    /// Skip Europeana items and title linking [key: europeana = false]
    #[arg(long)]
    pub no_europeana: bool,
    /// Geocoder base URL [key: nominatim_url]
    #[arg(long, value_name = "URL")]
    pub nominatim_url: Option<String>,
    /// SPARQL endpoint URL [key: sparql_url]
    #[arg(long, value_name = "URL")]
    pub sparql_url: Option<String>,
    /// Europeana API base URL [key: europeana_url]
    #[arg(long, value_name = "URL")]
    pub europeana_url: Option<String>,
    /// Europeana API key [key: europeana_key]
    #[arg(long, value_name = "KEY")]
    pub europeana_key: Option<String>,
    /// Per-request timeout in seconds [key: timeout_secs, default 30]
    #[arg(long, value_name = "SECS")]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Graph directory with nodes.jsonl and edges.jsonl
    pub graph_dir: PathBuf,
    /// Print machine-readable JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// Graph directory [key: graph]
    #[arg(long, value_name = "DIR")]
    pub graph: Option<PathBuf>,
    /// Output file; stdout when absent [key: out]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Hyperparameters shared by every training command.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Graph directory [key: graph]
    #[arg(long, value_name = "DIR")]
    pub graph: Option<PathBuf>,
    /// Word-vector text file [key: vectors]
    #[arg(long, value_name = "FILE")]
    pub vectors: Option<PathBuf>,
    /// Random seed for the split and initialisation [key: seed, default 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum epochs [key: epochs, default 300]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [key: lr, default 0.0001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Latent embedding size [key: embed_dim, default 32]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Layers per graph encoder [key: layers, default 3]
    #[arg(long)]
    pub layers: Option<usize>,
    /// Enclosing-subgraph radius [key: k, default 2]
    #[arg(long)]
    pub k: Option<usize>,
    /// Pairs per optimiser step, 0 for full batch [key: batch_size, default 16]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Early-stopping patience in epochs, 0 disables [key: patience, default 20]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Relation labels kept before the rest share one slot [key: relation_cap, default 64]
    #[arg(long)]
    pub relation_cap: Option<usize>,
    /// Training fraction of the pairs [key: split, default 0.8]
    #[arg(long)]
    pub split: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// GAT, R-GCN, GeoOnly, NoAttention or Full [key: variant, default Full]
    #[arg(long)]
    pub variant: Option<String>,
    /// Output model directory [key: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Graph directory [key: graph]
    #[arg(long, value_name = "DIR")]
    pub graph: Option<PathBuf>,
    /// Word-vector text file [key: vectors]
    #[arg(long, value_name = "FILE")]
    pub vectors: Option<PathBuf>,
    /// Model directory written by `train` [key: model]
    #[arg(long, value_name = "DIR")]
    pub model: Option<PathBuf>,
    /// Metrics JSON output file [key: out]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory for ablation.tsv and ablation.json [key: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// First Place id
    pub u: String,
    /// Second Place id
    pub v: String,
    /// Graph directory [key: graph]
    #[arg(long, value_name = "DIR")]
    pub graph: Option<PathBuf>,
    /// Word-vector text file [key: vectors]
    #[arg(long, value_name = "FILE")]
    pub vectors: Option<PathBuf>,
    /// Model directory written by `train` [key: model]
    #[arg(long, value_name = "DIR")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Variant to check [key: variant, default Full]
    #[arg(long)]
    pub variant: Option<String>,
    /// Latent embedding size [key: embed_dim, default 32]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Initialisation seed [key: seed, default 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Entries checked per parameter matrix, 0 for all
    #[arg(long, default_value_t = 64)]
    pub max_entries: usize,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives graph/ and vectors.txt [key: out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Lattice rows
    #[arg(long, default_value_t = 13)]
    pub rows: usize,
    /// Lattice columns
    #[arg(long, default_value_t = 12)]
    pub cols: usize,
    /// Landmark Knowledge nodes
    #[arg(long, default_value_t = 90)]
    pub landmarks: usize,
    /// Generator seed [key: seed, default 7]
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::Cli;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_long_flag_is_in_its_help() {
        let mut root = Cli::command();
        root.build();
        for sub in root.get_subcommands_mut() {
            let help = sub.render_long_help().to_string();
            for arg in sub.get_arguments() {
                if let Some(long) = arg.get_long() {
                    assert!(help.contains(&format!("--{long}")), "{}: --{long}", sub.get_name());
                }
            }
        }
    }

    #[test]
    fn config_keys_are_documented() {
        let mut root = Cli::command();
        root.build();
        let mut docs = String::new();
        for sub in root.get_subcommands_mut() {
            docs.push_str(&sub.render_long_help().to_string());
        }
        for key in crate::config::KEYS {
            assert!(docs.contains(&format!("key: {key}")), "{key}");
        }
    }
}
