use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use geokg::ingest::live::{EuropeanaSearch, HttpClient, NominatimBbox, RetryPolicy, WikidataSparql};
use geokg::ingest::offline::OfflineDumps;
use geokg::ingest::{ingest_city, DataSource, IngestConfig, IngestSummary, Sources};
use geokg::kg::{self, EntityId, KnowledgeGraph};
use geokg::models::{EmbeddingProvider, Variant};
use geokg::synthetic::{grid_city, GridCityConfig};
use geokg::train::{
    build_pairs, check_model_gradients, evaluate, predict_distance, run_ablation_suite, split,
    train, TrainConfig, TrainedModel,
};

use crate::config::Config;
use crate::error::CliError;
use crate::{
    AblateArgs, Cli, Command, EvaluateArgs, GradcheckArgs, IngestArgs, ModelArgs, PairsArgs,
    PredictArgs, StatsArgs, SynthArgs, TrainArgs,
};

pub const TRAIN_RUN_FILE: &str = "train.json";
pub const ABLATION_TSV: &str = "ablation.tsv";
pub const ABLATION_JSON: &str = "ablation.json";
pub const VECTORS_FILE: &str = "vectors.txt";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Ingest(a) => ingest(&cfg, a),
        Command::Stats(a) => stats(a),
        Command::Pairs(a) => pairs(&cfg, a),
        Command::Train(a) => train_cmd(&cfg, a),
        Command::Evaluate(a) => evaluate_cmd(&cfg, a),
        Command::Ablate(a) => ablate(&cfg, a),
        Command::Predict(a) => predict(&cfg, a),
        Command::Gradcheck(a) => gradcheck(&cfg, a),
        Command::Synth(a) => synth(&cfg, a),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn load_graph(dir: &Path) -> Result<KnowledgeGraph, CliError> {
    kg::load(dir).map_err(|e| CliError::graph(dir, e))
}

fn load_vectors(path: &Path) -> Result<EmbeddingProvider, CliError> {
    Ok(EmbeddingProvider::load(path)?)
}

fn parse_variant(s: &str) -> Result<Variant, CliError> {
    Variant::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.label()).collect();
        CliError::Config(format!("unknown variant '{s}', expected one of {}", names.join(", ")))
    })
}

fn ingest(cfg: &Config, a: IngestArgs) -> Result<(), CliError> {
    let city: String = cfg.require(a.city, "city")?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let live = a.live || cfg.get::<bool>("live")?.unwrap_or(false);
    let europeana = !a.no_europeana && cfg.get::<bool>("europeana")?.unwrap_or(true);
    let whitelist: Option<String> = cfg.optional(a.whitelist, "whitelist")?;
    let mut sources: BTreeSet<DataSource> = [DataSource::Wikidata].into();
    if europeana {
        sources.insert(DataSource::Europeana);
    }
    let icfg = IngestConfig {
        hops: cfg.pick(a.hops, "hops", 3)?,
        type_whitelist: whitelist
            .iter()
            .flat_map(|w| w.split(','))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect(),
        sources,
    };

    let mut g = KnowledgeGraph::new();
    let summary = if live {
        let timeout = Duration::from_secs(cfg.pick(a.timeout_secs, "timeout_secs", 30)?);
        let http = || HttpClient::new(RetryPolicy::default(), timeout);
        let bbox = NominatimBbox {
            base_url: cfg.pick(a.nominatim_url, "nominatim_url", "https://nominatim.openstreetmap.org".into())?,
            http: http(),
        };
        let sparql = WikidataSparql {
            endpoint: cfg.pick(a.sparql_url, "sparql_url", "https://query.wikidata.org/sparql".into())?,
            http: http(),
        };
        let key: Option<String> = cfg.optional(a.europeana_key, "europeana_key")?;
        let items = match (europeana, key) {
            (true, Some(api_key)) => Some(EuropeanaSearch {
                base_url: cfg.pick(a.europeana_url, "europeana_url", "https://api.europeana.eu".into())?,
                api_key,
                rows: 100,
                http: http(),
            }),
            (true, None) => {
                return Err(CliError::Config("live Europeana access needs europeana_key".into()));
            }
            _ => None,
        };
        let sources = Sources {
            bbox: &bbox,
            places: &sparql,
            statements: &sparql,
            items: items.as_ref().map(|i| i as _),
        };
        ingest_city(&city, &icfg, &sources, &mut g)?
    } else {
        let dir: PathBuf = cfg.require(a.offline, "offline_dir")?;
        let dumps = OfflineDumps::open(&dir, europeana)?;
        ingest_city(&city, &icfg, &Sources::offline(&dumps), &mut g)?
    };
    kg::save(&g, &out).map_err(|e| CliError::Data(format!("writing {}: {e}", out.display())))?;
    print_summary(&summary, &g, &out);
    Ok(())
}

fn print_summary(s: &IngestSummary, g: &KnowledgeGraph, out: &Path) {
    let st = g.stats();
    println!(
        "{}: {} Places, {} Knowledge nodes, {} links -> {}",
        s.scope.name,
        st.n_place,
        st.n_knowledge,
        st.n_links,
        out.display()
    );
    if let Some(p) = &s.places {
        if p.dropped_outside_bbox > 0 {
            println!("warning: {} place records outside the bbox were dropped", p.dropped_outside_bbox);
        }
        if p.filtered_by_type > 0 {
            println!("{} place records filtered by type", p.filtered_by_type);
        }
    }
    if !s.links.is_empty() {
        println!("{} related_to links", s.links.len());
    }
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let g = load_graph(&a.graph_dir)?;
    let s = g.stats();
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s).expect("stats serialise"));
    } else {
        print!("{s}");
    }
    Ok(())
}

fn pairs(cfg: &Config, a: PairsArgs) -> Result<(), CliError> {
    let g = load_graph(&cfg.require(a.graph, "graph")?)?;
    let mut text = String::new();
    for p in build_pairs(&g) {
        text.push_str(&serde_json::to_string(&p).expect("pair serialises"));
        text.push('\n');
    }
    match cfg.optional(a.out, "out")? {
        Some(path) => write_file(&path, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn train_config(cfg: &Config, m: &ModelArgs, variant: Variant) -> Result<(TrainConfig, f64), CliError> {
    let d = TrainConfig::default();
    let tc = TrainConfig {
        variant,
        embed_dim: cfg.pick(m.embed_dim, "embed_dim", d.embed_dim)?,
        layers: cfg.pick(m.layers, "layers", d.layers)?,
        k: cfg.pick(m.k, "k", d.k)?,
        relation_cap: cfg.pick(m.relation_cap, "relation_cap", d.relation_cap)?,
        lr: cfg.pick(m.lr, "lr", d.lr)?,
        epochs: cfg.pick(m.epochs, "epochs", d.epochs)?,
        seed: cfg.pick(m.seed, "seed", d.seed)?,
        batch_size: cfg.pick(m.batch_size, "batch_size", d.batch_size)?,
        patience: cfg.pick(m.patience, "patience", d.patience)?,
        ..d
    };
    Ok((tc, cfg.pick(m.split, "split", 0.8)?))
}

fn train_cmd(cfg: &Config, a: TrainArgs) -> Result<(), CliError> {
    let variant = parse_variant(&cfg.pick(a.variant, "variant", "Full".to_string())?)?;
    let (tc, ratio) = train_config(cfg, &a.model, variant)?;
    let graph_dir: PathBuf = cfg.require(a.model.graph.clone(), "graph")?;
    let g = load_graph(&graph_dir)?;
    let emb = load_vectors(&cfg.require(a.model.vectors.clone(), "vectors")?)?;
    let out: PathBuf = cfg.require(a.out, "out")?;

    let samples = build_pairs(&g);
    let (tr, te) = split(&samples, ratio, tc.seed)?;
    let outcome = train(&g, &emb, &tr, &tc)?;
    outcome.trained.save(&out)?;
    let run = serde_json::json!({
        "config": tc,
        "split_ratio": ratio,
        "n_train": tr.len(),
        "n_test": te.len(),
        "d_max_km": outcome.trained.d_max,
        "epochs_run": outcome.loss_trace.len(),
        "stopped_early": outcome.stopped_early,
        "loss_trace": outcome.loss_trace,
        "smoothed_trace": outcome.smoothed_trace,
    });
    write_file(&out.join(TRAIN_RUN_FILE), &(serde_json::to_string_pretty(&run).expect("json") + "\n"))?;
    println!(
        "{}: {} epochs, final loss {:.6e}, {} train / {} test pairs -> {}",
        variant,
        outcome.loss_trace.len(),
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
        tr.len(),
        te.len(),
        out.display()
    );
    Ok(())
}

fn read_train_run(model_dir: &Path) -> Result<(TrainConfig, f64), CliError> {
    let path = model_dir.join(TRAIN_RUN_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let tc: TrainConfig = serde_json::from_value(v["config"].clone())
        .map_err(|e| CliError::Data(format!("{}: config: {e}", path.display())))?;
    let ratio = v["split_ratio"]
        .as_f64()
        .ok_or_else(|| CliError::Data(format!("{}: missing split_ratio", path.display())))?;
    Ok((tc, ratio))
}

fn evaluate_cmd(cfg: &Config, a: EvaluateArgs) -> Result<(), CliError> {
    let g = load_graph(&cfg.require(a.graph, "graph")?)?;
    let emb = load_vectors(&cfg.require(a.vectors, "vectors")?)?;
    let model_dir: PathBuf = cfg.require(a.model, "model")?;
    let trained = TrainedModel::load(&model_dir)?;
    let (tc, ratio) = read_train_run(&model_dir)?;
    let (_, te) = split(&build_pairs(&g), ratio, tc.seed)?;
    let ctx = trained.context(&g, &emb);
    let m = evaluate(&trained, &g, &ctx, &te)?;
    println!("variant\tMAE_km\tRMSE_km");
    println!("{}\t{:.6}\t{:.6}", tc.variant, m.mae_km, m.rmse_km);
    if let Some(path) = cfg.optional(a.out, "out")? {
        let report = serde_json::json!({ "config": tc, "split_ratio": ratio, "metrics": m });
        write_file(&path, &(serde_json::to_string_pretty(&report).expect("json") + "\n"))?;
    }
    Ok(())
}

fn ablate(cfg: &Config, a: AblateArgs) -> Result<(), CliError> {
    let (tc, ratio) = train_config(cfg, &a.model, Variant::Full)?;
    let g = load_graph(&cfg.require(a.model.graph.clone(), "graph")?)?;
    let emb = load_vectors(&cfg.require(a.model.vectors.clone(), "vectors")?)?;
    let out: PathBuf = cfg.require(a.out, "out")?;
    let report = run_ablation_suite(&g, &emb, &build_pairs(&g), &tc, ratio)?;
    let tsv = report.to_tsv();
    write_file(&out.join(ABLATION_TSV), &tsv)?;
    write_file(&out.join(ABLATION_JSON), &report.to_json())?;
    print!("{tsv}");
    Ok(())
}

fn predict(cfg: &Config, a: PredictArgs) -> Result<(), CliError> {
    let g = load_graph(&cfg.require(a.graph, "graph")?)?;
    let emb = load_vectors(&cfg.require(a.vectors, "vectors")?)?;
    let trained = TrainedModel::load(&cfg.require(a.model, "model")?)?;
    let id = |s: &str| EntityId::new(s).map_err(|e| CliError::Data(e.to_string()));
    let (u, v) = (id(&a.u)?, id(&a.v)?);
    let ctx = trained.context(&g, &emb);
    let d = predict_distance(&trained, &g, &ctx, &u, &v)?;
    println!("{d:.6}");
    Ok(())
}

fn gradcheck(cfg: &Config, a: GradcheckArgs) -> Result<(), CliError> {
    let variant = parse_variant(&cfg.pick(a.variant, "variant", "Full".to_string())?)?;
    let hidden = cfg.pick(a.embed_dim, "embed_dim", 32)?;
    let seed = cfg.pick(a.seed, "seed", 0)?;
    let r = check_model_gradients(variant, hidden, seed, a.step, a.max_entries)?;
    for (name, err) in &r.per_param {
        println!("{name}\t{err:.3e}");
    }
    println!("max\t{:.3e}\t({} entries)", r.max_rel_error, r.entries_checked);
    if !(r.max_rel_error <= a.tolerance) {
        return Err(CliError::Numeric(format!(
            "max relative error {:e} exceeds {:e}",
            r.max_rel_error, a.tolerance
        )));
    }
    Ok(())
}

fn synth(cfg: &Config, a: SynthArgs) -> Result<(), CliError> {
    let out: PathBuf = cfg.require(a.out, "out")?;
    let gc = GridCityConfig {
        rows: a.rows,
        cols: a.cols,
        landmarks: a.landmarks,
        seed: cfg.pick(a.seed, "seed", GridCityConfig::default().seed)?,
        ..GridCityConfig::default()
    };
    let city = grid_city(&gc).map_err(|e| CliError::Config(e.to_string()))?;
    let graph_dir = out.join("graph");
    kg::save(&city.graph, &graph_dir)
        .map_err(|e| CliError::Data(format!("writing {}: {e}", graph_dir.display())))?;
    write_file(&out.join(VECTORS_FILE), &city.embeddings.to_text())?;
    let s = city.graph.stats();
    println!(
        "grid city: {} Places, {} Knowledge nodes, {} links -> {}",
        s.n_place,
        s.n_knowledge,
        s.n_links,
        out.display()
    );
    Ok(())
}
