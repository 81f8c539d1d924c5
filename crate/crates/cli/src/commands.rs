use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use entstat::collective::{build_problem, hill_climb, lp_round, objective};
use entstat::corpus::{spot_mentions, synth_corpus, Corpus, Document, Spot, DEFAULT_WINDOW};
use entstat::local::{disambiguate_local, train_weights, FeatureExtractor, TrainConfig, WeightVector};
use entstat::ratio::{
    class_means, class_set, estimate_mmd, format_sig12, gold_ratio, l1_error, label_and_collect,
    unlabeled_mean, EstimatorConfig, SimplexVector, Tagger,
};
use entstat::stats::{
    build_cooc_graph, document_bigrams, groups_from_titles, personalized_pagerank, related_tsv,
    sense_prior, top_related, BigramTable, DEFAULT_DAMPING, DEFAULT_EPS, DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOLERANCE,
};
use entstat::{seed, EntityId, KnowledgeBase};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::CliError;

const DEFAULT_RESTARTS: usize = 10;
const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Solver {
    Local,
    HillClimb,
    Lp,
}

fn solver(cfg: &RunConfig, key: &str) -> Result<Solver, CliError> {
    match cfg.raw(key).unwrap_or("local") {
        "local" => Ok(Solver::Local),
        "hillclimb" => Ok(Solver::HillClimb),
        "lp" => Ok(Solver::Lp),
        other => Err(CliError::Data(format!(
            "config field `{key}`: {other:?} is not one of local, hillclimb, lp"
        ))),
    }
}

fn load_kb(cfg: &RunConfig) -> Result<KnowledgeBase, CliError> {
    let dir = cfg.input_path("kb")?;
    Ok(KnowledgeBase::load(&dir)?)
}

fn load_corpus(cfg: &RunConfig, key: &str) -> Result<Corpus, CliError> {
    let path = cfg.input_path(key)?;
    Ok(Corpus::load(&path)?)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn seed_of(cfg: &RunConfig) -> Result<u64, CliError> {
    cfg.parse_or("seed", 0)
}

fn window(cfg: &RunConfig) -> Result<usize, CliError> {
    cfg.parse_or("window", DEFAULT_WINDOW)
}

fn weights(cfg: &RunConfig) -> Result<WeightVector, CliError> {
    match cfg.optional_input_path("weights")? {
        Some(p) => Ok(WeightVector::load(&p)?),
        None => {
            log::warn!("no weights given; scoring by mention prior alone");
            Ok(WeightVector::prior_only())
        }
    }
}

/// Map `f` over documents on a pool of `workers` threads. Results come back
/// in document order, and the first failing document (by order) is reported.
fn par_docs<'c, R, F>(workers: usize, corpus: &'c Corpus, f: F) -> Result<Vec<R>, CliError>
where
    R: Send,
    F: Fn(usize, &'c Document, &'c [Spot]) -> entstat::Result<R> + Sync,
{
    let docs: Vec<(&Document, &[Spot])> = corpus.iter().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Data(format!("config field `workers`: {e}")))?;
    let results: Vec<entstat::Result<R>> = pool.install(|| {
        docs.par_iter()
            .enumerate()
            .map(|(i, (d, s))| f(i, d, s))
            .collect()
    });
    results
        .into_iter()
        .collect::<entstat::Result<Vec<R>>>()
        .map_err(CliError::from)
}

pub fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let links = kb.inlinks().links().count();
    let rows: usize = kb.mentions().iter().map(|(_, c)| c.len()).sum();
    println!("entities\t{}", kb.len());
    println!("links\t{links}");
    println!("surfaces\t{}", kb.mentions().len());
    println!("mention_rows\t{rows}");
    println!("total_pages\t{}", kb.total_pages());
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let theta = SimplexVector::parse_pairs(&cfg.string("theta")?)
        .map_err(|e| CliError::Data(format!("config field `theta`: {e}")))?;
    let n: usize = cfg.parse("n")?;
    let out = cfg.out_dir()?;
    let corpus = synth_corpus(&kb, &theta, n, seed::derive(seed_of(cfg)?, "cli/synth"))?;
    write(&out, "corpus.jsonl", &corpus.to_jsonl())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let corpus = load_corpus(cfg, "corpus")?;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        epochs: cfg.parse_or("epochs", defaults.epochs)?,
        learning_rate: cfg.real_or("learning_rate", defaults.learning_rate, "positive", |v| v > 0.0 && v.is_finite())?,
        margin: cfg.real_or("margin", defaults.margin, "positive", |v| v > 0.0 && v.is_finite())?,
        seed: seed::derive(seed_of(cfg)?, "cli/train"),
        shuffle: cfg.bool_or("shuffle", defaults.shuffle)?,
    };
    let out = cfg.out_dir()?;
    let extractor = FeatureExtractor::new(&kb, window(cfg)?);
    let w = train_weights(&corpus, &extractor, &config)?;
    write(&out, "weights.txt", &w.to_string())
}

pub fn tag(cfg: &RunConfig) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let mut corpus = load_corpus(cfg, "corpus")?;
    let w = weights(cfg)?;
    let solver = solver(cfg, "solver")?;
    let restarts: usize = cfg.parse_or("restarts", DEFAULT_RESTARTS)?;
    let seed = seed::derive(seed_of(cfg)?, "cli/tag");
    let workers = cfg.workers()?;
    let out = cfg.out_dir()?;
    let extractor = FeatureExtractor::new(&kb, window(cfg)?);

    if cfg.bool_or("respot", false)? {
        let spots = corpus
            .documents()
            .map(|d| spot_mentions(d, kb.mentions()))
            .collect();
        corpus = corpus.with_spots(spots)?;
    }

    let tagged = par_docs(workers, &corpus, |i, doc, spots| {
        if spots.is_empty() {
            return Ok(Vec::new());
        }
        if solver == Solver::Local {
            return disambiguate_local(&extractor, &w, doc, spots);
        }
        let p = build_problem(&extractor, &w, doc, spots)?;
        let a = match solver {
            Solver::HillClimb => hill_climb(&p, restarts, seed::derive_indexed(seed, "doc", i as u64)),
            _ => {
                let r = lp_round(&p)?;
                if !r.fallback_spots.is_empty() {
                    log::info!(
                        "{}: LP rounding fell back to the largest value on spots {:?}",
                        doc.doc_id,
                        r.fallback_spots
                    );
                }
                log::debug!("{}: LP value {} after {} pivots", doc.doc_id, r.lp_value, r.iterations);
                r.assignment
            }
        };
        log::debug!("{}: objective {}", doc.doc_id, objective(&p, &a)?);
        Ok(spots
            .iter()
            .zip(a.entity_ids(&p))
            .map(|(s, e)| Spot {
                predicted: Some(e),
                ..s.clone()
            })
            .collect())
    })?;
    let tagged = corpus.with_spots(tagged)?;
    write(&out, "tagged.jsonl", &tagged.to_jsonl())
}

fn load_groups(path: &Path) -> Result<BTreeMap<String, Vec<EntityId>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut groups: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| CliError::Data(format!("{}:{}: {msg}", path.display(), i + 1));
        let (group, id) = line.split_once('\t').ok_or_else(|| bad("expected group<TAB>entity_id"))?;
        let id: EntityId = id.trim().parse().map_err(|_| bad("bad entity id"))?;
        groups.entry(group.trim().to_string()).or_default().push(id);
    }
    Ok(groups)
}

pub fn stats(cfg: &RunConfig) -> Result<(), CliError> {
    let kb = load_kb(cfg)?;
    let corpus = load_corpus(cfg, "corpus")?;
    let groups = match cfg.optional_input_path("groups")? {
        Some(p) => load_groups(&p)?,
        None => groups_from_titles(&kb),
    };
    let eps = cfg.real_or("eps", DEFAULT_EPS, "in [0, 1]", |v| (0.0..=1.0).contains(&v))?;
    let damping = cfg.real_or("damping", DEFAULT_DAMPING, "in (0, 1)", |v| v > 0.0 && v < 1.0)?;
    let tol = cfg.real_or("ppr_tolerance", DEFAULT_TOLERANCE, "positive", |v| v > 0.0)?;
    let max_iter: usize = cfg.parse_or("ppr_iterations", DEFAULT_MAX_ITERATIONS)?;
    let top_k: usize = cfg.parse_or("top_k", DEFAULT_TOP_K)?;
    let center: Option<EntityId> = cfg.raw("center").map(|_| cfg.parse("center")).transpose()?;
    let workers = cfg.workers()?;
    let out = cfg.out_dir()?;

    for spot in corpus.spots() {
        if let Some(l) = spot.label() {
            kb.require(l)?;
        }
    }

    let senses = sense_prior(&corpus, &groups)?;
    let parts = par_docs(workers, &corpus, |_, doc, spots| Ok(document_bigrams(doc, spots)))?;
    let mut table = BigramTable::default();
    for p in &parts {
        table.merge(p);
    }

    let center = match center {
        Some(c) => c,
        None => table
            .most_frequent()
            .ok_or_else(|| CliError::Data("corpus has no labeled spots".into()))?,
    };
    let graph = build_cooc_graph(&table, center, eps)?;
    let scores = personalized_pagerank(&graph, damping, tol, max_iter)?;
    log::info!(
        "related entities of {center}: {} nodes, converged after {} iterations",
        graph.len(),
        scores.iterations
    );

    write(&out, "sense_priors.tsv", &senses.to_tsv())?;
    write(&out, "bigrams.tsv", &table.to_tsv())?;
    write(&out, "related.tsv", &related_tsv(&top_related(&scores, top_k)))
}

fn classes(cfg: &RunConfig, kb: &KnowledgeBase) -> Result<Vec<EntityId>, CliError> {
    let Some(text) = cfg.raw("classes") else {
        return Ok(class_set(kb));
    };
    let mut ids = text
        .split(',')
        .map(|s| s.trim().parse::<EntityId>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Data(format!("config field `classes`: {e}")))?;
    ids.sort();
    ids.dedup();
    Ok(ids)
}

struct RatioInputs {
    kb: KnowledgeBase,
    labeled: Corpus,
    unlabeled: Corpus,
    classes: Vec<EntityId>,
}

fn ratio_inputs(cfg: &RunConfig) -> Result<RatioInputs, CliError> {
    let kb = load_kb(cfg)?;
    let labeled = load_corpus(cfg, "labeled")?;
    let unlabeled = load_corpus(cfg, "unlabeled")?;
    let classes = classes(cfg, &kb)?;
    Ok(RatioInputs {
        kb,
        labeled,
        unlabeled,
        classes,
    })
}

fn mmd_estimate(cfg: &RunConfig, input: &RatioInputs) -> Result<SimplexVector, CliError> {
    let defaults = EstimatorConfig::default();
    let config = EstimatorConfig {
        max_iterations: cfg.parse_or("mmd_iterations", defaults.max_iterations)?,
        tolerance: cfg.real_or("mmd_tolerance", defaults.tolerance, "positive", |v| v > 0.0)?,
        seed: seed::derive(seed_of(cfg)?, "cli/estimate"),
        record_history: false,
    };
    let dims = class_set(&input.kb);
    let means = class_means(input.labeled.spots(), &input.kb, &input.classes, &dims)?;
    let phi = unlabeled_mean(input.unlabeled.spots(), &input.kb, &dims)?;
    let fit = estimate_mmd(&means, &phi, &config)?;
    log::info!(
        "ratio estimate: {} iterations, objective {:e}, converged {}",
        fit.iterations,
        fit.objective,
        fit.converged
    );
    if !fit.converged {
        log::warn!("ratio estimate stopped at the iteration cap");
    }
    Ok(fit.theta)
}

pub fn estimate(cfg: &RunConfig) -> Result<(), CliError> {
    let input = ratio_inputs(cfg)?;
    let out = cfg.out_dir()?;
    let theta = mmd_estimate(cfg, &input)?;
    write(&out, "theta.tsv", &theta.to_tsv())
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let input = ratio_inputs(cfg)?;
    let w = weights(cfg)?;
    let tagger = match solver(cfg, "baseline")? {
        Solver::Local => Tagger::Local,
        Solver::HillClimb => Tagger::HillClimb {
            restarts: cfg.parse_or("restarts", DEFAULT_RESTARTS)?,
            seed: seed::derive(seed_of(cfg)?, "cli/baseline"),
        },
        Solver::Lp => Tagger::Lp,
    };
    let out = cfg.out_dir()?;

    let theta_mmd = mmd_estimate(cfg, &input)?;
    let extractor = FeatureExtractor::new(&input.kb, window(cfg)?);
    let theta_base = label_and_collect(tagger, &extractor, &w, &input.unlabeled, &input.classes)?;
    let truth = gold_ratio(&input.unlabeled, &input.classes)?;
    let l1_mmd = l1_error(&theta_mmd, &truth)?;
    let l1_base = l1_error(&theta_base, &truth)?;
    log::info!("L1 error: mmd {l1_mmd:.6}, label-and-collect {l1_base:.6}");

    let mut report = String::from("entity\ttheta_mmd\ttheta_baseline\ttheta_gold\n");
    for (i, c) in input.classes.iter().enumerate() {
        report.push_str(&format!(
            "{c}\t{}\t{}\t{}\n",
            format_sig12(theta_mmd.probs()[i]),
            format_sig12(theta_base.probs()[i]),
            format_sig12(truth.probs()[i]),
        ));
    }
    report.push_str(&format!(
        "l1_error\t{}\t{}\t0\n",
        format_sig12(l1_mmd),
        format_sig12(l1_base)
    ));
    write(&out, "compare.tsv", &report)
}
