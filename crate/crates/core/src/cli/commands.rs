use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::Context;
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use rxnemb::chem::parse_reaction;
use rxnemb::cluster::{cluster_embeddings, write_assignment_csv, ClusterError};
use rxnemb::encoder::{read_checkpoint, write_checkpoint, InferenceSession, ModelCheckpoint};
use rxnemb::io::{read_embeddings, read_reactions, write_embeddings, EmbeddingSet, SkippedRecord};
use rxnemb::pretrain::{
    evaluate, make_fictitious_corpus, read_corpus_jsonl, synth_templates, train, write_corpus_jsonl,
    write_history_csv, EvalReport, LabeledReaction, PretrainError,
};
use rxnemb::project::{project as run_projection, write_layout_csv, ProjectError};
use rxnemb::viz::{
    aggregate_pool_attention, aggregate_transformer_attention, render_attention_svg, render_heatmap_svg,
    render_scatter_svg, AtomIntensities, Palette, SideAttention, VizError,
};

use super::output::OutputDir;
use super::{usage, AttnArgs, ClusterArgs, EmbedArgs, Overrides, PipelineConfig, PretrainArgs, ProjectArgs};

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn pretrain_error(e: PretrainError) -> anyhow::Error {
    match e {
        PretrainError::Config(m) => usage(m),
        other => other.into(),
    }
}

fn cluster_error(e: ClusterError) -> anyhow::Error {
    match e {
        ClusterError::KTooLarge { .. } | ClusterError::KTooSmall(_) => usage(e.to_string()),
        other => other.into(),
    }
}

fn project_error(e: ProjectError) -> anyhow::Error {
    match e {
        ProjectError::KTooLarge { .. } | ProjectError::Config(_) => usage(e.to_string()),
        other => other.into(),
    }
}

fn load_model(path: &Path) -> anyhow::Result<ModelCheckpoint> {
    read_checkpoint(open(path)?).with_context(|| format!("reading model {}", path.display()))
}

#[derive(Serialize)]
struct PretrainMetrics {
    best_epoch: usize,
    epochs_run: usize,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    val: EvalReport,
    test: EvalReport,
    parameters: usize,
}

pub fn pretrain(a: PretrainArgs) -> anyhow::Result<()> {
    let o = Overrides { jk: a.jk, epochs: a.epochs, ..a.common.clone() };
    let mut cfg = PipelineConfig::load(a.config.as_deref())?.resolve(&o)?;
    if let Some(c) = &a.corpus {
        cfg.corpus = Some(c.clone());
    }
    let corpus: Vec<LabeledReaction> = match (a.synth, &cfg.corpus) {
        (Some(n), _) => {
            let real = synth_templates(n, cfg.seed);
            make_fictitious_corpus(&real, cfg.seed).map_err(pretrain_error)?
        }
        (None, Some(path)) => read_corpus_jsonl(open(path)?).with_context(|| format!("reading {}", path.display()))?,
        (None, None) => return Err(usage("pretrain needs --synth N or a corpus")),
    };
    info!("corpus: {} reactions ({} real)", corpus.len(), corpus.iter().filter(|e| e.is_real).count());
    let outcome = train(&corpus, &cfg.encoder, &cfg.train).map_err(pretrain_error)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>();
    let val = evaluate(&outcome.checkpoint, &pick(&outcome.split.val)).map_err(pretrain_error)?;
    let test = evaluate(&outcome.checkpoint, &pick(&outcome.split.test)).map_err(pretrain_error)?;
    info!("best epoch {}: test accuracy {:.3}", outcome.best_epoch, test.accuracy);

    let mut out = OutputDir::create(cfg.out_dir())?;
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &outcome.checkpoint)?;
    out.write("model.ckpt", &buf)?;
    buf.clear();
    write_history_csv(&mut buf, &outcome.history)?;
    out.write("history.csv", &buf)?;
    buf.clear();
    write_corpus_jsonl(&mut buf, &corpus)?;
    out.write("corpus.jsonl", &buf)?;
    out.write_json(
        "metrics.json",
        &PretrainMetrics {
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.history.len() - 1,
            n_train: outcome.split.train.len(),
            n_val: outcome.split.val.len(),
            n_test: outcome.split.test.len(),
            val,
            test,
            parameters: outcome.checkpoint.parameter_count(),
        },
    )?;
    let record = cfg.to_record();
    out.write_json("config.json", &record)?;
    let inputs: Vec<&Path> = [a.config.as_deref(), if a.synth.is_none() { cfg.corpus.as_deref() } else { None }]
        .into_iter()
        .flatten()
        .collect();
    out.finish("pretrain", &inputs, record)
}

pub fn embed(a: EmbedArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let batch = read_reactions(open(&a.input)?).with_context(|| format!("reading {}", a.input.display()))?;
    let mut skipped = batch.skipped;
    let results: Vec<_> = batch
        .reactions
        .par_iter()
        .map_init(|| InferenceSession::new(&model), |s, r| s.embedding(r))
        .collect();
    let (mut ids, mut smiles, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for (r, res) in batch.reactions.iter().zip(results) {
        match res {
            Ok(e) => {
                ids.push(r.id.clone());
                smiles.push(r.to_smiles());
                rows.push(e.values);
            }
            Err(e) => skipped.push(SkippedRecord { line: 0, id: r.id.clone(), error: e.to_string() }),
        }
    }
    for s in &skipped {
        warn!("skipped {} (line {}): {}", s.id, s.line, s.error);
    }
    if rows.is_empty() {
        anyhow::bail!("no reaction in {} could be embedded", a.input.display());
    }
    info!("embedded {} reactions, skipped {}", rows.len(), skipped.len());
    let set = EmbeddingSet::new(ids, smiles, &rows, skipped.len())?;
    let mut out = OutputDir::create(&a.out)?;
    let mut buf = Vec::new();
    write_embeddings(&mut buf, &set)?;
    out.write("embeddings.bin", &buf)?;
    out.write_json("skipped.json", &skipped)?;
    out.finish("embed", &[&a.model, &a.input], serde_json::json!({ "emb_dim": set.header.emb_dim }))
}

pub fn cluster(a: ClusterArgs) -> anyhow::Result<()> {
    let o = Overrides { k: a.k, metric: a.metric, inter_group: a.inter_group, ..a.common.clone() };
    let cfg = PipelineConfig::load(a.config.as_deref())?.resolve(&o)?;
    let set = read_embeddings(open(&a.embeddings)?).with_context(|| format!("reading {}", a.embeddings.display()))?;
    let c = &cfg.cluster;
    let run = cluster_embeddings(&set.rows(), &set.header.ids, Some(&set.header.smiles), c.k, c.metric, c.inter_group)
        .map_err(cluster_error)?;
    info!("{} items in {} clusters", set.header.count, c.k);
    let labels: Vec<String> = (0..c.k).map(|i| format!("C{i}")).collect();
    let (svg, sidecar) = render_heatmap_svg(&run.groups.distances, &run.report.leaf_order, &labels)?;

    let mut out = OutputDir::create(cfg.out_dir())?;
    let mut buf = Vec::new();
    write_assignment_csv(&mut buf, &set.header.ids, &run.assignment)?;
    out.write("assignments.csv", &buf)?;
    out.write_json("clusters.json", &run.report)?;
    out.write("heatmap.svg", svg.as_bytes())?;
    out.write_json("heatmap.json", &sidecar)?;
    let record = cfg.to_record();
    out.write_json("config.json", &record)?;
    let mut inputs: Vec<&Path> = vec![&a.embeddings];
    inputs.extend(a.config.as_deref());
    out.finish("cluster", &inputs, record)
}

pub fn project(a: ProjectArgs) -> anyhow::Result<()> {
    let o = Overrides { n_neighbors: a.n_neighbors, min_dist: a.min_dist, ..a.common.clone() };
    let cfg = PipelineConfig::load(a.config.as_deref())?.resolve(&o)?;
    let (mut ids, mut tags, mut rows): (Vec<String>, Vec<String>, Vec<Vec<f32>>) = (Vec::new(), Vec::new(), Vec::new());
    let mut dim = None;
    for (tag, path) in &a.input {
        let set = read_embeddings(open(path)?).with_context(|| format!("reading {}", path.display()))?;
        if *dim.get_or_insert(set.header.emb_dim) != set.header.emb_dim {
            anyhow::bail!("{} has dimension {}, expected {}", path.display(), set.header.emb_dim, dim.unwrap_or(0));
        }
        for i in 0..set.header.count {
            ids.push(set.header.ids[i].clone());
            tags.push(tag.clone());
            rows.push(set.row(i).to_vec());
        }
    }
    let palette = Palette::for_tags(&tags).map_err(|e| match e {
        VizError::TooManyDatasets(_) => usage(e.to_string()),
        other => other.into(),
    })?;
    let layout = run_projection(&rows, &cfg.project).map_err(project_error)?;
    info!("projected {} points from {} datasets", rows.len(), palette.entries.len());
    let (svg, sidecar) = render_scatter_svg(&layout.points, &tags, &palette)?;

    let mut out = OutputDir::create(cfg.out_dir())?;
    let mut buf = Vec::new();
    write_layout_csv(&mut buf, &ids, &tags, &layout)?;
    out.write("layout.csv", &buf)?;
    out.write("scatter.svg", svg.as_bytes())?;
    out.write_json("scatter.json", &sidecar)?;
    let record = cfg.to_record();
    out.write_json("config.json", &record)?;
    let mut inputs: Vec<&Path> = a.input.iter().map(|(_, p)| p.as_path()).collect();
    inputs.extend(a.config.as_deref());
    out.finish("project", &inputs, record)
}

#[derive(Serialize)]
struct AttentionReport {
    rxn_smiles: String,
    p_real: f64,
    molecules: Vec<AtomIntensities>,
    transformer: Vec<SideAttention>,
}

pub fn attn(a: AttnArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let rxn = parse_reaction(&a.rxn, "query").with_context(|| format!("parsing {:?}", a.rxn))?;
    let mut session = InferenceSession::new(&model);
    let (_, bundle) = session.embed(&rxn)?;
    let p_real = session.probability(&rxn)?;
    let molecules = aggregate_pool_attention(&bundle)?;
    let transformer = aggregate_transformer_attention(&bundle)?;
    let scaled: Vec<Vec<f64>> = molecules.iter().map(|m| m.scaled.clone()).collect();
    let (svg, _) = render_attention_svg(&rxn, &scaled)?;
    info!("p(real) = {p_real:.4}");

    let mut out = OutputDir::create(&a.out)?;
    out.write_json("attention.json", &AttentionReport { rxn_smiles: rxn.to_smiles(), p_real, molecules, transformer })?;
    out.write("attention.svg", svg.as_bytes())?;
    out.finish("attn", &[&a.model], serde_json::json!({ "rxn_smiles": a.rxn }))
}
