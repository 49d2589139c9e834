//! Acceptance suite. Each test prints one `acceptance <n> PASS|FAIL` line
//! straight to stderr (bypassing capture) and then asserts. Criteria run
//! one at a time so wall-clock limits are not skewed by each other.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use rxnemb::autodiff::{check_gradients, Tensor};
use rxnemb::chem::{is_isomorphic, parse_molecule, parse_reaction, write_smiles, Reaction};
use rxnemb::cluster::{
    assign_nearest, cluster_embeddings, kennard_stone_select, optimal_leaf_order, ordering_cost, Dendrogram,
    DistanceMatrix, InterGroup, Merge, Metric, VectorDistances,
};
use rxnemb::encoder::{forward, EncoderConfig, EncoderError, InferenceSession, LayerNames, ModelCheckpoint, Padding};
use rxnemb::pretrain::{evaluate, make_fictitious_corpus, synth_templates, train, TrainConfig};
use rxnemb::project::{project, ProjectConfig};
use rxnemb::viz::{aggregate_pool_attention, aggregate_transformer_attention, render_heatmap_svg};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {n:>2} {verdict} {name}: {detail}");
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// 1 ---------------------------------------------------------------------

const GRAD_LIMIT: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-3;

#[test]
fn c01_gradient_correctness() {
    let _g = serial();
    let t = Instant::now();
    let cfg = EncoderConfig {
        gnn_hidden: 8,
        d_model: 8,
        tf_heads: 2,
        ffn_dim: 16,
        emb_dim: 8,
        max_components: 4,
        ..EncoderConfig::default()
    };
    let model = ModelCheckpoint::init(cfg.clone(), 3).unwrap();
    let params: BTreeMap<String, Tensor<f64>> = model.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect();
    let batch = [
        parse_reaction("CC(=O)Cl.NCc1ccccc1>>CC(=O)NCc1ccccc1", "a").unwrap(),
        parse_reaction("OB(O)c1ccccc1.Brc1ccncc1>>c1ccc(-c2ccncc2)cc1", "b").unwrap(),
    ];
    let r = check_gradients::<_, EncoderError>(&params, GRAD_STEP, |tape, vars| {
        let names = LayerNames::new(vars.clone());
        let mut losses = Vec::new();
        for (i, rxn) in batch.iter().enumerate() {
            let pass = forward(tape, &cfg, &names, rxn, Padding::Full)?;
            losses.push(tape.bce_with_logits(pass.logit, (1 - i) as f64)?);
        }
        let all = tape.concat_cols(&losses)?;
        let total = tape.sum(all)?;
        Ok(tape.scale(total, 0.5)?)
    })
    .unwrap();
    let elapsed = t.elapsed();
    let pass = r.max_rel_err < GRAD_LIMIT && r.skipped_kinks * 20 < r.checked && elapsed < Duration::from_secs(30);
    report(
        1,
        "gradient correctness",
        pass,
        &format!(
            "max rel err {:.2e} ({}) over {} entries, {} kink skips, {}",
            r.max_rel_err,
            r.worst_tensor.as_deref().unwrap_or("-"),
            r.checked,
            r.skipped_kinks,
            secs(elapsed)
        ),
    );
    assert!(pass, "{r:?}");
}

// 2 ---------------------------------------------------------------------

#[test]
fn c02_pretraining_signal() {
    let _g = serial();
    let t = Instant::now();
    let mut accs = Vec::new();
    for seed in 0..5u64 {
        let real = synth_templates(500, seed);
        let corpus = make_fictitious_corpus(&real, seed).unwrap();
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let out = train(&corpus, &EncoderConfig::default(), &cfg).unwrap();
        let test: Vec<_> = out.split.test.iter().map(|&i| corpus[i].clone()).collect();
        let acc = evaluate(&out.checkpoint, &test).unwrap().accuracy;
        let _ = writeln!(
            std::io::stderr(),
            "    seed {seed}: test accuracy {acc:.3} on {} held out, best epoch {}",
            test.len(),
            out.best_epoch
        );
        accs.push(acc);
    }
    let elapsed = t.elapsed();
    let mut sorted = accs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[2];
    let min = sorted[0];
    let pass = median >= 0.85 && min >= 0.75 && elapsed < Duration::from_secs(600);
    report(
        2,
        "pre-training signal",
        pass,
        &format!("median {median:.3} (need 0.85), min {min:.3} (need 0.75), accuracies {accs:.3?}, {}", secs(elapsed)),
    );
    assert!(pass);
}

// 3 ---------------------------------------------------------------------

/// Independent greedy: recompute every candidate's nearest selected item
/// from scratch each round. Ties: lexicographically smallest first pair,
/// then lowest index.
fn ks_reference(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    let dist = |i: usize, j: usize| -> f64 {
        points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let mut first = (0, 1);
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            if dist(i, j) > best {
                best = dist(i, j);
                first = (i, j);
            }
        }
    }
    let mut sel = vec![first.0, first.1];
    while sel.len() < k {
        let mut pick = None;
        let mut best = f64::NEG_INFINITY;
        for i in (0..n).filter(|i| !sel.contains(i)) {
            let m = sel.iter().map(|&s| dist(i, s)).fold(f64::INFINITY, f64::min);
            if m > best {
                best = m;
                pick = Some(i);
            }
        }
        sel.push(pick.unwrap());
    }
    sel
}

#[test]
fn c03_kennard_stone_oracle() {
    let _g = serial();
    let mut mismatches = 0;
    let mut trials = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    // 20 random trials as specified, then 5 on an integer lattice where
    // distance ties are common.
    for trial in 0..25 {
        let points: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                (0..16)
                    .map(|_| if trial < 20 { rng.random_range(-1.0..1.0) } else { f64::from(rng.random_range(0..3)) })
                    .collect()
            })
            .collect();
        let f32s: Vec<Vec<f32>> = points.iter().map(|p| p.iter().map(|&v| v as f32).collect()).collect();
        let back: Vec<Vec<f64>> = f32s.iter().map(|p| p.iter().map(|&v| f64::from(v)).collect()).collect();
        let d = VectorDistances::new(&f32s, Metric::Euclidean).unwrap();
        let got = kennard_stone_select(&d, 10).unwrap();
        trials += 1;
        if got != ks_reference(&back, 10) {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0;
    report(3, "Kennard-Stone oracle", pass, &format!("{mismatches} mismatches in {trials} trials (20 random, 5 lattice)"));
    assert!(pass);
}

// 4 ---------------------------------------------------------------------

fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Dendrogram {
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; 2 * n - 1];
    let mut merges = Vec::new();
    for t in 0..n - 1 {
        let a = active.swap_remove(rng.random_range(0..active.len()));
        let b = active.swap_remove(rng.random_range(0..active.len()));
        let id = n + t;
        size[id] = size[a] + size[b];
        merges.push(Merge { left: a, right: b, height: (t + 1) as f64, size: size[id] });
        active.push(id);
    }
    Dendrogram { n_leaves: n, merges }
}

fn flipped_order(tree: &Dendrogram, node: usize, mask: usize, out: &mut Vec<usize>) {
    match tree.children(node) {
        None => out.push(node),
        Some((l, r)) => {
            let flip = mask >> (node - tree.n_leaves) & 1 == 1;
            let (a, b) = if flip { (r, l) } else { (l, r) };
            flipped_order(tree, a, mask, out);
            flipped_order(tree, b, mask, out);
        }
    }
}

#[test]
fn c04_optimal_leaf_order() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut failures = 0;
    for _ in 0..50 {
        let n = 6;
        let tree = random_tree(&mut rng, n);
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f64::from(rng.random_range(1..=20));
                v[i * n + j] = d;
                v[j * n + i] = d;
            }
        }
        let dm = DistanceMatrix::from_values(n, v, Metric::Euclidean).unwrap();
        let mut best = f64::INFINITY;
        let mut admissible = Vec::new();
        for mask in 0..1usize << (n - 1) {
            let mut order = Vec::new();
            flipped_order(&tree, tree.root(), mask, &mut order);
            let cost: f64 = order.windows(2).map(|w| dm.get(w[0], w[1])).sum();
            best = best.min(cost);
            admissible.push(order);
        }
        let got = optimal_leaf_order(&tree, &dm).unwrap();
        if got.cost != best || ordering_cost(&got.order, &dm) != best || !admissible.contains(&got.order) {
            failures += 1;
        }
    }
    let pass = failures == 0;
    report(4, "optimal leaf ordering", pass, &format!("{failures} of 50 trees differ from the 2^5 exhaustive minimum"));
    assert!(pass);
}

// 5 ---------------------------------------------------------------------

#[test]
fn c05_nearest_centroid_assignment() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    // Small integer coordinates make equal distances common.
    let points: Vec<Vec<i64>> = (0..200).map(|_| (0..3).map(|_| rng.random_range(0..5)).collect()).collect();
    let mut idx: Vec<usize> = (0..200).collect();
    idx.shuffle(&mut rng);
    let centroids = idx[..10].to_vec();
    let f32s: Vec<Vec<f32>> = points.iter().map(|p| p.iter().map(|&v| v as f32).collect()).collect();
    let d = VectorDistances::new(&f32s, Metric::Euclidean).unwrap();
    let got = assign_nearest(&d, &centroids).unwrap();

    let sq = |a: &[i64], b: &[i64]| -> i64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let (mut wrong, mut ties) = (0, 0);
    for i in 0..200 {
        let want = match centroids.iter().position(|&c| c == i) {
            Some(pos) => pos,
            None => {
                let ds: Vec<i64> = centroids.iter().map(|&c| sq(&points[i], &points[c])).collect();
                let min = *ds.iter().min().unwrap();
                if ds.iter().filter(|&&v| v == min).count() > 1 {
                    ties += 1;
                }
                ds.iter().position(|&v| v == min).unwrap()
            }
        };
        if got.labels[i] != want {
            wrong += 1;
        }
    }
    let pass = wrong == 0 && ties > 0;
    report(
        5,
        "nearest-centroid assignment",
        pass,
        &format!("{wrong} of 200 labels differ from the exhaustive argmin; {ties} items with tied nearest centroids"),
    );
    assert!(pass);
}

// 6 ---------------------------------------------------------------------

fn rel_diff(a: &[f32], b: &[f32]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| f64::from(x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    num / den.max(1e-30)
}

#[test]
fn c06_permutation_invariance() {
    let _g = serial();
    let model = ModelCheckpoint::init(EncoderConfig::default(), 6).unwrap();
    let mut session = InferenceSession::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let reactions = synth_templates(50, 6);
    let mut worst = 0.0f64;
    let mut reordered = 0;
    for rxn in &reactions {
        let base = session.embedding(rxn).unwrap().values;
        let mut p: Reaction = rxn.clone();
        p.reactant_components.shuffle(&mut rng);
        p.product_components.shuffle(&mut rng);
        if p.reactant_components.len() > 1 {
            // Guarantee a real reordering of the reactant side.
            p.reactant_components.rotate_left(1);
            reordered += 1;
        }
        let e = session.embedding(&p).unwrap().values;
        worst = worst.max(rel_diff(&base, &e));
    }
    let pass = worst < 1e-5 && reordered > 0;
    report(
        6,
        "permutation invariance",
        pass,
        &format!("max relative difference {worst:.2e} over 50 reactions ({reordered} with reordered reactants)"),
    );
    assert!(pass);
}

// 7 ---------------------------------------------------------------------

fn blobs(seed: u64, sigma: f64, separation: f64) -> (Vec<Vec<f32>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let offset = separation / 2f64.sqrt(); // pairwise center distance = separation
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for c in 0..3 {
        for _ in 0..100 {
            let mut v: Vec<f32> = (0..32).map(|_| noise.sample(&mut rng) as f32).collect();
            v[c] += offset as f32;
            pts.push(v);
            labels.push(c);
        }
    }
    (pts, labels)
}

fn knn_purity(points: &[[f32; 2]], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    let mut same = 0;
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dx = f64::from(points[i][0] - points[j][0]);
                let dy = f64::from(points[i][1] - points[j][1]);
                (dx * dx + dy * dy, j)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        same += d[..k].iter().filter(|(_, j)| labels[*j] == labels[i]).count();
    }
    same as f64 / (n * k) as f64
}

#[test]
fn c07_projection_quality() {
    let _g = serial();
    // n_neighbors 15, min_dist 0.1, Euclidean: the defaults.
    let mut purities = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 0..3 {
        let (pts, labels) = blobs(seed, 0.1, 5.0);
        let t = Instant::now();
        let layout = project(&pts, &ProjectConfig { seed, ..ProjectConfig::default() }).unwrap();
        slowest = slowest.max(t.elapsed());
        purities.push(knn_purity(&layout.points, &labels, 10));
    }
    // The stricter reading (centre spacing of 5 noise σ) is reported, not
    // asserted; see the notes on the projection module.
    let (pts, labels) = blobs(0, 1.0, 5.0);
    let strict = knn_purity(&project(&pts, &ProjectConfig::default()).unwrap().points, &labels, 10);
    let raw = knn_purity(
        &project(&pts, &ProjectConfig { standardize: false, ..ProjectConfig::default() }).unwrap().points,
        &labels,
        10,
    );
    let min = purities.iter().copied().fold(1.0, f64::min);
    let pass = min >= 0.9 && slowest < Duration::from_secs(60);
    report(
        7,
        "projection quality",
        pass,
        &format!(
            "10-NN purity {purities:.3?} (σ 0.1, centres 5 apart), slowest {}; 5σ spacing: {strict:.3} standardized, {raw:.3} raw",
            secs(slowest)
        ),
    );
    assert!(pass);
}

// 8 ---------------------------------------------------------------------

#[test]
fn c08_parser_round_trip() {
    let _g = serial();
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/centroids.tsv")).unwrap();
    let (mut ok, mut broken, mut unsupported) = (0, Vec::new(), Vec::new());
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        let (label, smiles) = (cols[0], cols[2]);
        rows += 1;
        for (side, part) in smiles.split('>').enumerate() {
            for (i, comp) in part.split('.').filter(|c| !c.is_empty()).enumerate() {
                match parse_molecule(comp) {
                    Err(e) => unsupported.push(format!("{label} side {side} #{i} {comp}: {e}")),
                    Ok(g) => {
                        let written = write_smiles(&g);
                        match parse_molecule(&written) {
                            Ok(g2) if is_isomorphic(&g, &g2) => ok += 1,
                            _ => broken.push(format!("{label} {comp} -> {written}")),
                        }
                    }
                }
            }
        }
    }
    for u in &unsupported {
        let _ = writeln!(std::io::stderr(), "    unsupported: {u}");
    }
    let pass = rows == 50 && broken.is_empty();
    report(
        8,
        "parser round trip",
        pass,
        &format!(
            "{rows} centroid reactions, {ok} components round-tripped, {} altered, {} reported unsupported",
            broken.len(),
            unsupported.len()
        ),
    );
    assert!(pass, "{broken:?}");
}

// 9 ---------------------------------------------------------------------

#[test]
fn c09_attention_normalization() {
    let _g = serial();
    let model = ModelCheckpoint::init(EncoderConfig::default(), 9).unwrap();
    let mut session = InferenceSession::new(&model);
    let (mut worst_pool, mut worst_row, mut molecules, mut rows) = (0.0f64, 0.0f64, 0, 0);
    let mut failures = 0;
    for rxn in synth_templates(100, 9) {
        let (_, bundle) = session.embed(&rxn).unwrap();
        for m in &bundle.molecules {
            worst_pool = worst_pool.max((m.atom_weights.iter().sum::<f64>() - 1.0).abs());
            molecules += 1;
        }
        if aggregate_pool_attention(&bundle).is_err() {
            failures += 1;
        }
        for side in aggregate_transformer_attention(&bundle).unwrap() {
            for r in 0..side.size {
                let s: f64 = side.matrix[r * side.size..(r + 1) * side.size].iter().sum();
                worst_row = worst_row.max((s - 1.0).abs());
                rows += 1;
            }
        }
    }
    let pass = worst_pool <= 1e-6 && worst_row <= 1e-6 && failures == 0 && rows > 0;
    report(
        9,
        "attention normalization",
        pass,
        &format!(
            "{molecules} molecules, max |Σw − 1| {worst_pool:.1e}; {rows} aggregated rows, max |Σ − 1| {worst_row:.1e}"
        ),
    );
    assert!(pass);
}

// 10 --------------------------------------------------------------------

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_rxnemb")).args(args).env("RUST_LOG", "warn").output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn cli_pipeline(root: &Path) {
    let p = |s: &str| root.join(s).to_str().unwrap().to_string();
    run_cli(&["pretrain", "--synth", "60", "--epochs", "3", "--seed", "10", "--out", &p("pt")]);
    run_cli(&["embed", "--model", &p("pt/model.ckpt"), "--input", &p("pt/corpus.jsonl"), "--out", &p("em")]);
    run_cli(&["cluster", "--embeddings", &p("em/embeddings.bin"), "--k", "6", "--out", &p("cl")]);
    let tagged = format!("synth={}", p("em/embeddings.bin"));
    run_cli(&["project", "--input", &tagged, "--seed", "10", "--out", &p("pr")]);
    run_cli(&["attn", "--model", &p("pt/model.ckpt"), "--rxn", "CC(=O)Cl.NCC>>CC(=O)NCC", "--out", &p("at")]);
}

#[test]
fn c10_end_to_end_determinism() {
    let _g = serial();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli_pipeline(a.path());
    cli_pipeline(b.path());
    let files = [
        "pt/model.ckpt",
        "pt/history.csv",
        "pt/corpus.jsonl",
        "em/embeddings.bin",
        "cl/assignments.csv",
        "cl/heatmap.svg",
        "cl/clusters.json",
        "pr/layout.csv",
        "pr/scatter.svg",
        "at/attention.svg",
        "at/attention.json",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path().join(f)).unwrap() != std::fs::read(b.path().join(f)).unwrap())
        .collect();
    let pass = differing.is_empty();
    report(
        10,
        "end-to-end determinism",
        pass,
        &format!("{} of {} artifacts byte-identical across two runs {differing:?}", files.len() - differing.len(), files.len()),
    );
    assert!(pass);
}

// 11 --------------------------------------------------------------------

#[test]
fn c11_pipeline_scale() {
    let _g = serial();
    let n = 10_000;
    let k = 50;
    let reactions = synth_templates(n, 11);
    let model = ModelCheckpoint::init(EncoderConfig::default(), 11).unwrap();
    let t = Instant::now();
    let embs: Vec<Vec<f32>> = reactions
        .par_iter()
        .map_init(|| InferenceSession::new(&model), |s, r| s.embedding(r).unwrap().values)
        .collect();
    let t_embed = t.elapsed();
    let ids: Vec<String> = reactions.iter().map(|r| r.id.clone()).collect();
    let run = cluster_embeddings(&embs, &ids, None, k, Metric::Euclidean, InterGroup::Mean).unwrap();
    let labels: Vec<String> = (0..k).map(|c| format!("C{c}")).collect();
    let (svg, sidecar) = render_heatmap_svg(&run.groups.distances, &run.report.leaf_order, &labels).unwrap();
    let elapsed = t.elapsed();

    // Invariants: valid labels, every cluster non-empty and owning its
    // centroid, every item at a nearest centroid, a valid tree whose
    // leaf order is a permutation with the reported cost.
    let a = &run.assignment;
    let mut problems = Vec::new();
    if a.validate().is_err() {
        problems.push("assignment");
    }
    if a.sizes().contains(&0) || a.sizes().iter().sum::<usize>() != n {
        problems.push("sizes");
    }
    let sq = |x: &[f32], y: &[f32]| -> f64 { x.iter().zip(y).map(|(p, q)| f64::from(p - q).powi(2)).sum() };
    let far = (0..n).into_par_iter().any(|i| {
        let own = sq(&embs[i], &embs[a.centroid_indices[a.labels[i]]]);
        a.centroid_indices.iter().any(|&c| sq(&embs[i], &embs[c]) < own * (1.0 - 1e-9))
    });
    if far {
        problems.push("nearest");
    }
    if run.tree.validate().is_err() || run.tree.n_leaves != k {
        problems.push("tree");
    }
    let mut order = run.report.leaf_order.clone();
    order.sort_unstable();
    if order != (0..k).collect::<Vec<_>>() {
        problems.push("leaf order");
    }
    if (ordering_cost(&run.report.leaf_order, &run.groups.distances) - run.report.leaf_order_cost).abs() > 1e-9 {
        problems.push("order cost");
    }
    if sidecar.values.len() != k * k || !svg.ends_with("</svg>\n") {
        problems.push("heatmap");
    }
    let pass = problems.is_empty() && elapsed < Duration::from_secs(300);
    report(
        11,
        "pipeline scale",
        pass,
        &format!(
            "{n} reactions, k={k}: embed {}, total {}; cluster sizes {}..{}; violations {problems:?}",
            secs(t_embed),
            secs(elapsed),
            a.sizes().iter().min().unwrap(),
            a.sizes().iter().max().unwrap()
        ),
    );
    assert!(pass);
}
