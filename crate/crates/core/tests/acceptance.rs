//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use diva::classifier::{BinaryClassifier, DocVectors, Example, TrainConfig};
use diva::corpus::{Corpus, LabelSet, Song, SyntheticConfig, SyntheticWorld};
use diva::embedding::EmbeddingTable;
use diva::metrics::{coverage, prf1, propensity, psp, soft_scores, TestSet};
use diva::pipeline::{classifier_predictions, run, ModelSelection, PipelineConfig, PseudoLabelStore, StoppingRule, Variant};
use diva::rng::{stream, DivaRng};
use diva::scoring::kmeans::{kmeans, kmeans_best_of};
use diva::scoring::{
    coefficient_of_variation, discrimination_ability, practical_value_from_mean, ClusterEnsemble, JointScoreBreakdown, ScoreConfig,
    SnAggregation,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn labels(prefix: &str, n: usize) -> LabelSet {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn one_hot_table(names: &[String]) -> EmbeddingTable<f64> {
    let mut t = EmbeddingTable::new(names.len()).unwrap();
    for (i, n) in names.iter().enumerate() {
        let mut v = vec![0.0; names.len()];
        v[i] = 1.0;
        t.insert(n.clone(), v).unwrap();
    }
    t
}

fn random_table(names: &[String], dim: usize, rng: &mut DivaRng) -> EmbeddingTable<f64> {
    let mut t = EmbeddingTable::new(dim).unwrap();
    for n in names {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        t.insert(n.clone(), v).unwrap();
    }
    t
}

/// Identity and disjointness laws of the set, soft and coverage metrics.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(1, "acceptance/metrics");
    for case in 0..200 {
        let n = rng.gen_range(1..8);
        let a = labels("a", n);
        let b = labels("b", rng.gen_range(1..8));
        let names: Vec<String> = a.iter().chain(&b).cloned().collect();
        let random = random_table(&names, 6, &mut rng);
        let ortho = one_hot_table(&names);

        let same = prf1::<f64>(&a, &a);
        let soft = soft_scores(&a, &a, &random).map_err(|e| e.to_string())?;
        let cov: f64 = coverage(&a, &a).map_err(|e| e.to_string())?;
        check(same.precision == 1.0 && same.recall == 1.0 && same.f1 == 1.0 && cov == 1.0, || {
            format!("case {case}: identical sets gave P={} R={} F1={} coverage={cov}", same.precision, same.recall, same.f1)
        })?;
        for (name, v) in [("SP", soft.precision), ("SR", soft.recall), ("SF1", soft.f1)] {
            check((v - 1.0).abs() <= 1e-9, || format!("case {case}: identical sets gave {name}={v}"))?;
        }

        let apart = prf1::<f64>(&a, &b);
        let soft = soft_scores(&a, &b, &ortho).map_err(|e| e.to_string())?;
        let cov: f64 = coverage(&a, &b).map_err(|e| e.to_string())?;
        check(apart.precision == 0.0 && apart.recall == 0.0 && apart.f1 == 0.0 && cov == 0.0, || {
            format!("case {case}: disjoint sets gave P={} R={} F1={} coverage={cov}", apart.precision, apart.recall, apart.f1)
        })?;
        for (name, v) in [("SP", soft.precision), ("SR", soft.recall), ("SF1", soft.f1)] {
            check(v.abs() <= 1e-9, || format!("case {case}: disjoint orthogonal sets gave {name}={v}"))?;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("200 random cases in {elapsed:?}"))
}

/// PSP under unit propensities equals precision.
fn criterion_2() -> Outcome {
    let mut rng = stream(2, "acceptance/psp");
    let unit = |_: &str| Some(1.0f64);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let pool: Vec<String> = labels("l", 12).into_iter().collect();
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut rng);
        let ranked: Vec<String> = shuffled[..rng.gen_range(1..8)].to_vec();
        let size = rng.gen_range(1..8);
        let reference: LabelSet = pool.choose_multiple(&mut rng, size).cloned().collect();
        let p: f64 = psp(&ranked, &reference, &unit).map_err(|e| e.to_string())?;
        let precision = prf1::<f64>(&ranked.iter().cloned().collect(), &reference).precision;
        worst = worst.max((p - precision).abs());
        check((p - precision).abs() <= 1e-9, || format!("case {case}: psp {p} vs precision {precision}"))?;
    }
    Ok(format!("100 cases, max |psp - precision| = {worst:.1e}"))
}

/// Propensity implementation against a direct evaluation of the formula.
fn criterion_3() -> Outcome {
    let mut rng = stream(3, "acceptance/propensity");
    let (a, b) = (0.55f64, 1.5f64);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let n: usize = rng.gen_range(3..100_000);
        let prior: f64 = rng.gen_range(0.0..=1.0);
        let nf = n as f64;
        let oracle = 1.0 / (1.0 + (nf.ln() - 1.0) * (b + 1.0).powf(a) * (nf * prior + b).powf(-a));
        let got: f64 = propensity(n, prior, a, b);
        worst = worst.max((got - oracle).abs());
        check((got - oracle).abs() <= 1e-12, || format!("case {case}: N={n} prior={prior}: {got} vs {oracle}"))?;
    }
    Ok(format!("1000 draws, max abs error {worst:.1e}"))
}

/// Analytic gradient against central finite differences.
fn criterion_4() -> Outcome {
    let mut rng = stream(4, "acceptance/gradient");
    let h = 1e-5;
    let mut worst = 0.0f64;
    for model_idx in 0..20 {
        let dim = rng.gen_range(2..6);
        let hidden = if model_idx % 2 == 0 { 0 } else { rng.gen_range(1..6) };
        let mut m = BinaryClassifier::<f64>::new(dim, hidden, &mut rng);
        for p in m.params_mut() {
            *p += 0.5 * rng.sample::<f64, _>(StandardNormal);
        }
        let n = rng.gen_range(2..10);
        let docs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let labs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let targets: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let examples: Vec<Example<'_, f64>> = (0..n)
            .map(|i| Example { doc: &docs[i], label: &labs[i], target: targets[i], weight: 1.0 })
            .collect();
        let grad = m.loss_gradient(&examples).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let j = rng.gen_range(0..m.params().len());
            let mut plus = m.clone();
            plus.params_mut()[j] += h;
            let mut minus = m.clone();
            minus.params_mut()[j] -= h;
            let fd = (plus.summed_loss(&examples).unwrap() - minus.summed_loss(&examples).unwrap()) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-8);
            worst = worst.max(rel);
            check(rel <= 1e-4, || format!("model {model_idx} param {j}: analytic {} vs fd {fd}", grad[j]))?;
        }
    }
    Ok(format!("20 models x 5 coordinates, max relative error {worst:.1e}"))
}

/// The logistic model fits a linearly separable pair set.
fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(5, "acceptance/separable");
    let dim = 4;
    let n = 200;
    let mut docs = Vec::new();
    let mut labs = Vec::new();
    let mut targets = Vec::new();
    for i in 0..n {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        docs.push((0..dim).map(|_| sign + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>());
        labs.push((0..dim).map(|_| sign + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>());
        targets.push(if sign > 0.0 { 1.0 } else { 0.0 });
    }
    let examples: Vec<Example<'_, f64>> = (0..n)
        .map(|i| Example { doc: &docs[i], label: &labs[i], target: targets[i], weight: 1.0 })
        .collect();
    let mut m = BinaryClassifier::<f64>::zeros(dim);
    let accuracy = |m: &BinaryClassifier<f64>| {
        let hits = examples
            .iter()
            .filter(|e| (m.forward(e.doc, e.label).unwrap() >= 0.5) == (e.target == 1.0))
            .count();
        hits as f64 / examples.len() as f64
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut acc = accuracy(&m);
    let mut epochs = 0;
    while acc < 0.99 && epochs < 500 {
        order.shuffle(&mut rng);
        for batch in order.chunks(32) {
            let b: Vec<Example<'_, f64>> = batch.iter().map(|&i| examples[i]).collect();
            let grad = m.loss_gradient(&b).map_err(|e| e.to_string())?;
            m.step(&grad, 0.01);
        }
        epochs += 1;
        acc = accuracy(&m);
    }
    let elapsed = start.elapsed();
    check(acc >= 0.99, || format!("accuracy {acc} after {epochs} epochs"))?;
    check(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("accuracy {acc:.3} after {epochs} epochs in {elapsed:?}"))
}

fn partition_inertia(points: &[Vec<f64>], assign: &[usize], k: usize) -> Option<f64> {
    let dim = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            return None;
        }
        let mean: Vec<f64> = (0..dim).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect();
        total += members.iter().map(|p| p.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>()).sum::<f64>();
    }
    Some(total)
}

/// Minimum inertia over every partition into exactly `k` nonempty clusters.
fn exhaustive_min_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut assign = vec![0usize; n];
    loop {
        if let Some(v) = partition_inertia(points, &assign, k) {
            best = best.min(v);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            assign[i] += 1;
            if assign[i] < k {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

/// Best-of-50 Lloyd runs against exhaustive search on tiny instances.
fn criterion_6() -> Outcome {
    let mut rng = stream(6, "acceptance/kmeans");
    let mut worst = 0.0f64;
    for inst in 0..20 {
        let n = rng.gen_range(3..=8);
        let k = rng.gen_range(1..=3);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let oracle = exhaustive_min_inertia(&points, k);
        let best = kmeans_best_of::<f64, _, _>(&points, k, 100, 50, &mut rng).map_err(|e| e.to_string())?;
        worst = worst.max((best.inertia() - oracle).abs());
        check((best.inertia() - oracle).abs() <= 1e-9, || {
            format!("instance {inst} (n={n}, k={k}): best-of-50 {} vs exhaustive {oracle}", best.inertia())
        })?;
        for restart in 0..50 {
            let r = kmeans::<f64, _, _>(&points, k, 100, &mut rng).map_err(|e| e.to_string())?;
            for w in r.inertia_history.windows(2) {
                check(w[1] <= w[0], || format!("instance {inst} restart {restart}: inertia rose {:?}", r.inertia_history))?;
            }
        }
    }
    Ok(format!("20 instances, max gap to exhaustive optimum {worst:.1e}"))
}

/// SN range, the zero law of J, τ monotonicity and boundary behaviour of PV and DA.
fn criterion_7() -> Outcome {
    let mut rng = stream(7, "acceptance/joint");
    let dim = 5;
    let mut sn_range = (f64::INFINITY, f64::NEG_INFINITY);
    for case in 0..1000 {
        let m = rng.gen_range(1..4);
        let clusterings: Vec<Vec<Vec<f64>>> = (0..m)
            .map(|_| (0..rng.gen_range(1..4)).map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()).collect())
            .collect();
        let ensemble = ClusterEnsemble::from_centers(clusterings);
        let y: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for agg in [SnAggregation::Min, SnAggregation::Max] {
            let sn = ensemble.semantic_novelty(&y, agg).map_err(|e| e.to_string())?;
            sn_range = (sn_range.0.min(sn), sn_range.1.max(sn));
            check((0.0..=1.0).contains(&sn), || format!("case {case}: SN = {sn}"))?;
        }
    }

    for case in 0..1000 {
        let mut config = ScoreConfig::default();
        config.enable_si = rng.gen_bool(0.75);
        config.enable_sn = rng.gen_bool(0.75);
        config.enable_pv = rng.gen_bool(0.75);
        config.enable_da = rng.gen_bool(0.75);
        let draw = |rng: &mut DivaRng| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..1.0) };
        let (si, sn, pv, da) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let b = JointScoreBreakdown::<f64>::combine("s", "y", si, sn, pv, da, &config);
        let enabled_zero = (config.enable_si && si == 0.0)
            || (config.enable_sn && sn == 0.0)
            || (config.enable_pv && pv == 0.0)
            || (config.enable_da && da == 0.0);
        check((b.j == 0.0) == enabled_zero, || format!("case {case}: j={} with factors {:?} and config {config:?}", b.j, (si, sn, pv, da)))?;
    }

    let taus: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    for case in 0..200 {
        let mean: f64 = rng.gen_range(0.0..1.0);
        let pv: Vec<f64> = taus.iter().map(|&t| practical_value_from_mean(mean, t)).collect();
        check(pv.windows(2).all(|w| w[1] <= w[0]), || format!("case {case}: PV not monotone in tau for mean {mean}"))?;
        check(practical_value_from_mean(mean, mean) == 1.0, || format!("case {case}: PV at mean = tau is not 1"))?;
    }

    for case in 0..50 {
        let songs: Vec<Song> = (0..rng.gen_range(2..8))
            .map(|i| {
                let reps = rng.gen_range(0..4);
                let text = std::iter::repeat("hook").take(reps).chain(["filler"]).collect::<Vec<_>>().join(" ");
                Song::new(format!("s{i}"), vec![text], Vec::<String>::new(), None, &BTreeSet::new()).unwrap()
            })
            .collect();
        let counts: Vec<f64> = songs.iter().map(|s| s.count("hook") as f64).collect();
        let corpus = Corpus::new(songs, BTreeSet::new()).map_err(|e| e.to_string())?;
        let da: Vec<f64> = taus.iter().map(|&t| discrimination_ability("hook", &corpus, t)).collect();
        check(da.windows(2).all(|w| w[1] <= w[0]), || format!("case {case}: DA not monotone in tau for counts {counts:?}"))?;
        if let Some(cv) = coefficient_of_variation(&counts) {
            check(discrimination_ability("hook", &corpus, cv) == 1.0, || format!("case {case}: DA at CV = tau is not 1"))?;
        }
    }
    Ok(format!("SN observed in [{:.3}, {:.3}]; J, PV and DA laws hold", sn_range.0, sn_range.1))
}

/// Settings of the synthetic comparison behind criteria 8 to 10.
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const DIM: usize = 32;

fn benchmark_world(seed: u64) -> SyntheticConfig {
    SyntheticConfig { n_songs: 200, seed, ..SyntheticConfig::default() }
}

fn benchmark_pipeline(seed: u64, variant: Variant) -> PipelineConfig {
    let mut c = PipelineConfig { variant, seed, ..PipelineConfig::default() };
    c.train = TrainConfig {
        learning_rate: 0.05,
        epochs: 60,
        negatives_per_positive: 2,
        subsample_threshold: 0.05,
        pseudo_confidence_threshold: THETA_C,
        hidden_units: 32,
        ..TrainConfig::default()
    };
    c.score.tau = 0.2;
    c.score.global_threshold = Some(JOINT_THRESHOLD);
    c.selection = ModelSelection::BestPsp;
    c
}

const THETA_C: f64 = 0.9;
const JOINT_THRESHOLD: f64 = 0.04;

struct SeedResult {
    seed: u64,
    diva: f64,
    nst: f64,
    iteration0: f64,
    diva_stores: Vec<PseudoLabelStore>,
}

fn mean_coverage(predictions: &BTreeMap<String, Vec<String>>, corpus: &Corpus) -> Result<f64, String> {
    let report = diva::metrics::evaluate::<f64>(predictions, corpus, TestSet::Complete, None).map_err(|e| e.to_string())?;
    report.values.coverage.ok_or_else(|| "coverage missing".to_string())
}

fn benchmark() -> Result<(Vec<SeedResult>, Duration), String> {
    let start = Instant::now();
    let mut out = Vec::new();
    for seed in SEEDS {
        let world = SyntheticWorld::generate(&benchmark_world(seed)).map_err(|e| e.to_string())?;
        let emb = world.embeddings::<f64>(DIM, seed).map_err(|e| e.to_string())?;
        let diva = run(&world.corpus, &emb, &benchmark_pipeline(seed, Variant::Diva)).map_err(|e| e.to_string())?;
        let nst = run(&world.corpus, &emb, &benchmark_pipeline(seed, Variant::Nst)).map_err(|e| e.to_string())?;
        let docs = DocVectors::compute(&world.corpus, &emb);
        let it0 = classifier_predictions(&diva.iteration_models[0], &world.corpus, &emb, &docs, THETA_C).map_err(|e| e.to_string())?;
        let it0_map = it0.iter().map(|p| (p.id.clone(), p.ranked_labels())).collect();
        out.push(SeedResult {
            seed,
            diva: mean_coverage(&diva.prediction_map(), &world.corpus)?,
            nst: mean_coverage(&nst.prediction_map(), &world.corpus)?,
            iteration0: mean_coverage(&it0_map, &world.corpus)?,
            diva_stores: diva.store_history,
        });
    }
    Ok((out, start.elapsed()))
}

fn table(results: &[SeedResult]) -> String {
    results
        .iter()
        .map(|r| format!("seed {} diva {:.3} nst {:.3} it0 {:.3}", r.seed, r.diva, r.nst, r.iteration0))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Coverage ordering diva > nst > iteration-0 classifier.
fn criterion_8(results: &[SeedResult], elapsed: Duration) -> Outcome {
    let wins = results.iter().filter(|r| r.diva > r.nst && r.nst > r.iteration0).count();
    let detail = format!("{wins}/5 seeds ordered in {elapsed:.1?} ({})", table(results));
    check(wins >= 4 && elapsed < Duration::from_secs(300), || detail.clone())?;
    Ok(detail)
}

/// Removing the joint score lowers coverage.
fn criterion_9(results: &[SeedResult]) -> Outcome {
    let wins = results.iter().filter(|r| r.diva > r.nst).count();
    let detail = format!("diva > nst in {wins}/5 seeds");
    check(wins >= 4, || detail.clone())?;
    Ok(detail)
}

fn store_grows(history: &[PseudoLabelStore]) -> bool {
    history.windows(2).all(|w| w[0].is_subset_of(&w[1]))
}

/// A corpus where each song's two strongest uncovered tokens are picked in
/// turn, so a non-accumulating store must drop the first pick.
fn replacement_corpus() -> (Corpus, EmbeddingTable<f64>) {
    let mut songs = Vec::new();
    let words = ["amber", "breeze", "cinder", "dusk", "ember", "frost"];
    for i in 0..6 {
        let a = words[i];
        let b = words[(i + 1) % 6];
        let text = format!("{a} {a} {a} {a} {b} {b} {b} {b} {b} gold{i}");
        songs.push(Song::new(format!("s{i}"), vec![text], vec![format!("gold{i}")], None, &BTreeSet::new()).unwrap());
    }
    let corpus = Corpus::new(songs, BTreeSet::new()).unwrap();
    let names: Vec<String> = words.iter().map(|w| w.to_string()).chain((0..6).map(|i| format!("gold{i}"))).collect();
    let emb = random_table(&names, 8, &mut stream(10, "acceptance/replacement"));
    (corpus, emb)
}

/// DiVa never drops a pseudo-label; DiVa-light can.
fn criterion_10(results: &[SeedResult]) -> Outcome {
    for r in results {
        check(store_grows(&r.diva_stores), || format!("seed {}: diva store shrank", r.seed))?;
    }
    let (corpus, emb) = replacement_corpus();
    let mut c = PipelineConfig { variant: Variant::DivaLight, max_iterations: 3, seed: 10, ..PipelineConfig::default() };
    c.stopping = StoppingRule::NewLabelThreshold(1);
    c.train.pseudo_confidence_threshold = 0.9999;
    c.score.top_n = 1;
    c.score.tau = 0.01;
    let light = run(&corpus, &emb, &c).map_err(|e| e.to_string())?;
    check(!store_grows(&light.store_history), || {
        format!("diva-light stores never lost an entry: sizes {:?}", light.store_history.iter().map(|s| s.len()).collect::<Vec<_>>())
    })?;
    c.variant = Variant::Diva;
    let full = run(&corpus, &emb, &c).map_err(|e| e.to_string())?;
    check(store_grows(&full.store_history), || "diva store shrank on the crafted corpus".into())?;
    Ok(format!(
        "diva stores grow on all {} benchmark runs and the crafted corpus; diva-light replaced its store (sizes {:?})",
        results.len(),
        light.store_history.iter().map(|s| s.len()).collect::<Vec<_>>()
    ))
}

fn diva(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_diva"))
        .args(args)
        .env_remove("DIVA_OUTPUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || format!("diva {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

/// `gen`, `run` and `eval` twice with one seed give byte-identical files.
fn criterion_11() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for round in 0..2 {
        let base = root.path().join(format!("round{round}"));
        let (data, out, metrics) = (base.join("data"), base.join("run"), base.join("eval"));
        let s = |p: &Path| p.display().to_string();
        diva(&["gen", "--out-dir", &s(&data), "--n-songs", "40", "--seed", "11", "--dim", "16"])?;
        diva(&[
            "run", "--corpus", &s(&data.join("corpus.jsonl")), "--stopwords", &s(&data.join("stopwords.txt")),
            "--embeddings", &s(&data.join("embeddings.txt")), "--out-dir", &s(&out), "--seed", "11", "--max-iter", "3",
            "--epochs", "5", "--hidden-units", "4", "--lr", "0.05", "--tau", "0.2", "--theta-c", "0.8",
        ])?;
        diva(&[
            "eval", "--corpus", &s(&data.join("corpus.jsonl")), "--stopwords", &s(&data.join("stopwords.txt")),
            "--predictions", &s(&out.join("predictions.jsonl")), "--embeddings", &s(&data.join("embeddings.txt")),
            "--test-set", "complete", "--out-dir", &s(&metrics),
        ])?;
        trees.push(tree(&base));
    }
    check(trees[0].len() >= 8, || format!("only {} files written", trees[0].len()))?;
    check(trees[0].keys().eq(trees[1].keys()), || "the two executions wrote different file sets".into())?;
    for (name, bytes) in &trees[0] {
        check(trees[1][name] == *bytes, || format!("{name} differs between executions"))?;
    }
    Ok(format!("{} files byte-identical across two executions", trees[0].len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, outcome: Outcome| {
        match outcome {
            Ok(detail) => println!("criterion {n:>2}: PASS  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL  {detail}");
            }
        }
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    match benchmark() {
        Ok((results, elapsed)) => {
            report(8, criterion_8(&results, elapsed));
            report(9, criterion_9(&results));
            report(10, criterion_10(&results));
        }
        Err(e) => {
            for n in 8..=10 {
                report(n, Err(format!("benchmark run failed: {e}")));
            }
        }
    }
    report(11, criterion_11());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 11 acceptance criteria passed");
}
