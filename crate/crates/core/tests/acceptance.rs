//! End-to-end acceptance checks, one PASS/FAIL line each.
//!
//! Runs without the libtest harness; exits non-zero if any check fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::grad::{check, random_op_cases, Projected};
use common::oracles::{adjusted_mutual_info, brute_force_lcs, exhaustive_ter_edits, random_sentence, toks};
use common::toy::{random_example, random_toy_model, toy_config, ModelLoss};
use msnmt::bitoken::{brown_cluster, class_bigram_mi, extract_bitokens, train_class_lm, Alignment, NgramLm};
use msnmt::decoding::{beam_search, greedy_translate, ModelScorer, StepScorer};
use msnmt::editops::{apply_edits, derive_edits, EditOp, EditScript};
use msnmt::metrics::{bleu, hter_corpus, ter, ter_edits, Support};
use msnmt::numerics::{AdamConfig, AdamState};
use msnmt::pipeline::{ape_apply, read_corpus, train, translate, write_corpus, DatasetSpec, ModelShape, TaskKind, TrainConfig};
use msnmt::seqmodel::{Batch, Example, Mode, Model};
use msnmt::textproc::{fix_punctuation, merge_german, split_contractions, split_pronoun_endings, SplitRuleTable, BOS_ID, EOS_ID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst64, mut worst32, mut cases) = (0.0f64, 0.0f64, 0);
    for round in 0..5 {
        for (kind, inputs) in random_op_cases(&mut rng) {
            let name = kind.name();
            let obj = Projected::new(kind, &inputs, &mut rng);
            let r = check(&obj, &inputs);
            ensure(r.err64 < 1e-6 && r.err32 < 1e-4, || {
                format!("{name} round {round}: errors {:.2e} / {:.2e}", r.err64, r.err32)
            })?;
            worst64 = worst64.max(r.err64);
            worst32 = worst32.max(r.err32);
            cases += 1;
        }
    }
    for seed in 0..6u64 {
        let encoders = rng.gen_range(1..=3);
        let shared = seed % 3 == 2;
        let sources = if shared { vec![rng.gen_range(5..=10); encoders] } else { (0..encoders).map(|_| rng.gen_range(5..=10)).collect() };
        let mut config = toy_config(sources, rng.gen_range(5..=10), rng.gen_range(1..=5), rng.gen_range(1..=5), seed);
        config.share_encoder_weights = shared;
        config.image_dim = if seed % 2 == 1 { Some(rng.gen_range(1..=10)) } else { None };
        config.l2 = 1e-3;
        config.init_range = 0.5;
        let mode = if seed >= 4 {
            config.dropout = 0.3;
            Mode::Training { seed }
        } else {
            Mode::Inference
        };
        let model: Model<f64> = Model::new(config.clone()).map_err(|e| e.to_string())?;
        let examples: Vec<Example> = (0..2).map(|_| random_example(&config, &mut rng, 4)).collect();
        let batch = Batch::from_examples(&examples).map_err(|e| e.to_string())?;
        let (obj, point) = ModelLoss::new(&model, batch, mode);
        let r = check(&obj, &point);
        ensure(r.err64 < 1e-6 && r.err32 < 1e-4, || {
            format!("model {seed}: errors {:.2e} / {:.2e}", r.err64, r.err32)
        })?;
        worst64 = worst64.max(r.err64);
        worst32 = worst32.max(r.err32);
        cases += 1;
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("{cases} cases, worst relative error {worst64:.1e} (f64) {worst32:.1e} (f32)"))
}

fn memorization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // Ids 0..4 are reserved, so 24 ids means 20 words per side.
    let (vs, vt) = (24, 24);
    let examples: Vec<Example> = (0..16)
        .map(|_| {
            let src: Vec<usize> = (0..rng.gen_range(3..=6)).map(|_| rng.gen_range(4..vs)).collect();
            // Reversed and relabelled, so the decoder must attend.
            let mut target: Vec<usize> = src.iter().rev().map(|&s| 4 + (s * 7) % (vt - 4)).collect();
            target.push(EOS_ID);
            let mut sources = vec![src];
            sources[0].push(EOS_ID);
            Example { sources, image: None, target }
        })
        .collect();
    let batch = Batch::from_examples(&examples).map_err(|e| e.to_string())?;
    let mut config = toy_config(vec![vs], vt, 16, 32, 3);
    config.init_range = 0.1;
    let mut model: Model<f32> = Model::new(config).map_err(|e| e.to_string())?;
    let adam_config = AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() };
    let mut adam = AdamState::new(adam_config, model.params().tensors());
    let exact = |m: &Model<f32>| {
        examples.iter().all(|ex| {
            let out = greedy_translate(m, &[&ex.sources[0]], None, 10).unwrap();
            out == ex.target[..ex.target.len() - 1]
        })
    };
    for step in 1..=2000u64 {
        model.train_step(&batch, &mut adam, step).map_err(|e| e.to_string())?;
        if step % 25 == 0 {
            let (stats, _) = model.loss_and_gradients(&batch, Mode::Inference).map_err(|e| e.to_string())?;
            if stats.nll < 0.1 && exact(&model) {
                within(Duration::from_secs(300), start)?;
                return Ok(format!("loss {:.4} nats/token and all 16 targets exact after {step} steps", stats.nll));
            }
        }
    }
    let (stats, _) = model.loss_and_gradients(&batch, Mode::Inference).map_err(|e| e.to_string())?;
    Err(format!("after 2000 steps loss {:.4}, exact {}", stats.nll, exact(&model)))
}

fn edit_scripts() -> Outcome {
    let start = Instant::now();
    let mt = toks("Wählen Sie Uncached \" Aktualisieren \" aus dem Menü des Histogrammbedienfeldes .");
    let pe = toks("Wählen Sie \" Nicht gespeicherte aktualisieren \" aus dem Menü des Histogrammbedienfeldes .");
    let script = derive_edits(&mt, &pe);
    let expected = "<keep> <keep> <delete> <keep> Nicht gespeicherte aktualisieren <delete> <keep> <keep> <keep> <keep> <keep> <keep> <keep>";
    ensure(script.to_string() == expected && script.len() == 15, || format!("menu example gave {script}"))?;
    ensure(apply_edits(&mt, &script) == pe, || "menu example does not roundtrip".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for i in 0..1000 {
        let a = random_sentence(&mut rng, 20, 0, 12);
        let b = random_sentence(&mut rng, 20, 0, 12);
        let s = derive_edits(&a, &b);
        ensure(apply_edits(&a, &s) == b, || format!("pair {i} does not roundtrip"))?;
        let lcs = brute_force_lcs(&a, &b);
        let edits = s.0.iter().filter(|op| **op != EditOp::Keep).count();
        ensure(edits == a.len() + b.len() - 2 * lcs && s.len() == a.len() + b.len() - lcs, || {
            format!("pair {i}: {edits} edits, {} ops, lcs {lcs}", s.len())
        })?;
    }
    within(Duration::from_secs(10), start)?;
    Ok("menu example verbatim; 1000 random pairs minimal and exact".into())
}

fn exhaustive<D: StepScorer>(scorer: &mut D, max_len: usize) -> (Vec<usize>, f64) {
    fn walk<D: StepScorer>(
        scorer: &mut D,
        state: &D::State,
        prefix: &mut Vec<usize>,
        score: f64,
        max_len: usize,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        let prev = prefix.last().copied().unwrap_or(BOS_ID);
        let (next, logp) = scorer.advance(state, prev).unwrap();
        for (t, &lp) in logp.iter().enumerate() {
            prefix.push(t);
            let s = score + lp;
            if t == EOS_ID || prefix.len() == max_len {
                let better = match best {
                    None => true,
                    Some((b, bs)) => s > *bs || (s == *bs && prefix.as_slice() < b.as_slice()),
                };
                if better {
                    *best = Some((prefix.clone(), s));
                }
            } else {
                walk(scorer, &next, prefix, s, max_len, best);
            }
            prefix.pop();
        }
    }
    let start = scorer.start().unwrap();
    let mut best = None;
    walk(scorer, &start, &mut Vec::new(), 0.0, max_len, &mut best);
    best.unwrap()
}

fn beam_optimality() -> Outcome {
    let start = Instant::now();
    let mut greedy_misses = 0;
    for seed in 0..100 {
        let (model, src) = random_toy_model(seed);
        let scorer = || ModelScorer::new(&model, &[&src], None).unwrap();
        let (tokens, score) = exhaustive(&mut scorer(), 4);
        let wide = beam_search(&mut scorer(), 256, 4).map_err(|e| e.to_string())?;
        ensure(wide.best.tokens == tokens && (wide.best.log_prob - score).abs() < 1e-12, || {
            format!("model {seed}: width 256 gave {:?}, optimum {tokens:?}", wide.best.tokens)
        })?;
        let greedy = greedy_translate(&model, &[&src], None, 4).map_err(|e| e.to_string())?;
        let narrow = beam_search(&mut scorer(), 1, 4).map_err(|e| e.to_string())?;
        ensure(narrow.best.output() == greedy.as_slice(), || format!("model {seed}: width 1 differs from greedy"))?;
        if narrow.best.tokens != tokens {
            greedy_misses += 1;
        }
        let mut last = f64::NEG_INFINITY;
        for width in [1, 2, 3, 4, 8, 16, 64, 256] {
            let s = beam_search(&mut scorer(), width, 4).map_err(|e| e.to_string())?.best.log_prob;
            ensure(s >= last - 1e-12, || format!("model {seed}: width {width} scored {s} after {last}"))?;
            last = s;
        }
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("100 models; greedy suboptimal on {greedy_misses}"))
}

fn metrics() -> Outcome {
    let start = Instant::now();
    let s = bleu(&[toks("a b c d e x")], &[vec![toks("a b c d e f")]]).map_err(|e| e.to_string())?;
    let expected = (5.0f64 / 6.0 * 4.0 / 5.0 * 3.0 / 4.0 * 2.0 / 3.0).powf(0.25);
    ensure(s.value == expected, || format!("BLEU {} vs {expected}", s.value))?;
    let s = bleu(&[toks("a a a a a")], &[vec![toks("a a b c d e")]]).map_err(|e| e.to_string())?;
    ensure(matches!(s.support, Support::Ngrams { matches: [2, 1, 0, 0], totals: [5, 4, 3, 2], .. }), || {
        format!("clipping gave {:?}", s.support)
    })?;
    let s = bleu(&[toks("a b c d")], &[vec![toks("a b c d e f g h")]]).map_err(|e| e.to_string())?;
    ensure(s.value == (-1.0f64).exp(), || format!("brevity penalty gave {}", s.value))?;

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let corpus: Vec<Vec<String>> = (0..50).map(|_| random_sentence(&mut rng, 30, 4, 15)).collect();
    let refs: Vec<Vec<Vec<String>>> = corpus.iter().map(|c| vec![c.clone()]).collect();
    let b = bleu(&corpus, &refs).map_err(|e| e.to_string())?.value;
    let t = hter_corpus(&corpus, &corpus).map_err(|e| e.to_string())?.value;
    ensure(b == 1.0 && t == 0.0, || format!("identical corpora: BLEU {b} TER {t}"))?;
    ensure(ter(&toks("c a b"), &[toks("a b c")]).map_err(|e| e.to_string())? == 1.0 / 3.0, || "TER of one shift".into())?;

    let (instances, mut mismatches, mut example) = (3000, 0, None);
    for _ in 0..instances {
        let vocab = rng.gen_range(2..=5);
        let r = random_sentence(&mut rng, vocab, 1, 6);
        let h = random_sentence(&mut rng, vocab, 0, 7);
        let greedy = ter_edits(&h, &r).map_err(|e| e.to_string())?.edits;
        let optimum = exhaustive_ter_edits(&h, &r);
        if greedy != optimum {
            mismatches += 1;
            example.get_or_insert_with(|| format!("hyp {:?} ref {:?}: greedy {greedy}, optimum {optimum}", h.join(" "), r.join(" ")));
        }
    }
    within(Duration::from_secs(60), start)?;
    ensure(mismatches == 0, || {
        format!("greedy-shift TER above the exhaustive optimum on {mismatches}/{instances} short instances, e.g. {}", example.unwrap_or_default())
    })?;
    Ok(format!("BLEU hand cases exact; greedy TER optimal on {instances} short instances"))
}

fn german() -> Outcome {
    let split_all = |s: &[String]| split_pronoun_endings(&split_contractions(s));
    for (surface, split) in [("am", "an dem"), ("zur", "zu der"), ("keinem", "kein -em"), ("unserer", "unser -er")] {
        ensure(split_all(&toks(surface)) == toks(split), || format!("{surface} did not split to {split}"))?;
        ensure(merge_german(&toks(split)) == toks(surface), || format!("{split} did not merge to {surface}"))?;
    }
    let table = SplitRuleTable::german();
    let plain = ["Haus", "mit", "und", ".", ",", "der", "Menü", "-"];
    let mut probe = Vec::new();
    for (i, (surface, _)) in table.rules().iter().enumerate() {
        probe.push(plain[i % plain.len()].to_string());
        probe.push(surface.clone());
    }
    let split = split_all(&probe);
    ensure(merge_german(&split) == probe, || "probe corpus does not roundtrip".into())?;
    let c = split_contractions(&probe);
    ensure(split_contractions(&c) == c, || "contraction split is not idempotent".into())?;
    let p = split_pronoun_endings(&probe);
    ensure(split_pronoun_endings(&p) == p, || "ending split is not idempotent".into())?;
    ensure(split_all(&split) == split, || "combined split is not idempotent".into())?;
    Ok(format!("{} rule forms roundtrip; both splits idempotent", table.rules().len()))
}

fn bitokens() -> Outcome {
    let start = Instant::now();
    let cases = [("cat", "Katze", "0-0", "Katze-cat"), ("is", "wird", "", "wird-NULL"), ("had", "hat gehabt", "0-0 0-1", "hat-had+gehabt-had")];
    for (s, t, a, want) in cases {
        let alignment = Alignment::parse(a).map_err(|e| e.to_string())?;
        let got = extract_bitokens(&toks(s), &toks(t), &alignment).map_err(|e| e.to_string())?;
        ensure(got == [want], || format!("{t}: {got:?}"))?;
    }

    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus: Vec<Vec<String>> = (0..200)
            .map(|_| {
                let regime = if rng.gen_bool(0.5) { "x" } else { "y" };
                (0..rng.gen_range(5..=10)).map(|_| format!("{regime}{}", rng.gen_range(1..=5))).collect()
            })
            .collect();
        let c = brown_cluster(&corpus, 2, 50, seed).map_err(|e| e.to_string())?;
        let tokens: Vec<String> = c.assignment().keys().cloned().collect();
        let truth: Vec<usize> = tokens.iter().map(|t| usize::from(t.starts_with('y'))).collect();
        let got: Vec<usize> = tokens.iter().map(|t| c.class_of(t).unwrap()).collect();
        let ami = adjusted_mutual_info(&truth, &got);
        ensure((ami - 1.0).abs() < 1e-9, || format!("planted corpus {seed}: AMI {ami}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for case in 0..30 {
        let corpus: Vec<Vec<String>> = (0..rng.gen_range(5..30)).map(|_| random_sentence(&mut rng, 12, 0, 10)).collect();
        let distinct = corpus.iter().flatten().collect::<BTreeSet<_>>().len();
        if distinct < 3 {
            continue;
        }
        let c = brown_cluster(&corpus, rng.gen_range(2..=distinct.min(5)), 100, case).map_err(|e| e.to_string())?;
        ensure(c.history.windows(2).all(|w| w[1] >= w[0] - 1e-12), || format!("case {case}: {:?}", c.history))?;
        let fresh = class_bigram_mi(&corpus, &c);
        ensure((fresh - c.history.last().unwrap()).abs() < 1e-9, || format!("case {case}: tracked objective drifted"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut worst_mass = 0.0f64;
    for order in 1..=4 {
        let train_set: Vec<Vec<String>> = (0..40).map(|_| random_sentence(&mut rng, 12, 0, 10)).collect();
        let probe: Vec<Vec<String>> = (0..20).map(|_| random_sentence(&mut rng, 15, 0, 10)).collect();
        let lm = train_class_lm(&train_set, order).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("lm{order}.arpa"));
        lm.save(&path).map_err(|e| e.to_string())?;
        let back = NgramLm::load(&path).map_err(|e| e.to_string())?;
        for s in &probe {
            let (a, b) = (lm.sentence_log10_prob(s), back.sentence_log10_prob(s));
            ensure((a - b).abs() < 1e-6, || format!("order {order}: ARPA reload {a} vs {b}"))?;
        }
        let vocab = lm.vocabulary();
        let mut histories = vec![vec![]];
        histories.extend(lm.contexts());
        histories.push(toks("never seen"));
        for h in histories {
            let mass: f64 = vocab.iter().map(|w| 10f64.powf(lm.log10_prob(&h, w))).sum();
            worst_mass = worst_mass.max((mass - 1.0).abs());
        }
    }
    ensure(worst_mass < 1e-9, || format!("probability mass off by {worst_mass:.2e}"))?;
    within(Duration::from_secs(120), start)?;
    Ok(format!("examples exact; AMI 1.0 on 10 planted corpora; mass within {worst_mass:.1e}"))
}

struct Triplets {
    src: PathBuf,
    mt: PathBuf,
    pe: PathBuf,
}

fn write_triplets(dir: &Path, name: &str, n: usize, seed: u64) -> Triplets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut m, mut p) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let len = rng.gen_range(2..7);
        s.push(random_sentence(&mut rng, 10, len, len));
        let mut mt = random_sentence(&mut rng, 10, len, len);
        if rng.gen_bool(0.3) {
            mt.insert(rng.gen_range(0..mt.len()), ",".into());
        }
        let mut pe: Vec<String> = mt.iter().filter(|_| !rng.gen_bool(0.1)).cloned().collect();
        pe.push(".".into());
        m.push(mt);
        p.push(pe);
    }
    let t = Triplets {
        src: dir.join(format!("{name}.src")),
        mt: dir.join(format!("{name}.mt")),
        pe: dir.join(format!("{name}.pe")),
    };
    write_corpus(&t.src, &s).unwrap();
    write_corpus(&t.mt, &m).unwrap();
    write_corpus(&t.pe, &p).unwrap();
    t
}

fn ape_spec(t: &Triplets) -> DatasetSpec {
    DatasetSpec {
        task: TaskKind::Ape,
        sources: vec![t.src.clone(), t.mt.clone()],
        target: Some(t.pe.clone()),
        images: None,
        split_german: false,
    }
}

fn ape_identity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for seed in 0..5 {
        let t = write_triplets(dir.path(), &format!("set{seed}"), 100, 800 + seed);
        let mt = read_corpus(&t.mt).map_err(|e| e.to_string())?;
        let pe = read_corpus(&t.pe).map_err(|e| e.to_string())?;
        let scripts: Vec<EditScript> = mt.iter().map(|m| EditScript(vec![EditOp::Keep; m.len()])).collect();
        let out = ape_apply(&mt, &scripts, false).map_err(|e| e.to_string())?;
        for (o, m) in out.iter().zip(&mt) {
            ensure(o == &fix_punctuation(m, Some(m)), || format!("set {seed}: {o:?} from {m:?}"))?;
        }
        let baseline = hter_corpus(&mt, &pe).map_err(|e| e.to_string())?.value;
        let got = hter_corpus(&out, &pe).map_err(|e| e.to_string())?.value;
        ensure(got == baseline, || format!("set {seed}: HTER {got} vs baseline {baseline}"))?;
    }
    Ok("5 synthetic sets; output equals MT and HTER equals the baseline".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = write_triplets(dir.path(), "train", 200, 900);
    let v = write_triplets(dir.path(), "valid", 20, 901);
    let shape = ModelShape { embedding_dim: 8, hidden_dim: 12, dropout: 0.2, l2: 1e-6, init_range: 0.1 };
    let run = |name: &str| -> Result<_, String> {
        let config = TrainConfig {
            batch_size: 8,
            max_steps: Some(200),
            valid_interval: 50,
            seed: 5,
            beam: 3,
            max_len: 12,
            out_dir: dir.path().join(name),
            ..TrainConfig::default()
        };
        let out = train(&ape_spec(&t), Some(&ape_spec(&v)), &shape, &config).map_err(|e| e.to_string())?;
        let hyps = translate(&out.best_checkpoint, &ape_spec(&v), 3, 12).map_err(|e| e.to_string())?;
        let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
        Ok((out.steps, read(&out.log_path)?, read(&out.best_checkpoint)?, read(&out.last_checkpoint)?, hyps))
    };
    let a = run("a")?;
    let b = run("b")?;
    ensure(a.0 == 200, || format!("trained {} steps", a.0))?;
    ensure(a.1 == b.1, || "logs differ".into())?;
    ensure(a.2 == b.2 && a.3 == b.3, || "checkpoints differ".into())?;
    ensure(a.4 == b.4, || "outputs differ".into())?;
    Ok(format!("200 steps twice: log, {} checkpoint bytes and {} outputs identical", a.3.len(), a.4.len()))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", gradients),
        ("memorization", memorization),
        ("edit-script exactness", edit_scripts),
        ("beam-search optimality", beam_optimality),
        ("metric oracles", metrics),
        ("German processing", german),
        ("bitokens and clustering", bitokens),
        ("APE identity baseline", ape_identity),
        ("determinism", determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
