//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semred_core::datagen::corpus::generate_corpus;
use semred_core::datagen::{read_dataset, training_pairs, write_jsonl};
use semred_core::forest::TreeNode;
use semred_core::metrics::aggregate;
use semred_core::reducer::models::{Constant, FromFn, GroundTruth};
use semred_core::reducer::Query;
use semred_core::{
    collect, confusion, extract, load_grammar, parse, reduce_baseline, reduce_guided, reduce_study, split, summarize,
    FeatureMode, FeatureVector, Forest, ForestParams, Grammar, IssueCode, LabelPolicy, OutcomeKind, Reduction,
    RemovalModel, SyntaxTree,
};

const CORPUS_SEED: u64 = 2024;

fn outline(r: &Reduction) -> Vec<(u32, Option<OutcomeKind>, usize)> {
    r.trace
        .iter()
        .map(|t| (t.node, t.oracle_outcome.as_ref().map(|o| o.kind), t.tokens_after))
        .collect()
}

fn degeneracy() -> String {
    let corpus = cases(50, CORPUS_SEED);
    for case in &corpus {
        let base = reduce_baseline(&case.tree, &mut case.oracle()).unwrap();
        let guided = reduce_guided(&case.tree, &mut case.oracle(), &Constant(true), FeatureMode::Type).unwrap();
        assert_eq!(outline(&base), outline(&guided), "{}", case.name);
        assert_eq!(base.tree.print(), guided.tree.print(), "{}", case.name);
    }
    format!("{} programs, identical traces and outputs", corpus.len())
}

fn perfect_model() -> String {
    let corpus = cases(50, CORPUS_SEED);
    let (mut base_q, mut guided_q, mut fails) = (0, 0, 0);
    for case in &corpus {
        let base = reduce_baseline(&case.tree, &mut case.oracle()).unwrap();
        let guided = reduce_guided(
            &case.tree,
            &mut case.oracle(),
            &GroundTruth(checker()),
            FeatureMode::Type,
        )
        .unwrap();
        let semantic_fails = base
            .trace
            .iter()
            .filter(|t| t.oracle_outcome.as_ref().unwrap().kind == OutcomeKind::SemanticFail)
            .count();
        assert_eq!(base.tree.print(), guided.tree.print(), "{}", case.name);
        assert_eq!(
            guided.oracle_queries(),
            base.oracle_queries() - semantic_fails,
            "{}",
            case.name
        );
        base_q += base.oracle_queries();
        guided_q += guided.oracle_queries();
        fails += semantic_fails;
    }
    format!("baseline {base_q} queries, guided {guided_q} = {base_q} - {fails} semantic failures")
}

fn query_accounting() -> String {
    let mut traces = 0;
    for round in 0..4u64 {
        let corpus = cases(20, 500 + round);
        let mut rng = ChaCha8Rng::seed_from_u64(round);
        let p: f64 = rng.gen_range(0.1..0.9);
        let salt: u64 = rng.gen();
        let model = FromFn(move |q: &Query<'_>| {
            let mut r = ChaCha8Rng::seed_from_u64(salt ^ u64::from(q.node) ^ ((q.tree.token_count() as u64) << 32));
            r.gen_bool(p)
        });
        for case in &corpus {
            let r = reduce_guided(&case.tree, &mut case.oracle(), &model, FeatureMode::Children).unwrap();
            let yes = r.trace.iter().filter(|t| t.prediction == Some(true)).count();
            let no = r.trace.iter().filter(|t| t.prediction == Some(false)).count();
            assert_eq!(r.oracle_queries(), yes);
            assert_eq!(r.skipped(), no);
            assert_eq!(r.trace.len(), yes + no);
            traces += 1;
        }
    }
    format!("{traces} guided traces under random stub models")
}

fn rule_names(t: &SyntaxTree, bits: &[u32]) -> BTreeSet<String> {
    let g = t.grammar();
    (0..bits.len())
        .filter(|&i| bits[i] == 1)
        .map(|i| {
            if i == g.rule_count() {
                "<terminal>".into()
            } else {
                g.rule_name(i as u32).to_string()
            }
        })
        .collect()
}

fn feature_correctness() -> String {
    let t = sample();
    let s = sample_nodes(&t);
    let want = |names: &[&str]| names.iter().map(|n| n.to_string()).collect::<BTreeSet<_>>();
    assert_eq!(
        rule_names(&t, &extract(&t, s.block_item, FeatureMode::Children).unwrap().values),
        want(&[
            "declaration",
            "assignment_expression",
            "expression_statement",
            "jump_statement"
        ])
    );
    assert_eq!(
        rule_names(&t, &extract(&t, s.block_item, FeatureMode::Path).unwrap().values),
        want(&[
            "block_item",
            "compound_statement",
            "function_definition",
            "compilation_unit"
        ])
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for file in generate_corpus(200, 4) {
        if checked == 1000 {
            break;
        }
        let t = tree(&file.source);
        let g = t.grammar();
        let (r, terminal) = (g.rule_count(), g.terminal_id());
        let ids: Vec<u32> = t.nodes().map(|n| n.id).collect();
        for &id in ids.choose_multiple(&mut rng, 10) {
            if checked == 1000 {
                break;
            }
            let children: BTreeSet<usize> = t
                .node(id)
                .unwrap()
                .children
                .iter()
                .map(|&c| t.node(c).unwrap().rule)
                .map(|rule| if rule == terminal { r } else { rule as usize })
                .collect();
            let mut path = BTreeSet::new();
            let mut cur = Some(id);
            while let Some(n) = cur {
                let node = t.node(n).unwrap();
                if node.rule != terminal {
                    path.insert(node.rule as usize);
                }
                cur = node.parent;
            }
            let bits = |v: Vec<u32>| (0..v.len()).filter(|&i| v[i] == 1).collect::<BTreeSet<usize>>();
            assert_eq!(bits(extract(&t, id, FeatureMode::Children).unwrap().values), children);
            assert_eq!(bits(extract(&t, id, FeatureMode::Path).unwrap().values), path);
            checked += 1;
        }
    }
    assert_eq!(checked, 1000);
    format!("sample sets exact, {checked} random nodes match brute force")
}

fn forest_correctness() -> String {
    // (a) hand-built forest against per-tree path evaluation and majority.
    let leaf = |yes: bool| TreeNode::Leaf {
        counts: if yes { [0, 2] } else { [2, 0] },
    };
    let node = |feat, thr, l, r| TreeNode::Split {
        feat,
        thr,
        left: Box::new(l),
        right: Box::new(r),
    };
    let hand = Forest {
        mode: FeatureMode::Children,
        grammar_hash: "h".into(),
        params: ForestParams::default(),
        n_features: 2,
        trees: vec![
            node(0, 0.5, leaf(false), leaf(true)),
            node(1, 1.5, leaf(true), leaf(false)),
            node(0, 1.5, node(1, 0.5, leaf(false), leaf(true)), leaf(true)),
        ],
    };
    let fv = |values: Vec<u32>| FeatureVector {
        mode: FeatureMode::Children,
        values,
    };
    // x -> per-tree votes, worked out by hand.
    let table = [
        ([0, 0], [false, true, false]),
        ([1, 0], [true, true, false]),
        ([0, 2], [false, false, true]),
        ([2, 2], [true, false, true]),
        ([1, 1], [true, true, true]),
    ];
    for (x, votes) in table {
        assert_eq!(hand.votes(&fv(x.to_vec())).unwrap(), votes.to_vec());
        let yes = votes.iter().filter(|&&v| v).count();
        assert_eq!(hand.predict(&fv(x.to_vec())).unwrap(), 2 * yes >= 3);
    }

    // (b) determinism and (c) holdout accuracy on a threshold dataset.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data: Vec<(FeatureVector, bool)> = (0..1000)
        .map(|_| {
            let x: Vec<u32> = (0..6).map(|_| rng.gen_range(0..30)).collect();
            let y = x[0] > 14;
            (fv(x), y)
        })
        .collect();
    let (train, test) = split(&data, 0.8, 1);
    let params = ForestParams::with_seed(6);
    let a = Forest::train(&train, &params, "h").unwrap();
    let b = Forest::train(&train, &params, "h").unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let correct = test.iter().filter(|(x, y)| a.predict(x).unwrap() == *y).count();
    let accuracy = correct as f64 / test.len() as f64;
    assert!(accuracy >= 0.99, "holdout accuracy {accuracy}");
    format!("hand forest exact, bytes identical, holdout accuracy {accuracy:.3}")
}

struct EndToEnd {
    baseline_size: usize,
    guided_size: usize,
    skipped: usize,
    micro_precision: f64,
    micro_recall: f64,
}

fn end_to_end(policy: LabelPolicy) -> EndToEnd {
    let g = grammar();
    let data = collect(&generate_corpus(200, 1), &g, FeatureMode::Type, 7).unwrap();
    let forest = Forest::train(&training_pairs(&data, policy), &ForestParams::with_seed(3), g.hash()).unwrap();
    let mut out = EndToEnd {
        baseline_size: 0,
        guided_size: 0,
        skipped: 0,
        micro_precision: 0.0,
        micro_recall: 0.0,
    };
    let mut reports = Vec::new();
    // Corpus seed 2 shares no program with the training corpus (checked below).
    let train_sources: BTreeSet<String> = generate_corpus(200, 1).into_iter().map(|f| f.source).collect();
    for case in cases(50, 2) {
        assert!(!train_sources.contains(&case.tree.print()));
        let base = reduce_baseline(&case.tree, &mut case.oracle()).unwrap();
        let guided = reduce_guided(&case.tree, &mut case.oracle(), &forest, FeatureMode::Type).unwrap();
        let study = reduce_study(&case.tree, &mut case.oracle(), &forest, FeatureMode::Type).unwrap();
        out.baseline_size += base.tree.token_count();
        out.guided_size += guided.tree.token_count();
        out.skipped += guided.skipped();
        reports.push(summarize(&case.name, &study.trace, None));
    }
    let agg = aggregate(&reports);
    out.micro_precision = agg.micro_precision.unwrap_or(0.0);
    out.micro_recall = agg.micro_recall.unwrap_or(0.0);
    out
}

fn learning_effect() -> String {
    let started = Instant::now();
    let e = end_to_end(LabelPolicy::Semantic);
    let growth = e.guided_size as f64 / e.baseline_size as f64 - 1.0;
    let line = format!(
        "semantic labels: skipped {}, size {} vs baseline {} ({:+.1}%), precision {:.3}, recall {:.3}, {:.1}s",
        e.skipped,
        e.guided_size,
        e.baseline_size,
        100.0 * growth,
        e.micro_precision,
        e.micro_recall,
        started.elapsed().as_secs_f64()
    );
    assert!(e.skipped > 0, "{line}");
    assert!(growth.abs() <= 0.25, "{line}");
    assert!(e.micro_precision >= 0.60 && e.micro_recall >= 0.60, "{line}");

    // For reference only: the same run trained on the collection oracle's labels.
    let o = end_to_end(LabelPolicy::Oracle);
    println!(
        "INFO criterion 6 with oracle labels: skipped {}, size {} vs baseline {} ({:+.1}%), precision {:.3}, recall {:.3}",
        o.skipped,
        o.guided_size,
        o.baseline_size,
        100.0 * (o.guided_size as f64 / o.baseline_size as f64 - 1.0),
        o.micro_precision,
        o.micro_recall
    );
    line
}

fn recount(jsonl: &str) -> [usize; 6] {
    let mut counts = [0; 6];
    for line in jsonl.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let slot = match (
            v["prediction"].as_bool().unwrap(),
            v["oracle_outcome"]["kind"].as_str().unwrap(),
        ) {
            (false, "SemanticFail") => 0,
            (true, "Passed") => 1,
            (true, "NonSemanticFail") => 2,
            (true, "SemanticFail") => 3,
            (false, "Passed") => 4,
            (false, "NonSemanticFail") => 5,
            other => panic!("unexpected {other:?}"),
        };
        counts[slot] += 1;
    }
    counts
}

fn metric_integrity() -> String {
    let g = grammar();
    let data = collect(&generate_corpus(40, 8), &g, FeatureMode::Children, 8).unwrap();
    let forest = Forest::train(
        &training_pairs(&data, LabelPolicy::Oracle),
        &ForestParams {
            n_trees: 20,
            ..ForestParams::with_seed(8)
        },
        g.hash(),
    )
    .unwrap();
    assert_eq!(RemovalModel::feature_mode(&forest), Some(FeatureMode::Children));
    let dir = tempfile::tempdir().unwrap();
    let mut trials = 0;
    for (i, case) in cases(30, 9).iter().enumerate() {
        let r = reduce_study(&case.tree, &mut case.oracle(), &forest, FeatureMode::Children).unwrap();
        let path = dir.path().join(format!("{i}.jsonl"));
        write_jsonl(&r.trace, &path).unwrap();
        let c = confusion(&r.trace).unwrap();
        let got: Vec<usize> = c.buckets().iter().map(|(_, n)| *n).collect();
        assert_eq!(
            got,
            recount(&std::fs::read_to_string(&path).unwrap()).to_vec(),
            "{}",
            case.name
        );
        assert_eq!(got.iter().sum::<usize>(), r.trace.len());
        trials += r.trace.len();
    }
    format!("{trials} study trials, six buckets match the recount and partition every trace")
}

fn checker_ground_truth() -> String {
    let c = checker();
    for (src, expected) in ISSUE_TABLE {
        let got: Vec<(IssueCode, String)> = c.check(&tree(src)).into_iter().map(|i| (i.code, i.subject)).collect();
        let want: Vec<(IssueCode, String)> = expected.iter().map(|(k, s)| (*k, s.to_string())).collect();
        assert_eq!(got, want, "{src}");
    }
    let t = sample();
    let s = sample_nodes(&t);
    let broken = t.remove(s.declaration).unwrap();
    let found = c.check(&broken);
    assert_eq!(found.len(), 1);
    assert_eq!(
        (found[0].code, found[0].subject.as_str()),
        (IssueCode::UndeclaredIdentifier, "s1")
    );
    assert!(!c.is_valid(&t.remove(s.struct_decl).unwrap()));
    let codes: BTreeSet<IssueCode> = ISSUE_TABLE
        .iter()
        .flat_map(|(_, e)| e.iter().map(|(k, _)| *k))
        .collect();
    assert_eq!(codes.len(), IssueCode::ALL.len());
    format!(
        "{} programs, all {} issue codes covered",
        ISSUE_TABLE.len(),
        codes.len()
    )
}

fn round_trips() -> String {
    let dir = tempfile::tempdir().unwrap();
    let gpath = dir.path().join("mini_c.json");
    std::fs::write(&gpath, Grammar::mini_c_source()).unwrap();
    let g1 = load_grammar(&gpath).unwrap();
    let g2 = load_grammar(&gpath).unwrap();
    assert_eq!(g1.hash(), g2.hash());
    assert_eq!(format!("{:?}", g1.rules()), format!("{:?}", g2.rules()));
    assert_eq!(g1.hash(), Grammar::mini_c().hash());
    let a = parse(&std::sync::Arc::new(g1), SAMPLE).unwrap();
    let b = parse(&std::sync::Arc::new(g2), SAMPLE).unwrap();
    assert_eq!(
        serde_json::to_string(&a.to_json()).unwrap(),
        serde_json::to_string(&b.to_json()).unwrap()
    );

    let g = grammar();
    let data = collect(&generate_corpus(5, 3), &g, FeatureMode::TypeChildrenPath, 3).unwrap();
    let dpath = dir.path().join("data.jsonl");
    write_jsonl(&data, &dpath).unwrap();
    let back = read_dataset(&dpath, Some(&g)).unwrap();
    assert_eq!(back, data);
    let dpath2 = dir.path().join("data2.jsonl");
    write_jsonl(&back, &dpath2).unwrap();
    assert_eq!(std::fs::read(&dpath).unwrap(), std::fs::read(&dpath2).unwrap());

    let forest = Forest::train(
        &training_pairs(&data, LabelPolicy::Oracle),
        &ForestParams {
            n_trees: 10,
            ..ForestParams::with_seed(1)
        },
        g.hash(),
    )
    .unwrap();
    let mpath = dir.path().join("model.json");
    forest.save(&mpath).unwrap();
    let loaded = Forest::load(&mpath, Some(g.hash())).unwrap();
    assert_eq!(loaded, forest);
    let mpath2 = dir.path().join("model2.json");
    loaded.save(&mpath2).unwrap();
    assert_eq!(std::fs::read(&mpath).unwrap(), std::fs::read(&mpath2).unwrap());
    format!(
        "grammar, {} datapoints and a {}-tree model round-trip bit-exactly",
        data.len(),
        forest.trees.len()
    )
}

type Criterion = (&'static str, fn() -> String);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 always-true model degenerates to baseline", degeneracy),
        ("2 perfect model equals baseline minus semantic failures", perfect_model),
        ("3 guided query accounting", query_accounting),
        ("4 feature correctness", feature_correctness),
        ("5 forest correctness", forest_correctness),
        ("6 end-to-end learning effect", learning_effect),
        ("7 metric integrity", metric_integrity),
        ("8 semantic checker ground truth", checker_ground_truth),
        ("9 round trips", round_trips),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(detail) => println!(
                "PASS criterion {name}: {detail} [{:.1}s]",
                started.elapsed().as_secs_f64()
            ),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL criterion {name}: {}", msg.replace('\n', " "));
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
