//! Acceptance checks. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails. Run with `cargo test --test acceptance -- --nocapture`.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemamatch_core::eval::*;
use schemamatch_core::filters::{double_rag, ner_filter, CompressedChoices};
use schemamatch_core::ner::Labeler;
use schemamatch_core::prompt::{build_prompt, PromptBudget, PromptTemplate, DEFAULT_LAYOUT};
use schemamatch_core::session::replay;
use schemamatch_core::similarity::{bigram_jaccard, embedding_cosine, sorensen_dice};
use schemamatch_core::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(detail) => println!("PASS  {name}: {detail} ({secs:.2}s)"),
        Err(why) => println!("FAIL  {name}: {why} ({secs:.2}s)"),
    }
    outcome.is_ok()
}

fn filter_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    let seeds: Vec<u64> = (0..1000).collect();
    let failures: Vec<String> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(seeds.len().div_ceil(workers))
            .map(|chunk| {
                s.spawn(move || {
                    let mut bad = Vec::new();
                    for &seed in chunk {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let n = rng.random_range(1..=200);
                        let m = rng.random_range(0..=10);
                        let ot = random_object_type(&mut rng, n, m);
                        let opts = OptionDatabase::from_object_type(&ot);
                        let ex = ExampleDatabase::from_object_type(&ot);
                        let q = random_query(&mut rng);
                        let k1 = rng.random_range(0..=n + 2);
                        let k2 = rng.random_range(0..=m + 1);
                        let measures = [
                            SimilarityMeasure::jaccard(),
                            SimilarityMeasure::dice(),
                            SimilarityMeasure::embedding(random_vectors(&mut rng)),
                        ];
                        for measure in &measures {
                            let got = flatten(&double_rag(&opts, &ex, &q, measure, k1, k2));
                            if got != sort_oracle(&opts, &ex, &q, measure, k1, k2) {
                                bad.push(format!("seed {seed} {:?}", measure.kind()));
                            }
                        }
                    }
                    bad
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let secs = start.elapsed().as_secs_f64();
    ensure(failures.is_empty(), || {
        format!("{} mismatches, first {}", failures.len(), failures[0])
    })?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok("1000 databases x 3 measures match the sort oracle".into())
}

fn ner_filter_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..1000 {
        let n = rng.random_range(0..=60);
        let opts = OptionDatabase::from_object_type(&random_object_type(&mut rng, n, 2));
        let q = random_query(&mut rng);
        let out = ner_filter(&opts, &q);
        let ids: Vec<String> = out.options.options.iter().map(|o| o.attribute_id.clone()).collect();
        ensure((ids, out.bypassed) == ner_comprehension(&opts, &q), || {
            format!("trial {trial} differs")
        })?;
    }
    let p = profile_pipeline();
    let q = p.query(&SourceColumn::new("contact_name", vec!["Amazon.com Inc.".into()]));
    let opts = OptionDatabase::from_object_type(&p.schema()[0]);
    let out = ner_filter(&opts, &q);
    let kept: Vec<&str> = out.options.options.iter().map(|o| o.attribute_id.as_str()).collect();
    ensure(
        opts.len() == 15 && kept == ["Account", "BusinessName"] && !out.bypassed,
        || format!("contact_name kept {kept:?} of {}", opts.len()),
    )?;
    Ok("1000 random fixtures equal the set comprehension; contact_name 15 -> {Account, BusinessName}".into())
}

fn similarity_ground_truth() -> Outcome {
    ensure(bigram_jaccard("phone", "tel") == 0.0, || {
        "jaccard(phone, tel) != 0".into()
    })?;
    ensure(sorensen_dice("night", "nacht") == 0.25, || {
        "dice(night, nacht) != 0.25".into()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let alphabet: Vec<char> = "abcdeno_ ".chars().collect();
    for _ in 0..10_000 {
        let word = |rng: &mut ChaCha8Rng| -> String {
            (0..rng.random_range(0..8))
                .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                .collect()
        };
        let (x, y) = (word(&mut rng), word(&mut rng));
        let (j, d) = (bigram_jaccard(&x, &y), sorensen_dice(&x, &y));
        ensure((d - 2.0 * j / (1.0 + j)).abs() < 1e-12, || {
            format!("identity fails on {x:?} {y:?}")
        })?;
    }
    let glove = match std::env::var("GLOVE_PATH") {
        Ok(path) => {
            let vocab: HashSet<String> = ["phone", "tel"].iter().map(|s| s.to_string()).collect();
            let table = WordVectorTable::load_filtered(&path, &vocab).map_err(|e| e.to_string())?;
            let raw = embedding_cosine("phone", "tel", &table)
                .raw_cosine
                .ok_or("phone/tel out of vocabulary")?;
            ensure((raw - 0.50).abs() <= 0.05, || {
                format!("glove cosine(phone, tel) = {raw:.3}")
            })?;
            format!("glove cosine(phone, tel) = {raw:.3}")
        }
        Err(_) => "glove check skipped (GLOVE_PATH unset)".into(),
    };
    Ok(format!(
        "fixed values exact; Dice-Jaccard identity on 10000 pairs; {glove}"
    ))
}

/// Object type whose prompt lines have fixed widths: option lines are three
/// tokens, example lines five.
fn arithmetic_fixture() -> ObjectType {
    ObjectType {
        name: "Fixture".into(),
        description: String::new(),
        attributes: (0..15)
            .map(|i| TargetAttribute {
                id: format!("A{i}"),
                name: format!("attr {i}"),
                dtype: DataType::String,
                entity_label: EntityLabel::FreeText,
                aliases: (0..3).map(|j| format!("ex{i} v{j}")).collect(),
                node_path: vec![],
            })
            .collect(),
    }
}

fn prompt_arithmetic() -> Outcome {
    let full = PromptBudget::from_components(40, 15, 3.0, 3.0, 5.0);
    let compressed = PromptBudget::from_components(40, 4, 3.0, 1.0, 5.0);
    ensure(full.l_input == 310 && compressed.l_input == 72, || {
        format!("got {} and {}", full.l_input, compressed.l_input)
    })?;
    let reduction = 1.0 - compressed.l_input as f64 / full.l_input as f64;
    ensure(reduction >= 0.75, || format!("reduction {reduction:.3}"))?;

    // Rendered prompts: 35 instruction words + three headers + "q =>".
    let instruction = vec!["word"; 34].join(" ") + " {n}";
    let template = PromptTemplate::new(DEFAULT_LAYOUT, instruction).map_err(|e| e.to_string())?;
    let ot = arithmetic_fixture();
    let (opts, ex) = (
        OptionDatabase::from_object_type(&ot),
        ExampleDatabase::from_object_type(&ot),
    );
    let q = filters::ColumnQuery {
        name: "q".into(),
        samples: vec![],
        dtype: DataType::String,
        verdict: ner::LabelVerdict::free_text(),
    };
    let mut measured = Vec::new();
    for c in [
        CompressedChoices::full(&opts, &ex),
        double_rag(&opts, &ex, &q, &SimilarityMeasure::dice(), 4, 1),
    ] {
        let (_, b) = build_prompt(&c, &q, &template).map_err(|e| e.to_string())?;
        ensure((b.exact_tokens as f64 - b.reconstruction()).abs() <= b.n as f64, || {
            format!("measured {} vs reconstruction {}", b.exact_tokens, b.reconstruction())
        })?;
        measured.push((b.l_instruct, b.exact_tokens));
    }
    ensure(measured == [(40, 310), (40, 72)], || {
        format!("rendered (L_instruct, tokens) {measured:?}")
    })?;
    Ok(format!(
        "310 -> 72 ({:.1}% reduction); rendered prompts measure 310 and 72",
        reduction * 100.0
    ))
}

fn end_to_end_determinism() -> Outcome {
    let p = demo_pipeline();
    let cols = wide_table();
    ensure(cols.len() == 50, || format!("fixture has {} columns", cols.len()))?;
    let a = p.run(&cols).map_err(|e| e.to_string())?;
    let b = p.run(&cols).map_err(|e| e.to_string())?;
    ensure(a.content() == b.content(), || "two runs differ".into())?;
    let sources: Vec<&str> = a.mappings.iter().map(|m| m.source.as_str()).collect();
    let names: Vec<&str> = cols.iter().map(|c| c.name.as_str()).collect();
    ensure(sources == names, || {
        "mappings are not one per column in input order".into()
    })?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = SessionStore::open(dir.path()).map_err(|e| e.to_string())?;
    store.save(&a).map_err(|e| e.to_string())?;
    for (col, attr) in [("acct", "Account"), ("notes", "Description"), ("acct", "BusinessName")] {
        let ot = a.mapping(col).ok_or("missing column")?.object_type.clone();
        let valid = p
            .schema()
            .iter()
            .find(|o| o.name == ot)
            .and_then(|o| o.attribute(attr))
            .is_some();
        if valid {
            store
                .apply_correction(&a.id, col, attr, p.schema())
                .map_err(|e| e.to_string())?;
        }
    }
    let reloaded = store.load(&a.id).map_err(|e| e.to_string())?;
    ensure(!reloaded.corrections.is_empty(), || "no corrections applied".into())?;
    ensure(
        replay(&reloaded.machine_mappings, &reloaded.corrections) == reloaded.mappings,
        || "replay does not reproduce the stored state".into(),
    )?;
    ensure(reloaded.machine_mappings == a.mappings, || {
        "machine output changed on disk".into()
    })?;
    Ok(format!(
        "50 columns, identical sessions, replay of {} corrections matches",
        reloaded.corrections.len()
    ))
}

fn throughput() -> Outcome {
    let p = demo_pipeline();
    let cols = wide_table();
    let start = Instant::now();
    let session = p.run(&cols).map_err(|e| e.to_string())?;
    let run_rate = cols.len() as f64 / start.elapsed().as_secs_f64();
    ensure(run_rate >= 10.0, || format!("pipeline run at {run_rate:.1} columns/s"))?;

    let mean = |f: &dyn Fn(&session::LedgerEntry) -> usize| {
        session.ledger.iter().map(f).sum::<usize>() as f64 / session.ledger.len() as f64
    };
    let (on, off) = (mean(&|l| l.filtered.l_input), mean(&|l| l.unfiltered.l_input));
    ensure(on < off, || {
        format!("table run: filtered {on:.1} vs unfiltered {off:.1}")
    })?;

    let corpora = generate_default_corpora(p.schema(), 2024, 0.25, p.labeler());
    let mut slowest = f64::INFINITY;
    for corpus in &corpora {
        let with = measure_throughput(std::slice::from_ref(corpus), &p, FilterConfig::default());
        let without = measure_throughput(std::slice::from_ref(corpus), &p, FilterConfig::none());
        ensure(with.mean_l_input < without.mean_l_input, || {
            format!(
                "{}: filtered {:.1} vs unfiltered {:.1}",
                corpus.domain, with.mean_l_input, without.mean_l_input
            )
        })?;
        slowest = slowest.min(with.columns_per_sec);
    }
    ensure(slowest >= 10.0, || format!("corpus run at {slowest:.1} columns/s"))?;
    Ok(format!(
        "{run_rate:.0} columns/s end to end, >= {slowest:.0} columns/s per corpus; mean L_input {on:.1} vs {off:.1}"
    ))
}

fn oracle_accuracy() -> Outcome {
    let p = demo_pipeline();
    let perfect: Vec<LabeledCorpus> = DOMAINS
        .iter()
        .map(|d| perfect_alias_corpus(p.schema(), d.domain, d.object_type, p.labeler()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let row = eval_matcher(&perfect, &p, &MatcherSpec::Pipeline { filters: p.filters() });
    ensure(row.average == 100.0, || {
        format!("perfect-alias accuracy {:.2}%", row.average)
    })?;

    let profile = profile_pipeline();
    let mixed = LabeledCorpus::load(fixture("mixed20.json")).map_err(|e| e.to_string())?;
    let m = eval_matcher(
        std::slice::from_ref(&mixed),
        &profile,
        &MatcherSpec::Pipeline {
            filters: FilterConfig::none(),
        },
    );
    let correct = m.cases.iter().filter(|c| c.correct).count();
    ensure(correct == 17, || format!("mixed fixture {correct}/20"))?;

    let corpora = generate_default_corpora(p.schema(), 1, 0.05, p.labeler());
    let ablation_report = ablation(&corpora, &p, &standard_arms(p.filters()));
    let sweep = sweep_kshot(&corpora, &p, &[0, 1, 2, 3]);
    let prefix = prefix_robustness(&corpora, &p, &MatcherSpec::Pipeline { filters: p.filters() }, "cust_");
    ensure(ablation_report.rows.len() == 4 && sweep.rows.len() == 4, || {
        "missing arms".into()
    })?;
    Ok(format!(
        "perfect-alias 100%, mixed 17/20; ablation and k-shot arms emitted; prefix delta {:+.2} points",
        prefix.delta
    ))
}

fn labeler_suite() -> Outcome {
    let labeler = Labeler::default();
    let exemplars = [
        ("xyz@gmail.com", EntityLabel::Email),
        ("https://www.google.com", EntityLabel::URL),
        ("2001-03-14T19:43:01.342998", EntityLabel::Timestamps),
        ("1989-02-27", EntityLabel::Dates),
        ("Amazon.com Inc.", EntityLabel::BusinessName),
        ("Amazon.com inc.", EntityLabel::BusinessName),
        ("(206) 555-0100", EntityLabel::PhoneNumber),
        ("98101", EntityLabel::ZipPostalCode),
        ("12.29$", EntityLabel::Prices),
        ("JPY", EntityLabel::Currencies),
        ("2lbs", EntityLabel::WeightsUnits),
        ("Female", EntityLabel::Gender),
        ("Washington", EntityLabel::ProvinceState),
        ("Canada", EntityLabel::Country),
        ("Seattle", EntityLabel::City),
        ("410 Terry Ave N", EntityLabel::AddressLine),
        ("Mary J. Smith", EntityLabel::FullName),
        ("Jennifer", EntityLabel::FirstName),
        ("Nguyen", EntityLabel::LastName),
        ("J.", EntityLabel::MiddleName),
        ("4111 1111 1111 1111", EntityLabel::CreditCardNumber),
        ("Apple Iphone 13 pro 128GB", EntityLabel::ProductName),
        ("", EntityLabel::FreeText),
    ];
    for (v, expected) in exemplars {
        let got = labeler.label_value(v);
        ensure(got == expected, || {
            format!("{v:?} labeled {got:?}, expected {expected:?}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..1000 {
        let (value, _) = exemplars[rng.random_range(0..exemplars.len() - 1)];
        let k = rng.random_range(1..=6);
        let mut samples = vec![value.to_string(); k];
        let expected = labeler.label_column(&SourceColumn::new("c", samples.clone()), k).label;
        let injections = rng.random_range(0..=(k / 2).saturating_sub(1));
        for _ in 0..injections {
            let i = rng.random_range(0..k);
            samples[i] = String::new();
        }
        let got = labeler.label_column(&SourceColumn::new("c", samples.clone()), k).label;
        ensure(got == expected, || format!("trial {trial}: {samples:?} -> {got:?}"))?;
    }
    Ok(format!(
        "{} reference values; 1000 noise trials stable",
        exemplars.len()
    ))
}

#[test]
fn acceptance() {
    println!();
    let results = [
        run("filter oracle equivalence", filter_oracle_equivalence),
        run("entity filter fidelity", ner_filter_fidelity),
        run("similarity ground truth", similarity_ground_truth),
        run("prompt compression arithmetic", prompt_arithmetic),
        run("end-to-end determinism", end_to_end_determinism),
        run("throughput", throughput),
        run("oracle accuracy substitutes", oracle_accuracy),
        run("labeler suite", labeler_suite),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
