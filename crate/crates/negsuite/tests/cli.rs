use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SCENES: &str = r#"{"id":"s1","positives":["cat","sofa"],"captions":["A cat sleeps on a sofa."]}
{"id":"s2","positives":["dog","ball"],"negatives":["cat","hat"],"captions":["A dog chases a ball."]}
{"id":"s3","positives":["cat","ball"],"captions":["A cat with a ball.","A ball next to a cat."]}
{"id":"s4","positives":["dog","sofa"],"captions":["A dog on a sofa."]}
"#;

fn negsuite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negsuite")).args(args).env_remove("NEGSUITE_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

struct Work(TempDir);

impl Work {
    fn new() -> Self {
        let w = Work(tempfile::tempdir().unwrap());
        w.write("scenes.jsonl", SCENES);
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, text: &str) {
        fs::write(self.path(name), text).unwrap();
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }
}

fn lines_after_header(text: &str) -> Vec<Value> {
    text.lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn synthesize_mcq_is_byte_identical_across_runs() {
    let w = Work::new();
    for out in ["a.jsonl", "b.jsonl"] {
        ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--mcq", "--seed", "7", "--out", &w.s(out)]));
    }
    let a = w.read("a.jsonl");
    assert_eq!(a, w.read("b.jsonl"));
    assert!(a.lines().next().unwrap().contains(r#""seed":7"#));
    let items = lines_after_header(&a);
    assert_eq!(items.len(), 4);
    for item in &items {
        let truth = item["truth"].as_array().unwrap();
        assert_eq!(truth.iter().filter(|t| *t == "correct").count(), 1);
        assert_eq!(truth[item["correct"].as_u64().unwrap() as usize], "correct");
    }
    ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--mcq", "--seed", "8", "--out", &w.s("c.jsonl")]));
    assert_ne!(w.read("c.jsonl"), a);
    let run = w.read("a.jsonl.config.toml");
    assert!(run.contains("command = \"synthesize\"") && run.contains("seed = 7"), "{run}");
}

#[test]
fn env_seed_is_the_fallback() {
    let w = Work::new();
    let run = |seed: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_negsuite"))
            .args(["synthesize", &w.s("scenes.jsonl"), "--mcq", "--out", &w.s(out)])
            .env("NEGSUITE_SEED", seed)
            .output()
            .unwrap();
        ok(o);
    };
    run("7", "env.jsonl");
    ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--mcq", "--seed", "7", "--out", &w.s("flag.jsonl")]));
    assert_eq!(w.read("env.jsonl"), w.read("flag.jsonl"));
}

#[test]
fn synthesize_other_kinds() {
    let w = Work::new();
    ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--captions", "--out", &w.s("q.jsonl")]));
    let q = lines_after_header(&w.read("q.jsonl"));
    assert_eq!(q.len(), 5);
    assert!(q.iter().all(|r| r["text"].as_str().unwrap().contains("There is no")));

    ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--negcap", "--out", &w.s("n.jsonl")]));
    assert_eq!(lines_after_header(&w.read("n.jsonl")).len(), 12);

    ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--binary", "--out", &w.s("b.jsonl")]));
    let b = lines_after_header(&w.read("b.jsonl"));
    assert!(b.iter().all(|i| i["options"].as_array().unwrap().len() == 2));
    let s2: Vec<&Value> = b.iter().filter(|i| i["scene"] == "s2").collect();
    // dog, ball, cat, hat as negation tasks plus two affirmation controls.
    assert_eq!(s2.len(), 6);
}

#[test]
fn proposals_use_the_verifier_hook() {
    let w = Work::new();
    let hook = "command:sh -c 'while read l; do case \"$l\" in *ball) echo present;; *) echo absent;; esac; done'";
    ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--captions", "--k", "1", "--verifier", hook, "--out", &w.s("q.jsonl")]));
    let q = lines_after_header(&w.read("q.jsonl"));
    let s1 = q.iter().find(|r| r["scene"] == "s1").unwrap();
    // Without the hook `ball` would rank first for s1 (it co-occurs with cat).
    assert_eq!(s1["negated"], serde_json::json!(["dog"]));
}

#[test]
fn exit_codes() {
    let w = Work::new();
    w.write("empty.jsonl", "");
    let o = negsuite(&["build-cooccur", &w.s("empty.jsonl"), "--out", &w.s("c.jsonl")]);
    assert_eq!(code(&o), 2);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert!(!w.path("c.jsonl").exists());

    w.write("broken.jsonl", "{\"id\":\"a\",\"positives\":[\"cat\"]}\n{oops\n");
    let o = negsuite(&["build-cooccur", &w.s("broken.jsonl"), "--out", &w.s("c.jsonl")]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.jsonl:2"));

    assert_eq!(code(&negsuite(&["build-cooccur", &w.s("missing.jsonl"), "--out", &w.s("c.jsonl")])), 2);

    // One negative and one caption cannot give three distinct training captions.
    w.write("thin.jsonl", "{\"id\":\"a\",\"positives\":[\"cat\"],\"negatives\":[\"dog\"],\"captions\":[\"A cat.\"]}\n");
    assert_eq!(code(&negsuite(&["synthesize", &w.s("thin.jsonl"), "--negcap", "--out", &w.s("n.jsonl")])), 3);

    let failing = "command:sh -c 'while read l; do echo error; done'";
    let o = negsuite(&["synthesize", &w.s("scenes.jsonl"), "--mcq", "--paraphraser", failing, "--out", &w.s("m.jsonl")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unknown_flags_are_rejected_and_help_lists_flags() {
    let w = Work::new();
    let o = negsuite(&["synthesize", &w.s("scenes.jsonl"), "--mcq", "--out", &w.s("m.jsonl"), "--temperature", "3"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&negsuite(&["frobnicate"])), 2);
    assert_eq!(code(&negsuite(&["synthesize", &w.s("scenes.jsonl"), "--out", &w.s("m.jsonl")])), 2);

    let help = |cmd: &str| String::from_utf8(ok(negsuite(&[cmd, "--help"])).stdout).unwrap();
    let synth = help("synthesize");
    for flag in ["--mcq", "--captions", "--negcap", "--binary", "--out", "--seed", "--k", "--paraphraser", "--verifier", "--strict", "--templates"] {
        assert!(synth.contains(flag), "synthesize --help lacks {flag}");
    }
    for (cmd, flags) in [
        ("build-cooccur", &["--out", "--seed"][..]),
        ("evaluate", &["--images", "--texts", "--items", "--truth", "--k", "--out", "--seed"][..]),
        ("train-toy", &["--out", "--seed", "--alpha", "--condition", "--mode"][..]),
        ("sweep-alpha", &["--alphas", "--seeds", "--out", "--seed", "--condition", "--mode"][..]),
        ("diagnose", &["--objects", "--pairs", "--embeddings", "--toy-model", "--mode", "--templates", "--out", "--seed"][..]),
    ] {
        let text = help(cmd);
        for flag in flags {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
    let top = String::from_utf8(ok(negsuite(&["--help"])).stdout).unwrap();
    assert!(top.contains("build-cooccur") && top.contains("sweep-alpha"));
}

#[test]
fn build_cooccur_writes_a_readable_matrix() {
    let w = Work::new();
    ok(negsuite(&["build-cooccur", &w.s("scenes.jsonl"), "--out", &w.s("sub/cooc.jsonl"), "--seed", "3"]));
    let m = negsuite::formats::read_cooccurrence(&w.path("sub/cooc.jsonl")).unwrap();
    let names: Vec<&str> = m.vocabulary().iter().map(|c| c.as_str()).collect();
    assert_eq!(names, ["ball", "cat", "dog", "sofa"]);
    let cat = negsuite_core::types::Concept::new("cat").unwrap();
    assert_eq!(m.diagonal(&cat), 2);
    assert!(w.read("sub/cooc.jsonl.config.toml").contains("seed = 3"));
}

fn emb(rows: &[(&str, Vec<f64>)]) -> String {
    let dim = rows[0].1.len();
    let mut s = format!("{{\"format\":\"negsuite-emb\",\"version\":1,\"dim\":{dim},\"count\":{}}}\n", rows.len());
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    for (id, v) in rows {
        s.push_str(&serde_json::json!({"id": id, "vec": v}).to_string());
        s.push('\n');
    }
    s
}

#[test]
fn evaluate_recall_with_k_beyond_candidates() {
    let w = Work::new();
    w.write("img.emb", &emb(&[("i1", vec![1.0, 0.0]), ("i2", vec![0.0, 1.0]), ("i3", vec![-1.0, 0.2])]));
    w.write("txt.emb", &emb(&[("q1", vec![0.1, 1.0]), ("q2", vec![1.0, 0.0])]));
    w.write("truth.jsonl", "{\"query\":\"q1\",\"relevant\":[\"i3\"]}\n{\"query\":\"q2\",\"relevant\":[\"i1\"]}\n");
    ok(negsuite(&[
        "evaluate", "--images", &w.s("img.emb"), "--texts", &w.s("txt.emb"), "--truth", &w.s("truth.jsonl"), "--k", "1,2,10", "--out", &w.s("r/report.json"),
    ]));
    let r: Value = serde_json::from_str(&w.read("r/report.json")).unwrap();
    assert_eq!(r["recall_at_k"]["1"]["value"], 0.5);
    assert_eq!(r["recall_at_k"]["10"]["value"], 1.0);
    assert_eq!(r["recall_at_k"]["10"]["count"], 2);
    assert_eq!(r["seed"], 0);
    let csv = w.read("r/report.csv");
    assert!(csv.starts_with("# negsuite 0.1.0 seed=0\nname,slice,value,count\n"));
    assert!(csv.contains("recall_at_k,k=10,1.0,2"));

    let o = negsuite(&["evaluate", "--images", &w.s("img.emb"), "--texts", &w.s("txt.emb"), "--truth", &w.s("truth.jsonl"), "--k", "0", "--out", &w.s("x.json")]);
    assert_eq!(code(&o), 2);
    w.write("truth2.jsonl", "{\"query\":\"q9\",\"relevant\":[\"i1\"]}\n");
    let o = negsuite(&["evaluate", "--images", &w.s("img.emb"), "--texts", &w.s("txt.emb"), "--truth", &w.s("truth2.jsonl"), "--out", &w.s("x.json")]);
    assert_eq!(code(&o), 3);
}

#[test]
fn evaluate_mcq_and_binary_items() {
    let w = Work::new();
    ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--mcq", "--seed", "7", "--out", &w.s("mcq.jsonl")]));
    ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--binary", "--out", &w.s("bin.jsonl")]));
    let mut items = lines_after_header(&w.read("mcq.jsonl"));
    items.extend(lines_after_header(&w.read("bin.jsonl")));

    // An oracle encoder: images along e0, the correct option along e0, others along e1.
    let mut texts = Vec::new();
    let mut images = Vec::new();
    for scene in ["s1", "s2", "s3", "s4"] {
        images.push((scene.to_string(), vec![1.0, 0.0]));
    }
    for item in &items {
        let id = item["id"].as_str().unwrap();
        let correct = item["correct"].as_u64().unwrap() as usize;
        for j in 0..item["options"].as_array().unwrap().len() {
            texts.push((format!("{id}/{j}"), if j == correct { vec![1.0, 0.1] } else { vec![0.0, 1.0] }));
        }
    }
    let as_ref = |v: &[(String, Vec<f64>)]| emb(&v.iter().map(|(a, b)| (a.as_str(), b.clone())).collect::<Vec<_>>());
    w.write("img.emb", &as_ref(&images));
    w.write("txt.emb", &as_ref(&texts));
    let all: String = items.iter().map(|i| format!("{i}\n")).collect();
    w.write("items.jsonl", &all);
    ok(negsuite(&["evaluate", "--images", &w.s("img.emb"), "--texts", &w.s("txt.emb"), "--items", &w.s("items.jsonl"), "--out", &w.s("report.json")]));
    let r: Value = serde_json::from_str(&w.read("report.json")).unwrap();
    assert_eq!(r["mcq"]["accuracy"]["value"], 1.0);
    assert_eq!(r["mcq"]["accuracy"]["count"], 4);
    assert_eq!(r["binary_accuracy"]["value"], 1.0);
    assert!(r.get("recall_at_k").is_none());

    // Missing option embeddings violate the evaluation contract.
    w.write("txt2.emb", &as_ref(&texts[1..]));
    let o = negsuite(&["evaluate", "--images", &w.s("img.emb"), "--texts", &w.s("txt2.emb"), "--items", &w.s("items.jsonl"), "--out", &w.s("x.json")]);
    assert_eq!(code(&o), 3);
}

fn small_toy(w: &Work) -> String {
    w.write("toy.toml", "pairs = 120\nsteps = 60\nbatch = 16\nlog_every = 20\n");
    w.s("toy.toml")
}

#[test]
fn train_toy_outputs() {
    let w = Work::new();
    let cfg = small_toy(&w);
    ok(negsuite(&["train-toy", &cfg, "--seed", "4", "--condition", "negcap", "--out", &w.s("m")]));
    for f in ["image_map.emb.jsonl", "text_map.emb.jsonl", "training_log.csv", "metrics.csv", "metrics.json", "config.toml"] {
        assert!(w.path("m").join(f).exists(), "{f}");
    }
    let log = w.read("m/training_log.csv");
    assert!(log.starts_with("# negsuite 0.1.0 seed=4\nstep,loss,clip,mcq\n"));
    assert_eq!(log.lines().count(), 2 + 4);
    let model = negsuite::formats::read_model(&w.path("m")).unwrap();
    assert_eq!(model.image_map.shape(), (16, 40));
    assert_eq!(model.text_map.shape(), (16, 2 * 40 + 52));
    let run = w.read("m/config.toml");
    assert!(run.contains("condition = \"negcap\"") && run.contains("seed = 4"), "{run}");

    ok(negsuite(&["train-toy", &cfg, "--seed", "4", "--condition", "negcap", "--out", &w.s("m2")]));
    for f in ["training_log.csv", "metrics.csv", "text_map.emb.jsonl"] {
        assert_eq!(w.read(&format!("m/{f}")), w.read(&format!("m2/{f}")), "{f}");
    }

    w.write("bad.toml", "lr = 0.1\nwarmup = 3\n");
    assert_eq!(code(&negsuite(&["train-toy", &w.s("bad.toml"), "--out", &w.s("x")])), 2);
    assert_eq!(code(&negsuite(&["train-toy", &cfg, "--alpha", "1.5", "--out", &w.s("x")])), 2);
}

#[test]
fn sweep_alpha_csv() {
    let w = Work::new();
    let cfg = small_toy(&w);
    ok(negsuite(&["sweep-alpha", &cfg, "--alphas", "0,1", "--seeds", "1,2", "--out", &w.s("sweep.csv")]));
    let csv = w.read("sweep.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "alpha,recall_at_5,mcq_accuracy,seeds");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("0.0,") && lines[3].starts_with("1.0,") && lines[3].ends_with(",2"));
    assert!(w.read("sweep.csv.config.toml").contains("seeds = \"1,2\""));
}

#[test]
fn diagnose_with_embeddings_and_toy_model() {
    let w = Work::new();
    ok(negsuite(&["diagnose", "--objects", "cat,dog", "--pairs", "cat:dog", "--out", &w.s("d0")]));
    let battery = lines_after_header(&w.read("d0/battery.jsonl"));
    assert_eq!(battery.len(), 48 * 2 + 119);
    assert!(!w.path("d0/report.json").exists());

    // Embed every negated caption onto one point and every other caption by index.
    let rows: Vec<(String, Vec<f64>)> = battery
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let id = format!("{}/{}/{}", c["family"].as_str().unwrap(), c["template_index"], c["input_index"]);
            let v = if c["family"] == "neg_single" { vec![0.0, 0.0, 1.0] } else { vec![1.0, (i as f64).sin(), 0.0] };
            (id, v)
        })
        .collect();
    w.write("b.emb", &emb(&rows.iter().map(|(a, b)| (a.as_str(), b.clone())).collect::<Vec<_>>()));
    ok(negsuite(&["diagnose", "--objects", "cat,dog", "--pairs", "cat:dog", "--embeddings", &w.s("b.emb"), "--out", &w.s("d1")]));
    let r: Value = serde_json::from_str(&w.read("d1/report.json")).unwrap();
    assert!((r["negation_object_collapse"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(r["captions"], 215);
    assert_eq!(w.read("d1/scatter.csv").lines().count(), 2 + 215);
    assert!(w.read("d1/scatter.svg").contains("<svg"));

    let cfg = small_toy(&w);
    ok(negsuite(&["train-toy", &cfg, "--out", &w.s("m")]));
    ok(negsuite(&["diagnose", "--pairs", "cat:dog", "--toy-model", &w.s("m"), "--mode", "bag", "--out", &w.s("d2")]));
    let r: Value = serde_json::from_str(&w.read("d2/report.json")).unwrap();
    // The bag featurizer cannot see "not", so matched captions coincide.
    assert!((r["negation_separation"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    assert_eq!(code(&negsuite(&["diagnose", "--pairs", "cat", "--out", &w.s("d3")])), 2);
    assert_eq!(code(&negsuite(&["diagnose", "--out", &w.s("d3")])), 2);
    assert_eq!(code(&negsuite(&["diagnose", "--objects", "zebra", "--toy-model", &w.s("m"), "--out", &w.s("d3")])), 3);
}

#[test]
fn outputs_never_partially_overwrite() {
    let w = Work::new();
    ok(negsuite(&["synthesize", &w.s("scenes.jsonl"), "--mcq", "--out", &w.s("m.jsonl")]));
    let before = w.read("m.jsonl");
    w.write("thin.jsonl", "{\"id\":\"a\",\"positives\":[\"cat\"],\"captions\":[\"A cat.\"]}\n");
    assert_ne!(code(&negsuite(&["synthesize", &w.s("thin.jsonl"), "--mcq", "--out", &w.s("m.jsonl")])), 0);
    assert_eq!(w.read("m.jsonl"), before);
}
