//! End-to-end tests of the `simulpl` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 9] = [
    "extract-prefixes",
    "simulate",
    "eval-latency",
    "eval-preference",
    "loss",
    "grad-check",
    "train-toy",
    "tradeoff",
    "annotate",
];

fn simulpl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simulpl"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SIMULPL_API_KEY")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares against `tests/golden/<name>.txt`; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(format!("{name}.txt"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing {}; rerun with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(actual, expected, "help output of {name} drifted from {}", path.display());
}

#[test]
fn help_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    check_golden("simulpl", &stdout(&simulpl(&["--help"], dir.path())));
    for sub in SUBCOMMANDS {
        check_golden(sub, &stdout(&simulpl(&[sub, "--help"], dir.path())));
    }
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let expect: [(&str, &[&str]); 9] = [
        ("extract-prefixes", &["--corpus", "--align-w", "--align-l", "--supervised", "--output"]),
        (
            "simulate",
            &[
                "--corpus", "--agent", "--script", "--checkpoint", "--k", "--ratio", "--read-length", "--threshold",
                "--max-target-len", "--traces", "--hypotheses",
            ],
        ),
        ("eval-latency", &["--traces", "--output"]),
        ("eval-preference", &["--corpus", "--hypotheses", "--alignments", "--conllu", "--output"]),
        ("loss", &["--kind", "--input", "--alpha", "--beta", "--lambda-w", "--lambda-l", "--terminal-mode", "--z0"]),
        ("grad-check", &["--seed", "--instances", "--step", "--tolerance"]),
        ("train-toy", &["--config", "--set", "--seed", "--loss", "--alpha", "--beta", "--prefix-conditioned-ref", "--n", "--out-dir"]),
        ("tradeoff", &["--checkpoint", "--corpus", "--n", "--threshold", "--max-target-len", "--config", "--output"]),
        ("annotate", &["--corpus", "--template", "--endpoint", "--model", "--max-in-flight", "--dry-run", "--output"]),
    ];
    for (sub, flags) in expect {
        let help = stdout(&simulpl(&[sub, "--help"], dir.path()));
        for flag in flags {
            assert!(help.contains(flag), "{sub} --help does not mention {flag}");
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.jsonl"), "{\"src\": \"\", \"tgt_preferred\": \"a\"}\n").unwrap();
    std::fs::write(d.join("bad_trace.jsonl"), "{\"id\":0,\"source_len\":1,\"ref_len\":1,\"events\":[[\"W\",\"a\"]]}\n")
        .unwrap();

    assert_eq!(simulpl(&["grad-check", "--instances", "2"], d).status.code(), Some(0));
    // usage errors
    assert_eq!(simulpl(&["eval-latency"], d).status.code(), Some(1));
    assert_eq!(simulpl(&["no-such-command"], d).status.code(), Some(1));
    // validation errors
    let empty_src = simulpl(&["extract-prefixes", "--corpus", "bad.jsonl", "--align-w", "x", "--supervised"], d);
    assert_eq!(empty_src.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&empty_src.stderr).contains("line 1"));
    assert_eq!(simulpl(&["eval-latency", "--traces", "bad_trace.jsonl"], d).status.code(), Some(1));
    assert_eq!(simulpl(&["eval-latency", "--traces", "missing.jsonl"], d).status.code(), Some(1));
    assert_eq!(
        simulpl(&["train-toy", "--set", "hidden=0", "--out-dir", "out"], d).status.code(),
        Some(1)
    );
    assert_eq!(simulpl(&["train-toy", "--set", "nonsense=1", "--out-dir", "out"], d).status.code(), Some(1));
    // internal failure: a tolerance no finite-difference check can meet
    assert_eq!(
        simulpl(&["grad-check", "--instances", "2", "--tolerance", "1e-300"], d).status.code(),
        Some(2)
    );
}

#[test]
fn extract_prefixes_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("corpus.jsonl"),
        "{\"src\": \"a b c\", \"tgt_preferred\": \"A B C\", \"tgt_rejected\": \"C B A\"}\n",
    )
    .unwrap();
    std::fs::write(d.join("w.txt"), "0-0 1-1 2-2\n").unwrap();
    std::fs::write(d.join("l.txt"), "0-2 1-1 2-0\n").unwrap();

    let supervised = stdout(&simulpl(&["extract-prefixes", "--corpus", "corpus.jsonl", "--align-w", "w.txt", "--supervised"], d));
    let lines: Vec<&str> = supervised.lines().collect();
    assert_eq!(lines.len(), 3, "{supervised}");
    assert!(lines[0].contains("\"src\":\"a\"") && lines[0].contains("\"tgt_preferred\":\"A\""), "{}", lines[0]);
    assert!(lines[2].contains("\"src\":\"a b c\"") && lines[2].contains("\"tgt_preferred\":\"A B C\""));

    // The rejected side only becomes available once the whole source is read.
    let triples = stdout(&simulpl(
        &["extract-prefixes", "--corpus", "corpus.jsonl", "--align-w", "w.txt", "--align-l", "l.txt"],
        d,
    ));
    let lines: Vec<&str> = triples.lines().collect();
    assert_eq!(lines.len(), 1, "{triples}");
    assert!(lines[0].contains("\"tgt_rejected\":\"C B A\""));
}

#[test]
fn eval_latency_on_known_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // wait-1 on a 3-word sentence, then a read-everything trace
    std::fs::write(
        d.join("traces.jsonl"),
        concat!(
            "{\"id\":0,\"source_len\":3,\"ref_len\":3,\"events\":[[\"R\",1],[\"W\",\"a\"],[\"R\",1],[\"W\",\"b\"],[\"R\",1],[\"W\",\"c\"]]}\n",
            "{\"id\":1,\"source_len\":2,\"ref_len\":2,\"events\":[[\"R\",2],[\"W\",\"a\"],[\"W\",\"b\"]]}\n",
        ),
    )
    .unwrap();
    let csv = stdout(&simulpl(&["eval-latency", "--traces", "traces.jsonl"], d));
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["id", "AL", "LAAL", "AP", "DAL"]);
    assert_eq!(rows[1], ["0", "1.000000", "1.000000", "0.666667", "1.000000"]);
    // AL: tau = 1, g(1) = 2; AP = (2 + 2) / (2 * 2)
    assert_eq!(&rows[2][..4], ["1", "2.000000", "2.000000", "1.000000"]);
    assert_eq!(rows[3][0], "mean");
    assert_eq!(rows[3][1], "1.500000");
}

#[test]
fn eval_preference_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("corpus.jsonl"),
        concat!(
            "{\"src\": \"a b c\", \"tgt_preferred\": \"A B C\"}\n",
            "{\"src\": \"a b\", \"tgt_preferred\": \"A B\"}\n",
        ),
    )
    .unwrap();
    std::fs::write(d.join("hyp.txt"), "C B A\nA B\n").unwrap();
    std::fs::write(d.join("align.txt"), "2-0 1-1 0-2\n0-0 1-1\n").unwrap();
    let csv = stdout(&simulpl(
        &["eval-preference", "--corpus", "corpus.jsonl", "--hypotheses", "hyp.txt", "--alignments", "align.txt"],
        d,
    ));
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][..3], ["id", "NIR", "DD"]);
    let col = |name: &str| rows[0].iter().position(|h| *h == name).unwrap();
    assert_eq!(rows[1][col("NIR")], "100.000000");
    assert_eq!(rows[2][col("NIR")], "0.000000");
    assert_eq!(rows[1][col("SLR")], "1.000000");
    assert_eq!(rows[1][col("token_F1")], "1.000000");
    assert_eq!(rows[3][0], "mean");
    assert_eq!(rows[3][col("NIR")], "50.000000");
}

#[test]
fn scripted_simulation_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("corpus.jsonl"), "{\"src\": \"a b c d\", \"tgt_preferred\": \"x y z\"}\n").unwrap();
    std::fs::write(
        d.join("script.jsonl"),
        "{\"tokens\": [\"x\", \"y\", \"z\"], \"confidences\": [0.9, 0.2, 0.9, 0.9]}\n",
    )
    .unwrap();
    let out = simulpl(
        &[
            "simulate", "--corpus", "corpus.jsonl", "--agent", "scripted", "--script", "script.jsonl", "--read-length",
            "2", "--traces", "traces.jsonl", "--hypotheses", "hyp.txt",
        ],
        d,
    );
    stdout(&out);
    let traces = std::fs::read_to_string(d.join("traces.jsonl")).unwrap();
    assert!(
        traces.contains("[[\"R\",1],[\"W\",\"x\"],[\"R\",2],[\"W\",\"y\"],[\"W\",\"z\"]]"),
        "{traces}"
    );
    assert_eq!(std::fs::read_to_string(d.join("hyp.txt")).unwrap(), "x y z\n");
}

#[test]
fn loss_subcommand_scores_records() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("scores.jsonl"),
        concat!(
            "{\"preferred\": {\"logp_policy\": [-0.5, -0.2], \"logp_ref\": [-0.6, -0.4], \"confidence\": [1.0, 1.0]},",
            " \"rejected\": {\"logp_policy\": [-1.0, -0.2], \"logp_ref\": [-0.8, -0.4], \"confidence\": [1.0, 1.0]}}\n",
        ),
    )
    .unwrap();
    let csv = stdout(&simulpl(
        &["loss", "--kind", "simuldpo", "--input", "scores.jsonl", "--alpha", "0", "--beta", "1", "--terminal-mode", "penalty-only"],
        d,
    ));
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    // margin (0.1) - (-0.2) = 0.3
    let expected = (1.0f64 + (-0.3f64).exp()).ln();
    assert!((row[1].parse::<f64>().unwrap() - expected).abs() < 1e-6, "{csv}");
}

#[test]
fn annotate_dry_run_renders_prompts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("corpus.jsonl"), "{\"src\": \"你好 世界\", \"tgt_preferred\": \"hello world\"}\n").unwrap();
    let out = stdout(&simulpl(&["annotate", "--corpus", "corpus.jsonl", "--dry-run"], d));
    assert!(out.contains("你好 世界") && out.contains("hello world"), "{out}");
    let missing = simulpl(&["annotate", "--corpus", "corpus.jsonl"], d);
    assert_eq!(missing.status.code(), Some(1));
}
