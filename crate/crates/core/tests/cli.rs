use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn convrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convrank"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = convrank(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

/// train.tsv with its wall-clock column blanked.
fn masked(path: &Path) -> Vec<u8> {
    let text = fs::read_to_string(path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split('\t').collect();
    let col = header.iter().position(|h| *h == "seconds").unwrap();
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            let mut cols: Vec<&str> = l.split('\t').collect();
            if i > 0 {
                cols[col] = "*";
            }
            cols.join("\t") + "\n"
        })
        .collect::<String>()
        .into_bytes()
}

/// Runs every stage in `dir` and returns the printed output of each.
fn pipeline(dir: &Path) -> Vec<String> {
    fs::write(dir.join("run.toml"), "users = 299\nmax_context = 2\npool_count = 500\n").unwrap();
    fs::write(dir.join("context.txt"), "kw1 q2\nkw3 q4\n").unwrap();
    fs::write(
        dir.join("candidates.txt"),
        "ans4 kw1\nans4 kw7\nsomething else entirely\n",
    )
    .unwrap();
    let c = ["--config", "run.toml"];
    let with = |args: &[&str]| -> Vec<String> { c.iter().chain(args).map(|s| s.to_string()).collect() };
    let mut printed = vec![ok(dir, &["synth", "--out", "dump.jsonl", "--posts", "2550"])];
    for args in [
        with(&["ingest", "dump.jsonl"]),
        with(&["stats"]),
        with(&["vocab"]),
        with(&["examples"]),
        with(&["train", "--track", "--set", "eval_every=10000"]),
        with(&["eval"]),
        with(&["adapt", "--user", "user299"]),
        with(&[
            "rank",
            "--context",
            "context.txt",
            "--input",
            "q4 kw9",
            "--author",
            "user3",
            "--candidates",
            "candidates.txt",
        ]),
    ] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        printed.push(ok(dir, &args));
    }
    printed
}

#[test]
fn full_pipeline_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = pipeline(a.path());
    let out_b = pipeline(b.path());
    assert_eq!(out_a, out_b);
    assert!(out_a[0].contains("comments"));
    let comments: usize = out_a[0].split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!(comments >= 50_000, "{}", out_a[0]);

    let fa = files(a.path());
    let fb = files(b.path());
    let rel = |root: &Path, v: &[PathBuf]| -> Vec<PathBuf> {
        v.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect()
    };
    assert_eq!(rel(a.path(), &fa), rel(b.path(), &fb));
    let names: Vec<String> = rel(a.path(), &fa).iter().map(|p| p.display().to_string()).collect();
    for expected in [
        "work/trees.jsonl",
        "work/vocab.bin",
        "work/train.bin",
        "work/dev.bin",
        "work/test.bin",
        "work/model.ckpt",
        "work/train.tsv",
        "work/series.tsv",
        "work/eval.tsv",
        "work/pools.bin",
        "work/user-user299.bin",
        "work/stats/comment_depth.tsv",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
    for (x, y) in fa.iter().zip(&fb) {
        if x.ends_with("train.tsv") {
            assert_eq!(masked(x), masked(y));
        } else {
            assert!(fs::read(x).unwrap() == fs::read(y).unwrap(), "{} differs", x.display());
        }
    }

    // Candidates come back sorted by score, each exactly once.
    let ranked = out_a.last().unwrap();
    let scores: Vec<f64> = ranked
        .lines()
        .map(|l| l.split('\t').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 3);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn single_candidate_pools_score_one() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    ok(dir, &["synth", "--out", "dump.jsonl", "--posts", "120"]);
    ok(dir, &["ingest", "dump.jsonl"]);
    ok(dir, &["vocab"]);
    ok(
        dir,
        &["--set", "test_ratio=0.2", "--set", "train_ratio=0.75", "examples"],
    );
    ok(dir, &["train", "--set", "eval_every=500"]);
    ok(dir, &["eval", "--n", "1", "--count", "50"]);
    fs::rename(dir.join("work/pools.bin"), dir.join("single.bin")).unwrap();
    let printed = ok(dir, &["eval", "--pools", "single.bin"]);
    assert!(printed.contains("P@1 = 1.0000"), "{printed}");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    let code = |args: &[&str]| convrank(dir, args).status.code().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["train", "--no-such-flag"]), 1);
    assert_eq!(code(&["--set", "no_such_key=1", "stats"]), 1);
    assert_eq!(code(&["--set", "lr=-1", "stats"]), 1);
    assert_eq!(code(&["ingest", "missing.jsonl"]), 2);

    fs::write(dir.join("bad.jsonl"), "{\"id\": \"x\"\n").unwrap();
    assert_eq!(code(&["--set", "strict=true", "ingest", "bad.jsonl"]), 2);

    // A checkpoint is tied to the vocabulary it was trained with.
    ok(dir, &["synth", "--out", "dump.jsonl", "--posts", "60"]);
    ok(dir, &["ingest", "dump.jsonl"]);
    ok(dir, &["vocab"]);
    ok(dir, &["examples"]);
    ok(dir, &["train", "--set", "eval_every=500"]);
    ok(dir, &["--set", "unigrams=20", "vocab"]);
    let out = convrank(dir, &["eval", "--count", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint"));

    ok(dir, &["vocab"]);
    assert_eq!(code(&["train", "--lr", "1e300", "--set", "eval_every=500"]), 3);
}
