use std::fs;
use std::path::Path;
use std::process::Command;

use signtopic_cli::{echo_path_for_dir, echo_path_for_file, run, EXIT_DATA, EXIT_DIVERGENCE, EXIT_OK, EXIT_USAGE};
use signtopic_core::config::KvMap;
use signtopic_core::tensorio::{load_manifest, read_tensor, write_tensor};
use signtopic_core::training::{RunRecord, CHECKPOINT_DIR, LOG_FILE};
use signtopic_core::Matrix32;

fn sig(args: &[&str]) -> i32 {
    run(std::iter::once("signtopic").chain(args.iter().copied()))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_signtopic"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small three-class Cartesian corpus.
fn small_corpus(dir: &Path, seed: u64) {
    let code = sig(&[
        "synth",
        "--out",
        p(dir),
        "--classes",
        "3",
        "--seed",
        &seed.to_string(),
        "--set",
        "train_per_class=8",
        "--set",
        "val_per_class=4",
        "--set",
        "test_per_class=4",
        "--set",
        "max_len=32",
    ]);
    assert_eq!(code, EXIT_OK);
}

fn train_run(manifest: &Path, out: &Path, seed: u64, family: &str) {
    let code = sig(&[
        "train",
        "--manifest",
        p(manifest),
        "--family",
        family,
        "--lr",
        "1e-3",
        "--seed",
        &seed.to_string(),
        "--max-epochs",
        "4",
        "--out",
        p(out),
        "--quiet",
    ]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn convert_keypoints_to_angular() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    small_corpus(&corpus, 0);
    let ds = load_manifest(corpus.join("manifest.txt")).unwrap();
    let input = ds.resolve(&ds.manifest.entries[0]);
    let frames = read_tensor(&input).unwrap().rows();
    let out = dir.path().join("a.stf");
    let code = sig(&["convert", "--in", p(&input), "--to", "angular", "--out", p(&out)]);
    assert_eq!(code, EXIT_OK);
    let m = read_tensor(&out).unwrap();
    assert_eq!(m.shape(), (frames, 288));
    let echo = KvMap::load(echo_path_for_file(&out)).unwrap();
    assert_eq!(echo.get("to"), Some("angular"));
    assert_eq!(echo.get("normalize"), Some("true"));

    let conv = dir.path().join("conv");
    let code = sig(&[
        "convert",
        "--manifest",
        p(&corpus.join("manifest.txt")),
        "--to",
        "angular",
        "--out",
        p(&conv),
    ]);
    assert_eq!(code, EXIT_OK);
    let converted = load_manifest(conv.join("manifest.txt")).unwrap();
    assert_eq!(converted.manifest.entries.len(), ds.manifest.entries.len());
    assert!(echo_path_for_dir(&conv).exists());
}

#[test]
fn train_eval_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    small_corpus(&corpus, 1);
    let manifest = corpus.join("manifest.txt");
    let runs: Vec<_> = (0..3).map(|s| dir.path().join(format!("run{s}"))).collect();
    for (s, r) in runs.iter().enumerate() {
        train_run(&manifest, r, s as u64, "transformer");
    }
    let log = fs::read_to_string(runs[0].join(LOG_FILE)).unwrap();
    assert!(log.starts_with("epoch\t"));
    assert!(log.lines().count() >= 2);
    assert!(runs[0].join(CHECKPOINT_DIR).join("index.txt").exists());
    let echo = KvMap::load(echo_path_for_dir(&runs[0])).unwrap();
    assert_eq!(echo.parse_opt::<f64>("lr").unwrap(), Some(1e-3));
    assert_eq!(echo.get("family"), Some("transformer"));

    let eval_out = dir.path().join("eval.txt");
    let code = sig(&[
        "eval",
        "--checkpoint",
        p(&runs[0]),
        "--manifest",
        p(&manifest),
        "--out",
        p(&eval_out),
    ]);
    assert_eq!(code, EXIT_OK);
    let record = RunRecord::load(&runs[0]).unwrap();
    let text = fs::read_to_string(&eval_out).unwrap();
    let acc: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("accuracy\t"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((acc - record.test_accuracy).abs() < 1e-6);

    let report = dir.path().join("report.txt");
    let mut args = vec!["report", "--out", p(&report), "--runs"];
    args.extend(runs.iter().map(|r| p(r)));
    assert_eq!(sig(&args), EXIT_OK);
    let table = fs::read_to_string(&report).unwrap();
    assert!(table.contains("over 3 run(s)"));
    let accs: Vec<f64> = runs.iter().map(|r| RunRecord::load(r).unwrap().test_accuracy).collect();
    let mean = accs.iter().sum::<f64>() / 3.0;
    let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!(
        table.contains(&format!("{:.2}±{:.2}", mean * 100.0, std * 100.0)),
        "{table}"
    );
}

#[test]
fn gridsearch_ranks_points_and_keeps_failures() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    small_corpus(&corpus, 2);
    let grid = dir.path().join("grid.txt");
    fs::write(&grid, "lr = 1e-3, 1e30\nbatch = 4, 8\n").unwrap();
    let out = dir.path().join("gs");
    let code = sig(&[
        "gridsearch",
        "--grid",
        p(&grid),
        "--manifest",
        p(&corpus.join("manifest.txt")),
        "--family",
        "lstm_attn",
        "--max-epochs",
        "3",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let ranking = fs::read_to_string(out.join("ranking.tsv")).unwrap();
    assert_eq!(ranking.lines().count(), 5);
    let best = KvMap::load(out.join("best.txt")).unwrap();
    assert_eq!(best.get("lr"), Some("1e-3"));
    for i in 0..4 {
        assert!(ranking.lines().any(|l| l.split('\t').nth(1) == Some(&i.to_string())));
    }

    let all_bad = dir.path().join("bad.txt");
    fs::write(&all_bad, "lr = inf\n").unwrap();
    let code = sig(&[
        "gridsearch",
        "--grid",
        p(&all_bad),
        "--manifest",
        p(&corpus.join("manifest.txt")),
        "--family",
        "lstm_attn",
        "--out",
        p(&dir.path().join("gs2")),
    ]);
    assert_ne!(code, EXIT_OK);
}

#[test]
fn divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    small_corpus(&corpus, 3);
    let grid = dir.path().join("grid.txt");
    fs::write(&grid, "lr = 1e30\nbatch = 8\n").unwrap();
    let out = bin()
        .args([
            "gridsearch",
            "--grid",
            p(&grid),
            "--manifest",
            p(&corpus.join("manifest.txt")),
        ])
        .args([
            "--family",
            "lstm_attn",
            "--max-epochs",
            "3",
            "--out",
            p(&dir.path().join("gs")),
        ])
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(EXIT_DIVERGENCE), "{stderr}");
    assert!(stderr.lines().any(|l| l.starts_with("error[divergence]: ")));
}

#[test]
fn exit_codes_and_single_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["train", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error[usage]: "));

    assert_eq!(sig(&["cost", "--set", "nonsense=1"]), EXIT_USAGE);
    assert_eq!(sig(&["train", "--family", "transformer"]), EXIT_USAGE);

    let bad = dir.path().join("bad.stf");
    fs::write(&bad, b"not a tensor at all").unwrap();
    let out = bin()
        .args([
            "convert",
            "--in",
            p(&bad),
            "--to",
            "angular",
            "--out",
            p(&dir.path().join("o.stf")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[data]: "));

    let narrow = dir.path().join("narrow.stf");
    write_tensor(&narrow, &Matrix32::zeros(4, 7)).unwrap();
    assert_eq!(
        sig(&[
            "convert",
            "--in",
            p(&narrow),
            "--to",
            "angular",
            "--out",
            p(&dir.path().join("o.stf"))
        ]),
        EXIT_DATA
    );
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(EXIT_OK));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cost.conf");
    fs::write(&cfg, "t = 10\nformat = tsv\nsize = tiny\n").unwrap();
    let out = dir.path().join("cost.tsv");
    let code = sig(&["cost", "--config", p(&cfg), "--t", "100", "--out", p(&out)]);
    assert_eq!(code, EXIT_OK);
    let echo = KvMap::load(echo_path_for_file(&out)).unwrap();
    assert_eq!(echo.get("t"), Some("100"));
    assert_eq!(echo.get("format"), Some("tsv"));
    assert_eq!(echo.get("size"), Some("tiny"));
    assert_eq!(echo.get("classes"), Some("10"));
    let table = fs::read_to_string(&out).unwrap();
    assert!(table.contains('\t'));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    small_corpus(&a, 7);
    small_corpus(&b, 7);
    let ma = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(ma, fs::read_to_string(b.join("manifest.txt")).unwrap());
    for entry in fs::read_dir(a.join("features")).unwrap() {
        let name = entry.unwrap().file_name();
        let fa = fs::read(a.join("features").join(&name)).unwrap();
        let fb = fs::read(b.join("features").join(&name)).unwrap();
        assert_eq!(fa, fb);
    }
    assert_eq!(
        fs::read_to_string(echo_path_for_dir(&a)).unwrap().replace(p(&a), ""),
        fs::read_to_string(echo_path_for_dir(&b)).unwrap().replace(p(&b), "")
    );
}

#[test]
fn tokenize_round_trip_and_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    fs::write(
        &corpus,
        "we cook pasta tonight\nthe pasta is ready\ncook the sauce slowly\n",
    )
    .unwrap();
    let vocab = dir.path().join("v.txt");
    assert_eq!(
        sig(&[
            "tokenize",
            "train",
            "--corpus",
            p(&corpus),
            "--size",
            "40",
            "--out",
            p(&vocab)
        ]),
        EXIT_OK
    );
    let input = dir.path().join("in.txt");
    fs::write(&input, "the sauce is ready\ncook pasta\n").unwrap();
    let ids = dir.path().join("ids.txt");
    let back = dir.path().join("back.txt");
    assert_eq!(
        sig(&[
            "tokenize",
            "encode",
            "--vocab",
            p(&vocab),
            "--input",
            p(&input),
            "--out",
            p(&ids)
        ]),
        EXIT_OK
    );
    assert_eq!(
        sig(&[
            "tokenize",
            "decode",
            "--vocab",
            p(&vocab),
            "--input",
            p(&ids),
            "--out",
            p(&back)
        ]),
        EXIT_OK
    );
    assert_eq!(fs::read_to_string(&back).unwrap(), fs::read_to_string(&input).unwrap());

    let texts = dir.path().join("t.tsv");
    fs::write(
        &texts,
        "a\t0\ttrain\tcook pasta\nb\t1\tval\tthe sauce\nc\t5\ttest\tready\n",
    )
    .unwrap();
    let out = dir.path().join("tok");
    let code = sig(&[
        "tokenize",
        "corpus",
        "--vocab",
        p(&vocab),
        "--texts",
        p(&texts),
        "--classes",
        "food,other",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, EXIT_DATA);
    fs::write(
        &texts,
        "a\t0\ttrain\tcook pasta\nb\t1\tval\tthe sauce\nc\t1\ttest\tready\n",
    )
    .unwrap();
    let code = sig(&[
        "tokenize",
        "corpus",
        "--vocab",
        p(&vocab),
        "--texts",
        p(&texts),
        "--classes",
        "food,other",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let ds = load_manifest(out.join("manifest.txt")).unwrap();
    assert_eq!(ds.manifest.entries.len(), 3);
}
