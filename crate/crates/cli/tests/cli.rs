use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use mtpipe::modelstore::{read_checkpoint, write_checkpoint, Checkpoint, Tensor};

fn mtpipe() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mtpipe"));
    c.env_remove("MTPIPE_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    mtpipe().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["score", "--hyp", "x"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn stats_table() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "a.zh", "我爱你\n你好吗\n\n");
    let out = ok(&["stats", "--lang", "zh", s(&f)]);
    let last = out.lines().last().unwrap();
    assert!(last.ends_with("2       5     3.00"), "{out}");
    let json: serde_json::Value = serde_json::from_str(&ok(&["stats", "--lang", "zh", "--json", s(&f)])).unwrap();
    assert_eq!(json[0]["stats"]["vocab_size"], 5);
}

#[test]
fn filter_keeps_the_window_inclusively() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = [9, 10, 60, 61].iter().map(|&n| vec!["w"; n].join(" ") + "\n").collect();
    let input = write(dir.path(), "in.vi", &text);
    let output = dir.path().join("out.vi");
    ok(&["filter", "--lang", "vi", "--input", s(&input), "--output", s(&output)]);
    let lens: Vec<usize> = fs::read_to_string(&output).unwrap().lines().map(|l| l.split(' ').count()).collect();
    assert_eq!(lens, [10, 60]);
    let bad = run(&[
        "filter",
        "--lang",
        "vi",
        "--input",
        s(&input),
        "--output",
        s(&output),
        "--min-len",
        "9",
        "--max-len",
        "3",
    ]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn sample_is_seeded_and_missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = (0..100).map(|i| format!("line {i}\n")).collect();
    let input = write(dir.path(), "in", &text);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["sample", "--input", s(&input), "--output", s(&a), "--size", "10", "--seed", "4"]);
    ok(&["sample", "--input", s(&input), "--output", s(&b), "--size", "10", "--seed", "4"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 10);
    let too_many = run(&["sample", "--input", s(&input), "--output", s(&a), "--size", "101"]);
    assert_eq!(code(&too_many), 2);
    let missing = run(&["sample", "--input", "/nonexistent/x", "--output", s(&a), "--size", "1"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn spm_train_encode_decode() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c", "low lower lowest\nnew newer newest\n");
    let model = dir.path().join("bpe.model");
    ok(&["spm", "train", "--merges", "10", "--model", s(&model), s(&corpus)]);
    let ids = ok(&["spm", "encode", "--model", s(&model), "--ids", "--input", s(&corpus)]);
    let id_file = write(dir.path(), "ids", &ids);
    let back = ok(&["spm", "decode", "--model", s(&model), "--input", s(&id_file)]);
    assert_eq!(back, fs::read_to_string(&corpus).unwrap());
    let pieces = ok(&["spm", "encode", "--model", s(&model), "--input", s(&corpus)]);
    assert_eq!(pieces.lines().count(), 2);
}

fn ckpt(step: u64, v: f32) -> Checkpoint {
    Checkpoint::new(step)
        .with_tensor("embed_tokens", Tensor::new(vec![3, 2], vec![v; 6]).unwrap())
        .with_tensor("bias", Tensor::new(vec![2], vec![v, -v]).unwrap())
}

#[test]
fn ckpt_avg_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (1..=6)
        .map(|i| {
            let p = dir.path().join(format!("c{i}.mtck"));
            write_checkpoint(&ckpt(i * 100, i as f32), &p).unwrap();
            p
        })
        .collect();
    let out = dir.path().join("avg.mtck");
    let mut args = vec!["ckpt", "avg", "--out", s(&out)];
    args.extend(paths.iter().map(|p| s(p)));
    ok(&args);
    let avg = read_checkpoint(&out).unwrap();
    // last five of 1..=6
    assert_eq!(avg.tensors["bias"].data(), [4.0, -4.0]);
    assert_eq!(avg.meta.step, 600);
    let text = ok(&["ckpt", "inspect", s(&out)]);
    assert!(text.starts_with("step 600"), "{text}");
    assert!(text.contains("embed_tokens\t[3, 2]\t"));
    let json: serde_json::Value = serde_json::from_str(&ok(&["ckpt", "inspect", "--json", s(&out)])).unwrap();
    assert_eq!(json["tensors"].as_array().unwrap().len(), 2);
    let garbage = write(dir.path(), "bad.mtck", "not a checkpoint");
    assert_eq!(code(&run(&["ckpt", "inspect", s(&garbage)])), 2);
}

#[test]
fn ckpt_prune_keeps_used_rows() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write(dir.path(), "c", "ab ab ba\ncab\n");
    let model = dir.path().join("bpe.model");
    ok(&["spm", "train", "--merges", "2", "--model", s(&model), s(&corpus)]);
    let vocab = mtpipe::subword::SubwordModel::load(&model).unwrap().vocab;
    let n = vocab.len();
    let data: Vec<f32> = (0..n * 2).map(|i| i as f32).collect();
    let c = Checkpoint::new(1).with_tensor("embed_tokens", Tensor::new(vec![n, 2], data).unwrap());
    let ck = dir.path().join("c.mtck");
    write_checkpoint(&c, &ck).unwrap();
    let small = write(dir.path(), "small", "ab\n");
    let (out_ck, out_model) = (dir.path().join("p.mtck"), dir.path().join("p.model"));
    let report = ok(&[
        "ckpt",
        "prune",
        "--ckpt",
        s(&ck),
        "--model",
        s(&model),
        "--corpus",
        s(&small),
        "--out-ckpt",
        s(&out_ck),
        "--out-model",
        s(&out_model),
    ]);
    assert!(report.starts_with(&format!("vocab {n} -> ")), "{report}");
    let pruned = read_checkpoint(&out_ck).unwrap();
    let small_vocab = mtpipe::subword::SubwordModel::load(&out_model).unwrap().vocab;
    assert_eq!(pruned.tensors["embed_tokens"].shape()[0], small_vocab.len());
    assert!(small_vocab.len() < n);
    for new in 0..small_vocab.len() as u32 {
        let old = vocab.id(small_vocab.token(new).unwrap()).unwrap();
        assert_eq!(pruned.tensors["embed_tokens"].row(new as usize), c.tensors["embed_tokens"].row(old as usize));
    }
}

fn mono(dir: &Path) -> PathBuf {
    let text: String =
        (0..40).map(|i| format!("the quick brown fox number {} jumps\n", "x".repeat(1 + i % 5))).collect();
    write(dir, "mono.vi", &text)
}

#[test]
fn bt_run_with_toy_backend() {
    let dir = tempfile::tempdir().unwrap();
    let m = mono(dir.path());
    let (src, tgt) = (dir.path().join("syn.zh"), dir.path().join("syn.vi"));
    ok(&[
        "bt",
        "run",
        "--mono",
        s(&m),
        "--backend",
        "toy:3:0",
        "--no-filter",
        "--out-src",
        s(&src),
        "--out-tgt",
        s(&tgt),
    ]);
    let srcs = fs::read_to_string(&src).unwrap();
    let toy = mtpipe::decoder::toy_backend(3, 0.0);
    let first = fs::read_to_string(&m).unwrap().lines().next().unwrap().to_string();
    let ids: Vec<u32> = toy.codec().encode(&first).unwrap().iter().map(|&t| toy.model().encipher(t)).collect();
    assert_eq!(srcs.lines().next().unwrap(), toy.codec().decode(&ids));
    assert_eq!(fs::read_to_string(&tgt).unwrap(), fs::read_to_string(&m).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("syn.zh.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["report"]["n_pairs"], 40);
}

#[test]
fn bt_over_a_spawned_stdio_server() {
    let dir = tempfile::tempdir().unwrap();
    let m = mono(dir.path());
    let backend = format!("cmd:{} bt serve --shift 3 --noise 0.2", env!("CARGO_BIN_EXE_mtpipe"));
    let run_to = |name: &str, backend: &str| {
        let (src, tgt) = (dir.path().join(format!("{name}.zh")), dir.path().join(format!("{name}.vi")));
        ok(&[
            "bt",
            "run",
            "--mono",
            s(&m),
            "--backend",
            backend,
            "--seed",
            "7",
            "--no-filter",
            "--out-src",
            s(&src),
            "--out-tgt",
            s(&tgt),
        ]);
        fs::read(src).unwrap()
    };
    assert_eq!(run_to("remote", &backend), run_to("local", "toy:3:0.2"));
}

#[test]
fn unreachable_backend_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let m = mono(dir.path());
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let backend = format!("tcp://{addr}");
    let out = run(&[
        "bt",
        "run",
        "--mono",
        s(&m),
        "--backend",
        &backend,
        "--out-src",
        s(&dir.path().join("a")),
        "--out-tgt",
        s(&dir.path().join("b")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        code(&run(&["bt", "run", "--mono", s(&m), "--backend", "ftp://x", "--out-src", "a", "--out-tgt", "b"])),
        1
    );
}

#[test]
fn postedit_run_writes_text_and_edit_report() {
    let dir = tempfile::tempdir().unwrap();
    let src = write(dir.path(), "t.zh", "总额400亿美元\n在2021年12月1日前\n没有\n");
    let hyp = write(dir.path(), "t.vi", "trị giá 4 tỷ USD\ntrước ngày 1/1/2021\nkhông\n");
    ok(&["postedit", "run", "--src", s(&src), "--hyp", s(&hyp)]);
    let fixed = fs::read_to_string(dir.path().join("t.vi.pe")).unwrap();
    assert_eq!(fixed, "trị giá 40 tỷ USD\ntrước ngày 1/12/2021\nkhông\n");
    let edits: Vec<serde_json::Value> = fs::read_to_string(dir.path().join("t.vi.pe.edits.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(edits.len(), 2);
    assert_eq!(edits[1]["line"], 2);
    assert_eq!(edits[1]["before"], "1/1/2021");
    assert_eq!(edits[1]["after"], "1/12/2021");
    assert_eq!(edits[1]["reason"], "date_mismatch");
}

#[test]
fn postedit_rules_file_extends_units() {
    let dir = tempfile::tempdir().unwrap();
    let rules_text = ok(&["postedit", "rules"]);
    assert!(rules_text.contains("[zh.units]"), "{rules_text}");
    let rules = write(dir.path(), "rules.toml", &rules_text.replace("[zh.units]\n", "[zh.units]\n\"千\" = 3\n"));
    let src = write(dir.path(), "t.zh", "5千人\n");
    let hyp = write(dir.path(), "t.vi", "6 nghìn người\n");
    let out = dir.path().join("out");
    ok(&["postedit", "run", "--src", s(&src), "--hyp", s(&hyp), "--rules", s(&rules), "--output", s(&out)]);
    assert_eq!(fs::read_to_string(&out).unwrap(), "5 nghìn người\n");
    let broken = write(dir.path(), "broken.toml", "[zh]\nbogus = 1\n");
    assert_eq!(code(&run(&["postedit", "run", "--src", s(&src), "--hyp", s(&hyp), "--rules", s(&broken)])), 1);
}

#[test]
fn score_text_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let hyp = write(dir.path(), "h", "a b c d\n");
    let rf = write(dir.path(), "r", "a b c d e\n");
    let text = ok(&["score", "--hyp", s(&hyp), "--ref", s(&rf), "--lang", "vi"]);
    assert!(text.starts_with("BLEU = 77.9 "), "{text}");
    let json: serde_json::Value =
        serde_json::from_str(&ok(&["score", "--hyp", s(&hyp), "--ref", s(&rf), "--lang", "vi", "--json"])).unwrap();
    assert_eq!(json["bleu"], 77.9);
    assert_eq!(json["sys_len"], 4);
    let two = write(dir.path(), "two", "a\nb\n");
    assert_eq!(code(&run(&["score", "--hyp", s(&two), "--ref", s(&rf), "--lang", "vi"])), 2);
}

#[test]
fn pipeline_run_via_env_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let default = ok(&["pipeline", "init"]);
    assert!(default.contains("max_updates = 120000"));
    write(dir.path(), "b.zh", "我爱你\n你好吗\n");
    write(dir.path(), "b.vi", "tôi yêu bạn\nbạn khỏe không\n");
    let cfg = default
        .replace("[data]\n", "[data]\nbitext_src = \"b.zh\"\nbitext_tgt = \"b.vi\"\n")
        .replace("filter = true", "filter = false");
    let cfg_path = write(dir.path(), "run.toml", &cfg);
    let out =
        mtpipe().args(["pipeline", "run"]).env("MTPIPE_CONFIG", &cfg_path).stderr(Stdio::piped()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = dir.path().join("run/manifest.json");
    assert!(manifest.is_file());
    let table = ok(&["pipeline", "report", "--manifest", s(&manifest), "--table", "data_stats"]);
    assert!(table.contains("#Sents") && table.contains("bitext.zh"), "{table}");
    assert_eq!(code(&run(&["pipeline", "report", "--manifest", s(&manifest), "--table", "results"])), 2);
    assert_eq!(code(&run(&["pipeline", "report", "--manifest", s(&manifest), "--table", "nope"])), 1);
}

#[test]
fn pipeline_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.toml", "[data]\nsrc_langg = \"zh\"\n");
    let out = run(&["pipeline", "run", "--config", s(&unknown)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("src_langg"));
    let missing = write(dir.path(), "m.toml", "[data]\nmono = \"gone.vi\"\n");
    let out = run(&["pipeline", "run", "--config", s(&missing)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.mono"));
}
