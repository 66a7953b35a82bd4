use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedfuse_core::checkpoint;
use fedfuse_core::data::{write_canonical_tsv, LabeledInstance};
use fedfuse_core::eval::{evaluate_model, Approach, ClassScores, F1Report, ReportBuilder, RowKey};
use fedfuse_core::pipeline::{fixture_datasets, FixtureConfig, RunConfig};
use fedfuse_core::{Label, ModelArchitecture, ModelState, TrainingConfig};

fn fedfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedfuse"))
        .args(args)
        .env_remove("FEDFUSE_OUT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fedfuse(args);
    assert!(
        out.status.success(),
        "fedfuse {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_arch() -> ModelArchitecture {
    ModelArchitecture {
        vocab_size: 512,
        embed_dim: 8,
        num_heads: 2,
        num_encoder_layers: 1,
        max_seq_len: 24,
        num_labels: 2,
    }
}

fn small_config(out: &Path) -> RunConfig {
    RunConfig {
        datasets: fixture_datasets()[..2].to_vec(),
        architecture: small_arch(),
        training: TrainingConfig {
            epochs: 2,
            learning_rate: 3e-3,
            ..TrainingConfig::default()
        },
        fixtures: true,
        fixture: FixtureConfig {
            train_size: 120,
            test_size: 40,
            seed: 3,
        },
        output_dir: out.to_path_buf(),
        master_seed: 10,
        ..RunConfig::default()
    }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path
}

#[test]
fn fusing_identical_checkpoints_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelState::init(small_arch(), 4).unwrap();
    let (a, b, f) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"), dir.path().join("f.ckpt"));
    checkpoint::save(model.params(), &a).unwrap();
    fs::copy(&a, &b).unwrap();
    ok(&["fuse", s(&a), s(&b), "-o", s(&f)]);
    assert_eq!(fs::read(&f).unwrap(), fs::read(&a).unwrap());
}

fn test_rows() -> Vec<LabeledInstance> {
    let texts = [
        ("you absolute muppet", Label::Off),
        ("see you at the game tonight", Label::Not),
        ("what a pathetic excuse for a human", Label::Off),
        ("lovely photo!", Label::Not),
        ("@USER shut it", Label::Off),
        ("thanks for the help", Label::Not),
    ];
    texts
        .iter()
        .enumerate()
        .map(|(i, (t, l))| LabeledInstance::new(format!("t{i}"), t, *l, "test").unwrap())
        .collect()
}

#[test]
fn evaluate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), &small_config(dir.path()));
    let base = ModelState::init(small_arch(), 8).unwrap();
    let mut params = base.params().clone();
    params.get_mut("head.bias").unwrap().data_mut()[1] = 0.01;
    params.get_mut("head.weight").unwrap().data_mut()[3] = 2.0;
    let model = base.with_params(params).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    checkpoint::save(model.params(), &ckpt).unwrap();
    let tsv = dir.path().join("test.tsv");
    write_canonical_tsv(&test_rows(), &tsv).unwrap();

    let stdout = ok(&["evaluate", "--config", s(&cfg_path), s(&ckpt), s(&tsv)]);
    let printed: f64 = stdout
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("macro_f1 "))
        .unwrap()
        .parse()
        .unwrap();
    let expected = evaluate_model(&model, &test_rows()).unwrap().macro_f1;
    assert_eq!(printed, expected);
}

#[test]
fn report_matches_golden_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = ReportBuilder::default();
    let score = |m: f64| F1Report {
        macro_f1: m,
        per_class: [ClassScores::default(); 2],
    };
    let pair = ["ahsd".to_string(), "olid".to_string()];
    for (key, runs) in [
        (RowKey::new(Approach::NonFused, &pair[..1], None, "ahsd"), [0.93, 0.91]),
        (RowKey::new(Approach::NonFused, &pair[..1], None, "olid"), [0.70, 0.66]),
        (RowKey::new(Approach::NonFused, &pair[1..], None, "olid"), [0.85, 0.85]),
        (RowKey::new(Approach::Fused, &pair, None, "ahsd"), [0.86, 0.88]),
        (RowKey::new(Approach::FusedFt, &pair, Some("ahsd"), "ahsd"), [0.94, 0.94]),
        (RowKey::new(Approach::FusedFt, &pair, Some("ahsd"), "olid"), [0.83, 0.79]),
        (RowKey::new(Approach::Ensemble, &pair, None, "ahsd"), [0.84, 0.86]),
    ] {
        for r in runs {
            b.add(key.clone(), score(r));
        }
    }
    b.note("Macro F1 mean±std over 2 run(s); std is the population standard deviation (divide by n).");
    let results = dir.path().join("results.json");
    fs::write(&results, b.build().to_json()).unwrap();
    let out = dir.path().join("rendered");
    ok(&["report", s(&results), "-o", s(&out)]);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for name in ["summary.md", "grid.md"] {
        assert_eq!(
            fs::read_to_string(out.join(name)).unwrap(),
            fs::read_to_string(golden.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(fs::read(out.join("results.json")).unwrap(), fs::read(&results).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"runs": 0, "fixtures": true}"#).unwrap();
    let out = fedfuse(&["run", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");

    let missing = dir.path().join("nope.ckpt");
    let out = fedfuse(&["fuse", s(&missing), s(&missing), "-o", s(&dir.path().join("f.ckpt"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);

    assert_eq!(fedfuse(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn architecture_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    checkpoint::save(ModelState::init(small_arch(), 1).unwrap().params(), &ckpt).unwrap();
    let tsv = dir.path().join("t.tsv");
    write_canonical_tsv(&test_rows(), &tsv).unwrap();
    let out = fedfuse(&["evaluate", s(&ckpt), s(&tsv)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("architecture"));
}

/// Stage-by-stage commands reproduce one `run` bit for bit.
#[test]
fn stages_compose_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let run_out = dir.path().join("run");
    let cfg = small_config(&run_out);
    let cfg_path = write_config(dir.path(), &cfg);
    let c = s(&cfg_path);
    ok(&["run", "--config", c]);
    let arch8 = &small_arch().hash()[..8];
    let seed = (cfg.master_seed + 1).to_string();
    let names = ["ahsd", "olid"];

    let stage = dir.path().join("stages");
    let scores = stage.join("scores.jsonl");
    for name in names {
        let data = stage.join(name);
        ok(&["ingest", "--config", c, "--fixtures", "--adapter", name, "-o", s(&data)]);
        let ckpt = stage.join(format!("{name}.ckpt"));
        ok(&["train", "--config", c, "--seed", &seed, "--data", s(&data), "-o", s(&ckpt)]);
        let from_run = run_out.join(format!("runs/1/{name}/local.{arch8}.ckpt"));
        assert_eq!(fs::read(&ckpt).unwrap(), fs::read(&from_run).unwrap(), "{name} local");
    }
    let ckpt = |n: &str| stage.join(format!("{n}.ckpt"));
    let fused = stage.join("fused.ckpt");
    ok(&["fuse", s(&ckpt("ahsd")), s(&ckpt("olid")), "-o", s(&fused)]);
    assert_eq!(
        fs::read(&fused).unwrap(),
        fs::read(run_out.join(format!("runs/1/ahsd+olid/fused.{arch8}.ckpt"))).unwrap()
    );

    let record = |approach: &str, models: &str, ft: Option<&str>, test: &str| {
        let mut v = vec![
            "--append-scores".to_string(),
            s(&scores).to_string(),
            "--approach".into(),
            approach.into(),
            "--models".into(),
            models.into(),
            "--test-name".into(),
            test.into(),
        ];
        if let Some(f) = ft {
            v.extend(["--finetune".to_string(), f.to_string()]);
        }
        v
    };
    let evaluate = |model: &Path, rec: Vec<String>, test: &str| {
        let mut args = vec!["evaluate", "--config", c, s(model), s(&stage.join(test)).to_owned().leak()];
        args.extend(rec.iter().map(|x| x.clone().leak() as &str));
        ok(&args);
    };
    for name in names {
        for test in names {
            evaluate(&ckpt(name), record("non-fused", name, None, test), test);
        }
    }
    for test in names {
        evaluate(&fused, record("fused", "ahsd+olid", None, test), test);
    }
    for name in names {
        let ft = stage.join(format!("ft-{name}.ckpt"));
        let data = stage.join(name);
        ok(&["finetune", "--config", c, "--seed", &seed, s(&fused), "--data", s(&data), "-o", s(&ft)]);
        assert_eq!(
            fs::read(&ft).unwrap(),
            fs::read(run_out.join(format!("runs/1/ahsd+olid/finetuned-{name}.{arch8}.ckpt"))).unwrap()
        );
        for test in names {
            evaluate(&ft, record("fused+FT", "ahsd+olid", Some(name), test), test);
        }
    }
    for test in names {
        let mut args = vec![
            "ensemble".to_string(),
            "--config".into(),
            c.into(),
            s(&ckpt("ahsd")).into(),
            s(&ckpt("olid")).into(),
            "--test".into(),
            s(&stage.join(test)).into(),
        ];
        args.extend(record("ensemble", "ahsd+olid", None, test));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs);
    }
    let rendered = stage.join("report");
    ok(&["report", "--config", c, "--scores", s(&scores), "-o", s(&rendered)]);
    assert_eq!(
        fs::read_to_string(rendered.join("results.json")).unwrap(),
        fs::read_to_string(cfg.report_dir().join("results.json")).unwrap()
    );
}
