use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nrr_cli::{ExperimentConfig, Manifest, Overrides, Pipeline, MANIFEST_FILE, SEED_ENV};
use nrr_core::features::{apply_scaler, read_samples, write_samples, Scaler};

const TINY: &str = r#"
master_seed = 7
seeds = [1, 2]

[grid]
sites = ["waiotu", "mahana"]
soil_water_levels = [67.0]
soil_fertility_levels = [4.0]
irrigation_levels = [false]
years = { first = 2008, last = 2010 }
months = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]
days = [15]
n_amounts = [0.0, 20.0]

[split]
validation_years = [2009]
test_years = [2010]

[mlp]
hidden = [8]
epochs = 3

[ae]
encoder = [16, 8, 4]
ae_epochs = 2
head_hidden = [4]
head_epochs = 2

[dae]
encoder = [16, 8, 4]
head_hidden = [4]
epochs = 2

[forest.space]
n_estimators = [5, 12]
max_depth = [2, 4]
min_samples_split = [2, 10]
min_samples_leaf = [1, 5]

[forest.bo]
iterations = 4
initial = 3
candidates = 16
folds = 2
"#;

fn nrr(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nrr"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove(SEED_ENV)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn pipeline(out: &Path, text: &str) -> Pipeline {
    let cfg = ExperimentConfig::from_toml(text, None)
        .unwrap()
        .apply(&Overrides {
            output_dir: Some(out.to_path_buf()),
            ..Default::default()
        })
        .unwrap();
    Pipeline::new(cfg)
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_master_seed_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("master_seed = 7", ""));
    let o = nrr(&["generate"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("master_seed"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), &format!("{TINY}\n[ae.extra]\nx = 1\n"));
    assert_eq!(
        nrr(&["generate"], &cfg, &dir.path().join("out"))
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn seed_environment_variable_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("master_seed = 7", ""));
    let o = Command::new(env!("CARGO_BIN_EXE_nrr"))
        .args(["generate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .env(SEED_ENV, "7")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let m = Manifest::require(
        &dir.path().join("out/generate"),
        "generate",
        &pipeline(dir.path(), TINY).config.generate_hash(),
    )
    .unwrap();
    assert_eq!(m.master_seed, 7);
}

#[test]
fn downstream_stages_need_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), TINY);
    for stage in ["preprocess", "train", "evaluate", "report"] {
        let o = nrr(&[stage], &cfg, &out);
        assert_eq!(o.status.code(), Some(3), "{stage}: {}", stderr(&o));
    }
    assert!(nrr(&["generate"], &cfg, &out).status.success());
    assert!(nrr(&["preprocess"], &cfg, &out).status.success());
    assert!(
        nrr(&["train", "--model", "mlp", "--seeds", "1"], &cfg, &out)
            .status
            .success()
    );

    // A changed model section invalidates the trained outputs but not the data.
    let changed = write_config(dir.path(), &TINY.replace("epochs = 3", "epochs = 4"));
    let o = nrr(
        &["evaluate", "--model", "mlp", "--seeds", "1"],
        &changed,
        &out,
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains("different configuration"),
        "{}",
        stderr(&o)
    );

    // Seeds that were never trained.
    let o = nrr(
        &["evaluate", "--model", "mlp", "--seeds", "1,2"],
        &cfg,
        &out,
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    // A changed seed changes the data; everything downstream is stale.
    let reseeded = write_config(
        dir.path(),
        &TINY.replace("master_seed = 7", "master_seed = 8"),
    );
    assert_eq!(nrr(&["preprocess"], &reseeded, &out).status.code(), Some(3));
}

#[test]
fn diverging_training_exits_4_and_names_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = format!("{TINY}\n[mlp.optimizer]\nkind = \"adam\"\nlr = 1e100\n");
    let cfg = write_config(dir.path(), &text);
    assert!(nrr(&["generate"], &cfg, &out).status.success());
    assert!(nrr(&["preprocess"], &cfg, &out).status.success());
    let o = nrr(&["train", "--model", "mlp"], &cfg, &out);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let msg = stderr(&o);
    assert!(msg.contains("mlp") && msg.contains("seed"), "{msg}");
    assert!(!out.join("train/mlp").join(MANIFEST_FILE).exists());
}

#[test]
fn train_writes_one_checkpoint_per_seed_and_site() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), TINY);
    assert!(nrr(&["generate"], &cfg, &out).status.success());
    assert!(nrr(&["preprocess"], &cfg, &out).status.success());
    let o = nrr(&["train", "--model", "dae", "--seeds", "1..5"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    for site in ["waiotu", "mahana"] {
        for seed in 1..=5 {
            assert!(out
                .join(format!("train/dae/{site}_seed{seed}.ckpt.json"))
                .is_file());
            assert!(out
                .join(format!("train/dae/{site}_seed{seed}.log.csv"))
                .is_file());
        }
    }
    let m: Manifest = serde_json::from_str(
        &std::fs::read_to_string(out.join("train/dae").join(MANIFEST_FILE)).unwrap(),
    )
    .unwrap();
    assert_eq!(
        m.files
            .iter()
            .filter(|f| f.name.ends_with(".ckpt.json"))
            .count(),
        10
    );
}

#[test]
fn run_all_matches_stage_by_stage_and_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path(), TINY);
    let o = nrr(&["run-all", "--jobs", "2"], &cfg, &a.path().join("out"));
    assert!(o.status.success(), "{}", stderr(&o));
    for stage in ["generate", "preprocess", "train", "evaluate", "report"] {
        let o = nrr(&[stage], &cfg, &b.path().join("out"));
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let ta = tree(&a.path().join("out"));
    assert_eq!(ta, tree(&b.path().join("out")));

    // Rerunning a stage in place reproduces its files.
    assert!(nrr(&["generate"], &cfg, &a.path().join("out"))
        .status
        .success());
    assert_eq!(ta, tree(&a.path().join("out")));

    let metrics = String::from_utf8(ta[Path::new("report/metrics.csv")].clone()).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    for model in ["rf", "mlp", "ae", "dae"] {
        for site in ["waiotu", "mahana"] {
            assert!(
                rows.iter()
                    .any(|r| r.starts_with(&format!("{model},{site},"))),
                "{model} {site}"
            );
        }
    }
}

#[test]
fn preprocess_never_reads_post_fertilization_days() {
    let clean = tempfile::tempdir().unwrap();
    let dirty = tempfile::tempdir().unwrap();
    let pc = pipeline(clean.path(), TINY);
    let pd = pipeline(dirty.path(), TINY);
    pc.generate().unwrap();
    pc.preprocess().unwrap();
    let gm = pd.generate().unwrap();

    // Fertilization date of every scenario.
    let gen = pd.generate_dir();
    let mut fert: BTreeMap<String, String> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(gen.join("scenarios.csv")).unwrap();
    for rec in rdr.records() {
        let r = rec.unwrap();
        let date = format!(
            "{}-{:02}-{:02}",
            &r[6],
            r[7].parse::<u32>().unwrap(),
            r[8].parse::<u32>().unwrap()
        );
        fert.insert(r[0].to_string(), date);
    }

    const SENTINEL: &str = "987654.321";
    let mut poisoned = 0;
    for site in ["waiotu", "mahana"] {
        let path = gen.join(format!("daily_{site}.csv"));
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let header = rdr.headers().unwrap().clone();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let r = rec.unwrap();
            let mut fields: Vec<String> = r.iter().map(str::to_string).collect();
            // ISO dates compare correctly as strings.
            if fields[1].as_str() >= fert[&fields[0]].as_str() {
                for f in &mut fields[2..] {
                    *f = SENTINEL.to_string();
                }
                poisoned += 1;
            }
            rows.push(fields);
        }
        let mut w = csv::Writer::from_path(&path).unwrap();
        w.write_record(&header).unwrap();
        for r in rows {
            w.write_record(&r).unwrap();
        }
        w.flush().unwrap();
    }
    assert!(poisoned > 0);
    let names: Vec<String> = gm.files.iter().map(|f| f.name.clone()).collect();
    Manifest::write(
        &gen,
        "generate",
        gm.config_hash.clone(),
        gm.master_seed,
        gm.details.clone(),
        &names,
    )
    .unwrap();

    pd.preprocess().unwrap();
    let sentinel: f64 = SENTINEL.parse().unwrap();
    for site in ["waiotu", "mahana"] {
        for part in ["train", "validation", "test"] {
            let name = format!("samples_{site}_{part}.csv");
            for s in read_samples(&pd.preprocess_dir().join(&name)).unwrap() {
                assert!(s.features.values().iter().all(|v| *v != sentinel), "{name}");
            }
            for prefix in ["samples", "scaled"] {
                let name = format!("{prefix}_{site}_{part}.csv");
                assert_eq!(
                    std::fs::read(pc.preprocess_dir().join(&name)).unwrap(),
                    std::fs::read(pd.preprocess_dir().join(&name)).unwrap(),
                    "{name}"
                );
            }
        }
    }
}

#[test]
fn split_years_and_scaler_sidecar_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(dir.path(), TINY);
    p.generate().unwrap();
    let m = p.preprocess().unwrap();
    for site in ["waiotu", "mahana"] {
        let d = &m.details["sites"][site];
        assert_eq!(d["train"]["years"], serde_json::json!([2008]));
        assert_eq!(d["validation"]["years"], serde_json::json!([2009]));
        assert_eq!(d["test"]["years"], serde_json::json!([2010]));

        let pre = p.preprocess_dir();
        let scaler = Scaler::load(&pre.join(format!("scaler_{site}.csv"))).unwrap();
        for part in ["train", "validation", "test"] {
            let raw = read_samples(&pre.join(format!("samples_{site}_{part}.csv"))).unwrap();
            let again = dir.path().join("again.csv");
            write_samples(&again, &apply_scaler(&scaler, &raw).unwrap()).unwrap();
            assert_eq!(
                std::fs::read(&again).unwrap(),
                std::fs::read(pre.join(format!("scaled_{site}_{part}.csv"))).unwrap()
            );
        }
    }
}

#[test]
fn desk_grid_yields_768_labeled_samples() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/desk.toml"
    ))
    .unwrap();
    let m = pipeline(dir.path(), &text).generate().unwrap();
    assert_eq!(m.details["scenarios"], 1152);
    assert_eq!(m.details["labeled"], 768);
    let labels = std::fs::read_to_string(dir.path().join("generate/labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 769);
}
