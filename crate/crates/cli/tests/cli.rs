use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn skelhar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skelhar"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.ini");
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = "\
[corpus]
source = synthetic
subjects = 4
classes = 6
frames = 16

[experiment]
seed = 3
methods = knn, svm
modes = none, centre_mirror

[svm]
epochs = 3
";

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("cells")] {
        let mut names: Vec<_> = fs::read_dir(&sub).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            // manifest.json carries the wall time
            if ext == "csv" || (ext == "json" && p.file_name().unwrap() != "manifest.json") {
                out.push((p.file_name().unwrap().to_string_lossy().into(), fs::read(&p).unwrap()));
            }
        }
    }
    out
}

#[test]
fn grid_of_two_methods_by_two_modes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("a");
    let o = skelhar(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "preconditioning,KNN,SVM");
    assert_eq!(lines.len(), 3);
    let cells: Vec<f64> = lines[1..]
        .iter()
        .flat_map(|l| l.rsplitn(3, ',').take(2).map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect();
    assert_eq!(cells.len(), 4);
    assert!(cells.iter().all(|v| (0.0..=100.0).contains(v)));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["cells"].as_array().unwrap().len(), 4);
    for name in ["knn_none_results.csv", "svm_centre_mirror_table2.csv", "knn_centre_mirror_confusion.svg"] {
        assert!(out.join("cells").join(name).exists(), "{name}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = skelhar(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
    }
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(fa.len() > 10);
    assert_eq!(fa, fb);

    // the echoed configuration reproduces the run
    let c = dir.path().join("c");
    let o = skelhar(&["run", "--config", a.join("config.ini").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_files(&c), fa);
}

#[test]
fn gas_hierarchy_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[corpus]\nsource = synthetic\nsubjects = 2\nclasses = 3\nframes = 20\n\
         [experiment]\nseed = 1\nmethods = gwr, gng\nmodes = centre_mirror\n\
         [gwr]\nmax_nodes = 20\nepochs = 1\nclassify_at = l3_combined\n[gng]\nmax_nodes = 20\nepochs = 1\n",
    );
    let out = dir.path().join("o");
    let o = skelhar(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert!(grid.starts_with("preconditioning,GWR,GNG\n"));
}

#[test]
fn synth_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = skelhar(&["synth", "--out", corpus.to_str().unwrap(), "--seed", "5", "--subjects", "4", "--classes", "3", "--frames", "60"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(corpus.join("data1").join("activityLabel.txt").exists());

    let o = skelhar(&["inspect", corpus.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("subjects (4): 1, 2, 3, 4"), "{text}");
    assert!(text.contains("labels (3):"), "{text}");
    assert!(text.contains("frames: 720"), "{text}");

    let cache = dir.path().join("cache");
    let o = skelhar(&["synth", "--out", cache.to_str().unwrap(), "--seed", "5", "--classes", "3", "--format", "cache"]);
    assert!(o.status.success());
    let o = skelhar(&["inspect", cache.to_str().unwrap()]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().replace(cache.to_str().unwrap(), "X"), text.replace(corpus.to_str().unwrap(), "X"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(skelhar(&["inspect", empty.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(skelhar(&["inspect", dir.path().join("missing").to_str().unwrap()]).status.code(), Some(3));

    let no_seed = write_config(dir.path(), "[corpus]\nsource = synthetic\n");
    assert_eq!(skelhar(&["run", "--config", no_seed.to_str().unwrap()]).status.code(), Some(2));
    let typo = write_config(dir.path(), "[corpus]\nsource = synthetic\n[experiment]\nseed = 1\n[gwr]\nmax_nodez = 3\n");
    assert_eq!(skelhar(&["run", "--config", typo.to_str().unwrap()]).status.code(), Some(2));

    let bad_data = write_config(
        dir.path(),
        &format!("[corpus]\nsource = cad60\npath = {}\n[experiment]\nseed = 1\n", empty.display()),
    );
    assert_eq!(skelhar(&["run", "--config", bad_data.to_str().unwrap()]).status.code(), Some(3));
}
