use std::path::Path;
use std::process::{Command, Output};

use mfgan_core::autodiff::{read_checkpoint, write_checkpoint, Activation, Embedding, Mlp, ParamVector};
use mfgan_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mfgan(out_root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfgan"))
        .args(args)
        .env("MFGAN_OUT_DIR", out_root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gan_demo_identity_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfgan(dir.path(), &["gan-demo"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("gan-demo/metrics.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    assert_eq!(row[0], -(4f64.ln()));
    assert_eq!(row[2], 0.0);
    assert!(stdout(&o).contains("-1.386294e0"));
}

#[test]
fn mfg_train_zero_iterations_writes_manifest_and_empty_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfgan(dir.path(), &["mfg-train", "--dim", "1", "--outer", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = dir.path().join("mfg-train");
    let csv = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv, "outer_iter,l_fp,l_hjb,l_init,l_term,penalty_u,rel_l2_u,rel_l2_m,hbar\n");
    let manifest = std::fs::read_to_string(run.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = mfg-train") && manifest.contains("outer = 0") && manifest.contains("seed = 0"));
    assert!(manifest.starts_with(&format!("# mfgan-cli {}", env!("CARGO_PKG_VERSION"))));
    let ck = read_checkpoint(run.join("checkpoints/final_u.ckpt")).unwrap();
    assert_eq!(ck.net.param_count(), ck.params.len());
}

#[test]
fn config_errors_exit_with_code_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (args, key) in [
        (vec!["mfg-train", "--set", "solver.momentum=0.9"], "solver.momentum"),
        (vec!["mfg-train", "--optimizer", "lbfgs"], "solver.optimizer"),
        (vec!["sde-compare", "--etas", "0.1,zero"], "study.etas"),
        (vec!["fdr-probe", "--mode", "gd"], "probe.mode"),
    ] {
        let o = mfgan(dir.path(), &args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).contains(key), "{args:?}: {}", stderr(&o));
    }
    let o = mfgan(dir.path(), &["mfg-train", "--momentum", "0.9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--momentum"));

    let cfg = dir.path().join("bad.txt");
    std::fs::write(&cfg, "[run]\ncommand = gan-demo\n[densities]\nweights = 1, 2\n").unwrap();
    let o = mfgan(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("densities.weights"));
}

#[test]
fn numerical_abort_exits_with_code_two_and_checkpoint_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfgan(
        dir.path(),
        &["mfg-train", "--outer", "20", "--lr-d", "1e300", "--hidden", "4", "--batch-d", "8", "--batch-g", "8"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let err = stderr(&o);
    let path = err.split("last finite state in ").nth(1).unwrap().trim();
    let ck = read_checkpoint(path).unwrap();
    assert!(ck.params.iter().all(|v| v.is_finite()));
}

#[test]
fn manifest_reruns_reproduce_metrics_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let recipes: Vec<Vec<&str>> = vec![
        vec!["mfg-train", "--outer", "30", "--hidden", "6,6", "--batch-d", "16", "--batch-g", "16", "--log-every", "5", "--seed", "4"],
        vec!["mfg-train", "--kind", "time-dependent", "--outer", "10", "--hidden", "6", "--batch-d", "16", "--batch-g", "16", "--log-every", "3"],
        vec!["sde-compare", "--replicas", "2000", "--etas", "0.1,0.05", "--seed", "11"],
        vec!["fdr-probe", "--steps", "4000", "--etas", "0.04,0.02", "--mode", "alt"],
        vec!["fdr-probe", "--steps", "4000", "--source", "sde", "--beta", "50", "--thin", "10"],
        vec!["schedule-demo", "--source", "training", "--steps", "500", "--seed", "2"],
        vec!["gan-demo", "--random-pairs", "10", "--seed", "5"],
    ];
    for (i, recipe) in recipes.iter().enumerate() {
        let first = dir.path().join(format!("a{i}"));
        let mut args = recipe.clone();
        let out = first.to_str().unwrap().to_string();
        args.extend(["--out-dir", &out]);
        let o = mfgan(dir.path(), &args);
        assert!(o.status.success(), "{recipe:?}: {}", stderr(&o));

        // rerun from the manifest, sequentially, into a different directory
        let second = dir.path().join(format!("b{i}"));
        let manifest = first.join("manifest.txt");
        let o = mfgan(
            dir.path(),
            &["run", "--config", manifest.to_str().unwrap(), "--set", &format!("out_dir={}", second.display()), "--set", "parallel=false"],
        );
        assert!(o.status.success(), "{recipe:?}: {}", stderr(&o));
        let a = std::fs::read(first.join("metrics.csv")).unwrap();
        let b = std::fs::read(second.join("metrics.csv")).unwrap();
        assert!(a.len() > 100, "{recipe:?}");
        assert_eq!(a, b, "{recipe:?}");
    }
}

#[test]
fn out_dir_defaults_to_environment_root() {
    let dir = tempfile::tempdir().unwrap();
    let o = mfgan(dir.path(), &["schedule-demo", "--steps", "5"]);
    assert!(o.status.success());
    assert!(dir.path().join("schedule-demo/metrics.csv").exists());
    let csv = std::fs::read_to_string(dir.path().join("schedule-demo/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

fn small_net() -> Mlp {
    Mlp::new(2, &[3], 1, Activation::Tanh, Embedding::Torus).unwrap()
}

#[test]
fn checkpoint_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let net = small_net();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = net.init(&mut rng);
    let path = dir.path().join("net.ckpt");
    write_checkpoint(&path, &net, &params).unwrap();
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back.net, net);
    assert!(back.params.iter().zip(params.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));

    // a 10⁴-entry vector of arbitrary bit patterns
    let wide = Mlp::from_widths(1, vec![1, 3333, 1], Activation::Identity, Embedding::None, 0).unwrap();
    let values: Vec<f64> = (0..wide.param_count()).map(|_| f64::from_bits(rng.random::<u64>() >> 2)).collect();
    assert_eq!(values.len(), 10_000);
    let params = ParamVector(values);
    write_checkpoint(&path, &wide, &params).unwrap();
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back.params.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), params.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn empty_parameter_vector_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.ckpt");
    let net = Mlp::from_widths(1, vec![1], Activation::Identity, Embedding::None, 0).unwrap();
    assert_eq!(net.param_count(), 0);
    write_checkpoint(&path, &net, &ParamVector(vec![])).unwrap();
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back.net, net);
    assert!(back.params.is_empty());
}

#[test]
fn truncated_checkpoint_names_missing_section() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let net = small_net();
    write_checkpoint(&path, &net, &net.init(&mut ChaCha8Rng::seed_from_u64(2))).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    for cut in [bytes.len() - 3, bytes.len() / 2, 10, 0] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        match read_checkpoint(&path) {
            Err(Error::Checkpoint { offset, message }) => {
                assert!(offset <= cut, "offset {offset} past {cut}");
                assert!(message.contains("section") || message.contains("truncated") || message.contains("missing"), "{message}");
            }
            other => panic!("cut {cut}: expected a parse error, got {other:?}"),
        }
    }
}
