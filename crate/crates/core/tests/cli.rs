use std::fs;
use std::process::Command;

fn dispatch(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dispatch")).args(args).output().unwrap()
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = dispatch(&[
            "sweep",
            "--models",
            "dtm,sto,rob,sce",
            "--remove",
            "20%/center",
            "--pi-dr",
            "80:120:20",
            "--n-scenarios",
            "200",
            "--n-test",
            "300",
            "--seed-train",
            "1",
            "--seed-test",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read_to_string(out.join("results.csv")).unwrap());
        assert!(out.join("config.json").exists());
        assert!(out.join("plot_recipe.py").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
    let header = outputs[0].lines().next().unwrap();
    assert_eq!(
        header,
        "pi_dr,model,removal,p,dispatch_cost,expected_cost,h_star,realization_cost,total_dr,\
         p_balance_vio,p_branch_vio,p_h_vio,epsilon_bound,status,config_hash"
    );
    // 3 prices x 4 variants.
    assert_eq!(outputs[0].lines().count(), 1 + 12);
}

#[test]
fn usage_errors() {
    let o = dispatch(&["sweep", "--seed-train", "5", "--seed-test", "5"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seeds must differ"));
    let o = dispatch(&["sweep", "--models", ""]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("model list is empty"));
    let o = dispatch(&["sweep", "--models", "foo"]);
    assert!(!o.status.success());
}

#[test]
fn risk_command_prints_closed_form() {
    let o = dispatch(&["risk", "--n", "1000", "--p", "0", "--d", "1", "--beta", "1e-5"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let eps: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("epsilon = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((eps - (1.0 - 1e-5f64.powf(1e-3))).abs() < 1e-8);
}

#[test]
fn exported_scenarios_reimport_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = dispatch(&["sample", "--n-scenarios", "50", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let train = dir.path().join("train.csv");
    let run = |extra: &[&str], sub: &str| {
        let d = dir.path().join(sub);
        let mut args = vec!["sweep", "--models", "sce", "--pi-dr", "100", "--n-test", "100", "--out", d.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = dispatch(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(d.join("results.csv")).unwrap()
    };
    let sampled = run(&["--n-scenarios", "50"], "s");
    let imported = run(&["--n-scenarios", "50", "--scenarios", train.to_str().unwrap()], "i");
    // Same numbers; only the config hash differs.
    let strip = |s: &str| s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&sampled), strip(&imported));
}

#[test]
fn fit_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("obs.csv");
    let o = dispatch(&["sample", "--n-scenarios", "4000", "--dist", "1.1,0.2,0.5,1.5", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    fs::rename(dir.path().join("train.csv"), &path).unwrap();
    let o = dispatch(&["fit", "--input", path.to_str().unwrap(), "--lo", "0.5", "--hi", "1.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    let get = |k: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(k))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!((get("mu =") - 1.1).abs() < 0.03);
    assert!((get("sigma =") - 0.2).abs() < 0.03);
}
