use dpnls_cli::{run, Command, RunConfig};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dpnls-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn cfg_in(dir: &Path, extra: &[&str]) -> RunConfig {
    let mut o: Vec<String> = vec![format!("output.dir=\"{}\"", dir.display())];
    o.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::from_str_with("", &o).unwrap()
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "csv") {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn resolved_config_echoes_alpha_and_sigma() {
    let c = RunConfig::from_str_with("[params]\nd = 1\np = 3.0\n", &[]).unwrap();
    let d = c.derived().unwrap();
    assert_eq!(d.alpha, 1.0);
    assert!((d.sigma - 2.0 / 3.0).abs() < 1e-15);
    let text = c.resolved_toml().unwrap();
    assert!(text.contains("[derived]\nalpha = 1.0\nsigma = 0.6666666666666666\n"), "{text}");
    // the echo parses back to the same configuration
    let body = text.split("\n[derived]").next().unwrap();
    assert_eq!(RunConfig::from_str_with(body, &[]).unwrap(), c);
}

#[test]
fn invalid_parameters_are_rejected() {
    for bad in [
        "[params]\np = 5.0",
        "[params]\np = 1.0",
        "[params]\nd = 4",
        "[params]\nd = 2\np = 3.0",
        "[params]\nepsilon = 2",
        "[params]\nK = 0",
        "[numerics]\nscheme = \"rk4\"",
        "[numerics]\nt1 = 0.5",
        "[numerics]\ndt = -1e-3",
        "[numerics]\nlambda0 = 1.5",
        "[numerics]\nt_stop_factor = 1.0",
        "[numerics]\ndecompose_every = 0",
        "[numerics]\nN = 8",
    ] {
        assert!(RunConfig::from_str_with(bad, &[]).is_err(), "{bad}");
    }
    let e = RunConfig::from_str_with("[params]\np = 5.0", &[]).unwrap_err().to_string();
    assert!(e.contains("p = 5"), "{e}");
}

#[test]
fn unknown_keys_are_rejected() {
    for bad in ["[params]\nq = 1", "[numerics]\nNN = 3", "[plots]\nwidth = 3", "top = 1"] {
        let e = RunConfig::from_str_with(bad, &[]).unwrap_err().to_string();
        assert!(e.contains("unknown"), "{bad}: {e}");
    }
    assert!(RunConfig::from_str_with("", &["params.zz=1".into()]).is_err());
    assert!(RunConfig::from_str_with("", &["nodot=1".into()]).is_err());
    assert!(RunConfig::from_str_with("", &["params.d".into()]).is_err());
}

#[test]
fn missing_file_names_the_path() {
    let p = Path::new("/nonexistent/dpnls/run.toml");
    let e = RunConfig::load(Some(p), &[]).unwrap_err().to_string();
    assert!(e.contains("/nonexistent/dpnls/run.toml"), "{e}");
}

#[test]
fn every_key_is_read_from_file_and_flags() {
    let text = r#"
[params]
d = 2
p = 1.5
epsilon = -1
K = 3
E0 = 0.25

[numerics]
N = 1000
R_max = 25.0
evolve_N = 600
evolve_R_max = 35.0
dt = 1e-3
scheme = "midpoint"
implicit_tol = 1e-12
A = 5.0
lambda0 = 0.05
s1 = 200.0
t1 = -1e-6
t_stop_factor = 10.0
decompose_every = 4
frame_kappa = 0.25
tube = 0.2
qm_N = 3000
qm_R_max = 90.0
defocus_N = 700
defocus_R_max = 60.0
defocus_dt = 2e-3
defocus_t_end = 4.0

[output]
dir = "somewhere"
"#;
    let c = RunConfig::from_str_with(text, &[]).unwrap();
    let (p, n) = (&c.params, &c.numerics);
    assert_eq!((p.d, p.p, p.epsilon, p.k, p.e0), (2, 1.5, -1, 3, 0.25));
    assert_eq!((n.n, n.r_max, n.evolve_n, n.evolve_r_max, n.dt), (1000, 25.0, 600, 35.0, 1e-3));
    assert_eq!((n.scheme.as_str(), n.implicit_tol, n.a, n.lambda0, n.s1), ("midpoint", 1e-12, 5.0, 0.05, 200.0));
    assert_eq!((n.t1, n.t_stop_factor, n.decompose_every, n.frame_kappa, n.tube), (Some(-1e-6), 10.0, 4, 0.25, 0.2));
    assert_eq!((n.qm_n, n.qm_r_max, n.defocus_n, n.defocus_r_max), (3000, 90.0, 700, 60.0));
    assert_eq!((n.defocus_dt, n.defocus_t_end), (2e-3, 4.0));
    assert_eq!(c.output.dir, PathBuf::from("somewhere"));
    assert_eq!(c.scheme().unwrap(), dpnls::evolve::Scheme::ImplicitMidpoint);
    // flags override the file; bare strings need no quotes
    let o: Vec<String> = ["params.K=1", "numerics.scheme=split", "numerics.dt = 4e-3", "output.dir=\"x\""]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let c = RunConfig::from_str_with(text, &o).unwrap();
    assert_eq!((c.params.k, c.numerics.scheme.as_str(), c.numerics.dt), (1, "split", 4e-3));
    assert_eq!(c.output.dir, PathBuf::from("x"));
    // defaults
    let d = RunConfig::default();
    assert_eq!((d.params.d, d.params.p, d.params.epsilon, d.params.k, d.params.e0), (1, 3.0, 1, 2, 0.0));
    assert_eq!(d.numerics.t1, None);
    assert_eq!(d.scheme().unwrap(), dpnls::evolve::Scheme::SplitStep4);
}

#[test]
fn identical_configs_give_identical_files() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for dir in [&a, &b] {
        let c = cfg_in(dir, &["params.E0=0.1", "numerics.lambda0=0.08", "numerics.s1=150", "numerics.N=1024"]);
        assert!(run(Command::LawIntegrate, &c).unwrap().passed());
        let c = cfg_in(dir, &["numerics.defocus_N=256", "numerics.defocus_R_max=30", "numerics.defocus_t_end=0.5", "numerics.defocus_dt=1e-2"]);
        run(Command::DefocusingSanity, &c).unwrap();
    }
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    assert!(fa.contains_key("law.csv") && fa.contains_key("defocusing.csv") && fa.contains_key("summary_law-integrate.csv"));
    assert_eq!(fa, fb);
    let law = String::from_utf8(fa["law.csv"].clone()).unwrap();
    assert!(law.starts_with("s,t,lambda,b,gamma,lambda_app,b_app,invariant_E\n1.5000000000000000e2,"));
}

#[test]
fn report_collects_summaries() {
    let dir = scratch("report");
    let c = cfg_in(&dir, &["numerics.N=512", "numerics.qm_N=2048", "numerics.qm_R_max=120"]);
    let gs = run(Command::Groundstate, &c).unwrap();
    // coarse grid: the closed-form comparison fails, the solitary-wave checks pass
    assert!(!gs.passed());
    assert!(gs.checks.iter().filter(|k| k.criterion == 11).all(|k| k.passed));
    let c = cfg_in(&dir, &["numerics.evolve_N=256", "numerics.evolve_R_max=20", "numerics.dt=1e-2"]);
    let ev = run(Command::EvolveValidate, &c).unwrap();
    let rep = run(Command::Report, &c).unwrap();
    assert_eq!(rep.checks.len(), gs.checks.len() + ev.checks.len());
    assert!(!rep.passed());
    let table = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(table.starts_with("command,criterion,check,value,threshold,passed\n"));
    assert!(table.contains("\ngroundstate,1,q_sup_error,") && table.contains("\nevolve-validate,8,rel_l2_error,"));
    assert!(!dir.join("summary_report.csv").exists());
    assert!(std::fs::read_to_string(dir.join("config_groundstate.toml")).unwrap().contains("[derived]"));
}

#[test]
fn small_commands_produce_their_tables() {
    let dir = scratch("small");
    let c = cfg_in(&dir, &["numerics.N=512", "params.K=1"]);
    let lin = run(Command::LinopsAudit, &c).unwrap();
    assert!(lin.checks.iter().filter(|k| k.criterion == 3).all(|k| k.passed));
    let prof = run(Command::ProfileBuild, &c).unwrap();
    assert!(prof.checks.iter().any(|k| k.name == "beta" && k.passed));
    for f in ["linops.csv", "coercivity.csv", "profile_systems.csv", "residual_scaling.csv", "profile/profile_manifest.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}

#[test]
fn short_minimal_mass_run_writes_artifacts() {
    let dir = scratch("mm");
    let c = cfg_in(
        &dir,
        &[
            "numerics.evolve_N=256",
            "numerics.evolve_R_max=25",
            "numerics.t1=-4e-7",
            "numerics.t_stop_factor=1.1",
            "numerics.decompose_every=5",
            "numerics.A=5",
            "numerics.frame_kappa=0.4",
            "numerics.tube=0.5",
            "numerics.scheme=split",
        ],
    );
    let out = run(Command::MinimalMass, &c).unwrap();
    // far less than a decade of λ: the rate checks fail, the run itself is healthy
    assert!(!out.passed());
    assert!(out.checks.iter().any(|k| k.name == "stopped_on_scale" && k.passed));
    assert!(out.checks.iter().any(|k| k.name == "S_floor_violations" && k.passed));
    let traj = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("t,s,lambda,b,gamma,grad_norm,mass_drift,energy_drift,eps_H1,mod_resid,S_lyapunov"));
    let t0: f64 = lines.next().unwrap().split(',').next().unwrap().parse().unwrap();
    assert_eq!(t0, -4e-7);
    let an = std::fs::read_to_string(dir.join("analysis.csv")).unwrap();
    assert!(an.starts_with("s,t,lambda,b,gamma,eps_l2,eps_h1,mod1,mod2,mod3,H,J,S,inner_eps_Q\n"));
    assert!(std::fs::read_to_string(dir.join("rate_fit.csv")).unwrap().starts_with("quantity,exponent,expected,"));
    assert!(std::fs::read_to_string(dir.join("minimal_mass.csv")).unwrap().contains("\nReached,"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dpnls");
    let dir = scratch("bin");
    let set_dir = format!("output.dir=\"{}\"", dir.display());
    let ok = Process::new(bin).args(["law-integrate", "--set", &set_dir]).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 8);
    assert!(stdout.lines().all(|l| l.starts_with("PASS [")), "{stdout}");
    let bad = Process::new(bin).args(["groundstate", "--set", "params.p=5"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("p = 5"));
    let missing = Process::new(bin).args(["report", "-c", "/no/such/file.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/no/such/file.toml"));
    let fail = Process::new(bin)
        .args(["evolve-validate", "--set", &set_dir, "--set", "numerics.evolve_N=128", "--set", "numerics.dt=0.05"])
        .output()
        .unwrap();
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stdout).contains("FAIL [8]"));
    let echo = Process::new(bin).args(["report", "--print-config"]).output().unwrap();
    assert!(String::from_utf8_lossy(&echo.stdout).contains("sigma = 0.6666666666666666"));
}
