use nmm_bench::{BenchError, InnerFamily, OuterFamily, Profile};
use nmm_cli::{CliError, Config, Overrides};
use nmm_core::solver::Method;
use nmm_tof::Autocorr;

#[test]
fn empty_config_uses_defaults() {
    let cfg = Config::parse("").unwrap();
    let ov = Overrides::default();
    assert_eq!(cfg.seed(&ov), 42);
    assert_eq!(cfg.profile(&ov).unwrap(), Profile::Desk);
    let b = cfg.bench(&ov).unwrap();
    assert_eq!((b.suite.n, b.suite.restarts, b.suite.cases.len()), (30, 5, 16));
    assert_eq!(b.suite.methods, Method::ALL.to_vec());
    let t = cfg.tof(&ov).unwrap();
    assert_eq!((t.height, t.width, t.downsample, t.align), (48, 48, 2, 2));
    assert_eq!(t.model.frequencies, vec![90e6, 120e6]);
    assert_eq!(t.recon.labels, 128);
    assert_eq!(t.recon.depth_range, (0.5, 6.0));
    assert!(matches!(t.model.autocorr, Autocorr::Trapezoid { p } if p == 0.5));
}

#[test]
fn flags_override_the_file() {
    let cfg = Config::parse("seed = 3\nprofile = \"paper\"\n[tof]\nalpha = 0.2\n").unwrap();
    assert_eq!(cfg.seed(&Overrides::default()), 3);
    assert_eq!(cfg.bench(&Overrides::default()).unwrap().suite.n, 150);
    let ov = Overrides {
        seed: Some(9),
        profile: Some("desk".into()),
        alpha: Some(0.01),
        frequencies_mhz: Some(vec![50.0]),
        ..Overrides::default()
    };
    assert_eq!(cfg.seed(&ov), 9);
    assert_eq!(cfg.bench(&ov).unwrap().suite.n, 30);
    let t = cfg.tof(&ov).unwrap();
    assert_eq!(t.recon.alpha, 0.01);
    assert_eq!(t.model.frequencies, vec![50e6]);
    assert_eq!(t.model.amplitudes, vec![1.0]);
}

#[test]
fn bench_section_is_parsed() {
    let cfg = Config::parse(
        "[bench]\ncases = [\"3a\", \"1d\"]\nmethods = [\"fbs\"]\ninterval = [-2.0, 2.0]\nheatmap = false\n",
    )
    .unwrap();
    let b = cfg.bench(&Overrides::default()).unwrap();
    assert_eq!(
        b.suite.cases,
        vec![(InnerFamily::Difficult, OuterFamily::LocalLs), (InnerFamily::Simple, OuterFamily::Truncated)]
    );
    assert_eq!(b.suite.interval, Some((-2.0, 2.0)));
    assert!(!b.heatmap && b.traces);
}

#[test]
fn schema_errors_name_fields() {
    let err = |text: &str| match Config::parse(text).and_then(|c| c.bench(&Overrides::default()).map(|_| ())) {
        Err(CliError::Schema(m)) => m,
        other => panic!("{other:?}"),
    };
    assert!(err("[bench]\ncases = [\"5a\"]\n").contains("bench.cases[0]"));
    assert!(err("[bench]\ninterval = [1.0, -1.0]\n").contains("bench.interval"));
    assert!(err("[bench]\nn = \"ten\"\n").contains("line 2"));
    assert!(err("[bnech]\n").contains("bnech"));
    assert!(err("profile = \"laptop\"\n").contains("profile"));
    let tof = |text: &str| match Config::parse(text).unwrap().tof(&Overrides::default()) {
        Err(CliError::Schema(m)) => m,
        other => panic!("{other:?}"),
    };
    assert!(tof("[tof]\namplitudes = [1.0]\n").contains("tof.amplitudes"));
    assert!(tof("[tof]\nplateau = 1.5\n").contains("tof.plateau"));
    assert!(tof("[tof]\ninit_depth = 9.0\n").contains("tof.init_depth"));
    assert!(tof("[tof]\nlabels = 1\n").contains("tof.labels"));
}

#[test]
fn exit_codes() {
    let integrity: CliError = BenchError::Integrity {
        case: "1a".into(),
        method: "gd".into(),
        restart: 0,
        e_final: -1.0,
        e_star: 0.0,
    }
    .into();
    assert_eq!(integrity.exit_code(), 2);
    assert_eq!(CliError::Invariants(vec!["descent".into()]).exit_code(), 2);
    assert_eq!(CliError::Schema("x".into()).exit_code(), 1);
    let gen: CliError = BenchError::Generation("x".into()).into();
    assert_eq!(gen.exit_code(), 1);
}
