use seqmem::config::RunConfig;
use seqmem::exec::Exec;
use seqmem::tasklab::{Run, Summary};

const CONFIG: &str = r#"
task = "discrete"
seed = 3

[discrete]
orders = [3]
groups_per_order = 1
elements = 3000
"#;

#[test]
fn toml_config_runs_to_a_learned_summary() {
    let cfg = RunConfig::from_toml_str(CONFIG).unwrap();
    let mut run = Run::new(&cfg).unwrap();
    let mut ends = 0;
    while !run.is_done() {
        ends += run.step().unwrap().is_end as usize;
    }
    assert_eq!(run.position(), 3000);
    let Summary::Discrete(s) = run.summary(Exec::Sequential).unwrap() else {
        panic!("expected a discrete summary")
    };
    assert_eq!(s.sequences, ends);
    assert_eq!(s.accuracy_ma100, 1.0);
    assert!(s.elements_to_threshold.is_some());
}

#[test]
fn echoed_config_parses_back_to_itself() {
    let cfg = RunConfig::from_toml_str(CONFIG).unwrap();
    assert_eq!(RunConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    let taxi = RunConfig::taxi();
    assert_eq!(RunConfig::from_toml_str(&taxi.to_toml()).unwrap(), taxi);
}

#[test]
fn unknown_fields_name_their_path() {
    let err = RunConfig::from_toml_str("[discrete]\nelementz = 3\n").unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains("discrete"), "{err}");
}
