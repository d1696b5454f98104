use std::time::Duration;

use reach_synth::bench::preset;
use reach_synth::certify::{check_exact_rules, default_horizon, simulate_many};
use reach_synth::io::{
    certificate_from_json, certificate_to_json, problem_from_json, problem_to_json,
};
use reach_synth::solver::SolverConfig;
use reach_synth::synth::{synthesize, SynthConfig, Verdict};

fn cfg() -> SynthConfig {
    SynthConfig::new(SolverConfig::resolve(None).with_timeout(Duration::from_secs(30)))
}

#[test]
fn preset_roundtrip_synth_check_simulate() {
    let p = preset("grid4x4").unwrap();
    let p = problem_from_json(&problem_to_json(&p)).unwrap();
    let run = synthesize(&p, &cfg()).unwrap();
    let Verdict::Sat(cert) = run.verdict else {
        panic!("{:?}", run.verdict)
    };
    let back = certificate_from_json(&p, &certificate_to_json(&p, &cert)).unwrap();
    assert_eq!(back.controller, cert.controller);
    assert!(check_exact_rules(&p, &back).passed());
    let report = simulate_many(&p, &back.controller, 200, 1, default_horizon(&p, &back));
    assert!(report.all_ok(), "{report:?}");
}

#[test]
fn walled_presets_are_unsat() {
    for name in ["grid4x4-walled", "conveyor-blocked"] {
        let run = synthesize(&preset(name).unwrap(), &cfg()).unwrap();
        assert_eq!(run.verdict.kind(), "unsat", "{name}");
    }
}

#[test]
fn certificate_for_other_problem_is_rejected() {
    let p = preset("conveyor").unwrap();
    let Verdict::Sat(cert) = synthesize(&p, &cfg()).unwrap().verdict else {
        panic!()
    };
    let text = certificate_to_json(&p, &cert);
    assert!(certificate_from_json(&preset("grid4x4").unwrap(), &text).is_err());
}
