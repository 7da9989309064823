mod common;

use apac_sim::{check_stf, sequential_execute, Ablation, Program, ScheduleRequest, SimConfig};
use common::{stf, NATIVE_STDOUT};

#[test]
fn sequential_interpretation_matches_native_runs() {
    for (name, expected) in NATIVE_STDOUT {
        let p = stf(name);
        let state = sequential_execute(&Program::sequential(&p).unwrap(), &SimConfig::default()).unwrap();
        assert_eq!(state.stdout, *expected, "{name}");
    }
}

#[test]
fn eager_run_of_annotated_program_matches_original() {
    for (name, _) in NATIVE_STDOUT {
        let p = stf(name);
        let cfg = SimConfig::default();
        let original = sequential_execute(&Program::sequential(&p).unwrap(), &cfg).unwrap();
        let tasked = sequential_execute(&Program::tasked(&p, &Ablation::default()).unwrap(), &cfg).unwrap();
        assert_eq!(original.first_difference(&tasked), None, "{name}");
    }
}

#[test]
fn every_schedule_matches_sequential() {
    for strategy in ["none", "depth:2", "count:3"] {
        let cfg = SimConfig::default().with_strategy(strategy.parse().unwrap());
        for (name, _) in NATIVE_STDOUT {
            let report = check_stf(&stf(name), &Ablation::default(), &cfg, ScheduleRequest::All, 2024).unwrap();
            assert!(report.graph.is_acyclic());
            let first = report.verdicts.iter().find_map(|v| v.divergence.clone());
            assert_eq!(report.divergences(), 0, "{name} under {strategy}: {first:?}");
        }
    }
}
