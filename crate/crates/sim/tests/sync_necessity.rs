mod common;

use apac_sim::{check_stf, Ablation, ScheduleRequest, SimConfig};
use common::stf;

fn divergences(name: &str, ablation: Ablation) -> (usize, bool) {
    let cfg = SimConfig::default().with_strategy("none".parse().unwrap());
    let report = check_stf(&stf(name), &ablation, &cfg, ScheduleRequest::All, 1).unwrap();
    (report.divergences(), report.exhaustive)
}

#[test]
fn intact_fixtures_never_diverge() {
    assert_eq!(divergences("code3_main", Ablation::default()).0, 0);
    assert_eq!(divergences("code4_main", Ablation::default()).0, 0);
}

#[test]
fn freeing_promoted_local_early_diverges() {
    let (n, exhaustive) = divergences(
        "code3_main",
        Ablation {
            inline_cleanup: true,
            ..Ablation::default()
        },
    );
    assert!(exhaustive);
    assert!(n >= 1);
}

#[test]
fn missing_taskwait_diverges() {
    let (n, exhaustive) = divergences(
        "code4_main",
        Ablation {
            drop_syncs: vec![("main".into(), 0)],
            ..Ablation::default()
        },
    );
    assert!(exhaustive);
    assert!(n >= 1);
}

#[test]
fn every_sync_of_code3_is_needed() {
    let (n, _) = divergences(
        "code3_main",
        Ablation {
            drop_all_syncs_in: vec!["main".into()],
            ..Ablation::default()
        },
    );
    assert!(n >= 1);
}
