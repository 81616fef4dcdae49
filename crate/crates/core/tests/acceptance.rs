//! Acceptance criteria, run in sequence by a custom harness so every
//! `criterion N (...): PASS|FAIL` line is printed and the timing criterion is
//! measured on an otherwise idle process. Exits non-zero if any fail.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use flightwatch::detectors::*;
use flightwatch::ensemble::{decide, vote, Fusion, Monitor, WindowConfig};
use flightwatch::evalkit::{
    benchmark_latency, run_experiment, suite_run, train, training_corpus, ExperimentConfig, ExperimentReport,
    SuiteKind,
};
use flightwatch::phases::{segment, MissionPhase, PhaseConfig};
use flightwatch::rules::{
    check_latency, mine_frequent, mine_rules, Item, ItemKind, LatencyRule, MiningConfig, RuleSet, Subject,
    Transaction, Violation, ViolationKind,
};
use flightwatch::simkit::{base_mission, simulate};
use flightwatch::telemetry::{CommandEvent, Feature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {n} ({name}): {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn criterion_1_apriori_matches_exhaustive_enumeration() -> bool {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..100 {
        let items = rng.random_range(1..=12u32);
        let n = rng.random_range(1..=50);
        let density = rng.random_range(0.1..0.7);
        let sets: Vec<BTreeSet<u32>> = (0..n)
            .map(|_| (0..items).filter(|_| rng.random_bool(density)).collect())
            .collect();
        let min_support = rng.random_range(0.02..0.6);
        let transactions: Vec<Transaction> = sets
            .iter()
            .map(|s| Transaction {
                items: s
                    .iter()
                    .map(|&v| Item {
                        feature: Feature::WpIndex,
                        kind: ItemKind::Categorical { value: v as f64 },
                    })
                    .collect(),
            })
            .collect();
        let got: BTreeSet<(Vec<u32>, usize)> = mine_frequent(&transactions, min_support, None)
            .unwrap()
            .into_iter()
            .map(|f| {
                assert_eq!(f.total, n);
                let ids = f
                    .items
                    .iter()
                    .map(|i| match i.kind {
                        ItemKind::Categorical { value } => value as u32,
                        ItemKind::RangeBin { .. } => unreachable!(),
                    })
                    .collect();
                (ids, f.count)
            })
            .collect();
        if got != common::brute_frequent(&sets, min_support) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches == 0 && elapsed < Duration::from_secs(10);
    report(1, "apriori oracle", ok, &format!("mismatches={mismatches}/100 time={elapsed:.2?}"));
    ok
}

fn criterion_2_density_detectors_match_brute_force() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut vote_mismatches, mut worst_lof) = (0usize, 0.0f64);
    let mut queries = 0usize;
    for _ in 0..50 {
        let n = rng.random_range(30..=200);
        let d = rng.random_range(2..=5);
        let train = common::gaussian(&mut rng, n, d);
        let min_pts = rng.random_range(3..=8);
        let k = rng.random_range(3..=15);
        let eps = default_eps(&train, 4, 90.0).unwrap();
        let db = fit_dbscan(&train, eps, min_pts).unwrap();
        let op = fit_optics(&train, min_pts, 99.0).unwrap();
        let lof = fit_lof(&train, k, 1.5).unwrap();

        let mut qs = common::gaussian(&mut rng, 6, d);
        qs.push(train[rng.random_range(0..n)].clone());
        qs.push(vec![50.0; d]);
        for x in qs {
            queries += 1;
            if db.predict(&x).unwrap().is_anomaly() != common::dbscan_is_anomaly(&train, eps, min_pts, &x) {
                vote_mismatches += 1;
            }
            if op.predict(&x).unwrap().is_anomaly() != common::optics_is_anomaly(&train, min_pts, 99.0, &x) {
                vote_mismatches += 1;
            }
            let want = common::lof_score(&train, k, &x);
            worst_lof = worst_lof.max((lof.score(&x) - want).abs());
        }
    }
    let ok = vote_mismatches == 0 && worst_lof <= 1e-9;
    report(
        2,
        "density oracles",
        ok,
        &format!("instances=50 queries={queries} vote_mismatches={vote_mismatches} max_lof_err={worst_lof:.1e}"),
    );
    ok
}

fn criterion_3_ocsvm_kkt_and_nu_property() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut ok = true;
    let mut details = Vec::new();
    for nu in [0.05, 0.1] {
        let mut worst_kkt = 0.0f64;
        let mut worst_frac = 0.0f64;
        for trial in 0..5 {
            let n = 300;
            let train = common::gaussian(&mut rng, n, 4);
            let params = OcsvmParams {
                nu,
                gamma: default_gamma(&train),
                tol: 1e-6,
                max_iter: 10_000_000,
                seed: trial,
            };
            let m = fit_ocsvm(&train, &params).unwrap();
            worst_kkt = worst_kkt.max(common::kkt_residual(&train, &m));
            let out = train.iter().filter(|x| m.predict(x).unwrap().is_anomaly()).count();
            worst_frac = worst_frac.max(out as f64 / n as f64);
        }
        ok &= worst_kkt <= 1e-6 && worst_frac <= nu + 0.02;
        details.push(format!("nu={nu}: kkt={worst_kkt:.1e} outlier_frac={worst_frac:.3}"));
    }
    report(3, "ocsvm properties", ok, &details.join(" "));
    ok
}

fn dummy_violation(i: usize) -> Violation {
    Violation {
        subject: Subject::Record(i),
        kind: ViolationKind::Range,
        rule: "r".into(),
        feature: Some(Feature::Roll),
        phase: Some(MissionPhase::OnMission),
        observed: 0.0,
        expected: "[0, 0]".into(),
    }
}

fn criterion_4_decision_matrix_is_exact() -> bool {
    let mut exceptions = 0;
    let mut check = |violations: usize, votes: [bool; 5]| {
        let vs: Vec<Vote> = votes.iter().map(|&a| Vote::from_anomalous(a)).collect();
        let ens = vote(&vs).unwrap();
        let v = decide(0, 0, MissionPhase::OnMission, (0..violations).map(dummy_violation).collect(), Some(ens));
        let expected = violations > 0 || votes.iter().filter(|&&a| a).count() >= 3;
        if v.final_vote.is_anomaly() != expected || v.under(Fusion::Combined) != v.final_vote {
            exceptions += 1;
        }
    };
    // the four cells: rules broken or not, majority anomalous or not
    check(0, [false; 5]);
    check(0, [true, true, true, false, false]);
    check(1, [true, true, false, false, false]);
    check(2, [true; 5]);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..1000 {
        let violations = if rng.random_bool(0.5) { 0 } else { rng.random_range(1..4) };
        let votes: [bool; 5] = std::array::from_fn(|_| rng.random_bool(0.5));
        check(violations, votes);
    }
    report(4, "decision matrix", exceptions == 0, &format!("cases=1004 exceptions={exceptions}"));
    exceptions == 0
}

fn criterion_5_mined_rules_hold_on_training_corpus() -> bool {
    let exp = ExperimentConfig::default();
    let phase_cfg = PhaseConfig::default();
    let corpus = training_corpus(exp.training_missions, exp.training_seed).unwrap();
    let annotated: Vec<_> = corpus.iter().map(|l| segment(&l.log, phase_cfg).unwrap()).collect();
    let rules = mine_rules(&annotated, Vec::new(), &MiningConfig::default()).unwrap().ruleset;

    let mut in_scope = vec![0usize; rules.rules.len()];
    let mut broken = vec![0usize; rules.rules.len()];
    for a in &annotated {
        for (r, &phase) in a.log.records.iter().zip(&a.phase_of) {
            for (i, rule) in rules.rules.iter().enumerate() {
                if rule.scope.covers(phase) {
                    in_scope[i] += 1;
                    broken[i] += usize::from(!rule.holds(r.get(rule.feature)));
                }
            }
        }
    }
    let mut ok = !rules.rules.is_empty();
    let mut worst = 0.0f64;
    for (i, rule) in rules.rules.iter().enumerate() {
        let frac = broken[i] as f64 / in_scope[i].max(1) as f64;
        worst = worst.max(frac);
        ok &= frac <= 0.01 && (rule.widened || broken[i] == 0);
    }
    let widened = rules.rules.iter().filter(|r| r.widened).count();
    report(
        5,
        "rule soundness",
        ok,
        &format!("rules={} widened={widened} worst_violation={}", rules.rules.len(), pct(worst)),
    );
    ok
}

struct ExperimentRun {
    report: ExperimentReport,
    elapsed: Duration,
}

fn experiment() -> &'static ExperimentRun {
    static CELL: OnceLock<ExperimentRun> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let report = run_experiment(
            &ExperimentConfig::default(),
            PhaseConfig::default(),
            &MiningConfig::default(),
            &DetectorConfig::default(),
        )
        .unwrap();
        println!("{}", report.table());
        ExperimentRun {
            report,
            elapsed: start.elapsed(),
        }
    })
}

fn by_kind(report: &ExperimentReport) -> BTreeMap<&'static str, &flightwatch::evalkit::Ablation> {
    report.suites.iter().map(|s| (s.kind.name(), &s.ablation)).collect()
}

fn criterion_6_end_to_end_recall_and_false_positives() -> bool {
    let run = experiment();
    let suites = by_kind(&run.report);
    let recall = |kind: SuiteKind| suites[kind.name()].combined.recall.unwrap();
    let fpr = suites[SuiteKind::Clean.name()].combined.false_positive_rate.unwrap();
    let checks = [
        ("roll_stuck", recall(SuiteKind::RollStuck), recall(SuiteKind::RollStuck) == 1.0),
        ("baro_stuck", recall(SuiteKind::BaroStuck), recall(SuiteKind::BaroStuck) == 1.0),
        ("crash", recall(SuiteKind::Crash), recall(SuiteKind::Crash) >= 0.90),
        ("strong_wind", recall(SuiteKind::StrongWind), recall(SuiteKind::StrongWind) >= 0.90),
        ("mild_wind", recall(SuiteKind::MildWind), recall(SuiteKind::MildWind) >= 0.85),
        ("actuator", recall(SuiteKind::Actuator), recall(SuiteKind::Actuator) >= 0.40),
        ("clean_fpr", fpr, fpr <= 0.05),
    ];
    let runs_ok = run.report.suites.iter().all(|s| s.runs >= 5);
    let time_ok = run.elapsed <= Duration::from_secs(600);
    let ok = checks.iter().all(|c| c.2) && runs_ok && time_ok;
    let detail: Vec<String> = checks.iter().map(|(n, v, _)| format!("{n}={}", pct(*v))).collect();
    report(6, "end-to-end pattern", ok, &format!("{} runtime={:.0?}", detail.join(" "), run.elapsed));
    ok
}

fn criterion_7_ablation_pattern() -> bool {
    let run = experiment();
    let suites = by_kind(&run.report);
    let r = |kind: SuiteKind, f: Fusion| suites[kind.name()].get(f).recall;
    let mild_gap = r(SuiteKind::MildWind, Fusion::RulesOnly).unwrap() - r(SuiteKind::MildWind, Fusion::EnsembleOnly).unwrap();
    let actuator_ok =
        r(SuiteKind::Actuator, Fusion::EnsembleOnly).unwrap() > r(SuiteKind::Actuator, Fusion::RulesOnly).unwrap();
    let monotone = run.report.suites.iter().filter(|s| s.kind != SuiteKind::Clean).all(|s| {
        let c = s.ablation.combined.recall.unwrap();
        c >= s.ablation.rules_only.recall.unwrap() && c >= s.ablation.ensemble_only.recall.unwrap()
    });
    let ok = mild_gap >= 0.30 && actuator_ok && monotone;
    report(
        7,
        "ablation pattern",
        ok,
        &format!(
            "mild_rules_minus_ensemble={} actuator_ensemble={} actuator_rules={} combined_monotone={monotone}",
            pct(mild_gap),
            pct(r(SuiteKind::Actuator, Fusion::EnsembleOnly).unwrap()),
            pct(r(SuiteKind::Actuator, Fusion::RulesOnly).unwrap()),
        ),
    );
    ok
}

fn criterion_8_per_point_runtime_budget() -> bool {
    let exp = ExperimentConfig::default();
    let phase_cfg = PhaseConfig::default();
    let corpus = training_corpus(exp.training_missions, exp.training_seed).unwrap();
    let detectors = DetectorConfig {
        max_train: 450,
        ..DetectorConfig::default()
    };
    let trained = train(&corpus, phase_cfg, &MiningConfig::default(), &detectors).unwrap();
    let log = suite_run(SuiteKind::Clean, exp.suite_seed).unwrap().log;
    let bench = benchmark_latency(Some(&trained.models), &trained.rules, &log, phase_cfg).unwrap();
    print!("{bench}");
    let without = bench.pipeline_without_optics.mean_ms;
    let with = bench.pipeline.mean_ms;
    let ok = trained.models.train_size == 450 && without <= 50.0 && with <= 2000.0;
    report(
        8,
        "runtime budget",
        ok,
        &format!(
            "train={} records={} mean_without_optics={without:.3}ms mean_with_optics={with:.3}ms",
            trained.models.train_size,
            bench.pipeline.samples
        ),
    );
    ok
}

fn criterion_9_latency_rule() -> bool {
    let rule = LatencyRule { max_latency_ms: 2000 };
    let issue = 10_000;
    let commands = [
        CommandEvent { cmd_id: 1, issue_ms: issue, enact_ms: Some(issue + 1500) },
        CommandEvent { cmd_id: 2, issue_ms: issue, enact_ms: Some(issue + 2500) },
        CommandEvent { cmd_id: 3, issue_ms: issue, enact_ms: None },
    ];
    let kinds = |vs: &[Violation]| -> BTreeMap<i64, ViolationKind> {
        vs.iter()
            .map(|v| match v.subject {
                Subject::Command(id) => (id, v.kind),
                Subject::Record(_) => panic!("range violation in latency check"),
            })
            .collect()
    };
    let expected = BTreeMap::from([(2, ViolationKind::Latency), (3, ViolationKind::LostCommand)]);
    let direct = kinds(&check_latency(&rule, &commands, issue + 2600));
    // nothing is lost before the deadline has passed
    let early = check_latency(&rule, &commands[2..], issue + 2000);

    // the same stream through the runtime monitor, with no range rules
    let log = simulate(&base_mission(), &[], 1).unwrap().log;
    let rules = RuleSet {
        min_support: 0.005,
        holding_threshold: 0.99,
        rules: Vec::new(),
        latency_rule: Some(rule),
        provenance: Vec::new(),
    };
    let t0 = log.records[5].timestamp_ms;
    let mut monitor =
        Monitor::new(&rules, None, log.meta.clone().unwrap(), PhaseConfig::default(), WindowConfig::default()).unwrap();
    for c in &commands {
        monitor.register_command(CommandEvent { issue_ms: t0, enact_ms: c.enact_ms.map(|e| e - issue + t0), ..c.clone() });
    }
    let mut streamed = Vec::new();
    for r in &log.records {
        streamed.extend(monitor.process(r).unwrap().0.rule_violations);
    }
    let streamed = kinds(&streamed);

    let ok = direct == expected && early.is_empty() && streamed == expected;
    report(9, "latency rule", ok, &format!("direct={direct:?} streamed={streamed:?}"));
    ok
}

fn main() -> ExitCode {
    let criteria: [fn() -> bool; 9] = [
        criterion_1_apriori_matches_exhaustive_enumeration,
        criterion_2_density_detectors_match_brute_force,
        criterion_3_ocsvm_kkt_and_nu_property,
        criterion_4_decision_matrix_is_exact,
        criterion_5_mined_rules_hold_on_training_corpus,
        criterion_6_end_to_end_recall_and_false_positives,
        criterion_7_ablation_pattern,
        criterion_8_per_point_runtime_budget,
        criterion_9_latency_rule,
    ];
    let passed = criteria.iter().filter(|c| c()).count();
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed == criteria.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
