//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion, then asserts it.
//!
//! Criteria 4 and 6 to 9 share one run of the full protocol: 500 random-choice
//! training students, an 80/20 split by student, all three tracers fitted on
//! the training part, and 1000 seed-paired evaluation episodes per condition.

use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use ktsim_core::bkt::{fit_em, BktParams, BktTracer, EmConfig};
use ktsim_core::dkt::{init_params, sequence_gradient, sequence_loss, DktConfig};
use ktsim_core::experiment::{run_condition, ConditionResult};
use ktsim_core::pfa::{fit_mle, MleConfig, PfaObjective, PfaTracer};
use ktsim_core::report::write_episode_csv;
use ktsim_core::seed::stream;
use ktsim_core::stats::wilcoxon_signed_rank;
use ktsim_core::training::{accuracy_reports, generate_dataset, train_all, AccuracyReport, TrainConfig, TrainedSet};
use ktsim_core::{BktGainMode, BktModel, Condition, Dataset, DktParams, PfaParams, Scenario, SkillId, TaskId, Tracer};
use rand::Rng;

const MASTER_SEED: u64 = 0;
const TRAIN_STUDENTS: usize = 500;
const EVAL_STUDENTS: usize = 1000;

const TARGET_ACCURACY: [(Condition, f64); 3] = [
    (Condition::Bkt, 0.7040),
    (Condition::Pfa, 0.8104),
    (Condition::Dkt, 0.7189),
];
const ACCURACY_TOLERANCE: f64 = 0.05;

/// Written straight to the process stdout so the line shows up even for
/// passing tests, whose `println!` output the harness swallows.
fn verdict(id: &str, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "{} {id} {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

struct Protocol {
    train: Dataset,
    trained: TrainedSet,
    accuracy: Vec<AccuracyReport>,
    results: Vec<ConditionResult>,
    elapsed: Duration,
}

impl Protocol {
    fn run(seed: u64) -> Self {
        let start = Instant::now();
        let s = Scenario::default_scenario();
        let data = generate_dataset(TRAIN_STUDENTS, &s, seed);
        let (train, test) = data.split(seed, 0.8);
        let trained = train_all(&train, &s, &TrainConfig::with_seed(seed)).unwrap();
        let accuracy = accuracy_reports(&trained.models, &test).unwrap();
        let results = Condition::ALL
            .iter()
            .map(|&c| run_condition(&trained.models, c, EVAL_STUDENTS, seed, BktGainMode::default()).unwrap())
            .collect();
        Self {
            train,
            trained,
            accuracy,
            results,
            elapsed: start.elapsed(),
        }
    }

    fn result(&self, c: Condition) -> &ConditionResult {
        self.results.iter().find(|r| r.condition == c).unwrap()
    }

    fn accuracy(&self, c: Condition) -> f64 {
        self.accuracy.iter().find(|a| a.condition == c).unwrap().accuracy
    }

    fn write_csvs(&self, dir: &std::path::Path) {
        for r in &self.results {
            write_episode_csv(&dir.join(format!("{}.csv", r.condition)), &r.episodes).unwrap();
        }
    }
}

fn protocol() -> &'static Protocol {
    static P: OnceLock<Protocol> = OnceLock::new();
    P.get_or_init(|| Protocol::run(MASTER_SEED))
}

fn single_skill_scenario() -> Scenario {
    Scenario {
        num_tasks: 1,
        num_skills: 1,
        skill_map: vec![vec![SkillId(0)]],
        difficulties: vec![0.0],
        ..Scenario::default_scenario()
    }
}

fn random_bkt(rng: &mut impl Rng) -> BktParams {
    loop {
        let p = BktParams {
            p_start: rng.random_range(0.01..0.99),
            p_trans: rng.random_range(0.0..0.99),
            p_guess: rng.random_range(0.01..0.6),
            p_slip: rng.random_range(0.01..0.6),
        };
        if p.p_guess + p.p_slip < 0.99 {
            return p;
        }
    }
}

/// P(Z_{t+1} = 1 | x_1..x_t) for every t by summing the joint probability of
/// every hidden path. Exponential, so only used on short sequences.
fn posterior_by_enumeration(p: &BktParams, xs: &[bool]) -> Vec<f64> {
    let emit = |z: bool, x: bool| match (z, x) {
        (true, true) => 1.0 - p.p_slip,
        (true, false) => p.p_slip,
        (false, true) => p.p_guess,
        (false, false) => 1.0 - p.p_guess,
    };
    let trans = |from: bool, to: bool| match (from, to) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        (false, true) => p.p_trans,
        (false, false) => 1.0 - p.p_trans,
    };
    (0..=xs.len())
        .map(|t| {
            let (mut num, mut den) = (0.0, 0.0);
            for mask in 0u32..(1 << (t + 1)) {
                let z = |i: usize| mask >> i & 1 == 1;
                let mut w = if z(0) { p.p_start } else { 1.0 - p.p_start };
                for (i, &x) in xs.iter().enumerate().take(t) {
                    w *= emit(z(i), x) * trans(z(i), z(i + 1));
                }
                den += w;
                if z(t) {
                    num += w;
                }
            }
            num / den
        })
        .collect()
}

/// The same posteriors from the unnormalised forward recursion.
fn posterior_by_forward(p: &BktParams, xs: &[bool]) -> Vec<f64> {
    let mut alpha = [1.0 - p.p_start, p.p_start];
    let mut out = vec![alpha[1] / (alpha[0] + alpha[1])];
    for &x in xs {
        let e = if x {
            [p.p_guess, 1.0 - p.p_slip]
        } else {
            [1.0 - p.p_guess, p.p_slip]
        };
        let a = [alpha[0] * e[0], alpha[1] * e[1]];
        alpha = [a[0] * (1.0 - p.p_trans), a[0] * p.p_trans + a[1]];
        let total = alpha[0] + alpha[1];
        alpha = [alpha[0] / total, alpha[1] / total];
        out.push(alpha[1]);
    }
    out
}

#[test]
fn c1_bkt_matches_forward_algorithm() {
    let start = Instant::now();
    let s = Arc::new(single_skill_scenario());
    let mut rng = stream(101);
    let mut worst: f64 = 0.0;
    for instance in 0..1000 {
        let p = random_bkt(&mut rng);
        let len = rng.random_range(1..=20);
        let xs: Vec<bool> = (0..len).map(|_| rng.random_bool(0.5)).collect();
        let oracle = if len <= 12 {
            posterior_by_enumeration(&p, &xs)
        } else {
            posterior_by_forward(&p, &xs)
        };
        let mut t = BktTracer::new(Arc::new(BktModel { skills: vec![p] }), s.clone());
        let mut got = vec![t.theta()[0]];
        for &x in &xs {
            t.update(TaskId(0), x);
            got.push(t.theta()[0]);
        }
        for (a, b) in got.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
        assert_eq!(got.len(), oracle.len(), "instance {instance}");
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "1",
        "bkt-forward-oracle",
        worst <= 1e-9 && secs < 10.0,
        &format!("max abs error {worst:.3e} (tol 1e-9) over 1000 instances in {secs:.2} s (limit 10 s)"),
    );
}

#[test]
fn c2_martingale_property() {
    let mut rng = stream(202);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let p = random_bkt(&mut rng);
        let theta = rng.random_range(0.0..1.0);
        let pred = p.predict_skill(theta);
        let mixed = pred * p.bayes_posterior(theta, true) + (1.0 - pred) * p.bayes_posterior(theta, false);
        worst = worst.max((mixed - theta).abs());
    }
    verdict(
        "2",
        "bkt-martingale",
        worst <= 1e-12,
        &format!("max |p q1 + (1-p) q0 - theta| = {worst:.3e} over 10^4 draws (tol 1e-12)"),
    );
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

#[test]
fn c3_gradient_checks() {
    let h = 1e-5;
    let s = Scenario::default_scenario();

    let mut pfa_worst: f64 = 0.0;
    for seed in 0..5 {
        let data = generate_dataset(20, &s, 300 + seed);
        let obj = PfaObjective::new(&data, &s, 1e-4);
        let mut rng = stream(310 + seed);
        let w: Vec<f64> = (0..obj.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = obj.gradient(&w);
        let numeric: Vec<f64> = (0..w.len())
            .map(|i| {
                let (mut up, mut down) = (w.clone(), w.clone());
                up[i] += h;
                down[i] -= h;
                (obj.value(&up) - obj.value(&down)) / (2.0 * h)
            })
            .collect();
        pfa_worst = pfa_worst.max(relative_error(&analytic, &numeric));
    }

    let mut dkt_worst: f64 = 0.0;
    for seed in 0..5 {
        let mut rng = stream(320 + seed);
        let cfg = DktConfig {
            hidden: 4,
            recurrent_scale: 1.0,
            ..DktConfig::default()
        };
        let mut p = init_params(4, &cfg, &mut rng);
        for t in p.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let seq: Vec<(TaskId, bool)> = (0..6)
            .map(|_| (TaskId(rng.random_range(0..4)), rng.random_bool(0.6)))
            .collect();
        let mut grad = DktParams::zeros(4, 4);
        sequence_gradient(&p, &seq, &mut grad);
        for ti in 0..DktParams::TENSOR_NAMES.len() {
            let analytic = grad.tensors()[ti].to_vec();
            let numeric: Vec<f64> = (0..analytic.len())
                .map(|i| {
                    let (mut up, mut down) = (p.clone(), p.clone());
                    up.tensors_mut()[ti][i] += h;
                    down.tensors_mut()[ti][i] -= h;
                    (sequence_loss(&up, &seq) - sequence_loss(&down, &seq)) / (2.0 * h)
                })
                .collect();
            dkt_worst = dkt_worst.max(relative_error(&analytic, &numeric));
        }
    }
    verdict(
        "3",
        "gradient-checks",
        pfa_worst <= 1e-6 && dkt_worst <= 1e-4,
        &format!("PFA relative error {pfa_worst:.3e} (tol 1e-6), DKT worst tensor {dkt_worst:.3e} (tol 1e-4)"),
    );
}

#[test]
fn c4_em_log_likelihood_is_monotone() {
    let p = protocol();
    let s = Scenario::default_scenario();
    let mut worst_drop: f64 = 0.0;
    let mut traces = 0;
    let mut fits = vec![p.trained.bkt.clone()];
    for seed in 1..3 {
        let cfg = EmConfig {
            seed,
            ..EmConfig::default()
        };
        fits.push(fit_em(&p.train, &s, &cfg).unwrap());
    }
    for fit in &fits {
        for skill in &fit.skills {
            traces += 1;
            for w in skill.log_likelihood.windows(2) {
                worst_drop = worst_drop.min(w[1] - w[0]);
            }
        }
    }
    verdict(
        "4",
        "em-monotone",
        worst_drop >= -1e-8,
        &format!("largest per-iteration decrease {:.3e} across {traces} traces (tol -1e-8)", worst_drop),
    );
}

fn simulate_bkt_data(truth: &[BktParams], s: &Scenario, n: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed);
    let rows: Vec<Vec<(usize, bool)>> = (0..n)
        .map(|_| {
            let mut mastered: Vec<bool> = truth.iter().map(|p| rng.random_bool(p.p_start)).collect();
            (0..30)
                .map(|_| {
                    let j = rng.random_range(0..s.num_tasks);
                    let k = s.skills_of(TaskId(j))[0].0;
                    let p = truth[k];
                    let x = rng.random_bool(if mastered[k] { 1.0 - p.p_slip } else { p.p_guess });
                    if !mastered[k] {
                        mastered[k] = rng.random_bool(p.p_trans);
                    }
                    (j + 1, x)
                })
                .collect()
        })
        .collect();
    Dataset::from_tasks(s, &rows)
}

fn simulate_pfa_data(truth: &PfaParams, s: &Scenario, n: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed);
    let truth = Arc::new(truth.clone());
    let scenario = Arc::new(s.clone());
    let rows: Vec<Vec<(usize, bool)>> = (0..n)
        .map(|_| {
            let mut t = PfaTracer::new(truth.clone(), scenario.clone());
            (0..30)
                .map(|_| {
                    let j = TaskId(rng.random_range(0..s.num_tasks));
                    let x = rng.random_bool(t.predict_task(j));
                    t.update(j, x);
                    (j.one_based(), x)
                })
                .collect()
        })
        .collect();
    Dataset::from_tasks(s, &rows)
}

#[test]
fn c5_parameter_recovery() {
    let two_skills = Scenario {
        num_tasks: 2,
        num_skills: 2,
        skill_map: vec![vec![SkillId(0)], vec![SkillId(1)]],
        difficulties: vec![0.0, 0.0],
        ..Scenario::default_scenario()
    };
    let bkt_truth = [BktParams::new(0.2, 0.3, 0.2, 0.1); 2];
    let data = simulate_bkt_data(&bkt_truth, &two_skills, 500, 501);
    let fit = fit_em(&data, &two_skills, &EmConfig::default()).unwrap();
    let mut bkt_err: f64 = 0.0;
    let mut trans_err: f64 = 0.0;
    for (got, want) in fit.model.skills.iter().zip(&bkt_truth) {
        trans_err = trans_err.max((got.p_trans - want.p_trans).abs());
        for (a, b) in [
            (got.p_start, want.p_start),
            (got.p_trans, want.p_trans),
            (got.p_guess, want.p_guess),
            (got.p_slip, want.p_slip),
        ] {
            bkt_err = bkt_err.max((a - b).abs());
        }
    }

    let s = Scenario::default_scenario();
    let pfa_truth = PfaParams {
        beta: vec![-0.5, -0.3],
        gamma: vec![0.25, 0.2],
        rho: vec![0.1, 0.05],
        difficulty: vec![0.2, 0.0, -0.3, 0.5],
    };
    let data = simulate_pfa_data(&pfa_truth, &s, 500, 502);
    let fit = fit_mle(&data, &s, &MleConfig::default()).unwrap().params;
    let pfa_err = fit
        .gamma
        .iter()
        .zip(&pfa_truth.gamma)
        .chain(fit.rho.iter().zip(&pfa_truth.rho))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    verdict(
        "5",
        "parameter-recovery",
        trans_err <= 0.1 && bkt_err <= 0.1 && pfa_err <= 0.1,
        &format!(
            "BKT p_trans error {trans_err:.3} (all four params {bkt_err:.3}), PFA gamma/rho error {pfa_err:.3} (tol 0.1)"
        ),
    );
}

#[test]
fn c6_simulation_study() {
    let p = protocol();
    let bkt = &p.result(Condition::Bkt).summary;
    let pfa = &p.result(Condition::Pfa).summary;
    let dkt = &p.result(Condition::Dkt).summary;
    let a = bkt.premature_rate == 0.0 && pfa.premature_rate == 0.0;
    let b = dkt.premature_rate >= 0.10 && dkt.cap_rate > 0.0;
    let best = bkt.median_steps_to_mastery.min(pfa.median_steps_to_mastery);
    let c = bkt.median_steps_to_mastery <= 9.0
        && pfa.median_steps_to_mastery <= 9.0
        && dkt.median_steps_to_mastery >= 1.5 * best;
    let w = wilcoxon_signed_rank(
        &p.result(Condition::Pfa).imputed_mastery(),
        &p.result(Condition::Dkt).imputed_mastery(),
    )
    .unwrap();
    let d = w.p_value < 1e-6;
    let direction = if dkt.median_steps_to_mastery > pfa.median_steps_to_mastery {
        "DKT slower"
    } else if dkt.median_steps_to_mastery < pfa.median_steps_to_mastery {
        "DKT faster"
    } else {
        "equal medians"
    };
    let minutes = p.elapsed.as_secs_f64() / 60.0;
    let time_ok = minutes <= 10.0;
    let mark = |ok: bool| if ok { "ok" } else { "FAILED" };
    verdict(
        "6",
        "simulation-study",
        a && b && c && d && time_ok,
        &format!(
            "(a) {} premature BKT {:.1}% PFA {:.1}%; \
             (b) {} DKT premature {:.1}% (need >= 10%) cap {:.1}% (need > 0); \
             (c) {} median steps to mastery BKT {} PFA {} DKT {} (need <= 9, DKT >= {:.1}); \
             (d) {} Wilcoxon DKT vs PFA p = {:.3e} (need < 1e-6; {direction}); \
             run {:.2} min {}",
            mark(a),
            100.0 * bkt.premature_rate,
            100.0 * pfa.premature_rate,
            mark(b),
            100.0 * dkt.premature_rate,
            100.0 * dkt.cap_rate,
            mark(c),
            bkt.median_steps_to_mastery,
            pfa.median_steps_to_mastery,
            dkt.median_steps_to_mastery,
            1.5 * best,
            mark(d),
            w.p_value,
            minutes,
            mark(time_ok),
        ),
    );
}

#[test]
fn c7_held_out_accuracy() {
    let p = protocol();
    let mut ok = true;
    let mut parts = Vec::new();
    for (c, target) in TARGET_ACCURACY {
        let got = p.accuracy(c);
        let within = (got - target).abs() <= ACCURACY_TOLERANCE;
        ok &= within;
        parts.push(format!(
            "{c} {:.2}% (target {:.2}% +/- 5, {})",
            100.0 * got,
            100.0 * target,
            if within { "ok" } else { "out" }
        ));
    }
    let ordering = p.accuracy(Condition::Pfa) > p.accuracy(Condition::Bkt);
    parts.push(format!("PFA > BKT {}", if ordering { "holds" } else { "does not hold" }));
    parts.push(format!(
        "base success rate {:.2}%",
        100.0 * p.accuracy[0].base_success_rate
    ));
    verdict("7", "held-out-accuracy", ok && ordering, &parts.join("; "));
}

#[test]
fn c8_same_seed_same_csv_bytes() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    protocol().write_csvs(first.path());
    Protocol::run(MASTER_SEED).write_csvs(second.path());
    let mut identical = true;
    let mut bytes = 0;
    for c in Condition::ALL {
        let name = format!("{c}.csv");
        let a = std::fs::read(first.path().join(&name)).unwrap();
        let b = std::fs::read(second.path().join(&name)).unwrap();
        bytes += a.len();
        identical &= a == b;
    }
    verdict(
        "8",
        "determinism",
        identical,
        &format!("two independent runs with seed {MASTER_SEED}, {bytes} CSV bytes per run, identical: {identical}"),
    );
}

#[test]
fn c9_oracle_reaches_mastery_in_five_to_six_steps() {
    let oracle = &protocol().result(Condition::EloOracle).summary;
    let m = oracle.median_steps_to_mastery;
    verdict(
        "9",
        "elo-oracle",
        (5.0..=6.0).contains(&m),
        &format!("median steps to mastery {m} (need 5 to 6), premature {:.1}%", 100.0 * oracle.premature_rate),
    );
}
