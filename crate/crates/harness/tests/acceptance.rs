//! Acceptance gate. Each test prints one `PASS`/`FAIL` line for its
//! criterion with the measured values, then asserts it.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use commex_core::cal::{cal_run, ga_run, CalConfig, Encoding, GaConfig, Problem, RecyclingSpec, RecyclingTask, Trace};
use commex_core::chain::top_set_flux;
use commex_core::evoc::{self, is_non_decreasing, rises_then_falls, run_tracked, smooth, WorldConfig};
use commex_core::exchange::{
    initial_state, niche_events, restructure, tire_swing_scenario, utility, Bundle, Origin, OutcomeKind, Perspective,
    WorldObject,
};
use commex_core::focus::{CfMode, CfReport};
use commex_core::scop::{
    apply_context, collapse_distribution, collapse_sample, combine, state_from_weights, Concept, ConceptNetwork,
    ConceptState,
};
use commex_harness::commands::{Command, ScriptedCommand};
use commex_harness::oracle::oracle;
use commex_harness::{replay, run_experiment, ExperimentConfig, RunOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Writes straight to stdout so the line shows even when output is captured.
fn verdict(name: &str, ok: bool, detail: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "\n{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    let _ = out.flush();
    drop(out);
    assert!(ok, "{name}: {detail}");
}

fn shipped(name: &str, root: &Path, extra: &[(&str, toml::Value)]) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let mut over: Vec<(String, toml::Value)> = vec![("output.root".into(), toml::Value::String(root.display().to_string()))];
    over.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    ExperimentConfig::load(&path, &over).unwrap()
}

fn world(name: &str, extra: &[(&str, toml::Value)]) -> WorldConfig {
    shipped(name, Path::new("."), extra).world_config()
}

const SEEDS: std::ops::Range<u64> = 0..10;

#[test]
fn evoc_dynamics() {
    let cfg = world("evoc.toml", &[]);
    assert_eq!((cfg.width, cfg.height, cfg.iterations), (10, 10, 500));
    let mut fitness_ok = 0;
    let mut diversity_ok = 0;
    let mut slowest = Duration::ZERO;
    let mut finals = Vec::new();
    for seed in SEEDS {
        let t = Instant::now();
        let series = evoc::run(&cfg, seed).unwrap();
        slowest = slowest.max(t.elapsed());
        let fit = smooth(&series.iter().map(|r| r.mean_fitness).collect::<Vec<_>>(), 25);
        let div: Vec<f64> = series.iter().map(|r| r.diversity as f64).collect();
        let last = *fit.last().unwrap();
        finals.push(last);
        if is_non_decreasing(&fit, 0.0) && last >= 10.0 {
            fitness_ok += 1;
        }
        if div[0] >= 1.0 && rises_then_falls(&div, 0.1) {
            diversity_ok += 1;
        }
    }
    let ok = fitness_ok >= 8 && diversity_ok >= 8 && slowest < Duration::from_secs(10);
    verdict(
        "EVOC dynamics",
        ok,
        format!(
            "fitness {fitness_ok}/10, diversity {diversity_ok}/10, final smoothed {finals:.2?}, slowest seed {slowest:.2?}"
        ),
    );
}

/// Mean Jaccard flux over the checkpoints after the single-step plateau.
fn late_flux(cfg: &WorldConfig, seed: u64, after: u64) -> (f64, Vec<f64>) {
    let run = run_tracked(cfg, seed).unwrap();
    let snaps: Vec<BTreeSet<_>> = run.snapshots.into_iter().filter(|(i, _)| *i > after).map(|(_, s)| s).collect();
    (top_set_flux(&snaps).unwrap(), run.metrics.iter().map(|r| r.mean_fitness).collect())
}

#[test]
fn rr_ceiling_removal() {
    let rr = world("evoc-rr.toml", &[]);
    assert!(rr.rr.enabled && rr.rr.l_max == 0 && rr.iterations == 5000);
    let plain = WorldConfig { rr: commex_core::chain::RecallConfig { enabled: false, ..rr.rr }, ..rr.clone() };
    let mut over_22 = 0;
    let mut flux_wins = 0;
    let mut plain_max = f64::NEG_INFINITY;
    let mut fluxes = Vec::new();
    for seed in SEEDS {
        let (f_rr, m_rr) = late_flux(&rr, seed, 500);
        let (f_plain, m_plain) = late_flux(&plain, seed, 500);
        plain_max = m_plain.iter().copied().fold(plain_max, f64::max);
        if m_rr.iter().any(|&m| m > 22.0) {
            over_22 += 1;
        }
        if f_rr > f_plain {
            flux_wins += 1;
        }
        fluxes.push((f_rr, f_plain));
    }
    let ok = plain_max <= 11.0 && over_22 >= 8 && flux_wins >= 8;
    verdict(
        "RR ceiling removal",
        ok,
        format!("no-RR max mean {plain_max}, RR > 22 in {over_22}/10, flux RR > no-RR in {flux_wins}/10 (rr, plain) {fluxes:.3?}"),
    );
}

fn iterations_to(cfg: &WorldConfig, seed: u64, level: f64) -> Option<u64> {
    let mut w = evoc::init_world(cfg.clone(), seed).unwrap();
    for _ in 0..cfg.iterations {
        w.step();
        if w.metrics().mean_fitness >= level {
            return Some(w.iteration());
        }
    }
    None
}

#[test]
fn rr_learning_interaction() {
    let learning = world("evoc-rr.toml", &[]);
    assert!(learning.learning);
    let blank = WorldConfig { learning: false, ..learning.clone() };
    let mut wins = 0;
    let mut times = Vec::new();
    for seed in SEEDS {
        let with = iterations_to(&learning, seed, 22.0);
        let without = iterations_to(&blank, seed, 22.0);
        if with.unwrap_or(u64::MAX) < without.unwrap_or(u64::MAX) {
            wins += 1;
        }
        times.push((with, without));
    }
    verdict(
        "RR x learning",
        wins > 5,
        format!("learning reached 22 first in {wins}/10; (with, without) {times:?}"),
    );
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p).unwrap().lines().map(String::from).collect()
}

#[test]
fn cf_recovery() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shipped("cf-shift.toml", tmp.path(), &[]);
    assert_eq!(cfg.cf.shift_schedule, vec![300]);
    assert_eq!(cfg.seeds.len(), 10);
    let t = Instant::now();
    let dir = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let elapsed = t.elapsed();
    let report: CfReport = serde_json::from_str(&fs::read_to_string(dir.join("cf-report.json")).unwrap()).unwrap();
    let median = |m: CfMode| report.mode(m).and_then(|r| r.median_recovery).unwrap_or(f64::INFINITY);
    let (off, div, assoc) = (median(CfMode::Off), median(CfMode::Divergent), median(CfMode::Associative));
    let comparison = report.associative_vs_divergent.clone().unwrap_or_default();
    let ok = div < off && !comparison.is_empty() && elapsed < Duration::from_secs(30);
    verdict(
        "CF recovery",
        ok,
        format!("median recovery off {off}, divergent {div}, associative {assoc}; report: {comparison}; {elapsed:.2?}"),
    );
}

fn max_norm_error(states: &[ConceptState]) -> f64 {
    states.iter().map(|s| (s.norm_sqr() - 1.0).abs()).fold(0.0, f64::max)
}

#[test]
fn scop_suite() {
    let net = ConceptNetwork::fixture();
    let mut norm = 0.0f64;
    let mut idem = 0.0f64;
    for c in &net.concepts {
        let contexts: Vec<String> = c.contexts().map(String::from).collect();
        for start in &contexts {
            let Ok(s) = state_from_weights(c, start) else { continue };
            norm = norm.max(max_norm_error(std::slice::from_ref(&s)));
            for e in &contexts {
                let Ok(once) = apply_context(&s, c, e) else { continue };
                let twice = apply_context(&once, c, e).unwrap();
                norm = norm.max(max_norm_error(&[once.clone(), twice.clone()]));
                for (a, b) in once.amplitudes.iter().zip(&twice.amplitudes) {
                    idem = idem.max((a - b).norm());
                }
                for f in &contexts {
                    if let Ok(chained) = apply_context(&once, c, f) {
                        norm = norm.max(max_norm_error(&[chained]));
                    }
                }
            }
        }
    }

    let tire = net.get("TIRE").unwrap();
    let s = apply_context(&state_from_weights(tire, "default").unwrap(), tire, "playground_equipment").unwrap();
    let dist = collapse_distribution(&s).unwrap();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for _ in 0..n {
        *counts.entry(collapse_sample(&s, &mut rng)).or_default() += 1;
    }
    let chi: f64 = dist
        .iter()
        .map(|(label, p)| {
            let expect = p * n as f64;
            (counts.get(label).copied().unwrap_or(0) as f64 - expect).powi(2) / expect
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new((dist.len() - 1) as f64).unwrap().cdf(chi);

    let o = oracle(None, None).unwrap();
    let t = &o["tire"];
    let f = |k: &str| t[k].as_f64().unwrap();
    let b = |i: usize| t["b"][i].as_f64().unwrap();
    let a = |i: usize| t["a"][i].as_f64().unwrap();
    let orderings = [
        f("p_default_waste") > f("p_default_useful"),
        f("p_playground_useful") > f("p_playground_waste"),
        b(3).abs() > b(4).abs(),
        b(1).abs() < a(1).abs(),
    ];

    let swing = net.get("SWING").unwrap();
    let q = combine(tire, swing, "playground_equipment", PI / 2.0).unwrap();
    let interference = q
        .probabilities()
        .iter()
        .zip(q.classical())
        .map(|(p, c)| (p - c).abs())
        .fold(0.0, f64::max);

    let ok = norm <= 1e-9 && idem <= 1e-9 && p_value > 0.01 && orderings.iter().all(|&x| x) && interference <= 1e-12;
    verdict(
        "SCOP suite",
        ok,
        format!(
            "normalization {norm:.1e}, idempotence {idem:.1e}, Born chi2 {chi:.2} p={p_value:.3}, orderings {orderings:?}, quarter-phase gap {interference:.1e}"
        ),
    );
}

/// A random concept over three properties with 2 to 5 states and up to three
/// non-default contexts, each with a random stochastic transition table.
fn random_concept(rng: &mut ChaCha8Rng) -> Option<(Concept, Vec<String>, String)> {
    let n = rng.random_range(2..6usize);
    let k = rng.random_range(1..4usize);
    let props = ["p0", "p1", "p2"];
    let ctx: Vec<String> = (0..=k).map(|i| format!("c{i}")).collect();
    let mut nu = vec![];
    for s in 0..n {
        for (ci, c) in ctx.iter().enumerate() {
            let weights: serde_json::Map<String, serde_json::Value> = props
                .iter()
                .filter_map(|p| {
                    let x: f64 = rng.random();
                    (ci == 0 || x > 0.4).then(|| (p.to_string(), serde_json::json!(x + 0.01)))
                })
                .collect();
            nu.push(serde_json::json!({"state": format!("s{s}"), "context": c, "weights": weights}));
        }
    }
    let mut mu = vec![];
    for c in &ctx[1..] {
        for s in 0..n {
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let mut acc = 0.0f64;
            let mut targets = serde_json::Map::new();
            for (t, x) in raw.iter().enumerate() {
                let p = if t + 1 == n { (1.0 - acc).max(0.0) } else { x / total };
                acc += p;
                targets.insert(format!("s{t}"), serde_json::json!(p));
            }
            mu.push(serde_json::json!({"source": format!("s{s}"), "context": c, "targets": targets}));
        }
    }
    let spec = serde_json::json!({
        "name": "R", "default_context": "c0",
        "states": (0..n).map(|s| serde_json::json!({"name": format!("s{s}"), "tag": if rng.random_bool(0.5) {"useful"} else {"waste"}})).collect::<Vec<_>>(),
        "properties": props,
        "contexts": ctx.iter().map(|c| serde_json::json!({"name": c})).collect::<Vec<_>>(),
        "nu": nu, "mu": mu
    });
    let c = Concept::validate(serde_json::from_value(spec).ok()?).ok()?;
    let active = ctx.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
    Some((c, active, format!("s{}", rng.random_range(0..n))))
}

fn object(c: &Concept, b: &Bundle) -> WorldObject {
    WorldObject {
        id: 1,
        attributes: b.attributes.clone(),
        origin: Origin::Resource("fixture".into()),
        concept: c.name().to_string(),
        state: initial_state(c, b).unwrap(),
        contexts_used: vec![],
        waste_flag: false,
    }
}

#[test]
fn evoc2_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut fixtures, mut terminated, mut monotone) = (0, 0, 0);
    let mut kinds = BTreeMap::new();
    while fixtures < 10_000 {
        let Some((c, active, start)) = random_concept(&mut rng) else { continue };
        fixtures += 1;
        let b = Bundle {
            attributes: ["p0", "p1", "p2"].iter().map(|s| s.to_string()).collect(),
            state: rng.random_bool(0.5).then_some(start),
        };
        let mut p = Perspective::new(0).with_concepts([&c]);
        for e in &active {
            p = p.activate(e);
        }
        let max_iter = rng.random_range(1..30);
        let window = rng.random_range(2..8);
        let (_, out) = restructure(&object(&c, &b), &p, max_iter, window).unwrap();
        if (1..=max_iter).contains(&out.iterations) {
            terminated += 1;
        }
        if out.waste.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
        *kinds.entry(format!("{:?}", out.kind)).or_insert(0) += 1;
    }
    let _ = OutcomeKind::Cutoff;

    let scenario = tire_swing_scenario().unwrap();
    let niches = niche_events(scenario.events()).unwrap().len();

    let net = ConceptNetwork::fixture();
    let worn = Bundle {
        attributes: ["round", "rubber", "weather_resistant", "holds_weight"].iter().map(|s| s.to_string()).collect(),
        state: None,
    };
    let tire = object(net.get("TIRE").unwrap(), &worn);
    let transport = Perspective::new(0).with_concepts([net.get("TIRE").unwrap()]).activate("transport");
    let play = Perspective::new(1)
        .with_concepts(["TIRE", "SWING", "SLIDE"].iter().map(|n| net.get(n).unwrap()))
        .activate("transport")
        .activate("playground_equipment");
    let gap = utility(&tire, &play).unwrap() - utility(&tire, &transport).unwrap();

    let ok = terminated == fixtures && monotone == fixtures && niches == 1 && gap > 0.5;
    verdict(
        "EVOC2",
        ok,
        format!(
            "terminated {terminated}/{fixtures} {kinds:?}, waste non-increasing {monotone}/{fixtures}, niches {niches}, perspective gap {gap:.3}"
        ),
    );
}

fn traces(dir: &Path, seeds: &[u64]) -> Vec<Trace> {
    seeds
        .iter()
        .flat_map(|s| lines(&dir.join(format!("seed-{s}/traces.jsonl"))))
        .map(|l| serde_json::from_str(&l).unwrap())
        .collect()
}

#[test]
fn cal_versus_ga() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shipped("cal-bench.toml", tmp.path(), &[]);
    assert_eq!(cfg.cal.budget, 50_000);
    let t = Instant::now();
    let dir = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let elapsed = t.elapsed();
    let all = traces(&dir, &cfg.seeds);
    let pick = |problem: &str, cal: bool| -> Vec<&Trace> {
        all.iter()
            .filter(|t| t.problem == problem && (t.optimizer == commex_core::cal::Optimizer::Cal) == cal)
            .collect()
    };
    let below = |ts: &[&Trace], x: f64| ts.iter().filter(|t| t.final_best().unwrap() < x).count();
    let cal_rosen = below(&pick("rosenbrock-2d", true), 1e-3);
    let ga_rosen = below(&pick("rosenbrock-2d", false), 1e-2);
    let cal_rec = pick("recycling-swing", true).iter().filter(|t| t.succeeded()).count();
    let ga_rec = pick("recycling-swing", false).iter().filter(|t| t.succeeded()).count();

    let task = RecyclingTask::new(RecyclingSpec::fixture()).unwrap();
    let role = task.exhaustive_optimum(Encoding::Role).unwrap();
    let attribute = task.exhaustive_optimum(Encoding::Attribute).unwrap();

    let mut exact = true;
    for budget in [0, 1, 49, 50, 51, 1_013] {
        for p in [Problem::rosenbrock(2, budget).unwrap(), Problem::recycling(RecyclingSpec::fixture(), budget).unwrap()] {
            let c = cal_run(&p, &CalConfig::default(), 3).unwrap();
            let g = ga_run(&p, &GaConfig::default(), 3).unwrap();
            exact &= p.calls() == c.evaluations() + g.evaluations()
                && c.evaluations() <= budget
                && g.evaluations() <= budget
                && c.candidates.iter().sum::<usize>() as u64 == c.evaluations()
                && g.candidates.iter().sum::<usize>() as u64 == g.evaluations();
        }
    }
    for t in &all {
        exact &= t.evaluations() == t.budget;
    }

    let ok = cal_rosen >= 8
        && ga_rosen >= 8
        && role > 0
        && attribute == 0
        && ga_rec == 0
        && cal_rec >= 8
        && exact
        && elapsed < Duration::from_secs(60);
    verdict(
        "CAL/GA",
        ok,
        format!(
            "rosenbrock CAL<1e-3 {cal_rosen}/10, GA<1e-2 {ga_rosen}/10; recycling role optimum {role}, attribute optimum {attribute}, GA {ga_rec}/10, CAL {cal_rec}/10; accounting exact {exact}; {elapsed:.2?}"
        ),
    );
}

fn tamper(dir: &Path, file: &str, index: usize) -> Option<(String, usize)> {
    let path = dir.join(file);
    let mut ls = lines(&path);
    ls[index] = ls[index].replacen(':', ":1", 1);
    fs::write(&path, ls.join("\n") + "\n").unwrap();
    replay(dir).unwrap().divergence.map(|d| (d.file, d.index))
}

#[test]
fn determinism_closure() {
    let tmp = tempfile::tempdir().unwrap();
    let small = |name: &str, extra: &[(&str, toml::Value)]| -> PathBuf {
        let mut over = vec![("output.name", toml::Value::String(name.replace(".toml", "")))];
        over.extend_from_slice(extra);
        run_experiment(&shipped(name, tmp.path(), &over), &RunOptions::default()).unwrap()
    };
    let int = |x: i64| toml::Value::Integer(x);
    let runs = vec![
        small("evoc.toml", &[("world.iterations", int(80))]),
        small("evoc-rr.toml", &[("world.iterations", int(120))]),
        small("cf-shift.toml", &[("world.iterations", int(60)), ("seeds", toml::Value::Array(vec![int(0), int(1)])), ("cf.shift_schedule", toml::Value::Array(vec![int(30)]))]),
        small("evoc2.toml", &[("exchange.iterations", int(40))]),
        small("cal-bench.toml", &[("cal.budget", int(2000)), ("cal.recycling_budget", int(500)), ("seeds", toml::Value::Array(vec![int(0), int(1)]))]),
    ];

    let steered_cfg = shipped(
        "evoc2.toml",
        tmp.path(),
        &[("output.name", toml::Value::String("steered".into())), ("exchange.iterations", int(30))],
    );
    let weights = [("worn".to_string(), [("holds_weight".to_string(), 0.9)].into_iter().collect())].into_iter().collect();
    let script = vec![
        ScriptedCommand { seed: None, at: 4, command: Command::Pause },
        ScriptedCommand {
            seed: None,
            at: 4,
            command: Command::DefineContext { concept: "TIRE".into(), context: "garden".into(), weights },
        },
        ScriptedCommand { seed: None, at: 4, command: Command::Resume },
        ScriptedCommand { seed: None, at: 9, command: Command::RateObject { object: 1, rating: 0.0 } },
        ScriptedCommand { seed: None, at: 25, command: Command::Stop },
    ];
    let steered = run_experiment(&steered_cfg, &RunOptions { force: false, script }).unwrap();
    let logged = lines(&steered.join("seed-0/command-log.jsonl")).len();

    let mut identical = Vec::new();
    for d in runs.iter().chain([&steered]) {
        identical.push(replay(d).unwrap().identical);
    }
    let metrics_hit = tamper(&runs[0], "seed-0/metrics.jsonl", 41);
    let command_hit = tamper(&steered, "seed-0/command-log.jsonl", 3);

    let ok = identical.iter().all(|&x| x)
        && logged == 5
        && metrics_hit == Some(("seed-0/metrics.jsonl".into(), 41))
        && command_hit.as_ref().is_some_and(|(f, _)| f.starts_with("seed-0/"));
    verdict(
        "Determinism closure",
        ok,
        format!(
            "replays identical {identical:?} (last has {logged} logged commands); tampered metrics line found at {metrics_hit:?}; moved command diverges at {command_hit:?}"
        ),
    );
}
