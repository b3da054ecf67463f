//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics, RankTieBreaker, Statistics};
use streamsim_cli::experiment::{ablation_specs, heterogeneity_study, run_scenario};
use streamsim_cli::report::AllocationRow;
use streamsim_cli::{parse_config, ExperimentConfig};
use streamsim_core::pipeline::EventKind;
use streamsim_core::ranker::measure_recall;
use streamsim_core::scheduler::generate;
use streamsim_core::{
    allocate_single_dc, calibrate_noise, instance_generation_latency, lpt_order, makespan_bruteforce, predict_lengths,
    ptl, run_iterations, simulate_instance, steady_state_iteration_time, verify_staleness, weight_transfer_time,
    AdjustAction, DispatchPolicy, IterationInput, LengthDistribution, LinkSpec, OrderPolicy, PipelineMode,
    PipelineParams, PtlProfile, RankerModel, SampleSpec, ScoreRule, StageCostModel, TrainCostModel, TrainStage,
    Workload,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(started: Instant, limit_s: f64, detail: String) -> Outcome {
    let s = started.elapsed().as_secs_f64();
    check(s < limit_s, format!("{detail}; {s:.2} s of {limit_s} s"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn preset(name: &str) -> ExperimentConfig {
    parse_config(configs().join(name)).unwrap()
}

fn lpt_bound() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut violations) = (1.0f64, 0);
    let trials = 1_500;
    for _ in 0..trials {
        let jobs: Vec<u64> = (0..rng.random_range(1..=12))
            .map(|_| rng.random_range(1..=20))
            .collect();
        let slots = rng.random_range(2..=3);
        let lpt = lpt_order(&jobs, slots).map_err(|e| e.to_string())?.makespan;
        let opt = makespan_bruteforce(&jobs, slots).map_err(|e| e.to_string())?;
        if 3 * lpt > 4 * opt {
            violations += 1;
        }
        worst = worst.max(lpt as f64 / opt as f64);
    }
    if violations > 0 || worst <= 1.05 {
        return Err(format!("{violations} violations, worst ratio {worst:.3}"));
    }
    within(started, 30.0, format!("{trials} instances, worst ratio {worst:.3}"))
}

/// Random stage costs; `(gpus, tp)` pairs without an entry are infeasible.
struct Table {
    gen: BTreeMap<(u32, u32), f64>,
    train: BTreeMap<u32, f64>,
}

impl StageCostModel for Table {
    fn generation_ms(&self, gpus: u32, tp: u32) -> Option<f64> {
        self.gen.get(&(gpus, tp)).copied()
    }

    fn training_ms(&self, gpus: u32) -> Option<f64> {
        self.train.get(&gpus).copied()
    }
}

/// Scans every feasible triple and keeps the lexicographically smallest
/// `(time, x, x + y, tp)`.
fn exhaustive(n: u32, t: &Table) -> Option<(u32, u32, u32)> {
    let mut best: Option<(f64, u32, u32, u32, u32)> = None;
    for x in 1..n {
        for y in 1..=n - x {
            for tp in [1, 2, 4, 8] {
                let (Some(g), Some(tr)) = (t.gen.get(&(x, tp)), t.train.get(&y)) else {
                    continue;
                };
                let key = (g.max(*tr), x, x + y, tp, y);
                let better = match best {
                    None => true,
                    Some(b) => key.0 < b.0 || (key.0 == b.0 && (key.1, key.2, key.3) < (b.1, b.2, b.3)),
                };
                if better {
                    best = Some(key);
                }
            }
        }
    }
    best.map(|(_, x, _, tp, y)| (x, y, tp))
}

fn allocation_optimality() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tps = [1, 2, 4, 8];
    let mut mismatches = Vec::new();
    for table in 0..100 {
        let n = rng.random_range(2..=32u32);
        let mut t = Table {
            gen: BTreeMap::new(),
            train: BTreeMap::new(),
        };
        for gpus in 1..=n {
            for tp in tps {
                if gpus % tp == 0 && rng.random_bool(0.8) {
                    t.gen.insert((gpus, tp), f64::from(rng.random_range(1..200u32)));
                }
            }
            if rng.random_bool(0.9) {
                t.train.insert(gpus, f64::from(rng.random_range(1..200u32)));
            }
        }
        let got = allocate_single_dc(n, &t, &tps)
            .ok()
            .map(|r| (r.gen_gpus, r.train_gpus, r.gen_tp));
        if got != exhaustive(n, &t) {
            mismatches.push(table);
        }
    }
    if !mismatches.is_empty() {
        return Err(format!("tables {mismatches:?} differ"));
    }
    within(started, 5.0, "100 tables match".into())
}

fn tail_isolation() -> Outcome {
    let started = Instant::now();
    let l = 1_000;
    let mut lens = vec![l; 64];
    lens.extend([2 * l, 2 * l]);
    let w = predict_lengths(
        &RankerModel::oracle(),
        &Workload::from_lengths(&lens, 16).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let profile = PtlProfile::default();
    let alpha = 2.0 / 66.0;
    let makespan = |policy, seed| -> Result<f64, String> {
        let tl = generate(&w, 2, policy, alpha, ScoreRule::Max, &profile, 128, seed, 0.0).map_err(|e| e.to_string())?;
        Ok(tl.iter().map(|t| t.makespan).fold(0.0, f64::max))
    };
    let mut skew = Vec::new();
    let mut random = Vec::new();
    for seed in 0..50 {
        skew.push(makespan(DispatchPolicy::SkewnessAware, seed)?);
        random.push(makespan(DispatchPolicy::Random, seed)?);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[24] + v[25]) / 2.0
    };
    let (s, r) = (median(&mut skew), median(&mut random));
    let gain = 1.0 - s / r;
    if gain < 0.10 {
        return Err(format!(
            "median makespan {s:.0} vs {r:.0} ms, gain {:.1}%",
            100.0 * gain
        ));
    }
    within(
        started,
        10.0,
        format!("median makespan {s:.0} vs {r:.0} ms, gain {:.1}%", 100.0 * gain),
    )
}

fn latency_formula() -> Outcome {
    let profiles = [
        PtlProfile::default(),
        PtlProfile::new(20.0, 0.05, 128.0, 0.4).map_err(|e| e.to_string())?,
    ];
    let mut points = 0;
    for p in &profiles {
        for bs in [1u32, 2, 7, 32, 64, 65, 200] {
            for l in [1u32, 9, 300, 2_048] {
                for rounds in [1u32, 3, 4] {
                    let m = bs * rounds;
                    let samples: Vec<SampleSpec> = (0..m).map(|i| SampleSpec::new(u64::from(i), 8, l)).collect();
                    let sim = simulate_instance(&samples, p, bs, OrderPolicy::Fifo).makespan;
                    let formula = instance_generation_latency(p, bs, f64::from(l), m).map_err(|e| e.to_string())?;
                    if sim != formula {
                        return Err(format!("bs={bs} L={l} M={m}: {sim} vs {formula}"));
                    }
                    points += 1;
                }
            }
        }
    }
    check(points >= 100, format!("{points} grid points exact"))
}

fn mode_ladder() -> Outcome {
    let cfg = preset("default.ini");
    let specs = ablation_specs(&cfg);
    let mut worst = vec![f64::INFINITY; specs.len() - 1];
    let mut sums = vec![0.0; specs.len()];
    let seeds = 20;
    for seed in 0..seeds {
        let thr = specs
            .iter()
            .map(|s| run_scenario(&cfg, &s.deployment, s.mode, s.policy, seed).map(|r| r.throughput))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| e.to_string())?;
        for (k, w) in thr.windows(2).enumerate() {
            worst[k] = worst[k].min(w[1] / w[0]);
        }
        for (s, t) in sums.iter_mut().zip(&thr) {
            *s += t;
        }
    }
    let ladder: Vec<String> = sums.iter().map(|s| format!("{:.2}", s / sums[0])).collect();
    let detail = format!(
        "mean ladder {} over {seeds} seeds, worst paired step {:.3}",
        ladder.join("/"),
        worst.iter().copied().fold(f64::INFINITY, f64::min)
    );
    check(worst.iter().all(|&w| w >= 0.98), detail)
}

fn random_inputs(rng: &mut ChaCha8Rng) -> Vec<IterationInput> {
    let n = rng.random_range(2..30usize);
    (0..rng.random_range(2..15usize))
        .map(|i| {
            let g = rng.random_range(100.0..3_000.0);
            let mut inp = IterationInput::uniform(g, n, 1, (i * n) as u64);
            let mut fin: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.0..g)).collect();
            fin.sort_by(f64::total_cmp);
            for (c, f) in inp.completions.iter_mut().zip(fin) {
                c.finish_ms = f;
                c.tokens = rng.random_range(1..300);
            }
            inp
        })
        .collect()
}

const MODES: [PipelineMode; 6] = [
    PipelineMode::Colocated,
    PipelineMode::SerialDisaggregated,
    PipelineMode::Minibatch { count: 3 },
    PipelineMode::DynamicStream,
    PipelineMode::OneStepAsync,
    PipelineMode::FullyAsync,
];

fn staleness_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut traces = 0;
    let mut corrupted = None;
    for _ in 0..100 {
        let inputs = random_inputs(&mut rng);
        let model = TrainCostModel::new(rng.random_range(0.01..8.0), rng.random_range(0.0..400.0), 1)
            .map_err(|e| e.to_string())?;
        let stage = TrainStage::new(model, 1).map_err(|e| e.to_string())?;
        for mode in MODES {
            let p = PipelineParams {
                weight_ms: rng.random_range(0.0..800.0),
                min_train_tokens: rng.random_range(1..3_000),
                warmup: 1,
                ..PipelineParams::new(mode)
            };
            let trace = run_iterations(&p, &inputs, &stage).map_err(|e| e.to_string())?;
            let s = verify_staleness(&trace);
            let limit = usize::from(mode.is_async());
            if s > limit {
                return Err(format!("{mode} trace reached staleness {s}"));
            }
            traces += 1;
            if mode.is_async() && corrupted.is_none() && inputs.len() >= 4 {
                let mut bad = trace.clone();
                // drop every weight update after the first
                bad.events
                    .retain(|e| !(e.kind == EventKind::WeightApply && e.payload >= 1));
                corrupted = Some(verify_staleness(&bad));
            }
        }
    }
    match corrupted {
        Some(s) if s > 1 => Ok(format!("{traces} traces within bound, corrupted trace gives {s}")),
        other => Err(format!("negative control gave {other:?}")),
    }
}

fn fully_async_bound() -> Outcome {
    let (gen, n, tokens) = (10_000.0, 64, 100);
    let inputs: Vec<IterationInput> = (0..30)
        .map(|i| IterationInput::uniform(gen, n, tokens, (i * n) as u64))
        .collect();
    let model = TrainCostModel::new(gen / (n as f64 * f64::from(tokens)), 0.0, 1).map_err(|e| e.to_string())?;
    let stage = TrainStage::new(model, 1).map_err(|e| e.to_string())?;
    let p = PipelineParams {
        weight_ms: 3_000.0,
        warmup: 5,
        ..PipelineParams::new(PipelineMode::FullyAsync)
    };
    let trace = run_iterations(&p, &inputs, &stage).map_err(|e| e.to_string())?;
    let t = steady_state_iteration_time(&trace, 5).map_err(|e| e.to_string())?;
    let bound = gen.max(stage.iteration_ms(n as u64 * u64::from(tokens)));
    let dev = (t - bound).abs() / bound;
    check(
        dev <= 0.01,
        format!("iteration {t:.1} ms vs bound {bound:.1} ms ({:.3}%)", 100.0 * dev),
    )
}

/// Spearman correlation and two-sided p-value from the t approximation.
fn spearman(x: &[f64], y: &[f64]) -> (f64, f64) {
    let rx = Data::new(x.to_vec()).ranks(RankTieBreaker::Average);
    let ry = Data::new(y.to_vec()).ranks(RankTieBreaker::Average);
    let rho = (&rx).covariance(&ry) / ((&rx).std_dev() * (&ry).std_dev());
    let dof = (x.len() - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (dof / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    (rho, p)
}

fn ranker_calibration() -> Outcome {
    let started = Instant::now();
    let dist = LengthDistribution::lognormal(7.6, 1.0, 20_000);
    let c = calibrate_noise(0.87, 0.2, &dist, 10_000, 4, 8).map_err(|e| e.to_string())?;
    let recall = measure_recall(c.sigma, 0.2, &dist, 10_000, 4, 1_008)
        .map_err(|e| e.to_string())?
        .recall;
    if (recall - 0.87).abs() > 0.03 {
        return Err(format!("sigma {:.3} gives recall {recall:.3}", c.sigma));
    }
    let sigmas: Vec<f64> = (0..16).map(|k| 0.15 * f64::from(k)).collect();
    let recalls = sigmas
        .iter()
        .map(|&s| measure_recall(s, 0.2, &dist, 10_000, 2, 77).map(|r| r.recall))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| e.to_string())?;
    let (rho, p) = spearman(&sigmas, &recalls);
    if !(rho < 0.0 && p < 0.01) {
        return Err(format!("spearman rho {rho:.3}, p {p:.2e}"));
    }
    within(
        started,
        60.0,
        format!(
            "sigma {:.3} gives held-out recall {recall:.3}; spearman rho {rho:.3}, p {p:.1e}",
            c.sigma
        ),
    )
}

fn elastic_rows(cfg: &ExperimentConfig) -> Result<Vec<AllocationRow>, String> {
    let d = streamsim_cli::experiment::Deployment::from_config(cfg);
    let run =
        run_scenario(cfg, &d, PipelineMode::FullyAsync, DispatchPolicy::SkewnessAware, 0).map_err(|e| e.to_string())?;
    Ok(run.allocation)
}

fn elastic_controller() -> Outcome {
    let mut cfg = preset("elastic.ini");
    cfg.pipeline.seed = 0;
    let rows = elastic_rows(&cfg)?;
    let triggers: Vec<usize> = rows
        .iter()
        .filter(|r| r.action == AdjustAction::AddOneDp)
        .map(|r| r.iteration)
        .collect();
    if triggers.len() < 2 {
        return Err(format!("only {} additions", triggers.len()));
    }
    for &i in &triggers {
        let Some(next) = rows.get(i + 1) else { continue };
        if next.delta.abs() >= rows[i].delta.abs() {
            return Err(format!(
                "|delta| {:.0} -> {:.0} ms after the addition at iteration {i}",
                rows[i].delta.abs(),
                next.delta.abs()
            ));
        }
    }

    cfg.workload.ramp_to = 1.0;
    cfg.workload.resample = false;
    cfg.pipeline.iterations = 50;
    let stationary = elastic_rows(&cfg)?;
    let fired = stationary.iter().filter(|r| r.action != AdjustAction::None).count();
    check(
        fired == 0 && stationary.len() == 50,
        format!(
            "additions at iterations {triggers:?} each shrink |delta|; {fired} triggers on a stationary 50-iteration run"
        ),
    )
}

fn heterogeneity() -> Outcome {
    let w =
        weight_transfer_time(72e9, &LinkSpec::new(80.0, 1).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    if w != 7.2 {
        return Err(format!("72B over 80 Gbps takes {w} s"));
    }
    let r = heterogeneity_study(&preset("hetero.ini"));
    let (Some(homo), Some(hetero)) = (r.row("homogeneous"), r.row("heterogeneous")) else {
        return Err("missing rows".into());
    };
    let ratio = hetero.throughput_per_cost / homo.throughput_per_cost;
    check(
        ratio > 1.0,
        format!("throughput per cost ratio {ratio:.3}; 72B weights over 80 Gbps take {w} s"),
    )
}

/// SHA-256 of every output file plus stdout, keyed by file name.
fn run_hashed(args: &[&str], out: &Path) -> Result<BTreeMap<String, String>, String> {
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--out", out.to_str().unwrap()]);
    let o = Command::new(env!("CARGO_BIN_EXE_streamsim"))
        .args(&full)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?} exited with {}", o.status));
    }
    let mut hashes = BTreeMap::new();
    hashes.insert("<stdout>".to_string(), hex::encode(Sha256::digest(&o.stdout)));
    for entry in fs::read_dir(out).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let bytes = fs::read(&path).map_err(|e| e.to_string())?;
        hashes.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            hex::encode(Sha256::digest(bytes)),
        );
    }
    Ok(hashes)
}

fn determinism() -> Outcome {
    let c = |name: &str| configs().join(name).to_string_lossy().into_owned();
    let commands = [
        vec!["run".to_string(), c("default.ini")],
        vec!["run".to_string(), c("elastic.ini"), "--seed".into(), "3".into()],
        vec!["ablation".to_string(), c("default.ini")],
        vec!["hetero".to_string(), c("hetero.ini")],
        vec!["fit-profile".to_string(), c("profile.csv")],
        vec!["calibrate-ranker".to_string(), c("default.ini")],
    ];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (k, cmd) in commands.iter().enumerate() {
        let args: Vec<&str> = cmd.iter().map(String::as_str).collect();
        let a = run_hashed(&args, &dir.path().join(format!("{k}a")))?;
        let b = run_hashed(&args, &dir.path().join(format!("{k}b")))?;
        if a != b {
            return Err(format!("`{}` differs between runs", cmd[0]));
        }
        files += a.len();
    }
    Ok(format!("{} commands, {files} hashed outputs identical", commands.len()))
}

fn batch_merge() -> Outcome {
    let p = PtlProfile::default();
    let t = |b: u32| ptl(&p, b).map(|v| v * f64::from(b));
    let mut violations = 0u64;
    let mut first = None;
    for x in 1..=512u32 {
        for y in 1..=512u32 {
            let (merged, split) = (t(x + y).map_err(|e| e.to_string())?, t(x).unwrap() + t(y).unwrap());
            if merged >= split {
                violations += 1;
                first.get_or_insert((x, y, merged, split));
            }
        }
    }
    match first {
        None => Ok("T(x+y) < T(x)+T(y) on all 262144 pairs".into()),
        Some((x, y, m, s)) => Err(format!(
            "{violations} of 262144 pairs violate; first x={x} y={y}: T(x+y)={m:.1} >= {s:.1}"
        )),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("lpt within 4/3 of optimal", lpt_bound),
        ("single-datacenter allocation is optimal", allocation_optimality),
        ("tail isolation beats random dispatch", tail_isolation),
        ("closed-form latency matches simulation", latency_formula),
        ("overlap ladder is monotone", mode_ladder),
        ("staleness is bounded", staleness_bound),
        ("fully asynchronous mode reaches the stage bound", fully_async_bound),
        ("ranker calibration", ranker_calibration),
        ("elastic controller", elastic_controller),
        ("heterogeneous hardware pays off", heterogeneity),
        ("cli outputs are deterministic", determinism),
        ("merging batches saves time", batch_merge),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(d) => println!("criterion {:>2} PASS {name}: {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {d}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
