//! Acceptance suite: one PASS/FAIL/WAIVED line per criterion.
//!
//! Runs as a plain binary so the lines are always visible; exits non-zero
//! when any criterion fails.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use fedbench_core::data::{
    apply_local_projection, generate_synthetic_federated, CsvSchema, FederatedDataset, SyntheticSpec,
};
use fedbench_core::eval::{
    baseline_siloed, multi_run_stats, rank_methods, CheckpointMode, MetricKind, TieRule, TrainConfig,
};
use fedbench_core::fl::{aggregate_val_loss, init_federation, run_replicates, ExperimentConfig, RunResult};
use fedbench_core::nn::arch::heart;
use fedbench_core::nn::{bce_loss, count_params, Matrix, Model, ModelSpec, Parameterized, Role};
use fedbench_core::par::Execution;
use fedbench_core::rng::SeedTree;
use fedbench_core::strategy::{client_update, fedadam_drift_demo, LocalBudget, StrategyConfig, StrategyKind};
use rand::Rng;

enum Status {
    Pass,
    Fail,
    Waived,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn drift() -> Outcome {
    let t = Instant::now();
    let traj = fedadam_drift_demo();
    let elapsed = t.elapsed();
    let last = *traj.last().unwrap();
    check(
        traj.len() == 30 && (last - -0.204).abs() <= 1e-3 && elapsed < Duration::from_millis(1),
        format!(
            "x_30 = {last:.5} (target -0.204 ± 0.001), {} steps in {elapsed:?}",
            traj.len()
        ),
    )
}

fn budgets() -> Outcome {
    let mut rng = SeedTree::new(0).rng();
    let d = heart::INPUT_DIM;
    let counts = [
        count_params(&heart::logistic().build(d, &mut rng).unwrap()),
        count_params(&heart::dnn().build(d, &mut rng).unwrap()),
        count_params(&heart::apfl_twin().build_twins(d, &mut rng).unwrap()),
        count_params(&heart::fenda().build(d, &mut rng).unwrap()),
    ];
    check(
        counts == [14, 151, 152, 151],
        format!("logistic/dnn/apfl/fenda = {counts:?} (want [14, 151, 152, 151])"),
    )
}

fn ranks() -> Outcome {
    // Column order: Heart, IXI, ISIC, Mortality acc/auc, Delirium acc/auc.
    let table: [(&str, [u32; 7]); 10] = [
        ("FedAvg", [8, 7, 3, 6, 5, 6, 6]),
        ("FedAdam", [7, 10, 5, 10, 9, 9, 9]),
        ("FedProx", [9, 8, 4, 8, 7, 1, 2]),
        ("SCAFFOLD", [10, 9, 2, 9, 2, 10, 10]),
        ("MOON", [6, 4, 7, 7, 3, 4, 5]),
        ("FedPer", [2, 4, 6, 2, 6, 2, 3]),
        ("Ditto", [4, 3, 1, 1, 1, 7, 7]),
        ("APFL", [5, 1, 8, 5, 8, 5, 4]),
        ("PerFCL", [3, 6, 10, 4, 10, 8, 8]),
        ("FENDA-FL", [1, 2, 9, 3, 4, 3, 1]),
    ];
    // Any metric values with this ordering; higher is better.
    let methods: Vec<String> = table.iter().map(|r| r.0.to_string()).collect();
    let values: Vec<Vec<f64>> = table
        .iter()
        .map(|r| r.1.iter().map(|&k| 1.0 - k as f64 / 20.0).collect())
        .collect();
    let columns: Vec<String> = (0..7).map(|j| format!("c{j}")).collect();
    let t = rank_methods(&methods, &columns, &values, TieRule::Competition).unwrap();
    let avg = |m: &str| t.avg_rank[methods.iter().position(|x| x == m).unwrap()];
    let got = [avg("FENDA-FL"), avg("Ditto"), avg("FedPer"), avg("FedAdam")];
    let rounded: Vec<f64> = got.iter().map(|v| (v * 100.0).round() / 100.0).collect();
    check(
        rounded == [3.29, 3.43, 3.57, 8.43],
        format!("FENDA-FL/Ditto/FedPer/FedAdam = {rounded:?} (want [3.29, 3.43, 3.57, 8.43])"),
    )
}

fn heart_data() -> Option<(PathBuf, PathBuf)> {
    let train = std::env::var_os("FEDBENCH_HEART_TRAIN")?;
    let test = std::env::var_os("FEDBENCH_HEART_TEST")?;
    Some((train.into(), test.into()))
}

fn mean_accuracy(results: &[RunResult], mode: CheckpointMode) -> Option<(f64, f64)> {
    let v: Vec<f64> = results
        .iter()
        .map(|r| r.mean_metric(mode, MetricKind::Accuracy))
        .collect::<Option<_>>()?;
    let s = multi_run_stats(&v).ok()?;
    Some((s.mean, s.ci_radius))
}

fn heart_reproduction() -> Outcome {
    let Some((train, test)) = heart_data() else {
        return Outcome {
            status: Status::Waived,
            detail: "prepared Fed-Heart-Disease CSVs not provided (set FEDBENCH_HEART_TRAIN and FEDBENCH_HEART_TEST)"
                .into(),
        };
    };
    let t = Instant::now();
    let data = match FederatedDataset::from_csv(&train, Some(&test), &CsvSchema::default(), 0.0, 0) {
        Ok(d) => d,
        Err(e) => return check(false, format!("could not load CSVs: {e}")),
    };
    let run = |kind, lr, model: ModelSpec, mode| {
        let mut cfg = ExperimentConfig::new(StrategyConfig::new(kind, lr), model, 15, LocalBudget::Steps(100), 4);
        cfg.checkpoint_modes = vec![mode];
        let res: Vec<RunResult> = run_replicates(&cfg, &data, Execution::Parallel)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        mean_accuracy(&res, mode).unwrap_or((f64::NAN, f64::NAN))
    };
    let avg = run(StrategyKind::FedAvg, 0.1, heart::logistic(), CheckpointMode::Global);
    let fenda = run(StrategyKind::Fenda, 1e-3, heart::fenda(), CheckpointMode::Local);
    check(
        (avg.0 - 0.724).abs() <= 0.03 && (fenda.0 - 0.815).abs() <= 0.03,
        format!(
            "FedAvg {:.3} (want 0.724 ± 0.03), FENDA-FL local {:.3} (want 0.815 ± 0.03), {:.1?}",
            avg.0,
            fenda.0,
            t.elapsed()
        ),
    )
}

fn reductions() -> Outcome {
    let t = Instant::now();
    let data = common::small_task();
    let exec = Execution::Parallel;
    let run = |s: StrategyConfig| -> RunResult {
        let cfg = common::config(s, 4, 10);
        fedbench_core::fl::run_experiment(&cfg, &data, 21, exec).unwrap()
    };
    let avg = run(common::strategy(StrategyKind::FedAvg));
    let mut prox = common::strategy(StrategyKind::FedProx);
    prox.mu_prox = Some(0.0);
    let mut moon = common::strategy(StrategyKind::Moon);
    moon.mu_moon = Some(0.0);
    let mut perfcl = common::strategy(StrategyKind::PerFcl);
    perfcl.mu_perfcl = Some(0.0);
    perfcl.gamma_perfcl = Some(0.0);
    let prox_ok = run(prox) == avg;
    let moon_ok = run(moon).history == avg.history;
    let p = run(perfcl);
    let f = run(common::strategy(StrategyKind::Fenda));
    let perfcl_ok = p.history == f.history && p.checkpoints == f.checkpoints;

    let tree = SeedTree::new(21);
    let avg_cfg = common::config(common::strategy(StrategyKind::FedAvg), 4, 10);
    let ditto_cfg = common::config(common::strategy(StrategyKind::Ditto), 4, 10);
    let (mut sa, mut ca) = init_federation(&avg_cfg, &data, &tree).unwrap();
    let (mut sd, mut cd) = init_federation(&ditto_cfg, &data, &tree).unwrap();
    let mut ditto_ok = sa.global_params == sd.global_params;
    for _ in 0..4 {
        fedbench_core::fl::run_round(&mut sa, &mut ca, &avg_cfg.strategy, avg_cfg.local_budget, exec).unwrap();
        fedbench_core::fl::run_round(&mut sd, &mut cd, &ditto_cfg.strategy, ditto_cfg.local_budget, exec).unwrap();
        ditto_ok &= sa.global_params == sd.global_params;
    }
    check(
        prox_ok && moon_ok && perfcl_ok && ditto_ok,
        format!(
            "fedprox(0)≡fedavg {prox_ok}, moon(0)≡fedavg {moon_ok}, perfcl(0,0)≡fenda {perfcl_ok}, ditto-global≡fedavg {ditto_ok}, {:.1?}",
            t.elapsed()
        ),
    )
}

fn loss_of(model: &Model, x: &Matrix, y: &[f64]) -> f64 {
    bce_loss(&model.predict(x).unwrap(), y, None).unwrap().0
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut rng = SeedTree::new(6).rng();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for i in 0..100 {
        let d = rng.random_range(2..6);
        let spec = if i % 2 == 0 {
            let depth = rng.random_range(0..3);
            ModelSpec::Mlp {
                hidden: (0..depth).map(|_| rng.random_range(2..6)).collect(),
            }
        } else {
            ModelSpec::Fenda {
                global: vec![rng.random_range(2..5)],
                local: vec![rng.random_range(2..5)],
                head_hidden: if rng.random_bool(0.5) { vec![3] } else { vec![] },
            }
        };
        let mut model = spec.build(d, &mut rng).unwrap();
        let n = 5;
        let x = Matrix::new(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let (pred, cache) = model.forward(&x).unwrap();
        let (_, dout) = bce_loss(&pred, &y, None).unwrap();
        let analytic = model.backward(&cache, &dout).unwrap();
        let base = model.flatten();
        let h = 1e-5;
        for k in 0..base.len() {
            let mut p = base.clone();
            p.values_mut()[k] += h;
            model.load(&p).unwrap();
            let up = loss_of(&model, &x, &y);
            p.values_mut()[k] -= 2.0 * h;
            model.load(&p).unwrap();
            let down = loss_of(&model, &x, &y);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.values()[k];
            let scale = a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((a - numeric).abs() / scale);
            checked += 1;
        }
        model.load(&base).unwrap();
    }
    check(
        worst <= 1e-4,
        format!(
            "100 models, {checked} parameters, worst relative error {worst:.2e} (limit 1e-4), {:.1?}",
            t.elapsed()
        ),
    )
}

fn checkpoint_dominance() -> Outcome {
    let t = Instant::now();
    let mut spec = SyntheticSpec::iid(4, 40, 8);
    spec.noise = 0.5;
    spec.label_shift = 0.3;
    let data = generate_synthetic_federated(&spec, 12).unwrap();
    // Far more rounds and a larger step size than the task needs.
    let mut cfg = ExperimentConfig::new(
        StrategyConfig::new(StrategyKind::FedAvg, 0.05),
        ModelSpec::Mlp { hidden: vec![32] },
        40,
        LocalBudget::Steps(20),
        8,
    );
    cfg.seeds = (0..20).collect();
    cfg.checkpoint_modes = vec![CheckpointMode::Latest, CheckpointMode::Local];
    let results: Vec<RunResult> = run_replicates(&cfg, &data, Execution::Parallel)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let mut pairs = 0;
    let mut dominated = 0;
    for r in &results {
        let local = &r.val_losses[&CheckpointMode::Local];
        let latest = &r.val_losses[&CheckpointMode::Latest];
        for (l, t) in local.iter().zip(latest) {
            pairs += 1;
            dominated += usize::from(l <= t);
        }
    }
    let local = mean_accuracy(&results, CheckpointMode::Local).unwrap().0;
    let latest = mean_accuracy(&results, CheckpointMode::Latest).unwrap().0;
    check(
        dominated == pairs && local >= latest,
        format!(
            "val loss local ≤ latest in {dominated}/{pairs} pairs; mean test accuracy local {local:.4} vs latest {latest:.4}, {:.1?}",
            t.elapsed()
        ),
    )
}

fn heterogeneity() -> Outcome {
    let t = Instant::now();
    let mut spec = SyntheticSpec::iid(4, 200, 10);
    spec.noise = 0.3;
    spec.separation = 2.0;
    let base = generate_synthetic_federated(&spec, 7).unwrap();
    let data = apply_local_projection(&base, 10, 11).unwrap();
    let seeds: Vec<u64> = (0..5).collect();
    let fl = |kind, model, modes: Vec<CheckpointMode>| {
        let mut cfg = ExperimentConfig::new(StrategyConfig::new(kind, 0.01), model, 15, LocalBudget::Steps(50), 16);
        cfg.seeds = seeds.clone();
        cfg.checkpoint_modes = modes.clone();
        let res: Vec<RunResult> = run_replicates(&cfg, &data, Execution::Parallel)
            .into_iter()
            .map(Result::unwrap)
            .collect();
        // Best checkpoint mode, as in method ranking.
        modes
            .iter()
            .map(|&m| mean_accuracy(&res, m).unwrap().0)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let avg = fl(
        StrategyKind::FedAvg,
        ModelSpec::Mlp { hidden: vec![16] },
        vec![CheckpointMode::Global, CheckpointMode::Local],
    );
    let fenda = fl(
        StrategyKind::Fenda,
        ModelSpec::Fenda {
            global: vec![8],
            local: vec![8],
            head_hidden: vec![],
        },
        vec![CheckpointMode::Local],
    );
    // Same model size and the same number of optimizer steps as one FL client.
    let silo_cfg = TrainConfig {
        model: ModelSpec::Mlp { hidden: vec![16] },
        lr: 0.01,
        epochs: 75,
        batch_size: 16,
        balance_train: false,
    };
    let silo: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            baseline_siloed(&data, &silo_cfg, &[MetricKind::Accuracy], s, Execution::Parallel).unwrap()[0]
                .mean
                .unwrap()
        })
        .collect();
    let silo = multi_run_stats(&silo).unwrap().mean;
    check(
        fenda > avg && fenda >= silo && t.elapsed() < Duration::from_secs(300),
        format!(
            "mean accuracy FENDA-FL {fenda:.4}, FedAvg {avg:.4}, siloed {silo:.4} (need FENDA > FedAvg and FENDA ≥ siloed), {:.1?}",
            t.elapsed()
        ),
    )
}

fn invariants() -> Outcome {
    let data = common::small_task();
    let exec = Execution::Parallel;
    let mut worst_c: f64 = 0.0;
    let mut worst_agg: f64 = 0.0;
    let mut alpha_ok = true;
    let mut local_ok = true;

    let mut s = common::strategy(StrategyKind::Scaffold);
    s.client_lr = 0.05;
    let cfg = common::config(s, 6, 10);
    let (mut server, mut clients) = init_federation(&cfg, &data, &SeedTree::new(1)).unwrap();
    for _ in 0..6 {
        let rec =
            fedbench_core::fl::run_round(&mut server, &mut clients, &cfg.strategy, cfg.local_budget, exec).unwrap();
        for j in 0..server.scaffold_c.len() {
            let mean = clients.iter().map(|c| c.control_variate().unwrap()[j]).sum::<f64>() / clients.len() as f64;
            worst_c = worst_c.max((mean - server.scaffold_c[j]).abs());
        }
        let losses: Vec<f64> = clients.iter().map(|c| c.validation_loss().unwrap()).collect();
        let n: Vec<usize> = clients.iter().map(|c| c.n_val()).collect();
        worst_agg = worst_agg.max((aggregate_val_loss(&losses, &n).unwrap() - rec.aggregated_val_loss).abs());
    }

    for kind in [
        StrategyKind::Apfl,
        StrategyKind::FedPer,
        StrategyKind::Fenda,
        StrategyKind::PerFcl,
        StrategyKind::Ditto,
    ] {
        let mut s = common::strategy(kind);
        if kind == StrategyKind::Apfl {
            s.alpha_lr = Some(10.0);
        }
        let cfg = common::config(s, 5, 8);
        let (mut server, mut clients) = init_federation(&cfg, &data, &SeedTree::new(2)).unwrap();
        for _ in 0..5 {
            let msg = server.message(kind);
            let updates: Vec<_> = clients
                .iter_mut()
                .map(|c| client_update(&cfg.strategy, c, &msg, cfg.local_budget).unwrap())
                .collect();
            let before: Vec<Vec<u64>> = clients.iter().map(|c| local_bits(c.model().all_params())).collect();
            server.aggregate(&cfg.strategy, &updates).unwrap();
            let next = server.message(kind);
            for (c, b) in clients.iter_mut().zip(&before) {
                c.receive(kind, &next).unwrap();
                local_ok &= &local_bits(c.model().all_params()) == b;
                if let Some(a) = c.alpha() {
                    alpha_ok &= (0.0..=1.0).contains(&a);
                }
            }
        }
    }
    check(
        worst_c <= 1e-10 && alpha_ok && local_ok && worst_agg <= 1e-12,
        format!(
            "|c - mean c_i| ≤ {worst_c:.1e}, alpha in [0,1] {alpha_ok}, local params untouched {local_ok}, aggregated val loss error {worst_agg:.1e}"
        ),
    )
}

fn local_bits(p: fedbench_core::nn::ParameterVector) -> Vec<u64> {
    p.subset(&[Role::Local, Role::Classifier])
        .values()
        .iter()
        .map(|v| v.to_bits())
        .collect()
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("FedAdam drift oracle", drift),
        ("parameter budgets", budgets),
        ("rank-table oracle", ranks),
        ("Fed-Heart-Disease reproduction", heart_reproduction),
        ("reduction equivalences", reductions),
        ("gradient correctness", gradients),
        ("checkpoint dominance", checkpoint_dominance),
        ("extreme-heterogeneity direction", heterogeneity),
        ("protocol invariants", invariants),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Waived => "WAIVED",
        };
        println!("[{tag}] {} {name}: {}", i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria failed", failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
