//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Pass criterion numbers as arguments to run a subset.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::time::{Duration, Instant};

use mtlsa::bench::{
    paired_difference, parse_results, report_csv, results_csv, run_matrix, select_roster, summarize, MatrixData,
};
use mtlsa::confidence::{density_cutoff, distance_matrix, local_density, normalize_density};
use mtlsa::dataio::{gen_two_task, DisjointDataset, GeneratorConfig, ShiftSpec, TaskData};
use mtlsa::distribution::solve_emd;
use mtlsa::labels::{interpolate, sharpen, to_pseudo};
use mtlsa::nn::{MultiTaskNet, Task};
use mtlsa::trainer::{train, History, Phase, Strategy, TrainConfig, Trainer};
use mtlsa::weighting::{SampleWeightRecord, WeightMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn emd_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let (m, n) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let (s, d, c) = random_transport(&mut rng, m, n);
        let plan = solve_emd(&s, &d, &c).map_err(|e| format!("case {case}: {e}"))?;
        let gap = (plan.work(&c) - brute_force_emd(&s, &d, &c)).abs();
        worst = worst.max(gap);
        check(gap < 1e-9, || format!("case {case} ({m}x{n}): cost off by {gap:e}"))?;
    }
    for case in 0..100 {
        let n = rng.random_range(1..=8);
        let (_, pi, c) = random_transport(&mut rng, 1, n);
        let total: f64 = pi.iter().sum();
        let pi: Vec<f64> = pi.iter().map(|p| p / total).collect();
        let plan = solve_emd(&[1.0], &pi, &c).map_err(|e| e.to_string())?;
        let closed: f64 = pi.iter().zip(&c[0]).map(|(p, d)| p * d).sum();
        let gap = (plan.total_cost - closed).abs();
        check(gap < 1e-9, || format!("single source case {case}: off by {gap:e}"))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("500 instances, worst gap {worst:.1e}"))
}

fn density_oracle_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..200 {
        let n = rng.random_range(1..=50);
        let dim = rng.random_range(1..=4);
        let k = rng.random_range(1..1000u64);
        let pts = random_group(&mut rng, n, dim);
        let d = distance_matrix(&pts).map_err(|e| e.to_string())?;
        let cutoff = density_cutoff(&d, k as f64 / 1000.0).map_err(|e| e.to_string())?;
        let (want_cutoff, want_rho) = density_oracle(&pts, k);
        check(cutoff == want_cutoff, || format!("case {case}: cutoff {cutoff} vs {want_cutoff}"))?;
        let rho = local_density(&d, cutoff);
        check(rho == want_rho, || format!("case {case}: densities differ"))?;
    }
    let pts = vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 0.0]];
    let d = distance_matrix(&pts).map_err(|e| e.to_string())?;
    let cutoff = density_cutoff(&d, 0.6).map_err(|e| e.to_string())?;
    check(cutoff == 98.01, || format!("worked example cutoff {cutoff}"))?;
    let rho = local_density(&d, cutoff);
    check(rho == [2, 2, 1], || format!("worked example rho {rho:?}"))?;
    let w = normalize_density(&rho);
    check(w == [1.0, 1.0, 0.5], || format!("worked example w_d {w:?}"))?;
    Ok("200 groups plus the three-point example".into())
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (net, inputs, targets) = random_problem(&mut rng);
        let rows: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let (_, grads) = net.loss_and_gradients(&rows, &targets).map_err(|e| e.to_string())?;
        let err = relative_error(&grads, &numeric_gradients(&net, &inputs, &targets, 1e-5));
        worst = worst.max(err);
        check(err < 1e-4, || format!("net {case}: relative error {err:e}"))?;
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("100 nets, worst relative error {worst:.1e}"))
}

fn small_pair(seed: u64) -> Result<TaskData, String> {
    let cfg = GeneratorConfig {
        seed,
        n_a: 120,
        n_b: 160,
        shift: ShiftSpec {
            mean_offset: vec![1.5, 0.0],
            label_noise_rate: 0.2,
            ..ShiftSpec::default()
        },
        ..GeneratorConfig::default()
    };
    let pair = gen_two_task(&cfg).map_err(|e| e.to_string())?;
    Ok(pair.split(0.8, seed).map_err(|e| e.to_string())?.data)
}

fn same_bits(x: &MultiTaskNet, y: &MultiTaskNet) -> bool {
    let (px, py) = (x.params(), y.params());
    px.len() == py.len()
        && px
            .iter()
            .zip(&py)
            .all(|(a, b)| a.len() == b.len() && a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()))
}

fn reduction_identity() -> Outcome {
    let data = small_pair(4)?;
    let base = TrainConfig {
        epochs: 10,
        init_epochs: 2,
        learning_rate: 0.01,
        seed: 4,
        ..TrainConfig::default()
    };
    let wf = TrainConfig {
        strategy: Strategy::MtlWf,
        ..base.clone()
    };
    let w0 = TrainConfig {
        strategy: Strategy::MtlSa,
        weight_mode: WeightMode::Constant(0.0),
        ..base
    };
    let err = |e: mtlsa::Error| e.to_string();
    let mut x = Trainer::new(&wf, &data).map_err(err)?;
    let mut y = Trainer::new(&w0, &data).map_err(err)?;
    x.joint_init(wf.init_epochs, Phase::Init).map_err(err)?;
    y.joint_init(w0.init_epochs, Phase::Init).map_err(err)?;
    for epoch in 1..=10 {
        x.run_next_epoch().map_err(err)?;
        y.run_next_epoch().map_err(err)?;
        check(same_bits(x.net(), y.net()), || format!("parameters diverge at epoch {epoch}"))?;
    }
    Ok("10 epochs bitwise identical".into())
}

fn label_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..1000 {
        let classes = rng.random_range(2..=10);
        let soft = random_label(&mut rng, classes);
        let pseudo = to_pseudo(&soft);
        let w = rng.random::<f64>();
        let mixed = interpolate(&pseudo, &soft, w).map_err(|e| e.to_string())?;
        let sum: f64 = mixed.as_slice().iter().sum();
        let inside = (0..classes).all(|k| {
            mixed[k] >= pseudo[k].min(soft[k]) - 1e-12 && mixed[k] <= pseudo[k].max(soft[k]) + 1e-12
        });
        check(inside && (sum - 1.0).abs() < 1e-12, || format!("case {case}: interpolation not convex"))?;

        let t = rng.random_range(0.1..10.0);
        let sharp = sharpen(&soft, t).map_err(|e| e.to_string())?;
        check(sharp.argmax() == soft.argmax(), || format!("case {case}: T={t} moved the argmax"))?;

        check(sharpen(&soft, 1.0).map_err(|e| e.to_string())? == soft, || {
            format!("case {case}: T=1 changed the label")
        })?;

        let flat = sharpen(&soft, 1e9).map_err(|e| e.to_string())?;
        let u = 1.0 / classes as f64;
        let gap = flat.as_slice().iter().map(|p| (p - u).abs()).fold(0.0, f64::max);
        check(gap < 1e-6, || format!("case {case}: T=1e9 is {gap:e} from uniform"))?;
    }
    Ok("1000 label vectors".into())
}

/// Half of B is offset by half a blob spacing along A's axis, so those blobs
/// straddle A's class boundaries and confident hard pseudo labels there drag
/// the boundaries into the blobs.
fn directional_scenario() -> (GeneratorConfig, TrainConfig) {
    let separation = 3.0;
    let generator = GeneratorConfig {
        seed: 0,
        n_a: 80,
        n_b: 1000,
        classes_a: 3,
        classes_b: 2,
        dim: 10,
        separation,
        cluster_std: 0.5,
        task_angle: FRAC_PI_2,
        shift: ShiftSpec {
            mean_offset: vec![0.5 * separation, 0.0],
            label_noise_rate: 0.2,
            shifted_fraction: 0.5,
            ..ShiftSpec::default()
        },
    };
    let train = TrainConfig {
        epochs: 20,
        init_epochs: 5,
        batch_size: 32,
        learning_rate: 0.01,
        temperature: 1.15,
        lambda: 0.1,
        trunk_hidden: vec![16],
        ..TrainConfig::default()
    };
    (generator, train)
}

fn directional_ordering() -> Outcome {
    let start = Instant::now();
    let (generator, base) = directional_scenario();
    let roster = select_roster(&["mtl-sa", "mtl-wf", "mtl-sa-w1", "mtl-sa-w0"]).map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (0..30).collect();
    let data = MatrixData::Generated {
        generator,
        train_fraction: 0.8,
    };
    let out = run_matrix(&roster, &base, &data, &seeds).map_err(|e| e.to_string())?;
    check(out.failures.is_empty(), || format!("{} cells failed", out.failures.len()))?;
    let diff = |x: &str, y: &str| paired_difference(&out.results, x, y).map_err(|e| e.to_string());
    let vs_wf = diff("mtl-sa", "mtl-wf")?;
    let vs_w1 = diff("mtl-sa", "mtl-sa-w1")?;
    let w1_vs_w0 = diff("mtl-sa-w1", "mtl-sa-w0")?;
    let summary = format!(
        "full-wf {:+.4} ({:+.1} se), full-w1 {:+.4} ({:+.1} se), w1-w0 {:+.4} ({:+.1} se), 30 seeds",
        vs_wf.mean,
        vs_wf.mean / vs_wf.standard_error,
        vs_w1.mean,
        vs_w1.mean / vs_w1.standard_error,
        w1_vs_w0.mean,
        w1_vs_w0.mean / w1_vs_w0.standard_error,
    );
    check(vs_wf.mean > vs_wf.standard_error, || summary.clone())?;
    check(vs_w1.mean > vs_w1.standard_error, || summary.clone())?;
    check(w1_vs_w0.mean < 0.0, || summary.clone())?;
    within(start, Duration::from_secs(600))?;
    Ok(summary)
}

/// Half of B moves diagonally by 6 in each coordinate, about three blob
/// spacings and well clear of A's support; the rest overlaps A.
fn weight_pipeline() -> Outcome {
    let mut wg_wins = 0;
    let mut ws_wins = 0;
    let mut notes = Vec::new();
    for seed in 0..10 {
        let generator = GeneratorConfig {
            seed,
            n_a: 300,
            n_b: 400,
            shift: ShiftSpec {
                mean_offset: vec![6.0, 6.0],
                shifted_fraction: 0.5,
                ..ShiftSpec::default()
            },
            ..GeneratorConfig::default()
        };
        let pair = gen_two_task(&generator).map_err(|e| e.to_string())?;
        let split = pair.split(0.8, seed).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            epochs: 2,
            init_epochs: 10,
            learning_rate: 0.01,
            seed,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &split.data).map_err(|e| e.to_string())?;
        let truth = &split.train_truth;
        let group_mean = |keep: &dyn Fn(&SampleWeightRecord) -> bool, field: fn(&SampleWeightRecord) -> f64| {
            let v: Vec<f64> = out.audit_task_a.iter().filter(|r| keep(r)).map(field).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        let shifted = |r: &SampleWeightRecord| truth.b_shifted[r.sample_index];
        let matches = |r: &SampleWeightRecord| r.pseudo_class == truth.b_task_a[r.sample_index];
        let far = group_mean(&shifted, |r| r.w_g);
        let near = group_mean(&|r| !shifted(r), |r| r.w_g);
        let right = group_mean(&matches, |r| r.w_s);
        let wrong = group_mean(&|r| !matches(r), |r| r.w_s);
        wg_wins += usize::from(near > far);
        ws_wins += usize::from(right > wrong);
        notes.push(format!("{near:.3}/{far:.3} {right:.3}/{wrong:.3}"));
    }
    let summary = format!("w_g near>far in {wg_wins}/10, w_s right>wrong in {ws_wins}/10");
    check(wg_wins >= 9 && ws_wins >= 9, || format!("{summary}: {}", notes.join("; ")))?;
    Ok(summary)
}

fn determinism() -> Outcome {
    let err = |e: mtlsa::Error| e.to_string();
    let cfg = GeneratorConfig {
        seed: 8,
        n_a: 60,
        n_b: 80,
        ..GeneratorConfig::default()
    };
    let (p1, p2) = (gen_two_task(&cfg).map_err(err)?, gen_two_task(&cfg).map_err(err)?);
    check(p1.a.to_csv_string() == p2.a.to_csv_string(), || "dataset A differs".into())?;
    check(p1.b.to_csv_string() == p2.b.to_csv_string(), || "dataset B differs".into())?;
    for ds in [&p1.a, &p1.b] {
        let back = DisjointDataset::from_csv_str(&ds.to_csv_string(), Path::new("mem"), ds.task, Some(ds.num_classes))
            .map_err(err)?;
        check(back.features == ds.features && back.labels == ds.labels, || "csv round trip".into())?;
    }

    let data = small_pair(8)?;
    let tcfg = TrainConfig {
        epochs: 4,
        init_epochs: 2,
        learning_rate: 0.01,
        seed: 8,
        ..TrainConfig::default()
    };
    let (r1, r2) = (train(&tcfg, &data).map_err(err)?, train(&tcfg, &data).map_err(err)?);
    let history = r1.history.to_csv();
    check(history == r2.history.to_csv(), || "history differs".into())?;
    let back = History::from_csv(&history, Path::new("mem")).map_err(err)?;
    check(back == r1.history, || "history round trip".into())?;
    let ckpt = r1.model.net_for(Task::A).to_checkpoint_string();
    check(ckpt == r2.model.net_for(Task::A).to_checkpoint_string(), || "checkpoint differs".into())?;
    let net = MultiTaskNet::from_checkpoint_str(&ckpt, Path::new("mem")).map_err(err)?;
    check(&net == r1.model.net_for(Task::A), || "checkpoint round trip".into())?;

    let roster = select_roster(&["stl", "mtl-sa"]).map_err(err)?;
    let small = TrainConfig {
        epochs: 2,
        init_epochs: 1,
        ..tcfg
    };
    let run = || run_matrix(&roster, &small, &MatrixData::Fixed(&data), &[1, 2]).map_err(err);
    let (m1, m2) = (run()?, run()?);
    let results = results_csv(&m1.results);
    check(results == results_csv(&m2.results), || "results differ".into())?;
    let report = report_csv(&summarize(&m1.results));
    check(report == report_csv(&summarize(&m2.results)), || "reports differ".into())?;
    let parsed = parse_results(&results, Path::new("mem")).map_err(err)?;
    check(report_csv(&summarize(&parsed)) == report, || "report from parsed results differs".into())?;
    Ok("data, history, checkpoint, report".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "transport solver vs vertex enumeration", emd_oracle),
        (2, "local density vs double loop", density_oracle_agreement),
        (3, "backprop vs finite differences", gradient_check),
        (4, "constant zero weight reduces to soft labels", reduction_identity),
        (5, "label algebra", label_algebra),
        (6, "directional ordering", directional_ordering),
        (7, "weight pipeline sanity", weight_pipeline),
        (8, "determinism and round trips", determinism),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
