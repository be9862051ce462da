//! Acceptance run: one PASS/FAIL line per criterion, with its measured
//! runtime against the budget. Exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use trustphys::cardio::{self, CardioConfig};
use trustphys::commands::{self, RunConfig};
use trustphys::dataset::{self, FeatureMatrix, FeatureVector, N_FEATURES};
use trustphys::eda;
use trustphys::explain::{self, ImportanceRanking};
use trustphys::gaze::{self, GazeConfig};
use trustphys::models::{
    compute_metrics, gbdt::FORMAT_VERSION, kfold_cv, schema_hash, summarize, train_gbdt, Dataset, GbdtTrainer,
    Hyperparameters, TreeEnsemble,
};
use trustphys::pipeline::{self, EvaluationReport};
use trustphys::signal::Condition;
use trustphys::stats;
use trustphys::synth::LinkStrengths;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    // precision 0.834 and recall 0.955 from exact counts
    let tp = 834 * 955;
    let fp = 955 * 1000 - tp;
    let fn_ = 834 * 1000 - tp;
    let tn = 10_000;
    let mut y = Vec::new();
    let mut p = Vec::new();
    for (truth, pred, n) in [(1u8, 1u8, tp), (0, 1, fp), (1, 0, fn_), (0, 0, tn)] {
        y.extend(std::iter::repeat_n(truth, n));
        p.extend(std::iter::repeat_n(pred, n));
    }
    let scores: Vec<f64> = p.iter().map(|&v| f64::from(v)).collect();
    let m = compute_metrics(&y, &p, &scores).map_err(|e| e.to_string())?;
    let oracle = 2.0 * 0.834 * 0.955 / (0.834 + 0.955);
    check(
        (m.precision - 0.834).abs() < 1e-12
            && (m.recall - 0.955).abs() < 1e-12
            && (m.f1 - 0.8904).abs() <= 0.001
            && (m.f1 - oracle).abs() < 1e-12
            && (m.f1 - 0.891).abs() <= 0.001,
        format!("f1 = {:.5} (oracle {oracle:.5}, target 0.8904 +- 0.001, reported 0.891)", m.f1),
    )
}

fn matrix_with_counts(distrust: usize, trust: usize, seed: u64) -> FeatureMatrix {
    let mut r = common::rng(seed);
    let rows = (0..distrust + trust)
        .map(|i| {
            let label = u8::from(i >= distrust);
            let mut features = [None; N_FEATURES];
            for f in features.iter_mut() {
                *f = Some(r.random::<f64>() + f64::from(label) * 0.3);
            }
            FeatureVector {
                participant_id: format!("p{:03}", i / 30),
                condition: Condition::ALL[i % 3],
                label_time: 25.0 * (i % 30 + 1) as f64,
                rating: if label == 1 { 7 } else { 2 },
                label,
                features,
            }
        })
        .collect();
    FeatureMatrix { rows, seed: None }
}

fn criterion_2(dir: &Path) -> Outcome {
    let m = matrix_with_counts(484, 1745, 2);
    if m.class_counts() != (484, 1745) {
        return Err(format!("fixture has counts {:?}", m.class_counts()));
    }
    let input = dir.join("features.csv");
    dataset::write_matrix(&input, &m).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig { seed: 4, ..Default::default() };
    cfg.train.hyperparameters = Hyperparameters { n_trees: 20, max_depth: 3, ..Default::default() };
    let out = dir.join("resample.json");
    commands::resample_study(&cfg, &input, &out).map_err(|e| e.to_string())?;
    let report: commands::ResampleReport =
        serde_json::from_str(&std::fs::read_to_string(&out).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let got: Vec<(usize, usize)> = report.rows.iter().map(|r| (r.class_counts.trust, r.class_counts.distrust)).collect();
    let want = vec![(484, 484), (968, 484), (1452, 484), (1745, 484)];
    check(got == want, format!("trust/distrust per row {got:?}"))
}

fn criterion_3() -> Outcome {
    let rate = 16.0;
    let kernel = eda::bateman_kernel(0.75, 2.0, rate).map_err(|e| e.to_string())?;
    let mut worst_loc: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    let mut worst_rmse: f64 = 0.0;
    for seed in 0..50 {
        let mut r = common::rng(1000 + seed);
        let p = common::planted_eda(&mut r, 16 * 120, rate);
        let signal: Vec<f64> = p.tonic.iter().zip(&p.phasic).map(|(t, f)| t + f).collect();
        let known_tonic_removed: Vec<f64> = signal.iter().zip(&p.tonic).map(|(s, t)| s - t).collect();
        let d = eda::deconvolve_driver(&known_tonic_removed, &kernel).map_err(|e| e.to_string())?;
        // clusters: maximal runs of driver above a relative floor
        let floor = 1e-9 * d.driver.iter().copied().fold(0.0, f64::max);
        let mut clusters: Vec<(f64, f64)> = Vec::new();
        let mut i = 0;
        while i < d.driver.len() {
            if d.driver[i] > floor {
                let (mut mass, mut moment) = (0.0, 0.0);
                while i < d.driver.len() && d.driver[i] > floor {
                    mass += d.driver[i];
                    moment += d.driver[i] * i as f64;
                    i += 1;
                }
                clusters.push((moment / mass / rate, mass));
            } else {
                i += 1;
            }
        }
        if clusters.len() != p.pulses.len() {
            return Err(format!("seed {seed}: {} clusters for {} pulses", clusters.len(), p.pulses.len()));
        }
        for (c, &(at, _)) in clusters.iter().zip(&p.pulses) {
            worst_loc = worst_loc.max((c.0 - at as f64 / rate).abs());
        }
        let planted: f64 = p.pulses.iter().map(|q| q.1).sum();
        let found: f64 = d.driver.iter().sum();
        worst_mass = worst_mass.max((found - planted).abs() / planted);
        let max = signal.iter().copied().fold(0.0, f64::max);
        worst_rmse = worst_rmse.max(d.residual_rmse / max);
    }
    check(
        worst_loc <= 0.125 && worst_mass <= 0.10 && worst_rmse <= 1e-6,
        format!("worst location error {worst_loc:.4} s, mass error {:.2e}, RMSE/max {worst_rmse:.2e}", worst_mass),
    )
}

fn criterion_4() -> Outcome {
    let rate = 128.0;
    let cfg = CardioConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let mut r = common::rng(2000 + seed);
        let mut beats = Vec::new();
        let mut t = r.random_range(0.5..1.0);
        while t < 59.0 {
            beats.push(t);
            t += r.random_range(0.5..1.2);
        }
        let (times, values) = common::pulse_train(&beats, rate, 60.0);
        let found = cardio::detect_beats(&times, &values, rate, &cfg).map_err(|e| e.to_string())?;
        if found.beat_times.len() != beats.len() {
            return Err(format!("seed {seed}: {} beats for {}", found.beat_times.len(), beats.len()));
        }
        for (a, b) in found.beat_times.iter().zip(&beats) {
            worst = worst.max((a - b).abs() * rate);
        }
    }
    let mut rmssd_max = 0.0f64;
    for seed in 0..50u64 {
        let m = 80 + (seed as usize * 7) % 70;
        let ibi = m as f64 / rate;
        let beats: Vec<f64> = (0..).map(|k| (64 + k * m) as f64 / rate).take_while(|&b| b < 59.0).collect();
        let (times, values) = common::pulse_train(&beats, rate, 60.0);
        let found = cardio::detect_beats(&times, &values, rate, &cfg).map_err(|e| e.to_string())?;
        let series = cardio::ibi_series(&found).map_err(|e| e.to_string())?;
        let all: Vec<(usize, f64)> = series.intervals.iter().map(|iv| iv.duration).enumerate().collect();
        let f = cardio::interval_features(&all, 2);
        if (f.ibi_mean.unwrap_or(0.0) - ibi).abs() > 1e-12 {
            return Err(format!("seed {seed}: mean IBI {:?} for {ibi}", f.ibi_mean));
        }
        rmssd_max = rmssd_max.max(f.hrv.unwrap_or(f64::NAN));
    }
    check(worst <= 1.0 && rmssd_max == 0.0, format!("worst beat offset {worst:.3} samples; constant-train RMSSD max {rmssd_max}"))
}

fn criterion_5() -> Outcome {
    let cfg = GazeConfig::default();
    let rate = 30.0;
    for seed in 0..200 {
        let mut r = common::rng(3000 + seed);
        let points = common::gaze_trace(&mut r, 100);
        let times: Vec<f64> = (0..points.len()).map(|i| i as f64 / rate).collect();
        let got: Vec<(usize, usize)> =
            gaze::detect_fixations(&times, &points, 1.0 / rate, cfg.dispersion_threshold, cfg.min_duration_s)
                .iter()
                .map(|f| (f.first_sample, f.samples))
                .collect();
        let want = common::idt_oracle(&points, rate, cfg.dispersion_threshold, cfg.min_duration_s);
        if got != want {
            return Err(format!("trace {seed}: {got:?} vs oracle {want:?}"));
        }
    }
    Ok("200 traces identical to the brute-force segmentation".into())
}

fn criterion_6() -> Outcome {
    let m = common::separable_matrix(6, 2000);
    let h = Hyperparameters::default();
    let f1 = |m: &FeatureMatrix| -> Result<f64, String> {
        let reports = kfold_cv(&Dataset::from_matrix(m), 10, &GbdtTrainer(h.clone()), 60).map_err(|e| e.to_string())?;
        Ok(summarize(&reports).f1)
    };
    let clean = f1(&m)?;
    let holes = f1(&common::mcar(&m, 0.10, 61))?;
    check(
        clean >= 0.95 && clean - holes <= 0.05,
        format!("10-fold f1 {clean:.4}; with 10% MCAR missing {holes:.4} (drop {:.4})", clean - holes),
    )
}

fn criterion_7() -> Outcome {
    let m = common::mcar(&common::separable_matrix(7, 1000), 0.1, 70);
    let ds = Dataset::from_matrix(&m);
    let e = train_gbdt(&ds, &Hyperparameters { n_trees: 60, max_depth: 5, ..Default::default() }, 7)
        .map_err(|e| e.to_string())?;
    let shap = explain::shap_matrix(&e, &ds.x).map_err(|e| e.to_string())?;
    let mut local: f64 = 0.0;
    for (i, s) in shap.iter().enumerate() {
        let margin = e.margin(ds.x.row(i));
        local = local.max((s.phi0 + s.phi.iter().sum::<f64>() - margin).abs());
    }
    let mut exact: f64 = 0.0;
    for seed in 0..100 {
        let mut r = common::rng(7000 + seed);
        let m = r.random_range(1..=5);
        let tree = common::random_tree(&mut r, m, 3);
        let names: Vec<String> = (0..m).map(|j| format!("f{j}")).collect();
        let ens = TreeEnsemble {
            format_version: FORMAT_VERSION,
            schema_hash: schema_hash(&names),
            feature_names: names,
            base_margin: 0.0,
            eta: 1.0,
            hyperparameters: Hyperparameters::default(),
            trees: vec![tree.clone()],
        };
        for _ in 0..5 {
            let x: Vec<f64> = (0..m)
                .map(|_| if r.random_bool(0.15) { f64::NAN } else { r.random_range(-1.2..1.2) })
                .collect();
            let s = explain::tree_shap(&ens, &x).map_err(|e| e.to_string())?;
            let (phi, phi0) = common::shapley_oracle(&tree, &x);
            exact = exact.max((s.phi0 - phi0).abs());
            for (a, b) in s.phi.iter().zip(&phi) {
                exact = exact.max((a - b).abs());
            }
        }
    }
    check(
        local <= 1e-6 && exact <= 1e-9,
        format!("local accuracy max error {local:.2e} over 1000 rows; oracle max error {exact:.2e} over 100 trees"),
    )
}

fn criterion_8(dir: &Path) -> Outcome {
    let mut cfg = RunConfig { seed: 0, nested_cv: false, ..Default::default() };
    cfg.train.compare_baselines = false;
    let sessions = dir.join("cohort");
    let features = dir.join("features.csv");
    let model = dir.join("model.json");
    let report = dir.join("report.json");
    let shap = dir.join("shap.csv");
    let run = || -> Result<(), commands::CommandError> {
        commands::simulate(&cfg, &sessions)?;
        commands::features(&cfg, &sessions, &features)?;
        commands::train(&cfg, &features, &model)?;
        commands::evaluate(&cfg, &features, &model, &report)?;
        commands::explain(&cfg, &features, &model, &shap)
    };
    run().map_err(|e| e.to_string())?;
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| e.to_string());
    let eval: EvaluationReport = serde_json::from_str(&read(&report)?).map_err(|e| e.to_string())?;
    let mut ranking_path = shap.as_os_str().to_owned();
    ranking_path.push(".ranking.json");
    let ranking: ImportanceRanking =
        serde_json::from_str(&read(Path::new(&ranking_path))?).map_err(|e| e.to_string())?;
    let top5: Vec<&str> = ranking.features.iter().take(5).map(|f| f.name.as_str()).collect();
    let strongest: Vec<&str> = LinkStrengths::default().ranked().iter().take(3).map(|l| l.0).collect();
    let recovered = strongest.iter().all(|s| top5.contains(s));

    let matrix = dataset::read_matrix(&features).map_err(|e| e.to_string())?;
    let ens = TreeEnsemble::from_json(&read(&model)?).map_err(|e| e.to_string())?;
    let sel = pipeline::select_features(&matrix, &ens, cfg.seed).map_err(|e| e.to_string())?;
    let accepted: Vec<f64> = sel.selection.trace.iter().filter(|s| s.accepted).map(|s| s.mean_f1).collect();
    let increasing = accepted.windows(2).all(|w| w[1] > w[0]);
    let f1 = eval.gbdt.mean.f1;
    check(
        f1 >= 0.90 && recovered && increasing,
        format!(
            "10-fold f1 {f1:.4}; planted {strongest:?} vs SHAP top-5 {top5:?}; selected {:?} with f1 trace {accepted:.4?}",
            sel.selection.selected_names
        ),
    )
}

fn criterion_9() -> Outcome {
    let same = vec![vec![1.0, 2.0, 3.0, 4.0]; 3];
    let f_same = stats::one_way_anova(&same).map_err(|e| e.to_string())?.f;
    let mut t2 = 0.0f64;
    let mut affine = 0.0f64;
    for seed in 0..100 {
        let mut r = common::rng(9000 + seed);
        let g: Vec<Vec<f64>> = (0..2)
            .map(|k| (0..r.random_range(3..30)).map(|_| r.random::<f64>() * 4.0 + k as f64).collect())
            .collect();
        let a = stats::one_way_anova(&g).map_err(|e| e.to_string())?;
        // pooled two-sample t statistic
        let (n1, n2) = (g[0].len() as f64, g[1].len() as f64);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (m1, m2) = (mean(&g[0]), mean(&g[1]));
        let ss: f64 = g[0].iter().map(|v| (v - m1).powi(2)).sum::<f64>() + g[1].iter().map(|v| (v - m2).powi(2)).sum::<f64>();
        let sp2 = ss / (n1 + n2 - 2.0);
        let t = (m1 - m2) / (sp2 * (1.0 / n1 + 1.0 / n2)).sqrt();
        t2 = t2.max((t * t - a.f).abs() / a.f.max(1.0));

        let three: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..r.random_range(3..20)).map(|_| r.random::<f64>() + 0.3 * k as f64).collect())
            .collect();
        let (scale, shift) = (r.random_range(0.5..4.0), r.random_range(-50.0..50.0));
        let moved: Vec<Vec<f64>> = three.iter().map(|g| g.iter().map(|v| scale * v + shift).collect()).collect();
        let (f0, f1) = (
            stats::one_way_anova(&three).map_err(|e| e.to_string())?.f,
            stats::one_way_anova(&moved).map_err(|e| e.to_string())?.f,
        );
        affine = affine.max((f1 - f0).abs() / f0);
    }
    check(
        f_same == 0.0 && t2 <= 1e-9 && affine <= 1e-12,
        format!("F(identical) = {f_same}; max |t^2 - F| {t2:.2e}; max affine relative change {affine:.2e}"),
    )
}

fn criterion_10(dir: &Path) -> Outcome {
    let mut cfg = RunConfig { seed: 11, ..Default::default() };
    for kv in [
        "cohort.participants_per_condition=3",
        "cohort.drive_s=600",
        "train.n_iter=3",
        "train.space.n_trees=[10,40]",
        "anova.draws=5000",
    ] {
        cfg.set(kv).map_err(|e| e.to_string())?;
    }
    let run = |root: &Path| -> Result<(), commands::CommandError> {
        let p = |name: &str| root.join(name);
        commands::simulate(&cfg, &p("cohort"))?;
        commands::features(&cfg, &p("cohort"), &p("features.csv"))?;
        commands::train(&cfg, &p("features.csv"), &p("model.json"))?;
        commands::evaluate(&cfg, &p("features.csv"), &p("model.json"), &p("report.json"))?;
        commands::explain(&cfg, &p("features.csv"), &p("model.json"), &p("shap.csv"))?;
        commands::select(&cfg, &p("features.csv"), &p("selection.json"))?;
        commands::anova(&cfg, &p("features.csv"), &p("anova.json"))?;
        commands::resample_study(&cfg, &p("features.csv"), &p("resample.json"))
    };
    let (a, b) = (dir.join("a"), dir.join("b"));
    run(&a).map_err(|e| e.to_string())?;
    run(&b).map_err(|e| e.to_string())?;
    let (sa, sb) = (
        commands::snapshot(&a).map_err(|e| e.to_string())?,
        commands::snapshot(&b).map_err(|e| e.to_string())?,
    );
    let differing: Vec<_> = sa.iter().filter(|(k, v)| sb.get(*k) != Some(v)).map(|(k, _)| k.display().to_string()).collect();

    let m = common::mcar(&common::separable_matrix(10, 1000), 0.1, 100);
    let ds = Dataset::from_matrix(&m);
    let e = train_gbdt(&ds, &Hyperparameters::default(), 10).map_err(|e| e.to_string())?;
    let back = TreeEnsemble::from_json(&e.to_json()).map_err(|e| e.to_string())?;
    let same = (0..ds.len()).all(|i| e.margin(ds.x.row(i)).to_bits() == back.margin(ds.x.row(i)).to_bits());
    check(
        differing.is_empty() && sa.len() == sb.len() && same && back == e,
        format!("{} output files compared, differing {differing:?}; model reload identical on 1000 rows: {same}", sa.len()),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let sub = |name: &str| {
        let p = dir.path().join(name);
        std::fs::create_dir_all(&p).expect("temp subdir");
        p
    };
    let (d2, d8, d10) = (sub("c2"), sub("c8"), sub("c10"));
    let criteria: Vec<(&str, f64, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("f1 arithmetic reproduction", 1.0, Box::new(criterion_1)),
        ("resampling-study structure", 10.0, Box::new(move || criterion_2(&d2))),
        ("EDA deconvolution oracle", 60.0, Box::new(criterion_3)),
        ("cardio oracle", 30.0, Box::new(criterion_4)),
        ("fixation oracle", 30.0, Box::new(criterion_5)),
        ("boosting sanity", 120.0, Box::new(criterion_6)),
        ("Shapley correctness", 120.0, Box::new(criterion_7)),
        ("end-to-end planted-signal recovery", 600.0, Box::new(move || criterion_8(&d8))),
        ("ANOVA properties", 10.0, Box::new(criterion_9)),
        ("determinism", 60.0, Box::new(move || criterion_10(&d10))),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(d) if secs <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the time budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "{} [{}] {name}: {detail} ({secs:.2} s, budget {budget} s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
