//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 6-9 need the MNIST IDX files in `$MNIST_DIR` (default
//! `data/mnist` at the workspace root). Pass criterion numbers as
//! arguments to run a subset:
//! `cargo test -p explain-lab --test acceptance -- 4 5`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use explain_lab::data::synthetic::SyntheticSpec;
use explain_lab::data::{load_mnist_dir, Corpus, Dataset, FeatureKind, FeatureParams};
use explain_lab::lime::{explain, fit_explanation, KernelSpec, LimeConfig, Neighborhood};
use explain_lab::models::{
    train_model, Architecture, CenModel, Dictionary, LinearExplanation, Model, ModelKind, Predictor, TrainConfig,
};
use explain_lab::numkit::{grad_check, softmax, MlpParams};
use explain_lab::experiments::{
    convergence_compare, run_feature_sweep, run_noise_sweep, run_sample_complexity, run_table, SweepConfig,
    SweepReport,
};
use explain_lab::{Matrix, Result, Rng};
use nalgebra::{DMatrix, DVector};

const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 20;
// Central differences; smaller steps lose the smallest gradient entries to
// rounding.
const FD_STEP: f64 = 1e-4;
const CONSISTENCY_TRIPLES: usize = 10_000;
const SIMPLEX_TOL: f64 = 1e-12;
const RECOVERY_TOL: f64 = 1e-3;
const RECOVERY_SEEDS: u64 = 10;
const ORACLE_TOL: f64 = 1e-8;
const ORACLE_NEIGHBORHOODS: u64 = 50;
const LR_PXL_BAND: (f64, f64) = (0.07, 0.10);
const CEN_MOE_SLACK: f64 = 0.003;
// Dictionary, expert and LR initialization scale for the table run.
const TABLE_INIT_STD: f64 = 0.1;
const NOISE_FIDELITY: f64 = 0.9;
const NOISE_CEN_GAP: f64 = 0.05;
const FEATURE_FIDELITY: f64 = 0.85;
const FEATURE_CEN_GAP: f64 = 0.03;
const TRIALS: usize = 5;
const SWEEP_TRAIN_SIZE: usize = 10_000;
const VAL_SIZE: usize = 5_000;

type Outcome = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// 1-5: closed-form and invariant checks

fn random_cen(seed: u64, x_dim: usize, z_dim: usize, classes: usize, k: usize) -> CenModel {
    let mut rng = Rng::new(seed);
    let encoder = MlpParams::new(&[x_dim, 8, 6, k], &mut rng).unwrap();
    let dictionary = Dictionary::random(k, z_dim, classes, 0.5, &mut rng);
    CenModel::new(encoder, dictionary).unwrap()
}

fn gradient_correctness() -> Outcome {
    let (x_dim, z_dim, classes, k, batch) = (10, 5, 3, 4, 8);
    let l2 = TrainConfig::default().l2_penalty;
    let mut worst: f64 = 0.0;
    for seed in 0..GRAD_SEEDS {
        let base = random_cen(seed, x_dim, z_dim, classes, k);
        let mask = base.decay_mask();
        let mut rng = Rng::new(1000 + seed);
        let x = Matrix::from_fn(batch, x_dim, |_, _| rng.normal());
        let z = Matrix::from_fn(batch, z_dim, |_, _| rng.normal());
        let labels: Vec<usize> = (0..batch).map(|_| rng.below(classes)).collect();
        // Cross-entropy plus the L2 term on weight tensors.
        let objective = |t: &[Matrix]| -> Result<(f64, Vec<Matrix>)> {
            let mut m = base.clone();
            for (dst, src) in m.tensors_mut().into_iter().zip(t) {
                *dst = src.clone();
            }
            let (mut loss, mut grads) = m.loss_and_grad(&x, &z, &labels)?;
            for ((g, p), &decay) in grads.iter_mut().zip(t).zip(&mask) {
                if decay {
                    loss += 0.5 * l2 * p.as_slice().iter().map(|v| v * v).sum::<f64>();
                    for (gi, pi) in g.as_mut_slice().iter_mut().zip(p.as_slice()) {
                        *gi += l2 * pi;
                    }
                }
            }
            Ok((loss, grads))
        };
        let params: Vec<Matrix> = base.tensors().into_iter().cloned().collect();
        worst = worst.max(grad_check(objective, &params, FD_STEP).map_err(fail)?);
    }
    check(
        worst < GRAD_TOL,
        format!("max relative error {worst:.2e} over {GRAD_SEEDS} seeds (tol {GRAD_TOL:e})"),
    )
}

fn consistency() -> Outcome {
    let (x_dim, z_dim, classes, k) = (12, 7, 4, 5);
    let models = 20;
    let per_model = CONSISTENCY_TRIPLES / models;
    let mut mismatches = 0;
    for seed in 0..models as u64 {
        let m = random_cen(seed, x_dim, z_dim, classes, k);
        let mut rng = Rng::new(5000 + seed);
        for _ in 0..per_model {
            let x: Vec<f64> = (0..x_dim).map(|_| 2.0 * rng.normal()).collect();
            let z: Vec<f64> = (0..z_dim).map(|_| 2.0 * rng.normal()).collect();
            let p = m.predict(&x, &z).map_err(fail)?;
            let q = softmax(&m.explain(&x).map_err(fail)?.apply(&z).map_err(fail)?).map_err(fail)?;
            if p.iter().zip(&q).any(|(a, b)| a.to_bits() != b.to_bits()) {
                mismatches += 1;
            }
        }
    }
    check(
        mismatches == 0,
        format!("{mismatches} of {} triples differ bit-wise", models * per_model),
    )
}

fn synthetic_corpus() -> Corpus {
    Corpus::synthetic(&SyntheticSpec::default(), 200, 400).unwrap()
}

fn envelope_violation(dict: &Dictionary, e: &LinearExplanation) -> f64 {
    let (lo, hi) = dict.weight_envelope();
    let mut worst: f64 = 0.0;
    for ((w, l), h) in e.weights.as_slice().iter().zip(lo.as_slice()).zip(hi.as_slice()) {
        worst = worst.max(l - w).max(w - h);
    }
    for c in 0..dict.classes() {
        let col: Vec<f64> = (0..dict.components()).map(|k| dict.component(k).bias[c]).collect();
        let l = col.iter().copied().fold(f64::INFINITY, f64::min);
        let h = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(l - e.bias[c]).max(e.bias[c] - h);
    }
    worst
}

fn simplex_and_envelope() -> Outcome {
    let corpus = synthetic_corpus();
    let view = corpus.primary();
    let config = TrainConfig::default();
    let arch = Architecture::default();
    let model = Model::init(
        ModelKind::Cen,
        &arch,
        view.train.x_dim(),
        view.train.z_dim(),
        view.train.classes(),
        config.seed,
    )
    .map_err(fail)?;
    let (mut checked, mut simplex_err, mut envelope_err) = (0usize, 0.0f64, 0.0f64);
    let mut inspect = |m: &Model, x: &Matrix| -> Result<()> {
        let Model::Cen(cen) = m else { unreachable!() };
        for r in 0..x.rows() {
            let a = cen.attend(x.row(r))?;
            let sum: f64 = a.as_slice().iter().sum();
            let neg = a.as_slice().iter().copied().fold(0.0, |w: f64, v| w.max(-v));
            simplex_err = simplex_err.max((sum - 1.0).abs()).max(neg);
            let e = cen.dictionary.combine(&a)?;
            envelope_err = envelope_err.max(envelope_violation(&cen.dictionary, &e));
            checked += 1;
        }
        Ok(())
    };
    let (model, _) =
        train_model(model, &view.train, None, &config, |step| inspect(step.model, step.x)).map_err(fail)?;
    inspect(&model, view.test.x()).map_err(fail)?;
    check(
        simplex_err <= SIMPLEX_TOL && envelope_err <= SIMPLEX_TOL,
        format!(
            "{checked} attention vectors over {} epochs: simplex error {simplex_err:.1e}, envelope excess {envelope_err:.1e}",
            config.epochs
        ),
    )
}

struct LinearTeacher(LinearExplanation);

impl Predictor for LinearTeacher {
    fn classes(&self) -> usize {
        self.0.classes()
    }

    fn predict_proba(&self, _x: &Matrix, z: &Matrix) -> Result<Matrix> {
        self.0.apply_rows(z)
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn lime_recovery() -> Outcome {
    let (z_dim, classes, block) = (12, 3, 4);
    let phi = explain_lab::data::features::BlockMean::new(z_dim * block, block).map_err(fail)?;
    let mut worst: f64 = 0.0;
    for seed in 0..RECOVERY_SEEDS {
        let mut rng = Rng::new(seed);
        let teacher = LinearExplanation::new(
            (0..classes).map(|_| rng.normal()).collect(),
            Matrix::from_fn(z_dim, classes, |_, _| rng.normal()),
        )
        .map_err(fail)?;
        let x: Vec<f64> = (0..z_dim * block).map(|_| 0.2 + 0.6 * rng.uniform()).collect();
        let config = LimeConfig {
            kernel: KernelSpec::uniform(),
            n_samples: 4 * z_dim,
            l1_penalty: 0.0,
            ridge_penalty: 0.0,
            seed,
            ..LimeConfig::default()
        };
        let e = explain(&LinearTeacher(teacher.clone()), &x, &phi, &config).map_err(fail)?;
        worst = worst
            .max(rel_err(e.weights.as_slice(), teacher.weights.as_slice()))
            .max(rel_err(&e.bias, &teacher.bias));
    }
    check(
        worst < RECOVERY_TOL,
        format!("max relative coefficient error {worst:.2e} over {RECOVERY_SEEDS} seeds (tol {RECOVERY_TOL:e})"),
    )
}

fn solver_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..ORACLE_NEIGHBORHOODS {
        let mut rng = Rng::new(seed);
        let (n, d, classes) = (20 + rng.below(80), 2 + rng.below(10), 1 + rng.below(4));
        let ridge = [0.0, 1e-3, 0.1, 1.0][seed as usize % 4];
        let z = Matrix::from_fn(n, d, |_, _| rng.normal());
        let y = Matrix::from_fn(n, classes, |_, _| rng.uniform());
        let nb = Neighborhood::new(z, y, &KernelSpec::default()).map_err(fail)?;
        let config = LimeConfig {
            l1_penalty: 0.0,
            ridge_penalty: ridge,
            ..LimeConfig::default()
        };
        let e = fit_explanation(&nb, &config).map_err(fail)?;

        // min_b,w sum_i pi_i (y_i - b - z_i w)^2 + ridge |w|^2
        let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { nb.z()[(i, j - 1)] });
        let pi = DMatrix::from_diagonal(&DVector::from_column_slice(nb.weights()));
        let mut lhs = a.transpose() * &pi * &a;
        for j in 1..=d {
            lhs[(j, j)] += ridge;
        }
        let lu = lhs.lu();
        for c in 0..classes {
            let rhs = a.transpose() * &pi * DVector::from_fn(n, |i, _| nb.targets()[(i, c)]);
            let sol = lu.solve(&rhs).ok_or("oracle system is singular")?;
            worst = worst.max((sol[0] - e.bias[c]).abs());
            for j in 0..d {
                worst = worst.max((sol[j + 1] - e.weights[(j, c)]).abs());
            }
        }
    }
    check(
        worst < ORACLE_TOL,
        format!("max coefficient difference {worst:.2e} over {ORACLE_NEIGHBORHOODS} neighborhoods (tol {ORACLE_TOL:e})"),
    )
}

// ---------------------------------------------------------------------------
// 6-9: MNIST sweeps

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn mnist() -> std::result::Result<&'static (Dataset, Dataset), String> {
    static DATA: OnceLock<std::result::Result<(Dataset, Dataset), String>> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = mnist_dir();
        load_mnist_dir(&dir).map_err(|e| format!("MNIST unavailable at {}: {e}", dir.display()))
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn mnist_corpus(kind: FeatureKind, pool_grid: usize, train_size: Option<usize>) -> std::result::Result<Corpus, String> {
    let (train, test) = mnist()?;
    let params = FeatureParams {
        pool_grid,
        ..FeatureParams::default()
    };
    let corpus = Corpus::from_images(train, test, &[kind], &params, VAL_SIZE, 11).map_err(fail)?;
    match train_size {
        Some(n) => corpus.with_train_subset(n, 12).map_err(fail),
        None => Ok(corpus),
    }
}

fn sweep_config(epochs: usize) -> SweepConfig {
    SweepConfig {
        n_trials: TRIALS,
        train: TrainConfig {
            epochs,
            ..TrainConfig::default()
        },
        ..SweepConfig::default()
    }
}

fn mean(report: &SweepReport, exp: &str, cond: f64, model: &str, metric: &str) -> std::result::Result<f64, String> {
    let v = report.values(exp, cond, model, metric);
    if v.len() != TRIALS {
        return Err(format!(
            "{exp}/{cond}/{model}/{metric}: {} of {TRIALS} trials reported (failures: {:?})",
            v.len(),
            report.meta.failures
        ));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

fn table_band() -> Outcome {
    // 14x14 pooling; see the README for the 7x7 numbers.
    let corpus = mnist_corpus(FeatureKind::Pxl, 14, None)?;
    let config = SweepConfig {
        arch: Architecture {
            init_std: TABLE_INIT_STD,
            ..Architecture::default()
        },
        ..sweep_config(10)
    };
    let report = run_table(&corpus, &config).map_err(fail)?;
    let lr = mean(&report, "table", 0.0, "lr_pxl", "test_error")?;
    let moe = mean(&report, "table", 0.0, "moe_pxl", "test_error")?;
    let cen = mean(&report, "table", 0.0, "cen_pxl", "test_error")?;
    let mlp = mean(&report, "table", 0.0, "mlp", "test_error")?;
    check(
        (LR_PXL_BAND.0..=LR_PXL_BAND.1).contains(&lr) && cen <= moe + CEN_MOE_SLACK,
        format!(
            "LR_pxl {:.2}% (band [{:.0}%, {:.0}%]), CEN_pxl {:.2}% vs MoE_pxl {:.2}% (+{:.1} pt slack), MLP {:.2}%",
            100.0 * lr,
            100.0 * LR_PXL_BAND.0,
            100.0 * LR_PXL_BAND.1,
            100.0 * cen,
            100.0 * moe,
            100.0 * CEN_MOE_SLACK,
            100.0 * mlp
        ),
    )
}

fn noise_direction() -> Outcome {
    let corpus = mnist_corpus(FeatureKind::Pxl, 7, Some(SWEEP_TRAIN_SIZE))?;
    let config = sweep_config(10);
    let report = run_noise_sweep(&corpus, &config).map_err(fail)?;
    let low = config.snr_levels.iter().copied().fold(f64::INFINITY, f64::min);
    let fidelity = mean(&report, "noise", low, "lime", "fidelity")?;
    let cen_noisy = mean(&report, "noise", low, "cen", "test_error")?;
    let cen_clean = mean(&report, "noise", f64::INFINITY, "cen", "test_error")?;
    let mut constant = true;
    for t in 0..TRIALS {
        let base: Vec<f64> = report
            .rows()
            .iter()
            .filter(|r| r.model == "mlp" && r.trial == t)
            .map(|r| r.value)
            .collect();
        constant &= base.len() == config.snr_levels.len() && base.iter().all(|v| v.to_bits() == base[0].to_bits());
    }
    check(
        fidelity >= NOISE_FIDELITY && cen_noisy >= cen_clean + NOISE_CEN_GAP && constant,
        format!(
            "snr {low}: LIME fidelity {fidelity:.3} (>= {NOISE_FIDELITY}), CEN {:.2}% vs clean {:.2}% (+{:.0} pt needed), baseline constant: {constant}",
            100.0 * cen_noisy,
            100.0 * cen_clean,
            100.0 * NOISE_CEN_GAP
        ),
    )
}

fn feature_direction() -> Outcome {
    let corpus = mnist_corpus(FeatureKind::Pxl, 7, Some(SWEEP_TRAIN_SIZE))?;
    let report = run_feature_sweep(&corpus, &sweep_config(10)).map_err(fail)?;
    let cen_full = mean(&report, "features", 1.0, "cen", "test_error")?;
    let cen_quarter = mean(&report, "features", 0.25, "cen", "test_error")?;
    let fidelity = mean(&report, "features", 0.25, "lime", "fidelity")?;
    check(
        cen_quarter >= cen_full + FEATURE_CEN_GAP && fidelity >= FEATURE_FIDELITY,
        format!(
            "25% kept: CEN {:.2}% vs {:.2}% at 100% (+{:.0} pt needed), LIME fidelity {fidelity:.3} (>= {FEATURE_FIDELITY})",
            100.0 * cen_quarter,
            100.0 * cen_full,
            100.0 * FEATURE_CEN_GAP
        ),
    )
}

fn sample_complexity_report() -> std::result::Result<SweepReport, String> {
    let corpus = mnist_corpus(FeatureKind::Hog, 7, None)?;
    let config = SweepConfig {
        data_fractions: vec![0.01],
        ..sweep_config(30)
    };
    run_sample_complexity(&corpus, &config).map_err(fail)
}

fn sample_direction() -> Outcome {
    let report = sample_complexity_report()?;
    let cen = mean(&report, "samples", 0.01, "cen", "val_error")?;
    let mlp = mean(&report, "samples", 0.01, "mlp", "val_error")?;
    let lr = mean(&report, "samples", 0.01, "lr", "val_error")?;
    let moe = mean(&report, "samples", 0.01, "moe", "val_error")?;
    check(
        cen <= mlp,
        format!(
            "1% of train (hog): CEN {:.2}% vs MLP {:.2}% (LR {:.2}%, MoE {:.2}%)",
            100.0 * cen,
            100.0 * mlp,
            100.0 * lr,
            100.0 * moe
        ),
    )
}

// ---------------------------------------------------------------------------
// 10: reproducibility

fn reproducibility() -> Outcome {
    let corpus = synthetic_corpus();
    let config = SweepConfig {
        n_trials: 3,
        train: TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        },
        lime_test_subsample: 40,
        arch: Architecture {
            hidden: vec![32, 16],
            ..Architecture::default()
        },
        seed: 2024,
        ..SweepConfig::default()
    };
    let sweeps: [(&str, fn(&Corpus, &SweepConfig) -> Result<SweepReport>); 5] = [
        ("noise", run_noise_sweep),
        ("features", run_feature_sweep),
        ("samples", run_sample_complexity),
        ("table", run_table),
        ("convergence", convergence_compare),
    ];
    let mut differing = Vec::new();
    let mut rows = 0;
    for (name, sweep) in sweeps {
        let first = sweep(&corpus, &config).map_err(fail)?;
        let second = sweep(&corpus, &SweepConfig { jobs: 3, ..config.clone() }).map_err(fail)?;
        rows += first.rows().len();
        if first.to_csv() != second.to_csv() || first.meta.config_hash != second.meta.config_hash {
            differing.push(name);
        }
    }
    let mut detail = format!("5 synthetic sweeps re-run with 3 workers, {rows} rows");
    if mnist().is_ok() {
        let a = sample_complexity_report()?;
        let b = sample_complexity_report()?;
        if a.to_csv() != b.to_csv() {
            differing.push("mnist samples");
        }
        detail.push_str(", plus the MNIST sample-complexity sweep");
    }
    if differing.is_empty() {
        Ok(format!("{detail}: CSV identical"))
    } else {
        Err(format!("{detail}: differing {differing:?}"))
    }
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "prediction equals explanation", consistency),
        (3, "simplex and convex envelope", simplex_and_envelope),
        (4, "LIME exact recovery", lime_recovery),
        (5, "solver oracle equivalence", solver_oracle),
        (6, "table band", table_band),
        (7, "noise-sweep direction", noise_direction),
        (8, "feature-sweep direction", feature_direction),
        (9, "sample-complexity direction", sample_direction),
        (10, "reproducibility", reproducibility),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
