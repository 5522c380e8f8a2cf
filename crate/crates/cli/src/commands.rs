use std::fs;
use std::path::{Path, PathBuf};

use explain_lab::data::csv::read_csv;
use explain_lab::data::{load_mnist_dir, Corpus, FeatureView, Split};
use explain_lab::experiments::{run_experiment, Experiment, SweepReport};
use explain_lab::lime::{self, ExplanationExport, ExportMeta};
use explain_lab::models::{evaluate, train, Checkpoint, Model};
use explain_lab::numkit::argmax;
use explain_lab::{Error, Matrix};
use serde_json::json;

use crate::config::{Command, RunConfig, Source};
use crate::CliError;

pub const EFFECTIVE_CONFIG: &str = "effective-config";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Writes the fully resolved configuration into the output directory.
pub fn write_effective_config(config: &RunConfig) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&config.output).map_err(|e| io_err(&config.output, e))?;
    let path = config.output.join(EFFECTIVE_CONFIG);
    write(&path, &config.to_text())?;
    Ok(path)
}

/// Runs the configured command and returns a short summary for stdout.
pub fn execute(config: &RunConfig) -> Result<String, CliError> {
    match config.command {
        Command::Prepare => prepare(config),
        Command::Train => train_command(config),
        Command::Explain => explain_command(config),
        Command::Sweep => sweep(config),
        Command::Report => report(config),
    }
}

pub fn load_corpus(config: &RunConfig) -> Result<Corpus, CliError> {
    let d = &config.data;
    let (train, test) = match d.source {
        Source::Synthetic => {
            return Ok(Corpus::synthetic(&d.synthetic, d.synthetic_val, d.synthetic_test)?);
        }
        Source::Mnist => load_mnist_dir(&d.mnist_dir)?,
        Source::Csv => {
            let (tr, te) = (d.train_csv.as_ref(), d.test_csv.as_ref());
            let (Some(tr), Some(te)) = (tr, te) else {
                return Err(CliError::Validation("`data.train_csv` and `data.test_csv` are required".into()));
            };
            let train = read_csv(tr, None)?;
            let test = read_csv(te, Some(train.classes()))?.with_split(Split::Test);
            (train, test)
        }
    };
    let corpus = Corpus::from_images(&train, &test, &d.features, &d.params, d.val_count, d.split_seed)?;
    match d.train_subset {
        Some(n) => Ok(corpus.with_train_subset(n, d.split_seed)?),
        None => Ok(corpus),
    }
}

fn prepare(config: &RunConfig) -> Result<String, CliError> {
    let corpus = load_corpus(config)?;
    let views: Vec<_> = corpus
        .views
        .iter()
        .map(|v| {
            json!({
                "features": v.kind.as_str(),
                "x_dim": v.train.x_dim(),
                "z_dim": v.z_dim(),
                "classes": v.train.classes(),
                "train": v.train.len(),
                "val": v.val.len(),
                "test": v.test.len(),
                "train_class_counts": v.train.class_counts(),
            })
        })
        .collect();
    let path = config.output.join("dataset.json");
    let summary = json!({ "views": views });
    write(&path, &serde_json::to_string_pretty(&summary).map_err(Error::from)?)?;
    let v = corpus.primary();
    Ok(format!(
        "{} train / {} val / {} test rows, {} view(s); wrote {}",
        v.train.len(),
        v.val.len(),
        v.test.len(),
        corpus.views.len(),
        path.display()
    ))
}

fn train_command(config: &RunConfig) -> Result<String, CliError> {
    let corpus = load_corpus(config)?;
    let view = corpus.primary();
    let (model, log) = train(config.model, &config.arch, &view.train, Some(&view.val), &config.train_config())?;
    let (val_error, _) = evaluate(&model, &view.val)?;
    let (test_error, test_loss) = evaluate(&model, &view.test)?;

    let mut ckpt = Checkpoint::from_model(&model);
    ckpt.meta.insert("features".into(), view.kind.as_str().into());
    ckpt.meta.insert("seed".into(), config.seed.to_string());
    let ckpt_path = config.output.join("model.ckpt");
    ckpt.save(&ckpt_path)?;

    let mut csv = String::from("epoch,train_error,train_loss,val_error\n");
    for e in &log.entries {
        let val = e.val_error.map_or(String::new(), |v| v.to_string());
        csv.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_error, e.train_loss, val));
    }
    write(&config.output.join("train-log.csv"), &csv)?;
    let metrics = json!({
        "model": config.model.as_str(),
        "features": view.kind.as_str(),
        "epochs": config.train.epochs,
        "val_error": val_error,
        "test_error": test_error,
        "test_loss": test_loss,
    });
    write(
        &config.output.join("metrics.json"),
        &serde_json::to_string_pretty(&metrics).map_err(Error::from)?,
    )?;
    Ok(format!(
        "{} on {}: val error {:.4}, test error {:.4}; wrote {}",
        config.model,
        view.kind,
        val_error,
        test_error,
        ckpt_path.display()
    ))
}

fn check_shapes(model: &Model, view: &FeatureView) -> Result<(), CliError> {
    let expected = (view.train.x_dim(), view.z_dim(), view.train.classes());
    let found = (
        model.x_dim().unwrap_or(expected.0),
        model.z_dim().unwrap_or(expected.1),
        model.classes(),
    );
    if found != expected {
        return Err(CliError::Validation(format!(
            "checkpoint expects (x_dim, z_dim, classes) = {found:?} but the configured data gives {expected:?}"
        )));
    }
    Ok(())
}

fn explain_command(config: &RunConfig) -> Result<String, CliError> {
    let path = config
        .explain_model
        .as_ref()
        .ok_or_else(|| CliError::Validation("`explain.model` is required".into()))?;
    let model = Checkpoint::load(path)?.to_model()?;
    let corpus = load_corpus(config)?;
    let view = corpus.primary();
    check_shapes(&model, view)?;
    let i = config.explain_instance;
    if i >= view.test.len() {
        return Err(CliError::Validation(format!(
            "`explain.instance` = {i} is out of range for {} test rows",
            view.test.len()
        )));
    }
    let lime_config = config.lime_config();
    lime_config
        .validate(view.z_dim())
        .map_err(|e| CliError::Validation(format!("lime: {e}")))?;

    let x = view.test.x().row(i);
    let z = view.test.z().row(i);
    let expl = lime::explain(&model, x, view.map.as_ref(), &lime_config)?;
    let export = ExplanationExport::new(
        &expl,
        ExportMeta {
            sigma: lime_config.kernel.resolved_sigma(view.z_dim()),
            n_samples: lime_config.n_samples,
            seed: lime_config.seed,
        },
    );
    let out = config.output.join(format!("explanation-{i}.json"));
    write(&out, &export.to_json()?)?;

    let proba = model.predict_proba(&Matrix::row_vector(x), &Matrix::row_vector(z))?;
    let predicted = argmax(proba.row(0));
    let surrogate = argmax(&expl.apply(z)?);
    let mut summary = format!(
        "instance {i}: label {}, model predicts {predicted}, explanation predicts {surrogate}; wrote {}",
        view.test.y()[i],
        out.display()
    );
    if let Model::Cen(cen) = &model {
        let own = cen.explain(x)?;
        let own_path = config.output.join(format!("cen-explanation-{i}.json"));
        write(&own_path, &serde_json::to_string_pretty(&own).map_err(Error::from)?)?;
        summary.push_str(&format!(" and {}", own_path.display()));
    }
    Ok(summary)
}

fn write_report(report: &SweepReport, dir: &Path, stem: &str) -> Result<PathBuf, CliError> {
    let (csv, _) = report.write(dir, stem)?;
    write(&dir.join(format!("{stem}-summary.csv")), &report.summary_csv())?;
    Ok(csv)
}

fn sweep(config: &RunConfig) -> Result<String, CliError> {
    let corpus = load_corpus(config)?;
    let experiment = config.sweep.experiment;
    let sweep = config.sweep_config();
    if matches!(experiment, Experiment::Noise | Experiment::Features) {
        sweep
            .lime
            .validate(corpus.primary().z_dim())
            .map_err(|e| CliError::Validation(format!("lime: {e}")))?;
    }
    let report = run_experiment(experiment, &corpus, &sweep)?;
    let csv = write_report(&report, &config.output, experiment.as_str())?;
    let failures = &report.meta.failures;
    let summary = format!("{} rows; wrote {}", report.rows().len(), csv.display());
    if failures.is_empty() {
        Ok(summary)
    } else {
        for f in failures {
            eprintln!(
                "failed: {} trial {} model {} condition {}: {}",
                f.experiment,
                f.trial,
                f.model,
                f.condition.as_deref().unwrap_or("all"),
                f.error
            );
        }
        Err(CliError::Failures(format!("{summary}; {} unit(s) failed", failures.len())))
    }
}

fn report(config: &RunConfig) -> Result<String, CliError> {
    let input = config
        .report_input
        .as_ref()
        .ok_or_else(|| CliError::Validation("`report.input` is required".into()))?;
    let report = SweepReport::read(input)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let out = config.output.join(format!("{stem}-summary.csv"));
    let summary = report.summary_csv();
    write(&out, &summary)?;
    Ok(format!("{}wrote {}", summary, out.display()))
}
