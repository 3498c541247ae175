use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use facefill::anim::{load_animation, save_animation};
use facefill::datagen::{build_corpus, CorpusConfig, MANIFEST_NAME};
use facefill::editing::{edit, interpolate_baseline, EditRequest, EditSpec, Guidance};
use facefill::eval::{bezier_report, edit_report, mse};
use facefill::training::{train, TrainConfig, TrainingData};
use facefill::{Bundle, DistanceRig, Real};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::{BezierArgs, EditArgs, EvalCommand, MseArgs, ReportArgs, SynthArgs, TrainArgs};

fn read_config<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = fs::read_to_string(path).map_err(|e| facefill::Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| facefill::Error::Json {
            path: path.into(),
            source: e,
        })
        .map_err(Into::into)
}

fn log_resolved<C: Serialize>(what: &str, cfg: &C) {
    info!("{what} config: {}", serde_json::to_string(cfg).unwrap_or_default());
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| facefill::Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg: CorpusConfig = read_config(args.config.as_deref())?;
    if let Some(n) = args.sequences {
        cfg.n_sequences = n;
    }
    if let Some(n) = args.test {
        cfg.n_test = n;
    }
    if let Some(n) = args.length {
        cfg.length = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    log_resolved("synth", &cfg);
    let manifest = build_corpus(&cfg, &args.out)?;
    println!(
        "wrote {} training and {} test sequences ({:.1} s of training animation) to {}",
        manifest.items.len(),
        manifest.test_items.len(),
        manifest.total_duration_seconds,
        args.out.join(MANIFEST_NAME).display()
    );
    Ok(())
}

pub fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = read_config(args.config.as_deref())?;
    if let Some(k) = args.constraint {
        cfg.constraint_kind = k;
    }
    if let Some(n) = args.iters {
        cfg.iterations = n;
    }
    if let Some(b) = args.batch {
        cfg.batch_size = b;
    }
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(l) = args.seq_len {
        cfg.seq_len = l;
    }
    if let Some(c) = args.checkpoint_every {
        cfg.checkpoint_every = c;
    }
    cfg.validate()?;
    log_resolved("train", &cfg);
    let data = TrainingData::from_manifest(&args.data)?;
    info!("{} training sequences from {}", data.items.len(), args.data.display());
    let fin = train::<Real>(&cfg, &data, DistanceRig::canonical(), &args.out)?;
    println!("final checkpoint: {}", fin.display());
    Ok(())
}

pub fn edit_cmd(args: EditArgs) -> Result<()> {
    info!(
        "edit: input {} spec {} seed {} exact_keyframes {}",
        args.input.display(),
        args.spec.display(),
        args.seed,
        args.exact_keyframes
    );
    let original = load_animation(&args.input, false)?;
    let spec = EditSpec::load(&args.spec)?;
    let guidance = spec.guidance(&args.spec)?;
    let started = Instant::now();
    let edited = match (&args.model, args.baseline) {
        (Some(model_path), _) => {
            let model = Bundle::load(model_path)?;
            info!(
                "model {} ({} constraints, iteration {})",
                model_path.display(),
                model.constraint_kind,
                model.iteration
            );
            edit(&EditRequest {
                animation: original.clone(),
                segments: spec.segments.clone(),
                guidance,
                model: &model,
                seed: args.seed,
                exact_keyframes: args.exact_keyframes,
            })?
        }
        (None, Some(method)) => {
            if guidance != Guidance::None {
                warn!("interpolation baselines ignore the spec's guidance");
            }
            interpolate_baseline(&original, &spec.segments, method)?
        }
        (None, None) => unreachable!("clap requires --model or --baseline"),
    };
    let seconds = started.elapsed().as_secs_f64();
    save_animation(&edited, &args.out)?;
    println!("edited {} segment(s) in {seconds:.3} s -> {}", spec.segments.len(), args.out.display());
    if let Some(path) = &args.report {
        let report = edit_report(&original, &edited, &spec.segments, &DistanceRig::canonical(), args.tol, Some(seconds))?;
        write_json(&report, path)?;
        print!("{}", report.to_text());
    }
    Ok(())
}

pub fn eval(cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Bezier(a) => eval_bezier(a),
        EvalCommand::Mse(a) => eval_mse(a),
        EvalCommand::Report(a) => eval_report(a),
    }
}

fn eval_bezier(args: BezierArgs) -> Result<()> {
    let anim = load_animation(&args.input, false)?;
    let report = bezier_report(&anim, args.range, args.tol)?;
    print!("{}", report.to_text());
    if let Some(path) = &args.json {
        write_json(&report, path)?;
    }
    Ok(())
}

fn eval_mse(args: MseArgs) -> Result<()> {
    let a = load_animation(&args.a, false)?;
    let b = load_animation(&args.b, false)?;
    println!("{}", mse(&a, &b)?);
    Ok(())
}

fn eval_report(args: ReportArgs) -> Result<()> {
    let original = load_animation(&args.original, false)?;
    let edited = load_animation(&args.edited, false)?;
    let spec = EditSpec::load(&args.spec)?;
    let seconds = (args.inference_seconds > 0.0).then_some(args.inference_seconds);
    let report = edit_report(&original, &edited, &spec.segments, &DistanceRig::canonical(), args.tol, seconds)
        .with_context(|| format!("reporting on {}", args.edited.display()))?;
    print!("{}", report.to_text());
    if let Some(path) = &args.json {
        write_json(&report, path)?;
    }
    Ok(())
}
