use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use linkfdr::dataset::{make_windows, split_chronological, DatasetManifest, Split, WindowedDataset, DEFAULT_FRACTIONS, DEFAULT_HORIZON};
use linkfdr::eval::{error_series, metrics_report, profile_csv, profile_inference, MetricsRow, PredictionKind};
use linkfdr::hpo::{search, ChannelData, DataParams, SearchSettings, SearchSpace};
use linkfdr::models::{build_model, fit, Condition, Model, ModelConfig, ModelKind, TrainedModel};
use linkfdr::trace::{
    decode_packed, encode_packed, load_trace_text, simulate_trace, trace_stats, write_trace_text, GeChannelSpec,
    OutcomeTrace, PRESET_NAMES,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cli::{
    Cli, Command, DataArgs, EvaluateArgs, ImportArgs, PrepareArgs, ProfileArgs, SimulateArgs, TrainArgs, TuneArgs,
};
use crate::config::{DataOverrides, FileConfig};
use crate::manifest::{FileDigest, Outputs};

const DESK_HORIZON: usize = 200;
const DESK_STRIDE: usize = 5;
const DEFAULT_SAMPLES: usize = 100_000;
const DEFAULT_BUDGET: usize = 8;
const PROFILE_WINDOWS: usize = 16;

/// Global options after merging flags with the config file.
struct Ctx {
    seed: u64,
    out: PathBuf,
    force: bool,
    desk: bool,
    jobs: usize,
    file: FileConfig,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.global.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.global.seed.or(file.seed).unwrap_or(0),
        out: cli.global.out.clone(),
        force: cli.global.force,
        desk: cli.global.desk_scale || file.desk_scale == Some(true),
        jobs: cli.global.jobs.or(file.jobs).unwrap_or(0),
        file,
    };
    if ctx.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(ctx.jobs).build_global().context("configuring worker threads")?;
    }
    match cli.command {
        Command::Simulate(args) => simulate(&ctx, args),
        Command::Import(args) => import(&ctx, args),
        Command::Prepare(args) => prepare(&ctx, args),
        Command::Train(args) => train(&ctx, args),
        Command::Tune(args) => tune(&ctx, args),
        Command::Evaluate(args) => evaluate(&ctx, args),
        Command::Profile(args) => profile(&ctx, args),
    }
}

fn load_trace(path: &Path) -> Result<OutcomeTrace> {
    let trace = if path.extension().is_some_and(|e| e == "fdr") {
        decode_packed(&fs::read(path).with_context(|| format!("reading {}", path.display()))?)
    } else {
        load_trace_text(path)
    };
    trace.with_context(|| format!("loading trace {}", path.display()))
}

fn text_bytes(trace: &OutcomeTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_trace_text(trace, &mut buf)?;
    Ok(buf)
}

fn simulate(ctx: &Ctx, args: SimulateArgs) -> Result<()> {
    let preset = args.preset.or(ctx.file.simulate.preset.clone()).unwrap_or_else(|| "calibrated".into());
    let samples = args.samples.or(ctx.file.simulate.samples).unwrap_or(DEFAULT_SAMPLES);
    let names: Vec<&str> = if preset == "all" { PRESET_NAMES.to_vec() } else { vec![preset.as_str()] };
    let mut out = Outputs::new(&ctx.out, ctx.force);
    let mut specs = Vec::new();
    let mut parts = Vec::new();
    for name in names {
        let mut spec = match name {
            "calibrated" => GeChannelSpec::calibrated(ctx.seed),
            _ => {
                let offset = PRESET_NAMES.iter().position(|p| *p == name).unwrap_or(0) as u64;
                GeChannelSpec::preset(name, ctx.seed.wrapping_add(offset))?
            }
        };
        spec.p_gb = args.p_gb.unwrap_or(spec.p_gb);
        spec.p_bg = args.p_bg.unwrap_or(spec.p_bg);
        spec.e_g = args.e_g.unwrap_or(spec.e_g);
        spec.e_b = args.e_b.unwrap_or(spec.e_b);
        let trace = simulate_trace(&spec, samples)?;
        println!("{name}: {samples} samples, success ratio {:.4}", trace.mean());
        let text = out.add(&format!("{name}.csv"), text_bytes(&trace)?);
        out.add(&format!("{name}.fdr"), encode_packed(&trace));
        parts.push(json!({ "path": text, "channel_id": trace.channel_id(), "sha256": trace.content_hash() }));
        specs.push(spec);
    }
    if preset == "all" {
        let concat = json!({ "name": "all", "samples": samples * parts.len(), "parts": parts });
        out.add("all.json", serde_json::to_string_pretty(&concat)? + "\n");
    }
    let config = json!({ "preset": preset, "samples": samples, "specs": specs });
    out.commit("simulate", ctx.seed, config, Vec::new())?;
    Ok(())
}

fn import(ctx: &Ctx, args: ImportArgs) -> Result<()> {
    let raw = load_trace(&args.input)?;
    let trace = OutcomeTrace::new(
        args.channel.unwrap_or(raw.channel_id()),
        args.period.unwrap_or(raw.period_s()),
        raw.outcomes().to_vec(),
    )?;
    let name = match args.name {
        Some(n) => n,
        None => args.input.file_stem().and_then(|s| s.to_str()).context("input has no file name")?.to_string(),
    };
    let stats = trace_stats(&trace, DEFAULT_HORIZON.min(trace.len()));
    println!(
        "{name}: {} samples, channel {}, success ratio {:.4}, longest failure run {}",
        trace.len(),
        trace.channel_id(),
        trace.mean(),
        stats.max_zero_run()
    );
    let mut out = Outputs::new(&ctx.out, ctx.force);
    out.add(&format!("{name}.csv"), text_bytes(&trace)?);
    out.add(&format!("{name}.fdr"), encode_packed(&trace));
    out.add(&format!("{name}.stats.json"), serde_json::to_string_pretty(&stats)? + "\n");
    let config = json!({ "channel": trace.channel_id(), "period_s": trace.period_s(), "name": name });
    out.commit("import", ctx.seed, config, vec![FileDigest::of_file(&args.input)?])?;
    Ok(())
}

/// Trace paths plus the split layout; what `prepare` writes and `train`,
/// `evaluate` read.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    traces: Vec<PathBuf>,
    manifest: DatasetManifest,
}

struct DataChoice {
    window: usize,
    params: DataParams,
}

fn data_choice(ctx: &Ctx, cli: &DataOverrides, preset_window: usize) -> Result<DataChoice> {
    let file = &ctx.file.data;
    let (horizon, stride) = if ctx.desk { (DESK_HORIZON, DESK_STRIDE) } else { (DEFAULT_HORIZON, 1) };
    let fractions = cli.fractions.or(file.fractions).unwrap_or(DEFAULT_FRACTIONS);
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        bail!("fractions {fractions:?} must be in [0, 1] and sum to 1");
    }
    Ok(DataChoice {
        window: cli.window.or(file.window).unwrap_or(preset_window),
        params: DataParams {
            horizon: cli.horizon.or(file.horizon).unwrap_or(horizon),
            stride: cli.stride.or(file.stride).unwrap_or(stride),
            fractions,
        },
    })
}

fn data_overrides(args: &DataArgs) -> Result<DataOverrides> {
    let fractions = match &args.fractions {
        Some(v) => Some(<[f64; 3]>::try_from(v.as_slice()).map_err(|_| anyhow::anyhow!("--fractions needs three values"))?),
        None => None,
    };
    Ok(DataOverrides { window: args.window, horizon: args.horizon, stride: args.stride, fractions })
}

fn split_traces(traces: &[(PathBuf, Arc<OutcomeTrace>)], window: usize, params: &DataParams) -> Result<WindowedDataset> {
    let parts = traces
        .iter()
        .map(|(path, t)| {
            make_windows(t.clone(), window, params.horizon, params.stride)
                .and_then(|d| split_chronological(&d, params.fractions))
                .with_context(|| format!("{}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowedDataset::concat(&parts)?)
}

fn prepare(ctx: &Ctx, args: PrepareArgs) -> Result<()> {
    let preset_window = ModelConfig::preset(args.model, Condition::Ch, ctx.desk).window;
    let choice = data_choice(ctx, &data_overrides(&args.data)?, preset_window)?;
    let mut traces = Vec::new();
    let mut inputs = Vec::new();
    for path in &args.traces {
        traces.push((fs::canonicalize(path).with_context(|| format!("resolving {}", path.display()))?, Arc::new(load_trace(path)?)));
        inputs.push(FileDigest::of_file(path)?);
    }
    let data = split_traces(&traces, choice.window, &choice.params)?;
    println!(
        "l = {}, N_f = {}, stride {}: {} train / {} val / {} test examples",
        choice.window,
        choice.params.horizon,
        choice.params.stride,
        data.count(Split::Train),
        data.count(Split::Val),
        data.count(Split::Test)
    );
    let file = DatasetFile { traces: traces.into_iter().map(|(p, _)| p).collect(), manifest: data.manifest()? };
    let mut out = Outputs::new(&ctx.out, ctx.force);
    out.add("dataset.json", serde_json::to_string_pretty(&file)? + "\n");
    let config = json!({ "window": choice.window, "data": choice.params });
    out.commit("prepare", ctx.seed, config, inputs)?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<(WindowedDataset, Vec<FileDigest>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: DatasetFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut inputs = vec![FileDigest::of_bytes(path, text.as_bytes())];
    let mut traces = Vec::new();
    for p in &file.traces {
        let p = if p.is_relative() { path.parent().unwrap_or(Path::new(".")).join(p) } else { p.clone() };
        traces.push(Arc::new(load_trace(&p)?));
        inputs.push(FileDigest::of_file(&p)?);
    }
    let data = file.manifest.apply(&traces).with_context(|| format!("rebuilding {}", path.display()))?;
    Ok((data, inputs))
}

fn check_window(cfg: &ModelConfig, data: &WindowedDataset, explicit: bool) -> Result<()> {
    if cfg.window != data.window() {
        let hint = if explicit { String::new() } else { format!("; pass --window {} or use a matching preset", data.window()) };
        bail!("dataset windows have {} samples but {} expects {}{hint}", data.window(), cfg.name(), cfg.window);
    }
    Ok(())
}

fn train(ctx: &Ctx, args: TrainArgs) -> Result<()> {
    let (data, inputs) = load_dataset(&args.dataset)?;
    let overrides = args.model.overrides().or(&ctx.file.model);
    let cfg = overrides.resolve(ctx.desk, ctx.seed)?;
    check_window(&cfg, &data, overrides.window_is_set())?;
    let trained = fit(build_model(&cfg)?, &data)?;
    let best = &trained.history[trained.best_epoch - 1];
    println!(
        "{}: {} parameters, best epoch {} of {}, val mse {:.6}",
        cfg.name(),
        trained.model.param_count(),
        trained.best_epoch,
        trained.history.len(),
        best.val_loss
    );
    let mut out = Outputs::new(ctx.out.join(cfg.name()), ctx.force);
    out.add("config.json", serde_json::to_string_pretty(&cfg)? + "\n");
    out.add("history.csv", trained.history_csv());
    out.add("checkpoint.json", trained.to_checkpoint_json()?);
    out.commit("train", ctx.seed, serde_json::to_value(&cfg)?, inputs)?;
    Ok(())
}

fn tune(ctx: &Ctx, args: TuneArgs) -> Result<()> {
    let overrides = args.model.overrides().or(&ctx.file.model);
    let base = overrides.resolve(ctx.desk, ctx.seed)?;
    let cli_data = DataOverrides {
        window: None,
        horizon: args.horizon,
        stride: args.stride,
        fractions: match &args.fractions {
            Some(v) => Some(<[f64; 3]>::try_from(v.as_slice()).map_err(|_| anyhow::anyhow!("--fractions needs three values"))?),
            None => None,
        },
    };
    let choice = data_choice(ctx, &cli_data, base.window)?;

    let s = &ctx.file.search;
    let mut space = SearchSpace::around(base.clone());
    macro_rules! list {
        ($($field:ident),*) => {$(
            if let Some(v) = s.$field.clone() {
                space.$field = v;
            }
        )*};
    }
    list!(window, batch_size, epochs, lr0, filters, kernel_size, lstm_units, dense_units);
    let budget = args.budget.or(s.budget).unwrap_or(DEFAULT_BUDGET);

    let mut inputs = Vec::new();
    let mut traces = Vec::new();
    for path in &args.traces {
        traces.push(Arc::new(load_trace(path)?));
        inputs.push(FileDigest::of_file(path)?);
    }
    let channels: Vec<ChannelData> = match base.condition {
        Condition::All => vec![ChannelData { label: "all".into(), traces }],
        Condition::Ch => traces
            .into_iter()
            .zip(&args.traces)
            .enumerate()
            .map(|(i, (t, path))| {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
                ChannelData { label: format!("{i}:{stem}"), traces: vec![t] }
            })
            .collect(),
    };
    let settings = SearchSettings { budget, seed: ctx.seed, jobs: ctx.jobs };
    let outcome = search(&space, &channels, &choice.params, settings)?;
    for (rank, c) in outcome.ranking.iter().enumerate() {
        println!(
            "#{:<2} candidate {:<3} mean Jbar {:.6}  lr0 {} filters {} units {:?} ({} params)",
            rank + 1,
            c.candidate,
            c.mean_loss,
            c.config.lr0,
            c.config.filters,
            c.config.lstm_units,
            c.param_count
        );
    }
    let mut out = Outputs::new(ctx.out.join(format!("tune-{}", base.name())), ctx.force);
    out.add("trials.csv", outcome.trial_ledger_csv());
    out.add("boxplot.csv", outcome.boxplot_csv());
    out.add("summary.json", outcome.summary_json()? + "\n");
    out.add("trials.json", serde_json::to_string_pretty(&outcome.trials)? + "\n");
    out.add("best_config.json", serde_json::to_string_pretty(&outcome.best)? + "\n");
    let config = json!({ "space": space, "budget": budget, "data": choice.params });
    out.commit("tune", ctx.seed, config, inputs)?;
    Ok(())
}

fn evaluate(ctx: &Ctx, args: EvaluateArgs) -> Result<()> {
    let (data, mut inputs) = load_dataset(&args.dataset)?;
    let mut rows = Vec::new();
    for path in &args.checkpoints {
        let trained = TrainedModel::load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
        inputs.push(FileDigest::of_file(path)?);
        let cfg = &trained.model.config;
        check_window(cfg, &data, true)?;
        for source in 0..data.sources().len() {
            let part = data.select_source(source)?;
            let channel = format!("ch{}", data.sources()[source].channel_id());
            let errors = error_series(&trained.model, &part, Split::Test)?;
            for kind in [PredictionKind::Clamped, PredictionKind::Raw] {
                rows.push(MetricsRow {
                    test_channel: channel.clone(),
                    condition: cfg.condition.label().to_string(),
                    model: cfg.model.label().to_string(),
                    prediction: kind,
                    metrics: metrics_report(errors.get(kind))?,
                });
            }
        }
    }
    let table = MetricsRow::text_table(&rows);
    print!("{table}");
    let mut out = Outputs::new(&ctx.out, ctx.force);
    out.add("metrics.csv", MetricsRow::csv(&rows));
    out.add("metrics.txt", table);
    let config = json!({ "checkpoints": args.checkpoints, "sign": "prediction - target" });
    out.commit("evaluate", ctx.seed, config, inputs)?;
    Ok(())
}

fn profile(ctx: &Ctx, args: ProfileArgs) -> Result<()> {
    let mut inputs = Vec::new();
    let models: Vec<Model> = if args.checkpoints.is_empty() {
        ModelKind::ALL
            .iter()
            .map(|&k| build_model(&ModelConfig::preset(k, args.condition, ctx.desk).with_seed(ctx.seed)))
            .collect::<linkfdr::Result<_>>()?
    } else {
        let mut models = Vec::new();
        for path in &args.checkpoints {
            models.push(TrainedModel::load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?.model);
            inputs.push(FileDigest::of_file(path)?);
        }
        models
    };
    let mut profiles = Vec::new();
    for model in &models {
        let l = model.config.window;
        let trace = simulate_trace(&GeChannelSpec::calibrated(ctx.seed), l * PROFILE_WINDOWS)?;
        let windows: Vec<Vec<f64>> =
            trace.outcomes().chunks_exact(l).map(|w| w.iter().map(|&b| f64::from(b)).collect()).collect();
        let p = profile_inference(model, &windows, args.repetitions)?;
        println!(
            "{:<8} {:<4} {:>9.4} ms  {:>8.4} MB  peak {:>8.4} MB  weights {:>8.4} MB  ({:?})",
            p.model, p.condition, p.mean_ms, p.mem_mb, p.peak_mb, p.param_mb, p.method
        );
        profiles.push(p);
    }
    let mut out = Outputs::new(&ctx.out, ctx.force);
    out.add("profile.csv", profile_csv(&profiles));
    let config = json!({
        "repetitions": args.repetitions,
        "models": models.iter().map(|m| m.config.name()).collect::<Vec<_>>(),
        "method": profiles.first().map(|p| p.method),
    });
    out.commit("profile", ctx.seed, config, inputs)?;
    Ok(())
}
