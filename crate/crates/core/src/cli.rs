//! The `hpun` command line.
//!
//! Machine-readable output (`--json`) is one JSON object per line, each with a
//! `"record"` field naming its type. Non-finite numbers are written as the
//! strings `"inf"`, `"-inf"` or `"nan"`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::ablation::{self, AblationConfig};
use crate::error::{Error, Result};
use crate::imaging::{
    self, evaluate, nme, Bicubic, EvalOptions, ImageBuf, ImagePair, ImageScore, ModelUpscaler, Nearest, Upscaler,
};
use crate::model::{count_costs, reconcile, Model, ModelSpec, PAPER_TARGETS};
use crate::real::Real;
use crate::train::{prepare_dataset, Dataset, DatasetIndex, TrainConfig, Trainer};

#[derive(Debug, Parser)]
#[command(
    name = "hpun",
    version,
    about = "Lightweight super-resolution with hybrid pixel-unshuffled networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crop HR images and synthesize bicubic LR counterparts.
    Prepare {
        #[arg(long)]
        hr_dir: PathBuf,
        #[arg(long)]
        scale: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a prepared dataset.
    Train(TrainArgs),
    /// Upscale one PNG.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        self_ensemble: bool,
        #[arg(long)]
        f64: bool,
    },
    /// PSNR/SSIM on the Y channel over a prepared dataset.
    Eval(EvalArgs),
    /// Per-layer parameter and Multi-Adds table.
    Count {
        #[command(flatten)]
        model: ModelArgs,
        /// HR output size for Multi-Adds, WIDTHxHEIGHT.
        #[arg(long, default_value = "1280x720")]
        resolution: String,
        /// Sweep widths, group modes and kernels against the published totals.
        #[arg(long)]
        reconcile: bool,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalized mean error between head and body features of one image.
    Nme {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Directory for map.png, binarized.png, map.csv and report.json.
        #[arg(long)]
        out: PathBuf,
        /// Use the body output before the global residual add.
        #[arg(long)]
        pre_residual: bool,
        /// Binarization threshold; defaults to the map mean.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Train block variants under one toy budget and compare them.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// hpun-s, hpun-m, hpun-l or toy.
    #[arg(long, conflicts_with = "spec")]
    pub preset: Option<String>,
    /// Model spec file (TOML).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
}

impl ModelArgs {
    pub fn resolve(&self) -> Result<ModelSpec> {
        match (&self.preset, &self.spec) {
            (Some(p), None) => ModelSpec::by_name(p, self.scale),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                ModelSpec::from_text(&text)
            }
            (None, None) => Err(Error::Config("one of --preset or --spec is required".into())),
            (Some(_), Some(_)) => Err(Error::Config("--preset and --spec are mutually exclusive".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Prepared dataset directory (contains index.tsv).
    #[arg(long)]
    pub data: PathBuf,
    /// Prepared validation dataset.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Training config file (TOML); its scale is replaced by --scale.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub f64: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model checkpoint; omit with --method bicubic|nearest|oracle.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// model, bicubic, nearest, or oracle (scores HR against itself).
    #[arg(long, default_value = "model")]
    pub method: String,
    #[arg(long)]
    pub data: PathBuf,
    /// Expected scale; must match the dataset and checkpoint.
    #[arg(long)]
    pub scale: Option<usize>,
    /// Pixels removed from each border before scoring; defaults to the scale.
    #[arg(long)]
    pub border: Option<usize>,
    #[arg(long)]
    pub no_quantize: bool,
    #[arg(long)]
    pub self_ensemble: bool,
    #[arg(long)]
    pub f64: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated variant names, or one of: components, pooling, downsampler.
    #[arg(long, default_value = "components")]
    pub variants: String,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// One output record: `{"record": kind, ...fields}`.
pub fn record(kind: &str, fields: Value) -> String {
    let mut m = Map::new();
    m.insert("record".into(), json!(kind));
    if let Value::Object(f) = fields {
        m.extend(f);
    }
    Value::Object(m).to_string()
}

fn fmt_db(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "inf".into()
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("resolution {s:?} is not WIDTHxHEIGHT")))?;
    let p = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| Error::Config(format!("bad resolution {s:?}")))
    };
    Ok((p(w)?, p(h)?))
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p),
        None => Ok(TrainConfig::default()),
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    DatasetIndex::load(dir)?.load_images()
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out`.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            return write!(out, "{e}").map_err(io_err);
        }
        Err(e) => return Err(Error::Config(e.to_string().trim().replace('\n', " "))),
    };
    execute(cli.command, out)
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Prepare {
            hr_dir,
            scale,
            out: dir,
        } => {
            let idx = prepare_dataset(&hr_dir, scale, &dir)?;
            writeln!(
                out,
                "prepared {} images at scale {scale} in {}",
                idx.entries.len(),
                dir.display()
            )
            .map_err(io_err)
        }
        Command::Train(a) => {
            if a.f64 {
                cmd_train::<f64>(a, out)
            } else {
                cmd_train::<f32>(a, out)
            }
        }
        Command::Infer {
            checkpoint,
            input,
            output,
            self_ensemble,
            f64,
        } => {
            if f64 {
                cmd_infer::<f64>(&checkpoint, &input, &output, self_ensemble)
            } else {
                cmd_infer::<f32>(&checkpoint, &input, &output, self_ensemble)
            }
        }
        Command::Eval(a) => cmd_eval(a, out),
        Command::Count {
            model,
            resolution,
            reconcile,
            json,
            out: file,
        } => cmd_count(&model, &resolution, reconcile, json, file.as_deref(), out),
        Command::Nme {
            checkpoint,
            input,
            out: dir,
            pre_residual,
            threshold,
            json,
        } => cmd_nme(&checkpoint, &input, &dir, pre_residual, threshold, json, out),
        Command::Ablate(a) => cmd_ablate(a, out),
    }
}

fn cmd_train<T: Real>(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let spec = a.model.resolve()?;
    let mut cfg = load_train_config(a.config.as_deref())?;
    cfg.scale = spec.scale;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.max_epochs = e;
    }
    if let Some(i) = a.iters {
        cfg.iters_per_epoch = i;
    }
    cfg.validate()?;
    let data = load_dataset(&a.data)?;
    let val = a.val.as_deref().map(load_dataset).transpose()?;
    let mut trainer = if a.resume {
        Trainer::<T>::resume(&a.out, &spec, cfg)?
    } else {
        let model = Model::<T>::build(&spec, cfg.seed)?;
        Trainer::new(model, cfg)?.with_output(&a.out)?
    };
    let start = trainer.log.len();
    trainer.run(&data, val.as_ref())?;
    for r in &trainer.log[start..] {
        writeln!(out, "{}", r.to_json()).map_err(io_err)?;
    }
    Ok(())
}

fn cmd_infer<T: Real>(checkpoint: &Path, input: &Path, output: &Path, self_ensemble: bool) -> Result<()> {
    let model = Model::<T>::load(checkpoint, None)?;
    let lr = ImageBuf::load_png(input)?;
    let sr = ModelUpscaler::new(&model)
        .with_self_ensemble(self_ensemble)
        .upscale(&lr)?;
    sr.save_png(output)
}

fn run_eval<U: Upscaler + Sync>(up: &U, data: &Dataset, opts: EvalOptions) -> Result<imaging::EvalReport> {
    if up.scale() != data.scale {
        return Err(Error::TopologyMismatch(format!(
            "upscaler is x{} but the dataset is x{}",
            up.scale(),
            data.scale
        )));
    }
    evaluate(up, &data.pairs, opts)
}

/// Scores every HR image against itself.
fn oracle_eval(data: &Dataset, opts: EvalOptions) -> Result<imaging::EvalReport> {
    let pairs: Vec<ImagePair> = data
        .pairs
        .iter()
        .map(|p| ImagePair {
            name: p.name.clone(),
            lr: p.hr.clone(),
            hr: p.hr.clone(),
        })
        .collect();
    struct Same;
    impl Upscaler for Same {
        fn scale(&self) -> usize {
            1
        }
        fn upscale(&self, lr: &ImageBuf) -> Result<ImageBuf> {
            Ok(lr.clone())
        }
    }
    evaluate(&Same, &pairs, opts)
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let data = load_dataset(&a.data)?;
    if let Some(s) = a.scale {
        if s != data.scale {
            return Err(Error::TopologyMismatch(format!(
                "--scale {s} but the dataset is x{}",
                data.scale
            )));
        }
    }
    let opts = EvalOptions {
        border: a.border.unwrap_or(data.scale),
        quantize: !a.no_quantize,
    };
    let report = match a.method.as_str() {
        "model" => {
            let ckpt = a
                .checkpoint
                .as_deref()
                .ok_or_else(|| Error::Config("--checkpoint is required for --method model".into()))?;
            if a.f64 {
                let m = Model::<f64>::load(ckpt, None)?;
                run_eval(&ModelUpscaler::new(&m).with_self_ensemble(a.self_ensemble), &data, opts)?
            } else {
                let m = Model::<f32>::load(ckpt, None)?;
                run_eval(&ModelUpscaler::new(&m).with_self_ensemble(a.self_ensemble), &data, opts)?
            }
        }
        "bicubic" => run_eval(&Bicubic { scale: data.scale }, &data, opts)?,
        "nearest" => run_eval(&Nearest { scale: data.scale }, &data, opts)?,
        "oracle" => oracle_eval(&data, opts)?,
        other => return Err(Error::Config(format!("unknown method {other:?}"))),
    };
    let image_line = |s: &ImageScore| {
        if a.json {
            record(
                "image",
                json!({"name": s.name, "psnr_y": num(s.psnr_y), "ssim_y": num(s.ssim_y)}),
            )
        } else {
            format!("{:<24} {:>9} dB  {:.4}", s.name, fmt_db(s.psnr_y), s.ssim_y)
        }
    };
    for s in &report.images {
        writeln!(out, "{}", image_line(s)).map_err(io_err)?;
    }
    let line = if a.json {
        record(
            "mean",
            json!({
                "method": a.method,
                "images": report.images.len(),
                "psnr_y": num(report.mean_psnr_y),
                "ssim_y": num(report.mean_ssim_y),
                "border": opts.border,
                "quantize": opts.quantize,
                "self_ensemble": a.self_ensemble,
            }),
        )
    } else {
        format!(
            "{:<24} {:>9} dB  {:.4}",
            "mean",
            fmt_db(report.mean_psnr_y),
            report.mean_ssim_y
        )
    };
    writeln!(out, "{line}").map_err(io_err)
}

fn cmd_count(
    args: &ModelArgs,
    resolution: &str,
    do_reconcile: bool,
    as_json: bool,
    file: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let mut text = String::new();
    let mut push = |s: String| {
        text.push_str(&s);
        text.push('\n');
    };
    if do_reconcile {
        let rep = reconcile()?;
        let mut rows: Vec<_> = rep.rows.iter().collect();
        rows.sort_by(|a, b| a.score.total_cmp(&b.score));
        for (i, r) in rows.iter().enumerate() {
            let c = &r.config;
            let devs: Vec<Value> = r
                .variants
                .iter()
                .map(|v| {
                    json!({
                        "variant": v.variant.name(),
                        "params": v.params,
                        "mult_adds": v.mult_adds,
                        "params_dev": v.params_dev,
                        "mult_adds_dev": v.mult_adds_dev,
                    })
                })
                .collect();
            let fields = json!({
                "rank": i + 1,
                "channels": c.channels,
                "group_mode": c.group_mode,
                "pud_kernel": c.pud_kernel,
                "count_bias": c.count_bias,
                "count_mean_shift": c.count_mean_shift,
                "score": r.score,
                "within_tolerance": r.within_tolerance(),
                "variants": devs,
            });
            if as_json {
                push(record("reconcile", fields));
            } else {
                let d: Vec<String> = r
                    .variants
                    .iter()
                    .map(|v| {
                        format!(
                            "{} {:+.1}%/{:+.1}%",
                            v.variant.name(),
                            100.0 * v.params_dev,
                            100.0 * v.mult_adds_dev
                        )
                    })
                    .collect();
                push(format!(
                    "{:>3} C={:<3} {:<11} k={} bias={:<5} meanshift={:<5} score={:.3}  {}",
                    i + 1,
                    c.channels,
                    format!("{:?}", c.group_mode),
                    c.pud_kernel,
                    c.count_bias,
                    c.count_mean_shift,
                    r.score,
                    d.join("  ")
                ));
            }
        }
        let b = &rep.best;
        let summary: Vec<String> = b
            .variants
            .iter()
            .map(|v| {
                format!(
                    "{} params {} ({:+.2}%) multi-adds {:.2}G ({:+.2}%)",
                    v.variant.name(),
                    v.params,
                    100.0 * v.params_dev,
                    v.mult_adds as f64 / 1e9,
                    100.0 * v.mult_adds_dev
                )
            })
            .collect();
        let targets: Vec<String> = PAPER_TARGETS
            .iter()
            .map(|(v, p, m)| format!("{} {}K/{:.1}G", v.name(), p / 1000, *m as f64 / 1e9))
            .collect();
        if !as_json {
            push(format!("targets: {}", targets.join(", ")));
            push(format!(
                "best: C={} group_mode={:?} pud_kernel={} count_bias={} count_mean_shift={} score={:.3} {}",
                b.config.channels,
                b.config.group_mode,
                b.config.pud_kernel,
                b.config.count_bias,
                b.config.count_mean_shift,
                b.score,
                if b.within_tolerance() {
                    "PASS"
                } else {
                    "FAIL (outside tolerance)"
                }
            ));
            for s in summary {
                push(format!("  {s}"));
            }
        }
    } else {
        let spec = args.resolve()?;
        let model = Model::<f32>::build(&spec, 0)?;
        let rep = count_costs(&model, parse_resolution(resolution)?)?;
        for r in &rep.rows {
            push(if as_json {
                record(
                    "layer",
                    json!({"name": r.name, "params": r.params, "params_no_bias": r.params_no_bias, "mult_adds": r.mult_adds}),
                )
            } else {
                format!("{:<32} {:>10} {:>16}", r.name, r.params, r.mult_adds)
            });
        }
        push(if as_json {
            record(
                "total",
                json!({
                    "model": spec.variant.name(),
                    "scale": spec.scale,
                    "params": rep.total_params,
                    "params_no_bias": rep.total_params_no_bias,
                    "mean_shift_params": rep.mean_shift_params,
                    "mult_adds": rep.total_mult_adds,
                    "hr_width": rep.hr_resolution.0,
                    "hr_height": rep.hr_resolution.1,
                }),
            )
        } else {
            format!(
                "{:<32} {:>10} {:>16}\nparams without bias {}, mean-shift {}, HR {}x{} (LR {}x{})",
                "total",
                rep.total_params,
                rep.total_mult_adds,
                rep.total_params_no_bias,
                rep.mean_shift_params,
                rep.hr_resolution.0,
                rep.hr_resolution.1,
                rep.lr_resolution.0,
                rep.lr_resolution.1
            )
        });
    }
    if let Some(f) = file {
        crate::io::write_atomic_str(f, &text)?;
    }
    out.write_all(text.as_bytes()).map_err(io_err)
}

fn cmd_nme(
    checkpoint: &Path,
    input: &Path,
    dir: &Path,
    pre_residual: bool,
    threshold: Option<f64>,
    as_json: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let model = Model::<f64>::load(checkpoint, None)?;
    let img = ImageBuf::load_png(input)?.pad_to_even();
    let (shallow, deep) = model.feature_pair(&img.to_tensor(), pre_residual)?;
    let rep = nme(&shallow, &deep, threshold)?;
    rep.write_files(dir)?;
    let fields = json!({
        "nme": num(rep.nme),
        "threshold": num(rep.threshold),
        "width": rep.width,
        "height": rep.height,
        "deep": if pre_residual { "pre_residual" } else { "post_residual" },
    });
    crate::io::write_atomic_str(&dir.join("report.json"), &(record("nme", fields.clone()) + "\n"))?;
    let line = if as_json {
        record("nme", fields)
    } else {
        format!(
            "nme {:e} threshold {:e} map {}x{}",
            rep.nme, rep.threshold, rep.width, rep.height
        )
    };
    writeln!(out, "{line}").map_err(io_err)
}

fn cmd_ablate(a: AblateArgs, out: &mut dyn Write) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let mut train = load_train_config(a.config.as_deref())?;
    train.scale = data.scale;
    train.validate()?;
    let variants = match a.variants.as_str() {
        "components" => ablation::component_variants(),
        "pooling" => ablation::pooling_variants(),
        "downsampler" => ablation::downsampler_variants(),
        list => list
            .split(',')
            .map(|n| ablation::variant_by_name(n.trim()))
            .collect::<Result<Vec<_>>>()?,
    };
    let cfg = AblationConfig {
        channels: a.channels,
        blocks: a.blocks,
        seeds: a.seeds,
        train,
    };
    let rep = ablation::run_ablation(&data, &data, &variants, &cfg)?;
    let text = if a.json {
        let mut s = String::new();
        for r in &rep.rows {
            let per: Vec<Value> = r.psnr_y.iter().map(|&p| num(p)).collect();
            s.push_str(&record(
                "ablation",
                json!({"name": r.name, "params": r.params, "median_psnr_y": num(r.median_psnr_y), "psnr_y": per}),
            ));
            s.push('\n');
        }
        s.push_str(&record(
            "baseline",
            json!({"name": "bicubic", "psnr_y": num(rep.bicubic_psnr_y)}),
        ));
        s.push('\n');
        for w in &rep.warnings {
            s.push_str(&record("warning", json!({"message": w})));
            s.push('\n');
        }
        s
    } else {
        rep.to_table()
    };
    if let Some(f) = &a.out {
        crate::io::write_atomic_str(f, &text)?;
    }
    out.write_all(text.as_bytes()).map_err(io_err)
}

/// `error code=<exit code> kind=<kind> msg=<message on one line>`
pub fn error_line(e: &Error) -> String {
    format!(
        "error code={} kind={} msg={}",
        e.class().exit_code(),
        e.kind(),
        e.to_string().replace('\n', " ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_numbers_become_strings() {
        assert_eq!(num(1.5), json!(1.5));
        assert_eq!(num(f64::INFINITY), json!("inf"));
        assert_eq!(num(f64::NEG_INFINITY), json!("-inf"));
        assert_eq!(num(f64::NAN), json!("nan"));
    }

    #[test]
    fn record_tags_kind() {
        let line = record("mean", json!({"psnr_y": 30.0}));
        let v: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["record"], "mean");
        assert_eq!(v["psnr_y"], 30.0);
    }

    #[test]
    fn resolution_parsing() {
        assert_eq!(parse_resolution("1280x720").unwrap(), (1280, 720));
        assert_eq!(parse_resolution("64X32").unwrap(), (64, 32));
        assert!(parse_resolution("1280").is_err());
        assert!(parse_resolution("ax3").is_err());
    }

    #[test]
    fn error_lines_carry_exit_code() {
        assert_eq!(
            error_line(&Error::Config("bad\nthing".into())),
            "error code=2 kind=config msg=invalid configuration: bad thing"
        );
        assert!(error_line(&Error::NonFinite("x".into())).starts_with("error code=4 kind=non_finite"));
        assert!(error_line(&Error::Data("x".into())).starts_with("error code=3"));
    }

    #[test]
    fn help_and_bad_flags() {
        let mut out = Vec::new();
        run(["hpun", "--help"], &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("count"));
        let err = run(["hpun", "count", "--bogus"], &mut Vec::new()).err().unwrap();
        assert_eq!(err.class().exit_code(), 2);
    }

    #[test]
    fn count_json_total_matches_library() {
        let mut out = Vec::new();
        run(
            [
                "hpun",
                "count",
                "--preset",
                "toy",
                "--scale",
                "2",
                "--resolution",
                "64x32",
                "--json",
            ],
            &mut out,
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        let last: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        let model = Model::<f32>::build(&ModelSpec::toy(2), 0).unwrap();
        let rep = count_costs(&model, (64, 32)).unwrap();
        assert_eq!(last["record"], "total");
        assert_eq!(last["params"], rep.total_params);
        assert_eq!(last["mult_adds"], rep.total_mult_adds);
    }
}
