//! `redseg` command-line driver: synthetic data generation, expert contour
//! fusion, toy training, evaluation, CDR grading and the skip-type
//! comparison experiment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use redseg::cdr::{grading_report, vertical_cdr, Grade};
use redseg::contour::{median_fuse, rasterize};
use redseg::error::{Error, Result};
use redseg::io;
use redseg::loss::AlphaSchedule;
use redseg::mask_head::{predict_mask, MaskHeadConfig, SkipType};
use redseg::metrics::{aggregate, confusion, report, MetricsReport};
use redseg::synth::{gen_cohort, SynthSpec};
use redseg::tensor::Tensor;
use redseg::train::{resize_pad, split_dataset, train, TrainCase, TrainConfig};

#[derive(Parser)]
#[command(name = "redseg", version, about = "Optic disc/cup segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic cohort on disk.
    GenData(GenDataArgs),
    /// Fuse per-expert contour files into a median consensus contour.
    Fuse(FuseArgs),
    /// Train a mask head on a generated cohort.
    TrainToy(TrainToyArgs),
    /// Compare predicted and ground-truth mask directories.
    Eval(EvalArgs),
    /// Grade vertical CDR from disc/cup masks against cohort labels.
    Grade(GradeArgs),
    /// Train T1, T2 and T3 under one seed and tabulate the loss curves.
    SkipCompare(SkipCompareArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Square image size in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0.2)]
    cdr_min: f64,
    #[arg(long, default_value_t = 0.9)]
    cdr_max: f64,
    /// Additive Gaussian pixel-noise standard deviation.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
}

#[derive(Args)]
struct FuseArgs {
    /// Basename whose `<stem>_expertN.<ext>` siblings hold the experts.
    #[arg(long)]
    base: PathBuf,
    /// Fused contour output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 360)]
    angles: usize,
    /// Optionally rasterize the fused contour to this mask file.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Optionally write the per-angle expert dispersion table.
    #[arg(long)]
    dispersion: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Cohort directory produced by `gen-data`.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints, logs and predictions.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 21)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    iterations: usize,
    #[arg(long, default_value_t = 10)]
    passes: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    /// Initial mixing weight of the BCE term.
    #[arg(long, default_value_t = 0.7)]
    alpha0: f64,
    #[arg(long, default_value_t = 0.011)]
    alpha_step: f64,
    /// Iterations between α decrements.
    #[arg(long, default_value_t = 1)]
    alpha_period: usize,
    #[arg(long, default_value_t = 0.26)]
    alpha_floor: f64,
    /// Encoder channel widths, one per block.
    #[arg(long, value_delimiter = ',', default_values_t = vec![6, 12, 24])]
    channels: Vec<usize>,
    /// Use the literal annealed loss α·bce + (1−α)·iou.
    #[arg(long)]
    strict_paper_loss: bool,
    /// Mask binarization threshold (0-255) for emitted predictions.
    #[arg(long, default_value_t = 127)]
    threshold: u32,
    /// Inputs larger than this are rescaled and zero-padded to it.
    #[arg(long, default_value_t = 1024)]
    max_dim: usize,
}

#[derive(Args)]
struct TrainToyArgs {
    #[command(flatten)]
    flags: TrainFlags,
    /// Skip topology: t1, t2 or t3.
    #[arg(long, default_value = "t3")]
    skip: SkipType,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted masks.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth masks with matching file names.
    #[arg(long)]
    gt: PathBuf,
    /// Metrics table output; one row per image plus a `mean` row.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradeArgs {
    /// Directory with `<id>_disc.pgm` and `<id>_cup.pgm` masks.
    #[arg(long)]
    masks: PathBuf,
    /// Cohort manifest with ground-truth labels.
    #[arg(long)]
    manifest: PathBuf,
    /// CDR table output.
    #[arg(long)]
    out: PathBuf,
    /// Suspect iff CDR >= this (boundary inclusive).
    #[arg(long, default_value_t = 0.5)]
    cdr_threshold: f64,
}

#[derive(Args)]
struct SkipCompareArgs {
    #[command(flatten)]
    flags: TrainFlags,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Fuse(a) => fuse(&a),
        Command::TrainToy(a) => train_toy(&a.flags, a.skip).map(|_| ()),
        Command::Eval(a) => eval(&a),
        Command::Grade(a) => grade_cmd(&a),
        Command::SkipCompare(a) => skip_compare(&a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn case_id(i: usize) -> String {
    format!("case{i:04}")
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let s = args.size as f64;
    let spec = SynthSpec {
        image_size: args.size,
        disc_semi_axes: (0.22 * s, 0.34 * s),
        cdr_range: (args.cdr_min, args.cdr_max),
        noise_sigma: args.noise,
        center_jitter: 0.05 * s,
        ..SynthSpec::default()
    };
    let cases = gen_cohort(&spec, args.count, args.seed)?;
    fs::create_dir_all(&args.out)?;
    let mut manifest = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let id = case_id(i);
        io::write_pgm(
            &args.out.join(format!("{id}.pgm")),
            &io::tensor_to_pgm(&case.image)?,
        )?;
        io::write_mask(&args.out.join(format!("{id}_disc.pgm")), &case.disc_mask)?;
        io::write_mask(&args.out.join(format!("{id}_cup.pgm")), &case.cup_mask)?;
        io::write_contour(&args.out.join(format!("{id}_disc.txt")), &case.disc_contour)?;
        io::write_contour(&args.out.join(format!("{id}_cup.txt")), &case.cup_contour)?;
        manifest.push(io::ManifestEntry {
            id,
            true_cdr: case.true_cdr,
            label: case.suspect as u8,
        });
    }
    io::write_manifest(&args.out.join("manifest.csv"), &manifest)?;
    println!(
        "wrote {} cases to {} ({} suspect)",
        cases.len(),
        args.out.display(),
        manifest.iter().filter(|e| e.label == 1).count()
    );
    Ok(())
}

fn fuse(args: &FuseArgs) -> Result<()> {
    let files = io::find_expert_files(&args.base)?;
    let mut contours = Vec::with_capacity(files.len());
    for f in &files {
        contours.push(io::read_contour(f)?);
    }
    let fused = median_fuse(&contours, args.angles)?;
    io::write_contour(&args.out, &fused.contour)?;
    if let Some(mask_path) = &args.mask {
        let mask = rasterize(&fused.contour, args.width, args.height)?;
        io::write_mask(mask_path, &mask)?;
    }
    if let Some(disp_path) = &args.dispersion {
        io::write_dispersion(disp_path, &fused.dispersion)?;
    }
    println!(
        "fused {} experts at {} angles into {}",
        files.len(),
        args.angles,
        args.out.display()
    );
    Ok(())
}

/// Loads `(id, case)` pairs from a `gen-data` directory, applying the
/// scale-and-pad rule when an image exceeds `max_dim`.
fn load_dataset(dir: &Path, max_dim: usize) -> Result<Vec<(String, TrainCase)>> {
    let manifest = io::read_manifest(&dir.join("manifest.csv"))?;
    let mut out = Vec::with_capacity(manifest.len());
    for entry in &manifest {
        let id = &entry.id;
        let image = io::read_pgm(&dir.join(format!("{id}.pgm")))?.to_tensor()?;
        let disc = io::read_mask(&dir.join(format!("{id}_disc.pgm")))?;
        let cup = io::read_mask(&dir.join(format!("{id}_cup.pgm")))?;
        let (h, w) = (image.shape()[1], image.shape()[2]);
        let mut target_data = Vec::with_capacity(2 * h * w);
        for m in [&disc, &cup] {
            target_data.extend(m.data().iter().map(|&v| if v != 0 { 1.0 } else { 0.0 }));
        }
        let target = Tensor::new(vec![2, h, w], target_data)?;
        let (image, target) = if h.max(w) > max_dim {
            let (img, _) = resize_pad(&image, max_dim)?;
            let (tgt, _) = resize_pad(&target, max_dim)?;
            (img, tgt)
        } else if h != w {
            return Err(Error::Config(format!(
                "case {id} is {h}x{w}; non-square inputs need --max-dim <= {}",
                h.max(w)
            )));
        } else {
            (image, target)
        };
        out.push((
            id.clone(),
            TrainCase {
                image,
                target,
            },
        ));
    }
    Ok(out)
}

fn train_config(flags: &TrainFlags, skip: SkipType, input_size: usize) -> Result<TrainConfig> {
    Ok(TrainConfig {
        iterations: flags.iterations,
        passes_per_iteration: flags.passes,
        batch_size: flags.batch,
        learning_rate: flags.lr,
        weight_decay: flags.weight_decay,
        alpha: AlphaSchedule::new(
            flags.alpha0,
            flags.alpha_step,
            flags.alpha_period,
            flags.alpha_floor,
        )?,
        skip_type: skip,
        seed: flags.seed,
        strict_paper_loss: flags.strict_paper_loss,
        model: MaskHeadConfig {
            input_size,
            blocks: flags.channels.len(),
            channels: flags.channels.clone(),
            ..MaskHeadConfig::default()
        },
        ..TrainConfig::default()
    })
}

fn train_toy(flags: &TrainFlags, skip: SkipType) -> Result<f64> {
    let dataset = load_dataset(&flags.data, flags.max_dim)?;
    let input_size = dataset
        .first()
        .map(|(_, c)| c.image.shape()[1])
        .ok_or_else(|| Error::Config("empty dataset".into()))?;
    let cfg = train_config(flags, skip, input_size)?;
    let cases: Vec<TrainCase> = dataset.iter().map(|(_, c)| c.clone()).collect();
    let (model, log) = train(&cfg, &cases)?;
    fs::create_dir_all(&flags.out)?;
    model.save_file(&flags.out.join(format!("model_{skip}.redh1")))?;
    io::write_train_log(&flags.out.join(format!("trainlog_{skip}.csv")), &log)?;

    // emit holdout predictions for `eval`
    let ids: Vec<String> = dataset.iter().map(|(id, _)| id.clone()).collect();
    let (_, _, holdout_ids) = split_dataset(&ids, cfg.split, cfg.seed)?;
    let pred_dir = flags.out.join("pred");
    fs::create_dir_all(&pred_dir)?;
    let by_id: BTreeMap<&str, &TrainCase> =
        dataset.iter().map(|(id, c)| (id.as_str(), c)).collect();
    for id in &holdout_ids {
        let case = by_id[id.as_str()];
        let probs = model.infer(&case.image)?;
        let masks = predict_mask(&probs, flags.threshold)?;
        io::write_mask(&pred_dir.join(format!("{id}_disc.pgm")), &masks[0])?;
        io::write_mask(&pred_dir.join(format!("{id}_cup.pgm")), &masks[1])?;
    }
    let final_val = log.final_val_loss().unwrap_or(f64::NAN);
    println!(
        "{skip}: {} iterations, final val loss {final_val:.6}, predictions for {} holdout cases in {}",
        cfg.iterations,
        holdout_ids.len(),
        pred_dir.display()
    );
    Ok(final_val)
}

fn mask_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
            if name.ends_with(".pgm") {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

fn eval(args: &EvalArgs) -> Result<()> {
    let pred_names = mask_files(&args.pred)?;
    let gt_names: std::collections::BTreeSet<String> =
        mask_files(&args.gt)?.into_iter().collect();
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut reports = Vec::new();
    for name in &pred_names {
        if !gt_names.contains(name) {
            continue;
        }
        let pred = io::read_mask(&args.pred.join(name))?;
        let gt = io::read_mask(&args.gt.join(name))?;
        let r = report(&confusion(&pred, &gt)?);
        reports.push(r);
        rows.push((name.trim_end_matches(".pgm").to_string(), r));
    }
    if rows.is_empty() {
        return Err(Error::Evaluation(
            "no mask file names shared between the two directories".into(),
        ));
    }
    let agg = aggregate(&reports)?;
    rows.push(("mean".to_string(), agg.mean));
    io::write_metrics_table(&args.out, &rows)?;
    let fmt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    };
    println!(
        "{} images; mean dice {} jaccard {} (table: {})",
        reports.len(),
        fmt(agg.mean.dice),
        fmt(agg.mean.jaccard),
        args.out.display()
    );
    Ok(())
}

fn grade_cmd(args: &GradeArgs) -> Result<()> {
    let manifest = io::read_manifest(&args.manifest)?;
    let mut rows = Vec::with_capacity(manifest.len());
    let mut predicted = Vec::with_capacity(manifest.len());
    let mut truth = Vec::with_capacity(manifest.len());
    for entry in &manifest {
        let id = &entry.id;
        let disc = io::read_mask(&args.masks.join(format!("{id}_disc.pgm")))?;
        let cup = io::read_mask(&args.masks.join(format!("{id}_cup.pgm")))?;
        let rec = vertical_cdr(&disc, &cup, args.cdr_threshold)?;
        predicted.push(rec.grade);
        truth.push(if entry.label == 1 {
            Grade::Suspect
        } else {
            Grade::Normal
        });
        rows.push((id.clone(), rec));
    }
    io::write_cdr_table(&args.out, &rows)?;
    let rep = grading_report(&predicted, &truth)?;
    let fmt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    };
    println!(
        "{} cases: se {} sp {} oca {:.4} (tp {} fp {} tn {} fn {})",
        rows.len(),
        fmt(rep.sensitivity),
        fmt(rep.specificity),
        rep.accuracy,
        rep.tp,
        rep.fp,
        rep.tn,
        rep.fn_
    );
    Ok(())
}

fn skip_compare(args: &SkipCompareArgs) -> Result<()> {
    let mut logs = Vec::new();
    for skip in SkipType::all() {
        train_toy(&args.flags, skip)?;
        let log = io::read_train_log(
            &args.flags.out.join(format!("trainlog_{skip}.csv")),
        )?;
        logs.push((skip, log));
    }
    let n = logs[0].1.records.len();
    let header = [
        "iteration", "alpha", "t1_train", "t1_val", "t2_train", "t2_val", "t3_train", "t3_val",
    ];
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let base = &logs[0].1.records[i];
        let mut row = vec![base.iteration.to_string(), base.alpha.to_string()];
        for (_, log) in &logs {
            let r = &log.records[i];
            row.push(r.train_loss.to_string());
            row.push(r.val_loss.to_string());
        }
        rows.push(row);
    }
    let table = args.flags.out.join("skip_compare.csv");
    io::write_records(&table, &header, &rows)?;
    for (skip, log) in &logs {
        println!(
            "{skip}: final validation loss {:.6}",
            log.final_val_loss().unwrap_or(f64::NAN)
        );
    }
    println!("curve table: {}", table.display());
    Ok(())
}
