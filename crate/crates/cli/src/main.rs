//! Command-line front end: track a sequence, evaluate results, synthesize
//! test sequences, and run the three-variant ablation.
//!
//! Exit codes: 0 success, 2 input/validation error, 1 internal error.

use castrack::config::Hyperparams;
use castrack::error::CoreError;
use castrack::gate::GateReason;
use castrack::imaging::BoundingBox;
use castrack::metrics::{precision_curve, success_curve};
use castrack::sequence::{
    draw_box_outline, load_sequence, save_png, save_sequence, synth_sequence, Sequence, SynthSpec,
};
use castrack::tracker::{track_sequence_variant, TrackResult, Variant};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "castrack", version, about = "Cascaded Siamese visual tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Plain-text `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; sets embedding.seed and classifier.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one config key, repeatable: --set gate.gamma_p=0.8
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<Hyperparams, CoreError> {
        let mut hp = match &self.config {
            Some(path) => Hyperparams::from_file(path)?,
            None => Hyperparams::default(),
        };
        if let Some(seed) = self.seed {
            hp.set_master_seed(seed);
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                CoreError::Config(format!("--set expects KEY=VALUE, got '{kv}'"))
            })?;
            hp.apply(k, v)?;
        }
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Track a sequence directory; writes a results file and a manifest.
    Track {
        sequence_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Results file path; the manifest goes to <out>.manifest.json.
        #[arg(long, default_value = "results.txt")]
        out: PathBuf,
        /// Dump annotated frames to <out stem>_render/.
        #[arg(long)]
        render: bool,
    },
    /// Compare a results file against ground truth; writes metric CSVs.
    Eval {
        /// Results file (header line ignored).
        results: PathBuf,
        /// Ground-truth file, one x,y,w,h line per frame.
        gt: PathBuf,
        /// Summary CSV path; curves go to <stem>_precision.csv / _success.csv.
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
    },
    /// Render a synthetic sequence spec (JSON) to a sequence directory.
    Synth {
        spec: PathBuf,
        #[arg(long, default_value = "synth_seq")]
        out_dir: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run matching-only, no-gate and full variants; writes a metrics table.
    Ablate {
        sequence_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Table path; per-variant results go to <stem>_<variant>.txt.
        #[arg(long, default_value = "ablation.csv")]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct ManifestFrame {
    frame: usize,
    /// Top-left convention x,y,w,h.
    bbox: [f32; 4],
    s_m: f32,
    s_c: f32,
    updated: bool,
    reason: Option<&'static str>,
    peak_count: usize,
}

/// Everything needed to reproduce a run bit-for-bit: config snapshot,
/// seeds, and the per-frame outcomes.
#[derive(Serialize)]
struct RunManifest {
    tracker: String,
    sequence: String,
    variant: &'static str,
    config_hash: String,
    seeds: Seeds,
    config: Vec<(String, String)>,
    frames: Vec<ManifestFrame>,
}

#[derive(Serialize)]
struct Seeds {
    embedding: u64,
    classifier: u64,
}

fn reason_str(r: Option<GateReason>) -> Option<&'static str> {
    r.map(|r| r.as_str())
}

fn results_file(results: &[TrackResult], seq_name: &str, hash: &str) -> String {
    let mut out = format!("# castrack {} sequence={seq_name} config={hash}\n", env!("CARGO_PKG_VERSION"));
    for r in results {
        let (x, y, w, h) = r.bbox.to_top_left();
        out.push_str(&format!("{x},{y},{w},{h}\n"));
    }
    out
}

fn build_manifest(
    seq: &Sequence,
    hp: &Hyperparams,
    variant: Variant,
    results: &[TrackResult],
) -> RunManifest {
    RunManifest {
        tracker: format!("castrack {}", env!("CARGO_PKG_VERSION")),
        sequence: seq.name.clone(),
        variant: variant.as_str(),
        config_hash: hp.config_hash(),
        seeds: Seeds {
            embedding: hp.embedding.seed,
            classifier: hp.classifier.seed,
        },
        config: hp.to_key_values(),
        frames: results
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (x, y, w, h) = r.bbox.to_top_left();
                ManifestFrame {
                    frame: i + 1,
                    bbox: [x, y, w, h],
                    s_m: r.s_m,
                    s_c: r.s_c,
                    updated: r.updated,
                    reason: reason_str(r.reason),
                    peak_count: r.peak_count,
                }
            })
            .collect(),
    }
}

fn render_frames(seq: &Sequence, results: &[TrackResult], dir: &Path) -> Result<(), CoreError> {
    std::fs::create_dir_all(dir)?;
    for (i, (frame, r)) in seq.frames.iter().zip(results).enumerate() {
        let mut img = frame.clone();
        if seq.fully_annotated() {
            draw_box_outline(&mut img, &seq.gt_boxes[i], [60.0, 220.0, 60.0], 1);
        }
        draw_box_outline(&mut img, &r.bbox, [240.0, 220.0, 40.0], 2);
        save_png(&img, &dir.join(format!("{:04}.png", i + 1)))?;
    }
    Ok(())
}

/// Parse a results or ground-truth file: `x,y,w,h` lines, `#` lines skipped.
fn load_boxes(path: &Path) -> Result<Vec<BoundingBox>, CoreError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CoreError::Load(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c| c == ',' || c == '\t').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(CoreError::Load(format!(
                "{} line {}: expected x,y,w,h",
                path.display(),
                i + 1
            )));
        }
        let mut v = [0f32; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| {
                CoreError::Load(format!("{} line {}: bad number '{f}'", path.display(), i + 1))
            })?;
        }
        out.push(BoundingBox::from_top_left(v[0], v[1], v[2], v[3])?);
    }
    if out.is_empty() {
        return Err(CoreError::Load(format!("{}: no boxes", path.display())));
    }
    Ok(out)
}

fn cmd_track(
    sequence_dir: &Path,
    config: &ConfigArgs,
    out: &Path,
    render: bool,
) -> Result<(), CoreError> {
    let hp = config.build()?;
    let seq = load_sequence(sequence_dir)?;
    let start = std::time::Instant::now();
    let results = track_sequence_variant(&seq, hp.clone(), Variant::Full)?;
    let elapsed = start.elapsed();
    eprintln!(
        "tracked {} frames in {:.2}s ({:.0} ms/frame)",
        results.len(),
        elapsed.as_secs_f64(),
        elapsed.as_secs_f64() * 1000.0 / results.len() as f64
    );

    let manifest = build_manifest(&seq, &hp, Variant::Full, &results);
    std::fs::write(out, results_file(&results, &seq.name, &hp.config_hash()))?;
    let manifest_path = PathBuf::from(format!("{}.manifest.json", out.display()));
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    if render {
        let stem = out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let dir = out.parent().unwrap_or(Path::new(".")).join(format!("{stem}_render"));
        render_frames(&seq, &results, &dir)?;
        eprintln!("rendered frames to {}", dir.display());
    }
    Ok(())
}

fn cmd_eval(results_path: &Path, gt_path: &Path, out: &Path) -> Result<(), CoreError> {
    let results = load_boxes(results_path)?;
    let gt = load_boxes(gt_path)?;
    let precision = precision_curve(&results, &gt)?;
    let success = success_curve(&results, &gt)?;

    let summary = format!(
        "metric,value\nprecision_at_20,{}\nsuccess_auc,{}\n",
        precision.at_20px, success.auc
    );
    std::fs::write(out, summary)?;
    let stem = out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let parent = out.parent().unwrap_or(Path::new("."));
    std::fs::write(parent.join(format!("{stem}_precision.csv")), precision.curve.to_csv())?;
    std::fs::write(parent.join(format!("{stem}_success.csv")), success.curve.to_csv())?;
    println!("precision_at_20 {}", precision.at_20px);
    println!("success_auc {}", success.auc);
    Ok(())
}

fn cmd_synth(spec_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<(), CoreError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CoreError::Load(format!("cannot read {}: {e}", spec_path.display())))?;
    let mut spec: SynthSpec = serde_json::from_str(&text)
        .map_err(|e| CoreError::InvalidInput(format!("bad synth spec: {e}")))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let seq = synth_sequence(&spec)?;
    save_sequence(&seq, out_dir)?;
    eprintln!("wrote {} frames to {}", seq.frames.len(), out_dir.display());
    Ok(())
}

fn cmd_ablate(sequence_dir: &Path, config: &ConfigArgs, out: &Path) -> Result<(), CoreError> {
    let hp = config.build()?;
    let seq = load_sequence(sequence_dir)?;
    if !seq.fully_annotated() {
        return Err(CoreError::InvalidInput(
            "ablation needs a fully annotated sequence".into(),
        ));
    }
    let mut table = String::from("variant,success_auc,precision_at_20\n");
    let stem = out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let parent = out.parent().unwrap_or(Path::new("."));
    let mut artifacts: Vec<(PathBuf, String)> = Vec::new();
    for variant in [Variant::MatchingOnly, Variant::NoGate, Variant::Full] {
        let results = track_sequence_variant(&seq, hp.clone(), variant)?;
        let boxes: Vec<BoundingBox> = results.iter().map(|r| r.bbox).collect();
        let success = success_curve(&boxes, &seq.gt_boxes)?;
        let precision = precision_curve(&boxes, &seq.gt_boxes)?;
        table.push_str(&format!(
            "{},{},{}\n",
            variant.as_str(),
            success.auc,
            precision.at_20px
        ));
        artifacts.push((
            parent.join(format!("{stem}_{}.txt", variant.as_str())),
            results_file(&results, &seq.name, &hp.config_hash()),
        ));
    }
    // all variants ran; write everything at once
    for (path, content) in artifacts {
        std::fs::write(path, content)?;
    }
    std::fs::write(out, &table)?;
    print!("{table}");
    Ok(())
}

fn run() -> Result<(), CoreError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Track {
            sequence_dir,
            config,
            out,
            render,
        } => cmd_track(sequence_dir, config, out, *render),
        Command::Eval { results, gt, out } => cmd_eval(results, gt, out),
        Command::Synth { spec, out_dir, seed } => cmd_synth(spec, out_dir, *seed),
        Command::Ablate {
            sequence_dir,
            config,
            out,
        } => cmd_ablate(sequence_dir, config, out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
