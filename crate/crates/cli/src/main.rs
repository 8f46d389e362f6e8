use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use footpedal_core::codec::{counts_to_frame, decode_stream, encode_stream, frame_to_counts, SequenceClock};
use footpedal_core::eval::{compare, label_frame};
use footpedal_core::formats::{self, Config, ModelBundle};
use footpedal_core::mapping::{map, ModelKind};
use footpedal_core::mechanics::{reconstruct_statics, StaticsOptions, CELLS};
use footpedal_core::pipeline::{calibrate_bundle, evaluate_bundle, Method};
use footpedal_core::synth::{generate_dataset, Trial};
use footpedal_core::workspace::{monte_carlo_slice, yaw_sweep};
use footpedal_core::{Frame64, Plant};

#[derive(Parser)]
#[command(name = "footpedal", version, about = "Compliant foot interface: simulation, calibration and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo workspace slices as CSV.
    Workspace {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Single slice at this yaw (deg) instead of a sweep.
        #[arg(long)]
        yaw_deg: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Accepted (yaw, x, y) points.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Fit per-subject models of one method.
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// statics, global-ica, local-ica or knn.
        #[arg(long)]
        method: String,
        /// Restrict to these subjects (repeatable).
        #[arg(long = "subject")]
        subjects: Vec<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy report of a model file on a dataset's held-out trials.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Aligned text table.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Side-by-side table of report CSVs; the first is the baseline.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Map the frames of a trial CSV (or stdin) to commands and labels.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        subject: u32,
        /// Trial CSV; `-` reads stdin.
        #[arg(long, default_value = "-")]
        input: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a raw byte stream into a trial CSV.
    ParseFrames {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Encode a trial CSV as a raw byte stream.
    EncodeFrames {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pose and wrench of one frame.
    Fk {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Eight comma-separated cell forces (N).
        #[arg(long, value_delimiter = ',', required = true)]
        forces: Vec<f64>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn plant(cfg: &Config) -> Result<Plant> {
    Ok(cfg.plant.build()?)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let ds = generate_dataset(&plant(&cfg)?, &cfg.dataset, &cfg.noise, seed)?;
            formats::write_dataset(&out, &ds)?;
            println!("wrote {} trials to {}", ds.trials.len(), out.display());
        }
        Command::Workspace { config, seed, yaw_deg, samples, steps, out, points } => {
            let cfg = load_config(&config)?;
            let p = plant(&cfg)?;
            let seed = seed.unwrap_or(cfg.seed);
            let n = samples.unwrap_or(cfg.workspace.samples);
            let slices = match yaw_deg {
                Some(d) => vec![monte_carlo_slice(d.to_radians(), n, &p.geom, &p.springs, seed)],
                None => yaw_sweep(steps.unwrap_or(cfg.workspace.steps), n, &p.geom, &p.springs, seed),
            };
            let mut csv = String::from("yaw_deg,samples,accepted,fraction,area_m2,x_min,x_max,y_min,y_max\n");
            for s in &slices {
                let e = s.extents.map(|e| [e.x_min, e.x_max, e.y_min, e.y_max]);
                let ext = e.map(|v| v.map(|x| x.to_string()).join(",")).unwrap_or_else(|| ",,,".into());
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{ext}",
                    s.yaw.to_degrees(),
                    s.samples,
                    s.points.len(),
                    s.fraction(),
                    s.area
                );
            }
            formats::write_file(&out, &csv)?;
            if let Some(pp) = points {
                let mut text = String::from("yaw_deg,x,y\n");
                for s in &slices {
                    for (x, y) in &s.points {
                        let _ = writeln!(text, "{},{x},{y}", s.yaw.to_degrees());
                    }
                }
                formats::write_file(&pp, &text)?;
            }
            print!("{csv}");
        }
        Command::Calibrate { config, dataset, method, subjects, out } => {
            let cfg = load_config(&config)?;
            let method: Method = method.parse()?;
            let ds = formats::read_dataset(&dataset)?;
            let only = (!subjects.is_empty()).then_some(subjects.as_slice());
            let bundle = calibrate_bundle(&ds, &plant(&cfg)?, method, &cfg.mapping, &cfg.calibration_reps, only)?;
            formats::write_model(&out, &bundle)?;
            for m in &bundle.models {
                let b = m.model.deadbands;
                println!("subject {}: deadbands fx={} fy={} fz={} m={}", m.subject, b.fx, b.fy, b.fz, b.m);
            }
        }
        Command::Evaluate { model, dataset, out, text } => {
            let bundle = formats::read_model(&model)?;
            let ds = formats::read_dataset(&dataset)?;
            let report = evaluate_bundle(&ds, &bundle)?;
            formats::write_file(&out, &report.to_csv())?;
            if let Some(t) = text {
                formats::write_file(&t, &report.to_text())?;
            }
            print!("{}", report.to_text());
        }
        Command::Compare { reports, out, text } => {
            let loaded = reports.iter().map(|p| formats::read_report(p)).collect::<Result<Vec<_>, _>>()?;
            let table = compare(&loaded)?;
            formats::write_file(&out, &table.to_csv())?;
            if let Some(t) = text {
                formats::write_file(&t, &table.to_text())?;
            }
            print!("{}", table.to_text());
        }
        Command::Predict { model, subject, input, out } => {
            let bundle = formats::read_model(&model)?;
            let text = if input == "-" {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s)?;
                s
            } else {
                fs::read_to_string(&input).with_context(|| format!("reading {input}"))?
            };
            let (frames, _) = formats::trial_from_csv(&text, Path::new(&input))?;
            let csv = predict(&bundle, subject, &frames)?;
            match out {
                Some(p) => formats::write_file(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::ParseFrames { config, input, out, diagnostics } => {
            let cfg = load_config(&config)?;
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let (raw, diag) = decode_stream(&bytes);
            let mut clock = SequenceClock::default();
            let (mut saturated, mut underflow) = (0u64, 0u64);
            let frames: Vec<Frame64> = raw
                .iter()
                .map(|r| {
                    let c = counts_to_frame(r, &cfg.codec.channels, &mut clock);
                    saturated += c.saturated.iter().filter(|&&b| b).count() as u64;
                    underflow += c.underflow.iter().filter(|&&b| b).count() as u64;
                    c.frame
                })
                .collect();
            let trial = Trial {
                subject: 0,
                direction: footpedal_core::DirectionLabel::Neutral,
                repetition: 0,
                seed: 0,
                frames,
                truth: None,
            };
            formats::write_trial(&out, &trial)?;
            let report = format!(
                "frames={}\nchecksum_failures={}\nskipped_bytes={}\nsequence_gaps={}\ndropped_frames={}\nsaturated_samples={saturated}\nunderflow_samples={underflow}\n",
                diag.frames, diag.checksum_failures, diag.skipped_bytes, diag.sequence_gaps, diag.dropped_frames
            );
            match diagnostics {
                Some(p) => formats::write_file(&p, &report)?,
                None => eprint!("{report}"),
            }
        }
        Command::EncodeFrames { config, input, out } => {
            let cfg = load_config(&config)?;
            let (frames, _) = formats::read_trial_file(&input)?;
            let raw: Vec<_> = frames
                .iter()
                .enumerate()
                .map(|(k, f)| frame_to_counts(f, k as u8, &cfg.codec.channels))
                .collect();
            fs::write(&out, encode_stream(&raw)).with_context(|| format!("writing {}", out.display()))?;
            println!("encoded {} frames", raw.len());
        }
        Command::Fk { config, forces } => {
            let cfg = load_config(&config)?;
            let p = plant(&cfg)?;
            if forces.len() != CELLS {
                bail!("expected {CELLS} forces, got {}", forces.len());
            }
            let frame = Frame64::new(0.0, std::array::from_fn(|i| forces[i]));
            let opts = StaticsOptions { residual_tolerance: cfg.mapping.residual_tolerance };
            let s = reconstruct_statics(&frame, &p.geom, &p.springs, &opts, None)?;
            println!("x={}\ny={}\nyaw={}\npitch={}", s.pose.x, s.pose.y, s.pose.yaw, s.pose.pitch);
            println!("Fx={}\nFy={}\nFz={}\nM={}", s.wrench.fx, s.wrench.fy, s.wrench.fz, s.wrench.m);
            let iso: Vec<String> = (0..s.isometric.len()).filter(|&i| s.isometric[i]).map(|i| (i + 1).to_string()).collect();
            println!("isometric={}", iso.join(","));
        }
    }
    Ok(())
}

fn predict(bundle: &ModelBundle, subject: u32, frames: &[Frame64]) -> Result<String> {
    let model = bundle
        .for_subject(subject)
        .ok_or_else(|| anyhow!("model file has no subject {subject}"))?;
    let mut csv = String::from("t,Fx,Fy,Fz,M,label\n");
    for f in frames {
        let label = label_frame(f, model)?;
        if matches!(model.kind, ModelKind::Knn { .. }) {
            let _ = writeln!(csv, "{},,,,,{label}", f.t);
        } else {
            let c = map(f, model)?;
            let _ = writeln!(csv, "{},{},{},{},{},{label}", f.t, c.fx, c.fy, c.fz, c.m);
        }
    }
    Ok(csv)
}
