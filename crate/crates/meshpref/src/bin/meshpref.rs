//! Command-line entry point wiring the library into reproducible
//! pipelines. Every subcommand that writes a primary output also writes a
//! `<output>.manifest.json` with the flag set, the seed, and SHA-256
//! digests of inputs and outputs.
//!
//! Exit codes: 0 on success, 1 on domain errors (a one-line machine
//! parsable `E_*` code goes to stderr), 2 on usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use meshpref::csdiv::{cs_divergence, cs_divergence_grad, EmbeddingBatch, KernelConfig};
use meshpref::error::{Error, Result};
use meshpref::features;
use meshpref::guidance::{self, GuidanceSchedule, QuadraticAnchor};
use meshpref::manifest::RunManifest;
use meshpref::mesh;
use meshpref::obj;
use meshpref::prep::{self, FusionConfig};
use meshpref::reward::{self, TrainConfig};
use meshpref::synth;
use meshpref::theorem::{self, Scenario};

#[derive(Parser)]
#[command(
    name = "meshpref",
    version,
    about = "Mesh preference pipeline: preprocessing, divergence, reward training, guidance"
)]
struct Cli {
    /// Cap on internal parallelism. All computation is sequential and
    /// deterministic, so results are independent of this value.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quadric edge-collapse simplification to a face budget
    Simplify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = mesh::FACE_CAPACITY)]
        target_faces: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normal-driven adaptive face fusion toward the patch capacity
    Fuse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.99)]
        threshold: f64,
        #[arg(long, default_value_t = mesh::FACE_CAPACITY)]
        target_faces: usize,
        #[arg(long, default_value_t = 32)]
        max_passes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition faces into the 256 x 64 patch grid
    Patchify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-face 10-dimensional geometric features
    Featurize {
        #[arg(long)]
        input: PathBuf,
        /// Output format: mpf1 (binary) or csv
        #[arg(long, default_value = "mpf1")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Empirical Cauchy-Schwarz divergence between two embedding files
    Csdiv {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// Explicit positive bandwidth, or "median"
        #[arg(long, default_value = "median")]
        bandwidth: String,
        /// Also emit analytic gradients
        #[arg(long, default_value_t = false)]
        grad: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired-vs-unpaired divergence gap ladder
    Theorem1 {
        /// Comma-separated sample sizes
        #[arg(long, default_value = "50,100,200,400,800,1600,3200")]
        sizes: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic preference dataset
    GenSynthetic {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the reward model on a dataset directory
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-epoch loss history JSON
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score a mesh against a prompt with trained parameters
    Score {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reward-guided vertex deformation
    Guide {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 10.0)]
        alpha_start: f64,
        #[arg(long, default_value_t = 20.0)]
        alpha_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Quadratic anchor weight of the base objective
        #[arg(long, default_value_t = 1.0)]
        anchor_weight: f64,
        #[arg(long)]
        out: PathBuf,
        /// Optional trajectory JSON
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Structural validation report for a mesh
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_mesh(path: &Path) -> Result<mesh::TriangleMesh> {
    obj::parse_obj(&std::fs::read(path)?)
}

fn read_embeddings(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(features::MPF1_MAGIC) {
        features::read_mpf1(&bytes[..])
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Format("embedding file is neither MPF1 nor UTF-8 CSV".into()))?;
        features::read_csv(text)
    }
}

fn parse_bandwidth(s: &str) -> Result<KernelConfig> {
    if s == "median" {
        Ok(KernelConfig::Median)
    } else {
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Format(format!("bad bandwidth '{s}'")))?;
        Ok(KernelConfig::Explicit(v))
    }
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<Option<Vec<u8>>> {
    let bytes = serde_json::to_vec_pretty(value)?;
    match out {
        Some(path) => {
            std::fs::write(path, &bytes)?;
            Ok(Some(bytes))
        }
        None => {
            println!("{}", String::from_utf8_lossy(&bytes));
            Ok(None)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simplify {
            input,
            target_faces,
            out,
        } => {
            let mut m = RunManifest::new("simplify")
                .flag("input", input.display())
                .flag("target-faces", target_faces)
                .flag("out", out.display());
            m.record_input(&input)?;
            let result = prep::qem_simplify(&read_mesh(&input)?, target_faces)?;
            std::fs::write(&out, obj::write_obj(&result))?;
            m.record_output(&out)?;
            m.write_alongside(&out)
        }
        Command::Fuse {
            input,
            threshold,
            target_faces,
            max_passes,
            out,
        } => {
            let mut m = RunManifest::new("fuse")
                .flag("input", input.display())
                .flag("threshold", threshold)
                .flag("target-faces", target_faces)
                .flag("max-passes", max_passes)
                .flag("out", out.display());
            m.record_input(&input)?;
            let cfg = FusionConfig {
                normal_similarity_threshold: threshold,
                target_faces,
                max_passes,
            };
            let result = prep::adaptive_fuse(&read_mesh(&input)?, &cfg)?;
            std::fs::write(&out, obj::write_obj(&result))?;
            m.record_output(&out)?;
            m.write_alongside(&out)
        }
        Command::Patchify { input, out } => {
            let mut m = RunManifest::new("patchify")
                .flag("input", input.display())
                .flag("out", out.display());
            m.record_input(&input)?;
            let mesh_in = read_mesh(&input)?;
            let feats = features::featurize(&mesh_in)?;
            let (_, assignment) = prep::patchify(&mesh_in, &feats)?;
            emit_json(&assignment, Some(&out))?;
            m.record_output(&out)?;
            m.write_alongside(&out)
        }
        Command::Featurize { input, format, out } => {
            let mut m = RunManifest::new("featurize")
                .flag("input", input.display())
                .flag("format", &format)
                .flag("out", out.display());
            m.record_input(&input)?;
            let mesh_in = read_mesh(&input)?;
            let feats: Vec<Vec<f64>> = features::featurize(&mesh_in)?
                .into_iter()
                .map(|row| row.to_vec())
                .collect();
            let mut buf = Vec::new();
            match format.as_str() {
                "mpf1" => features::write_mpf1(&mut buf, &feats, features::FEATURE_DIM)?,
                "csv" => features::write_csv(&mut buf, &feats)?,
                other => {
                    return Err(Error::Format(format!(
                        "unknown feature format '{other}' (expected mpf1 or csv)"
                    )))
                }
            }
            std::fs::write(&out, buf)?;
            m.record_output(&out)?;
            m.write_alongside(&out)
        }
        Command::Csdiv {
            x,
            y,
            bandwidth,
            grad,
            out,
        } => {
            let mut m = RunManifest::new("csdiv")
                .flag("x", x.display())
                .flag("y", y.display())
                .flag("bandwidth", &bandwidth)
                .flag("grad", grad);
            m.record_input(&x)?;
            m.record_input(&y)?;
            let bx = EmbeddingBatch::from_rows(&read_embeddings(&x)?)?;
            let by = EmbeddingBatch::from_rows(&read_embeddings(&y)?)?;
            let cfg = parse_bandwidth(&bandwidth)?;
            let report = if grad {
                cs_divergence_grad(&bx, &by, cfg)?
            } else {
                cs_divergence(&bx, &by, cfg)?
            };
            emit_json(&report, out.as_deref())?;
            if let Some(out) = out {
                m.record_output(&out)?;
                m.write_alongside(&out)?;
            }
            Ok(())
        }
        Command::Theorem1 {
            sizes,
            trials,
            seed,
            out,
        } => {
            let mut m = RunManifest::new("theorem1")
                .flag("sizes", &sizes)
                .flag("trials", trials)
                .flag("out", out.display())
                .seed(seed);
            let sizes: Vec<usize> = sizes
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad size '{s}'")))
                })
                .collect::<Result<_>>()?;
            let report = theorem::run_theorem1(&sizes, trials, seed, &Scenario::default())?;
            emit_json(&report, Some(&out))?;
            m.record_output(&out)?;
            m.write_alongside(&out)
        }
        Command::GenSynthetic { n, seed, out } => {
            let mut m = RunManifest::new("gen-synthetic")
                .flag("n", n)
                .flag("out", out.display())
                .seed(seed);
            let dataset = synth::gen_dataset(n, seed)?;
            synth::save_dataset(&dataset, &out)?;
            let manifest_path = out.join("manifest.json");
            m.record_output(&manifest_path)?;
            m.write_alongside(&manifest_path)
        }
        Command::Train {
            data,
            lambda,
            lr,
            epochs,
            seed,
            out,
            history,
        } => {
            let mut m = RunManifest::new("train")
                .flag("data", data.display())
                .flag("lambda", lambda)
                .flag("lr", lr)
                .flag("epochs", epochs)
                .flag("out", out.display())
                .seed(seed);
            m.record_input(&data.join("manifest.json"))?;
            let dataset = synth::load_dataset(&data)?;
            let cfg = TrainConfig {
                lambda,
                lr,
                epochs,
                seed,
                ..TrainConfig::default()
            };
            let (params, hist) = reward::train(&dataset, &cfg)?;
            std::fs::write(&out, params.to_json()?)?;
            m.record_output(&out)?;
            if let Some(history) = history {
                emit_json(&hist, Some(&history))?;
                m.record_output(&history)?;
            }
            m.write_alongside(&out)
        }
        Command::Score {
            params,
            mesh,
            prompt,
            out,
        } => {
            let mut m = RunManifest::new("score")
                .flag("params", params.display())
                .flag("mesh", mesh.display())
                .flag("prompt", &prompt);
            m.record_input(&params)?;
            m.record_input(&mesh)?;
            let p = reward::RewardParams::from_json(&std::fs::read(&params)?)?;
            let mesh_in = read_mesh(&mesh)?;
            let value = reward::score(&p, &mesh_in, &prompt)?;
            emit_json(&serde_json::json!({ "score": value }), out.as_deref())?;
            if let Some(out) = out {
                m.record_output(&out)?;
                m.write_alongside(&out)?;
            }
            Ok(())
        }
        Command::Guide {
            mesh,
            prompt,
            params,
            steps,
            alpha_start,
            alpha_end,
            lr,
            anchor_weight,
            out,
            trace,
        } => {
            let mut m = RunManifest::new("guide")
                .flag("mesh", mesh.display())
                .flag("prompt", &prompt)
                .flag("params", params.display())
                .flag("steps", steps)
                .flag("alpha-start", alpha_start)
                .flag("alpha-end", alpha_end)
                .flag("lr", lr)
                .flag("anchor-weight", anchor_weight)
                .flag("out", out.display());
            m.record_input(&mesh)?;
            m.record_input(&params)?;
            let p = reward::RewardParams::from_json(&std::fs::read(&params)?)?;
            let base_mesh = read_mesh(&mesh)?;
            if base_mesh.face_count() > mesh::FACE_CAPACITY {
                return Err(Error::Capacity {
                    faces: base_mesh.face_count(),
                    capacity: mesh::FACE_CAPACITY,
                });
            }
            let text = reward::text_featurize(&prompt, reward::DEFAULT_TEXT_SEED);
            let schedule = GuidanceSchedule {
                alpha_start,
                alpha_end,
                total_steps: steps,
            };
            let anchor = QuadraticAnchor {
                weight: anchor_weight,
            };
            let (final_mesh, state) =
                guidance::guide_optimize(&base_mesh, &text, &p, &schedule, &anchor, lr)?;
            std::fs::write(&out, obj::write_obj(&final_mesh))?;
            m.record_output(&out)?;
            if let Some(trace) = trace {
                emit_json(&state, Some(&trace))?;
                m.record_output(&trace)?;
            }
            m.write_alongside(&out)
        }
        Command::Validate { input, out } => {
            let mut m = RunManifest::new("validate").flag("input", input.display());
            m.record_input(&input)?;
            let report = mesh::validate(&read_mesh(&input)?);
            emit_json(&report, out.as_deref())?;
            if let Some(out) = out {
                m.record_output(&out)?;
                m.write_alongside(&out)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // the --threads flag is accepted for interface stability; execution is
    // sequential, so any value yields identical results
    let _ = cli.threads;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}: {err}", err.code());
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
