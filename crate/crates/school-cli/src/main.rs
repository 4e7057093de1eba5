//! `school` — train and evaluate silhouette-driven schooling policies.
//!
//! Exit codes: 0 success, 1 usage error, 2 missing artifact, 3 numeric
//! failure.

use clap::{Parser, Subcommand};
use school_cli::config::EngineConfig;
use school_cli::error::{CliError, Result};
use school_cli::pipeline::{self, GenPattern};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "school", version, about = "silhouette-driven collective-motion imitation pipeline")]
struct Cli {
    /// Engine configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate reference (or random "rendered") footage with a rule-based controller.
    GenReference {
        /// clockwise_circle | counter_clockwise_circle | align | aggregate | random
        #[arg(long)]
        pattern: String,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the masked video autoencoder on clip archives or frame directories.
    TrainMvae {
        /// Clip archive or PGM frame directory; repeatable.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training-curve CSV (epoch, recon, kl, total).
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Cluster reference latents and derive the frequency weights.
    BuildClusters {
        #[arg(long)]
        mvae: PathBuf,
        #[arg(long, value_name = "DIR")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reduced 2D points CSV (x, y, cluster).
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Train the shared policy with adversarial imitation plus task rewards.
    TrainPolicy {
        #[arg(long)]
        mvae: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long, value_name = "DIR")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Resume from an existing policy checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Roll out a trained policy to a trajectory JSONL (and optional clips).
    Rollout {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        mvae: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        /// Dump the rendered clips into this archive directory.
        #[arg(long)]
        dump_clips: Option<PathBuf>,
        /// Number of agents (defaults to the config value).
        #[arg(long)]
        agents: Option<usize>,
        /// Use the mean action instead of sampling.
        #[arg(long, default_value_t = false)]
        deterministic: bool,
    },
    /// Compare generated footage against reference footage.
    Eval {
        #[arg(long)]
        mvae: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long, value_name = "DIR")]
        reference: PathBuf,
        #[arg(long, value_name = "DIR")]
        generated: PathBuf,
        /// Trajectory JSONL of the generated side (APD, task return).
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project clip latents to 2D and write a plotting CSV.
    ExportEmbedding {
        #[arg(long)]
        mvae: PathBuf,
        /// label=clip-dir; repeatable.
        #[arg(long, required = true)]
        input: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<EngineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <file> is required".into()))?;
    let mut cfg = EngineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.apply_threads();
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenReference { pattern, steps, out } => {
            pipeline::print_run_header("gen-reference", &cfg);
            let pattern = GenPattern::parse(pattern)?;
            let r = pipeline::cmd_gen_reference(&cfg, pattern, *steps, out, cli.seed)?;
            println!("[school] wrote {} clips from {} steps to {}", r.clip_count, r.steps, out.display());
        }
        Command::TrainMvae { data, out, curve } => {
            pipeline::print_run_header("train-mvae", &cfg);
            let dirs: Vec<&std::path::Path> = data.iter().map(|p| p.as_path()).collect();
            let r = pipeline::cmd_train_mvae(&cfg, &dirs, out, curve.as_deref())?;
            println!(
                "[school] trained on {} clips: recon {:.6} -> {:.6}",
                r.clip_count, r.first.recon, r.last.recon
            );
        }
        Command::BuildClusters { mvae, reference, out, points } => {
            pipeline::print_run_header("build-clusters", &cfg);
            pipeline::cmd_build_clusters(&cfg, mvae, reference, out, points.as_deref())?;
        }
        Command::TrainPolicy { mvae, clusters, reference, out, log, resume } => {
            pipeline::print_run_header("train-policy", &cfg);
            let logs = pipeline::cmd_train_policy(
                &cfg,
                mvae,
                clusters,
                reference,
                out,
                log.as_deref(),
                resume.as_deref(),
            )?;
            if let Some(last) = logs.last() {
                println!(
                    "[school] finished after {} iterations; mean reward {:.4}, js {:.4}",
                    logs.len(),
                    last.mean_total,
                    last.js_to_reference
                );
            }
        }
        Command::Rollout { policy, mvae, clusters, steps, out, dump_clips, agents, deterministic } => {
            pipeline::print_run_header("rollout", &cfg);
            let r = pipeline::cmd_rollout(
                &cfg,
                policy,
                mvae,
                clusters,
                *steps,
                cli.seed.unwrap_or(cfg.seed),
                *agents,
                *deterministic,
                out,
                dump_clips.as_deref(),
            )?;
            println!(
                "[school] rolled {} steps ({} records, {} clips) into {}",
                r.env_steps,
                r.records,
                r.clip_count,
                out.display()
            );
        }
        Command::Eval { mvae, clusters, reference, generated, trajectory, out } => {
            pipeline::print_run_header("eval", &cfg);
            pipeline::cmd_eval(&cfg, mvae, clusters, reference, generated, trajectory, out.as_deref())?;
        }
        Command::ExportEmbedding { mvae, input, out } => {
            pipeline::print_run_header("export-embedding", &cfg);
            let mut inputs = Vec::new();
            for spec in input {
                let (label, dir) = spec.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("--input must look like label=dir, got {spec:?}"))
                })?;
                inputs.push((label.to_string(), std::path::Path::new(dir)));
            }
            let inputs_ref: Vec<(String, &std::path::Path)> =
                inputs.iter().map(|(l, p)| (l.clone(), *p)).collect();
            let n = pipeline::cmd_export_embedding(&cfg, mvae, &inputs_ref, out)?;
            println!("[school] embedded {n} clips into {}", out.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's default exit code for usage errors is 2; this tool
            // reserves 2 for missing artifacts
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
