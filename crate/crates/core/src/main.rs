//! Command-line orchestration: trace generation, training, compression,
//! detector benchmarking, simulation, and report rendering.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fetchlab::baseline::{BestOffset, Isb};
use fetchlab::config::RunConfig;
use fetchlab::cstp::CstpController;
use fetchlab::detect::{
    dt_train, evaluate_detections, Detection, DtDetector, Kswin, SoftDtDetector, SoftKswin,
};
use fetchlab::predictor::{
    collect_windows, derive_seed, distill_model, hash_normalize_pc, quantize_model, AmmaModel,
    DistillMode, HeadKind, PageVocab, PhaseModelSet, TrainedPair,
};
use fetchlab::sim::{
    simulate, BoPrefetcher, CstpPrefetcher, IsbPrefetcher, LoopDetector, NonePrefetcher,
    OraclePrefetcher, Prefetcher, SimReport, REPORT_SCHEMA_VERSION,
};
use fetchlab::trace::{generate_synthetic_trace, parse_trace, split_first_iteration, write_trace, Trace, TraceMeta};
use fetchlab::{Error, Result};

#[derive(Parser)]
#[command(name = "fetchlab", about = "Trace-driven laboratory for phase-aware ML prefetching")]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generates the synthetic scatter-gather trace.
    GenTrace,
    /// Trains one delta/page model pair per phase on the first iteration.
    Train,
    /// Distills the per-phase delta teachers into one small student.
    Distill,
    /// Quantizes a trained model and prints the storage report.
    Quantize {
        /// Checkpoint to quantize; defaults to the phase-0 delta model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Scores every detector against the trace's ground-truth transitions.
    DetectBench,
    /// Replays the evaluation trace through the configured prefetchers.
    Simulate {
        /// Comma-separated prefetcher list overriding the config.
        #[arg(long, value_delimiter = ',')]
        prefetcher: Option<Vec<String>>,
    },
    /// Renders a comparison table from SimReport files.
    Report {
        /// Report files, in column order.
        files: Vec<PathBuf>,
        /// Emit CSV instead of the aligned text table.
        #[arg(long)]
        csv: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Report { files, csv } = &cli.command {
        return cmd_report(files, *csv);
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::GenTrace => cmd_gen_trace(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Distill => cmd_distill(&cfg),
        Command::Quantize { model } => cmd_quantize(&cfg, model.as_deref()),
        Command::DetectBench => cmd_detect_bench(&cfg),
        Command::Simulate { prefetcher } => cmd_simulate(&cfg, prefetcher),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn trace_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_root().join(&cfg.paths.trace_file)
}

fn model_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_root().join(&cfg.paths.model_dir)
}

fn report_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_root().join(&cfg.paths.report_dir)
}

fn load_trace(cfg: &RunConfig) -> Result<Trace> {
    let path = trace_path(cfg);
    if !path.exists() {
        return Err(Error::Config(format!(
            "trace file {} not found; run gen-trace first",
            path.display()
        )));
    }
    parse_trace(&path, &TraceMeta::default())
}

fn cmd_gen_trace(cfg: &RunConfig) -> Result<()> {
    let trace = generate_synthetic_trace(
        &cfg.synth.to_synth_config(),
        derive_seed(cfg.seed, "trace", 0),
    )?;
    let path = trace_path(cfg);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_trace(&path, &trace)?;
    println!(
        "wrote {} accesses ({} phases, {} transitions) to {}",
        trace.len(),
        trace.meta.num_phases,
        trace.meta.transition_truth.len(),
        path.display()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let trace = load_trace(cfg)?;
    let (train_part, _eval) = split_first_iteration(&trace)?;
    let amma = cfg.predictor.to_amma_config();
    let hyper = cfg.train.to_hyper(derive_seed(cfg.seed, "train", 0));
    let set = fetchlab::predictor::train_phase_models(&train_part, &amma, &hyper)?;

    let dir = model_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    set.vocab.save(&dir.join("vocab.txt"))?;
    let mut pairs = set.pairs;
    let mut losses = String::from("phase,model,epoch,loss\n");
    for pair in &mut pairs {
        let p = pair.phase.expect("phase-trained pair");
        pair.delta.save(&dir.join(format!("delta_phase{p}.ckpt")), &BTreeMap::new())?;
        pair.page.save(&dir.join(format!("page_phase{p}.ckpt")), &BTreeMap::new())?;
        for (e, l) in pair.delta_losses.iter().enumerate() {
            losses.push_str(&format!("{p},delta,{e},{l:.6}\n"));
        }
        for (e, l) in pair.page_losses.iter().enumerate() {
            losses.push_str(&format!("{p},page,{e},{l:.6}\n"));
        }
        println!(
            "phase {p}: delta loss {:?} page loss {:?}",
            pair.delta_losses, pair.page_losses
        );
    }
    std::fs::write(dir.join("losses.csv"), losses)?;
    println!("models written to {}", dir.display());
    Ok(())
}

/// Loads the trained per-phase pairs and vocabulary from the model dir.
fn load_model_set(cfg: &RunConfig, num_phases: usize) -> Result<PhaseModelSet> {
    let dir = model_dir(cfg);
    let vocab = PageVocab::load(&dir.join("vocab.txt"))
        .map_err(|e| Error::Config(format!("cannot load vocabulary: {e}; run train first")))?;
    let mut pairs = Vec::with_capacity(num_phases);
    for p in 0..num_phases {
        let delta_path = dir.join(format!("delta_phase{p}.ckpt"));
        let page_path = dir.join(format!("page_phase{p}.ckpt"));
        for path in [&delta_path, &page_path] {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "missing model for phase {p}: {}",
                    path.display()
                )));
            }
        }
        let (delta, _) = AmmaModel::load(&delta_path)?;
        let (page, _) = AmmaModel::load(&page_path)?;
        pairs.push(TrainedPair {
            phase: Some(p as u8),
            delta,
            page,
            delta_losses: Vec::new(),
            page_losses: Vec::new(),
        });
    }
    Ok(PhaseModelSet { pairs, vocab })
}

fn cmd_distill(cfg: &RunConfig) -> Result<()> {
    let trace = load_trace(cfg)?;
    let (train_part, _eval) = split_first_iteration(&trace)?;
    let mut set = load_model_set(cfg, train_part.meta.num_phases)?;
    let teacher_cfg = set.pairs[0].delta.cfg.clone();
    let student_cfg = cfg.train.student_config(&teacher_cfg);
    let hyper = cfg.train.to_hyper(derive_seed(cfg.seed, "distill", 0));
    let windows = collect_windows(&train_part, &student_cfg, None);
    let bits = match set.pairs[0].delta.head_kind {
        HeadKind::DeltaSigmoid { bits } => bits,
        _ => return Err(Error::Config("phase-0 delta checkpoint has wrong head".into())),
    };
    let teachers: Vec<&AmmaModel> = set.pairs.iter().map(|p| &p.delta).collect();
    let mut student = distill_model(
        &DistillMode::PerPhase(teachers),
        &student_cfg,
        HeadKind::DeltaSigmoid { bits },
        &train_part,
        &set.vocab,
        &windows,
        &hyper,
        cfg.train.distill_temperature,
    )?;
    let student_params = {
        use fetchlab::nn::HasParams;
        student.param_count()
    };
    let teacher_params = {
        use fetchlab::nn::HasParams;
        set.pairs[0].delta.param_count()
    };
    let dir = model_dir(cfg);
    student.save(&dir.join("student_delta.ckpt"), &BTreeMap::new())?;
    println!(
        "teacher {} params, student {} params ({:.1}x reduction)",
        teacher_params,
        student_params,
        teacher_params as f64 / student_params as f64
    );
    Ok(())
}

fn cmd_quantize(cfg: &RunConfig, model: Option<&Path>) -> Result<()> {
    let default_path = model_dir(cfg).join("delta_phase0.ckpt");
    let path = model.unwrap_or(&default_path);
    let (mut m, _) = AmmaModel::load(path)?;
    let (_, report) = quantize_model(&mut m);
    println!(
        "quantized {}: {} tensors, {} params, payload {} B + overhead {} B = {} B",
        path.display(),
        report.tensors,
        report.params,
        report.payload_bytes,
        report.overhead_bytes,
        report.total_bytes
    );
    Ok(())
}

/// Trains the DT phase classifier on the first iteration's hashed-PC
/// windows.
fn train_pc_tree(train_part: &Trace, t_len: usize) -> Result<fetchlab::detect::DecisionTree> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in t_len - 1..train_part.len() {
        let window = &train_part.accesses[t + 1 - t_len..=t];
        let Some(phase) = window.last().and_then(|a| a.phase) else {
            return Err(Error::Train("decision-tree detector needs a labeled trace".into()));
        };
        if window.iter().all(|a| a.phase == Some(phase)) {
            xs.push(window.iter().map(|a| hash_normalize_pc(a.pc)).collect());
            ys.push(phase as usize);
        }
    }
    dt_train(&xs, &ys)
}

fn cmd_detect_bench(cfg: &RunConfig) -> Result<()> {
    let trace = load_trace(cfg)?;
    let (train_part, _eval) = split_first_iteration(&trace)?;
    let t_len = cfg.predictor.history_t;
    let tree = train_pc_tree(&train_part, t_len)?;
    let lag = cfg.detector.effective_lag();
    let kcfg = cfg.detector.to_kswin_config(derive_seed(cfg.seed, "detector", 0));

    let mut rows = Vec::new();
    for kind in ["kswin", "soft_kswin", "dt", "soft_dt"] {
        let mut detections: Vec<Detection> = Vec::new();
        match kind {
            "kswin" => {
                let mut d = Kswin::new(kcfg.clone())?;
                for a in &trace.accesses {
                    detections.extend(d.update(hash_normalize_pc(a.pc)));
                }
            }
            "soft_kswin" => {
                let mut d = SoftKswin::new(kcfg.clone())?;
                for a in &trace.accesses {
                    detections.extend(d.update(hash_normalize_pc(a.pc)));
                }
            }
            "dt" | "soft_dt" => {
                let mut hard = DtDetector::new(tree.clone());
                let mut soft = SoftDtDetector::new(tree.clone(), cfg.detector.dt_queue)?;
                let mut window: VecDeque<f64> = VecDeque::new();
                for (i, a) in trace.accesses.iter().enumerate() {
                    window.push_back(hash_normalize_pc(a.pc));
                    if window.len() > t_len {
                        window.pop_front();
                    }
                    if window.len() == t_len {
                        let feats: Vec<f64> = window.iter().copied().collect();
                        let fired = if kind == "dt" {
                            hard.update(&feats)
                        } else {
                            soft.update(&feats)
                        };
                        if let Some(mut det) = fired {
                            det.index = i;
                            detections.push(det);
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        let scores = evaluate_detections(&detections, &trace.meta.transition_truth, lag);
        rows.push((kind, scores));
    }
    println!(
        "{:<12} {:>10} {:>8} {:>8} {:>8} {:>8}",
        "detector", "detected", "tp", "prec", "recall", "f1"
    );
    for (kind, s) in rows {
        println!(
            "{:<12} {:>10} {:>8} {:>8.4} {:>8.4} {:>8.4}",
            kind, s.detected, s.true_positives, s.precision, s.recall, s.f1
        );
    }
    Ok(())
}

fn build_detector(cfg: &RunConfig, train_part: &Trace) -> Result<LoopDetector> {
    let kcfg = cfg.detector.to_kswin_config(derive_seed(cfg.seed, "detector", 0));
    let t_len = cfg.predictor.history_t;
    Ok(match cfg.detector.kind.as_str() {
        "none" => LoopDetector::TrueLabels,
        "kswin" => LoopDetector::Kswin(Kswin::new(kcfg)?),
        "soft_kswin" => LoopDetector::SoftKswin(SoftKswin::new(kcfg)?),
        "dt" => LoopDetector::Dt {
            det: DtDetector::new(train_pc_tree(train_part, t_len)?),
            window: VecDeque::new(),
            t_len,
        },
        "soft_dt" => LoopDetector::SoftDt {
            det: SoftDtDetector::new(train_pc_tree(train_part, t_len)?, cfg.detector.dt_queue)?,
            window: VecDeque::new(),
            t_len,
        },
        other => return Err(Error::Config(format!("unknown detector kind {other:?}"))),
    })
}

fn cmd_simulate(cfg: &RunConfig, prefetcher_override: Option<Vec<String>>) -> Result<()> {
    let trace = load_trace(cfg)?;
    let (train_part, eval) = split_first_iteration(&trace)?;
    let cache = cfg.cache.to_cache_config();
    let names = prefetcher_override.unwrap_or_else(|| cfg.sim.prefetchers.clone());
    let dir = report_dir(cfg);
    std::fs::create_dir_all(&dir)?;

    for name in &names {
        let mut prefetcher: Box<dyn Prefetcher> = match name.as_str() {
            "none" => Box::new(NonePrefetcher),
            "oracle" => Box::new(OraclePrefetcher {
                degree: cfg.sim.oracle_degree,
            }),
            "bo" => Box::new(BoPrefetcher(BestOffset::new(cfg.bo.to_bo_config()))),
            "isb" => Box::new(IsbPrefetcher(Isb::new(cfg.isb.to_isb_config()))),
            "cstp" => {
                let set = load_model_set(cfg, eval.meta.num_phases)?;
                let controller = CstpController::new(set, cfg.cstp.to_cstp_config())?;
                let detector = build_detector(cfg, &train_part)?;
                Box::new(CstpPrefetcher::new(
                    controller,
                    detector,
                    cfg.detector.effective_lag(),
                ))
            }
            other => return Err(Error::Config(format!("unknown prefetcher {other:?}"))),
        };
        let report = simulate(&eval, prefetcher.as_mut(), &cache, cfg.sim.distance)?;
        let path = dir.join(format!("{name}.txt"));
        std::fs::write(&path, report.to_text())?;
        println!(
            "{name}: accuracy {:.4} coverage {:.4} (issued {} useful {}) -> {}",
            report.accuracy,
            report.coverage,
            report.prefetches_issued,
            report.prefetches_useful,
            path.display()
        );
    }
    Ok(())
}

fn cmd_report(files: &[PathBuf], csv: bool) -> Result<()> {
    if files.is_empty() {
        return Err(Error::Report("need at least one report file".into()));
    }
    let mut reports = Vec::new();
    let mut offenders = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(path)?;
        let version = text
            .lines()
            .find_map(|l| l.strip_prefix("schema_version="))
            .and_then(|v| v.trim().parse::<u32>().ok());
        if version != Some(REPORT_SCHEMA_VERSION) {
            offenders.push(format!(
                "{} (schema {})",
                path.display(),
                version.map_or_else(|| "missing".into(), |v| v.to_string())
            ));
            continue;
        }
        reports.push(SimReport::from_text(&text)?);
    }
    if !offenders.is_empty() {
        return Err(Error::Report(format!(
            "schema version mismatch (expected {REPORT_SCHEMA_VERSION}): {}",
            offenders.join(", ")
        )));
    }
    if csv {
        println!("{}", SimReport::csv_header());
        for r in &reports {
            println!("{}", r.to_csv_row());
        }
        return Ok(());
    }
    println!(
        "{:<10} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8}",
        "prefetch", "accesses", "misses", "issued", "useful", "acc", "cov", "det_p", "det_r"
    );
    for r in &reports {
        let (dp, dr) = r
            .detector
            .map(|d| (format!("{:.4}", d.precision), format!("{:.4}", d.recall)))
            .unwrap_or_else(|| ("-".into(), "-".into()));
        println!(
            "{:<10} {:>10} {:>10} {:>10} {:>10} {:>8.4} {:>8.4} {:>8} {:>8}",
            r.prefetcher,
            r.demand_accesses,
            r.demand_misses,
            r.prefetches_issued,
            r.prefetches_useful,
            r.accuracy,
            r.coverage,
            dp,
            dr
        );
    }
    Ok(())
}
