use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use motorsig::pipeline::{
    self, calibrate_library, default_fault_classes, fault_pairs, load_library, noise_regimes, read_record, run_bench,
    run_compare, run_monitor_stream, single_fault_suite, spectrogram_csv, valve_noise_suite, write_record, Analyzer,
    Encoding, FaultClass, Mode, PipelineConfig, Scenario, SuiteConfig,
};
use motorsig::signal_model::{DriveScenario, FaultMode, MultiChannelRecord, NoiseKind, OperatingPoint};

#[derive(Parser)]
#[command(
    name = "motorsig",
    version,
    about = "Fault-signature analysis of multichannel motor current records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic drive record.
    Generate(GenerateArgs),
    /// Build a signature library from a generated calibration corpus.
    Calibrate(CalibrateArgs),
    /// Analyze a record window by window and write a JSON report.
    Analyze(AnalyzeArgs),
    /// Stream alarm events for a record as JSON lines.
    Monitor(MonitorArgs),
    /// Score the analysis modes on a generated scenario suite.
    Compare(CompareArgs),
    /// Time the full chain on one analysis unit.
    Bench(BenchArgs),
}

/// Pipeline configuration: a JSON file mirroring `PipelineConfig`, with
/// flags taking precedence over file values.
#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input sample rate in Hz.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Decimation factor applied before separation.
    #[arg(long)]
    decimation: Option<usize>,
    /// Moving-average length after decimation (odd; 0 or 1 disables).
    #[arg(long)]
    smoothing: Option<usize>,
    /// Analysis window length in seconds.
    #[arg(long)]
    window_s: Option<f64>,
    /// STFT window length in samples.
    #[arg(long)]
    stft_window: Option<usize>,
    /// STFT hop in samples.
    #[arg(long)]
    stft_hop: Option<usize>,
    /// Signature library JSON.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Maximum labels reported per window.
    #[arg(long)]
    max_labels: Option<usize>,
    /// Seed for separation initialisation.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).map_err(|e| {
                    motorsig::Error::from(motorsig::RecordError::MalformedJson {
                        path: p.display().to_string(),
                        reason: e.to_string(),
                    })
                })?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.sample_rate {
            cfg.sample_rate_hz = v;
        }
        if let Some(v) = self.decimation {
            cfg.decimation = v;
        }
        if let Some(v) = self.smoothing {
            cfg.smoothing_window = v;
        }
        if let Some(v) = self.window_s {
            cfg.window_s = v;
        }
        if let Some(v) = self.stft_window {
            cfg.stft.window_len = v;
            cfg.stft.hop = (v / 2).max(1);
        }
        if let Some(v) = self.stft_hop {
            cfg.stft.hop = v;
        }
        if let Some(v) = &self.library {
            cfg.library_path = Some(v.clone());
        }
        if let Some(v) = self.max_labels {
            cfg.max_labels = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
            cfg.ica.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Payload path; the header goes to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    /// `f32le` or `csv`.
    #[arg(long, default_value = "f32le")]
    encoding: Encoding,
    #[arg(long, default_value_t = 5000.0)]
    sample_rate: f64,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fault to inject, repeatable: `harmonic[:ORDER:AMP]`,
    /// `sideband[:CARRIER_HZ:OFFSET_HZ:DEPTH]`, `valve[:RATE_HZ:AMP]`.
    #[arg(long = "fault")]
    faults: Vec<String>,
    /// `gaussian`, `uniform_white` or `random_impulsive`.
    #[arg(long, default_value = "gaussian")]
    noise: String,
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
    /// Fault onset in seconds.
    #[arg(long, default_value_t = 0.0)]
    onset: f64,
    /// Fault end in seconds (default: end of record).
    #[arg(long)]
    fault_end: Option<f64>,
    /// Add the pressure channel.
    #[arg(long)]
    pressure: bool,
    #[arg(long, default_value_t = 50.0)]
    line_frequency: f64,
    #[arg(long, default_value_t = 28.0)]
    voltage: f64,
    #[arg(long, default_value_t = 0.0)]
    phase: f64,
    #[arg(long, default_value_t = 3000.0)]
    speed_rpm: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output library JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "hybrid")]
    mode: Mode,
    /// Noise regime to calibrate under, repeatable (default: all three).
    #[arg(long = "regime")]
    regimes: Vec<String>,
    /// Number of calibration seeds per record type.
    #[arg(long, default_value_t = 8)]
    seeds: u64,
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Record payload (header at `<input>.json`).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "hybrid")]
    mode: Mode,
    /// Report path (default: stdout).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for separated sources, spectrogram CSVs, the feature time
    /// series and the events file.
    #[arg(long)]
    export_dir: Option<PathBuf>,
}

#[derive(Args)]
struct MonitorArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "hybrid")]
    mode: Mode,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Comma-separated modes.
    #[arg(long, value_delimiter = ',', default_value = "stft_only,fusion_only,hybrid")]
    modes: Vec<Mode>,
    /// `valve` (shipped seeds), `single` or `pairs`.
    #[arg(long, default_value = "valve")]
    suite: String,
    /// Seeds per regime for `single` and `pairs`.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Restrict to one noise regime, repeatable.
    #[arg(long = "regime")]
    regimes: Vec<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Record to time; default is a generated 2 s, 4-channel, 50 kHz unit.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
}

fn parse_regime(name: &str) -> anyhow::Result<NoiseKind> {
    noise_regimes()
        .into_iter()
        .find(|r| r.regime_name() == name)
        .ok_or_else(|| anyhow!("unknown noise regime `{name}` (expected gaussian, uniform_white or random_impulsive)"))
}

fn parse_regimes(names: &[String]) -> anyhow::Result<Vec<NoiseKind>> {
    if names.is_empty() {
        return Ok(noise_regimes());
    }
    names.iter().map(|n| parse_regime(n)).collect()
}

fn parse_fault(text: &str) -> anyhow::Result<FaultMode> {
    let mut parts = text.split(':');
    let kind = parts.next().unwrap_or_default();
    let nums: Vec<f64> = parts
        .map(|p| {
            p.parse::<f64>()
                .with_context(|| format!("`{p}` in fault `{text}` is not a number"))
        })
        .collect::<anyhow::Result<_>>()?;
    let default = default_fault_classes()
        .into_iter()
        .find(|c| c.label == kind)
        .ok_or_else(|| anyhow!("unknown fault `{kind}` (expected harmonic, sideband or valve)"))?
        .fault;
    let fault = match (default, nums.as_slice()) {
        (f, []) => f,
        (FaultMode::HarmonicInjection { .. }, &[order, amp]) => FaultMode::HarmonicInjection {
            order: order as u32,
            relative_amplitude: amp,
        },
        (FaultMode::Sideband { .. }, &[carrier, offset, depth]) => FaultMode::Sideband {
            carrier_hz: carrier,
            offset_hz: offset,
            depth,
        },
        (FaultMode::StochasticValveNoise { .. }, &[rate, amp]) => FaultMode::StochasticValveNoise {
            burst_rate_hz: rate,
            burst_amplitude: amp,
        },
        _ => bail!("wrong number of parameters in fault `{text}`"),
    };
    fault.validate()?;
    Ok(fault)
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = io::stdout().lock();
            if let Err(e) = writeln!(out, "{text}") {
                if e.kind() != io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn library_for(cfg: &PipelineConfig) -> anyhow::Result<Option<motorsig::signature::SignatureLibrary>> {
    Ok(cfg.library_path.as_deref().map(load_library).transpose()?)
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let op = OperatingPoint {
        line_frequency_hz: a.line_frequency,
        supply_voltage_v: a.voltage,
        phase_shift_rad: a.phase,
        speed_rpm: a.speed_rpm,
    };
    op.validate()?;
    let faults = a
        .faults
        .iter()
        .map(|f| parse_fault(f))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let noise = parse_regime(&a.noise)?.at_snr_db(op.healthy_power(), a.snr_db, a.sample_rate);
    let record = DriveScenario::new(op, faults, noise, a.sample_rate, a.duration, a.seed)
        .with_onset(a.onset, a.fault_end)
        .with_pressure(a.pressure)
        .generate()?;
    write_record(&record, &a.out, a.encoding)?;
    Ok(())
}

fn suite_for(cfg: &PipelineConfig) -> SuiteConfig {
    SuiteConfig {
        sample_rate_hz: cfg.sample_rate_hz,
        operating_point: cfg.operating_point,
        ..SuiteConfig::default()
    }
}

fn calibrate(a: CalibrateArgs) -> anyhow::Result<()> {
    let cfg = a.cfg.load()?;
    let base = suite_for(&cfg);
    let suite = SuiteConfig {
        snr_db: a.snr_db,
        calibration_seeds: (1000..1000 + a.seeds).collect(),
        ..base
    };
    let regimes = parse_regimes(&a.regimes)?;
    let lib = calibrate_library(&cfg, a.mode, &default_fault_classes(), &regimes, &suite)?;
    fs::write(&a.out, lib.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn export(dir: &Path, full: &pipeline::FullAnalysis, schema: &[String]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for w in &full.windows {
        let i = w.report.index;
        write_record(
            &w.analysed,
            &dir.join(format!("window_{i:04}_sources.bin")),
            Encoding::F32le,
        )?;
        for (c, s) in w.spectrograms.iter().enumerate() {
            let p = dir.join(format!("window_{i:04}_source_{c}_spectrogram.csv"));
            fs::write(&p, spectrogram_csv(s)).with_context(|| format!("writing {}", p.display()))?;
        }
    }
    let mut series = csv::Writer::from_path(dir.join("features.csv"))?;
    let mut head = vec!["start_s".to_string(), "end_s".to_string()];
    head.extend(schema.iter().cloned());
    head.push("labels".into());
    series.write_record(&head)?;
    for w in &full.report.windows {
        let mut row = vec![w.start_s.to_string(), w.end_s.to_string()];
        row.extend(w.features.values.iter().map(f64::to_string));
        row.push(
            w.classification
                .iter()
                .map(|(l, _)| l.as_str())
                .collect::<Vec<_>>()
                .join("+"),
        );
        series.write_record(&row)?;
    }
    series.flush()?;
    let mut events = String::new();
    for e in &full.report.events {
        events.push_str(&e.to_json_line());
        events.push('\n');
    }
    fs::write(dir.join("events.jsonl"), events)?;
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> anyhow::Result<()> {
    let cfg = a.cfg.load()?;
    let record = read_record(&a.input)?;
    let analyzer = Analyzer::new(cfg.clone(), library_for(&cfg)?, a.mode)?;
    let full = analyzer.analyze_full(&record)?;
    if let Some(dir) = &a.export_dir {
        export(dir, &full, &cfg.features.schema())?;
    }
    write_json(a.report.as_deref(), &full.report)
}

fn monitor(a: MonitorArgs) -> anyhow::Result<()> {
    let cfg = a.cfg.load()?;
    let record = read_record(&a.input)?;
    let analyzer = Analyzer::new(cfg.clone(), library_for(&cfg)?, a.mode)?;
    let stdout = io::stdout();
    run_monitor_stream(&analyzer, &record, |_, events| {
        let mut out = stdout.lock();
        for e in events {
            // A closed pipe ends the stream quietly.
            if writeln!(out, "{}", e.to_json_line()).and_then(|_| out.flush()).is_err() {
                return Ok(());
            }
        }
        Ok(())
    })?;
    Ok(())
}

fn compare(a: CompareArgs) -> anyhow::Result<()> {
    let cfg = a.cfg.load()?;
    let suite = suite_for(&cfg);
    let classes: Vec<FaultClass> = default_fault_classes();
    let regimes = parse_regimes(&a.regimes)?;
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let scenarios: Vec<Scenario> = match a.suite.as_str() {
        "valve" => valve_noise_suite(&classes, &suite),
        "single" => single_fault_suite(&classes, &regimes, &seeds, &suite),
        "pairs" => {
            let mut out = Vec::new();
            for noise in &regimes {
                for pair in fault_pairs(&classes) {
                    for &s in &seeds {
                        out.push(Scenario::new(&pair, *noise, s, &suite));
                    }
                }
            }
            out
        }
        other => bail!("unknown suite `{other}` (expected valve, single or pairs)"),
    };
    let table = run_compare(&cfg, &a.modes, &scenarios, &classes, &suite)?;
    write_json(None, &table)
}

fn bench_unit(seed: u64) -> motorsig::Result<MultiChannelRecord> {
    let op = OperatingPoint::default();
    let fs = 50_000.0;
    let noise = NoiseKind::Gaussian { sigma: 1.0 }.at_snr_db(op.healthy_power(), 10.0, fs);
    DriveScenario::new(op, vec![], noise, fs, 2.0, seed)
        .with_pressure(true)
        .generate()
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let cfg = a.cfg.load()?;
    let record = match &a.input {
        Some(p) => read_record(p)?,
        None => bench_unit(cfg.seed)?,
    };
    let report = run_bench(&cfg, &record, a.repetitions)?;
    write_json(None, &report)
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(m) = e.downcast_ref::<motorsig::Error>() {
        m.kind()
    } else if let Some(r) = e.downcast_ref::<motorsig::RecordError>() {
        r.kind()
    } else if e.chain().any(|c| c.is::<io::Error>()) {
        "io"
    } else {
        "invalid_argument"
    }
}

/// The error chain joined with `: `, skipping causes whose text the previous
/// message already contains.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn report_error(kind: &str, message: &str) {
    let body = serde_json::json!({ "kind": kind, "message": message });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            report_error("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Analyze(a) => analyze(a),
        Command::Monitor(a) => monitor(a),
        Command::Compare(a) => compare(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(error_kind(&e), &message(&e));
            ExitCode::FAILURE
        }
    }
}
