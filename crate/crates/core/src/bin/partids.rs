use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};

use partids::acquire::PacketSource;
use partids::detect::{AlertSink, FastWriter};
use partids::harness::config::parse_clock;
use partids::harness::pcap::PcapWriter;
use partids::harness::{
    gen_synth, pcap_read, run_experiment, AlertOutput, EngineConfig, FileConfig, HarnessError, WorkloadSpec,
    HEARTBLEED_SID,
};
use partids::packet::{canonical_key, parse_headers};
use partids::rules::{load_ruleset, CompiledRuleSet, RuleSet, Variables};

#[derive(Parser)]
#[command(name = "partids", version, about = "Partitioned intrusion-detection engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and print its report.
    Run(RunArgs),
    /// Write a synthetic workload to a pcap file.
    Gen(GenArgs),
    /// Rule file utilities.
    Rules {
        #[command(subcommand)]
        cmd: RulesCmd,
    },
    /// Summarize a pcap file.
    PcapInfo { file: PathBuf },
}

#[derive(Subcommand)]
enum RulesCmd {
    /// Parse a rules file and list the lines that were skipped.
    Check {
        file: PathBuf,
        #[arg(long)]
        take_first: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlertMode {
    Fast,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

/// `SIZE,FLOWS`
fn parse_synth(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected SIZE,FLOWS")?;
    let size = a.trim().parse().map_err(|e| format!("size: {e}"))?;
    let flows = b.trim().parse().map_err(|e| format!("flows: {e}"))?;
    Ok((size, flows))
}

#[derive(Args)]
struct WorkloadArgs {
    /// Replay a capture file.
    #[arg(long, conflicts_with = "synth")]
    pcap: Option<PathBuf>,
    /// Generate TCP traffic: frame size in bytes and number of flows.
    #[arg(long, value_parser = parse_synth, value_name = "SIZE,FLOWS")]
    synth: Option<(usize, usize)>,
    #[arg(long)]
    count: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Restart the capture when it runs out.
    #[arg(long)]
    repeat: bool,
    /// Fraction of synthetic packets that carry a Heartbleed response.
    #[arg(long)]
    attack_rate: Option<f64>,
}

impl WorkloadArgs {
    fn spec(&self) -> Result<WorkloadSpec, HarnessError> {
        let mut spec = match (&self.pcap, self.synth) {
            (Some(p), None) => {
                let mut s = WorkloadSpec::pcap(p);
                s.count = self.count;
                s
            }
            (None, Some((size, flows))) => WorkloadSpec::synth(size, flows, self.count.unwrap_or(100_000)),
            _ => return Err(HarnessError::Config("exactly one of --pcap or --synth is required".into())),
        };
        spec.repeat = self.repeat;
        spec.seed = self.seed;
        if let Some(r) = self.attack_rate {
            spec = spec.with_attack(HEARTBLEED_SID, r);
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Stop acquisition after this many (simulated or wall) seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Analysis threads.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Use only the first N rules of the file.
    #[arg(long)]
    take_first: Option<usize>,
    #[arg(long, value_enum, default_value_t = AlertMode::None)]
    alert: AlertMode,
    /// Where fast alerts go (default: stderr).
    #[arg(long)]
    alert_file: Option<PathBuf>,
    #[arg(long)]
    inline: bool,
    /// Fetch and allow with no analysis.
    #[arg(long)]
    useless: bool,
    #[arg(long, value_enum)]
    cost_model: Option<OnOff>,
    #[arg(long)]
    epc_mib: Option<f64>,
    #[arg(long)]
    paging_penalty: Option<f64>,
    #[arg(long)]
    warmup_seconds: Option<f64>,
    /// `sim` or `real`.
    #[arg(long)]
    clock: Option<String>,
    #[arg(long)]
    line_rate_gbps: Option<f64>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    #[arg(long, short)]
    out: PathBuf,
    /// Inter-frame gap written into the timestamps.
    #[arg(long, default_value_t = 1)]
    gap_us: u64,
}

fn load_rules(path: &Path, take_first: Option<usize>) -> Result<RuleSet, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let set = load_ruleset(&text);
    Ok(match take_first {
        Some(n) => set.take_first(n),
        None => set,
    })
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let mut cfg = EngineConfig::default();
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    file.apply(&mut cfg)?;
    let vars: Variables = file.variables()?;

    if let Some(n) = args.threads {
        cfg.threads = n;
    }
    cfg.inline |= args.inline;
    cfg.useless |= args.useless;
    if let Some(c) = &args.clock {
        cfg.clock = parse_clock(c)?;
    }
    if let Some(g) = args.line_rate_gbps {
        cfg.line_rate_bps = g * 1e9;
    }
    match args.cost_model {
        Some(OnOff::On) => cfg.cost.enabled = true,
        Some(OnOff::Off) => cfg.cost.enabled = false,
        None => {}
    }
    if let Some(m) = args.epc_mib {
        cfg.cost.epc_bytes = (m * 1024.0 * 1024.0) as usize;
    }
    if let Some(p) = args.paging_penalty {
        cfg.cost.paging_penalty = p;
    }
    if let Some(w) = args.warmup_seconds {
        cfg.cost.warmup_bytes = (w * cfg.cost.warmup_rate) as usize;
    }

    let rules_path = args.rules.clone().or(file.engine.rules.clone());
    let take_first = args.take_first.or(file.engine.take_first);
    if let (Some(p), false) = (&rules_path, cfg.useless) {
        let set = load_rules(p, take_first)?;
        for (line, e) in &set.errors {
            eprintln!("{}:{line}: skipped: {e}", p.display());
        }
        cfg.rules = Arc::new(CompiledRuleSet::compile(&set.rules, &vars));
    }

    if let AlertMode::Fast = args.alert {
        let w: Box<dyn Write + Send> = match &args.alert_file {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(io::stderr()),
        };
        let sink: Arc<Mutex<dyn AlertSink>> = Arc::new(Mutex::new(FastWriter(w)));
        cfg.alerts = AlertOutput::Sink(sink);
    }

    let mut spec = args.workload.spec()?;
    if let Some(d) = args.duration {
        spec = spec.with_duration(d);
        if args.workload.count.is_none() {
            spec.count = None;
        }
    }
    let report = run_experiment(&spec, &cfg)?;
    let out = match args.report {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Text => report.to_text(),
    };
    io::stdout().write_all(out.as_bytes())?;
    Ok(())
}

fn gen(args: GenArgs) -> Result<(), HarnessError> {
    let spec = args.workload.spec()?;
    spec.validate()?;
    let mut gen = gen_synth(&spec)?;
    let mut w = PcapWriter::new(BufWriter::new(File::create(&args.out)?))?;
    let mut n = 0u64;
    while let Some(f) = gen.next_frame() {
        w.write_packet(n * args.gap_us, f)?;
        n += 1;
    }
    w.into_inner()?;
    println!("wrote {n} frames to {} ({} attack payloads)", args.out.display(), gen.injected());
    Ok(())
}

fn rules_check(file: &Path, take_first: Option<usize>) -> Result<(), HarnessError> {
    let set = load_rules(file, take_first)?;
    for (line, e) in &set.errors {
        println!("{}:{line}: {e}", file.display());
    }
    let compiled = CompiledRuleSet::compile(&set.rules, &Variables::new());
    let indexed = compiled.placements().iter().filter(|(_, fast)| *fast).count();
    println!(
        "{} rules loaded, {} skipped, {} with a fast pattern, {} contentless",
        set.len(),
        set.errors.len(),
        indexed,
        set.len() - indexed
    );
    Ok(())
}

fn pcap_info(file: &Path) -> Result<(), HarnessError> {
    let packets = pcap_read(file)?;
    let mut flows = HashSet::new();
    let mut bytes = 0u64;
    let mut undecoded = 0u64;
    for p in &packets {
        bytes += p.data.len() as u64;
        match parse_headers(&p.data) {
            Ok(h) if h.decode_ok => {
                flows.insert(canonical_key(&h.tuple).0);
            }
            _ => undecoded += 1,
        }
    }
    let mean = if packets.is_empty() { 0.0 } else { bytes as f64 / packets.len() as f64 };
    println!("packets:     {}", packets.len());
    println!("flows:       {}", flows.len());
    println!("mean frame:  {mean:.1} B");
    println!("not ipv4:    {undecoded}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Gen(a) => gen(a),
        Cmd::Rules { cmd: RulesCmd::Check { file, take_first } } => rules_check(&file, take_first),
        Cmd::PcapInfo { file } => pcap_info(&file),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("partids: {e}");
            ExitCode::FAILURE
        }
    }
}
