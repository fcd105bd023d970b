//! Per-packet analysis: fast-pattern prefilter, full rule evaluation,
//! verdict and alert emission.

use std::io::Write;
use std::sync::{Arc, Mutex};

use chrono::DateTime;

use crate::clock::Clock;
use crate::flow::{FlowConfig, FlowState, FlowTable};
use crate::packet::{canonical_key, Direction, FiveTuple, PacketDescriptor, PacketPool};
use crate::rules::{ByteTest, CompiledRule, CompiledRuleSet, Content, RuleId, RuleOption};

/// Flow facts visible to rule options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowView {
    pub state: FlowState,
    pub client_dir: Direction,
}

/// What the detectors see for one packet.
#[derive(Debug, Clone, Copy)]
pub struct PacketContext<'a> {
    pub tuple: FiveTuple,
    pub payload: &'a [u8],
    pub flow: Option<FlowView>,
    /// Canonical orientation of this packet within its flow.
    pub dir: Direction,
    /// Stream bytes this packet made contiguous, if any.
    pub stream: Option<&'a [u8]>,
    pub now_us: u64,
    pub slot: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertAction {
    Alerted,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alert {
    pub sid: u32,
    pub rev: u32,
    pub msg: String,
    pub classtype: String,
    pub now_us: u64,
    pub tuple: FiveTuple,
    pub slot: u32,
    pub action: AlertAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Allow,
    Block,
}

/// Reusable per-worker buffers for the prefilter.
#[derive(Debug, Default)]
pub struct Scratch {
    seen: Vec<u32>,
    generation: u32,
}

impl Scratch {
    fn begin(&mut self, n_rules: usize) {
        if self.seen.len() < n_rules {
            self.seen.resize(n_rules, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
    }
}

/// Phase 1. Rules whose fast pattern occurs in the buffer they inspect, plus
/// contentless rules, restricted to those whose header admits the packet.
/// Sorted by rule id.
pub fn prefilter(rules: &CompiledRuleSet, ctx: &PacketContext<'_>, scratch: &mut Scratch) -> Vec<RuleId> {
    let mut out = Vec::new();
    prefilter_into(rules, ctx, scratch, &mut out);
    out
}

pub fn prefilter_into(rules: &CompiledRuleSet, ctx: &PacketContext<'_>, scratch: &mut Scratch, out: &mut Vec<RuleId>) {
    out.clear();
    scratch.begin(rules.len());
    let generation = scratch.generation;
    let seen = &mut scratch.seen;
    rules.scan(ctx.tuple.proto, ctx.payload, ctx.stream, |id| {
        let s = &mut seen[id as usize];
        if *s != generation {
            *s = generation;
            out.push(id);
        }
    });
    out.retain(|&id| rules.rule(id).header_matches(&ctx.tuple));
    out.sort_unstable();
}

/// Phase 2. Header, flow constraints and every detection option.
pub fn evaluate_rule(rule: &CompiledRule, ctx: &PacketContext<'_>) -> bool {
    if !rule.header_matches(&ctx.tuple) {
        return false;
    }
    let mut only_stream = false;
    if let Some(f) = rule.rule.flow() {
        only_stream = f.only_stream;
        if f.to_client || f.to_server || f.established {
            let Some(flow) = ctx.flow else { return false };
            let toward_server = ctx.dir == flow.client_dir;
            if (f.to_client && toward_server)
                || (f.to_server && !toward_server)
                || (f.established && flow.state != FlowState::Established)
            {
                return false;
            }
        }
    }
    let buf = if only_stream {
        match ctx.stream {
            Some(s) if !s.is_empty() => s,
            _ => return false,
        }
    } else {
        ctx.payload
    };
    let checks: Vec<&RuleOption> =
        rule.rule.options.iter().filter(|o| matches!(o, RuleOption::Content(_) | RuleOption::ByteTest(_))).collect();
    eval_from(&checks, buf, 0)
}

/// Recursive matcher with backtracking over content positions. `anchor` is
/// the end of the previous positive content match.
fn eval_from(checks: &[&RuleOption], buf: &[u8], anchor: usize) -> bool {
    let Some((first, rest)) = checks.split_first() else {
        return true;
    };
    match first {
        RuleOption::Content(c) if c.negated => {
            find_in_window(c, buf, anchor).next().is_none() && eval_from(rest, buf, anchor)
        }
        RuleOption::Content(c) => find_in_window(c, buf, anchor).any(|end| eval_from(rest, buf, end)),
        RuleOption::ByteTest(bt) => byte_test(bt, buf, anchor) && eval_from(rest, buf, anchor),
        _ => eval_from(rest, buf, anchor),
    }
}

/// End offsets of every occurrence of `c` inside its search window.
fn find_in_window<'a>(c: &'a Content, buf: &'a [u8], anchor: usize) -> impl Iterator<Item = usize> + 'a {
    let base = if c.relative { anchor as i64 } else { 0 };
    let start = (base + i64::from(c.offset.unwrap_or(0))).max(0) as usize;
    let limit = match c.depth {
        Some(d) => (start + d as usize).min(buf.len()),
        None => buf.len(),
    };
    let n = c.pattern.len();
    let window: &[u8] = if start <= limit { &buf[start..limit] } else { &[] };
    let hits: Box<dyn Iterator<Item = usize>> = if n == 0 {
        Box::new(std::iter::once(start).filter(move |&s| s <= limit))
    } else if window.len() < n {
        Box::new(std::iter::empty())
    } else {
        Box::new(
            window
                .windows(n)
                .enumerate()
                .filter(move |(_, w)| *w == c.pattern.as_slice())
                .map(move |(i, _)| start + i + n),
        )
    };
    hits
}

fn byte_test(bt: &ByteTest, buf: &[u8], anchor: usize) -> bool {
    let base = if bt.relative { anchor as i64 } else { 0 };
    let at = base + i64::from(bt.offset);
    let n = usize::from(bt.nbytes);
    if at < 0 || n == 0 || n > 8 || at as usize + n > buf.len() {
        return false;
    }
    let at = at as usize;
    let value = buf[at..at + n].iter().fold(0u64, |acc, &b| (acc << 8) | u64::from(b));
    bt.op.apply(value, bt.value)
}

/// Every rule that matches, found without the prefilter. Reference for the
/// two-phase equivalence checks.
pub fn evaluate_all(rules: &CompiledRuleSet, ctx: &PacketContext<'_>) -> Vec<RuleId> {
    (0..rules.len() as RuleId).filter(|&id| evaluate_rule(rules.rule(id), ctx)).collect()
}

/// One `fast` alert line (no trailing newline).
pub fn format_alert_fast(a: &Alert) -> String {
    let secs = (a.now_us / 1_000_000) as i64;
    let ts = DateTime::from_timestamp(secs, 0).expect("timestamp in range");
    let mut line = format!(
        "{}.{:06} [**] [1:{}:{}] {} [**] ",
        ts.format("%m/%d-%H:%M:%S"),
        a.now_us % 1_000_000,
        a.sid,
        a.rev,
        a.msg
    );
    if !a.classtype.is_empty() {
        line.push_str(&format!("[Classification: {}] ", a.classtype));
    }
    let t = &a.tuple;
    if t.proto.has_ports() {
        line.push_str(&format!("{{{}}} {}:{} -> {}:{}", t.proto, t.src_ip, t.src_port, t.dst_ip, t.dst_port));
    } else {
        line.push_str(&format!("{{{}}} {} -> {}", t.proto, t.src_ip, t.dst_ip));
    }
    line
}

/// Where alerts go.
pub trait AlertSink: Send {
    fn emit(&mut self, alert: &Alert);
    fn flush(&mut self) {}
}

/// Discards alerts.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl AlertSink for NullSink {
    fn emit(&mut self, _: &Alert) {}
}

impl AlertSink for Vec<Alert> {
    fn emit(&mut self, alert: &Alert) {
        self.push(alert.clone());
    }
}

/// Writes `fast` lines.
#[derive(Debug)]
pub struct FastWriter<W: Write + Send>(pub W);

impl<W: Write + Send> AlertSink for FastWriter<W> {
    fn emit(&mut self, alert: &Alert) {
        // Alert output is best effort; a broken pipe must not stop analysis.
        let _ = writeln!(self.0, "{}", format_alert_fast(alert));
    }

    fn flush(&mut self) {
        let _ = self.0.flush();
    }
}

impl<S: AlertSink + ?Sized> AlertSink for Arc<Mutex<S>> {
    fn emit(&mut self, alert: &Alert) {
        self.lock().expect("alert sink poisoned").emit(alert);
    }

    fn flush(&mut self) {
        self.lock().expect("alert sink poisoned").flush();
    }
}

impl<S: AlertSink + ?Sized> AlertSink for Box<S> {
    fn emit(&mut self, alert: &Alert) {
        (**self).emit(alert);
    }

    fn flush(&mut self) {
        (**self).flush();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WorkerConfig {
    pub inline: bool,
    /// Fetch and allow without any analysis.
    pub useless: bool,
    pub flow: FlowConfig,
    /// How often idle flows are swept, in trusted-clock microseconds.
    pub expire_every_us: u64,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig { inline: false, useless: false, flow: FlowConfig::default(), expire_every_us: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub analyzed: u64,
    pub allowed: u64,
    pub blocked: u64,
    pub alerts: u64,
    /// Packets analyzed without flow state because the table was full.
    pub flowless: u64,
    pub candidates: u64,
    pub last_us: u64,
}

/// Result of one `process_packet`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub verdict: Verdict,
    pub candidates: usize,
    pub alerts: usize,
    pub payload_len: usize,
    /// Whether the caller should pass the packet on to the TX ring.
    pub forward: bool,
}

/// One analysis worker: its own flow table, stats and alert sink over a
/// shared immutable ruleset.
pub struct Analyzer {
    rules: Arc<CompiledRuleSet>,
    flows: FlowTable,
    config: WorkerConfig,
    clock: Clock,
    sink: Box<dyn AlertSink>,
    stats: WorkerStats,
    scratch: Scratch,
    candidates: Vec<RuleId>,
    last_expire_us: u64,
}

impl Analyzer {
    pub fn new(rules: Arc<CompiledRuleSet>, config: WorkerConfig, clock: Clock, sink: Box<dyn AlertSink>) -> Self {
        Analyzer {
            rules,
            flows: FlowTable::new(config.flow),
            config,
            clock,
            sink,
            stats: WorkerStats::default(),
            scratch: Scratch::default(),
            candidates: Vec::new(),
            last_expire_us: 0,
        }
    }

    pub fn stats(&self) -> WorkerStats {
        self.stats
    }

    pub fn flows(&self) -> &FlowTable {
        &self.flows
    }

    pub fn rules(&self) -> &CompiledRuleSet {
        &self.rules
    }

    pub fn config(&self) -> &WorkerConfig {
        &self.config
    }

    pub fn flush(&mut self) {
        self.sink.flush();
    }

    /// Analyzes one descriptor. The caller keeps ownership: it forwards the
    /// descriptor to TX when `forward` is set and releases it otherwise.
    pub fn process_packet(&mut self, pool: &PacketPool, desc: &PacketDescriptor) -> Outcome {
        self.stats.analyzed += 1;
        let payload = pool.payload(desc);
        if self.config.useless || !desc.decode_ok {
            self.stats.allowed += 1;
            self.stats.last_us = self.clock.now_us();
            return Outcome {
                verdict: Verdict::Allow,
                candidates: 0,
                alerts: 0,
                payload_len: payload.len(),
                forward: self.config.inline,
            };
        }

        let now = self.clock.now_us();
        let (key, dir) = canonical_key(&desc.tuple);
        let stream = match self.flows.track(key, desc, payload, dir, now) {
            Ok(t) => t.stream,
            Err(_) => {
                self.stats.flowless += 1;
                Vec::new()
            }
        };
        let flow = self.flows.get(&key).map(|f| FlowView { state: f.state, client_dir: f.client_dir });
        let ctx = PacketContext {
            tuple: desc.tuple,
            payload,
            flow,
            dir,
            stream: (!stream.is_empty()).then_some(stream.as_slice()),
            now_us: now,
            slot: desc.slot(),
        };

        let mut candidates = std::mem::take(&mut self.candidates);
        prefilter_into(&self.rules, &ctx, &mut self.scratch, &mut candidates);
        let mut alerts = 0;
        let mut block = false;
        for &id in &candidates {
            let rule = self.rules.rule(id);
            if !evaluate_rule(rule, &ctx) {
                continue;
            }
            let blocks = self.config.inline && rule.rule.drops_inline();
            block |= blocks;
            alerts += 1;
            self.sink.emit(&Alert {
                sid: rule.rule.sid,
                rev: rule.rule.rev,
                msg: rule.rule.msg.clone(),
                classtype: rule.rule.classtype.clone(),
                now_us: now,
                tuple: desc.tuple,
                slot: desc.slot(),
                action: if blocks { AlertAction::Blocked } else { AlertAction::Alerted },
            });
        }
        let n_candidates = candidates.len();
        self.candidates = candidates;

        self.stats.candidates += n_candidates as u64;
        self.stats.alerts += alerts as u64;
        let verdict = if block {
            self.stats.blocked += 1;
            Verdict::Block
        } else {
            self.stats.allowed += 1;
            Verdict::Allow
        };
        // Second clock read of the packet, for the statistics timestamp.
        self.stats.last_us = self.clock.now_us();
        if now.saturating_sub(self.last_expire_us) >= self.config.expire_every_us {
            self.flows.expire_idle(now);
            self.last_expire_us = now;
        }
        Outcome {
            verdict,
            candidates: n_candidates,
            alerts: alerts as usize,
            payload_len: payload.len(),
            forward: self.config.inline && verdict == Verdict::Allow,
        }
    }
}

impl std::fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Analyzer").field("config", &self.config).field("stats", &self.stats).finish()
    }
}
