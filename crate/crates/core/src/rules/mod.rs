//! Snort-style rule subset: parsing, normalization and compilation.
//!
//! Supported detection options are `content` (with `depth`, `offset`,
//! `distance`, `within`), `byte_test` (`>`, `<`, `=`) and `flow`
//! (`to_client`, `to_server`, `established`, `only_stream`). Every other
//! keyword is kept verbatim as an opaque option and evaluates as true.

use std::fmt;
use std::net::Ipv4Addr;

mod compile;
mod parser;

pub use compile::{CompiledRule, CompiledRuleSet, RuleId, Variables};
pub use parser::{load_ruleset, parse_rule, ParseError, RuleSet};

/// Snort community rule 30514 (OpenSSL heartbeat over-read response).
pub const HEARTBLEED_RULE: &str = r#"alert tcp $HOME_NET [21, 25, 443, 465, 636, 992, 993, 995, 2484] -> $EXTERNAL_NET any (msg: "OpenSSL SSLv3 large heartbeat response - possible ssl heartbleed attempt"; flow: to_client, established, only_stream; content: "|18 03 00|", depth 3; byte_test: 2,>,128,0,relative; metadata: policy balanced-ips drop, policy security-ips drop, ruleset community; service: ssl; reference: cve,2014-0160; classtype: attempted-recon; sid: 30514; rev: 9; )"#;

/// Approximate in-memory size of one compiled rule (28 MB for 3,462 rules).
pub const RULE_FOOTPRINT_BYTES: usize = 28 * 1024 * 1024 / 3462;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Alert,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleProto {
    Tcp,
    Udp,
    Icmp,
    /// Any IPv4 packet.
    Ip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arrow {
    /// `->`
    Unidirectional,
    /// `<>`
    Bidirectional,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddrSpec {
    pub negated: bool,
    pub kind: AddrKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AddrKind {
    Any,
    Net(Ipv4Addr, u8),
    Var(String),
    List(Vec<AddrSpec>),
}

impl AddrSpec {
    pub fn any() -> Self {
        AddrSpec { negated: false, kind: AddrKind::Any }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortSpec {
    pub negated: bool,
    pub kind: PortKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortKind {
    Any,
    /// Inclusive range; a single port is `Range(p, p)`.
    Range(u16, u16),
    Var(String),
    List(Vec<PortSpec>),
}

impl PortSpec {
    pub fn any() -> Self {
        PortSpec { negated: false, kind: PortKind::Any }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Content {
    pub pattern: Vec<u8>,
    pub negated: bool,
    /// Start of the search window: absolute, or past the previous match when
    /// `relative`.
    pub offset: Option<i32>,
    /// Length of the search window.
    pub depth: Option<u32>,
    pub relative: bool,
    /// Modifiers outside the supported subset (`nocase`, `fast_pattern`, ...).
    pub modifiers: Vec<String>,
}

impl Content {
    pub fn new(pattern: impl Into<Vec<u8>>) -> Self {
        Content {
            pattern: pattern.into(),
            negated: false,
            offset: None,
            depth: None,
            relative: false,
            modifiers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Gt,
    Lt,
    Eq,
}

impl CmpOp {
    pub fn apply(self, lhs: u64, rhs: u64) -> bool {
        match self {
            CmpOp::Gt => lhs > rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
        }
    }
}

/// Big-endian unsigned read of `nbytes` compared against `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteTest {
    pub nbytes: u8,
    pub op: CmpOp,
    pub value: u64,
    pub offset: i32,
    pub relative: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowOpt {
    pub to_client: bool,
    pub to_server: bool,
    pub established: bool,
    pub only_stream: bool,
    /// Flow keywords outside the supported subset, ignored at evaluation.
    pub other: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleOption {
    Content(Content),
    ByteTest(ByteTest),
    Flow(FlowOpt),
    Opaque { keyword: String, value: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub action: Action,
    pub proto: RuleProto,
    pub src_net: AddrSpec,
    pub src_ports: PortSpec,
    pub arrow: Arrow,
    pub dst_net: AddrSpec,
    pub dst_ports: PortSpec,
    pub options: Vec<RuleOption>,
    pub sid: u32,
    pub rev: u32,
    pub msg: String,
    pub classtype: String,
    pub metadata: Option<String>,
    pub service: Option<String>,
    pub references: Vec<String>,
}

impl Rule {
    pub fn contents(&self) -> impl Iterator<Item = &Content> {
        self.options.iter().filter_map(|o| match o {
            RuleOption::Content(c) => Some(c),
            _ => None,
        })
    }

    pub fn flow(&self) -> Option<&FlowOpt> {
        self.options.iter().find_map(|o| match o {
            RuleOption::Flow(f) => Some(f),
            _ => None,
        })
    }

    pub fn only_stream(&self) -> bool {
        self.flow().is_some_and(|f| f.only_stream)
    }

    /// Longest non-negated content; the first one wins ties.
    pub fn fast_pattern(&self) -> Option<&[u8]> {
        let mut best: Option<&[u8]> = None;
        for c in self.contents().filter(|c| !c.negated) {
            if best.is_none_or(|b| c.pattern.len() > b.len()) {
                best = Some(&c.pattern);
            }
        }
        best
    }

    /// Options accepted syntactically but ignored at evaluation.
    pub fn opaque_count(&self) -> usize {
        self.options
            .iter()
            .map(|o| match o {
                RuleOption::Opaque { .. } => 1,
                RuleOption::Content(c) => c.modifiers.len(),
                RuleOption::Flow(f) => f.other.len(),
                RuleOption::ByteTest(_) => 0,
            })
            .sum()
    }

    /// Whether a match blocks the packet when running inline: a `drop`
    /// action, or a `policy ... drop` metadata clause.
    pub fn drops_inline(&self) -> bool {
        if self.action == Action::Drop {
            return true;
        }
        self.metadata.as_deref().is_some_and(|m| {
            m.split(',').any(|clause| {
                let words: Vec<&str> = clause.split_whitespace().collect();
                words.first() == Some(&"policy") && words.last() == Some(&"drop")
            })
        })
    }
}

// ---- normalized text form -------------------------------------------------

fn write_text(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    for c in s.chars() {
        if matches!(c, '"' | ';' | '\\') {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    Ok(())
}

fn write_pattern(f: &mut fmt::Formatter<'_>, bytes: &[u8]) -> fmt::Result {
    let printable = |b: u8| (0x20..0x7f).contains(&b) && !matches!(b, b'"' | b';' | b'\\' | b'|');
    let mut i = 0;
    while i < bytes.len() {
        if printable(bytes[i]) {
            write!(f, "{}", bytes[i] as char)?;
            i += 1;
        } else {
            f.write_str("|")?;
            let mut first = true;
            while i < bytes.len() && !printable(bytes[i]) {
                if !first {
                    f.write_str(" ")?;
                }
                write!(f, "{:02X}", bytes[i])?;
                first = false;
                i += 1;
            }
            f.write_str("|")?;
        }
    }
    Ok(())
}

impl fmt::Display for AddrSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("!")?;
        }
        match &self.kind {
            AddrKind::Any => f.write_str("any"),
            AddrKind::Net(ip, 32) => write!(f, "{ip}"),
            AddrKind::Net(ip, len) => write!(f, "{ip}/{len}"),
            AddrKind::Var(name) => write!(f, "${name}"),
            AddrKind::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl fmt::Display for PortSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("!")?;
        }
        match &self.kind {
            PortKind::Any => f.write_str("any"),
            PortKind::Range(a, b) if a == b => write!(f, "{a}"),
            PortKind::Range(0, b) => write!(f, ":{b}"),
            PortKind::Range(a, 65535) => write!(f, "{a}:"),
            PortKind::Range(a, b) => write!(f, "{a}:{b}"),
            PortKind::Var(name) => write!(f, "${name}"),
            PortKind::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl fmt::Display for RuleOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleOption::Content(c) => {
                f.write_str("content:")?;
                if c.negated {
                    f.write_str("!")?;
                }
                f.write_str("\"")?;
                write_pattern(f, &c.pattern)?;
                f.write_str("\"")?;
                let (off, dep) = if c.relative { ("distance", "within") } else { ("offset", "depth") };
                if let Some(o) = c.offset {
                    write!(f, ",{off} {o}")?;
                }
                if let Some(d) = c.depth {
                    write!(f, ",{dep} {d}")?;
                }
                for m in &c.modifiers {
                    write!(f, ",{m}")?;
                }
                f.write_str(";")
            }
            RuleOption::ByteTest(b) => {
                write!(f, "byte_test:{},{},{},{}", b.nbytes, b.op.symbol(), b.value, b.offset)?;
                if b.relative {
                    f.write_str(",relative")?;
                }
                f.write_str(";")
            }
            RuleOption::Flow(fl) => {
                let mut words: Vec<&str> = Vec::new();
                if fl.to_client {
                    words.push("to_client");
                }
                if fl.to_server {
                    words.push("to_server");
                }
                if fl.established {
                    words.push("established");
                }
                if fl.only_stream {
                    words.push("only_stream");
                }
                words.extend(fl.other.iter().map(String::as_str));
                write!(f, "flow:{};", words.join(","))
            }
            RuleOption::Opaque { keyword, value: Some(v) } => write!(f, "{keyword}:{v};"),
            RuleOption::Opaque { keyword, value: None } => write!(f, "{keyword};"),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let action = match self.action {
            Action::Alert => "alert",
            Action::Drop => "drop",
        };
        let proto = match self.proto {
            RuleProto::Tcp => "tcp",
            RuleProto::Udp => "udp",
            RuleProto::Icmp => "icmp",
            RuleProto::Ip => "ip",
        };
        let arrow = match self.arrow {
            Arrow::Unidirectional => "->",
            Arrow::Bidirectional => "<>",
        };
        write!(
            f,
            "{action} {proto} {} {} {arrow} {} {} (msg:\"",
            self.src_net, self.src_ports, self.dst_net, self.dst_ports
        )?;
        write_text(f, &self.msg)?;
        f.write_str("\";")?;
        for o in &self.options {
            write!(f, " {o}")?;
        }
        if let Some(m) = &self.metadata {
            write!(f, " metadata:{m};")?;
        }
        if let Some(s) = &self.service {
            write!(f, " service:{s};")?;
        }
        for r in &self.references {
            write!(f, " reference:{r};")?;
        }
        if !self.classtype.is_empty() {
            write!(f, " classtype:{};", self.classtype)?;
        }
        write!(f, " sid:{}; rev:{};)", self.sid, self.rev)
    }
}
