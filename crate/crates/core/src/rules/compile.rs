use std::collections::HashMap;
use std::net::Ipv4Addr;

use super::parser::{parse_addr_text, parse_port_text};
use super::{AddrKind, AddrSpec, Arrow, ParseError, PortKind, PortSpec, Rule, RuleProto, RULE_FOOTPRINT_BYTES};
use crate::aho::AhoCorasick;
use crate::packet::{FiveTuple, Proto};

/// Index of a rule in its [`CompiledRuleSet`] (file order).
pub type RuleId = u32;

const MAX_VAR_DEPTH: usize = 16;

/// `$NAME` bindings. Unbound names resolve to `any`.
#[derive(Debug, Clone, Default)]
pub struct Variables {
    addrs: HashMap<String, AddrSpec>,
    ports: HashMap<String, PortSpec>,
}

impl Variables {
    /// `$HOME_NET` and `$EXTERNAL_NET` bound to `any`.
    pub fn new() -> Self {
        let mut v = Variables::default();
        v.addrs.insert("HOME_NET".into(), AddrSpec::any());
        v.addrs.insert("EXTERNAL_NET".into(), AddrSpec::any());
        v
    }

    pub fn set_addr(&mut self, name: &str, text: &str) -> Result<(), ParseError> {
        let spec = parse_addr_text(text)?;
        self.addrs.insert(name.trim_start_matches('$').to_string(), spec);
        Ok(())
    }

    pub fn set_port(&mut self, name: &str, text: &str) -> Result<(), ParseError> {
        let spec = parse_port_text(text)?;
        self.ports.insert(name.trim_start_matches('$').to_string(), spec);
        Ok(())
    }

    fn resolve_addr(&self, spec: &AddrSpec, depth: usize) -> AddrSpec {
        let kind = match &spec.kind {
            AddrKind::Var(name) => match self.addrs.get(name) {
                Some(bound) if depth < MAX_VAR_DEPTH => {
                    let inner = self.resolve_addr(bound, depth + 1);
                    return AddrSpec { negated: spec.negated != inner.negated, kind: inner.kind };
                }
                _ => AddrKind::Any,
            },
            AddrKind::List(items) => AddrKind::List(items.iter().map(|i| self.resolve_addr(i, depth)).collect()),
            other => other.clone(),
        };
        AddrSpec { negated: spec.negated, kind }
    }

    fn resolve_port(&self, spec: &PortSpec, depth: usize) -> PortSpec {
        let kind = match &spec.kind {
            PortKind::Var(name) => match self.ports.get(name) {
                Some(bound) if depth < MAX_VAR_DEPTH => {
                    let inner = self.resolve_port(bound, depth + 1);
                    return PortSpec { negated: spec.negated != inner.negated, kind: inner.kind };
                }
                _ => PortKind::Any,
            },
            PortKind::List(items) => PortKind::List(items.iter().map(|i| self.resolve_port(i, depth)).collect()),
            other => other.clone(),
        };
        PortSpec { negated: spec.negated, kind }
    }
}

fn addr_matches(spec: &AddrSpec, ip: Ipv4Addr) -> bool {
    let hit = match &spec.kind {
        AddrKind::Any | AddrKind::Var(_) => true,
        AddrKind::Net(net, len) => {
            let mask = if *len == 0 { 0 } else { u32::MAX << (32 - u32::from(*len)) };
            u32::from(ip) & mask == u32::from(*net) & mask
        }
        AddrKind::List(items) => list_matches(items.iter().map(|i| (i.negated, addr_matches(i, ip)))),
    };
    hit != spec.negated
}

fn port_matches(spec: &PortSpec, port: u16) -> bool {
    let hit = match &spec.kind {
        PortKind::Any | PortKind::Var(_) => true,
        PortKind::Range(lo, hi) => (*lo..=*hi).contains(&port),
        PortKind::List(items) => list_matches(items.iter().map(|i| (i.negated, port_matches(i, port)))),
    };
    hit != spec.negated
}

/// A list matches when some positive entry matches (or there are none) and
/// every negated entry holds. Items arrive as `(negated, item_result)`.
fn list_matches(items: impl Iterator<Item = (bool, bool)>) -> bool {
    let mut any_positive = false;
    let mut positive_hit = false;
    for (negated, ok) in items {
        if negated {
            if !ok {
                return false;
            }
        } else {
            any_positive = true;
            positive_hit |= ok;
        }
    }
    !any_positive || positive_hit
}

/// A rule with its variables resolved.
#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub rule: Rule,
    pub src_net: AddrSpec,
    pub src_ports: PortSpec,
    pub dst_net: AddrSpec,
    pub dst_ports: PortSpec,
}

impl CompiledRule {
    pub fn new(rule: Rule, vars: &Variables) -> Self {
        CompiledRule {
            src_net: vars.resolve_addr(&rule.src_net, 0),
            src_ports: vars.resolve_port(&rule.src_ports, 0),
            dst_net: vars.resolve_addr(&rule.dst_net, 0),
            dst_ports: vars.resolve_port(&rule.dst_ports, 0),
            rule,
        }
    }

    pub fn proto_matches(&self, proto: Proto) -> bool {
        match self.rule.proto {
            RuleProto::Ip => true,
            RuleProto::Tcp => proto == Proto::Tcp,
            RuleProto::Udp => proto == Proto::Udp,
            RuleProto::Icmp => proto == Proto::Icmp,
        }
    }

    fn oriented(&self, t: &FiveTuple) -> bool {
        let ports = !t.proto.has_ports()
            || (port_matches(&self.src_ports, t.src_port) && port_matches(&self.dst_ports, t.dst_port));
        ports && addr_matches(&self.src_net, t.src_ip) && addr_matches(&self.dst_net, t.dst_ip)
    }

    /// Protocol, addresses, ports and arrow. Ports are ignored for portless
    /// protocols.
    pub fn header_matches(&self, t: &FiveTuple) -> bool {
        self.proto_matches(t.proto)
            && match self.rule.arrow {
                Arrow::Unidirectional => self.oriented(t),
                Arrow::Bidirectional => self.oriented(t) || self.oriented(&t.reversed()),
            }
    }
}

#[derive(Debug, Clone)]
struct FastIndex {
    automaton: AhoCorasick,
    /// Rules keyed by automaton pattern id.
    rules: Vec<Vec<RuleId>>,
}

impl FastIndex {
    fn build(entries: Vec<(Vec<u8>, RuleId)>) -> Self {
        let mut by_pattern: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut patterns: Vec<Vec<u8>> = Vec::new();
        let mut rules: Vec<Vec<RuleId>> = Vec::new();
        for (p, id) in entries {
            let slot = *by_pattern.entry(p.clone()).or_insert_with(|| {
                patterns.push(p);
                rules.push(Vec::new());
                patterns.len() - 1
            });
            rules[slot].push(id);
        }
        FastIndex { automaton: AhoCorasick::new(&patterns), rules }
    }

    fn scan(&self, haystack: &[u8], mut f: impl FnMut(RuleId)) {
        if self.rules.is_empty() || haystack.is_empty() {
            return;
        }
        self.automaton.for_each_match(haystack, |p, _| {
            for &id in &self.rules[p as usize] {
                f(id);
            }
        });
    }
}

#[derive(Debug, Clone)]
struct Bucket {
    /// Fast patterns of rules that inspect the raw packet payload.
    packet: FastIndex,
    /// Fast patterns of `only_stream` rules, searched in reassembled bytes.
    stream: FastIndex,
    contentless: Vec<RuleId>,
}

/// Packet buckets a rule lands in: its own protocol's, or all four for `ip`.
fn bucket_indices(proto: RuleProto) -> std::ops::Range<usize> {
    match proto {
        RuleProto::Tcp => 0..1,
        RuleProto::Udp => 1..2,
        RuleProto::Icmp => 2..3,
        RuleProto::Ip => 0..4,
    }
}

/// Immutable, shareable ruleset: full rules plus the per-protocol fast-pattern
/// prefilter.
#[derive(Debug, Clone)]
pub struct CompiledRuleSet {
    rules: Vec<CompiledRule>,
    buckets: Vec<Bucket>,
    vars: Variables,
}

impl CompiledRuleSet {
    /// Each rule's fast pattern is its longest content; rules without one
    /// are evaluated on every packet of their protocol.
    pub fn compile(rules: &[Rule], vars: &Variables) -> Self {
        let compiled: Vec<CompiledRule> = rules.iter().cloned().map(|r| CompiledRule::new(r, vars)).collect();
        let mut packet: Vec<Vec<(Vec<u8>, RuleId)>> = vec![Vec::new(); 4];
        let mut stream: Vec<Vec<(Vec<u8>, RuleId)>> = vec![Vec::new(); 4];
        let mut contentless: Vec<Vec<RuleId>> = vec![Vec::new(); 4];
        for (id, c) in compiled.iter().enumerate() {
            for b in bucket_indices(c.rule.proto) {
                match c.rule.fast_pattern() {
                    Some(p) if c.rule.only_stream() => stream[b].push((p.to_vec(), id as RuleId)),
                    Some(p) => packet[b].push((p.to_vec(), id as RuleId)),
                    None => contentless[b].push(id as RuleId),
                }
            }
        }
        let buckets = packet
            .into_iter()
            .zip(stream)
            .zip(contentless)
            .map(|((p, s), c)| Bucket { packet: FastIndex::build(p), stream: FastIndex::build(s), contentless: c })
            .collect();
        CompiledRuleSet { rules: compiled, buckets, vars: vars.clone() }
    }

    pub fn empty() -> Self {
        CompiledRuleSet::compile(&[], &Variables::new())
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[CompiledRule] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> &CompiledRule {
        &self.rules[id as usize]
    }

    pub fn variables(&self) -> &Variables {
        &self.vars
    }

    /// Modelled protected-memory size of the loaded rules.
    pub fn footprint_bytes(&self) -> usize {
        self.rules.len() * RULE_FOOTPRINT_BYTES
    }

    /// Every rule id with its placement: `true` for the fast-pattern index,
    /// `false` for the contentless list. Each id appears exactly once.
    pub fn placements(&self) -> Vec<(RuleId, bool)> {
        let mut out = Vec::with_capacity(self.rules.len());
        for b in &self.buckets {
            for ix in [&b.packet, &b.stream] {
                out.extend(ix.rules.iter().flatten().map(|&id| (id, true)));
            }
            out.extend(b.contentless.iter().map(|&id| (id, false)));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn bucket_for(&self, proto: Proto) -> &Bucket {
        &self.buckets[match proto {
            Proto::Tcp => 0,
            Proto::Udp => 1,
            Proto::Icmp => 2,
            Proto::Other(_) => 3,
        }]
    }

    /// Phase-1 search: calls `f` for every rule whose fast pattern occurs in
    /// the buffer it inspects, plus every contentless rule of the protocol.
    /// A rule may be reported more than once; header filtering is left to the
    /// caller.
    pub fn scan(&self, proto: Proto, payload: &[u8], stream: Option<&[u8]>, mut f: impl FnMut(RuleId)) {
        let b = self.bucket_for(proto);
        b.packet.scan(payload, &mut f);
        if let Some(s) = stream {
            b.stream.scan(s, &mut f);
        }
        b.contentless.iter().copied().for_each(&mut f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{load_ruleset, parse_rule};

    fn t(proto: Proto, s: &str, sp: u16, d: &str, dp: u16) -> FiveTuple {
        FiveTuple::new(proto, s.parse().unwrap(), sp, d.parse().unwrap(), dp)
    }

    fn compile_one(line: &str, vars: &Variables) -> CompiledRule {
        CompiledRule::new(parse_rule(line).unwrap(), vars)
    }

    #[test]
    fn header_matching() {
        let mut vars = Variables::new();
        vars.set_addr("HOME_NET", "[10.0.0.0/8,!10.9.0.0/16]").unwrap();
        vars.set_port("HTTP_PORTS", "[80,8080:8090]").unwrap();
        let r = compile_one("alert tcp $EXTERNAL_NET any -> $HOME_NET $HTTP_PORTS (sid:1;)", &vars);
        assert!(r.header_matches(&t(Proto::Tcp, "1.2.3.4", 5000, "10.1.1.1", 80)));
        assert!(r.header_matches(&t(Proto::Tcp, "1.2.3.4", 5000, "10.1.1.1", 8085)));
        assert!(!r.header_matches(&t(Proto::Tcp, "1.2.3.4", 5000, "10.9.1.1", 80)));
        assert!(!r.header_matches(&t(Proto::Tcp, "1.2.3.4", 5000, "10.1.1.1", 443)));
        assert!(!r.header_matches(&t(Proto::Udp, "1.2.3.4", 5000, "10.1.1.1", 80)));
        // Unidirectional: the reply does not match.
        assert!(!r.header_matches(&t(Proto::Tcp, "10.1.1.1", 80, "11.2.3.4", 5000)));

        let bi = compile_one("alert tcp 10.0.0.1 any <> 10.0.0.2 80 (sid:2;)", &vars);
        assert!(bi.header_matches(&t(Proto::Tcp, "10.0.0.1", 999, "10.0.0.2", 80)));
        assert!(bi.header_matches(&t(Proto::Tcp, "10.0.0.2", 80, "10.0.0.1", 999)));
        assert!(!bi.header_matches(&t(Proto::Tcp, "10.0.0.2", 81, "10.0.0.1", 999)));

        let icmp = compile_one("alert icmp any 8 -> any any (sid:3;)", &vars);
        assert!(icmp.header_matches(&t(Proto::Icmp, "1.1.1.1", 0, "2.2.2.2", 0)));
        let ip = compile_one("alert ip !1.1.1.1 any -> any any (sid:4;)", &vars);
        assert!(ip.header_matches(&t(Proto::Udp, "3.3.3.3", 1, "2.2.2.2", 2)));
        assert!(!ip.header_matches(&t(Proto::Udp, "1.1.1.1", 1, "2.2.2.2", 2)));
    }

    #[test]
    fn unbound_variables_mean_any_and_negation_composes() {
        let mut vars = Variables::new();
        let r = compile_one("alert tcp $NOPE any -> any $NOPE_PORTS (sid:1;)", &vars);
        assert!(r.header_matches(&t(Proto::Tcp, "8.8.8.8", 1, "9.9.9.9", 2)));
        vars.set_addr("DNS", "192.168.0.53").unwrap();
        let r = compile_one("alert udp !$DNS any -> any any (sid:2;)", &vars);
        assert!(!r.header_matches(&t(Proto::Udp, "192.168.0.53", 1, "9.9.9.9", 2)));
        assert!(r.header_matches(&t(Proto::Udp, "192.168.0.54", 1, "9.9.9.9", 2)));
        // Self-referential bindings stop at the depth limit instead of looping.
        vars.set_addr("LOOP", "$LOOP").unwrap();
        let r = compile_one("alert udp $LOOP any -> any any (sid:3;)", &vars);
        assert!(r.header_matches(&t(Proto::Udp, "1.1.1.1", 1, "9.9.9.9", 2)));
    }

    #[test]
    fn placement_is_total_and_unique() {
        let set = load_ruleset(
            "alert tcp any any -> any any (content:\"abc\"; content:\"abcdef\"; sid:1;)\n\
             alert tcp any any -> any any (byte_test:1,>,3,0; flow:established; sid:2;)\n\
             alert udp any any -> any any (content:\"abc\"; sid:3;)\n\
             alert tcp any any -> any any (flow:only_stream; content:\"zz\"; sid:4;)\n\
             alert ip any any -> any any (content:!\"neg\"; sid:5;)\n",
        );
        let c = CompiledRuleSet::compile(&set.rules, &Variables::new());
        assert_eq!(c.placements(), vec![(0, true), (1, false), (2, true), (3, true), (4, false)]);
        assert_eq!(c.footprint_bytes(), 5 * RULE_FOOTPRINT_BYTES);
    }

    #[test]
    fn scan_reports_shared_patterns_and_routes_stream_rules() {
        let set = load_ruleset(
            "alert tcp any any -> any any (content:\"abc\"; sid:1;)\n\
             alert tcp any any -> any any (content:\"abc\"; sid:2;)\n\
             alert tcp any any -> any any (flow:only_stream; content:\"abc\"; sid:3;)\n\
             alert udp any any -> any any (content:\"abc\"; sid:4;)\n\
             alert ip any any -> any any (sid:5;)\n",
        );
        let c = CompiledRuleSet::compile(&set.rules, &Variables::new());
        let mut hits = Vec::new();
        c.scan(Proto::Tcp, b"xxabcxx", None, |id| hits.push(id));
        hits.sort();
        assert_eq!(hits, vec![0, 1, 4]);
        hits.clear();
        c.scan(Proto::Tcp, b"nothing", Some(b"abc"), |id| hits.push(id));
        hits.sort();
        assert_eq!(hits, vec![2, 4]);
        hits.clear();
        c.scan(Proto::Other(47), b"abc", None, |id| hits.push(id));
        assert_eq!(hits, vec![4]);
    }
}
