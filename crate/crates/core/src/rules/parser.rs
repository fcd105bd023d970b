use std::collections::HashSet;
use std::net::Ipv4Addr;

use thiserror::Error;

use super::{
    Action, AddrKind, AddrSpec, Arrow, ByteTest, CmpOp, Content, FlowOpt, PortKind, PortSpec, Rule, RuleOption,
    RuleProto,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {pos}: {msg}")]
pub struct ParseError {
    /// Byte offset into the line.
    pub pos: usize,
    pub msg: String,
}

fn err<T>(pos: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { pos, msg: msg.into() })
}

/// Rules of one file, in file order, plus the lines that failed to parse.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    /// `(line number starting at 1, error)`
    pub errors: Vec<(usize, ParseError)>,
}

impl RuleSet {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// The first `n` rules in file order.
    pub fn take_first(&self, n: usize) -> RuleSet {
        RuleSet { rules: self.rules.iter().take(n).cloned().collect(), errors: Vec::new() }
    }
}

/// Parses a rules file. Comment and blank lines are skipped; a bad line is
/// recorded and does not stop the load.
pub fn load_ruleset(text: &str) -> RuleSet {
    let mut set = RuleSet::default();
    let mut sids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match parse_rule(line) {
            Ok(rule) if !sids.insert(rule.sid) => {
                set.errors.push((i + 1, ParseError { pos: 0, msg: format!("duplicate sid {}", rule.sid) }))
            }
            Ok(rule) => set.rules.push(rule),
            Err(e) => set.errors.push((i + 1, e)),
        }
    }
    set
}

/// Splits `s` on `sep` where it is outside quotes and brackets. Yields
/// `(offset, piece)`.
fn split_top(s: &str, sep: impl Fn(char) -> bool) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut depth = 0i32;
    let mut in_quote = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '"' => in_quote = !in_quote,
            '[' if !in_quote => depth += 1,
            ']' if !in_quote => depth -= 1,
            c if !in_quote && depth == 0 && sep(c) => {
                out.push((start, &s[start..i]));
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push((start, &s[start..]));
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(n) = chars.next() {
                out.push(n);
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn unquote(s: &str) -> String {
    let t = s.trim();
    if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') {
        unescape(&t[1..t.len() - 1])
    } else {
        t.to_string()
    }
}

fn parse_addr(tok: &str, pos: usize) -> Result<AddrSpec, ParseError> {
    let tok = tok.trim();
    let (negated, body) = match tok.strip_prefix('!') {
        Some(rest) => (true, rest.trim()),
        None => (false, tok),
    };
    let kind = if body == "any" {
        AddrKind::Any
    } else if let Some(name) = body.strip_prefix('$') {
        if name.is_empty() {
            return err(pos, "empty variable name");
        }
        AddrKind::Var(name.to_string())
    } else if let Some(inner) = body.strip_prefix('[') {
        let Some(inner) = inner.strip_suffix(']') else {
            return err(pos, "unbalanced brackets in address list");
        };
        let items = split_top(inner, |c| c == ',')
            .into_iter()
            .filter(|(_, p)| !p.trim().is_empty())
            .map(|(o, p)| parse_addr(p, pos + 1 + o))
            .collect::<Result<Vec<_>, _>>()?;
        if items.is_empty() {
            return err(pos, "empty address list");
        }
        AddrKind::List(items)
    } else {
        let (ip, len) = match body.split_once('/') {
            Some((ip, len)) => {
                let len: u8 =
                    len.parse().map_err(|_| ParseError { pos, msg: format!("bad prefix length in {body:?}") })?;
                if len > 32 {
                    return err(pos, format!("prefix length {len} exceeds 32"));
                }
                (ip, len)
            }
            None => (body, 32),
        };
        let ip: Ipv4Addr = ip.parse().map_err(|_| ParseError { pos, msg: format!("bad address {body:?}") })?;
        AddrKind::Net(ip, len)
    };
    Ok(AddrSpec { negated, kind })
}

fn parse_port_num(s: &str, pos: usize) -> Result<u16, ParseError> {
    s.trim().parse().map_err(|_| ParseError { pos, msg: format!("bad port {s:?}") })
}

fn parse_port(tok: &str, pos: usize) -> Result<PortSpec, ParseError> {
    let tok = tok.trim();
    let (negated, body) = match tok.strip_prefix('!') {
        Some(rest) => (true, rest.trim()),
        None => (false, tok),
    };
    let kind = if body == "any" {
        PortKind::Any
    } else if let Some(name) = body.strip_prefix('$') {
        if name.is_empty() {
            return err(pos, "empty variable name");
        }
        PortKind::Var(name.to_string())
    } else if let Some(inner) = body.strip_prefix('[') {
        let Some(inner) = inner.strip_suffix(']') else {
            return err(pos, "unbalanced brackets in port list");
        };
        let items = split_top(inner, |c| c == ',')
            .into_iter()
            .filter(|(_, p)| !p.trim().is_empty())
            .map(|(o, p)| parse_port(p, pos + 1 + o))
            .collect::<Result<Vec<_>, _>>()?;
        if items.is_empty() {
            return err(pos, "empty port list");
        }
        PortKind::List(items)
    } else if let Some((lo, hi)) = body.split_once(':') {
        let lo = if lo.trim().is_empty() { 0 } else { parse_port_num(lo, pos)? };
        let hi = if hi.trim().is_empty() { 65535 } else { parse_port_num(hi, pos)? };
        if lo > hi {
            return err(pos, format!("empty port range {body:?}"));
        }
        PortKind::Range(lo, hi)
    } else {
        let p = parse_port_num(body, pos)?;
        PortKind::Range(p, p)
    };
    Ok(PortSpec { negated, kind })
}

/// Address expression outside a rule, e.g. a variable binding.
pub(crate) fn parse_addr_text(text: &str) -> Result<AddrSpec, ParseError> {
    parse_addr(text, 0)
}

pub(crate) fn parse_port_text(text: &str) -> Result<PortSpec, ParseError> {
    parse_port(text, 0)
}

/// Decodes the inside of a quoted content string: `|..|` spans are hex.
fn decode_pattern(s: &str, pos: usize) -> Result<Vec<u8>, ParseError> {
    let mut out = Vec::with_capacity(s.len());
    let mut hex = false;
    let mut nibble: Option<u8> = None;
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if hex {
            match c {
                '|' => {
                    if nibble.is_some() {
                        return err(pos, "odd number of hex digits in content");
                    }
                    hex = false;
                }
                c if c.is_ascii_whitespace() => {}
                c => {
                    let Some(d) = c.to_digit(16) else {
                        return err(pos, format!("bad hex digit {c:?} in content"));
                    };
                    match nibble.take() {
                        Some(hi) => out.push(hi << 4 | d as u8),
                        None => nibble = Some(d as u8),
                    }
                }
            }
        } else {
            match c {
                '|' => hex = true,
                '\\' => {
                    let Some(n) = chars.next() else {
                        return err(pos, "dangling escape in content");
                    };
                    let mut buf = [0u8; 4];
                    out.extend_from_slice(n.encode_utf8(&mut buf).as_bytes());
                }
                c => {
                    let mut buf = [0u8; 4];
                    out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                }
            }
        }
    }
    if hex {
        return err(pos, "unterminated hex span in content");
    }
    Ok(out)
}

/// Applies a positional modifier (`depth`, `offset`, `distance`, `within`)
/// or records an unsupported one.
fn apply_modifier(c: &mut Content, word: &str, arg: Option<&str>, pos: usize) -> Result<(), ParseError> {
    let relative_kw = matches!(word, "distance" | "within");
    let absolute_kw = matches!(word, "depth" | "offset");
    if !(relative_kw || absolute_kw) {
        c.modifiers.push(match arg {
            Some(a) => format!("{word} {a}"),
            None => word.to_string(),
        });
        return Ok(());
    }
    let Some(arg) = arg.map(str::trim) else {
        return err(pos, format!("{word} needs a value"));
    };
    let positioned = c.offset.is_some() || c.depth.is_some();
    if positioned && c.relative != relative_kw {
        return err(pos, "content mixes absolute and relative modifiers");
    }
    let value = match word {
        "offset" | "distance" => arg.parse::<i32>().ok().map(|v| c.offset = Some(v)),
        _ => arg.parse::<u32>().ok().map(|v| c.depth = Some(v)),
    };
    if value.is_none() {
        // Variable references (byte_extract) are outside the subset.
        c.modifiers.push(format!("{word} {arg}"));
        return Ok(());
    }
    c.relative = relative_kw;
    Ok(())
}

fn parse_content(val: &str, pos: usize) -> Result<Content, ParseError> {
    let mut v = val.trim();
    let negated = if let Some(rest) = v.strip_prefix('!') {
        v = rest.trim_start();
        true
    } else {
        false
    };
    let Some(inner) = v.strip_prefix('"') else {
        return err(pos, "content must be a quoted string");
    };
    let mut close = None;
    let mut escaped = false;
    for (i, c) in inner.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '"' {
            close = Some(i);
            break;
        }
    }
    let Some(close) = close else {
        return err(pos, "unterminated content string");
    };
    let pattern = decode_pattern(&inner[..close], pos)?;
    if pattern.is_empty() {
        return err(pos, "empty content pattern");
    }
    let mut content = Content { negated, ..Content::new(pattern) };
    let rest = inner[close + 1..].trim();
    if !rest.is_empty() {
        let Some(mods) = rest.strip_prefix(',') else {
            return err(pos, "unexpected text after content string");
        };
        for (_, m) in split_top(mods, |c| c == ',') {
            let m = m.trim();
            if m.is_empty() {
                continue;
            }
            let (word, arg) = match m.split_once(char::is_whitespace) {
                Some((w, a)) => (w, Some(a)),
                None => (m, None),
            };
            apply_modifier(&mut content, word, arg, pos)?;
        }
    }
    Ok(content)
}

fn parse_byte_test(val: &str) -> Option<ByteTest> {
    let parts: Vec<&str> = val.split(',').map(str::trim).collect();
    if parts.len() < 4 {
        return None;
    }
    let nbytes: u8 = parts[0].parse().ok()?;
    if !matches!(nbytes, 1 | 2 | 4) {
        return None;
    }
    let op = match parts[1] {
        ">" => CmpOp::Gt,
        "<" => CmpOp::Lt,
        "=" => CmpOp::Eq,
        _ => return None,
    };
    let value = match parts[2].strip_prefix("0x").or_else(|| parts[2].strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(h, 16).ok()?,
        None => parts[2].parse().ok()?,
    };
    let offset: i32 = parts[3].parse().ok()?;
    let mut relative = false;
    for flag in &parts[4..] {
        match *flag {
            "relative" => relative = true,
            "big" => {}
            _ => return None,
        }
    }
    Some(ByteTest { nbytes, op, value, offset, relative })
}

fn parse_flow(val: &str) -> FlowOpt {
    let mut f = FlowOpt::default();
    for w in val.split(',').map(str::trim).filter(|w| !w.is_empty()) {
        match w {
            "to_client" | "from_server" => f.to_client = true,
            "to_server" | "from_client" => f.to_server = true,
            "established" => f.established = true,
            "only_stream" => f.only_stream = true,
            other => f.other.push(other.to_string()),
        }
    }
    f
}

/// Parses one rule line.
pub fn parse_rule(line: &str) -> Result<Rule, ParseError> {
    let lead = line.len() - line.trim_start().len();
    let text = line.trim();
    let Some(open) = text.find('(') else {
        return err(lead + text.len(), "missing option block");
    };

    // Header.
    let header = &text[..open];
    let toks: Vec<(usize, &str)> =
        split_top(header, char::is_whitespace).into_iter().filter(|(_, t)| !t.is_empty()).collect();
    if toks.len() != 7 {
        return err(lead, format!("header needs 7 fields, found {}", toks.len()));
    }
    let at = |i: usize| lead + toks[i].0;
    let action = match toks[0].1 {
        "alert" => Action::Alert,
        "drop" | "block" => Action::Drop,
        other => return err(at(0), format!("unsupported action {other:?}")),
    };
    let proto = match toks[1].1 {
        "tcp" => RuleProto::Tcp,
        "udp" => RuleProto::Udp,
        "icmp" => RuleProto::Icmp,
        "ip" => RuleProto::Ip,
        other => return err(at(1), format!("unsupported protocol {other:?}")),
    };
    let src_net = parse_addr(toks[2].1, at(2))?;
    let src_ports = parse_port(toks[3].1, at(3))?;
    let arrow = match toks[4].1 {
        "->" => Arrow::Unidirectional,
        "<>" => Arrow::Bidirectional,
        other => return err(at(4), format!("bad direction {other:?}")),
    };
    let dst_net = parse_addr(toks[5].1, at(5))?;
    let dst_ports = parse_port(toks[6].1, at(6))?;

    // Option block: find the closing paren outside quotes.
    let body_start = open + 1;
    let mut close = None;
    let mut in_quote = false;
    let mut escaped = false;
    for (i, c) in text[body_start..].char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '"' => in_quote = !in_quote,
            ')' if !in_quote => close = Some(body_start + i),
            _ => {}
        }
    }
    if in_quote {
        return err(lead + text.len(), "unterminated quoted string");
    }
    let Some(close) = close else {
        return err(lead + text.len(), "unbalanced parentheses: missing ')'");
    };
    if !text[close + 1..].trim().is_empty() {
        return err(lead + close + 1, "text after closing ')'");
    }

    let body = &text[body_start..close];
    let mut rule = Rule {
        action,
        proto,
        src_net,
        src_ports,
        arrow,
        dst_net,
        dst_ports,
        options: Vec::new(),
        sid: 0,
        rev: 0,
        msg: String::new(),
        classtype: String::new(),
        metadata: None,
        service: None,
        references: Vec::new(),
    };
    let mut sid = None;
    for (off, opt) in split_top(body, |c| c == ';') {
        let opt = opt.trim();
        if opt.is_empty() {
            continue;
        }
        let pos = lead + body_start + off;
        let (kw, val) = match split_top(opt, |c| c == ':').first() {
            Some(&(_, k)) if k.len() < opt.len() => (k.trim(), Some(opt[k.len() + 1..].trim())),
            _ => (opt, None),
        };
        match (kw, val) {
            ("msg", Some(v)) => rule.msg = unquote(v),
            ("sid", Some(v)) => {
                sid = Some(v.parse::<u32>().map_err(|_| ParseError { pos, msg: format!("bad sid {v:?}") })?)
            }
            ("rev", Some(v)) => rule.rev = v.parse().map_err(|_| ParseError { pos, msg: format!("bad rev {v:?}") })?,
            ("classtype", Some(v)) => rule.classtype = v.to_string(),
            ("metadata", Some(v)) => rule.metadata = Some(v.to_string()),
            ("service", Some(v)) => rule.service = Some(v.to_string()),
            ("reference", Some(v)) => rule.references.push(v.to_string()),
            ("content", Some(v)) => rule.options.push(RuleOption::Content(parse_content(v, pos)?)),
            ("flow", Some(v)) => rule.options.push(RuleOption::Flow(parse_flow(v))),
            ("byte_test", Some(v)) => rule.options.push(match parse_byte_test(v) {
                Some(bt) => RuleOption::ByteTest(bt),
                None => RuleOption::Opaque { keyword: kw.to_string(), value: Some(v.to_string()) },
            }),
            ("depth" | "offset" | "distance" | "within" | "nocase" | "rawbytes" | "fast_pattern", _)
                if matches!(rule.options.last(), Some(RuleOption::Content(_))) =>
            {
                let Some(RuleOption::Content(c)) = rule.options.last_mut() else { unreachable!() };
                apply_modifier(c, kw, val, pos)?;
            }
            (kw, val) => {
                if kw.is_empty() || kw.contains(char::is_whitespace) {
                    return err(pos, format!("malformed option {opt:?}"));
                }
                rule.options.push(RuleOption::Opaque { keyword: kw.to_string(), value: val.map(str::to_string) })
            }
        }
    }
    let Some(sid) = sid else {
        return err(lead + close, "missing sid");
    };
    rule.sid = sid;
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    use super::super::HEARTBLEED_RULE as HEARTBLEED;

    #[test]
    fn heartbleed_rule() {
        let r = parse_rule(HEARTBLEED).unwrap();
        assert_eq!(r.action, Action::Alert);
        assert_eq!(r.proto, RuleProto::Tcp);
        assert_eq!(r.src_net.kind, AddrKind::Var("HOME_NET".into()));
        assert_eq!(r.dst_net.kind, AddrKind::Var("EXTERNAL_NET".into()));
        assert_eq!(r.dst_ports, PortSpec::any());
        let PortKind::List(ports) = &r.src_ports.kind else { panic!("port list") };
        assert_eq!(ports.len(), 9);
        assert!(ports.contains(&PortSpec { negated: false, kind: PortKind::Range(443, 443) }));
        assert_eq!(r.sid, 30514);
        assert_eq!(r.rev, 9);
        assert_eq!(r.classtype, "attempted-recon");
        assert_eq!(r.service.as_deref(), Some("ssl"));
        assert_eq!(r.references, vec!["cve,2014-0160".to_string()]);
        assert!(r.drops_inline());
        let expected_content = Content { depth: Some(3), ..Content::new(vec![0x18, 0x03, 0x00]) };
        let expected_flow = FlowOpt { to_client: true, established: true, only_stream: true, ..FlowOpt::default() };
        assert_eq!(
            r.options,
            vec![
                RuleOption::Flow(expected_flow),
                RuleOption::Content(expected_content),
                RuleOption::ByteTest(ByteTest { nbytes: 2, op: CmpOp::Gt, value: 128, offset: 0, relative: true }),
            ]
        );
        assert_eq!(r.opaque_count(), 0);
    }

    #[test]
    fn minimal_rule() {
        let r = parse_rule(r#"alert tcp any any -> any any (msg:"x"; content:"abc"; sid:1;)"#).unwrap();
        assert_eq!(r.sid, 1);
        assert_eq!(r.msg, "x");
        assert_eq!(r.fast_pattern(), Some(&b"abc"[..]));
        assert!(!r.drops_inline());
    }

    #[test]
    fn errors() {
        let e = parse_rule(r#"alert tcp any any -> any any (msg:"x";)"#).unwrap_err();
        assert_eq!(e.msg, "missing sid");
        assert!(parse_rule(r#"alert tcp any any -> any any (msg:"x"; sid:1;"#).is_err());
        assert!(parse_rule(r#"alert tcp any any -> any any (msg:"x; sid:1;)"#).is_err());
        assert!(parse_rule(r#"alert tcp any any any any (sid:1;)"#).is_err());
        assert!(parse_rule(r#"pass tcp any any -> any any (sid:1;)"#).is_err());
        assert!(parse_rule(r#"alert tcp any any -> any any (content:""; sid:1;)"#).is_err());
        assert!(parse_rule(r#"alert tcp any any -> any any (content:"|4|"; sid:1;)"#).is_err());
        assert!(parse_rule(r#"alert tcp 1.2.3.4/40 any -> any any (sid:1;)"#).is_err());
        assert!(parse_rule(r#"alert http (msg:"svc rule"; sid:1;)"#).is_err());
        let e = parse_rule(r#"alert tcp any any -> any any (content:"a",depth 3,within 4; sid:1;)"#).unwrap_err();
        assert!(e.msg.contains("mixes"));
    }

    #[test]
    fn snort2_style_modifiers_attach_to_previous_content() {
        let r = parse_rule(
            r#"alert tcp $EXTERNAL_NET any -> $HOME_NET 80 (msg:"a\;b"; content:"GET "; depth:4; content:"/x.php"; distance:0; within:40; nocase; pcre:"/x\.php\?a=(\d+);/i"; sid:2; rev:1;)"#,
        )
        .unwrap();
        assert_eq!(r.msg, "a;b");
        let cs: Vec<&Content> = r.contents().collect();
        assert_eq!(cs[0].depth, Some(4));
        assert!(!cs[0].relative);
        assert_eq!((cs[1].offset, cs[1].depth, cs[1].relative), (Some(0), Some(40), true));
        assert_eq!(cs[1].modifiers, vec!["nocase".to_string()]);
        assert!(matches!(&r.options[2], RuleOption::Opaque { keyword, .. } if keyword == "pcre"));
        assert_eq!(r.opaque_count(), 2);
    }

    #[test]
    fn addresses_and_ports() {
        let r = parse_rule(r#"alert udp [10.0.0.0/8,!10.1.0.0/16] 1024: <> !$DNS_SERVERS [53,:10,!5353] (sid:3;)"#)
            .unwrap();
        assert_eq!(r.arrow, Arrow::Bidirectional);
        let AddrKind::List(items) = &r.src_net.kind else { panic!() };
        assert_eq!(items[1], AddrSpec { negated: true, kind: AddrKind::Net("10.1.0.0".parse().unwrap(), 16) });
        assert_eq!(r.src_ports.kind, PortKind::Range(1024, 65535));
        assert!(r.dst_net.negated);
        let PortKind::List(ps) = &r.dst_ports.kind else { panic!() };
        assert_eq!(ps[1].kind, PortKind::Range(0, 10));
        assert!(ps[2].negated);
    }

    #[test]
    fn unsupported_byte_test_is_opaque() {
        let r = parse_rule(r#"alert tcp any any -> any any (byte_test:4,>,1000,0,relative,little; byte_test:3,=,1,0; byte_test:1,&,1,0; sid:4;)"#).unwrap();
        assert!(r.options.iter().all(|o| matches!(o, RuleOption::Opaque { .. })));
        let r = parse_rule(r#"alert tcp any any -> any any (byte_test:1,=,0x7f,2; sid:5;)"#).unwrap();
        assert_eq!(
            r.options,
            vec![RuleOption::ByteTest(ByteTest { nbytes: 1, op: CmpOp::Eq, value: 127, offset: 2, relative: false })]
        );
    }

    #[test]
    fn negated_content_and_hex_escapes() {
        let r = parse_rule(r#"alert tcp any any -> any any (content:!"a|0d 0A|b\"c"; content:"zz"; sid:6;)"#).unwrap();
        let cs: Vec<&Content> = r.contents().collect();
        assert!(cs[0].negated);
        assert_eq!(cs[0].pattern, b"a\r\nb\"c");
        assert_eq!(r.fast_pattern(), Some(&b"zz"[..]));
    }

    #[test]
    fn longest_content_is_fast_pattern() {
        let r =
            parse_rule(r#"alert tcp any any -> any any (content:"abc"; content:"abcdef"; content:"uvwxyz"; sid:7;)"#)
                .unwrap();
        assert_eq!(r.fast_pattern(), Some(&b"abcdef"[..]));
    }

    #[test]
    fn load_skips_comments_and_collects_errors() {
        let text = "# comment\n\nalert tcp any any -> any any (sid:1;)\n  # indented comment\nalert tcp any any -> any any (msg:\"no sid\";)\nalert udp any any -> any any (sid:2;)\nalert icmp any any -> any any (sid:3;)\nalert ip any any -> any any (sid:3;)\n";
        let set = load_ruleset(text);
        assert_eq!(set.len(), 3);
        assert_eq!(set.errors.len(), 2);
        assert_eq!(set.errors[0].0, 5);
        assert!(set.errors[1].1.msg.contains("duplicate sid"));
        let first = set.take_first(2);
        assert_eq!(first.rules.iter().map(|r| r.sid).collect::<Vec<_>>(), vec![1, 2]);
        assert!(load_ruleset("").is_empty());
    }

    #[test]
    fn normalized_form_reparses_identically() {
        for line in [
            HEARTBLEED,
            r#"alert tcp $EXTERNAL_NET any -> $HOME_NET $HTTP_PORTS (msg:"a\;b \"q\""; flow:to_server,established; content:"GET "; depth:4; content:"|00 01|x|ff|"; distance:-2; within:40; nocase; pcre:"/a;b/"; sid:2; rev:1;)"#,
            r#"drop udp [10.0.0.0/8,!10.1.0.0/16] 1024: <> any [53,:10,!5353] (content:!"no"; isdataat:5,relative; sid:3;)"#,
        ] {
            let r = parse_rule(line).unwrap();
            let again = parse_rule(&r.to_string()).unwrap();
            assert_eq!(again, r, "normalized: {r}");
        }
    }
}
