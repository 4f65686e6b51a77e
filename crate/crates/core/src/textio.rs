//! Text formats: the automaton file, its canonical serialization and hash,
//! and the certificate file.

use std::collections::BTreeMap;

use num_traits::Zero;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ModelError, PairIndex, Ppda, Push, Transition, TriIndex, ValidationMode};
use crate::rational::{format_exact, parse_rational, Rational};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn syntax(line: usize, msg: impl Into<String>) -> TextError {
    TextError::Syntax {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedModel {
    pub ppda: Ppda,
    /// Pairs with no transitions, in index order; empty in strict mode.
    pub deadlocked: Vec<PairIndex>,
}

/// Parses the automaton format: `# comment` lines, one `states:` line, one
/// `alphabet:` line, and `trans <p> <Z> <weight> <q> <push>` lines where
/// `<push>` is `-`, one symbol, or two symbols.
pub fn parse_ppda(text: &str, mode: ValidationMode) -> Result<ParsedModel, TextError> {
    let mut states: Option<(usize, Vec<String>)> = None;
    let mut alphabet: Option<(usize, Vec<String>)> = None;
    let mut trans_lines: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_string()).collect();
        match tokens[0].as_str() {
            "states:" => {
                if states.is_some() {
                    return Err(syntax(lineno, "duplicate `states:` line"));
                }
                if tokens.len() < 2 {
                    return Err(syntax(lineno, "`states:` line declares no states"));
                }
                states = Some((lineno, tokens[1..].to_vec()));
            }
            "alphabet:" => {
                if alphabet.is_some() {
                    return Err(syntax(lineno, "duplicate `alphabet:` line"));
                }
                if tokens.len() < 2 {
                    return Err(syntax(lineno, "`alphabet:` line declares no symbols"));
                }
                alphabet = Some((lineno, tokens[1..].to_vec()));
            }
            "trans" => trans_lines.push((lineno, tokens)),
            other => {
                return Err(syntax(
                    lineno,
                    format!("unknown directive `{other}`; expected `states:`, `alphabet:` or `trans`"),
                ))
            }
        }
    }
    let (_, states) = states.ok_or_else(|| syntax(1, "missing `states:` line"))?;
    let (_, alphabet) = alphabet.ok_or_else(|| syntax(1, "missing `alphabet:` line"))?;
    let mut transitions = Vec::with_capacity(trans_lines.len());
    for (lineno, tokens) in trans_lines {
        if !(6..=7).contains(&tokens.len()) {
            return Err(syntax(
                lineno,
                "expected `trans <p> <Z> <weight> <q> <push>` with a 1- or 2-symbol or `-` push",
            ));
        }
        let check_state = |name: &str| {
            if states.iter().any(|s| s == name) {
                Ok(name.to_string())
            } else {
                Err(syntax(lineno, format!("undeclared state `{name}`")))
            }
        };
        let check_symbol = |name: &str| {
            if alphabet.iter().any(|s| s == name) {
                Ok(name.to_string())
            } else {
                Err(syntax(lineno, format!("undeclared stack symbol `{name}`")))
            }
        };
        let src = check_state(&tokens[1])?;
        let symbol = check_symbol(&tokens[2])?;
        let weight = parse_rational(&tokens[3]).map_err(|e| syntax(lineno, e.to_string()))?;
        let dst = check_state(&tokens[4])?;
        let push = match &tokens[5..] {
            [dash] if dash == "-" => Push::Empty,
            [one] => Push::One(check_symbol(one)?),
            [a, b] => Push::Two(check_symbol(a)?, check_symbol(b)?),
            _ => unreachable!("token count checked above"),
        };
        transitions.push(Transition {
            src,
            symbol,
            weight,
            dst,
            push,
        });
    }
    let ppda = Ppda {
        states,
        alphabet,
        transitions,
    };
    let deadlocked = ppda.validate(mode)?;
    Ok(ParsedModel { ppda, deadlocked })
}

/// Canonical rendering: fixed line order, single spaces, exact rationals.
/// Comments and incidental whitespace of the source do not survive, so the
/// hash of the canonical form is stable under such edits.
pub fn serialize_ppda(ppda: &Ppda) -> String {
    let mut out = String::new();
    out.push_str("states:");
    for s in &ppda.states {
        out.push(' ');
        out.push_str(s);
    }
    out.push('\n');
    out.push_str("alphabet:");
    for z in &ppda.alphabet {
        out.push(' ');
        out.push_str(z);
    }
    out.push('\n');
    for t in &ppda.transitions {
        let push = match &t.push {
            Push::Empty => "-".to_string(),
            Push::One(a) => a.clone(),
            Push::Two(a, b) => format!("{a} {b}"),
        };
        out.push_str(&format!(
            "trans {} {} {} {} {}\n",
            t.src,
            t.symbol,
            format_exact(&t.weight),
            t.dst,
            push
        ));
    }
    out
}

/// Hex digest of the canonical serialization.
pub fn model_hash(ppda: &Ppda) -> String {
    let digest = Sha256::digest(serialize_ppda(ppda).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertKind {
    Upper,
    Lower,
    Past,
    Cpast,
}

impl CertKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertKind::Upper => "upper",
            CertKind::Lower => "lower",
            CertKind::Past => "past",
            CertKind::Cpast => "cpast",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "upper" => Some(CertKind::Upper),
            "lower" => Some(CertKind::Lower),
            "past" => Some(CertKind::Past),
            "cpast" => Some(CertKind::Cpast),
            _ => None,
        }
    }
}

/// Certificate file contents. Zero-valued `u`/`l` entries are normalized
/// away on both parse and serialize, so round-tripping is exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertFile {
    pub kind: CertKind,
    pub model_hash: String,
    pub strict: bool,
    pub u: BTreeMap<TriIndex, Rational>,
    pub l: BTreeMap<TriIndex, Rational>,
    pub r: BTreeMap<PairIndex, Rational>,
    pub v: BTreeMap<TriIndex, Rational>,
}

impl CertFile {
    pub fn new(kind: CertKind, model_hash: String) -> Self {
        CertFile {
            kind,
            model_hash,
            strict: false,
            u: BTreeMap::new(),
            l: BTreeMap::new(),
            r: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// Parses the certificate format: header `cert <kind> v1`, `model <hex>`,
/// optional `strict`, then `u|l|v <p> <Z> <q> <weight>` and `r <p> <Z> <weight>`
/// entry lines.
pub fn parse_cert(text: &str) -> Result<CertFile, TextError> {
    let mut cert: Option<CertFile> = None;
    let mut seen_model = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let Some(cert) = cert.as_mut() else {
            // first meaningful line must be the header
            if tokens.len() == 3 && tokens[0] == "cert" && tokens[2] == "v1" {
                if let Some(kind) = CertKind::parse(tokens[1]) {
                    cert = Some(CertFile::new(kind, String::new()));
                    continue;
                }
            }
            return Err(syntax(lineno, "expected header `cert <upper|lower|past|cpast> v1`"));
        };
        match tokens[0] {
            "model" => {
                if seen_model || tokens.len() != 2 {
                    return Err(syntax(lineno, "expected a single `model <hex>` line"));
                }
                cert.model_hash = tokens[1].to_string();
                seen_model = true;
            }
            "strict" => {
                if cert.kind != CertKind::Upper || tokens.len() != 1 {
                    return Err(syntax(lineno, "`strict` applies to upper certificates only"));
                }
                cert.strict = true;
            }
            tag @ ("u" | "l" | "v") => {
                if tokens.len() != 5 {
                    return Err(syntax(lineno, format!("expected `{tag} <p> <Z> <q> <weight>`")));
                }
                let allowed = match tag {
                    "u" => true,
                    "l" => cert.kind == CertKind::Lower,
                    _ => cert.kind == CertKind::Cpast,
                };
                if !allowed {
                    return Err(syntax(
                        lineno,
                        format!("`{tag}` entries are not part of a {} certificate", cert.kind.as_str()),
                    ));
                }
                let key = TriIndex::new(tokens[1], tokens[2], tokens[3]);
                let value =
                    parse_rational(tokens[4]).map_err(|e| syntax(lineno, e.to_string()))?;
                let map = match tag {
                    "u" => &mut cert.u,
                    "l" => &mut cert.l,
                    _ => &mut cert.v,
                };
                if map.contains_key(&key) {
                    return Err(syntax(lineno, format!("duplicate `{tag}` entry for {key}")));
                }
                if !(value.is_zero() && (tag == "u" || tag == "l")) {
                    map.insert(key, value);
                }
            }
            "r" => {
                if cert.kind != CertKind::Past {
                    return Err(syntax(lineno, "`r` entries belong to past certificates only"));
                }
                if tokens.len() != 4 {
                    return Err(syntax(lineno, "expected `r <p> <Z> <weight>`"));
                }
                let key = PairIndex::new(tokens[1], tokens[2]);
                let value =
                    parse_rational(tokens[3]).map_err(|e| syntax(lineno, e.to_string()))?;
                if cert.r.contains_key(&key) {
                    return Err(syntax(lineno, format!("duplicate `r` entry for {key}")));
                }
                cert.r.insert(key, value);
            }
            other => return Err(syntax(lineno, format!("unknown entry tag `{other}`"))),
        }
    }
    let cert = cert.ok_or_else(|| syntax(1, "empty certificate file"))?;
    if !seen_model {
        return Err(syntax(1, "missing `model <hex>` line"));
    }
    Ok(cert)
}

pub fn serialize_cert(cert: &CertFile) -> String {
    let mut out = format!("cert {} v1\nmodel {}\n", cert.kind.as_str(), cert.model_hash);
    if cert.strict {
        out.push_str("strict\n");
    }
    for (tag, map) in [("u", &cert.u), ("l", &cert.l)] {
        for (k, val) in map {
            if val.is_zero() {
                continue;
            }
            out.push_str(&format!("{tag} {} {} {} {}\n", k.p, k.z, k.q, format_exact(val)));
        }
    }
    for (k, val) in &cert.r {
        out.push_str(&format!("r {} {} {}\n", k.p, k.z, format_exact(val)));
    }
    for (k, val) in &cert.v {
        out.push_str(&format!("v {} {} {} {}\n", k.p, k.z, k.q, format_exact(val)));
    }
    out
}
