//! Line-oriented model text format.
//!
//! ```text
//! version 1
//! base_score 0x0p+0
//! loss logistic
//! features 28
//! trees 2
//! tree 0
//! N 0 3 0x1.8p+0 R 1 2
//! L 1 0x1.999999999999ap-4
//! L 2 -0x1.999999999999ap-4
//! tree 1
//! ...
//! ```
//!
//! `N <id> <feature> <threshold> <default L|R> <left> <right>` is a split and
//! `L <id> <weight>` a leaf. Reals are C-style hexadecimal floats so every
//! bit survives the round trip.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::objective::LossKind;
use crate::tree::{Tree, TreeEnsemble, TreeNode};

pub const MODEL_VERSION: u32 = 1;

/// Formats `x` as a hexadecimal float (`0x1.8p+0`, `-0x0p+0`, `inf`).
pub fn format_hex(x: f64) -> String {
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    if digits.is_empty() {
        format!("{sign}0x{lead}p{e:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{e:+}")
    }
}

/// Parses the output of [`format_hex`].
pub fn parse_hex(s: &str) -> Option<f64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let apply = |v: f64| if neg { -v } else { v };
    if body == "inf" {
        return Some(apply(f64::INFINITY));
    }
    let body = body.strip_prefix("0x")?;
    let (mant, exp) = body.split_once('p')?;
    let e: i32 = exp.parse().ok()?;
    let (lead, digits) = match mant.split_once('.') {
        Some((l, d)) => (l, d),
        None => (mant, ""),
    };
    if digits.len() > 13 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    let frac = if digits.is_empty() {
        0
    } else {
        u64::from_str_radix(digits, 16).ok()? << (4 * (13 - digits.len()))
    };
    let bits = match lead {
        "1" => {
            let biased = e + 1023;
            if !(1..=2046).contains(&biased) {
                return None;
            }
            ((biased as u64) << 52) | frac
        }
        "0" if frac == 0 => 0,
        "0" if e == -1022 => frac,
        _ => return None,
    };
    Some(apply(f64::from_bits(bits)))
}

pub fn write_model<W: Write>(model: &TreeEnsemble, mut out: W) -> std::io::Result<()> {
    writeln!(out, "version {MODEL_VERSION}")?;
    writeln!(out, "base_score {}", format_hex(model.base_score()))?;
    writeln!(out, "loss {}", model.loss())?;
    writeln!(out, "features {}", model.n_features())?;
    writeln!(out, "trees {}", model.trees().len())?;
    for (i, tree) in model.trees().iter().enumerate() {
        writeln!(out, "tree {i}")?;
        for (id, node) in tree.nodes().iter().enumerate() {
            match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => writeln!(
                    out,
                    "N {id} {feature} {} {} {left} {right}",
                    format_hex(threshold),
                    if default_left { 'L' } else { 'R' }
                )?,
                TreeNode::Leaf { weight } => writeln!(out, "L {id} {}", format_hex(weight))?,
            }
        }
    }
    Ok(())
}

pub fn model_to_string(model: &TreeEnsemble) -> String {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("model text is ascii")
}

pub fn save_model(model: &TreeEnsemble, path: &Path) -> Result<()> {
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TreeEnsemble> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(f))
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Model {
        line,
        message: message.into(),
    }
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<Option<String>> {
        match self.inner.next() {
            None => Ok(None),
            Some(Ok(l)) => {
                self.number += 1;
                Ok(Some(l.trim_end_matches('\r').to_string()))
            }
            Some(Err(e)) => Err(Error::Model {
                line: self.number + 1,
                message: e.to_string(),
            }),
        }
    }

    fn header<'a>(&mut self, key: &str, buf: &'a mut String) -> Result<&'a str> {
        let Some(line) = self.next()? else {
            return Err(bad(self.number + 1, format!("missing `{key}` line")));
        };
        *buf = line;
        match buf.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim()),
            _ => Err(bad(self.number, format!("expected `{key} <value>`"))),
        }
    }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| bad(line, format!("bad {what}")))
}

fn hex(tok: Option<&str>, line: usize, what: &str) -> Result<f64> {
    tok.and_then(parse_hex)
        .ok_or_else(|| bad(line, format!("bad {what}")))
}

pub fn read_model<R: BufRead>(reader: R) -> Result<TreeEnsemble> {
    let mut lines = Lines {
        inner: reader.lines(),
        number: 0,
    };
    let mut buf = String::new();
    let version = lines.header("version", &mut buf)?;
    if version != MODEL_VERSION.to_string() {
        return Err(Error::Version(format!(
            "model format version `{version}` is not supported (expected {MODEL_VERSION})"
        )));
    }
    let base = lines.header("base_score", &mut buf)?;
    let base = hex(Some(base), lines.number, "base_score")?;
    let loss: LossKind = lines
        .header("loss", &mut buf)?
        .parse()
        .map_err(|_| bad(lines.number, "unknown loss"))?;
    let features: usize = num(Some(lines.header("features", &mut buf)?), lines.number, "feature count")?;
    let n_trees: usize = num(Some(lines.header("trees", &mut buf)?), lines.number, "tree count")?;

    let mut model = TreeEnsemble::new(loss, features, base);
    let mut pending = lines.next()?;
    for t in 0..n_trees {
        let Some(line) = pending.take() else {
            return Err(bad(lines.number + 1, format!("missing tree {t}")));
        };
        if line != format!("tree {t}") {
            return Err(bad(lines.number, format!("expected `tree {t}`")));
        }
        let start = lines.number;
        let mut nodes = Vec::new();
        loop {
            pending = lines.next()?;
            let Some(line) = pending.as_deref() else { break };
            if line.starts_with("tree ") {
                break;
            }
            let ln = lines.number;
            let mut tok = line.split_ascii_whitespace();
            let kind = tok.next();
            let id: usize = num(tok.next(), ln, "node id")?;
            if id != nodes.len() {
                return Err(bad(ln, format!("node id {id} out of sequence")));
            }
            let node = match kind {
                Some("N") => {
                    let feature: u32 = num(tok.next(), ln, "feature")?;
                    if feature as usize >= features {
                        return Err(bad(ln, format!("feature {feature} >= {features}")));
                    }
                    let threshold = hex(tok.next(), ln, "threshold")?;
                    let default_left = match tok.next() {
                        Some("L") => true,
                        Some("R") => false,
                        _ => return Err(bad(ln, "default direction must be L or R")),
                    };
                    TreeNode::Split {
                        feature,
                        threshold,
                        default_left,
                        left: num(tok.next(), ln, "left child")?,
                        right: num(tok.next(), ln, "right child")?,
                    }
                }
                Some("L") => TreeNode::Leaf {
                    weight: hex(tok.next(), ln, "leaf weight")?,
                },
                _ => return Err(bad(ln, "expected an N or L record")),
            };
            if tok.next().is_some() {
                return Err(bad(ln, "trailing tokens"));
            }
            nodes.push(node);
        }
        let tree = Tree::from_nodes(nodes).map_err(|e| bad(start, format!("tree {t}: {e}")))?;
        model.push(tree);
    }
    if let Some(extra) = pending {
        if !extra.trim().is_empty() {
            return Err(bad(lines.number, "unexpected content after last tree"));
        }
    }
    while let Some(extra) = lines.next()? {
        if !extra.trim().is_empty() {
            return Err(bad(lines.number, "unexpected content after last tree"));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hex_examples() {
        assert_eq!(format_hex(1.5), "0x1.8p+0");
        assert_eq!(format_hex(-0.1), "-0x1.999999999999ap-4");
        assert_eq!(format_hex(0.0), "0x0p+0");
        assert_eq!(format_hex(-0.0), "-0x0p+0");
        assert_eq!(format_hex(f64::INFINITY), "inf");
        assert_eq!(format_hex(1.0), "0x1p+0");
        assert_eq!(format_hex(f64::MIN_POSITIVE / 2.0), "0x0.8p-1022");
    }

    #[test]
    fn hex_round_trips_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let specials = [
            0.0,
            -0.0,
            f64::MAX,
            f64::MIN,
            f64::MIN_POSITIVE,
            f64::EPSILON,
            5e-324,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ];
        for x in specials {
            assert_eq!(parse_hex(&format_hex(x)).unwrap().to_bits(), x.to_bits(), "{x}");
        }
        for _ in 0..100_000 {
            let x = f64::from_bits(rng.gen());
            if x.is_nan() {
                continue;
            }
            assert_eq!(parse_hex(&format_hex(x)).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn hex_rejects_garbage() {
        for s in ["", "0x", "1.5", "0x2p+0", "0x1.8", "0x1p+9999", "0x0.1p+3", "0x1.gp+0"] {
            assert!(parse_hex(s).is_none(), "{s}");
        }
    }

    #[test]
    fn empty_model_round_trips() {
        let m = TreeEnsemble::new(LossKind::SquaredError, 4, 0.0);
        let text = model_to_string(&m);
        assert_eq!(read_model(text.as_bytes()).unwrap(), m);
    }

    #[test]
    fn version_is_checked() {
        let text = "version 2\nbase_score 0x0p+0\nloss logistic\nfeatures 1\ntrees 0\n";
        assert!(matches!(read_model(text.as_bytes()), Err(Error::Version(_))));
    }

    #[test]
    fn malformed_records_name_the_line() {
        let good = "version 1\nbase_score 0x0p+0\nloss logistic\nfeatures 2\ntrees 1\ntree 0\nN 0 1 0x1p+0 L 1 2\nL 1 0x1p-3\nL 2 -0x1p-3\n";
        let m = read_model(good.as_bytes()).unwrap();
        assert_eq!(m.trees()[0].n_leaves(), 2);
        let cases = [
            (good.replace("N 0 1", "N 0 5"), 7),
            (good.replace(" L 1 2", " X 1 2"), 7),
            (good.replace("L 2 -0x1p-3", "L 2 zzz"), 9),
            (good.replace("L 1 0x1p-3", "L 3 0x1p-3"), 8),
        ];
        for (text, line) in cases {
            match read_model(text.as_bytes()) {
                Err(Error::Model { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{other:?}"),
            }
        }
        let truncated = good.replace("L 2 -0x1p-3\n", "");
        assert!(matches!(read_model(truncated.as_bytes()), Err(Error::Model { .. })));
    }
}
