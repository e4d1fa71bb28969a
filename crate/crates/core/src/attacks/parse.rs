//! Text form of attack pipelines: `kind(param=value,...)|kind(...)`.

use std::collections::BTreeMap;

use super::{Attack, AttackPipeline};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamType {
    Real,
    Count,
    Seed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamInfo {
    pub name: &'static str,
    pub ty: ParamType,
    /// Human-readable valid range.
    pub range: &'static str,
    /// Value used when the parameter is omitted; `None` makes it required.
    pub default: Option<f64>,
    /// A typical valid value, shown in listings.
    pub example: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KindInfo {
    pub name: &'static str,
    pub params: &'static [ParamInfo],
    pub summary: &'static str,
}

const fn real(name: &'static str, range: &'static str, example: f64) -> ParamInfo {
    ParamInfo { name, ty: ParamType::Real, range, default: None, example }
}

const fn count(name: &'static str, range: &'static str, example: f64) -> ParamInfo {
    ParamInfo { name, ty: ParamType::Count, range, default: None, example }
}

const SEED: ParamInfo =
    ParamInfo { name: "seed", ty: ParamType::Seed, range: "u64", default: Some(0.0), example: 0.0 };

pub const KINDS: &[KindInfo] = &[
    KindInfo {
        name: "rotate_crop_rescale",
        params: &[real("theta", "finite, degrees", 45.0)],
        summary: "rotate, crop the content square, resize back",
    },
    KindInfo { name: "rotate_pad", params: &[real("theta", "finite, degrees", 45.0)], summary: "rotate with zero corners" },
    KindInfo { name: "scale_crop", params: &[real("s", "[1, 4]", 1.2)], summary: "upscale, center crop" },
    KindInfo { name: "scale_pad", params: &[real("s", "[0.1, 1]", 0.8)], summary: "downscale, zero pad" },
    KindInfo {
        name: "translate_rowcol_remove",
        params: &[count("nc", "< width", 1.0), count("nr", "< height", 1.0), SEED],
        summary: "delete seeded columns and rows, resize back",
    },
    KindInfo { name: "crop_percent", params: &[real("p", "[0, 90)", 10.0)], summary: "remove p% of area at the border" },
    KindInfo {
        name: "shear",
        params: &[real("sx", "(-50, 50) percent", 5.0), real("sy", "(-50, 50) percent", 5.0)],
        summary: "affine shear, crop to content, resize back",
    },
    KindInfo {
        name: "gaussian_noise",
        params: &[real("sigma", ">= 0", 0.1), SEED],
        summary: "additive white noise",
    },
    KindInfo { name: "gaussian_blur", params: &[count("k", "[1, 64]", 3.0)], summary: "k x k Gaussian kernel" },
    KindInfo { name: "median_filter", params: &[count("k", "[1, 64]", 3.0)], summary: "k x k median" },
    KindInfo { name: "brightness", params: &[real("b", "> 0", 1.2)], summary: "multiply by b" },
    KindInfo { name: "contrast", params: &[real("c", ">= 0", 1.2)], summary: "stretch about the mean by c" },
    KindInfo { name: "jpeg_proxy", params: &[real("q", "[1, 100]", 50.0)], summary: "8x8 DCT quantization at quality q" },
    KindInfo {
        name: "erase_region",
        params: &[real("frac", "[0, 1)", 0.1), SEED],
        summary: "zero a seeded rectangle of area fraction frac",
    },
];

pub fn kind_info(name: &str) -> Option<&'static KindInfo> {
    KINDS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, Copy)]
enum Value {
    Real(f64),
    Int(u64),
}

impl Value {
    fn as_f64(self) -> f64 {
        match self {
            Value::Real(v) => v,
            Value::Int(v) => v as f64,
        }
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    /// Offset of `text` within the full input, for error positions.
    base: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, at: usize, message: impl Into<String>) -> Error {
        Error::Parse { position: self.base + at, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(|c: char| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn expect(&mut self, ch: char) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.err(self.pos, format!("expected '{ch}', found '{c}'"))),
            None => Err(self.err(self.pos, format!("expected '{ch}', found end of input"))),
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> (usize, &'a str) {
        self.skip_ws();
        let start = self.pos;
        let len = self.text[start..].find(|c: char| !f(c)).unwrap_or(self.text.len() - start);
        self.pos += len;
        (start, &self.text[start..start + len])
    }

    fn ident(&mut self) -> Result<(usize, &'a str)> {
        let (at, word) = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
        if word.is_empty() {
            return Err(self.err(at, "expected a name"));
        }
        Ok((at, word))
    }

    fn value(&mut self) -> Result<(usize, &'a str)> {
        let (at, word) = self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+'));
        if word.is_empty() {
            return Err(self.err(at, "expected a value"));
        }
        Ok((at, word))
    }
}

fn convert(cur: &Cursor, kind: &str, info: &ParamInfo, at: usize, raw: &str) -> Result<Value> {
    let bad = |what: &str| cur.err(at, format!("{kind}: parameter {} expects {what}, got '{raw}'", info.name));
    match info.ty {
        ParamType::Real => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::Real(v)),
            _ => Err(bad("a finite number")),
        },
        ParamType::Count | ParamType::Seed => raw.parse::<u64>().map(Value::Int).map_err(|_| bad("a nonnegative integer")),
    }
}

fn parse_attack(cur: &mut Cursor) -> Result<Attack> {
    let (kind_at, kind) = cur.ident()?;
    let info = kind_info(kind).ok_or_else(|| cur.err(kind_at, format!("unknown attack kind \"{kind}\"")))?;
    cur.expect('(')?;
    let mut values: BTreeMap<&str, Value> = BTreeMap::new();
    cur.skip_ws();
    if cur.peek() == Some(')') {
        cur.pos += 1;
    } else {
        loop {
            let (name_at, name) = cur.ident()?;
            let param = info
                .params
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| cur.err(name_at, format!("{kind}: unknown parameter \"{name}\"")))?;
            if values.contains_key(param.name) {
                return Err(cur.err(name_at, format!("{kind}: parameter \"{name}\" given twice")));
            }
            cur.expect('=')?;
            let (value_at, raw) = cur.value()?;
            values.insert(param.name, convert(cur, kind, param, value_at, raw)?);
            cur.skip_ws();
            match cur.peek() {
                Some(',') => cur.pos += 1,
                Some(')') => {
                    cur.pos += 1;
                    break;
                }
                Some(c) => return Err(cur.err(cur.pos, format!("expected ',' or ')', found '{c}'"))),
                None => return Err(cur.err(cur.pos, "unclosed parameter list")),
            }
        }
    }
    let mut get = |name: &str| -> Result<Value> {
        let p = info.params.iter().find(|p| p.name == name).expect("parameter listed in KINDS");
        match values.remove(name) {
            Some(v) => Ok(v),
            None => match p.default {
                Some(d) => Ok(Value::Int(d as u64)),
                None => Err(cur.err(kind_at, format!("{kind}: missing parameter \"{name}\""))),
            },
        }
    };
    let int = |v: Value| match v {
        Value::Int(i) => i,
        Value::Real(r) => r as u64,
    };
    let attack = match kind {
        "rotate_crop_rescale" => Attack::RotateCropRescale { theta: get("theta")?.as_f64() },
        "rotate_pad" => Attack::RotatePad { theta: get("theta")?.as_f64() },
        "scale_crop" => Attack::ScaleCrop { s: get("s")?.as_f64() },
        "scale_pad" => Attack::ScalePad { s: get("s")?.as_f64() },
        "translate_rowcol_remove" => Attack::TranslateRowcolRemove {
            nc: int(get("nc")?) as usize,
            nr: int(get("nr")?) as usize,
            seed: int(get("seed")?),
        },
        "crop_percent" => Attack::CropPercent { p: get("p")?.as_f64() },
        "shear" => Attack::Shear { sx: get("sx")?.as_f64(), sy: get("sy")?.as_f64() },
        "gaussian_noise" => Attack::GaussianNoise { sigma: get("sigma")?.as_f64(), seed: int(get("seed")?) },
        "gaussian_blur" => Attack::GaussianBlur { k: int(get("k")?) as usize },
        "median_filter" => Attack::MedianFilter { k: int(get("k")?) as usize },
        "brightness" => Attack::Brightness { b: get("b")?.as_f64() },
        "contrast" => Attack::Contrast { c: get("c")?.as_f64() },
        "jpeg_proxy" => Attack::JpegProxy { q: get("q")?.as_f64() },
        "erase_region" => Attack::EraseRegion { frac: get("frac")?.as_f64(), seed: int(get("seed")?) },
        _ => unreachable!("kind table and match arms agree"),
    };
    attack.validate().map_err(|e| cur.err(kind_at, e.to_string()))?;
    Ok(attack)
}

fn parse_at(text: &str, base: usize) -> Result<AttackPipeline> {
    let mut cur = Cursor { text, pos: 0, base };
    let mut attacks = vec![parse_attack(&mut cur)?];
    loop {
        cur.skip_ws();
        match cur.peek() {
            None => break,
            Some('|') => {
                cur.pos += 1;
                attacks.push(parse_attack(&mut cur)?);
            }
            Some(c) => return Err(cur.err(cur.pos, format!("expected '|' or end of input, found '{c}'"))),
        }
    }
    AttackPipeline::new(attacks)
}

pub fn parse_pipeline(text: &str) -> Result<AttackPipeline> {
    parse_at(text, 0)
}

/// One pipeline per line; blank lines and `#` comments are skipped.
/// Error positions are byte offsets into the whole file.
pub fn parse_preset(text: &str) -> Result<Vec<AttackPipeline>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.split('#').next().unwrap_or("");
        if !content.trim().is_empty() {
            out.push(parse_at(content.trim_end_matches(['\n', '\r']), offset)?);
        }
        offset += line.len();
    }
    Ok(out)
}

fn format_attack(a: &Attack) -> String {
    let params: Vec<(&str, String)> = match *a {
        Attack::RotateCropRescale { theta } | Attack::RotatePad { theta } => vec![("theta", theta.to_string())],
        Attack::ScaleCrop { s } | Attack::ScalePad { s } => vec![("s", s.to_string())],
        Attack::TranslateRowcolRemove { nc, nr, seed } => {
            vec![("nc", nc.to_string()), ("nr", nr.to_string()), ("seed", seed.to_string())]
        }
        Attack::CropPercent { p } => vec![("p", p.to_string())],
        Attack::Shear { sx, sy } => vec![("sx", sx.to_string()), ("sy", sy.to_string())],
        Attack::GaussianNoise { sigma, seed } => vec![("sigma", sigma.to_string()), ("seed", seed.to_string())],
        Attack::GaussianBlur { k } | Attack::MedianFilter { k } => vec![("k", k.to_string())],
        Attack::Brightness { b } => vec![("b", b.to_string())],
        Attack::Contrast { c } => vec![("c", c.to_string())],
        Attack::JpegProxy { q } => vec![("q", q.to_string())],
        Attack::EraseRegion { frac, seed } => vec![("frac", frac.to_string()), ("seed", seed.to_string())],
    };
    let body: Vec<String> = params.into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{}({})", a.name(), body.join(","))
}

/// Canonical text: every parameter spelled out in table order, no spaces.
pub fn format_pipeline(p: &AttackPipeline) -> String {
    p.attacks().iter().map(format_attack).collect::<Vec<_>>().join("|")
}
