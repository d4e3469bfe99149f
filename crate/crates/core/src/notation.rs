//! The textual mini-syntax used for features and relations in grammar files.
//!
//! Features: `cat + np|pp`, `funct - ?`, `mood = <2> ind|subj`, `cat ~ s`.
//! Relations: `A > B`, `A > .B, C, D.` (leftmost / rightmost markers),
//! `A > {B, C}` (arity), `A >* B`, `A >*{cat = s|np} B`, `A < B`, `A <+ B`.

use crate::error::{Error, Result};
use crate::feature::{
    CorefTag, FeatureSignature, FilteringFeatureStructure, Polarity, PolarizedFeature,
    PolarizedFeatureStructure,
};
use crate::ptd::EdgePos;

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

fn bad(text: &str, why: &str) -> Error {
    Error::Notation(format!("{why} in `{text}`"))
}

/// Parses one polarized feature against the signature.
pub fn parse_feature(sig: &FeatureSignature, text: &str) -> Result<PolarizedFeature> {
    let s = text.trim();
    let name_end = s.find(|c: char| !is_name_char(c)).unwrap_or(s.len());
    let name = &s[..name_end];
    if name.is_empty() {
        return Err(bad(text, "missing feature name"));
    }
    let rest = s[name_end..].trim_start();
    let mut chars = rest.chars();
    let polarity = chars
        .next()
        .and_then(|c| Polarity::from_symbol(&c.to_string()))
        .ok_or_else(|| bad(text, "missing polarity"))?;
    let mut rest = chars.as_str().trim_start();
    let mut coref = None;
    if let Some(after) = rest.strip_prefix('<') {
        let close = after.find('>').ok_or_else(|| bad(text, "unclosed co-reference"))?;
        let n: u32 = after[..close]
            .trim()
            .parse()
            .map_err(|_| bad(text, "co-reference tag must be a number"))?;
        coref = Some(CorefTag(n));
        rest = after[close + 1..].trim_start();
    }
    if rest.is_empty() {
        return Err(bad(text, "missing value"));
    }
    let value = sig.parse_values(name, rest)?;
    Ok(PolarizedFeature {
        name: name.to_string(),
        polarity,
        value,
        coref,
    })
}

pub fn render_feature(sig: &FeatureSignature, f: &PolarizedFeature) -> String {
    let value = sig.render_values(&f.name, &f.value);
    match f.coref {
        Some(tag) => format!("{} {} {} {}", f.name, f.polarity, tag, value),
        None => format!("{} {} {}", f.name, f.polarity, value),
    }
}

pub fn parse_features<S: AsRef<str>>(
    sig: &FeatureSignature,
    items: &[S],
) -> Result<PolarizedFeatureStructure> {
    let mut pfs = PolarizedFeatureStructure::new();
    for item in items {
        pfs.insert(parse_feature(sig, item.as_ref())?)?;
    }
    Ok(pfs)
}

/// Parses a comma-separated list of neutral features.
pub fn parse_filter(sig: &FeatureSignature, text: &str) -> Result<FilteringFeatureStructure> {
    let items: Vec<&str> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    FilteringFeatureStructure::from_polarized(&parse_features(sig, &items)?)
}

pub fn render_filter(sig: &FeatureSignature, f: &FilteringFeatureStructure) -> String {
    f.to_polarized()
        .iter()
        .map(|pf| render_feature(sig, pf))
        .collect::<Vec<_>>()
        .join(", ")
}

/// A relation whose endpoints are still symbolic node names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RawRelation {
    Dom {
        mother: String,
        daughters: Vec<(String, EdgePos)>,
    },
    Arity {
        mother: String,
        daughters: Vec<String>,
    },
    Ldom {
        ancestor: String,
        descendant: String,
        filter: Option<FilteringFeatureStructure>,
    },
    Prec(String, String),
    Lprec(String, String),
}

fn node_name(text: &str, whole: &str) -> Result<String> {
    let t = text.trim();
    if t.is_empty() || !t.chars().all(is_name_char) {
        return Err(bad(whole, &format!("bad node name `{t}`")));
    }
    Ok(t.to_string())
}

pub fn parse_relation(sig: &FeatureSignature, text: &str) -> Result<RawRelation> {
    let op_at = text
        .find(['>', '<'])
        .ok_or_else(|| bad(text, "missing relation operator"))?;
    let lhs = node_name(&text[..op_at], text)?;
    let rest = &text[op_at..];
    if let Some(r) = rest.strip_prefix(">*") {
        let r = r.trim_start();
        let (filter, target) = if let Some(inner) = r.strip_prefix('{') {
            let close = inner.find('}').ok_or_else(|| bad(text, "unclosed filter"))?;
            (Some(parse_filter(sig, &inner[..close])?), &inner[close + 1..])
        } else {
            (None, r)
        };
        return Ok(RawRelation::Ldom {
            ancestor: lhs,
            descendant: node_name(target, text)?,
            filter,
        });
    }
    if let Some(r) = rest.strip_prefix("<+") {
        return Ok(RawRelation::Lprec(lhs, node_name(r, text)?));
    }
    if let Some(r) = rest.strip_prefix('<') {
        return Ok(RawRelation::Prec(lhs, node_name(r, text)?));
    }
    let r = rest[1..].trim();
    if let Some(inner) = r.strip_prefix('{') {
        let inner = inner
            .strip_suffix('}')
            .ok_or_else(|| bad(text, "unclosed arity set"))?;
        let daughters = inner
            .split(',')
            .map(|d| node_name(d, text))
            .collect::<Result<Vec<_>>>()?;
        if daughters.is_empty() {
            return Err(bad(text, "empty arity set"));
        }
        return Ok(RawRelation::Arity {
            mother: lhs,
            daughters,
        });
    }
    let mut daughters = Vec::new();
    for item in r.split(',') {
        let item = item.trim();
        let (item, pos) = if let Some(x) = item.strip_prefix('.') {
            (x, EdgePos::Leftmost)
        } else if let Some(x) = item.strip_suffix('.') {
            (x, EdgePos::Rightmost)
        } else {
            (item, EdgePos::Any)
        };
        daughters.push((node_name(item, text)?, pos));
    }
    Ok(RawRelation::Dom {
        mother: lhs,
        daughters,
    })
}
