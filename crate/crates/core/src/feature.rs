//! Feature signatures, polarities and polarized feature structures.
//!
//! Everything here is flat: a feature structure maps names to atomic values
//! (in trees) or to polarized value disjunctions (in descriptions). Values are
//! opaque, case-sensitive tokens drawn from a finite per-name domain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature names and their finite value domains.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSignature {
    domains: BTreeMap<String, BTreeSet<String>>,
}

impl FeatureSignature {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `name` with the given domain. Empty domains and redeclarations
    /// are rejected.
    pub fn declare<I, S>(&mut self, name: &str, values: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let domain: BTreeSet<String> = values.into_iter().map(Into::into).collect();
        if domain.is_empty() {
            return Err(Error::Signature(format!("feature `{name}` has an empty domain")));
        }
        if self.domains.contains_key(name) {
            return Err(Error::Signature(format!("feature `{name}` declared twice")));
        }
        self.domains.insert(name.to_string(), domain);
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.domains.contains_key(name)
    }

    pub fn domain(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.domains.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.domains.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// The full domain of `name` as a value set (the `?` wildcard).
    pub fn full(&self, name: &str) -> Result<ValueSet> {
        let domain = self
            .domains
            .get(name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
        Ok(ValueSet(domain.clone()))
    }

    /// Parses `a|b|c` or `?` into a value set checked against the domain of `name`.
    pub fn parse_values(&self, name: &str, text: &str) -> Result<ValueSet> {
        let domain = self
            .domains
            .get(name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
        let text = text.trim();
        if text == "?" {
            return Ok(ValueSet(domain.clone()));
        }
        let mut values = BTreeSet::new();
        for v in text.split('|') {
            let v = v.trim();
            if v.is_empty() {
                return Err(Error::Notation(format!("empty value in `{text}`")));
            }
            if !domain.contains(v) {
                return Err(Error::UnknownValue {
                    feature: name.to_string(),
                    value: v.to_string(),
                });
            }
            values.insert(v.to_string());
        }
        Ok(ValueSet(values))
    }

    /// Renders a value set, collapsing the full domain back to `?`.
    pub fn render_values(&self, name: &str, values: &ValueSet) -> String {
        match self.domains.get(name) {
            Some(domain) if domain == &values.0 && domain.len() > 1 => "?".to_string(),
            _ => values.to_string(),
        }
    }
}

/// One of the four polarities. Only positive and negative are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
    #[serde(rename = "~")]
    Virtual,
    #[serde(rename = "=")]
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 4] = [
        Polarity::Positive,
        Polarity::Negative,
        Polarity::Virtual,
        Polarity::Neutral,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
            Polarity::Virtual => "~",
            Polarity::Neutral => "=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "+" => Some(Polarity::Positive),
            "-" => Some(Polarity::Negative),
            "~" => Some(Polarity::Virtual),
            "=" => Some(Polarity::Neutral),
            _ => None,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// True iff `p` is positive or negative.
pub fn is_active(p: Polarity) -> bool {
    matches!(p, Polarity::Positive | Polarity::Negative)
}

/// True iff the multiset holds exactly one positive and one negative, or no
/// active polarity and at least one neutral. The empty multiset is saturated.
pub fn globally_saturated<'a, I>(ps: I) -> bool
where
    I: IntoIterator<Item = &'a Polarity>,
{
    PolarityCounts::from_iter(ps.into_iter().copied()).is_saturated()
}

/// A multiset of polarities, stored as counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PolarityCounts {
    pub positive: u16,
    pub negative: u16,
    #[serde(rename = "virtual")]
    pub virtual_: u16,
    pub neutral: u16,
}

impl PolarityCounts {
    pub fn single(p: Polarity) -> Self {
        let mut c = Self::default();
        c.add(p);
        c
    }

    pub fn add(&mut self, p: Polarity) {
        match p {
            Polarity::Positive => self.positive += 1,
            Polarity::Negative => self.negative += 1,
            Polarity::Virtual => self.virtual_ += 1,
            Polarity::Neutral => self.neutral += 1,
        }
    }

    pub fn union(self, other: Self) -> Self {
        Self {
            positive: self.positive + other.positive,
            negative: self.negative + other.negative,
            virtual_: self.virtual_ + other.virtual_,
            neutral: self.neutral + other.neutral,
        }
    }

    pub fn total(&self) -> u32 {
        u32::from(self.positive)
            + u32::from(self.negative)
            + u32::from(self.virtual_)
            + u32::from(self.neutral)
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn is_saturated(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        (self.positive == 1 && self.negative == 1)
            || (self.positive == 0 && self.negative == 0 && self.neutral >= 1)
    }

    /// More than one positive or negative: no further merging can repair it.
    pub fn is_overloaded(&self) -> bool {
        self.positive > 1 || self.negative > 1
    }

    /// Active polarities still waiting for a dual (0 once a +/- pair formed).
    pub fn open_active(&self) -> u32 {
        if self.positive == 1 && self.negative == 1 {
            0
        } else {
            u32::from(self.positive) + u32::from(self.negative)
        }
    }

    /// Only virtual polarities: needs a non-virtual partner.
    pub fn only_virtual(&self) -> bool {
        self.virtual_ > 0 && self.positive == 0 && self.negative == 0 && self.neutral == 0
    }

    pub fn has_non_virtual(&self) -> bool {
        self.positive + self.negative + self.neutral > 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Polarity> + '_ {
        Polarity::ALL.into_iter().flat_map(move |p| {
            let n = match p {
                Polarity::Positive => self.positive,
                Polarity::Negative => self.negative,
                Polarity::Virtual => self.virtual_,
                Polarity::Neutral => self.neutral,
            };
            std::iter::repeat_n(p, usize::from(n))
        })
    }
}

impl FromIterator<Polarity> for PolarityCounts {
    fn from_iter<I: IntoIterator<Item = Polarity>>(iter: I) -> Self {
        let mut c = Self::default();
        for p in iter {
            c.add(p);
        }
        c
    }
}

impl fmt::Display for PolarityCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            f.write_str(p.symbol())?;
        }
        Ok(())
    }
}

/// A non-empty disjunction of atomic values.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueSet(BTreeSet<String>);

impl ValueSet {
    /// Builds a set from explicit values; `None` if empty.
    pub fn new<I, S>(values: I) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = values.into_iter().map(Into::into).collect();
        (!set.is_empty()).then_some(ValueSet(set))
    }

    pub fn single(value: impl Into<String>) -> Self {
        ValueSet(BTreeSet::from([value.into()]))
    }

    pub fn contains(&self, v: &str) -> bool {
        self.0.contains(v)
    }

    pub fn is_subset(&self, other: &ValueSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The single value, if the set is a singleton.
    pub fn atomic(&self) -> Option<&str> {
        if self.0.len() == 1 {
            self.0.iter().next().map(String::as_str)
        } else {
            None
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn intersect(&self, other: &ValueSet) -> Option<ValueSet> {
        let set: BTreeSet<String> = self.0.intersection(&other.0).cloned().collect();
        (!set.is_empty()).then_some(ValueSet(set))
    }

    /// Parses `a|b` without a signature (no `?` expansion).
    pub fn parse_plain(text: &str) -> Option<ValueSet> {
        ValueSet::new(text.split('|').map(str::trim).filter(|s| !s.is_empty()))
    }
}

impl fmt::Display for ValueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for v in &self.0 {
            if !first {
                f.write_str("|")?;
            }
            first = false;
            f.write_str(v)?;
        }
        Ok(())
    }
}

impl Serialize for ValueSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ValueSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        ValueSet::parse_plain(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("empty value set `{text}`")))
    }
}

/// Outcome of intersecting two value sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Intersection {
    Values(ValueSet),
    Clash,
}

pub fn intersect_values(a: &ValueSet, b: &ValueSet) -> Intersection {
    match a.intersect(b) {
        Some(v) => Intersection::Values(v),
        None => Intersection::Clash,
    }
}

/// Co-reference tag. Scoped to one description instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CorefTag(pub u32);

impl fmt::Display for CorefTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolarizedFeature {
    pub name: String,
    pub polarity: Polarity,
    pub value: ValueSet,
    pub coref: Option<CorefTag>,
}

impl fmt::Display for PolarizedFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.polarity)?;
        if let Some(tag) = self.coref {
            write!(f, " {tag}")?;
        }
        write!(f, " {}", self.value)
    }
}

/// At most one polarized feature per name.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolarizedFeatureStructure(BTreeMap<String, PolarizedFeature>);

impl PolarizedFeatureStructure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, feature: PolarizedFeature) -> Result<()> {
        if self.0.contains_key(&feature.name) {
            return Err(Error::DuplicateFeature(feature.name));
        }
        self.0.insert(feature.name.clone(), feature);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&PolarizedFeature> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PolarizedFeature> {
        self.0.values()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<PolarizedFeature> for PolarizedFeatureStructure {
    /// Later duplicates overwrite earlier ones; use `insert` to detect them.
    fn from_iter<I: IntoIterator<Item = PolarizedFeature>>(iter: I) -> Self {
        Self(iter.into_iter().map(|f| (f.name.clone(), f)).collect())
    }
}

/// An all-neutral feature structure, used on large dominances and as the
/// anchoring interface of a template.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FilteringFeatureStructure {
    values: BTreeMap<String, ValueSet>,
    corefs: BTreeMap<String, CorefTag>,
}

impl FilteringFeatureStructure {
    pub fn new() -> Self {
        Self::default()
    }

    /// Converts a polarized structure, failing if any polarity is not neutral.
    pub fn from_polarized(pfs: &PolarizedFeatureStructure) -> Result<Self> {
        let mut out = Self::new();
        for f in pfs.iter() {
            if f.polarity != Polarity::Neutral {
                return Err(Error::Notation(format!(
                    "filtering feature `{}` must be neutral, found `{}`",
                    f.name, f.polarity
                )));
            }
            out.values.insert(f.name.clone(), f.value.clone());
            if let Some(tag) = f.coref {
                out.corefs.insert(f.name.clone(), tag);
            }
        }
        Ok(out)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ValueSet) {
        self.values.insert(name.into(), value);
    }

    pub fn set_coref(&mut self, name: &str, tag: Option<CorefTag>) {
        match tag {
            Some(t) => {
                self.corefs.insert(name.to_string(), t);
            }
            None => {
                self.corefs.remove(name);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&ValueSet> {
        self.values.get(name)
    }

    pub fn coref(&self, name: &str) -> Option<CorefTag> {
        self.corefs.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ValueSet)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Polarized view (every feature neutral).
    pub fn to_polarized(&self) -> PolarizedFeatureStructure {
        self.values
            .iter()
            .map(|(name, value)| PolarizedFeature {
                name: name.clone(),
                polarity: Polarity::Neutral,
                value: value.clone(),
                coref: self.corefs.get(name).copied(),
            })
            .collect()
    }

    pub(crate) fn map_corefs(&mut self, mut f: impl FnMut(CorefTag) -> CorefTag) {
        for tag in self.corefs.values_mut() {
            *tag = f(*tag);
        }
    }

    /// True when every name shared with `values` has all its values admitted.
    pub fn admits(&self, values: &BTreeMap<String, ValueSet>) -> bool {
        values.iter().all(|(name, v)| match self.values.get(name) {
            Some(allowed) => v.is_subset(allowed),
            None => true,
        })
    }
}

impl fmt::Display for FilteringFeatureStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .values
            .iter()
            .map(|(k, v)| match self.corefs.get(k) {
                Some(tag) => format!("{k} = {tag} {v}"),
                None => format!("{k} = {v}"),
            })
            .collect();
        f.write_str(&parts.join(", "))
    }
}

/// A plain feature structure: one atomic value per name.
pub type AtomicFeatureStructure = BTreeMap<String, String>;

/// `phi ◁ psi`: every name defined in both has its atomic value admitted.
pub fn compatible(phi: &AtomicFeatureStructure, psi: &FilteringFeatureStructure) -> bool {
    phi.iter().all(|(name, v)| match psi.get(name) {
        Some(allowed) => allowed.contains(v),
        None => true,
    })
}
