//! Problem data: items, strips, benchmark parsing and instance derivation.

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::Rational;

/// A rectangular item. Items are never rotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Item {
    pub w: usize,
    pub h: usize,
}

impl Item {
    pub fn new(w: usize, h: usize) -> Self {
        Self { w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

/// An open-ended strip with a fixed width and a per-unit-area cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strip {
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "C", with = "rational_string")]
    pub cost: Rational,
}

impl Strip {
    pub fn new(width: usize, cost: Rational) -> Self {
        Self { width, cost }
    }

    /// `C_i * W_i`, the objective coefficient of the strip height.
    pub fn height_cost(&self) -> Rational {
        self.cost * Rational::from_integer(self.width as i64)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("instance has no strips")]
    NoStrips,
    #[error("item {item} has a non-positive dimension ({w}x{h})")]
    DegenerateItem { item: usize, w: usize, h: usize },
    #[error("strip {strip} has width 0")]
    ZeroWidthStrip { strip: usize },
    #[error("strip {strip} has non-positive cost {cost}")]
    NonPositiveCost { strip: usize, cost: Rational },
    #[error("item {item} (width {w}) fits on no strip")]
    NoFeasibleStrip { item: usize, w: usize },
    #[error("number of strips must be 2 or 3, got {0}")]
    StripCount(usize),
    #[error("derived strip width is zero for base width {0}")]
    DerivedWidthZero(usize),
}

/// A cost-weighted multiple strip packing instance.
///
/// Strips are kept sorted by nondecreasing width; every item fits on at
/// least one strip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Instance {
    pub name: String,
    pub items: Vec<Item>,
    pub strips: Vec<Strip>,
}

impl Instance {
    /// Validates and builds an instance. Strips are stably sorted by width.
    pub fn new(
        name: impl Into<String>,
        items: Vec<Item>,
        mut strips: Vec<Strip>,
    ) -> Result<Self, InstanceError> {
        if strips.is_empty() {
            return Err(InstanceError::NoStrips);
        }
        for (j, it) in items.iter().enumerate() {
            if it.w == 0 || it.h == 0 {
                return Err(InstanceError::DegenerateItem { item: j, w: it.w, h: it.h });
            }
        }
        strips.sort_by_key(|s| s.width);
        for (i, s) in strips.iter().enumerate() {
            if s.width == 0 {
                return Err(InstanceError::ZeroWidthStrip { strip: i });
            }
            if s.cost <= Rational::zero() {
                return Err(InstanceError::NonPositiveCost { strip: i, cost: s.cost });
            }
        }
        let widest = strips.last().map(|s| s.width).unwrap_or(0);
        if let Some((j, it)) = items.iter().enumerate().find(|(_, it)| it.w > widest) {
            return Err(InstanceError::NoFeasibleStrip { item: j, w: it.w });
        }
        Ok(Self { name: name.into(), items, strips })
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_strips(&self) -> usize {
        self.strips.len()
    }

    /// Strips wide enough for item `j`, ascending.
    pub fn feasible_strips(&self, j: usize) -> Vec<usize> {
        let w = self.items[j].w;
        (0..self.strips.len())
            .filter(|&i| w <= self.strips[i].width)
            .collect()
    }

    pub fn is_feasible(&self, i: usize, j: usize) -> bool {
        self.items[j].w <= self.strips[i].width
    }

    pub fn max_strip_width(&self) -> usize {
        self.strips.iter().map(|s| s.width).max().unwrap_or(0)
    }

    pub fn total_height(&self) -> usize {
        self.items.iter().map(|it| it.h).sum()
    }

    /// Exact objective `sum_i C_i W_i H_i` for the given strip heights.
    pub fn objective(&self, heights: &[usize]) -> Rational {
        self.strips
            .iter()
            .zip(heights)
            .map(|(s, &h)| s.height_cost() * Rational::from_integer(h as i64))
            .fold(Rational::zero(), |acc, v| acc + v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let raw: RawInstance = serde_json::from_str(text)?;
        Ok(Instance::new(raw.name, raw.items, raw.strips)?)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    name: String,
    items: Vec<Item>,
    strips: Vec<Strip>,
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawInstance::deserialize(d)?;
        Instance::new(raw.name, raw.items, raw.strips).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("invalid instance json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] InstanceError),
}

/// Serializes an instance to its JSON text.
pub fn save_instance(inst: &Instance) -> String {
    inst.to_json()
}

pub fn load_instance(text: &str) -> Result<Instance, LoadError> {
    Instance::from_json(text)
}

/// Parses `p/q` or a plain integer into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: i64 = num.parse().map_err(|_| format!("bad rational numerator in {s:?}"))?;
    let d: i64 = den.parse().map_err(|_| format!("bad rational denominator in {s:?}"))?;
    if d == 0 {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(Rational::new(n, d))
}

/// `p/q` with the reduced numerator and denominator.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Decimal rendering for reports. Exact when the denominator divides a power of ten.
pub fn rational_to_decimal(r: &Rational, max_places: usize) -> String {
    let neg = *r < Rational::zero();
    let r = if neg { -*r } else { *r };
    let int = r.to_integer();
    let mut frac = r - Rational::from_integer(int);
    let mut digits = String::new();
    while !frac.is_zero() && digits.len() < max_places {
        frac *= Rational::from_integer(10);
        let d = frac.to_integer();
        digits.push(char::from(b'0' + d as u8));
        frac -= Rational::from_integer(d);
    }
    let sign = if neg { "-" } else { "" };
    if digits.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{digits}")
    }
}

pub(crate) mod rational_string {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }
}

/// A single-strip benchmark instance as read from a plain-text file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseSpp {
    pub name: String,
    pub width: usize,
    pub items: Vec<Item>,
}

impl BaseSpp {
    pub fn n(&self) -> usize {
        self.items.len()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: expected {what}")]
    Missing { line: usize, what: &'static str },
    #[error("line {line}: {field:?} is not a non-negative integer")]
    NotInteger { line: usize, field: String },
    #[error("line {line}: expected 2 or 3 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: item has a zero dimension")]
    ZeroDimension { line: usize },
    #[error("line {line}: item width {w} exceeds strip width {strip_width}")]
    ItemTooWide { line: usize, w: usize, strip_width: usize },
    #[error(
        "line {line}: item width {w} exceeds strip width {strip_width} but its height {h} would fit; \
         the file probably lists `height width` instead of `width height`"
    )]
    SwappedColumns { line: usize, w: usize, h: usize, strip_width: usize },
    #[error("declared {declared} items but found {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("strip width must be positive")]
    ZeroStripWidth,
}

fn parse_field(line: usize, field: &str) -> Result<usize, ParseError> {
    field.parse().map_err(|_| ParseError::NotInteger { line, field: field.to_string() })
}

/// Reads a strip packing benchmark: item count, strip width, then one
/// `index width height` (or `width height`) line per item.
pub fn parse_spp(name: &str, text: &str) -> Result<BaseSpp, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (ln, first) = lines.next().ok_or(ParseError::Missing { line: 1, what: "item count" })?;
    let n = parse_field(ln, first)?;
    let (ln, second) = lines.next().ok_or(ParseError::Missing { line: ln + 1, what: "strip width" })?;
    let width = parse_field(ln, second)?;
    if width == 0 {
        return Err(ParseError::ZeroStripWidth);
    }

    let mut items = Vec::with_capacity(n);
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (w, h) = match fields.as_slice() {
            [_, w, h] | [w, h] => (parse_field(ln, w)?, parse_field(ln, h)?),
            _ => return Err(ParseError::FieldCount { line: ln, found: fields.len() }),
        };
        if w == 0 || h == 0 {
            return Err(ParseError::ZeroDimension { line: ln });
        }
        if w > width {
            return Err(if h <= width {
                ParseError::SwappedColumns { line: ln, w, h, strip_width: width }
            } else {
                ParseError::ItemTooWide { line: ln, w, strip_width: width }
            });
        }
        items.push(Item::new(w, h));
    }
    if items.len() != n {
        return Err(ParseError::CountMismatch { declared: n, found: items.len() });
    }
    Ok(BaseSpp { name: name.to_string(), width, items })
}

/// Per-unit-area cost structure across strips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostScheme {
    /// All strips cost 1.
    #[serde(rename = "prop")]
    Proportional,
    /// Widest strip costs 1, each narrower strip 0.1 more.
    #[serde(rename = "econ")]
    Economies,
    /// Narrowest strip costs 1, each wider strip 0.1 more.
    #[serde(rename = "disecon")]
    Diseconomies,
}

impl CostScheme {
    pub const ALL: [CostScheme; 3] =
        [CostScheme::Proportional, CostScheme::Economies, CostScheme::Diseconomies];

    pub fn tag(&self) -> &'static str {
        match self {
            CostScheme::Proportional => "prop",
            CostScheme::Economies => "econ",
            CostScheme::Diseconomies => "disecon",
        }
    }

    /// Costs for `m` strips sorted by ascending width.
    pub fn costs(&self, m: usize) -> Vec<Rational> {
        let step = Rational::new(1, 10);
        (0..m)
            .map(|i| match self {
                CostScheme::Proportional => Rational::one(),
                CostScheme::Economies => Rational::one() + step * Rational::from_integer((m - 1 - i) as i64),
                CostScheme::Diseconomies => Rational::one() + step * Rational::from_integer(i as i64),
            })
            .collect()
    }
}

impl fmt::Display for CostScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for CostScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "prop" | "proportional" => Ok(CostScheme::Proportional),
            "econ" | "economies" => Ok(CostScheme::Economies),
            "disecon" | "diseconomies" => Ok(CostScheme::Diseconomies),
            other => Err(format!("unknown cost scheme {other:?}")),
        }
    }
}

/// Width ratios in tenths for the derived strips.
fn width_ratios(m: usize) -> Option<&'static [usize]> {
    match m {
        2 => Some(&[10, 12]),
        3 => Some(&[8, 10, 12]),
        _ => None,
    }
}

/// Derives a multi-strip instance with widths `floor(r * W)`.
pub fn generate_gmspp(base: &BaseSpp, m: usize, scheme: CostScheme) -> Result<Instance, InstanceError> {
    let ratios = width_ratios(m).ok_or(InstanceError::StripCount(m))?;
    let costs = scheme.costs(m);
    let mut strips = Vec::with_capacity(m);
    for (&r, cost) in ratios.iter().zip(costs) {
        let width = base.width * r / 10;
        if width == 0 {
            return Err(InstanceError::DerivedWidthZero(base.width));
        }
        strips.push(Strip::new(width, cost));
    }
    let name = format!("{}_m{}_{}", base.name, m, scheme.tag());
    Instance::new(name, base.items.clone(), strips)
}
