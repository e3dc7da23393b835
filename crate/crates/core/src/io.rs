//! Run configuration, network files and trajectory CSV.
//!
//! Configs are plain text: `key = value` lines grouped under `[section]`
//! headers, `#` starts a comment. Keys before the first header are top-level.
//!
//! ```text
//! tensions = 1, 1, 1
//! seed = 7
//! output = run.csv
//!
//! [domain]
//! type = perforated
//! outer = 0, 0, 4
//! holes = (2, 0, 1), (-1, 1.7320508075688772, 1), (-1, -1.7320508075688772, 1)
//!
//! [steady]
//! p = 0.1, -0.05
//!
//! [grid]
//! n = 100
//!
//! [evolve]
//! t_end = 0.5
//!
//! [perturbation]
//! kind = eigenmode
//! amplitude = 1e-2
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::diagnostics::DiagnosticsRecord;
use crate::domain::{Circle, ImplicitDomain, Point};
use crate::error::{Error, Result};
use crate::evolution::{EvolveConfig, Perturbation};
use crate::param::{StationaryNetwork, DEFAULT_DET_M_FLOOR};
use crate::steady::SteadyGuess;
use crate::tension::SurfaceTensions;

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySettings {
    pub p: Point,
    pub phi: f64,
    pub gauge: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl SteadySettings {
    pub fn guess(&self) -> SteadyGuess {
        if self.gauge {
            SteadyGuess::gauged(self.p, self.phi)
        } else {
            SteadyGuess::new(self.p, self.phi)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveSettings {
    /// `None` picks `0.4 h^2`.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub output_every: usize,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub det_m_floor: f64,
    /// `None` picks a quarter of the shortest branch.
    pub amplitude_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tensions: SurfaceTensions,
    pub domain: ImplicitDomain,
    pub steady: SteadySettings,
    pub n: usize,
    pub evolve: EvolveSettings,
    pub perturbation: Perturbation,
    pub output: Option<String>,
    pub seed: u64,
}

impl RunConfig {
    pub fn evolve_config(&self, lengths: [f64; 3]) -> EvolveConfig {
        let mut cfg = EvolveConfig::new(self.n, lengths, self.evolve.t_end);
        if let Some(dt) = self.evolve.dt {
            cfg.dt = dt;
        }
        if let Some(cap) = self.evolve.amplitude_cap {
            cfg.amplitude_cap = cap;
        }
        cfg.output_every = self.evolve.output_every;
        cfg.newton_tol = self.evolve.newton_tol;
        cfg.newton_max = self.evolve.newton_max;
        cfg.det_m_floor = self.evolve.det_m_floor;
        cfg
    }

    /// Sets one parameter by its `section.key` name (top-level keys have no
    /// prefix), e.g. `grid.n` or `perturbation.amplitude`. Used by sweeps.
    pub fn with_param(&self, name: &str, value: &str) -> Result<RunConfig> {
        let (section, key) = match name.split_once('.') {
            Some((s, k)) => (s, k),
            None => ("", name),
        };
        if !CONFIG_KEYS.iter().any(|(s, keys)| *s == section && keys.contains(&key)) {
            return Err(Error::Validation { field: name.to_string(), reason: "unknown parameter".into() });
        }
        let mut doc = self.to_document();
        doc.set(section, key, value);
        from_document(&doc)
    }

    fn to_document(&self) -> Document {
        let mut d = Document::default();
        let g = self.tensions.gamma();
        d.set("", "tensions", &format!("{}, {}, {}", fmt(g[0]), fmt(g[1]), fmt(g[2])));
        d.set("", "seed", &self.seed.to_string());
        if let Some(o) = &self.output {
            d.set("", "output", o);
        }
        write_domain(&mut d, &self.domain);
        let s = &self.steady;
        d.set("steady", "p", &format!("{}, {}", fmt(s.p.x), fmt(s.p.y)));
        d.set("steady", "phi", &fmt(s.phi));
        d.set("steady", "gauge", &s.gauge.to_string());
        d.set("steady", "tol", &fmt(s.tol));
        d.set("steady", "max_iter", &s.max_iter.to_string());
        d.set("grid", "n", &self.n.to_string());
        let e = &self.evolve;
        if let Some(dt) = e.dt {
            d.set("evolve", "dt", &fmt(dt));
        }
        d.set("evolve", "t_end", &fmt(e.t_end));
        d.set("evolve", "output_every", &e.output_every.to_string());
        d.set("evolve", "newton_tol", &fmt(e.newton_tol));
        d.set("evolve", "newton_max", &e.newton_max.to_string());
        d.set("evolve", "det_m_floor", &fmt(e.det_m_floor));
        if let Some(c) = e.amplitude_cap {
            d.set("evolve", "amplitude_cap", &fmt(c));
        }
        match &self.perturbation {
            Perturbation::None => d.set("perturbation", "kind", "none"),
            Perturbation::Eigenmode { amplitude } => {
                d.set("perturbation", "kind", "eigenmode");
                d.set("perturbation", "amplitude", &fmt(*amplitude));
            }
            Perturbation::Cosine { amplitude, coefficients } => {
                d.set("perturbation", "kind", "cosine");
                d.set("perturbation", "amplitude", &fmt(*amplitude));
                for (i, c) in coefficients.iter().enumerate().filter(|(_, c)| !c.is_empty()) {
                    let v: Vec<String> = c.iter().map(|x| fmt(*x)).collect();
                    d.set("perturbation", &format!("branch{}", i + 1), &v.join(", "));
                }
            }
        }
        d
    }
}

fn write_domain(d: &mut Document, domain: &ImplicitDomain) {
    use crate::domain::Shape;
    let circ = |c: &Circle| format!("{}, {}, {}", fmt(c.center.x), fmt(c.center.y), fmt(c.radius));
    match domain.shape() {
        Shape::Circle(c) => {
            d.set("domain", "type", "circle");
            d.set("domain", "center", &format!("{}, {}", fmt(c.center.x), fmt(c.center.y)));
            d.set("domain", "radius", &fmt(c.radius));
        }
        Shape::Ellipse { center, a, b } => {
            d.set("domain", "type", "ellipse");
            d.set("domain", "center", &format!("{}, {}", fmt(center.x), fmt(center.y)));
            d.set("domain", "semi_axes", &format!("{}, {}", fmt(*a), fmt(*b)));
        }
        Shape::Polynomial(terms) => {
            d.set("domain", "type", "polynomial");
            let v: Vec<String> = terms.iter().map(|(i, j, c)| format!("({}, {}, {})", i, j, fmt(*c))).collect();
            d.set("domain", "coefficients", &v.join(", "));
        }
        Shape::Perforated { outer, holes } => {
            d.set("domain", "type", "perforated");
            d.set("domain", "outer", &circ(outer));
            let v: Vec<String> = holes.iter().map(|h| format!("({})", circ(h))).collect();
            d.set("domain", "holes", &v.join(", "));
        }
    }
    // a box equal to the shape's own default is left implicit so that later
    // edits of the shape move it along
    let natural = match domain.shape() {
        Shape::Circle(c) => Some(ImplicitDomain::circle(c.center, c.radius).bbox()),
        Shape::Ellipse { center, a, b } => Some(ImplicitDomain::ellipse(*center, *a, *b).bbox()),
        Shape::Perforated { outer, holes } => Some(ImplicitDomain::perforated(*outer, holes.clone()).bbox()),
        Shape::Polynomial(_) => None,
    };
    let b = domain.bbox();
    if natural != Some(b) {
        d.set("domain", "bbox", &format!("{}, {}, {}, {}", fmt(b[0]), fmt(b[1]), fmt(b[2]), fmt(b[3])));
    }
}

fn fmt(x: f64) -> String {
    format!("{:e}", x)
}

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

#[derive(Debug, Clone, Default)]
struct Document {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

impl Document {
    fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_insert((0, BTreeMap::new()))
            .1
            .insert(key.to_string(), Entry { line: 0, value: value.to_string() });
    }
}

fn parse_document(text: &str, allowed: &[(&str, &[&str])]) -> Result<Document> {
    let mut doc = Document::default();
    let mut section = String::new();
    doc.sections.insert(section.clone(), (0, BTreeMap::new()));
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                line,
                reason: format!("malformed section header `{}`", body),
            })?;
            let name = name.trim().to_string();
            if !allowed.iter().any(|(s, _)| *s == name) {
                return Err(Error::Parse { line, reason: format!("unknown section `{}`", name) });
            }
            if doc.sections.contains_key(&name) {
                return Err(Error::Parse { line, reason: format!("duplicate section `{}`", name) });
            }
            doc.sections.insert(name.clone(), (line, BTreeMap::new()));
            section = name;
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
            line,
            reason: format!("expected `key = value`, got `{}`", body),
        })?;
        let key = key.trim();
        let keys = allowed.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !keys.contains(&key) {
            let place = if section.is_empty() { String::new() } else { format!(" in [{}]", section) };
            return Err(Error::Parse { line, reason: format!("unknown key `{}`{}", key, place) });
        }
        let map = &mut doc.sections.get_mut(&section).unwrap().1;
        if map.contains_key(key) {
            return Err(Error::Parse { line, reason: format!("duplicate key `{}`", key) });
        }
        map.insert(key.to_string(), Entry { line, value: value.trim().to_string() });
    }
    Ok(doc)
}

struct Section<'d> {
    name: &'d str,
    header: usize,
    map: Option<&'d BTreeMap<String, Entry>>,
}

impl<'d> Section<'d> {
    fn of(doc: &'d Document, name: &'d str) -> Self {
        match doc.sections.get(name) {
            Some((header, map)) => Section { name, header: *header, map: Some(map) },
            None => Section { name, header: 0, map: None },
        }
    }

    fn field(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.name, key)
        }
    }

    fn get(&self, key: &str) -> Option<&'d Entry> {
        self.map.and_then(|m| m.get(key))
    }

    fn require(&self, key: &str) -> Result<&'d Entry> {
        self.get(key).ok_or_else(|| Error::Parse {
            line: self.header,
            reason: format!("missing key `{}`", self.field(key)),
        })
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |e| number(e, key))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|e| number(e, key)).transpose()
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        self.get(key).map_or(Ok(default), |e| {
            e.value.parse().map_err(|_| Error::Parse {
                line: e.line,
                reason: format!("`{}`: expected a non-negative integer, got `{}`", key, e.value),
            })
        })
    }

    fn list(&self, key: &str, len: usize) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|e| numbers(e, key, Some(len))).transpose()
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Validation { field: self.field(key), reason: format!("must be positive, got {}", v) })
        }
    }
}

fn number(e: &Entry, key: &str) -> Result<f64> {
    e.value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
        line: e.line,
        reason: format!("`{}`: expected a number, got `{}`", key, e.value),
    })
}

fn numbers(e: &Entry, key: &str, len: Option<usize>) -> Result<Vec<f64>> {
    let bad = |what: String| Error::Parse { line: e.line, reason: format!("`{}`: {}", key, what) };
    let v: Vec<f64> = e
        .value
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| bad(format!("expected comma-separated numbers, got `{}`", e.value)))?;
    if let Some(len) = len {
        if v.len() != len {
            return Err(bad(format!("expected {} values, got {}", len, v.len())));
        }
    }
    Ok(v)
}

/// `(a, b, c), (d, e, f)` with a fixed tuple width.
fn tuples(e: &Entry, key: &str, width: usize) -> Result<Vec<Vec<f64>>> {
    let bad = || Error::Parse {
        line: e.line,
        reason: format!("`{}`: expected ({}-tuples), got `{}`", key, width, e.value),
    };
    let mut out = Vec::new();
    let mut rest = e.value.trim();
    while !rest.is_empty() {
        let open = rest.strip_prefix('(').ok_or_else(bad)?;
        let close = open.find(')').ok_or_else(bad)?;
        let inner = Entry { line: e.line, value: open[..close].to_string() };
        let v = numbers(&inner, key, Some(width)).map_err(|_| bad())?;
        out.push(v);
        rest = open[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
            if rest.is_empty() {
                return Err(bad());
            }
        }
    }
    Ok(out)
}

fn boolean(e: &Entry, key: &str) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse { line: e.line, reason: format!("`{}`: expected true or false, got `{}`", key, e.value) }),
    }
}

const CONFIG_KEYS: &[(&str, &[&str])] = &[
    ("", &["tensions", "seed", "output"]),
    ("domain", &["type", "center", "radius", "semi_axes", "coefficients", "outer", "holes", "expand", "bbox"]),
    ("steady", &["p", "phi", "gauge", "tol", "max_iter"]),
    ("grid", &["n"]),
    ("evolve", &["dt", "t_end", "output_every", "newton_tol", "newton_max", "det_m_floor", "amplitude_cap"]),
    ("perturbation", &["kind", "amplitude", "branch1", "branch2", "branch3"]),
];

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    from_document(&parse_document(text, CONFIG_KEYS)?)
}

fn from_document(doc: &Document) -> Result<RunConfig> {
    let top = Section::of(doc, "");
    let tensions = match top.list("tensions", 3)? {
        Some(g) => SurfaceTensions::new([g[0], g[1], g[2]]).map_err(|e| Error::Validation {
            field: "tensions".into(),
            reason: e.to_string(),
        })?,
        None => SurfaceTensions::uniform(),
    };
    let seed = match top.get("seed") {
        Some(e) => e.value.parse().map_err(|_| Error::Parse {
            line: e.line,
            reason: format!("`seed`: expected a non-negative integer, got `{}`", e.value),
        })?,
        None => 0,
    };
    let output = top.get("output").map(|e| e.value.clone());

    let domain = parse_domain(&Section::of(doc, "domain"))?;

    let s = Section::of(doc, "steady");
    let p = s.list("p", 2)?.map_or(Point::zeros(), |v| Point::new(v[0], v[1]));
    let gauge = match s.get("gauge") {
        Some(e) => boolean(e, "gauge")?,
        None => matches!(domain.shape(), crate::domain::Shape::Circle(_)),
    };
    let tol = s.f64_or("tol", 1e-12)?;
    let steady = SteadySettings {
        p,
        phi: s.f64_or("phi", 0.0)?,
        gauge,
        tol: s.positive("tol", tol)?,
        max_iter: s.usize_or("max_iter", 50)?,
    };

    let g = Section::of(doc, "grid");
    let n = g.usize_or("n", 100)?;
    if n < 4 {
        return Err(Error::Validation { field: "grid.n".into(), reason: format!("need at least 4 elements, got {}", n) });
    }

    let e = Section::of(doc, "evolve");
    let dt = e.opt_f64("dt")?.map(|v| e.positive("dt", v)).transpose()?;
    let t_end = e.f64_or("t_end", 1.0)?;
    if !(t_end >= 0.0) {
        return Err(Error::Validation { field: "evolve.t_end".into(), reason: format!("must be non-negative, got {}", t_end) });
    }
    let output_every = e.usize_or("output_every", 100)?;
    if output_every == 0 {
        return Err(Error::Validation { field: "evolve.output_every".into(), reason: "must be at least 1".into() });
    }
    let newton_tol = e.f64_or("newton_tol", 1e-10)?;
    let det_m_floor = e.f64_or("det_m_floor", DEFAULT_DET_M_FLOOR)?;
    if !(0.0..1.0).contains(&det_m_floor) {
        return Err(Error::Validation {
            field: "evolve.det_m_floor".into(),
            reason: format!("must lie in [0, 1), got {}", det_m_floor),
        });
    }
    let evolve = EvolveSettings {
        dt,
        t_end,
        output_every,
        newton_tol: e.positive("newton_tol", newton_tol)?,
        newton_max: e.usize_or("newton_max", 20)?,
        det_m_floor,
        amplitude_cap: e.opt_f64("amplitude_cap")?.map(|v| e.positive("amplitude_cap", v)).transpose()?,
    };

    let perturbation = parse_perturbation(&Section::of(doc, "perturbation"))?;

    Ok(RunConfig { tensions, domain, steady, n, evolve, perturbation, output, seed })
}

fn parse_domain(s: &Section) -> Result<ImplicitDomain> {
    let kind = s.require("type")?;
    let center = s.list("center", 2)?.map_or(Point::zeros(), |v| Point::new(v[0], v[1]));
    let circle = |key: &str, v: &[f64]| -> Result<Circle> {
        if !(v[2] > 0.0) {
            return Err(Error::Validation { field: s.field(key), reason: format!("radius must be positive, got {}", v[2]) });
        }
        Ok(Circle::new(Point::new(v[0], v[1]), v[2]))
    };
    let mut domain = match kind.value.as_str() {
        "circle" => {
            let r = s.f64_or("radius", 1.0)?;
            ImplicitDomain::circle(center, s.positive("radius", r)?)
        }
        "ellipse" => {
            let ab = s.list("semi_axes", 2)?.ok_or_else(|| Error::Parse {
                line: kind.line,
                reason: "missing key `domain.semi_axes`".into(),
            })?;
            s.positive("semi_axes", ab[0].min(ab[1]))?;
            ImplicitDomain::ellipse(center, ab[0], ab[1])
        }
        "polynomial" => {
            let e = s.require("coefficients")?;
            let mut terms = Vec::new();
            for t in tuples(e, "coefficients", 3)? {
                if t[0] < 0.0 || t[1] < 0.0 || t[0].fract() != 0.0 || t[1].fract() != 0.0 {
                    return Err(Error::Parse {
                        line: e.line,
                        reason: format!("`coefficients`: exponents must be non-negative integers, got ({}, {})", t[0], t[1]),
                    });
                }
                terms.push((t[0] as u32, t[1] as u32, t[2]));
            }
            if terms.is_empty() {
                return Err(Error::Validation { field: s.field("coefficients"), reason: "no terms".into() });
            }
            let bbox = s.require("bbox")?;
            let b = numbers(bbox, "bbox", Some(4))?;
            ImplicitDomain::polynomial(terms, [b[0], b[1], b[2], b[3]])
        }
        "perforated" => {
            let e = s.require("outer")?;
            let outer = circle("outer", &numbers(e, "outer", Some(3))?)?;
            let holes = match s.get("holes") {
                Some(h) => tuples(h, "holes", 3)?
                    .iter()
                    .map(|v| circle("holes", v))
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            let d = ImplicitDomain::perforated(outer, holes);
            let expand = s.get("expand").map(|e| boolean(e, "expand")).transpose()?.unwrap_or(false);
            if expand {
                d.expanded().expect("perforated domains expand")
            } else {
                d
            }
        }
        other => {
            return Err(Error::Validation {
                field: s.field("type"),
                reason: format!("expected circle, ellipse, polynomial or perforated, got `{}`", other),
            })
        }
    };
    if kind.value != "polynomial" {
        if let Some(b) = s.list("bbox", 4)? {
            domain = domain.with_bbox([b[0], b[1], b[2], b[3]]);
        }
    }
    let b = domain.bbox();
    if !(b[0] < b[1] && b[2] < b[3]) {
        return Err(Error::Validation { field: s.field("bbox"), reason: format!("empty box {:?}", b) });
    }
    Ok(domain)
}

fn parse_perturbation(s: &Section) -> Result<Perturbation> {
    let kind = s.get("kind").map_or("none", |e| e.value.as_str());
    let amplitude = s.f64_or("amplitude", 1e-3)?;
    match kind {
        "none" => Ok(Perturbation::None),
        "eigenmode" => Ok(Perturbation::Eigenmode { amplitude }),
        "cosine" => {
            let mut coefficients: [Vec<f64>; 3] = Default::default();
            for (i, c) in coefficients.iter_mut().enumerate() {
                let key = format!("branch{}", i + 1);
                if let Some(e) = s.get(&key) {
                    *c = numbers(e, &key, None)?;
                }
            }
            Ok(Perturbation::Cosine { amplitude, coefficients })
        }
        other => Err(Error::Validation {
            field: s.field("kind"),
            reason: format!("expected none, cosine or eigenmode, got `{}`", other),
        }),
    }
}

const NETWORK_KEYS: &[(&str, &[&str])] = &[("", &[]), ("network", &["tensions", "p", "phi", "lengths", "curvatures"])];

/// `[network]` block holding everything the linear analysis needs.
pub fn write_network(net: &StationaryNetwork) -> String {
    let g = net.tensions.gamma();
    let mut s = String::from("[network]\n");
    let three = |v: [f64; 3]| format!("{:.16e}, {:.16e}, {:.16e}", v[0], v[1], v[2]);
    let _ = writeln!(s, "tensions = {}", three(g));
    let _ = writeln!(s, "p = {:.16e}, {:.16e}", net.p_star.x, net.p_star.y);
    let _ = writeln!(s, "phi = {:.16e}", net.phi);
    let _ = writeln!(s, "lengths = {}", three(net.lengths));
    let _ = writeln!(s, "curvatures = {}", three(net.curvatures));
    s
}

pub fn is_network(text: &str) -> bool {
    text.lines().any(|l| l.split('#').next().unwrap_or("").trim() == "[network]")
}

pub fn parse_network(text: &str) -> Result<StationaryNetwork> {
    let doc = parse_document(text, NETWORK_KEYS)?;
    let s = Section::of(&doc, "network");
    if s.map.is_none() {
        return Err(Error::Parse { line: 1, reason: "missing section `[network]`".into() });
    }
    let three = |key: &str| -> Result<[f64; 3]> {
        let v = numbers(s.require(key)?, key, Some(3))?;
        Ok([v[0], v[1], v[2]])
    };
    let tensions = SurfaceTensions::new(three("tensions")?).map_err(|e| Error::Validation {
        field: "network.tensions".into(),
        reason: e.to_string(),
    })?;
    let p = numbers(s.require("p")?, "p", Some(2))?;
    let phi = number(s.require("phi")?, "phi")?;
    let lengths = three("lengths")?;
    for l in lengths {
        s.positive("lengths", l)?;
    }
    Ok(StationaryNetwork::from_lines(tensions, Point::new(p[0], p[1]), phi, lengths, three("curvatures")?))
}

pub const TRAJECTORY_HEADER: &str =
    "t,E,kappa_l2_sq,kappa_s_l2_sq,kappa_ss_l2_sq,px,py,mu1,mu2,mu3,res_junction,res_flux,res_outer,res_perp";

/// The persisted columns of a diagnostics record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub energy: f64,
    pub kappa_l2_sq: f64,
    pub kappa_s_l2_sq: f64,
    pub kappa_ss_l2_sq: f64,
    pub p: [f64; 2],
    pub mu: [f64; 3],
    pub res_junction: f64,
    pub res_flux: f64,
    pub res_outer: f64,
    pub res_perp: f64,
}

impl From<&DiagnosticsRecord> for TrajectoryRow {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            t: r.t,
            energy: r.energy,
            kappa_l2_sq: r.kappa_l2_sq,
            kappa_s_l2_sq: r.kappa_s_l2_sq,
            kappa_ss_l2_sq: r.kappa_ss_l2_sq,
            p: [r.p.x, r.p.y],
            mu: r.mu,
            res_junction: r.res_junction,
            res_flux: r.res_flux,
            res_outer: r.res_outer,
            res_perp: r.res_perp,
        }
    }
}

impl TrajectoryRow {
    fn values(&self) -> [f64; 14] {
        [
            self.t,
            self.energy,
            self.kappa_l2_sq,
            self.kappa_s_l2_sq,
            self.kappa_ss_l2_sq,
            self.p[0],
            self.p[1],
            self.mu[0],
            self.mu[1],
            self.mu[2],
            self.res_junction,
            self.res_flux,
            self.res_outer,
            self.res_perp,
        ]
    }

    fn from_values(v: &[f64]) -> Self {
        Self {
            t: v[0],
            energy: v[1],
            kappa_l2_sq: v[2],
            kappa_s_l2_sq: v[3],
            kappa_ss_l2_sq: v[4],
            p: [v[5], v[6]],
            mu: [v[7], v[8], v[9]],
            res_junction: v[10],
            res_flux: v[11],
            res_outer: v[12],
            res_perp: v[13],
        }
    }
}

/// Writes the CSV with 17 significant digits, which round-trips every finite `f64`.
pub fn write_trajectory_to<W: Write>(rows: &[TrajectoryRow], mut w: W) -> Result<()> {
    writeln!(w, "{}", TRAJECTORY_HEADER)?;
    let mut line = String::new();
    for r in rows {
        line.clear();
        for (k, v) in r.values().iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            let _ = write!(line, "{:.16e}", v);
        }
        writeln!(w, "{}", line)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(records: &[DiagnosticsRecord], path: &std::path::Path) -> Result<()> {
    let rows: Vec<TrajectoryRow> = records.iter().map(TrajectoryRow::from).collect();
    let f = std::fs::File::create(path)?;
    write_trajectory_to(&rows, std::io::BufWriter::new(f))
}

pub fn read_trajectory_from<R: BufRead>(r: R) -> Result<Vec<TrajectoryRow>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != TRAJECTORY_HEADER {
        return Err(Error::Io(format!("unexpected header `{}`", header.trim())));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Option<Vec<f64>> = line.split(',').map(|s| s.trim().parse().ok()).collect();
        match v {
            Some(v) if v.len() == 14 => rows.push(TrajectoryRow::from_values(&v)),
            _ => return Err(Error::Io(format!("row {}: malformed record `{}`", k + 1, line))),
        }
    }
    Ok(rows)
}

pub fn read_trajectory(path: &std::path::Path) -> Result<Vec<TrajectoryRow>> {
    let f = std::fs::File::open(path)?;
    read_trajectory_from(std::io::BufReader::new(f))
}

/// Thresholds for [`verify_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyTolerances {
    /// Largest allowed energy increase between records.
    pub energy_increase: f64,
    /// Energy-law residual relative to the mean `|kappa|^2` of the interval.
    pub energy_law: f64,
    /// `|sum gamma kappa(0)|` relative to `|kappa|_{L^2}`.
    pub junction: f64,
    pub perpendicular: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            energy_increase: 1e-12,
            energy_law: 0.25,
            junction: 0.25,
            perpendicular: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyCheck {
    pub name: &'static str,
    pub worst: f64,
    pub limit: f64,
    pub passed: bool,
}

/// Checks a stored trajectory: finite columns, monotone energy, the energy
/// law between consecutive records, and the junction and perpendicularity
/// residuals. Initial data need not satisfy the curvature condition at the
/// junction, so the first record and the first interval are exempt from the
/// junction and energy-law checks.
pub fn verify_trajectory(rows: &[TrajectoryRow], tol: &VerifyTolerances) -> Vec<VerifyCheck> {
    let check = |name, worst: f64, limit: f64| VerifyCheck { name, worst, limit, passed: worst <= limit };
    let finite = rows.iter().all(|r| r.values().iter().all(|v| v.is_finite()));
    let mut rise = 0.0_f64;
    let mut law = 0.0_f64;
    for (k, w) in rows.windows(2).enumerate() {
        rise = rise.max(w[1].energy - w[0].energy);
        let dt = w[1].t - w[0].t;
        if k > 0 && dt > 0.0 {
            let k = 0.5 * (w[0].kappa_l2_sq + w[1].kappa_l2_sq);
            let r = ((w[1].energy - w[0].energy) / dt + k).abs();
            law = law.max(r / k.max(1e-12));
        }
    }
    let max = |f: fn(&TrajectoryRow) -> f64| rows.iter().skip(1).map(f).fold(0.0, f64::max);
    vec![
        check("finite", if finite { 0.0 } else { f64::INFINITY }, 0.0),
        check("energy_monotone", rise, tol.energy_increase),
        check("energy_law", law, tol.energy_law),
        check("junction", max(|r| r.res_junction / r.kappa_l2_sq.sqrt().max(1e-12)), tol.junction),
        check("perpendicular", rows.iter().map(|r| r.res_perp).fold(0.0, f64::max), tol.perpendicular),
    ]
}
