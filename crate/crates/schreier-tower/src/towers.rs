//! Towers `Λ_0 ← Λ_1 ← …` of finite action graphs joined by covering maps.
//!
//! Levels are never required to exist in memory. Voltage towers step a
//! vertex by walking its sheet digits up from the base graph, formula
//! towers use modular arithmetic, and only folded or user-supplied towers
//! keep explicit arrays. [`Tower::level`] materializes a level on demand.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{decorate_with_loops, is_covering, ActionView, Alphabet, CoveringCheck, LabeledGraph, Letter, NONE};
use crate::words::{schori_generator_sets, stallings_fold, trace_in, SchoriVariant};

/// Largest level that [`Tower::level`] will materialize.
pub const MATERIALIZE_LIMIT: u64 = 1 << 24;

/// Vertex budget behind the default ends budget.
pub const DEFAULT_VERTEX_BUDGET: u64 = 5_000_000;

/// Default cap on the declared depth of built-in towers.
pub const DEFAULT_MAX_DEPTH: usize = 12;

fn check_perm(p: &[u32]) -> Result<()> {
    let mut seen = vec![false; p.len()];
    for &x in p {
        if x as usize >= p.len() || std::mem::replace(&mut seen[x as usize], true) {
            return Err(Error::BadPermutation(format!("{p:?}")));
        }
    }
    Ok(())
}

fn invert(p: &[u32]) -> Vec<u32> {
    let mut q = vec![0; p.len()];
    for (i, &x) in p.iter().enumerate() {
        q[x as usize] = i as u32;
    }
    q
}

/// Permutation voltages on the darts of a graph. Only positively labeled
/// darts are stored; a voltage given on `(v, g⁻¹)` is kept as its inverse
/// on the reverse dart `(step_{g⁻¹}(v), g)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoltageAssignment {
    degree: usize,
    base_sheet: u32,
    darts: BTreeMap<(u32, usize), Vec<u32>>,
}

impl VoltageAssignment {
    pub fn new(degree: usize) -> Self {
        Self { degree, base_sheet: 0, darts: BTreeMap::new() }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Sheet of the cover's basepoint (default 0).
    pub fn with_base_sheet(mut self, sheet: u32) -> Self {
        self.base_sheet = sheet;
        self
    }

    /// Sets the voltage of dart `(v, letter)`.
    pub fn set(&mut self, g: &LabeledGraph, v: u32, letter: Letter, perm: Vec<u32>) -> Result<()> {
        if perm.len() != self.degree {
            return Err(Error::BadPermutation(format!("{perm:?} has degree {}, expected {}", perm.len(), self.degree)));
        }
        check_perm(&perm)?;
        let (key, perm) = if letter.inverse {
            let u = g.step(v, letter).ok_or(Error::Incomplete)?;
            ((u, letter.label), invert(&perm))
        } else {
            ((v, letter.label), perm)
        };
        match self.darts.get(&key) {
            Some(old) if *old != perm => {
                Err(Error::InconsistentVoltage { vertex: v as u64, label: g.alphabet().letter_name(letter) })
            }
            _ => {
                self.darts.insert(key, perm);
                Ok(())
            }
        }
    }

    pub fn get(&self, v: u32, label: usize) -> Option<&[u32]> {
        self.darts.get(&(v, label)).map(|p| p.as_slice())
    }
}

/// Permutation-voltage cover of `g`. Vertex `(v, i)` is numbered
/// `v·d + i`; the returned map is the projection to `v`.
pub fn voltage_cover(g: &LabeledGraph, va: &VoltageAssignment) -> Result<(LabeledGraph, Vec<u32>)> {
    if !g.is_complete() {
        return Err(Error::Incomplete);
    }
    let d = va.degree;
    let n = g.vertex_count();
    if (n as u64) * (d as u64) >= NONE as u64 {
        return Err(Error::LevelBudget { level: 0, budget: 0 });
    }
    for &(v, l) in va.darts.keys() {
        if v as usize >= n || l >= g.alphabet().len() {
            return Err(Error::VertexOutOfRange { vertex: v as u64, count: n as u64 });
        }
    }
    let ident: Vec<u32> = (0..d as u32).collect();
    let mut perms = Vec::with_capacity(g.alphabet().len());
    for l in 0..g.alphabet().len() {
        let src = g.perm(l);
        let mut out = vec![0u32; n * d];
        for v in 0..n {
            let sigma = va.get(v as u32, l).unwrap_or(&ident);
            let base = src[v] as usize * d;
            for i in 0..d {
                out[v * d + i] = (base + sigma[i] as usize) as u32;
            }
        }
        perms.push(out);
    }
    let basepoint = g.basepoint() * d as u32 + va.base_sheet;
    let cover = LabeledGraph::make_action_graph(g.alphabet().clone(), perms, basepoint)?;
    let proj = (0..(n * d) as u32).map(|x| x / d as u32).collect();
    Ok((cover, proj))
}

/// One voltage step of an implicit tower: a sparse assignment on the
/// darts of the level below.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverStep {
    pub degree: u32,
    /// Sheet of the next basepoint above the current one.
    pub base_sheet: u32,
    /// Sorted by key.
    darts: Vec<Dart>,
}

/// `((vertex, label), σ, σ⁻¹)`.
type Dart = ((u64, usize), Vec<u32>, Vec<u32>);

impl CoverStep {
    pub fn new(degree: u32, base_sheet: u32, darts: Vec<((u64, usize), Vec<u32>)>) -> Result<Self> {
        let mut out = Vec::with_capacity(darts.len());
        for (key, p) in darts {
            if p.len() != degree as usize {
                return Err(Error::BadPermutation(format!("{p:?} in a degree-{degree} step")));
            }
            check_perm(&p)?;
            let q = invert(&p);
            out.push((key, p, q));
        }
        out.sort_by_key(|x| x.0);
        if out.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Tower("two voltages on one dart".into()));
        }
        Ok(Self { degree, base_sheet, darts: out })
    }

    fn lookup(&self, v: u64, label: usize) -> Option<&Dart> {
        self.darts.binary_search_by_key(&(v, label), |x| x.0).ok().map(|i| &self.darts[i])
    }

    /// Voltage of dart `(v, label)`, if not the identity.
    pub fn voltage(&self, v: u64, label: usize) -> Option<&[u32]> {
        self.lookup(v, label).map(|x| x.1.as_slice())
    }

    /// Darts carrying a voltage, with their permutations.
    pub fn darts(&self) -> impl Iterator<Item = ((u64, usize), &[u32])> + '_ {
        self.darts.iter().map(|x| (x.0, x.1.as_slice()))
    }
}

/// Construction method for the Schori tower.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchoriMethod {
    Folding,
    Voltage,
}

/// End-count variant of the generalized Schori tower.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneralizedVariant {
    #[serde(rename = "4n")]
    FourN,
    #[serde(rename = "4n+2")]
    FourNPlusTwo,
}

/// Name and parameters of a tower.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TowerSpec {
    Dyadic,
    Torus,
    Schori {
        method: SchoriMethod,
    },
    Generalized {
        n: u32,
        variant: GeneralizedVariant,
    },
    Rt,
    Mixed {
        degrees: Vec<u32>,
    },
    /// Levels read from a directory written by `schreier build`.
    Dir {
        path: String,
    },
}

impl TowerSpec {
    /// Parses `schori`, `schori:folding`, `generalized:2:4n`,
    /// `generalized:1:4n+2`, `mixed`, `mixed:5,3,3`, `dyadic`, `torus`,
    /// `rt` or `dir:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.splitn(2, ':');
        let name = parts.next().unwrap_or_default();
        let rest = parts.next();
        let bad = |why: &str| Error::Config(format!("tower `{s}`: {why}"));
        let spec = match (name, rest) {
            ("dyadic", None) => TowerSpec::Dyadic,
            ("torus", None) => TowerSpec::Torus,
            ("rt", None) => TowerSpec::Rt,
            ("schori", None | Some("voltage")) => TowerSpec::Schori { method: SchoriMethod::Voltage },
            ("schori", Some("folding")) => TowerSpec::Schori { method: SchoriMethod::Folding },
            ("generalized", Some(p)) => {
                let (n, v) = p.split_once(':').unwrap_or((p, "4n"));
                let n: u32 = n.parse().map_err(|_| bad("n must be a positive integer"))?;
                let variant = match v {
                    "4n" => GeneralizedVariant::FourN,
                    "4n+2" => GeneralizedVariant::FourNPlusTwo,
                    _ => return Err(bad("variant must be 4n or 4n+2")),
                };
                TowerSpec::Generalized { n, variant }
            }
            ("mixed", None) => TowerSpec::Mixed { degrees: default_mixed_degrees(10) },
            ("mixed", Some(p)) => {
                let degrees = p
                    .split(',')
                    .map(|x| x.trim().parse::<u32>().map_err(|_| bad("degrees must be integers")))
                    .collect::<Result<Vec<_>>>()?;
                TowerSpec::Mixed { degrees }
            }
            ("dir", Some(p)) => TowerSpec::Dir { path: p.to_string() },
            _ => {
                return Err(bad("unknown tower; available: dyadic, torus, rt, schori[:folding|:voltage], \
                     generalized:N[:4n|:4n+2], mixed[:D1,D2,...], dir:PATH"))
            }
        };
        Ok(spec)
    }
}

impl fmt::Display for TowerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TowerSpec::Dyadic => write!(f, "dyadic"),
            TowerSpec::Torus => write!(f, "torus"),
            TowerSpec::Rt => write!(f, "rt"),
            TowerSpec::Schori { method: SchoriMethod::Voltage } => write!(f, "schori"),
            TowerSpec::Schori { method: SchoriMethod::Folding } => write!(f, "schori:folding"),
            TowerSpec::Generalized { n, variant } => {
                let v = match variant {
                    GeneralizedVariant::FourN => "4n",
                    GeneralizedVariant::FourNPlusTwo => "4n+2",
                };
                write!(f, "generalized:{n}:{v}")
            }
            TowerSpec::Mixed { degrees } => {
                let ds: Vec<String> = degrees.iter().map(|d| d.to_string()).collect();
                write!(f, "mixed:{}", ds.join(","))
            }
            TowerSpec::Dir { path } => write!(f, "dir:{path}"),
        }
    }
}

/// The degree sequence `5, 3, 3, 5, 3, 3, 3, 5, 3, 3, 3, 3, 5, …`,
/// truncated to `len` entries.
pub fn default_mixed_degrees(len: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(len);
    let mut run = 2;
    while out.len() < len {
        out.push(5);
        out.extend(std::iter::repeat_n(3, run));
        run += 1;
    }
    out.truncate(len);
    out
}

#[derive(Debug)]
enum Family {
    Explicit { levels: Vec<LabeledGraph>, bonding: Vec<Vec<u32>>, fibers: Vec<Vec<Vec<u32>>> },
    Voltage { base: LabeledGraph, steps: Vec<CoverStep> },
    Dyadic,
    Torus,
    Rt,
}

/// A tower of covers. Level `k` may be queried for any `k ≤ max_level()`;
/// `depth()` is the number of levels the builder was asked for.
#[derive(Debug)]
pub struct Tower {
    spec: TowerSpec,
    depth: usize,
    alphabet: Alphabet,
    own_labels: usize,
    family: Family,
    cache: Vec<OnceLock<LabeledGraph>>,
}

impl Tower {
    fn assemble(spec: TowerSpec, depth: usize, alphabet: Alphabet, family: Family) -> Self {
        let own_labels = alphabet.len();
        let mut t = Self { spec, depth, alphabet, own_labels, family, cache: Vec::new() };
        t.cache = (0..=t.max_level()).map(|_| OnceLock::new()).collect();
        t
    }

    /// Builds the tower named by `spec` with `depth` declared levels.
    pub fn build(spec: &TowerSpec, depth: usize) -> Result<Self> {
        match spec {
            TowerSpec::Dyadic => build_dyadic_tower(depth),
            TowerSpec::Torus => build_torus_tower(depth),
            TowerSpec::Rt => build_rt_tower(depth),
            TowerSpec::Schori { method } => build_schori_tower(depth, *method),
            TowerSpec::Generalized { n, variant } => build_generalized_schori_tower(*n, *variant, depth),
            TowerSpec::Mixed { degrees } => build_mixed_tower(degrees, depth),
            TowerSpec::Dir { path } => crate::io::read_tower_dir(std::path::Path::new(path)),
        }
    }

    /// A tower from explicit levels and bonding maps (`bonding[k]` sends
    /// level `k+1` to level `k`). Every bonding map must be a covering that
    /// respects basepoints.
    pub fn explicit(spec: TowerSpec, levels: Vec<LabeledGraph>, bonding: Vec<Vec<u32>>) -> Result<Self> {
        if levels.is_empty() || bonding.len() + 1 != levels.len() {
            return Err(Error::Tower("need K+1 levels and K bonding maps".into()));
        }
        let alphabet = levels[0].alphabet().clone();
        for (k, g) in levels.iter().enumerate() {
            if !g.is_complete() || !g.is_connected() {
                return Err(Error::Tower(format!("level {k} is not a complete connected graph")));
            }
        }
        let mut fibers = Vec::new();
        for (k, map) in bonding.iter().enumerate() {
            let check = is_covering(&levels[k + 1], &levels[k], map);
            if !check.is_covering() {
                return Err(Error::NotCovering(k + 1));
            }
            if map[levels[k + 1].basepoint() as usize] != levels[k].basepoint() {
                return Err(Error::Tower(format!("basepoint of level {} does not project to level {k}", k + 1)));
            }
            let mut fib = vec![Vec::new(); levels[k].vertex_count()];
            for (v, &x) in map.iter().enumerate() {
                fib[x as usize].push(v as u32);
            }
            fibers.push(fib);
        }
        let depth = levels.len() - 1;
        Ok(Self::assemble(spec, depth, alphabet, Family::Explicit { levels, bonding, fibers }))
    }

    /// A tower of iterated voltage covers over `base`.
    pub fn from_steps(spec: TowerSpec, depth: usize, base: LabeledGraph, steps: Vec<CoverStep>) -> Result<Self> {
        if !base.is_complete() {
            return Err(Error::Incomplete);
        }
        if depth > steps.len() {
            return Err(Error::LevelBudget { level: depth, budget: steps.len() });
        }
        let alphabet = base.alphabet().clone();
        let mut count = base.vertex_count() as u64;
        for (k, s) in steps.iter().enumerate() {
            if s.base_sheet >= s.degree {
                return Err(Error::Tower(format!("step {k}: base sheet out of range")));
            }
            for ((v, l), _) in s.darts() {
                if v >= count || l >= alphabet.len() {
                    return Err(Error::Tower(format!("step {k}: dart ({v}, {l}) out of range")));
                }
            }
            count = count.checked_mul(s.degree as u64).ok_or(Error::LevelBudget { level: k + 1, budget: k })?;
        }
        Ok(Self::assemble(spec, depth, alphabet, Family::Voltage { base, steps }))
    }

    pub fn spec(&self) -> &TowerSpec {
        &self.spec
    }

    /// The spec string, followed by `+loops(..)` when loop labels were added.
    pub fn name(&self) -> String {
        let loops = self.loop_names();
        if loops.is_empty() {
            self.spec.to_string()
        } else {
            format!("{}+loops({})", self.spec, loops.join(","))
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Declared number of levels `K`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Deepest level the tower can address.
    pub fn max_level(&self) -> usize {
        match &self.family {
            Family::Explicit { levels, .. } => levels.len() - 1,
            Family::Voltage { steps, .. } => steps.len(),
            Family::Dyadic | Family::Rt => 62,
            Family::Torus => 31,
        }
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k > self.max_level() {
            Err(Error::LevelBudget { level: k, budget: self.max_level() })
        } else {
            Ok(())
        }
    }

    /// Degree of the covering from level `k+1` to level `k`.
    pub fn degree(&self, k: usize) -> u32 {
        match &self.family {
            Family::Explicit { fibers, .. } => fibers[k][0].len() as u32,
            Family::Voltage { steps, .. } => steps[k].degree,
            Family::Dyadic | Family::Rt => 2,
            Family::Torus => 4,
        }
    }

    /// Degrees of the declared levels.
    pub fn degrees(&self) -> Vec<u32> {
        (0..self.depth).map(|k| self.degree(k)).collect()
    }

    pub fn vertex_count(&self, k: usize) -> u64 {
        match &self.family {
            Family::Explicit { levels, .. } => levels[k].vertex_count() as u64,
            Family::Voltage { base, steps } => {
                steps[..k].iter().fold(base.vertex_count() as u64, |n, s| n * s.degree as u64)
            }
            Family::Dyadic | Family::Rt => 1 << k,
            Family::Torus => 1 << (2 * k),
        }
    }

    pub fn basepoint(&self, k: usize) -> u64 {
        match &self.family {
            Family::Explicit { levels, .. } => levels[k].basepoint() as u64,
            Family::Voltage { base, steps } => {
                steps[..k].iter().fold(base.basepoint() as u64, |v, s| v * s.degree as u64 + s.base_sheet as u64)
            }
            Family::Dyadic | Family::Rt | Family::Torus => 0,
        }
    }

    /// Moves `v` at level `k` along `letter`.
    pub fn step(&self, k: usize, v: u64, letter: Letter) -> u64 {
        if letter.label >= self.own_labels {
            return v;
        }
        let sign = if letter.inverse { -1i64 } else { 1 };
        match &self.family {
            Family::Explicit { levels, .. } => levels[k].step(v as u32, letter).expect("complete") as u64,
            Family::Voltage { base, steps } => voltage_step(base, &steps[..k], v, letter),
            Family::Dyadic => (v as i64 + sign) as u64 & ((1u64 << k) - 1),
            Family::Rt => {
                let mask = (1u64 << k) - 1;
                if letter.label == 0 {
                    (v as i64 + sign) as u64 & mask
                } else {
                    v.wrapping_neg() & mask
                }
            }
            Family::Torus => {
                let mask = (1u64 << k) - 1;
                let (x, y) = (v & mask, v >> k);
                if letter.label == 0 {
                    ((x as i64 + sign) as u64 & mask) | (y << k)
                } else {
                    x | (((y as i64 + sign) as u64 & mask) << k)
                }
            }
        }
    }

    /// Image of level-`k+1` vertex `v` under the bonding map to level `k`.
    pub fn project(&self, k: usize, v: u64) -> u64 {
        match &self.family {
            Family::Explicit { bonding, .. } => bonding[k][v as usize] as u64,
            Family::Voltage { steps, .. } => v / steps[k].degree as u64,
            Family::Dyadic | Family::Rt => v & ((1u64 << k) - 1),
            Family::Torus => {
                let mask = (1u64 << k) - 1;
                (v & mask) | (((v >> (k + 1)) & mask) << k)
            }
        }
    }

    /// The fiber over level-`k` vertex `v` in level `k+1`, in sheet order.
    pub fn preimages(&self, k: usize, v: u64) -> Vec<u64> {
        match &self.family {
            Family::Explicit { fibers, .. } => fibers[k][v as usize].iter().map(|&x| x as u64).collect(),
            Family::Voltage { steps, .. } => {
                let d = steps[k].degree as u64;
                (0..d).map(|s| v * d + s).collect()
            }
            Family::Dyadic | Family::Rt => vec![v, v + (1 << k)],
            Family::Torus => {
                let mask = (1u64 << k) - 1;
                let (x, y) = (v & mask, v >> k);
                let h = 1u64 << k;
                let enc = |x: u64, y: u64| x | (y << (k + 1));
                vec![enc(x, y), enc(x + h, y), enc(x, y + h), enc(x + h, y + h)]
            }
        }
    }

    /// Voltage step from level `k` to `k+1`, when the tower has one.
    pub fn cover_step(&self, k: usize) -> Option<&CoverStep> {
        match &self.family {
            Family::Voltage { steps, .. } => steps.get(k),
            _ => None,
        }
    }

    /// Level `k` as an [`ActionView`].
    pub fn view(&self, k: usize) -> LevelView<'_> {
        LevelView { tower: self, level: k }
    }

    /// Level `k` as an explicit graph, materialized once and cached.
    pub fn level(&self, k: usize) -> Result<&LabeledGraph> {
        self.check_level(k)?;
        if self.vertex_count(k) > MATERIALIZE_LIMIT {
            return Err(Error::LevelBudget { level: k, budget: self.materialize_budget() });
        }
        if let Some(g) = self.cache[k].get() {
            return Ok(g);
        }
        let g = self.materialize(k)?;
        Ok(self.cache[k].get_or_init(|| g))
    }

    fn materialize(&self, k: usize) -> Result<LabeledGraph> {
        let own = match &self.family {
            Family::Explicit { levels, .. } => levels[k].clone(),
            Family::Voltage { base, steps } => {
                if k == 0 {
                    base.clone()
                } else {
                    let below = self.level(k - 1)?;
                    let below = crate::graph::prune_loops(below, &self.loop_names())?;
                    let step = &steps[k - 1];
                    let mut va = VoltageAssignment::new(step.degree as usize).with_base_sheet(step.base_sheet);
                    for ((v, l), p) in step.darts() {
                        va.set(&below, v as u32, Letter::pos(l), p.to_vec())?;
                    }
                    voltage_cover(&below, &va)?.0
                }
            }
            _ => {
                let n = self.vertex_count(k);
                let own_alpha = Alphabet::new(&self.alphabet.names()[..self.own_labels])?;
                let perms = (0..self.own_labels)
                    .map(|l| (0..n).map(|v| self.step(k, v, Letter::pos(l)) as u32).collect())
                    .collect();
                LabeledGraph::make_action_graph(own_alpha, perms, self.basepoint(k) as u32)?
            }
        };
        let names = self.loop_names();
        decorate_with_loops(&own, &names)
    }

    fn loop_names(&self) -> Vec<&str> {
        self.alphabet.names()[self.own_labels..].iter().map(|s| s.as_str()).collect()
    }

    /// Largest level that can be materialized.
    pub fn materialize_budget(&self) -> usize {
        (0..=self.max_level()).take_while(|&k| self.vertex_count(k) <= MATERIALIZE_LIMIT).last().unwrap_or(0)
    }

    /// Largest level with at most [`DEFAULT_VERTEX_BUDGET`] vertices: 14 for
    /// degree 3, 9 for degree 5.
    pub fn default_budget(&self) -> usize {
        (0..=self.max_level()).take_while(|&k| self.vertex_count(k) <= DEFAULT_VERTEX_BUDGET).last().unwrap_or(0)
    }

    /// Bonding map from level `k+1` to level `k` as an array.
    pub fn bonding_map(&self, k: usize) -> Result<Vec<u32>> {
        self.check_level(k + 1)?;
        if self.vertex_count(k + 1) > MATERIALIZE_LIMIT {
            return Err(Error::LevelBudget { level: k + 1, budget: self.materialize_budget() });
        }
        Ok((0..self.vertex_count(k + 1)).map(|v| self.project(k, v) as u32).collect())
    }

    /// Checks every declared bonding map: covering of the declared degree,
    /// basepoints coherent, vertex counts multiplicative.
    pub fn verify(&self) -> Result<()> {
        for k in 0..self.depth {
            let hi = self.level(k + 1)?;
            let lo = self.level(k)?;
            let map = self.bonding_map(k)?;
            match is_covering(hi, lo, &map) {
                CoveringCheck::Covering { degree } if degree as u32 == self.degree(k) => {}
                _ => return Err(Error::NotCovering(k + 1)),
            }
            if self.project(k, self.basepoint(k + 1)) != self.basepoint(k) {
                return Err(Error::Tower(format!("basepoint of level {} does not project to level {k}", k + 1)));
            }
            if self.vertex_count(k + 1) != self.vertex_count(k) * self.degree(k) as u64 {
                return Err(Error::Tower(format!("fiber-size law fails at level {}", k + 1)));
            }
        }
        Ok(())
    }

    /// The same tower with extra labels acting as loops at every vertex.
    pub fn decorated(&self, add: &[&str]) -> Result<Tower> {
        let alphabet = self.alphabet.extended(add)?;
        let family = match &self.family {
            Family::Explicit { levels, bonding, fibers } => {
                Family::Explicit { levels: levels.clone(), bonding: bonding.clone(), fibers: fibers.clone() }
            }
            Family::Voltage { base, steps } => Family::Voltage { base: base.clone(), steps: steps.clone() },
            Family::Dyadic => Family::Dyadic,
            Family::Torus => Family::Torus,
            Family::Rt => Family::Rt,
        };
        let mut t = Self::assemble(self.spec.clone(), self.depth, alphabet, family);
        t.own_labels = self.own_labels;
        Ok(t)
    }

    /// Drops loop labels added by [`Tower::decorated`].
    pub fn pruned(&self, drop: &[&str]) -> Result<Tower> {
        for name in drop {
            match self.alphabet.index(name) {
                None => return Err(Error::UnknownLabel(name.to_string())),
                Some(l) if l < self.own_labels => return Err(Error::NotLoopLabel(name.to_string())),
                _ => {}
            }
        }
        let keep: Vec<&str> = self.alphabet.names().iter().map(|s| s.as_str()).filter(|s| !drop.contains(s)).collect();
        let base = Tower::decorated(self, &[])?;
        let mut t = base;
        t.alphabet = Alphabet::new(&keep)?;
        Ok(t)
    }
}

fn voltage_step(base: &LabeledGraph, steps: &[CoverStep], v: u64, letter: Letter) -> u64 {
    let k = steps.len();
    let mut digits = [0u32; 64];
    let mut x = v;
    for j in (0..k).rev() {
        let d = steps[j].degree as u64;
        digits[j] = (x % d) as u32;
        x /= d;
    }
    let mut cur = x;
    let mut next = base.step(x as u32, letter).expect("complete") as u64;
    for (j, st) in steps.iter().enumerate() {
        let s = digits[j];
        let s2 = if letter.inverse {
            st.lookup(next, letter.label).map_or(s, |e| e.2[s as usize])
        } else {
            st.lookup(cur, letter.label).map_or(s, |e| e.1[s as usize])
        };
        let d = st.degree as u64;
        cur = cur * d + s as u64;
        next = next * d + s2 as u64;
    }
    next
}

/// One level of a tower seen as an action on vertex ids.
#[derive(Clone, Copy)]
pub struct LevelView<'a> {
    tower: &'a Tower,
    level: usize,
}

impl LevelView<'_> {
    pub fn level(&self) -> usize {
        self.level
    }
}

impl ActionView for LevelView<'_> {
    fn alphabet(&self) -> &Alphabet {
        &self.tower.alphabet
    }

    fn step(&self, v: u64, letter: Letter) -> Option<u64> {
        Some(self.tower.step(self.level, v, letter))
    }
}

/// Cyclic covers `Z/2^k` with `a = +1`.
pub fn build_dyadic_tower(depth: usize) -> Result<Tower> {
    let alphabet = Alphabet::new(&["a"])?;
    let t = Tower::assemble(TowerSpec::Dyadic, depth, alphabet, Family::Dyadic);
    t.check_level(depth)?;
    Ok(t)
}

/// Grid tori `(Z/2^k)²` with `a`, `b` translating the two coordinates.
pub fn build_torus_tower(depth: usize) -> Result<Tower> {
    let t = Tower::assemble(TowerSpec::Torus, depth, Alphabet::ab(), Family::Torus);
    t.check_level(depth)?;
    Ok(t)
}

/// `Z/2^k` with `a: i ↦ i+1` and `b: i ↦ −i`, the coset action on
/// `⟨b, a^(2^k)⟩`.
pub fn build_rt_tower(depth: usize) -> Result<Tower> {
    let t = Tower::assemble(TowerSpec::Rt, depth, Alphabet::ab(), Family::Rt);
    t.check_level(depth)?;
    Ok(t)
}

fn transposition(d: u32, i: u32, j: u32) -> Vec<u32> {
    let mut p: Vec<u32> = (0..d).collect();
    p.swap(i as usize, j as usize);
    p
}

/// Degree-3 step: `(0 1)` on the `a`-dart and `(0 2)` on the `b`-dart at
/// the basepoint, basepoint staying on sheet 0.
fn schori_step(base: u64) -> CoverStep {
    CoverStep::new(3, 0, vec![((base, 0), transposition(3, 0, 1)), ((base, 1), transposition(3, 0, 2))])
        .expect("valid step")
}

/// Degree-5 step: 3-cycles `0→1→2` on the `a`-dart and `0→3→4` on the
/// `b`-dart at the basepoint, so the fiber over the basepoint is
/// `{id, a^m, a^2m, b^m, b^2m}`.
fn five_step(base: u64) -> CoverStep {
    CoverStep::new(5, 0, vec![((base, 0), vec![1, 2, 0, 3, 4]), ((base, 1), vec![3, 1, 2, 4, 0])]).expect("valid step")
}

fn steps_within(degrees: impl Iterator<Item = u32>, mut make: impl FnMut(usize, u32) -> CoverStep) -> Vec<CoverStep> {
    let mut count: u64 = 1;
    let mut steps = Vec::new();
    for (k, d) in degrees.enumerate() {
        match count.checked_mul(d as u64) {
            Some(c) if c < (1u64 << 62) => count = c,
            _ => break,
        }
        steps.push(make(k, d));
    }
    steps
}

/// The Schori tower by folding the generator sets or by iterated voltage
/// covers. Both give the same graphs up to vertex numbering.
pub fn build_schori_tower(depth: usize, method: SchoriMethod) -> Result<Tower> {
    let spec = TowerSpec::Schori { method };
    match method {
        SchoriMethod::Voltage => {
            let steps = steps_within(std::iter::repeat(3), |_, _| schori_step(0));
            Tower::from_steps(spec, depth, LabeledGraph::rose(Alphabet::ab()), steps)
        }
        SchoriMethod::Folding => {
            if depth > DEFAULT_MAX_DEPTH {
                return Err(Error::LevelBudget { level: depth, budget: DEFAULT_MAX_DEPTH });
            }
            let mut levels = Vec::new();
            for k in 0..=depth {
                let s = schori_generator_sets(k, SchoriVariant::Simplified);
                levels.push(stallings_fold(&s.alphabet, &s.generators()));
            }
            let mut bonding = Vec::new();
            for k in 0..depth {
                bonding.push(bonding_by_trace(&levels[k + 1], &levels[k])?);
            }
            Tower::explicit(spec, levels, bonding)
        }
    }
}

/// The map `H w ↦ G w` for subgroups `H ≤ G`, found by walking both coset
/// graphs in parallel from their basepoints.
pub fn bonding_by_trace(hi: &LabeledGraph, lo: &LabeledGraph) -> Result<Vec<u32>> {
    let mut map = vec![NONE; hi.vertex_count()];
    map[hi.basepoint() as usize] = lo.basepoint();
    let mut stack = vec![hi.basepoint()];
    while let Some(v) = stack.pop() {
        for l in hi.alphabet().letters() {
            let w = hi.step(v, l).ok_or(Error::Incomplete)?;
            let x = lo.step(map[v as usize], l).ok_or(Error::Incomplete)?;
            if map[w as usize] == NONE {
                map[w as usize] = x;
                stack.push(w);
            } else if map[w as usize] != x {
                return Err(Error::Tower("subgroups are not nested".into()));
            }
        }
    }
    if map.contains(&NONE) {
        return Err(Error::Disconnected(map.iter().position(|&x| x == NONE).unwrap_or(0) as u64));
    }
    Ok(map)
}

/// Generalized Schori tower with `e` handles over the rose on `{a, b}`.
///
/// Level 1 is a path of `e` edges through `e+1` vertices, alternating
/// `a`, `b`, with the basepoint at the middle vertex `c = e/2`. Handle `j`
/// is the `j`-th path edge; from level 1 on its dart at the path vertex
/// nearer the center carries the transposition of the central sheet with
/// the sheet of the far vertex. The central leaf has `2e` ends.
fn generalized_steps(e: u32) -> Vec<CoverStep> {
    let d = e + 1;
    let c = e / 2;
    let mut pa: Vec<u32> = (0..d).collect();
    let mut pb: Vec<u32> = (0..d).collect();
    for j in 0..e {
        let p = if j % 2 == 0 { &mut pa } else { &mut pb };
        p.swap(j as usize, j as usize + 1);
    }
    let first = CoverStep::new(d, c, vec![((0, 0), pa), ((0, 1), pb)]).expect("valid step");
    let mut handles: Vec<(usize, u64, u32)> = (0..e)
        .map(|j| {
            let (at, far) = if j < c { (j + 1, j) } else { (j, j + 1) };
            ((j % 2) as usize, at as u64, far)
        })
        .collect();
    steps_within(std::iter::repeat(d), |k, _| {
        if k == 0 {
            return first.clone();
        }
        let darts = handles.iter().map(|&(l, v, far)| ((v, l), transposition(d, c, far))).collect();
        let step = CoverStep::new(d, c, darts).expect("valid step");
        for h in &mut handles {
            h.1 = h.1 * d as u64 + c as u64;
        }
        step
    })
}

/// Generalized Schori tower: variant `4n` has `2n` handles and degree
/// `2n+1`; variant `4n+2` has `2n+1` handles and degree `2n+2`.
pub fn build_generalized_schori_tower(n: u32, variant: GeneralizedVariant, depth: usize) -> Result<Tower> {
    if n == 0 {
        return Err(Error::Tower("n must be at least 1".into()));
    }
    let e = match variant {
        GeneralizedVariant::FourN => 2 * n,
        GeneralizedVariant::FourNPlusTwo => 2 * n + 1,
    };
    let spec = TowerSpec::Generalized { n, variant };
    Tower::from_steps(spec, depth, LabeledGraph::rose(Alphabet::ab()), generalized_steps(e))
}

/// Tower whose `k`-th step has degree `degrees[k]` ∈ {3, 5}.
pub fn build_mixed_tower(degrees: &[u32], depth: usize) -> Result<Tower> {
    if let Some(d) = degrees.iter().find(|&&d| d != 3 && d != 5) {
        return Err(Error::Tower(format!("invalid degree {d}; mixed towers take 3 or 5")));
    }
    let steps = steps_within(degrees.iter().copied(), |_, d| if d == 3 { schori_step(0) } else { five_step(0) });
    if steps.len() < degrees.len() {
        return Err(Error::LevelBudget { level: degrees.len(), budget: steps.len() });
    }
    let spec = TowerSpec::Mixed { degrees: degrees.to_vec() };
    Tower::from_steps(spec, depth, LabeledGraph::rose(Alphabet::ab()), steps)
}

/// Length of the `label`-cycle through vertex `v` at level `k`.
pub fn cycle_length(tower: &Tower, k: usize, v: u64, label: usize) -> u64 {
    let mut x = tower.step(k, v, Letter::pos(label));
    let mut n = 1;
    while x != v {
        x = tower.step(k, x, Letter::pos(label));
        n += 1;
    }
    n
}

/// Traces a word from the basepoint of level `k`.
pub fn trace_from_base(tower: &Tower, k: usize, w: &crate::words::Word) -> u64 {
    trace_in(&tower.view(k), tower.basepoint(k), w).expect("tower levels are complete")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::labeled_iso;
    use crate::words::Word;

    #[test]
    fn cyclic_double_cover() {
        let a = Alphabet::new(&["a"]).unwrap();
        let g = LabeledGraph::make_action_graph(a, vec![vec![1, 0]], 0).unwrap();
        let mut va = VoltageAssignment::new(2);
        va.set(&g, 0, Letter::pos(0), vec![1, 0]).unwrap();
        let (c, proj) = voltage_cover(&g, &va).unwrap();
        assert_eq!(c.vertex_count(), 4);
        assert!(c.is_connected());
        assert_eq!(is_covering(&c, &g, &proj), CoveringCheck::Covering { degree: 2 });
    }

    #[test]
    fn trivial_voltages_disconnect() {
        let g = LabeledGraph::rose(Alphabet::ab());
        let (c, _) = voltage_cover(&g, &VoltageAssignment::new(3)).unwrap();
        assert_eq!(c.vertex_count(), 3);
        assert!(!c.is_connected());
    }

    #[test]
    fn reverse_dart_consistency() {
        let a = Alphabet::new(&["a"]).unwrap();
        let g = LabeledGraph::make_action_graph(a, vec![vec![1, 0]], 0).unwrap();
        let mut va = VoltageAssignment::new(3);
        va.set(&g, 0, Letter::pos(0), vec![1, 2, 0]).unwrap();
        va.set(&g, 1, Letter::neg(0), vec![2, 0, 1]).unwrap();
        let e = va.set(&g, 1, Letter::neg(0), vec![1, 2, 0]).unwrap_err();
        assert!(matches!(e, Error::InconsistentVoltage { .. }));
    }

    #[test]
    fn implicit_steps_match_materialized() {
        for spec in [
            TowerSpec::Schori { method: SchoriMethod::Voltage },
            TowerSpec::Generalized { n: 2, variant: GeneralizedVariant::FourN },
            TowerSpec::Generalized { n: 1, variant: GeneralizedVariant::FourNPlusTwo },
            TowerSpec::Mixed { degrees: default_mixed_degrees(5) },
            TowerSpec::Dyadic,
            TowerSpec::Torus,
            TowerSpec::Rt,
        ] {
            let t = Tower::build(&spec, 4).unwrap();
            t.verify().unwrap();
            for k in 0..=4 {
                let g = t.level(k).unwrap();
                assert_eq!(g.vertex_count() as u64, t.vertex_count(k));
                for v in 0..g.vertex_count() as u32 {
                    for l in t.alphabet().letters() {
                        assert_eq!(g.step(v, l).unwrap() as u64, t.step(k, v as u64, l), "{spec} level {k}");
                    }
                }
                if k < 4 {
                    for v in 0..t.vertex_count(k) {
                        for p in t.preimages(k, v) {
                            assert_eq!(t.project(k, p), v);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn schori_methods_agree() {
        let f = build_schori_tower(4, SchoriMethod::Folding).unwrap();
        let v = build_schori_tower(4, SchoriMethod::Voltage).unwrap();
        f.verify().unwrap();
        for k in 0..=4 {
            assert!(labeled_iso(f.level(k).unwrap(), v.level(k).unwrap()).is_some(), "level {k}");
        }
    }

    #[test]
    fn schori_fiber_over_base() {
        let t = build_schori_tower(8, SchoriMethod::Voltage).unwrap();
        for k in 0..8 {
            let m = 1i64 << k;
            let mut expect = vec![
                t.basepoint(k + 1),
                trace_from_base(&t, k + 1, &Word::power(0, m)),
                trace_from_base(&t, k + 1, &Word::power(1, m)),
            ];
            expect.sort();
            let mut fib = t.preimages(k, t.basepoint(k));
            fib.sort();
            assert_eq!(fib, expect);
        }
    }

    #[test]
    fn default_budgets() {
        assert_eq!(build_schori_tower(3, SchoriMethod::Voltage).unwrap().default_budget(), 14);
        let g = build_generalized_schori_tower(2, GeneralizedVariant::FourN, 3).unwrap();
        assert_eq!(g.default_budget(), 9);
    }

    #[test]
    fn mixed_sequence() {
        assert_eq!(default_mixed_degrees(13), vec![5, 3, 3, 5, 3, 3, 3, 5, 3, 3, 3, 3, 5]);
        let t = build_mixed_tower(&default_mixed_degrees(10), 10).unwrap();
        let sizes: Vec<u64> = (0..=5).map(|k| t.vertex_count(k)).collect();
        assert_eq!(sizes, vec![1, 5, 15, 45, 225, 675]);
        assert!(build_mixed_tower(&[3, 4], 2).is_err());
    }

    #[test]
    fn spec_parsing() {
        for s in [
            "dyadic",
            "torus",
            "rt",
            "schori",
            "schori:folding",
            "generalized:2:4n",
            "generalized:1:4n+2",
            "mixed:5,3,3",
        ] {
            let spec = TowerSpec::parse(s).unwrap();
            assert_eq!(TowerSpec::parse(&spec.to_string()).unwrap(), spec);
        }
        assert!(TowerSpec::parse("cantor").is_err());
        assert!(TowerSpec::parse("generalized:x").is_err());
    }

    #[test]
    fn decorate_and_prune_tower() {
        let t = build_schori_tower(3, SchoriMethod::Voltage).unwrap();
        let d = t.decorated(&["alpha", "beta"]).unwrap();
        assert_eq!(d.alphabet().len(), 4);
        assert_eq!(d.step(2, 5, Letter::pos(2)), 5);
        d.verify().unwrap();
        let p = d.pruned(&["alpha", "beta"]).unwrap();
        assert_eq!(p.level(3).unwrap(), t.level(3).unwrap());
        assert!(d.pruned(&["a"]).is_err());
    }
}
