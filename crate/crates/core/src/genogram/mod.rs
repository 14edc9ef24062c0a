//! Genograms: rooted trees with per-vertex integer identifiers that encode
//! the index-constraint structure of the mixing-field expansion. This module
//! holds the structure itself (validation, growth, enumeration, coefficient
//! algebra, text form); `sums` evaluates the associated sums on TinyFields.
//!
//! Labels are 1-based throughout, matching the compatible labeling: vertex 1
//! is the root and vertex j+1 is attached to vertex j or one of its
//! ancestors.

mod sums;

pub use sums::{GenogramEvaluator, KappaTilde};

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::error::{Error, Result};

/// Rule identifiers reported by `validate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// depth-first labeling: p(j+1) = max{ p(l) : l >= j+1, p(l) <= j }
    DepthFirst,
    /// s_1 = 0 and s_j >= -1
    IdentifierRange,
    /// a negative vertex has no sibling and its parent is not the root
    NegativePlacement,
    /// siblings carry distinct identifiers, decreasing in label order
    SiblingOrder,
}

/// An order-k genogram with the compatible labeling. `parent[j]` and
/// `id[j]` are stored 1-based (index 0 is padding).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genogram {
    /// parent[j] = label of v[j]'s parent, for 2 <= j <= k; parent[0] and
    /// parent[1] are 0.
    parent: Vec<usize>,
    /// id[j] = identifier s_j, for 1 <= j <= k; id[0] is 0 padding.
    id: Vec<i64>,
}

impl Genogram {
    /// The order-1 genogram: just the root.
    pub fn root() -> Self {
        Genogram {
            parent: vec![0, 0],
            id: vec![0, 0],
        }
    }

    /// Build from 1-based data: `parents[j]` is the parent label of vertex
    /// j+2 (so `parents` has length k-1), `ids[j]` the identifier of vertex
    /// j+1 (length k). Validates all compatibility rules.
    pub fn from_parts(parents: &[usize], ids: &[i64]) -> Result<Self> {
        if ids.is_empty() || parents.len() + 1 != ids.len() {
            return Err(Error::Genogram(format!(
                "{} parents with {} identifiers",
                parents.len(),
                ids.len()
            )));
        }
        let mut parent = vec![0usize; ids.len() + 1];
        let mut id = vec![0i64; ids.len() + 1];
        for (j, &p) in parents.iter().enumerate() {
            parent[j + 2] = p;
        }
        for (j, &s) in ids.iter().enumerate() {
            id[j + 1] = s;
        }
        let g = Genogram { parent, id };
        let violations = g.validate();
        if violations.is_empty() {
            Ok(g)
        } else {
            Err(Error::Genogram(format!("violated rules: {violations:?}")))
        }
    }

    /// Check the four compatibility requirements; an empty list means valid.
    pub fn validate(&self) -> Vec<Rule> {
        let k = self.order();
        let mut broken = Vec::new();
        // parents must point backwards at all
        for j in 2..=k {
            if self.parent[j] == 0 || self.parent[j] >= j {
                broken.push(Rule::DepthFirst);
                return broken;
            }
        }
        // (a) depth-first labeling
        'outer: for j in 1..k {
            let mut max_p = 0usize;
            for l in j + 1..=k {
                if self.parent[l] <= j {
                    max_p = max_p.max(self.parent[l]);
                }
            }
            if self.parent[j + 1] != max_p {
                broken.push(Rule::DepthFirst);
                break 'outer;
            }
        }
        // (b) identifier range
        if self.id[1] != 0 || (2..=k).any(|j| self.id[j] < -1) {
            broken.push(Rule::IdentifierRange);
        }
        // (c) negative placement
        for j in 2..=k {
            if self.id[j] == -1 {
                let siblings = (2..=k)
                    .filter(|&h| self.parent[h] == self.parent[j])
                    .count();
                if self.parent[j] == 1 || siblings > 1 {
                    broken.push(Rule::NegativePlacement);
                    break;
                }
            }
        }
        // (d) sibling identifiers strictly decrease in label order
        'sib: for j in 2..=k {
            for h in j + 1..=k {
                if self.parent[j] == self.parent[h] && self.id[j] <= self.id[h] {
                    broken.push(Rule::SiblingOrder);
                    break 'sib;
                }
            }
        }
        broken
    }

    pub fn order(&self) -> usize {
        self.id.len() - 1
    }

    /// Parent label of vertex j (2 <= j <= k).
    pub fn parent(&self, j: usize) -> usize {
        self.parent[j]
    }

    /// Identifier s_j (1 <= j <= k).
    pub fn id(&self, j: usize) -> i64 {
        self.id[j]
    }

    /// Ancestor labels of vertex j, ascending (root first); empty for the
    /// root.
    pub fn ancestors(&self, j: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut v = j;
        while v != 1 {
            v = self.parent[v];
            out.push(v);
        }
        out.reverse();
        out
    }

    pub fn children(&self, j: usize) -> Vec<usize> {
        (2..=self.order())
            .filter(|&h| self.parent[h] == j)
            .collect()
    }

    pub fn is_leaf(&self, j: usize) -> bool {
        self.children(j).is_empty()
    }

    /// g(j): the label of the progenitor -- the closest positive ancestor,
    /// or the root.
    pub fn progenitor(&self, j: usize) -> usize {
        let mut best = 1usize;
        for a in self.ancestors(j) {
            if self.id[a] >= 1 {
                best = best.max(a);
            }
        }
        best
    }

    /// u(j): j itself when s_j >= 0, otherwise the closest non-negative
    /// ancestor.
    pub fn u_index(&self, j: usize) -> usize {
        if self.id[j] >= 0 {
            return j;
        }
        let mut best = 1usize;
        for a in self.ancestors(j) {
            if self.id[a] >= 0 {
                best = best.max(a);
            }
        }
        best
    }

    pub fn leaves_count(&self) -> usize {
        (1..=self.order()).filter(|&j| self.is_leaf(j)).count()
    }

    pub fn negatives_count(&self) -> usize {
        (1..=self.order()).filter(|&j| self.id[j] == -1).count()
    }

    pub fn has_positive(&self) -> bool {
        (1..=self.order()).any(|j| self.id[j] >= 1)
    }

    /// Membership in P_1: every identifier nonpositive except the last,
    /// which is positive.
    pub fn only_last_positive(&self) -> bool {
        let k = self.order();
        self.id[k] >= 1 && (1..k).all(|j| self.id[j] <= 0)
    }

    /// The induced order-j sub-genogram `G[j]`.
    pub fn sub(&self, j: usize) -> Genogram {
        assert!(1 <= j && j <= self.order());
        Genogram {
            parent: self.parent[..=j].to_vec(),
            id: self.id[..=j].to_vec(),
        }
    }

    /// True when `self` extends `g`, i.e. G = self[|g|].
    pub fn extends(&self, g: &Genogram) -> bool {
        g.order() <= self.order() && self.sub(g.order()) == *g
    }

    /// Legal growth sites: the last vertex plus those ancestors whose
    /// existing children all carry positive identifiers.
    pub fn growth_sites(&self) -> Vec<usize> {
        let k = self.order();
        let mut sites = vec![k];
        for a in self.ancestors(k) {
            let min_child = self.children(a).iter().map(|&c| self.id[c]).min().unwrap();
            if min_child >= 1 {
                sites.push(a);
            }
        }
        sites.sort_unstable();
        sites
    }

    /// Maximum admissible identifier at a growth site (inclusive), or None
    /// when unbounded (growing at the leaf).
    pub fn max_id_at(&self, site: usize) -> Option<i64> {
        let children = self.children(site);
        if children.is_empty() {
            None
        } else {
            Some(children.iter().map(|&c| self.id[c]).min().unwrap() - 1)
        }
    }

    /// Omega[j, s]: add a non-negative child with identifier s at vertex j.
    pub fn grow(&self, site: usize, s: i64) -> Result<Genogram> {
        if s < 0 {
            return Err(Error::Genogram(
                "grow takes a non-negative identifier".into(),
            ));
        }
        if !self.growth_sites().contains(&site) {
            return Err(Error::Genogram(format!(
                "vertex {site} is not a legal growth site"
            )));
        }
        if let Some(cap) = self.max_id_at(site) {
            if s > cap {
                return Err(Error::Genogram(format!(
                    "identifier {s} must be below the minimum child identifier at {site}"
                )));
            }
        }
        let mut parent = self.parent.clone();
        let mut id = self.id.clone();
        parent.push(site);
        id.push(s);
        let g = Genogram { parent, id };
        debug_assert!(g.validate().is_empty());
        Ok(g)
    }

    /// `Lambda[h]`: glue a path of h negative vertices to the last vertex.
    pub fn glue(&self, h: usize) -> Result<Genogram> {
        if h == 0 {
            return Ok(self.clone());
        }
        if self.order() == 1 {
            return Err(Error::Genogram("cannot glue negatives to the root".into()));
        }
        let mut parent = self.parent.clone();
        let mut id = self.id.clone();
        for _ in 0..h {
            parent.push(id.len() - 1);
            id.push(-1);
        }
        let g = Genogram { parent, id };
        debug_assert!(g.validate().is_empty());
        Ok(g)
    }

    /// All single-vertex extensions with identifiers in [-1, id_cap].
    fn extensions(&self, id_cap: i64) -> Vec<Genogram> {
        let mut out = Vec::new();
        if self.order() >= 2 {
            out.push(self.glue(1).expect("legal glue"));
        }
        for site in self.growth_sites() {
            let hi = self.max_id_at(site).unwrap_or(id_cap).min(id_cap);
            for s in 0..=hi {
                out.push(self.grow(site, s).expect("legal growth"));
            }
        }
        out
    }
}

/// All order-k genograms with identifiers bounded by `id_cap`. On a finite
/// index set of size n, identifiers above n index empty constraint sets, so
/// capping at n is a sound truncation for every sum in this crate.
pub fn enumerate(k: usize, id_cap: i64) -> Vec<Genogram> {
    assert!(k >= 1);
    let mut level = vec![Genogram::root()];
    for _ in 1..k {
        let mut next = Vec::new();
        for g in &level {
            next.extend(g.extensions(id_cap));
        }
        level = next;
    }
    level
}

/// The class split of Cor.-level expansions: P0 (no positive vertex),
/// G0 (at least one positive), P1 (only the last vertex positive).
pub fn enumerate_classes(k: usize, id_cap: i64) -> (Vec<Genogram>, Vec<Genogram>, Vec<Genogram>) {
    let all = enumerate(k, id_cap);
    let mut p0 = Vec::new();
    let mut g0 = Vec::new();
    let mut p1 = Vec::new();
    for g in all {
        if g.has_positive() {
            if g.only_last_positive() {
                p1.push(g.clone());
            }
            g0.push(g);
        } else {
            p0.push(g);
        }
    }
    (p0, g0, p1)
}

// ---------------------------------------------------------------------------
// Coefficients
// ---------------------------------------------------------------------------

fn sign_power(n: usize) -> Ratio<i64> {
    if n.is_multiple_of(2) {
        Ratio::from_integer(1)
    } else {
        Ratio::from_integer(-1)
    }
}

/// a_{H,G}: 1 when H = G, otherwise
/// (-1)^{dgamma + dtau} prod_{j=|G|+1}^{|H|} 1/(j+1-u(j,H)).
pub fn a_coeff(h: &Genogram, g: &Genogram) -> Result<Ratio<i64>> {
    if !h.extends(g) {
        return Err(Error::Genogram("H does not extend G".into()));
    }
    if h.order() == g.order() {
        return Ok(Ratio::from_integer(1));
    }
    let sign =
        sign_power(h.leaves_count() + g.leaves_count() + h.negatives_count() + g.negatives_count());
    let mut acc = sign;
    for j in g.order() + 1..=h.order() {
        acc /= Ratio::from_integer((j + 1 - h.u_index(j)) as i64);
    }
    Ok(acc)
}

/// b_{H,G}: defined for |H| >= |G| + 1; the product stops at |H| - 1.
pub fn b_coeff(h: &Genogram, g: &Genogram) -> Result<Ratio<i64>> {
    if !h.extends(g) || h.order() <= g.order() {
        return Err(Error::Genogram(
            "b_{H,G} needs H strictly extending G".into(),
        ));
    }
    let sign = sign_power(
        h.leaves_count() + g.leaves_count() + h.negatives_count() + g.negatives_count() + 1,
    );
    let mut acc = sign;
    for j in g.order() + 1..h.order() {
        acc /= Ratio::from_integer((j + 1 - h.u_index(j)) as i64);
    }
    Ok(acc)
}

/// b_H = b_{H, root}: (-1)^{gamma + tau} prod_{j=2}^{|H|-1} 1/(j+1-u(j)).
pub fn b_h(h: &Genogram) -> Result<Ratio<i64>> {
    if h.order() < 2 {
        return Err(Error::Genogram("b_H needs order >= 2".into()));
    }
    let sign = sign_power(h.leaves_count() + h.negatives_count());
    let mut acc = sign;
    for j in 2..h.order() {
        acc /= Ratio::from_integer((j + 1 - h.u_index(j)) as i64);
    }
    Ok(acc)
}

/// Coefficient summary for reporting.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GenCoefficients {
    pub a: (i64, i64),
    pub b: (i64, i64),
    pub leaves: usize,
    pub negatives: usize,
}

pub fn coefficients(h: &Genogram, g: &Genogram) -> Result<GenCoefficients> {
    let a = a_coeff(h, g)?;
    let b = if h.order() > g.order() {
        b_coeff(h, g)?
    } else {
        Ratio::from_integer(0)
    };
    Ok(GenCoefficients {
        a: (*a.numer(), *a.denom()),
        b: (*b.numer(), *b.denom()),
        leaves: h.leaves_count(),
        negatives: h.negatives_count(),
    })
}

// ---------------------------------------------------------------------------
// Text form
// ---------------------------------------------------------------------------

impl fmt::Display for Genogram {
    /// Compact text form, e.g. `p=[.,1,1,1,4,5,5]; s=[0,2,1,0,-1,2,0]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parents: Vec<String> = (1..=self.order())
            .map(|j| {
                if j == 1 {
                    ".".into()
                } else {
                    self.parent[j].to_string()
                }
            })
            .collect();
        let ids: Vec<String> = (1..=self.order()).map(|j| self.id[j].to_string()).collect();
        write!(f, "p=[{}]; s=[{}]", parents.join(","), ids.join(","))
    }
}

impl FromStr for Genogram {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let err = || Error::Genogram(format!("unparseable genogram text: {text}"));
        let (p_part, s_part) = text.split_once(';').ok_or_else(err)?;
        let parse_list = |part: &str, prefix: &str| -> Result<Vec<String>> {
            let body = part
                .trim()
                .strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('['))
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(err)?;
            Ok(body.split(',').map(|s| s.trim().to_string()).collect())
        };
        let ps = parse_list(p_part, "p=")?;
        let ss = parse_list(s_part, "s=")?;
        if ps.len() != ss.len() || ps.is_empty() || ps[0] != "." {
            return Err(err());
        }
        let parents: Vec<usize> = ps[1..]
            .iter()
            .map(|t| t.parse::<usize>().map_err(|_| err()))
            .collect::<Result<_>>()?;
        let ids: Vec<i64> = ss
            .iter()
            .map(|t| t.parse::<i64>().map_err(|_| err()))
            .collect::<Result<_>>()?;
        Genogram::from_parts(&parents, &ids)
    }
}

/// Worked fixtures used across the test suites: an order-7 genogram with a
/// negative bridge (`g1`) and one with nested positives (`g2`).
#[cfg(test)]
pub(crate) fn fixture_g1() -> Genogram {
    Genogram::from_parts(&[1, 1, 1, 4, 5, 5], &[0, 2, 1, 0, -1, 2, 0]).unwrap()
}

#[cfg(test)]
pub(crate) fn fixture_g2() -> Genogram {
    Genogram::from_parts(&[1, 2, 2, 4, 4, 6], &[0, 0, 5, 3, 2, 1, -1]).unwrap()
}
