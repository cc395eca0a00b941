//! Symbolic spectral measures on the half-line.
//!
//! A measure assigns a [`Cardinal`] weight to Borel sets of `[0, ∞)`. The
//! representable class is: a kernel weight at 0, finitely many atoms at
//! positive positions, finitely many discrete tails accumulating at a
//! limit point from above, and finitely many geometric families whose
//! members each carry an infinite weight and accumulate at 0.
//!
//! All interval weights are computed in closed form from the generators.
//! Index bounds come from logarithms and are then corrected by exact
//! comparison on the generated positions, so boundary membership is
//! decided on the same floating-point values a term enumeration would
//! produce. No operation enumerates an unbounded number of terms.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cardinal::Cardinal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("position {0} is not a positive finite real")]
    BadPosition(f64),
    #[error("duplicate atom position {0}")]
    DuplicateAtom(f64),
    #[error("atom at {0} has zero weight")]
    ZeroWeight(f64),
    #[error("tail parameter {name} = {value} out of range")]
    BadTailParameter { name: &'static str, value: f64 },
    #[error("tail multiplicity must be at least 1")]
    ZeroMultiplicity,
    #[error("tail term at {0} collides with an explicit atom")]
    TailAtomCollision(f64),
    #[error("family parameter {name} = {value} out of range")]
    BadFamilyParameter { name: &'static str, value: f64 },
    #[error("family cardinal must be infinite, got {0}")]
    FiniteFamilyCardinal(Cardinal),
    #[error("measure has no mass")]
    EmptyMeasure,
    #[error("interval ]{lo}, {hi}[ is not inside a finite-weight component")]
    NotAFiniteComponent { lo: f64, hi: f64 },
    #[error("invalid interval bounds {lo}, {hi}")]
    BadInterval { lo: f64, hi: f64 },
}

/// Point mass at a positive position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub pos: f64,
    pub weight: Cardinal,
}

/// Generator of a tail's raw term values (offsets above the limit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TailKind {
    /// Raw values `a * r^j` for `j >= 0`.
    Geometric { a: f64, r: f64 },
    /// Raw values `a * j^(-p)` for `j >= 1`.
    Power { a: f64, p: f64 },
}

/// Discrete sequence of positions strictly decreasing to `limit`, each
/// carrying finite weight `mult`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tail {
    #[serde(flatten)]
    pub kind: TailKind,
    pub mult: u64,
    pub limit: f64,
}

/// Geometric sequence of positions `c * rho^k` for `k >= 0`, each carrying
/// the same infinite cardinal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfiniteFamily {
    pub c: f64,
    pub rho: f64,
    pub cardinal: Cardinal,
}

/// Count of discrete terms selected by an interval query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermCount {
    Fin(u64),
    Infinite,
}

const INDEX_CAP: u64 = 1 << 62;

/// Clamp a floating index estimate into the valid u64 range.
fn clamp_index(est: f64, min: u64) -> u64 {
    if !est.is_finite() || est >= INDEX_CAP as f64 {
        INDEX_CAP
    } else if est <= min as f64 {
        min
    } else {
        est as u64
    }
}

impl Tail {
    pub fn first_index(&self) -> u64 {
        match self.kind {
            TailKind::Geometric { .. } => 0,
            TailKind::Power { .. } => 1,
        }
    }

    /// Offset of term `j` above the limit.
    pub fn raw(&self, j: u64) -> f64 {
        match self.kind {
            TailKind::Geometric { a, r } => {
                if j > i32::MAX as u64 {
                    0.0
                } else {
                    a * r.powi(j as i32)
                }
            }
            TailKind::Power { a, p } => a / (j as f64).powf(p),
        }
    }

    /// Position of term `j`.
    pub fn position(&self, j: u64) -> f64 {
        self.limit + self.raw(j)
    }

    /// Smallest index whose position is `<= x`, or None when every term
    /// lies above `x`. Estimated in closed form, corrected on the
    /// generated values.
    pub fn first_index_at_or_below(&self, x: f64) -> Option<u64> {
        if x <= self.limit {
            return None;
        }
        let first = self.first_index();
        let x_rel = x - self.limit;
        let est = match self.kind {
            TailKind::Geometric { a, r } => (x_rel / a).ln() / r.ln(),
            TailKind::Power { a, p } => (a / x_rel).powf(1.0 / p),
        };
        let mut j = clamp_index(est.ceil(), first);
        let mut guard = 0;
        while j > first && self.position(j - 1) <= x {
            j -= 1;
            guard += 1;
            if guard > 4096 {
                break;
            }
        }
        let mut guard = 0;
        while self.position(j) > x {
            j += 1;
            guard += 1;
            if guard > 4096 {
                return Some(j);
            }
        }
        Some(j)
    }

    /// Number of terms with position in `]lo, hi]`.
    pub fn count_in(&self, lo: f64, hi: f64) -> TermCount {
        if hi <= self.limit || lo >= hi {
            return TermCount::Fin(0);
        }
        if lo <= self.limit {
            return TermCount::Infinite;
        }
        // lo > limit: finitely many terms exceed lo.
        let cut = self
            .first_index_at_or_below(lo)
            .expect("lo above limit always cuts the tail");
        let start = self
            .first_index_at_or_below(hi)
            .expect("hi above limit always cuts the tail");
        TermCount::Fin(cut.saturating_sub(start))
    }

    /// True when infinitely many terms land in `[0, x]`.
    pub fn reaches_prefix(&self, x: f64) -> bool {
        x > self.limit
    }
}

impl InfiniteFamily {
    pub fn member(&self, k: u64) -> f64 {
        if k > i32::MAX as u64 {
            0.0
        } else {
            self.c * self.rho.powi(k as i32)
        }
    }

    /// Smallest k with `member(k) <= x`; members decrease to 0, so this
    /// exists for every positive `x`.
    pub fn first_member_at_or_below(&self, x: f64) -> Option<u64> {
        if x <= 0.0 {
            return None;
        }
        let est = (x / self.c).ln() / self.rho.ln();
        let mut k = clamp_index(est.ceil(), 0);
        let mut guard = 0;
        while k > 0 && self.member(k - 1) <= x {
            k -= 1;
            guard += 1;
            if guard > 4096 {
                break;
            }
        }
        let mut guard = 0;
        while self.member(k) > x {
            k += 1;
            guard += 1;
            if guard > 4096 {
                return Some(k);
            }
        }
        Some(k)
    }

    pub fn count_members_in(&self, lo: f64, hi: f64) -> TermCount {
        if hi <= 0.0 || lo >= hi {
            return TermCount::Fin(0);
        }
        if lo <= 0.0 {
            return TermCount::Infinite;
        }
        let cut = self.first_member_at_or_below(lo).unwrap();
        let start = self.first_member_at_or_below(hi).unwrap();
        TermCount::Fin(cut.saturating_sub(start))
    }

    pub fn has_member_in(&self, lo: f64, hi: f64) -> bool {
        !matches!(self.count_members_in(lo, hi), TermCount::Fin(0))
    }

    /// Largest member strictly below `x`, if any.
    pub fn member_strictly_below(&self, x: f64) -> Option<f64> {
        let k = self.first_member_at_or_below(x)?;
        let m = self.member(k);
        if m < x {
            Some(m)
        } else {
            Some(self.member(k + 1))
        }
    }

    /// Smallest member strictly above `x`, if any.
    pub fn member_strictly_above(&self, x: f64) -> Option<f64> {
        if x >= self.c {
            return None;
        }
        match self.first_member_at_or_below(x) {
            Some(k) if k > 0 => Some(self.member(k - 1)),
            Some(_) => None,
            // x <= 0: every member lies above.
            None => Some(self.member(0)),
        }
    }
}

fn check_positive_finite(v: f64, name: &'static str) -> Result<(), MeasureError> {
    if !v.is_finite() || v <= 0.0 {
        return Err(MeasureError::BadTailParameter { name, value: v });
    }
    Ok(())
}

/// Spectral measure with symbolic components.
///
/// Constructed through [`SpectralMeasure::new`], which validates the
/// component shapes, sorts atoms by descending position, and rejects a
/// tail term landing exactly on an explicit atom position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct SpectralMeasure {
    kernel: Cardinal,
    atoms: Vec<Atom>,
    tails: Vec<Tail>,
    families: Vec<InfiniteFamily>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    kernel: Cardinal,
    atoms: Vec<Atom>,
    tails: Vec<Tail>,
    families: Vec<InfiniteFamily>,
}

impl TryFrom<MeasureRepr> for SpectralMeasure {
    type Error = MeasureError;
    fn try_from(r: MeasureRepr) -> Result<Self, MeasureError> {
        SpectralMeasure::new(r.kernel, r.atoms, r.tails, r.families)
    }
}

impl From<SpectralMeasure> for MeasureRepr {
    fn from(m: SpectralMeasure) -> MeasureRepr {
        MeasureRepr {
            kernel: m.kernel,
            atoms: m.atoms,
            tails: m.tails,
            families: m.families,
        }
    }
}

impl SpectralMeasure {
    pub fn new(
        kernel: Cardinal,
        mut atoms: Vec<Atom>,
        tails: Vec<Tail>,
        families: Vec<InfiniteFamily>,
    ) -> Result<Self, MeasureError> {
        for a in &atoms {
            if !a.pos.is_finite() || a.pos <= 0.0 {
                return Err(MeasureError::BadPosition(a.pos));
            }
            if a.weight.is_zero() {
                return Err(MeasureError::ZeroWeight(a.pos));
            }
        }
        atoms.sort_by(|x, y| y.pos.partial_cmp(&x.pos).unwrap());
        for w in atoms.windows(2) {
            if w[0].pos == w[1].pos {
                return Err(MeasureError::DuplicateAtom(w[0].pos));
            }
        }
        for t in &tails {
            match t.kind {
                TailKind::Geometric { a, r } => {
                    check_positive_finite(a, "a")?;
                    if !r.is_finite() || r <= 0.0 || r >= 1.0 {
                        return Err(MeasureError::BadTailParameter { name: "r", value: r });
                    }
                }
                TailKind::Power { a, p } => {
                    check_positive_finite(a, "a")?;
                    check_positive_finite(p, "p")?;
                }
            }
            if t.mult == 0 {
                return Err(MeasureError::ZeroMultiplicity);
            }
            if !t.limit.is_finite() || t.limit < 0.0 {
                return Err(MeasureError::BadTailParameter {
                    name: "limit",
                    value: t.limit,
                });
            }
        }
        for f in &families {
            if !f.c.is_finite() || f.c <= 0.0 {
                return Err(MeasureError::BadFamilyParameter { name: "c", value: f.c });
            }
            if !f.rho.is_finite() || f.rho <= 0.0 || f.rho >= 1.0 {
                return Err(MeasureError::BadFamilyParameter {
                    name: "rho",
                    value: f.rho,
                });
            }
            if f.cardinal.is_finite() {
                return Err(MeasureError::FiniteFamilyCardinal(f.cardinal));
            }
        }
        // A tail term landing exactly on an atom position would make the
        // weight there depend on symbolic merging; reject it outright.
        for a in &atoms {
            for t in &tails {
                if let Some(j) = t.first_index_at_or_below(a.pos) {
                    if t.position(j) == a.pos {
                        return Err(MeasureError::TailAtomCollision(a.pos));
                    }
                }
            }
        }
        Ok(SpectralMeasure {
            kernel,
            atoms,
            tails,
            families,
        })
    }

    pub fn kernel(&self) -> Cardinal {
        self.kernel
    }

    /// Atoms in descending position order.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn tails(&self) -> &[Tail] {
        &self.tails
    }

    pub fn families(&self) -> &[InfiniteFamily] {
        &self.families
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_zero()
            && self.atoms.is_empty()
            && self.tails.is_empty()
            && self.families.is_empty()
    }

    /// Weight of the closed prefix `[0, mu]`.
    pub fn weight_prefix(&self, mu: f64) -> Cardinal {
        if mu < 0.0 {
            return Cardinal::ZERO;
        }
        let mut w = self.kernel;
        for a in &self.atoms {
            if a.pos <= mu {
                w = w.plus(a.weight);
            }
        }
        for t in &self.tails {
            if t.reaches_prefix(mu) {
                w = w.plus(Cardinal::Aleph(0));
            }
        }
        if mu > 0.0 {
            // Members accumulate at 0, so any positive prefix catches
            // infinitely many of them.
            for f in &self.families {
                w = w.plus(f.cardinal);
            }
        }
        w
    }

    /// Weight of the half-open interval `]lo, hi]`. The kernel never
    /// contributes: 0 is excluded by the open lower end.
    pub fn weight_interval(&self, lo: f64, hi: f64) -> Cardinal {
        if !(lo < hi) || hi <= 0.0 {
            return Cardinal::ZERO;
        }
        let mut w = Cardinal::ZERO;
        for a in &self.atoms {
            if lo < a.pos && a.pos <= hi {
                w = w.plus(a.weight);
            }
        }
        for t in &self.tails {
            match t.count_in(lo, hi) {
                TermCount::Fin(0) => {}
                TermCount::Fin(n) => {
                    let mass = n.checked_mul(t.mult).expect("tail weight overflow");
                    w = w.plus(Cardinal::Fin(mass));
                }
                TermCount::Infinite => w = w.plus(Cardinal::Aleph(0)),
            }
        }
        for f in &self.families {
            if f.has_member_in(lo, hi) {
                w = w.plus(f.cardinal);
            }
        }
        w
    }

    /// Supremum of the support. The kernel alone gives 0; an entirely
    /// empty measure has no support at all.
    pub fn support_sup(&self) -> Result<f64, MeasureError> {
        if self.is_empty() {
            return Err(MeasureError::EmptyMeasure);
        }
        let mut sup: f64 = 0.0;
        if let Some(a) = self.atoms.first() {
            sup = sup.max(a.pos);
        }
        for t in &self.tails {
            sup = sup.max(t.position(t.first_index()));
        }
        for f in &self.families {
            sup = sup.max(f.member(0));
        }
        Ok(sup)
    }

    /// Total weight of `[0, ∞)`.
    pub fn total_dim(&self) -> Cardinal {
        self.kernel.plus(self.image_dim())
    }

    /// Weight of `]0, ∞)`: everything except the kernel.
    pub fn image_dim(&self) -> Cardinal {
        let mut w = Cardinal::ZERO;
        for a in &self.atoms {
            w = w.plus(a.weight);
        }
        if !self.tails.is_empty() {
            w = w.plus(Cardinal::Aleph(0));
        }
        for f in &self.families {
            w = w.plus(f.cardinal);
        }
        w
    }

    /// Local weight that persists in every neighborhood of `x > 0`.
    fn local_weight(&self, x: f64) -> Cardinal {
        let mut w = Cardinal::ZERO;
        for a in &self.atoms {
            if a.pos == x {
                w = w.plus(a.weight);
            }
        }
        for t in &self.tails {
            if t.limit == x {
                w = w.plus(Cardinal::Aleph(0));
            }
        }
        for f in &self.families {
            if let Some(k) = f.first_member_at_or_below(x) {
                if f.member(k) == x {
                    w = w.plus(f.cardinal);
                }
            }
        }
        w
    }

    /// Splits the positive axis into the locally-finite part and the
    /// points carrying infinite weight in every neighborhood.
    pub fn fin_inf_decomposition(&self) -> FinInfReport {
        let mut inf_points: Vec<InfPoint> = Vec::new();
        let mut push_inf = |pos: f64, reason: InfReason, w: Cardinal| {
            if !inf_points.iter().any(|p| p.position == pos) {
                inf_points.push(InfPoint {
                    position: pos,
                    reason,
                    local_weight: w,
                });
            }
        };
        for a in &self.atoms {
            if a.weight.is_infinite() {
                push_inf(a.pos, InfReason::InfiniteAtom, self.local_weight(a.pos));
            }
        }
        for t in &self.tails {
            if t.limit > 0.0 {
                push_inf(
                    t.limit,
                    InfReason::TailAccumulation,
                    self.local_weight(t.limit),
                );
            }
        }
        inf_points.sort_by(|a, b| a.position.partial_cmp(&b.position).unwrap());

        let family_orbits: Vec<FamilyOrbit> = self
            .families
            .iter()
            .map(|f| FamilyOrbit {
                c: f.c,
                rho: f.rho,
                cardinal: f.cardinal,
            })
            .collect();

        let zero_in_inf = self.kernel.is_infinite()
            || self.tails.iter().any(|t| t.limit == 0.0)
            || !self.families.is_empty();

        let (fin_components, components_truncated) = if self.families.is_empty() {
            (self.components_between(&inf_points), false)
        } else {
            (self.mass_components_with_families(&inf_points), true)
        };

        FinInfReport {
            inf_points,
            family_orbits,
            zero_in_inf,
            fin_components,
            components_truncated,
        }
    }

    /// All components of the complement of the explicit infinite points,
    /// including empty ones (valid only without families).
    fn components_between(&self, inf_points: &[InfPoint]) -> Vec<FinComponent> {
        let mut edges = vec![0.0];
        edges.extend(inf_points.iter().map(|p| p.position));
        edges.push(f64::INFINITY);
        edges
            .windows(2)
            .map(|w| FinComponent {
                lo: w[0],
                hi: w[1],
                sigma: self.sigma_in_open(w[0], w[1]),
            })
            .collect()
    }

    /// Mass-carrying components when families chop the axis into
    /// infinitely many gaps; only a finite view is listed.
    fn mass_components_with_families(&self, inf_points: &[InfPoint]) -> Vec<FinComponent> {
        const TERM_CAP: usize = 48;
        let explicit: Vec<f64> = inf_points.iter().map(|p| p.position).collect();
        let mut intervals: Vec<(f64, f64)> = Vec::new();
        let mut add_for = |pos: f64| {
            if self.is_inf_locus(pos) {
                return;
            }
            let b = self.bracket(pos, &explicit);
            if !intervals.contains(&b) {
                intervals.push(b);
            }
        };
        for a in &self.atoms {
            if a.weight.is_finite() {
                add_for(a.pos);
            }
        }
        for t in &self.tails {
            for j in (t.first_index()..).take(TERM_CAP) {
                add_for(t.position(j));
            }
        }
        intervals.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        intervals
            .into_iter()
            .map(|(lo, hi)| FinComponent {
                lo,
                hi,
                sigma: self.sigma_in_open(lo, hi),
            })
            .collect()
    }

    /// True when `x` carries infinite weight in every neighborhood.
    fn is_inf_locus(&self, x: f64) -> bool {
        self.atoms
            .iter()
            .any(|a| a.pos == x && a.weight.is_infinite())
            || self.tails.iter().any(|t| t.limit == x)
            || self.families.iter().any(|f| {
                f.first_member_at_or_below(x)
                    .is_some_and(|k| f.member(k) == x)
            })
    }

    /// Open interval between the nearest infinite loci around `q`.
    fn bracket(&self, q: f64, explicit: &[f64]) -> (f64, f64) {
        let mut lo: f64 = 0.0;
        let mut hi = f64::INFINITY;
        for &p in explicit {
            if p < q {
                lo = lo.max(p);
            } else if p > q {
                hi = hi.min(p);
            }
        }
        for f in &self.families {
            if let Some(m) = f.member_strictly_below(q) {
                lo = lo.max(m);
            }
            if let Some(m) = f.member_strictly_above(q) {
                hi = hi.min(m);
            }
        }
        (lo, hi)
    }

    /// Discrete mass listing inside the open interval `]lo, hi[`.
    fn sigma_in_open(&self, lo: f64, hi: f64) -> SigmaListing {
        const MATERIALIZE_CAP: u64 = 64;
        let mut prefix: Vec<(f64, u64)> = Vec::new();
        let mut remainders: Vec<TailRemainder> = Vec::new();
        for a in &self.atoms {
            if a.weight.is_finite() && lo < a.pos && a.pos < hi {
                if let Cardinal::Fin(n) = a.weight {
                    prefix.push((a.pos, n));
                }
            }
        }
        for t in &self.tails {
            if t.limit >= hi {
                continue;
            }
            // First index strictly below hi.
            let start = match t.first_index_at_or_below(hi) {
                Some(j) if t.position(j) == hi => j + 1,
                Some(j) => j,
                None => continue,
            };
            if t.limit >= lo {
                // Terms accumulate at or above the lower edge: the whole
                // remaining tail stays inside.
                remainders.push(TailRemainder {
                    tail: *t,
                    from_index: start,
                    to_index: None,
                });
            } else {
                let cut = t
                    .first_index_at_or_below(lo)
                    .expect("lo above limit always cuts the tail");
                if cut <= start {
                    continue;
                }
                if cut - start <= MATERIALIZE_CAP {
                    for j in start..cut {
                        prefix.push((t.position(j), t.mult));
                    }
                } else {
                    remainders.push(TailRemainder {
                        tail: *t,
                        from_index: start,
                        to_index: Some(cut),
                    });
                }
            }
        }
        prefix.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        // Coinciding positions from different tails merge.
        let mut merged: Vec<(f64, u64)> = Vec::new();
        for (pos, n) in prefix {
            match merged.last_mut() {
                Some(last) if last.0 == pos => last.1 += n,
                _ => merged.push((pos, n)),
            }
        }
        SigmaListing {
            prefix: merged,
            remainders,
        }
    }

    /// Discrete mass listing for a finite-weight component. The interval
    /// must not contain an infinite locus in its interior.
    pub fn component_sigma(&self, lo: f64, hi: f64) -> Result<SigmaListing, MeasureError> {
        if !(lo < hi) || lo < 0.0 || hi.is_nan() {
            return Err(MeasureError::BadInterval { lo, hi });
        }
        let inf_inside = self
            .atoms
            .iter()
            .any(|a| a.weight.is_infinite() && lo < a.pos && a.pos < hi)
            || self.tails.iter().any(|t| lo < t.limit && t.limit < hi)
            || self.families.iter().any(|f| {
                matches!(f.count_members_in(lo, hi), TermCount::Infinite)
                    || match f.count_members_in(lo, hi) {
                        TermCount::Fin(n) => {
                            // Allow a member sitting exactly on the closed
                            // upper edge of the probe; anything interior
                            // disqualifies the interval.
                            let on_edge = f
                                .first_member_at_or_below(hi)
                                .is_some_and(|k| f.member(k) == hi);
                            n > u64::from(on_edge)
                        }
                        TermCount::Infinite => true,
                    }
            });
        if inf_inside {
            return Err(MeasureError::NotAFiniteComponent { lo, hi });
        }
        Ok(self.sigma_in_open(lo, hi))
    }
}

impl fmt::Display for SpectralMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kernel {}", self.kernel)?;
        for a in &self.atoms {
            write!(f, "; atom {} x {}", a.pos, a.weight)?;
        }
        for t in &self.tails {
            match t.kind {
                TailKind::Geometric { a, r } => {
                    write!(f, "; tail {}*{}^j x{} -> {}", a, r, t.mult, t.limit)?
                }
                TailKind::Power { a, p } => {
                    write!(f, "; tail {}*j^-{} x{} -> {}", a, p, t.mult, t.limit)?
                }
            }
        }
        for fam in &self.families {
            write!(f, "; family {}*{}^k x {}", fam.c, fam.rho, fam.cardinal)?;
        }
        Ok(())
    }
}

/// Why a point carries infinite weight in every neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfReason {
    InfiniteAtom,
    TailAccumulation,
    FamilyMemberAccumulation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfPoint {
    pub position: f64,
    pub reason: InfReason,
    pub local_weight: Cardinal,
}

/// Symbolic locus of infinite points: every member `c * rho^k` of a family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyOrbit {
    pub c: f64,
    pub rho: f64,
    pub cardinal: Cardinal,
}

/// Slice of a tail: indices `from_index..to_index` (unbounded when None).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRemainder {
    pub tail: Tail,
    pub from_index: u64,
    pub to_index: Option<u64>,
}

/// Discrete mass inside one finite-weight component: an explicit prefix
/// of (position, multiplicity) pairs in descending order, plus symbolic
/// slices for tails too long (or unbounded) to materialize.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaListing {
    pub prefix: Vec<(f64, u64)>,
    pub remainders: Vec<TailRemainder>,
}

/// Maximal open interval of locally-finite weight with its mass listing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinComponent {
    pub lo: f64,
    pub hi: f64,
    pub sigma: SigmaListing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinInfReport {
    pub inf_points: Vec<InfPoint>,
    pub family_orbits: Vec<FamilyOrbit>,
    pub zero_in_inf: bool,
    pub fin_components: Vec<FinComponent>,
    /// Families split the axis into infinitely many gaps; when set, only
    /// mass-carrying components are listed and the structure continues
    /// symbolically toward 0.
    pub components_truncated: bool,
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use proptest::prelude::*;

    /// Enumeration oracle: count tail terms in ]lo, hi] by walking the
    /// generated positions until they drop to the lower bound. Returns
    /// None when the walk would be unbounded or too long.
    fn oracle_tail_count(t: &Tail, lo: f64, hi: f64, cap: u64) -> Option<u64> {
        if hi <= t.limit {
            return Some(0); // every term sits above hi
        }
        if lo <= t.limit {
            return None; // infinitely many
        }
        let mut n = 0;
        let mut j = t.first_index();
        loop {
            let pos = t.position(j);
            if pos <= lo {
                return Some(n);
            }
            if pos <= hi {
                n += 1;
            }
            j += 1;
            if j > cap {
                return None;
            }
        }
    }

    #[test]
    fn prefix_weight_counts_kernel_and_low_atoms() {
        let m = atoms_measure(
            Cardinal::Fin(1),
            &[(0.5, Cardinal::Fin(2)), (0.25, Cardinal::Fin(1))],
        );
        assert_eq!(m.weight_prefix(0.3), Cardinal::Fin(2));
        assert_eq!(m.weight_prefix(0.5), Cardinal::Fin(4));
        assert_eq!(m.weight_prefix(0.0), Cardinal::Fin(1));
        assert_eq!(m.weight_prefix(0.2), Cardinal::Fin(1));
    }

    #[test]
    fn prefix_above_tail_limit_is_countably_infinite() {
        let m =
            SpectralMeasure::new(Cardinal::ZERO, vec![], vec![geo(1.0, 0.5, 1, 0.0)], vec![])
                .unwrap();
        assert_eq!(m.weight_prefix(0.1), Cardinal::Aleph(0));
        // At exactly the limit no term is caught.
        assert_eq!(m.weight_prefix(0.0), Cardinal::ZERO);
    }

    #[test]
    fn any_positive_prefix_catches_a_family() {
        let m = SpectralMeasure::new(
            Cardinal::ZERO,
            vec![],
            vec![],
            vec![InfiniteFamily {
                c: 1.0,
                rho: 0.5,
                cardinal: Cardinal::Aleph(1),
            }],
        )
        .unwrap();
        assert_eq!(m.weight_prefix(0.25), Cardinal::Aleph(1));
        assert_eq!(m.weight_prefix(1e-9), Cardinal::Aleph(1));
        assert_eq!(m.weight_prefix(0.0), Cardinal::ZERO);
    }

    #[test]
    fn interval_weight_is_open_below_closed_above() {
        let m = atoms_measure(
            Cardinal::Fin(1),
            &[(0.5, Cardinal::Fin(2)), (0.25, Cardinal::Fin(1))],
        );
        // 0.25 sits on the open edge and stays out; the kernel never counts.
        assert_eq!(m.weight_interval(0.25, 0.5), Cardinal::Fin(2));
        assert_eq!(m.weight_interval(0.0, 0.5), Cardinal::Fin(3));
        assert_eq!(m.weight_interval(0.5, 1.0), Cardinal::ZERO);
    }

    #[test]
    fn power_tail_boundary_term_is_excluded_exactly() {
        // Term j = 10 of 1/j^2 equals 0.01 exactly in floating point and
        // the open lower bound excludes it, leaving j = 1..9.
        let t = pow(1.0, 2.0, 1, 0.0);
        let m = SpectralMeasure::new(Cardinal::ZERO, vec![], vec![t], vec![]).unwrap();
        assert_eq!(oracle_tail_count(&t, 0.01, 1.0, 1000), Some(9));
        assert_eq!(m.weight_interval(0.01, 1.0), Cardinal::Fin(9));
    }

    #[test]
    fn geometric_interval_counts_match_enumeration() {
        let t = geo(1.0, 0.5, 3, 0.0);
        let m = SpectralMeasure::new(Cardinal::ZERO, vec![], vec![t], vec![]).unwrap();
        // Terms in ]2^-5, 2^-4] : exactly j = 4, with multiplicity 3.
        assert_eq!(oracle_tail_count(&t, 2f64.powi(-5), 2f64.powi(-4), 100), Some(1));
        assert_eq!(
            m.weight_interval(2f64.powi(-5), 2f64.powi(-4)),
            Cardinal::Fin(3)
        );
        // Both edges exactly on terms: ]1/4, 1] picks j = 0 and j = 1.
        assert_eq!(m.weight_interval(0.25, 1.0), Cardinal::Fin(6));
    }

    #[test]
    fn interval_straddling_a_tail_limit_is_infinite() {
        let m = SpectralMeasure::new(
            Cardinal::ZERO,
            vec![],
            vec![geo(1.0, 0.5, 1, 0.25)],
            vec![],
        )
        .unwrap();
        assert_eq!(m.weight_interval(0.25, 0.3), Cardinal::Aleph(0));
        assert_eq!(m.weight_interval(0.2, 0.26), Cardinal::Aleph(0));
        // Entirely below the limit: nothing.
        assert_eq!(m.weight_interval(0.1, 0.25), Cardinal::ZERO);
    }

    #[test]
    fn family_contributes_iff_a_member_is_caught() {
        let fam = InfiniteFamily {
            c: 1.0,
            rho: 0.5,
            cardinal: Cardinal::Aleph(0),
        };
        let m = SpectralMeasure::new(Cardinal::ZERO, vec![], vec![], vec![fam]).unwrap();
        assert_eq!(m.weight_interval(0.6, 1.0), Cardinal::Aleph(0));
        assert_eq!(m.weight_interval(0.26, 0.49), Cardinal::ZERO);
        assert_eq!(m.weight_interval(0.0, 1e-6), Cardinal::Aleph(0));
    }

    #[test]
    fn support_sup_takes_the_largest_head() {
        let m = SpectralMeasure::new(
            Cardinal::Fin(1),
            vec![Atom {
                pos: 0.8,
                weight: Cardinal::Fin(1),
            }],
            vec![geo(1.0, 0.5, 1, 0.25)],
            vec![InfiniteFamily {
                c: 0.9,
                rho: 0.5,
                cardinal: Cardinal::Aleph(0),
            }],
        )
        .unwrap();
        // Geometric head is limit + a = 1.25.
        assert_eq!(m.support_sup().unwrap(), 1.25);

        let kernel_only = atoms_measure(Cardinal::Fin(3), &[]);
        assert_eq!(kernel_only.support_sup().unwrap(), 0.0);

        let empty = atoms_measure(Cardinal::ZERO, &[]);
        assert_eq!(empty.support_sup(), Err(MeasureError::EmptyMeasure));
    }

    #[test]
    fn totals_fold_all_components() {
        let m = SpectralMeasure::new(
            Cardinal::Fin(2),
            vec![Atom {
                pos: 1.1,
                weight: Cardinal::Fin(3),
            }],
            vec![geo(1.0, 0.5, 1, 0.0)],
            vec![],
        )
        .unwrap();
        assert_eq!(m.total_dim(), Cardinal::Aleph(0));
        assert_eq!(m.image_dim(), Cardinal::Aleph(0));

        let finite = atoms_measure(Cardinal::Fin(2), &[(1.0, Cardinal::Fin(3))]);
        assert_eq!(finite.total_dim(), Cardinal::Fin(5));
        assert_eq!(finite.image_dim(), Cardinal::Fin(3));
    }

    #[test]
    fn tail_term_on_atom_position_is_rejected() {
        let err = SpectralMeasure::new(
            Cardinal::ZERO,
            vec![Atom {
                pos: 0.25,
                weight: Cardinal::Fin(1),
            }],
            vec![geo(1.0, 0.5, 1, 0.0)],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, MeasureError::TailAtomCollision(0.25));
    }

    #[test]
    fn single_finite_atom_yields_one_full_component() {
        let m = atoms_measure(Cardinal::ZERO, &[(1.0, Cardinal::Fin(5))]);
        let rep = m.fin_inf_decomposition();
        assert!(rep.inf_points.is_empty());
        assert!(!rep.zero_in_inf);
        assert!(!rep.components_truncated);
        assert_eq!(rep.fin_components.len(), 1);
        let c = &rep.fin_components[0];
        assert_eq!((c.lo, c.hi), (0.0, f64::INFINITY));
        assert_eq!(c.sigma.prefix, vec![(1.0, 5)]);
    }

    #[test]
    fn positive_tail_limit_is_an_infinite_point() {
        let m = SpectralMeasure::new(
            Cardinal::ZERO,
            vec![],
            vec![geo(1.0, 0.5, 2, 0.25)],
            vec![],
        )
        .unwrap();
        let rep = m.fin_inf_decomposition();
        assert_eq!(rep.inf_points.len(), 1);
        assert_eq!(rep.inf_points[0].position, 0.25);
        assert_eq!(rep.inf_points[0].reason, InfReason::TailAccumulation);
        assert_eq!(rep.inf_points[0].local_weight, Cardinal::Aleph(0));
        assert!(!rep.zero_in_inf);
        // Components: ]0, 0.25[ empty and ]0.25, inf[ holding the terms.
        assert_eq!(rep.fin_components.len(), 2);
        assert!(rep.fin_components[0].sigma.prefix.is_empty());
        assert_eq!(rep.fin_components[1].sigma.remainders.len(), 1);
    }

    #[test]
    fn family_members_are_symbolic_infinite_loci() {
        let m = SpectralMeasure::new(
            Cardinal::ZERO,
            vec![],
            vec![],
            vec![InfiniteFamily {
                c: 1.0,
                rho: 0.5,
                cardinal: Cardinal::Aleph(1),
            }],
        )
        .unwrap();
        let rep = m.fin_inf_decomposition();
        assert!(rep.zero_in_inf);
        assert!(rep.components_truncated);
        assert_eq!(rep.family_orbits.len(), 1);
        assert_eq!(rep.family_orbits[0].cardinal, Cardinal::Aleph(1));
        // No discrete mass outside the members: nothing to list.
        assert!(rep.fin_components.is_empty());
    }

    #[test]
    fn atom_between_family_members_gets_a_bracketed_component() {
        let m = SpectralMeasure::new(
            Cardinal::ZERO,
            vec![Atom {
                pos: 0.7,
                weight: Cardinal::Fin(2),
            }],
            vec![],
            vec![InfiniteFamily {
                c: 1.0,
                rho: 0.5,
                cardinal: Cardinal::Aleph(0),
            }],
        )
        .unwrap();
        let rep = m.fin_inf_decomposition();
        assert_eq!(rep.fin_components.len(), 1);
        let c = &rep.fin_components[0];
        assert_eq!((c.lo, c.hi), (0.5, 1.0));
        assert_eq!(c.sigma.prefix, vec![(0.7, 2)]);
    }

    #[test]
    fn component_listing_keeps_only_inside_mass() {
        let m = atoms_measure(
            Cardinal::ZERO,
            &[
                (0.9, Cardinal::Fin(1)),
                (0.5, Cardinal::Fin(2)),
                (3.0, Cardinal::Fin(7)),
            ],
        );
        let sigma = m.component_sigma(0.0, 2.0).unwrap();
        assert_eq!(sigma.prefix, vec![(0.9, 1), (0.5, 2)]);
        assert!(sigma.remainders.is_empty());
    }

    #[test]
    fn component_listing_reports_unbounded_tails_symbolically() {
        let t = geo(1.0, 0.5, 3, 0.0);
        let m = SpectralMeasure::new(Cardinal::ZERO, vec![], vec![t], vec![]).unwrap();
        let sigma = m.component_sigma(0.0, 2.0).unwrap();
        assert!(sigma.prefix.is_empty());
        assert_eq!(sigma.remainders.len(), 1);
        assert_eq!(sigma.remainders[0].from_index, 0);
        assert_eq!(sigma.remainders[0].to_index, None);
        assert_eq!(sigma.remainders[0].tail.mult, 3);
    }

    #[test]
    fn interval_containing_an_infinite_locus_is_not_a_component() {
        let m = SpectralMeasure::new(
            Cardinal::ZERO,
            vec![],
            vec![geo(1.0, 0.5, 1, 0.25)],
            vec![],
        )
        .unwrap();
        assert!(matches!(
            m.component_sigma(0.1, 0.5),
            Err(MeasureError::NotAFiniteComponent { .. })
        ));
        // Starting exactly at the accumulation point is fine.
        assert!(m.component_sigma(0.25, 0.5).is_ok());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = SpectralMeasure::new(
            Cardinal::Fin(1),
            vec![Atom {
                pos: 0.1 + 0.2, // deliberately non-representable decimal
                weight: Cardinal::Aleph(0),
            }],
            vec![geo(1.0, 0.5, 2, 0.0), pow(1.5, 1.25, 1, 0.45)],
            vec![InfiniteFamily {
                c: 0.9,
                rho: 0.75,
                cardinal: Cardinal::Aleph(2),
            }],
        )
        .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: SpectralMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn deserialization_revalidates() {
        let bad = r#"{"kernel":{"fin":0},"atoms":[{"pos":-1.0,"weight":{"fin":1}}],"tails":[],"families":[]}"#;
        assert!(serde_json::from_str::<SpectralMeasure>(bad).is_err());
        let bad_family = r#"{"kernel":{"fin":0},"atoms":[],"tails":[],"families":[{"c":1.0,"rho":0.5,"cardinal":{"fin":3}}]}"#;
        assert!(serde_json::from_str::<SpectralMeasure>(bad_family).is_err());
    }

    #[test]
    fn tail_wire_format_is_flat() {
        let t = geo(1.0, 0.5, 1, 0.0);
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"kind":"geometric","a":1.0,"r":0.5,"mult":1,"limit":0.0}"#
        );
        let t = pow(2.0, 1.5, 3, 0.25);
        assert_eq!(
            serde_json::to_string(&t).unwrap(),
            r#"{"kind":"power","a":2.0,"p":1.5,"mult":3,"limit":0.25}"#
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn interval_weights_are_additive_over_splits(
            m in arb_measure(),
            cuts in proptest::collection::vec(0.0f64..3.0, 3),
        ) {
            let mut c = cuts;
            c.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (a, b, d) = (c[0], c[1], c[2]);
            let whole = m.weight_interval(a, d);
            let split = m.weight_interval(a, b).plus(m.weight_interval(b, d));
            prop_assert_eq!(whole, split);
        }

        #[test]
        fn prefix_decomposes_as_kernel_plus_interval(m in arb_measure(), mu in 0.0f64..3.0) {
            prop_assert_eq!(
                m.weight_prefix(mu),
                m.kernel().plus(m.weight_interval(0.0, mu))
            );
        }

        #[test]
        fn prefix_weight_is_monotone(m in arb_measure(), a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.weight_prefix(lo) <= m.weight_prefix(hi));
        }

        #[test]
        fn prefix_at_support_sup_is_the_total(m in arb_measure()) {
            prop_assume!(!m.is_empty());
            let sup = m.support_sup().unwrap();
            prop_assert_eq!(m.weight_prefix(sup), m.total_dim());
            prop_assert_eq!(m.weight_interval(0.0, sup * 2.0 + 1.0), m.image_dim());
        }

        #[test]
        fn closed_form_tail_counts_match_enumeration(
            t in arb_tail(),
            lo in 0.02f64..2.0,
            span in 0.01f64..2.0,
        ) {
            let hi = lo + span;
            if let Some(n) = oracle_tail_count(&t, lo, hi, 200_000) {
                prop_assert_eq!(t.count_in(lo, hi), TermCount::Fin(n));
            } else if lo > t.limit {
                // Oracle hit its cap; the closed form must still be finite.
                prop_assert!(matches!(t.count_in(lo, hi), TermCount::Fin(_)));
            } else {
                prop_assert_eq!(t.count_in(lo, hi), TermCount::Infinite);
            }
        }

        #[test]
        fn listed_components_carry_no_infinite_locus(m in arb_measure()) {
            let rep = m.fin_inf_decomposition();
            for c in &rep.fin_components {
                prop_assert!(m.component_sigma(c.lo, c.hi).is_ok());
            }
            for p in &rep.inf_points {
                // Shrinking neighborhoods keep infinite weight.
                for eps in [0.5, 0.01, 1e-6] {
                    let w = m.weight_interval(p.position * (1.0 - eps), p.position * (1.0 + eps));
                    prop_assert!(w.is_infinite());
                }
            }
        }

        #[test]
        fn measure_json_round_trips(m in arb_measure()) {
            let json = serde_json::to_string(&m).unwrap();
            let back: SpectralMeasure = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
