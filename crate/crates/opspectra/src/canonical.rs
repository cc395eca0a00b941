//! Canonical classification of spectral measures under bounded
//! multiplicative shifts.
//!
//! A measure is driven through the shift pipeline: every explicit atom
//! snaps to the grid `beta^k`, tails running to a positive limit
//! collapse into an infinite point there, and finite mass within reach
//! of an infinite point is erased. What survives is summarized by a
//! small set of invariants: total and kernel dimension, the decay
//! class of the finite mass accumulating at zero, the cardinal carried
//! by an infinite descending family, and the heaviest isolated
//! infinite point. Two measures are equivalent exactly when these
//! invariants agree; every comparison returns either a bounded shift
//! witness or a certificate naming the obstruction, and interval
//! certificates instantiate to concrete windows on which the weight
//! domination test fails.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cardinal::Cardinal;
use crate::measure::{Atom, InfiniteFamily, MeasureError, SpectralMeasure, Tail, TailKind};
use crate::shift::{
    absorb_near_infinite, ratio, snap_to_grid, truncate_tail_into_limit, GridSpec, Loci, MoveRule,
    ShiftError, ShiftWitness,
};

/// Terms sampled per side when two reduced measures are aligned.
const ALIGN_SAMPLE: usize = 512;

/// Decay class of the finite-weight mass accumulating at zero, measured
/// per sorted index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum TailClass {
    Geometric { rate: f64 },
    Power { exponent: f64 },
}

/// One entry of the grid-aligned listing, at position `beta^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "item", rename_all = "snake_case")]
pub enum EviItem {
    /// `multiplicity` finite masses sharing one grid bucket.
    FiniteRun { exponent: i32, multiplicity: u64 },
    /// A single point of infinite weight.
    Intermission { exponent: i32, cardinal: Cardinal },
}

impl EviItem {
    pub fn exponent(&self) -> i32 {
        match *self {
            EviItem::FiniteRun { exponent, .. } | EviItem::Intermission { exponent, .. } => {
                exponent
            }
        }
    }
}

/// Grid-aligned listing of a measure after the shift pipeline: explicit
/// point masses in strictly descending order, plus symbolic entries for
/// the content no finite listing captures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EviSequence {
    pub beta: f64,
    pub kernel: Cardinal,
    pub items: Vec<EviItem>,
    pub tail_class: Option<TailClass>,
    pub family_cardinal: Option<Cardinal>,
    pub total: Cardinal,
}

/// Complete invariant of a measure up to bounded multiplicative shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalForm {
    pub total: Cardinal,
    pub kernel: Cardinal,
    pub image: Cardinal,
    pub tail: Option<TailClass>,
    pub family: Option<Cardinal>,
    /// Heaviest isolated infinite point, kept only when it outweighs
    /// the family.
    pub heavy: Option<Cardinal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormField {
    Kernel,
    Total,
    Image,
    Tail,
    Family,
    Heavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    First,
    Second,
}

/// Evidence of non-equivalence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// The canonical forms disagree on a directly comparable cardinal.
    InvariantMismatch {
        field: FormField,
        left: Cardinal,
        right: Cardinal,
    },
    /// Windows `]lo0 * lo_ratio^n, hi0 * hi_ratio^n]` in which the
    /// denser measure eventually outweighs every K-inflation of the
    /// other.
    IntervalFamily {
        field: FormField,
        denser: Side,
        lo0: f64,
        hi0: f64,
        lo_ratio: f64,
        hi_ratio: f64,
    },
}

impl Certificate {
    /// Window `n` of an interval-family certificate.
    pub fn window(&self, n: u32) -> Option<(f64, f64)> {
        match *self {
            Certificate::IntervalFamily {
                lo0,
                hi0,
                lo_ratio,
                hi_ratio,
                ..
            } => Some((lo0 * lo_ratio.powi(n as i32), hi0 * hi_ratio.powi(n as i32))),
            Certificate::InvariantMismatch { .. } => None,
        }
    }

    /// Smallest window index at which the denser side strictly
    /// outweighs the K-inflated window on the other, scanning
    /// `0..=max_n`.
    pub fn find_violation(
        &self,
        m1: &SpectralMeasure,
        m2: &SpectralMeasure,
        k: f64,
        max_n: u32,
    ) -> Option<u32> {
        let Certificate::IntervalFamily { denser, .. } = *self else {
            return None;
        };
        let (dense, sparse) = match denser {
            Side::First => (m1, m2),
            Side::Second => (m2, m1),
        };
        for n in 0..=max_n {
            let (lo, hi) = self.window(n).expect("interval family has windows");
            if lo <= 0.0 {
                break;
            }
            if lo >= hi {
                continue;
            }
            if dense.weight_interval(lo, hi) > sparse.weight_interval(lo / k, hi * k) {
                return Some(n);
            }
        }
        None
    }
}

/// Outcome of an equivalence decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Equivalent {
        #[serde(rename = "witness_K")]
        witness_k: f64,
        steps: Vec<MoveRule>,
    },
    NotEquivalent {
        certificate: Certificate,
    },
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    IntervalForward,
    IntervalBackward,
    PrefixForward,
    PrefixBackward,
}

/// One directed weight comparison; passes when `left <= right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectedCheck {
    pub check: CheckKind,
    pub left: Cardinal,
    pub right: Cardinal,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
    pub checks: Vec<DirectedCheck>,
}

/// Probe-by-probe record of the interval domination test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NecessityReport {
    #[serde(rename = "K")]
    pub k: f64,
    pub pass: bool,
    pub probes: Vec<ProbeResult>,
}

/// Drives `m` through the shift pipeline on the grid `beta^k` and
/// reduces the outcome to its invariants. Returns the grid-aligned
/// listing, the canonical form, and the witness for the whole chain.
pub fn canonicalize(
    m: &SpectralMeasure,
    beta: f64,
) -> Result<(EviSequence, CanonicalForm, ShiftWitness), ShiftError> {
    canonicalize_at(m, beta, 1.0)
}

/// Same as [`canonicalize`] with the grid anchored at `b` instead of 1.
pub fn canonicalize_at(
    m: &SpectralMeasure,
    beta: f64,
    b: f64,
) -> Result<(EviSequence, CanonicalForm, ShiftWitness), ShiftError> {
    reduce(m, beta, b).map(|(evi, form, w, _)| (evi, form, w))
}

/// Decides topological equivalence of the operators behind `m1` and
/// `m2` by comparing canonical forms on the grid `beta^k`.
pub fn decide_equivalent(
    m1: &SpectralMeasure,
    m2: &SpectralMeasure,
    beta: f64,
) -> Result<Verdict, ShiftError> {
    decide_equivalent_at(m1, m2, beta, 1.0)
}

/// Same as [`decide_equivalent`] with the grid anchored at `b`.
pub fn decide_equivalent_at(
    m1: &SpectralMeasure,
    m2: &SpectralMeasure,
    beta: f64,
    b: f64,
) -> Result<Verdict, ShiftError> {
    if m1 == m2 {
        return Ok(Verdict::Equivalent {
            witness_k: 1.0,
            steps: vec![],
        });
    }
    let (_, f1, w1, o1) = reduce(m1, beta, b)?;
    let (_, f2, w2, o2) = reduce(m2, beta, b)?;
    if f1 == f2 {
        let align = align_bound(&o1, &o2);
        let w = w1.then(w2);
        let mut steps = w.moves;
        if align > 1.0 {
            steps.push(MoveRule::Scale { factor: align });
        }
        return Ok(Verdict::Equivalent {
            witness_k: w.k * align,
            steps,
        });
    }
    let certificate = if f1.kernel != f2.kernel {
        Certificate::InvariantMismatch {
            field: FormField::Kernel,
            left: f1.kernel,
            right: f2.kernel,
        }
    } else if f1.total != f2.total {
        Certificate::InvariantMismatch {
            field: FormField::Total,
            left: f1.total,
            right: f2.total,
        }
    } else if f1.image != f2.image {
        Certificate::InvariantMismatch {
            field: FormField::Image,
            left: f1.image,
            right: f2.image,
        }
    } else if f1.family != f2.family {
        family_certificate(m1, m2, &f1, &f2)
    } else if f1.heavy != f2.heavy {
        heavy_certificate(m1, m2, &f1, &f2)
    } else {
        tail_certificate(&f1, &f2)
    };
    Ok(Verdict::NotEquivalent { certificate })
}

/// Runs the four directed domination checks of the necessary condition
/// at inflation factor `k` over the given `]lo, hi]` probes.
pub fn check_necessary_condition(
    m1: &SpectralMeasure,
    m2: &SpectralMeasure,
    k: f64,
    probes: &[(f64, f64)],
) -> NecessityReport {
    let k = k.max(1.0);
    let directed = |check, left: Cardinal, right: Cardinal| DirectedCheck {
        check,
        left,
        right,
        pass: left <= right,
    };
    let probes: Vec<ProbeResult> = probes
        .iter()
        .map(|&(lo, hi)| {
            let checks = vec![
                directed(
                    CheckKind::IntervalForward,
                    m1.weight_interval(lo, hi),
                    m2.weight_interval(lo / k, hi * k),
                ),
                directed(
                    CheckKind::IntervalBackward,
                    m2.weight_interval(lo, hi),
                    m1.weight_interval(lo / k, hi * k),
                ),
                directed(
                    CheckKind::PrefixForward,
                    m1.weight_prefix(hi),
                    m2.weight_prefix(hi * k),
                ),
                directed(
                    CheckKind::PrefixBackward,
                    m2.weight_prefix(hi),
                    m1.weight_prefix(hi * k),
                ),
            ];
            ProbeResult {
                lo,
                hi,
                pass: checks.iter().all(|c| c.pass),
                checks,
            }
        })
        .collect();
    NecessityReport {
        k,
        pass: probes.iter().all(|p| p.pass),
        probes,
    }
}

/// Minimal shift bound between two purely atomic measures with finite
/// weights, or `None` when no bounded shift exists or a precondition
/// fails (tails, families, infinite weights, or mismatched kernels or
/// totals).
pub fn finite_shift_witness(m1: &SpectralMeasure, m2: &SpectralMeasure) -> Option<f64> {
    let finite_atomic = |m: &SpectralMeasure| {
        m.tails().is_empty()
            && m.families().is_empty()
            && m.atoms().iter().all(|a| a.weight.is_finite())
    };
    if !finite_atomic(m1) || !finite_atomic(m2) {
        return None;
    }
    if m1.kernel() != m2.kernel() || m1.total_dim() != m2.total_dim() {
        return None;
    }
    let expand = |m: &SpectralMeasure| -> Vec<(f64, u64)> {
        m.atoms()
            .iter()
            .map(|a| match a.weight {
                Cardinal::Fin(w) => (a.pos, w),
                Cardinal::Aleph(_) => unreachable!("finite weights were checked"),
            })
            .collect()
    };
    matched_sup(&expand(m1), &expand(m2))
}

fn reduce(
    m: &SpectralMeasure,
    beta: f64,
    b: f64,
) -> Result<(EviSequence, CanonicalForm, ShiftWitness, SpectralMeasure), ShiftError> {
    let g = GridSpec::new(beta, b)?;
    let (mut cur, mut witness) = snap_to_grid(m, &g)?;

    while let Some(idx) = cur.tails().iter().position(|t| t.limit > 0.0) {
        let (next, w) = match truncate_tail_into_limit(&cur, idx) {
            Ok(step) => step,
            Err(ShiftError::Measure(MeasureError::TailAtomCollision(_))) => {
                truncate_to_free_point(&cur, idx, &g)?
            }
            Err(e) => return Err(e),
        };
        cur = next;
        witness = witness.then(w);
    }
    let (next, w) = snap_to_grid(&cur, &g)?;
    cur = next;
    witness = witness.then(w);

    // Families reach arbitrarily deep, so the first pass swallows whole
    // runs to zero; later passes erase whatever finite mass is left
    // within reach of an infinite point, including atoms materialized
    // by the first pass.
    let deep = cur
        .families()
        .iter()
        .map(|f| (1.0 / f.rho).sqrt())
        .fold(beta, f64::max);
    let (next, w) = absorb_near_infinite(&cur, deep)?;
    cur = next;
    witness = witness.then(w);
    for _ in 0..64 {
        let Some(r) = leftover_radius(&cur) else {
            break;
        };
        let (next, w) = absorb_near_infinite(&cur, r)?;
        if next == cur {
            break;
        }
        cur = next;
        witness = witness.then(w);
    }

    debug_assert!(cur.tails().iter().all(|t| t.limit == 0.0));
    debug_assert_eq!(cur.total_dim(), m.total_dim());

    let mut extra: Vec<MoveRule> = Vec::new();

    let family_cardinal = cur.families().iter().map(|f| f.cardinal).max();
    if let Some(top) = family_cardinal {
        let keeper_idx = (0..cur.families().len())
            .filter(|&i| cur.families()[i].cardinal == top)
            .max_by(|&a, &b| cur.families()[a].c.total_cmp(&cur.families()[b].c))
            .expect("some family carries the maximal cardinal");
        let keeper = cur.families()[keeper_idx];
        for (i, f) in cur.families().iter().enumerate() {
            if i != keeper_idx {
                let bound = (1.0 / keeper.rho).sqrt().max(ratio(f.c, keeper.c));
                extra.push(MoveRule::TailAbsorb { head: f.c, bound });
            }
        }
        // Tails the absorption pass could not materialize still sit
        // within bounded reach of the family.
        for t in cur.tails() {
            let head = t.position(t.first_index());
            let bound = cur
                .families()
                .iter()
                .map(|f| (1.0 / f.rho).sqrt().max(head / f.c).max(1.0))
                .fold(f64::INFINITY, f64::min);
            extra.push(MoveRule::TailAbsorb { head, bound });
        }
    }

    let mut runs: BTreeMap<i32, u64> = BTreeMap::new();
    let mut inters: BTreeMap<i32, (Cardinal, f64)> = BTreeMap::new();
    for a in cur.atoms() {
        let k = g.bucket_index(a.pos);
        match a.weight {
            Cardinal::Fin(w) => *runs.entry(k).or_insert(0) += w,
            card => {
                if let Some((have, pos)) = inters.get_mut(&k) {
                    extra.push(MoveRule::Point {
                        from: a.pos,
                        to: *pos,
                    });
                    *have = (*have).max(card);
                } else {
                    inters.insert(k, (card, a.pos));
                }
            }
        }
    }

    let mut items: Vec<EviItem> = Vec::new();
    let mut exps: Vec<i32> = runs.keys().chain(inters.keys()).copied().collect();
    exps.sort_unstable();
    exps.dedup();
    for k in exps.into_iter().rev() {
        if let Some(&(card, _)) = inters.get(&k) {
            items.push(EviItem::Intermission {
                exponent: k,
                cardinal: card,
            });
            if runs.contains_key(&k) {
                debug_assert!(false, "finite mass left in the bucket of an infinite point");
                extra.push(MoveRule::TailAbsorb {
                    head: g.point(k),
                    bound: g.beta(),
                });
            }
        } else {
            items.push(EviItem::FiniteRun {
                exponent: k,
                multiplicity: runs[&k],
            });
        }
    }

    let inter_points: Vec<(Cardinal, f64)> = inters.values().copied().collect();
    let mut heavy: Option<Cardinal> = None;
    if let Some(top) = inter_points.iter().map(|&(c, _)| c).max() {
        let keeper = inter_points
            .iter()
            .filter(|&&(c, _)| c == top)
            .map(|&(_, p)| p)
            .fold(0.0f64, f64::max);
        for &(_, p) in &inter_points {
            if p != keeper {
                extra.push(MoveRule::Point {
                    from: p,
                    to: keeper,
                });
            }
        }
        if family_cardinal.is_none_or(|f| top > f) {
            heavy = Some(top);
        } else if let Some(member) = nearest_family_member(cur.families(), keeper) {
            extra.push(MoveRule::Point {
                from: keeper,
                to: member,
            });
        }
    }

    let class_all = classify_tails(cur.tails());
    let form = CanonicalForm {
        total: cur.total_dim(),
        kernel: cur.kernel(),
        image: cur.image_dim(),
        tail: if family_cardinal.is_some() {
            None
        } else {
            class_all
        },
        family: family_cardinal,
        heavy,
    };
    debug_assert_eq!(form.kernel.plus(form.image), form.total);
    let evi = EviSequence {
        beta,
        kernel: form.kernel,
        items,
        tail_class: class_all,
        family_cardinal,
        total: form.total,
    };
    witness = witness.then(ShiftWitness::from_moves(extra));
    Ok((evi, form, witness, cur))
}

/// Collapses tail `idx` into an infinite point at the first collision
/// free grid point at or above its limit.
fn truncate_to_free_point(
    m: &SpectralMeasure,
    idx: usize,
    g: &GridSpec,
) -> Result<(SpectralMeasure, ShiftWitness), ShiftError> {
    let t = m.tails()[idx];
    let head = t.position(t.first_index());
    let mut tails = m.tails().to_vec();
    tails.remove(idx);
    let mut k = g.bucket_index(t.limit);
    loop {
        let target = g.point(k);
        if target < t.limit {
            k += 1;
            continue;
        }
        let mut atoms = m.atoms().to_vec();
        match atoms.iter_mut().find(|a| a.pos == target) {
            Some(a) => a.weight = a.weight.plus(Cardinal::Aleph(0)),
            None => atoms.push(Atom {
                pos: target,
                weight: Cardinal::Aleph(0),
            }),
        }
        match SpectralMeasure::new(m.kernel(), atoms, tails.clone(), m.families().to_vec()) {
            Ok(next) => {
                let rule = MoveRule::TailCollapse {
                    head,
                    limit: t.limit,
                    target,
                };
                return Ok((next, ShiftWitness::from_moves(vec![rule])));
            }
            Err(MeasureError::TailAtomCollision(_)) => k += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

/// Radius that brings every remaining finite atom within reach of an
/// infinite point, when both exist.
fn leftover_radius(m: &SpectralMeasure) -> Option<f64> {
    let loci = Loci::of(m);
    if loci.is_empty() {
        return None;
    }
    let mut r: Option<f64> = None;
    for a in m.atoms() {
        if a.weight.is_finite() {
            if let Some((d, _)) = loci.nearest(a.pos) {
                if d.is_finite() {
                    r = Some(r.map_or(d, |x: f64| x.max(d)));
                }
            }
        }
    }
    r.map(|x| x.max(1.0))
}

/// Per-index decay rate of the combined finite accumulation at zero.
fn classify_tails(tails: &[Tail]) -> Option<TailClass> {
    if tails.is_empty() {
        return None;
    }
    let mut min_p: Option<f64> = None;
    for t in tails {
        if let TailKind::Power { p, .. } = t.kind {
            min_p = Some(min_p.map_or(p, |q: f64| q.min(p)));
        }
    }
    // Polynomial counting swallows every logarithmic term, so any power
    // content decides the class.
    if let Some(p) = min_p {
        return Some(TailClass::Power { exponent: p });
    }
    let mut groups: Vec<(f64, u64)> = Vec::new();
    for t in tails {
        let TailKind::Geometric { r, .. } = t.kind else {
            unreachable!("power tails were handled above");
        };
        match groups.iter_mut().find(|(gr, _)| *gr == r) {
            Some((_, m)) => *m += t.mult,
            None => groups.push((r, t.mult)),
        }
    }
    let rate = if groups.len() == 1 {
        let (r, mult) = groups[0];
        if mult == 1 {
            r
        } else {
            r.powf(1.0 / mult as f64)
        }
    } else {
        let density: f64 = groups
            .iter()
            .map(|&(r, mult)| mult as f64 / (1.0 / r).ln())
            .sum();
        (-1.0 / density).exp()
    };
    Some(TailClass::Geometric { rate })
}

fn nearest_family_member(fams: &[InfiniteFamily], x: f64) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for f in fams {
        let est = (x / f.c).ln() / f.rho.ln();
        let base = est.floor().max(0.0) as u64;
        for j in base.saturating_sub(1)..=base.saturating_add(1) {
            let member = f.member(j);
            if member > 0.0 {
                let r = ratio(x, member);
                if best.is_none_or(|(br, _)| r < br) {
                    best = Some((r, member));
                }
            }
        }
    }
    best.map(|(_, member)| member)
}

/// Worst pair ratio of the order-preserving matching between two
/// descending `(position, count)` expansions of equal total count.
fn matched_sup(e1: &[(f64, u64)], e2: &[(f64, u64)]) -> Option<f64> {
    let mut sup = 1.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ci, mut cj) = (0u64, 0u64);
    loop {
        match (e1.get(i), e2.get(j)) {
            (None, None) => return Some(sup),
            (Some(&(px, wx)), Some(&(py, wy))) => {
                sup = sup.max(ratio(px, py));
                let take = (wx - ci).min(wy - cj);
                ci += take;
                cj += take;
                if ci == wx {
                    i += 1;
                    ci = 0;
                }
                if cj == wy {
                    j += 1;
                    cj = 0;
                }
            }
            _ => return None,
        }
    }
}

/// Descending sample of the finite-weight content: explicit atoms plus
/// leading tail terms.
fn sorted_finite_sample(m: &SpectralMeasure, n: usize) -> Vec<f64> {
    let mut vals: Vec<f64> = Vec::new();
    for a in m.atoms() {
        if let Cardinal::Fin(w) = a.weight {
            for _ in 0..w.min(n as u64) {
                vals.push(a.pos);
            }
        }
    }
    for t in m.tails() {
        let per = t.mult.max(1).min(n as u64);
        let steps = n as u64 / per + 2;
        for j in 0..steps {
            let v = t.position(t.first_index() + j);
            for _ in 0..per {
                vals.push(v);
            }
        }
    }
    vals.sort_by(|a, b| b.total_cmp(a));
    vals.truncate(n);
    vals
}

/// Bound on the residual alignment between two reduced measures whose
/// canonical forms agree: the finite contents pair off in sorted order
/// and every infinite point maps to one of no lesser weight.
fn align_bound(o1: &SpectralMeasure, o2: &SpectralMeasure) -> f64 {
    let runs = |m: &SpectralMeasure| -> Vec<(f64, u64)> {
        m.atoms()
            .iter()
            .filter_map(|a| match a.weight {
                Cardinal::Fin(w) => Some((a.pos, w)),
                Cardinal::Aleph(_) => None,
            })
            .collect()
    };
    let accumulates = |m: &SpectralMeasure| !m.tails().is_empty() || !m.families().is_empty();
    let mut k = 1.0f64;

    if !accumulates(o1) && !accumulates(o2) {
        if let Some(s) = matched_sup(&runs(o1), &runs(o2)) {
            k = k.max(s);
        }
    } else {
        let s1 = sorted_finite_sample(o1, ALIGN_SAMPLE);
        let s2 = sorted_finite_sample(o2, ALIGN_SAMPLE);
        for (a, b) in s1.iter().zip(&s2) {
            k = k.max(ratio(*a, *b));
        }
    }

    for (x, y) in [(o1, o2), (o2, o1)] {
        for a in x.atoms() {
            if a.weight.is_infinite() {
                k = k.max(infinite_target_ratio(a.pos, a.weight, y));
            }
        }
        for f in x.families() {
            let target = y
                .families()
                .iter()
                .max_by(|a, b| a.cardinal.cmp(&b.cardinal).then(a.c.total_cmp(&b.c)));
            if let Some(g) = target {
                k = k.max((1.0 / g.rho).sqrt().max(ratio(f.c, g.c)));
            }
        }
    }
    k
}

/// Distance to the nearest point of `other` carrying at least `card`.
fn infinite_target_ratio(pos: f64, card: Cardinal, other: &SpectralMeasure) -> f64 {
    let mut best = f64::INFINITY;
    for b in other.atoms() {
        if b.weight >= card {
            best = best.min(ratio(pos, b.pos));
        }
    }
    for f in other.families() {
        if f.cardinal >= card {
            if let Some(member) = nearest_family_member(std::slice::from_ref(f), pos) {
                best = best.min(ratio(pos, member));
            }
        }
    }
    if best.is_finite() {
        best
    } else {
        debug_assert!(false, "matching forms always offer a target");
        1.0
    }
}

/// Heaviest infinite accumulation of a raw measure: the position of its
/// top infinite atom or of a tail limit above zero.
fn heaviest_point(m: &SpectralMeasure) -> Option<(f64, Cardinal)> {
    let mut best: Option<(f64, Cardinal)> = None;
    for a in m.atoms() {
        if a.weight.is_infinite() && best.is_none_or(|(_, c)| a.weight > c) {
            best = Some((a.pos, a.weight));
        }
    }
    for t in m.tails() {
        if t.limit > 0.0 && best.is_none_or(|(_, c)| Cardinal::Aleph(0) > c) {
            best = Some((t.limit, Cardinal::Aleph(0)));
        }
    }
    best
}

fn family_certificate(
    m1: &SpectralMeasure,
    m2: &SpectralMeasure,
    f1: &CanonicalForm,
    f2: &CanonicalForm,
) -> Certificate {
    let denser = if f1.family > f2.family {
        Side::First
    } else {
        Side::Second
    };
    let (m, top) = match denser {
        Side::First => (m1, f1.family),
        Side::Second => (m2, f2.family),
    };
    let top = top.expect("denser side carries a family");
    let f = m
        .families()
        .iter()
        .filter(|f| f.cardinal == top)
        .max_by(|a, b| a.c.total_cmp(&b.c))
        .expect("the family cardinal comes from a family");
    Certificate::IntervalFamily {
        field: FormField::Family,
        denser,
        lo0: f.c * f.rho,
        hi0: f.c,
        lo_ratio: f.rho,
        hi_ratio: f.rho,
    }
}

fn heavy_certificate(
    m1: &SpectralMeasure,
    m2: &SpectralMeasure,
    f1: &CanonicalForm,
    f2: &CanonicalForm,
) -> Certificate {
    let denser = if f1.heavy > f2.heavy {
        Side::First
    } else {
        Side::Second
    };
    let m = match denser {
        Side::First => m1,
        Side::Second => m2,
    };
    let (q, _) = heaviest_point(m).expect("the heavy cardinal comes from an infinite point");
    Certificate::IntervalFamily {
        field: FormField::Heavy,
        denser,
        lo0: q / 2.0,
        hi0: 2.0 * q,
        lo_ratio: 1.0,
        hi_ratio: 1.0,
    }
}

fn tail_certificate(f1: &CanonicalForm, f2: &CanonicalForm) -> Certificate {
    let halving = |denser| Certificate::IntervalFamily {
        field: FormField::Tail,
        denser,
        lo0: 0.5,
        hi0: 1.0,
        lo_ratio: 0.5,
        hi_ratio: 0.5,
    };
    let geometric_windows = |denser, dense: f64, sparse: f64| Certificate::IntervalFamily {
        field: FormField::Tail,
        denser,
        lo0: 1.0,
        hi0: 1.0,
        lo_ratio: sparse,
        hi_ratio: dense,
    };
    use TailClass::{Geometric, Power};
    match (f1.tail, f2.tail) {
        (Some(Geometric { rate: s }), Some(Geometric { rate: t })) => {
            // The rate closer to one packs more terms into every window.
            if s > t {
                geometric_windows(Side::First, s, t)
            } else {
                geometric_windows(Side::Second, t, s)
            }
        }
        (Some(Power { exponent: p }), Some(Power { exponent: q })) => halving(if p < q {
            Side::First
        } else {
            Side::Second
        }),
        (Some(Power { .. }), Some(Geometric { .. })) => halving(Side::First),
        (Some(Geometric { .. }), Some(Power { .. })) => halving(Side::Second),
        (Some(Geometric { rate }), None) => geometric_windows(Side::First, rate, rate * rate),
        (None, Some(Geometric { rate })) => geometric_windows(Side::Second, rate, rate * rate),
        (Some(Power { .. }), None) => halving(Side::First),
        (None, Some(Power { .. })) => halving(Side::Second),
        (None, None) => unreachable!("tail certificates require a tail mismatch"),
    }
}
