//! Equivalence-preserving mass transport: snapping measures onto a
//! multiplicative grid, explicit finite transfers, absorption of finite
//! mass into infinite-weight points, and truncation of convergent tails.
//!
//! Every operation returns the transformed measure together with a
//! [`ShiftWitness`] listing the moves it performed and the largest
//! position ratio among them. Mass at 0 never moves and nothing moves to
//! 0, so kernel, image, and total dimension are preserved exactly.

use serde::Serialize;
use thiserror::Error;

use crate::cardinal::Cardinal;
use crate::measure::{Atom, InfiniteFamily, MeasureError, SpectralMeasure, Tail, TailKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShiftError {
    #[error("grid parameter {name} = {value} out of range")]
    BadGrid { name: &'static str, value: f64 },
    #[error("transfer endpoint {0} is not a positive finite real")]
    BadEndpoint(f64),
    #[error("no atom at position {0}")]
    NoMassAtSource(f64),
    #[error("cannot take {amount} from the {available} present at {pos}")]
    InsufficientMass {
        pos: f64,
        available: Cardinal,
        amount: Cardinal,
    },
    #[error("destination {0} collides with a tail term")]
    DestinationCollision(f64),
    #[error("absorption radius must be at least 1, got {0}")]
    BadRadius(f64),
    #[error("tail index {0} out of range")]
    BadTailIndex(usize),
    #[error("tail accumulates at 0; its mass cannot be moved to the limit")]
    ZeroLimitTail,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Multiplicative grid with buckets `]point(k-1), point(k)]` and snap
/// target `point(k) = b * beta^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    beta: f64,
    b: f64,
}

/// Rates closer to 1 than this would need bucket indices beyond the
/// exponent range we compute with.
const MIN_BETA: f64 = 1.0 + 1e-6;

/// Longest exact-comparison walk allowed after a logarithmic index
/// estimate.
const ADJUST_CAP: u32 = 4096;

impl GridSpec {
    pub fn new(beta: f64, b: f64) -> Result<GridSpec, ShiftError> {
        if !beta.is_finite() || beta < MIN_BETA {
            return Err(ShiftError::BadGrid {
                name: "beta",
                value: beta,
            });
        }
        if !b.is_finite() || b <= 0.0 {
            return Err(ShiftError::BadGrid { name: "b", value: b });
        }
        Ok(GridSpec { beta, b })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Upper endpoint of bucket `k`.
    pub fn point(&self, k: i32) -> f64 {
        self.b * self.beta.powi(k)
    }

    /// The unique `k` with `point(k-1) < x <= point(k)`, for positive
    /// finite `x`.
    pub fn bucket_index(&self, x: f64) -> i32 {
        debug_assert!(x.is_finite() && x > 0.0);
        let est = (x / self.b).ln() / self.beta.ln();
        let mut k = if est.is_finite() {
            est.ceil().clamp(-2.0e9, 2.0e9) as i64 as i32
        } else {
            0
        };
        let mut guard = 0;
        while x > self.point(k) && guard < ADJUST_CAP {
            k += 1;
            guard += 1;
        }
        while x <= self.point(k - 1) && guard < ADJUST_CAP {
            k -= 1;
            guard += 1;
        }
        debug_assert!(self.point(k - 1) < x && x <= self.point(k));
        k
    }

    /// Snap target for `x`: the upper endpoint of its bucket.
    pub fn target(&self, x: f64) -> f64 {
        self.point(self.bucket_index(x))
    }

    /// Smallest `k` with `point(k) > x`: the bucket that positions just
    /// above `x` fall into.
    pub fn bucket_above(&self, x: f64) -> i32 {
        let k = self.bucket_index(x);
        if self.point(k) > x {
            k
        } else {
            k + 1
        }
    }
}

/// `max(a/b, b/a)` for positive reals.
pub(crate) fn ratio(a: f64, b: f64) -> f64 {
    let r = a / b;
    r.max(1.0 / r)
}

/// One recorded transport, carrying enough data to bound its own ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MoveRule {
    /// A mass moved between two positions.
    Point { from: f64, to: f64 },
    /// A whole tail merged into one point at or above its limit.
    TailCollapse { head: f64, limit: f64, target: f64 },
    /// Every tail term from `head` downward moved to some infinite point
    /// within ratio `bound` of it.
    TailAbsorb { head: f64, bound: f64 },
    /// All positions of one scaling-invariant part multiplied by `factor`.
    Scale { factor: f64 },
}

impl MoveRule {
    /// Largest `max(to/from, from/to)` over the moves the rule denotes.
    pub fn max_ratio(&self) -> f64 {
        match *self {
            MoveRule::Point { from, to } => ratio(from, to),
            MoveRule::TailCollapse {
                head,
                limit,
                target,
            } => ratio(head, target).max(target / limit),
            MoveRule::TailAbsorb { bound, .. } => bound,
            MoveRule::Scale { factor } => ratio(factor, 1.0),
        }
    }
}

/// Replayable record of a shift: the composite ratio bound and the moves
/// behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftWitness {
    #[serde(rename = "K")]
    pub k: f64,
    pub moves: Vec<MoveRule>,
}

impl ShiftWitness {
    pub fn identity() -> ShiftWitness {
        ShiftWitness {
            k: 1.0,
            moves: Vec::new(),
        }
    }

    /// Witness whose bound is the largest ratio among `moves`.
    pub fn from_moves(moves: Vec<MoveRule>) -> ShiftWitness {
        let k = moves.iter().map(MoveRule::max_ratio).fold(1.0, f64::max);
        ShiftWitness { k, moves }
    }

    /// Sequential composition; bounds multiply.
    pub fn then(self, later: ShiftWitness) -> ShiftWitness {
        let mut moves = self.moves;
        moves.extend(later.moves);
        ShiftWitness {
            k: self.k * later.k,
            moves,
        }
    }

    /// True when every recorded move stays within the claimed bound.
    pub fn is_sound(&self) -> bool {
        self.k >= 1.0 && self.moves.iter().all(|m| m.max_ratio() <= self.k)
    }
}

/// Explicit transfer request for [`transfer_masses`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassMove {
    pub from: f64,
    pub to: f64,
    pub amount: Cardinal,
}

fn merge_atom(atoms: &mut Vec<Atom>, new: Atom) {
    if let Some(a) = atoms.iter_mut().find(|a| a.pos == new.pos) {
        a.weight = a.weight.plus(new.weight);
    } else {
        atoms.push(new);
    }
}

fn tail_has_term_at(t: &Tail, x: f64) -> bool {
    t.first_index_at_or_below(x)
        .is_some_and(|j| t.position(j) == x)
}

/// Moves every atom to the upper endpoint of its grid bucket and anchors
/// families there; coinciding targets merge. Tails keep their exact term
/// positions (their per-bucket counts stay available through
/// [`Tail::count_in`] on bucket endpoints), except that a geometric tail
/// whose rate equals `1/beta` exactly scales onto the grid points
/// themselves. An atom whose target lands exactly on a kept tail term
/// stays where it was; its bucket is still recoverable from its position.
pub fn snap_to_grid(
    m: &SpectralMeasure,
    g: &GridSpec,
) -> Result<(SpectralMeasure, ShiftWitness), ShiftError> {
    // (from, to) per atom; reverting an entry sets to = from.
    let mut planned: Vec<(f64, f64, Cardinal)> = m
        .atoms()
        .iter()
        .map(|a| (a.pos, g.target(a.pos), a.weight))
        .collect();

    #[derive(Clone, Copy, PartialEq)]
    enum TailPlan {
        Keep,
        ScaleTo(f64),
    }
    let mut tail_plans: Vec<TailPlan> = m
        .tails()
        .iter()
        .map(|t| {
            if t.limit == 0.0 {
                if let TailKind::Geometric { a, r } = t.kind {
                    if r == 1.0 / g.beta() {
                        let to = g.target(a);
                        if to != a {
                            return TailPlan::ScaleTo(to);
                        }
                    }
                }
            }
            TailPlan::Keep
        })
        .collect();

    let scaled_tail = |t: &Tail, to: f64| {
        let TailKind::Geometric { r, .. } = t.kind else {
            unreachable!("only geometric tails are scaled");
        };
        Tail {
            kind: TailKind::Geometric { a: to, r },
            ..*t
        }
    };

    loop {
        let mut atoms: Vec<Atom> = Vec::new();
        for &(_, to, weight) in &planned {
            merge_atom(&mut atoms, Atom { pos: to, weight });
        }
        let tails: Vec<Tail> = m
            .tails()
            .iter()
            .zip(&tail_plans)
            .map(|(t, plan)| match plan {
                TailPlan::Keep => *t,
                TailPlan::ScaleTo(to) => scaled_tail(t, *to),
            })
            .collect();
        let families: Vec<InfiniteFamily> = m
            .families()
            .iter()
            .map(|f| InfiniteFamily {
                c: g.target(f.c),
                ..*f
            })
            .collect();
        match SpectralMeasure::new(m.kernel(), atoms, tails, families) {
            Ok(out) => {
                let mut moves = Vec::new();
                for &(from, to, _) in &planned {
                    if to != from {
                        moves.push(MoveRule::Point { from, to });
                    }
                }
                for (t, plan) in m.tails().iter().zip(&tail_plans) {
                    if let (TailPlan::ScaleTo(to), TailKind::Geometric { a, .. }) = (plan, t.kind)
                    {
                        moves.push(MoveRule::Scale { factor: to / a });
                    }
                }
                for f in m.families() {
                    let factor = g.target(f.c) / f.c;
                    if factor != 1.0 {
                        moves.push(MoveRule::Scale { factor });
                    }
                }
                return Ok((out, ShiftWitness::from_moves(moves)));
            }
            Err(MeasureError::TailAtomCollision(p)) => {
                let mut changed = false;
                for entry in planned.iter_mut() {
                    if entry.1 == p && entry.0 != p {
                        entry.1 = entry.0;
                        changed = true;
                    }
                }
                if !changed {
                    for (t, plan) in m.tails().iter().zip(tail_plans.iter_mut()) {
                        if let TailPlan::ScaleTo(to) = *plan {
                            if tail_has_term_at(&scaled_tail(t, to), p) {
                                *plan = TailPlan::Keep;
                                changed = true;
                                break;
                            }
                        }
                    }
                }
                if !changed {
                    return Err(MeasureError::TailAtomCollision(p).into());
                }
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Applies the requested transfers in order. Sources must be explicit
/// atoms carrying at least the requested amount; a move with equal
/// endpoints is the identity and is always admissible.
pub fn transfer_masses(
    m: &SpectralMeasure,
    moves: &[MassMove],
) -> Result<(SpectralMeasure, ShiftWitness), ShiftError> {
    let mut atoms: Vec<Atom> = m.atoms().to_vec();
    let mut rules = Vec::new();
    for mv in moves {
        for x in [mv.from, mv.to] {
            if !x.is_finite() || x <= 0.0 {
                return Err(ShiftError::BadEndpoint(x));
            }
        }
        if mv.from == mv.to || mv.amount.is_zero() {
            continue;
        }
        if m.tails().iter().any(|t| tail_has_term_at(t, mv.to)) {
            return Err(ShiftError::DestinationCollision(mv.to));
        }
        let Some(i) = atoms.iter().position(|a| a.pos == mv.from) else {
            return Err(ShiftError::NoMassAtSource(mv.from));
        };
        let available = atoms[i].weight;
        if mv.amount > available {
            return Err(ShiftError::InsufficientMass {
                pos: mv.from,
                available,
                amount: mv.amount,
            });
        }
        if mv.amount == available {
            atoms.remove(i);
        } else if let (Cardinal::Fin(have), Cardinal::Fin(take)) = (available, mv.amount) {
            atoms[i].weight = Cardinal::Fin(have - take);
        }
        // an infinite weight keeps its cardinal when strictly less leaves
        merge_atom(
            &mut atoms,
            Atom {
                pos: mv.to,
                weight: mv.amount,
            },
        );
        rules.push(MoveRule::Point {
            from: mv.from,
            to: mv.to,
        });
    }
    let out = SpectralMeasure::new(m.kernel(), atoms, m.tails().to_vec(), m.families().to_vec())?;
    Ok((out, ShiftWitness::from_moves(rules)))
}

/// The infinite-weight positions of a measure: atoms with aleph weight
/// and all members of its families.
pub(crate) struct Loci {
    points: Vec<f64>,
    families: Vec<InfiniteFamily>,
}

impl Loci {
    pub(crate) fn of(m: &SpectralMeasure) -> Loci {
        Loci {
            points: m
                .atoms()
                .iter()
                .filter(|a| a.weight.is_infinite())
                .map(|a| a.pos)
                .collect(),
            families: m.families().to_vec(),
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.points.is_empty() && self.families.is_empty()
    }

    /// Closest infinite point in log distance: `(ratio, position)`.
    pub(crate) fn nearest(&self, x: f64) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |pos: f64| {
            if pos > 0.0 {
                let r = ratio(x, pos);
                if best.is_none_or(|(br, _)| r < br) {
                    best = Some((r, pos));
                }
            }
        };
        for &p in &self.points {
            consider(p);
        }
        for f in &self.families {
            if let Some(k) = f.first_member_at_or_below(x) {
                consider(f.member(k));
                if k > 0 {
                    consider(f.member(k - 1));
                }
            } else {
                consider(f.c);
            }
        }
        best
    }

    fn has_point_at(&self, x: f64) -> bool {
        self.points.contains(&x)
            || self
                .families
                .iter()
                .any(|f| f.first_member_at_or_below(x).is_some_and(|k| f.member(k) == x))
    }

    fn covered(&self, x: f64, radius: f64) -> bool {
        self.nearest(x).is_some_and(|(r, _)| r <= radius)
    }
}

/// Materializing more terms than this as explicit atoms is worse than
/// keeping the tail symbolic, so absorption backs off.
const PREFIX_CAP: u64 = 4096;

/// Absorbs into the infinite-weight points every finite atom within log
/// distance `radius` of one, and as much of each tail as its closed form
/// can express: a tail whose limit sits exactly on an infinite point
/// collapses wholly (staged moves, witness may exceed `radius`); a tail
/// whose deep terms are all within `radius` of an infinite point loses
/// that suffix, with the finitely many remaining head terms kept as
/// explicit atoms; a geometric tail absorbed only near its head is
/// re-anchored at the first surviving term.
pub fn absorb_near_infinite(
    m: &SpectralMeasure,
    radius: f64,
) -> Result<(SpectralMeasure, ShiftWitness), ShiftError> {
    if !radius.is_finite() || radius < 1.0 {
        return Err(ShiftError::BadRadius(radius));
    }
    let loci = Loci::of(m);
    if loci.is_empty() {
        return Ok((m.clone(), ShiftWitness::identity()));
    }

    #[derive(Clone, PartialEq)]
    enum TailPlan {
        Keep,
        /// Terms from index `h` on are absorbed; earlier ones become atoms.
        Suffix { h: u64, rule: MoveRule },
        /// Terms before index `e` are absorbed; the rest re-anchors.
        Prefix {
            e: u64,
            moves: Vec<MoveRule>,
            rest: Tail,
        },
    }

    let plan_tail = |t: &Tail| -> TailPlan {
        let first = t.first_index();
        if t.limit > 0.0 && loci.has_point_at(t.limit) {
            return TailPlan::Suffix {
                h: first,
                rule: MoveRule::TailCollapse {
                    head: t.position(first),
                    limit: t.limit,
                    target: t.limit,
                },
            };
        }
        // A single witness point covering every deep term makes the whole
        // suffix from some index absorbable.
        let deep_start = if t.limit > 0.0 {
            loci.nearest(t.limit).and_then(|(r0, p)| {
                let reaches_deep =
                    (p >= t.limit && r0 <= radius) || (p < t.limit && r0 < radius);
                if reaches_deep {
                    t.first_index_at_or_below(p * radius)
                } else {
                    None
                }
            })
        } else {
            loci.families
                .iter()
                .filter(|f| (1.0 / f.rho).sqrt() <= radius)
                .filter_map(|f| t.first_index_at_or_below(f.c * radius))
                .min()
        };
        if let Some(h0) = deep_start {
            let mut h = h0.max(first);
            let mut guard = 0;
            while h > first && guard < ADJUST_CAP && loci.covered(t.position(h - 1), radius) {
                h -= 1;
                guard += 1;
            }
            if h - first <= PREFIX_CAP {
                return TailPlan::Suffix {
                    h,
                    rule: MoveRule::TailAbsorb {
                        head: t.position(h),
                        bound: radius,
                    },
                };
            }
        } else if let TailKind::Geometric { a, r } = t.kind {
            let mut e = first;
            let mut moves = Vec::new();
            while e - first < PREFIX_CAP {
                let pos = t.position(e);
                match loci.nearest(pos) {
                    Some((rt, p)) if rt <= radius => {
                        moves.push(MoveRule::Point { from: pos, to: p });
                        e += 1;
                    }
                    _ => break,
                }
            }
            if e > first {
                let rest = Tail {
                    kind: TailKind::Geometric {
                        a: a * r.powi((e - first) as i32),
                        r,
                    },
                    ..*t
                };
                return TailPlan::Prefix { e, moves, rest };
            }
        }
        TailPlan::Keep
    };

    let mut plans: Vec<TailPlan> = m.tails().iter().map(plan_tail).collect();

    // Assemble, backing a tail off to Keep when a term it materializes or
    // re-anchors lands exactly on an atom.
    let intermediate = loop {
        let mut atoms = m.atoms().to_vec();
        let mut tails = Vec::new();
        for (t, plan) in m.tails().iter().zip(&plans) {
            match plan {
                TailPlan::Keep => tails.push(*t),
                TailPlan::Suffix { h, .. } => {
                    for j in t.first_index()..*h {
                        merge_atom(
                            &mut atoms,
                            Atom {
                                pos: t.position(j),
                                weight: Cardinal::Fin(t.mult),
                            },
                        );
                    }
                }
                TailPlan::Prefix { rest, .. } => tails.push(*rest),
            }
        }
        match SpectralMeasure::new(m.kernel(), atoms, tails, m.families().to_vec()) {
            Ok(out) => break out,
            Err(MeasureError::TailAtomCollision(p)) => {
                let mut changed = false;
                for (t, plan) in m.tails().iter().zip(plans.iter_mut()) {
                    let emits_p = match plan {
                        TailPlan::Keep => false,
                        TailPlan::Suffix { h, .. } => {
                            (t.first_index()..*h).any(|j| t.position(j) == p)
                        }
                        TailPlan::Prefix { rest, .. } => tail_has_term_at(rest, p),
                    };
                    if emits_p {
                        *plan = TailPlan::Keep;
                        changed = true;
                        break;
                    }
                }
                if !changed {
                    return Err(MeasureError::TailAtomCollision(p).into());
                }
            }
            Err(e) => return Err(e.into()),
        }
    };

    let mut rules: Vec<MoveRule> = Vec::new();
    for plan in &plans {
        match plan {
            TailPlan::Keep => {}
            TailPlan::Suffix { rule, .. } => rules.push(*rule),
            TailPlan::Prefix { moves, .. } => rules.extend(moves.iter().copied()),
        }
    }

    // Finite atoms, including the ones just materialized, absorb pointwise.
    let mut atoms = intermediate.atoms().to_vec();
    atoms.retain(|a| {
        if a.weight.is_infinite() {
            return true;
        }
        match loci.nearest(a.pos) {
            Some((r, p)) if r <= radius => {
                rules.push(MoveRule::Point {
                    from: a.pos,
                    to: p,
                });
                false
            }
            _ => true,
        }
    });
    let out = SpectralMeasure::new(
        intermediate.kernel(),
        atoms,
        intermediate.tails().to_vec(),
        intermediate.families().to_vec(),
    )?;
    Ok((out, ShiftWitness::from_moves(rules)))
}

/// Collapses the designated tail into a single `Aleph(0)` atom at its
/// limit; each term moves by its own ratio and the witness is their
/// supremum, `head / limit`.
pub fn truncate_tail_into_limit(
    m: &SpectralMeasure,
    tail_index: usize,
) -> Result<(SpectralMeasure, ShiftWitness), ShiftError> {
    let Some(t) = m.tails().get(tail_index).copied() else {
        return Err(ShiftError::BadTailIndex(tail_index));
    };
    if t.limit <= 0.0 {
        return Err(ShiftError::ZeroLimitTail);
    }
    let mut tails = m.tails().to_vec();
    tails.remove(tail_index);
    let mut atoms = m.atoms().to_vec();
    merge_atom(
        &mut atoms,
        Atom {
            pos: t.limit,
            weight: Cardinal::Aleph(0),
        },
    );
    let out = SpectralMeasure::new(m.kernel(), atoms, tails, m.families().to_vec())?;
    let head = t.position(t.first_index());
    Ok((
        out,
        ShiftWitness::from_moves(vec![MoveRule::TailCollapse {
            head,
            limit: t.limit,
            target: t.limit,
        }]),
    ))
}
