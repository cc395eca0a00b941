//! Finite-dimensional operators: singular spectrum, measure extraction,
//! and numerical verification of the subspace geometry.
//!
//! The working object is the positive square root of `T*T`, represented
//! only through its singular values and right singular vectors. Columns
//! are orthogonalized in place by one-sided Jacobi rotations, which
//! avoids forming `T*T` and squaring the condition number. Singular
//! values below `rank_tol` relative to the largest collapse into kernel
//! weight, near-degenerate values cluster into single atoms, and the
//! result enters the symbolic measure layer with exact multiplicities.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cardinal::Cardinal;
use crate::measure::{Atom, MeasureError, SpectralMeasure};

pub const DEFAULT_MAX_SWEEPS: usize = 64;
pub const DEFAULT_SVD_TOL: f64 = 1e-12;
/// Maximum Gram deviation a basis may show and still count orthonormal.
pub const ORTHO_TOL: f64 = 1e-12;
/// Smallest restricted singular value that still counts injective.
pub const INJECTIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("matrix shape {rows}x{cols} does not match {len} entries")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("matrix dimensions must be at least 1x1")]
    EmptyMatrix,
    #[error("matrix entries must be finite")]
    NonFiniteEntry,
    #[error("column orthogonalization stalled at residual {residual:.3e}")]
    NoConvergence { residual: f64 },
    #[error("subspace basis is not orthonormal (Gram deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("basis vector length {got} does not match ambient dimension {ambient}")]
    AmbientMismatch { ambient: usize, got: usize },
    #[error("basis vectors are linearly dependent")]
    DependentBasis,
    #[error("graph perturbation kept violating the interval after {retries} shrinkages")]
    PerturbationFailed { retries: usize },
    #[error("the zero operator attains its norm everywhere")]
    ZeroOperator,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Real matrix acting from the right singular vector space, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr")]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<MatrixRepr> for DenseOperator {
    type Error = OperatorError;

    fn try_from(r: MatrixRepr) -> Result<Self, OperatorError> {
        DenseOperator::new(r.rows, r.cols, r.data)
    }
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, OperatorError> {
        if rows == 0 || cols == 0 {
            return Err(OperatorError::EmptyMatrix);
        }
        if data.len() != rows * cols {
            return Err(OperatorError::ShapeMismatch {
                rows,
                cols,
                len: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(OperatorError::NonFiniteEntry);
        }
        Ok(DenseOperator { rows, cols, data })
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in entries.iter().enumerate() {
            data[i * n + i] = v;
        }
        DenseOperator::new(n, n, data).expect("diagonal matrices are well formed")
    }

    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let m = cols.first().map_or(0, |c| c.len());
        let n = cols.len();
        let mut data = vec![0.0; m * n];
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * n + j] = v;
            }
        }
        DenseOperator::new(m, n, data).expect("columns have equal length")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length must match columns");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.at(i, j) * x[j]).sum())
            .collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// Singular values with their right singular vectors and convergence
/// metadata.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
    pub residual: f64,
}

impl SpectrumResult {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j]
    }

    pub fn norm(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

/// Half-open spectral windows used for subspace extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralInterval {
    UpTo(f64),
    Above(f64),
    Top,
}

/// Orthonormal set of ambient vectors spanning a subspace of the domain.
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient: usize,
    basis: Vec<Vec<f64>>,
}

impl Subspace {
    pub fn new(ambient: usize, basis: Vec<Vec<f64>>) -> Result<Self, OperatorError> {
        for col in &basis {
            if col.len() != ambient {
                return Err(OperatorError::AmbientMismatch {
                    ambient,
                    got: col.len(),
                });
            }
        }
        let mut deviation = 0.0f64;
        for i in 0..basis.len() {
            for j in i..basis.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((dot(&basis[i], &basis[j]) - target).abs());
            }
        }
        if deviation > ORTHO_TOL {
            return Err(OperatorError::NotOrthonormal { deviation });
        }
        Ok(Subspace { ambient, basis })
    }

    pub fn empty(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: Vec::new(),
        }
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }
}

/// Result of testing whether a subspace keeps `|Tx|/|x|` inside an
/// interval; `margin` is the slack to the violated or respected bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalCheck {
    pub pass: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub injective: bool,
    pub onto: bool,
    pub condition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttainmentReport {
    pub attains: bool,
    pub shortfall: f64,
    pub outside: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for i in 0..cp.len() {
        let x = cp[i];
        let y = cq[i];
        cp[i] = c * x - s * y;
        cq[i] = s * x + c * y;
    }
}

/// Orthogonalizes the columns of `t` by one-sided Jacobi rotations and
/// reads the singular values off the resulting column norms.
pub fn singular_spectrum(
    t: &DenseOperator,
    max_sweeps: usize,
    tol: f64,
) -> Result<SpectrumResult, OperatorError> {
    assert!(tol > 0.0, "orthogonality tolerance must be positive");
    let n = t.cols();
    let mut work: Vec<Vec<f64>> = (0..n).map(|j| t.column(j)).collect();
    let mut right: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    // Rotations drive dependent columns toward zero but rounding leaves
    // them at ~eps scale, where the relative orthogonality test is
    // meaningless noise; such columns count as zero.
    let dead_sq = {
        let dead = n as f64 * f64::EPSILON * t.frobenius_sq().sqrt();
        dead * dead
    };

    let mut sweeps = 0;
    let mut residual = 0.0f64;
    let mut converged = false;
    for sweep in 0..max_sweeps {
        let mut worst = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&work[p], &work[p]);
                let beta = dot(&work[q], &work[q]);
                if alpha <= dead_sq || beta <= dead_sq {
                    continue;
                }
                let gamma = dot(&work[p], &work[q]);
                let rel = gamma.abs() / (alpha * beta).sqrt();
                worst = worst.max(rel);
                if rel <= tol {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let tan = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cos = 1.0 / (1.0 + tan * tan).sqrt();
                let sin = cos * tan;
                rotate_pair(&mut work, p, q, cos, sin);
                rotate_pair(&mut right, p, q, cos, sin);
            }
        }
        sweeps = sweep + 1;
        residual = worst;
        if worst <= tol {
            converged = true;
            break;
        }
    }
    if !converged && max_sweeps > 0 {
        // One clean pass over the final state decides convergence; the
        // last sweep may have fixed everything it measured.
        let mut worst = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&work[p], &work[p]);
                let beta = dot(&work[q], &work[q]);
                if alpha <= dead_sq || beta <= dead_sq {
                    continue;
                }
                worst = worst.max(dot(&work[p], &work[q]).abs() / (alpha * beta).sqrt());
            }
        }
        residual = worst;
        converged = worst <= tol;
    }
    if !converged {
        return Err(OperatorError::NoConvergence { residual });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sigmas: Vec<f64> = work
        .iter()
        .map(|c| {
            let sq = dot(c, c);
            if sq <= dead_sq {
                0.0
            } else {
                sq.sqrt()
            }
        })
        .collect();
    order.sort_by(|&a, &b| sigmas[b].total_cmp(&sigmas[a]));
    let values: Vec<f64> = order.iter().map(|&j| sigmas[j]).collect();
    let vectors: Vec<Vec<f64>> = order.iter().map(|&j| right[j].clone()).collect();
    Ok(SpectrumResult {
        values,
        vectors,
        sweeps,
        residual,
    })
}

/// Extracts the dimension spectral measure of a matrix: values at or
/// below `rank_tol` relative to the top one become kernel weight, the
/// rest cluster greedily (relative gap at most `cluster_tol`) into
/// atoms at the cluster mean.
pub fn measure_from_dense(
    t: &DenseOperator,
    cluster_tol: f64,
    rank_tol: f64,
) -> Result<SpectralMeasure, OperatorError> {
    assert!(
        cluster_tol > 0.0 && rank_tol > 0.0,
        "tolerances must be positive"
    );
    let s = singular_spectrum(t, DEFAULT_MAX_SWEEPS, DEFAULT_SVD_TOL)?;
    let top = s.norm();
    let threshold = if top > 0.0 { rank_tol * top } else { rank_tol };
    let mut kernel = 0u64;
    let mut clusters: Vec<(f64, f64, u64)> = Vec::new();
    for &sigma in s.values() {
        if sigma <= threshold {
            kernel += 1;
            continue;
        }
        match clusters.last_mut() {
            Some((last, sum, count)) if *last - sigma <= cluster_tol * *last => {
                *last = sigma;
                *sum += sigma;
                *count += 1;
            }
            _ => clusters.push((sigma, sigma, 1)),
        }
    }
    let atoms: Vec<Atom> = clusters
        .into_iter()
        .map(|(_, sum, count)| Atom {
            pos: sum / count as f64,
            weight: Cardinal::Fin(count),
        })
        .collect();
    SpectralMeasure::new(Cardinal::Fin(kernel), atoms, vec![], vec![]).map_err(Into::into)
}

/// Span of the right singular vectors whose value falls in the window.
pub fn spectral_subspace(s: &SpectrumResult, interval: SpectralInterval, tol: f64) -> Subspace {
    let keep = |sigma: f64| match interval {
        SpectralInterval::UpTo(mu) => sigma <= mu,
        SpectralInterval::Above(mu) => sigma > mu,
        SpectralInterval::Top => sigma >= s.norm() * (1.0 - tol),
    };
    let basis: Vec<Vec<f64>> = s
        .values()
        .iter()
        .zip(&s.vectors)
        .filter(|(&sigma, _)| keep(sigma))
        .map(|(_, v)| v.clone())
        .collect();
    let ambient = s.values().len();
    Subspace::new(ambient, basis).expect("right singular vectors are orthonormal")
}

/// Tests whether every unit vector of `y` keeps `|Tx|` inside the
/// window, by the extreme singular values of `T` restricted to `y`.
pub fn check_subspace(
    t: &DenseOperator,
    y: &Subspace,
    interval: SpectralInterval,
    tol: f64,
) -> Result<IntervalCheck, OperatorError> {
    assert_eq!(y.ambient(), t.cols(), "subspace must live in the domain");
    if y.dim() == 0 {
        return Ok(IntervalCheck {
            pass: true,
            margin: f64::INFINITY,
        });
    }
    let image: Vec<Vec<f64>> = y.basis().iter().map(|col| t.apply(col)).collect();
    let restricted = singular_spectrum(
        &DenseOperator::from_columns(&image),
        DEFAULT_MAX_SWEEPS,
        DEFAULT_SVD_TOL,
    )?;
    let (pass, margin) = match interval {
        SpectralInterval::UpTo(mu) => {
            let bound = mu * (1.0 + tol);
            (restricted.norm() <= bound, bound - restricted.norm())
        }
        SpectralInterval::Above(mu) => {
            let low = *restricted.values().last().expect("nonempty basis");
            let bound = mu * (1.0 - tol);
            (low >= bound, low - bound)
        }
        SpectralInterval::Top => {
            let full = singular_spectrum(t, DEFAULT_MAX_SWEEPS, DEFAULT_SVD_TOL)?;
            let low = *restricted.values().last().expect("nonempty basis");
            let bound = full.norm() * (1.0 - tol);
            (low >= bound, low - bound)
        }
    };
    Ok(IntervalCheck { pass, margin })
}

/// Dimension every maximal `[0, mu]`-subspace must have: the count of
/// singular values at or below `mu` after rank snapping.
pub fn maximal_subspace_dim(s: &SpectrumResult, mu: f64, rank_tol: f64) -> usize {
    assert!(mu >= 0.0, "spectral thresholds are nonnegative");
    let top = s.norm();
    let threshold = if top > 0.0 { rank_tol * top } else { rank_tol };
    s.values()
        .iter()
        .map(|&v| if v <= threshold { 0.0 } else { v })
        .filter(|&v| v <= mu)
        .count()
}

/// Graph `{x + Bx}` of a random bounded map from the low spectral
/// subspace into the high one, orthonormalized; shrinks the norm bound
/// until the graph stays a `[0, mu]`-subspace.
pub fn perturbed_maximal_subspace(
    t: &DenseOperator,
    mu: f64,
    scale: f64,
    seed: u64,
) -> Result<Subspace, OperatorError> {
    let s = singular_spectrum(t, DEFAULT_MAX_SWEEPS, DEFAULT_SVD_TOL)?;
    let low = spectral_subspace(&s, SpectralInterval::UpTo(mu), 0.0);
    let high = spectral_subspace(&s, SpectralInterval::Above(mu), 0.0);
    if low.dim() == 0 || high.dim() == 0 {
        return Ok(low);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction: Vec<Vec<f64>> = (0..low.dim())
        .map(|_| (0..high.dim()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let dir_norm = singular_spectrum(
        &DenseOperator::from_columns(&direction),
        DEFAULT_MAX_SWEEPS,
        DEFAULT_SVD_TOL,
    )?
    .norm();

    let retries = 8;
    let mut bound = scale;
    for _ in 0..=retries {
        let factor = if dir_norm > 0.0 { bound / dir_norm } else { 0.0 };
        let graph: Vec<Vec<f64>> = (0..low.dim())
            .map(|j| {
                let mut col = low.basis()[j].clone();
                for (i, hv) in high.basis().iter().enumerate() {
                    for (c, h) in col.iter_mut().zip(hv) {
                        *c += factor * direction[j][i] * h;
                    }
                }
                col
            })
            .collect();
        let y = Subspace::new(t.cols(), orthonormalize(graph)?)?;
        if check_subspace(t, &y, SpectralInterval::UpTo(mu), 1e-9)?.pass {
            return Ok(y);
        }
        bound /= 2.0;
    }
    Err(OperatorError::PerturbationFailed { retries })
}

fn orthonormalize(mut cols: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>, OperatorError> {
    for j in 0..cols.len() {
        for _ in 0..2 {
            for i in 0..j {
                let proj = dot(&cols[i], &cols[j]);
                let prev = cols[i].clone();
                for (c, p) in cols[j].iter_mut().zip(&prev) {
                    *c -= proj * p;
                }
            }
        }
        let len = norm(&cols[j]);
        if len < 1e-12 {
            return Err(OperatorError::DependentBasis);
        }
        for c in cols[j].iter_mut() {
            *c /= len;
        }
    }
    Ok(cols)
}

/// Checks the orthogonal projection of `y` onto the low spectral
/// subspace: injectivity, surjectivity, and its condition number.
pub fn verify_projection_iso(
    s: &SpectrumResult,
    y: &Subspace,
    mu: f64,
    rank_tol: f64,
) -> Result<ProjectionReport, OperatorError> {
    let low = spectral_subspace(s, SpectralInterval::UpTo(mu), 0.0);
    let full = maximal_subspace_dim(s, mu, rank_tol);
    if y.dim() == 0 {
        return Ok(ProjectionReport {
            injective: true,
            onto: full == 0,
            condition: 1.0,
        });
    }
    if low.dim() == 0 {
        return Ok(ProjectionReport {
            injective: false,
            onto: false,
            condition: f64::INFINITY,
        });
    }
    let projected: Vec<Vec<f64>> = y
        .basis()
        .iter()
        .map(|col| low.basis().iter().map(|e| dot(e, col)).collect())
        .collect();
    let ps = singular_spectrum(
        &DenseOperator::from_columns(&projected),
        DEFAULT_MAX_SWEEPS,
        DEFAULT_SVD_TOL,
    )?;
    let smin = *ps.values().last().expect("nonempty basis");
    let injective = smin > INJECTIVITY_TOL;
    Ok(ProjectionReport {
        injective,
        onto: injective && y.dim() == full,
        condition: if smin > 0.0 {
            ps.norm() / smin
        } else {
            f64::INFINITY
        },
    })
}

/// Confirms that the dimension jump between two thresholds equals both
/// the direct value count in the window and the extracted measure's
/// weight there.
pub fn quotient_dim_check(
    t: &DenseOperator,
    mu_lo: f64,
    mu_hi: f64,
    cluster_tol: f64,
    rank_tol: f64,
) -> Result<bool, OperatorError> {
    assert!(mu_lo < mu_hi, "window must be nonempty");
    let s = singular_spectrum(t, DEFAULT_MAX_SWEEPS, DEFAULT_SVD_TOL)?;
    let jump = maximal_subspace_dim(&s, mu_hi, rank_tol) - maximal_subspace_dim(&s, mu_lo, rank_tol);
    let top = s.norm();
    let threshold = if top > 0.0 { rank_tol * top } else { rank_tol };
    let direct = s
        .values()
        .iter()
        .map(|&v| if v <= threshold { 0.0 } else { v })
        .filter(|&v| mu_lo < v && v <= mu_hi)
        .count();
    let weight = measure_from_dense(t, cluster_tol, rank_tol)?.weight_interval(mu_lo, mu_hi);
    Ok(jump == direct && weight == Cardinal::Fin(direct as u64))
}

/// Subspace of vectors attaining `|Tx| = |T||x|`.
pub fn norm_attainment_subspace(
    s: &SpectrumResult,
    tol: f64,
) -> Result<Subspace, OperatorError> {
    if s.norm() == 0.0 {
        return Err(OperatorError::ZeroOperator);
    }
    Ok(spectral_subspace(s, SpectralInterval::Top, tol))
}

/// Reports whether `x` attains the operator norm and how far it sits
/// from the attainment subspace.
pub fn attains_norm(
    t: &DenseOperator,
    s: &SpectrumResult,
    x: &[f64],
    tol: f64,
) -> AttainmentReport {
    let xn = norm(x);
    let tx = norm(&t.apply(x));
    let top = spectral_subspace(s, SpectralInterval::Top, tol);
    let mut rest = x.to_vec();
    for v in top.basis() {
        let c = dot(v, x);
        for (r, e) in rest.iter_mut().zip(v) {
            *r -= c * e;
        }
    }
    AttainmentReport {
        attains: tx >= s.norm() * xn * (1.0 - tol),
        shortfall: s.norm() * xn - tx,
        outside: norm(&rest),
    }
}

/// Sanity invariant: an injective map cannot shrink dimension.
pub fn injective_dim_check(t: &DenseOperator, s: &SpectrumResult, rank_tol: f64) -> bool {
    let top = s.norm();
    let threshold = if top > 0.0 { rank_tol * top } else { rank_tol };
    let injective = s.values().iter().all(|&v| v > threshold);
    !injective || t.cols() <= t.rows()
}
