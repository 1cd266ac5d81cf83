//! Entropy, mutual information and conditional mutual information over
//! mixed discrete/continuous columns. All values are in nats.
//!
//! When every column is discrete the plug-in (empirical frequency)
//! estimate is used. Otherwise mutual information uses a k-nearest-neighbour
//! estimator in the max-norm joint space, where a discrete coordinate is at
//! distance 0 from an equal value and 1 from any other. For each point with
//! k-th neighbour distance `rho`:
//!
//! ```text
//! rho > 0:  term = psi(k) + psi(N) - psi(nx + 1) - psi(ny + 1)
//!           nx, ny = points strictly closer than rho in the X and Y spaces
//! rho = 0:  term = psi(kt) + psi(N) - psi(nx + 1) - psi(ny + 1)
//!           kt = points at joint distance 0; nx, ny = points at distance 0
//! ```
//!
//! and the estimate is the mean term. The `rho = 0` branch is the tie
//! correction that makes discrete and mixed columns work on one code path.
//! Continuous columns are replaced by their average ranks divided by `N`
//! (with a small fixed tie-breaking offset per distinct value) before the
//! neighbour search unless `rank_transform` is off.
//!
//! Conditional mutual information is `I((X, Z); Y) - I(Z; Y)` over the same
//! rows and `k`. It may come out slightly negative and is reported as is.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;
use thiserror::Error;

use crate::rng::Sampler;

const RANK_JITTER_SEED: u64 = 0x005e_ed0f_4a4b;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InfoError {
    #[error("a variable set needs at least one column")]
    NoColumns,
    #[error("column lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{rows} row(s) is too few; need at least {needed}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("column {0} has missing values")]
    Missing(usize),
    #[error("column {0} has infinite values")]
    NonFinite(usize),
    #[error("continuous entropy is undefined: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    /// Discrete values are compared for equality only.
    pub values: Vec<f64>,
}

impl Variable {
    pub fn discrete(values: Vec<f64>) -> Self {
        Self {
            kind: VarKind::Discrete,
            values,
        }
    }

    pub fn continuous(values: Vec<f64>) -> Self {
        Self {
            kind: VarKind::Continuous,
            values,
        }
    }
}

/// Equal-length columns with no missing or infinite values.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSet {
    columns: Vec<Variable>,
    rows: usize,
}

impl VariableSet {
    pub fn new(columns: Vec<Variable>) -> Result<Self, InfoError> {
        let rows = columns.first().ok_or(InfoError::NoColumns)?.values.len();
        for (i, c) in columns.iter().enumerate() {
            if c.values.len() != rows {
                return Err(InfoError::LengthMismatch(rows, c.values.len()));
            }
            if c.values.iter().any(|v| v.is_nan()) {
                return Err(InfoError::Missing(i));
            }
            if c.values.iter().any(|v| v.is_infinite()) {
                return Err(InfoError::NonFinite(i));
            }
        }
        Ok(Self { columns, rows })
    }

    /// The empty set, valid only as a conditioning set.
    pub fn empty(rows: usize) -> Self {
        Self {
            columns: Vec::new(),
            rows,
        }
    }

    pub fn single(v: Variable) -> Result<Self, InfoError> {
        Self::new(vec![v])
    }

    pub fn columns(&self) -> &[Variable] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Columns of `self` followed by those of `other`.
    pub fn concat(&self, other: &VariableSet) -> Result<VariableSet, InfoError> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if self.rows != other.rows {
            return Err(InfoError::LengthMismatch(self.rows, other.rows));
        }
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Ok(VariableSet {
            columns,
            rows: self.rows,
        })
    }

    pub fn select_columns(&self, idx: &[usize]) -> VariableSet {
        VariableSet {
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self.rows,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> VariableSet {
        VariableSet {
            columns: self
                .columns
                .iter()
                .map(|c| Variable {
                    kind: c.kind,
                    values: rows.iter().map(|&r| c.values[r]).collect(),
                })
                .collect(),
            rows: rows.len(),
        }
    }

    fn all_discrete(&self) -> bool {
        self.columns.iter().all(|c| c.kind == VarKind::Discrete)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub k: usize,
    pub rank_transform: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k: 3,
            rank_transform: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Empirical frequencies.
    PlugIn,
    /// Mixed k-nearest-neighbour mutual information with tie correction.
    KnnMixed,
    /// Kozachenko-Leonenko differential entropy.
    KozachenkoLeonenko,
    /// Plug-in over the discrete part plus per-cell Kozachenko-Leonenko.
    MixedEntropy,
    /// Difference of two mutual-information estimates.
    CmiDifference,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::PlugIn => "plug_in",
            Estimator::KnnMixed => "knn_mixed",
            Estimator::KozachenkoLeonenko => "kozachenko_leonenko",
            Estimator::MixedEntropy => "mixed_entropy",
            Estimator::CmiDifference => "cmi_difference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    /// Nats.
    pub value: f64,
    pub estimator: Estimator,
    pub k: usize,
    /// Rows used.
    pub n: usize,
}

/// Row keys for exact grouping of discrete rows.
fn row_keys(sets: &[&VariableSet]) -> Vec<Vec<u64>> {
    let rows = sets.iter().map(|s| s.rows).max().unwrap_or(0);
    (0..rows)
        .map(|r| {
            sets.iter()
                .flat_map(|s| s.columns.iter().map(move |c| normalize(c.values[r]).to_bits()))
                .collect()
        })
        .collect()
}

fn normalize(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

/// Group identical keys: returns, per row, a dense group id in sorted-key order,
/// and the group sizes.
fn group(keys: &[Vec<u64>]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ids = vec![0; keys.len()];
    let mut sizes: Vec<usize> = Vec::new();
    for (pos, &r) in order.iter().enumerate() {
        if pos == 0 || keys[r] != keys[order[pos - 1]] {
            sizes.push(0);
        }
        *sizes.last_mut().expect("pushed") += 1;
        ids[r] = sizes.len() - 1;
    }
    (ids, sizes)
}

fn plugin_entropy(sizes: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    -sizes
        .iter()
        .map(|&c| {
            let p = c as f64 / nf;
            p * p.ln()
        })
        .sum::<f64>()
}

fn plugin_mi(x: &VariableSet, y: &VariableSet) -> f64 {
    let n = x.rows;
    let (xi, xs) = group(&row_keys(&[x]));
    let (yi, ys) = group(&row_keys(&[y]));
    let (ji, js) = group(&row_keys(&[x, y]));
    // one representative row per joint cell, in cell order
    let mut rep = vec![usize::MAX; js.len()];
    for r in 0..n {
        if rep[ji[r]] == usize::MAX {
            rep[ji[r]] = r;
        }
    }
    let nf = n as f64;
    rep.iter()
        .zip(&js)
        .map(|(&r, &cxy)| {
            let cxy = cxy as f64;
            cxy / nf * (cxy * nf / (xs[xi[r]] as f64 * ys[yi[r]] as f64)).ln()
        })
        .sum()
}

/// Average ranks (1-based) divided by `n`, plus a fixed pseudo-random
/// offset per distinct value. Ranks sit on a lattice where many neighbour
/// distances are exactly equal, which skews the strict neighbour counts;
/// the offsets (at most a quarter of the lattice step) break those ties
/// while keeping the order and leaving equal values equal.
fn rank_standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut jitter = Sampler::new(RANK_JITTER_SEED);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ties; their average 1-based rank
        let avg = (start + 1 + end) as f64 / 2.0 + 0.25 * jitter.unit();
        for &r in &order[start..end] {
            ranks[r] = avg / n as f64;
        }
        start = end;
    }
    ranks
}

/// Row-major coordinates with a discrete flag per dimension.
struct Space {
    dims: usize,
    discrete: Vec<bool>,
    data: Vec<f64>,
}

impl Space {
    fn new(set: &VariableSet, rank: bool) -> Space {
        let dims = set.width();
        let cols: Vec<Vec<f64>> = set
            .columns
            .iter()
            .map(|c| match c.kind {
                VarKind::Continuous if rank => rank_standardize(&c.values),
                _ => c.values.clone(),
            })
            .collect();
        let mut data = Vec::with_capacity(dims * set.rows);
        for r in 0..set.rows {
            data.extend(cols.iter().map(|c| c[r]));
        }
        Space {
            dims,
            discrete: set.columns.iter().map(|c| c.kind == VarKind::Discrete).collect(),
            data,
        }
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        let a = &self.data[i * self.dims..(i + 1) * self.dims];
        let b = &self.data[j * self.dims..(j + 1) * self.dims];
        let mut d: f64 = 0.0;
        for k in 0..self.dims {
            let c = if self.discrete[k] {
                if a[k] == b[k] {
                    0.0
                } else {
                    1.0
                }
            } else {
                (a[k] - b[k]).abs()
            };
            d = d.max(c);
        }
        d
    }
}

fn digamma_table(n: usize) -> Vec<f64> {
    let mut t = vec![f64::NAN; n + 2];
    for (m, v) in t.iter_mut().enumerate().skip(1) {
        *v = digamma(m as f64);
    }
    t
}

/// k-th smallest value of `d` excluding index `skip`.
fn kth_smallest(d: &[f64], skip: usize, k: usize, best: &mut Vec<f64>) -> f64 {
    best.clear();
    for (j, &v) in d.iter().enumerate() {
        if j == skip {
            continue;
        }
        if best.len() < k {
            let pos = best.partition_point(|&b| b <= v);
            best.insert(pos, v);
        } else if v < best[k - 1] {
            best.pop();
            let pos = best.partition_point(|&b| b <= v);
            best.insert(pos, v);
        }
    }
    best[k - 1]
}

fn knn_mi(x: &VariableSet, y: &VariableSet, cfg: &EstimatorConfig) -> f64 {
    let n = x.rows;
    let k = cfg.k;
    let sx = Space::new(x, cfg.rank_transform);
    let sy = Space::new(y, cfg.rank_transform);
    let psi = digamma_table(n);
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n], vec![0.0; n], Vec::with_capacity(k + 1)),
            |(dx, dy, dj, best), i| {
                for j in 0..n {
                    dx[j] = sx.dist(i, j);
                    dy[j] = sy.dist(i, j);
                    dj[j] = dx[j].max(dy[j]);
                }
                let rho = kth_smallest(dj, i, k, best);
                let (kt, nx, ny) = if rho == 0.0 {
                    let mut kt = 0;
                    let (mut nx, mut ny) = (0, 0);
                    for j in (0..n).filter(|&j| j != i) {
                        kt += (dj[j] == 0.0) as usize;
                        nx += (dx[j] == 0.0) as usize;
                        ny += (dy[j] == 0.0) as usize;
                    }
                    (kt, nx, ny)
                } else {
                    let (mut nx, mut ny) = (0, 0);
                    for j in (0..n).filter(|&j| j != i) {
                        nx += (dx[j] < rho) as usize;
                        ny += (dy[j] < rho) as usize;
                    }
                    (k, nx, ny)
                };
                psi[kt] + psi[n] - psi[nx + 1] - psi[ny + 1]
            },
        )
        .collect();
    terms.iter().sum::<f64>() / n as f64
}

/// Kozachenko-Leonenko estimate on raw values:
/// `psi(N) - psi(k) + d * mean(ln(2 * eps_k))` with max-norm `eps_k`.
fn kl_entropy(set: &VariableSet, k: usize) -> Result<f64, InfoError> {
    let n = set.rows;
    let space = Space::new(set, false);
    let eps: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], Vec::with_capacity(k + 1)),
            |(d, best), i| {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj = space.dist(i, j);
                }
                let e = kth_smallest(d, i, k, best);
                if e > 0.0 {
                    e
                } else {
                    // ties: fall back to the nearest positive distance
                    d.iter()
                        .enumerate()
                        .filter(|&(j, &v)| j != i && v > 0.0)
                        .map(|(_, &v)| v)
                        .fold(f64::INFINITY, f64::min)
                }
            },
        )
        .collect();
    if eps.iter().any(|e| e.is_infinite()) {
        return Err(InfoError::Degenerate("all values are identical".into()));
    }
    let mean_log = eps.iter().map(|e| (2.0 * e).ln()).sum::<f64>() / n as f64;
    Ok(digamma(n as f64) - digamma(k as f64) + set.width() as f64 * mean_log)
}

fn need_rows(rows: usize, needed: usize) -> Result<(), InfoError> {
    if rows < needed {
        Err(InfoError::TooFewRows { rows, needed })
    } else {
        Ok(())
    }
}

pub fn estimate_entropy(x: &VariableSet, cfg: &EstimatorConfig) -> Result<MIEstimate, InfoError> {
    if x.is_empty() {
        return Err(InfoError::NoColumns);
    }
    let n = x.rows;
    if x.all_discrete() {
        need_rows(n, 1)?;
        let (_, sizes) = group(&row_keys(&[x]));
        return Ok(MIEstimate {
            value: plugin_entropy(&sizes, n),
            estimator: Estimator::PlugIn,
            k: 0,
            n,
        });
    }
    need_rows(n, cfg.k + 1)?;
    let discrete: Vec<usize> = (0..x.width())
        .filter(|&i| x.columns[i].kind == VarKind::Discrete)
        .collect();
    if discrete.is_empty() {
        return Ok(MIEstimate {
            value: kl_entropy(x, cfg.k)?,
            estimator: Estimator::KozachenkoLeonenko,
            k: cfg.k,
            n,
        });
    }
    // H(D) + sum_d p(d) H(C | D = d)
    let continuous: Vec<usize> = (0..x.width()).filter(|i| !discrete.contains(i)).collect();
    let d = x.select_columns(&discrete);
    let c = x.select_columns(&continuous);
    let (ids, sizes) = group(&row_keys(&[&d]));
    let mut value = plugin_entropy(&sizes, n);
    for (g, &size) in sizes.iter().enumerate() {
        if size < 2 {
            continue;
        }
        let rows: Vec<usize> = (0..n).filter(|&r| ids[r] == g).collect();
        let k = cfg.k.min(size - 1);
        value += size as f64 / n as f64 * kl_entropy(&c.select_rows(&rows), k)?;
    }
    Ok(MIEstimate {
        value,
        estimator: Estimator::MixedEntropy,
        k: cfg.k,
        n,
    })
}

pub fn estimate_mi(x: &VariableSet, y: &VariableSet, cfg: &EstimatorConfig) -> Result<MIEstimate, InfoError> {
    if x.is_empty() || y.is_empty() {
        return Err(InfoError::NoColumns);
    }
    if x.rows != y.rows {
        return Err(InfoError::LengthMismatch(x.rows, y.rows));
    }
    let n = x.rows;
    if x.all_discrete() && y.all_discrete() {
        need_rows(n, 1)?;
        return Ok(MIEstimate {
            value: plugin_mi(x, y),
            estimator: Estimator::PlugIn,
            k: 0,
            n,
        });
    }
    need_rows(n, cfg.k + 1)?;
    Ok(MIEstimate {
        value: knn_mi(x, y, cfg),
        estimator: Estimator::KnnMixed,
        k: cfg.k,
        n,
    })
}

/// `I(X; Y | Z) = I((X, Z); Y) - I(Z; Y)`; with an empty `Z` this is `I(X; Y)`.
pub fn estimate_cmi(
    x: &VariableSet,
    y: &VariableSet,
    z: &VariableSet,
    cfg: &EstimatorConfig,
) -> Result<MIEstimate, InfoError> {
    if z.is_empty() {
        return estimate_mi(x, y, cfg);
    }
    if z.rows != x.rows {
        return Err(InfoError::LengthMismatch(x.rows, z.rows));
    }
    let joint = estimate_mi(&x.concat(z)?, y, cfg)?;
    let base = estimate_mi(z, y, cfg)?;
    Ok(MIEstimate {
        value: joint.value - base.value,
        estimator: if joint.estimator == Estimator::PlugIn && base.estimator == Estimator::PlugIn {
            Estimator::PlugIn
        } else {
            Estimator::CmiDifference
        },
        k: joint.k.max(base.k),
        n: x.rows,
    })
}

/// How a wide conditioning set was narrowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compression {
    pub original_columns: usize,
    /// Kept column indices, in their original order.
    pub kept: Vec<usize>,
}

/// Keep the `max_columns` columns of `z` with the highest single-column
/// mutual information with `y` (ties to the lower index). Sets that are
/// already narrow enough are returned unchanged with `None`.
pub fn compress_conditioning(
    z: &VariableSet,
    y: &VariableSet,
    max_columns: usize,
    cfg: &EstimatorConfig,
) -> Result<(VariableSet, Option<Compression>), InfoError> {
    if z.width() <= max_columns {
        return Ok((z.clone(), None));
    }
    let mut scored = Vec::with_capacity(z.width());
    for i in 0..z.width() {
        let mi = estimate_mi(&z.select_columns(&[i]), y, cfg)?.value;
        scored.push((i, mi));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<usize> = scored[..max_columns].iter().map(|(i, _)| *i).collect();
    kept.sort_unstable();
    Ok((
        z.select_columns(&kept),
        Some(Compression {
            original_columns: z.width(),
            kept,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(v: &[f64]) -> VariableSet {
        VariableSet::single(Variable::discrete(v.to_vec())).unwrap()
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(VariableSet::new(vec![]), Err(InfoError::NoColumns));
        assert!(matches!(
            VariableSet::new(vec![Variable::continuous(vec![1.0, f64::NAN])]),
            Err(InfoError::Missing(0))
        ));
        let a = disc(&[1.0, 2.0]);
        let b = disc(&[1.0]);
        assert!(matches!(
            estimate_mi(&a, &b, &EstimatorConfig::default()),
            Err(InfoError::LengthMismatch(..))
        ));
        let c = VariableSet::single(Variable::continuous(vec![1.0, 2.0])).unwrap();
        assert!(matches!(
            estimate_mi(&c, &a, &EstimatorConfig::default()),
            Err(InfoError::TooFewRows { needed: 4, .. })
        ));
    }

    #[test]
    fn constant_column_has_zero_entropy() {
        let e = estimate_entropy(&disc(&[3.0; 7]), &EstimatorConfig::default()).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.estimator, Estimator::PlugIn);
    }

    #[test]
    fn ranks_average_ties() {
        let ranks = rank_standardize(&[10.0, 20.0, 10.0, 5.0]);
        // One offset per distinct value, drawn in ascending value order.
        let mut jitter = Sampler::new(RANK_JITTER_SEED);
        let (o5, o10, o20) = (jitter.unit(), jitter.unit(), jitter.unit());
        let expected = [
            (2.5 + 0.25 * o10) / 4.0,
            (4.0 + 0.25 * o20) / 4.0,
            (2.5 + 0.25 * o10) / 4.0,
            (1.0 + 0.25 * o5) / 4.0,
        ];
        assert_eq!(ranks, expected);
        assert!(ranks[3] < ranks[0] && ranks[0] < ranks[1]);
        for (r, base) in ranks.iter().zip([2.5, 4.0, 2.5, 1.0]) {
            assert!(*r >= base / 4.0 && *r < (base + 0.25) / 4.0);
        }
    }

    #[test]
    fn kth_smallest_skips_self() {
        let mut best = Vec::new();
        assert_eq!(kth_smallest(&[0.0, 3.0, 1.0, 2.0], 0, 2, &mut best), 2.0);
    }

    #[test]
    fn compression_keeps_most_informative() {
        let y: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        let noise: Vec<f64> = (0..40).map(|i| ((i * 7) % 3) as f64).collect();
        let z = VariableSet::new(vec![
            Variable::discrete(noise.clone()),
            Variable::discrete(y.clone()),
            Variable::discrete(noise),
        ])
        .unwrap();
        let (narrow, info) = compress_conditioning(&z, &disc(&y), 1, &EstimatorConfig::default()).unwrap();
        assert_eq!(narrow.width(), 1);
        assert_eq!(info.unwrap().kept, vec![1]);
        let (same, none) = compress_conditioning(&z, &disc(&y), 10, &EstimatorConfig::default()).unwrap();
        assert_eq!((same.width(), none), (3, None));
    }
}
