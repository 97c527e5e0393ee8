//! Per-feature B-spline expansions and the grouped design matrix.
//!
//! Each nonlinear feature is expanded with a clamped B-spline basis of a
//! given degree. The first basis function (the one that plays the role of an
//! intercept together with the others) is dropped so that exactly `df`
//! columns remain. Linear features enter as a single raw column.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotRule {
    Quantile,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    DataRange,
    Fixed { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasisConfig {
    pub degree: usize,
    pub df: usize,
    pub knot_rule: KnotRule,
    pub boundary: Boundary,
    /// Subtract training column means from every basis column.
    pub center: bool,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            df: 2,
            knot_rule: KnotRule::Quantile,
            boundary: Boundary::DataRange,
            center: false,
        }
    }
}

impl BasisConfig {
    pub fn interior_knots(&self) -> usize {
        self.df.saturating_sub(self.degree)
    }

    fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::InvalidBasisSize("degree must be at least 1".into()));
        }
        if self.df < 1 {
            return Err(Error::InvalidBasisSize("df must be at least 1".into()));
        }
        if self.df < self.degree {
            return Err(Error::InvalidBasisSize(format!(
                "df = {} is smaller than degree = {}",
                self.df, self.degree
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Linear,
    Nonlinear,
}

/// A fitted basis for one feature: knots are fixed from training data and can
/// be evaluated at new points.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    degree: usize,
    /// Full clamped knot vector (boundary knots repeated `degree + 1` times).
    knots: Vec<f64>,
    lo: f64,
    hi: f64,
    /// Column means removed when centering is enabled.
    offsets: Option<Vec<f64>>,
}

impl SplineBasis {
    pub fn fit(x: &[f64], cfg: &BasisConfig) -> Result<Self> {
        cfg.validate()?;
        if x.len() < 2 {
            return Err(Error::DegenerateFeature { name: None });
        }
        let mut sorted: Vec<f64> = x.to_vec();
        if sorted.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted[0] == sorted[sorted.len() - 1] {
            return Err(Error::DegenerateFeature { name: None });
        }
        let (lo, hi) = match cfg.boundary {
            Boundary::DataRange => (sorted[0], sorted[sorted.len() - 1]),
            Boundary::Fixed { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::InvalidArgument("boundary must satisfy lo < hi".into()));
                }
                (lo, hi)
            }
        };
        let m = cfg.interior_knots();
        let interior: Vec<f64> = (1..=m)
            .map(|i| {
                let p = i as f64 / (m + 1) as f64;
                match cfg.knot_rule {
                    KnotRule::Quantile => quantile_sorted(&sorted, p),
                    KnotRule::Uniform => lo + p * (hi - lo),
                }
            })
            .collect();
        if interior.iter().any(|&k| k <= lo || k >= hi)
            || interior.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::DegenerateFeature { name: None });
        }
        let mut knots = vec![lo; cfg.degree + 1];
        knots.extend(interior);
        knots.extend(std::iter::repeat(hi).take(cfg.degree + 1));
        let mut basis = Self {
            degree: cfg.degree,
            knots,
            lo,
            hi,
            offsets: None,
        };
        if cfg.center {
            let (cols, _) = basis.evaluate(x);
            let means = (0..cols.ncols()).map(|c| cols.column(c).mean()).collect();
            basis.offsets = Some(means);
        }
        Ok(basis)
    }

    /// Number of returned columns (`df`).
    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 2
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// All `df + 1` basis functions at `x` (including the dropped one);
    /// `x` must lie in `[lo, hi]`.
    pub fn full_row(&self, x: f64) -> Vec<f64> {
        let p = self.degree;
        let nbasis = self.knots.len() - p - 1;
        let span = self.find_span(x);
        let local = basis_funs(&self.knots, span, x, p);
        let mut row = vec![0.0; nbasis];
        for (r, v) in local.into_iter().enumerate() {
            row[span - p + r] = v;
        }
        row
    }

    /// Evaluate the `df` retained columns. Points outside the boundary knots
    /// are clamped; the number of clamped points is returned alongside.
    pub fn evaluate(&self, x: &[f64]) -> (DMatrix<f64>, usize) {
        let dim = self.dim();
        let mut out = DMatrix::zeros(x.len(), dim);
        let mut clamped = 0;
        for (i, &xi) in x.iter().enumerate() {
            let xc = if xi < self.lo {
                clamped += 1;
                self.lo
            } else if xi > self.hi {
                clamped += 1;
                self.hi
            } else {
                xi
            };
            let row = self.full_row(xc);
            for c in 0..dim {
                out[(i, c)] = row[c + 1];
            }
        }
        if let Some(off) = &self.offsets {
            for c in 0..dim {
                out.column_mut(c).add_scalar_mut(-off[c]);
            }
        }
        (out, clamped)
    }

    fn find_span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.knots.len() - p - 1;
        if x >= self.knots[n] {
            return n - 1;
        }
        let mut lo = p;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }
}

/// Nonzero basis functions `N_{span-p..=span, p}(x)` by the triangular
/// Cox–de Boor scheme.
fn basis_funs(knots: &[f64], span: usize, x: f64, p: usize) -> Vec<f64> {
    let mut n = vec![0.0; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The `df` non-intercept B-spline columns of `x`.
pub fn bspline_basis(x: &[f64], cfg: &BasisConfig) -> Result<DMatrix<f64>> {
    let basis = SplineBasis::fit(x, cfg)?;
    Ok(basis.evaluate(x).0)
}

/// Expanded design `Ψ = [Ψ_1 ⋯ Ψ_p]` with its column partition.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    pub matrix: DMatrix<f64>,
    pub groups: Vec<Range<usize>>,
    pub kinds: Vec<FeatureKind>,
    /// Raw `n × p` features; interactions are formed from these.
    pub raw: DMatrix<f64>,
    pub bases: Vec<Option<SplineBasis>>,
    pub names: Vec<String>,
    /// Points clamped to the boundary knots while evaluating the bases.
    pub clamped: usize,
}

impl GroupedDesign {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.groups.len()
    }

    pub fn q(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.len()).collect()
    }

    pub fn group(&self, j: usize) -> nalgebra::DMatrixView<'_, f64> {
        let g = &self.groups[j];
        self.matrix.columns(g.start, g.len())
    }

    /// Column concatenation of the given groups, in the given order.
    pub fn columns_of(&self, groups: &[usize]) -> DMatrix<f64> {
        let width: usize = groups.iter().map(|&j| self.groups[j].len()).sum();
        let mut out = DMatrix::zeros(self.n(), width);
        let mut c = 0;
        for &j in groups {
            let g = &self.groups[j];
            out.columns_mut(c, g.len()).copy_from(&self.matrix.columns(g.start, g.len()));
            c += g.len();
        }
        out
    }

    /// Indices into `0..q` covered by the given groups, in order.
    pub fn column_indices(&self, groups: &[usize]) -> Vec<usize> {
        groups.iter().flat_map(|&j| self.groups[j].clone()).collect()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.matrix.transpose() * &self.matrix
    }

    /// `I_jk = X_j ∘ X_k`.
    pub fn interaction(&self, j: usize, k: usize) -> DVector<f64> {
        self.raw.column(j).component_mul(&self.raw.column(k))
    }

    /// Row subset that keeps the fitted bases (no refitting of knots).
    pub fn select_rows(&self, rows: &[usize]) -> GroupedDesign {
        GroupedDesign {
            matrix: self.matrix.select_rows(rows),
            groups: self.groups.clone(),
            kinds: self.kinds.clone(),
            raw: self.raw.select_rows(rows),
            bases: self.bases.clone(),
            names: self.names.clone(),
            clamped: 0,
        }
    }

    /// Evaluate this design's bases on new raw rows (e.g. holdout data).
    pub fn transform(&self, raw: &DMatrix<f64>) -> Result<GroupedDesign> {
        if raw.ncols() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} features, got {}",
                self.p(),
                raw.ncols()
            )));
        }
        let mut matrix = DMatrix::zeros(raw.nrows(), self.q());
        let mut clamped = 0;
        for (j, g) in self.groups.iter().enumerate() {
            let col: Vec<f64> = raw.column(j).iter().copied().collect();
            match &self.bases[j] {
                Some(basis) => {
                    let (block, c) = basis.evaluate(&col);
                    clamped += c;
                    matrix.columns_mut(g.start, g.len()).copy_from(&block);
                }
                None => matrix.column_mut(g.start).copy_from(&raw.column(j)),
            }
        }
        Ok(GroupedDesign {
            matrix,
            groups: self.groups.clone(),
            kinds: self.kinds.clone(),
            raw: raw.clone(),
            bases: self.bases.clone(),
            names: self.names.clone(),
            clamped,
        })
    }
}

/// Build `Ψ` from raw features; the design must satisfy `n > q`.
pub fn build_design(
    x: &DMatrix<f64>,
    kinds: &[FeatureKind],
    cfg: &BasisConfig,
) -> Result<GroupedDesign> {
    let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    build_named_design(x, kinds, cfg, names)
}

pub fn build_named_design(
    x: &DMatrix<f64>,
    kinds: &[FeatureKind],
    cfg: &BasisConfig,
    names: Vec<String>,
) -> Result<GroupedDesign> {
    let (n, p) = x.shape();
    if kinds.len() != p || names.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{p} features but {} kinds and {} names",
            kinds.len(),
            names.len()
        )));
    }
    let mut blocks = Vec::with_capacity(p);
    let mut bases = Vec::with_capacity(p);
    let mut groups = Vec::with_capacity(p);
    let mut q = 0;
    for j in 0..p {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let block = match kinds[j] {
            FeatureKind::Linear => {
                bases.push(None);
                DMatrix::from_column_slice(n, 1, &col)
            }
            FeatureKind::Nonlinear => {
                let basis = SplineBasis::fit(&col, cfg).map_err(|e| match e {
                    Error::DegenerateFeature { .. } => Error::DegenerateFeature {
                        name: Some(names[j].clone()),
                    },
                    other => other,
                })?;
                let (block, _) = basis.evaluate(&col);
                bases.push(Some(basis));
                block
            }
        };
        groups.push(q..q + block.ncols());
        q += block.ncols();
        blocks.push(block);
    }
    if n <= q {
        return Err(Error::OverParameterized { n, q });
    }
    let mut matrix = DMatrix::zeros(n, q);
    for (g, block) in groups.iter().zip(&blocks) {
        matrix.columns_mut(g.start, g.len()).copy_from(block);
    }
    Ok(GroupedDesign {
        matrix,
        groups,
        kinds: kinds.to_vec(),
        raw: x.clone(),
        bases,
        names,
        clamped: 0,
    })
}
