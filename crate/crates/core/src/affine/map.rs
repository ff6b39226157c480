//! Quasi-affine maps over integer boxes: evaluation, composition,
//! classification and images.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use super::domain::{ImageSet, IntBox};
use super::expr::{LinearExpr, QuasiAffineExpr};
use super::{AffineError, Limits};

/// Normal forms recognised for symbolic inversion, most specific first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralClass {
    /// Each output is `±i_π(k) + b_k` for a permutation π.
    PermShift,
    /// Each output is `s_k·i_π(k) + b_k`, `s_k ≠ 0`.
    StridedEmbed,
    /// Row-major relinearisation of the domain onto a box (flatten,
    /// unflatten, reshape).
    MixedRadix,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub class: StructuralClass,
    pub pure_affine: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Body {
    Exprs(Vec<QuasiAffineExpr>),
    /// Dense row-major table over the domain; `outputs` values per point.
    Table { outputs: usize, values: Arc<[i64]> },
}

/// Integer map from a box of loop indices to tensor indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuasiAffineMap {
    domain: IntBox,
    body: Body,
    class: StructuralClass,
}

impl QuasiAffineMap {
    pub fn new(domain: IntBox, exprs: Vec<QuasiAffineExpr>) -> Result<Self, AffineError> {
        for e in &exprs {
            if e.dims() != domain.dims() {
                return Err(AffineError::DimensionMismatch { expected: domain.dims(), found: e.dims() });
            }
        }
        let exprs: Vec<_> = exprs.into_iter().map(|e| e.simplified_on(&domain)).collect();
        let class = classify_exprs(&domain, &exprs);
        Ok(QuasiAffineMap { domain, body: Body::Exprs(exprs), class })
    }

    pub fn identity(domain: IntBox) -> Self {
        let n = domain.dims();
        Self::new(domain, (0..n).map(|j| QuasiAffineExpr::var(n, j)).collect()).expect("identity arity")
    }

    /// `C·i + b` from the rows of `C`.
    pub fn affine(domain: IntBox, rows: &[Vec<i64>], offsets: &[i64]) -> Result<Self, AffineError> {
        let exprs = rows
            .iter()
            .zip(offsets)
            .map(|(r, &b)| QuasiAffineExpr::from_linear(LinearExpr::new(r.clone(), b)))
            .collect();
        Self::new(domain, exprs)
    }

    /// Map `i ↦ i_perm[k]` (output `k` reads loop variable `perm[k]`).
    pub fn permutation(domain: IntBox, perm: &[usize]) -> Result<Self, AffineError> {
        let n = domain.dims();
        Self::new(domain, perm.iter().map(|&j| QuasiAffineExpr::var(n, j)).collect())
    }

    /// Map given by an explicit table of outputs, one row per domain point
    /// in lexicographic order.
    pub fn tabulated(domain: IntBox, outputs: usize, values: Vec<i64>) -> Self {
        assert_eq!(values.len() as u64, domain.cardinality() * outputs as u64, "table size");
        QuasiAffineMap { domain, body: Body::Table { outputs, values: values.into() }, class: StructuralClass::General }
    }

    pub fn domain(&self) -> &IntBox {
        &self.domain
    }

    pub fn in_dims(&self) -> usize {
        self.domain.dims()
    }

    pub fn out_dims(&self) -> usize {
        match &self.body {
            Body::Exprs(e) => e.len(),
            Body::Table { outputs, .. } => *outputs,
        }
    }

    /// The output expressions; `None` for table-backed maps.
    pub fn exprs(&self) -> Option<&[QuasiAffineExpr]> {
        match &self.body {
            Body::Exprs(e) => Some(e),
            Body::Table { .. } => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self.body, Body::Exprs(_))
    }

    pub fn class(&self) -> StructuralClass {
        self.class
    }

    pub fn is_pure_affine(&self) -> bool {
        self.exprs().is_some_and(|es| es.iter().all(|e| e.as_linear().is_some()))
    }

    pub fn is_identity(&self) -> bool {
        let n = self.in_dims();
        self.exprs().is_some_and(|es| {
            es.len() == n && es.iter().enumerate().all(|(k, e)| *e == QuasiAffineExpr::var(n, k))
        })
    }

    pub fn evaluate(&self, point: &[i64]) -> Result<Vec<i64>, AffineError> {
        if !self.domain.contains(point) {
            return Err(AffineError::PointOutsideDomain { point: point.to_vec() });
        }
        let mut out = vec![0; self.out_dims()];
        self.evaluate_into(point, &mut out);
        Ok(out)
    }

    /// Evaluates without the domain check. `point` must lie in the domain for
    /// table-backed maps.
    pub fn evaluate_into(&self, point: &[i64], out: &mut [i64]) {
        match &self.body {
            Body::Exprs(es) => {
                for (o, e) in out.iter_mut().zip(es) {
                    *o = e.eval(point);
                }
            }
            Body::Table { outputs, values } => {
                let r = self.domain.rank_of(point) as usize * outputs;
                out.copy_from_slice(&values[r..r + outputs]);
            }
        }
    }

    /// Inclusive per-output bounds over the domain (sound, usually tight).
    pub fn output_bounds(&self) -> Vec<(i64, i64)> {
        if self.domain.is_empty() {
            return vec![(0, -1); self.out_dims()];
        }
        match &self.body {
            Body::Exprs(es) => es.iter().map(|e| e.range(&self.domain)).collect(),
            Body::Table { outputs, values } => (0..*outputs)
                .map(|k| {
                    let col = values.iter().skip(k).step_by(*outputs);
                    (col.clone().copied().min().unwrap_or(0), col.copied().max().unwrap_or(-1))
                })
                .collect(),
        }
    }

    /// `self ∘ inner`, i.e. `p ↦ self(inner(p))`, over `inner`'s domain.
    pub fn compose(&self, inner: &QuasiAffineMap) -> Result<QuasiAffineMap, AffineError> {
        self.compose_with(inner, &Limits::default())
    }

    pub fn compose_with(&self, inner: &QuasiAffineMap, limits: &Limits) -> Result<QuasiAffineMap, AffineError> {
        if inner.out_dims() != self.in_dims() {
            return Err(AffineError::ArityMismatch { outer_dims: self.in_dims(), inner_outputs: inner.out_dims() });
        }
        check_image_within(inner, &self.domain, limits)?;

        if let (Some(outer), Some(subs)) = (self.exprs(), inner.exprs()) {
            let composed: Result<Vec<_>, _> =
                outer.iter().map(|e| e.substitute(subs, &inner.domain)).collect();
            if let Ok(exprs) = composed {
                return QuasiAffineMap::new(inner.domain.clone(), exprs);
            }
        }
        // Fallback: pointwise table.
        let card = inner.domain.cardinality();
        if card > limits.tabulation {
            return Err(AffineError::DomainTooLarge { points: card, limit: limits.tabulation });
        }
        let mut mid = vec![0; inner.out_dims()];
        let mut out = vec![0; self.out_dims()];
        let mut values = Vec::with_capacity(card as usize * self.out_dims());
        inner.domain.for_each_point(|p| {
            inner.evaluate_into(p, &mut mid);
            self.evaluate_into(&mid, &mut out);
            values.extend_from_slice(&out);
        });
        Ok(QuasiAffineMap::tabulated(inner.domain.clone(), self.out_dims(), values))
    }

    /// Same expressions over a different domain of equal dimension.
    pub fn with_domain(&self, domain: IntBox) -> Result<QuasiAffineMap, AffineError> {
        match self.exprs() {
            Some(es) => QuasiAffineMap::new(domain, es.to_vec()),
            None if domain == self.domain => Ok(self.clone()),
            None => Err(AffineError::DimensionMismatch { expected: self.in_dims(), found: domain.dims() }),
        }
    }

    pub fn image(&self) -> Result<ImageSet, AffineError> {
        self.image_with(&Limits::default())
    }

    pub fn image_with(&self, limits: &Limits) -> Result<ImageSet, AffineError> {
        if let Some(es) = self.exprs() {
            match self.class {
                StructuralClass::PermShift | StructuralClass::MixedRadix if !self.domain.is_empty() => {
                    return Ok(ImageSet::Box(bounds_box(&self.output_bounds())?));
                }
                StructuralClass::StridedEmbed if !self.domain.is_empty() => {
                    let strides = es
                        .iter()
                        .map(|e| e.single_var().map(|(_, c, _)| c.abs()).unwrap_or(1))
                        .collect();
                    return Ok(ImageSet::Lattice { bounds: bounds_box(&self.output_bounds())?, strides });
                }
                _ => {}
            }
        }
        let card = self.domain.cardinality();
        if card > limits.tabulation {
            return Err(AffineError::DomainTooLarge { points: card, limit: limits.tabulation });
        }
        let mut points = BTreeSet::new();
        let mut out = vec![0; self.out_dims()];
        self.domain.for_each_point(|p| {
            self.evaluate_into(p, &mut out);
            points.insert(out.clone());
        });
        Ok(ImageSet::Points { dims: self.out_dims(), points })
    }
}

pub fn compose(outer: &QuasiAffineMap, inner: &QuasiAffineMap) -> Result<QuasiAffineMap, AffineError> {
    outer.compose(inner)
}

pub fn classify(map: &QuasiAffineMap) -> Classification {
    Classification { class: map.class(), pure_affine: map.is_pure_affine() }
}

pub(crate) fn bounds_box(bounds: &[(i64, i64)]) -> Result<IntBox, AffineError> {
    IntBox::new(bounds.iter().map(|&(l, h)| (l, h + 1)))
}

fn check_image_within(inner: &QuasiAffineMap, target: &IntBox, limits: &Limits) -> Result<(), AffineError> {
    if inner.domain.is_empty() {
        return Ok(());
    }
    let bounds = inner.output_bounds();
    let within = bounds
        .iter()
        .enumerate()
        .all(|(k, &(l, h))| target.lo(k) <= l && h < target.hi(k));
    if within {
        return Ok(());
    }
    let card = inner.domain.cardinality();
    if card > limits.tabulation {
        return Err(AffineError::DomainTooLarge { points: card, limit: limits.tabulation });
    }
    let mut out = vec![0; inner.out_dims()];
    let mut escape = None;
    inner.domain.for_each_point(|p| {
        if escape.is_none() {
            inner.evaluate_into(p, &mut out);
            if !target.contains(&out) {
                escape = Some((p.to_vec(), out.clone()));
            }
        }
    });
    match escape {
        None => Ok(()),
        Some((point, image)) => Err(AffineError::ImageEscapesDomain { point, image }),
    }
}

/// `Some((perm, strides, offsets))` when every output is `s·i_π(k) + b`
/// with π a permutation of the domain dimensions.
pub(crate) fn per_axis_form(n: usize, exprs: &[QuasiAffineExpr]) -> Option<(Vec<usize>, Vec<i64>, Vec<i64>)> {
    if exprs.len() != n {
        return None;
    }
    let mut seen = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    let mut strides = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    for e in exprs {
        let (j, c, b) = e.single_var()?;
        if seen[j] {
            return None;
        }
        seen[j] = true;
        perm.push(j);
        strides.push(c);
        offsets.push(b);
    }
    Some((perm, strides, offsets))
}

/// Row-major strides of a box with the given extents.
pub(crate) fn row_major_strides(extents: &[i64]) -> Vec<i64> {
    let mut s = vec![1; extents.len()];
    for k in (0..extents.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * extents[k + 1];
    }
    s
}

/// Mixed-radix structure: the row-major linearisation of the outputs over
/// their bounding box is a linear function of the domain whose coefficients
/// form a radix system. Returns `(output box, linearisation coefficients)`.
pub(crate) fn mixed_radix_form(domain: &IntBox, exprs: &[QuasiAffineExpr]) -> Option<(IntBox, LinearExpr)> {
    if domain.is_empty() || exprs.is_empty() {
        return None;
    }
    let n = domain.dims();
    let bounds: Vec<(i64, i64)> = exprs.iter().map(|e| e.range(domain)).collect();
    let out_box = bounds_box(&bounds).ok()?;
    let strides = row_major_strides(&out_box.extents());
    let total = out_box.cardinality() as i64;

    let mut lin = QuasiAffineExpr::zero(n);
    for ((e, &s), &(lo, _)) in exprs.iter().zip(&strides).zip(&bounds) {
        lin = lin.add_scaled(&e.plus_constant(-lo), s);
    }
    let lin = lin.simplified_on(domain).as_linear()?.clone();

    let mut dims: Vec<usize> = (0..n).filter(|&j| domain.extent(j) > 1).collect();
    if dims.iter().any(|&j| lin.coeffs[j] <= 0) {
        return None;
    }
    dims.sort_by_key(|&j| lin.coeffs[j]);
    let mut expected = 1i64;
    for &j in &dims {
        if lin.coeffs[j] != expected {
            return None;
        }
        expected = expected.checked_mul(domain.extent(j))?;
    }
    let min: i64 = (0..n).map(|j| lin.coeffs[j] * domain.lo(j)).sum::<i64>() + lin.constant;
    (expected == total && min == 0).then_some((out_box, lin))
}

fn classify_exprs(domain: &IntBox, exprs: &[QuasiAffineExpr]) -> StructuralClass {
    let n = domain.dims();
    if let Some((_, strides, _)) = per_axis_form(n, exprs) {
        return if strides.iter().all(|s| s.abs() == 1) {
            StructuralClass::PermShift
        } else {
            StructuralClass::StridedEmbed
        };
    }
    if mixed_radix_form(domain, exprs).is_some() {
        return StructuralClass::MixedRadix;
    }
    StructuralClass::General
}

impl fmt::Display for QuasiAffineMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exprs() {
            Some(es) => {
                write!(f, "[")?;
                for (k, e) in es.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "] on {}", self.domain)
            }
            None => write!(f, "<table {}→{}> on {}", self.in_dims(), self.out_dims(), self.domain),
        }
    }
}
