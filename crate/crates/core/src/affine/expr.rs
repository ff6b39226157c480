//! Quasi-affine expressions: linear forms plus weighted floor-division terms
//! whose inner expression is linear (nesting depth one).
//!
//! The stored representation only uses `floordiv`; `x mod d` is kept as
//! `x - d·(x floordiv d)` and re-sugared by the printer.

use std::cmp::Ordering;
use std::fmt;

use super::domain::IntBox;

/// `Σ coeffs[j]·i_j + constant`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinearExpr {
    pub coeffs: Vec<i64>,
    pub constant: i64,
}

impl LinearExpr {
    pub fn zero(dims: usize) -> Self {
        LinearExpr { coeffs: vec![0; dims], constant: 0 }
    }

    pub fn constant(dims: usize, c: i64) -> Self {
        LinearExpr { coeffs: vec![0; dims], constant: c }
    }

    pub fn var(dims: usize, j: usize) -> Self {
        let mut e = Self::zero(dims);
        e.coeffs[j] = 1;
        e
    }

    pub fn new(coeffs: Vec<i64>, constant: i64) -> Self {
        LinearExpr { coeffs, constant }
    }

    pub fn dims(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, point: &[i64]) -> i64 {
        self.coeffs.iter().zip(point).map(|(c, x)| c * x).sum::<i64>() + self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    /// `Some((j, c))` when exactly one coefficient is non-zero.
    pub fn single_var(&self) -> Option<(usize, i64)> {
        let mut found = None;
        for (j, &c) in self.coeffs.iter().enumerate() {
            if c != 0 {
                if found.is_some() {
                    return None;
                }
                found = Some((j, c));
            }
        }
        found
    }

    pub fn scaled(&self, k: i64) -> Self {
        LinearExpr {
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
            constant: self.constant * k,
        }
    }

    pub fn add_scaled(&mut self, other: &LinearExpr, k: i64) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * k;
        }
        self.constant += other.constant * k;
    }

    /// Inclusive value range over a non-empty box.
    pub fn range(&self, bx: &IntBox) -> (i64, i64) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for (j, &c) in self.coeffs.iter().enumerate() {
            let (a, b) = (bx.lo(j), bx.hi(j) - 1);
            if c >= 0 {
                lo += c * a;
                hi += c * b;
            } else {
                lo += c * b;
                hi += c * a;
            }
        }
        (lo, hi)
    }
}

/// `weight · floor(inner / divisor)` with `divisor > 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DivTerm {
    pub weight: i64,
    pub inner: LinearExpr,
    pub divisor: i64,
}

impl DivTerm {
    fn key_cmp(&self, other: &DivTerm) -> Ordering {
        (&self.inner, self.divisor).cmp(&(&other.inner, other.divisor))
    }

    fn eval(&self, point: &[i64]) -> i64 {
        self.weight * self.inner.eval(point).div_euclid(self.divisor)
    }
}

/// A quasi-affine expression over `dims` loop variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuasiAffineExpr {
    linear: LinearExpr,
    terms: Vec<DivTerm>,
}

/// Result of substituting into a floordiv whose inner expression picks up
/// a div term of its own and cannot be flattened back to depth one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NestingTooDeep;

impl QuasiAffineExpr {
    pub fn from_linear(linear: LinearExpr) -> Self {
        QuasiAffineExpr { linear, terms: Vec::new() }
    }

    pub fn zero(dims: usize) -> Self {
        Self::from_linear(LinearExpr::zero(dims))
    }

    pub fn constant(dims: usize, c: i64) -> Self {
        Self::from_linear(LinearExpr::constant(dims, c))
    }

    pub fn var(dims: usize, j: usize) -> Self {
        Self::from_linear(LinearExpr::var(dims, j))
    }

    /// `floor(inner / divisor)`. Panics if `divisor <= 0`.
    pub fn floordiv(inner: LinearExpr, divisor: i64) -> Self {
        assert!(divisor > 0, "floordiv divisor must be positive");
        let dims = inner.dims();
        let mut e = Self::zero(dims);
        e.push_term(1, inner, divisor);
        e.normalized()
    }

    /// `inner mod divisor`, always in `[0, divisor)`. Panics if `divisor <= 0`.
    pub fn modulo(inner: LinearExpr, divisor: i64) -> Self {
        assert!(divisor > 0, "mod divisor must be positive");
        let mut e = Self::from_linear(inner.clone());
        e.push_term(-divisor, inner, divisor);
        e.normalized()
    }

    pub fn dims(&self) -> usize {
        self.linear.dims()
    }

    pub fn linear(&self) -> &LinearExpr {
        &self.linear
    }

    pub fn terms(&self) -> &[DivTerm] {
        &self.terms
    }

    /// Purely linear (no floordiv/mod).
    pub fn as_linear(&self) -> Option<&LinearExpr> {
        self.terms.is_empty().then_some(&self.linear)
    }

    pub fn eval(&self, point: &[i64]) -> i64 {
        self.linear.eval(point) + self.terms.iter().map(|t| t.eval(point)).sum::<i64>()
    }

    fn push_term(&mut self, weight: i64, inner: LinearExpr, divisor: i64) {
        self.terms.push(DivTerm { weight, inner, divisor });
    }

    pub fn add(&self, other: &QuasiAffineExpr) -> QuasiAffineExpr {
        self.add_scaled(other, 1)
    }

    pub fn add_scaled(&self, other: &QuasiAffineExpr, k: i64) -> QuasiAffineExpr {
        let mut out = self.clone();
        out.linear.add_scaled(&other.linear, k);
        for t in &other.terms {
            out.push_term(t.weight * k, t.inner.clone(), t.divisor);
        }
        out.normalized()
    }

    pub fn scaled(&self, k: i64) -> QuasiAffineExpr {
        QuasiAffineExpr::zero(self.dims()).add_scaled(self, k)
    }

    pub fn plus_constant(&self, c: i64) -> QuasiAffineExpr {
        let mut out = self.clone();
        out.linear.constant += c;
        out
    }

    /// Context-free canonical form: unit divisors and divisible inners are
    /// folded into the linear part, equal terms merged, zero weights dropped,
    /// terms sorted.
    pub fn normalized(mut self) -> Self {
        let mut kept: Vec<DivTerm> = Vec::with_capacity(self.terms.len());
        for t in std::mem::take(&mut self.terms) {
            if t.weight == 0 {
                continue;
            }
            if t.divisor == 1 {
                self.linear.add_scaled(&t.inner, t.weight);
                continue;
            }
            if t.inner.coeffs.iter().all(|c| c % t.divisor == 0) {
                // floor((d·Q + c) / d) = Q + floor(c / d)
                let mut q = LinearExpr::new(
                    t.inner.coeffs.iter().map(|c| c / t.divisor).collect(),
                    t.inner.constant.div_euclid(t.divisor),
                );
                q = q.scaled(t.weight);
                self.linear.add_scaled(&q, 1);
                continue;
            }
            kept.push(t);
        }
        kept.sort_by(|a, b| a.key_cmp(b));
        let mut merged: Vec<DivTerm> = Vec::with_capacity(kept.len());
        for t in kept {
            match merged.last_mut() {
                Some(last) if last.key_cmp(&t) == Ordering::Equal => last.weight += t.weight,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.weight != 0);
        self.terms = merged;
        self
    }

    /// Removes div terms that are constant over `bx`, directly or after
    /// pulling whole multiples of the divisor out of the inner expression.
    pub fn simplified_on(&self, bx: &IntBox) -> QuasiAffineExpr {
        if bx.is_empty() {
            return self.clone();
        }
        let mut out = QuasiAffineExpr::from_linear(self.linear.clone());
        for t in &self.terms {
            let (lo, hi) = t.inner.range(bx);
            let d = t.divisor;
            if lo.div_euclid(d) == hi.div_euclid(d) {
                out.linear.constant += t.weight * lo.div_euclid(d);
                continue;
            }
            let quot = LinearExpr::new(
                t.inner.coeffs.iter().map(|c| c.div_euclid(d)).collect(),
                t.inner.constant.div_euclid(d),
            );
            let rem = LinearExpr::new(
                t.inner.coeffs.iter().map(|c| c.rem_euclid(d)).collect(),
                t.inner.constant.rem_euclid(d),
            );
            let (rlo, rhi) = rem.range(bx);
            if rlo.div_euclid(d) == rhi.div_euclid(d) {
                out.linear.add_scaled(&quot, t.weight);
                out.linear.constant += t.weight * rlo.div_euclid(d);
                continue;
            }
            out.terms.push(t.clone());
        }
        out.normalized()
    }

    /// Substitutes `subs[k]` for variable `k`. The substituted expressions
    /// range over `inner_box`, which is used to collapse div terms that
    /// become constant.
    pub fn substitute(
        &self,
        subs: &[QuasiAffineExpr],
        inner_box: &IntBox,
    ) -> Result<QuasiAffineExpr, NestingTooDeep> {
        assert_eq!(subs.len(), self.dims(), "substitution arity");
        let dims = inner_box.dims();
        let apply_linear = |l: &LinearExpr| -> QuasiAffineExpr {
            let mut acc = QuasiAffineExpr::constant(dims, l.constant);
            for (k, &c) in l.coeffs.iter().enumerate() {
                if c != 0 {
                    acc = acc.add_scaled(&subs[k], c);
                }
            }
            acc.simplified_on(inner_box)
        };

        let mut out = apply_linear(&self.linear);
        for t in &self.terms {
            let inner = apply_linear(&t.inner);
            let flat = flatten_floordiv(inner, t.divisor).ok_or(NestingTooDeep)?;
            out = out.add_scaled(&flat, t.weight);
        }
        Ok(out.simplified_on(inner_box))
    }

    /// Inclusive value range over a non-empty box. Recognises the
    /// `x mod d` and `(x floordiv d) mod e` shapes so digit extraction gets
    /// tight bounds; everything else uses monotone interval arithmetic.
    pub fn range(&self, bx: &IntBox) -> (i64, i64) {
        let mut linear = self.linear.clone();
        let mut pending: Vec<&DivTerm> = self.terms.iter().collect();
        let (mut lo, mut hi) = (0i64, 0i64);

        // a·X - a·d·floor(X/d) = a·(X mod d)
        let mut i = 0;
        while i < pending.len() {
            let t = pending[i];
            if t.weight % t.divisor == 0 {
                let a = -t.weight / t.divisor;
                let matches = a != 0
                    && t.inner.coeffs.iter().zip(&linear.coeffs).all(|(&x, &l)| x == 0 || l == a * x);
                if matches {
                    let (xl, xh) = t.inner.range(bx);
                    let (ml, mh) = if xl.div_euclid(t.divisor) == xh.div_euclid(t.divisor) {
                        (xl.rem_euclid(t.divisor), xh.rem_euclid(t.divisor))
                    } else {
                        (0, t.divisor - 1)
                    };
                    let (a_lo, a_hi) = scale_range(a, ml, mh);
                    lo += a_lo;
                    hi += a_hi;
                    linear.add_scaled(&t.inner, -a);
                    pending.remove(i);
                    continue;
                }
            }
            i += 1;
        }

        // w·floor(X/d) - w·e·floor(X/(d·e)) = w·(floor(X/d) mod e)
        let mut i = 0;
        'outer: while i < pending.len() {
            let t = pending[i];
            for j in 0..pending.len() {
                let u = pending[j];
                if j == i || u.inner != t.inner || u.divisor % t.divisor != 0 {
                    continue;
                }
                let e = u.divisor / t.divisor;
                if e > 1 && u.weight == -e * t.weight {
                    let (xl, xh) = t.inner.range(bx);
                    let (yl, yh) = (xl.div_euclid(t.divisor), xh.div_euclid(t.divisor));
                    let (ml, mh) = if yl.div_euclid(e) == yh.div_euclid(e) {
                        (yl.rem_euclid(e), yh.rem_euclid(e))
                    } else {
                        (0, e - 1)
                    };
                    let (a_lo, a_hi) = scale_range(t.weight, ml, mh);
                    lo += a_lo;
                    hi += a_hi;
                    let (first, second) = if i < j { (j, i) } else { (i, j) };
                    pending.remove(first);
                    pending.remove(second);
                    i = 0;
                    continue 'outer;
                }
            }
            i += 1;
        }

        for t in pending {
            let (xl, xh) = t.inner.range(bx);
            let (a_lo, a_hi) = scale_range(t.weight, xl.div_euclid(t.divisor), xh.div_euclid(t.divisor));
            lo += a_lo;
            hi += a_hi;
        }
        let (l_lo, l_hi) = linear.range(bx);
        (lo + l_lo, hi + l_hi)
    }

    /// `(var, coefficient, offset)` for expressions of the form `c·i_j + b`.
    pub fn single_var(&self) -> Option<(usize, i64, i64)> {
        let lin = self.as_linear()?;
        let (j, c) = lin.single_var()?;
        Some((j, c, lin.constant))
    }

    /// Variables with a non-zero coefficient anywhere in the expression.
    pub fn uses_var(&self, j: usize) -> bool {
        self.linear.coeffs[j] != 0 || self.terms.iter().any(|t| t.inner.coeffs[j] != 0)
    }

    /// Splits the expression into its sugared view: `(a, X, d)` mod pieces,
    /// remaining floordiv terms, and the remaining linear part.
    pub(crate) fn sugared(&self) -> (Vec<(i64, LinearExpr, i64)>, Vec<DivTerm>, LinearExpr) {
        let mut linear = self.linear.clone();
        let mut mods = Vec::new();
        let mut divs = Vec::new();
        for t in &self.terms {
            if t.weight % t.divisor == 0 {
                let a = -t.weight / t.divisor;
                let nonzero = t.inner.coeffs.iter().any(|&x| x != 0);
                let matches = a != 0
                    && nonzero
                    && t.inner.coeffs.iter().zip(&linear.coeffs).all(|(&x, &l)| x == 0 || l == a * x);
                if matches {
                    linear.add_scaled(&t.inner, -a);
                    mods.push((a, t.inner.clone(), t.divisor));
                    continue;
                }
            }
            divs.push(t.clone());
        }
        (mods, divs, linear)
    }
}

fn scale_range(k: i64, lo: i64, hi: i64) -> (i64, i64) {
    if k >= 0 {
        (k * lo, k * hi)
    } else {
        (k * hi, k * lo)
    }
}

/// Rewrites `floor(inner / d)` as a depth-one expression when `inner`
/// carries div terms of its own.
fn flatten_floordiv(inner: QuasiAffineExpr, d: i64) -> Option<QuasiAffineExpr> {
    let dims = inner.dims();
    if inner.terms.is_empty() {
        let mut e = QuasiAffineExpr::zero(dims);
        e.push_term(1, inner.linear, d);
        return Some(e.normalized());
    }
    // floor((A + d·K + rest) / d) = K + floor((A + rest) / d)
    let mut out = QuasiAffineExpr::zero(dims);
    let mut rest = Vec::new();
    for t in inner.terms {
        if t.weight % d == 0 {
            out.push_term(t.weight / d, t.inner, t.divisor);
        } else {
            rest.push(t);
        }
    }
    let a = inner.linear;
    match rest.len() {
        0 => {
            out.push_term(1, a, d);
            Some(out.normalized())
        }
        1 => {
            // floor((v·floor(B/d1) + A) / d) with v | d and v | coeffs(A):
            //   = floor((floor(B/d1) + Z) / (d/v)),   Z = A/v with floored constant
            //   = floor((B + d1·Z) / (d1·d/v))
            let t = rest.pop().expect("one term");
            let v = t.weight;
            if v <= 0 || d % v != 0 || a.coeffs.iter().any(|c| c % v != 0) {
                return None;
            }
            let z = LinearExpr::new(a.coeffs.iter().map(|c| c / v).collect(), a.constant.div_euclid(v));
            let mut merged = t.inner.clone();
            merged.add_scaled(&z, t.divisor);
            out.push_term(1, merged, t.divisor * (d / v));
            Some(out.normalized())
        }
        _ => None,
    }
}

impl fmt::Display for QuasiAffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (mods, divs, linear) = self.sugared();
        let mut first = true;
        let mut emit = |f: &mut fmt::Formatter<'_>, k: i64, body: &str| -> fmt::Result {
            let mag = k.unsigned_abs();
            let sign = if k < 0 { "-" } else { "+" };
            if first {
                if k < 0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            if mag == 1 {
                write!(f, "{body}")
            } else {
                write!(f, "{mag}*{body}")
            }
        };
        for (j, &c) in linear.coeffs.iter().enumerate() {
            if c != 0 {
                emit(f, c, &format!("i{j}"))?;
            }
        }
        for (a, x, d) in &mods {
            emit(f, *a, &format!("({}) mod {d}", LinearDisplay(x)))?;
        }
        for t in &divs {
            emit(f, t.weight, &format!("({}) floordiv {}", LinearDisplay(&t.inner), t.divisor))?;
        }
        let c = linear.constant;
        if first {
            write!(f, "{c}")
        } else if c > 0 {
            write!(f, " + {c}")
        } else if c < 0 {
            write!(f, " - {}", c.unsigned_abs())
        } else {
            Ok(())
        }
    }
}

struct LinearDisplay<'a>(&'a LinearExpr);

impl fmt::Display for LinearDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        QuasiAffineExpr::from_linear(self.0.clone()).fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(ext: &[i64]) -> IntBox {
        IntBox::from_extents(ext).unwrap()
    }

    #[test]
    fn floor_and_mod_round_toward_negative_infinity() {
        let q = QuasiAffineExpr::floordiv(LinearExpr::var(1, 0), 4);
        let r = QuasiAffineExpr::modulo(LinearExpr::var(1, 0), 4);
        assert_eq!(q.eval(&[-1]), -1);
        assert_eq!(r.eval(&[-1]), 3);
        assert_eq!(q.eval(&[-8]), -2);
        assert_eq!(r.eval(&[-8]), 0);
        assert_eq!(q.eval(&[7]), 1);
        assert_eq!(r.eval(&[7]), 3);
    }

    #[test]
    fn unit_divisor_folds() {
        let e = QuasiAffineExpr::floordiv(LinearExpr::new(vec![3], 1), 1);
        assert_eq!(e.as_linear(), Some(&LinearExpr::new(vec![3], 1)));
        let m = QuasiAffineExpr::modulo(LinearExpr::new(vec![3], 1), 1);
        assert_eq!(m.as_linear(), Some(&LinearExpr::zero(1)));
    }

    #[test]
    fn divisible_inner_folds() {
        // floor((4x + 6)/2) = 2x + 3
        let e = QuasiAffineExpr::floordiv(LinearExpr::new(vec![4], 6), 2);
        assert_eq!(e.as_linear(), Some(&LinearExpr::new(vec![2], 3)));
    }

    #[test]
    fn domain_simplification_drops_constant_terms() {
        // (4·i0 + i1) floordiv 4 on [0,3)×[0,4) is i0.
        let e = QuasiAffineExpr::floordiv(LinearExpr::new(vec![4, 1], 0), 4).simplified_on(&bx(&[3, 4]));
        assert_eq!(e.as_linear(), Some(&LinearExpr::var(2, 0)));
        let m = QuasiAffineExpr::modulo(LinearExpr::new(vec![4, 1], 0), 4).simplified_on(&bx(&[3, 4]));
        assert_eq!(m.as_linear(), Some(&LinearExpr::var(2, 1)));
    }

    #[test]
    fn display_sugars_mod() {
        let m = QuasiAffineExpr::modulo(LinearExpr::new(vec![4, 1], 0), 6);
        assert_eq!(m.to_string(), "(4*i0 + i1) mod 6");
        let q = QuasiAffineExpr::floordiv(LinearExpr::new(vec![1, 0], -1), 2).scaled(3).plus_constant(2);
        assert_eq!(q.to_string(), "3*(i0 - 1) floordiv 2 + 2");
        assert_eq!(QuasiAffineExpr::zero(2).to_string(), "0");
        assert_eq!(QuasiAffineExpr::var(2, 1).scaled(-1).plus_constant(-5).to_string(), "-i1 - 5");
    }

    #[test]
    fn range_is_tight_for_digits() {
        // floor(x/4) mod 3 on [0,24)
        let digit = QuasiAffineExpr::floordiv(LinearExpr::var(1, 0), 4)
            .add_scaled(&QuasiAffineExpr::floordiv(LinearExpr::var(1, 0), 12), -3);
        assert_eq!(digit.range(&bx(&[24])), (0, 2));
        let m = QuasiAffineExpr::modulo(LinearExpr::var(1, 0), 5);
        assert_eq!(m.range(&bx(&[24])), (0, 4));
        assert_eq!(m.range(&bx(&[3])), (0, 2));
    }

    #[test]
    fn nested_floordiv_flattens() {
        // floor(floor(x/4)/3) = floor(x/12)
        let b = bx(&[100]);
        let outer = QuasiAffineExpr::floordiv(LinearExpr::var(1, 0), 3);
        let sub = [QuasiAffineExpr::floordiv(LinearExpr::var(1, 0), 4)];
        let r = outer.substitute(&sub, &b).unwrap();
        for x in 0..100 {
            assert_eq!(r.eval(&[x]), (x / 4) / 3);
        }
        assert_eq!(r.terms().len(), 1);
        assert_eq!(r.terms()[0].divisor, 12);
    }

    #[test]
    fn unflattenable_nesting_is_reported() {
        // floor((x mod 4 + y mod 3) / 5) has two inner div terms.
        let b = bx(&[20, 20]);
        let outer = QuasiAffineExpr::floordiv(LinearExpr::new(vec![1, 1], 0), 5);
        let sub = [
            QuasiAffineExpr::modulo(LinearExpr::var(2, 0), 4),
            QuasiAffineExpr::modulo(LinearExpr::var(2, 1), 3),
        ];
        assert_eq!(outer.substitute(&sub, &b), Err(NestingTooDeep));
    }
}
