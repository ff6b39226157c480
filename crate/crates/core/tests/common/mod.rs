//! Shared generators for integration tests.
#![allow(dead_code)]

use memopt::affine::{IntBox, LinearExpr, QuasiAffineExpr, QuasiAffineMap, StructuralClass};
use rand::seq::SliceRandom;
use rand::Rng;

pub const CLASSES: [StructuralClass; 4] =
    [StructuralClass::PermShift, StructuralClass::StridedEmbed, StructuralClass::MixedRadix, StructuralClass::General];

/// Box of rank 1..=3 with at most `max_points` points and random offsets.
pub fn random_box(rng: &mut impl Rng, max_points: u64) -> IntBox {
    loop {
        let rank = rng.gen_range(1..=3);
        let bounds: Vec<(i64, i64)> = (0..rank)
            .map(|_| {
                let lo = if rng.gen_bool(0.3) { rng.gen_range(-5..=5) } else { 0 };
                (lo, lo + rng.gen_range(1..=24))
            })
            .collect();
        let b = IntBox::new(bounds).expect("valid box");
        if b.cardinality() <= max_points {
            return b;
        }
    }
}

fn shuffled(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// `±i_π(k)·s_k + b_k`; strides of magnitude 1 when `strided` is false.
fn per_axis(rng: &mut impl Rng, dom: &IntBox, strided: bool) -> QuasiAffineMap {
    let n = dom.dims();
    let perm = shuffled(rng, n);
    let widen = if strided { rng.gen_range(0..n) } else { n };
    let exprs = perm
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let mag = if k == widen { rng.gen_range(2..=4) } else if strided { rng.gen_range(1..=3) } else { 1 };
            let s = if rng.gen_bool(0.3) { -mag } else { mag };
            QuasiAffineExpr::var(n, j).scaled(s).plus_constant(rng.gen_range(-6..=6))
        })
        .collect();
    QuasiAffineMap::new(dom.clone(), exprs).expect("arity")
}

/// Row-major relinearisation of a zero-based box onto a regrouped shape.
fn mixed_radix(rng: &mut impl Rng, max_points: u64) -> QuasiAffineMap {
    let dom = loop {
        let b = random_box(rng, max_points);
        let ext = b.extents();
        if ext.iter().all(|&e| e > 0) {
            break IntBox::from_extents(&ext).expect("box");
        }
    };
    let n = dom.dims();
    let ext = dom.extents();
    let total: i64 = ext.iter().product();
    let mut lin = LinearExpr::zero(n);
    let mut stride = 1;
    for j in (0..n).rev() {
        lin.add_scaled(&LinearExpr::var(n, j), stride);
        stride *= ext[j];
    }
    // target shape: split the total into factors
    let mut shape = Vec::new();
    let mut rest = total;
    while shape.len() < 2 && rest > 1 {
        let divisors: Vec<i64> = (2..=rest).filter(|d| rest % d == 0).collect();
        let d = *divisors.choose(rng).expect("rest > 1");
        shape.push(d);
        rest /= d;
    }
    if rest > 1 || shape.is_empty() {
        shape.push(rest);
    }
    // place[k] = product of shape[k+1..]
    let m = shape.len();
    let mut place = vec![1; m];
    for k in (0..m.saturating_sub(1)).rev() {
        place[k] = place[k + 1] * shape[k + 1];
    }
    let exprs = (0..m)
        .map(|k| {
            let q = if place[k] == 1 { QuasiAffineExpr::from_linear(lin.clone()) } else { QuasiAffineExpr::floordiv(lin.clone(), place[k]) };
            if k == 0 {
                q
            } else if place[k] == 1 {
                QuasiAffineExpr::modulo(lin.clone(), shape[k])
            } else {
                q.add_scaled(&QuasiAffineExpr::floordiv(lin.clone(), place[k] * shape[k]), -shape[k])
            }
        })
        .collect();
    QuasiAffineMap::new(dom, exprs).expect("arity")
}

/// Small dense matrices plus occasional floordiv and mod terms.
fn general(rng: &mut impl Rng, dom: &IntBox) -> QuasiAffineMap {
    let n = dom.dims();
    let outs = rng.gen_range(1..=3);
    let exprs = (0..outs)
        .map(|_| {
            let coeffs: Vec<i64> = (0..n).map(|_| rng.gen_range(-3..=3)).collect();
            let lin = LinearExpr::new(coeffs, rng.gen_range(-4..=4));
            match rng.gen_range(0..4) {
                0 => QuasiAffineExpr::floordiv(lin, rng.gen_range(2..=5)),
                1 => QuasiAffineExpr::modulo(lin, rng.gen_range(2..=5)),
                2 => QuasiAffineExpr::floordiv(lin.clone(), 3).add(&QuasiAffineExpr::from_linear(lin)),
                _ => QuasiAffineExpr::from_linear(lin),
            }
        })
        .collect();
    QuasiAffineMap::new(dom.clone(), exprs).expect("arity")
}

/// A map built to land in `class` (the classifier has the final word;
/// degenerate draws may classify more specifically).
pub fn map_of_class(rng: &mut impl Rng, class: StructuralClass, max_points: u64) -> QuasiAffineMap {
    match class {
        StructuralClass::PermShift | StructuralClass::StridedEmbed => {
            let dom = random_box(rng, max_points);
            per_axis(rng, &dom, class == StructuralClass::StridedEmbed)
        }
        StructuralClass::MixedRadix => mixed_radix(rng, max_points),
        StructuralClass::General => {
            let dom = random_box(rng, max_points);
            general(rng, &dom)
        }
    }
}

/// Outer map defined on the bounding box of `inner`'s outputs.
pub fn outer_for(rng: &mut impl Rng, inner: &QuasiAffineMap) -> QuasiAffineMap {
    let bounds: Vec<(i64, i64)> = inner.output_bounds().into_iter().map(|(lo, hi)| (lo, hi + 1)).collect();
    let dom = IntBox::new(bounds).expect("bounds box");
    let class = *CLASSES.choose(rng).expect("nonempty");
    match class {
        StructuralClass::General => general(rng, &dom),
        _ => per_axis(rng, &dom, class == StructuralClass::StridedEmbed),
    }
}
