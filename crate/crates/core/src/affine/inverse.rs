//! Map reversal: symbolic inverses for the structural normal forms,
//! point tables for small general maps.

use std::collections::{BTreeMap, BTreeSet};

use super::domain::ImageSet;
use super::expr::{LinearExpr, QuasiAffineExpr};
use super::map::{bounds_box, mixed_radix_form, per_axis_form, row_major_strides, QuasiAffineMap, StructuralClass};
use super::Limits;

/// Explicit inverse over a finite image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointTable {
    pub entries: BTreeMap<Vec<i64>, Vec<i64>>,
}

impl PointTable {
    pub fn lookup(&self, point: &[i64]) -> Option<&[i64]> {
        self.entries.get(point).map(Vec::as_slice)
    }

    pub fn image(&self) -> ImageSet {
        let dims = self.entries.keys().next().map_or(0, Vec::len);
        ImageSet::Points { dims, points: self.entries.keys().cloned().collect::<BTreeSet<_>>() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InverseResult {
    /// `map` is defined on the bounding box of `image`; it inverts the
    /// original map on the points of `image`.
    Symbolic { map: QuasiAffineMap, image: ImageSet },
    Tabulated(PointTable),
    NotInvertible(String),
}

impl InverseResult {
    /// Applies the inverse to a point of the image.
    pub fn apply(&self, point: &[i64]) -> Option<Vec<i64>> {
        match self {
            InverseResult::Symbolic { map, image } => {
                if image.contains(point) {
                    map.evaluate(point).ok()
                } else {
                    None
                }
            }
            InverseResult::Tabulated(t) => t.lookup(point).map(<[i64]>::to_vec),
            InverseResult::NotInvertible(_) => None,
        }
    }

    pub fn image(&self) -> Option<ImageSet> {
        match self {
            InverseResult::Symbolic { image, .. } => Some(image.clone()),
            InverseResult::Tabulated(t) => Some(t.image()),
            InverseResult::NotInvertible(_) => None,
        }
    }

    pub fn is_invertible(&self) -> bool {
        !matches!(self, InverseResult::NotInvertible(_))
    }
}

impl QuasiAffineMap {
    pub fn reverse(&self) -> InverseResult {
        self.reverse_with(&Limits::default())
    }

    pub fn reverse_with(&self, limits: &Limits) -> InverseResult {
        if !self.domain().is_empty() {
            if let Some(inv) = self.symbolic_inverse() {
                return inv;
            }
        }
        self.tabulate_inverse(limits)
    }

    fn symbolic_inverse(&self) -> Option<InverseResult> {
        let exprs = self.exprs()?;
        let dom = self.domain();
        let n = dom.dims();
        match self.class() {
            StructuralClass::PermShift | StructuralClass::StridedEmbed => {
                let (perm, strides, offsets) = per_axis_form(n, exprs)?;
                let bounds = self.output_bounds();
                let inv_box = bounds_box(&bounds).ok()?;
                let mut inv = vec![QuasiAffineExpr::zero(n); n];
                for k in 0..n {
                    let (s, b) = (strides[k], offsets[k]);
                    // i = (x - b) / s, exact on the image lattice
                    let inner = if s > 0 {
                        LinearExpr::new(unit(n, k, 1), -b)
                    } else {
                        LinearExpr::new(unit(n, k, -1), b)
                    };
                    inv[perm[k]] = QuasiAffineExpr::floordiv(inner, s.abs());
                }
                let image = if self.class() == StructuralClass::PermShift {
                    ImageSet::Box(inv_box.clone())
                } else {
                    ImageSet::Lattice { bounds: inv_box.clone(), strides: strides.iter().map(|s| s.abs()).collect() }
                };
                let map = QuasiAffineMap::new(inv_box, inv).ok()?;
                Some(InverseResult::Symbolic { map, image })
            }
            StructuralClass::MixedRadix => {
                let (out_box, lin) = mixed_radix_form(dom, exprs)?;
                let m = out_box.dims();
                let strides = row_major_strides(&out_box.extents());
                // Λ(x) = Σ S_k (x_k - lo_k): position of x in the output box
                let mut pos = LinearExpr::zero(m);
                pos.coeffs.copy_from_slice(&strides);
                for (k, s) in strides.iter().enumerate() {
                    pos.constant -= s * out_box.lo(k);
                }
                let inv = (0..n)
                    .map(|j| {
                        let e = dom.extent(j);
                        if e == 1 {
                            return QuasiAffineExpr::constant(m, dom.lo(j));
                        }
                        // lin(p) = pos(f(p)) = Σ c_j (p_j - lo_j), so p_j - lo_j is
                        // digit j of pos(x) in the domain's radix system.
                        digit_expr(&pos, lin.coeffs[j], e).plus_constant(dom.lo(j))
                    })
                    .collect();
                let map = QuasiAffineMap::new(out_box.clone(), inv).ok()?;
                Some(InverseResult::Symbolic { map, image: ImageSet::Box(out_box) })
            }
            StructuralClass::General => None,
        }
    }

    fn tabulate_inverse(&self, limits: &Limits) -> InverseResult {
        let card = self.domain().cardinality();
        if card > limits.tabulation {
            return InverseResult::NotInvertible(format!(
                "domain of {card} points exceeds the tabulation limit of {}",
                limits.tabulation
            ));
        }
        let mut entries: BTreeMap<Vec<i64>, Vec<i64>> = BTreeMap::new();
        let mut out = vec![0; self.out_dims()];
        let mut collision = None;
        self.domain().for_each_point(|p| {
            if collision.is_some() {
                return;
            }
            self.evaluate_into(p, &mut out);
            if let Some(prev) = entries.get(&out) {
                collision = Some(format!("f({prev:?}) = f({p:?}) = {out:?}"));
            } else {
                entries.insert(out.clone(), p.to_vec());
            }
        });
        match collision {
            Some(msg) => InverseResult::NotInvertible(format!("not injective: {msg}")),
            None => InverseResult::Tabulated(PointTable { entries }),
        }
    }
}

fn unit(n: usize, k: usize, v: i64) -> Vec<i64> {
    let mut c = vec![0; n];
    c[k] = v;
    c
}

/// `floor(x / c) mod e` written as `floor(x/c) - e·floor(x/(c·e))`.
fn digit_expr(x: &LinearExpr, c: i64, e: i64) -> QuasiAffineExpr {
    QuasiAffineExpr::floordiv(x.clone(), c).add_scaled(&QuasiAffineExpr::floordiv(x.clone(), c * e), -e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::IntBox;

    fn bx(ext: &[i64]) -> IntBox {
        IntBox::from_extents(ext).unwrap()
    }

    fn round_trips(f: &QuasiAffineMap) -> bool {
        let inv = f.reverse();
        f.domain().points().all(|p| inv.apply(&f.evaluate(&p).unwrap()) == Some(p))
    }

    #[test]
    fn mixed_radix_inverse_of_flatten() {
        let f = QuasiAffineMap::affine(bx(&[3, 4]), &[vec![4, 1]], &[0]).unwrap();
        assert_eq!(f.class(), StructuralClass::MixedRadix);
        let inv = f.reverse();
        let InverseResult::Symbolic { map, image } = &inv else { panic!("{inv:?}") };
        assert_eq!(image, &ImageSet::Box(bx(&[12])));
        assert_eq!(map.to_string(), "[(i0) floordiv 4, (i0) mod 4] on [0..12]");
        assert!(round_trips(&f));
    }

    #[test]
    fn mixed_radix_with_offset_domain() {
        let dom = IntBox::new([(2, 5), (1, 3)]).unwrap();
        // (i0-2)*2 + (i1-1) + 7
        let f = QuasiAffineMap::affine(dom, &[vec![2, 1]], &[2]).unwrap();
        assert_eq!(f.class(), StructuralClass::MixedRadix);
        assert!(round_trips(&f));
    }

    #[test]
    fn tabulated_inverse_for_general_bijection() {
        // [i0 + i1, i1] is a shear: bijective but not a normal form.
        let f = QuasiAffineMap::affine(bx(&[3, 3]), &[vec![1, 1], vec![0, 1]], &[0, 0]).unwrap();
        assert_eq!(f.class(), StructuralClass::General);
        assert!(matches!(f.reverse(), InverseResult::Tabulated(_)));
        assert!(round_trips(&f));
    }

    #[test]
    fn tabulation_limit_refuses() {
        let f = QuasiAffineMap::affine(bx(&[3, 3]), &[vec![1, 1], vec![0, 1]], &[0, 0]).unwrap();
        let r = f.reverse_with(&Limits { tabulation: 4 });
        assert!(matches!(r, InverseResult::NotInvertible(_)));
    }
}
