use std::borrow::Cow;

use crate::affine::QuasiAffineMap;
use crate::ir::{BankMapping, OperatorNest, Statement};

/// Why a mapping cannot be carried through a nest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocked(pub String);

/// Every access of `tensor` in `nest`. A memcopy writes its destination
/// through the identity.
pub(crate) fn accesses<'a>(nest: &'a OperatorNest, tensor: &str) -> Vec<Cow<'a, QuasiAffineMap>> {
    let mut out = Vec::new();
    for s in &nest.body {
        match s {
            Statement::Load { tensor: t, access, .. } | Statement::Store { tensor: t, access, .. } if t == tensor => {
                out.push(Cow::Borrowed(access))
            }
            Statement::Memcopy { src, map, .. } if src == tensor => out.push(Cow::Borrowed(map)),
            Statement::Memcopy { dst, .. } if dst == tensor => {
                out.push(Cow::Owned(QuasiAffineMap::identity(nest.domain.clone())))
            }
            _ => {}
        }
    }
    out
}

/// Loop dimension driving `axis` with unit stride in every access.
fn driving_loop(maps: &[Cow<'_, QuasiAffineMap>], axis: usize) -> Option<usize> {
    let mut found = None;
    for m in maps {
        let e = m.exprs()?.get(axis)?;
        let (j, c, _) = e.single_var()?;
        if c.abs() != 1 || found.is_some_and(|f| f != j) {
            return None;
        }
        found = Some(j);
    }
    found
}

/// Carries `mapping` of tensor `from` to tensor `to` through an unanchored
/// nest: the banked axis of `from` is traced to its loop dimension and then
/// to the single axis of `to` that dimension drives.
pub fn transfer(mapping: BankMapping, nest: &OperatorNest, from: &str, to: &str) -> Result<BankMapping, Blocked> {
    let src = accesses(nest, from);
    let dst = accesses(nest, to);
    if src.is_empty() || dst.is_empty() {
        return Err(Blocked(format!("nest {} does not access both %{from} and %{to}", nest.name)));
    }
    let j = driving_loop(&src, mapping.axis).ok_or_else(|| {
        Blocked(format!("axis {} of %{from} is not driven by one unit-stride loop in {}", mapping.axis, nest.name))
    })?;
    let rank = dst[0].out_dims();
    let candidates: Vec<usize> = (0..rank).filter(|&k| driving_loop(&dst, k) == Some(j)).collect();
    let [k] = candidates[..] else {
        return Err(Blocked(format!("loop i{j} of {} drives {} axes of %{to}", nest.name, candidates.len())));
    };
    let mixed = dst.iter().any(|m| {
        m.exprs().is_some_and(|es| es.iter().enumerate().any(|(a, e)| a != k && e.uses_var(j)))
    });
    if mixed {
        return Err(Blocked(format!("loop i{j} of {} is mixed into other axes of %{to}", nest.name)));
    }
    Ok(BankMapping { axis: k, ..mapping })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;
    use crate::ir::Policy;

    fn nest(body: &str, loops: &str) -> OperatorNest {
        let src = format!("nest n kind=copy ({loops}) {{\n{body}\n}}\n");
        parse(&src).unwrap().nests.remove(0)
    }

    const AX0: BankMapping = BankMapping { axis: 0, banks: 4, policy: Policy::Cyclic };

    #[test]
    fn identity_keeps_axis() {
        let n = nest("%a = load %x[i0, i1]\n%b = neg %a\nstore %y[i0, i1] = %b", "i0 in 0..2, i1 in 0..3");
        let m = BankMapping { axis: 1, ..AX0 };
        assert_eq!(transfer(m, &n, "x", "y"), Ok(m));
    }

    #[test]
    fn transpose_swaps_axis() {
        let n = nest("%a = load %x[i0, i1]\nstore %y[i1, i0] = %a", "i0 in 0..2, i1 in 0..3");
        assert_eq!(transfer(AX0, &n, "x", "y").unwrap().axis, 1);
        assert_eq!(transfer(AX0, &n, "y", "x").unwrap().axis, 1);
    }

    #[test]
    fn flatten_blocks() {
        let n = nest("%a = load %x[i0, i1]\nstore %y[4*i0 + i1] = %a", "i0 in 0..3, i1 in 0..4");
        assert!(transfer(AX0, &n, "x", "y").is_err());
    }

    #[test]
    fn stride_and_dropped_dims_block() {
        let n = nest("%a = load %x[2*i0, i1]\nstore %y[i0, i1] = %a", "i0 in 0..2, i1 in 0..3");
        assert!(transfer(AX0, &n, "x", "y").is_err());
        assert!(transfer(AX0, &n, "y", "x").is_err());
        let n = nest("%a = load %x[i1]\nstore %y[i0, i1] = %a", "i0 in 0..2, i1 in 0..3");
        assert!(transfer(AX0, &n, "y", "x").is_err());
        assert_eq!(transfer(AX0, &n, "x", "y").unwrap().axis, 1);
    }
}
