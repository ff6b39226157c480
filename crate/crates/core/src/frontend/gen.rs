//! Synthetic workloads.
//!
//! Activations are logically `[R, C]` (WaveNet analog, random DAGs) or
//! `[S, S, C]` channel-last (ResNet analog). A copy nest writes a tensor
//! whose layout differs from the logical one; consumers read it back
//! through a *view* that undoes the layout change.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affine::{IntBox, LinearExpr, QuasiAffineExpr, QuasiAffineMap};
use crate::ir::{Location, OpKind, Opcode, OperatorNest, Origin, Program, Statement, TensorDecl};

type Expr = QuasiAffineExpr;

fn var(n: usize, j: usize) -> Expr {
    Expr::var(n, j)
}

fn map(domain: &IntBox, exprs: Vec<Expr>) -> QuasiAffineMap {
    QuasiAffineMap::new(domain.clone(), exprs).expect("generator arity")
}

/// How a tensor's cells relate to the logical `[R, C]` activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    Canon,
    /// `[C, R]`
    Transposed,
    /// `[R/2, C]`, rows `2r` of the source.
    Subsampled,
    /// `[2R, C]`, two stacked copies.
    Repeated,
    /// `[R, 2C]`, two side-by-side copies.
    Tiled,
    /// `[R, C/2]`, left or right half.
    SplitLo,
    SplitHi,
    /// `[R·C]`
    Flat,
    /// `[R/2, 2C]`, row pairs joined.
    Reshaped,
}

impl View {
    /// Access of logical cell `(row, col)`; `None` when the view needs a
    /// linear index but got a quasi-affine one.
    fn access(self, row: &Expr, col: &Expr, c: i64) -> Option<Vec<Expr>> {
        let lin = |e: &Expr| e.as_linear().cloned();
        Some(match self {
            View::Canon => vec![row.clone(), col.clone()],
            View::Transposed => vec![col.clone(), row.clone()],
            View::Subsampled => vec![Expr::floordiv(lin(row)?, 2), col.clone()],
            // reads the second copy; the offset is added by `Act::access`
            View::Repeated | View::Tiled => vec![row.clone(), col.clone()],
            View::SplitLo | View::SplitHi => vec![row.clone(), Expr::modulo(lin(col)?, c / 2)],
            View::Flat => vec![row.scaled(c).add(col)],
            View::Reshaped => {
                let r = lin(row)?;
                vec![Expr::floordiv(r.clone(), 2), Expr::modulo(r, 2).scaled(c).add(col)]
            }
        })
    }

    fn shape(self, r: i64, c: i64) -> Vec<i64> {
        match self {
            View::Canon => vec![r, c],
            View::Transposed => vec![c, r],
            View::Subsampled => vec![r / 2, c],
            View::Repeated => vec![2 * r, c],
            View::Tiled => vec![r, 2 * c],
            View::SplitLo | View::SplitHi => vec![r, c / 2],
            View::Flat => vec![r * c],
            View::Reshaped => vec![r / 2, 2 * c],
        }
    }
}

/// A readable activation: a tensor plus the view that recovers `[R, C]`.
#[derive(Debug, Clone)]
struct Act {
    tensor: String,
    view: View,
    /// Offset added to the row (Repeated) or column (Tiled) index.
    shift: i64,
}

impl Act {
    fn canon(tensor: String) -> Self {
        Act { tensor, view: View::Canon, shift: 0 }
    }

    fn access(&self, row: &Expr, col: &Expr, c: i64) -> Option<Vec<Expr>> {
        let mut es = self.view.access(row, col, c)?;
        match self.view {
            View::Repeated => es[0] = es[0].plus_constant(self.shift),
            View::Tiled => es[1] = es[1].plus_constant(self.shift),
            _ => {}
        }
        Some(es)
    }
}

/// Layout-changing copy nests. `Collision` writes every cell twice and is
/// the only non-invertible one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopyVariant {
    Transpose,
    TransposeLoadSide,
    StridedSlice,
    Split,
    Repeat,
    Tile,
    Flatten,
    FlattenLoadSide,
    Reshape2d,
    Collision,
}

impl CopyVariant {
    pub const INVERTIBLE: [CopyVariant; 9] = [
        CopyVariant::Transpose,
        CopyVariant::TransposeLoadSide,
        CopyVariant::StridedSlice,
        CopyVariant::Split,
        CopyVariant::Repeat,
        CopyVariant::Tile,
        CopyVariant::Flatten,
        CopyVariant::FlattenLoadSide,
        CopyVariant::Reshape2d,
    ];

    pub fn pairs(self) -> usize {
        if self == CopyVariant::Split {
            2
        } else {
            1
        }
    }

    fn kind(self) -> OpKind {
        match self {
            CopyVariant::Transpose | CopyVariant::TransposeLoadSide => OpKind::Transpose,
            CopyVariant::StridedSlice => OpKind::StridedSlice,
            CopyVariant::Split => OpKind::Split,
            CopyVariant::Repeat => OpKind::Repeat,
            CopyVariant::Tile => OpKind::Tile,
            CopyVariant::Flatten | CopyVariant::FlattenLoadSide | CopyVariant::Reshape2d => OpKind::Reshape,
            CopyVariant::Collision => OpKind::Copy,
        }
    }
}

struct Builder {
    program: Program,
    rng: ChaCha8Rng,
    r: i64,
    c: i64,
    elem: u32,
}

impl Builder {
    fn new(seed: u64, r: i64, c: i64) -> Self {
        Builder { program: Program::default(), rng: ChaCha8Rng::seed_from_u64(seed), r, c, elem: 4 }
    }

    fn declare(&mut self, name: &str, shape: Vec<i64>, location: Location, origin: Origin) -> String {
        let name = self.program.fresh_tensor_name(name);
        self.program.tensors.push(TensorDecl::new(name.clone(), self.elem, shape, location, origin));
        name
    }

    fn random_location(&mut self) -> Location {
        if self.rng.gen_bool(0.5) {
            Location::OnChip(None)
        } else {
            Location::OffChip
        }
    }

    fn intermediate(&mut self, name: &str, shape: Vec<i64>) -> String {
        let loc = self.random_location();
        self.declare(name, shape, loc, Origin::Intermediate)
    }

    fn push_nest(&mut self, name: &str, kind: OpKind, domain: IntBox, body: Vec<Statement>) {
        let name = self.program.fresh_nest_name(name);
        self.program.nests.push(OperatorNest { name, kind, domain, body });
    }

    /// Elementwise nest over `[R, C]` combining the given activations.
    fn compute(&mut self, name: &str, inputs: &[Act], out: &str) {
        let dom = IntBox::from_extents(&[self.r, self.c]).expect("box");
        let (row, col) = (var(2, 0), var(2, 1));
        let mut body = Vec::new();
        let mut vals = Vec::new();
        for (k, a) in inputs.iter().enumerate() {
            let v = format!("a{k}");
            let access = a.access(&row, &col, self.c).expect("compute reads linear indices");
            body.push(Statement::Load { result: v.clone(), tensor: a.tensor.clone(), access: map(&dom, access) });
            vals.push(v);
        }
        let mut acc = vals[0].clone();
        for (k, v) in vals.iter().enumerate().skip(1) {
            let op = [Opcode::Add, Opcode::Max, Opcode::Mul][self.rng.gen_range(0..3)].clone();
            let r = format!("s{k}");
            body.push(Statement::Compute { result: r.clone(), op, operands: vec![acc, v.clone()] });
            acc = r;
        }
        let unary = [Opcode::Neg, Opcode::Identity, Opcode::Mul, Opcode::Max][self.rng.gen_range(0..4)].clone();
        let operands = if unary.arity() == Some(2) { vec![acc.clone(), acc] } else { vec![acc] };
        body.push(Statement::Compute { result: "r".into(), op: unary, operands });
        body.push(Statement::Store { tensor: out.to_string(), access: QuasiAffineMap::identity(dom.clone()), value: "r".into() });
        self.push_nest(name, OpKind::Elementwise, dom, body);
    }

    /// Emits a copy nest reading `src`; returns the activations it produces
    /// or `None` if the variant cannot read this view.
    fn copy(&mut self, name: &str, variant: CopyVariant, src: &Act) -> Option<Vec<Act>> {
        let (r, c) = (self.r, self.c);
        let h = c / 2;
        let ext = |e: &[i64]| IntBox::from_extents(e).expect("box");
        let lin = |n: usize, coeffs: &[i64], k: i64| Expr::from_linear(LinearExpr::new(coeffs[..n].to_vec(), k));

        // (domain, load row, load col, [(view, store exprs, shift)])
        type Out = (View, Vec<Expr>, i64);
        let (dom, row, col, outs): (IntBox, Expr, Expr, Vec<Out>) = match variant {
            CopyVariant::Transpose => {
                (ext(&[r, c]), var(2, 0), var(2, 1), vec![(View::Transposed, vec![var(2, 1), var(2, 0)], 0)])
            }
            CopyVariant::TransposeLoadSide => {
                (ext(&[c, r]), var(2, 1), var(2, 0), vec![(View::Transposed, vec![var(2, 0), var(2, 1)], 0)])
            }
            CopyVariant::StridedSlice => {
                (ext(&[r / 2, c]), var(2, 0).scaled(2), var(2, 1), vec![(View::Subsampled, vec![var(2, 0), var(2, 1)], 0)])
            }
            CopyVariant::Split => (
                ext(&[r, h]),
                var(2, 0),
                var(2, 1),
                vec![(View::SplitLo, vec![var(2, 0), var(2, 1)], 0), (View::SplitHi, vec![var(2, 0), var(2, 1)], 0)],
            ),
            CopyVariant::Repeat => (
                ext(&[2, r, c]),
                var(3, 1),
                var(3, 2),
                vec![(View::Repeated, vec![lin(3, &[r, 1, 0], 0), var(3, 2)], r)],
            ),
            CopyVariant::Tile => (
                ext(&[r, 2, c]),
                var(3, 0),
                var(3, 2),
                vec![(View::Tiled, vec![var(3, 0), lin(3, &[0, c, 1], 0)], c)],
            ),
            CopyVariant::Flatten => {
                (ext(&[r, c]), var(2, 0), var(2, 1), vec![(View::Flat, vec![lin(2, &[c, 1], 0)], 0)])
            }
            CopyVariant::FlattenLoadSide => {
                if src.view != View::Canon {
                    return None;
                }
                let i = LinearExpr::var(1, 0);
                (ext(&[r * c]), Expr::floordiv(i.clone(), c), Expr::modulo(i, c), vec![(View::Flat, vec![var(1, 0)], 0)])
            }
            CopyVariant::Reshape2d => {
                let i0 = LinearExpr::var(2, 0);
                let store = vec![Expr::floordiv(i0.clone(), 2), Expr::modulo(i0, 2).scaled(c).add(&var(2, 1))];
                (ext(&[r, c]), var(2, 0), var(2, 1), vec![(View::Reshaped, store, 0)])
            }
            CopyVariant::Collision => {
                (ext(&[r, c, 2]), var(3, 0), var(3, 1), vec![(View::Canon, vec![var(3, 0), var(3, 1)], 0)])
            }
        };

        let mut body = Vec::new();
        let mut acts = Vec::new();
        for (k, (view, store, shift)) in outs.into_iter().enumerate() {
            let load_col = if view == View::SplitHi { col.plus_constant(h) } else { col.clone() };
            let access = src.access(&row, &load_col, c)?;
            let load = map(&dom, access);
            let shape = view.shape(r, c);
            let suffix = match view {
                View::SplitLo => "_lo",
                View::SplitHi => "_hi",
                _ => "",
            };
            let t = self.intermediate(&format!("{name}{suffix}"), shape);
            let v = format!("v{k}");
            body.push(Statement::Load { result: v.clone(), tensor: src.tensor.clone(), access: load });
            body.push(Statement::Store { tensor: t.clone(), access: map(&dom, store), value: v });
            acts.push(Act { tensor: t, view, shift });
        }
        self.push_nest(&format!("copy_{name}"), variant.kind(), dom, body);
        Some(acts)
    }
}

fn activation_size(rng: &mut ChaCha8Rng) -> (i64, i64) {
    (*[4i64, 6, 8].choose(rng).expect("nonempty"), *[4i64, 6, 8].choose(rng).expect("nonempty"))
}

/// Chain `x → compute → copy → compute → … → out` with copy nests holding
/// `copy_pairs` load-store pairs in total, `non_invertible` of them
/// colliding. Panics if `non_invertible > copy_pairs`.
pub fn generate_wavenet_analog(copy_pairs: usize, non_invertible: usize, seed: u64) -> Program {
    assert!(non_invertible <= copy_pairs, "non_invertible must not exceed copy_pairs");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c) = activation_size(&mut rng);

    // Plan the copy sequence: collisions at random positions, invertible
    // variants elsewhere (a split only where two pairs remain).
    let mut variants = Vec::new();
    let mut invertible_left = copy_pairs - non_invertible;
    while invertible_left > 0 {
        let v = *CopyVariant::INVERTIBLE.choose(&mut rng).expect("nonempty");
        if v.pairs() <= invertible_left {
            invertible_left -= v.pairs();
            variants.push(v);
        }
    }
    for _ in 0..non_invertible {
        let at = rng.gen_range(0..=variants.len());
        variants.insert(at, CopyVariant::Collision);
    }

    let mut b = Builder::new(rng.gen(), r, c);
    let x = b.declare("x", vec![r, c], Location::OffChip, Origin::ModelInput);
    let mut inputs = vec![Act::canon(x)];
    for (k, v) in variants.iter().enumerate() {
        let ck = b.intermediate(&format!("c{k}"), vec![r, c]);
        b.compute(&format!("compute_{k}"), &inputs, &ck);
        inputs = b.copy(&format!("d{k}"), *v, &Act::canon(ck)).expect("canonical source");
    }
    let out = b.declare("out", vec![r, c], Location::OffChip, Origin::ModelOutput);
    b.compute(&format!("compute_{}", variants.len()), &inputs, &out);
    b.program
}

/// `blocks` convolution blocks on `[S, S, C]` activations. Block `k` passes
/// its input through `transposes` spatial transposes, convolves, and (for
/// `k ≥ 2`) adds the block input back. Panics if `blocks == 0`.
pub fn generate_resnet_analog(blocks: usize, transposes: usize, seed: u64) -> Program {
    assert!(blocks >= 1, "at least one block");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = *[4i64, 6, 8].choose(&mut rng).expect("nonempty");
    let ch = *[4i64, 8].choose(&mut rng).expect("nonempty");
    let mut b = Builder::new(rng.gen(), s, s);
    let shape = vec![s, s, ch];
    let dom = IntBox::from_extents(&shape).expect("box");
    let id = || QuasiAffineMap::identity(dom.clone());
    let swap = || map(&dom, vec![var(3, 1), var(3, 0), var(3, 2)]);
    let sbuf = Location::OnChip(None);

    let mut input = b.declare("x", shape.clone(), Location::OffChip, Origin::ModelInput);
    for k in 1..=blocks {
        let last = k == blocks;
        let mut h = input.clone();
        for t in 1..=transposes {
            let next = b.declare(&format!("h{k}_{t}"), shape.clone(), sbuf.clone(), Origin::Intermediate);
            b.push_nest(
                &format!("transpose{k}_{t}"),
                OpKind::Transpose,
                dom.clone(),
                vec![
                    Statement::Load { result: "v".into(), tensor: h, access: id() },
                    Statement::Store { tensor: next.clone(), access: swap(), value: "v".into() },
                ],
            );
            h = next;
        }
        let w = b.declare(&format!("w{k}"), vec![ch], Location::OffChip, Origin::ModelInput);
        let conv_out_final = last && k == 1;
        let y = if conv_out_final {
            b.declare("out", shape.clone(), Location::OffChip, Origin::ModelOutput)
        } else {
            b.declare(&format!("y{k}"), shape.clone(), sbuf.clone(), Origin::Intermediate)
        };
        b.push_nest(
            &format!("conv{k}"),
            OpKind::Conv2d,
            dom.clone(),
            vec![
                Statement::Load { result: "a".into(), tensor: h, access: id() },
                Statement::Load { result: "w".into(), tensor: w, access: map(&dom, vec![var(3, 2)]) },
                Statement::Compute { result: "p".into(), op: Opcode::Mul, operands: vec!["a".into(), "w".into()] },
                Statement::Store { tensor: y.clone(), access: id(), value: "p".into() },
            ],
        );
        input = if k == 1 {
            y
        } else {
            let r = if last {
                b.declare("out", shape.clone(), Location::OffChip, Origin::ModelOutput)
            } else {
                b.declare(&format!("r{k}"), shape.clone(), sbuf.clone(), Origin::Intermediate)
            };
            b.push_nest(
                &format!("residual{k}"),
                OpKind::Elementwise,
                dom.clone(),
                vec![
                    Statement::Load { result: "a".into(), tensor: y, access: id() },
                    Statement::Load { result: "b".into(), tensor: input, access: id() },
                    Statement::Compute { result: "s".into(), op: Opcode::Add, operands: vec!["a".into(), "b".into()] },
                    Statement::Store { tensor: r.clone(), access: id(), value: "s".into() },
                ],
            );
            r
        };
    }
    b.program
}

/// Random DAG over `[R, C]` activations mixing elementwise nests, matmul
/// anchors, memcopies and every copy variant (collisions included).
/// Tensors never read become model outputs.
pub fn generate_random(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c) = activation_size(&mut rng);
    let mut b = Builder::new(rng.gen(), r, c);
    let steps = rng.gen_range(3..=12);
    let mut pool: Vec<Act> = Vec::new();
    for k in 0..rng.gen_range(1..=2) {
        let loc = if rng.gen_bool(0.7) { Location::OffChip } else { Location::OnChip(None) };
        pool.push(Act::canon(b.declare(&format!("in{k}"), vec![r, c], loc, Origin::ModelInput)));
    }

    for step in 0..steps {
        let choice = rng.gen_range(0..10);
        if choice < 4 {
            let src = pool.choose(&mut rng).expect("nonempty").clone();
            let variant = if rng.gen_bool(0.1) {
                CopyVariant::Collision
            } else {
                *CopyVariant::INVERTIBLE.choose(&mut rng).expect("nonempty")
            };
            if let Some(acts) = b.copy(&format!("t{step}"), variant, &src) {
                pool.extend(acts);
                continue;
            }
        } else if choice < 6 {
            // memcopy into a fresh tensor, possibly transposing
            let src = pool.choose(&mut rng).expect("nonempty").clone();
            let transpose = rng.gen_bool(0.5);
            let (dom, row, col, view) = if transpose {
                (IntBox::from_extents(&[c, r]).expect("box"), var(2, 1), var(2, 0), View::Transposed)
            } else {
                (IntBox::from_extents(&[r, c]).expect("box"), var(2, 0), var(2, 1), View::Canon)
            };
            if let Some(access) = src.access(&row, &col, c) {
                let t = b.intermediate(&format!("m{step}"), view.shape(r, c));
                b.push_nest(
                    &format!("memcopy_{step}"),
                    OpKind::Copy,
                    dom.clone(),
                    vec![Statement::Memcopy { dst: t.clone(), src: src.tensor.clone(), map: map(&dom, access) }],
                );
                pool.push(Act { tensor: t, view, shift: 0 });
                continue;
            }
        } else if choice < 8 {
            // matmul analog: needs two distinct rank-2 operands
            let rank2: Vec<Act> = pool
                .iter()
                .filter(|a| b.program.tensor(&a.tensor).is_some_and(|t| t.rank() == 2))
                .cloned()
                .collect();
            let mut picks: Vec<Act> = rank2.choose_multiple(&mut rng, 2).cloned().collect();
            picks.dedup_by(|x, y| x.tensor == y.tensor);
            if picks.len() == 2 {
                let dom = IntBox::from_extents(&[r, c]).expect("box");
                let (row, col) = (var(2, 0), var(2, 1));
                let out = b.intermediate(&format!("mm{step}"), vec![r, c]);
                let mut body = Vec::new();
                for (k, a) in picks.iter().enumerate() {
                    let access = a.access(&row, &col, c).expect("linear");
                    body.push(Statement::Load { result: format!("a{k}"), tensor: a.tensor.clone(), access: map(&dom, access) });
                }
                body.push(Statement::Compute { result: "p".into(), op: Opcode::Mul, operands: vec!["a0".into(), "a1".into()] });
                body.push(Statement::Store { tensor: out.clone(), access: QuasiAffineMap::identity(dom.clone()), value: "p".into() });
                b.push_nest(&format!("matmul_{step}"), OpKind::Matmul, dom, body);
                pool.push(Act::canon(out));
                continue;
            }
        }
        let n = rng.gen_range(1..=2).min(pool.len());
        let inputs: Vec<Act> = pool.choose_multiple(&mut rng, n).cloned().collect();
        let out = b.intermediate(&format!("e{step}"), vec![r, c]);
        b.compute(&format!("compute_{step}"), &inputs, &out);
        pool.push(Act::canon(out));
    }

    let read: std::collections::HashSet<String> =
        b.program.nests.iter().flat_map(|n| n.reads()).map(str::to_string).collect();
    for t in &mut b.program.tensors {
        if t.origin == Origin::Intermediate && !read.contains(&t.name) {
            t.origin = Origin::ModelOutput;
        }
    }
    b.program
}
