//! Line-oriented textual IR.
//!
//! ```text
//! tensor %x : 4x[2, 3] @dram input
//! tensor %y : 4x[3, 2] @sbuf(axis=0, banks=4, cyclic) output
//!
//! nest t0 kind=transpose (i0 in 0..2, i1 in 0..3) {
//!   %v0 = load %x[i0, i1]
//!   store %y[i1, i0] = %v0
//! }
//! ```

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::affine::{IntBox, LinearExpr, QuasiAffineExpr, QuasiAffineMap};
use crate::ir::{BankMapping, Location, Opcode, OpKind, OperatorNest, Origin, Policy, Program, Statement, TensorDecl};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Cursor { src, pos: 0, line }
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError { line: self.line, column: self.pos + 1, message: message.into() })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn try_eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> PResult<()> {
        if self.try_eat(tok) {
            Ok(())
        } else {
            let found: String = self.rest().chars().take(12).collect();
            if found.is_empty() {
                self.err(format!("expected `{tok}` at end of line"))
            } else {
                self.err(format!("expected `{tok}`, found `{found}`"))
            }
        }
    }

    fn ident(&mut self) -> PResult<&'a str> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return self.err("expected an identifier");
        }
        let s = &self.rest()[..len];
        self.pos += len;
        Ok(s)
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let r = self.rest();
        let boundary = r[kw.len().min(r.len())..]
            .chars()
            .next()
            .is_none_or(|c| !(c.is_ascii_alphanumeric() || c == '_'));
        if r.starts_with(kw) && boundary {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn name(&mut self) -> PResult<&'a str> {
        self.expect("%")?;
        self.ident()
    }

    fn int(&mut self) -> PResult<i64> {
        self.skip_ws();
        let r = self.rest();
        let sign = usize::from(r.starts_with('-'));
        let digits = r[sign..].find(|c: char| !c.is_ascii_digit()).unwrap_or(r.len() - sign);
        if digits == 0 {
            return self.err("expected an integer");
        }
        let text = &r[..sign + digits];
        match text.parse() {
            Ok(v) => {
                self.pos += text.len();
                Ok(v)
            }
            Err(_) => self.err(format!("integer `{text}` out of range")),
        }
    }

    fn positive(&mut self, what: &str) -> PResult<i64> {
        let at = self.pos;
        let v = self.int()?;
        if v <= 0 {
            self.pos = at;
            self.skip_ws();
            return self.err(format!("{what} must be positive"));
        }
        Ok(v)
    }

    fn finish(&mut self) -> PResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            self.err(format!("unexpected trailing input `{}`", self.rest()))
        }
    }
}

/// Parses a program. Only syntax is checked; run `ir::validate` for the
/// semantic rules.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let mut program = Program::default();
    let mut open: Option<(OperatorNest, usize)> = None;

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let code = raw.split('#').next().unwrap_or("");
        let mut c = Cursor::new(code, line);
        if c.at_end() {
            continue;
        }
        if let Some((nest, _)) = open.as_mut() {
            if c.try_eat("}") {
                c.finish()?;
                let (nest, _) = open.take().expect("open nest");
                program.nests.push(nest);
                continue;
            }
            if c.keyword("nest") || c.keyword("tensor") {
                c.pos = 0;
                c.skip_ws();
                return c.err(format!("missing `}}` to close nest {}", nest.name));
            }
            let stmt = parse_statement(&mut c, &nest.domain)?;
            nest.body.push(stmt);
            continue;
        }
        if c.keyword("tensor") {
            program.tensors.push(parse_tensor(&mut c)?);
        } else if c.keyword("nest") {
            open = Some((parse_nest_header(&mut c)?, line));
        } else if c.peek() == Some('}') {
            return c.err("`}` without an open nest");
        } else {
            return c.err("expected `tensor` or `nest`");
        }
    }
    if let Some((nest, line)) = open {
        return Err(ParseError { line, column: 1, message: format!("nest {} is never closed", nest.name) });
    }
    Ok(program)
}

fn parse_tensor(c: &mut Cursor<'_>) -> PResult<TensorDecl> {
    let name = c.name()?.to_string();
    c.expect(":")?;
    let elem_size = c.int()?;
    let elem_size = u32::try_from(elem_size).or_else(|_| c.err("element size out of range"))?;
    c.expect("x")?;
    c.expect("[")?;
    let mut shape = Vec::new();
    if !c.try_eat("]") {
        loop {
            shape.push(c.int()?);
            if c.try_eat("]") {
                break;
            }
            c.expect(",")?;
        }
    }
    let location = if c.keyword("@dram") {
        Location::OffChip
    } else if c.keyword("@sbuf") {
        if c.try_eat("(") {
            c.expect("axis")?;
            c.expect("=")?;
            let axis = c.int()?;
            let axis = usize::try_from(axis).or_else(|_| c.err("axis must be non-negative"))?;
            c.expect(",")?;
            c.expect("banks")?;
            c.expect("=")?;
            let banks = c.positive("bank count")?;
            let banks = u32::try_from(banks).or_else(|_| c.err("bank count out of range"))?;
            c.expect(",")?;
            let policy = if c.keyword("cyclic") {
                Policy::Cyclic
            } else if c.keyword("blocked") {
                Policy::Blocked
            } else {
                return c.err("expected `cyclic` or `blocked`");
            };
            c.expect(")")?;
            Location::OnChip(Some(BankMapping { axis, banks, policy }))
        } else {
            Location::OnChip(None)
        }
    } else {
        return c.err("expected `@dram` or `@sbuf`");
    };
    let (mut input, mut output) = (false, false);
    while !c.at_end() {
        if c.keyword("input") {
            input = true;
        } else if c.keyword("output") {
            output = true;
        } else {
            return c.err("expected `input`, `output` or end of line");
        }
    }
    let origin = match (input, output) {
        (true, true) => Origin::InputOutput,
        (true, false) => Origin::ModelInput,
        (false, true) => Origin::ModelOutput,
        (false, false) => Origin::Intermediate,
    };
    Ok(TensorDecl { name, elem_size, shape, location, origin })
}

fn parse_nest_header(c: &mut Cursor<'_>) -> PResult<OperatorNest> {
    let name = c.ident()?.to_string();
    c.expect("kind")?;
    c.expect("=")?;
    let kind_at = c.pos;
    let kind: OpKind = match c.ident()?.parse() {
        Ok(k) => k,
        Err(e) => {
            c.pos = kind_at;
            return c.err(e);
        }
    };
    c.expect("(")?;
    let mut bounds = Vec::new();
    if !c.try_eat(")") {
        loop {
            let var_at = c.pos;
            let var = c.ident()?;
            if var != format!("i{}", bounds.len()) {
                c.pos = var_at;
                c.skip_ws();
                return c.err(format!("loop variables must be named i0, i1, ... in order; expected i{}", bounds.len()));
            }
            c.expect("in")?;
            let lo = c.int()?;
            c.expect("..")?;
            let hi = c.int()?;
            if hi < lo {
                return c.err(format!("empty loop range {lo}..{hi}"));
            }
            bounds.push((lo, hi));
            if c.try_eat(")") {
                break;
            }
            c.expect(",")?;
        }
    }
    c.expect("{")?;
    c.finish()?;
    let domain = match IntBox::new(bounds) {
        Ok(d) => d,
        Err(e) => return c.err(e.to_string()),
    };
    Ok(OperatorNest { name, kind, domain, body: Vec::new() })
}

fn parse_statement(c: &mut Cursor<'_>, domain: &IntBox) -> PResult<Statement> {
    let stmt = if c.keyword("store") {
        let tensor = c.name()?.to_string();
        let access = parse_access(c, domain)?;
        c.expect("=")?;
        let value = c.name()?.to_string();
        Statement::Store { tensor, access, value }
    } else if c.keyword("memcopy") {
        let dst = c.name()?.to_string();
        c.expect("<-")?;
        let src = c.name()?.to_string();
        let map = if c.peek() == Some('[') { parse_access(c, domain)? } else { QuasiAffineMap::identity(domain.clone()) };
        Statement::Memcopy { dst, src, map }
    } else if c.peek() == Some('%') {
        let result = c.name()?.to_string();
        c.expect("=")?;
        if c.keyword("load") {
            let tensor = c.name()?.to_string();
            let access = parse_access(c, domain)?;
            Statement::Load { result, tensor, access }
        } else {
            let op = Opcode::from_name(c.ident()?);
            let mut operands = Vec::new();
            while !c.at_end() {
                if !operands.is_empty() {
                    c.try_eat(",");
                }
                operands.push(c.name()?.to_string());
            }
            Statement::Compute { result, op, operands }
        }
    } else {
        return c.err("expected a statement");
    };
    c.finish()?;
    Ok(stmt)
}

fn parse_access(c: &mut Cursor<'_>, domain: &IntBox) -> PResult<QuasiAffineMap> {
    c.expect("[")?;
    let mut exprs = Vec::new();
    if !c.try_eat("]") {
        loop {
            exprs.push(parse_expr(c, domain.dims())?);
            if c.try_eat("]") {
                break;
            }
            c.expect(",")?;
        }
    }
    QuasiAffineMap::new(domain.clone(), exprs).or_else(|e| c.err(e.to_string()))
}

/// `expr := ['-'] term (('+'|'-') term)*`
fn parse_expr(c: &mut Cursor<'_>, dims: usize) -> PResult<QuasiAffineExpr> {
    let mut acc = QuasiAffineExpr::zero(dims);
    let mut sign = if c.try_eat("-") { -1 } else { 1 };
    loop {
        let term = parse_term(c, dims)?;
        acc = acc.add_scaled(&term, sign);
        if c.try_eat("+") {
            sign = 1;
        } else if c.peek() == Some('-') && !c.rest().starts_with("->") {
            c.expect("-")?;
            sign = -1;
        } else {
            return Ok(acc);
        }
    }
}

/// `term := INT ['*' atom] | atom`
fn parse_term(c: &mut Cursor<'_>, dims: usize) -> PResult<QuasiAffineExpr> {
    if c.peek().is_some_and(|ch| ch.is_ascii_digit()) {
        let k = c.int()?;
        if c.try_eat("*") {
            return Ok(parse_atom(c, dims)?.scaled(k));
        }
        return Ok(QuasiAffineExpr::constant(dims, k));
    }
    parse_atom(c, dims)
}

/// `atom := iN | '(' linear ')' ('floordiv'|'mod') INT`
fn parse_atom(c: &mut Cursor<'_>, dims: usize) -> PResult<QuasiAffineExpr> {
    if c.try_eat("(") {
        let inner_at = c.pos;
        let inner = parse_expr(c, dims)?;
        c.expect(")")?;
        let Some(lin) = inner.as_linear().cloned() else {
            c.pos = inner_at;
            return c.err("floordiv/mod operand must be linear (nesting depth 1)");
        };
        let floordiv = if c.keyword("floordiv") {
            true
        } else if c.keyword("mod") {
            false
        } else {
            return c.err("expected `floordiv` or `mod` after `)`");
        };
        let d = c.positive("divisor")?;
        return Ok(if floordiv { QuasiAffineExpr::floordiv(lin, d) } else { QuasiAffineExpr::modulo(lin, d) });
    }
    let at = c.pos;
    let id = c.ident()?;
    let var = id.strip_prefix('i').and_then(|n| n.parse::<usize>().ok());
    match var {
        Some(j) if j < dims => Ok(QuasiAffineExpr::from_linear(LinearExpr::var(dims, j))),
        _ => {
            c.pos = at;
            c.skip_ws();
            c.err(format!("`{id}` is not a loop variable of this nest"))
        }
    }
}

/// Canonical text. Table-backed maps have no textual form and are printed
/// as a `<table>` placeholder that does not parse.
pub fn print(program: &Program) -> String {
    let mut out = String::new();
    for t in &program.tensors {
        write_tensor(&mut out, t).expect("string write");
    }
    for nest in &program.nests {
        out.push('\n');
        write_nest(&mut out, nest).expect("string write");
    }
    out
}

fn write_tensor(out: &mut String, t: &TensorDecl) -> fmt::Result {
    let shape: Vec<String> = t.shape.iter().map(i64::to_string).collect();
    write!(out, "tensor %{} : {}x[{}] ", t.name, t.elem_size, shape.join(", "))?;
    match t.location {
        Location::OffChip => out.push_str("@dram"),
        Location::OnChip(None) => out.push_str("@sbuf"),
        Location::OnChip(Some(m)) => write!(out, "@sbuf({m})")?,
    }
    match t.origin {
        Origin::ModelInput => out.push_str(" input"),
        Origin::ModelOutput => out.push_str(" output"),
        Origin::InputOutput => out.push_str(" input output"),
        Origin::Intermediate => {}
    }
    out.push('\n');
    Ok(())
}

fn write_nest(out: &mut String, nest: &OperatorNest) -> fmt::Result {
    let loops: Vec<String> = nest.domain.bounds().enumerate().map(|(j, (lo, hi))| format!("i{j} in {lo}..{hi}")).collect();
    writeln!(out, "nest {} kind={} ({}) {{", nest.name, nest.kind, loops.join(", "))?;
    for s in &nest.body {
        out.push_str("  ");
        match s {
            Statement::Load { result, tensor, access } => write!(out, "%{result} = load %{tensor}{}", Access(access))?,
            Statement::Store { tensor, access, value } => write!(out, "store %{tensor}{} = %{value}", Access(access))?,
            Statement::Compute { result, op, operands } => {
                write!(out, "%{result} = {}", op.name())?;
                for v in operands {
                    write!(out, " %{v}")?;
                }
            }
            Statement::Memcopy { dst, src, map } => {
                write!(out, "memcopy %{dst} <- %{src}")?;
                if !map.is_identity() {
                    write!(out, "{}", Access(map))?;
                }
            }
        }
        out.push('\n');
    }
    out.push_str("}\n");
    Ok(())
}

struct Access<'a>(&'a QuasiAffineMap);

impl fmt::Display for Access<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.exprs() {
            Some(es) => {
                f.write_str("[")?;
                for (k, e) in es.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str("]")
            }
            None => f.write_str("[<table>]"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRANSPOSE: &str = "\
tensor %x : 4x[2, 3] @dram input
tensor %y : 4x[3, 2] @dram output

nest t0 kind=transpose (i0 in 0..2, i1 in 0..3) {
  %v0 = load %x[i0, i1]
  store %y[i1, i0] = %v0
}
";

    #[test]
    fn minimal_transpose() {
        let p = parse(TRANSPOSE).unwrap();
        assert_eq!(p.tensors.len(), 2);
        assert_eq!(p.nests.len(), 1);
        assert_eq!(print(&p), TRANSPOSE);
    }

    #[test]
    fn unbalanced_braces_point_at_offending_line() {
        let src = "tensor %x : 4x[2] @dram input\nnest a kind=copy (i0 in 0..2) {\n  %v = load %x[i0]\nnest b kind=copy (i0 in 0..2) {\n}\n";
        let e = parse(src).unwrap_err();
        assert_eq!(e.line, 4);
        let e = parse("nest a kind=copy (i0 in 0..2) {\n  %v = id %v\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("never closed"));
        let e = parse("}\n").unwrap_err();
        assert_eq!((e.line, e.column), (1, 1));
    }

    #[test]
    fn quasi_affine_expressions_round_trip() {
        let src = "\
tensor %x : 4x[12] @sbuf(axis=0, banks=4, cyclic) input output
tensor %y : 2x[3, 4] @sbuf

nest r kind=reshape (i0 in 0..12) {
  %a = load %x[i0]
  store %y[(i0) floordiv 4, (i0) mod 4] = %a
}

nest s kind=elementwise (i0 in 0..3, i1 in 1..4) {
  %a = load %y[i0, 3*(i1 - 1) floordiv 2 - (i1 - 1) floordiv 2 - i1 + 1]
  %b = load %x[4*i0 + i1]
  %c = add %a %b
  %d = neg %c
}

nest m kind=copy (i0 in 0..3, i1 in 0..4) {
  memcopy %y <- %y[2 - i0, i1]
}
";
        let p = parse(src).unwrap();
        let again = parse(&print(&p)).unwrap();
        assert_eq!(again, p);
        assert_eq!(print(&again), print(&p));
    }

    #[test]
    fn reports_columns() {
        let e = parse("tensor %x : 4x[2] @hbm").unwrap_err();
        assert_eq!((e.line, e.column), (1, 19));
        let e = parse("nest a kind=copy (i0 in 0..2) {\n  %v = load %x[j]\n}").unwrap_err();
        assert_eq!((e.line, e.column), (2, 16));
        let e = parse("nest a kind=fft (i0 in 0..2) {\n}").unwrap_err();
        assert_eq!((e.line, e.column), (1, 13));
    }
}
