//! A small arithmetic expression language for user-supplied dynamics and costs.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := primary ('^' unary)?        // right-associative
//! primary := number | var | func '(' args ')' | '(' sum ')'
//! ```
//!
//! Variables come from a closed set (`x`, `t`, `a`, `tau`, `stage`), so a
//! binding environment is a fixed-size array and evaluation never allocates.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("unbound variable `{0}`")]
    Unbound(Var),
    #[error("domain error: {what} in `{subexpr}`")]
    Domain { what: &'static str, subexpr: String },
}

/// The fixed variable set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// Education level (state).
    X,
    /// Training rate (control).
    T,
    /// External conditions (disturbance).
    A,
    /// Elapsed time.
    Tau,
    /// 1-based step index.
    Stage,
}

impl Var {
    pub const ALL: [Var; 5] = [Var::X, Var::T, Var::A, Var::Tau, Var::Stage];

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::T => "t",
            Var::A => "a",
            Var::Tau => "tau",
            Var::Stage => "stage",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == name)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Parsed expression tree. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<[Expr]>),
}

/// Variable bindings for [`Expr::eval`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings([Option<f64>; 5]);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        self.set(var, value);
        self
    }

    pub fn set(&mut self, var: Var, value: f64) {
        self.0[var.slot()] = Some(value);
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        self.0[var.slot()]
    }

    /// Build bindings from `(name, value)` pairs, rejecting names outside the variable set.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self, ExprError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut b = Bindings::new();
        for (name, value) in pairs {
            let var = Var::from_name(name).ok_or_else(|| ExprError::UnknownIdentifier {
                name: name.to_string(),
                pos: 0,
            })?;
            b.set(var, value);
        }
        Ok(b)
    }
}

/// Parse `source` into an expression tree.
pub fn parse(source: &str) -> Result<Expr, ExprError> {
    let tokens = tokenize(source)?;
    if tokens.len() == 1 {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let mut p = Parser { tokens, cursor: 0 };
    let expr = p.sum()?;
    match p.peek() {
        (Tok::End, _) => Ok(expr),
        (tok, pos) => Err(ExprError::Syntax {
            pos,
            msg: format!("unexpected {}", tok.describe()),
        }),
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Expr {
    pub fn eval(&self, bindings: &Bindings) -> Result<f64, ExprError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(var) => bindings.get(*var).ok_or(ExprError::Unbound(*var)),
            Expr::Neg(inner) => Ok(-inner.eval(bindings)?),
            Expr::Bin(op, lhs, rhs) => {
                let l = lhs.eval(bindings)?;
                let r = rhs.eval(bindings)?;
                match op {
                    BinOp::Add => Ok(l + r),
                    BinOp::Sub => Ok(l - r),
                    BinOp::Mul => Ok(l * r),
                    BinOp::Div => {
                        if r == 0.0 {
                            Err(self.domain("division by zero"))
                        } else {
                            Ok(l / r)
                        }
                    }
                    BinOp::Pow => {
                        let v = l.powf(r);
                        if v.is_nan() && !l.is_nan() && !r.is_nan() {
                            Err(self.domain("non-real power"))
                        } else {
                            Ok(v)
                        }
                    }
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(bindings)?;
                match func {
                    Func::Min => Ok(a.min(args[1].eval(bindings)?)),
                    Func::Max => Ok(a.max(args[1].eval(bindings)?)),
                    Func::Abs => Ok(a.abs()),
                    Func::Exp => Ok(a.exp()),
                    Func::Log => {
                        if a <= 0.0 {
                            Err(self.domain("logarithm of a non-positive number"))
                        } else {
                            Ok(a.ln())
                        }
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            Err(self.domain("square root of a negative number"))
                        } else {
                            Ok(a.sqrt())
                        }
                    }
                }
            }
        }
    }

    fn domain(&self, what: &'static str) -> ExprError {
        ExprError::Domain {
            what,
            subexpr: self.to_string(),
        }
    }

    /// Whether `var` occurs anywhere in the tree.
    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(inner) => inner.uses(var),
            Expr::Bin(_, l, r) => l.uses(var) || r.uses(var),
            Expr::Call(_, args) => args.iter().any(|e| e.uses(var)),
        }
    }

    /// Variables referenced by the tree, in canonical order.
    pub fn variables(&self) -> Vec<Var> {
        Var::ALL.into_iter().filter(|v| self.uses(*v)).collect()
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 && parent > 0 {
                    write!(f, "({v})")
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(inner) => {
                if parent > 3 {
                    f.write_str("(")?;
                }
                f.write_str("-")?;
                inner.fmt_prec(f, 3)?;
                if parent > 3 {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Bin(op, l, r) => {
                let prec = op.precedence();
                let paren = prec < parent;
                if paren {
                    f.write_str("(")?;
                }
                let (lp, rp) = if *op == BinOp::Pow {
                    (prec + 1, prec)
                } else {
                    (prec, prec + 1)
                };
                l.fmt_prec(f, lp)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f, rp)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    arg.fmt_prec(f, 0)?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("operator `{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((Tok::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            b',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value = text.parse::<f64>().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{text}`"),
                })?;
                out.push((Tok::Num(value), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{ch}`"),
                });
            }
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    cursor: usize,
}

impl Parser {
    fn peek(&self) -> (Tok, usize) {
        self.tokens[self.cursor].clone()
    }

    fn bump(&mut self) -> (Tok, usize) {
        let tok = self.peek();
        if self.cursor + 1 < self.tokens.len() {
            self.cursor += 1;
        }
        tok
    }

    fn expect(&mut self, want: Tok) -> Result<(), ExprError> {
        let (tok, pos) = self.bump();
        if tok == want {
            Ok(())
        } else {
            Err(ExprError::Syntax {
                pos,
                msg: format!("expected {}, found {}", want.describe(), tok.describe()),
            })
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek().0 {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.peek().0 == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.sum()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.peek().0 == Tok::LParen {
                    let func = Func::from_name(&name)
                        .ok_or(ExprError::UnknownIdentifier { name, pos })?;
                    self.bump();
                    let mut args = vec![self.sum()?];
                    while self.peek().0 == Tok::Comma {
                        self.bump();
                        args.push(self.sum()?);
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Syntax {
                            pos,
                            msg: format!(
                                "{} takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            ),
                        });
                    }
                    Ok(Expr::Call(func, args.into_boxed_slice()))
                } else {
                    Var::from_name(&name)
                        .map(Expr::Var)
                        .ok_or(ExprError::UnknownIdentifier { name, pos })
                }
            }
            other => Err(ExprError::Syntax {
                pos,
                msg: format!("expected an operand, found {}", other.describe()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, b: Bindings) -> Result<f64, ExprError> {
        parse(src)?.eval(&b)
    }

    #[test]
    fn parses_subtraction() {
        assert_eq!(
            parse("t - a").unwrap(),
            Expr::Bin(BinOp::Sub, Box::new(Expr::Var(Var::T)), Box::new(Expr::Var(Var::A)))
        );
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", Bindings::new()).unwrap(), 7.0);
        // 2^(3^2)
        assert_eq!(ev("2^3^2", Bindings::new()).unwrap(), 512.0);
        assert_eq!(ev("-2^2", Bindings::new()).unwrap(), -4.0);
        assert_eq!(ev("2^-1", Bindings::new()).unwrap(), 0.5);
        assert_eq!(ev("10 - 4 - 3", Bindings::new()).unwrap(), 3.0);
        assert_eq!(ev("8 / 4 / 2", Bindings::new()).unwrap(), 1.0);
        assert_eq!(ev("1.5e1 + .5", Bindings::new()).unwrap(), 15.5);
    }

    #[test]
    fn truncated_input_reports_end_position() {
        match parse("t +") {
            Err(ExprError::Syntax { pos, msg }) => {
                assert_eq!(pos, 3);
                assert!(msg.contains("end of input"), "{msg}");
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(parse(""), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("(t"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("t a"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("min(t)"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("t # 2"), Err(ExprError::Syntax { pos: 2, .. })));
        assert!(matches!(
            parse("y + 1"),
            Err(ExprError::UnknownIdentifier { ref name, pos: 0 }) if name == "y"
        ));
        assert!(matches!(
            parse("sin(t)"),
            Err(ExprError::UnknownIdentifier { ref name, .. }) if name == "sin"
        ));
    }

    #[test]
    fn evaluates_with_bindings() {
        let b = Bindings::new().with(Var::X, 3.0).with(Var::T, 1.0);
        assert_eq!(ev("x^2 + t", b).unwrap(), 10.0);
        let b = Bindings::from_pairs([("t", 2.0), ("a", 1.0)]).unwrap();
        assert_eq!(ev("min(t, a)", b).unwrap(), 1.0);
        assert_eq!(ev("max(t, a)", b).unwrap(), 2.0);
        assert_eq!(ev("abs(a - t)", b).unwrap(), 1.0);
        assert_eq!(ev("sqrt(4) + log(exp(2))", b).unwrap(), 4.0);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let b = Bindings::new().with(Var::X, 1.0);
        match ev("1/(x-1)", b) {
            Err(ExprError::Domain { what, subexpr }) => {
                assert_eq!(what, "division by zero");
                assert_eq!(subexpr, "1 / (x - 1)");
            }
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(matches!(ev("log(x - 1)", b), Err(ExprError::Domain { .. })));
        assert!(matches!(ev("sqrt(-x)", b), Err(ExprError::Domain { .. })));
        assert!(matches!(ev("(-x)^0.5", b), Err(ExprError::Domain { .. })));
    }

    #[test]
    fn unbound_variable() {
        assert_eq!(ev("x + t", Bindings::new().with(Var::X, 1.0)), Err(ExprError::Unbound(Var::T)));
    }

    #[test]
    fn display_reparses_to_same_tree() {
        for src in ["-(t - a)^2", "2^3^2", "(2^3)^2", "x - (t - a)", "-x^2", "min(t, -a) / (1 + x)"] {
            let e = parse(src).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{src} -> {e}");
        }
    }

    #[test]
    fn variable_usage() {
        let e = parse("x * t + tau").unwrap();
        assert_eq!(e.variables(), vec![Var::X, Var::T, Var::Tau]);
        assert!(!e.uses(Var::Stage));
    }

    proptest! {
        #[test]
        fn precedence_on_integer_triples(p in -1000i64..1000, q in -1000i64..1000, r in -1000i64..1000) {
            let b = Bindings::new();
            let e1 = ev(&format!("{p}+{q}*{r}"), b).unwrap();
            let e2 = ev(&format!("({p}+{q})*{r}"), b).unwrap();
            prop_assert_eq!(e1, (p + q * r) as f64);
            prop_assert_eq!(e2, ((p + q) * r) as f64);
        }

        #[test]
        fn whitespace_insensitive(spaces in proptest::collection::vec(0usize..3, 32), x in -5.0f64..5.0, t in 0.0f64..3.0) {
            let src = "max(x,t)*(t-x)^2+abs(x)/(1+t)-3*tau";
            let mut spaced = String::new();
            for (i, ch) in src.chars().enumerate() {
                spaced.push(ch);
                let n = spaces[i % spaces.len()];
                // keep identifiers intact
                let next = src[i + 1..].chars().next();
                let inside_ident = ch.is_ascii_alphanumeric() && next.is_some_and(|c| c.is_ascii_alphanumeric());
                if !inside_ident {
                    spaced.push_str(&" ".repeat(n));
                }
            }
            let b = Bindings::new().with(Var::X, x).with(Var::T, t).with(Var::Tau, 0.25);
            let v1 = ev(src, b).unwrap();
            let v2 = ev(&spaced, b).unwrap();
            prop_assert_eq!(v1.to_bits(), v2.to_bits());
        }

        #[test]
        fn eval_is_deterministic(x in -10.0f64..10.0, t in -10.0f64..10.0) {
            let e = parse("exp(-x^2/10) * t + max(x, t)^3").unwrap();
            let b = Bindings::new().with(Var::X, x).with(Var::T, t);
            prop_assert_eq!(e.eval(&b).unwrap().to_bits(), e.eval(&b).unwrap().to_bits());
        }
    }
}
