//! Closed-form real expressions over variables `x1..xn`.
//!
//! The grammar is small on purpose: literals, variables, `+ - * / ^`,
//! unary minus, the functions `abs sqrt exp log min max`, and a conditional
//! `if(lhs CMP rhs, then, else)` with `CMP` one of `< <= > >= == !=`.
//! Piecewise maps such as `if(x1>0, exp(-1/x1), 0)` are written with the
//! conditional, which evaluates exactly one branch.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("variable x{index} exceeds arity {arity}")]
    VariableOutOfRange { index: usize, arity: usize },
    #[error("point has {got} coordinates, expression expects {expected}")]
    Arity { expected: usize, got: usize },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sqrt,
    Exp,
    Log,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Syntax tree node. Variables are stored zero-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    If {
        cmp: CmpOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
        then: Box<Node>,
        otherwise: Box<Node>,
    },
}

/// A parsed expression together with the dimension of its input.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    arity: usize,
}

impl Expression {
    /// Parses `source`; the arity is the largest variable index referenced.
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let root = Parser::new(source)?.parse_all()?;
        let arity = max_var(&root).map_or(0, |v| v + 1);
        Ok(Expression { root, arity })
    }

    /// Parses `source` for a declared input dimension `arity`.
    pub fn parse_with_arity(source: &str, arity: usize) -> Result<Self, ExprError> {
        let mut e = Self::parse(source)?;
        if e.arity > arity {
            return Err(ExprError::VariableOutOfRange {
                index: e.arity,
                arity,
            });
        }
        e.arity = arity;
        Ok(e)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// One-based indices of the variables appearing in the tree.
    pub fn free_vars(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        collect_vars(&self.root, &mut out);
        out
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        if point.len() != self.arity {
            return Err(ExprError::Arity {
                expected: self.arity,
                got: point.len(),
            });
        }
        eval_node(&self.root, point)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a}{sym}{b})")
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Node::If {
                cmp,
                lhs,
                rhs,
                then,
                otherwise,
            } => {
                let sym = match cmp {
                    CmpOp::Lt => "<",
                    CmpOp::Le => "<=",
                    CmpOp::Gt => ">",
                    CmpOp::Ge => ">=",
                    CmpOp::Eq => "==",
                    CmpOp::Ne => "!=",
                };
                write!(f, "if({lhs}{sym}{rhs},{then},{otherwise})")
            }
        }
    }
}

fn max_var(node: &Node) -> Option<usize> {
    let mut set = BTreeSet::new();
    collect_vars(node, &mut set);
    set.last().map(|v| v - 1)
}

fn collect_vars(node: &Node, out: &mut BTreeSet<usize>) {
    match node {
        Node::Const(_) => {}
        Node::Var(i) => {
            out.insert(i + 1);
        }
        Node::Neg(a) => collect_vars(a, out),
        Node::Binary(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        Node::Call(_, args) => args.iter().for_each(|a| collect_vars(a, out)),
        Node::If {
            lhs,
            rhs,
            then,
            otherwise,
            ..
        } => {
            for n in [lhs, rhs, then, otherwise] {
                collect_vars(n, out);
            }
        }
    }
}

fn domain(node: &Node, reason: &str) -> ExprError {
    ExprError::Domain {
        subexpr: node.to_string(),
        reason: reason.to_string(),
    }
}

fn finite(node: &Node, v: f64) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain(node, "non-finite result"))
    }
}

fn eval_node(node: &Node, x: &[f64]) -> Result<f64, ExprError> {
    match node {
        Node::Const(c) => Ok(*c),
        Node::Var(i) => Ok(x[*i]),
        Node::Neg(a) => Ok(-eval_node(a, x)?),
        Node::Binary(op, a, b) => {
            let u = eval_node(a, x)?;
            let v = eval_node(b, x)?;
            let r = match op {
                BinOp::Add => u + v,
                BinOp::Sub => u - v,
                BinOp::Mul => u * v,
                BinOp::Div => {
                    if v == 0.0 {
                        return Err(domain(node, "division by zero"));
                    }
                    u / v
                }
                BinOp::Pow => {
                    if v.fract() == 0.0 && v.abs() < 2_147_483_647.0 {
                        if u == 0.0 && v < 0.0 {
                            return Err(domain(node, "zero raised to a negative power"));
                        }
                        u.powi(v as i32)
                    } else {
                        if u < 0.0 {
                            return Err(domain(node, "negative base with fractional exponent"));
                        }
                        if u == 0.0 && v < 0.0 {
                            return Err(domain(node, "zero raised to a negative power"));
                        }
                        u.powf(v)
                    }
                }
            };
            finite(node, r)
        }
        Node::Call(func, args) => {
            let a = eval_node(&args[0], x)?;
            let r = match func {
                Func::Abs => a.abs(),
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(domain(node, "square root of a negative number"));
                    }
                    a.sqrt()
                }
                Func::Exp => a.exp(),
                Func::Log => {
                    if a <= 0.0 {
                        return Err(domain(node, "logarithm of a nonpositive number"));
                    }
                    a.ln()
                }
                Func::Min => a.min(eval_node(&args[1], x)?),
                Func::Max => a.max(eval_node(&args[1], x)?),
            };
            finite(node, r)
        }
        Node::If {
            cmp,
            lhs,
            rhs,
            then,
            otherwise,
        } => {
            let l = eval_node(lhs, x)?;
            let r = eval_node(rhs, x)?;
            let take = match cmp {
                CmpOp::Lt => l < r,
                CmpOp::Le => l <= r,
                CmpOp::Gt => l > r,
                CmpOp::Ge => l >= r,
                CmpOp::Eq => l == r,
                CmpOp::Ne => l != r,
            };
            if take {
                eval_node(then, x)
            } else {
                eval_node(otherwise, x)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Op(s) => write!(f, "`{s}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
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
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                expected: "a numeric literal".into(),
                found: format!("`{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        let two = src.get(i..i + 2).unwrap_or("");
        let op2 = match two {
            "<=" => Some("<="),
            ">=" => Some(">="),
            "==" => Some("=="),
            "!=" => Some("!="),
            _ => None,
        };
        if let Some(op) = op2 {
            out.push((start, Tok::Op(op)));
            i += 2;
            continue;
        }
        let tok = match c {
            b'+' => Tok::Op("+"),
            b'-' => Tok::Op("-"),
            b'*' => Tok::Op("*"),
            b'/' => Tok::Op("/"),
            b'^' => Tok::Op("^"),
            b'<' => Tok::Op("<"),
            b'>' => Tok::Op(">"),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    expected: "an operator, literal, or identifier".into(),
                    found: format!("`{ch}`"),
                });
            }
        };
        out.push((start, tok));
        i += 1;
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

// Binding powers: additive 10, multiplicative 20, prefix minus 25, power 30 (right-assoc).
const PREFIX_BP: u8 = 25;

fn infix_bp(op: &str) -> Option<(u8, u8, BinOp)> {
    Some(match op {
        "+" => (10, 11, BinOp::Add),
        "-" => (10, 11, BinOp::Sub),
        "*" => (20, 21, BinOp::Mul),
        "/" => (20, 21, BinOp::Div),
        "^" => (30, 29, BinOp::Pow),
        _ => return None,
    })
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ExprError> {
        Ok(Parser {
            toks: tokenize(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            offset: self.offset(),
            expected: expected.to_string(),
            found: self.peek().to_string(),
        })
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn parse_all(&mut self) -> Result<Node, ExprError> {
        let node = self.parse_expr(0)?;
        if *self.peek() != Tok::End {
            return self.fail("an operator or end of input");
        }
        Ok(node)
    }

    fn parse_expr(&mut self, min_bp: u8) -> Result<Node, ExprError> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let op = match self.peek() {
                Tok::Op(op) => *op,
                _ => break,
            };
            let Some((lbp, rbp, bin)) = infix_bp(op) else {
                break;
            };
            if lbp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.parse_expr(rbp)?;
            lhs = Node::Binary(bin, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Node, ExprError> {
        let offset = self.offset();
        let start = self.pos;
        match self.bump() {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::Op("-") => Ok(Node::Neg(Box::new(self.parse_expr(PREFIX_BP)?))),
            Tok::LParen => {
                let inner = self.parse_expr(0)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => self.parse_ident(offset, &name),
            _ => {
                self.pos = start;
                self.fail("a literal, variable, function, or `(`")
            }
        }
    }

    fn parse_ident(&mut self, offset: usize, name: &str) -> Result<Node, ExprError> {
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let idx: usize = rest.parse().unwrap_or(0);
                if idx == 0 {
                    return Err(ExprError::UnknownIdentifier {
                        offset,
                        name: name.to_string(),
                    });
                }
                return Ok(Node::Var(idx - 1));
            }
        }
        if name == "if" {
            self.expect(Tok::LParen, "`(` after `if`")?;
            let lhs = self.parse_expr(0)?;
            let cmp = match self.peek() {
                Tok::Op("<") => CmpOp::Lt,
                Tok::Op("<=") => CmpOp::Le,
                Tok::Op(">") => CmpOp::Gt,
                Tok::Op(">=") => CmpOp::Ge,
                Tok::Op("==") => CmpOp::Eq,
                Tok::Op("!=") => CmpOp::Ne,
                _ => return self.fail("a comparison operator"),
            };
            self.bump();
            let rhs = self.parse_expr(0)?;
            self.expect(Tok::Comma, "`,`")?;
            let then = self.parse_expr(0)?;
            self.expect(Tok::Comma, "`,`")?;
            let otherwise = self.parse_expr(0)?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Node::If {
                cmp,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            });
        }
        let Some(func) = Func::from_name(name) else {
            return Err(ExprError::UnknownIdentifier {
                offset,
                name: name.to_string(),
            });
        };
        self.expect(Tok::LParen, "`(` after function name")?;
        let mut args = vec![self.parse_expr(0)?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.parse_expr(0)?);
        }
        if args.len() != func.arity() {
            return self.fail(&format!("{} argument(s) for `{}`", func.arity(), func.name()));
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(Node::Call(func, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EX54: &str = "if(x1>0, exp(-1/x1), if(x1<0, -exp(1/x1), 0))";

    fn ev(src: &str, x: &[f64]) -> f64 {
        Expression::parse(src).unwrap().eval(x).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("2+3*4", &[]), 14.0);
        assert_eq!(ev("2^3^2", &[]), 512.0);
        assert_eq!(ev("8-3-2", &[]), 3.0);
        assert_eq!(ev("16/4/2", &[]), 2.0);
        assert_eq!(ev("-2^2", &[]), -4.0);
        assert_eq!(ev("3--2", &[]), 5.0);
        assert_eq!(ev("2*-3", &[]), -6.0);
        assert_eq!(ev("2^-1", &[]), 0.5);
    }

    #[test]
    fn fixture_expressions() {
        assert_eq!(ev("x1^3", &[2.0]), 8.0);
        assert_eq!(ev("x1^3", &[0.5]), 0.125);
        assert_eq!(ev(EX54, &[0.0]), 0.0);
        let v = ev(EX54, &[0.5]);
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.135335).abs() < 1e-6);
        assert_eq!(ev("if(x1>=0, x1^2/(x1^2+1), -(x1^2/(x1^2+1)))", &[1.0]), 0.5);
        assert_eq!(ev("max(x1, x2) - min(x1, x2)", &[1.0, 4.0]), 3.0);
    }

    #[test]
    fn free_variables() {
        let set = |s: &str| Expression::parse(s).unwrap().free_vars();
        assert_eq!(set("x1+x3"), BTreeSet::from([1, 3]));
        assert!(set("7").is_empty());
        assert_eq!(set(EX54), BTreeSet::from([1]));
        assert_eq!(Expression::parse("x1+x3").unwrap().arity(), 3);
    }

    #[test]
    fn conditional_takes_one_branch() {
        // the untaken branch would divide by zero
        assert_eq!(ev("if(x1==0, 1, 1/x1)", &[0.0]), 1.0);
    }

    #[test]
    fn errors_are_structured() {
        match Expression::parse("2+*3") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
        match Expression::parse("foo(x1)") {
            Err(ExprError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "foo");
                assert_eq!(offset, 0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Expression::parse("(1+2"),
            Err(ExprError::Syntax { offset: 4, .. })
        ));
        assert!(matches!(
            Expression::parse_with_arity("x2", 1),
            Err(ExprError::VariableOutOfRange { .. })
        ));
        let e = Expression::parse("1/x1").unwrap();
        match e.eval(&[0.0]) {
            Err(ExprError::Domain { subexpr, .. }) => assert_eq!(subexpr, "(1.0/x1)"),
            other => panic!("{other:?}"),
        }
        assert!(Expression::parse("log(x1)").unwrap().eval(&[-1.0]).is_err());
        assert!(Expression::parse("sqrt(x1)").unwrap().eval(&[-1.0]).is_err());
        assert!(matches!(e.eval(&[1.0, 2.0]), Err(ExprError::Arity { .. })));
    }

    #[test]
    fn print_then_reparse() {
        for src in [EX54, "2+3*4", "-x1^2", "x1^-2", "min(x1,-x2)/3e-2"] {
            let a = Expression::parse(src).unwrap();
            let b = Expression::parse(&a.to_string()).unwrap();
            assert_eq!(a, b, "{src}");
        }
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|v| format!("{}", v as f64 / 8.0)),
            (1usize..4).prop_map(|i| format!("x{i}")),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone(), prop::sample::select(vec!["+", "-", "*", "/", "^"]))
                    .prop_map(|(a, b, op)| format!("{a}{op}{b}")),
                inner.clone().prop_map(|a| format!("-({a})")),
                inner.clone().prop_map(|a| format!("abs({a})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("max({a},{b})")),
                (inner.clone(), inner.clone(), inner.clone())
                    .prop_map(|(a, b, c)| format!("if({a}<={b},{c},{a})")),
                inner.prop_map(|a| format!("({a})")),
            ]
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_structural(src in arb_expr()) {
            let a = Expression::parse(&src).unwrap();
            let b = Expression::parse(&a.to_string()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn fuzz_never_panics(src in "[-+*/^()x0-9.,a-z<>= ]{0,24}") {
            let _ = Expression::parse(&src);
        }

        #[test]
        fn eval_is_pure(src in arb_expr(), x in prop::collection::vec(-3.0f64..3.0, 3)) {
            let e = Expression::parse_with_arity(&src, 3).unwrap();
            let a = e.eval(&x);
            let b = e.eval(&x);
            match (a, b) {
                (Ok(u), Ok(v)) => prop_assert_eq!(u.to_bits(), v.to_bits()),
                (Err(u), Err(v)) => prop_assert_eq!(u, v),
                _ => prop_assert!(false),
            }
        }
    }
}
