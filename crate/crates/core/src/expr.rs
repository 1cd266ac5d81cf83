//! Row-wise arithmetic expressions used by `expr` transformer steps.
//!
//! Grammar, lowest precedence first; every binary operator is
//! left-associative:
//!
//! ```text
//! compare := sum (("<" | "<=" | ">" | ">=" | "==" | "!=") sum)*
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := atom ("^" atom)*
//! atom    := number | variable | call | "(" compare ")"
//! call    := name "(" compare ("," compare)* ")"
//! ```
//!
//! Variables are identifiers (`[A-Za-z_][A-Za-z0-9_.]*`) or backtick-quoted
//! column names such as `` `Lot Area` ``. The variable `x` is always
//! accepted and stands for the column being transformed.
//!
//! Evaluation is elementwise and stateless. Missing operands give a missing
//! result, and so does any operation whose result is not a finite real
//! (division by zero, logarithm of a non-positive value, overflow).
//! Comparisons yield `1` or `0`; `if(c, a, b)` picks `a` when `c != 0`.

use std::fmt;

use thiserror::Error;

/// Name that always binds to the column being transformed.
pub const CURRENT_COLUMN: &str = "x";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("variable `{name}` at position {position} is not a declared input")]
    UndeclaredVariable { name: String, position: usize },
    #[error("function `{name}` at position {position} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        position: usize,
        expected: &'static str,
        found: usize,
    },
    #[error("unknown function `{name}` at position {position}")]
    UnknownFunction { name: String, position: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Log,
    Log1p,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
    Floor,
    Ceil,
    Clip,
    If,
}

impl Function {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "log" => Function::Log,
            "log1p" => Function::Log1p,
            "exp" => Function::Exp,
            "sqrt" => Function::Sqrt,
            "abs" => Function::Abs,
            "min" => Function::Min,
            "max" => Function::Max,
            "floor" => Function::Floor,
            "ceil" => Function::Ceil,
            "clip" => Function::Clip,
            "if" => Function::If,
            _ => return None,
        })
    }

    fn arity(self) -> (usize, usize, &'static str) {
        match self {
            Function::Min | Function::Max => (2, usize::MAX, "2 or more"),
            Function::Clip | Function::If => (3, 3, "3"),
            _ => (1, 1, "1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    /// Index into [`Expression::variables`].
    Variable(usize),
    Negate(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Function, Vec<Expr>),
}

/// A parsed expression together with its source text and variable table.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    root: Expr,
    variables: Vec<String>,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expression {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Distinct variable names in order of first appearance.
    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    /// Parse without checking variable names against declared inputs.
    pub fn parse_unchecked(text: &str) -> Result<Self, ExprError> {
        parse_inner(text, None)
    }

    /// Evaluate over column slices bound to [`Self::variables`] in order.
    /// Missing cells are `NaN`; the result never contains infinities.
    pub fn evaluate(&self, bindings: &[&[f64]], rows: usize) -> Vec<f64> {
        assert_eq!(bindings.len(), self.variables.len());
        let mut out = eval(&self.root, bindings, rows);
        for v in &mut out {
            if !v.is_finite() {
                *v = f64::NAN;
            }
        }
        out
    }

    /// Evaluate one row of values.
    pub fn evaluate_row(&self, values: &[f64]) -> f64 {
        let cols: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
        let bindings: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        self.evaluate(&bindings, 1)[0]
    }
}

/// Parse `text`, requiring every variable to be `x` or one of `inputs`.
pub fn parse_expression(text: &str, inputs: &[String]) -> Result<Expression, ExprError> {
    parse_inner(text, Some(inputs))
}

fn parse_inner(text: &str, inputs: Option<&[String]>) -> Result<Expression, ExprError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        variables: Vec::new(),
        inputs,
        end: text.chars().count(),
    };
    let root = parser.compare()?;
    if let Some(tok) = parser.peek() {
        return Err(ExprError::Syntax {
            position: tok.position,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    Ok(Expression {
        source: text.to_owned(),
        root,
        variables: parser.variables,
    })
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn eval(e: &Expr, bindings: &[&[f64]], rows: usize) -> Vec<f64> {
    match e {
        Expr::Number(v) => vec![*v; rows],
        Expr::Variable(i) => bindings[*i][..rows].to_vec(),
        Expr::Negate(inner) => eval(inner, bindings, rows).into_iter().map(|v| -v).collect(),
        Expr::Binary(op, l, r) => {
            let l = eval(l, bindings, rows);
            let r = eval(r, bindings, rows);
            l.into_iter().zip(r).map(|(a, b)| binary(*op, a, b)).collect()
        }
        Expr::Call(f, args) => {
            let args: Vec<Vec<f64>> = args.iter().map(|a| eval(a, bindings, rows)).collect();
            (0..rows)
                .map(|row| {
                    let vals: Vec<f64> = args.iter().map(|a| a[row]).collect();
                    call(*f, &vals)
                })
                .collect()
        }
    }
}

fn binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        return f64::NAN;
    }
    let v = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => {
            if b == 0.0 {
                f64::NAN
            } else {
                a / b
            }
        }
        BinaryOp::Pow => a.powf(b),
        BinaryOp::Lt => truth(a < b),
        BinaryOp::Le => truth(a <= b),
        BinaryOp::Gt => truth(a > b),
        BinaryOp::Ge => truth(a >= b),
        BinaryOp::Eq => truth(a == b),
        BinaryOp::Ne => truth(a != b),
    };
    finite(v)
}

fn call(f: Function, args: &[f64]) -> f64 {
    if f == Function::If {
        let c = args[0];
        if c.is_nan() {
            return f64::NAN;
        }
        return if c != 0.0 { args[1] } else { args[2] };
    }
    if args.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    let x = args[0];
    let v = match f {
        Function::Log if x > 0.0 => x.ln(),
        Function::Log1p if x > -1.0 => x.ln_1p(),
        Function::Log | Function::Log1p => f64::NAN,
        Function::Exp => x.exp(),
        Function::Sqrt if x >= 0.0 => x.sqrt(),
        Function::Sqrt => f64::NAN,
        Function::Abs => x.abs(),
        Function::Min => args.iter().copied().fold(f64::INFINITY, f64::min),
        Function::Max => args.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Function::Floor => x.floor(),
        Function::Ceil => x.ceil(),
        Function::Clip => {
            let (lo, hi) = (args[1], args[2]);
            if lo > hi {
                f64::NAN
            } else {
                x.clamp(lo, hi)
            }
        }
        Function::If => unreachable!(),
    };
    finite(v)
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Quoted(String),
    Op(BinaryOp),
    Minus,
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number `{v}`"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Quoted(s) => format!("column `{s}`"),
            TokenKind::Op(op) => format!("operator {op:?}"),
            TokenKind::Minus => "`-`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    position: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let syntax = |position: usize, message: String| ExprError::Syntax { position, message };
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let kind = if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let literal: String = chars[start..i].iter().collect();
            let v: f64 = literal
                .parse()
                .map_err(|_| syntax(start, format!("malformed number `{literal}`")))?;
            TokenKind::Number(v)
        } else if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            TokenKind::Ident(chars[start..i].iter().collect())
        } else if c == '`' {
            i += 1;
            let name_start = i;
            while i < chars.len() && chars[i] != '`' {
                i += 1;
            }
            if i == chars.len() {
                return Err(syntax(start, "unterminated quoted column name".into()));
            }
            let name: String = chars[name_start..i].iter().collect();
            i += 1;
            if name.is_empty() {
                return Err(syntax(start, "empty quoted column name".into()));
            }
            TokenKind::Quoted(name)
        } else {
            let next = chars.get(i + 1).copied();
            let (kind, width) = match (c, next) {
                ('<', Some('=')) => (TokenKind::Op(BinaryOp::Le), 2),
                ('>', Some('=')) => (TokenKind::Op(BinaryOp::Ge), 2),
                ('=', Some('=')) => (TokenKind::Op(BinaryOp::Eq), 2),
                ('!', Some('=')) => (TokenKind::Op(BinaryOp::Ne), 2),
                ('<', _) => (TokenKind::Op(BinaryOp::Lt), 1),
                ('>', _) => (TokenKind::Op(BinaryOp::Gt), 1),
                ('+', _) => (TokenKind::Op(BinaryOp::Add), 1),
                ('-', _) => (TokenKind::Minus, 1),
                ('*', _) => (TokenKind::Op(BinaryOp::Mul), 1),
                ('/', _) => (TokenKind::Op(BinaryOp::Div), 1),
                ('^', _) => (TokenKind::Op(BinaryOp::Pow), 1),
                ('(', _) => (TokenKind::LParen, 1),
                (')', _) => (TokenKind::RParen, 1),
                (',', _) => (TokenKind::Comma, 1),
                _ => return Err(syntax(start, format!("unexpected character `{c}`"))),
            };
            i += width;
            kind
        };
        tokens.push(Token { kind, position: start });
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    variables: Vec<String>,
    inputs: Option<&'a [String]>,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn position(&self) -> usize {
        self.peek().map_or(self.end, |t| t.position)
    }

    fn peek_op(&self, ops: &[BinaryOp]) -> Option<BinaryOp> {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Op(op)) if ops.contains(op) => Some(*op),
            Some(TokenKind::Minus) if ops.contains(&BinaryOp::Sub) => Some(BinaryOp::Sub),
            _ => None,
        }
    }

    fn left_assoc(
        &mut self,
        ops: &[BinaryOp],
        operand: fn(&mut Self) -> Result<Expr, ExprError>,
    ) -> Result<Expr, ExprError> {
        let mut lhs = operand(self)?;
        while let Some(op) = self.peek_op(ops) {
            self.pos += 1;
            let rhs = operand(self)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn compare(&mut self) -> Result<Expr, ExprError> {
        use BinaryOp::*;
        self.left_assoc(&[Lt, Le, Gt, Ge, Eq, Ne], Self::sum)
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        self.left_assoc(&[BinaryOp::Add, BinaryOp::Sub], Self::product)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        self.left_assoc(&[BinaryOp::Mul, BinaryOp::Div], Self::unary)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Minus)) {
            self.pos += 1;
            return Ok(Expr::Negate(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        self.left_assoc(&[BinaryOp::Pow], Self::atom)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let position = self.position();
        let Some(tok) = self.next() else {
            return Err(ExprError::Syntax {
                position,
                message: "unexpected end of expression".into(),
            });
        };
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Number(v)),
            TokenKind::LParen => {
                let inner = self.compare()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Quoted(name) => self.variable(name, tok.position),
            TokenKind::Ident(name) => {
                if matches!(self.peek().map(|t| &t.kind), Some(TokenKind::LParen)) {
                    self.pos += 1;
                    self.call(name, tok.position)
                } else {
                    self.variable(name, tok.position)
                }
            }
            other => Err(ExprError::Syntax {
                position: tok.position,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        let position = self.position();
        match self.next().map(|t| t.kind) {
            Some(TokenKind::RParen) => Ok(()),
            _ => Err(ExprError::Syntax {
                position,
                message: "expected `)`".into(),
            }),
        }
    }

    fn call(&mut self, name: String, position: usize) -> Result<Expr, ExprError> {
        let function = Function::lookup(&name).ok_or_else(|| ExprError::UnknownFunction {
            name: name.clone(),
            position,
        })?;
        let mut args = Vec::new();
        if !matches!(self.peek().map(|t| &t.kind), Some(TokenKind::RParen)) {
            loop {
                args.push(self.compare()?);
                if matches!(self.peek().map(|t| &t.kind), Some(TokenKind::Comma)) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect_rparen()?;
        let (lo, hi, expected) = function.arity();
        if args.len() < lo || args.len() > hi {
            return Err(ExprError::Arity {
                name,
                position,
                expected,
                found: args.len(),
            });
        }
        Ok(Expr::Call(function, args))
    }

    fn variable(&mut self, name: String, position: usize) -> Result<Expr, ExprError> {
        if let Some(inputs) = self.inputs {
            if name != CURRENT_COLUMN && !inputs.contains(&name) {
                return Err(ExprError::UndeclaredVariable { name, position });
            }
        }
        let idx = match self.variables.iter().position(|v| *v == name) {
            Some(i) => i,
            None => {
                self.variables.push(name);
                self.variables.len() - 1
            }
        };
        Ok(Expr::Variable(idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn value(text: &str, vars: &[(&str, f64)]) -> f64 {
        let names: Vec<String> = vars.iter().map(|(n, _)| n.to_string()).collect();
        let e = parse_expression(text, &names).unwrap();
        let row: Vec<f64> = e
            .variables()
            .iter()
            .map(|v| vars.iter().find(|(n, _)| n == v).unwrap().1)
            .collect();
        e.evaluate_row(&row)
    }

    #[test]
    fn unary_function_node() {
        let e = parse_expression("log1p(LotArea)", &inputs(&["LotArea"])).unwrap();
        assert_eq!(e.root(), &Expr::Call(Function::Log1p, vec![Expr::Variable(0)]));
        assert_eq!(e.variables(), ["LotArea"]);
    }

    #[test]
    fn conditional_node() {
        let e = parse_expression("if(JWAP > 285, 1, 0)", &inputs(&["JWAP"])).unwrap();
        match e.root() {
            Expr::Call(Function::If, args) => {
                assert_eq!(
                    args[0],
                    Expr::Binary(BinaryOp::Gt, Box::new(Expr::Variable(0)), Box::new(Expr::Number(285.0)))
                );
            }
            other => panic!("expected if node, got {other:?}"),
        }
        assert_eq!(e.evaluate_row(&[300.0]), 1.0);
        assert_eq!(e.evaluate_row(&[100.0]), 0.0);
        assert!(e.evaluate_row(&[f64::NAN]).is_nan());
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expression("a + b * c", &inputs(&["a", "b", "c"])).unwrap();
        assert_eq!(
            e.root(),
            &Expr::Binary(
                BinaryOp::Add,
                Box::new(Expr::Variable(0)),
                Box::new(Expr::Binary(
                    BinaryOp::Mul,
                    Box::new(Expr::Variable(1)),
                    Box::new(Expr::Variable(2))
                ))
            )
        );
        assert_eq!(value("10 - 4 - 3", &[]), 3.0);
        assert_eq!(value("2 ^ 3 ^ 2", &[]), 64.0);
        assert_eq!(value("2 * 3 ^ 2", &[]), 18.0);
        assert_eq!(value("-2 ^ 2", &[]), -4.0);
        assert_eq!(value("1 + 2 > 2", &[]), 1.0);
        assert_eq!(value("8 / 2 / 2", &[]), 2.0);
    }

    #[test]
    fn functions() {
        assert_eq!(value("max(1, 5, 3)", &[]), 5.0);
        assert_eq!(value("min(4, 2)", &[]), 2.0);
        assert_eq!(value("clip(12, 0, 10)", &[]), 10.0);
        assert_eq!(value("floor(2.7) + ceil(2.2)", &[]), 5.0);
        assert_eq!(value("abs(-3) * sqrt(4)", &[]), 6.0);
        assert!((value("exp(log(3))", &[]) - 3.0).abs() < 1e-12);
        assert_eq!(value("`Lot Area` * 2", &[("Lot Area", 4.0)]), 8.0);
        assert_eq!(value("x + 1", &[("x", 1.0)]), 2.0);
    }

    #[test]
    fn domain_errors_become_missing() {
        assert!(value("1 / 0", &[]).is_nan());
        assert!(value("log(0)", &[]).is_nan());
        assert!(value("log(-1)", &[]).is_nan());
        assert!(value("log1p(-1)", &[]).is_nan());
        assert!(value("sqrt(-4)", &[]).is_nan());
        assert!(value("exp(1000)", &[]).is_nan());
        assert!(value("(-8) ^ 0.5", &[]).is_nan());
        assert!(value("10 ^ 400", &[]).is_nan());
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_expression("a +", &inputs(&["a"])),
            Err(ExprError::Syntax { position: 3, .. })
        ));
        assert!(matches!(
            parse_expression("a $ b", &inputs(&["a", "b"])),
            Err(ExprError::Syntax { position: 2, .. })
        ));
        assert!(matches!(
            parse_expression("a + zz", &inputs(&["a"])),
            Err(ExprError::UndeclaredVariable { position: 4, .. })
        ));
        assert!(matches!(
            parse_expression("log(a, a)", &inputs(&["a"])),
            Err(ExprError::Arity { found: 2, .. })
        ));
        assert!(matches!(
            parse_expression("if(a, 1)", &inputs(&["a"])),
            Err(ExprError::Arity { found: 2, .. })
        ));
        assert!(matches!(
            parse_expression("frob(a)", &inputs(&["a"])),
            Err(ExprError::UnknownFunction { .. })
        ));
        assert!(matches!(
            parse_expression("(a", &inputs(&["a"])),
            Err(ExprError::Syntax { .. })
        ));
        assert!(matches!(
            parse_expression("a b", &inputs(&["a", "b"])),
            Err(ExprError::Syntax { .. })
        ));
        assert!(matches!(parse_expression("`oops", &[]), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn variables_are_deduplicated() {
        let e = parse_expression("a * a + b", &inputs(&["a", "b"])).unwrap();
        assert_eq!(e.variables(), ["a", "b"]);
    }
}
