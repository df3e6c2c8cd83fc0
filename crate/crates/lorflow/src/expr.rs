//! Small arithmetic expression language for user-defined fields (ψ, f, χ,
//! barriers). Numbers, the variables x0..x3 and vt, the usual operators with
//! standard precedence (^ right-associative above unary minus, then * /, then
//! + -), and a fixed set of functions.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X0,
    X1,
    X2,
    X3,
    /// ṽ = v⁻¹, the tilt factor; the only normal-dependent input exposed to f.
    Vt,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X0 => "x0",
            Var::X1 => "x1",
            Var::X2 => "x2",
            Var::X3 => "x3",
            Var::Vt => "vt",
        }
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
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
    Pow,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "pow" => Func::Pow,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("parse error at line {line}, column {column}: {message} (expected {expected})")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("evaluation error: {0}")]
pub struct EvalError(pub String);

/// Evaluation environment: ambient coordinates plus the tilt factor ṽ.
#[derive(Debug, Clone, Copy)]
pub struct EvalEnv {
    pub x0: f64,
    pub x: [f64; 3],
    pub vt: f64,
}

impl EvalEnv {
    pub fn point(x0: f64, x: [f64; 3]) -> Self {
        Self { x0, x, vt: 1.0 }
    }
}

impl Expr {
    pub fn eval(&self, env: &EvalEnv) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(c) => *c,
            Expr::Var(Var::X0) => env.x0,
            Expr::Var(Var::X1) => env.x[0],
            Expr::Var(Var::X2) => env.x[1],
            Expr::Var(Var::X3) => env.x[2],
            Expr::Var(Var::Vt) => env.vt,
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(env)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(EvalError(format!("log of non-positive value {a}")));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError(format!("sqrt of negative value {a}")));
                        }
                        a.sqrt()
                    }
                    Func::Tanh => a.tanh(),
                    Func::Abs => a.abs(),
                    Func::Pow => a.powf(args[1].eval(env)?),
                }
            }
        };
        if !v.is_finite() {
            return Err(EvalError("non-finite result".into()));
        }
        Ok(v)
    }

    /// True if the expression references the given variable.
    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) => e.uses(var),
            Expr::Bin(_, a, b) => a.uses(var) || b.uses(var),
            Expr::Call(_, args) => args.iter().any(|a| a.uses(var)),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8, right_of_same: bool) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(e) => {
                // unary minus sits between * / and ^
                let prec = 3;
                let needs = prec < parent || (prec == parent && right_of_same);
                if needs {
                    write!(f, "(-")?;
                    e.fmt_prec(f, prec, false)?;
                    write!(f, ")")
                } else {
                    write!(f, "-")?;
                    e.fmt_prec(f, prec, false)
                }
            }
            Expr::Bin(op, a, b) => {
                let prec = op.precedence();
                let needs = prec < parent || (prec == parent && right_of_same);
                if needs {
                    write!(f, "(")?;
                }
                // ^ is right-associative: the left child needs parens at equal
                // precedence, the right child does not
                let (lr, rr) = if *op == BinOp::Pow { (true, false) } else { (false, true) };
                a.fmt_prec(f, prec + u8::from(*op == BinOp::Pow), lr)?;
                write!(f, "{}", op.symbol())?;
                b.fmt_prec(f, prec, rr)?;
                if needs {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    a.fmt_prec(f, 0, false)?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(n) => format!("number {n}"),
            Token::Ident(s) => format!("identifier '{s}'"),
            Token::Plus => "'+'".into(),
            Token::Minus => "'-'".into(),
            Token::Star => "'*'".into(),
            Token::Slash => "'/'".into(),
            Token::Caret => "'^'".into(),
            Token::LParen => "'('".into(),
            Token::RParen => "')'".into(),
            Token::Comma => "','".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    column: usize,
}

struct Spanned {
    token: Token,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            chars: src.char_indices().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let c = self.chars.next();
        if let Some((_, ch)) = c {
            if ch == '\n' {
                self.line += 1;
                self.column = 1;
            } else {
                self.column += 1;
            }
        }
        c
    }

    fn tokenize(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        while let Some(&(pos, ch)) = self.chars.peek() {
            let (line, column) = (self.line, self.column);
            match ch {
                c if c.is_whitespace() => {
                    self.bump();
                }
                '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => {
                    self.bump();
                    let token = match ch {
                        '+' => Token::Plus,
                        '-' => Token::Minus,
                        '*' => Token::Star,
                        '/' => Token::Slash,
                        '^' => Token::Caret,
                        '(' => Token::LParen,
                        ')' => Token::RParen,
                        _ => Token::Comma,
                    };
                    out.push(Spanned { token, line, column });
                }
                c if c.is_ascii_digit() || c == '.' => {
                    let start = pos;
                    let mut end = pos;
                    let mut seen_exp = false;
                    while let Some(&(p, c2)) = self.chars.peek() {
                        let take = c2.is_ascii_digit()
                            || c2 == '.'
                            || c2 == 'e'
                            || c2 == 'E'
                            || ((c2 == '+' || c2 == '-') && seen_exp && {
                                let prev = self.src[..p].chars().next_back();
                                matches!(prev, Some('e') | Some('E'))
                            });
                        if !take {
                            break;
                        }
                        if c2 == 'e' || c2 == 'E' {
                            seen_exp = true;
                        }
                        end = p + c2.len_utf8();
                        self.bump();
                    }
                    let text = &self.src[start..end];
                    let value: f64 = text.parse().map_err(|_| ParseError {
                        line,
                        column,
                        message: format!("malformed number '{text}'"),
                        expected: "a numeric literal".into(),
                    })?;
                    out.push(Spanned {
                        token: Token::Num(value),
                        line,
                        column,
                    });
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = pos;
                    let mut end = pos;
                    while let Some(&(p, c2)) = self.chars.peek() {
                        if c2.is_ascii_alphanumeric() || c2 == '_' {
                            end = p + c2.len_utf8();
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    out.push(Spanned {
                        token: Token::Ident(self.src[start..end].to_string()),
                        line,
                        column,
                    });
                }
                other => {
                    return Err(ParseError {
                        line,
                        column,
                        message: format!("unexpected character '{other}'"),
                        expected: "a number, identifier, operator, or parenthesis".into(),
                    });
                }
            }
        }
        Ok(out)
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    end_line: usize,
    end_column: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|s| &s.token)
    }

    fn here(&self) -> (usize, usize) {
        self.tokens
            .get(self.pos)
            .map(|s| (s.line, s.column))
            .unwrap_or((self.end_line, self.end_column))
    }

    fn err(&self, expected: &str) -> ParseError {
        let (line, column) = self.here();
        let message = match self.peek() {
            Some(t) => format!("unexpected {}", t.describe()),
            None => "unexpected end of input".into(),
        };
        ParseError {
            line,
            column,
            message,
            expected: expected.into(),
        }
    }

    fn expect(&mut self, want: Token, expected: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(expected))
        }
    }

    // additive := multiplicative (('+' | '-') multiplicative)*
    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // multiplicative := unary (('*' | '/') unary)*
    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // unary := '-' unary | power      (so -2^2 parses as -(2^2))
    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Token::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // power := atom ('^' unary)?      (right-associative, exponent may be signed)
    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(&Token::Caret) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.additive()?;
                self.expect(Token::RParen, "')'")?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Token::LParen, "'(' after function name")?;
                    let mut args = vec![self.additive()?];
                    while self.peek() == Some(&Token::Comma) {
                        self.pos += 1;
                        args.push(self.additive()?);
                    }
                    self.expect(Token::RParen, "')' or ','")?;
                    if args.len() != func.arity() {
                        let (line, column) = self.here();
                        return Err(ParseError {
                            line,
                            column,
                            message: format!(
                                "{} takes {} argument(s), got {}",
                                func.name(),
                                func.arity(),
                                args.len()
                            ),
                            expected: format!("{} argument(s)", func.arity()),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                let var = match name.as_str() {
                    "x0" => Var::X0,
                    "x1" => Var::X1,
                    "x2" => Var::X2,
                    "x3" => Var::X3,
                    "vt" => Var::Vt,
                    _ => {
                        let t = self.tokens.get(self.pos - 1).unwrap();
                        return Err(ParseError {
                            line: t.line,
                            column: t.column,
                            message: format!("unknown identifier '{name}'"),
                            expected: "x0, x1, x2, x3, vt, or a function name".into(),
                        });
                    }
                };
                Ok(Expr::Var(var))
            }
            _ => Err(self.err("a number, variable, function call, '-', or '('")),
        }
    }
}

/// Parse an expression; errors carry line/column and the expected-token set.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let tokens = Lexer::new(text).tokenize()?;
    let end_line = text.lines().count().max(1);
    let end_column = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    let mut parser = Parser {
        tokens,
        pos: 0,
        end_line,
        end_column,
    };
    let expr = parser.additive()?;
    if parser.peek().is_some() {
        return Err(parser.err("end of input"));
    }
    Ok(expr)
}
