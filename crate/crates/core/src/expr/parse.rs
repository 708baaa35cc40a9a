use super::{Ast, BinOp, ExprError, Func, Node};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn syntax(offset: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent only when followed by digits, so that "2e" stays 2·e-ident
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
                let s = &text[start..i];
                let v: f64 = s
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number `{s}`")))?;
                if !v.is_finite() {
                    return Err(syntax(start, format!("number `{s}` overflows")));
                }
                out.push(Token {
                    tok: Tok::Num(v),
                    offset: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(text[start..i].to_string()),
                    offset: start,
                });
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        i += 1;
        out.push(Token { tok, offset: start });
    }
    out.push(Token {
        tok: Tok::End,
        offset: text.len(),
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    arity: usize,
    text: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].offset
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => {
                    self.bump();
                    BinOp::Mul
                }
                Tok::Slash => {
                    self.bump();
                    BinOp::Div
                }
                // juxtaposition: "2x", "x^2 (1 - x^2)"
                Tok::Num(_) | Tok::Ident(_) | Tok::LParen => BinOp::Mul,
                _ => return Ok(lhs),
            };
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let at = self.offset();
        let exponent = self.unary()?;
        let value = fold_constant(&exponent)
            .ok_or_else(|| syntax(at, "exponent must be a constant expression"))?;
        Ok(Node::Pow(Box::new(base), value))
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let Token { tok, offset } = self.bump();
        match tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(syntax(self.offset(), format!("expected `(` after `{name}`")));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Node::Const(std::f64::consts::PI));
                }
                self.variable(&name, offset).map(Node::Var)
            }
            Tok::End => Err(syntax(offset, "unexpected end of input")),
            other => Err(syntax(offset, format!("unexpected token {other:?}"))),
        }
    }

    fn variable(&self, name: &str, offset: usize) -> Result<usize, ExprError> {
        let idx = match name {
            "x" if self.arity <= 3 => 0,
            "y" if self.arity <= 3 => 1,
            "z" if self.arity <= 3 => 2,
            _ => {
                let digits = name.strip_prefix('x').filter(|d| {
                    !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()) && !d.starts_with('0')
                });
                match digits.and_then(|d| d.parse::<usize>().ok()) {
                    Some(k) => k - 1,
                    None => {
                        return Err(ExprError::UnknownIdentifier {
                            name: name.to_string(),
                            offset,
                        })
                    }
                }
            }
        };
        if idx >= self.arity {
            return Err(ExprError::ArityMismatch {
                name: name.to_string(),
                arity: self.arity,
            });
        }
        Ok(idx)
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.offset(), "expected `)`"))
        }
    }
}

fn fold_constant(node: &Node) -> Option<f64> {
    let v = match node {
        Node::Const(c) => *c,
        Node::Var(_) => return None,
        Node::Neg(a) => -fold_constant(a)?,
        Node::Call(f, a) => super::apply_func(node, *f, fold_constant(a)?).ok()?,
        Node::Binary(op, a, b) => {
            let (x, y) = (fold_constant(a)?, fold_constant(b)?);
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            }
        }
        Node::Pow(a, e) => super::pow_value(fold_constant(a)?, *e),
    };
    v.is_finite().then_some(v)
}

/// Parses `text` as an expression in `arity` variables.
pub fn parse(text: &str, arity: usize) -> Result<Ast, ExprError> {
    if text.trim().is_empty() {
        return Err(syntax(0, "empty expression"));
    }
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        arity,
        text,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        let at = p.offset();
        return Err(syntax(
            at,
            format!("unexpected trailing input `{}`", &p.text[at..]),
        ));
    }
    Ast::new(root, arity)
}
