use super::{Expr, Func, ParseError, Skeleton, SkeletonError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Param(usize),
    Op(char),
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent only when followed by digits, so `2e` stays a syntax error
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
            let v: f64 = s.parse().map_err(|_| ParseError::Syntax {
                pos: start,
                message: format!("malformed number `{s}`"),
            })?;
            if !v.is_finite() {
                return Err(ParseError::Syntax {
                    pos: start,
                    message: format!("literal `{s}` is not finite"),
                });
            }
            out.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let name = &text[start..i];
            if name == "params" {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'[' {
                    j += 1;
                    let ds = j;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    if ds == j || j >= bytes.len() || bytes[j] != b']' {
                        return Err(ParseError::Syntax {
                            pos: start,
                            message: "expected params[<index>]".into(),
                        });
                    }
                    let idx: usize = text[ds..j].parse().map_err(|_| ParseError::Syntax {
                        pos: ds,
                        message: "parameter index too large".into(),
                    })?;
                    out.push((start, Tok::Param(idx)));
                    i = j + 1;
                    continue;
                }
            }
            out.push((start, Tok::Ident(name.to_string())));
            continue;
        }
        match c {
            '*' if bytes.get(i + 1) == Some(&b'*') => {
                out.push((start, Tok::Op('^')));
                i += 2;
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push((start, Tok::Op(c)));
                i += 1;
            }
            '(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            _ => {
                return Err(ParseError::Syntax {
                    pos: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(out)
}

enum Vars<'a> {
    Infer(Vec<String>),
    Fixed(&'a [String]),
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    vars: Vars<'a>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            pos: self.offset(),
            message: message.into(),
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Op('+')) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::add(lhs, rhs);
                }
                Some(Tok::Op('-')) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::sub(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Op('*')) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::mul(lhs, rhs);
                }
                Some(Tok::Op('/')) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::div(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary := ('-' | '+') unary | power
    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                // a signed numeral is a single literal
                Ok(match self.unary()? {
                    Expr::Const(c) => Expr::Const(-c),
                    other => Expr::neg(other),
                })
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // power := primary ('^' unary)?   (right associative)
    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::pow(base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some((at, tok)) = self.toks.get(self.pos).cloned() else {
            return Err(self.err("unexpected end of expression"));
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Param(i) => Ok(Expr::Param(i)),
            Tok::LParen => {
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(self.err("expected `)`")),
                }
            }
            Tok::Ident(name) => {
                if let Some(Tok::LParen) = self.peek() {
                    let Some(f) = Func::from_name(&name) else {
                        return Err(ParseError::UnknownIdentifier { name, pos: at });
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    match self.peek() {
                        Some(Tok::RParen) => {
                            self.pos += 1;
                            Ok(Expr::func(f, arg))
                        }
                        _ => Err(self.err("expected `)` after function argument")),
                    }
                } else if Func::from_name(&name).is_some() || name == "params" {
                    Err(ParseError::Syntax {
                        pos: at,
                        message: format!("`{name}` must be followed by an argument"),
                    })
                } else {
                    self.variable(name, at)
                }
            }
            Tok::Op(c) => Err(ParseError::Syntax {
                pos: at,
                message: format!("dangling operator `{c}`"),
            }),
            Tok::RParen => Err(ParseError::Syntax {
                pos: at,
                message: "unbalanced `)`".into(),
            }),
        }
    }

    fn variable(&mut self, name: String, at: usize) -> Result<Expr, ParseError> {
        match &mut self.vars {
            Vars::Fixed(names) => names
                .iter()
                .position(|n| *n == name)
                .map(Expr::Var)
                .ok_or(ParseError::UnknownIdentifier { name, pos: at }),
            Vars::Infer(names) => {
                let idx = match names.iter().position(|n| *n == name) {
                    Some(i) => i,
                    None => {
                        names.push(name);
                        names.len() - 1
                    }
                };
                Ok(Expr::Var(idx))
            }
        }
    }

    fn finish(mut self) -> Result<(Expr, Vars<'static>), ParseError>
    where
        Self: Sized,
    {
        if self.toks.is_empty() {
            return Err(ParseError::Empty);
        }
        let root = self.expr()?;
        if self.pos < self.toks.len() {
            return Err(match self.peek() {
                Some(Tok::RParen) => self.err("unbalanced `)`"),
                _ => self.err("unexpected trailing input"),
            });
        }
        let vars = match self.vars {
            Vars::Infer(v) => Vars::Infer(v),
            Vars::Fixed(_) => Vars::Infer(Vec::new()),
        };
        Ok((root, vars))
    }
}

fn run(text: &str, vars: Vars<'_>) -> Result<(Expr, Vars<'static>), ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let toks = lex(text)?;
    Parser {
        toks,
        pos: 0,
        end: text.len(),
        vars,
    }
    .finish()
}

fn into_skeleton(root: Expr, names: Vec<String>) -> Result<Skeleton, ParseError> {
    Skeleton::new(root, names).map_err(|e| match e {
        SkeletonError::ParamGap(missing) => ParseError::ParamGap { missing, max: 0 },
        SkeletonError::UnknownVariable(_) | SkeletonError::NonFiniteLiteral => ParseError::Syntax {
            pos: 0,
            message: e.to_string(),
        },
    })
}

fn max_param(e: &Expr) -> usize {
    let mut m = 0;
    e.visit(&mut |n| {
        if let Expr::Param(i) = n {
            m = m.max(*i);
        }
    });
    m
}

/// Parses an expression, collecting variable names in order of first
/// appearance.
pub fn parse(text: &str) -> Result<Skeleton, ParseError> {
    let (root, vars) = run(text, Vars::Infer(Vec::new()))?;
    let Vars::Infer(names) = vars else {
        unreachable!()
    };
    let max = max_param(&root);
    into_skeleton(root, names).map_err(|e| with_max(e, max))
}

/// Parses an expression whose identifiers must come from `variables`. The
/// resulting skeleton carries the full variable list, so `Var(i)` indexes
/// the i-th data column.
pub fn parse_with_vars(text: &str, variables: &[String]) -> Result<Skeleton, ParseError> {
    let (root, _) = run(text, Vars::Fixed(variables))?;
    let max = max_param(&root);
    into_skeleton(root, variables.to_vec()).map_err(|e| with_max(e, max))
}

/// Parses a sub-expression (e.g. a critic's edit target). Parameter indices
/// need not be contiguous.
pub fn parse_fragment(text: &str, variables: &[String]) -> Result<Expr, ParseError> {
    run(text, Vars::Fixed(variables)).map(|(root, _)| root)
}

fn with_max(e: ParseError, max: usize) -> ParseError {
    match e {
        ParseError::ParamGap { missing, .. } => ParseError::ParamGap { missing, max },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_param_sine() {
        let s = parse("params[0]*sin(params[1]*x)").unwrap();
        assert_eq!(s.param_count(), 2);
        assert_eq!(s.variable_names(), ["x".to_string()]);
    }

    #[test]
    fn unbalanced_paren_is_syntax_error() {
        assert!(matches!(parse("sin(x"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("sin(x))"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn dangling_operator_is_syntax_error() {
        assert!(matches!(parse("x +"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("* x"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn unknown_function_is_rejected() {
        let err = parse("params[0]+foo(x)").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdentifier {
                name: "foo".into(),
                pos: 10
            }
        );
    }

    #[test]
    fn parameter_gap_is_rejected() {
        let err = parse("params[2]*x").unwrap_err();
        assert_eq!(err, ParseError::ParamGap { missing: 0, max: 2 });
        assert!(parse("params[0]+params[2]").is_err());
    }

    #[test]
    fn fixed_variables_reject_unknown_names() {
        let vars = vec!["x".to_string(), "v".to_string()];
        let s = parse_with_vars("v*params[0]", &vars).unwrap();
        assert_eq!(s.variable_names(), vars.as_slice());
        assert!(matches!(
            parse_with_vars("z*params[0]", &vars),
            Err(ParseError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        let s = parse("-x^2").unwrap();
        assert_eq!(
            s.root(),
            &Expr::neg(Expr::pow(Expr::Var(0), Expr::Const(2.0)))
        );
        let s = parse("x^2^3").unwrap();
        assert_eq!(
            s.root(),
            &Expr::pow(Expr::Var(0), Expr::pow(Expr::Const(2.0), Expr::Const(3.0)))
        );
        let s = parse("x - x - x").unwrap();
        assert_eq!(
            s.root(),
            &Expr::sub(Expr::sub(Expr::Var(0), Expr::Var(0)), Expr::Var(0))
        );
        let s = parse("x ** 2").unwrap();
        assert_eq!(s.root(), &Expr::pow(Expr::Var(0), Expr::Const(2.0)));
    }

    #[test]
    fn scientific_literals() {
        let s = parse("1.5e-3*x + 2E2").unwrap();
        assert_eq!(
            s.root(),
            &Expr::Add(vec![
                Expr::Mul(vec![Expr::Const(1.5e-3), Expr::Var(0)]),
                Expr::Const(200.0)
            ])
        );
    }

    #[test]
    fn empty_is_rejected() {
        assert_eq!(parse("   "), Err(ParseError::Empty));
    }

    #[test]
    fn fragment_allows_gaps() {
        let vars = vec!["x".to_string()];
        let e = parse_fragment("params[2]*x^4", &vars).unwrap();
        assert_eq!(
            e,
            Expr::Mul(vec![
                Expr::Param(2),
                Expr::pow(Expr::Var(0), Expr::Const(4.0))
            ])
        );
    }
}
