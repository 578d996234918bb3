use super::{BinOp, Expr};

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(_) | Expr::Binary(BinOp::Sub, ..) => 1,
        Expr::Mul(_) | Expr::Binary(BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Const(c) if c.is_sign_negative() => 3,
        Expr::Binary(BinOp::Pow, ..) => 4,
        Expr::Const(_) | Expr::Param(_) | Expr::Var(_) | Expr::Func(..) => 5,
    }
}

pub(crate) fn format_literal(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn write(e: &Expr, names: &[String], min_prec: u8, out: &mut String) {
    let wrap = prec(e) < min_prec;
    if wrap {
        out.push('(');
    }
    match e {
        Expr::Const(c) => out.push_str(&format_literal(*c)),
        Expr::Param(i) => {
            out.push_str("params[");
            out.push_str(&i.to_string());
            out.push(']');
        }
        Expr::Var(v) => out.push_str(&names[*v]),
        Expr::Neg(a) => {
            out.push('-');
            write(a, names, 3, out);
        }
        Expr::Func(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write(a, names, 0, out);
            out.push(')');
        }
        Expr::Add(v) => {
            for (i, c) in v.iter().enumerate() {
                if i > 0 {
                    out.push_str(" + ");
                }
                // a nested sum would be spliced by the parser and a later
                // difference would absorb the preceding terms
                let grouped = matches!(c, Expr::Add(_)) || (i > 0 && matches!(c, Expr::Binary(BinOp::Sub, ..)));
                write(c, names, if grouped { 6 } else { 1 }, out);
            }
        }
        Expr::Mul(v) => {
            for (i, c) in v.iter().enumerate() {
                if i > 0 {
                    out.push('*');
                }
                let need = if i == 0 && !matches!(c, Expr::Mul(_)) { 2 } else { 3 };
                write(c, names, need, out);
            }
        }
        Expr::Binary(BinOp::Sub, a, b) => {
            write(a, names, 1, out);
            out.push_str(" - ");
            write(b, names, 2, out);
        }
        Expr::Binary(BinOp::Div, a, b) => {
            write(a, names, 2, out);
            out.push('/');
            write(b, names, 3, out);
        }
        Expr::Binary(BinOp::Pow, a, b) => {
            write(a, names, 5, out);
            out.push('^');
            write(b, names, 3, out);
        }
    }
    if wrap {
        out.push(')');
    }
}

/// Deterministic rendering in the exchange grammar. Re-parsing the output
/// reproduces the same tree for any tree the parser can produce.
pub(crate) fn render(e: &Expr, names: &[String]) -> String {
    let mut out = String::new();
    write(e, names, 0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use crate::expr::{canonicalize, parse, parse_with_vars};

    #[test]
    fn round_trips_examples() {
        for t in [
            "params[0] + params[1]*sin(params[2]*x)",
            "-x^2",
            "(-2)^x",
            "x^-2",
            "a/b*c",
            "c*(a/b)",
            "a - (b - c)",
            "a + (b - c)",
            "(b - c) + a",
            "a - -b",
            "x^y^z",
            "(x^y)^z",
            "-(a*b)",
            "1e-7*x + 1.5e20",
            "exp(-params[0]*t)*cos(params[1]*t)",
        ] {
            let s = parse(t).unwrap();
            let again = parse(&s.to_string()).unwrap();
            assert_eq!(s, again, "{t} -> {s}");
            let c = canonicalize(&s);
            assert_eq!(parse_with_vars(&c.to_string(), c.variable_names()).unwrap(), c, "canonical {c}");
        }
    }

    #[test]
    fn renders_canonical_spacing() {
        let s = canonicalize(&parse("x*params[1] + params[0]").unwrap());
        assert_eq!(s.to_string(), "params[0] + params[1]*x");
    }
}
