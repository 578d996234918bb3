use std::cmp::Ordering;

use super::eval::fold_binary;
use super::{BinOp, Expr, Skeleton};

fn kind_rank(e: &Expr) -> u8 {
    match e {
        Expr::Const(_) => 0,
        Expr::Param(_) => 1,
        Expr::Var(_) => 2,
        Expr::Func(..) => 3,
        Expr::Neg(_) => 4,
        Expr::Add(_) => 5,
        Expr::Mul(_) => 6,
        Expr::Binary(BinOp::Sub, ..) => 7,
        Expr::Binary(BinOp::Div, ..) => 8,
        Expr::Binary(BinOp::Pow, ..) => 9,
    }
}

/// Total order on subtrees: (kind rank, symbol, children). Parameter
/// indices are deliberately ignored so that ordering does not depend on
/// the numbering it is used to produce.
pub(crate) fn canonical_cmp(a: &Expr, b: &Expr, names: &[String]) -> Ordering {
    kind_rank(a)
        .cmp(&kind_rank(b))
        .then_with(|| match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => x.total_cmp(y),
            (Expr::Var(x), Expr::Var(y)) => names[*x].cmp(&names[*y]),
            (Expr::Func(f, _), Expr::Func(g, _)) => f.name().cmp(g.name()),
            _ => Ordering::Equal,
        })
        .then_with(|| {
            let ca = a.children();
            let cb = b.children();
            for (x, y) in ca.iter().zip(cb.iter()) {
                let o = canonical_cmp(x, y, names);
                if o != Ordering::Equal {
                    return o;
                }
            }
            ca.len().cmp(&cb.len())
        })
}

fn fold_assoc(children: Vec<Expr>, is_add: bool) -> Expr {
    let mut flat = Vec::with_capacity(children.len());
    for c in children {
        match (c, is_add) {
            (Expr::Add(inner), true) | (Expr::Mul(inner), false) => flat.extend(inner),
            (other, _) => flat.push(other),
        }
    }
    let (consts, mut rest): (Vec<Expr>, Vec<Expr>) =
        flat.into_iter().partition(|e| matches!(e, Expr::Const(_)));
    if consts.len() > 1 || (consts.len() == 1 && rest.is_empty()) {
        let vals = consts.iter().map(|e| match e {
            Expr::Const(c) => *c,
            _ => unreachable!(),
        });
        let folded: f64 = if is_add { vals.sum() } else { vals.product() };
        if folded.is_finite() {
            rest.push(Expr::Const(folded));
        } else {
            rest.extend(consts);
        }
    } else {
        rest.extend(consts);
    }
    if rest.len() == 1 {
        return rest.pop().unwrap();
    }
    if is_add {
        Expr::Add(rest)
    } else {
        Expr::Mul(rest)
    }
}

/// Folds literal-only subtrees, flattens nested sums/products and sorts
/// commutative operands. Parameter indices are left untouched.
pub fn normalize(e: &Expr, names: &[String]) -> Expr {
    let out = match e {
        Expr::Const(_) | Expr::Param(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => match normalize(a, names) {
            Expr::Const(c) => Expr::Const(-c),
            other => Expr::neg(other),
        },
        Expr::Func(f, a) => match normalize(a, names) {
            Expr::Const(c) if f.apply(c).is_finite() => Expr::Const(f.apply(c)),
            other => Expr::func(*f, other),
        },
        Expr::Binary(op, a, b) => {
            let a = normalize(a, names);
            let b = normalize(b, names);
            match (&a, &b) {
                (Expr::Const(x), Expr::Const(y)) if fold_binary(*op, *x, *y).is_finite() => {
                    Expr::Const(fold_binary(*op, *x, *y))
                }
                _ => Expr::Binary(*op, Box::new(a), Box::new(b)),
            }
        }
        Expr::Add(v) => fold_assoc(v.iter().map(|c| normalize(c, names)).collect(), true),
        Expr::Mul(v) => fold_assoc(v.iter().map(|c| normalize(c, names)).collect(), false),
    };
    match out {
        Expr::Add(mut v) => {
            v.sort_by(|x, y| canonical_cmp(x, y, names));
            Expr::Add(v)
        }
        Expr::Mul(mut v) => {
            v.sort_by(|x, y| canonical_cmp(x, y, names));
            Expr::Mul(v)
        }
        other => other,
    }
}

/// Canonical form of a skeleton. Returns the canonical skeleton and the
/// renumbering map (`map[old] = new`).
pub fn canonicalize_with_map(s: &Skeleton) -> (Skeleton, Vec<usize>) {
    let names = s.variable_names();
    let root = normalize(s.root(), names);
    let mut map = vec![usize::MAX; s.param_count()];
    let mut next = 0;
    root.visit(&mut |e| {
        if let Expr::Param(i) = e {
            if map[*i] == usize::MAX {
                map[*i] = next;
                next += 1;
            }
        }
    });
    // folding never removes a parameter reference, so every slot is filled
    debug_assert!(map.iter().all(|&m| m != usize::MAX));
    let root = root.map_params(&|i| map[i]);
    let skel = Skeleton::new(root, names.to_vec()).expect("canonicalization preserves validity");
    (skel, map)
}

pub fn canonicalize(s: &Skeleton) -> Skeleton {
    canonicalize_with_map(s).0
}
