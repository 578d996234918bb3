//! Random grammar-conforming skeletons for fuzzing and property tests.

use rand::Rng;

use super::{BinOp, Expr, Func, Skeleton};

#[derive(Debug, Clone)]
pub struct RandomSkeletonConfig {
    pub max_depth: usize,
    pub max_params: usize,
    /// Probability of stopping early at an interior level.
    pub leaf_prob: f64,
}

impl Default for RandomSkeletonConfig {
    fn default() -> Self {
        RandomSkeletonConfig {
            max_depth: 4,
            max_params: 4,
            leaf_prob: 0.3,
        }
    }
}

fn leaf<R: Rng + ?Sized>(rng: &mut R, n_vars: usize, cfg: &RandomSkeletonConfig) -> Expr {
    let roll: f64 = rng.random();
    if roll < 0.4 && cfg.max_params > 0 {
        Expr::Param(rng.random_range(0..cfg.max_params))
    } else if roll < 0.8 && n_vars > 0 {
        Expr::Var(rng.random_range(0..n_vars))
    } else {
        let v: f64 = rng.random_range(-3.0..3.0);
        Expr::Const((v * 4.0).round() / 4.0)
    }
}

fn node<R: Rng + ?Sized>(
    rng: &mut R,
    depth: usize,
    n_vars: usize,
    cfg: &RandomSkeletonConfig,
) -> Expr {
    if depth == 0 || rng.random::<f64>() < cfg.leaf_prob {
        return leaf(rng, n_vars, cfg);
    }
    let d = depth - 1;
    match rng.random_range(0..8) {
        0 | 1 => {
            let n = rng.random_range(2..=3);
            (0..n).map(|_| node(rng, d, n_vars, cfg)).reduce(Expr::add).unwrap()
        }
        2 | 3 => {
            let n = rng.random_range(2..=3);
            (0..n).map(|_| node(rng, d, n_vars, cfg)).reduce(Expr::mul).unwrap()
        }
        4 => Expr::Binary(
            if rng.random() { BinOp::Sub } else { BinOp::Div },
            Box::new(node(rng, d, n_vars, cfg)),
            Box::new(node(rng, d, n_vars, cfg)),
        ),
        5 => {
            let exp = match rng.random_range(0..3) {
                0 => Expr::Const(rng.random_range(2..=3) as f64),
                1 if cfg.max_params > 0 => Expr::Param(rng.random_range(0..cfg.max_params)),
                _ => Expr::Const(0.5),
            };
            Expr::pow(node(rng, d, n_vars, cfg), exp)
        }
        6 => match node(rng, d, n_vars, cfg) {
            // the parser reads a signed numeral as one literal
            Expr::Const(c) => Expr::Const(-c),
            other => Expr::neg(other),
        },
        _ => {
            let f = Func::ALL[rng.random_range(0..Func::ALL.len())];
            Expr::func(f, node(rng, d, n_vars, cfg))
        }
    }
}

/// Draws a random skeleton over `variable_names`. Parameter indices are
/// renumbered by first appearance so the result is always valid.
pub fn random_skeleton<R: Rng + ?Sized>(
    rng: &mut R,
    variable_names: &[String],
    cfg: &RandomSkeletonConfig,
) -> Skeleton {
    let raw = node(rng, cfg.max_depth, variable_names.len(), cfg);
    let mut map = vec![usize::MAX; cfg.max_params];
    let mut next = 0;
    raw.visit(&mut |e| {
        if let Expr::Param(i) = e {
            if map[*i] == usize::MAX {
                map[*i] = next;
                next += 1;
            }
        }
    });
    let root = raw.map_params(&|i| map[i]);
    Skeleton::new(root, variable_names.to_vec()).expect("generator emits valid skeletons")
}
