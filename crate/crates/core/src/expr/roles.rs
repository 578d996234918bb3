use super::{BinOp, Expr, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ParamRole {
    Linear,
    Nonlinear,
}

/// Per-parameter role tags, indexed by parameter number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRoles {
    roles: Vec<ParamRole>,
}

impl ParamRoles {
    pub fn new(roles: Vec<ParamRole>) -> ParamRoles {
        ParamRoles { roles }
    }

    pub fn as_slice(&self) -> &[ParamRole] {
        &self.roles
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn linear(&self) -> Vec<usize> {
        self.indices(ParamRole::Linear)
    }

    pub fn nonlinear(&self) -> Vec<usize> {
        self.indices(ParamRole::Nonlinear)
    }

    fn indices(&self, role: ParamRole) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter_map(|(i, r)| (*r == role).then_some(i))
            .collect()
    }

    /// Assembles a full parameter vector from linear and nonlinear parts.
    pub fn assemble(&self, w: &[f64], q: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; self.roles.len()];
        let (mut wi, mut qi) = (0, 0);
        for (i, r) in self.roles.iter().enumerate() {
            match r {
                ParamRole::Linear => {
                    theta[i] = w[wi];
                    wi += 1;
                }
                ParamRole::Nonlinear => {
                    theta[i] = q[qi];
                    qi += 1;
                }
            }
        }
        theta
    }

    /// Splits a full parameter vector into `(w, q)`.
    pub fn split(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut w = Vec::new();
        let mut q = Vec::new();
        for (r, v) in self.roles.iter().zip(theta) {
            match r {
                ParamRole::Linear => w.push(*v),
                ParamRole::Nonlinear => q.push(*v),
            }
        }
        (w, q)
    }
}

fn mark_nonlinear_contexts(e: &Expr, inside: bool, nonlinear: &mut [bool]) {
    match e {
        Expr::Param(i) => {
            if inside {
                nonlinear[*i] = true;
            }
        }
        Expr::Const(_) | Expr::Var(_) => {}
        Expr::Func(_, a) => mark_nonlinear_contexts(a, true, nonlinear),
        Expr::Neg(a) => mark_nonlinear_contexts(a, inside, nonlinear),
        Expr::Add(v) | Expr::Mul(v) => v
            .iter()
            .for_each(|c| mark_nonlinear_contexts(c, inside, nonlinear)),
        Expr::Binary(BinOp::Sub, a, b) => {
            mark_nonlinear_contexts(a, inside, nonlinear);
            mark_nonlinear_contexts(b, inside, nonlinear);
        }
        Expr::Binary(BinOp::Div, a, b) => {
            mark_nonlinear_contexts(a, inside, nonlinear);
            mark_nonlinear_contexts(b, true, nonlinear);
        }
        Expr::Binary(BinOp::Pow, a, b) => {
            mark_nonlinear_contexts(a, true, nonlinear);
            mark_nonlinear_contexts(b, true, nonlinear);
        }
    }
}

fn linear_params_in(e: &Expr, nonlinear: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    e.visit(&mut |n| {
        if let Expr::Param(i) = n {
            if !nonlinear[*i] {
                out.push(*i);
            }
        }
    });
    out
}

/// Marks products of two or more factors that each carry a still-linear
/// parameter. Returns whether anything changed.
fn mark_coupled_products(e: &Expr, nonlinear: &mut [bool]) -> bool {
    let mut changed = false;
    // innermost products first, so outer factors see the resolved roles
    for c in e.children() {
        changed |= mark_coupled_products(c, nonlinear);
    }
    if let Expr::Mul(factors) = e {
        let carrying: Vec<Vec<usize>> = factors
            .iter()
            .map(|f| linear_params_in(f, nonlinear))
            .filter(|ps| !ps.is_empty())
            .collect();
        if carrying.len() >= 2 {
            for i in carrying.into_iter().flatten() {
                changed |= !nonlinear[i];
                nonlinear[i] = true;
            }
        }
    }
    changed
}

/// A parameter is nonlinear when it sits inside a function argument, a
/// denominator or a power (base or exponent), or when it multiplies another
/// factor that carries a linear parameter. The remaining parameters enter
/// the expression affinely.
pub fn classify_param_roles(s: &Skeleton) -> ParamRoles {
    let mut nonlinear = vec![false; s.param_count()];
    mark_nonlinear_contexts(s.root(), false, &mut nonlinear);
    while mark_coupled_products(s.root(), &mut nonlinear) {}
    ParamRoles::new(
        nonlinear
            .into_iter()
            .map(|n| if n { ParamRole::Nonlinear } else { ParamRole::Linear })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::ParamRole::{Linear, Nonlinear};
    use super::*;
    use crate::expr::parse;

    fn roles(t: &str) -> Vec<ParamRole> {
        classify_param_roles(&parse(t).unwrap()).as_slice().to_vec()
    }

    #[test]
    fn affine_parameters_are_linear() {
        assert_eq!(roles("params[0]+params[1]*x"), [Linear, Linear]);
    }

    #[test]
    fn function_argument_is_nonlinear() {
        assert_eq!(roles("exp(params[0]*x)"), [Nonlinear]);
    }

    #[test]
    fn exponent_is_nonlinear() {
        assert_eq!(roles("params[0]*x^params[1]"), [Linear, Nonlinear]);
    }

    #[test]
    fn coupled_product_is_nonlinear() {
        assert_eq!(roles("params[0]*params[1]*x"), [Nonlinear, Nonlinear]);
    }

    #[test]
    fn coefficient_of_nonlinear_basis_stays_linear() {
        assert_eq!(
            roles("params[0]+params[1]*sin(params[2]*x)"),
            [Linear, Linear, Nonlinear]
        );
        assert_eq!(roles("params[0]*x/(params[1]+x)"), [Linear, Nonlinear]);
    }

    #[test]
    fn coupling_resolves_after_inner_marking() {
        // the inner product is coupled; once marked, params[0] scales a q-only factor
        assert_eq!(
            roles("params[0]*(x + params[1]*params[2])"),
            [Linear, Nonlinear, Nonlinear]
        );
    }

    #[test]
    fn split_and_assemble_are_inverse() {
        let r = classify_param_roles(&parse("params[0]+params[1]*sin(params[2]*x)").unwrap());
        let theta = r.assemble(&[1.0, 3.0], &[2.0]);
        assert_eq!(theta, vec![1.0, 3.0, 2.0]);
        assert_eq!(r.split(&theta), (vec![1.0, 3.0], vec![2.0]));
    }
}
