use super::{binary, BinOp, Dual, EvalError, Expr, Func, Scalar};

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Bin(BinOp, usize),
    Call(Func, usize),
}

/// An expression compiled to postfix form with identifiers resolved to
/// argument slots. Evaluation avoids name lookups, which matters inside
/// integrator right-hand sides.
#[derive(Clone, Debug)]
pub struct Program {
    ops: Vec<Op>,
    depth: usize,
    arity: usize,
    /// Printed subexpressions referenced by domain errors.
    sites: Vec<String>,
    source: Expr,
}

const INLINE_STACK: usize = 32;

impl Program {
    /// Compiles `expr` for the ordered argument names `slots`. Fails with the
    /// first identifier that is not among them.
    pub fn compile(expr: &Expr, slots: &[&str]) -> Result<Program, String> {
        let mut prog = Program {
            ops: Vec::new(),
            depth: 0,
            arity: slots.len(),
            sites: Vec::new(),
            source: expr.clone(),
        };
        let mut depth = 0;
        prog.emit(expr, slots, &mut depth)?;
        Ok(prog)
    }

    fn emit(&mut self, e: &Expr, slots: &[&str], depth: &mut usize) -> Result<(), String> {
        let push = |p: &mut Program, depth: &mut usize| {
            *depth += 1;
            p.depth = p.depth.max(*depth);
        };
        match e {
            Expr::Num(v) => {
                self.ops.push(Op::Const(*v));
                push(self, depth);
            }
            Expr::Pi => {
                self.ops.push(Op::Const(std::f64::consts::PI));
                push(self, depth);
            }
            Expr::Var(name) => {
                let idx = slots.iter().position(|s| s == name).ok_or_else(|| name.clone())?;
                self.ops.push(Op::Load(idx));
                push(self, depth);
            }
            Expr::Neg(a) => {
                self.emit(a, slots, depth)?;
                self.ops.push(Op::Neg);
            }
            Expr::Binary(op, a, b) => {
                self.emit(a, slots, depth)?;
                self.emit(b, slots, depth)?;
                self.sites.push(e.to_string());
                self.ops.push(Op::Bin(*op, self.sites.len() - 1));
                *depth -= 1;
            }
            Expr::Call(f, a) => {
                self.emit(a, slots, depth)?;
                self.sites.push(e.to_string());
                self.ops.push(Op::Call(*f, self.sites.len() - 1));
            }
        }
        Ok(())
    }

    pub fn source(&self) -> &Expr {
        &self.source
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval<S: Scalar>(&self, args: &[S]) -> Result<S, EvalError> {
        debug_assert_eq!(args.len(), self.arity);
        if self.depth <= INLINE_STACK {
            let mut stack = [S::constant(0.0); INLINE_STACK];
            self.run(args, &mut stack)
        } else {
            let mut stack = vec![S::constant(0.0); self.depth];
            self.run(args, &mut stack)
        }
    }

    fn run<S: Scalar>(&self, args: &[S], stack: &mut [S]) -> Result<S, EvalError> {
        let mut sp = 0;
        for op in &self.ops {
            match *op {
                Op::Const(v) => {
                    stack[sp] = S::constant(v);
                    sp += 1;
                }
                Op::Load(i) => {
                    stack[sp] = args[i];
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Bin(bop, site) => {
                    let y = stack[sp - 1];
                    let x = stack[sp - 2];
                    sp -= 1;
                    stack[sp - 1] = binary(bop, x, y).ok_or_else(|| self.domain(bop.symbol(), y.value(), site))?;
                }
                Op::Call(f, site) => {
                    let x = stack[sp - 1];
                    if f.out_of_domain(x.value()) {
                        return Err(self.domain(f.name(), x.value(), site));
                    }
                    stack[sp - 1] = f.apply(x);
                }
            }
        }
        Ok(stack[0])
    }

    fn domain(&self, operation: &str, argument: f64, site: usize) -> EvalError {
        EvalError::Domain {
            operation: operation.to_string(),
            argument,
            subexpr: self.sites[site].clone(),
        }
    }

    /// Value and all partial derivatives with respect to the arguments.
    pub fn gradient(&self, args: &[f64]) -> Result<(f64, Vec<f64>), EvalError> {
        let mut grad = Vec::with_capacity(args.len());
        let mut value = 0.0;
        let mut duals: Vec<Dual> = args.iter().map(|&a| Dual::constant(a)).collect();
        for i in 0..args.len() {
            duals[i].eps = 1.0;
            let d = self.eval(&duals)?;
            duals[i].eps = 0.0;
            value = d.re;
            grad.push(d.eps);
        }
        if args.is_empty() {
            value = self.eval::<f64>(&[])?;
        }
        Ok((value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse, Bindings};
    use super::*;

    #[test]
    fn compiled_matches_tree_walk() {
        let e = parse("exp(-x1) * cos(t*a) + x2^3 / (1 + x1^2)").unwrap();
        let p = Program::compile(&e, &["x1", "x2", "t", "a"]).unwrap();
        let args = [0.3, -1.2, 2.0, 0.7];
        let b: Bindings = [("x1", 0.3), ("x2", -1.2), ("t", 2.0), ("a", 0.7)]
            .into_iter()
            .collect();
        assert_eq!(p.eval(&args).unwrap(), e.eval(&b).unwrap());
        let (_, g) = p.gradient(&args).unwrap();
        assert_eq!(g[0], e.partial("x1", &b).unwrap());
        assert_eq!(g[3], e.partial("a", &b).unwrap());
    }

    #[test]
    fn undeclared_identifier_rejected() {
        let e = parse("x1 + b").unwrap();
        assert_eq!(Program::compile(&e, &["x1"]).unwrap_err(), "b");
    }

    #[test]
    fn deep_expressions_use_heap_stack() {
        let src = (0..40).map(|_| "(1 + ").collect::<String>() + "x1" + &")".repeat(40);
        let src = src.replace("(1 + ", "(x1 + (1 + ");
        let src = src + &")".repeat(40);
        let e = parse(&src).unwrap();
        let p = Program::compile(&e, &["x1"]).unwrap();
        let b = Bindings::new().with("x1", 2.0);
        assert_eq!(p.eval(&[2.0]).unwrap(), e.eval(&b).unwrap());
    }

    #[test]
    fn domain_error_names_subexpression() {
        let e = parse("x1 * log(x2 - 1)").unwrap();
        let p = Program::compile(&e, &["x1", "x2"]).unwrap();
        match p.eval(&[1.0, 0.5]).unwrap_err() {
            EvalError::Domain { operation, subexpr, .. } => {
                assert_eq!(operation, "log");
                assert_eq!(subexpr, "log(x2 - 1)");
            }
            other => panic!("{other:?}"),
        }
    }
}
