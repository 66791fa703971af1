use super::{BinaryOp, DomainError, Expr, ExprError, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Slot(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// An expression flattened to postfix form with variables resolved to slot
/// indices. Evaluation is a single pass over a value stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    depth: usize,
}

impl Program {
    /// Compiles `e` against an ordered slot list. Every free variable of `e`
    /// must appear in `slots`.
    pub fn compile<S: AsRef<str>>(e: &Expr, slots: &[S]) -> Result<Self, ExprError> {
        let mut ops = Vec::with_capacity(e.size());
        emit(e, slots, &mut ops)?;
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Slot(_) => depth += 1,
                Op::Unary(_) => {}
                Op::Binary(_) => depth -= 1,
            }
            max_depth = max_depth.max(depth);
        }
        Ok(Program { ops, depth: max_depth })
    }

    /// A program that always yields `value`.
    pub fn constant(value: f64) -> Self {
        Program { ops: vec![Op::Const(value)], depth: 1 }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(v)] => Some(*v),
            _ => None,
        }
    }

    pub fn eval(&self, slots: &[f64]) -> Result<f64, DomainError> {
        if let [Op::Const(v)] = self.ops.as_slice() {
            return Ok(*v);
        }
        let mut stack = Vec::with_capacity(self.depth);
        for op in &self.ops {
            match *op {
                Op::Const(v) => stack.push(v),
                Op::Slot(i) => stack.push(slots[i]),
                Op::Unary(u) => {
                    let a = stack.pop().expect("well-formed program");
                    stack.push(u.apply(a)?);
                }
                Op::Binary(b) => {
                    let rhs = stack.pop().expect("well-formed program");
                    let lhs = stack.pop().expect("well-formed program");
                    stack.push(b.apply(lhs, rhs)?);
                }
            }
        }
        Ok(stack.pop().expect("well-formed program"))
    }
}

fn emit<S: AsRef<str>>(e: &Expr, slots: &[S], ops: &mut Vec<Op>) -> Result<(), ExprError> {
    match e {
        Expr::Const(v) => ops.push(Op::Const(*v)),
        Expr::Var(name) => {
            let idx = slots
                .iter()
                .position(|s| s.as_ref() == name)
                .ok_or_else(|| ExprError::Unbound(name.clone()))?;
            ops.push(Op::Slot(idx));
        }
        Expr::Unary(op, a) => {
            emit(a, slots, ops)?;
            ops.push(Op::Unary(*op));
        }
        Expr::Binary(op, a, b) => {
            emit(a, slots, ops)?;
            emit(b, slots, ops)?;
            ops.push(Op::Binary(*op));
        }
    }
    Ok(())
}
