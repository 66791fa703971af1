use super::{simplify_binary, simplify_unary, BinaryOp, Expr, UnaryOp};

fn c(v: f64) -> Expr {
    Expr::Const(v)
}

fn call(op: UnaryOp, e: Expr) -> Expr {
    simplify_unary(op, e)
}

fn pow(a: Expr, b: Expr) -> Expr {
    simplify_binary(BinaryOp::Pow, a, b)
}

/// Exact symbolic derivative of `e` with respect to `var`, constant-folded.
pub fn diff(e: &Expr, var: &str) -> Expr {
    match e {
        Expr::Const(_) => c(0.0),
        Expr::Var(name) => c(if name == var { 1.0 } else { 0.0 }),
        Expr::Unary(op, a) => {
            let da = diff(a, var);
            if da.is_zero() {
                return c(0.0);
            }
            let a = (**a).clone();
            let outer = match op {
                UnaryOp::Neg => return -da,
                // d sqrt(a) = a' / (2 sqrt(a))
                UnaryOp::Sqrt => return da / (c(2.0) * call(UnaryOp::Sqrt, a)),
                UnaryOp::Exp => call(UnaryOp::Exp, a),
                UnaryOp::Log => return da / a,
                UnaryOp::Sin => call(UnaryOp::Cos, a),
                UnaryOp::Cos => -call(UnaryOp::Sin, a),
                // 1 - tanh(a)^2
                UnaryOp::Tanh => c(1.0) - pow(call(UnaryOp::Tanh, a), c(2.0)),
            };
            outer * da
        }
        Expr::Binary(op, a, b) => {
            let da = diff(a, var);
            let db = diff(b, var);
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => da + db,
                BinaryOp::Sub => da - db,
                BinaryOp::Mul => da * b + a * db,
                BinaryOp::Div => {
                    if db.is_zero() {
                        da / b
                    } else {
                        (da * b.clone() - a * db) / pow(b, c(2.0))
                    }
                }
                BinaryOp::Pow => diff_pow(a, b, da, db),
            }
        }
    }
}

fn diff_pow(a: Expr, b: Expr, da: Expr, db: Expr) -> Expr {
    if db.is_zero() {
        if da.is_zero() {
            return c(0.0);
        }
        // b * a^(b-1) * a'
        let reduced = match b.as_const() {
            Some(k) => c(k - 1.0),
            None => b.clone() - c(1.0),
        };
        return b * pow(a, reduced) * da;
    }
    let ln_a = call(UnaryOp::Log, a.clone());
    if da.is_zero() {
        // a^b * ln(a) * b'
        return pow(a, b) * ln_a * db;
    }
    // a^b * (b' ln(a) + b a' / a)
    pow(a.clone(), b.clone()) * (db * ln_a + b * da / a)
}
