//! Textual expressions over a declared variable/parameter set, with exact
//! first derivatives via forward-mode dual numbers and exact symbolic
//! partial derivatives for higher-order needs (Jacobians of gradients).

mod num;
mod parser;

pub use num::{Dual, NumError, Scalar};

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: u32,
    pub end: u32,
}

impl Span {
    const SYNTHETIC: Span = Span { start: 0, end: 0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Exp,
    Log,
    Abs,
    Atan2,
}

impl Func {
    pub fn arity(self) -> usize {
        match self {
            Func::Atan2 => 2,
            _ => 1,
        }
    }
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Atan2 => "atan2",
        }
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Const(f64),
    Var(usize),
    Param(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub kind: NodeKind,
    pub span: Span,
}

impl Node {
    fn new(kind: NodeKind) -> Node {
        Node {
            kind,
            span: Span::SYNTHETIC,
        }
    }

    fn bin(op: BinOp, lhs: Node, rhs: Node) -> Node {
        let span = Span {
            start: lhs.span.start,
            end: rhs.span.end,
        };
        Node {
            kind: NodeKind::Bin(op, Box::new(lhs), Box::new(rhs)),
            span,
        }
    }
}

/// A parsed (or derived) expression over an ordered variable set and an
/// ordered named-parameter set. Immutable after construction; evaluation is
/// pure and reentrant.
#[derive(Clone)]
pub struct Expression {
    root: Arc<Node>,
    vars: Arc<Vec<String>>,
    params: Arc<Vec<String>>,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({})", self.to_text())
    }
}

/// Value plus exact partials aligned with the owning expression's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub partials: Vec<f64>,
}

impl Expression {
    pub fn parse(text: &str, vars: &[&str], params: &[&str]) -> Result<Expression> {
        let vars: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        let params: Vec<String> = params.iter().map(|s| s.to_string()).collect();
        let root = parser::Parser::parse(text, &vars, &params)?;
        Ok(Expression {
            root: Arc::new(root),
            vars: Arc::new(vars),
            params: Arc::new(params),
        })
    }

    pub fn parse_owned(text: &str, vars: &[String], params: &[String]) -> Result<Expression> {
        let root = parser::Parser::parse(text, vars, params)?;
        Ok(Expression {
            root: Arc::new(root),
            vars: Arc::new(vars.to_vec()),
            params: Arc::new(params.to_vec()),
        })
    }

    pub fn constant(value: f64, vars: &[String], params: &[String]) -> Expression {
        Expression {
            root: Arc::new(Node::new(NodeKind::Const(value))),
            vars: Arc::new(vars.to_vec()),
            params: Arc::new(params.to_vec()),
        }
    }

    pub fn var(index: usize, vars: &[String], params: &[String]) -> Expression {
        assert!(index < vars.len());
        Expression {
            root: Arc::new(Node::new(NodeKind::Var(index))),
            vars: Arc::new(vars.to_vec()),
            params: Arc::new(params.to_vec()),
        }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    /// Plain evaluation.
    pub fn eval(&self, x: &[f64], params: &[f64]) -> Result<f64> {
        self.check_bindings(x, params)?;
        let v = eval_node::<f64>(&self.root, x, params)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(self.to_text()));
        }
        Ok(v)
    }

    /// Value and exact gradient by dual-number propagation.
    pub fn eval_with_grad(&self, x: &[f64], params: &[f64]) -> Result<DualValue> {
        self.check_bindings(x, params)?;
        let seeded: Vec<Dual> = x
            .iter()
            .enumerate()
            .map(|(i, v)| Dual::var(*v, i, x.len()))
            .collect();
        let out = eval_node::<Dual>(&self.root, &seeded, params)?;
        let mut partials = out.d;
        partials.resize(x.len(), 0.0);
        if !out.v.is_finite() || partials.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(self.to_text()));
        }
        Ok(DualValue {
            value: out.v,
            partials,
        })
    }

    /// Exact directional derivative (single-slot dual pass).
    pub fn directional_derivative(
        &self,
        x: &[f64],
        params: &[f64],
        direction: &[f64],
    ) -> Result<f64> {
        self.check_bindings(x, params)?;
        if direction.len() != x.len() {
            return Err(Error::Contract(format!(
                "direction length {} does not match variable count {}",
                direction.len(),
                x.len()
            )));
        }
        let seeded: Vec<Dual> = x
            .iter()
            .zip(direction)
            .map(|(v, d)| Dual::directional(*v, *d))
            .collect();
        let out = eval_node::<Dual>(&self.root, &seeded, params)?;
        let d = out.d.first().copied().unwrap_or(0.0);
        if !d.is_finite() {
            return Err(Error::NonFinite(self.to_text()));
        }
        Ok(d)
    }

    fn check_bindings(&self, x: &[f64], params: &[f64]) -> Result<()> {
        if x.len() != self.vars.len() {
            return Err(Error::Contract(format!(
                "expected {} variable bindings, got {}",
                self.vars.len(),
                x.len()
            )));
        }
        if params.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter bindings, got {}",
                self.params.len(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Exact symbolic partial derivative with respect to variable `var`.
    pub fn diff(&self, var: usize) -> Expression {
        Expression {
            root: Arc::new(diff_node(&self.root, var)),
            vars: self.vars.clone(),
            params: self.params.clone(),
        }
    }

    /// Substitute every variable of `self` with the corresponding expression
    /// (all over one shared new variable set); parameters must agree.
    pub fn compose(&self, replacements: &[Expression]) -> Result<Expression> {
        if replacements.len() != self.vars.len() {
            return Err(Error::Contract(format!(
                "compose needs {} replacements, got {}",
                self.vars.len(),
                replacements.len()
            )));
        }
        let first = match replacements.first() {
            Some(e) => e,
            None => {
                // No variables at all: reinterpret over an empty var set.
                return Ok(self.clone());
            }
        };
        for r in replacements {
            if r.vars != first.vars || r.params != first.params {
                return Err(Error::Contract(
                    "compose replacements must share one variable/parameter set".into(),
                ));
            }
        }
        if *self.params != *first.params {
            return Err(Error::Contract(
                "compose requires matching parameter sets".into(),
            ));
        }
        let root = subst_node(&self.root, replacements);
        Ok(Expression {
            root: Arc::new(root),
            vars: first.vars.clone(),
            params: first.params.clone(),
        })
    }

    /// Render back to parseable text; `parse(to_text())` reproduces the tree.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        print_node(&self.root, 0, &self.vars, &self.params, &mut s);
        s
    }

    pub fn structure_eq(&self, other: &Expression) -> bool {
        node_eq(&self.root, &other.root)
    }

    /// Negated copy.
    pub fn negated(&self) -> Expression {
        Expression {
            root: Arc::new(Node::new(NodeKind::Neg(Box::new((*self.root).clone())))),
            vars: self.vars.clone(),
            params: self.params.clone(),
        }
    }

    /// `self * other` (same variable/parameter sets).
    pub fn multiplied(&self, other: &Expression) -> Result<Expression> {
        self.same_sets(other)?;
        Ok(self.wrap_bin(BinOp::Mul, other))
    }

    pub fn added(&self, other: &Expression) -> Result<Expression> {
        self.same_sets(other)?;
        Ok(self.wrap_bin(BinOp::Add, other))
    }

    /// `self ^ c` for a constant exponent.
    pub fn powered(&self, c: f64) -> Expression {
        let e = Expression::constant(c, &self.vars, &self.params);
        self.wrap_bin(BinOp::Pow, &e)
    }

    /// `abs(self)`.
    pub fn absolute(&self) -> Expression {
        Expression {
            root: Arc::new(Node::new(NodeKind::Call(
                Func::Abs,
                vec![(*self.root).clone()],
            ))),
            vars: self.vars.clone(),
            params: self.params.clone(),
        }
    }

    fn wrap_bin(&self, op: BinOp, other: &Expression) -> Expression {
        Expression {
            root: Arc::new(Node::new(NodeKind::Bin(
                op,
                Box::new((*self.root).clone()),
                Box::new((*other.root).clone()),
            ))),
            vars: self.vars.clone(),
            params: self.params.clone(),
        }
    }

    fn same_sets(&self, other: &Expression) -> Result<()> {
        if self.vars != other.vars || self.params != other.params {
            return Err(Error::Contract(
                "expressions must share variable and parameter sets".into(),
            ));
        }
        Ok(())
    }
}

fn eval_node<S: Scalar>(node: &Node, x: &[S], params: &[f64]) -> Result<S> {
    match &node.kind {
        NodeKind::Const(c) => Ok(S::constant(*c)),
        NodeKind::Var(i) => Ok(x[*i].clone()),
        NodeKind::Param(i) => Ok(S::constant(params[*i])),
        NodeKind::Neg(inner) => Ok(eval_node(inner, x, params)?.neg()),
        NodeKind::Bin(op, a, b) => {
            let va = eval_node(a, x, params)?;
            let vb = eval_node(b, x, params)?;
            let r = match op {
                BinOp::Add => Ok(va.add(&vb)),
                BinOp::Sub => Ok(va.sub(&vb)),
                BinOp::Mul => Ok(va.mul(&vb)),
                BinOp::Div => va.div(&vb),
                BinOp::Pow => va.pow(&vb),
            };
            r.map_err(|e| domain_err(node, e))
        }
        NodeKind::Call(f, args) => {
            let a0 = eval_node(&args[0], x, params)?;
            let r = match f {
                Func::Sin => Ok(a0.sin()),
                Func::Cos => Ok(a0.cos()),
                Func::Exp => Ok(a0.exp()),
                Func::Sqrt => a0.sqrt(),
                Func::Log => a0.ln(),
                Func::Abs => a0.abs(),
                Func::Atan2 => {
                    let a1 = eval_node(&args[1], x, params)?;
                    a0.atan2(&a1)
                }
            };
            r.map_err(|e| domain_err(node, e))
        }
    }
}

fn domain_err(node: &Node, e: NumError) -> Error {
    let mut ctx = String::new();
    // A derived node may have no source; print the subtree instead.
    print_node_anon(node, 0, &mut ctx);
    Error::Domain {
        context: ctx,
        message: e.message().to_string(),
    }
}

// ---------------------------------------------------------------------------
// Symbolic differentiation (exact; light constant folding keeps trees sane).

fn cnode(v: f64) -> Node {
    Node::new(NodeKind::Const(v))
}

fn is_const(n: &Node, v: f64) -> bool {
    matches!(n.kind, NodeKind::Const(c) if c == v)
}

fn fold_add(a: Node, b: Node) -> Node {
    if is_const(&a, 0.0) {
        return b;
    }
    if is_const(&b, 0.0) {
        return a;
    }
    if let (NodeKind::Const(x), NodeKind::Const(y)) = (&a.kind, &b.kind) {
        return cnode(x + y);
    }
    Node::new(NodeKind::Bin(BinOp::Add, Box::new(a), Box::new(b)))
}

fn fold_sub(a: Node, b: Node) -> Node {
    if is_const(&b, 0.0) {
        return a;
    }
    if let (NodeKind::Const(x), NodeKind::Const(y)) = (&a.kind, &b.kind) {
        return cnode(x - y);
    }
    if is_const(&a, 0.0) {
        return Node::new(NodeKind::Neg(Box::new(b)));
    }
    Node::new(NodeKind::Bin(BinOp::Sub, Box::new(a), Box::new(b)))
}

fn fold_mul(a: Node, b: Node) -> Node {
    if is_const(&a, 0.0) || is_const(&b, 0.0) {
        return cnode(0.0);
    }
    if is_const(&a, 1.0) {
        return b;
    }
    if is_const(&b, 1.0) {
        return a;
    }
    if let (NodeKind::Const(x), NodeKind::Const(y)) = (&a.kind, &b.kind) {
        return cnode(x * y);
    }
    Node::new(NodeKind::Bin(BinOp::Mul, Box::new(a), Box::new(b)))
}

fn fold_div(a: Node, b: Node) -> Node {
    if is_const(&a, 0.0) && !is_const(&b, 0.0) {
        return cnode(0.0);
    }
    if is_const(&b, 1.0) {
        return a;
    }
    Node::new(NodeKind::Bin(BinOp::Div, Box::new(a), Box::new(b)))
}

fn diff_node(node: &Node, var: usize) -> Node {
    match &node.kind {
        NodeKind::Const(_) | NodeKind::Param(_) => cnode(0.0),
        NodeKind::Var(i) => cnode(if *i == var { 1.0 } else { 0.0 }),
        NodeKind::Neg(inner) => {
            let d = diff_node(inner, var);
            if is_const(&d, 0.0) {
                d
            } else {
                Node::new(NodeKind::Neg(Box::new(d)))
            }
        }
        NodeKind::Bin(op, a, b) => {
            let da = diff_node(a, var);
            let db = diff_node(b, var);
            match op {
                BinOp::Add => fold_add(da, db),
                BinOp::Sub => fold_sub(da, db),
                BinOp::Mul => fold_add(fold_mul(da, (**b).clone()), fold_mul((**a).clone(), db)),
                BinOp::Div => {
                    // (a/b)' = a'/b - a b'/b^2
                    let t1 = fold_div(da, (**b).clone());
                    let b2 = Node::new(NodeKind::Bin(
                        BinOp::Pow,
                        Box::new((**b).clone()),
                        Box::new(cnode(2.0)),
                    ));
                    let t2 = fold_div(fold_mul((**a).clone(), db), b2);
                    fold_sub(t1, t2)
                }
                BinOp::Pow => {
                    if let NodeKind::Const(e) = b.kind {
                        // (a^c)' = c a^(c-1) a'
                        if is_const(&da, 0.0) {
                            return cnode(0.0);
                        }
                        let pw = Node::new(NodeKind::Bin(
                            BinOp::Pow,
                            Box::new((**a).clone()),
                            Box::new(cnode(e - 1.0)),
                        ));
                        return fold_mul(fold_mul(cnode(e), pw), da);
                    }
                    // General: a^b (b' log a + b a'/a)
                    let this = (*node).clone();
                    let loga = Node::new(NodeKind::Call(Func::Log, vec![(**a).clone()]));
                    let t1 = fold_mul(db, loga);
                    let t2 = fold_div(fold_mul((**b).clone(), da), (**a).clone());
                    fold_mul(this, fold_add(t1, t2))
                }
            }
        }
        NodeKind::Call(f, args) => {
            let a = &args[0];
            let da = diff_node(a, var);
            match f {
                Func::Sin => fold_mul(Node::new(NodeKind::Call(Func::Cos, vec![a.clone()])), da),
                Func::Cos => Node::new(NodeKind::Neg(Box::new(fold_mul(
                    Node::new(NodeKind::Call(Func::Sin, vec![a.clone()])),
                    da,
                )))),
                Func::Exp => fold_mul((*node).clone(), da),
                Func::Sqrt => {
                    // a' / (2 sqrt(a))
                    fold_div(da, fold_mul(cnode(2.0), (*node).clone()))
                }
                Func::Log => fold_div(da, a.clone()),
                Func::Abs => {
                    // sign(a) a' rendered as a * a' / abs(a); errors at a = 0.
                    fold_div(fold_mul(a.clone(), da), (*node).clone())
                }
                Func::Atan2 => {
                    let y = a;
                    let x = &args[1];
                    let dy = da;
                    let dx = diff_node(x, var);
                    // (x y' - y x') / (x^2 + y^2)
                    let numer = fold_sub(fold_mul(x.clone(), dy), fold_mul(y.clone(), dx));
                    let den = fold_add(
                        Node::new(NodeKind::Bin(
                            BinOp::Pow,
                            Box::new(x.clone()),
                            Box::new(cnode(2.0)),
                        )),
                        Node::new(NodeKind::Bin(
                            BinOp::Pow,
                            Box::new(y.clone()),
                            Box::new(cnode(2.0)),
                        )),
                    );
                    fold_div(numer, den)
                }
            }
        }
    }
}

fn subst_node(node: &Node, replacements: &[Expression]) -> Node {
    match &node.kind {
        NodeKind::Const(c) => cnode(*c),
        NodeKind::Param(i) => Node::new(NodeKind::Param(*i)),
        NodeKind::Var(i) => (*replacements[*i].root).clone(),
        NodeKind::Neg(inner) => Node::new(NodeKind::Neg(Box::new(subst_node(inner, replacements)))),
        NodeKind::Bin(op, a, b) => Node::new(NodeKind::Bin(
            *op,
            Box::new(subst_node(a, replacements)),
            Box::new(subst_node(b, replacements)),
        )),
        NodeKind::Call(f, args) => Node::new(NodeKind::Call(
            *f,
            args.iter().map(|a| subst_node(a, replacements)).collect(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Printing with minimal parentheses.

fn prec(kind: &NodeKind) -> u8 {
    match kind {
        NodeKind::Bin(BinOp::Add, ..) | NodeKind::Bin(BinOp::Sub, ..) => 1,
        NodeKind::Bin(BinOp::Mul, ..) | NodeKind::Bin(BinOp::Div, ..) => 2,
        NodeKind::Neg(_) => 3,
        NodeKind::Bin(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

fn print_node(node: &Node, parent_min: u8, vars: &[String], params: &[String], out: &mut String) {
    let p = prec(&node.kind);
    let needs = p < parent_min;
    if needs {
        out.push('(');
    }
    match &node.kind {
        NodeKind::Const(c) => {
            if *c < 0.0 || c.is_nan() {
                // Negative constants only arise in derived trees.
                out.push_str(&format!("({c:?})"));
            } else if *c == std::f64::consts::PI {
                out.push_str("pi");
            } else {
                out.push_str(&format!("{c:?}"));
            }
        }
        NodeKind::Var(i) => out.push_str(&vars[*i]),
        NodeKind::Param(i) => out.push_str(&params[*i]),
        NodeKind::Neg(inner) => {
            out.push('-');
            print_node(inner, 4, vars, params, out);
        }
        NodeKind::Bin(op, a, b) => {
            // + and * parse left-associatively, so right-nested chains need
            // parentheses to reparse into the same tree.
            let (sym, lp, rp) = match op {
                BinOp::Add => (" + ", 1, 2),
                BinOp::Sub => (" - ", 1, 2),
                BinOp::Mul => ("*", 2, 3),
                BinOp::Div => ("/", 2, 3),
                BinOp::Pow => ("^", 5, 3),
            };
            print_node(a, lp, vars, params, out);
            out.push_str(sym);
            print_node(b, rp, vars, params, out);
        }
        NodeKind::Call(f, args) => {
            out.push_str(f.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_node(a, 0, vars, params, out);
            }
            out.push(')');
        }
    }
    if needs {
        out.push(')');
    }
}

fn print_node_anon(node: &Node, parent_min: u8, out: &mut String) {
    // Fallback names for error contexts when the owning sets are unknown.
    let vars: Vec<String> = (0..64).map(|i| format!("x{i}")).collect();
    let params: Vec<String> = (0..64).map(|i| format!("a{i}")).collect();
    print_node(node, parent_min, &vars, &params, out);
}

/// Deterministic fuzz of the differentiation engine: random expressions over
/// three variables, dual-number partials against two-step central finite
/// differences away from singular subexpressions, plus parse/print/parse
/// idempotence for every generated expression. Returns (expressions checked,
/// worst relative disagreement).
pub fn fuzz_gradient_check(count: usize, seed: u64) -> Result<(usize, f64)> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let vars = ["x1", "x2", "x3"];
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    let mut attempts = 0usize;
    while checked < count {
        attempts += 1;
        if attempts > count * 40 {
            return Err(Error::Validation(format!(
                "fuzz stalled: only {checked} of {count} expressions admitted a \
                 regular comparison point"
            )));
        }
        let text = random_expr_text(&mut rng, 0);
        let e = match Expression::parse(&text, &vars, &[]) {
            Ok(e) => e,
            Err(err) => {
                return Err(Error::Validation(format!(
                    "generator produced unparseable text `{text}`: {err}"
                )));
            }
        };
        let printed = e.to_text();
        let reparsed = Expression::parse(&printed, &vars, &[])?;
        if !e.structure_eq(&reparsed) {
            return Err(Error::Validation(format!(
                "print/parse round trip changed `{text}` -> `{printed}`"
            )));
        }

        let mut compared = false;
        'points: for _ in 0..20 {
            let x: Vec<f64> = (0..3)
                .map(|_| {
                    let mag = 0.1 + 1.9 * rng.random::<f64>();
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            let dv = match e.eval_with_grad(&x, &[]) {
                Ok(d) => d,
                Err(_) => continue,
            };
            if dv.value.abs() > 1e6 || dv.partials.iter().any(|p| f64::abs(*p) > 1e4) {
                continue;
            }
            let mut xp = x.clone();
            for i in 0..3 {
                let scale = dv.partials[i].abs().max(1.0);
                let mut fd = [0.0f64; 2];
                for (k, h) in [1e-5 * x[i].abs().max(1.0), 0.5e-5 * x[i].abs().max(1.0)]
                    .iter()
                    .enumerate()
                {
                    xp[i] = x[i] + h;
                    let fp = match e.eval(&xp, &[]) {
                        Ok(v) => v,
                        Err(_) => {
                            xp[i] = x[i];
                            continue 'points;
                        }
                    };
                    xp[i] = x[i] - h;
                    let fm = match e.eval(&xp, &[]) {
                        Ok(v) => v,
                        Err(_) => {
                            xp[i] = x[i];
                            continue 'points;
                        }
                    };
                    xp[i] = x[i];
                    fd[k] = (fp - fm) / (2.0 * h);
                }
                // Singularity filter: the two FD estimates must agree, or the
                // point is too close to a kink/pole for FD to be an oracle.
                if (fd[0] - fd[1]).abs() > 3e-8 * scale {
                    continue 'points;
                }
                let rel = (dv.partials[i] - fd[1]).abs() / scale;
                worst = worst.max(rel);
            }
            compared = true;
            break;
        }
        if compared {
            checked += 1;
        }
    }
    Ok((checked, worst))
}

fn random_expr_text(rng: &mut rand_chacha::ChaCha8Rng, depth: u32) -> String {
    use rand::Rng;
    let leaf = depth >= 4 || rng.random::<f64>() < 0.25;
    if leaf {
        if rng.random::<f64>() < 0.6 {
            format!("x{}", rng.random_range(1..=3))
        } else {
            format!("{:.3}", 0.3 + 2.2 * rng.random::<f64>())
        }
    } else {
        match rng.random_range(0..10) {
            0 => format!(
                "({} + {})",
                random_expr_text(rng, depth + 1),
                random_expr_text(rng, depth + 1)
            ),
            1 => format!(
                "({} - {})",
                random_expr_text(rng, depth + 1),
                random_expr_text(rng, depth + 1)
            ),
            2 => format!(
                "({}*{})",
                random_expr_text(rng, depth + 1),
                random_expr_text(rng, depth + 1)
            ),
            3 => format!(
                "({}/{})",
                random_expr_text(rng, depth + 1),
                random_expr_text(rng, depth + 1)
            ),
            4 => format!("(-{})", random_expr_text(rng, depth + 1)),
            5 => format!("sin({})", random_expr_text(rng, depth + 1)),
            6 => format!("cos({})", random_expr_text(rng, depth + 1)),
            7 => format!("exp({})", random_expr_text(rng, depth + 1)),
            8 => {
                let exps = ["2", "3", "-1", "-2", "(1/2)", "(1/4)"];
                format!(
                    "{}^{}",
                    // Power bases are kept simple to stay mostly in-domain.
                    match rng.random_range(0..3) {
                        0 => format!("x{}", rng.random_range(1..=3)),
                        1 => format!("abs({})", random_expr_text(rng, depth + 2)),
                        _ => format!("({})", random_expr_text(rng, depth + 2)),
                    },
                    exps[rng.random_range(0..exps.len())]
                )
            }
            _ => match rng.random_range(0..3) {
                0 => format!("sqrt(abs({}))", random_expr_text(rng, depth + 1)),
                1 => format!("log(abs({}) + 0.5)", random_expr_text(rng, depth + 1)),
                _ => format!(
                    "atan2({}, {})",
                    random_expr_text(rng, depth + 1),
                    random_expr_text(rng, depth + 1)
                ),
            },
        }
    }
}

fn node_eq(a: &Node, b: &Node) -> bool {
    match (&a.kind, &b.kind) {
        (NodeKind::Const(x), NodeKind::Const(y)) => x == y || (x.is_nan() && y.is_nan()),
        (NodeKind::Var(i), NodeKind::Var(j)) => i == j,
        (NodeKind::Param(i), NodeKind::Param(j)) => i == j,
        (NodeKind::Neg(x), NodeKind::Neg(y)) => node_eq(x, y),
        (NodeKind::Bin(o1, a1, b1), NodeKind::Bin(o2, a2, b2)) => {
            o1 == o2 && node_eq(a1, a2) && node_eq(b1, b2)
        }
        (NodeKind::Call(f1, xs), NodeKind::Call(f2, ys)) => {
            f1 == f2 && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| node_eq(x, y))
        }
        _ => false,
    }
}
