//! Property tests for the expression engine: print/parse stability and
//! agreement of the two exact differentiation routes (dual numbers and
//! symbolic partials).

use contact_reduce::expr::Expression;
use proptest::prelude::*;

const VARS: [&str; 3] = ["x1", "x2", "x3"];

#[derive(Debug, Clone)]
enum Tree {
    Var(usize),
    Const(f64),
    Neg(Box<Tree>),
    Add(Box<Tree>, Box<Tree>),
    Sub(Box<Tree>, Box<Tree>),
    Mul(Box<Tree>, Box<Tree>),
    Div(Box<Tree>, Box<Tree>),
    PowInt(Box<Tree>, i32),
    Sin(Box<Tree>),
    Cos(Box<Tree>),
    Exp(Box<Tree>),
    SqrtAbs(Box<Tree>),
    Atan2(Box<Tree>, Box<Tree>),
}

impl Tree {
    fn render(&self) -> String {
        match self {
            Tree::Var(i) => VARS[*i].to_string(),
            Tree::Const(c) => format!("{c:?}"),
            Tree::Neg(a) => format!("(-{})", a.render()),
            Tree::Add(a, b) => format!("({} + {})", a.render(), b.render()),
            Tree::Sub(a, b) => format!("({} - {})", a.render(), b.render()),
            Tree::Mul(a, b) => format!("({}*{})", a.render(), b.render()),
            Tree::Div(a, b) => format!("({}/{})", a.render(), b.render()),
            Tree::PowInt(a, e) => format!("({})^({e})", a.render()),
            Tree::Sin(a) => format!("sin({})", a.render()),
            Tree::Cos(a) => format!("cos({})", a.render()),
            Tree::Exp(a) => format!("exp({})", a.render()),
            Tree::SqrtAbs(a) => format!("sqrt(abs({}) + 0.7)", a.render()),
            Tree::Atan2(a, b) => format!("atan2({}, {})", a.render(), b.render()),
        }
    }
}

fn tree_strategy() -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![
        (0usize..3).prop_map(Tree::Var),
        (0.25f64..4.0).prop_map(Tree::Const),
    ];
    leaf.prop_recursive(4, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Tree::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Div(Box::new(a), Box::new(b))),
            (inner.clone(), -2i32..4).prop_map(|(a, e)| Tree::PowInt(Box::new(a), e)),
            inner.clone().prop_map(|a| Tree::Sin(Box::new(a))),
            inner.clone().prop_map(|a| Tree::Cos(Box::new(a))),
            inner.clone().prop_map(|a| Tree::Exp(Box::new(a))),
            inner.clone().prop_map(|a| Tree::SqrtAbs(Box::new(a))),
            (inner.clone(), inner).prop_map(|(a, b)| Tree::Atan2(Box::new(a), Box::new(b))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// parse ∘ pretty-print ∘ parse is the identity on expression trees.
    #[test]
    fn print_parse_roundtrip(tree in tree_strategy()) {
        let text = tree.render();
        let e = Expression::parse(&text, &VARS, &[]).unwrap();
        let printed = e.to_text();
        let e2 = Expression::parse(&printed, &VARS, &[]).unwrap();
        prop_assert!(e.structure_eq(&e2), "{text} -> {printed}");
        // And printing is already a fixed point after one round.
        prop_assert_eq!(printed.clone(), e2.to_text());
    }

    /// Dual-number partials agree with dual evaluation of the exact
    /// symbolic derivative wherever both are defined.
    #[test]
    fn dual_gradient_matches_symbolic_derivative(
        tree in tree_strategy(),
        x1 in -2.0f64..2.0,
        x2 in -2.0f64..2.0,
        x3 in -2.0f64..2.0,
    ) {
        let e = Expression::parse(&tree.render(), &VARS, &[]).unwrap();
        let x = [x1, x2, x3];
        if let Ok(dv) = e.eval_with_grad(&x, &[]) {
            for i in 0..3 {
                if let Ok(sym) = e.diff(i).eval(&x, &[]) {
                    let scale = dv.partials[i].abs().max(sym.abs()).max(1.0);
                    prop_assert!(
                        (dv.partials[i] - sym).abs() <= 1e-9 * scale,
                        "partial {i}: dual {} vs symbolic {sym}",
                        dv.partials[i]
                    );
                }
            }
        }
    }

    /// Directional derivatives are linear contractions of the gradient.
    #[test]
    fn directional_derivative_contracts_gradient(
        tree in tree_strategy(),
        x1 in -2.0f64..2.0,
        x2 in -2.0f64..2.0,
        x3 in -2.0f64..2.0,
        d1 in -1.0f64..1.0,
        d2 in -1.0f64..1.0,
        d3 in -1.0f64..1.0,
    ) {
        let e = Expression::parse(&tree.render(), &VARS, &[]).unwrap();
        let x = [x1, x2, x3];
        let dir = [d1, d2, d3];
        if let (Ok(dv), Ok(dd)) = (e.eval_with_grad(&x, &[]), e.directional_derivative(&x, &[], &dir)) {
            let dot: f64 = dv.partials.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let scale = dot.abs().max(dd.abs()).max(1.0);
            prop_assert!((dot - dd).abs() <= 1e-9 * scale);
        }
    }
}
