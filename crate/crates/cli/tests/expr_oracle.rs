//! Parser vs an independent tree walk: random trees are rendered with random
//! spacing and redundant parentheses, parsed back, and evaluated by both.

use capsim_cli::expr::{parse_expr, ExprError};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Tree {
    Num(u32),
    X,
    Y,
    T,
    Neg(Box<Tree>),
    Fun(&'static str, Box<Tree>),
    Op(char, Box<Tree>, Box<Tree>),
}

fn tree() -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![
        (0u32..5000).prop_map(Tree::Num),
        Just(Tree::X),
        Just(Tree::Y),
        Just(Tree::T),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Tree::Neg(Box::new(a))),
            (prop::sample::select(vec!["sin", "cos", "exp"]), inner.clone()).prop_map(|(f, a)| Tree::Fun(f, Box::new(a))),
            (prop::sample::select(vec!['+', '-', '*', '/', '^']), inner.clone(), inner)
                .prop_map(|(op, a, b)| Tree::Op(op, Box::new(a), Box::new(b))),
        ]
    })
}

/// Evaluates with `None` for division by zero or non-finite intermediates.
fn walk(t: &Tree, x: f64, y: f64, s: f64) -> Option<f64> {
    let v = match t {
        Tree::Num(n) => *n as f64 / 1000.0,
        Tree::X => x,
        Tree::Y => y,
        Tree::T => s,
        Tree::Neg(a) => -walk(a, x, y, s)?,
        Tree::Fun(f, a) => {
            let a = walk(a, x, y, s)?;
            match *f {
                "sin" => a.sin(),
                "cos" => a.cos(),
                _ => a.exp(),
            }
        }
        Tree::Op(op, a, b) => {
            let a = walk(a, x, y, s)?;
            let b = walk(b, x, y, s)?;
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' if b == 0.0 => return None,
                '/' => a / b,
                _ => a.powf(b),
            }
        }
    };
    v.is_finite().then_some(v)
}

/// Fully parenthesized rendering; `pad` picks spacing and extra parentheses.
fn render(t: &Tree, pad: &mut impl Iterator<Item = u8>) -> String {
    let sp = |k: u8| " ".repeat((k % 3) as usize);
    let body = match t {
        Tree::Num(n) => format!("{}", *n as f64 / 1000.0),
        Tree::X => "x".into(),
        Tree::Y => "y".into(),
        Tree::T => "t".into(),
        Tree::Neg(a) => {
            let k = pad.next().unwrap_or(0);
            format!("(-{}{})", sp(k), render(a, pad))
        }
        Tree::Fun(f, a) => {
            let k = pad.next().unwrap_or(0);
            format!("{f}({}{}{})", sp(k), render(a, pad), sp(k / 3))
        }
        Tree::Op(op, a, b) => {
            let k = pad.next().unwrap_or(0);
            let l = render(a, pad);
            let r = render(b, pad);
            format!("({l}{}{op}{}{r})", sp(k), sp(k / 3))
        }
    };
    if pad.next().unwrap_or(0).is_multiple_of(5) {
        format!("( {body} )")
    } else {
        body
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, ..ProptestConfig::default() })]

    #[test]
    fn parser_matches_tree_walk(
        t in tree(),
        pad in prop::collection::vec(any::<u8>(), 64),
        x in -2.0f64..2.0,
        y in -2.0f64..2.0,
        s in 0.0f64..1.0,
    ) {
        let text = render(&t, &mut pad.into_iter().cycle());
        let expr = parse_expr(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        match (walk(&t, x, y, s), expr.eval(x, y, s)) {
            (Some(r), Ok(v)) => prop_assert!((v - r).abs() <= 1e-12 * r.abs().max(1.0), "{text}: {v} vs {r}"),
            (None, Err(ExprError::DivisionByZero | ExprError::NonFinite(_))) => {}
            (r, v) => prop_assert!(false, "{text}: reference {r:?}, parser {v:?}"),
        }
    }

    #[test]
    fn parsing_never_panics(text in "[ xyt0-9.+*/^()sinecoxp-]{0,30}") {
        let _ = parse_expr(&text);
    }

    #[test]
    fn syntax_error_offsets_are_in_bounds(text in "[ xy0-9+*/^()-]{0,20}") {
        if let Err(ExprError::Syntax { offset, .. }) = parse_expr(&text) {
            prop_assert!(offset <= text.len());
        }
    }
}
