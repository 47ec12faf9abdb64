use levy_sid::expr::{Expr, ExprError};
use proptest::prelude::*;

/// Test-side expression tree with its own printer and evaluator.
#[derive(Debug, Clone)]
enum T {
    Num(f64),
    Var(usize),
    Neg(Box<T>),
    Add(Box<T>, Box<T>),
    Sub(Box<T>, Box<T>),
    Mul(Box<T>, Box<T>),
    Div(Box<T>, Box<T>),
    Pow(Box<T>, f64),
    Call(&'static str, Box<T>),
}

const FUNCS: [&str; 8] = ["sin", "cos", "tan", "tanh", "exp", "ln", "sqrt", "abs"];
const DIM: usize = 3;

fn print(t: &T) -> String {
    match t {
        T::Num(v) => format!("({v})"),
        T::Var(k) => format!("x{}", k + 1),
        T::Neg(a) => format!("(-{})", print(a)),
        T::Add(a, b) => format!("({} + {})", print(a), print(b)),
        T::Sub(a, b) => format!("({} - {})", print(a), print(b)),
        T::Mul(a, b) => format!("({}*{})", print(a), print(b)),
        T::Div(a, b) => format!("({}/{})", print(a), print(b)),
        T::Pow(a, e) => format!("({}^{})", print(a), e),
        T::Call(f, a) => format!("{f}({})", print(a)),
    }
}

fn ok(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// `None` wherever evaluation must fail.
fn reference(t: &T, x: &[f64]) -> Option<f64> {
    match t {
        T::Num(v) => Some(*v),
        T::Var(k) => Some(x[*k]),
        T::Neg(a) => Some(-reference(a, x)?),
        T::Add(a, b) => ok(reference(a, x)? + reference(b, x)?),
        T::Sub(a, b) => ok(reference(a, x)? - reference(b, x)?),
        T::Mul(a, b) => ok(reference(a, x)? * reference(b, x)?),
        T::Div(a, b) => {
            let (p, q) = (reference(a, x)?, reference(b, x)?);
            if q == 0.0 {
                None
            } else {
                ok(p / q)
            }
        }
        T::Pow(a, e) => {
            let b = reference(a, x)?;
            if b == 0.0 && *e < 0.0 {
                return None;
            }
            let v = if e.fract() == 0.0 { b.powi(*e as i32) } else { b.powf(*e) };
            if v.is_nan() {
                None
            } else {
                ok(v)
            }
        }
        T::Call(f, a) => {
            let v = reference(a, x)?;
            ok(match *f {
                "sin" => v.sin(),
                "cos" => v.cos(),
                "tan" => v.tan(),
                "tanh" => v.tanh(),
                "exp" => v.exp(),
                "ln" if v > 0.0 => v.ln(),
                "sqrt" if v >= 0.0 => v.sqrt(),
                "abs" => v.abs(),
                _ => return None,
            })
        }
    }
}

fn tree() -> impl Strategy<Value = T> {
    let leaf = prop_oneof![
        (-50i32..50, 0u32..3).prop_map(|(m, s)| T::Num(m as f64 / 10f64.powi(s as i32))),
        (0..DIM).prop_map(T::Var),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| T::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| T::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| T::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| T::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| T::Div(Box::new(a), Box::new(b))),
            (inner.clone(), prop::sample::select(vec![2.0, 3.0, 0.5, -1.0, 1.5])).prop_map(|(a, e)| T::Pow(Box::new(a), e)),
            (prop::sample::select(FUNCS.to_vec()), inner).prop_map(|(f, a)| T::Call(f, Box::new(a))),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, DIM)
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-14 * a.abs().max(b.abs()).max(1e-300) * 8.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn agrees_with_reference_evaluator(t in tree(), x in point()) {
        let text = print(&t);
        let e = Expr::parse(&text, DIM).unwrap();
        match (e.eval(&x), reference(&t, &x)) {
            (Ok(got), Some(want)) => prop_assert!(close(got, want), "{text} at {x:?}: {got} vs {want}"),
            (Err(ExprError::Domain { .. }), None) => {}
            (got, want) => prop_assert!(false, "{text} at {x:?}: {got:?} vs {want:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn canonical_print_reparses_identically(t in tree()) {
        let first = Expr::parse(&print(&t), DIM).unwrap();
        let printed = first.to_string();
        let second = Expr::parse(&printed, DIM).unwrap();
        prop_assert_eq!(first.root(), second.root(), "{}", printed);
        prop_assert_eq!(second.to_string(), printed);
    }

    #[test]
    fn garbage_never_panics(s in "[x0-9+*/^() .a-z-]{0,24}") {
        let _ = Expr::parse(&s, 2);
    }
}

#[test]
fn spec_examples() {
    assert_eq!(Expr::parse("x1*x2", 3).unwrap().eval(&[2.0, 3.0, 7.0]).unwrap(), 6.0);
    let b = Expr::parse("6*x1^2/(x1^2+10) - x1 + 0.4", 1).unwrap().eval(&[1.0]).unwrap();
    assert!((b + 0.054_545_5).abs() < 1e-7);
    assert!(matches!(Expr::parse("x1 + * 2", 1), Err(ExprError::Syntax { offset: 5, .. })));
    assert_eq!(Expr::parse("3.5", 2).unwrap().eval(&[9.0, 1.0]).unwrap(), 3.5);
    assert_eq!(Expr::parse("-10*tanh(10*x1)^2+10", 1).unwrap().eval(&[0.0]).unwrap(), 10.0);
    assert!(matches!(Expr::parse("1/x1", 1).unwrap().eval(&[0.0]), Err(ExprError::Domain { .. })));
}
