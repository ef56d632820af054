//! Every bundled example runs and produces the numbers it advertises.

#[allow(dead_code)]
#[path = "../examples/normal_ordering.rs"]
mod normal_ordering;

#[allow(dead_code)]
#[path = "../examples/derive_equations.rs"]
mod derive_equations;

#[allow(dead_code)]
#[path = "../examples/free_theory.rs"]
mod free_theory;

#[allow(dead_code)]
#[path = "../examples/mean_field.rs"]
mod mean_field;

#[allow(dead_code)]
#[path = "../examples/exact_closure.rs"]
mod exact_closure;

#[allow(dead_code)]
#[path = "../examples/observables.rs"]
mod observables;

#[allow(dead_code)]
#[path = "../examples/run_config.rs"]
mod run_config;

#[test]
fn normal_ordering_example() {
    let p = normal_ordering::run_example().unwrap();
    assert_eq!(p.len(), 2);
    assert!(p.is_normal_ordered());
}

#[test]
fn derive_equations_example() {
    assert_eq!(derive_equations::run_example().unwrap(), 3);
}

#[test]
fn free_theory_example() {
    assert!(free_theory::run_example().unwrap() < 1e-8);
}

#[test]
fn mean_field_example() {
    let omegas = mean_field::run_example().unwrap();
    let e = 1.25f64.sqrt();
    let shifts = [0.4 * (0.4 + 0.3 * 0.34), 0.4 * (0.3 * 0.4 + 2.0 * 0.34)];
    for (w, s) in omegas.iter().zip(shifts) {
        assert!((w - e - s).abs() < 1e-9, "{w}");
    }
}

#[test]
fn exact_closure_example() {
    assert!(exact_closure::run_example().unwrap() < 1e-6);
}

#[test]
fn observables_example() {
    let (n, e) = observables::run_example().unwrap();
    assert!((n - 1.0).abs() < 1e-12);
    let ep = 1.25f64.sqrt();
    assert!((e - ep).abs() < 1e-12, "{e}");
}

#[test]
fn run_config_example() {
    let err = run_config::run_example().unwrap();
    assert!(err > 0.0 && err < 1e-3, "{err}");
}
