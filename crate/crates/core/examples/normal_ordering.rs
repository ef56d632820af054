//! Canonical reordering of ladder-operator products.

use qbbgky::ladder::{canonical_degree, commutator, normal_order, LadderOp, LadderPolynomial};

pub fn run_example() -> qbbgky::Result<LadderPolynomial> {
    let b = LadderPolynomial::annihilate(0);
    let bd = LadderPolynomial::create(0);

    // b b† = b† b + 1
    let bbd = normal_order(&(&b * &bd));
    println!("b b† = {bbd}");

    // [b_0, b†_0 b†_1 b_1 b_0] lowers the degree by two
    let quartic = LadderPolynomial::monomial(
        1.0,
        vec![LadderOp::create(0), LadderOp::create(1), LadderOp::annihilate(1), LadderOp::annihilate(0)],
    );
    let k = commutator(&b, &quartic);
    println!("[b_0, n_0 n_1] = {k}  (degree {})", canonical_degree(&k));

    let n = LadderPolynomial::number_operator(2);
    println!("[N, n_0 n_1] = {}", commutator(&n, &quartic));
    Ok(bbd)
}

fn main() -> qbbgky::Result<()> {
    run_example().map(|_| ())
}
