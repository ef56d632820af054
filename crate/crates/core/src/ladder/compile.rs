//! Compilation of hierarchy right-hand sides into contraction programs.
//!
//! For a target `Γ^(m,n)(p;p')` with observable
//! `X = b†_{p'_1}…b†_{p'_n} b_{p_1}…b_{p_m}` the time derivative is
//! `−i Tr(ρ [X, H])`. The Hamiltonian is written as a sum of coefficient
//! tensors (kernels) contracted with index-labelled normal-ordered monomials,
//! so `[X, H]` follows from Wick contractions between the two monomials with
//! symbolic indices. Each contraction pattern becomes one [`ContractionTerm`].

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{normal_order, LadderOp, LadderPolynomial};
use crate::error::{Error, Result};

/// Highest supported Hamiltonian degree (quartic).
pub const MAX_HAMILTONIAN_DEGREE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelEntry {
    /// Creation-axis indices followed by annihilation-axis indices.
    pub indices: Vec<usize>,
    pub value: Complex64,
}

/// A coefficient tensor `T` contributing `Σ T[c;a] b†_{c_1}…b†_{c_r} b_{a_1}…b_{a_s}`.
///
/// Stored sparsely: only the nonzero entries are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub creators: usize,
    pub annihilators: usize,
    pub entries: Vec<KernelEntry>,
}

impl Kernel {
    pub fn new(creators: usize, annihilators: usize) -> Self {
        Kernel {
            creators,
            annihilators,
            entries: Vec::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.creators + self.annihilators
    }

    pub fn push(&mut self, indices: Vec<usize>, value: impl Into<Complex64>) {
        debug_assert_eq!(indices.len(), self.degree());
        self.entries.push(KernelEntry {
            indices,
            value: value.into(),
        });
    }

    pub fn to_polynomial(&self) -> LadderPolynomial {
        let mut p = LadderPolynomial::zero();
        for e in &self.entries {
            let factors = e
                .indices
                .iter()
                .enumerate()
                .map(|(axis, &mode)| {
                    if axis < self.creators {
                        LadderOp::create(mode)
                    } else {
                        LadderOp::annihilate(mode)
                    }
                })
                .collect();
            p.add_term(e.value, factors);
        }
        normal_order(&p)
    }
}

/// Named coefficient tensors that together make up a Hamiltonian.
///
/// Contraction programs refer to kernels only by name, so one compiled
/// program serves every numerical value of the coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoefficientStore {
    pub n_modes: usize,
    kernels: BTreeMap<String, Kernel>,
}

impl CoefficientStore {
    pub fn new(n_modes: usize) -> Self {
        CoefficientStore {
            n_modes,
            kernels: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, kernel: Kernel) {
        self.kernels.insert(id.into(), kernel);
    }

    pub fn get(&self, id: &str) -> Option<&Kernel> {
        self.kernels.get(id)
    }

    pub fn kernels(&self) -> impl Iterator<Item = (&str, &Kernel)> + '_ {
        self.kernels.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn degree(&self) -> usize {
        self.kernels.values().map(Kernel::degree).max().unwrap_or(0)
    }

    /// Splits a polynomial into one kernel per `(creators, annihilators)`
    /// block, named `<prefix>c<r>a<s>`. Constant terms are dropped since they
    /// commute with everything.
    pub fn from_polynomial(poly: &LadderPolynomial, n_modes: usize, prefix: &str) -> Result<Self> {
        poly.check_modes(n_modes)?;
        let mut store = CoefficientStore::new(n_modes);
        store.absorb_polynomial(poly, prefix);
        Ok(store)
    }

    pub(crate) fn absorb_polynomial(&mut self, poly: &LadderPolynomial, prefix: &str) {
        let normal = normal_order(poly);
        for (factors, c) in normal.terms() {
            if factors.is_empty() {
                continue;
            }
            let creators = factors.iter().filter(|op| op.is_create()).count();
            let annihilators = factors.len() - creators;
            let id = format!("{prefix}c{creators}a{annihilators}");
            self.kernels
                .entry(id)
                .or_insert_with(|| Kernel::new(creators, annihilators))
                .push(factors.iter().map(|op| op.mode).collect(), c);
        }
    }

    pub fn to_polynomial(&self) -> LadderPolynomial {
        self.kernels
            .values()
            .fold(LadderPolynomial::zero(), |acc, k| &acc + &k.to_polynomial())
    }
}

/// What a kernel axis or a source-Γ slot is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IndexLabel {
    /// One of the target's free momenta: `0..m` are `p_1..p_m`, `m..m+n` are `p'_1..p'_n`.
    Free(usize),
    /// Summed momentum carried by the given kernel axis.
    Summed(usize),
}

impl fmt::Display for IndexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexLabel::Free(i) => write!(f, "f{i}"),
            IndexLabel::Summed(k) => write!(f, "s{k}"),
        }
    }
}

impl std::str::FromStr for IndexLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("index label {s:?}"));
        let (head, tail) = s.split_at(s.len().min(1));
        let i: usize = tail.parse().map_err(|_| bad())?;
        match head {
            "f" => Ok(IndexLabel::Free(i)),
            "s" => Ok(IndexLabel::Summed(i)),
            _ => Err(bad()),
        }
    }
}

/// One weighted contraction of a source `Γ^(m',n')` against a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionTerm {
    pub source: (usize, usize),
    pub kernel: String,
    /// Binding of each kernel axis (creation axes first).
    pub kernel_axes: Vec<IndexLabel>,
    /// Binding of each source slot: `source.0` annihilation slots then `source.1` creation slots.
    pub gamma_slots: Vec<IndexLabel>,
    pub weight: Complex64,
}

impl ContractionTerm {
    pub fn source_order(&self) -> usize {
        self.source.0 + self.source.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionProgram {
    pub target: (usize, usize),
    pub terms: Vec<ContractionTerm>,
}

/// Enumerates all partial injective matchings of `left` items onto `right`
/// items with at least one pair. Each matching is a list of `(left, right)`.
fn nonempty_matchings(left: usize, right: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(i: usize, left: usize, right: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if i == left {
            if !cur.is_empty() {
                out.push(cur.clone());
            }
            return;
        }
        go(i + 1, left, right, used, cur, out);
        for j in 0..right {
            if !used[j] {
                used[j] = true;
                cur.push((i, j));
                go(i + 1, left, right, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, left, right, &mut vec![false; right], &mut Vec::new(), &mut out);
    out
}

/// Compiles `d/dt Γ^(m,n) = −i Tr(ρ [X, H])` for the Hamiltonian described by `store`.
pub fn compile_rhs(store: &CoefficientStore, m: usize, n: usize) -> Result<ContractionProgram> {
    if m + n == 0 {
        return Err(Error::InvalidInput("Γ^(0,0) is constant; target order must be ≥ 1".into()));
    }
    let degree = store.degree();
    if degree > MAX_HAMILTONIAN_DEGREE {
        return Err(Error::UnsupportedInteraction { degree });
    }
    if !store.to_polynomial().is_hermitian(1e-12) {
        return Err(Error::InvalidModel("Hamiltonian is not hermitian".into()));
    }

    let minus_i = Complex64::new(0.0, -1.0);
    let mut merged: BTreeMap<(usize, usize, String, Vec<IndexLabel>, Vec<IndexLabel>), Complex64> = BTreeMap::new();
    let mut emit = |kernel: &str, axes: Vec<IndexLabel>, mut ann: Vec<IndexLabel>, mut cre: Vec<IndexLabel>, w: Complex64| {
        // Γ is symmetric within each block, so slot order is canonicalised.
        ann.sort_unstable();
        cre.sort_unstable();
        let key = (ann.len(), cre.len(), kernel.to_string(), axes, [ann, cre].concat());
        *merged.entry(key).or_default() += w;
    };

    for (id, kernel) in store.kernels() {
        let (nc, na) = (kernel.creators, kernel.annihilators);
        if nc + na == 0 {
            continue;
        }
        let summed = |axis: usize| IndexLabel::Summed(axis);

        // X·H: annihilators of X (free 0..m) contract with creation axes of H (0..nc).
        for matching in nonempty_matchings(m, nc) {
            let mut axes: Vec<IndexLabel> = (0..nc + na).map(summed).collect();
            let mut x_ann_used = vec![false; m];
            let mut h_cre_used = vec![false; nc];
            for &(i, j) in &matching {
                axes[j] = IndexLabel::Free(i);
                x_ann_used[i] = true;
                h_cre_used[j] = true;
            }
            let cre: Vec<IndexLabel> = (0..n)
                .map(|j| IndexLabel::Free(m + j))
                .chain((0..nc).filter(|&j| !h_cre_used[j]).map(summed))
                .collect();
            let ann: Vec<IndexLabel> = (0..m)
                .filter(|&i| !x_ann_used[i])
                .map(IndexLabel::Free)
                .chain((nc..nc + na).map(summed))
                .collect();
            emit(id, axes, ann, cre, minus_i);
        }

        // H·X: annihilation axes of H (nc..nc+na) contract with creators of X (free m..m+n).
        for matching in nonempty_matchings(na, n) {
            let mut axes: Vec<IndexLabel> = (0..nc + na).map(summed).collect();
            let mut h_ann_used = vec![false; na];
            let mut x_cre_used = vec![false; n];
            for &(i, j) in &matching {
                axes[nc + i] = IndexLabel::Free(m + j);
                h_ann_used[i] = true;
                x_cre_used[j] = true;
            }
            let cre: Vec<IndexLabel> = (0..nc)
                .map(summed)
                .chain((0..n).filter(|&j| !x_cre_used[j]).map(|j| IndexLabel::Free(m + j)))
                .collect();
            let ann: Vec<IndexLabel> = (0..na)
                .filter(|&i| !h_ann_used[i])
                .map(|i| summed(nc + i))
                .chain((0..m).map(IndexLabel::Free))
                .collect();
            emit(id, axes, ann, cre, -minus_i);
        }
    }

    let terms = merged
        .into_iter()
        .filter(|(_, w)| w.norm() >= super::DEDUP_THRESHOLD)
        .map(|((sm, sn, kernel, kernel_axes, gamma_slots), weight)| ContractionTerm {
            source: (sm, sn),
            kernel,
            kernel_axes,
            gamma_slots,
            weight,
        })
        .collect();
    Ok(ContractionProgram { target: (m, n), terms })
}

impl ContractionProgram {
    pub fn free_count(&self) -> usize {
        self.target.0 + self.target.1
    }

    /// Evaluates the program into a dense row-major tensor of shape `M^(m+n)`.
    ///
    /// `source(m', n', slots)` returns `Γ^(m',n')` at the given annihilation
    /// then creation indices; callers decide whether that comes from stored
    /// data or from a closure.
    pub fn evaluate<F>(&self, store: &CoefficientStore, source: F) -> Result<Vec<Complex64>>
    where
        F: Fn(usize, usize, &[usize]) -> Complex64,
    {
        let modes = store.n_modes;
        let free = self.free_count();
        let mut out = vec![Complex64::new(0.0, 0.0); modes.pow(free as u32)];
        let mut free_vals = vec![0usize; free];
        let mut bound = vec![false; free];
        let mut slots = Vec::new();
        for term in &self.terms {
            let kernel = store.get(&term.kernel).ok_or_else(|| {
                Error::Configuration(format!("kernel {:?} missing from coefficient store", term.kernel))
            })?;
            for entry in &kernel.entries {
                bound.iter_mut().for_each(|b| *b = false);
                for (axis, label) in term.kernel_axes.iter().enumerate() {
                    if let IndexLabel::Free(i) = label {
                        free_vals[*i] = entry.indices[axis];
                        bound[*i] = true;
                    }
                }
                let unbound: Vec<usize> = (0..free).filter(|&i| !bound[i]).collect();
                for &i in &unbound {
                    free_vals[i] = 0;
                }
                let factor = term.weight * entry.value;
                loop {
                    slots.clear();
                    slots.extend(term.gamma_slots.iter().map(|label| match label {
                        IndexLabel::Free(i) => free_vals[*i],
                        IndexLabel::Summed(axis) => entry.indices[*axis],
                    }));
                    let value = source(term.source.0, term.source.1, &slots);
                    let flat = free_vals.iter().fold(0, |acc, &v| acc * modes + v);
                    out[flat] += factor * value;

                    // odometer over unbound free indices
                    let mut carry = true;
                    for &i in unbound.iter().rev() {
                        free_vals[i] += 1;
                        if free_vals[i] < modes {
                            carry = false;
                            break;
                        }
                        free_vals[i] = 0;
                    }
                    if carry {
                        break;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Programs for every stored order of a hierarchy with highest order `k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProgramSet {
    programs: BTreeMap<(usize, usize), ContractionProgram>,
}

impl ProgramSet {
    pub fn get(&self, m: usize, n: usize) -> Option<&ContractionProgram> {
        self.programs.get(&(m, n))
    }

    pub fn insert(&mut self, program: ContractionProgram) {
        self.programs.insert(program.target, program);
    }

    pub fn iter(&self) -> impl Iterator<Item = &ContractionProgram> + '_ {
        self.programs.values()
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = ProgramsDoc {
            programs: self.programs.values().map(ProgramDoc::from).collect(),
        };
        serde_json::to_value(doc).expect("program documents always serialise")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: ProgramsDoc = serde_json::from_value(value.clone())?;
        let mut set = ProgramSet::default();
        for p in doc.programs {
            set.insert(p.try_into()?);
        }
        Ok(set)
    }
}

/// Compiles every target `(m, n)` with `m ≥ n` and `1 ≤ m+n ≤ k−1`.
pub fn compile_hierarchy(store: &CoefficientStore, k: usize) -> Result<ProgramSet> {
    let targets: Vec<(usize, usize)> = crate::hierarchy::stored_orders(k)
        .into_iter()
        .filter(|&(m, n)| m + n > 0)
        .collect();
    let programs: Result<Vec<ContractionProgram>> =
        targets.par_iter().map(|&(m, n)| compile_rhs(store, m, n)).collect();
    let mut set = ProgramSet::default();
    for p in programs? {
        set.insert(p);
    }
    Ok(set)
}

#[derive(Serialize, Deserialize)]
struct ProgramsDoc {
    programs: Vec<ProgramDoc>,
}

#[derive(Serialize, Deserialize)]
struct ProgramDoc {
    target: [usize; 2],
    terms: Vec<TermDoc>,
}

/// `wiring` is `[kernel axis labels, source slot labels]`.
#[derive(Serialize, Deserialize)]
struct TermDoc {
    source: [usize; 2],
    kernel: String,
    wiring: [Vec<String>; 2],
    weight: [f64; 2],
}

impl From<&ContractionProgram> for ProgramDoc {
    fn from(p: &ContractionProgram) -> Self {
        let labels = |v: &[IndexLabel]| v.iter().map(ToString::to_string).collect();
        ProgramDoc {
            target: [p.target.0, p.target.1],
            terms: p
                .terms
                .iter()
                .map(|t| TermDoc {
                    source: [t.source.0, t.source.1],
                    kernel: t.kernel.clone(),
                    wiring: [labels(&t.kernel_axes), labels(&t.gamma_slots)],
                    weight: [t.weight.re, t.weight.im],
                })
                .collect(),
        }
    }
}

impl TryFrom<ProgramDoc> for ContractionProgram {
    type Error = Error;

    fn try_from(doc: ProgramDoc) -> Result<Self> {
        let parse = |v: &[String]| v.iter().map(|s| s.parse()).collect::<Result<Vec<IndexLabel>>>();
        let terms = doc
            .terms
            .into_iter()
            .map(|t| {
                Ok(ContractionTerm {
                    source: (t.source[0], t.source[1]),
                    kernel: t.kernel,
                    kernel_axes: parse(&t.wiring[0])?,
                    gamma_slots: parse(&t.wiring[1])?,
                    weight: Complex64::new(t.weight[0], t.weight[1]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ContractionProgram {
            target: (doc.target[0], doc.target[1]),
            terms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_store(energies: &[f64]) -> CoefficientStore {
        let mut k = Kernel::new(1, 1);
        for (i, &e) in energies.iter().enumerate() {
            k.push(vec![i, i], e);
        }
        let mut store = CoefficientStore::new(energies.len());
        store.insert("dispersion", k);
        store
    }

    fn pair_store(h: &[Vec<f64>]) -> CoefficientStore {
        let m = h.len();
        let mut k = Kernel::new(2, 2);
        for q in 0..m {
            for s in 0..m {
                k.push(vec![q, s, q, s], 0.5 * h[q][s]);
            }
        }
        let mut store = CoefficientStore::new(m);
        store.insert("pair", k);
        store
    }

    #[test]
    fn free_theory_first_moment_program() {
        let store = free_store(&[0.7, 1.3]);
        let prog = compile_rhs(&store, 1, 0).unwrap();
        assert_eq!(prog.terms.len(), 1);
        let t = &prog.terms[0];
        assert_eq!(t.source, (1, 0));
        assert_eq!(t.kernel_axes, vec![IndexLabel::Free(0), IndexLabel::Summed(1)]);
        assert_eq!(t.gamma_slots, vec![IndexLabel::Summed(1)]);
        assert_eq!(t.weight, Complex64::new(0.0, -1.0));

        let gamma = [Complex64::new(0.2, 0.1), Complex64::new(-0.4, 0.3)];
        let out = prog.evaluate(&store, |_, _, s| gamma[s[0]]).unwrap();
        for p in 0..2 {
            let e = [0.7, 1.3][p];
            assert!((out[p] - Complex64::new(0.0, -e) * gamma[p]).norm() < 1e-15);
        }
    }

    #[test]
    fn quartic_first_moment_matches_hand_expansion() {
        // dΓ^(1,0)(p)/dt = −i Σ_q h(p,q) Γ^(2,1)(p,q;q)
        let h = vec![vec![1.0, 0.4, -0.2], vec![0.4, 2.0, 0.3], vec![-0.2, 0.3, 0.5]];
        let store = pair_store(&h);
        let prog = compile_rhs(&store, 1, 0).unwrap();
        assert!(prog.terms.iter().all(|t| t.source == (2, 1)));
        let g21 = |s: &[usize]| Complex64::new((s[0] * 7 + s[1] * 7 + s[2] * 3) as f64 * 0.01, s[2] as f64 * 0.02);
        let out = prog.evaluate(&store, |m, n, s| {
            assert_eq!((m, n), (2, 1));
            g21(s)
        }).unwrap();
        for p in 0..3 {
            let mut expected = Complex64::new(0.0, 0.0);
            for q in 0..3 {
                expected += h[p][q] * g21(&[p, q, q]);
            }
            expected *= Complex64::new(0.0, -1.0);
            assert!((out[p] - expected).norm() < 1e-14, "p={p}");
        }
    }

    #[test]
    fn quartic_one_body_density_matches_hand_expansion() {
        // dΓ^(1,1)(p;p')/dt = −i Σ_q Γ^(2,2)(p,q;p',q)(h(p,q) − h(p',q))
        let h = vec![vec![1.0, 0.4], vec![0.4, 2.0]];
        let store = pair_store(&h);
        let prog = compile_rhs(&store, 1, 1).unwrap();
        assert!(prog.terms.iter().all(|t| t.source == (2, 2)));
        // symmetric in annihilation and in creation slots
        let g22 = |s: &[usize]| {
            let a = (s[0] + s[1]) as f64 + 0.1 * (s[0] * s[1]) as f64;
            let c = (s[2] + s[3]) as f64 + 0.3 * (s[2] * s[3]) as f64;
            Complex64::new(a + 2.0 * c, a - c)
        };
        let out = prog.evaluate(&store, |_, _, s| g22(s)).unwrap();
        for p in 0..2 {
            for pp in 0..2 {
                let mut expected = Complex64::new(0.0, 0.0);
                for q in 0..2 {
                    expected += g22(&[p, q, pp, q]) * (h[p][q] - h[pp][q]);
                }
                expected *= Complex64::new(0.0, -1.0);
                assert!((out[p * 2 + pp] - expected).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn degree_bookkeeping_and_free_index_coverage() {
        let store = pair_store(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        for (m, n) in [(1, 0), (2, 0), (1, 1), (2, 1), (3, 2)] {
            let prog = compile_rhs(&store, m, n).unwrap();
            for t in &prog.terms {
                assert!(t.source_order() <= m + n + 4 - 2);
                let mut frees: Vec<usize> = t
                    .kernel_axes
                    .iter()
                    .chain(&t.gamma_slots)
                    .filter_map(|l| match l {
                        IndexLabel::Free(i) => Some(*i),
                        _ => None,
                    })
                    .collect();
                frees.sort_unstable();
                assert_eq!(frees, (0..m + n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn rejects_degree_above_four() {
        let mut store = CoefficientStore::new(1);
        let mut k = Kernel::new(3, 3);
        k.push(vec![0; 6], 1.0);
        store.insert("sextic", k);
        assert!(matches!(compile_rhs(&store, 1, 0), Err(Error::UnsupportedInteraction { degree: 6 })));
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut store = CoefficientStore::new(2);
        let mut k = Kernel::new(1, 1);
        k.push(vec![0, 1], 1.0);
        store.insert("hop", k);
        assert!(matches!(compile_rhs(&store, 1, 0), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn json_round_trip() {
        let store = pair_store(&[vec![1.0, 0.5], vec![0.5, 1.0]]);
        let set = compile_hierarchy(&store, 4).unwrap();
        let json = set.to_json();
        let terms = &json["programs"][0]["terms"][0];
        assert!(terms["wiring"].is_array());
        assert!(terms["weight"].is_array());
        assert_eq!(ProgramSet::from_json(&json).unwrap(), set);
    }

    #[test]
    fn polynomial_store_round_trip() {
        let mut p = LadderPolynomial::zero();
        p.add_term(2.0, vec![LadderOp::create(0), LadderOp::annihilate(1)]);
        p.add_term(2.0, vec![LadderOp::create(1), LadderOp::annihilate(0)]);
        p.add_term(0.5, vec![LadderOp::annihilate(0)]);
        p.add_term(0.5, vec![LadderOp::create(0)]);
        let store = CoefficientStore::from_polynomial(&p, 2, "h_").unwrap();
        assert!(store.get("h_c1a1").is_some());
        assert!(store.get("h_c0a1").is_some());
        assert_eq!(store.to_polynomial(), normal_order(&p));
    }
}
