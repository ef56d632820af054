//! Reduced density matrices `Γ^(m,n)` stored as dense complex tensors.
//!
//! A [`HierarchyState`] of order `K` stores every `Γ^(m,n)` with `m + n ≤ K−1`
//! and `m ≥ n`. The remaining tensors follow from Hermiticity,
//! `Γ^(n,m)(p';p) = conj Γ^(m,n)(p;p')`, and are produced on demand.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// All `(m, n)` with `m ≥ n` and `m + n ≤ k − 1`, including `(0, 0)`.
pub fn stored_orders(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for total in 0..k {
        for n in 0..=total / 2 {
            out.push((total - n, n));
        }
    }
    out
}

pub(crate) fn flat_index(slots: &[usize], modes: usize) -> usize {
    slots.iter().fold(0, |acc, &v| acc * modes + v)
}

pub(crate) fn unflatten(mut flat: usize, modes: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % modes;
        flat /= modes;
    }
}

/// Advances `v` to the next lexicographic permutation; false once exhausted.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Distinct permutations of a multiset, in lexicographic order.
fn distinct_permutations(block: &[usize]) -> Vec<Vec<usize>> {
    let mut v = block.to_vec();
    v.sort_unstable();
    let mut out = vec![v.clone()];
    while next_permutation(&mut v) {
        out.push(v.clone());
    }
    out
}

/// `Γ^(m,n)` over `modes^(m+n)` entries, annihilation slots first.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTensor {
    pub m: usize,
    pub n: usize,
    pub modes: usize,
    pub data: Vec<Complex64>,
}

impl GammaTensor {
    pub fn zeros(m: usize, n: usize, modes: usize) -> Self {
        GammaTensor {
            m,
            n,
            modes,
            data: vec![ZERO; modes.pow((m + n) as u32)],
        }
    }

    pub fn from_data(m: usize, n: usize, modes: usize, data: Vec<Complex64>) -> Result<Self> {
        let expected = modes.pow((m + n) as u32);
        if data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "Γ^({m},{n}) over {modes} modes needs {expected} entries, got {}",
                data.len()
            )));
        }
        Ok(GammaTensor { m, n, modes, data })
    }

    pub fn from_fn(m: usize, n: usize, modes: usize, mut f: impl FnMut(&[usize]) -> Complex64) -> Self {
        let mut t = Self::zeros(m, n, modes);
        let mut slots = vec![0; m + n];
        for flat in 0..t.data.len() {
            unflatten(flat, modes, &mut slots);
            t.data[flat] = f(&slots);
        }
        t
    }

    pub fn rank(&self) -> usize {
        self.m + self.n
    }

    pub fn get(&self, slots: &[usize]) -> Complex64 {
        self.data[flat_index(slots, self.modes)]
    }

    pub fn set(&mut self, slots: &[usize], value: Complex64) {
        let i = flat_index(slots, self.modes);
        self.data[i] = value;
    }

    /// `Γ^(n,m)` obtained by conjugation and swapping the slot blocks.
    pub fn conj_transpose(&self) -> GammaTensor {
        let (m, n) = (self.m, self.n);
        GammaTensor::from_fn(n, m, self.modes, |slots| {
            let swapped: Vec<usize> = slots[n..].iter().chain(&slots[..n]).copied().collect();
            self.get(&swapped).conj()
        })
    }

    /// Average over permutations of the annihilation block and of the
    /// creation block. Every orbit member receives the same stored value.
    pub fn symmetrize(&self) -> GammaTensor {
        let mut out = self.clone();
        let (m, modes) = (self.m, self.modes);
        let mut slots = vec![0; self.rank()];
        for flat in 0..self.data.len() {
            unflatten(flat, modes, &mut slots);
            let (ann, cre) = slots.split_at(m);
            let sorted = ann.windows(2).all(|w| w[0] <= w[1]) && cre.windows(2).all(|w| w[0] <= w[1]);
            if !sorted {
                continue;
            }
            let ann_perms = distinct_permutations(ann);
            let cre_perms = distinct_permutations(cre);
            let mut members = Vec::with_capacity(ann_perms.len() * cre_perms.len());
            let mut sum = ZERO;
            for a in &ann_perms {
                for c in &cre_perms {
                    let idx = a.iter().chain(c).fold(0, |acc, &v| acc * modes + v);
                    sum += self.data[idx];
                    members.push(idx);
                }
            }
            let mean = sum / members.len() as f64;
            for idx in members {
                out.data[idx] = mean;
            }
        }
        out
    }

    /// For `m == n`, replaces the tensor by its Hermitian part; otherwise a no-op.
    pub fn hermitize(&self) -> GammaTensor {
        if self.m != self.n {
            return self.clone();
        }
        let mut out = self.clone();
        let m = self.m;
        let mut slots = vec![0; self.rank()];
        let mut swapped = vec![0; self.rank()];
        for flat in 0..self.data.len() {
            unflatten(flat, self.modes, &mut slots);
            swapped[..m].copy_from_slice(&slots[m..]);
            swapped[m..].copy_from_slice(&slots[..m]);
            let partner = flat_index(&swapped, self.modes);
            if partner < flat {
                continue;
            }
            let v = (self.data[flat] + self.data[partner].conj()) * 0.5;
            out.data[flat] = v;
            out.data[partner] = v.conj();
        }
        out
    }

    pub fn symmetry_residual(&self) -> f64 {
        max_abs_diff(&self.data, &self.symmetrize().data)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        if self.m != self.n {
            return 0.0;
        }
        max_abs_diff(&self.data, &self.conj_transpose().data)
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// The collection `Γ_K = {Γ^(m,n) : m+n ≤ K−1}` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    modes: usize,
    order: usize,
    pub time: f64,
    tensors: BTreeMap<(usize, usize), GammaTensor>,
}

impl HierarchyState {
    /// The vacuum: every tensor zero except `Γ^(0,0) = 1`.
    pub fn vacuum(modes: usize, order: usize) -> Self {
        let mut tensors = BTreeMap::new();
        for (m, n) in stored_orders(order) {
            tensors.insert((m, n), GammaTensor::zeros(m, n, modes));
        }
        if let Some(t) = tensors.get_mut(&(0, 0)) {
            t.data[0] = ONE;
        }
        HierarchyState {
            modes,
            order,
            time: 0.0,
            tensors,
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// `K`: every order with `m + n ≤ K−1` is stored.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn in_range(&self, m: usize, n: usize) -> bool {
        m + n < self.order
    }

    fn check_range(&self, m: usize, n: usize) -> Result<()> {
        if self.in_range(m, n) {
            Ok(())
        } else {
            Err(Error::OutOfOrder {
                m,
                n,
                max: self.order.saturating_sub(1),
            })
        }
    }

    /// The stored tensor for `m ≥ n`, or the conjugate-transpose view otherwise.
    pub fn get_gamma(&self, m: usize, n: usize) -> Result<GammaTensor> {
        self.check_range(m, n)?;
        if m >= n {
            Ok(self.tensors[&(m, n)].clone())
        } else {
            Ok(self.tensors[&(n, m)].conj_transpose())
        }
    }

    /// Stored tensor with `m ≥ n`, borrowed.
    pub fn stored(&self, m: usize, n: usize) -> Option<&GammaTensor> {
        self.tensors.get(&(m, n))
    }

    pub fn stored_tensors(&self) -> impl Iterator<Item = &GammaTensor> + '_ {
        self.tensors.values()
    }

    /// Single entry `Γ^(m,n)(slots)` for any in-range `(m, n)`.
    pub fn entry(&self, m: usize, n: usize, slots: &[usize]) -> Result<Complex64> {
        self.check_range(m, n)?;
        Ok(self.entry_unchecked(m, n, slots))
    }

    pub(crate) fn entry_unchecked(&self, m: usize, n: usize, slots: &[usize]) -> Complex64 {
        if m >= n {
            self.tensors[&(m, n)].get(slots)
        } else {
            let mut swapped = [0usize; 16];
            let k = slots.len();
            swapped[..n].copy_from_slice(&slots[m..]);
            swapped[n..k].copy_from_slice(&slots[..m]);
            self.tensors[&(n, m)].get(&swapped[..k]).conj()
        }
    }

    /// Stores a tensor after symmetrisation (and Hermitisation for `m == n`).
    /// Tensors with `m < n` are stored as their conjugate transpose.
    pub fn set_gamma(&mut self, tensor: GammaTensor) -> Result<()> {
        if tensor.modes != self.modes {
            return Err(Error::IncompatibleStates(format!(
                "tensor over {} modes, state over {}",
                tensor.modes, self.modes
            )));
        }
        self.check_range(tensor.m, tensor.n)?;
        if (tensor.m, tensor.n) == (0, 0) {
            return Ok(());
        }
        let tensor = if tensor.m >= tensor.n {
            tensor
        } else {
            tensor.conj_transpose()
        };
        let tensor = tensor.symmetrize().hermitize();
        self.tensors.insert((tensor.m, tensor.n), tensor);
        Ok(())
    }

    /// Restores the structural invariants on every stored tensor.
    pub fn enforce_symmetry(&mut self) {
        for t in self.tensors.values_mut() {
            *t = t.symmetrize().hermitize();
        }
        if let Some(t) = self.tensors.get_mut(&(0, 0)) {
            t.data[0] = ONE;
        }
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.tensors.values().map(GammaTensor::hermiticity_residual).fold(0.0, f64::max)
    }

    pub fn symmetry_residual(&self) -> f64 {
        self.tensors.values().map(GammaTensor::symmetry_residual).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> Complex64 {
        self.tensors[&(0, 0)].data[0]
    }

    /// Linear combination `self + s · other` over the stored tensors (used by the integrator).
    pub(crate) fn axpy(&self, s: f64, derivative: &[GammaTensor]) -> HierarchyState {
        let mut out = self.clone();
        for d in derivative {
            let t = out.tensors.get_mut(&(d.m, d.n)).expect("derivative order is stored");
            for (x, y) in t.data.iter_mut().zip(&d.data) {
                *x += y * s;
            }
        }
        out
    }

    /// Product-state moments `Γ^(m,n)(p;p') = Π conj(α_{p'_j}) Π α_{p_i}`.
    pub fn coherent(alpha: &[Complex64], order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidInput("hierarchy order K must be ≥ 1".into()));
        }
        let modes = alpha.len();
        let mut state = Self::vacuum(modes, order);
        for (m, n) in stored_orders(order) {
            let t = GammaTensor::from_fn(m, n, modes, |slots| {
                let ann: Complex64 = slots[..m].iter().map(|&p| alpha[p]).product();
                let cre: Complex64 = slots[m..].iter().map(|&p| alpha[p].conj()).product();
                ann * cre
            });
            state.tensors.insert((m, n), t);
        }
        Ok(state)
    }

    /// Gaussian number-diagonal moments: `Γ^(1,1) = diag(n)`, `Γ^(m,m)` the
    /// permanent over pairings, everything with `m ≠ n` zero.
    pub fn gaussian(occupations: &[f64], order: usize) -> Result<Self> {
        if let Some(bad) = occupations.iter().find(|n| !(**n >= 0.0) || !n.is_finite()) {
            return Err(Error::InvalidInput(format!("occupation {bad} must be a finite value ≥ 0")));
        }
        let modes = occupations.len();
        let mut state = Self::vacuum(modes, order);
        for (m, n) in stored_orders(order) {
            if m != n || m == 0 {
                continue;
            }
            let t = GammaTensor::from_fn(m, n, modes, |slots| {
                let (ann, cre) = slots.split_at(m);
                let mut perm: Vec<usize> = (0..m).collect();
                let mut total = 0.0;
                loop {
                    let mut term = 1.0;
                    for (j, &i) in perm.iter().enumerate() {
                        if ann[i] != cre[j] {
                            term = 0.0;
                            break;
                        }
                        term *= occupations[ann[i]];
                    }
                    total += term;
                    if !next_permutation(&mut perm) {
                        break;
                    }
                }
                Complex64::new(total, 0.0)
            });
            state.tensors.insert((m, n), t);
        }
        Ok(state)
    }

    /// Max-norm difference over orders with `m + n ≤ order_cap − 1`.
    pub fn distance(&self, other: &HierarchyState, order_cap: usize) -> Result<f64> {
        if self.modes != other.modes {
            return Err(Error::IncompatibleStates(format!(
                "mode counts differ: {} vs {}",
                self.modes, other.modes
            )));
        }
        if self.order < order_cap || other.order < order_cap {
            return Err(Error::IncompatibleStates(format!(
                "order cap {order_cap} exceeds stored orders {} / {}",
                self.order, other.order
            )));
        }
        Ok(self.distance_by_order(other, order_cap)?.into_values().fold(0.0, f64::max))
    }

    /// Per-order max-norm differences, as used in comparison summaries.
    pub fn distance_by_order(&self, other: &HierarchyState, order_cap: usize) -> Result<BTreeMap<(usize, usize), f64>> {
        if self.modes != other.modes {
            return Err(Error::IncompatibleStates("mode counts differ".into()));
        }
        let mut out = BTreeMap::new();
        for (m, n) in stored_orders(order_cap.min(self.order).min(other.order)) {
            let a = &self.tensors[&(m, n)];
            let b = &other.tensors[&(m, n)];
            out.insert((m, n), max_abs_diff(&a.data, &b.data));
        }
        Ok(out)
    }

    pub fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            modes: self.modes,
            order: self.order,
            dtype: SNAPSHOT_DTYPE.to_string(),
            tensors: self
                .tensors
                .values()
                .map(|t| TensorRecord {
                    m: t.m,
                    n: t.n,
                    shape: vec![t.modes; t.rank()],
                    data: encode_payload(&t.data),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: &Snapshot) -> Result<Self> {
        if snap.dtype != SNAPSHOT_DTYPE {
            return Err(Error::InvalidInput(format!("unsupported snapshot dtype {:?}", snap.dtype)));
        }
        let mut state = Self::vacuum(snap.modes, snap.order);
        state.time = snap.time;
        for rec in &snap.tensors {
            let data = decode_payload(&rec.data)?;
            let t = GammaTensor::from_data(rec.m, rec.n, snap.modes, data)?;
            state.check_range(t.m, t.n)?;
            state.tensors.insert((t.m, t.n), t);
        }
        Ok(state)
    }
}

/// Little-endian pairs of `f64` (real, imaginary) per entry.
pub const SNAPSHOT_DTYPE: &str = "complex128-le";

/// JSON snapshot record of a [`HierarchyState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub modes: usize,
    pub order: usize,
    pub dtype: String,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub m: usize,
    pub n: usize,
    pub shape: Vec<usize>,
    /// base64 payload
    pub data: String,
}

fn encode_payload(data: &[Complex64]) -> String {
    let mut bytes = Vec::with_capacity(data.len() * 16);
    for z in data {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_payload(text: &str) -> Result<Vec<Complex64>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::InvalidInput(format!("snapshot payload: {e}")))?;
    if bytes.len() % 16 != 0 {
        return Err(Error::InvalidInput("snapshot payload length is not a multiple of 16".into()));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn stored_order_list() {
        assert_eq!(stored_orders(1), vec![(0, 0)]);
        assert_eq!(stored_orders(3), vec![(0, 0), (1, 0), (2, 0), (1, 1)]);
        assert_eq!(stored_orders(6).len(), 12);
    }

    #[test]
    fn get_gamma_examples() {
        let vac = HierarchyState::vacuum(2, 3);
        assert_eq!(vac.get_gamma(0, 0).unwrap().data, vec![ONE]);
        assert!(vac.get_gamma(1, 1).unwrap().data.iter().all(|z| *z == ZERO));

        let s = HierarchyState::coherent(&[c(0.5, 0.1)], 2).unwrap();
        assert_eq!(s.get_gamma(0, 1).unwrap().data, vec![c(0.5, -0.1)]);
        assert!(matches!(s.get_gamma(1, 1), Err(Error::OutOfOrder { .. })));
    }

    #[test]
    fn conjugate_view_entries() {
        let alpha = [c(0.3, 0.1), c(-0.2, 0.5), c(0.4, -0.7)];
        let s = HierarchyState::coherent(&alpha, 4).unwrap();
        let view = s.get_gamma(1, 2).unwrap();
        for (p, q, r) in [(0, 1, 2), (2, 0, 1), (1, 1, 0)] {
            let expected = alpha[p] * alpha[q].conj() * alpha[r].conj();
            assert!((s.entry(1, 2, &[p, q, r]).unwrap() - expected).norm() < 1e-15);
            assert!((view.get(&[p, q, r]) - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn coherent_examples() {
        let vac = HierarchyState::coherent(&[ZERO, ZERO], 4).unwrap();
        assert_eq!(vac, HierarchyState::vacuum(2, 4));

        let s = HierarchyState::coherent(&[c(2.0, 0.0)], 5).unwrap();
        assert_eq!(s.get_gamma(1, 1).unwrap().data[0], c(4.0, 0.0));
        assert_eq!(s.get_gamma(2, 2).unwrap().data[0], c(16.0, 0.0));

        let s = HierarchyState::coherent(&[c(1.0, 1.0)], 3).unwrap();
        assert!((s.get_gamma(2, 0).unwrap().data[0] - c(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(HierarchyState::gaussian(&[0.0, 0.0], 5).unwrap(), HierarchyState::vacuum(2, 5));
        let s = HierarchyState::gaussian(&[2.0], 5).unwrap();
        assert_eq!(s.entry(2, 2, &[0, 0, 0, 0]).unwrap(), c(8.0, 0.0));
        let s = HierarchyState::gaussian(&[1.0, 1.0], 5).unwrap();
        assert_eq!(s.entry(2, 2, &[0, 1, 0, 1]).unwrap(), c(1.0, 0.0));
        assert_eq!(s.entry(2, 2, &[0, 1, 1, 0]).unwrap(), c(1.0, 0.0));
        assert_eq!(s.entry(2, 0, &[0, 1]).unwrap(), ZERO);
        assert!(matches!(HierarchyState::gaussian(&[-1.0], 3), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn symmetrize_examples() {
        let mut t = GammaTensor::zeros(2, 0, 2);
        t.set(&[0, 1], ONE);
        let s = t.symmetrize();
        assert_eq!(s.get(&[0, 1]), c(0.5, 0.0));
        assert_eq!(s.get(&[1, 0]), c(0.5, 0.0));
        assert_eq!(s.symmetrize(), s);
    }

    #[test]
    fn distance_examples() {
        let vac = HierarchyState::vacuum(1, 3);
        assert_eq!(vac.distance(&vac, 3).unwrap(), 0.0);
        let coh = HierarchyState::coherent(&[ONE], 3).unwrap();
        assert_eq!(vac.distance(&coh, 2).unwrap(), 1.0);
        let other = HierarchyState::vacuum(2, 3);
        assert!(matches!(vac.distance(&other, 2), Err(Error::IncompatibleStates(_))));
    }

    #[test]
    fn set_then_get_is_symmetric_and_hermitian() {
        let mut s = HierarchyState::vacuum(2, 5);
        let raw = GammaTensor::from_fn(1, 2, 2, |x| c(x[0] as f64 + 0.3 * x[1] as f64, x[2] as f64));
        s.set_gamma(raw).unwrap();
        let back = s.get_gamma(1, 2).unwrap();
        assert!(back.symmetry_residual() == 0.0);
        let stored = s.get_gamma(2, 1).unwrap();
        assert_eq!(stored.conj_transpose(), back);

        let raw = GammaTensor::from_fn(1, 1, 2, |x| c(x[0] as f64, x[1] as f64));
        s.set_gamma(raw).unwrap();
        assert_eq!(s.get_gamma(1, 1).unwrap().hermiticity_residual(), 0.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = HierarchyState::coherent(&[c(0.3, -0.2), c(0.1, 0.7)], 4).unwrap();
        s.time = 0.25;
        let json = serde_json::to_string(&s.to_snapshot()).unwrap();
        let back: Snapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(HierarchyState::from_snapshot(&back).unwrap(), s);
    }

    fn arb_tensor(m: usize, n: usize, modes: usize) -> impl Strategy<Value = GammaTensor> {
        let len = modes.pow((m + n) as u32);
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
            .prop_map(move |v| GammaTensor::from_data(m, n, modes, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap())
    }

    fn arb_state() -> impl Strategy<Value = HierarchyState> {
        (arb_tensor(1, 0, 2), arb_tensor(2, 0, 2), arb_tensor(1, 1, 2)).prop_map(|(a, b, d)| {
            let mut s = HierarchyState::vacuum(2, 3);
            s.set_gamma(a).unwrap();
            s.set_gamma(b).unwrap();
            s.set_gamma(d).unwrap();
            s
        })
    }

    proptest! {
        #[test]
        fn symmetrize_is_idempotent(t in arb_tensor(2, 1, 3)) {
            let once = t.symmetrize();
            prop_assert_eq!(once.symmetrize(), once.clone());
            prop_assert_eq!(once.symmetry_residual(), 0.0);
        }

        #[test]
        fn distance_is_a_metric(a in arb_state(), b in arb_state(), d in arb_state()) {
            let ab = a.distance(&b, 3).unwrap();
            prop_assert_eq!(ab, b.distance(&a, 3).unwrap());
            prop_assert!(a.distance(&d, 3).unwrap() <= ab + b.distance(&d, 3).unwrap() + 1e-15);
            prop_assert_eq!(a.distance(&a, 3).unwrap(), 0.0);
        }
    }
}
