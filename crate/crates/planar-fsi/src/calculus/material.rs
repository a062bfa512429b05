//! Interior commutator expansions.
//!
//! Repeated material derivatives do not commute with spatial operators; the
//! defect of `div`, `curl` and `grad` after `k` derivatives expands into a
//! finite family of gradient products with integer coefficients. The tables
//! here carry those coefficients exactly, verify them against the expression
//! engine and against polynomial instances, and certify the factorial bound
//! the membership estimates rest on.

use super::expr::{Atom, Expr, DIM};
use super::poly::{FieldInstance, Poly};
use num::{BigInt, BigRational, One, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// Derivative exponents of one product term, one entry per gradient factor.
/// The last slot differentiates the transported field, all earlier slots the
/// velocity: `(a_1, .., a_s)` stands for
/// `grad D^{a_1} u · .. · grad D^{a_{s-1}} u · grad D^{a_s} psi`.
pub type Composition = Vec<u32>;

pub fn factorial(n: u32) -> BigInt {
    (1..=u64::from(n)).map(BigInt::from).fold(BigInt::one(), |a, b| a * b)
}

pub fn composition_factorial(word: &[u32]) -> BigInt {
    word.iter()
        .map(|&a| factorial(a))
        .fold(BigInt::one(), |a, b| a * b)
}

pub fn binomial(n: u32, r: u32) -> BigInt {
    assert!(r <= n);
    factorial(n) / (factorial(r) * factorial(n - r))
}

/// `k! / alpha!`, the sharp coefficient bound. Always an integer since the
/// total derivative count stays below `k`.
pub fn coefficient_bound(order: u32, word: &[u32]) -> BigInt {
    let ratio = BigRational::new(factorial(order), composition_factorial(word));
    assert!(ratio.is_integer());
    ratio.to_integer()
}

/// All exponent tuples admissible at a given order: `s` factors with
/// `2 <= s <= k + 1` and total derivative count `k + 1 - s`.
pub fn admissible_indices(order: u32) -> BTreeSet<Composition> {
    let mut out = BTreeSet::new();
    for s in 2..=(order + 1) {
        let mut prefix = Vec::new();
        compositions_into(order + 1 - s, s as usize, &mut prefix, &mut out);
    }
    out
}

fn compositions_into(
    total: u32,
    slots: usize,
    prefix: &mut Composition,
    out: &mut BTreeSet<Composition>,
) {
    if slots == 1 {
        prefix.push(total);
        out.insert(prefix.clone());
        prefix.pop();
        return;
    }
    for head in 0..=total {
        prefix.push(head);
        compositions_into(total - head, slots - 1, prefix, out);
        prefix.pop();
    }
}

/// The same family generated by the derivative moves instead of by counting:
/// raise one exponent, insert a fresh zero-order factor, or seed the new
/// top-derivative pair.
pub fn admissible_indices_by_closure(order: u32) -> BTreeSet<Composition> {
    let mut level: BTreeSet<Composition> = BTreeSet::from([vec![0, 0]]);
    for step in 1..order {
        let mut next = BTreeSet::new();
        for word in &level {
            for i in 0..word.len() {
                let mut bumped = word.clone();
                bumped[i] += 1;
                next.insert(bumped);
                let mut inserted = word.clone();
                inserted.insert(i, 0);
                next.insert(inserted);
            }
        }
        next.insert(vec![0, step]);
        level = next;
    }
    level
}

pub fn admissible_count(order: u32) -> u64 {
    2u64.pow(order) - 1
}

/// Coefficient table of the order-`k` commutation defect. The same table
/// feeds the divergence identity through a closed trace and the curl
/// identity through the antisymmetric part of the open product.
#[derive(Clone, Debug)]
pub struct CommutatorTable {
    pub order: u32,
    terms: BTreeMap<Composition, BigInt>,
}

/// Add `coeff` to `map[key]`, dropping entries that cancel to zero.
pub fn accumulate_int<K: Ord>(map: &mut BTreeMap<K, BigInt>, key: K, coeff: BigInt) {
    use std::collections::btree_map::Entry;
    if coeff.is_zero() {
        return;
    }
    match map.entry(key) {
        Entry::Vacant(v) => {
            v.insert(coeff);
        }
        Entry::Occupied(mut o) => {
            *o.get_mut() += coeff;
            if o.get().is_zero() {
                o.remove();
            }
        }
    }
}

impl CommutatorTable {
    pub fn new(order: u32) -> CommutatorTable {
        assert!(order >= 1, "the defect starts at one derivative");
        let mut terms = BTreeMap::from([(vec![0, 0], BigInt::one())]);
        for level in 1..order {
            let mut next = BTreeMap::new();
            for (word, coeff) in &terms {
                for i in 0..word.len() {
                    // D on factor i raises its order ..
                    let mut bumped = word.clone();
                    bumped[i] += 1;
                    accumulate_int(&mut next, bumped, coeff.clone());
                    // .. and sheds a velocity gradient in front of it.
                    let mut inserted = word.clone();
                    inserted.insert(i, 0);
                    accumulate_int(&mut next, inserted, -coeff.clone());
                }
            }
            // commuting the outermost derivative seeds the top pair
            accumulate_int(&mut next, vec![0, level], BigInt::one());
            terms = next;
        }
        CommutatorTable { order, terms }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Composition, &BigInt)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, word: &[u32]) -> BigInt {
        self.terms.get(word).cloned().unwrap_or_else(BigInt::zero)
    }

    /// Closed-chain contraction: the scalar entering the divergence identity.
    pub fn trace_expr(&self) -> Expr {
        let mut out = Expr::zero();
        for (word, coeff) in &self.terms {
            let s = word.len();
            let weight = BigRational::from_integer(coeff.clone());
            for chain in index_chains(s) {
                let mut product = Expr::one();
                for (j, &a) in word.iter().enumerate() {
                    let row = chain[j];
                    let col = chain[(j + 1) % s];
                    product = product.mul(&Expr::atom(factor_atom(j + 1 == s, a, col, row)));
                }
                out = out.add(&product.scale(&weight));
            }
        }
        out
    }

    /// Antisymmetric part of the open product: the scalar entering the curl
    /// identity.
    pub fn antisymmetric_expr(&self) -> Expr {
        self.open_entry(0, 1).sub(&self.open_entry(1, 0))
    }

    /// Entry `(row, col)` of the matrix product, chain left open.
    fn open_entry(&self, row: u8, col: u8) -> Expr {
        let mut out = Expr::zero();
        for (word, coeff) in &self.terms {
            let s = word.len();
            let weight = BigRational::from_integer(coeff.clone());
            for middle in index_chains(s - 1) {
                let mut product = Expr::one();
                for (j, &a) in word.iter().enumerate() {
                    let r = if j == 0 { row } else { middle[j - 1] };
                    let c = if j + 1 == s { col } else { middle[j] };
                    product = product.mul(&Expr::atom(factor_atom(j + 1 == s, a, c, r)));
                }
                out = out.add(&product.scale(&weight));
            }
        }
        out
    }
}

fn factor_atom(is_test: bool, mat: u32, comp: u8, deriv: u8) -> Atom {
    let base = if is_test {
        Atom::test(&[comp])
    } else {
        Atom::velocity(comp)
    };
    base.material(mat).derived(deriv)
}

fn index_chains(len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|chain| {
                (0..DIM).map(move |i| {
                    let mut next = chain.clone();
                    next.push(i);
                    next
                })
            })
            .collect();
    }
    out
}

/// `D^k grad psi - grad D^k psi`, entry `(row, col)`, from the engine.
pub fn gradient_defect(order: u32, row: u8, col: u8) -> Expr {
    let direct = Expr::atom(Atom::test(&[col]).derived(row)).material_n(order);
    let commuted = Expr::atom(Atom::test(&[col])).material_n(order).d_space(row);
    direct.sub(&commuted)
}

/// The same defect written as the binomial sum
/// `-sum_r C(k, r) grad D^{r-1} u . D^{k-r} grad psi`.
pub fn gradient_defect_formula(order: u32, row: u8, col: u8) -> Expr {
    let mut out = Expr::zero();
    for r in 1..=order {
        let weight = BigRational::from_integer(-binomial(order, r));
        for l in 0..DIM {
            let left = Expr::atom(Atom::velocity(l).material(r - 1).derived(row));
            let right = Expr::atom(Atom::test(&[col]).derived(l)).material_n(order - r);
            out = out.add(&left.mul(&right).scale(&weight));
        }
    }
    out
}

/// Divergence of `D^k psi` computed factor-by-factor on an instance,
/// bypassing the expression engine entirely.
pub fn divergence_after_materials(inst: &FieldInstance, order: u32) -> Poly {
    (0..DIM)
        .map(|i| inst.material_n(&inst.test[i as usize], order).dx(i))
        .fold(Poly::zero(), |acc, p| acc.add(&p))
}

pub fn curl_after_materials(inst: &FieldInstance, order: u32) -> Poly {
    inst.material_n(&inst.test[1], order)
        .dx(0)
        .sub(&inst.material_n(&inst.test[0], order).dx(1))
}

pub fn instance_divergence(inst: &FieldInstance) -> Poly {
    inst.test[0].dx(0).add(&inst.test[1].dx(1))
}

pub fn instance_curl(inst: &FieldInstance) -> Poly {
    inst.test[1].dx(0).sub(&inst.test[0].dx(1))
}
