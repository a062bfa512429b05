//! Formal expressions for iterated material derivatives.
//!
//! Everything is a finite sum of ordered products of atoms, where an atom is
//! a spatial derivative of an iterated material derivative of one symbol
//! component. The single rewriting rule is the commutator that moves the
//! material derivative past a spatial one,
//!
//! `D(d_k Phi) = d_k(D Phi) - (d_k u_j)(d_j Phi)`,
//!
//! applied recursively together with the Leibniz rule. Products keep their
//! factor order so that coefficient tables attribute contributions exactly
//! the way the expansions generate them; equality of two expressions is
//! decided on the commutative (sorted, merged) normal form.

use num::{BigRational, One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

/// Space dimension; all component indices run over `0..DIM`.
pub const DIM: u8 = 2;

/// Field symbols of the calculus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Symbol {
    /// Fluid velocity component; divergence-free on instances.
    Velocity,
    /// Generic test field (scalar or vector, per component list).
    Test,
    /// Second-order potential with two component indices.
    Potential,
}

/// `d_{space} D^{mat} symbol_{comp}`; spatial indices are kept sorted since
/// partial derivatives commute.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Atom {
    pub sym: Symbol,
    pub comp: Vec<u8>,
    pub mat: u32,
    pub space: Vec<u8>,
}

impl Atom {
    pub fn velocity(i: u8) -> Atom {
        Atom {
            sym: Symbol::Velocity,
            comp: vec![i],
            mat: 0,
            space: Vec::new(),
        }
    }

    pub fn test(comp: &[u8]) -> Atom {
        Atom {
            sym: Symbol::Test,
            comp: comp.to_vec(),
            mat: 0,
            space: Vec::new(),
        }
    }

    pub fn potential(i: u8, j: u8) -> Atom {
        Atom {
            sym: Symbol::Potential,
            comp: vec![i, j],
            mat: 0,
            space: Vec::new(),
        }
    }

    pub fn material(mut self, orders: u32) -> Atom {
        self.mat += orders;
        self
    }

    pub fn derived(mut self, index: u8) -> Atom {
        let pos = self.space.partition_point(|&s| s <= index);
        self.space.insert(pos, index);
        self
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in &self.space {
            write!(f, "d{k} ")?;
        }
        if self.mat > 0 {
            write!(f, "D^{} ", self.mat)?;
        }
        let name = match self.sym {
            Symbol::Velocity => "u",
            Symbol::Test => "psi",
            Symbol::Potential => "q",
        };
        write!(f, "{name}")?;
        for c in &self.comp {
            write!(f, "_{c}")?;
        }
        Ok(())
    }
}

/// An ordered product of atoms.
pub type Word = Vec<Atom>;

/// Sum of ordered words with exact rational coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Expr {
    terms: BTreeMap<Word, BigRational>,
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::default()
    }

    pub fn one() -> Expr {
        let mut terms = BTreeMap::new();
        terms.insert(Vec::new(), BigRational::one());
        Expr { terms }
    }

    pub fn atom(a: Atom) -> Expr {
        Expr::word(vec![a])
    }

    pub fn word(w: Word) -> Expr {
        let mut terms = BTreeMap::new();
        terms.insert(w, BigRational::one());
        Expr { terms }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &BigRational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    fn accumulate(&mut self, word: Word, coeff: BigRational) {
        use std::collections::btree_map::Entry;
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(word) {
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

    pub fn add(&self, other: &Expr) -> Expr {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.accumulate(w.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .map(|(w, c)| (w.clone(), -c.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, factor: &BigRational) -> Expr {
        if factor.is_zero() {
            return Expr::zero();
        }
        Expr {
            terms: self
                .terms
                .iter()
                .map(|(w, c)| (w.clone(), c * factor))
                .collect(),
        }
    }

    pub fn scale_int(&self, factor: i64) -> Expr {
        self.scale(&BigRational::from_integer(factor.into()))
    }

    /// Ordered product: words concatenate.
    pub fn mul(&self, other: &Expr) -> Expr {
        let mut out = Expr::zero();
        for (wa, ca) in &self.terms {
            for (wb, cb) in &other.terms {
                let mut w = wa.clone();
                w.extend(wb.iter().cloned());
                out.accumulate(w, ca * cb);
            }
        }
        out
    }

    /// Spatial derivative `d_index` by the Leibniz rule; each derived factor
    /// stays in its position.
    pub fn d_space(&self, index: u8) -> Expr {
        let mut out = Expr::zero();
        for (word, coeff) in &self.terms {
            for i in 0..word.len() {
                let mut w = word.clone();
                w[i] = w[i].clone().derived(index);
                out.accumulate(w, coeff.clone());
            }
        }
        out
    }

    /// Material derivative by the Leibniz rule and the commutator rewriting;
    /// replacement words splice into the factor's position.
    pub fn material(&self) -> Expr {
        let mut out = Expr::zero();
        for (word, coeff) in &self.terms {
            for i in 0..word.len() {
                let piece = material_atom(&word[i]);
                for (sub, c) in &piece.terms {
                    let mut w = Vec::with_capacity(word.len() + sub.len() - 1);
                    w.extend(word[..i].iter().cloned());
                    w.extend(sub.iter().cloned());
                    w.extend(word[i + 1..].iter().cloned());
                    out.accumulate(w, coeff * c);
                }
            }
        }
        out
    }

    pub fn material_n(&self, orders: u32) -> Expr {
        let mut e = self.clone();
        for _ in 0..orders {
            e = e.material();
        }
        e
    }

    /// Commutative normal form: factor order forgotten, equal monomials
    /// merged. This is what equality of expressions means.
    pub fn canonical(&self) -> BTreeMap<Word, BigRational> {
        let mut map: BTreeMap<Word, BigRational> = BTreeMap::new();
        for (word, coeff) in &self.terms {
            let mut sorted = word.clone();
            sorted.sort();
            let slot = map.entry(sorted).or_insert_with(BigRational::zero);
            *slot += coeff;
        }
        map.retain(|_, c| !c.is_zero());
        map
    }

    pub fn equivalent(&self, other: &Expr) -> bool {
        self.canonical() == other.canonical()
    }

    pub fn is_zero(&self) -> bool {
        self.canonical().is_empty()
    }

    /// Largest coefficient magnitude in the ordered table.
    pub fn max_coefficient(&self) -> BigRational {
        self.terms
            .values()
            .map(|c| c.abs())
            .max()
            .unwrap_or_else(BigRational::zero)
    }
}

fn material_atom(a: &Atom) -> Expr {
    if a.space.is_empty() {
        return Expr::atom(a.clone().material(1));
    }
    let k = a.space[0];
    let rest = Atom {
        space: a.space[1..].to_vec(),
        ..a.clone()
    };
    let moved = material_atom(&rest).d_space(k);
    let mut correction = Expr::zero();
    for j in 0..DIM {
        let grad_u = Atom::velocity(j).derived(k);
        let shifted = rest.clone().derived(j);
        correction = correction.add(&Expr::word(vec![grad_u, shifted]));
    }
    moved.sub(&correction)
}

/// Divergence of a vector of component expressions.
pub fn divergence(components: &[Expr; 2]) -> Expr {
    components[0].d_space(0).add(&components[1].d_space(1))
}

/// Planar curl (the scalar `d_0 v_1 - d_1 v_0`).
pub fn curl(components: &[Expr; 2]) -> Expr {
    components[1].d_space(0).sub(&components[0].d_space(1))
}

/// `tr{grad a . grad b}` for vector expressions, with the gradient convention
/// `(grad v)_{ij} = d_i v_j`.
pub fn grad_trace(a: &[Expr; 2], b: &[Expr; 2]) -> Expr {
    let mut out = Expr::zero();
    for i in 0..DIM {
        for j in 0..DIM {
            out = out.add(
                &a[j as usize]
                    .d_space(i)
                    .mul(&b[i as usize].d_space(j)),
            );
        }
    }
    out
}

/// Antisymmetric part of `grad a . grad b` (the 01 entry of `M - M^T`).
pub fn grad_antisymmetric(a: &[Expr; 2], b: &[Expr; 2]) -> Expr {
    let entry = |r: u8, c: u8| {
        let mut out = Expr::zero();
        for m in 0..DIM {
            out = out.add(&a[m as usize].d_space(r).mul(&b[c as usize].d_space(m)));
        }
        out
    };
    entry(0, 1).sub(&entry(1, 0))
}

/// The divergence of `D psi` rewritten as `D(div psi) + tr{grad u . grad psi}`
/// without expanding `D psi` first.
pub fn commute_div_material(psi: &[Expr; 2]) -> Expr {
    let u = [Expr::atom(Atom::velocity(0)), Expr::atom(Atom::velocity(1))];
    divergence(psi).material().add(&grad_trace(&u, psi))
}

/// The curl of `D psi` rewritten through the material derivative.
pub fn commute_curl_material(psi: &[Expr; 2]) -> Expr {
    let u = [Expr::atom(Atom::velocity(0)), Expr::atom(Atom::velocity(1))];
    curl(psi).material().add(&grad_antisymmetric(&u, psi))
}
