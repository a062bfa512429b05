//! Exact polynomial instances the formal identities are tested on.
//!
//! A `Poly` is a rational-coefficient polynomial in `(t, x, y)`, optionally
//! truncated in `t` so that rotating-body instances can carry exact cos/sin
//! jets. Truncation is tracked conservatively: every operation keeps the
//! smallest cap of its inputs and the time derivative lowers it by one, so a
//! polynomial that normalizes to zero is certifiably zero on all orders the
//! computation still controls.

use super::expr::{Atom, Expr, Symbol, Word};
use num::{BigInt, BigRational, One, Zero};
use rand::Rng;
use std::collections::BTreeMap;

pub type Rat = BigRational;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Exponents of `(t, x, y)`.
type Key = (u32, u32, u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    terms: BTreeMap<Key, Rat>,
    /// Largest time exponent whose coefficient is trusted; `None` is exact.
    pub t_cap: Option<u32>,
}

fn cap_min(a: Option<u32>, b: Option<u32>) -> Option<u32> {
    match (a, b) {
        (None, c) | (c, None) => c,
        (Some(x), Some(y)) => Some(x.min(y)),
    }
}

fn keep(cap: Option<u32>, key: &Key) -> bool {
    cap.map_or(true, |c| key.0 <= c)
}

impl Poly {
    pub fn zero() -> Poly {
        Poly {
            terms: BTreeMap::new(),
            t_cap: None,
        }
    }

    pub fn constant(c: Rat) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert((0, 0, 0), c);
        }
        Poly { terms, t_cap: None }
    }

    pub fn int(c: i64) -> Poly {
        Poly::constant(Rat::from_integer(c.into()))
    }

    pub fn monomial(c: Rat, t: u32, x: u32, y: u32) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert((t, x, y), c);
        }
        Poly { terms, t_cap: None }
    }

    pub fn var_t() -> Poly {
        Poly::monomial(Rat::one(), 1, 0, 0)
    }

    pub fn var(axis: u8) -> Poly {
        match axis {
            0 => Poly::monomial(Rat::one(), 0, 1, 0),
            _ => Poly::monomial(Rat::one(), 0, 0, 1),
        }
    }

    pub fn with_cap(mut self, cap: Option<u32>) -> Poly {
        self.t_cap = cap_min(self.t_cap, cap);
        self.terms.retain(|k, _| keep(self.t_cap, k));
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterate `(t, x, y, coefficient)` over all monomials.
    pub fn monomials(&self) -> impl Iterator<Item = (u32, u32, u32, Rat)> + '_ {
        self.terms.iter().map(|(k, c)| (k.0, k.1, k.2, c.clone()))
    }

    fn accumulate(&mut self, key: Key, coeff: Rat) {
        use std::collections::btree_map::Entry;
        if coeff.is_zero() || !keep(self.t_cap, &key) {
            return;
        }
        match self.terms.entry(key) {
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

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = Poly {
            terms: BTreeMap::new(),
            t_cap: cap_min(self.t_cap, other.t_cap),
        };
        for (k, c) in self.terms.iter().chain(other.terms.iter()) {
            out.accumulate(*k, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Poly {
        Poly {
            terms: self.terms.iter().map(|(k, c)| (*k, -c.clone())).collect(),
            t_cap: self.t_cap,
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly {
            terms: BTreeMap::new(),
            t_cap: cap_min(self.t_cap, other.t_cap),
        };
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let key = (ka.0 + kb.0, ka.1 + kb.1, ka.2 + kb.2);
                if keep(out.t_cap, &key) {
                    out.accumulate(key, ca * cb);
                }
            }
        }
        out
    }

    pub fn scale(&self, factor: &Rat) -> Poly {
        if factor.is_zero() {
            return Poly::zero().with_cap(self.t_cap);
        }
        Poly {
            terms: self.terms.iter().map(|(k, c)| (*k, c * factor)).collect(),
            t_cap: self.t_cap,
        }
    }

    /// Time derivative; certification drops one order.
    pub fn dt(&self) -> Poly {
        let mut out = Poly {
            terms: BTreeMap::new(),
            t_cap: self.t_cap.map(|c| c.saturating_sub(1)),
        };
        for (k, c) in &self.terms {
            if k.0 > 0 {
                out.accumulate((k.0 - 1, k.1, k.2), c * Rat::from_integer(k.0.into()));
            }
        }
        out
    }

    /// Spatial derivative along `axis` (0 or 1).
    pub fn dx(&self, axis: u8) -> Poly {
        let mut out = Poly {
            terms: BTreeMap::new(),
            t_cap: self.t_cap,
        };
        for (k, c) in &self.terms {
            let (e, key) = if axis == 0 {
                (k.1, (k.0, k.1.saturating_sub(1), k.2))
            } else {
                (k.2, (k.0, k.1, k.2.saturating_sub(1)))
            };
            if e > 0 {
                out.accumulate(key, c * Rat::from_integer(e.into()));
            }
        }
        out
    }

    /// Antiderivative in `t` with zero constant term.
    pub fn integrate_t(&self) -> Poly {
        let mut out = Poly {
            terms: BTreeMap::new(),
            t_cap: self.t_cap.map(|c| c + 1),
        };
        for (k, c) in &self.terms {
            out.accumulate(
                (k.0 + 1, k.1, k.2),
                c / Rat::from_integer((k.0 + 1).into()),
            );
        }
        out
    }

    /// Substitute polynomials for `x` and `y` (the `t` variable is kept).
    pub fn substitute_xy(&self, x: &Poly, y: &Poly) -> Poly {
        let max_x = self.terms.keys().map(|k| k.1).max().unwrap_or(0);
        let max_y = self.terms.keys().map(|k| k.2).max().unwrap_or(0);
        let powers = |base: &Poly, up_to: u32| {
            let mut p = vec![Poly::int(1)];
            for i in 0..up_to {
                let next = p[i as usize].mul(base);
                p.push(next);
            }
            p
        };
        let xp = powers(x, max_x);
        let yp = powers(y, max_y);
        let mut out = Poly::zero().with_cap(cap_min(self.t_cap, cap_min(x.t_cap, y.t_cap)));
        for (k, c) in &self.terms {
            let term = xp[k.1 as usize]
                .mul(&yp[k.2 as usize])
                .mul(&Poly::monomial(c.clone(), k.0, 0, 0));
            out = out.add(&term);
        }
        out
    }

    /// Evaluate at a rational space point; the result is the list of time
    /// coefficients (a truncated jet when capped).
    pub fn eval_xy(&self, x: &Rat, y: &Rat) -> Vec<Rat> {
        let len = self.terms.keys().map(|k| k.0 + 1).max().unwrap_or(0) as usize;
        let mut jet = vec![Rat::zero(); len];
        for (k, c) in &self.terms {
            let mut v = c.clone();
            for _ in 0..k.1 {
                v *= x;
            }
            for _ in 0..k.2 {
                v *= y;
            }
            jet[k.0 as usize] += v;
        }
        jet
    }

    pub fn eval(&self, t: &Rat, x: &Rat, y: &Rat) -> Rat {
        let mut out = Rat::zero();
        for (exp, coeff) in self.eval_xy(x, y).into_iter().enumerate() {
            let mut v = coeff;
            for _ in 0..exp {
                v *= t;
            }
            out += v;
        }
        out
    }

    /// Truncated cosine and sine of a polynomial with zero constant term.
    pub fn cos_sin(&self, cap: u32) -> (Poly, Poly) {
        assert!(
            !self.terms.contains_key(&(0, 0, 0)),
            "cos/sin jets need a vanishing constant term"
        );
        let theta = self.clone().with_cap(Some(cap));
        let mut cos = Poly::int(1).with_cap(Some(cap));
        let mut sin = Poly::zero().with_cap(Some(cap));
        let mut power = Poly::int(1).with_cap(Some(cap));
        let mut factorial = Rat::one();
        for m in 1..=cap {
            power = power.mul(&theta);
            factorial *= Rat::from_integer(m.into());
            if power.is_zero() {
                break;
            }
            let term = power.scale(&(Rat::one() / &factorial));
            match m % 4 {
                0 => cos = cos.add(&term),
                1 => sin = sin.add(&term),
                2 => cos = cos.sub(&term),
                _ => sin = sin.sub(&term),
            }
        }
        (cos, sin)
    }
}

/// Random rational with a few thousand possible values.
pub fn sample_rational(rng: &mut impl Rng) -> Rat {
    let n = rng.gen_range(-40i64..=40);
    let d = rng.gen_range(1i64..=25);
    rat(n, d)
}

/// Random polynomial with small integer coefficients.
pub fn random_poly(rng: &mut impl Rng, t_deg: u32, xy_deg: u32) -> Poly {
    let mut p = Poly::zero();
    for t in 0..=t_deg {
        for x in 0..=xy_deg {
            for y in 0..=(xy_deg - x) {
                let c = rng.gen_range(-3i64..=3);
                if c != 0 {
                    p = p.add(&Poly::monomial(Rat::from_integer(c.into()), t, x, y));
                }
            }
        }
    }
    p
}

/// One concrete polynomial world the formal identities are evaluated in.
/// The velocity is a rotated stream-function gradient, hence exactly
/// divergence-free; the distance surrogate is transported by the rigid
/// motion `(center, spin)`.
#[derive(Clone, Debug)]
pub struct FieldInstance {
    pub velocity: [Poly; 2],
    pub test: Vec<Poly>,
    pub potential: [[Poly; 2]; 2],
    pub distance: Poly,
    pub spin: Poly,
    pub center: [Poly; 2],
}

/// How the distance surrogate is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceClass {
    /// No rotation; arbitrary anisotropic profile, exact in `t`.
    Aligned,
    /// Rotating body with a radial profile, exact in `t`.
    Radial,
    /// Rotating anisotropic profile through cos/sin jets capped in `t`.
    Rotating(u32),
}

impl FieldInstance {
    pub fn random(rng: &mut impl Rng, class: DistanceClass, test_components: usize) -> FieldInstance {
        let stream = random_poly(rng, 2, 3);
        let velocity = [stream.dx(1), stream.dx(0).neg()];
        let test = (0..test_components)
            .map(|_| random_poly(rng, 2, 3))
            .collect();
        let potential = [
            [random_poly(rng, 1, 2), random_poly(rng, 1, 2)],
            [random_poly(rng, 1, 2), random_poly(rng, 1, 2)],
        ];
        let center = [
            random_poly(rng, 2, 0).scale(&rat(1, 2)),
            random_poly(rng, 2, 0).scale(&rat(1, 2)),
        ];
        let spin = match class {
            DistanceClass::Aligned => Poly::zero(),
            _ => random_poly(rng, 1, 0),
        };
        let rel = [
            Poly::var(0).sub(&center[0]),
            Poly::var(1).sub(&center[1]),
        ];
        let distance = match class {
            DistanceClass::Aligned => {
                random_poly(rng, 0, 3).substitute_xy(&rel[0], &rel[1])
            }
            DistanceClass::Radial => {
                let radius2 = rel[0].mul(&rel[0]).add(&rel[1].mul(&rel[1]));
                random_poly(rng, 0, 2).substitute_xy(&radius2, &Poly::zero())
            }
            DistanceClass::Rotating(cap) => {
                let theta = spin.integrate_t();
                let (cos, sin) = theta.cos_sin(cap);
                let bx = cos.mul(&rel[0]).add(&sin.mul(&rel[1]));
                let by = cos.mul(&rel[1]).sub(&sin.mul(&rel[0]));
                random_poly(rng, 0, 3).substitute_xy(&bx, &by)
            }
        };
        FieldInstance {
            velocity,
            test,
            potential,
            distance,
            spin,
            center,
        }
    }

    /// Material derivative `d_t + u . grad`.
    pub fn material(&self, p: &Poly) -> Poly {
        p.dt()
            .add(&self.velocity[0].mul(&p.dx(0)))
            .add(&self.velocity[1].mul(&p.dx(1)))
    }

    pub fn material_n(&self, p: &Poly, n: u32) -> Poly {
        let mut out = p.clone();
        for _ in 0..n {
            out = self.material(&out);
        }
        out
    }

    /// Rigid velocity of the transporting motion.
    pub fn body_velocity(&self) -> [Poly; 2] {
        let ell = [self.center[0].dt(), self.center[1].dt()];
        let rel = [
            Poly::var(0).sub(&self.center[0]),
            Poly::var(1).sub(&self.center[1]),
        ];
        [
            ell[0].sub(&self.spin.mul(&rel[1])),
            ell[1].add(&self.spin.mul(&rel[0])),
        ]
    }

    /// `u - u_S`, the velocity relative to the rigid motion.
    pub fn relative_velocity(&self) -> [Poly; 2] {
        let body = self.body_velocity();
        [
            self.velocity[0].sub(&body[0]),
            self.velocity[1].sub(&body[1]),
        ]
    }

    /// Transport defect of the distance surrogate; identically zero on all
    /// certified orders by construction.
    pub fn transport_residual(&self) -> Poly {
        let body = self.body_velocity();
        self.distance
            .dt()
            .add(&body[0].mul(&self.distance.dx(0)))
            .add(&body[1].mul(&self.distance.dx(1)))
    }

    fn base_value(&self, sym: Symbol, comp: &[u8]) -> Poly {
        match sym {
            Symbol::Velocity => self.velocity[comp[0] as usize].clone(),
            Symbol::Test => {
                if comp.is_empty() {
                    self.test[0].clone()
                } else {
                    self.test[comp[0] as usize].clone()
                }
            }
            Symbol::Potential => self.potential[comp[0] as usize][comp[1] as usize].clone(),
        }
    }

    pub fn atom_value(&self, atom: &Atom, cache: &mut AtomCache) -> Poly {
        if let Some(p) = cache.get(atom) {
            return p.clone();
        }
        let value = if let Some(&last) = atom.space.last() {
            let mut inner = atom.clone();
            inner.space.pop();
            self.atom_value(&inner, cache).dx(last)
        } else if atom.mat > 0 {
            let inner = Atom {
                mat: atom.mat - 1,
                ..atom.clone()
            };
            self.material(&self.atom_value(&inner, cache))
        } else {
            self.base_value(atom.sym, &atom.comp)
        };
        cache.insert(atom.clone(), value.clone());
        value
    }

    pub fn word_value(&self, word: &Word, cache: &mut AtomCache) -> Poly {
        let mut out = Poly::int(1);
        for atom in word {
            out = out.mul(&self.atom_value(atom, cache));
        }
        out
    }

    pub fn expr_value(&self, expr: &Expr, cache: &mut AtomCache) -> Poly {
        let mut out = Poly::zero();
        for (word, coeff) in expr.terms() {
            out = out.add(&self.word_value(word, cache).scale(coeff));
        }
        out
    }

    /// Evaluate an expression at a spatial sample with the time kept
    /// symbolic, reusing per-atom jets. Far cheaper than the full product
    /// polynomial for large tables.
    pub fn expr_jet(
        &self,
        expr: &Expr,
        x: &Rat,
        y: &Rat,
        cache: &mut AtomCache,
        jets: &mut BTreeMap<Atom, Vec<Rat>>,
    ) -> Vec<Rat> {
        let cap = self.jet_cap();
        let mut out = Vec::new();
        for (word, coeff) in expr.terms() {
            let mut jet = vec![coeff.clone()];
            for atom in word {
                let aj = jets
                    .entry(atom.clone())
                    .or_insert_with(|| self.atom_value(atom, cache).eval_xy(x, y))
                    .clone();
                jet = jet_mul(&jet, &aj, cap);
            }
            jet_add(&mut out, &jet);
        }
        out
    }

    fn jet_cap(&self) -> Option<u32> {
        self.distance.t_cap
    }
}

pub type AtomCache = BTreeMap<Atom, Poly>;

pub fn jet_mul(a: &[Rat], b: &[Rat], cap: Option<u32>) -> Vec<Rat> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let full = a.len() + b.len() - 1;
    let len = cap.map_or(full, |c| full.min(c as usize + 1));
    let mut out = vec![Rat::zero(); len];
    for (i, ca) in a.iter().enumerate() {
        if ca.is_zero() || i >= len {
            continue;
        }
        for (j, cb) in b.iter().enumerate() {
            if i + j >= len {
                break;
            }
            if !cb.is_zero() {
                out[i + j] += ca * cb;
            }
        }
    }
    out
}

pub fn jet_add(accum: &mut Vec<Rat>, other: &[Rat]) {
    if accum.len() < other.len() {
        accum.resize(other.len(), Rat::zero());
    }
    for (slot, c) in accum.iter_mut().zip(other) {
        *slot += c;
    }
}

pub fn jet_is_zero(jet: &[Rat], certified: Option<usize>) -> bool {
    jet.iter()
        .take(certified.unwrap_or(usize::MAX))
        .all(|c| c.is_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arithmetic_and_derivatives_are_exact() {
        // p = t^2 x + 3 y^2
        let p = Poly::monomial(rat(1, 1), 2, 1, 0).add(&Poly::monomial(rat(3, 1), 0, 0, 2));
        assert_eq!(p.dt(), Poly::monomial(rat(2, 1), 1, 1, 0));
        assert_eq!(p.dx(0), Poly::monomial(rat(1, 1), 2, 0, 0));
        assert_eq!(p.dx(1), Poly::monomial(rat(6, 1), 0, 0, 1));
        let q = p.mul(&p);
        let expected = Poly::monomial(rat(1, 1), 4, 2, 0)
            .add(&Poly::monomial(rat(6, 1), 2, 1, 2))
            .add(&Poly::monomial(rat(9, 1), 0, 0, 4));
        assert_eq!(q, expected);
        assert_eq!(
            p.eval(&rat(2, 1), &rat(1, 3), &rat(1, 2)),
            rat(4, 3) + rat(3, 4)
        );
    }

    #[test]
    fn truncation_tracks_certified_orders() {
        let p = Poly::monomial(rat(1, 1), 5, 0, 0).with_cap(Some(3));
        assert!(p.is_zero());
        let q = Poly::var_t().with_cap(Some(3));
        let cube = q.mul(&q).mul(&q).mul(&q);
        assert!(cube.is_zero(), "t^4 exceeds the cap");
        assert_eq!(q.dt().t_cap, Some(2));
    }

    #[test]
    fn cos_sin_jets_satisfy_pythagoras_on_certified_orders() {
        let theta = Poly::var_t().scale(&rat(2, 3)).add(&Poly::monomial(
            rat(-1, 5),
            2,
            0,
            0,
        ));
        let (c, s) = theta.cos_sin(8);
        let one = c.mul(&c).add(&s.mul(&s));
        assert_eq!(one, Poly::int(1).with_cap(Some(8)));
        // d/dt cos(theta) = -theta' sin(theta)
        let lhs = c.dt();
        let rhs = theta.dt().mul(&s).neg().with_cap(Some(7));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn velocity_is_divergence_free_and_distance_is_transported() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for class in [
            DistanceClass::Aligned,
            DistanceClass::Radial,
            DistanceClass::Rotating(9),
        ] {
            let inst = FieldInstance::random(&mut rng, class, 2);
            let div = inst.velocity[0].dx(0).add(&inst.velocity[1].dx(1));
            assert!(div.is_zero());
            assert!(
                inst.transport_residual().is_zero(),
                "distance surrogate must ride the rigid motion ({class:?})"
            );
        }
    }

    #[test]
    fn atom_cache_reproduces_direct_material_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inst = FieldInstance::random(&mut rng, DistanceClass::Aligned, 2);
        let mut cache = AtomCache::new();
        let atom = Atom::test(&[1]).material(2).derived(0);
        let direct = inst
            .material_n(&inst.test[1], 2)
            .dx(0);
        assert_eq!(inst.atom_value(&atom, &mut cache), direct);
        // jets match the polynomial evaluation
        let expr = Expr::atom(atom);
        let (x, y) = (rat(1, 3), rat(-2, 7));
        let mut jets = BTreeMap::new();
        let jet = inst.expr_jet(&expr, &x, &y, &mut cache, &mut jets);
        assert_eq!(jet, inst.expr_value(&expr, &mut cache).eval_xy(&x, &y));
    }

    #[test]
    fn substitution_composes_polynomials() {
        // P(x, y) = x^2 + y, substitute x -> t + y, y -> 2x
        let p = Poly::monomial(rat(1, 1), 0, 2, 0).add(&Poly::monomial(rat(1, 1), 0, 0, 1));
        let sx = Poly::var_t().add(&Poly::var(1));
        let sy = Poly::var(0).scale(&rat(2, 1));
        let got = p.substitute_xy(&sx, &sy);
        let expected = sx.mul(&sx).add(&sy);
        assert_eq!(got, expected);
    }
}
