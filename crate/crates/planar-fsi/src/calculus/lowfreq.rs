//! Low-frequency potential forms.
//!
//! When the test field has a potential structure (its divergence is a double
//! divergence, or it is a plain gradient), every iterated material derivative
//! keeps that structure: `div D^n psi` stays a first and second divergence of
//! explicit fields, and `curl D^n psi` stays a first and second divergence of
//! explicit antisymmetric pairs. The four recursions below build those fields
//! on the expression engine; the chains collapse exactly on divergence-free
//! velocities, which every polynomial instance here provides.

use super::expr::{Atom, Expr, DIM};
use super::poly::{random_poly, AtomCache, FieldInstance, Poly, Rat};
use crate::{Error, Result};
use num::{BigInt, BigRational, One, Signed};
use rand::Rng;

fn velocity_gradient(i: u8, k: u8) -> Expr {
    Expr::atom(Atom::velocity(i).derived(k))
}

fn velocity_plain(i: u8) -> Expr {
    Expr::atom(Atom::velocity(i))
}

fn test_material(i: u8, orders: u32) -> Expr {
    Expr::atom(Atom::test(&[i]).material(orders))
}

/// First-divergence fields for `div D^n psi`: the vector `phi-bar^n` with
/// `div D^n psi = div phi-bar^n` under the potential hypothesis.
pub fn divergence_forms(level: u32) -> [Expr; 2] {
    let base = |i: u8| {
        (0..DIM).fold(Expr::zero(), |acc, j| {
            acc.add(&Expr::atom(Atom::potential(i, j).derived(j)))
        })
    };
    let mut bar = [base(0), base(1)];
    for n in 0..level {
        bar = step_divergence_forms(&bar, n);
    }
    bar
}

/// Second-divergence fields: the matrix `phi-hat^n` with
/// `phi-bar^n_i = d_j phi-hat^n_{ij}`.
pub fn divergence_potential_forms(level: u32) -> [[Expr; 2]; 2] {
    let mut hat: Vec<Vec<Expr>> = (0..DIM)
        .map(|i| (0..DIM).map(|j| Expr::atom(Atom::potential(i, j))).collect())
        .collect();
    let mut bar = divergence_forms(0);
    for n in 0..level {
        let mut next = Vec::with_capacity(DIM as usize);
        for i in 0..DIM {
            let mut row = Vec::with_capacity(DIM as usize);
            for j in 0..DIM {
                let mut e = hat[i as usize][j as usize].material();
                for k in 0..DIM {
                    e = e.sub(&hat[i as usize][k as usize].mul(&velocity_gradient(j, k)));
                }
                let defect = bar[j as usize].sub(&test_material(j, n));
                e = e.sub(&velocity_plain(i).mul(&defect));
                row.push(e);
            }
            next.push(row);
        }
        hat = next;
        bar = step_divergence_forms(&bar, n);
    }
    [
        [hat[0][0].clone(), hat[0][1].clone()],
        [hat[1][0].clone(), hat[1][1].clone()],
    ]
}

fn step_divergence_forms(bar: &[Expr; 2], n: u32) -> [Expr; 2] {
    let mut next = [Expr::zero(), Expr::zero()];
    for i in 0..DIM {
        let mut e = bar[i as usize].material();
        for k in 0..DIM {
            let defect = bar[k as usize].sub(&test_material(k, n));
            e = e.sub(&velocity_gradient(i, k).mul(&defect));
        }
        next[i as usize] = e;
    }
    next
}

/// First-divergence fields for the `(0,1)` curl component of `D^n psi`,
/// valid when the test field is a gradient.
pub fn curl_forms(level: u32) -> [Expr; 2] {
    let mut bar = [Expr::zero(), Expr::zero()];
    for n in 0..level {
        bar = step_curl_forms(&bar, n);
    }
    bar
}

/// Second-divergence fields for the curl chain:
/// `gamma-bar^n_i = d_j gamma-hat^n_{ij}` on gradient test fields.
pub fn curl_potential_forms(level: u32) -> [[Expr; 2]; 2] {
    let mut hat = [
        [Expr::zero(), Expr::zero()],
        [Expr::zero(), Expr::zero()],
    ];
    let mut bar = [Expr::zero(), Expr::zero()];
    for n in 0..level {
        let mut next = [
            [Expr::zero(), Expr::zero()],
            [Expr::zero(), Expr::zero()],
        ];
        for i in 0..DIM {
            for j in 0..DIM {
                let mut e = hat[i as usize][j as usize].material();
                for h in 0..DIM {
                    e = e.sub(&velocity_gradient(j, h).mul(&hat[i as usize][h as usize]));
                }
                e = e.sub(&velocity_plain(i).mul(&bar[j as usize]));
                if j == 0 {
                    e = e.add(&velocity_plain(i).mul(&test_material(1, n)));
                }
                if j == 1 {
                    e = e.sub(&velocity_plain(i).mul(&test_material(0, n)));
                }
                next[i as usize][j as usize] = e;
            }
        }
        hat = next;
        bar = step_curl_forms(&bar, n);
    }
    hat
}

fn step_curl_forms(bar: &[Expr; 2], n: u32) -> [Expr; 2] {
    let mut next = [Expr::zero(), Expr::zero()];
    for i in 0..DIM {
        let mut e = bar[i as usize].material();
        for h in 0..DIM {
            e = e.sub(&velocity_gradient(i, h).mul(&bar[h as usize]));
        }
        e = e.add(&velocity_gradient(i, 0).mul(&test_material(1, n)));
        e = e.sub(&velocity_gradient(i, 1).mul(&test_material(0, n)));
        next[i as usize] = e;
    }
    next
}

/// Exact polynomial particular solution of `laplace(mu) = f`.
pub fn poisson_particular(f: &Poly) -> Poly {
    fn solve_monomial(coeff: Rat, t: u32, a: u32, b: u32) -> Poly {
        let div = Rat::from_integer(((a + 1) * (a + 2)).into());
        let g = Poly::monomial(coeff / &div, t, a + 2, b);
        if b >= 2 {
            let leak = g.dx(1).dx(1);
            g.sub(&poisson_particular(&leak))
        } else {
            g
        }
    }
    let mut out = Poly::zero();
    for (t, x, y, c) in f.monomials() {
        out = out.add(&solve_monomial(c, t, x, y));
    }
    out
}

/// Instance whose test field satisfies the double-divergence hypothesis:
/// `psi = div phi-hat + eta` with `eta` solenoidal.
pub fn hypothesis_instance(rng: &mut impl Rng) -> FieldInstance {
    let mut inst = FieldInstance::random(rng, super::poly::DistanceClass::Aligned, 2);
    let eta_stream = random_poly(rng, 2, 3);
    inst.test = (0..2)
        .map(|i| {
            let from_potential = inst.potential[i][0]
                .dx(0)
                .add(&inst.potential[i][1].dx(1));
            let eta = if i == 0 {
                eta_stream.dx(1)
            } else {
                eta_stream.dx(0).neg()
            };
            from_potential.add(&eta)
        })
        .collect();
    inst
}

/// Instance whose test field is a plain gradient.
pub fn gradient_instance(rng: &mut impl Rng) -> FieldInstance {
    let mut inst = FieldInstance::random(rng, super::poly::DistanceClass::Aligned, 2);
    let mu = random_poly(rng, 2, 4);
    inst.test = vec![mu.dx(0), mu.dx(1)];
    inst
}

/// The self-transport instance: the potential is minus the velocity dyad and
/// the test field is the exact gradient completing the double divergence.
pub fn self_transport_instance(rng: &mut impl Rng) -> FieldInstance {
    let mut inst = FieldInstance::random(rng, super::poly::DistanceClass::Aligned, 2);
    for i in 0..2 {
        for j in 0..2 {
            inst.potential[i][j] = inst.velocity[i].mul(&inst.velocity[j]).neg();
        }
    }
    let mut trace = Poly::zero();
    for i in 0..2u8 {
        for j in 0..2u8 {
            trace = trace.add(
                &inst.velocity[j as usize]
                    .dx(i)
                    .mul(&inst.velocity[i as usize].dx(j)),
            );
        }
    }
    let mu = poisson_particular(&trace.neg());
    inst.test = vec![mu.dx(0), mu.dx(1)];
    inst
}

/// Check the divergence chain `div D^n psi = div phi-bar^n = div div phi-hat^n`
/// exactly on an instance, up to the requested level.
pub fn verify_divergence_chain(inst: &FieldInstance, max_level: u32) -> Result<()> {
    let mut cache = AtomCache::new();
    for n in 0..=max_level {
        let bar = divergence_forms(n);
        let hat = divergence_potential_forms(n);
        let direct = super::material::divergence_after_materials(inst, n);
        let bar_div = inst
            .expr_value(&bar[0].d_space(0).add(&bar[1].d_space(1)), &mut cache);
        if !direct.sub(&bar_div).is_zero() {
            return Err(Error::RecursionMismatch(format!(
                "first divergence form diverges from div D^{n} psi"
            )));
        }
        for i in 0..DIM {
            let row = hat[i as usize][0]
                .d_space(0)
                .add(&hat[i as usize][1].d_space(1));
            let defect = inst
                .expr_value(&bar[i as usize], &mut cache)
                .sub(&inst.expr_value(&row, &mut cache));
            if !defect.is_zero() {
                return Err(Error::RecursionMismatch(format!(
                    "second divergence form misses component {i} at level {n}"
                )));
            }
        }
    }
    Ok(())
}

/// Check the curl chain `curl D^n psi = div gamma-bar^n = div div gamma-hat^n`
/// exactly on a gradient instance, up to the requested level.
pub fn verify_curl_chain(inst: &FieldInstance, max_level: u32) -> Result<()> {
    let curl0 = inst.test[1].dx(0).sub(&inst.test[0].dx(1));
    if !curl0.is_zero() {
        return Err(Error::RecursionMismatch(
            "curl chain needs a gradient test field".into(),
        ));
    }
    let mut cache = AtomCache::new();
    for n in 0..=max_level {
        let bar = curl_forms(n);
        let hat = curl_potential_forms(n);
        let direct = super::material::curl_after_materials(inst, n);
        let bar_div = inst
            .expr_value(&bar[0].d_space(0).add(&bar[1].d_space(1)), &mut cache);
        if !direct.sub(&bar_div).is_zero() {
            return Err(Error::RecursionMismatch(format!(
                "curl form diverges from curl D^{n} psi"
            )));
        }
        for i in 0..DIM {
            let row = hat[i as usize][0]
                .d_space(0)
                .add(&hat[i as usize][1].d_space(1));
            let defect = inst
                .expr_value(&bar[i as usize], &mut cache)
                .sub(&inst.expr_value(&row, &mut cache));
            if !defect.is_zero() {
                return Err(Error::RecursionMismatch(format!(
                    "second curl form misses component {i} at level {n}"
                )));
            }
        }
    }
    Ok(())
}

/// Structural facts about one table term.
pub struct TermShape {
    pub factors: usize,
    pub orders: Vec<u32>,
}

/// Classify a word of the low-frequency alphabet; panics on foreign factors.
pub fn classify_word(word: &[Atom]) -> TermShape {
    let mut special = 0usize;
    let mut orders = Vec::new();
    for atom in word {
        match atom.sym {
            super::expr::Symbol::Velocity => {
                assert!(atom.space.len() <= 1, "velocity factor with {atom}");
            }
            super::expr::Symbol::Test => {
                assert!(atom.space.is_empty(), "derived test factor {atom}");
                special += 1;
            }
            super::expr::Symbol::Potential => {
                assert!(atom.space.len() <= 1, "potential factor with {atom}");
                special += 1;
            }
        }
        orders.push(atom.mat);
    }
    assert_eq!(special, 1, "each term carries exactly one transported factor");
    orders.sort_unstable();
    TermShape {
        factors: word.len(),
        orders,
    }
}

/// `base^s n! / alpha!` as an exact rational.
pub fn geometric_factorial_bound(base: u32, level: u32, shape: &TermShape) -> BigRational {
    let geo = (0..shape.factors).fold(BigInt::one(), |a, _| a * BigInt::from(base));
    BigRational::new(
        geo * super::material::factorial(level),
        super::material::composition_factorial(&shape.orders),
    )
}

/// Check the alphabet and the coefficient bounds of one form family,
/// returning the number of terms inspected.
pub fn check_form_bounds(forms: &[&Expr], level: u32, base: u32) -> Result<usize> {
    let mut checked = 0;
    for expr in forms {
        for (word, coeff) in expr.terms() {
            let shape = classify_word(word);
            let bound = geometric_factorial_bound(base, level, &shape);
            if coeff.abs() > bound {
                return Err(Error::BoundViolation(format!(
                    "level {level}: coefficient {coeff} exceeds {bound}"
                )));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn base_cases_are_pinned() {
        let bar = divergence_forms(0);
        for i in 0..DIM {
            let expected = Expr::atom(Atom::potential(i, 0).derived(0))
                .add(&Expr::atom(Atom::potential(i, 1).derived(1)));
            assert!(bar[i as usize].equivalent(&expected));
        }
        let hat = divergence_potential_forms(0);
        for i in 0..DIM {
            for j in 0..DIM {
                assert!(hat[i as usize][j as usize]
                    .equivalent(&Expr::atom(Atom::potential(i, j))));
            }
        }
        for e in curl_forms(0) {
            assert!(e.is_zero());
        }
        for row in curl_potential_forms(0) {
            for e in row {
                assert!(e.is_zero());
            }
        }
    }

    #[test]
    fn first_curl_form_is_the_rotation_of_the_test_field() {
        let bar = curl_forms(1);
        for i in 0..DIM {
            let expected = velocity_gradient(i, 0)
                .mul(&Expr::atom(Atom::test(&[1])))
                .sub(&velocity_gradient(i, 1).mul(&Expr::atom(Atom::test(&[0]))));
            assert!(bar[i as usize].equivalent(&expected), "component {i}");
        }
    }

    #[test]
    fn poisson_solver_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let f = random_poly(&mut rng, 2, 5);
            let mu = poisson_particular(&f);
            let lap = mu.dx(0).dx(0).add(&mu.dx(1).dx(1));
            assert!(lap.sub(&f).is_zero());
        }
    }

    #[test]
    fn divergence_chain_collapses_on_hypothesis_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(401);
        for _ in 0..2 {
            let inst = hypothesis_instance(&mut rng);
            verify_divergence_chain(&inst, 3).unwrap();
        }
    }

    #[test]
    fn curl_chain_collapses_on_gradient_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(402);
        for _ in 0..2 {
            let inst = gradient_instance(&mut rng);
            verify_curl_chain(&inst, 3).unwrap();
        }
    }

    #[test]
    fn self_transport_instance_satisfies_both_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(403);
        let inst = self_transport_instance(&mut rng);
        // the dyad potential reproduces the divergence of the gradient field
        let double_div = inst.potential[0][0]
            .dx(0)
            .dx(0)
            .add(&inst.potential[0][1].dx(0).dx(1))
            .add(&inst.potential[1][0].dx(1).dx(0))
            .add(&inst.potential[1][1].dx(1).dx(1));
        let div_psi = inst.test[0].dx(0).add(&inst.test[1].dx(1));
        assert!(double_div.sub(&div_psi).is_zero());
        verify_divergence_chain(&inst, 3).unwrap();
        verify_curl_chain(&inst, 3).unwrap();
    }

    #[test]
    fn non_gradient_fields_are_rejected_by_the_curl_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let inst = FieldInstance::random(
            &mut rng,
            crate::calculus::poly::DistanceClass::Aligned,
            2,
        );
        assert!(matches!(
            verify_curl_chain(&inst, 1),
            Err(Error::RecursionMismatch(_))
        ));
    }

    #[test]
    fn form_tables_stay_in_the_alphabet_with_bounded_coefficients() {
        for n in 1..=4u32 {
            let bar = divergence_forms(n);
            check_form_bounds(&[&bar[0], &bar[1]], n, 2).unwrap();
            let gbar = curl_forms(n);
            check_form_bounds(&[&gbar[0], &gbar[1]], n, 2).unwrap();
            let hat = divergence_potential_forms(n);
            check_form_bounds(&[&hat[0][0], &hat[0][1], &hat[1][0], &hat[1][1]], n, 4)
                .unwrap();
            let ghat = curl_potential_forms(n);
            check_form_bounds(&[&ghat[0][0], &ghat[0][1], &ghat[1][0], &ghat[1][1]], n, 4)
                .unwrap();
        }
    }
}
