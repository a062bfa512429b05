//! Formal commutator calculus for material derivatives.
//!
//! This module expands iterated material derivatives of divergence, curl and
//! boundary traces into certified normal forms with exact big-rational
//! coefficients, together with the combinatorial bounds the estimates rest
//! on. Everything is exact arithmetic: the tables in [`material`] and
//! [`boundary`] carry integer coefficients, the potential forms in
//! [`lowfreq`] live on the expression engine of [`expr`], and the polynomial
//! instances of [`poly`] provide the semantics the normal forms are checked
//! against.

pub mod boundary;
pub mod expr;
pub mod lowfreq;
pub mod material;
pub mod poly;

pub use expr::{Atom, Expr, Symbol, Word, DIM};
pub use material::CommutatorTable;
pub use poly::{DistanceClass, FieldInstance, Poly, Rat};

use crate::{Error, Result};
use num::{BigInt, BigRational, One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

/// A tuple of derivative orders.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn weight(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factorial(&self) -> BigInt {
        material::composition_factorial(&self.0)
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ";")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Sum of `prod_j 1/(1+a_j)^2` over all length-`s` compositions of `m` into
/// positive parts, computed exactly.
pub fn upsilon_sum(parts: u32, total: u32) -> BigRational {
    fn table(parts: u32, total: u32) -> Vec<Vec<BigRational>> {
        let mut f = vec![vec![BigRational::zero(); total as usize + 1]; parts as usize + 1];
        f[0][0] = BigRational::one();
        for s in 1..=parts as usize {
            for m in 0..=total as usize {
                let mut acc = BigRational::zero();
                for a in 1..=m.saturating_sub(s - 1) {
                    let weight =
                        BigRational::new(BigInt::one(), BigInt::from(((1 + a) * (1 + a)) as u64));
                    acc += &f[s - 1][m - a] * weight;
                }
                f[s][m] = acc;
            }
        }
        f
    }
    table(parts, total)[parts as usize][total as usize].clone()
}

/// The geometric budget `20^s / (m+1)^2` that dominates the composition sum.
pub fn upsilon_budget(parts: u32, total: u32) -> BigRational {
    let geo = (0..parts).fold(BigInt::one(), |a, _| a * BigInt::from(20));
    BigRational::new(geo, BigInt::from((u64::from(total) + 1) * (u64::from(total) + 1)))
}

/// Membership bookkeeping: an admissible tuple at order `k` splits the total
/// scaling weight as `sum_i (alpha_i + 1)/p = (k+1)/p`, exactly.
pub fn holder_exponent_check(alpha: &MultiIndex, integrability: u32, order: u32) -> bool {
    assert!(integrability > 0);
    let p = BigInt::from(integrability);
    let lhs: BigRational = alpha
        .0
        .iter()
        .map(|&a| BigRational::new(BigInt::from(a + 1), p.clone()))
        .fold(BigRational::zero(), |acc, t| acc + t);
    let rhs = BigRational::new(BigInt::from(order + 1), p);
    lhs == rhs
}

/// Export the interior coefficient tables as CSV with exact integers.
pub fn coefficient_csv(max_order: u32) -> String {
    let mut out = String::from("k,s,alpha,coeff,bound\n");
    for k in 1..=max_order {
        let table = CommutatorTable::new(k);
        for (word, coeff) in table.terms() {
            let alpha = MultiIndex(word.clone());
            let bound = material::coefficient_bound(k, word);
            writeln!(out, "{k},{},{alpha},{coeff},{bound}", word.len()).unwrap();
        }
    }
    out
}

/// Outcome of one full verification sweep.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityReport {
    /// Exact interior identities checked (div, curl, gradient commutator).
    pub interior: usize,
    /// Exact boundary trace identities checked.
    pub boundary: usize,
    /// Exact low-frequency chain identities checked.
    pub chains: usize,
    /// Table terms whose coefficient bounds were certified.
    pub bounded_terms: usize,
}

/// Interior identities on one instance, all exact.
pub fn verify_interior(inst: &FieldInstance, max_order: u32) -> Result<usize> {
    let mut cache = poly::AtomCache::new();
    let mut checked = 0;
    for k in 1..=max_order {
        let table = CommutatorTable::new(k);
        let div_defect = material::divergence_after_materials(inst, k)
            .sub(&inst.material_n(&material::instance_divergence(inst), k))
            .sub(&inst.expr_value(&table.trace_expr(), &mut cache));
        if !div_defect.is_zero() {
            return Err(Error::RecursionMismatch(format!(
                "divergence defect at order {k}"
            )));
        }
        let curl_defect = material::curl_after_materials(inst, k)
            .sub(&inst.material_n(&material::instance_curl(inst), k))
            .sub(&inst.expr_value(&table.antisymmetric_expr(), &mut cache));
        if !curl_defect.is_zero() {
            return Err(Error::RecursionMismatch(format!(
                "curl defect at order {k}"
            )));
        }
        checked += 2;
        if k <= 3 {
            for row in 0..DIM {
                for col in 0..DIM {
                    let direct = inst
                        .material_n(&inst.test[col as usize].dx(row), k)
                        .sub(&inst.material_n(&inst.test[col as usize], k).dx(row));
                    let formula = inst.expr_value(
                        &material::gradient_defect_formula(k, row, col),
                        &mut cache,
                    );
                    if !direct.sub(&formula).is_zero() {
                        return Err(Error::RecursionMismatch(format!(
                            "gradient commutator at order {k}, entry ({row},{col})"
                        )));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(checked)
}

/// Boundary trace identities on one instance, all exact on the certified
/// window.
pub fn verify_boundary(inst: &FieldInstance, max_order: u32) -> Result<usize> {
    let mut ctx = boundary::CollarContext::new(inst);
    let mut checked = 0;
    for k in 1..=max_order {
        let defect = boundary::normal_defect_direct(inst, k)
            .sub(&ctx.table_value(&boundary::normal_defect(k)));
        if !defect.is_zero() {
            return Err(Error::RecursionMismatch(format!(
                "normal trace defect at order {k}"
            )));
        }
        checked += 1;
        for gen in [
            boundary::SlotField::Axis(0),
            boundary::SlotField::Axis(1),
            boundary::SlotField::Arm,
        ] {
            let lhs = boundary::rigid_flux_direct(inst, k, gen);
            let rhs = ctx.table_value(&boundary::rigid_flux_derivative(k, gen));
            if !lhs.sub(&rhs).is_zero() {
                return Err(Error::RecursionMismatch(format!(
                    "rigid flux derivative at order {k}"
                )));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Certify every table coefficient bound up to the requested orders.
pub fn verify_bounds(max_table_order: u32, max_form_level: u32) -> Result<usize> {
    let mut checked = 0;
    for k in 1..=max_table_order {
        let table = CommutatorTable::new(k);
        let family = material::admissible_indices(k);
        if table.len() != family.len() {
            return Err(Error::BoundViolation(format!(
                "interior support at order {k} misses the index family"
            )));
        }
        for (word, coeff) in table.terms() {
            if !family.contains(word) {
                return Err(Error::BoundViolation(format!(
                    "foreign interior term at order {k}"
                )));
            }
            if coeff.abs() > material::coefficient_bound(k, word) {
                return Err(Error::BoundViolation(format!(
                    "interior coefficient bound fails at order {k} on {word:?}"
                )));
            }
            checked += 1;
        }
        let mut tables = vec![boundary::normal_defect(k)];
        for gen in [
            boundary::SlotField::Axis(0),
            boundary::SlotField::Axis(1),
            boundary::SlotField::Arm,
        ] {
            tables.push(boundary::rigid_flux_derivative(k, gen));
        }
        for table in &tables {
            for (brick, coeff) in table.terms() {
                let weight =
                    brick.derivative_weight() as usize + brick.rho_order() + brick.rotation_weight();
                if weight != k as usize + 1 {
                    return Err(Error::BoundViolation(format!(
                        "boundary homogeneity fails at order {k}"
                    )));
                }
                let bound = boundary::brick_bound(k, brick);
                if BigRational::from_integer(coeff.abs()) > bound {
                    return Err(Error::BoundViolation(format!(
                        "boundary coefficient bound fails at order {k}"
                    )));
                }
                checked += 1;
            }
        }
    }
    for n in 1..=max_form_level {
        let bar = lowfreq::divergence_forms(n);
        checked += lowfreq::check_form_bounds(&[&bar[0], &bar[1]], n, 2)?;
        let gbar = lowfreq::curl_forms(n);
        checked += lowfreq::check_form_bounds(&[&gbar[0], &gbar[1]], n, 2)?;
        let hat = lowfreq::divergence_potential_forms(n);
        checked +=
            lowfreq::check_form_bounds(&[&hat[0][0], &hat[0][1], &hat[1][0], &hat[1][1]], n, 4)?;
        let ghat = lowfreq::curl_potential_forms(n);
        checked +=
            lowfreq::check_form_bounds(&[&ghat[0][0], &ghat[0][1], &ghat[1][0], &ghat[1][1]], n, 4)?;
    }
    Ok(checked)
}

/// Run the full identity battery: exact identities on freshly drawn
/// polynomial instances plus every coefficient bound.
pub fn run_identity_battery(
    max_order: u32,
    instances: u32,
    seed: u64,
) -> Result<IdentityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = IdentityReport::default();
    let interior_order = max_order.min(4);
    let boundary_order = max_order.min(4);
    let chain_level = max_order.min(3);
    for round in 0..instances {
        let class = match round % 3 {
            0 => DistanceClass::Aligned,
            1 => DistanceClass::Radial,
            _ => DistanceClass::Rotating(boundary_order.min(3) + 6),
        };
        let inst = FieldInstance::random(&mut rng, class, 2);
        report.interior += verify_interior(&inst, interior_order)?;
        let collar_order = match class {
            DistanceClass::Rotating(_) => boundary_order.min(3),
            _ => boundary_order,
        };
        report.boundary += verify_boundary(&inst, collar_order)?;
        let chain_inst = if round % 2 == 0 {
            lowfreq::hypothesis_instance(&mut rng)
        } else {
            lowfreq::self_transport_instance(&mut rng)
        };
        lowfreq::verify_divergence_chain(&chain_inst, chain_level)?;
        report.chains += chain_level as usize + 1;
        let grad_inst = lowfreq::gradient_instance(&mut rng);
        lowfreq::verify_curl_chain(&grad_inst, chain_level)?;
        report.chains += chain_level as usize + 1;
    }
    report.bounded_terms = verify_bounds(6, 4)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use poly::rat;

    #[test]
    fn composition_weights_match_the_pinned_values() {
        assert_eq!(upsilon_sum(1, 3), rat(1, 16));
        assert_eq!(upsilon_sum(2, 2), rat(1, 16));
        assert_eq!(upsilon_sum(2, 4), rat(1, 32) + rat(1, 81));
        // too few units to fill the parts
        assert_eq!(upsilon_sum(3, 2), rat(0, 1));
    }

    #[test]
    fn composition_weights_stay_under_the_geometric_budget() {
        for s in 1..=5u32 {
            for m in s..=30 {
                let value = upsilon_sum(s, m);
                let budget = upsilon_budget(s, m);
                assert!(value <= budget, "s = {s}, m = {m}: {value} > {budget}");
            }
        }
    }

    #[test]
    fn scaling_weights_are_exact_for_admissible_tuples() {
        for k in 1..=5u32 {
            for word in material::admissible_indices(k) {
                let alpha = MultiIndex(word);
                for p in 1..=4u32 {
                    assert!(holder_exponent_check(&alpha, p, k));
                }
                assert!(!holder_exponent_check(&alpha, 2, k + 1));
            }
        }
    }

    #[test]
    fn csv_export_is_deterministic_and_complete() {
        let csv = coefficient_csv(3);
        let again = coefficient_csv(3);
        assert_eq!(csv, again);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,s,alpha,coeff,bound");
        // 1 + 3 + 7 admissible tuples at orders 1..3
        assert_eq!(lines.len(), 1 + 1 + 3 + 7);
        assert!(lines.contains(&"1,2,0;0,1,1"));
        assert!(lines.contains(&"2,3,0;0;0,-2,2"));
    }

    #[test]
    fn small_identity_battery_passes() {
        let report = run_identity_battery(2, 3, 7).unwrap();
        assert!(report.interior > 0);
        assert!(report.boundary > 0);
        assert!(report.chains > 0);
        assert!(report.bounded_terms > 0);
    }
}
