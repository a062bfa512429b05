//! Boundary trace expansions along a rigidly transported level set.
//!
//! The collar function `rho` rides the rigid motion, so its material
//! derivative along the fluid is `(u - u_S) . grad rho` and every spatial
//! derivative of `rho` differentiates by three clean moves: grow one
//! contraction slot carrying the relative velocity, rotate one existing slot
//! through the spin, or differentiate the slot's own field. Iterating the
//! moves expands `n . D^k psi - D^k(n . psi)` and `D^k(n . sigma_i)` into
//! finite brick tables with integer coefficients, bounded by the same
//! factorial budget the interior tables obey up to a geometric factor.

use super::material::{accumulate_int, composition_factorial, factorial};
use super::poly::{FieldInstance, Poly};
use num::{BigInt, BigRational, One, Zero};
use std::collections::BTreeMap;

/// Base vector field a contraction slot carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SlotField {
    /// `u - u_S`, the velocity relative to the rigid motion.
    Relative,
    /// The transported test field.
    Test,
    /// A fixed coordinate axis; annihilated by the material derivative.
    Axis(u8),
    /// The rotating arm `J (x - h)`.
    Arm,
}

/// One contraction slot: scalar spin factors `r^(beta)` (each paired with a
/// quarter turn), an optional bare quarter turn shed by the arm, and `D^order`
/// of the base field.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Slot {
    pub rotations: Vec<u32>,
    pub bare_turn: bool,
    pub field: SlotField,
    pub order: u32,
}

impl Slot {
    pub fn bare(field: SlotField, order: u32) -> Slot {
        Slot {
            rotations: Vec::new(),
            bare_turn: false,
            field,
            order,
        }
    }

    pub fn rotated(mut self, order: u32) -> Slot {
        let pos = self.rotations.partition_point(|&b| b <= order);
        self.rotations.insert(pos, order);
        self
    }

    /// Spin factors carried by this slot, the bare turn counted with them.
    pub fn rotation_count(&self) -> usize {
        self.rotations.len() + usize::from(self.bare_turn)
    }
}

/// A fully contracted derivative of the collar function:
/// `grad^s rho { V_1, .., V_s }` with one slot per derivative index.
/// Slots are kept sorted; the contraction is symmetric.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Brick {
    slots: Vec<Slot>,
}

impl Brick {
    pub fn new(mut slots: Vec<Slot>) -> Brick {
        slots.sort();
        for s in &slots {
            debug_assert!(
                !s.bare_turn || s.field == SlotField::Relative,
                "a bare turn only arises on the swept arm"
            );
        }
        Brick { slots }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Number of derivatives on the collar function.
    pub fn rho_order(&self) -> usize {
        self.slots.len()
    }

    /// Total spin-factor count across slots.
    pub fn rotation_weight(&self) -> usize {
        self.slots.iter().map(Slot::rotation_count).sum()
    }

    /// All derivative orders: field orders and spin-factor orders together.
    pub fn derivative_orders(&self) -> Vec<u32> {
        let mut orders = Vec::new();
        for slot in &self.slots {
            orders.push(slot.order);
            orders.extend_from_slice(&slot.rotations);
        }
        orders.sort_unstable();
        orders
    }

    pub fn derivative_weight(&self) -> u32 {
        self.derivative_orders().iter().sum()
    }
}

/// `3^(s+s') k! / (alpha! (s-1)!)`, the brick coefficient budget.
pub fn brick_bound(order: u32, brick: &Brick) -> BigRational {
    let geometric = (0..brick.rho_order() + brick.rotation_weight())
        .fold(BigInt::one(), |a, _| a * BigInt::from(3));
    let num = geometric * factorial(order);
    let den = composition_factorial(&brick.derivative_orders())
        * factorial(brick.rho_order() as u32 - 1);
    BigRational::new(num, den)
}

/// Coefficient table of one boundary expansion.
#[derive(Clone, Debug)]
pub struct TraceTable {
    pub order: u32,
    terms: BTreeMap<Brick, BigInt>,
}

impl TraceTable {
    pub fn terms(&self) -> impl Iterator<Item = (&Brick, &BigInt)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, brick: &Brick) -> BigInt {
        self.terms.get(brick).cloned().unwrap_or_else(BigInt::zero)
    }

    /// The material derivative of every brick, by the three moves.
    fn derivative_terms(&self) -> BTreeMap<Brick, BigInt> {
        let mut out = BTreeMap::new();
        for (brick, coeff) in &self.terms {
            // the collar derivative grows one relative-velocity slot ..
            let mut grown = brick.slots.clone();
            grown.push(Slot::bare(SlotField::Relative, 0));
            accumulate_int(&mut out, Brick::new(grown), coeff.clone());
            for i in 0..brick.slots.len() {
                // .. and spins each contracted index against the frame.
                let mut spun = brick.slots.clone();
                spun[i] = spun[i].clone().rotated(0);
                accumulate_int(&mut out, Brick::new(spun), -coeff.clone());
                // the slot's own field differentiates
                match brick.slots[i].field {
                    SlotField::Relative | SlotField::Test => {
                        let mut bumped = brick.slots.clone();
                        bumped[i].order += 1;
                        accumulate_int(&mut out, Brick::new(bumped), coeff.clone());
                    }
                    SlotField::Axis(_) => {}
                    SlotField::Arm => {
                        // the arm sweeps into a turned relative velocity ..
                        let mut swept = brick.slots.clone();
                        swept[i] = Slot {
                            rotations: brick.slots[i].rotations.clone(),
                            bare_turn: true,
                            field: SlotField::Relative,
                            order: 0,
                        };
                        accumulate_int(&mut out, Brick::new(swept), coeff.clone());
                        // .. and keeps turning with the spin.
                        let mut turning = brick.slots.clone();
                        turning[i] = turning[i].clone().rotated(0);
                        accumulate_int(&mut out, Brick::new(turning), coeff.clone());
                    }
                }
                // each spin factor differentiates in time
                for m in 0..brick.slots[i].rotations.len() {
                    let mut bumped = brick.slots.clone();
                    bumped[i].rotations[m] += 1;
                    accumulate_int(&mut out, Brick::new(bumped), coeff.clone());
                }
            }
        }
        out
    }
}

/// Defect of the normal trace: `n . D^k psi = D^k(n . psi) + (this table)`.
pub fn normal_defect(order: u32) -> TraceTable {
    let mut table = TraceTable {
        order: 0,
        terms: BTreeMap::new(),
    };
    for level in 0..order {
        let mut next = table.derivative_terms();
        // commuting the newest derivative costs `(D grad rho) . D^level psi`
        let pair = Brick::new(vec![
            Slot::bare(SlotField::Test, level),
            Slot::bare(SlotField::Relative, 0),
        ]);
        accumulate_int(&mut next, pair, -BigInt::one());
        let turned = Brick::new(vec![Slot::bare(SlotField::Test, level).rotated(0)]);
        accumulate_int(&mut next, turned, BigInt::one());
        table = TraceTable {
            order: level + 1,
            terms: next,
        };
    }
    table
}

/// `D^k (grad rho . sigma)` for one rigid generator `sigma`.
pub fn rigid_flux_derivative(order: u32, generator: SlotField) -> TraceTable {
    assert!(
        matches!(generator, SlotField::Axis(_) | SlotField::Arm),
        "flux generators are the axes and the arm"
    );
    let mut table = TraceTable {
        order: 0,
        terms: BTreeMap::from([(
            Brick::new(vec![Slot::bare(generator, 0)]),
            BigInt::one(),
        )]),
    };
    for level in 0..order {
        table = TraceTable {
            order: level + 1,
            terms: table.derivative_terms(),
        };
    }
    table
}

/// Evaluation of bricks on a polynomial instance, caching repeated pieces.
pub struct CollarContext<'a> {
    inst: &'a FieldInstance,
    rho: BTreeMap<(u32, u32), Poly>,
    relative: Vec<[Poly; 2]>,
    test: Vec<[Poly; 2]>,
    spin: Vec<Poly>,
    slots: BTreeMap<Slot, [Poly; 2]>,
}

fn quarter_turn(v: &[Poly; 2]) -> [Poly; 2] {
    [v[1].neg(), v[0].clone()]
}

impl<'a> CollarContext<'a> {
    pub fn new(inst: &'a FieldInstance) -> CollarContext<'a> {
        CollarContext {
            inst,
            rho: BTreeMap::new(),
            relative: Vec::new(),
            test: Vec::new(),
            spin: Vec::new(),
            slots: BTreeMap::new(),
        }
    }

    /// `d_x^a d_y^b rho`.
    pub fn rho_deriv(&mut self, a: u32, b: u32) -> Poly {
        if let Some(p) = self.rho.get(&(a, b)) {
            return p.clone();
        }
        let p = if a > 0 {
            self.rho_deriv(a - 1, b).dx(0)
        } else if b > 0 {
            self.rho_deriv(a, b - 1).dx(1)
        } else {
            self.inst.distance.clone()
        };
        self.rho.insert((a, b), p.clone());
        p
    }

    fn relative_order(&mut self, order: u32) -> [Poly; 2] {
        while self.relative.len() <= order as usize {
            let next = match self.relative.last() {
                None => self.inst.relative_velocity(),
                Some(prev) => [self.inst.material(&prev[0]), self.inst.material(&prev[1])],
            };
            self.relative.push(next);
        }
        self.relative[order as usize].clone()
    }

    fn test_order(&mut self, order: u32) -> [Poly; 2] {
        while self.test.len() <= order as usize {
            let next = match self.test.last() {
                None => [self.inst.test[0].clone(), self.inst.test[1].clone()],
                Some(prev) => [self.inst.material(&prev[0]), self.inst.material(&prev[1])],
            };
            self.test.push(next);
        }
        self.test[order as usize].clone()
    }

    fn spin_deriv(&mut self, beta: u32) -> Poly {
        while self.spin.len() <= beta as usize {
            let next = match self.spin.last() {
                None => self.inst.spin.clone(),
                Some(prev) => prev.dt(),
            };
            self.spin.push(next);
        }
        self.spin[beta as usize].clone()
    }

    pub fn generator_value(&mut self, field: SlotField) -> [Poly; 2] {
        match field {
            SlotField::Relative => self.relative_order(0),
            SlotField::Test => self.test_order(0),
            SlotField::Axis(i) => {
                let mut e = [Poly::zero(), Poly::zero()];
                e[i as usize] = Poly::int(1);
                e
            }
            SlotField::Arm => [
                self.inst.center[1].sub(&Poly::var(1)),
                Poly::var(0).sub(&self.inst.center[0]),
            ],
        }
    }

    pub fn slot_value(&mut self, slot: &Slot) -> [Poly; 2] {
        if let Some(v) = self.slots.get(slot) {
            return v.clone();
        }
        let mut v = match slot.field {
            SlotField::Relative => self.relative_order(slot.order),
            SlotField::Test => self.test_order(slot.order),
            other => {
                debug_assert_eq!(slot.order, 0);
                self.generator_value(other)
            }
        };
        for &beta in &slot.rotations {
            let factor = self.spin_deriv(beta);
            let turned = quarter_turn(&v);
            v = [turned[0].mul(&factor), turned[1].mul(&factor)];
        }
        if slot.bare_turn {
            v = quarter_turn(&v);
        }
        self.slots.insert(slot.clone(), v.clone());
        v
    }

    pub fn brick_value(&mut self, brick: &Brick) -> Poly {
        let values: Vec<[Poly; 2]> = brick
            .slots()
            .iter()
            .map(|s| self.slot_value(s))
            .collect();
        let s = values.len();
        let mut out = Poly::zero();
        for mask in 0u32..(1 << s) {
            let ones = mask.count_ones();
            let mut term = self.rho_deriv(s as u32 - ones, ones);
            for (j, v) in values.iter().enumerate() {
                let axis = (mask >> j) & 1;
                term = term.mul(&v[axis as usize]);
                if term.is_zero() {
                    break;
                }
            }
            out = out.add(&term);
        }
        out
    }

    pub fn table_value(&mut self, table: &TraceTable) -> Poly {
        let mut out = Poly::zero();
        for (brick, coeff) in table.terms() {
            let weight = BigRational::from_integer(coeff.clone());
            out = out.add(&self.brick_value(brick).scale(&weight));
        }
        out
    }
}

/// `n . D^k psi - D^k(n . psi)` computed directly on the instance.
pub fn normal_defect_direct(inst: &FieldInstance, order: u32) -> Poly {
    let normal = [inst.distance.dx(0), inst.distance.dx(1)];
    let flux = normal[0]
        .mul(&inst.test[0])
        .add(&normal[1].mul(&inst.test[1]));
    let traced = normal[0]
        .mul(&inst.material_n(&inst.test[0], order))
        .add(&normal[1].mul(&inst.material_n(&inst.test[1], order)));
    traced.sub(&inst.material_n(&flux, order))
}

/// `D^k (grad rho . sigma)` computed directly on the instance.
pub fn rigid_flux_direct(inst: &FieldInstance, order: u32, generator: SlotField) -> Poly {
    let mut ctx = CollarContext::new(inst);
    let sigma = ctx.generator_value(generator);
    let flux = inst
        .distance
        .dx(0)
        .mul(&sigma[0])
        .add(&inst.distance.dx(1).mul(&sigma[1]));
    inst.material_n(&flux, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::poly::DistanceClass;
    use num::Signed;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const GENERATORS: [SlotField; 3] = [SlotField::Axis(0), SlotField::Axis(1), SlotField::Arm];

    #[test]
    fn first_defect_has_exactly_two_bricks() {
        let table = normal_defect(1);
        assert_eq!(table.len(), 2);
        let pair = Brick::new(vec![
            Slot::bare(SlotField::Test, 0),
            Slot::bare(SlotField::Relative, 0),
        ]);
        let turned = Brick::new(vec![Slot::bare(SlotField::Test, 0).rotated(0)]);
        assert_eq!(table.coefficient(&pair), BigInt::from(-1));
        assert_eq!(table.coefficient(&turned), BigInt::from(1));
    }

    #[test]
    fn flux_seed_is_the_plain_contraction() {
        for gen in GENERATORS {
            let table = rigid_flux_derivative(0, gen);
            assert_eq!(table.len(), 1);
            let seed = Brick::new(vec![Slot::bare(gen, 0)]);
            assert_eq!(table.coefficient(&seed), BigInt::one());
        }
    }

    #[test]
    fn tables_respect_membership_and_bounds_to_order_six() {
        for k in 1..=6u32 {
            let mut tables = vec![normal_defect(k)];
            for gen in GENERATORS {
                tables.push(rigid_flux_derivative(k, gen));
            }
            for table in &tables {
                assert!(!table.is_empty());
                for (brick, coeff) in table.terms() {
                    let s = brick.rho_order();
                    let weight = brick.rotation_weight();
                    assert_eq!(
                        brick.derivative_weight() as usize + s + weight,
                        k as usize + 1,
                        "homogeneity at order {k}: {brick:?}"
                    );
                    assert!(s + weight >= 2, "depth at order {k}: {brick:?}");
                    assert!(s + weight <= k as usize + 1);
                    let bound = brick_bound(k, brick);
                    let value = BigRational::from_integer(coeff.abs());
                    assert!(
                        value <= bound,
                        "order {k}: |{coeff}| > {bound} on {brick:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn defect_bricks_keep_one_test_slot_and_no_generators() {
        for k in 1..=5u32 {
            for (brick, _) in normal_defect(k).terms() {
                let tests = brick
                    .slots()
                    .iter()
                    .filter(|s| s.field == SlotField::Test)
                    .count();
                assert_eq!(tests, 1, "order {k}: {brick:?}");
                assert!(brick.slots().iter().all(|s| {
                    matches!(s.field, SlotField::Test | SlotField::Relative) && !s.bare_turn
                }));
            }
        }
    }

    #[test]
    fn flux_bricks_keep_exactly_one_generator_marker() {
        for k in 1..=5u32 {
            for gen in GENERATORS {
                for (brick, _) in rigid_flux_derivative(k, gen).terms() {
                    let markers = brick
                        .slots()
                        .iter()
                        .filter(|s| {
                            matches!(s.field, SlotField::Axis(_) | SlotField::Arm) || s.bare_turn
                        })
                        .count();
                    assert_eq!(markers, 1, "order {k}, {gen:?}: {brick:?}");
                    assert!(brick
                        .slots()
                        .iter()
                        .all(|s| s.field != SlotField::Test));
                }
            }
        }
    }

    #[test]
    fn normal_defect_matches_instances_without_rotation_jets() {
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        for class in [DistanceClass::Aligned, DistanceClass::Radial] {
            let inst = FieldInstance::random(&mut rng, class, 2);
            let mut ctx = CollarContext::new(&inst);
            for k in 1..=4u32 {
                let defect = normal_defect_direct(&inst, k)
                    .sub(&ctx.table_value(&normal_defect(k)));
                assert!(defect.is_zero(), "{class:?}, order {k}");
            }
        }
    }

    #[test]
    fn normal_defect_matches_rotating_jet_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        for seed in 0..2 {
            for k in 1..=3u32 {
                let inst =
                    FieldInstance::random(&mut rng, DistanceClass::Rotating(k + 6), 2);
                let mut ctx = CollarContext::new(&inst);
                let defect = normal_defect_direct(&inst, k)
                    .sub(&ctx.table_value(&normal_defect(k)));
                assert!(defect.is_zero(), "jet instance {seed}, order {k}");
                assert!(
                    defect.t_cap.map_or(false, |c| c >= 3),
                    "certification window collapsed at order {k}"
                );
            }
        }
    }

    #[test]
    fn flux_derivatives_match_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1618);
        for class in [DistanceClass::Aligned, DistanceClass::Radial] {
            let inst = FieldInstance::random(&mut rng, class, 2);
            for gen in GENERATORS {
                let mut ctx = CollarContext::new(&inst);
                for k in 1..=4u32 {
                    let lhs = rigid_flux_direct(&inst, k, gen);
                    let rhs = ctx.table_value(&rigid_flux_derivative(k, gen));
                    assert!(lhs.sub(&rhs).is_zero(), "{class:?}, {gen:?}, order {k}");
                }
            }
        }
        for k in 1..=3u32 {
            let inst = FieldInstance::random(&mut rng, DistanceClass::Rotating(k + 6), 2);
            for gen in GENERATORS {
                let mut ctx = CollarContext::new(&inst);
                let lhs = rigid_flux_direct(&inst, k, gen);
                let rhs = ctx.table_value(&rigid_flux_derivative(k, gen));
                assert!(lhs.sub(&rhs).is_zero(), "jet, {gen:?}, order {k}");
            }
        }
    }

    #[test]
    fn spin_free_instances_kill_every_rotation_brick() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let inst = FieldInstance::random(&mut rng, DistanceClass::Aligned, 2);
        assert!(inst.spin.is_zero());
        let mut ctx = CollarContext::new(&inst);
        for k in 1..=3u32 {
            let table = normal_defect(k);
            for (brick, _) in table.terms() {
                if brick.rotation_weight() > 0 {
                    assert!(
                        ctx.brick_value(brick).is_zero(),
                        "order {k}: {brick:?} should vanish without spin"
                    );
                }
            }
        }
    }
}
