//! Recovering the T₋ gate in an asymmetric molecule by tuning A′ onto the
//! degeneracy ridge.

use chromophore_gate::effective::ridge_partner;
use chromophore_gate::entanglement::max_entangling_power;
use chromophore_gate::{SpinParams, Sublevel};

fn main() -> chromophore_gate::Result<()> {
    let base = SpinParams::reference();
    let window = chromophore_gate::cli::default_map_window(&base)?;
    for delta1 in [0.0, 0.1, 0.2, 0.5] {
        let detuned = base.with_asymmetry(delta1, 0.0, 1.0);
        let ridge = ridge_partner(&detuned, Sublevel::Minus)?;
        let tuned = SpinParams { a_prime: ridge.a_prime_refined, ..detuned };
        let (off, _) = max_entangling_power(&detuned, Sublevel::Minus, window)?;
        let (on, t) = max_entangling_power(&tuned, Sublevel::Minus, window)?;
        println!(
            "Δ1 = {delta1:.1}: m− = {off:.4} at A′ = A, {on:.4} at A′ = {:.5} MHz (t* = {t:.0} µs)",
            ridge.a_prime_refined
        );
    }
    Ok(())
}
