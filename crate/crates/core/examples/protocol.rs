//! Two-pass gate protocol on |↓↑⟩ with the measured sublevel populations
//! and lifetimes, swept over the hyperfine constant.

use chromophore_gate::dynamics::{
    down_up, run_protocol_with, two_pass_sequence, BranchModel, DecayRates, TwoPassOptions,
};
use chromophore_gate::effective::coupling_numeric;
use chromophore_gate::entanglement::{concurrence, entanglement_of_formation};
use chromophore_gate::{SpinParams, Sublevel};

fn main() -> chromophore_gate::Result<()> {
    let rates = DecayRates::from_lifetimes_ms(0.57, 0.02, 0.57)?;
    for a in [1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 40.0] {
        let params = SpinParams::reference().with_hyperfine(a);
        let model = BranchModel::new(&params)?;
        let plus = coupling_numeric(&params, Sublevel::Plus)?.offdiag;
        let minus = coupling_numeric(&params, Sublevel::Minus)?.offdiag;
        let (sequence, timing) = two_pass_sequence(
            down_up(),
            [0.49, 0.02, 0.49],
            plus,
            minus,
            &rates,
            TwoPassOptions::default(),
        )?;
        let outcome = run_protocol_with(&model, &rates, &sequence)?;
        let timing = timing.expect("nonzero couplings");
        println!(
            "A = {a:>4} MHz  gates {:>7.1}/{:>7.1} µs (m = {:>3})  C = {:.3}  EoF = {:.3}",
            timing.gate_plus_us,
            timing.second_swap_us,
            timing.multiple,
            concurrence(&outcome.rho)?,
            entanglement_of_formation(&outcome.rho)?
        );
    }
    Ok(())
}
