//! Closed-form and numerically extracted flip-flop couplings, with the gate
//! feasibility check at the reference parameters.

use chromophore_gate::dynamics::{feasibility, DecayRates, MUCH_LESS_RATIO};
use chromophore_gate::effective::couplings;
use chromophore_gate::SpinParams;

fn main() -> chromophore_gate::Result<()> {
    let params = SpinParams::reference();
    for c in couplings(&params)? {
        println!(
            "T{}: closed form {:>12}  numeric {:.4e} MHz",
            c.sublevel.symbol(),
            c.a_analytic.map(|a| format!("{a:.4e}")).unwrap_or_else(|| "n/a".into()),
            c.a_numeric
        );
    }
    let report = feasibility(&params, &DecayRates::reference(), MUCH_LESS_RATIO)?;
    println!(
        "quarter-swap gate {:.1} µs against a {:.0} µs lifetime; T0 swap is {:.1}× slower than the gate",
        report.gate_time_us, report.lifetime_us, report.coherence_over_gate
    );
    Ok(())
}
