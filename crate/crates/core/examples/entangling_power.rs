use chromophore_gate::effective::ExcitedSpectrum;
use chromophore_gate::entanglement::{entangling_power_closed, entangling_power_mc, BlockEvolution};
use chromophore_gate::{SpinParams, Sublevel};

fn main() -> chromophore_gate::Result<()> {
    let params = SpinParams::reference();
    let spectrum = ExcitedSpectrum::new(&params);
    let a = spectrum.coupling(&params, Sublevel::Plus)?.a_numeric;
    let evolution = BlockEvolution::new(&spectrum);

    let period = 1.0 / (2.0 * a);
    println!("{:>9} {:>9} {:>9} {:>9}", "t (µs)", "closed", "e+", "e0");
    for k in 0..=10 {
        let t = period * k as f64 / 10.0;
        println!(
            "{t:>9.1} {:>9.5} {:>9.5} {:>9.5}",
            entangling_power_closed(a, t),
            evolution.entangling_power(Sublevel::Plus, t)?,
            evolution.entangling_power(Sublevel::Zero, t)?,
        );
    }

    // Monte Carlo cross-check at the quarter period
    let u = chromophore_gate::dynamics::sublevel_block(
        &evolution.propagator(period / 4.0),
        Sublevel::Plus,
        chromophore_gate::dynamics::LEAK_TOL,
    )?
    .accept(chromophore_gate::dynamics::LEAK_TOL)?;
    let mc = entangling_power_mc(&u, 50_000, 1)?;
    println!("Monte Carlo at t = {:.1} µs: {:.4} ± {:.4}", period / 4.0, mc.entangling_power, mc.stderr);
    Ok(())
}
