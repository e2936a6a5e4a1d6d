use chromophore_gate::kinetics::{
    add_noise, fit_traces, log_times, simulate_trace, sublevel_mixing, TraceKind, TraceSetup,
    Transition, TripletKinetics,
};

fn setup(kind: TraceKind, theta_deg: f64) -> TraceSetup {
    TraceSetup {
        kind,
        transition: Transition::PlusZero,
        inversion_delay_us: (kind == TraceKind::InversionRecovery).then_some(20.0),
        times: log_times(1.0, 2000.0, 100),
        field_mhz: 9600.0,
        theta_deg,
        phi_deg: 0.0,
    }
}

fn main() -> chromophore_gate::Result<()> {
    let truth = TripletKinetics::reference();
    let high_field = sublevel_mixing(&truth.with_field(9600.0, 0.0, 0.0))?;
    println!("in-field populations {:.3?}, lifetimes {:.3?} ms", high_field.populations, high_field.lifetimes_ms());

    let traces = [
        setup(TraceKind::FlashDelay, 0.0),
        setup(TraceKind::InversionRecovery, 0.0),
        setup(TraceKind::FlashDelay, 90.0),
        setup(TraceKind::InversionRecovery, 90.0),
    ]
    .iter()
    .enumerate()
    .map(|(i, s)| add_noise(simulate_trace(&truth, s)?, 0.01, i as u64))
    .collect::<chromophore_gate::Result<Vec<_>>>()?;

    let guess = TripletKinetics { p_x: 0.3, p_y: 0.4, p_z: 0.3, tau_x_ms: 0.3, tau_y_ms: 0.8, tau_z_ms: 0.05, ..truth };
    let fit = fit_traces(&traces, &guess)?;
    let k = fit.kinetics;
    println!(
        "fit after {} iterations: p = {:.3}:{:.3}:{:.3}, τ = {:.3}/{:.3}/{:.4} ms",
        fit.iterations, k.p_x, k.p_y, k.p_z, k.tau_x_ms, k.tau_y_ms, k.tau_z_ms
    );
    Ok(())
}
