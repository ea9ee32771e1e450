use graphene_transport::flow::IntegratorParams;
use graphene_transport::hopping::{evolve_ensemble, HopOptions};
use graphene_transport::phase::Potential;
use graphene_transport::sampling::{sample_pure_state, SampleMethod, WavepacketSpec};
use std::time::Instant;

fn main() {
    for (pot, name, dt, tf) in [
        (Potential::Harmonic, "harmonic dt=5e-3 t=4.5", 5e-3, 4.5),
        (Potential::Harmonic, "harmonic dt=1e-2 t=4.5", 1e-2, 4.5),
        (Potential::Barrier, "barrier dt=1e-2 t=7.5", 1e-2, 7.5),
        (Potential::Barrier, "barrier dt=5e-3 t=7.5", 5e-3, 7.5),
    ] {
        let spec = WavepacketSpec::reference(0.064);
        let parts = sample_pure_state(&spec, 100_000, SampleMethod::Qmc, 0);
        let t0 = Instant::now();
        let out = evolve_ensemble(
            parts, 0.0, tf, 0.064, &pot,
            &IntegratorParams::new(dt), &HopOptions::default(), 1,
        ).unwrap();
        let el = t0.elapsed().as_secs_f64();
        println!("{name}: {el:.2} s/1e5 particles, minus frac {:.4}",
                 out.mode_weight(graphene_transport::phase::Mode::Minus));
    }
}
