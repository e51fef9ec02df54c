mod channel_simulation {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/channel_simulation.rs"));
}

mod rsrp_measurement {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/rsrp_measurement.rs"));
}

mod autocorrelation_estimation {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/autocorrelation_estimation.rs"));
}

mod reflection_design {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/reflection_design.rs"));
}

mod snr_experiment {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/snr_experiment.rs"));
}

#[test]
fn channel_simulation_runs() {
    channel_simulation::run_example().expect("channel simulation example should run");
}

#[test]
fn rsrp_measurement_runs() {
    rsrp_measurement::run_example().expect("RSRP measurement example should run");
}

#[test]
fn autocorrelation_estimation_runs() {
    autocorrelation_estimation::run_example().expect("estimation example should run");
}

#[test]
fn reflection_design_runs() {
    reflection_design::run_example().expect("reflection design example should run");
}

#[test]
fn snr_experiment_runs() {
    snr_experiment::run_example().expect("experiment example should run");
}
