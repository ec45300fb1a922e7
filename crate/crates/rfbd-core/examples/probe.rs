// scratch probe: surrogate fidelity iteration
use rfbd_core::attack::estimate_triggers;
use rfbd_core::dsp::{clipping_threshold, default_scheme_list, mean_power, OfdmConfig};
use rfbd_core::pipelines::*;
use rfbd_core::rf::{ChannelConfig, PaModel};
use std::time::Instant;

fn main() {
    let link = LinkConfig {
        ofdm: OfdmConfig::new(64, 16, default_scheme_list(), 3.0, vec![0.0, 8.0, 18.0]).unwrap(),
        channel: ChannelConfig::new(3, 0.5).unwrap(),
        cnc_iterations: 2,
    };
    let m = 2000;
    let seed = 7;

    let spec = PoisonSpec { rho_percent: 5.0, target_class: 0, delta_frac: 0.1, epsilon_frac: 0.01 };
    let plan = build_poison_plan(&link, m, seed, &spec).unwrap();
    let bd = generate_backdoored_dataset(&link, m, seed, &plan).unwrap();

    let p_in = mean_power(
        regenerate_pre_pa(&link, seed, &(0..m).collect::<Vec<_>>()).unwrap().iter().map(|f| f.as_slice()),
    ).unwrap();
    let a = clipping_threshold(3.0, p_in).unwrap();
    let pa = PaModel::new(a).unwrap();

    for (n_probes, epochs) in [(6000usize, 100usize)] {
        let probes = generate_probe_set(&link.ofdm, &pa, n_probes, seed ^ 0x5a).unwrap();
        let t = Instant::now();
        let (surrogate, slog, nmse) = train_surrogate(&probes, &TrainHyper { epochs, batch_size: 64, lr: 1e-3, patience: 16, seed }).unwrap();
        let est = estimate_triggers(&surrogate, &bd.benign_rows, &bd.poisoned_rows).unwrap();
        let mut bank = bd.bank.clone();
        bank.set_estimates(est).unwrap();
        println!(
            "probes={n_probes} epochs_run={} time={:.0}s NMSE={nmse:.1}dB fidelity={:.4}",
            slog.epochs.len(),
            t.elapsed().as_secs_f32(),
            bank.estimation_error().unwrap()
        );
    }
}
