use varplace::global::*;
use varplace::sermodel::{SerConfig, SerModel};
use varplace::synth::{synth_circuit, SynthConfig};
use varplace::variation::*;

fn main() {
    let n = 12usize;
    let sampler = FieldSampler::new(n, 0.5).unwrap();
    for sigma_mult in [1.0f64, 2.0] {
        for scale in [5.0, 15.0, 40.0] {
            let mut reds = Vec::new();
            let mut wls = Vec::new();
            for seed in [11u64, 12, 13, 14, 15] {
                let net = synth_circuit(&SynthConfig::sized(300, seed));
                let pitch = slot_pitch(&net);
                let die = Die::for_netlist(&net, pitch, 0.55);
                let model = SerModel::new(&net, SerConfig::default());
                let report = model.circuit_ser(&model.nominal_vth());
                let vp = VariationParams {
                    grid_n: n, seed: seed * 100,
                    sigma: sigma_mult * 0.55 * 0.22 / 3.0,
                    ..VariationParams::default()
                };
                let grid = gen_map_with(&sampler, &vp);
                let rmap = build_rmap(&classify_regions(&grid));
                let cfg = GlobalConfig { penalty_scale: scale, min_area: 1, bridge_area: 0, ..GlobalConfig::default() };
                let on = run_global(&net, &report, &rmap, &die, &cfg).unwrap();
                let off_cfg = GlobalConfig { ser_aware: false, ..GlobalConfig::default() };
                let off = run_global(&net, &report, &rmap, &die, &off_cfg).unwrap();
                let ser_on = model.circuit_ser(&resolve_vth(&net, &on, &grid)).circuit_ser;
                let ser_off = model.circuit_ser(&resolve_vth(&net, &off, &grid)).circuit_ser;
                reds.push(100.0 * (ser_off - ser_on) / ser_off);
                wls.push(100.0 * (hpwl(&net, &on) / hpwl(&net, &off) - 1.0));
            }
            let mean_red = reds.iter().sum::<f64>() / reds.len() as f64;
            let mean_wl = wls.iter().sum::<f64>() / wls.len() as f64;
            let wins = reds.iter().filter(|&&r| r > 0.0).count();
            println!("sigma_x{sigma_mult} scale {scale:>4}: mean_red={mean_red:+.1}% wins={wins}/5 mean_wl={mean_wl:+.1}%  reds={reds:.1?}");
        }
    }
}
