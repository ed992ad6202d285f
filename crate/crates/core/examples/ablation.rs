//! Prints MAJ, jawOpen PCC/RMSE, boundary jumps and EMA peak retention of
//! Methods A to D on the synthetic corpus. Optional argument: seed.

use lipmotion::audio::{synthesize_method_d, ModulationParams};
use lipmotion::builder::{build_viseme, BuilderConfig};
use lipmotion::coarticulation::{boundary_discontinuity, phoneme_boundaries, synthesize, FusionParams, Method};
use lipmotion::metrics::{evaluate, maj, select_active_channels, ACTIVE_CHANNELS};
use lipmotion::synthetic::{generate_corpus, DEFAULT_SEED};
use lipmotion::{MappingTable, VisemeLibrary};

fn main() {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_SEED);
    let table = MappingTable::default_table();
    let corpus = generate_corpus(seed, &table);
    let mut lib = VisemeLibrary::new(60).unwrap();
    for (id, capture) in &corpus.captures {
        lib.insert(*id, build_viseme(capture, &BuilderConfig::default()).unwrap())
            .unwrap();
    }
    println!(
        "{:<4} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "", "A", "B", "C", "D", "ref"
    );
    let mut totals = [0.0; 5];
    for s in &corpus.sentences {
        let active = select_active_channels(&s.reference, ACTIVE_CHANNELS).unwrap();
        let mut row = Vec::new();
        let mut series = Vec::new();
        for m in [Method::A, Method::B, Method::C] {
            series.push(synthesize(&s.script, &lib, &table, &FusionParams::with_method(m)).unwrap());
        }
        series.push(
            synthesize_method_d(
                &s.script,
                &lib,
                &table,
                &FusionParams::default(),
                &s.audio,
                &ModulationParams::default(),
            )
            .unwrap(),
        );
        series.push(s.reference.clone());
        for (k, x) in series.iter().enumerate() {
            let v = maj(x, &active).unwrap();
            totals[k] += v / 4.0;
            row.push(v);
        }
        println!(
            "{:<4} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            s.id, row[0], row[1], row[2], row[3], row[4]
        );
        let bounds = phoneme_boundaries(&s.script, &lib, &table, &FusionParams::default()).unwrap();
        let disc: Vec<f64> = series[..4].iter().map(|x| boundary_discontinuity(x, &bounds)).collect();
        let pcc: Vec<String> = series[..4]
            .iter()
            .map(|x| {
                let r = evaluate(x, &s.reference).unwrap();
                format!("{:.3}/{:.3}", r.jaw_open_pcc.unwrap_or(f64::NAN), r.jaw_open_rmse)
            })
            .collect();
        let fused = &series[2];
        let env = lipmotion::audio::rms_envelope(&s.audio, 60.0, fused.len(), &ModulationParams::default()).unwrap();
        let modulated = lipmotion::audio::modulate(fused, &env, 0.2).unwrap();
        let peak = |x: &lipmotion::FrameSeries| {
            x.frames()
                .iter()
                .flat_map(|f| f.values().iter().copied())
                .fold(0.0, f64::max)
        };
        for alpha in [0.2, 0.3, 0.5] {
            let a = peak(&lipmotion::audio::ema_smooth(fused, alpha).unwrap()) / peak(fused);
            let b = peak(&lipmotion::audio::ema_smooth(&modulated, alpha).unwrap()) / peak(&modulated);
            println!("     global-peak ratio alpha {alpha}: C-input {a:.3}, modulated-input {b:.3}");
        }
        println!("     disc {:?}\n     jaw pcc/rmse {:?}", disc, pcc);
    }
    println!(
        "mean {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
        totals[0], totals[1], totals[2], totals[3], totals[4]
    );
}
