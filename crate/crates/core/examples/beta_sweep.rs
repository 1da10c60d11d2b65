//! Coarse beta sweep on the reference synthetic dataset.
//!
//! cargo run --release --example beta_sweep -- sample 0.01 0.1 1
//! cargo run --release --example beta_sweep -- user 0.1 1 10 100
//!
//! `SWEEP_SCALE=0.01` multiplies every synthetic amplitude, which is the
//! same as growing the perturbation budget by the inverse factor.

use std::time::Instant;

use eegshield::data::{synth_generate, Dataset, SynthConfig};
use eegshield::eval::{run_loso, Condition, EvalConfig};
use eegshield::nets::{ExtractorConfig, TrainConfig};
use eegshield::shield::{generate_sample_wise, generate_user_wise, SampleHyper, UserHyper};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode = args.next().unwrap_or_else(|| "user".into());
    let betas: Vec<f64> = args.map(|s| s.parse()).collect::<Result<_, _>>()?;
    let scale: f64 = std::env::var("SWEEP_SCALE").map_or(Ok(1.0), |s| s.parse())?;
    let r = SynthConfig::reference();
    let d = synth_generate(&SynthConfig {
        identity_amplitude: r.identity_amplitude * scale,
        task_amplitude: r.task_amplitude * scale,
        session_amplitude: r.session_amplitude * scale,
        noise_std: r.noise_std * scale,
        ..r
    })?;
    let cfg = EvalConfig {
        train: TrainConfig {
            epochs: 30,
            head_epochs: 30,
            ..TrainConfig::default()
        },
        repeats: 1,
        curves: false,
        ..EvalConfig::default()
    };
    let clean = run_loso(&d, None, &cfg)?.aggregate;
    println!("mode,beta,max_norm,clean_bca,clean_uia,perturbed_bca,perturbed_uia,seconds");
    for beta in betas {
        let t = Instant::now();
        let (perturbed, norm): (Dataset, f64) = if mode == "sample" {
            let out = generate_sample_wise(
                &d,
                &ExtractorConfig::cfg_a(),
                &SampleHyper {
                    beta,
                    ..SampleHyper::default()
                },
            )?;
            (
                out.perturbed,
                out.perturbation.norms().into_iter().fold(0.0, f64::max),
            )
        } else {
            let out = generate_user_wise(
                &d,
                &ExtractorConfig::cfg_a(),
                &UserHyper {
                    beta,
                    ..UserHyper::default()
                },
            )?;
            (
                out.perturbed,
                out.perturbation.norms().into_iter().fold(0.0, f64::max),
            )
        };
        let cond = if mode == "sample" {
            Condition::SampleWise
        } else {
            Condition::UserWise
        };
        let p = run_loso(&d, Some((&perturbed, cond)), &cfg)?.aggregate;
        println!(
            "{mode},{beta},{norm:.4},{:.4},{:.4},{:.4},{:.4},{:.0}",
            clean.bca_mean,
            clean.uia_mean,
            p.bca_mean,
            p.uia_mean,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
