//! Acceptance suite: one PASS/FAIL line per criterion with measured values.
//!
//! `cargo test --release --test acceptance -- 3 4` runs a subset. Failures
//! are reported but only change the exit status when
//! `EEGSHIELD_ACCEPTANCE_STRICT=1` is set.

mod common;

use std::time::Instant;

use eegshield::data::format::{
    decode_dataset, decode_perturbation, encode_dataset, encode_perturbation,
};
use eegshield::data::{synth_generate, Dataset, SynthConfig};
use eegshield::eval::{
    bca, run_loso, run_online, synth_stream, uia, Aggregate, Condition, EvalConfig,
    ExperimentReport, OnlineConfig,
};
use eegshield::nets::{self, ExtractorConfig, SurrogateModels, TrainConfig};
use eegshield::shield::{
    generate_sample_wise, generate_sample_wise_observed, generate_user_wise, SampleHyper, UserHyper,
};
use eegshield::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::gradcheck;

type Outcome = anyhow::Result<(bool, String)>;

/// Results shared between criteria so expensive runs happen once.
#[derive(Default)]
struct Cache {
    reference: Option<Dataset>,
    clean: Option<(ExperimentReport, f64)>,
    sample: Option<(Dataset, f64)>,
    user: Option<(Dataset, f64)>,
}

impl Cache {
    fn reference(&mut self) -> anyhow::Result<Dataset> {
        if self.reference.is_none() {
            self.reference = Some(synth_generate(&SynthConfig::reference())?);
        }
        Ok(self.reference.clone().unwrap())
    }

    fn clean(&mut self) -> anyhow::Result<(ExperimentReport, f64)> {
        if self.clean.is_none() {
            let d = self.reference()?;
            let t = Instant::now();
            let r = run_loso(&d, None, &eval_config(ExtractorConfig::cfg_a()))?;
            self.clean = Some((r, t.elapsed().as_secs_f64()));
        }
        Ok(self.clean.clone().unwrap())
    }

    /// Sample-wise run with the default hyper-parameters, also checking the
    /// bound at every round boundary. Returns the worst `max|δ|` seen.
    fn sample(&mut self) -> anyhow::Result<(Dataset, f64, f64, usize)> {
        let d = self.reference()?;
        let hyper = SampleHyper::default();
        let mut worst = 0.0f64;
        let mut rounds = 0;
        let t = Instant::now();
        let out = generate_sample_wise_observed(&d, &ExtractorConfig::cfg_a(), &hyper, &mut |s| {
            worst = worst.max(s.deltas.iter().fold(0.0, |m, v| m.max(v.abs())));
            rounds += 1;
            Ok(())
        })?;
        let secs = t.elapsed().as_secs_f64();
        self.sample = Some((out.perturbed, secs));
        Ok((self.sample.clone().unwrap().0, secs, worst, rounds))
    }

    fn sample_perturbed(&mut self) -> anyhow::Result<(Dataset, f64)> {
        if self.sample.is_none() {
            self.sample()?;
        }
        Ok(self.sample.clone().unwrap())
    }

    fn user_perturbed(&mut self) -> anyhow::Result<(Dataset, f64)> {
        if self.user.is_none() {
            let d = self.reference()?;
            let t = Instant::now();
            let out = generate_user_wise(&d, &ExtractorConfig::cfg_a(), &UserHyper::default())?;
            self.user = Some((out.perturbed, t.elapsed().as_secs_f64()));
        }
        Ok(self.user.clone().unwrap())
    }
}

/// Evaluation models at their default budget: 150 + 150 epochs, 5 repeats.
fn eval_config(extractor: ExtractorConfig) -> EvalConfig {
    EvalConfig {
        extractor,
        curves: false,
        ..EvalConfig::default()
    }
}

fn fmt(a: &Aggregate) -> String {
    format!("BCA {:.3} UIA {:.3}", a.bca_mean, a.uia_mean)
}

fn gradients(_: &mut Cache) -> Outcome {
    let t = Instant::now();
    let mut worst = ("", 0.0f64, 0u64);
    for seed in 0..100 {
        let mut errs = gradcheck::elementary_ops(seed);
        errs.extend(gradcheck::signal_ops(seed));
        errs.push(("joint loss", gradcheck::joint_loss(seed)));
        errs.push(("sample-wise loss", gradcheck::sample_wise_loss(seed)));
        errs.push(("user-wise loss", gradcheck::user_wise_loss(seed)));
        for (name, e) in errs {
            if e > worst.1 {
                worst = (name, e, seed);
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst.1 <= gradcheck::TOL && secs <= 60.0;
    Ok((
        pass,
        format!(
            "worst relative error {:.2e} ({} seed {}), limit 1e-4, {secs:.1}s",
            worst.1, worst.0, worst.2
        ),
    ))
}

fn metrics(_: &mut Cache) -> Outcome {
    let hand = bca(&[0, 0, 1, 1, 1], &[0, 1, 1, 1, 1], 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..300);
        let k = rng.random_range(1..10);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if bca(&preds, &labels, k)? != common::bca_oracle(&preds, &labels)
            || uia(&preds, &labels)? != common::uia_oracle(&preds, &labels)
        {
            mismatches += 1;
        }
    }
    Ok((
        hand == 0.875 && mismatches == 0,
        format!("hand case {hand}, {mismatches} mismatches in 1000 instances"),
    ))
}

fn linf_contract(c: &mut Cache) -> Outcome {
    let (_, secs, worst, rounds) = c.sample()?;
    let pass = worst <= 0.01 && rounds == 30;
    Ok((
        pass,
        format!("max|delta| {worst} over {rounds} round boundaries, limit 0.01 ({secs:.0}s)"),
    ))
}

fn unlearnable(c: &mut Cache, perturbed: Dataset, gen_secs: f64, condition: Condition) -> Outcome {
    let d = c.reference()?;
    let (clean, clean_secs) = c.clean()?;
    let t = Instant::now();
    let pert = run_loso(
        &d,
        Some((&perturbed, condition)),
        &eval_config(ExtractorConfig::cfg_a()),
    )?;
    let secs = gen_secs + clean_secs + t.elapsed().as_secs_f64();
    let (a, b) = (clean.aggregate, pert.aggregate);
    let pass = a.uia_mean >= 0.5
        && a.bca_mean >= 0.8
        && b.uia_mean <= a.uia_mean - 0.30
        && b.bca_mean >= a.bca_mean - 0.05
        && secs <= 600.0;
    Ok((
        pass,
        format!(
            "clean {}, perturbed {}; UIA drop {:.3} (need >= 0.30), BCA drop {:.3} (allow <= 0.05); {secs:.0}s",
            fmt(&a),
            fmt(&b),
            a.uia_mean - b.uia_mean,
            a.bca_mean - b.bca_mean
        ),
    ))
}

fn sample_wise(c: &mut Cache) -> Outcome {
    let (p, secs) = c.sample_perturbed()?;
    unlearnable(c, p, secs, Condition::SampleWise)
}

fn user_wise(c: &mut Cache) -> Outcome {
    let (p, secs) = c.user_perturbed()?;
    unlearnable(c, p, secs, Condition::UserWise)
}

fn transfer(c: &mut Cache) -> Outcome {
    let d = c.reference()?;
    let cfg = eval_config(ExtractorConfig::cfg_b());
    let clean = run_loso(&d, None, &cfg)?;
    let mut parts = vec![format!("cfgB clean {}", fmt(&clean.aggregate))];
    let mut pass = true;
    for (name, (p, _), cond) in [
        ("sample-wise", c.sample_perturbed()?, Condition::SampleWise),
        ("user-wise", c.user_perturbed()?, Condition::UserWise),
    ] {
        let r = run_loso(&d, Some((&p, cond)), &cfg)?.paired_with(&clean)?;
        let drop = r.reduction.map_or(0.0, |x| x.uia);
        pass &= drop >= 0.20;
        parts.push(format!("{name} UIA drop {drop:.3}"));
    }
    parts.push("need >= 0.20 each".into());
    Ok((pass, parts.join(", ")))
}

fn online(_: &mut Cache) -> Outcome {
    let synth = SynthConfig {
        users: 40,
        sessions: 2,
        trials_per_user_per_session: 10,
        len: 64,
        ..SynthConfig::reference()
    };
    let stream = synth_stream(&synth, 4)?;
    let cfg = OnlineConfig {
        hyper: UserHyper::default(),
        eval: EvalConfig {
            repeats: 1,
            ..eval_config(ExtractorConfig::cfg_a())
        },
        held_sessions: vec![0, 1],
    };
    let t = Instant::now();
    let r = run_online(&stream, &cfg)?;
    let secs = t.elapsed().as_secs_f64();
    let mut pass = secs <= 900.0;
    let mut steps = Vec::new();
    for s in &r.steps {
        pass &= s.perturbed.all <= 2.0 * s.chance && s.clean.all > 0.5;
        steps.push(format!(
            "U={} clean {:.3} perturbed {:.3} (limit {:.3})",
            s.users,
            s.clean.all,
            s.perturbed.all,
            2.0 * s.chance
        ));
    }
    Ok((pass, format!("{}; {secs:.0}s", steps.join("; "))))
}

fn determinism(c: &mut Cache) -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let small = SynthConfig {
        users: 4,
        sessions: 2,
        trials_per_user_per_session: 8,
        channels: 4,
        len: 64,
        ..SynthConfig::reference()
    };
    let run = || -> anyhow::Result<(Vec<u8>, Vec<u8>, String)> {
        pool.install(|| {
            let d = synth_generate(&small)?;
            let hyper = SampleHyper {
                rounds: 3,
                ..SampleHyper::default()
            };
            let p = generate_sample_wise(&d, &ExtractorConfig::cfg_a(), &hyper)?;
            let cfg = EvalConfig {
                train: TrainConfig {
                    epochs: 5,
                    head_epochs: 5,
                    ..TrainConfig::default()
                },
                repeats: 2,
                ..EvalConfig::default()
            };
            let r = run_loso(&d, Some((&p.perturbed, Condition::SampleWise)), &cfg)?;
            Ok((
                encode_dataset(&d)?,
                encode_perturbation(&p.perturbation)?,
                r.to_json()? + &r.curves_csv(),
            ))
        })
    };
    let (a, b) = (run()?, run()?);
    let identical = a == b;

    let d = c.reference()?;
    let bytes = encode_dataset(&d)?;
    let back = decode_dataset(&bytes)?;
    let data_exact = back.dims() == d.dims()
        && back.task_labels() == d.task_labels()
        && back.user_labels() == d.user_labels()
        && back.session_labels() == d.session_labels()
        && back
            .data()
            .iter()
            .zip(d.data())
            .all(|(x, y)| x.to_bits() == y.to_bits());
    let p = decode_perturbation(&a.1)?;
    let delta_exact = encode_perturbation(&p)? == a.1;

    let mut crc_rejected = 0;
    for mut blob in [bytes, a.1.clone()] {
        let last = blob.len() - 1;
        blob[last] ^= 0x5A;
        let rejected = if &blob[..8] == b"EEGUNLRN" {
            matches!(decode_dataset(&blob), Err(Error::Corruption(_)))
        } else {
            matches!(decode_perturbation(&blob), Err(Error::Corruption(_)))
        };
        crc_rejected += usize::from(rejected);
    }
    let pass = identical && data_exact && delta_exact && crc_rejected == 2;
    Ok((
        pass,
        format!(
            "repeat runs identical: {identical}; dataset round trip exact: {data_exact}; perturbation round trip exact: {delta_exact}; corrupted CRC rejected {crc_rejected}/2"
        ),
    ))
}

fn degenerate(c: &mut Cache) -> Outcome {
    let faceless = synth_generate(&SynthConfig {
        identity_amplitude: 0.0,
        ..SynthConfig::reference()
    })?;
    let r = run_loso(
        &faceless,
        None,
        &EvalConfig {
            repeats: 1,
            ..eval_config(ExtractorConfig::cfg_a())
        },
    )?;
    let chance = 1.0 / faceless.users() as f64;
    let faceless_ok = r.aggregate.uia_mean <= 2.0 * chance;

    let small = SynthConfig {
        users: 4,
        trials_per_user_per_session: 8,
        channels: 4,
        len: 64,
        ..SynthConfig::reference()
    };
    let d = synth_generate(&small)?;
    let zero = generate_sample_wise(
        &d,
        &ExtractorConfig::cfg_a(),
        &SampleHyper {
            epsilon: 0.0,
            rounds: 2,
            ..SampleHyper::default()
        },
    )?;
    let same_data = zero.perturbed == d;
    let cfg = EvalConfig {
        train: TrainConfig {
            epochs: 5,
            head_epochs: 5,
            ..TrainConfig::default()
        },
        repeats: 2,
        ..EvalConfig::default()
    };
    let clean = run_loso(&d, None, &cfg)?;
    let pert = run_loso(&d, Some((&zero.perturbed, Condition::SampleWise)), &cfg)?;
    let same_report = clean.folds == pert.folds
        && clean.aggregate == pert.aggregate
        && clean.curves_csv() == pert.curves_csv();

    let reference = c.reference()?;
    let models = SurrogateModels::new(ExtractorConfig::cfg_a(), 8, 128, 2, 8, 3)?;
    let tc = TrainConfig {
        alpha: 0.0,
        epochs: 3,
        seed: 3,
        ..TrainConfig::default()
    };
    let joint = nets::train_joint(&reference, &tc, models.clone())?;
    let task = nets::train_task_only(&reference, &tc, models)?;
    let alpha_ok = joint.models == task.models && joint.losses == task.losses;

    let pass = faceless_ok && same_data && same_report && alpha_ok;
    Ok((
        pass,
        format!(
            "identity 0: UIA {:.3} (limit {:.3}); epsilon 0: data identical {same_data}, reports identical {same_report}; alpha 0 bit-equal to task-only: {alpha_ok}",
            r.aggregate.uia_mean,
            2.0 * chance
        ),
    ))
}

type Criterion = (u32, &'static str, fn(&mut Cache) -> Outcome);

const CRITERIA: [Criterion; 9] = [
    (1, "gradient correctness", gradients),
    (2, "metric oracles", metrics),
    (3, "l-infinity contract", linf_contract),
    (4, "sample-wise unlearnability", sample_wise),
    (5, "user-wise unlearnability", user_wise),
    (6, "transferability", transfer),
    (7, "online scenario", online),
    (8, "determinism and formats", determinism),
    (9, "degenerate controls", degenerate),
];

fn main() {
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let strict = std::env::var("EEGSHIELD_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut cache = Cache::default();
    let mut failed = Vec::new();
    let total = Instant::now();
    for (id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = check(&mut cache).unwrap_or_else(|e| (false, format!("error: {e:#}")));
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} [{id}] {name}: {detail} [{:.0}s]",
            t.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    println!(
        "acceptance: {} failed {:?}, {:.0}s total",
        failed.len(),
        failed,
        total.elapsed().as_secs_f64()
    );
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
