//! Acceptance run: one line per criterion, then a single assertion.
//!
//! Everything runs in one test so the latency measurement is not competing
//! with the detection suites for cores.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use motorsig::alarm::{run_monitor, AlarmConfig, ClassifiedFrame, Transition};
use motorsig::bss::{center_whiten, ica_fit, log_likelihood, natural_gradient, separate, IcaConfig, SourcePrior};
use motorsig::multirate::{decimate, design_lowpass, interpolate, DEFAULT_ATTENUATION_DB};
use motorsig::pipeline::{
    calibrate_library, default_fault_classes, fault_pairs, noise_regimes, run_bench, run_compare, run_suite,
    single_fault_suite, valve_noise_suite, Analyzer, Mode, ModeSummary, PipelineConfig, Scenario, SuiteConfig,
};
use motorsig::signal_model::{
    generate_sources, mix_sources, DriveScenario, MixingMatrix, MultiChannelRecord, NoiseKind, OperatingPoint,
    SourceKind,
};
use motorsig::signature::SignatureLibrary;
use motorsig::stft::{stft, StftConfig, WindowKind};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass,
    Fail,
    /// Failure that is reported but does not fail the run.
    SoftFail,
}

struct Verdict {
    id: u8,
    name: &'static str,
    outcome: Outcome,
    detail: String,
}

fn verdict(id: u8, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict {
        id,
        name,
        outcome: if pass { Outcome::Pass } else { Outcome::Fail },
        detail,
    }
}

// ---------- shared oracles ----------

fn amari(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    let a = g.map(f64::abs);
    let mut s = 0.0;
    for i in 0..n {
        let row = a.row(i);
        s += row.sum() / row.max() - 1.0;
        let col = a.column(i);
        s += col.sum() / col.max() - 1.0;
    }
    s / (2.0 * n as f64 * (n as f64 - 1.0))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Least-squares amplitude of a tone at `f` cycles/sample in `x`.
fn tone_amplitude(x: &[f64], f: f64) -> f64 {
    let (mut cc, mut ss, mut cs, mut xc, mut xs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, v) in x.iter().enumerate() {
        let (s, c) = (2.0 * PI * f * n as f64).sin_cos();
        cc += c * c;
        ss += s * s;
        cs += c * s;
        xc += v * c;
        xs += v * s;
    }
    let det = cc * ss - cs * cs;
    let a = (xc * ss - xs * cs) / det;
    let b = (xs * cc - xc * cs) / det;
    a.hypot(b)
}

// ---------- 1: separation quality ----------

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let pool = [
        SourceKind::Laplacian,
        SourceKind::Uniform,
        SourceKind::Sine { frequency_hz: 7.0 },
        SourceKind::Sawtooth { frequency_hz: 3.0 },
        SourceKind::Square { frequency_hz: 5.0 },
    ];
    let (mut trials, mut good, mut min_corr) = (0, 0, f64::INFINITY);
    for n in [2usize, 3] {
        for t in 0..40u64 {
            let kinds: Vec<SourceKind> = (0..n).map(|i| pool[(t as usize + 2 * i) % pool.len()]).collect();
            let seed = 100 * n as u64 + t;
            let s = generate_sources(&kinds, 1000.0, 4000, seed).unwrap();
            let a = MixingMatrix::random_well_conditioned(n, 100.0, seed).unwrap();
            assert!(a.condition_number() < 100.0);
            let x = mix_sources(&a, &s).unwrap();
            let (xw, whitener) = center_whiten(&x).unwrap();
            let mut fit = ica_fit(
                &xw,
                &IcaConfig {
                    seed,
                    ..IcaConfig::default()
                },
            )
            .unwrap();
            fit.whitener = whitener;
            let g = fit.separation_matrix() * a.matrix();
            let u = separate(&fit, &x).unwrap();
            trials += 1;
            if amari(&g) < 0.05 {
                good += 1;
                for j in 0..n {
                    let best = (0..n)
                        .map(|i| correlation(u.samples(i), s.record().samples(j)).abs())
                        .fold(0.0, f64::max);
                    min_corr = min_corr.min(best);
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let rate = good as f64 / trials as f64;
    verdict(
        1,
        "BSS separation quality",
        rate >= 0.95 && min_corr > 0.95 && secs < 30.0,
        format!(
            "Amari<0.05 in {good}/{trials} ({:.1}%), min matched |corr| {min_corr:.4}, {secs:.1} s",
            100.0 * rate
        ),
    )
}

// ---------- 2: gradient check ----------

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst = f64::INFINITY;
    let mut checks = 0;
    for n in [2usize, 3] {
        for prior in [SourcePrior::SuperGaussian, SourcePrior::SubGaussian] {
            for _ in 0..10 {
                let data: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..200).map(|_| rng.random_range(-1.5..1.5)).collect())
                    .collect();
                let x = MultiChannelRecord::from_samples(1.0, data).unwrap();
                let w = DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) + rng.random_range(-0.4..0.4));
                let mut fd = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let (mut wp, mut wm) = (w.clone(), w.clone());
                        wp[(i, j)] += h;
                        wm[(i, j)] -= h;
                        fd[(i, j)] = (log_likelihood(&wp, &x, &prior).unwrap()
                            - log_likelihood(&wm, &x, &prior).unwrap())
                            / (2.0 * h);
                    }
                }
                let expected = &fd * w.transpose() * &w;
                let got = natural_gradient(&w, &x, &prior).unwrap();
                let cos = got.dot(&expected) / (got.norm() * expected.norm());
                worst = worst.min(cos);
                checks += 1;
            }
        }
    }
    verdict(
        2,
        "natural gradient vs finite differences",
        worst > 0.99,
        format!("{checks} random W, worst cosine {worst:.8}"),
    )
}

// ---------- 3: STFT oracle ----------

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut dft_err, mut parseval_err) = (0.0f64, 0.0f64);
    for &n in &[8usize, 16, 32, 64] {
        for window in [WindowKind::Rectangular, WindowKind::Hann, WindowKind::Hamming] {
            let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cfg = StftConfig::new(n).with_window(window).with_hop((n / 3).max(1));
            let s = stft(&x, 100.0, &cfg).unwrap();
            let w: Vec<f64> = (0..n)
                .map(|i| {
                    let c = (2.0 * PI * i as f64 / n as f64).cos();
                    match window {
                        WindowKind::Rectangular => 1.0,
                        WindowKind::Hann => 0.5 - 0.5 * c,
                        WindowKind::Hamming => 0.54 - 0.46 * c,
                    }
                })
                .collect();
            for f in 0..s.frame_count() {
                let frame: Vec<f64> = (0..n).map(|i| x[f * cfg.hop + i] * w[i]).collect();
                let mut one_sided = 0.0;
                for k in 0..=n / 2 {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (t, v) in frame.iter().enumerate() {
                        let a = -2.0 * PI * (k * t) as f64 / n as f64;
                        re += v * a.cos();
                        im += v * a.sin();
                    }
                    let (m, p) = (s.magnitudes[f][k], s.phases[f][k]);
                    dft_err = dft_err.max((m * p.cos() - re).abs()).max((m * p.sin() - im).abs());
                    let weight = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
                    one_sided += weight * m * m;
                }
                let time_energy: f64 = frame.iter().map(|v| v * v).sum();
                parseval_err = parseval_err.max((one_sided / n as f64 - time_energy).abs() / time_energy);
            }
        }
    }
    verdict(
        3,
        "STFT oracle equivalence",
        dft_err < 1e-9 && parseval_err < 1e-6,
        format!("max |STFT − DFT| {dft_err:.2e}, max Parseval rel. error {parseval_err:.2e}"),
    )
}

// ---------- 4: multirate ----------

#[allow(clippy::needless_range_loop)]
fn criterion_4() -> Verdict {
    let len = 1 << 14;
    let mut worst_rejection = f64::INFINITY;
    let one = |v: Vec<f64>| MultiChannelRecord::from_samples(1.0, vec![v]).unwrap();

    for m in [2usize, 3, 5] {
        let guard = design_lowpass(0.5 / m as f64, DEFAULT_ATTENUATION_DB).unwrap().len();
        let edge = 0.5 / m as f64;
        for i in 0..12 {
            let f = edge + (0.5 - edge) * (i as f64 + 0.37) / 12.0;
            let x: Vec<f64> = (0..len).map(|n| (2.0 * PI * f * n as f64).cos()).collect();
            let y = decimate(&one(x), m).unwrap();
            let alias = {
                let r = (f * m as f64).rem_euclid(1.0);
                r.min(1.0 - r)
            };
            let core = &y.samples(0)[guard..y.len() - guard];
            let amp = tone_amplitude(core, alias);
            worst_rejection = worst_rejection.min(-20.0 * amp.log10());
        }
    }
    for l in [2usize, 3, 4] {
        let guard = 2 * design_lowpass(0.5 / l as f64, DEFAULT_ATTENUATION_DB).unwrap().len();
        for i in 0..6 {
            let f = 0.4 * (i as f64 + 0.41) / 6.0;
            let x: Vec<f64> = (0..len / l).map(|n| (2.0 * PI * f * n as f64).cos()).collect();
            let y = interpolate(&one(x), l).unwrap();
            let core = &y.samples(0)[guard..y.len() - guard];
            let wanted = tone_amplitude(core, f / l as f64);
            for k in 1..l {
                for image in [(k as f64 - f) / l as f64, (k as f64 + f) / l as f64] {
                    if image < 0.5 {
                        let amp = tone_amplitude(core, image) / wanted;
                        worst_rejection = worst_rejection.min(-20.0 * amp.log10());
                    }
                }
            }
        }
    }

    let mut worst_rms = 0.0f64;
    for m in [2usize, 4, 5] {
        let passband = 0.8 * 0.5 / m as f64;
        let tones = [(0.13, 1.0, 0.3), (0.47, 0.6, 1.1), (0.81, 0.4, 2.0)];
        let x: Vec<f64> = (0..len)
            .map(|n| {
                tones
                    .iter()
                    .map(|&(r, a, p)| a * (2.0 * PI * r * passband * n as f64 + p).sin())
                    .sum()
            })
            .collect();
        let back = interpolate(&decimate(&one(x.clone()), m).unwrap(), m).unwrap();
        let guard = 4 * design_lowpass(0.5 / m as f64, DEFAULT_ATTENUATION_DB).unwrap().len();
        let n = back.len().min(x.len());
        let (mut err, mut sig) = (0.0, 0.0);
        for t in guard..n - guard {
            err += (back.samples(0)[t] - x[t]).powi(2);
            sig += x[t] * x[t];
        }
        worst_rms = worst_rms.max((err / sig).sqrt());
    }
    verdict(
        4,
        "multirate alias suppression",
        worst_rejection >= 59.0 && worst_rms < 0.01,
        format!(
            "worst alias/image rejection {worst_rejection:.1} dB, worst round-trip RMS error {:.3}%",
            100.0 * worst_rms
        ),
    )
}

// ---------- 5, 6: detection suites ----------

fn criterion_5(analyzer: &Analyzer, suite: &SuiteConfig) -> Verdict {
    let classes = default_fault_classes();
    let seeds: Vec<u64> = (0..20).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for regime in noise_regimes() {
        let scenarios = single_fault_suite(&classes, &[regime], &seeds, suite);
        let outcomes = run_suite(analyzer, &scenarios, suite).unwrap();
        let faulted: Vec<_> = outcomes.iter().filter(|o| !o.truth.is_empty()).cloned().collect();
        let rate = ModeSummary::from_outcomes(Mode::Hybrid, &faulted).detection_rate;
        let healthy_alarms: usize = outcomes
            .iter()
            .filter(|o| o.truth.is_empty())
            .map(|o| o.false_positive_windows + o.false_alarm_events)
            .sum();
        pass &= rate >= 0.95 && healthy_alarms == 0;
        parts.push(format!(
            "{}: detection {:.1}%, healthy false alarms {healthy_alarms}",
            regime.regime_name(),
            100.0 * rate
        ));
    }
    verdict(5, "single-fault detection suite", pass, parts.join("; "))
}

fn criterion_6(analyzer: &Analyzer, suite: &SuiteConfig) -> Verdict {
    let classes = default_fault_classes();
    let mut scenarios = Vec::new();
    for regime in noise_regimes() {
        for pair in fault_pairs(&classes) {
            for seed in 0..20 {
                scenarios.push(Scenario::new(&pair, regime, seed, suite));
            }
        }
    }
    assert!(analyzer.cfg.max_labels == 2);
    let outcomes = run_suite(analyzer, &scenarios, suite).unwrap();
    let s = ModeSummary::from_outcomes(Mode::Hybrid, &outcomes);
    verdict(
        6,
        "two simultaneous faults",
        s.detection_rate >= 0.90,
        format!(
            "both labels in {}/{} post-onset windows ({:.1}%) over {} records",
            s.detected_windows,
            s.post_onset_windows,
            100.0 * s.detection_rate,
            s.scenarios
        ),
    )
}

// ---------- 7: latency ----------

fn criterion_7(library: &SignatureLibrary) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let lib_path = dir.path().join("library.json");
    std::fs::write(&lib_path, library.to_json()).unwrap();
    let op = OperatingPoint::default();
    let fs = 50_000.0;
    let noise = NoiseKind::Gaussian { sigma: 1.0 }.at_snr_db(op.healthy_power(), 10.0, fs);
    let unit = DriveScenario::new(op, vec![], noise, fs, 2.0, 7)
        .with_pressure(true)
        .generate()
        .unwrap();
    assert_eq!((unit.channel_count(), unit.len()), (4, 100_000));
    let cfg = PipelineConfig {
        library_path: Some(lib_path),
        ..PipelineConfig::default()
    };
    let b = run_bench(&cfg, &unit, 5).unwrap();
    let outcome = if b.median_s <= 2.0 {
        Outcome::Pass
    } else if b.median_s <= 4.0 {
        Outcome::SoftFail
    } else {
        Outcome::Fail
    };
    Verdict {
        id: 7,
        name: "one-unit latency",
        outcome,
        detail: format!(
            "median {:.3} s over {} runs (4 ch, 50 kHz, 2 s, decimation {})",
            b.median_s, b.repetitions, b.decimation
        ),
    }
}

// ---------- 8: alarm semantics ----------

fn criterion_8(analyzer: &Analyzer) -> Verdict {
    let op = OperatingPoint::default();
    let classes = default_fault_classes();
    let sideband = classes.iter().find(|c| c.label == "sideband").unwrap().fault;
    let noise = NoiseKind::Gaussian { sigma: 1.0 }.at_snr_db(op.healthy_power(), 10.0, 5000.0);
    let r = DriveScenario::new(op, vec![sideband], noise, 5000.0, 40.0, 8)
        .with_onset(10.0, Some(24.0))
        .with_pressure(true)
        .generate()
        .unwrap();
    let events = analyzer.analyze(&r).unwrap().events;
    let sequence: Vec<Transition> = events
        .iter()
        .map(|e| e.transition)
        .filter(|t| *t != Transition::Escalated)
        .collect();
    let scripted_ok = sequence == [Transition::Raised, Transition::ReturnedToNormal];

    let cfg = AlarmConfig::default();
    let raised = |scores: &[f64]| {
        let frames: Vec<ClassifiedFrame> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| ClassifiedFrame {
                time_s: i as f64,
                labels: if s > 0.0 {
                    vec![("sideband".to_string(), s)]
                } else {
                    vec![]
                },
            })
            .collect();
        run_monitor(&frames, &cfg)
            .unwrap()
            .iter()
            .filter(|e| e.transition == Transition::Raised)
            .count()
    };
    let across: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 0.95 } else { 0.0 }).collect();
    let inside: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 0.7 } else { 0.4 }).collect();
    let (ra, ri) = (raised(&across), raised(&inside));
    verdict(
        8,
        "alarm semantics",
        scripted_ok && ra <= 1 && ri <= 1,
        format!(
            "scripted run transitions {:?}; chattering Raised counts {ra} (0.95/0.0) and {ri} (0.7/0.4)",
            events.iter().map(|e| (e.time_s, e.transition)).collect::<Vec<_>>()
        ),
    )
}

// ---------- 9: mode ordering ----------

fn criterion_9(suite: &SuiteConfig) -> Verdict {
    let classes = default_fault_classes();
    let scenarios = valve_noise_suite(&classes, suite);
    let rows = run_compare(
        &PipelineConfig::default(),
        &[Mode::StftOnly, Mode::FusionOnly, Mode::Hybrid],
        &scenarios,
        &classes,
        suite,
    )
    .unwrap();
    let [stft_only, fusion_only, hybrid] = [&rows[0], &rows[1], &rows[2]];
    verdict(
        9,
        "hybrid vs single-method ordering",
        hybrid.false_positive_windows <= stft_only.false_positive_windows
            && hybrid.detection_rate >= fusion_only.detection_rate,
        rows.iter()
            .map(|r| {
                format!(
                    "{}: detection {:.1}%, false positives {}",
                    r.mode.name(),
                    100.0 * r.detection_rate,
                    r.false_positive_windows
                )
            })
            .collect::<Vec<_>>()
            .join("; "),
    )
}

#[test]
fn acceptance() {
    let mut verdicts = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4()];

    let suite = SuiteConfig::default();
    let cfg = PipelineConfig::default();
    let library = calibrate_library(&cfg, Mode::Hybrid, &default_fault_classes(), &noise_regimes(), &suite).unwrap();
    let analyzer = Analyzer::new(cfg, Some(library.clone()), Mode::Hybrid).unwrap();

    verdicts.push(criterion_7(&library));
    verdicts.push(criterion_5(&analyzer, &suite));
    verdicts.push(criterion_6(&analyzer, &suite));
    verdicts.push(criterion_8(&analyzer));
    verdicts.push(criterion_9(&suite));
    verdicts.sort_by_key(|v| v.id);

    for v in &verdicts {
        let tag = match v.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::SoftFail => "FAIL (report-only)",
        };
        // Written to the raw handle so the lines survive libtest's capture.
        writeln!(std::io::stderr(), "criterion {} [{tag}] {}: {}", v.id, v.name, v.detail).unwrap();
    }
    let failed: Vec<u8> = verdicts
        .iter()
        .filter(|v| matches!(v.outcome, Outcome::Fail))
        .map(|v| v.id)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
