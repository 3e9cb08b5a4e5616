//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use padrec::audio::{synth_sine, SampledSignal};
use padrec::listing::{
    intensity_listing, pitch_listing, IntensityConfig, Measurement, PitchConfig,
};
use padrec::pad::{
    build_phone_stats, build_speaker_model, to_pad_csv, PadVector, Param, SpeakerModel,
};
use padrec::pipeline::{extract_pads, ExtractConfig};
use padrec::recognition::{identify, verify, Gate, MatchPolicy, PadContour, Verdict};
use padrec::segmentation::{
    parse_label_csv, parse_textgrid, to_label_csv, to_textgrid, to_textgrid_short, PhoneSegment,
    PhoneSegmentation,
};
use padrec::synth::{
    synth_corpus, synth_utterance, Jitter, PhoneSpec, SyntheticSpeakerSpec, SyntheticUtterance,
};

const BIN: &str = env!("CARGO_BIN_EXE_padrec");

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(actual: f64, expected: f64, tol: f64) -> bool {
    (actual - expected).abs() <= tol
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

fn pad(p: f64, a: f64, d: f64) -> PadVector {
    PadVector::new(p, a, d).expect("valid PAD vector")
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn padrec")
}

// ---------------------------------------------------------------------------

fn ac1_reference_statistics() -> Outcome {
    let rows = [
        (0.178, 52.787, 110.239),
        (0.170, 47.400, 113.772),
        (0.128, 50.657, 116.262),
        (0.205, 52.001, 127.806),
        (0.124, 50.629, 118.914),
        (0.159, 50.618, 110.233),
    ];
    let instances: Vec<_> = rows.iter().map(|&(d, a, p)| pad(p, a, d)).collect();
    let stats = build_phone_stats("a", &instances).map_err(|e| e.to_string())?;
    let m = stats.mean();
    let (v, sd, pct) = (stats.variance(), stats.sd(), stats.pct_deviation());
    let checks = [
        ("mean d", m.duration(), 0.161, 0.001),
        ("mean a", m.amplitude(), 50.682, 0.001),
        ("mean p", m.pitch(), 116.205, 0.001),
        ("var d", v.d, 0.000795, 0.002),
        ("var a", v.a, 2.825, 0.002),
        ("var p", v.p, 36.518, 0.002),
        ("sd d", sd.d, 0.0282, 0.001),
        ("sd a", sd.a, 1.681, 0.001),
        ("sd p", sd.p, 6.043, 0.001),
        ("%dev d", pct.d, 17.554, 0.02),
        ("%dev a", pct.a, 3.316, 0.02),
        ("%dev p", pct.p, 5.200, 0.02),
    ];
    for (name, actual, expected, tol) in checks {
        ensure(within(actual, expected, tol), || {
            format!("{name} = {actual} not within {expected} ± {tol}")
        })?;
    }
    Ok(format!(
        "mean ({:.4}, {:.3}, {:.3}), %dev ({:.3}, {:.3}, {:.3})",
        m.duration(),
        m.amplitude(),
        m.pitch(),
        pct.d,
        pct.a,
        pct.p
    ))
}

fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

fn ac2_statistics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let n = rng.gen_range(1..=50);
        let instances: Vec<_> = (0..n)
            .map(|_| {
                pad(
                    rng.gen_range(60.0..400.0),
                    rng.gen_range(30.0..90.0),
                    rng.gen_range(0.02..0.5),
                )
            })
            .collect();
        let stats = build_phone_stats("x", &instances).map_err(|e| e.to_string())?;
        for param in Param::ALL {
            let xs: Vec<f64> = instances.iter().map(|v| v.get(param)).collect();
            let (mean, var) = two_pass(&xs);
            let (got_mean, got_var) = (stats.mean().get(param), stats.variance().get(param));
            ensure(
                rel_close(got_mean, mean, 1e-12) && rel_close(got_var, var, 1e-12),
                || {
                    format!("trial {trial} n={n} {param}: mean {got_mean} vs {mean}, var {got_var} vs {var}")
                },
            )?;
            if mean != 0.0 {
                worst = worst.max((got_mean - mean).abs() / mean.abs());
            }
            if var != 0.0 {
                worst = worst.max((got_var - var).abs() / var.abs());
            }
        }
    }
    Ok(format!("1000 multisets, worst relative error {worst:.2e}"))
}

fn ac3_pitch_accuracy() -> Outcome {
    let cfg = PitchConfig::default();
    let mut worst = 0.0f64;
    let mut voiced_total = 0usize;
    for f0 in [80.0, 110.0, 116.262, 127.806, 220.0, 300.0] {
        for amp in [0.1, 0.5, 1.0] {
            let signal = synth_sine(f0, amp, 1.0, 8000).map_err(|e| e.to_string())?;
            let listing = pitch_listing(&signal, &cfg).map_err(|e| e.to_string())?;
            let voiced: Vec<f64> = listing
                .values()
                .iter()
                .filter_map(|m| match m {
                    Measurement::Voiced(v) => Some(*v),
                    _ => None,
                })
                .collect();
            // The window must fit inside the signal, so every voiced frame is interior.
            ensure(voiced.len() * 10 >= listing.len() * 8, || {
                format!(
                    "{f0} Hz amp {amp}: only {}/{} frames voiced",
                    voiced.len(),
                    listing.len()
                )
            })?;
            for v in &voiced {
                worst = worst.max((v - f0).abs());
                ensure((v - f0).abs() <= 1.0, || {
                    format!("{f0} Hz amp {amp}: estimate {v}")
                })?;
            }
            voiced_total += voiced.len();
        }
    }
    let silence = SampledSignal::new(vec![0.0; 8000], 8000).map_err(|e| e.to_string())?;
    let listing = pitch_listing(&silence, &cfg).map_err(|e| e.to_string())?;
    let voiced = listing
        .values()
        .iter()
        .filter(|m| matches!(m, Measurement::Voiced(_)))
        .count();
    ensure(voiced == 0, || {
        format!("silence produced {voiced} voiced frames")
    })?;
    Ok(format!(
        "{voiced_total} voiced frames, worst error {worst:.3} Hz; silence unvoiced"
    ))
}

fn ac4_intensity_linearity() -> Outcome {
    let cfg = IntensityConfig::default();
    let sine = synth_sine(200.0, 0.8, 1.0, 8000).map_err(|e| e.to_string())?;
    let (utterance, _) = synth_utterance(
        &[
            PhoneSpec::new("a", 130.0, 0.9, 0.2, 0.1),
            PhoneSpec::new("r", 170.0, 0.4, 0.15, 0.05),
        ],
        8000,
    )
    .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for signal in [&sine, &utterance] {
        let base = intensity_listing(signal, &cfg).map_err(|e| e.to_string())?;
        for g in [0.5f64, 0.1, 0.25] {
            let expected = 20.0 * g.log10();
            let scaled = intensity_listing(&signal.scaled(g).map_err(|e| e.to_string())?, &cfg)
                .map_err(|e| e.to_string())?;
            for (b, s) in base.values().iter().zip(scaled.values()) {
                if let (Some(b), Some(s)) = (b.value(), s.value()) {
                    let shift = s - b;
                    worst = worst.max((shift - expected).abs());
                    ensure(within(shift, expected, 0.05), || {
                        format!("gain {g}: shift {shift} vs {expected}")
                    })?;
                    compared += 1;
                }
            }
        }
    }
    ensure(compared > 0, || "no defined frames compared".into())?;
    Ok(format!(
        "{compared} frame pairs, worst deviation {worst:.2e} dB (halving = {:.4} dB)",
        20.0 * 0.5f64.log10()
    ))
}

// ---------------------------------------------------------------------------

fn separation_speakers(instances: usize) -> Vec<SyntheticSpeakerSpec> {
    let speaker = |id: &str, phones: [(&str, f64, f64, f64); 3]| SyntheticSpeakerSpec {
        speaker_id: id.into(),
        phones: phones
            .iter()
            .map(|&(l, f0, a, d)| PhoneSpec::new(l, f0, a, d, 0.05))
            .collect(),
        jitter: Jitter::uniform(0.03),
        instances,
    };
    vec![
        speaker(
            "s1",
            [
                ("a", 110.0, 0.30, 0.12),
                ("r", 105.0, 0.25, 0.09),
                ("i", 115.0, 0.35, 0.10),
            ],
        ),
        speaker(
            "s2",
            [
                ("a", 150.0, 0.50, 0.16),
                ("r", 140.0, 0.45, 0.12),
                ("i", 160.0, 0.55, 0.14),
            ],
        ),
        speaker(
            "s3",
            [
                ("a", 200.0, 0.80, 0.21),
                ("r", 190.0, 0.75, 0.16),
                ("i", 215.0, 0.85, 0.19),
            ],
        ),
    ]
}

fn extract(u: &SyntheticUtterance) -> Result<Vec<(String, PadVector)>, String> {
    extract_pads(&u.signal, &u.segmentation, &ExtractConfig::default())
        .map(|x| x.pads)
        .map_err(|e| format!("{}#{}: {e}", u.speaker_id, u.instance))
}

/// Theoretical intra-speaker SD of a uniform jitter of half-width `j`.
fn uniform_sd(base: f64, j: f64) -> f64 {
    base * j / 3f64.sqrt()
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn ac5_separation() -> Outcome {
    let m = 6;
    let speakers = separation_speakers(m);

    // Precondition: per-dimension mean separation of at least 4 SD, from the generator.
    let mut min_ratio = f64::INFINITY;
    for i in 0..speakers.len() {
        for j in i + 1..speakers.len() {
            for (x, y) in speakers[i].phones.iter().zip(&speakers[j].phones) {
                let jit = speakers[i].jitter;
                let pairs = [
                    ((y.f0 - x.f0).abs(), uniform_sd(x.f0.max(y.f0), jit.f0)),
                    (
                        20.0 * (y.amplitude / x.amplitude).log10().abs(),
                        20.0 / 10f64.ln() * jit.amplitude / 3f64.sqrt(),
                    ),
                    (
                        (y.duration - x.duration).abs(),
                        uniform_sd(x.duration.max(y.duration), jit.duration),
                    ),
                ];
                for (sep, sd) in pairs {
                    min_ratio = min_ratio.min(sep / sd);
                }
            }
        }
    }
    ensure(min_ratio >= 4.0, || {
        format!("generator separation only {min_ratio:.2} SD")
    })?;

    let corpus = synth_corpus(&speakers, 55, 8000).map_err(|e| e.to_string())?;
    let mut pads: BTreeMap<String, Vec<Vec<(String, PadVector)>>> = BTreeMap::new();
    for u in &corpus {
        pads.entry(u.speaker_id.clone())
            .or_default()
            .push(extract(u)?);
    }

    // (a) clusters of normalized /a/ points produced by `plot-data`.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut inputs = Vec::new();
    for (id, utts) in &pads {
        let path = dir.path().join(format!("{id}.pads.csv"));
        let all: Vec<_> = utts.iter().flatten().cloned().collect();
        fs::write(&path, to_pad_csv(&all)).map_err(|e| e.to_string())?;
        inputs.push(format!("{id}={}", path.display()));
    }
    let mut args = vec!["plot-data", "--phone", "a"];
    args.extend(inputs.iter().map(String::as_str));
    let out = run_cli(&args);
    ensure(out.status.code() == Some(0), || {
        format!("plot-data failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    let mut clusters: BTreeMap<String, Vec<[f64; 3]>> = BTreeMap::new();
    for line in String::from_utf8_lossy(&out.stdout).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v: Vec<f64> = f[1..].iter().map(|x| x.parse().unwrap()).collect();
        ensure(v.iter().all(|x| *x > 0.0 && *x <= 1.0), || {
            format!("value out of (0, 1]: {line}")
        })?;
        clusters
            .entry(f[0].to_owned())
            .or_default()
            .push([v[0], v[1], v[2]]);
    }
    ensure(
        clusters.len() == 3 && clusters.values().all(|c| c.len() == m),
        || "unexpected cluster sizes".into(),
    )?;
    let centroid = |pts: &[[f64; 3]]| {
        let n = pts.len() as f64;
        [0, 1, 2].map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / n)
    };
    let diameter = |pts: &[[f64; 3]]| {
        pts.iter()
            .flat_map(|a| pts.iter().map(move |b| dist(a, b)))
            .fold(0.0, f64::max)
    };
    let ids: Vec<_> = clusters.keys().cloned().collect();
    let mut min_gap = f64::INFINITY;
    let mut max_diam = 0.0f64;
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let (ci, cj) = (&clusters[&ids[i]], &clusters[&ids[j]]);
            let gap = dist(&centroid(ci), &centroid(cj));
            let diam = diameter(ci).max(diameter(cj));
            ensure(gap > diam, || {
                format!(
                    "{} vs {}: centroid distance {gap} <= diameter {diam}",
                    ids[i], ids[j]
                )
            })?;
            min_gap = min_gap.min(gap);
            max_diam = max_diam.max(diam);
        }
    }

    // (b) leave-one-out closed-set identification.
    let policy = MatchPolicy::default();
    let full: BTreeMap<&str, SpeakerModel> = pads
        .iter()
        .map(|(id, utts)| {
            let model =
                build_speaker_model(id, utts.iter().flatten().map(|(l, v)| (l.as_str(), *v)));
            model.map(|m| (id.as_str(), m))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (mut correct, mut total, mut gated) = (0, 0, 0);
    for (id, utts) in &pads {
        for held in 0..utts.len() {
            let train = utts
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held)
                .flat_map(|(_, u)| u);
            let own = build_speaker_model(id, train.map(|(l, v)| (l.as_str(), *v)))
                .map_err(|e| e.to_string())?;
            let models: Vec<_> = full
                .iter()
                .map(|(other, model)| {
                    if other == id {
                        own.clone()
                    } else {
                        model.clone()
                    }
                })
                .collect();
            let decision = identify(&models, &PadContour::new(utts[held].clone()), &policy)
                .map_err(|e| e.to_string())?;
            total += 1;
            if decision.speaker_id.as_deref() == Some(id.as_str()) {
                correct += 1;
            }
            if decision.verdict == Verdict::Identified {
                gated += 1;
            }
        }
    }
    ensure(correct == total, || {
        format!("leave-one-out accuracy {correct}/{total}")
    })?;
    Ok(format!(
        "min separation {min_ratio:.1} SD; centroid gap {min_gap:.3} > diameter {max_diam:.3}; \
         leave-one-out {correct}/{total} nearest-speaker correct ({gated}/{total} also pass the k=1 gate)"
    ))
}

// ---------------------------------------------------------------------------

fn five_phone_model() -> Result<SpeakerModel, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let bases = [
        ("a", 120.0, 70.0, 0.15),
        ("e", 135.0, 68.0, 0.11),
        ("i", 150.0, 66.0, 0.09),
        ("o", 110.0, 72.0, 0.17),
        ("u", 100.0, 65.0, 0.13),
    ];
    let mut instances = Vec::new();
    for _ in 0..6 {
        for &(label, p, a, d) in &bases {
            let j = |rng: &mut ChaCha8Rng, x: f64| x * (1.0 + rng.gen_range(-0.05..=0.05));
            instances.push((label, pad(j(&mut rng, p), j(&mut rng, a), j(&mut rng, d))));
        }
    }
    build_speaker_model("spk", instances).map_err(|e| e.to_string())
}

fn mean_contour(model: &SpeakerModel) -> Vec<(String, PadVector)> {
    model
        .phones()
        .iter()
        .map(|(l, s)| (l.clone(), *s.mean()))
        .collect()
}

fn ac6_gate_properties() -> Outcome {
    let model = five_phone_model()?;
    let means = mean_contour(&model);
    let ks = [0.01, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0];
    let mut checks = 0;
    for k in ks {
        for gate in [Gate::PerParameter, Gate::Distance, Gate::Both] {
            let policy = MatchPolicy {
                k,
                gate,
                ..MatchPolicy::default()
            };
            let d = verify(&model, &PadContour::new(means.clone()), &policy)
                .map_err(|e| e.to_string())?;
            ensure(d.verdict == Verdict::Genuine && d.distance == 0.0, || {
                format!("own means rejected at k={k}")
            })?;
            checks += 1;
        }
        let policy = MatchPolicy {
            k,
            gate: Gate::PerParameter,
            ..MatchPolicy::default()
        };
        for (idx, (phone, mean)) in means.iter().enumerate() {
            let sd = model.phone(phone).unwrap().sd();
            for param in Param::ALL {
                let (m, s) = (mean.get(param), sd.get(param));
                for (value, expect_pass) in [
                    (m + k * s, true),
                    (m - k * s, true),
                    (m + k * s * 1.001, false),
                    (m - k * s * 1.001, false),
                ] {
                    let mut test = means.clone();
                    test[idx].1 = mean.with(param, value).map_err(|e| e.to_string())?;
                    let d = verify(&model, &PadContour::new(test), &policy)
                        .map_err(|e| e.to_string())?;
                    ensure(
                        d.gate.per_parameter_pass == expect_pass && d.accepted() == expect_pass,
                        || {
                            format!(
                                "k={k} /{phone}/ {param} = {value}: pass {} expected {expect_pass}",
                                d.gate.per_parameter_pass
                            )
                        },
                    )?;
                    checks += 1;
                }
            }
        }
    }
    Ok(format!(
        "{checks} gate checks over 5 phones x 3 parameters x {} multipliers",
        ks.len()
    ))
}

fn random_segmentation(rng: &mut ChaCha8Rng) -> Result<PhoneSegmentation, String> {
    let labels = ["a", "r", "s\"h", "ü", "k l"];
    let mut t = rng.gen_range(0.0..0.3);
    let mut segs = Vec::new();
    for _ in 0..rng.gen_range(1..8) {
        let end = t + rng.gen_range(0.01..0.4);
        segs.push(
            PhoneSegment::new(labels[rng.gen_range(0..labels.len())], t, end)
                .map_err(|e| e.to_string())?,
        );
        t = if rng.gen_bool(0.5) {
            end
        } else {
            end + rng.gen_range(0.001..0.2)
        };
    }
    PhoneSegmentation::new(segs, "phones").map_err(|e| e.to_string())
}

fn ac7_persistence() -> Outcome {
    let model = five_phone_model()?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("spk.json");
    fs::write(&path, model.to_json()).map_err(|e| e.to_string())?;
    let loaded = SpeakerModel::from_json(&fs::read_to_string(&path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure(loaded.to_json() == model.to_json(), || {
        "model JSON changed on reload".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let means = mean_contour(&model);
    let mut decisions = 0;
    for _ in 0..50 {
        let test: Vec<_> = means
            .iter()
            .map(|(l, v)| {
                let j = |rng: &mut ChaCha8Rng, x: f64| x * (1.0 + rng.gen_range(-0.1..0.1));
                (
                    l.clone(),
                    pad(
                        j(&mut rng, v.pitch()),
                        j(&mut rng, v.amplitude()),
                        j(&mut rng, v.duration()),
                    ),
                )
            })
            .collect();
        let contour = PadContour::new(test);
        let policy = MatchPolicy {
            k: rng.gen_range(0.5..3.0),
            ..MatchPolicy::default()
        };
        let a = verify(&model, &contour, &policy)
            .map_err(|e| e.to_string())?
            .to_json();
        let b = verify(&loaded, &contour, &policy)
            .map_err(|e| e.to_string())?
            .to_json();
        ensure(a == b, || {
            "decision JSON differs between in-memory and reloaded model".into()
        })?;
        decisions += 1;
    }

    let mut grids = 0;
    for _ in 0..200 {
        let seg = random_segmentation(&mut rng)?;
        let xmax = seg.end() + rng.gen_range(0.0..0.5);
        let long =
            parse_textgrid(&to_textgrid(&seg, xmax), Some("phones")).map_err(|e| e.to_string())?;
        let short =
            parse_textgrid(&to_textgrid_short(&seg, xmax), None).map_err(|e| e.to_string())?;
        let csv = parse_label_csv(&to_label_csv(&seg)).map_err(|e| e.to_string())?;
        ensure(long == seg && short.segments() == seg.segments(), || {
            format!("TextGrid round-trip changed {seg:?}")
        })?;
        ensure(csv.segments() == seg.segments(), || {
            format!("label CSV round-trip changed {seg:?}")
        })?;
        grids += 1;
    }
    Ok(format!(
        "{decisions} identical decisions after reload; {grids} segmentations round-tripped"
    ))
}

// ---------------------------------------------------------------------------

const E2E_SPEC: &str = "\
speaker_id,phone,f0_hz,amp_linear,duration_s,gap_s,jitter_f0,jitter_amp,jitter_dur,instances
s1,a,110,0.30,0.12,0.05,0.03,0.03,0.03,6
s1,r,105,0.25,0.09,0.05,0.03,0.03,0.03,6
s1,i,115,0.35,0.10,0.05,0.03,0.03,0.03,6
s2,a,150,0.50,0.16,0.05,0.03,0.03,0.03,6
s2,r,140,0.45,0.12,0.05,0.03,0.03,0.03,6
s2,i,160,0.55,0.14,0.05,0.03,0.03,0.03,6
s3,a,200,0.80,0.21,0.05,0.03,0.03,0.03,6
s3,r,190,0.75,0.16,0.05,0.03,0.03,0.03,6
s3,i,215,0.85,0.19,0.05,0.03,0.03,0.03,6
";

struct PipelineRun {
    models: BTreeMap<String, Vec<u8>>,
    decisions: Vec<(String, String, Vec<u8>)>,
}

fn cli_ok(args: &[&str], allowed: &[i32]) -> Result<Output, String> {
    let out = run_cli(args);
    let code = out.status.code().unwrap_or(-1);
    ensure(allowed.contains(&code), || {
        format!(
            "padrec {} exited {code}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(out)
}

fn run_pipeline(root: &Path) -> Result<PipelineRun, String> {
    let spec = root.join("corpus.csv");
    fs::write(&spec, E2E_SPEC).map_err(|e| e.to_string())?;
    let corpus = root.join("corpus");
    let s = |p: &Path| p.display().to_string();
    cli_ok(
        &[
            "synth",
            "--spec",
            &s(&spec),
            "--seed",
            "2024",
            "-o",
            &s(&corpus),
        ],
        &[0],
    )?;

    let mut by_speaker: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let manifest = fs::read_to_string(corpus.join("manifest.csv")).map_err(|e| e.to_string())?;
    for line in manifest.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let stem = f[6].trim_end_matches(".wav").to_owned();
        let list = by_speaker.entry(f[0].to_owned()).or_default();
        if !list.contains(&stem) {
            list.push(stem);
        }
    }
    for stems in by_speaker.values() {
        for stem in stems {
            let base = corpus.join(stem);
            cli_ok(
                &[
                    "extract",
                    "--wav",
                    &format!("{}.wav", s(&base)),
                    "--labels",
                    &format!("{}.labels.csv", s(&base)),
                    "-o",
                    &format!("{}.pads.csv", s(&base)),
                ],
                &[0],
            )?;
        }
    }

    let models_dir = root.join("models");
    fs::create_dir_all(&models_dir).map_err(|e| e.to_string())?;
    let mut models = BTreeMap::new();
    for (id, stems) in &by_speaker {
        // Hold out the last instance; pass the rest in reverse order.
        let train: Vec<String> = stems[..stems.len() - 1]
            .iter()
            .rev()
            .map(|st| format!("{}.pads.csv", s(&corpus.join(st))))
            .collect();
        let out = models_dir.join(format!("{id}.json"));
        let mut args = vec!["enroll", "--speaker", id.as_str()];
        args.extend(train.iter().map(String::as_str));
        let out_s = s(&out);
        args.extend(["-o", out_s.as_str()]);
        cli_ok(&args, &[0])?;
        models.insert(id.clone(), fs::read(&out).map_err(|e| e.to_string())?);
    }

    let mut decisions = Vec::new();
    for (id, stems) in &by_speaker {
        for stem in stems {
            let test = format!("{}.pads.csv", s(&corpus.join(stem)));
            let out = cli_ok(
                &["identify", "--models", &s(&models_dir), "--test", &test],
                &[0, 1],
            )?;
            decisions.push((id.clone(), stem.clone(), out.stdout));
        }
    }
    Ok(PipelineRun { models, decisions })
}

fn ac8_end_to_end() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    let mut held_out = 0;
    for (i, (id, stem, json)) in first.decisions.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_slice(json).map_err(|e| e.to_string())?;
        let got = v["speaker_id"].as_str().unwrap_or("");
        ensure(got == id, || {
            format!("{stem}: identified as {got:?}, expected {id}")
        })?;
        if stem.ends_with("_005") {
            held_out += 1;
        }
        ensure(second.decisions[i].2 == *json, || {
            format!("{stem}: decision differs between runs")
        })?;
    }
    ensure(first.models == second.models, || {
        "model files differ between runs".into()
    })?;
    Ok(format!(
        "{} utterances ({held_out} held out) identified correctly; {} models and all decisions reproduced",
        first.decisions.len(),
        first.models.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("AC1", "reference /a/ statistics", ac1_reference_statistics),
        (
            "AC2",
            "statistics match two-pass oracle",
            ac2_statistics_oracle,
        ),
        ("AC3", "pitch accuracy", ac3_pitch_accuracy),
        ("AC4", "intensity linearity", ac4_intensity_linearity),
        ("AC5", "three-speaker separation", ac5_separation),
        ("AC6", "verification gate properties", ac6_gate_properties),
        ("AC7", "persistence round-trip", ac7_persistence),
        ("AC8", "end-to-end closure", ac8_end_to_end),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {id} {name}: {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {detail} ({secs:.2}s)");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
