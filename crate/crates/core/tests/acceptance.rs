//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use neuron_io::geometry::{cosine, CosineTriple, WeightTriple};
use neuron_io::roles::{moments, NullSpace};
use neuron_io::simulator::{prototype_triple, swish, GatedNeuron};
use neuron_io::taxonomy::{classify, classify_model, IoClass, IoLabel, Tau};
use neuron_io::weights::{save_model, ActivationKind, LayerWeights, Matrix, ModelWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

const C1_BUDGET: Duration = Duration::from_millis(1);
const C3_BUDGET: Duration = Duration::from_secs(10);
const C3_MIN_ORTHOGONAL: f64 = 0.999;
const C5_REL_TOL: f64 = 1e-10;
const C6_TOL: f64 = 1e-6;
const C7_COS_TOL: f64 = 1e-12;
const C8_TOL: f64 = 1e-9;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_golden_classification() -> Outcome {
    let reference: [((f64, f64, f64), IoClass); 6] = [
        ((0.5290, 0.5048, 0.7060), IoClass::Enrichment),
        ((0.4764, 0.4119, 0.5982), IoClass::ConditionalEnrichment),
        ((-0.7164, 0.7218, -0.8542), IoClass::Depletion),
        ((0.4988, -0.4992, -0.5775), IoClass::ConditionalDepletion),
        ((-0.4543, 0.5814, -0.4182), IoClass::ProportionalChange),
        ((-0.0272, -0.4057, 0.0669), IoClass::OrthogonalOutput),
    ];
    let start = Instant::now();
    let labels: Vec<IoLabel> = reference
        .iter()
        .map(|&((gi, go, io), _)| classify(&CosineTriple::new(gi, go, io).unwrap(), Tau::DEFAULT))
        .collect();
    let elapsed = start.elapsed();
    let exact = labels
        .iter()
        .zip(&reference)
        .all(|(&l, &(_, class))| l == IoLabel::typical(class));
    check(
        exact && elapsed < C1_BUDGET,
        format!("6/6 exact={exact}, {elapsed:?} (budget {C1_BUDGET:?})"),
    )
}

fn gaussian_f32(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn c2_symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut label_failures = 0;
    for _ in 0..10_000 {
        let d = rng.gen_range(3..=32);
        let t = WeightTriple {
            w_gate: gaussian_f32(&mut rng, d),
            w_in: gaussian_f32(&mut rng, d),
            w_out: gaussian_f32(&mut rng, d),
        };
        let tau = Tau::new(rng.gen_range(0.05..0.95)).unwrap();
        let a = classify(&t.cosines().unwrap(), tau);
        let b = classify(&t.sign_flipped().cosines().unwrap(), tau);
        if a != b {
            label_failures += 1;
        }
    }
    let mut delta_failures = 0;
    for k in 0..1_000 {
        let d = rng.gen_range(2..=64);
        let t = WeightTriple {
            w_gate: gaussian_f32(&mut rng, d),
            w_in: gaussian_f32(&mut rng, d),
            w_out: gaussian_f32(&mut rng, d),
        };
        let kind = if k % 2 == 0 {
            ActivationKind::Swish
        } else {
            ActivationKind::Gelu
        };
        let flipped = GatedNeuron::new(t.sign_flipped(), kind).unwrap();
        let neuron = GatedNeuron::new(t, kind).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let a = neuron.output(&x).unwrap().delta;
        let b = flipped.output(&x).unwrap().delta;
        let bitwise = a
            .iter()
            .zip(&b)
            .all(|(p, q)| p.to_bits() == q.to_bits() || (*p == 0.0 && *q == 0.0));
        if !bitwise {
            delta_failures += 1;
        }
    }
    check(
        label_failures == 0 && delta_failures == 0,
        format!("label failures {label_failures}/10000, delta failures {delta_failures}/1000"),
    )
}

/// Gaussian weights generated in parallel, one ChaCha stream per matrix.
fn large_gaussian_model(n_layers: usize, d_model: usize, d_mlp: usize, seed: u64) -> ModelWeights {
    let matrices: Vec<Matrix> = (0..3 * n_layers)
        .into_par_iter()
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            Matrix::new(d_mlp, d_model, gaussian_f32(&mut rng, d_mlp * d_model)).unwrap()
        })
        .collect();
    let mut it = matrices.into_iter();
    let layers = (0..n_layers)
        .map(|_| LayerWeights::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap()).unwrap())
        .collect();
    ModelWeights::new("gaussian", ActivationKind::Swish, layers, None, None).unwrap()
}

/// Monte Carlo estimate of `P(|cos(u, v)| > tau)` for independent standard
/// normal vectors in `d` dimensions, computed from scratch.
fn monte_carlo_tail(d: usize, tau: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let uv: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let uu: f64 = u.iter().map(|a| a * a).sum();
        let vv: f64 = v.iter().map(|a| a * a).sum();
        if (uv / (uu * vv).sqrt()).abs() > tau {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

fn c3_random_baseline() -> Outcome {
    const D_MODEL: usize = 1024;
    const D_MLP: usize = 4096;
    const SAMPLES: usize = 20_000;
    // orthogonal output requires |c_go| <= tau and |c_io| <= tau, so the
    // expected non-orthogonal share is at most 2 * P(|cos| > tau)
    let p = monte_carlo_tail(D_MODEL, 0.5, SAMPLES, 31);
    // one-sided 95% upper bound on p (rule of three when no hits)
    let p_upper = p + 3.0 / SAMPLES as f64;
    let predicted_floor = 1.0 - 2.0 * p_upper;

    let model = large_gaussian_model(4, D_MODEL, D_MLP, 3);
    let start = Instant::now();
    let table = classify_model(&model, Tau::DEFAULT);
    let elapsed = start.elapsed();
    let orthogonal = table
        .records
        .iter()
        .filter(|r| r.label == IoLabel::typical(IoClass::OrthogonalOutput))
        .count();
    let share = orthogonal as f64 / table.len() as f64;
    check(
        table.len() == 4 * D_MLP && share >= C3_MIN_ORTHOGONAL && share >= predicted_floor && elapsed < C3_BUDGET,
        format!(
            "orthogonal {orthogonal}/{} = {share:.5} (need >= {C3_MIN_ORTHOGONAL}); \
             Monte Carlo P(|cos|>0.5) = {p} over {SAMPLES} pairs, predicted floor {predicted_floor:.5}; \
             classify {elapsed:?} (budget {C3_BUDGET:?})",
            table.len()
        ),
    )
}

fn c4_prototypes() -> Outcome {
    let mut passed = 0;
    let mut total = 0;
    for class in IoClass::ALL {
        for seed in 0..20u64 {
            let d = 3 + (seed as usize * 7) % 61;
            let t = prototype_triple(class, d, seed).unwrap();
            total += 1;
            if classify(&t.cosines().unwrap(), Tau::DEFAULT) == IoLabel::typical(class) {
                passed += 1;
            }
        }
    }
    check(passed == total, format!("{passed}/{total}"))
}

/// Two-pass central moments: population variance, skewness, excess kurtosis.
fn two_pass_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let central = |p: i32| x.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    (m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

fn c5_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for k in 0..1_000 {
        let sigma = rng.gen_range(0.2..1.0);
        let scale = rng.gen_range(1e-3..10.0) * if k % 2 == 0 { 1.0 } else { -1.0 };
        let shift = rng.gen_range(-1.0..1.0);
        let x: Vec<f64> = (0..512)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                shift + scale * (sigma * z).exp()
            })
            .collect();
        let m = moments(&x).unwrap();
        let (var, skew, kurt) = two_pass_moments(&x);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        worst = worst
            .max(rel(m.variance, var))
            .max(rel(m.skew.unwrap(), skew))
            .max(rel(m.excess_kurtosis.unwrap(), kurt));
    }
    check(
        worst <= C5_REL_TOL,
        format!("worst relative error {worst:e} over 1000 profiles of 512 (tol {C5_REL_TOL:e})"),
    )
}

fn c6_null_space() -> Outcome {
    const D_MODEL: usize = 6;
    const D_VOCAB: usize = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut gaussian = |r: usize, c: usize| DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    // unembed = A diag(s) V^T with orthonormal A, V and the two smallest
    // singular values exactly zero
    let a = gaussian(D_VOCAB, D_MODEL).qr().q();
    let v = gaussian(D_MODEL, D_MODEL).qr().q();
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 4.0, 3.0, 2.0, 0.0, 0.0]));
    let u = &a * s * v.transpose();
    let rows: Vec<Vec<f32>> = (0..D_VOCAB)
        .map(|r| (0..D_MODEL).map(|c| u[(r, c)] as f32).collect())
        .collect();
    let unembed = Matrix::from_rows(&rows).unwrap();
    let null = NullSpace::from_unembed(&unembed, 2).unwrap();

    let col = |j: usize| -> Vec<f64> { v.column(j).iter().copied().collect() };
    let inside = col(5);
    let outside = col(0);
    let half: Vec<f64> = col(0)
        .iter()
        .zip(col(4))
        .map(|(x, y)| (x + y) * FRAC_1_SQRT_2)
        .collect();
    let got = [
        null.fraction(&inside).unwrap(),
        null.fraction(&outside).unwrap(),
        null.fraction(&half).unwrap(),
    ];
    let want = [1.0, 0.0, 0.5f64.sqrt()];
    let err = got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    check(
        err <= C6_TOL,
        format!("fractions {got:?} vs {want:?}, max error {err:e} (tol {C6_TOL:e})"),
    )
}

/// For `w_gate = e1, w_in = e2` the activation at `x` is `swish(x1) * x2`.
fn c7_grid_violations() -> (usize, f64, (f64, f64)) {
    let neuron = GatedNeuron::new(
        WeightTriple {
            w_gate: vec![1.0f32, 0.0],
            w_in: vec![0.0, 1.0],
            w_out: vec![1.0, 1.0],
        },
        ActivationKind::Swish,
    )
    .unwrap();
    let bound = swish(1.0);
    let mut violations = 0;
    let mut worst = (f64::NEG_INFINITY, (0.0, 0.0));
    for i in 0..81 {
        for j in 0..81 {
            let (x1, x2) = (-4.0 + 0.1 * i as f64, -4.0 + 0.1 * j as f64);
            if !(x1 <= -1.0 || x2 <= 0.0) {
                continue;
            }
            let a = neuron.activation(&[x1, x2]).unwrap();
            if a >= bound {
                violations += 1;
            }
            if a > worst.0 {
                worst = (a, (x1, x2));
            }
        }
    }
    (violations, worst.0, worst.1)
}

fn c7_geometry() -> Outcome {
    let a = cosine(&[1.0f32, 0.0], &[1.0f32, 1.0]).unwrap();
    let b = cosine(&[0.0f32, 1.0], &[1.0f32, 1.0]).unwrap();
    let c = cosine(&[1.0f32, 0.0], &[0.0f32, 1.0]).unwrap();
    let cos_ok = (a - FRAC_1_SQRT_2).abs() <= C7_COS_TOL && (b - FRAC_1_SQRT_2).abs() <= C7_COS_TOL && c == 0.0;
    let (violations, worst, at) = c7_grid_violations();
    check(
        cos_ok && violations == 0,
        format!(
            "cosines ({a}, {b}, {c}) ok={cos_ok}; grid violations {violations}/81x81, \
             max activation {worst:.4} at {at:?} vs swish(1) = {:.4}",
            swish(1.0)
        ),
    )
}

fn c8_negative_swish() -> Outcome {
    let s = swish(-1.0);
    let direct = -1.0 / (1.0 + std::f64::consts::E);
    let in_range = s > -0.27 && s < -0.26 && (s - direct).abs() <= C8_TOL;

    // canonical prototype: every vector along e1
    let e1 = vec![1.0f32, 0.0, 0.0];
    let canonical = GatedNeuron::new(
        WeightTriple {
            w_gate: e1.clone(),
            w_in: e1.clone(),
            w_out: e1,
        },
        ActivationKind::Swish,
    )
    .unwrap();
    let out = canonical.output(&[-1.0, 0.0, 0.0]).unwrap();
    let expected = -swish(-1.0);
    let canonical_ok = out.delta[0] > 0.0 && (out.delta[0] - expected).abs() <= C8_TOL && out.delta[1] == 0.0;

    // seeded prototype, probed along minus its own gate direction
    let t = prototype_triple(IoClass::Enrichment, 16, 8).unwrap();
    let x: Vec<f64> = t.w_gate.iter().map(|&w| -(w as f64)).collect();
    let proto = GatedNeuron::new(t.clone(), ActivationKind::Swish).unwrap();
    let delta = proto.output(&x).unwrap().delta;
    let coeff = delta.iter().zip(&t.w_out).map(|(d, &w)| d * w as f64).sum::<f64>()
        / t.w_out.iter().map(|&w| (w as f64).powi(2)).sum::<f64>();
    let g: f64 = t.w_gate.iter().zip(&x).map(|(&w, v)| w as f64 * v).sum();
    let i: f64 = t.w_in.iter().zip(&x).map(|(&w, v)| w as f64 * v).sum();
    let direct_coeff = g / (1.0 + (-g).exp()) * i;
    let proto_ok = coeff > 0.0 && (coeff - direct_coeff).abs() <= C8_TOL;

    check(
        in_range && canonical_ok && proto_ok,
        format!(
            "swish(-1) = {s:.10}; canonical delta coefficient {:.10}; seeded prototype coefficient {coeff:.10} \
             vs direct {direct_coeff:.10}",
            out.delta[0]
        ),
    )
}

fn cli(dir: &Path, args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_neuron-io"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn c9_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    save_model(&common::prototype_model(3, 5, 16, 0), &dir.join("model")).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let classes = format!("classes-{run}.csv");
        let report = format!("report-{run}.json");
        let scatter = format!("scatter-{run}.svg");
        let bars = format!("bars-{run}.svg");
        cli(dir, &["classify", "--model-dir", "model", "--out", &classes])?;
        cli(dir, &["stats", "--classes", &classes, "--out", &report])?;
        cli(
            dir,
            &[
                "plot",
                "--kind",
                "scatter",
                "--in",
                &classes,
                "--downsample",
                "7",
                "--out",
                &scatter,
            ],
        )?;
        cli(dir, &["plot", "--kind", "bars", "--in", &report, "--out", &bars])?;
        let read = |name: &str| std::fs::read(dir.join(name)).unwrap();
        files.push([
            read(&classes),
            read(&report),
            read(&scatter),
            read(&format!("scatter-{run}.csv")),
            read(&bars),
            read(&format!("bars-{run}.csv")),
        ]);
    }
    let identical = files[0] == files[1];
    check(
        identical,
        format!("6 artifacts byte-identical across two runs: {identical}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 golden classification", c1_golden_classification),
        ("2 sign-flip symmetry", c2_symmetry),
        ("3 random Gaussian baseline", c3_random_baseline),
        ("4 prototype round trip", c4_prototypes),
        ("5 moment oracle", c5_moments),
        ("6 null-space projection", c6_null_space),
        ("7 quadrant geometry", c7_geometry),
        ("8 negative swish regime", c8_negative_swish),
        ("9 determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{took:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{took:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
