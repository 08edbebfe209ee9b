//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use whff::analysis::{flop_cost, qoi_error, DeformationSteps, Preset};
use whff::codec::{codec_metrics, compress, decompress, CodecMode};
use whff::matrix::{Csr, Dense, Diagonal};
use whff::model::{
    build_scan_schedule, generate_model, synthetic_field_operator, Axis, CGenerator, ModelSpec, ScanKind,
    ScheduleOverrides,
};
use whff::mpgemv::{gemv, gemv_flops, gemv_oracle, reduction_bits_lost, GemvRequest, PrecisionPolicy};
use whff::pipeline::{pipeline_latency, run_scan, PipelineConfig, Stage, Stall};
use whff::thermal::{thermal_step, HeatLoad};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_flop_cost() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for preset in Preset::ALL {
        let f = flop_cost(&preset.params(), DeformationSteps::LightSteps).unwrap();
        let printed = flop_cost(&preset.params(), DeformationSteps::AsPrinted).unwrap();
        let t = preset.targets();
        let d = rel(f.gflops_required, t.total_gflops);
        pass &= d <= 0.02;
        parts.push(format!(
            "{} {:.1} vs {:.1} ({:+.2}%, as-printed {:.1})",
            preset.name(),
            f.gflops_required,
            t.total_gflops,
            100.0 * (f.gflops_required - t.total_gflops) / t.total_gflops,
            printed.gflops_required
        ));
        if preset == Preset::FullSlow {
            let da = rel(f.gflops_per_axis, t.per_axis_gflops);
            pass &= da <= 0.02;
            parts.push(format!("slow per-axis {:.1} vs {:.1}", f.gflops_per_axis, t.per_axis_gflops));
        } else {
            parts.push(format!("fast per-axis {:.1} (reference {:.1}, informational)", f.gflops_per_axis, t.per_axis_gflops));
        }
    }
    outcome(pass, parts.join("; "))
}

fn c2_latency_breakdown() -> Outcome {
    let (tc, tt, td, r) = (16.84, 83.16, 28.12, 10.0);
    let plain = pipeline_latency(tt, tc, td, r, false).unwrap();
    let packed = pipeline_latency(tt, tc, td, r, true).unwrap();
    let reduction = 100.0 * (plain - packed) / plain;
    outcome(
        (reduction - 46.7).abs() <= 0.5,
        format!("latency {plain:.2} -> {packed:.3}, reduction {reduction:.2}%"),
    )
}

fn l2_rel(got: &[f32], oracle: &[f64]) -> f64 {
    let (mut d2, mut o2) = (0.0, 0.0);
    for (&g, &o) in got.iter().zip(oracle) {
        d2 += (g as f64 - o).powi(2);
        o2 += o * o;
    }
    (d2 / o2).sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c3_mixed_precision() -> Outcome {
    const INSTANCES: usize = 100;
    let (rows, cols) = (378, 65536);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut data = vec![0.0f32; rows * cols];
    let mut vector = vec![0.0f32; cols];
    let (mut mixed, mut single) = (Vec::new(), Vec::new());
    for _ in 0..INSTANCES {
        data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0f32..=1.0));
        vector.iter_mut().for_each(|v| *v = rng.gen_range(-1.0f32..=1.0));
        let m = whff::matrix::DenseView::new(rows, cols, &data).unwrap();
        let oracle = gemv_oracle(m, &vector).unwrap();
        let req = GemvRequest::mixed(m, &vector);
        mixed.push(l2_rel(&gemv(&req).unwrap(), &oracle));
        single.push(l2_rel(&gemv(&req.with_policy(PrecisionPolicy::Single)).unwrap(), &oracle));
    }
    let (mm, ms) = (median(mixed), median(single));
    let bits = reduction_bits_lost(256_000);
    outcome(
        mm <= 1e-7 && mm < ms && bits == 17,
        format!("{INSTANCES} instances {rows}x{cols}: median rel err mixed {mm:.3e}, single {ms:.3e}; bits lost at 256000 = {bits}"),
    )
}

fn synthetic_c(generator: CGenerator, seed: u64) -> Dense {
    synthetic_field_operator(1024, generator, seed).unwrap()
}

fn unit_noise(rows: usize, cols: usize, seed: u64) -> Dense {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dense::from_fn(rows, cols, |_, _| rng.gen_range(-1.0f32..=1.0))
}

fn c4_codec(smooth: &Dense) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let noise_c = synthetic_c(CGenerator::Noise, 41);
    let noise = unit_noise(1024, 1024, 42);
    let odd = unit_noise(37, 53, 43);

    for (name, a) in [("smooth", smooth), ("noise-c", &noise_c), ("noise", &noise)] {
        let s = compress(a.view(), CodecMode::FixedRate { bpv: 8 }).unwrap();
        let ok = s.ratio() == 4.0 && s.payload_bits() == 8 * 1024 * 1024;
        pass &= ok;
        if name == "smooth" {
            let m = codec_metrics(a.view(), decompress(&s).unwrap().view(), &s).unwrap();
            pass &= m.psnr >= 80.0;
            parts.push(format!("rate8 smooth ratio {} psnr {:.1} dB", s.ratio(), m.psnr));
        } else if !ok {
            parts.push(format!("rate8 {name} ratio {}", s.ratio()));
        }
    }
    let s = compress(odd.view(), CodecMode::FixedRate { bpv: 8 }).unwrap();
    pass &= s.payload_bits() == 8 * 40 * 56;
    parts.push(format!("rate8 37x53 payload {} bits = 8 x padded", s.payload_bits()));

    for tau in [1e-6, 1e-9, 1e-12] {
        for (name, a) in [("smooth", smooth), ("noise-c", &noise_c), ("noise", &noise)] {
            let s = compress(a.view(), CodecMode::FixedAccuracy { tolerance: tau }).unwrap();
            let m = codec_metrics(a.view(), decompress(&s).unwrap().view(), &s).unwrap();
            pass &= m.max_pointwise_error <= tau;
            if name == "smooth" && tau == 1e-12 {
                pass &= s.ratio() >= 4.0;
                parts.push(format!(
                    "acc1e-12 smooth ratio {:.2} nrmse {:.2e} max err {:.2e}",
                    s.ratio(),
                    m.nrmse,
                    m.max_pointwise_error
                ));
            } else if m.max_pointwise_error > tau {
                parts.push(format!("acc{tau:e} {name} max err {:.3e}", m.max_pointwise_error));
            }
        }
    }
    let s = compress(noise.view(), CodecMode::FixedAccuracy { tolerance: 0.0 }).unwrap();
    let exact = decompress(&s).unwrap().data().iter().zip(noise.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    pass &= exact;
    parts.push(format!("tau 0 bit-exact {exact}"));
    outcome(pass, parts.join("; "))
}

fn c5_qoi() -> Outcome {
    let spec = ModelSpec::new(40, 50, 512, 768, 16, 7, 5).with_fields(3);
    let model = generate_model(&spec).unwrap();
    let slits = model.slit_windows(0).unwrap().len();
    let sched = build_scan_schedule(ScanKind::Fast, 3, slits, ScheduleOverrides::default()).unwrap();
    let load = HeatLoad::synthesize(&model, 1.0, -0.01).unwrap();
    let plain = run_scan(&model, &sched, &load, &PipelineConfig::default()).unwrap();
    let cfg = PipelineConfig::default().with_compression(CodecMode::FixedAccuracy { tolerance: 1e-12 });
    let packed = run_scan(&model, &sched, &load, &cfg).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for axis in Axis::ALL {
        let q = qoi_error(&plain.axis_vector(axis), &packed.axis_vector(axis)).unwrap();
        pass &= q.l2 <= 0.01;
        parts.push(format!(
            "{} l2 {:.3e} max-rel {:.3e}{}",
            axis.name(),
            q.l2,
            q.max_relative,
            if q.l2 <= 1e-3 { " (within 0.1%)" } else { "" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c6_counts() -> Outcome {
    let spec = ModelSpec::new(12, 12, 48, 96, 8, 7, 6).with_fields(4);
    let model = generate_model(&spec).unwrap();
    let slits = model.slit_windows(0).unwrap().len();
    let load = HeatLoad::synthesize(&model, 1.0, -0.01).unwrap();

    let one = build_scan_schedule(ScanKind::Fast, 1, slits, ScheduleOverrides::default()).unwrap();
    let (t_l, t_d) = (one.fields[0].t_l, one.fields[0].t_d);
    let out = run_scan(&model, &one, &load, &PipelineConfig::default()).unwrap();
    let f = &out.trace.fields[0];
    let counts_ok = f.thermal_steps == t_l + t_d && f.gemv_calls == 3 * t_l && out.deformations.len() == t_l;

    let four = build_scan_schedule(ScanKind::Fast, 4, slits, ScheduleOverrides::default()).unwrap();
    let budget = four.fields[0].time_budget_ms / 1e3;
    let cfg = PipelineConfig::default().with_stall(Stall {
        field: 2,
        stage: Stage::Decode,
        seconds: 2.0 * budget,
    });
    let out = run_scan(&model, &four, &load, &cfg).unwrap();
    let report = out.trace.report();
    let flagged: Vec<usize> = out.trace.fields.iter().filter(|f| !f.deadline_met).map(|f| f.field).collect();
    let stall_ok = out.trace.fields.len() == 4 && report.misses == 1 && flagged == [2] && report.miss_rate == 0.25;
    outcome(
        counts_ok && stall_ok,
        format!(
            "field: {} thermal steps, {} gemv calls (t_l={t_l}, t_d={t_d}); stall run: {} fields, misses {} at {:?}, miss rate {}",
            f.thermal_steps,
            f.gemv_calls,
            out.trace.fields.len(),
            report.misses,
            flagged,
            report.miss_rate
        ),
    )
}

fn c7_oracles() -> Outcome {
    const CASES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut thermal_worst = 0.0f64;
    let mut gemv_worst = 0.0f64;
    for _ in 0..CASES {
        let n = rng.gen_range(1..=32);
        let rows: Vec<Vec<(u32, f32)>> = (0..n)
            .map(|_| {
                let mut cols: Vec<u32> = (0..n as u32).filter(|_| rng.gen_bool(0.3)).collect();
                if cols.is_empty() {
                    cols.push(rng.gen_range(0..n as u32));
                }
                cols.into_iter().map(|c| (c, rng.gen_range(-1.0f32..=1.0))).collect()
            })
            .collect();
        let a = Csr::from_rows(n, rows).unwrap();
        let b = Diagonal::new((0..n).map(|_| rng.gen_range(-1.0f32..=1.0)).collect());
        let t: Vec<f32> = (0..n).map(|_| rng.gen_range(-10.0f32..=10.0)).collect();
        let u: Vec<f32> = (0..n).map(|_| rng.gen_range(-10.0f32..=10.0)).collect();
        let got = thermal_step(&a, &b, &t, &u).unwrap();
        let dense = a.to_dense();
        for i in 0..n {
            let (mut r, mut mag) = (b.values()[i] as f64 * u[i] as f64, (b.values()[i] as f64 * u[i] as f64).abs());
            for (j, &tj) in t.iter().enumerate() {
                let p = dense.get(i, j) as f64 * tj as f64;
                r += p;
                mag += p.abs();
            }
            let scale = r.abs().max(1e-12 * mag);
            if scale > 0.0 {
                thermal_worst = thermal_worst.max((got[i] as f64 - r).abs() / scale);
            }
        }

        let (h, w) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let m = Dense::from_fn(h, w, |_, _| rng.gen_range(-1.0f32..=1.0));
        let v: Vec<f32> = (0..w).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
        let got = gemv(&GemvRequest::mixed(m.view(), &v)).unwrap();
        for (i, &g) in got.iter().enumerate() {
            let (mut r, mut mag) = (0.0f64, 0.0f64);
            for (&a, &b) in m.row(i).iter().zip(&v) {
                let p = a as f64 * b as f64;
                r += p;
                mag += p.abs();
            }
            let bound = w as f64 * 2f64.powi(-24) * mag;
            if bound > 0.0 {
                gemv_worst = gemv_worst.max((g as f64 - r).abs() / bound);
            } else if g != 0.0 {
                gemv_worst = f64::INFINITY;
            }
        }
    }
    outcome(
        thermal_worst <= 1e-6 && gemv_worst <= 1.0,
        format!("{CASES} thermal + {CASES} gemv instances: worst thermal rel err {thermal_worst:.3e} (limit 1e-6), worst gemv err / bound {gemv_worst:.3e} (limit 1)"),
    )
}

fn c8_measurements(smooth: &Dense) -> Outcome {
    let (rows, cols) = (378, 65536);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = Dense::from_fn(rows, cols, |_, _| rng.gen_range(-1.0f32..=1.0));
    let v: Vec<f32> = (0..cols).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
    let req = GemvRequest::mixed(m.view(), &v);
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let t = Instant::now();
        std::hint::black_box(gemv(&req).unwrap());
        best = best.min(t.elapsed().as_secs_f64());
    }
    let gflops = gemv_flops(rows, cols) as f64 / best / 1e9;

    let stream = compress(smooth.view(), CodecMode::FixedAccuracy { tolerance: 1e-12 }).unwrap();
    let mut dbest = f64::INFINITY;
    for _ in 0..3 {
        let t = Instant::now();
        std::hint::black_box(decompress(&stream).unwrap());
        dbest = dbest.min(t.elapsed().as_secs_f64());
    }
    let gbps = (smooth.rows() * smooth.cols() * 4) as f64 / dbest / 1e9;
    outcome(
        gflops.is_finite() && gflops > 0.0 && gbps.is_finite() && gbps > 0.0,
        format!(
            "mixed gemv {rows}x{cols}: {gflops:.2} GFLOP/s; decode 1024x1024 tau 1e-12: {gbps:.3} GB/s; threads {} (reported, reference hardware 198 GFLOP/s and 33 GB/s)",
            rayon::current_num_threads()
        ),
    )
}

fn main() {
    let smooth = synthetic_c(CGenerator::Smooth, 40);
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("C1 flop cost", Box::new(c1_flop_cost)),
        ("C2 latency breakdown", Box::new(c2_latency_breakdown)),
        ("C3 mixed precision", Box::new(c3_mixed_precision)),
        ("C4 codec contracts", Box::new(|| c4_codec(&smooth))),
        ("C5 deformation error", Box::new(c5_qoi)),
        ("C6 structural counts", Box::new(c6_counts)),
        ("C7 oracle equivalence", Box::new(c7_oracles)),
        ("C8 measured throughput", Box::new(|| c8_measurements(&smooth))),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {name} [{:.1}s]: {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
