//! End-to-end acceptance suite. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits non-zero if any fails. Criterion numbers given as
//! arguments restrict the run, e.g. `cargo test --test acceptance -- 3 5`.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use common::{max_relative_error, random_tensor};
use lossy_tcn::bottleneck::{compress, decompress, uniform_noise, CodingTables, FactorizedDensity, PmfTable};
use lossy_tcn::cli::{eval_checkpoint, evaluate_model, train_experiment, train_model};
use lossy_tcn::config::ExperimentConfig;
use lossy_tcn::detection::{confidence_series, detect_window};
use lossy_tcn::model::{TcnAutoencoder, TcnConfig};
use lossy_tcn::numerics::{Graph, ParamStore, RngState, Tensor};
use lossy_tcn::training::{ae_loss, fit, rdo_loss_var, LossWeights, TrainConfig, TrainReport};

type Outcome = Result<(bool, String), String>;

fn desk_config() -> ExperimentConfig {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/desk.json");
    ExperimentConfig::load(&p).expect("desk config loads")
}

fn toy_config() -> TcnConfig {
    TcnConfig {
        input_channels: 2,
        window_length: 16,
        blocks: 2,
        channel_width: 4,
        latent_dim: 8,
        ..TcnConfig::default()
    }
}

fn c1_gradients() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..3u64 {
        let mut rng = RngState::new(seed);
        let model = TcnAutoencoder::new(toy_config(), &mut rng).map_err(|e| e.to_string())?;
        let x = random_tensor(&[2, 16], &mut rng);
        let noise = uniform_noise(8, &mut rng);
        let w = LossWeights { lambda1: 10.0, lambda2: 10.0 };
        let mut store = model.params().clone();
        let e = max_relative_error(&mut store, |g| {
            let xv = g.input(x.clone());
            let out = model.forward_train(g, xv, &noise)?;
            Ok(rdo_loss_var(g, xv, out.x_hat, out.x_tilde, out.rate, w)?.total)
        });
        worst = worst.max(e);
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.3e} over 3 seeds (tol 1e-4)")))
}

fn c2_causality() -> Outcome {
    let cfg = TcnConfig {
        channel_width: 16,
        latent_dim: 32,
        ..TcnConfig::default()
    };
    let (c, t) = (cfg.input_channels, cfg.window_length);
    let mut rng = RngState::new(2);
    let model = TcnAutoencoder::new(cfg, &mut rng).map_err(|e| e.to_string())?;
    let mut violations = 0usize;
    for _ in 0..1000 {
        let x = random_tensor(&[c, t], &mut rng);
        let (ch, at) = (rng.below(c), rng.below(t));
        let mut y = x.clone();
        y.data_mut()[ch * t + at] += rng.normal() * 3.0 + 1.0;
        let ax = model.encoder_activations(&x).map_err(|e| e.to_string())?;
        let ay = model.encoder_activations(&y).map_err(|e| e.to_string())?;
        for (a, b) in ax.iter().zip(&ay) {
            for r in 0..a.shape()[0] {
                if a.row(r)[..at] != b.row(r)[..at] {
                    violations += 1;
                }
            }
        }
    }
    Ok((violations == 0, format!("1000 trials, {violations} earlier activations changed")))
}

/// A density with perturbed parameters so that every dimension differs.
fn perturbed_density(latent: usize, seed: u64) -> (ParamStore, FactorizedDensity) {
    let mut rng = RngState::new(seed);
    let mut store = ParamStore::new();
    let d = FactorizedDensity::new(&mut store, "bottleneck", latent, &[3, 3, 3], 1e-9, &mut rng).unwrap();
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            *v += 0.5 * rng.normal();
        }
    }
    (store, d)
}

fn c3_coder() -> Outcome {
    let latent = 64;
    let (store, density) = perturbed_density(latent, 3);
    let support: Vec<i64> = (-60..=60).collect();
    let mut tables = Vec::new();
    for dim in 0..latent {
        let probs: Vec<f64> = support
            .iter()
            .map(|&v| density.cumulative(&store, v as f64 + 0.5, dim) - density.cumulative(&store, v as f64 - 0.5, dim))
            .collect();
        tables.push(PmfTable::from_probabilities(support[0], &probs).map_err(|e| e.to_string())?);
    }
    let tables = CodingTables::new(tables).map_err(|e| e.to_string())?;
    // sample 200 latents by inverse CDF on the bin grid
    let mut rng = RngState::new(33);
    let mut symbols = Vec::new();
    for _ in 0..200 {
        for dim in 0..latent {
            let u = rng.uniform();
            let s = support
                .iter()
                .copied()
                .find(|&v| density.cumulative(&store, v as f64 + 0.5, dim) > u)
                .unwrap_or(support[support.len() - 1]);
            symbols.push(s);
        }
    }
    let mut coded_bytes = 0usize;
    let mut ideal_bits = 0.0;
    let mut lossless = true;
    for chunk in symbols.chunks(latent) {
        let s = compress(chunk, &tables).map_err(|e| e.to_string())?;
        coded_bytes += s.payload.len();
        lossless &= decompress(&s, &tables).map_err(|e| e.to_string())? == chunk;
        let z: Vec<f64> = chunk.iter().map(|&v| v as f64).collect();
        ideal_bits += density.rate_bits(&store, &z).map_err(|e| e.to_string())?;
    }
    // one payload per window carries a 5-byte flush; the whole run is also
    // coded as a single stream to measure the coder itself
    let single = tables.encode_payload(&symbols).map_err(|e| e.to_string())?;
    let roundtrip = tables.decode_payload(&single, symbols.len()).map_err(|e| e.to_string())? == symbols;
    let ideal_bytes = ideal_bits / 8.0;
    let bound = ideal_bytes * 1.01 + 64.0;
    let ok = lossless && roundtrip && (single.len() as f64) <= bound;
    Ok((
        ok,
        format!(
            "{} symbols: coded {} B vs ideal {:.1} B (bound {:.1} B), per-window total {} B, lossless {}",
            symbols.len(),
            single.len(),
            ideal_bytes,
            bound,
            coded_bytes,
            lossless && roundtrip
        ),
    ))
}

fn density_valid(store: &ParamStore, d: &FactorizedDensity) -> (bool, f64) {
    let mut ok = true;
    let mut max_mass = 0.0f64;
    for dim in 0..d.latent_dim() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..1000 {
            let u = -100.0 + 200.0 * i as f64 / 999.0;
            let c = d.cumulative(store, u, dim);
            ok &= (0.0..=1.0).contains(&c) && c >= prev;
            prev = c;
        }
        let mut z = vec![0.0; d.latent_dim()];
        let mut mass = 0.0;
        for v in -100..=100 {
            z[dim] = v as f64;
            let p = d.likelihood(store, &z).unwrap()[dim];
            ok &= p >= d.floor();
            mass += p;
        }
        max_mass = max_mass.max(mass);
    }
    (ok && max_mass <= 1.0 + 1e-6, max_mass)
}

fn c4_density(trained: Option<&TcnAutoencoder>) -> Outcome {
    let mut checked = 0;
    let mut all = true;
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let (store, d) = perturbed_density(16, 40 + seed);
        let (ok, m) = density_valid(&store, &d);
        all &= ok;
        worst = worst.max(m);
        checked += 1;
    }
    if let Some(m) = trained {
        let (ok, mass) = density_valid(m.params(), m.density().ok_or("trained model has no density")?);
        all &= ok;
        worst = worst.max(mass);
        checked += 1;
    }
    Ok((all, format!("{checked} densities, max integer-grid mass {worst:.9}")))
}

fn c5_detection() -> Outcome {
    let mut rng = RngState::new(5);
    let mut batch_ok = 0;
    for _ in 0..100 {
        let c = 1 + rng.below(8);
        let t = 10 * (1 + rng.below(20));
        let x = random_tensor(&[c, t], &mut rng);
        let x_hat = random_tensor(&[c, t], &mut rng);
        let omega: Vec<f64> = (0..c).map(|_| rng.uniform_range(0.05, 3.0)).collect();
        let delta = rng.uniform_range(0.0, 4.0);
        let got = detect_window(&x, &x_hat, &omega, delta).map_err(|e| e.to_string())?;
        // brute force
        let mut decisions = Vec::new();
        for k in 0..t / 10 {
            let mut s = 0.0;
            for j in 10 * k..10 * (k + 1) {
                let mut m = f64::NEG_INFINITY;
                for ch in 0..c {
                    m = m.max(omega[ch] * (x.at2(ch, j) - x_hat.at2(ch, j)).abs());
                }
                s += m;
            }
            decisions.push(u8::from(s / 10.0 > delta));
        }
        let votes: Vec<u8> = (0..t).map(|j| decisions[j / 10]).collect();
        if got.decisions == decisions && got.votes == votes {
            batch_ok += 1;
        }
    }
    let mut stream_ok = 0;
    for _ in 0..100 {
        let c = 1 + rng.below(4);
        let t = 10 * (1 + rng.below(4));
        let n = t + rng.below(3 * t);
        let series = random_tensor(&[c, n], &mut rng);
        let recon = random_tensor(&[c, n], &mut rng);
        let omega: Vec<f64> = (0..c).map(|_| rng.uniform_range(0.05, 3.0)).collect();
        let delta = rng.uniform_range(0.5, 2.0);
        let limit = rng.uniform_range(0.05, 1.0);
        let windows = n - t + 1;
        let mut votes = Vec::with_capacity(windows);
        for k in 0..windows {
            let a = series.columns(k, t).map_err(|e| e.to_string())?;
            let b = recon.columns(k, t).map_err(|e| e.to_string())?;
            votes.push(detect_window(&a, &b, &omega, delta).map_err(|e| e.to_string())?.votes);
        }
        let got = confidence_series(&votes, t, limit).map_err(|e| e.to_string())?;
        let mut ok = got.len() == n;
        for (ti, p) in got.iter().enumerate() {
            let covering: Vec<usize> = (0..windows).filter(|&k| k <= ti && ti < k + t).collect();
            let sum: u32 = covering.iter().map(|&k| u32::from(votes[k][ti - k])).sum();
            let cs = f64::from(sum) / covering.len() as f64;
            ok &= p.t == ti && p.cs == cs && p.zeta == u8::from(cs > limit);
        }
        if ok {
            stream_ok += 1;
        }
    }
    Ok((
        batch_ok == 100 && stream_ok == 100,
        format!("1-shot {batch_ok}/100 exact, streaming {stream_ok}/100 exact"),
    ))
}

fn c6_loss() -> Outcome {
    let cfg = desk_config();
    let sets = cfg.data.load_sets().map_err(|e| e.to_string())?;
    let data = lossy_tcn::data::prepare(&sets, &cfg.data, 40, 6).map_err(|e| e.to_string())?;
    let windows: Vec<Tensor> = data.corpus.batch.windows.iter().take(64).cloned().collect();
    let train = TrainConfig {
        epochs: 4,
        batch_size: 8,
        lambda1: 1000.0,
        lambda2: 500.0,
        ..TrainConfig::default()
    };
    let model_cfg = TcnConfig {
        window_length: 40,
        blocks: 3,
        channel_width: 8,
        latent_dim: 16,
        ..TcnConfig::default()
    };
    let mut report = TrainReport::default();
    let model = TcnAutoencoder::new(model_cfg.clone(), &mut RngState::new(6)).map_err(|e| e.to_string())?;
    fit(model, &windows, &train, &mut report).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut nonneg = true;
    for e in &report.epochs {
        worst = worst.max((e.total - (e.rate + train.lambda1 * e.distortion + train.lambda2 * e.reconstruction)).abs());
        nonneg &= e.rate >= 0.0 && e.distortion >= 0.0 && e.reconstruction >= 0.0;
    }

    let ae_cfg = TcnConfig {
        bottleneck_enabled: false,
        ..model_cfg
    };
    let mut ae_report = TrainReport::default();
    let ae = TcnAutoencoder::new(ae_cfg, &mut RngState::new(6)).map_err(|e| e.to_string())?;
    let ae = fit(ae, &windows, &train, &mut ae_report).map_err(|e| e.to_string())?;
    let ae_pure = ae_report
        .epochs
        .iter()
        .all(|e| e.total == e.distortion && e.rate == 0.0 && e.reconstruction == 0.0);
    let mut ae_exact = true;
    for x in &windows {
        let mut g = Graph::new(ae.params());
        let xv = g.input(x.clone());
        let xh = ae.forward_ae(&mut g, xv).map_err(|e| e.to_string())?;
        let d = g.mse(xv, xh).map_err(|e| e.to_string())?;
        ae_exact &= g.value(d).item().map_err(|e| e.to_string())? == ae_loss(x, &ae).map_err(|e| e.to_string())?;
    }
    Ok((
        worst <= 1e-9 && nonneg && ae_pure && ae_exact,
        format!(
            "max |total - (R + l1 D1 + l2 D2)| = {worst:.2e} over {} epochs, AE total == MSE: {}",
            report.epochs.len(),
            ae_pure && ae_exact
        ),
    ))
}

struct TrendRun {
    rdo_f1: [Vec<f64>; 2],
    ae_f1: [Vec<f64>; 2],
    multi: Option<(f64, f64)>,
    density_model: Option<TcnAutoencoder>,
}

fn run_trend(with_multi: bool) -> Result<TrendRun, String> {
    let base = desk_config();
    let mut run = TrendRun {
        rdo_f1: [vec![], vec![]],
        ae_f1: [vec![], vec![]],
        multi: None,
        density_model: None,
    };
    for (pi, p) in [0.0, 0.05].into_iter().enumerate() {
        for rdo in [true, false] {
            for seed in 0..3u64 {
                let mut cfg = base.clone();
                cfg.data.anomaly_fraction = p;
                cfg.model.bottleneck_enabled = rdo;
                cfg.training.seed = seed;
                let started = Instant::now();
                let trained = train_model(&cfg).map_err(|(e, _)| e.to_string())?;
                let multi = with_multi && rdo && pi == 1 && seed == 0;
                let (m, _) = evaluate_model(&trained.model, &cfg, &trained.data.validation, multi)
                    .map_err(|e| e.to_string())?;
                eprintln!(
                    "  {} p={p} seed={seed}: best F1 {:.4} at delta {:.2} ({:.0}s)",
                    cfg.model_type(),
                    m.best_f1,
                    m.best_delta,
                    started.elapsed().as_secs_f64()
                );
                if let Some(ms) = &m.multi_shot {
                    run.multi = Some((m.best_f1, ms.best_f1));
                }
                if rdo {
                    run.rdo_f1[pi].push(m.best_f1);
                    if run.density_model.is_none() {
                        run.density_model = Some(trained.model);
                    }
                } else {
                    run.ae_f1[pi].push(m.best_f1);
                }
            }
        }
    }
    Ok(run)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn c7_trend(run: &TrendRun) -> Outcome {
    let rdo_drop = mean(&run.rdo_f1[0]) - mean(&run.rdo_f1[1]);
    let ae_drop = mean(&run.ae_f1[0]) - mean(&run.ae_f1[1]);
    Ok((
        ae_drop > rdo_drop,
        format!(
            "RDO F1 {:.4} -> {:.4} (drop {rdo_drop:.4}), AE F1 {:.4} -> {:.4} (drop {ae_drop:.4})",
            mean(&run.rdo_f1[0]),
            mean(&run.rdo_f1[1]),
            mean(&run.ae_f1[0]),
            mean(&run.ae_f1[1])
        ),
    ))
}

fn c8_multi_shot(run: &TrendRun) -> Outcome {
    let (one, multi) = run.multi.ok_or("multi-shot evaluation did not run")?;
    Ok((multi >= one, format!("RDO p=0.05 seed 0: 1-shot F1 {one:.4}, multi-shot F1 {multi:.4}")))
}

fn c9_capacity() -> Outcome {
    let base = desk_config();
    let sets = base.data.load_sets().map_err(|e| e.to_string())?;
    let t = 40;
    let mut rows = Vec::new();
    let mut all = true;
    for seed in 0..3u64 {
        let data = lossy_tcn::data::prepare(&sets, &base.data, t, seed).map_err(|e| e.to_string())?;
        let windows: Vec<Tensor> = data.corpus.batch.windows.iter().step_by(4).take(128).cloned().collect();
        let train = TrainConfig {
            epochs: 12,
            batch_size: 8,
            seed,
            ..base.training.clone()
        };
        let mut rates = Vec::new();
        for width in [128, 30] {
            let cfg = TcnConfig {
                window_length: t,
                blocks: 3,
                channel_width: width,
                latent_dim: 16,
                ..TcnConfig::default()
            };
            let model = TcnAutoencoder::new(cfg, &mut RngState::new(seed).fork(0x696e_6974)).map_err(|e| e.to_string())?;
            let mut report = TrainReport::default();
            fit(model, &windows, &train, &mut report).map_err(|e| e.to_string())?;
            rates.push(report.last().ok_or("no epochs")?.rate);
        }
        all &= rates[0] <= rates[1];
        rows.push(format!("seed {seed}: {:.2} vs {:.2} bits", rates[0], rates[1]));
    }
    Ok((all, format!("final rate 128 vs 30 channels, {}", rows.join("; "))))
}

fn c10_determinism() -> Outcome {
    let mut cfg = desk_config();
    cfg.training.epochs = 3;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_experiment(&cfg, &a).map_err(|e| e.to_string())?;
    train_experiment(&cfg, &b).map_err(|e| e.to_string())?;
    let mut same_files = true;
    for f in ["model.bin", "model.json", "manifest.json"] {
        same_files &= std::fs::read(a.join(f)).map_err(|e| e.to_string())? == std::fs::read(b.join(f)).map_err(|e| e.to_string())?;
    }
    let ma = eval_checkpoint(&a, true, &a).map_err(|e| e.to_string())?;
    let mb = eval_checkpoint(&b, true, &b).map_err(|e| e.to_string())?;
    let same_metrics = ma == mb;
    Ok((
        same_files && same_metrics,
        format!("checkpoints byte-identical: {same_files}, metrics identical: {same_metrics}"),
    ))
}

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let run = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut failed = 0;
    let mut report = |n: usize, name: &str, started: Instant, r: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        match r {
            Ok((true, detail)) => println!("[PASS] {n:>2} {name}: {detail} ({secs:.1}s)"),
            Ok((false, detail)) => {
                failed += 1;
                println!("[FAIL] {n:>2} {name}: {detail} ({secs:.1}s)");
            }
            Err(e) => {
                failed += 1;
                println!("[FAIL] {n:>2} {name}: error: {e} ({secs:.1}s)");
            }
        }
    };

    if run(1) {
        let s = Instant::now();
        report(1, "gradient correctness", s, c1_gradients());
    }
    if run(2) {
        let s = Instant::now();
        report(2, "causality", s, c2_causality());
    }
    if run(3) {
        let s = Instant::now();
        report(3, "entropy coder consistency", s, c3_coder());
    }
    let trend = if run(4) || run(7) || run(8) {
        let s = Instant::now();
        let t = run_trend(run(8));
        eprintln!("  trend runs took {:.0}s", s.elapsed().as_secs_f64());
        Some(t)
    } else {
        None
    };
    if run(4) {
        let s = Instant::now();
        let trained = trend.as_ref().and_then(|t| t.as_ref().ok()).and_then(|t| t.density_model.as_ref());
        report(4, "density validity", s, c4_density(trained));
    }
    if run(5) {
        let s = Instant::now();
        report(5, "detection oracle equivalence", s, c5_detection());
    }
    if run(6) {
        let s = Instant::now();
        report(6, "loss decomposition", s, c6_loss());
    }
    if let Some(t) = &trend {
        if run(7) {
            let s = Instant::now();
            report(7, "robustness trend RDO vs AE", s, t.as_ref().map_err(Clone::clone).and_then(c7_trend));
        }
        if run(8) {
            let s = Instant::now();
            report(8, "multi-shot gain", s, t.as_ref().map_err(Clone::clone).and_then(c8_multi_shot));
        }
    }
    if run(9) {
        let s = Instant::now();
        report(9, "capacity vs rate", s, c9_capacity());
    }
    if run(10) {
        let s = Instant::now();
        report(10, "determinism", s, c10_determinism());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
