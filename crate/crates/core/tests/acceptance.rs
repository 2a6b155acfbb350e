//! Acceptance criteria, one pass/fail line each. Runs as a plain binary so the
//! lines come out in order and the slow training checks run exactly once.

mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use common::{auc_pairwise, conv_ref, max_abs_diff, maxpool_ref, patch_mass, randn};
use softattn::cli::{model_gradcheck, run_from, RunConfig};
use softattn::data::{
    parse_manifest, patch_from_source_id, rebalance_indices, split_indices, synth_lesion_dataset, RebalancePolicy,
    RebalanceTarget, SplitSpec, SynthSpec,
};
use softattn::nn::Padding;
use softattn::train::metrics::{auc_rank, auc_trapezoid, weighted_mean};
use softattn::train::{
    build_mininet, cce_loss, evaluate_loss, one_hot, stack_images, train_loop, ConfusionMatrix, EarlyStopping,
    TrainConfig,
};
use softattn::{
    finite_diff_check, sa_forward, sa_integrate, KernelExtent, Mode, ParamStore64, Sample64, SeededRng,
    SoftAttentionConfig, SoftAttentionState, Tape64, Tensor64,
};

type Check = std::result::Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sa_state(store: &mut ParamStore64, d: usize, k: usize, rng: &mut SeededRng) -> SoftAttentionState {
    let cfg = SoftAttentionConfig { k, extent: KernelExtent::Local(3, 3), gamma_init: 0.01, dropout: 0.0 };
    SoftAttentionState::new(store, "sa", d, (4, 4), cfg, rng).unwrap()
}

fn gradient_correctness() -> Check {
    // (a) the block alone: weights, gate and input all checked.
    let mut rng = SeededRng::new(7);
    let mut store = ParamStore64::new();
    let state = sa_state(&mut store, 3, 2, &mut rng);
    let t_id = store.add("t", randn(&[4, 4, 3], &mut rng));
    let probe = randn(&[4, 4, 3], &mut rng);
    let start = Instant::now();
    let block = finite_diff_check(&mut store, 1e-5, |tape, store| {
        let t = tape.param(store, t_id);
        let out = sa_forward(tape, store, &state, t)?;
        let sq = tape.mul(out.f_sa, out.f_sa)?;
        let lin = tape.mul_const(out.f_sa, probe.clone())?;
        let both = tape.add(sq, lin)?;
        tape.sum_all(both)
    })
    .map_err(|e| e.to_string())?;
    let block_time = start.elapsed();

    // (b) the full network, batch of 2, dropout off.
    let start = Instant::now();
    let net = model_gradcheck(&RunConfig::default()).map_err(|e| e.to_string())?;
    let net_time = start.elapsed();
    let at_init = model_gradcheck(&RunConfig { gradcheck_gamma: None, image_size: 16, ..RunConfig::default() })
        .map_err(|e| e.to_string())?;
    eprintln!(
        "     info: network at the initial gate (16x16) max rel error {:.2e} at {:?}, analytic {:.3e} numeric {:.3e}",
        at_init.max_rel_error, at_init.worst, at_init.worst_values.0, at_init.worst_values.1
    );
    let within = block_time < Duration::from_secs(30) && net_time < Duration::from_secs(30);
    ensure(
        block.max_rel_error < 1e-4 && net.max_rel_error < 1e-4 && within,
        format!(
            "block {:.2e} over {} entries in {:.1?}; network {:.2e} over {} entries in {:.1?}",
            block.max_rel_error, block.entries_checked, block_time, net.max_rel_error, net.entries_checked, net_time
        ),
    )
}

fn softmax_normalization() -> Check {
    let mut rng = SeededRng::new(101);
    let (mut head_err, mut alpha_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (h, w, d, k) = (2 + rng.below(7), 2 + rng.below(7), 1 + rng.below(5), 1 + rng.below(6));
        let mut store = ParamStore64::new();
        let state = sa_state(&mut store, d, k, &mut rng);
        // Scale up the logits so the maps are far from uniform.
        let wid = state.head_weights;
        store.get_mut(wid).value = store.value(wid).map(|v| v * 3.0);
        let mut tape = Tape64::new();
        let t = tape.constant(randn(&[h, w, d], &mut rng));
        let out = sa_forward(&mut tape, &store, &state, t).map_err(|e| e.to_string())?;
        let maps = tape.value(out.head_maps).data();
        for j in 0..k {
            let s: f64 = (0..h * w).map(|p| maps[p * k + j]).sum();
            head_err = head_err.max((s - 1.0).abs());
        }
        let a: f64 = tape.value(out.alpha).sum();
        alpha_err = alpha_err.max((a - k as f64).abs());
    }
    ensure(
        head_err <= 1e-12 && alpha_err <= 1e-9,
        format!("head maps off by {head_err:.1e}, alpha off by {alpha_err:.1e}"),
    )
}

fn zero_gate() -> Check {
    let mut rng = SeededRng::new(202);
    let mut nonzero = 0usize;
    for _ in 0..100 {
        let (h, w, d, dm) = (2 * (1 + rng.below(4)), 2 * (1 + rng.below(4)), 1 + rng.below(4), 1 + rng.below(4));
        let mut store = ParamStore64::new();
        let state = sa_state(&mut store, d, 1 + rng.below(4), &mut rng);
        store.get_mut(state.gamma).value = Tensor64::scalar(0.0);
        let mut tape = Tape64::new();
        let main = tape.constant(randn(&[h, w, dm], &mut rng));
        let t = tape.constant(randn(&[h, w, d], &mut rng).map(|v| v * 10.0));
        let out = sa_integrate(&mut tape, &store, &state, main, t, Mode::Infer, &mut rng).map_err(|e| e.to_string())?;
        let y = tape.value(out.output).data();
        nonzero += y.chunks(dm + d).flat_map(|px| &px[dm..]).filter(|&&v| v != 0.0).count();
    }
    ensure(nonzero == 0, format!("{nonzero} non-zero attention-branch outputs"))
}

fn loss_closed_forms() -> Check {
    let classes = 7;
    let uniform = Tensor64::full(&[3, classes], 1.0 / classes as f64).unwrap();
    let targets = one_hot::<f64>(&[0, 3, 6], classes).unwrap();
    let l = cce_loss(&uniform, &targets).map_err(|e| e.to_string())?;
    let perfect = cce_loss(&targets, &targets).map_err(|e| e.to_string())?;
    let err = (l - (classes as f64).ln()).abs();
    ensure(err <= 1e-9 && perfect.abs() <= 1e-12, format!("uniform off ln 7 by {err:.1e}, perfect loss {perfect:.1e}"))
}

fn auc_equivalence() -> Check {
    let mut rng = SeededRng::new(303);
    let (mut worst_pair, mut worst_trap, mut defined) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..1000 {
        let n = 1 + rng.below(20);
        let levels = 1 + rng.below(6);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let positive: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
        let (r, p, t) =
            (auc_rank(&scores, &positive), auc_pairwise(&scores, &positive), auc_trapezoid(&scores, &positive));
        match (r, p, t) {
            (Some(r), Some(p), Some(t)) => {
                defined += 1;
                worst_pair = worst_pair.max((r - p).abs());
                worst_trap = worst_trap.max((r - t).abs());
            }
            (None, None, None) => {}
            other => return Err(format!("definedness disagrees: {other:?}")),
        }
    }
    ensure(
        worst_pair <= 1e-12 && worst_trap <= 1e-12,
        format!("{defined} defined sets, vs pairwise {worst_pair:.1e}, vs trapezoid {worst_trap:.1e}"),
    )
}

fn metric_arithmetic() -> Check {
    let mut rng = SeededRng::new(404);
    let mut checked = 0usize;
    for m in 0..50 {
        let c = 2 + rng.below(6);
        let rows: Vec<Vec<u64>> = (0..c).map(|_| (0..c).map(|_| rng.below(30) as u64).collect()).collect();
        let cm = ConfusionMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let total: u64 = rows.iter().flatten().sum();
        for (k, row) in rows.iter().enumerate() {
            let tp = row[k];
            let fp = (0..c).map(|i| rows[i][k]).sum::<u64>() - tp;
            let fn_ = row.iter().sum::<u64>() - tp;
            let tn = total - tp - fp - fn_;
            let div = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
            let o = cm.one_vs_rest(k);
            let expected = [div(tp, tp + fp), div(tp, tp + fn_), div(tn, tn + fp), div(tp + tn, total)];
            let got = [o.precision(), o.sensitivity(), o.specificity(), o.accuracy()];
            if expected != got {
                return Err(format!("matrix {m} class {k}: expected {expected:?}, got {got:?}"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} per-class metric sets exact"))
}

fn table_aggregation() -> Check {
    let precision = [1.000, 0.880, 0.720, 1.000, 0.670, 0.970, 1.000].map(Some);
    let support = [23, 26, 66, 6, 34, 663, 10];
    let w = weighted_mean(&precision, &support).ok_or("undefined weighted mean")?;
    ensure((w - 0.937).abs() <= 0.001, format!("weighted precision {w:.4}"))
}

fn conv_pool_oracle() -> Check {
    let mut rng = SeededRng::new(505);
    let (mut conv_err, mut head_err, mut pool_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let (n, h, w, ci, co) =
            (1 + rng.below(2), 3 + rng.below(6), 3 + rng.below(6), 1 + rng.below(4), 1 + rng.below(5));
        let (kh, kw) = (1 + rng.below(3.min(h)), 1 + rng.below(3.min(w)));
        let stride = 1 + rng.below(2);
        let same = rng.uniform() < 0.5;
        let x = randn(&[n, h, w, ci], &mut rng);
        let k = randn(&[kh, kw, ci, co], &mut rng);
        let b = randn(&[co], &mut rng);
        let mut tape = Tape64::new();
        let (xv, kv, bv) = (tape.constant(x.clone()), tape.constant(k.clone()), tape.constant(b.clone()));
        let pad = if same { Padding::Same } else { Padding::Valid };
        let y = tape.conv2d(xv, kv, Some(bv), pad, stride).map_err(|e| e.to_string())?;
        let (want, shape) = conv_ref(x.data(), [n, h, w, ci], k.data(), [kh, kw, ci, co], Some(b.data()), same, stride);
        if tape.shape(y) != shape {
            return Err(format!("conv shape {:?} vs {shape:?}", tape.shape(y)));
        }
        conv_err = conv_err.max(max_abs_diff(tape.value(y).data(), &want));

        let heads = randn(&[3, 3, ci, co], &mut rng);
        let hv = tape.constant(heads.clone());
        let z = tape.conv3d_heads(xv, hv).map_err(|e| e.to_string())?;
        let (want, _) = conv_ref(x.data(), [n, h, w, ci], heads.data(), [3, 3, ci, co], None, true, 1);
        head_err = head_err.max(max_abs_diff(tape.value(z).data(), &want));

        let p = tape.maxpool2d(xv).map_err(|e| e.to_string())?;
        let (want, shape) = maxpool_ref(x.data(), [n, h, w, ci]);
        if tape.shape(p) != shape {
            return Err(format!("pool shape {:?} vs {shape:?}", tape.shape(p)));
        }
        pool_err = pool_err.max(max_abs_diff(tape.value(p).data(), &want));
    }
    ensure(
        conv_err <= 1e-12 && head_err <= 1e-12 && pool_err <= 1e-12,
        format!("conv2d {conv_err:.1e}, heads {head_err:.1e}, maxpool {pool_err:.1e}"),
    )
}

struct SynthData {
    train: Vec<Sample64>,
    val: Vec<Sample64>,
    test: Vec<Sample64>,
}

/// 32 per class for training, separately generated validation and test sets
/// of 8 per class, all drawn from `data_seed`.
fn synth_data(data_seed: u64) -> SynthData {
    let mut rng = SeededRng::new(data_seed);
    let spec = SynthSpec { n_per_class: 32, image_size: 32, patch_size: 8, noise_std: 0.1 };
    let small = SynthSpec { n_per_class: 8, ..spec };
    let train = synth_lesion_dataset(&spec, &mut rng.fork(1)).unwrap();
    let val = synth_lesion_dataset(&small, &mut rng.fork(2)).unwrap();
    let test = synth_lesion_dataset(&small, &mut rng.fork(3)).unwrap();
    SynthData { train, val, test }
}

fn train_synth(data: &SynthData, train_seed: u64) -> softattn::Result<softattn::ModelGraph64> {
    let mut rng = SeededRng::new(train_seed);
    let cfg = SoftAttentionConfig { k: 4, ..Default::default() };
    let mut model = build_mininet::<f64>(2, Some(cfg), &mut rng.fork(4))?;
    let tc = TrainConfig { epochs: 200, ..Default::default() };
    train_loop(&mut model, &data.train, &data.val, &tc, &mut EarlyStopping::new(30), &mut rng.fork(5))?;
    Ok(model)
}

fn synthetic_overfit() -> Check {
    let data = synth_data(42);
    let mut model = train_synth(&data, 42).map_err(|e| e.to_string())?;
    let (_, train_acc) = evaluate_loss(&mut model, &data.train).map_err(|e| e.to_string())?;
    let (_, test_acc) = evaluate_loss(&mut model, &data.test).map_err(|e| e.to_string())?;
    ensure(train_acc == 1.0 && test_acc >= 0.9, format!("train accuracy {train_acc:.4}, test accuracy {test_acc:.4}"))
}

fn attention_localization() -> Check {
    let data = synth_data(42);
    let area = 64.0 / 1024.0;
    let mut masses = Vec::new();
    for seed in 0..10 {
        let mut model = train_synth(&data, seed).map_err(|e| e.to_string())?;
        let mut per_sample = Vec::new();
        for s in data.test.iter().filter(|s| s.label == 1) {
            let patch = patch_from_source_id(&s.source_id).ok_or("lesion sample without patch id")?;
            let mut tape = Tape64::new();
            let x = tape.constant(stack_images(&[s]).map_err(|e| e.to_string())?);
            let trace = model.forward(&mut tape, x, Mode::Infer, &mut SeededRng::new(0)).map_err(|e| e.to_string())?;
            let alpha =
                trace.attention.ok_or("model has no attention")?.alpha_map(&tape, 0).map_err(|e| e.to_string())?;
            per_sample.push(patch_mass(&alpha, patch, 32));
        }
        masses.push(per_sample.iter().sum::<f64>() / per_sample.len() as f64);
    }
    let passing = masses.iter().filter(|&&m| m >= 2.0 * area).count();
    let listed: Vec<String> = masses.iter().map(|m| format!("{m:.3}")).collect();
    ensure(passing >= 8, format!("{passing}/10 seeds at mass >= {:.4}: [{}]", 2.0 * area, listed.join(", ")))
}

fn determinism_and_rebalance() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.cfg");
    std::fs::write(&config, "model.sa.k = 4\ntrain.epochs = 40\nsynth.n_per_class = 24\n")
        .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        for cmd in ["train", "eval"] {
            let argv = ["softattn", cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
            let code = run_from(argv);
            if code != 0 {
                return Err(format!("`{cmd}` for run {run} exited with {code}"));
            }
        }
        outputs.push(std::fs::read(out.join("metrics.tsv")).map_err(|e| e.to_string())?);
    }
    if outputs[0] != outputs[1] {
        return Err("metrics.tsv differs between identical runs".into());
    }

    let mut rng = SeededRng::new(606);
    for v in 0..20 {
        let classes = 2 + rng.below(6);
        let counts: Vec<usize> = (0..classes).map(|_| 1 + rng.below(60)).collect();
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let target = match v % 4 {
            0 => RebalanceTarget::Mean,
            1 => RebalanceTarget::Max,
            2 => RebalanceTarget::Min,
            _ => RebalanceTarget::Count(1 + rng.below(80)),
        };
        let idx = rebalance_indices(&labels, classes, &RebalancePolicy { target, seed: v as u64 })
            .map_err(|e| e.to_string())?;
        let mut got = vec![0usize; classes];
        for i in idx {
            got[labels[i]] += 1;
        }
        if got.iter().any(|&g| g != got[0]) {
            return Err(format!("counts {counts:?} with {target:?} gave {got:?}"));
        }
    }
    Ok(format!("metrics.tsv identical ({} bytes); 20 rebalanced count vectors equal", outputs[0].len()))
}

fn split_mechanics() -> Check {
    let per_class = [33, 51, 110, 12, 111, 670, 13];
    let mut text = String::from("classes: akiec,bcc,bkl,df,mel,nv,vasc\n");
    let names = ["akiec", "bcc", "bkl", "df", "mel", "nv", "vasc"];
    let mut i = 0;
    for (c, &n) in per_class.iter().enumerate() {
        for _ in 0..n {
            writeln!(text, "img/{i:04}.ppm,{}", names[c]).unwrap();
            i += 1;
        }
    }
    let manifest = parse_manifest(&text, std::path::Path::new("/data")).map_err(|e| e.to_string())?;
    let labels = manifest.labels();
    if labels.len() != 1000 {
        return Err(format!("manifest has {} rows", labels.len()));
    }
    let mut worst = 0.0f64;
    for fraction in [0.15, 0.20, 0.30] {
        let (train, test) = split_indices(&labels, &SplitSpec { test_fraction: fraction, seed: 9, stratified: true })
            .map_err(|e| e.to_string())?;
        if train.len() + test.len() != labels.len() {
            return Err(format!("fraction {fraction}: split loses samples"));
        }
        let mut counts = BTreeMap::new();
        for &t in &test {
            *counts.entry(labels[t]).or_insert(0usize) += 1;
        }
        for (c, &n) in per_class.iter().enumerate() {
            let got = counts.get(&c).copied().unwrap_or(0) as f64;
            worst = worst.max((got - fraction * n as f64).abs());
        }
    }
    ensure(worst <= 1.0, format!("largest per-class deviation {worst:.2}"))
}

fn main() {
    let criteria = [
        Criterion { name: "gradient_correctness", budget: Duration::from_secs(60), run: gradient_correctness },
        Criterion { name: "softmax_map_normalization", budget: Duration::from_secs(10), run: softmax_normalization },
        Criterion { name: "zero_gate_neutrality", budget: Duration::from_secs(10), run: zero_gate },
        Criterion { name: "loss_closed_forms", budget: Duration::from_secs(1), run: loss_closed_forms },
        Criterion { name: "auc_oracle_equivalence", budget: Duration::from_secs(30), run: auc_equivalence },
        Criterion { name: "metric_arithmetic", budget: Duration::from_secs(5), run: metric_arithmetic },
        Criterion { name: "weighted_precision_aggregation", budget: Duration::from_secs(1), run: table_aggregation },
        Criterion { name: "conv_pool_oracle", budget: Duration::from_secs(30), run: conv_pool_oracle },
        Criterion { name: "synthetic_overfit", budget: Duration::from_secs(300), run: synthetic_overfit },
        Criterion { name: "attention_localization", budget: Duration::from_secs(1800), run: attention_localization },
        Criterion {
            name: "determinism_and_rebalance",
            budget: Duration::from_secs(300),
            run: determinism_and_rebalance,
        },
        Criterion { name: "split_mechanics", budget: Duration::from_secs(5), run: split_mechanics },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {:?} budget", c.budget)),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        eprintln!("{} {} ({detail}, {took:.2?})", if ok { "PASS" } else { "FAIL" }, c.name);
    }
    eprintln!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
