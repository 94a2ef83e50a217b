//! Acceptance suite. Runs with its own harness so every criterion prints one
//! line whether it passes or not; the process fails if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use reclaim_core::analysis::linear_cka;
use reclaim_core::calibration::estimate_gamma_alg;
use reclaim_core::metrics::{ausuc, decompose, seen_unseen_curve};
use reclaim_core::ncm::{class_means, ncm_predict};
use reclaim_core::trainer::{
    absent_feature_shift, run_toy_pipeline, toy_train_config, ToySpec, FD_STEP, GRADCHECK_TOLERANCE,
};
use reclaim_core::{
    apply_gamma, io, Activation, LabelPartition, LabeledFeatures, LabeledLogits, LinearHead, MlpModel,
};

type Criterion = fn() -> Outcome;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

fn normal_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * normal(r))
}

fn random_partition(r: &mut ChaCha8Rng, c: usize) -> LabelPartition {
    let k = r.random_range(1..c);
    LabelPartition::new(c, index::sample(r, c, k).into_vec()).unwrap()
}

/// Random logits with labels drawn so that both groups are represented.
fn random_instance(r: &mut ChaCha8Rng, max_n: usize, max_c: usize) -> (LabeledLogits, LabelPartition) {
    let c = r.random_range(2..=max_c);
    let p = random_partition(r, c);
    let n = r.random_range(2..=max_n);
    let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
    labels[0] = p.fine_tuning()[r.random_range(0..p.fine_tuning().len())];
    labels[1] = p.absent()[r.random_range(0..p.absent().len())];
    let scale = r.random_range(0.5..4.0);
    let logits = LabeledLogits::new(normal_matrix(r, n, c, scale), labels).unwrap();
    (logits, p)
}

fn naive_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn argmax_over(row: &[f64], classes: &[usize]) -> usize {
    let mut best = classes[0];
    for &c in classes {
        if row[c] > row[best] {
            best = c;
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c = r.random_range(2..=30);
        let p = random_partition(&mut r, c);
        let scale = r.random_range(0.1..20.0);
        let row: Vec<f64> = (0..c).map(|_| scale * normal(&mut r)).collect();
        let d = decompose(Array1::from(row.clone()).view(), &p).unwrap();
        let sm = naive_softmax(&row);
        for (j, &cls) in p.absent().iter().enumerate() {
            worst = worst.max((d.p_absent * d.within_absent[j] - sm[cls]).abs());
        }
        for (j, &cls) in p.fine_tuning().iter().enumerate() {
            worst = worst.max(((1.0 - d.p_absent) * d.within_seen[j] - sm[cls]).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-12 && elapsed < Duration::from_secs(1),
        format!("max |error| {worst:.2e} over 1000 rows in {elapsed:.2?}"),
    )
}

/// Cross-entropy written out directly from the model's parameters.
fn oracle_loss(u: &Array2<f64>, w: &Array2<f64>, act: Activation, x: &Array1<f64>, y: usize) -> f64 {
    let mut h = u.dot(x);
    if act == Activation::Rectified {
        h.mapv_inplace(|v| v.max(0.0));
    }
    let z = w.dot(&h);
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[y]
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    while pairs < 100 {
        let d = r.random_range(1..=6);
        let hd = r.random_range(1..=6);
        let c = r.random_range(2..=6);
        let act = if r.random_bool(0.5) { Activation::Linear } else { Activation::Rectified };
        let u = normal_matrix(&mut r, hd, d, 0.7);
        let w = normal_matrix(&mut r, c, hd, 0.7);
        let x = Array1::from_shape_fn(d, |_| normal(&mut r));
        let y = r.random_range(0..c);
        // Keep rectified pre-activations away from the kink.
        if act == Activation::Rectified && u.dot(&x).iter().any(|v| v.abs() < 1e-2) {
            continue;
        }
        pairs += 1;
        let model = MlpModel::new(u.clone(), LinearHead::new(w.clone()).unwrap(), act).unwrap();
        let g = model.loss_and_grads(x.view(), y).unwrap();
        let h = FD_STEP;
        for idx in ndarray::indices(u.dim()) {
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[idx] += h;
            dn[idx] -= h;
            let num = (oracle_loss(&up, &w, act, &x, y) - oracle_loss(&dn, &w, act, &x, y)) / (2.0 * h);
            worst = worst.max(rel_err(g.grad_hidden_map[idx], num));
        }
        for idx in ndarray::indices(w.dim()) {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[idx] += h;
            dn[idx] -= h;
            let num = (oracle_loss(&u, &up, act, &x, y) - oracle_loss(&u, &dn, act, &x, y)) / (2.0 * h);
            worst = worst.max(rel_err(g.grad_head[idx], num));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < GRADCHECK_TOLERANCE && elapsed < Duration::from_secs(5),
        format!("max relative error {worst:.2e} over 100 pairs in {elapsed:.2?}"),
    )
}

/// Staircase area from a dense γ grid, each point evaluated by brute force.
fn grid_ausuc(logits: &LabeledLogits, p: &LabelPartition, points: usize) -> f64 {
    let vals = logits.values();
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, &y) in logits.labels().iter().enumerate() {
        let row: Vec<f64> = vals.row(i).to_vec();
        let bs = argmax_over(&row, p.fine_tuning());
        let bu = argmax_over(&row, p.absent());
        let flip = row[bs] - row[bu];
        lo = lo.min(flip);
        hi = hi.max(flip);
        rows.push((row[bs], row[bu], bs == y, bu == y, p.is_seen(y)));
    }
    let n_s = rows.iter().filter(|r| r.4).count() as f64;
    let n_u = rows.len() as f64 - n_s;
    let (lo, hi) = (lo - 1.0, hi + 1.0);
    let mut area = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..points {
        let g = lo + (hi - lo) * k as f64 / (points - 1) as f64;
        let (mut s, mut u) = (0.0, 0.0);
        for &(ms, mu, ok_s, ok_u, seen) in &rows {
            let pick_absent = mu + g > ms;
            match (seen, pick_absent) {
                (true, false) if ok_s => s += 1.0,
                (false, true) if ok_u => u += 1.0,
                _ => {}
            }
        }
        let (s, u) = (s / n_s, u / n_u);
        if let Some((ps, pu)) = prev {
            area += (ps - s) * pu;
        }
        prev = Some((s, u));
    }
    let (ps, pu) = prev.unwrap();
    area + ps * pu
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (logits, p) = random_instance(&mut r, 200, 20);
        let exact = ausuc(&seen_unseen_curve(&logits, &p).unwrap());
        worst = worst.max((exact - grid_ausuc(&logits, &p, 100_000)).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-3 && elapsed < Duration::from_secs(30),
        format!("max |exact - grid| {worst:.2e} over 50 instances in {elapsed:.2?}"),
    )
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let (mut trials, mut reclaimed, mut draws) = (0, 0, 0);
    while trials < 10_000 {
        draws += 1;
        let c = r.random_range(2..=20);
        let p = random_partition(&mut r, c);
        let y = p.absent()[r.random_range(0..p.absent().len())];
        let scale = r.random_range(0.1..10.0);
        let row: Vec<f64> = (0..c).map(|_| scale * normal(&mut r)).collect();
        if argmax_over(&row, p.absent()) != y {
            continue;
        }
        trials += 1;
        let max_s = row[argmax_over(&row, p.fine_tuning())];
        let needed = max_s - row[y];
        let gamma = needed + 1e-9 * (1.0 + needed.abs());
        let logits = LabeledLogits::new(Array2::from_shape_vec((1, c), row).unwrap(), vec![y]).unwrap();
        if apply_gamma(&logits, &p, gamma).unwrap()[0] == y {
            reclaimed += 1;
        }
    }
    outcome(
        reclaimed == trials,
        format!("{reclaimed}/{trials} reclaimed ({draws} instances drawn)"),
    )
}

fn group_accs(logits: &LabeledLogits, p: &LabelPartition, gamma: f64) -> (f64, f64) {
    let pred = apply_gamma(logits, p, gamma).unwrap();
    let (mut s, mut ns, mut u, mut nu) = (0.0, 0.0, 0.0, 0.0);
    for (&y, &yhat) in logits.labels().iter().zip(&pred) {
        let hit = if y == yhat { 1.0 } else { 0.0 };
        if p.is_seen(y) {
            s += hit;
            ns += 1.0;
        } else {
            u += hit;
            nu += 1.0;
        }
    }
    (s / ns, u / nu)
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let mut violations = 0;
    let mut checked = 0;
    for _ in 0..200 {
        let (logits, p) = random_instance(&mut r, 200, 20);
        let curve = seen_unseen_curve(&logits, &p).unwrap();
        let t = curve.thresholds();
        let mut gammas = vec![t[0] - 1.0, t[t.len() - 1] + 1.0];
        gammas.extend_from_slice(t);
        gammas.extend(t.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        gammas.sort_by(f64::total_cmp);
        let accs: Vec<(f64, f64)> = gammas.iter().map(|&g| group_accs(&logits, &p, g)).collect();
        for w in accs.windows(2) {
            checked += 1;
            if w[1].0 > w[0].0 || w[1].1 < w[0].1 {
                violations += 1;
            }
        }
        for w in curve.points().windows(2) {
            checked += 1;
            if w[1].0 > w[0].0 || w[1].1 < w[0].1 {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in {checked} consecutive-pair checks over 200 instances"),
    )
}

fn criterion_6() -> Outcome {
    // Construction: dyadic values keep every sum exact, so only the final
    // divisions round.
    let mut r = rng(6);
    let mut exact = 0;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s_size = r.random_range(2..=8);
        let c = 2 * s_size - 1;
        let p = LabelPartition::new(c, 0..s_size).unwrap();
        let delta = f64::from(r.random_range(-64i32..=64)) / 8.0;
        let n = r.random_range(1..=50);
        let mut values = Array2::<f64>::zeros((n, c));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = r.random_range(0..s_size);
            labels.push(y);
            let mut next_absent = s_size;
            for k in 0..s_size {
                let v = f64::from(r.random_range(-64i32..=64)) / 8.0;
                values[[i, k]] = v;
                if k != y {
                    values[[i, next_absent]] = v - delta;
                    next_absent += 1;
                }
            }
            values[[i, y]] += 4.0;
        }
        let est = estimate_gamma_alg(&LabeledLogits::new(values, labels).unwrap(), &p).unwrap();
        worst = worst.max((est.value - delta).abs());
        if (est.value - delta).abs() <= 1e-12 {
            exact += 1;
        }
    }

    // Null: i.i.d. logits, so the average gap is zero in expectation.
    let mut within = 0;
    for seed in 0..1000u64 {
        let mut r = rng(1_000_000 + seed);
        let c = r.random_range(3..=12);
        let p = random_partition(&mut r, c);
        let p = if p.fine_tuning().len() < 2 {
            LabelPartition::new(c, [0, 1]).unwrap()
        } else {
            p
        };
        let n = r.random_range(20..=300);
        let s = p.fine_tuning();
        let labels: Vec<usize> = (0..n).map(|_| s[r.random_range(0..s.len())]).collect();
        let values = normal_matrix(&mut r, n, c, 1.0);
        let gaps: Vec<f64> = (0..n)
            .map(|i| {
                let row = values.row(i);
                let seen: Vec<f64> = s.iter().filter(|&&k| k != labels[i]).map(|&k| row[k]).collect();
                let absent: Vec<f64> = p.absent().iter().map(|&k| row[k]).collect();
                seen.iter().sum::<f64>() / seen.len() as f64 - absent.iter().sum::<f64>() / absent.len() as f64
            })
            .collect();
        let mean = gaps.iter().sum::<f64>() / n as f64;
        let sigma = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let est = estimate_gamma_alg(&LabeledLogits::new(values, labels).unwrap(), &p).unwrap();
        if est.value.abs() <= 4.0 * sigma / (n as f64).sqrt() {
            within += 1;
        }
    }
    outcome(
        exact == 100 && within >= 990,
        format!("recovery within 1e-12 {exact}/100 (max error {worst:.1e}), null within 4σ/√N {within}/1000"),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let r = match run_toy_pipeline(&ToySpec::default(), &toy_train_config(0), None) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let elapsed = start.elapsed();
    let (pre_u, ft_u) = (r.pretrained.acc_u_y.unwrap(), r.finetuned.acc_u_y.unwrap());
    let uu = r.finetuned.acc_u_u.unwrap();
    let yy = r.calibrated.acc_y_y.unwrap();
    let (dw_u, dw_s) = (
        r.delta_w_absent.as_ref().unwrap().mean_offdiag,
        r.delta_w_seen.as_ref().unwrap().mean_offdiag,
    );
    let (norm_s, norm_u) = (r.norms_finetuned.mean_seen_norm, r.norms_finetuned.mean_absent_norm);
    let checks = [
        ft_u < pre_u,
        uu >= 0.9,
        yy >= 0.9,
        dw_u > dw_s,
        norm_s >= norm_u,
        elapsed < Duration::from_secs(10),
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "(a) Acc_U/Y {pre_u:.3} -> {ft_u:.3}, (b) Acc_U/U {uu:.3}, (c) calibrated Acc_Y/Y {yy:.3}, \
             (d) ΔW sim U {dw_u:.3} vs S {dw_s:.3}, (e) norms S {norm_s:.3} vs U {norm_u:.3}, {elapsed:.2?}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut r = rng(8);
    let mut mismatches = 0;
    let mut total = 0;
    for _ in 0..100 {
        let c = r.random_range(2..=10);
        let d = r.random_range(1..=8);
        let n = r.random_range(c..=120);
        let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        labels[..c].copy_from_slice(&(0..c).collect::<Vec<_>>());
        let x = normal_matrix(&mut r, n, d, 1.0);
        let feats = LabeledFeatures::new(x.clone(), labels.clone()).unwrap();
        let restriction: Vec<usize> = {
            let k = r.random_range(1..=c);
            index::sample(&mut r, c, k).into_vec()
        };
        let means = class_means(&feats, &(0..c).collect::<Vec<_>>()).unwrap();
        let pred = ncm_predict(&feats, &means, &restriction).unwrap();

        let unit = |i: usize| {
            let row = x.row(i);
            let norm = row.dot(&row).sqrt();
            row.mapv(|v| v / norm)
        };
        let mut oracle_means: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
        for cls in 0..c {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == cls).collect();
            let mut m = Array1::<f64>::zeros(d);
            for &i in &members {
                m += &unit(i);
            }
            oracle_means.insert(cls, m / members.len() as f64);
        }
        for (i, &got) in pred.iter().enumerate() {
            let u = unit(i);
            let best = restriction
                .iter()
                .map(|&cls| {
                    let diff = &u - &oracle_means[&cls];
                    (diff.dot(&diff), cls)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap()
                .1;
            total += 1;
            if best != got {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches in {total} predictions over 100 instances"),
    )
}

fn random_orthogonal(r: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    // Gram-Schmidt on a Gaussian matrix.
    let a = normal_matrix(r, d, d, 1.0);
    let mut q = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut v = a.column(j).to_owned();
        for k in 0..j {
            let qk = q.column(k).to_owned();
            let proj = qk.dot(&v);
            v = v - qk * proj;
        }
        let norm = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / norm));
    }
    q
}

/// Feature-space form `‖Bᵀ A‖²_F / (‖Aᵀ A‖_F ‖Bᵀ B‖_F)` on row-normalized,
/// column-centered inputs.
fn oracle_cka(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let prep = |m: &Array2<f64>| {
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            let n = row.dot(&row).sqrt();
            row /= n;
        }
        let mean = out.mean_axis(ndarray::Axis(0)).unwrap();
        out - &mean
    };
    let (a, b) = (prep(a), prep(b));
    let fro2 = |m: Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
    fro2(b.t().dot(&a)) / (fro2(a.t().dot(&a)).sqrt() * fro2(b.t().dot(&b)).sqrt())
}

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    let (mut self_err, mut inv_err, mut oracle_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = r.random_range(3..=20);
        let da = r.random_range(2..=10);
        let db = r.random_range(2..=10);
        let a = normal_matrix(&mut r, n, da, 1.0);
        let b = normal_matrix(&mut r, n, db, 1.0);
        self_err = self_err.max((linear_cka(a.view(), a.view()).unwrap() - 1.0).abs());
        let base = linear_cka(a.view(), b.view()).unwrap();
        let qa = a.dot(&random_orthogonal(&mut r, da));
        let qb = b.dot(&random_orthogonal(&mut r, db));
        inv_err = inv_err.max((linear_cka(qa.view(), qb.view()).unwrap() - base).abs());
        oracle_err = oracle_err.max((oracle_cka(&a, &b) - base).abs());
    }
    outcome(
        self_err < 1e-12 && inv_err < 1e-9 && oracle_err < 1e-10,
        format!("|CKA(A,A)-1| {self_err:.2e}, invariance {inv_err:.2e}, vs feature-space form {oracle_err:.2e}"),
    )
}

fn criterion_10() -> Outcome {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    let mut zero_cases = 0;
    let mut zero_exact = 0;
    for case in 0..100 {
        let d = r.random_range(2..=6);
        let hd = r.random_range(1..=6);
        let c = r.random_range(2..=6);
        let model = MlpModel::new(
            normal_matrix(&mut r, hd, d, 0.7),
            LinearHead::new(normal_matrix(&mut r, c, hd, 0.7)).unwrap(),
            Activation::Linear,
        )
        .unwrap();
        let mut x = Array1::from_shape_fn(d, |_| normal(&mut r));
        let mut x_abs = Array1::from_shape_fn(d, |_| normal(&mut r));
        let orthogonal = case % 4 == 0;
        if orthogonal {
            // Disjoint supports make xᵀx' exactly zero.
            let cut = r.random_range(1..d);
            for k in 0..d {
                if k < cut {
                    x_abs[k] = 0.0;
                } else {
                    x[k] = 0.0;
                }
            }
        }
        let y = r.random_range(0..c);
        let lr = r.random_range(0.001..1.0);
        let s = absent_feature_shift(&model, (x.view(), y), x_abs.view(), lr).unwrap();
        for (p, a) in s.predicted.iter().zip(s.actual.iter()) {
            worst = worst.max((p - a).abs());
        }
        if orthogonal {
            zero_cases += 1;
            if s.predicted.iter().chain(s.actual.iter()).all(|&v| v == 0.0) {
                zero_exact += 1;
            }
        }
    }
    outcome(
        worst < 1e-10 && zero_exact == zero_cases,
        format!("max |predicted - actual| {worst:.2e} over 100 instances, exact zero {zero_exact}/{zero_cases}"),
    )
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_reclaim"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("reclaim {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();

    let (a, b) = (p("toy_a"), p("toy_b"));
    run_cli(&["toy", "--seed", "7", "--outdir", &a])?;
    run_cli(&["toy", "--seed", "7", "--outdir", &b])?;
    let (ca, cb) = (dir_contents(Path::new(&a)), dir_contents(Path::new(&b)));
    if ca != cb {
        return Err("toy output directories differ".into());
    }

    // Eight classes, four fine-tuned, so PCV has enough seen classes to split.
    let spec = "means=10:2;10:3;10:8;10:7;2:10;3:10;8:10;7:10\nstddev=0.3\n\
                shift=-1,1,-1,1,-1,1,-1,1\nsamples_per_class=40\nfine_tuning=0,2,4,6\nactivation=linear\n";
    let config = "learning_rate=0.01\nmomentum=0.5\nweight_decay=0\nepochs=20\nbatch_size=16\nmode=full\nseed=0\n";
    std::fs::write(p("spec.txt"), spec).map_err(|e| e.to_string())?;
    std::fs::write(p("config.txt"), config).map_err(|e| e.to_string())?;
    let fx = p("fixture");
    run_cli(&["toy", "--spec", &p("spec.txt"), "--config", &p("config.txt"), "--outdir", &fx])?;
    let fx = Path::new(&fx);
    let partition = io::load_partition(&fx.join("partition.txt")).map_err(|e| e.to_string())?;
    let x = io::load_matrix(&fx.join("target_train_features.csv")).map_err(|e| e.to_string())?;
    let labels = io::load_labels(&fx.join("target_train_labels.txt")).map_err(|e| e.to_string())?;
    let seen = LabeledFeatures::new(x, labels)
        .map_err(|e| e.to_string())?
        .filter_labels(|y| partition.is_seen(y));
    let (sx, sy) = seen.into_parts();
    io::save_matrix(&sx, &root.join("seen_features.csv")).map_err(|e| e.to_string())?;
    io::save_labels(&sy, &root.join("seen_labels.txt")).map_err(|e| e.to_string())?;

    let model = fx.join("model_pretrained.txt").to_string_lossy().into_owned();
    let part = fx.join("partition.txt").to_string_lossy().into_owned();
    let pcv_args = [
        "pcv",
        "--train-features",
        &p("seen_features.csv"),
        "--train-labels",
        &p("seen_labels.txt"),
        "--model",
        &model,
        "--partition",
        &part,
        "--config",
        &p("config.txt"),
        "--repeats",
        "3",
        "--seed",
        "11",
    ];
    let first = run_cli(&pcv_args)?;
    let second = run_cli(&pcv_args)?;
    if first != second {
        return Err("pcv outputs differ".into());
    }
    Ok(format!(
        "toy: {} files identical; pcv: {} identical bytes",
        ca.len(),
        first.len()
    ))
}

fn criterion_11() -> Outcome {
    match determinism() {
        Ok(detail) => outcome(true, detail),
        Err(detail) => outcome(false, detail),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 11] = [
        ("decomposition identity", criterion_1),
        ("gradient fidelity", criterion_2),
        ("exact AUSUC vs grid oracle", criterion_3),
        ("calibration reclaim", criterion_4),
        ("monotone trade-off", criterion_5),
        ("ALG consistency", criterion_6),
        ("toy reproduction", criterion_7),
        ("NCM oracle equivalence", criterion_8),
        ("CKA properties", criterion_9),
        ("one-step feature shift", criterion_10),
        ("determinism", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.passed {
            failed += 1;
        }
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status} {name}: {}", i + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
