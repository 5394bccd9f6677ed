//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line
//! (written straight to stderr so it shows without `--nocapture`).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ssresnet::data::{generate_synthetic, label_ratio_subset, stratified_split, Dataset, Manifest, ManifestEntry, SplitSpec, SynthSpec};
use ssresnet::gradcheck::{check, DEFAULT_STEP};
use ssresnet::losses::{mse_consistency, total_loss, weighted_cross_entropy, ClassWeights};
use ssresnet::metrics::MetricsReport;
use ssresnet::model::{ModelConfig, ParamGroup, SSResNet};
use ssresnet::optim::{adam_step, AdamState};
use ssresnet::rng::tags;
use ssresnet::tensor::{conv2d, ops};
use ssresnet::trainer::{make_minibatches, TrainConfig, Trainer};
use ssresnet::{RngState, Tensor64};
use ssresnet_cli::sweep::{run_sweep, SweepResult, SweepSpec};
use ssresnet_cli::RunConfig;

fn verdict(n: u32, name: &str, pass: bool, elapsed: Duration, detail: &str) {
    let line = format!(
        "ACCEPTANCE {n} {name}: {} ({:.1}s) {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

// ---------------------------------------------------------------- 1

fn random(n: usize, rng: &mut RngState) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

fn worst_error(shapes: &[&[usize]], seed: u64, f: &dyn Fn(&[Tensor64]) -> Tensor64) -> f64 {
    let mut rng = RngState::new(seed);
    let values: Vec<Vec<f64>> = shapes.iter().map(|s| random(s.iter().product(), &mut rng)).collect();
    assert!(values.iter().all(|v| v.len() <= 64));
    let leaves: Vec<Tensor64> = values.iter().zip(shapes).map(|(v, s)| Tensor64::param(v.clone(), s).unwrap()).collect();
    let out = f(&leaves);
    let target = Tensor64::new(random(out.numel(), &mut rng), out.shape()).unwrap();
    let reduce = |o: &Tensor64| ops::sum(&ops::square(&ops::sub(o, &target).unwrap()));
    reduce(&out).backward().unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..shapes.len() {
        let r = check(&values[i], &leaves[i].grad_or_zeros(), None, DEFAULT_STEP, |probe| {
            let xs: Vec<Tensor64> = (0..shapes.len())
                .map(|j| Tensor64::new(if j == i { probe.to_vec() } else { values[j].clone() }, shapes[j]).unwrap())
                .collect();
            reduce(&f(&xs)).item()
        });
        worst = worst.max(r.max_rel_error);
    }
    worst
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    type Case<'a> = (&'a str, Vec<&'a [usize]>, Box<dyn Fn(&[Tensor64]) -> Tensor64>);
    let m: &[usize] = &[3, 4];
    let cases: Vec<Case> = vec![
        ("add", vec![m, m], Box::new(|x| ops::add(&x[0], &x[1]).unwrap())),
        ("sub", vec![m, m], Box::new(|x| ops::sub(&x[0], &x[1]).unwrap())),
        ("scale", vec![m], Box::new(|x| ops::scale(&x[0], 0.3))),
        ("square", vec![m], Box::new(|x| ops::square(&x[0]))),
        ("sum", vec![m], Box::new(|x| ops::sum(&x[0]))),
        ("mean", vec![m], Box::new(|x| ops::mean(&x[0]))),
        ("relu", vec![m], Box::new(|x| ops::relu(&x[0]))),
        ("reshape", vec![m], Box::new(|x| x[0].reshape(&[4, 3]).unwrap())),
        ("softmax", vec![&[4, 5]], Box::new(|x| ops::softmax(&x[0]).unwrap())),
        ("log_softmax", vec![&[4, 5]], Box::new(|x| ops::log_softmax(&x[0]).unwrap())),
        ("pick_weighted_sum", vec![&[4, 5]], Box::new(|x| ops::pick_weighted_sum(&x[0], &[(0, 1, 2.0), (3, 4, -1.0)]).unwrap())),
        ("dropout", vec![&[2, 2, 3, 3]], Box::new(|x| ops::dropout(&x[0], 0.3, &mut RngState::new(1), true).unwrap())),
        ("batch_norm", vec![&[4, 2, 2, 3], &[2], &[2]], Box::new(|x| {
            ops::batch_norm(&x[0], &x[1], &x[2], &[0.0; 2], &[1.0; 2], true, 0.1, 1e-5).unwrap().output
        })),
        ("max_pool2d", vec![&[2, 2, 4, 4]], Box::new(|x| ops::max_pool2d(&x[0], 2, 2).unwrap())),
        ("global_avg_pool", vec![&[2, 3, 3, 3]], Box::new(|x| ops::global_avg_pool(&x[0]).unwrap())),
        ("dense", vec![&[4, 6], &[3, 6], &[3]], Box::new(|x| ops::dense(&x[0], &x[1], &x[2]).unwrap())),
        ("conv2d", vec![&[2, 2, 4, 4], &[3, 2, 3, 3], &[3]], Box::new(|x| conv2d(&x[0], &x[1], &x[2], 1, 1).unwrap())),
        ("conv2d_strided", vec![&[1, 2, 5, 5], &[2, 2, 3, 3], &[2]], Box::new(|x| conv2d(&x[0], &x[1], &x[2], 2, 0).unwrap())),
    ];
    let mut worst = ("", 0.0f64);
    for (i, (name, shapes, f)) in cases.iter().enumerate() {
        let e = worst_error(shapes, 100 + i as u64, f.as_ref());
        if e > worst.1 {
            worst = (name, e);
        }
    }

    // whole objective, every parameter
    let cfg = ModelConfig { input_size: 8, stem_channels: 2, path_channels: 2, n_shared_blocks: 1, m_sup_blocks: 1, k_unsup_blocks: 1, dropout_rate: 0.2, ..ModelConfig::default() };
    let model = SSResNet::<f64>::build(&cfg, &RngState::new(5)).unwrap();
    let x = Tensor64::new(random(64, &mut RngState::new(6)), &[1, 1, 8, 8]).unwrap();
    let weights = ClassWeights::new(vec![1.0, 2.0, 5.0]).unwrap();
    let objective = |m: &SSResNet<f64>| {
        let mut pass = m.begin_pass(true, &RngState::new(7));
        let z = m.shared_forward(&mut pass, &x).unwrap();
        let zs = m.supervised_forward(&mut pass, &z).unwrap();
        let zu = m.unsupervised_forward(&mut pass, &z).unwrap();
        let w = weighted_cross_entropy(&zs, &[Some(2)], &weights).unwrap();
        (total_loss(&w, &mse_consistency(&zs, &zu).unwrap(), 0.7).unwrap(), pass)
    };
    let (loss, pass) = objective(&model);
    loss.backward().unwrap();
    let grads = pass.grads();
    for (i, p) in model.params().iter().enumerate() {
        let idx: Vec<usize> = (0..p.data.len().min(64)).collect();
        let r = check(&p.data, &grads[i], Some(&idx), DEFAULT_STEP, |probe| {
            let mut m = model.clone();
            m.params_mut()[i].data = probe.to_vec();
            objective(&m).0.item()
        });
        if r.max_rel_error > worst.1 {
            worst = ("total_loss", r.max_rel_error);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst.1 < 1e-3 && elapsed < Duration::from_secs(60);
    verdict(1, "gradient correctness", pass, elapsed, &format!("worst relative error {:.2e} ({})", worst.1, worst.0));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_loss_oracles() {
    let start = Instant::now();
    let row = |v: &[f64]| Tensor64::new(v.to_vec(), &[1, v.len()]).unwrap();
    let ln3 = weighted_cross_entropy(&row(&[0.7, 0.7, 0.7]), &[Some(0)], &ClassWeights::uniform(3)).unwrap().item();
    let weighted = weighted_cross_entropy(&row(&[2.0, 0.0, 0.0]), &[Some(0)], &ClassWeights::new(vec![2.0, 1.0, 1.0]).unwrap()).unwrap().item();
    let m1 = mse_consistency(&row(&[1.0, 0.0, 0.0]), &row(&[0.0; 3])).unwrap().item();
    let a = Tensor64::new(vec![1.0, 0.0, 0.0, 0.0], &[2, 2]).unwrap();
    let b = Tensor64::new(vec![0.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    let m2 = mse_consistency(&a, &b).unwrap().item();
    let m0 = mse_consistency(&a, &a).unwrap().item();
    let s = Tensor64::scalar;
    let t1 = total_loss(&s(0.5), &s(0.25), 1.0).unwrap().item();
    let t2 = total_loss(&s(0.0), &s(0.1), 10.0).unwrap().item();
    let t3 = total_loss(&s(0.37), &s(9.0), 0.0).unwrap().item();
    let pass = (ln3 - 3f64.ln()).abs() < 1e-12
        && (weighted - 0.4791).abs() < 1e-3
        && m1 == 1.0 / 3.0
        && m2 == 0.5
        && m0 == 0.0
        && t1 == 0.75
        && t2 == 1.0
        && t3 == 0.37;
    verdict(2, "loss oracles", pass, start.elapsed(), &format!("ln3 case {ln3:.6}, weighted case {weighted:.6}, msel {m1} / {m2}, totals {t1} / {t2} / {t3}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_zero_lambda_collapse() {
    let start = Instant::now();
    let cfg = ModelConfig::default();
    let set = generate_synthetic(&SynthSpec { class_counts: vec![24, 24, 16], ..SynthSpec::default() }).unwrap();
    let (lab_m, unlab_m) = label_ratio_subset(&set.manifest, 0.5, 3).unwrap();
    let lab = set.dataset_for(&lab_m, cfg.input_size).unwrap();
    let unlab = set.dataset_for(&unlab_m, cfg.input_size).unwrap().without_labels();
    let train_cfg = TrainConfig {
        num_epochs: 3,
        minibatch_size: 16,
        seed: 21,
        lambda: ssresnet::LambdaSchedule { lambda_max: 0.0, ..TrainConfig::default().lambda },
        ..TrainConfig::default()
    };
    let init = SSResNet::<f32>::build(&cfg, &RngState::new(21)).unwrap();

    // two-path training with lambda_max = 0, recording the trajectory
    let mut trainer = Trainer::new(init.clone(), train_cfg.clone()).unwrap();
    let mut semi_traj = Vec::new();
    let mut unsup_fixed = true;
    for _ in 0..train_cfg.num_epochs {
        trainer.run_epoch(&lab, &unlab).unwrap();
        semi_traj.push(trainer.model.clone());
        unsup_fixed &= trainer.model.group_indices(ParamGroup::Unsup).iter().all(|&i| trainer.model.params()[i] == init.params()[i]);
    }

    // supervised-only loop: unsupervised path never evaluated nor updated
    let mut model = init.clone();
    let trained: Vec<usize> = [ParamGroup::Shared, ParamGroup::Sup].iter().flat_map(|&g| model.group_indices(g)).collect();
    let mut adam = AdamState::new(trained.iter().map(|&i| model.params()[i].data.len()), train_cfg.adam);
    let root = RngState::new(train_cfg.seed);
    let mut identical = true;
    for (epoch, semi) in semi_traj.iter().enumerate() {
        let batches = make_minibatches::<f32>(&lab, &unlab, train_cfg.minibatch_size, &mut root.path(&[tags::SHUFFLE, epoch as u64])).unwrap();
        for (i, batch) in batches.iter().enumerate() {
            let mut pass = model.begin_pass(true, &root.path(&[tags::DROPOUT, epoch as u64, i as u64]));
            let z = model.shared_forward(&mut pass, &batch.images).unwrap();
            let zs = model.supervised_forward(&mut pass, &z).unwrap();
            weighted_cross_entropy(&zs, &batch.labels, &train_cfg.class_weights).unwrap().backward().unwrap();
            let all = pass.grads();
            model.commit(pass);
            let names: Vec<String> = trained.iter().map(|&k| model.params()[k].name.clone()).collect();
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let grads: Vec<&[f32]> = trained.iter().map(|&k| all[k].as_slice()).collect();
            let mut params: Vec<&mut [f32]> =
                model.params_mut().iter_mut().enumerate().filter(|(k, _)| trained.contains(k)).map(|(_, p)| p.data.as_mut_slice()).collect();
            adam_step(&mut params, &grads, &names, &mut adam, train_cfg.learning_rate as f32).unwrap();
        }
        identical &= trained.iter().all(|&k| semi.params()[k] == model.params()[k]);
    }
    let elapsed = start.elapsed();
    let pass = identical && unsup_fixed && elapsed < Duration::from_secs(120);
    verdict(3, "lambda=0 collapse", pass, elapsed, &format!("bit-identical per epoch: {identical}, unsupervised parameters untouched: {unsup_fixed}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_metrics_oracle() {
    let start = Instant::now();
    let mut rng = RngState::new(77);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let c = [2, 3, 5][trial % 3];
        let (mut truths, mut preds) = (Vec::new(), Vec::new());
        for t in 0..c {
            for p in 0..c {
                let n = if rng.uniform() < 0.3 { 0 } else { rng.below(15) };
                truths.extend(std::iter::repeat_n(t, n));
                preds.extend(std::iter::repeat_n(p, n));
            }
        }
        if truths.is_empty() {
            truths.push(0);
            preds.push(1);
        }
        let r = MetricsReport::from_predictions(&truths, &preds, (0..c).map(|i| format!("c{i}")).collect()).unwrap();
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let n = truths.len();
        let acc = div((0..n).filter(|&i| truths[i] == preds[i]).count(), n);
        worst = worst.max((acc - r.accuracy).abs());
        let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
        for k in 0..c {
            let tp = (0..n).filter(|&i| truths[i] == k && preds[i] == k).count();
            let p = div(tp, preds.iter().filter(|&&v| v == k).count());
            let rc = div(tp, truths.iter().filter(|&&v| v == k).count());
            let f = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
            let m = &r.per_class[k];
            worst = worst.max((p - m.precision).abs()).max((rc - m.recall).abs()).max((f - m.fscore).abs());
            ps += p;
            rs += rc;
            fs += f;
        }
        let cf = c as f64;
        worst = worst.max((ps / cf - r.macro_precision).abs()).max((rs / cf - r.macro_recall).abs()).max((fs / cf - r.macro_fscore).abs());
    }
    let pass = worst <= 1e-9;
    verdict(4, "metrics oracle", pass, start.elapsed(), &format!("1000 matrices, max deviation {worst:.1e}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_split_fidelity() {
    let start = Instant::now();
    let mut entries = Vec::new();
    for (c, &n) in [8851usize, 9584, 108].iter().enumerate() {
        for i in 0..n {
            entries.push(ManifestEntry { path: PathBuf::from(format!("{c}/{i}.png")), label: Some(c), class_name: format!("k{c}") });
        }
    }
    let m = Manifest::new(entries, vec!["k0".into(), "k1".into(), "k2".into()], "");
    let (train, _) = stratified_split(&m, &SplitSpec { train_fraction: 0.7, seed: 0 }).unwrap();
    let counts = train.class_counts();
    let minority: Vec<ManifestEntry> = train.entries.iter().filter(|e| e.label == Some(2)).cloned().collect();
    let (lab, _) = label_ratio_subset(&Manifest::new(minority, m.class_names.clone(), ""), 0.05, 0).unwrap();
    let labeled = lab.len();
    let pass = counts == [6195, 6708, 75] && labeled == 3;
    verdict(5, "split fidelity", pass, start.elapsed(), &format!("train counts {counts:?}, labeled of 75: {labeled}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 6, 7

/// Default synthetic dataset on disk, split 70/30.
fn synthetic_split(dir: &Path) -> (Manifest, Manifest) {
    let set = generate_synthetic(&SynthSpec::default()).unwrap();
    let m = set.write(&dir.join("data")).unwrap();
    stratified_split(&m, &SplitSpec { train_fraction: 0.7, seed: 0 }).unwrap()
}

/// Reduced network at 16x16 so the multi-seed grids fit their time budgets.
const SWEEP_BASE: &str = "image_size=16\nstem_channels=8\npath_channels=8\nshared_blocks=1\nsup_blocks=1\nunsup_blocks=1\n\
num_epochs=20\nminibatch_size=64\nlearning_rate=0.001\nlambda_ramp_epochs=10\nlambda_shape=gaussian_rampup\n";

fn sweep(dir: &Path, extra: &str, train: &Manifest, test: &Manifest, ratio: f64, weights: &[f64], out: &str) -> SweepResult {
    let cfg = RunConfig::parse(&format!("{SWEEP_BASE}{extra}")).unwrap();
    let spec = SweepSpec { ratios: vec![ratio], weights: weights.to_vec(), seeds: 5, minority_class: None };
    let r = run_sweep(&cfg, train, test, &spec, &dir.join(out)).unwrap();
    assert_eq!(r.failures(), 0);
    r
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_6_semi_supervised_advantage() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = synthetic_split(dir.path());
    let semi = sweep(dir.path(), "lambda_max=1\n", &train, &test, 0.05, &[10.0], "semi");
    let base = sweep(dir.path(), "lambda_max=0\n", &train, &test, 0.05, &[10.0], "base");
    let minority = semi.minority_class;
    let f = |r: &SweepResult| mean(r.reports(0.05, 10.0).iter().map(|x| x.macro_fscore));
    let rec = |r: &SweepResult| mean(r.cells.iter().filter_map(|c| c.minority_recall(minority)));
    let (f_semi, f_base, r_semi, r_base) = (f(&semi), f(&base), rec(&semi), rec(&base));
    let elapsed = start.elapsed();
    let pass = f_semi > f_base && r_semi >= r_base && elapsed <= Duration::from_secs(15 * 60);
    verdict(
        6,
        "semi-supervised advantage",
        pass,
        elapsed,
        &format!("mean macroF {f_semi:.4} vs baseline {f_base:.4}; minority recall {r_semi:.4} vs {r_base:.4}"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_class_weight_direction() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = synthetic_split(dir.path());
    let weights = [2.0, 5.0, 10.0];
    let r = sweep(dir.path(), "lambda_max=1\n", &train, &test, 0.09, &weights, "weights");
    let recall: Vec<f64> = weights
        .iter()
        .map(|&w| mean(r.cells.iter().filter(|c| c.weight == w).filter_map(|c| c.minority_recall(r.minority_class))))
        .collect();
    let acc: Vec<f64> = weights.iter().map(|&w| mean(r.reports(0.09, w).iter().map(|x| x.accuracy))).collect();
    let elapsed = start.elapsed();
    let pass = recall.windows(2).all(|p| p[0] <= p[1]) && elapsed <= Duration::from_secs(20 * 60);
    verdict(
        7,
        "class-weight direction",
        pass,
        elapsed,
        &format!("minority recall by weight 2/5/10: {recall:.4?}; accuracy {acc:.4?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_overfit_sanity() {
    let start = Instant::now();
    let cfg = ModelConfig::default();
    let set = generate_synthetic(&SynthSpec { class_counts: vec![11, 11, 10], seed: 5, ..SynthSpec::default() }).unwrap();
    let data = set.to_dataset(cfg.input_size);
    assert_eq!(data.len(), 32);
    let model = SSResNet::<f32>::build(&cfg, &RngState::new(5)).unwrap();
    let mut t = Trainer::new(model, TrainConfig { num_epochs: 200, ..TrainConfig::default() }).unwrap();
    let empty = Dataset::empty(1, cfg.input_size);
    let mut reached = None;
    for _ in 0..200 {
        let r = t.run_epoch(&data, &empty).unwrap();
        if r.train_acc == 1.0 {
            reached = Some(r.epoch);
            break;
        }
    }
    let elapsed = start.elapsed();
    let pass = reached.is_some() && elapsed < Duration::from_secs(120);
    verdict(8, "overfit sanity", pass, elapsed, &format!("100% training accuracy at epoch {reached:?}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 9

fn cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_ssresnet")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// Every file under `dir` with its bytes; input paths recorded in
/// `inputs.txt` are made relative to `dir` so separate run roots compare.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let root = format!("{}/", dir.display());
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let mut bytes = std::fs::read(&p).unwrap();
                if p.ends_with("inputs.txt") {
                    bytes = String::from_utf8(bytes).unwrap().replace(&root, "").into_bytes();
                }
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_9_reproducibility() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let r = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    std::fs::write(r("cfg.txt"), "image_size=8\nstem_channels=4\npath_channels=4\nshared_blocks=1\nsup_blocks=1\nunsup_blocks=1\nnum_epochs=4\nminibatch_size=16\n").unwrap();
    std::fs::write(r("half.txt"), "image_size=8\nstem_channels=4\npath_channels=4\nshared_blocks=1\nsup_blocks=1\nunsup_blocks=1\nnum_epochs=2\nminibatch_size=16\n").unwrap();
    let mut same = Vec::new();
    for run in ["a", "b"] {
        let o = |s: &str| r(&format!("{run}/{s}"));
        cli(&["synth", "--out", &o("data"), "--counts", "30,30,10", "--size", "8", "--seed", "3"]);
        cli(&["split", "--manifest", &o("data/manifest.csv"), "--seed", "1", "--out", &o("split")]);
        cli(&["subset", "--manifest", &o("split/train.csv"), "--ratio", "0.4", "--seed", "2", "--out", &o("sub")]);
        cli(&["train", "--config", &r("cfg.txt"), "--labeled", &o("sub/labeled.csv"), "--unlabeled", &o("sub/unlabeled.csv"), "--test", &o("split/test.csv"), "--out", &o("run")]);
        cli(&["eval", "--checkpoint", &o("run/checkpoint.ssrn"), "--manifest", &o("split/test.csv"), "--report", &o("eval/report.txt")]);
        cli(&["sweep", "--config", &r("half.txt"), "--train", &o("split/train.csv"), "--test", &o("split/test.csv"), "--ratios", "0.3", "--weights", "2,4", "--seeds", "2", "--out", &o("sweep")]);
        // interrupted after two epochs, then resumed to four
        cli(&["train", "--config", &r("half.txt"), "--labeled", &o("sub/labeled.csv"), "--unlabeled", &o("sub/unlabeled.csv"), "--test", &o("split/test.csv"), "--out", &o("resumed")]);
        cli(&["train", "--config", &r("cfg.txt"), "--labeled", &o("sub/labeled.csv"), "--unlabeled", &o("sub/unlabeled.csv"), "--test", &o("split/test.csv"), "--out", &o("resumed"), "--resume"]);
        same.push(tree(&dir.path().join(run)));
    }
    let reruns_identical = same[0] == same[1];
    let a = |s: &str| std::fs::read(dir.path().join("a").join(s)).unwrap();
    let resume_identical = ["train_log.csv", "checkpoint.ssrn", "report.txt", "report.json"]
        .iter()
        .all(|f| a(&format!("run/{f}")) == a(&format!("resumed/{f}")));
    let pass = reruns_identical && resume_identical;
    verdict(
        9,
        "reproducibility",
        pass,
        start.elapsed(),
        &format!("{} files identical across reruns: {reruns_identical}; resumed run equals uninterrupted: {resume_identical}", same[0].len()),
    );
    assert!(pass);
}
