use ehd_core::autodiff::{Graph, SoftMask, Tensor};
use ehd_core::data::{planted_spec, sample_instances, sliding_windows, synth_hawkes};
use ehd_core::distiller::{
    argmax_bits, cardinality_loss, constraint_loss, distill, instance_loss_with_noise, rebuild_history,
    rebuilt_log_perplexity, selection_log_probs, train_distiller, DistillResult, DistillTrainConfig, Distiller,
    DistillerConfig, LossMode,
};
use ehd_core::eval::spearman;
use ehd_core::event::{DistillInstance, Event};
use ehd_core::mtpp::{layout, log_perplexity, train_mtpp, FullyNn, FullyNnConfig, MtppTrainConfig};
use ehd_core::parallel::Workers;
use ehd_core::rng;
use proptest::prelude::*;
use rand::Rng;

fn tiny(marks: usize) -> DistillerConfig {
    DistillerConfig {
        input: 6,
        hidden: 8,
        qkv: 4,
        heads: 2,
        history_depth: 1,
        future_depth: 1,
        ffn: 8,
        ..DistillerConfig::new(marks, 10.0)
    }
}

fn mtpp(marks: usize, seed: u64) -> FullyNn {
    let cfg = FullyNnConfig {
        marks,
        layers: 1,
        history: 5,
        intensity: 4,
        time_scale: 1.0,
    };
    let mut m = FullyNn::new(cfg, seed).unwrap();
    m.freeze();
    m
}

/// Overwrites the zero-initialised output layer so that logits depend on the input.
fn randomize_head(d: &mut Distiller, seed: u64) {
    let mut r = rng::seeded(seed);
    for name in ["head.out.w", "head.out.b"] {
        let i = d
            .params()
            .index_of(name)
            .unwrap_or_else(|| panic!("no parameter {name}"));
        for x in d.params_mut().value_mut(i).data_mut() {
            *x = r.gen_range(-0.8..0.8);
        }
    }
}

fn instance(n: usize, m: usize, marks: usize, seed: u64) -> DistillInstance {
    let mut r = rng::seeded(seed);
    let mut t = 0.0;
    let mut next = |r: &mut rng::Rng| {
        t += r.gen_range(0.2..1.5);
        Event::new(r.gen_range(0..marks), t)
    };
    let history = (0..n).map(|_| next(&mut r)).collect();
    let future = (0..m).map(|_| next(&mut r)).collect();
    DistillInstance {
        seq_id: seed,
        offset: 0,
        history,
        future,
    }
}

fn values(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

#[test]
fn history_encoding_is_permutation_equivariant() {
    let d = Distiller::new(tiny(3), 4).unwrap();
    let inst = instance(7, 3, 3, 1);
    let perm = [3usize, 0, 6, 2, 5, 1, 4];
    let permuted: Vec<Event> = perm.iter().map(|&i| inst.history[i]).collect();
    let g = Graph::new();
    let (h, _) = d.encode(&g, &inst.history, &inst.future, 0.0).unwrap();
    let (hp, _) = d.encode(&g, &permuted, &inst.future, 0.0).unwrap();
    let (h, hp) = (h.value(), hp.value());
    let w = h.shape()[1];
    for (row, &src) in perm.iter().enumerate() {
        for c in 0..w {
            let a = hp.data()[row * w + c];
            let b = h.data()[src * w + c];
            assert!((a - b).abs() < 1e-12, "row {row} col {c}: {a} vs {b}");
        }
    }
}

#[test]
fn encoder_outputs_have_hidden_width() {
    let d = Distiller::new(DistillerConfig::new(3, 10.0), 0).unwrap();
    let inst = instance(5, 4, 3, 2);
    let g = Graph::new();
    let (h, f) = d.encode(&g, &inst.history, &inst.future, 0.0).unwrap();
    assert_eq!(h.shape(), vec![5, 64]);
    assert_eq!(f.shape(), vec![4, 64]);
}

#[test]
fn encoder_gradient_reaches_used_mark_embeddings() {
    let d = Distiller::new(tiny(4), 1).unwrap();
    let mut inst = instance(5, 3, 2, 3);
    inst.future[0].mark = 2;
    let g = Graph::new();
    let (h, f) = d.encode(&g, &inst.history, &inst.future, 0.0).unwrap();
    let y = h.sum().add(f.sum().scale(0.5)).unwrap();
    g.backward(y).unwrap();
    let grads = g.param_grads(d.params());
    let emb = d.params().index_of("mark_embedding").unwrap();
    let ge = grads[emb].as_ref().expect("embedding gradient");
    let width = d.config().input;
    let used: Vec<usize> = inst.history.iter().chain(&inst.future).map(|e| e.mark).collect();
    for m in 0..4 {
        let norm: f64 = ge.data()[m * width..(m + 1) * width].iter().map(|x| x.abs()).sum();
        if used.contains(&m) {
            assert!(norm > 0.0, "mark {m} got no gradient");
        } else {
            assert_eq!(norm, 0.0, "unused mark {m} got gradient");
        }
    }
}

#[test]
fn zero_initialised_head_gives_even_odds() {
    let d = Distiller::new(tiny(3), 9).unwrap();
    let inst = instance(6, 2, 3, 4);
    for p in selection_log_probs(&d, &inst).unwrap() {
        assert_eq!(p, [0.5f64.ln(), 0.5f64.ln()]);
    }
}

#[test]
fn selection_probabilities_sum_to_one() {
    let mut d = Distiller::new(tiny(3), 9).unwrap();
    randomize_head(&mut d, 1);
    for seed in 0..5 {
        let inst = instance(8, 3, 3, seed);
        for p in selection_log_probs(&d, &inst).unwrap() {
            assert!((p[0].exp() + p[1].exp() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn selection_rejects_bad_input() {
    let d = Distiller::new(DistillerConfig { max_len: 4, ..tiny(2) }, 0).unwrap();
    let g = Graph::new();
    let long = instance(5, 1, 2, 0);
    assert!(d.encode(&g, &long.history, &long.future, 0.0).is_err());
    assert!(d.encode(&g, &[], &long.future, 0.0).is_err());
    let bad = [Event::new(2, 1.0)];
    assert!(d.encode(&g, &bad, &long.future, 0.0).is_err());
}

fn hard_keep<'g>(g: &'g Graph, keep: &[f64]) -> ehd_core::autodiff::Var<'g> {
    g.input(Tensor::matrix(keep.len(), 1, keep.to_vec()).unwrap())
}

#[test]
fn rebuild_drops_distilled_events_and_rediffs_times() {
    let model = mtpp(2, 0);
    let history = vec![Event::new(0, 1.0), Event::new(1, 3.0), Event::new(0, 6.0)];
    let g = Graph::new();
    let r = rebuild_history(&model, &g, &history, hard_keep(&g, &[1.0, 0.0, 1.0]), 0.0).unwrap();
    assert_eq!(r.kept, vec![0, 2]);
    assert_eq!(r.marks, vec![0, 0]);
    assert_eq!(values(&r.intervals().unwrap().unwrap().value()), vec![1.0, 5.0]);
}

#[test]
fn rebuild_with_nothing_distilled_is_bit_exact() {
    let model = mtpp(3, 1);
    for seed in 0..5 {
        let inst = instance(9, 4, 3, seed);
        let origin = inst.origin();
        let g = Graph::new();
        let r = rebuild_history(&model, &g, &inst.history, hard_keep(&g, &[1.0; 9]), origin).unwrap();
        let (_, intervals) = layout(&inst.history, origin);
        assert_eq!(values(&r.intervals().unwrap().unwrap().value()), intervals);
        let rebuilt = rebuilt_log_perplexity(&model, &g, &r, &inst.future, origin)
            .unwrap()
            .item();
        let direct = log_perplexity(&model, &inst.future, &inst.history, origin).unwrap();
        assert_eq!(rebuilt.to_bits(), direct.to_bits());
    }
}

#[test]
fn rebuild_with_everything_distilled_scores_the_future_alone() {
    let model = mtpp(2, 2);
    let inst = instance(4, 3, 2, 7);
    let origin = inst.origin();
    let g = Graph::new();
    let r = rebuild_history(&model, &g, &inst.history, hard_keep(&g, &[0.0; 4]), origin).unwrap();
    assert!(r.is_empty());
    let rebuilt = rebuilt_log_perplexity(&model, &g, &r, &inst.future, origin)
        .unwrap()
        .item();
    let direct = log_perplexity(&model, &inst.future, &[], origin).unwrap();
    assert!((rebuilt - direct).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn rebuilt_intervals_match_kept_time_differences(seed in 0u64..10_000, bits in proptest::collection::vec(any::<bool>(), 8)) {
        let model = mtpp(3, 3);
        let inst = instance(8, 2, 3, seed);
        let origin = inst.origin();
        let keep: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let g = Graph::new();
        let r = rebuild_history(&model, &g, &inst.history, hard_keep(&g, &keep), origin).unwrap();
        let kept: Vec<&Event> = inst.history.iter().zip(&bits).filter(|(_, &b)| b).map(|(e, _)| e).collect();
        prop_assert_eq!(r.kept_count(), kept.len());
        if let Some(iv) = r.intervals().unwrap() {
            let iv = values(&iv.value());
            let mut prev = origin;
            for (k, e) in kept.iter().enumerate() {
                prop_assert!((iv[k] - (e.time - prev)).abs() < 1e-12);
                prev = e.time;
            }
            for w in r.kept.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }
    }
}

#[test]
fn perplexity_gradient_reaches_the_keep_mask() {
    let model = mtpp(3, 4);
    let inst = instance(6, 3, 3, 11);
    let origin = inst.origin();
    let g = Graph::new();
    let keep = hard_keep(&g, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
    let r = rebuild_history(&model, &g, &inst.history, keep, origin).unwrap();
    let lp = rebuilt_log_perplexity(&model, &g, &r, &inst.future, origin).unwrap();
    g.backward(lp).unwrap();
    let grad = keep.grad();
    assert!(r.kept.iter().any(|&i| grad.data()[i] != 0.0), "{grad:?}");
}

fn full_keep_noise(n: usize) -> Tensor {
    Tensor::matrix(n, 2, (0..n).flat_map(|_| [60.0, 0.0]).collect()).unwrap()
}

#[test]
fn constraint_loss_is_log_two_when_nothing_is_distilled() {
    let model = mtpp(3, 5);
    let d = Distiller::new(tiny(3), 0).unwrap();
    let inst = instance(6, 3, 3, 2);
    let full = log_perplexity(&model, &inst.future, &inst.history, inst.origin()).unwrap();
    let cfg = DistillTrainConfig {
        loss: LossMode::ConstraintOnly,
        ..Default::default()
    };
    let noise = vec![full_keep_noise(6); 4];
    let g = Graph::new();
    let terms = instance_loss_with_noise(&g, &d, &model, &inst, full, &cfg, &noise, true).unwrap();
    assert_eq!(terms.left_fraction, 1.0);
    assert_eq!(terms.dppl_left, 0.0);
    assert!((terms.loss.item() - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn constraint_loss_is_flat_when_every_sample_is_satisfied() {
    let g = Graph::new();
    let dppls: Vec<_> = [-1.0, -0.9, -3.0].iter().map(|&v| g.input(Tensor::scalar(v))).collect();
    let lc = constraint_loss(&dppls, 0.5).unwrap();
    assert_eq!(lc.item(), 0.0);
    g.backward(lc).unwrap();
    for d in &dppls {
        assert_eq!(d.grad().data(), &[0.0]);
    }
}

#[test]
fn active_hinge_sends_gradient_to_the_selection_model() {
    let model = mtpp(3, 6);
    let mut d = Distiller::new(tiny(3), 1).unwrap();
    randomize_head(&mut d, 3);
    let inst = instance(6, 3, 3, 5);
    let full = log_perplexity(&model, &inst.future, &inst.history, inst.origin()).unwrap();
    let cfg = DistillTrainConfig {
        loss: LossMode::ConstraintOnly,
        ..Default::default()
    };
    let g = Graph::new();
    let terms = instance_loss_with_noise(&g, &d, &model, &inst, full, &cfg, &[full_keep_noise(6)], true).unwrap();
    assert!(terms.constraint > 0.0);
    g.backward(terms.loss).unwrap();
    let grads = g.param_grads(d.params());
    let total: f64 = grads
        .iter()
        .flatten()
        .flat_map(|t| t.data().iter())
        .map(|x| x.abs())
        .sum();
    assert!(total > 0.0);
}

fn mask<'g>(g: &'g Graph, distilled: &[bool]) -> SoftMask<'g> {
    let data = distilled
        .iter()
        .flat_map(|&b| if b { [0.0, 1.0] } else { [1.0, 0.0] })
        .collect();
    SoftMask {
        values: g.constant(Tensor::matrix(distilled.len(), 2, data).unwrap()),
        sample: 0,
    }
}

#[test]
fn cardinality_loss_is_the_distilled_fraction() {
    let g = Graph::new();
    assert_eq!(cardinality_loss(&[mask(&g, &[false; 12])]).unwrap().item(), 0.0);
    assert_eq!(cardinality_loss(&[mask(&g, &[true; 12])]).unwrap().item(), 1.0);
    let mut three = [false; 12];
    three[1] = true;
    three[5] = true;
    three[11] = true;
    assert_eq!(cardinality_loss(&[mask(&g, &three)]).unwrap().item(), 0.25);
    let both = cardinality_loss(&[mask(&g, &three), mask(&g, &[true; 12])])
        .unwrap()
        .item();
    assert_eq!(both, 0.625);
}

/// Largest relative error between backprop and a fourth-order central
/// difference over every selection-model parameter, for the smooth proxy of
/// `alpha * L_n + L_c` with fixed noise.
fn total_loss_gradient_error(loss: LossMode) -> f64 {
    let model = mtpp(3, 7);
    let inst = instance(5, 3, 3, 8);
    let full = log_perplexity(&model, &inst.future, &inst.history, inst.origin()).unwrap();
    let cfg = DistillTrainConfig {
        loss,
        alpha: 0.7,
        ..Default::default()
    };
    // keep events 0, 2, 3 and distill 1, 4, far from the 1/2 boundary
    let noise = [Tensor::matrix(5, 2, vec![6.0, 0.0, 0.0, 6.0, 6.0, 0.0, 6.0, 0.0, 0.0, 6.0]).unwrap()];
    let mut d = Distiller::new(tiny(3), 2).unwrap();
    randomize_head(&mut d, 4);
    let value = |d: &Distiller| {
        let g = Graph::new();
        instance_loss_with_noise(&g, d, &model, &inst, full, &cfg, &noise, false)
            .unwrap()
            .loss
            .item()
    };
    let g = Graph::new();
    let terms = instance_loss_with_noise(&g, &d, &model, &inst, full, &cfg, &noise, false).unwrap();
    assert!(terms.constraint > 0.0, "hinge inactive");
    g.backward(terms.loss).unwrap();
    let analytic = g.param_grads(d.params());
    let h = 1e-4;
    let mut worst = 0.0f64;
    for i in 0..d.params().len() {
        for j in 0..d.params().get(i).value.len() {
            let x0 = d.params().get(i).value.data()[j];
            let mut at = |dx: f64| {
                d.params_mut().value_mut(i).data_mut()[j] = x0 + dx;
                value(&d)
            };
            let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            d.params_mut().value_mut(i).data_mut()[j] = x0;
            let a = analytic[i].as_ref().map_or(0.0, |t| t.data()[j]);
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8));
        }
    }
    worst
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    for mode in [LossMode::Full, LossMode::ConstraintOnly, LossMode::CardinalityOnly] {
        let err = total_loss_gradient_error(mode);
        assert!(err < 1e-4, "{mode}: {err}");
    }
}

#[test]
fn argmax_partition_ignores_monotone_transforms() {
    let mut r = rng::seeded(3);
    for _ in 0..200 {
        let lp: Vec<[f64; 2]> = (0..10)
            .map(|_| [r.gen_range(-5.0..0.0), r.gen_range(-5.0..0.0)])
            .collect();
        let bits = argmax_bits(&lp);
        for f in [
            |x: f64| x.exp(),
            |x: f64| 3.0 * x + 7.0,
            |x: f64| x.atan(),
            |x: f64| x.powi(3),
        ] {
            let t: Vec<[f64; 2]> = lp.iter().map(|p| [f(p[0]), f(p[1])]).collect();
            assert_eq!(argmax_bits(&t), bits);
        }
    }
}

#[test]
fn distill_is_deterministic_and_partitions_the_history() {
    let model = mtpp(3, 8);
    let mut d = Distiller::new(tiny(3), 3).unwrap();
    randomize_head(&mut d, 5);
    for seed in 0..6 {
        let inst = instance(9, 3, 3, seed);
        let a = distill(&d, &model, &inst).unwrap();
        let b = distill(&d, &model, &inst).unwrap();
        assert_eq!(a, b);
        let bits = a.bits();
        let h_d = inst.distilled(&bits);
        let h_l = inst.kept(&bits);
        assert_eq!(h_d.len() + h_l.len(), inst.history.len());
        assert_eq!(a.card_d, h_d.len());
        let mut merged: Vec<Event> = h_d.iter().chain(&h_l).copied().collect();
        merged.sort_by(|x, y| x.time.total_cmp(&y.time));
        assert_eq!(merged, inst.history);
        assert!((a.metric - (a.dppl_d - a.dppl_l)).abs() < 1e-12);
        let replay = DistillResult::from_bits(&model, &inst, &bits).unwrap();
        assert_eq!(replay, a);
    }
}

#[test]
fn checkpoint_reload_reproduces_the_selection_distribution() {
    let mut d = Distiller::new(tiny(3), 6).unwrap();
    randomize_head(&mut d, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ckpt");
    d.save(&path).unwrap();
    let back = Distiller::load(&path).unwrap();
    assert_eq!(back.config(), d.config());
    let inst = instance(7, 4, 3, 1);
    let a = selection_log_probs(&d, &inst).unwrap();
    let b = selection_log_probs(&back, &inst).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x[0].to_bits(), y[0].to_bits());
        assert_eq!(x[1].to_bits(), y[1].to_bits());
    }
}

/// A briefly trained intensity model and training windows from planted data.
fn planted_setup() -> (FullyNn, Vec<DistillInstance>) {
    let spec = planted_spec(60, 40.0, 3);
    let seqs: Vec<_> = synth_hawkes(&spec).unwrap().into_iter().map(|s| s.sequence).collect();
    let mut model = FullyNn::new(
        FullyNnConfig {
            marks: 3,
            layers: 1,
            history: 8,
            intensity: 8,
            time_scale: 1.0,
        },
        0,
    )
    .unwrap();
    let cfg = MtppTrainConfig {
        steps: 300,
        batch: 8,
        lr: 0.005,
        warmup: 20,
        seed: 0,
    };
    train_mtpp(&mut model, &seqs, &cfg, &Workers::single()).unwrap();
    model.freeze();
    let (inst, _) = sliding_windows(&seqs, 4, 10).unwrap();
    (model, sample_instances(&inst, 300, 0).unwrap())
}

#[test]
fn constraint_only_training_lowers_left_history_dppl() {
    let (model, train) = planted_setup();
    let mut d = Distiller::new(
        DistillerConfig {
            time_span: 14.0,
            ..tiny(3)
        },
        0,
    )
    .unwrap();
    let cfg = DistillTrainConfig {
        steps: 200,
        batch: 8,
        lr: 0.001,
        warmup: 10,
        alpha: 0.0,
        loss: LossMode::ConstraintOnly,
        log_every: 20,
        ..Default::default()
    };
    let rep = train_distiller(&mut d, &model, &train, &cfg, &Workers::single()).unwrap();
    let steps: Vec<f64> = (0..rep.dppl_left.len()).map(|s| s as f64).collect();
    let rho = spearman(&steps, &rep.dppl_left).unwrap();
    assert!(rho < -0.5, "spearman {rho}");

    // the trained selection depends on the future
    let inst = &train[0];
    let before = selection_log_probs(&d, inst).unwrap();
    let mut moved = inst.clone();
    moved.future[0].mark = (moved.future[0].mark + 1) % 3;
    let after = selection_log_probs(&d, &moved).unwrap();
    let change = before
        .iter()
        .zip(&after)
        .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
        .fold(0.0, f64::max);
    assert!(change > 1e-6, "{change}");
}
