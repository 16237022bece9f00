use std::path::PathBuf;

use ehd_core::autodiff::primitive_suite;
use ehd_core::config::KvConfig;
use ehd_core::data::{
    ingest, planted_spec, read_instances, sample_instances, sliding_windows, split_and_sample, split_of, synth_hawkes,
    write_instances, DatasetManifest, Format, Split, WindowStats,
};
use ehd_core::distiller::{train_distiller, DistillTrainConfig, Distiller, DistillerConfig};
use ehd_core::eval::{
    case_length_and_trace, case_mark_percentage, eval_card_diff, eval_dppl_diff, left_fraction_csv, lengths_csv,
    marks_csv, run_chd, shifts_csv, timing_harness, to_json, traces_csv, EvalSettings, Task,
};
use ehd_core::event::{DistillInstance, EventSequence};
use ehd_core::mtpp::{mean_nll, train_mtpp, FullyNn, FullyNnConfig, MtppTrainConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::context::{read, sha256_file, stamped, write, Context};
use crate::error::{config, CliError, Result};

const SPLITS: [&str; 4] = ["train", "eval", "test", "test_sampled"];

/// Serializes `value` with a `config_digest` field added at the top level.
fn stamped_json<T: Serialize>(digest: &str, value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(ehd_core::EhdError::from)?;
    if let Value::Object(map) = &mut v {
        map.insert("config_digest".into(), Value::String(digest.to_string()));
    }
    Ok(to_json(&v)?)
}

fn tags(digest: &str) -> KvConfig {
    let mut t = KvConfig::new();
    t.set("run.config_digest", digest);
    t
}

fn sequences_jsonl(seqs: &[EventSequence]) -> Result<String> {
    let mut s = String::new();
    for seq in seqs {
        let events: Vec<(usize, f64)> = seq.events.iter().map(|e| (e.mark, e.time)).collect();
        let line = json!({ "events": events, "t0": seq.t0, "t_end": seq.t_end });
        s.push_str(&serde_json::to_string(&line).map_err(ehd_core::EhdError::from)?);
        s.push('\n');
    }
    Ok(s)
}

fn instances_jsonl(instances: &[DistillInstance]) -> Result<String> {
    let mut buf = Vec::new();
    write_instances(&mut buf, instances)?;
    Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
}

fn check_marks(ctx: &Context, key: &str, marks: usize) -> Result<()> {
    let ours: usize = ctx.get(key)?;
    if ours != marks {
        return Err(CliError::Mismatch(format!(
            "{key} is {ours} but the dataset has {marks} marks"
        )));
    }
    Ok(())
}

fn tail_mean(xs: &[f64], n: usize) -> Option<f64> {
    let tail = &xs[xs.len().saturating_sub(n)..];
    (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
}

pub fn synth_gen(ctx: &mut Context) -> Result<()> {
    let seed = ctx.seed("synth.seed")?;
    ctx.derive("synth.seed", seed);
    let spec = planted_spec(ctx.get("synth.sequences")?, ctx.get("synth.horizon")?, seed);
    let out = ctx.path("synth.out")?;
    let labels = out.with_extension("planted.jsonl");
    let resolved = out.with_file_name("synth-gen.resolved.cfg");
    ctx.claim(out.clone())?;
    ctx.claim(labels.clone())?;
    ctx.claim(resolved.clone())?;
    ctx.prepare_outputs()?;
    let digest = ctx.digest();

    let sims = synth_hawkes(&spec)?;
    let seqs: Vec<EventSequence> = sims.iter().map(|s| s.sequence.clone()).collect();
    let mut planted = String::new();
    for s in &sims {
        let bits: Vec<u8> = s.planted.iter().map(|&b| u8::from(b)).collect();
        planted.push_str(&json!({ "planted": bits }).to_string());
        planted.push('\n');
    }
    write(&out, stamped(&digest, &sequences_jsonl(&seqs)?).as_bytes())?;
    write(&labels, stamped(&digest, &planted).as_bytes())?;
    ctx.write_resolved(&resolved)?;
    let events: usize = seqs.iter().map(EventSequence::len).sum();
    println!(
        "{} sequences, {events} events, {} marks -> {}",
        seqs.len(),
        spec.params.marks(),
        out.display()
    );
    Ok(())
}

pub fn prep_data(ctx: &mut Context) -> Result<()> {
    let marks: usize = ctx.get("data.marks")?;
    let format: Format = ctx.get("data.format")?;
    let input = ctx.path("data.input")?;
    let name: String = ctx.get("data.name")?;
    let len_history: usize = ctx.get("data.len_history")?;
    let len_future: usize = ctx.get("data.len_future")?;
    let sample: usize = ctx.get("data.test_sample")?;
    let seed = ctx.seed("data.seed")?;
    ctx.derive("data.seed", seed);
    let names = ctx.cfg.get_str("data.mark_names").unwrap_or_default().to_string();
    let mark_names: Vec<String> = if names.trim().is_empty() {
        Vec::new()
    } else {
        names.split(',').map(|s| s.trim().to_string()).collect()
    };
    if !mark_names.is_empty() && mark_names.len() != marks {
        return Err(config(format!(
            "data.mark_names has {} names for {marks} marks",
            mark_names.len()
        )));
    }

    let mut files: Vec<PathBuf> = vec![ctx.data_file("sequences.jsonl")?];
    for s in SPLITS {
        files.push(ctx.data_file(&format!("{s}.jsonl"))?);
    }
    let manifest_path = ctx.data_file("manifest.json")?;
    let resolved = ctx.data_file("prep-data.resolved.cfg")?;
    for f in files.iter().chain([&manifest_path, &resolved]) {
        ctx.claim(f.clone())?;
    }
    ctx.prepare_outputs()?;
    let digest = ctx.digest();

    let ingested = ingest(&input, format, &name, marks)?;
    let (instances, skipped) = sliding_windows(&ingested.sequences, len_future, len_history)?;
    let total = instances.len();
    let test = instances.iter().filter(|i| split_of(i.seq_id) == Split::Test).count();
    if sample > test {
        log::warn!("data.test_sample {sample} exceeds the {test} test instances; sampling all of them");
    }
    let splits = split_and_sample(instances, sample.min(test), seed)?;

    let mut manifest: DatasetManifest = ingested.manifest;
    manifest.mark_names = mark_names;
    manifest.windows = Some(WindowStats {
        len_future,
        len_history,
        instances: total,
        skipped_sequences: skipped,
        train: splits.train.len(),
        eval: splits.eval.len(),
        test: splits.test.len(),
        test_sampled: splits.test_sampled.len(),
    });
    write(
        &files[0],
        stamped(&digest, &sequences_jsonl(&ingested.sequences)?).as_bytes(),
    )?;
    for (path, part) in files[1..]
        .iter()
        .zip([&splits.train, &splits.eval, &splits.test, &splits.test_sampled])
    {
        write(path, stamped(&digest, &instances_jsonl(part)?).as_bytes())?;
    }
    write(&manifest_path, stamped_json(&digest, &manifest)?.as_bytes())?;
    ctx.write_resolved(&resolved)?;
    println!(
        "{} sequences, {} events, {total} instances (train {}, eval {}, test {}, sampled {}), {skipped} sequences too short",
        manifest.sequences,
        manifest.events,
        splits.train.len(),
        splits.eval.len(),
        splits.test.len(),
        splits.test_sampled.len()
    );
    Ok(())
}

fn read_sequences(ctx: &Context, m: &DatasetManifest) -> Result<Vec<EventSequence>> {
    let path = ctx.data_file("sequences.jsonl")?;
    read(&path, "prep-data")?;
    Ok(ingest(&path, Format::Jsonl, &m.name, m.marks)?.sequences)
}

fn read_split(ctx: &Context, split: &str) -> Result<Vec<DistillInstance>> {
    if !SPLITS.contains(&split) {
        return Err(config(format!("unknown split {split:?} (expected one of {SPLITS:?})")));
    }
    let text = read(&ctx.data_file(&format!("{split}.jsonl"))?, "prep-data")?;
    Ok(read_instances(text.as_bytes())?)
}

/// Instances from the split in `key`, cut to `eval.limit`.
fn eval_instances(ctx: &Context, key: &str) -> Result<Vec<DistillInstance>> {
    let split: String = ctx.get(key)?;
    let mut insts = read_split(ctx, &split)?;
    let limit: usize = ctx.get("eval.limit")?;
    if limit > 0 {
        insts.truncate(limit);
    }
    if insts.is_empty() {
        return Err(CliError::Core(ehd_core::EhdError::InvalidData(format!(
            "split {split} has no instances"
        ))));
    }
    Ok(insts)
}

pub fn train_mtpp_cmd(ctx: &mut Context) -> Result<()> {
    let m = ctx.manifest()?;
    ctx.derive("mtpp.marks", m.marks);
    ctx.derive_f64("mtpp.time_scale", m.interval_scale);
    let seed = ctx.seed("mtpp.seed")?;
    ctx.derive("mtpp.seed", seed);
    check_marks(ctx, "mtpp.marks", m.marks)?;
    let arch = FullyNnConfig::from_kv(&ctx.cfg)?;
    let train = MtppTrainConfig::from_kv(&ctx.cfg)?;
    let ckpt = ctx.run_file("mtpp.ckpt")?;
    let report_path = ctx.run_file("train-mtpp.json")?;
    let resolved = ctx.run_file("train-mtpp.resolved.cfg")?;
    for p in [&ckpt, &report_path, &resolved] {
        ctx.claim(p.clone())?;
    }
    let seqs = read_sequences(ctx, &m)?;
    ctx.prepare_outputs()?;
    let digest = ctx.digest();

    let pick = |want: Split| -> Vec<EventSequence> {
        seqs.iter()
            .enumerate()
            .filter(|(i, _)| split_of(*i as u64) == want)
            .map(|(_, s)| s.clone())
            .collect()
    };
    let (train_seqs, eval_seqs) = (pick(Split::Train), pick(Split::Eval));
    let mut model = FullyNn::new(arch, train.seed)?;
    let report = train_mtpp(&mut model, &train_seqs, &train, &ctx.workers)?;
    let eval_nll = if eval_seqs.is_empty() {
        None
    } else {
        Some(mean_nll(&model, &eval_seqs, &ctx.workers)?)
    };
    model.save_tagged(&ckpt, &tags(&digest))?;
    let out = json!({
        "train_sequences": train_seqs.len(),
        "eval_sequences": eval_seqs.len(),
        "steps": report.losses.len(),
        "skipped_steps": report.skipped_steps,
        "final_loss": tail_mean(&report.losses, 50),
        "eval_nll": eval_nll,
        "losses": report.losses,
    });
    write(&report_path, stamped_json(&digest, &out)?.as_bytes())?;
    ctx.write_resolved(&resolved)?;
    println!(
        "trained {} steps on {} sequences; final loss {:.5}; eval nll {}",
        report.losses.len(),
        train_seqs.len(),
        tail_mean(&report.losses, 50).unwrap_or(f64::NAN),
        eval_nll.map_or_else(|| "n/a".to_string(), |v| format!("{v:.5}"))
    );
    Ok(())
}

fn load_mtpp(ctx: &mut Context, m: &DatasetManifest) -> Result<(FullyNn, (String, String))> {
    let path = ctx.run_file("mtpp.ckpt")?;
    if !path.exists() {
        return Err(CliError::MissingCheckpoint {
            path: path.display().to_string(),
            producer: "train-mtpp",
        });
    }
    let mut model = FullyNn::load(&path)?;
    ctx.adopt(&model.config().to_kv(), "mtpp.ckpt")?;
    check_marks(ctx, "mtpp.marks", m.marks)?;
    model.freeze();
    Ok((model, ("mtpp.ckpt".into(), sha256_file(&path)?)))
}

fn load_distiller(ctx: &mut Context, m: &DatasetManifest) -> Result<(Distiller, (String, String))> {
    let path = ctx.run_file("distiller.ckpt")?;
    if !path.exists() {
        return Err(CliError::MissingCheckpoint {
            path: path.display().to_string(),
            producer: "train-distiller",
        });
    }
    let model = Distiller::load(&path)?;
    ctx.adopt(&model.config().to_kv(), "distiller.ckpt")?;
    check_marks(ctx, "distiller.marks", m.marks)?;
    Ok((model, ("distiller.ckpt".into(), sha256_file(&path)?)))
}

pub fn train_distiller_cmd(ctx: &mut Context) -> Result<()> {
    let m = ctx.manifest()?;
    let w = m
        .windows
        .clone()
        .ok_or_else(|| config("manifest has no window statistics; rerun prep-data"))?;
    let (mtpp, mtpp_sha) = load_mtpp(ctx, &m)?;
    ctx.derive("distiller.marks", m.marks);
    ctx.derive_f64(
        "distiller.time_span",
        (w.len_history + w.len_future) as f64 * m.interval_scale,
    );
    let seed = ctx.seed("distiller.seed")?;
    ctx.derive("distiller.seed", seed);
    check_marks(ctx, "distiller.marks", m.marks)?;
    let arch = DistillerConfig::from_kv(&ctx.cfg)?;
    let train = DistillTrainConfig::from_kv(&ctx.cfg)?;
    let sample: usize = ctx.get("distiller.train_sample")?;
    let ckpt = ctx.run_file("distiller.ckpt")?;
    let report_path = ctx.run_file("train-distiller.json")?;
    let resolved = ctx.run_file("train-distiller.resolved.cfg")?;
    for p in [&ckpt, &report_path, &resolved] {
        ctx.claim(p.clone())?;
    }
    let pool = read_split(ctx, "train")?;
    ctx.prepare_outputs()?;
    let digest = ctx.digest();

    let instances = if sample > 0 && sample < pool.len() {
        sample_instances(&pool, sample, seed)?
    } else {
        pool
    };
    let mut model = Distiller::new(arch, train.seed)?;
    let report = train_distiller(&mut model, &mtpp, &instances, &train, &ctx.workers)?;
    model.save_tagged(&ckpt, &tags(&digest))?;
    let out = json!({
        "checkpoints": [mtpp_sha],
        "instances": instances.len(),
        "loss": train.loss.to_string(),
        "steps": report.losses.len(),
        "skipped_steps": report.skipped_steps,
        "final_loss": tail_mean(&report.losses, 20),
        "final_left_fraction": report.trace.last().map(|t| t.1),
        "trace": report.trace,
        "losses": report.losses,
        "left_fraction": report.left_fraction,
    });
    write(&report_path, stamped_json(&digest, &out)?.as_bytes())?;
    ctx.write_resolved(&resolved)?;
    println!(
        "trained {} steps on {} instances; final left fraction {:.4}",
        report.losses.len(),
        instances.len(),
        report.trace.last().map_or(f64::NAN, |t| t.1)
    );
    Ok(())
}

struct Loaded {
    manifest: DatasetManifest,
    mtpp: FullyNn,
    distiller: Distiller,
    checkpoints: Vec<(String, String)>,
}

fn load_all(ctx: &mut Context) -> Result<Loaded> {
    let manifest = ctx.manifest()?;
    let (mtpp, a) = load_mtpp(ctx, &manifest)?;
    let (distiller, b) = load_distiller(ctx, &manifest)?;
    let seed = ctx.seed("eval.seed")?;
    ctx.derive("eval.seed", seed);
    Ok(Loaded {
        manifest,
        mtpp,
        distiller,
        checkpoints: vec![a, b],
    })
}

pub fn distill_cmd(ctx: &mut Context) -> Result<()> {
    let l = load_all(ctx)?;
    let insts = eval_instances(ctx, "eval.split")?;
    let out = ctx.claim(ctx.run_file("distill.jsonl")?)?;
    let resolved = ctx.claim(ctx.run_file("distill.resolved.cfg")?)?;
    ctx.prepare_outputs()?;
    let digest = ctx.digest();

    let results = run_chd(&l.distiller, &l.mtpp, &insts, &ctx.workers)?;
    let mut body = String::new();
    for r in &results {
        body.push_str(&serde_json::to_string(r).map_err(ehd_core::EhdError::from)?);
        body.push('\n');
    }
    write(&out, stamped(&digest, &body).as_bytes())?;
    ctx.write_resolved(&resolved)?;
    let cards: Vec<f64> = results.iter().map(|r| r.card_d as f64).collect();
    println!(
        "distilled {} instances; mean |H_d| {:.3}",
        results.len(),
        cards.iter().sum::<f64>() / cards.len() as f64
    );
    Ok(())
}

pub fn eval_cmd(ctx: &mut Context, task: Task) -> Result<()> {
    let l = load_all(ctx)?;
    let insts = eval_instances(ctx, "eval.split")?;
    let name = match task {
        Task::DpplDiff => "eval-dppl",
        Task::CardDiff => "eval-card",
    };
    let out = ctx.claim(ctx.run_file(&format!("{name}.json"))?)?;
    let resolved = ctx.claim(ctx.run_file(&format!("{name}.resolved.cfg"))?)?;
    ctx.prepare_outputs()?;
    let settings = EvalSettings {
        dataset: l.manifest.name.clone(),
        config_digest: ctx.digest(),
        seed: ctx.get("eval.seed")?,
        rd_samples: ctx.get("eval.rd_samples")?,
        checkpoints: l.checkpoints.clone(),
    };

    let chd = run_chd(&l.distiller, &l.mtpp, &insts, &ctx.workers)?;
    let report = match task {
        Task::DpplDiff => eval_dppl_diff(&l.mtpp, &insts, &chd, &settings, &ctx.workers)?,
        Task::CardDiff => eval_card_diff(&l.mtpp, &insts, &chd, &settings, &ctx.workers)?,
    };
    write(&out, to_json(&report)?.as_bytes())?;
    ctx.write_resolved(&resolved)?;
    for r in &report.methods {
        println!(
            "{:<4} {:>10.4} ± {:<10.4} n={} censored={} skipped={}",
            r.method, r.summary.mean, r.summary.std, r.summary.count, r.censored, r.skipped
        );
    }
    for c in &report.comparisons {
        println!(
            "{} vs {}: gain {:.4}, t p={:.3e}, sign p={:.3e}",
            c.better, c.worse, c.mean_gain, c.p_t, c.p_sign
        );
    }
    Ok(())
}

pub fn timing_cmd(ctx: &mut Context, task: Task) -> Result<()> {
    let l = load_all(ctx)?;
    let insts = eval_instances(ctx, "eval.split")?;
    let tag = match task {
        Task::DpplDiff => "dppl",
        Task::CardDiff => "card",
    };
    let out = ctx.claim(ctx.run_file(&format!("timing-{tag}.json"))?)?;
    let resolved = ctx.claim(ctx.run_file(&format!("timing-{tag}.resolved.cfg"))?)?;
    ctx.prepare_outputs()?;
    let digest = ctx.digest();
    let report = timing_harness(
        &l.distiller,
        &l.mtpp,
        &insts,
        task,
        ctx.get("eval.rd_samples")?,
        ctx.get("eval.seed")?,
    )?;
    write(&out, stamped_json(&digest, &report)?.as_bytes())?;
    ctx.write_resolved(&resolved)?;
    for t in &report.methods {
        println!(
            "{:<4} total {:.4}s ratio {:.3} evaluations {}",
            t.method, t.total_secs, t.ratio, t.evaluations
        );
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub enum Case {
    Marks,
    Shift,
    LeftFraction,
}

pub fn case_study(ctx: &mut Context, case: Case) -> Result<()> {
    match case {
        Case::LeftFraction => {
            let text = read(&ctx.run_file("train-distiller.json")?, "train-distiller")?;
            let v: Value = serde_json::from_str(&text).map_err(ehd_core::EhdError::from)?;
            let trace: Vec<(usize, f64)> =
                serde_json::from_value(v["trace"].clone()).map_err(ehd_core::EhdError::from)?;
            let out = ctx.claim(ctx.run_file("case-left-fraction.csv")?)?;
            let resolved = ctx.claim(ctx.run_file("case-left-fraction.resolved.cfg")?)?;
            ctx.prepare_outputs()?;
            write(&out, stamped(&ctx.digest(), &left_fraction_csv(&trace)).as_bytes())?;
            ctx.write_resolved(&resolved)?;
            match trace.last() {
                Some((step, f)) => println!("final left fraction {f} at step {step}"),
                None => println!("empty trace"),
            }
        }
        Case::Marks => {
            let l = load_all(ctx)?;
            let insts = eval_instances(ctx, "case.split")?;
            let json_path = ctx.claim(ctx.run_file("case-marks.json")?)?;
            let csv_path = ctx.claim(ctx.run_file("case-marks.csv")?)?;
            let resolved = ctx.claim(ctx.run_file("case-marks.resolved.cfg")?)?;
            ctx.prepare_outputs()?;
            let digest = ctx.digest();
            let chd = run_chd(&l.distiller, &l.mtpp, &insts, &ctx.workers)?;
            let case = case_mark_percentage(
                &insts,
                &chd,
                l.manifest.marks,
                &l.manifest.mark_names,
                ctx.get("eval.seed")?,
            )?;
            write(&json_path, stamped_json(&digest, &case)?.as_bytes())?;
            write(&csv_path, stamped(&digest, &marks_csv(&case)).as_bytes())?;
            ctx.write_resolved(&resolved)?;
            for r in &case.rows {
                let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}%", 100.0 * x));
                println!(
                    "mark {} chd {} rd {} p {}",
                    r.mark,
                    pct(r.chd_fraction),
                    pct(r.rd_fraction),
                    r.p_bonferroni.map_or_else(|| "n/a".to_string(), |p| format!("{p:.3e}"))
                );
            }
        }
        Case::Shift => {
            let l = load_all(ctx)?;
            let insts = eval_instances(ctx, "case.split")?;
            let json_path = ctx.claim(ctx.run_file("case-shift.json")?)?;
            let lengths = ctx.claim(ctx.run_file("case-lengths.csv")?)?;
            let shifts = ctx.claim(ctx.run_file("case-shifts.csv")?)?;
            let traces = ctx.claim(ctx.run_file("case-traces.csv")?)?;
            let resolved = ctx.claim(ctx.run_file("case-shift.resolved.cfg")?)?;
            ctx.prepare_outputs()?;
            let digest = ctx.digest();
            let chd = run_chd(&l.distiller, &l.mtpp, &insts, &ctx.workers)?;
            let case = case_length_and_trace(&chd)?;
            write(&json_path, stamped_json(&digest, &case)?.as_bytes())?;
            write(&lengths, stamped(&digest, &lengths_csv(&case.lengths)).as_bytes())?;
            write(&shifts, stamped(&digest, &shifts_csv(&case)).as_bytes())?;
            write(&traces, stamped(&digest, &traces_csv(&case.traces)).as_bytes())?;
            ctx.write_resolved(&resolved)?;
            println!(
                "{} steps, {} gaps; median addition {:?}, median ejection {:?}, tail p {:?}",
                case.steps, case.gaps, case.median_addition, case.median_ejection, case.tail_p
            );
        }
    }
    Ok(())
}

pub fn grad_check(ctx: &mut Context) -> Result<()> {
    let tolerance: f64 = ctx.get("gradcheck.tolerance")?;
    let errs = primitive_suite(
        ctx.get("gradcheck.seed")?,
        ctx.get("gradcheck.trials")?,
        ctx.get("gradcheck.step")?,
    )?;
    let mut failed = 0;
    for (name, err) in &errs {
        let ok = *err < tolerance;
        failed += usize::from(!ok);
        println!("{name:<20} {err:.3e} {}", if ok { "ok" } else { "FAIL" });
    }
    if failed > 0 {
        return Err(CliError::GradCheck {
            failed,
            total: errs.len(),
            tolerance,
        });
    }
    println!("all {} primitives below {tolerance:e}", errs.len());
    Ok(())
}
