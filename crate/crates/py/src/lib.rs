//! Python bindings: sequences, instances, the intensity model, the selection
//! model, the two baselines and the evaluation report.

use ehd_core::autodiff::primitive_suite;
use ehd_core::baselines::{gs_given_length, rd_given_length, Scorer};
use ehd_core::data::{planted_spec, sliding_windows as windows, synth_hawkes};
use ehd_core::distiller::{distill, train_distiller, DistillResult, DistillTrainConfig, Distiller, DistillerConfig};
use ehd_core::eval::{eval_card_diff, eval_dppl_diff, rd_rng, run_chd, to_json, EvalSettings};
use ehd_core::event::{DistillInstance, Event, EventSequence};
use ehd_core::mtpp::{dppl, log_likelihood, log_perplexity, train_mtpp, FullyNn, FullyNnConfig, MtppTrainConfig};
use ehd_core::parallel::Workers;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(
    ehd,
    EhdError,
    PyException,
    "Raised for every pipeline error; the message starts with the error code."
);

fn err(e: ehd_core::EhdError) -> PyErr {
    EhdError::new_err(format!("[{}] {e}", e.code()))
}

fn events(pairs: &[(usize, f64)]) -> Vec<Event> {
    pairs.iter().map(|&(m, t)| Event::new(m, t)).collect()
}

fn pairs(events: &[Event]) -> Vec<(usize, f64)> {
    events.iter().map(|e| (e.mark, e.time)).collect()
}

fn workers(n: usize) -> PyResult<Workers> {
    Workers::new(n).map_err(err)
}

/// Time-ordered `(mark, time)` events observed on `[t0, t_end]`.
#[pyclass(name = "Sequence", module = "ehd", from_py_object)]
#[derive(Clone)]
struct PySequence {
    inner: EventSequence,
}

#[pymethods]
impl PySequence {
    #[new]
    fn new(events_: Vec<(usize, f64)>, t0: f64, t_end: f64) -> Self {
        PySequence {
            inner: EventSequence::new(events(&events_), t0, t_end),
        }
    }

    #[getter]
    fn events(&self) -> Vec<(usize, f64)> {
        pairs(&self.inner.events)
    }

    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.t_end
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Sequence({} events on [{}, {}])",
            self.inner.len(),
            self.inner.t0,
            self.inner.t_end
        )
    }
}

/// One (history, future) window cut from a source sequence.
#[pyclass(name = "Instance", module = "ehd", from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: DistillInstance,
}

#[pymethods]
impl PyInstance {
    #[new]
    fn new(seq_id: u64, offset: usize, history: Vec<(usize, f64)>, future: Vec<(usize, f64)>) -> Self {
        PyInstance {
            inner: DistillInstance {
                seq_id,
                offset,
                history: events(&history),
                future: events(&future),
            },
        }
    }

    #[getter]
    fn seq_id(&self) -> u64 {
        self.inner.seq_id
    }

    #[getter]
    fn offset(&self) -> usize {
        self.inner.offset
    }

    #[getter]
    fn history(&self) -> Vec<(usize, f64)> {
        pairs(&self.inner.history)
    }

    #[getter]
    fn future(&self) -> Vec<(usize, f64)> {
        pairs(&self.inner.future)
    }

    /// Time origin of the window.
    fn origin(&self) -> f64 {
        self.inner.origin()
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance({}, history={}, future={})",
            self.inner.id(),
            self.inner.history.len(),
            self.inner.future.len()
        )
    }
}

/// Outcome of distilling one instance; `y[i] == 1` marks a removed event.
#[pyclass(name = "Distilled", module = "ehd", get_all, from_py_object)]
#[derive(Clone)]
struct PyDistilled {
    y: Vec<u8>,
    card_d: usize,
    dppl_d: f64,
    dppl_l: f64,
    metric: f64,
    empty_conditioning: bool,
}

impl From<DistillResult> for PyDistilled {
    fn from(r: DistillResult) -> Self {
        PyDistilled {
            y: r.y,
            card_d: r.card_d,
            dppl_d: r.dppl_d,
            dppl_l: r.dppl_l,
            metric: r.metric,
            empty_conditioning: r.empty_conditioning,
        }
    }
}

#[pymethods]
impl PyDistilled {
    fn __repr__(&self) -> String {
        format!("Distilled(card_d={}, metric={:.4})", self.card_d, self.metric)
    }
}

/// Neural cumulative-intensity point process model.
#[pyclass(name = "Mtpp", module = "ehd")]
struct PyMtpp {
    inner: FullyNn,
}

#[pymethods]
impl PyMtpp {
    #[new]
    #[pyo3(signature = (marks, time_scale, layers = 4, history = 32, intensity = 16, seed = 0))]
    fn new(
        marks: usize,
        time_scale: f64,
        layers: usize,
        history: usize,
        intensity: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let config = FullyNnConfig {
            marks,
            layers,
            history,
            intensity,
            time_scale,
        };
        Ok(PyMtpp {
            inner: FullyNn::new(config, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyMtpp {
            inner: FullyNn::load(path.as_ref()).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(err)
    }

    #[getter]
    fn marks(&self) -> usize {
        self.inner.config().marks
    }

    /// Trains by maximum likelihood and returns the per-step losses.
    #[pyo3(signature = (sequences, steps = 2000, batch = 16, lr = 0.002, warmup = 100, seed = 0, workers = 1))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        sequences: Vec<PySequence>,
        steps: usize,
        batch: usize,
        lr: f64,
        warmup: usize,
        seed: u64,
        workers: usize,
    ) -> PyResult<Vec<f64>> {
        let seqs: Vec<EventSequence> = sequences.into_iter().map(|s| s.inner).collect();
        let config = MtppTrainConfig {
            steps,
            batch,
            lr,
            warmup,
            seed,
        };
        let w = self::workers(workers)?;
        Ok(train_mtpp(&mut self.inner, &seqs, &config, &w).map_err(err)?.losses)
    }

    fn log_likelihood(&self, sequence: &PySequence) -> PyResult<f64> {
        log_likelihood(&self.inner, &sequence.inner).map_err(err)
    }

    /// Mean negative log density of `future` given `history`.
    fn log_perplexity(&self, future: Vec<(usize, f64)>, history: Vec<(usize, f64)>, origin: f64) -> PyResult<f64> {
        log_perplexity(&self.inner, &events(&future), &events(&history), origin).map_err(err)
    }

    /// Log-perplexity under `history` minus under `reduced`.
    fn dppl(
        &self,
        reduced: Vec<(usize, f64)>,
        history: Vec<(usize, f64)>,
        future: Vec<(usize, f64)>,
        origin: f64,
    ) -> PyResult<f64> {
        dppl(
            &self.inner,
            &events(&reduced),
            &events(&history),
            &events(&future),
            origin,
        )
        .map_err(err)
    }
}

/// Selection model that picks the history events to distil.
#[pyclass(name = "Distiller", module = "ehd")]
struct PyDistiller {
    inner: Distiller,
}

#[pymethods]
impl PyDistiller {
    #[new]
    #[pyo3(signature = (marks, time_span, seed = 0, input = 32, hidden = 64, qkv = 32, heads = 4, depth = 4, ffn = 64))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        marks: usize,
        time_span: f64,
        seed: u64,
        input: usize,
        hidden: usize,
        qkv: usize,
        heads: usize,
        depth: usize,
        ffn: usize,
    ) -> PyResult<Self> {
        let config = DistillerConfig {
            input,
            hidden,
            qkv,
            heads,
            history_depth: depth,
            future_depth: depth,
            ffn,
            ..DistillerConfig::new(marks, time_span)
        };
        Ok(PyDistiller {
            inner: Distiller::new(config, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyDistiller {
            inner: Distiller::load(path.as_ref()).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(err)
    }

    /// Trains against a frozen model; returns `(step, left fraction)` trace points.
    #[pyo3(signature = (
        mtpp, instances, steps = 1000, batch = 128, lr = 0.001, warmup = 100, alpha = 1.0,
        epsilon = 0.5, loss = "full", seed = 0, log_every = 10, workers = 1
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        mtpp: &PyMtpp,
        instances: Vec<PyInstance>,
        steps: usize,
        batch: usize,
        lr: f64,
        warmup: usize,
        alpha: f64,
        epsilon: f64,
        loss: &str,
        seed: u64,
        log_every: usize,
        workers: usize,
    ) -> PyResult<Vec<(usize, f64)>> {
        let insts: Vec<DistillInstance> = instances.into_iter().map(|i| i.inner).collect();
        let config = DistillTrainConfig {
            steps,
            batch,
            lr,
            warmup,
            alpha,
            epsilon,
            loss: loss.parse().map_err(err)?,
            seed,
            log_every,
            ..DistillTrainConfig::default()
        };
        let w = self::workers(workers)?;
        Ok(train_distiller(&mut self.inner, &mtpp.inner, &insts, &config, &w)
            .map_err(err)?
            .trace)
    }

    fn distill(&self, mtpp: &PyMtpp, instance: &PyInstance) -> PyResult<PyDistilled> {
        Ok(distill(&self.inner, &mtpp.inner, &instance.inner).map_err(err)?.into())
    }
}

/// Simulates planted-cause sequences: returns the sequences and, per
/// sequence, which events belong to the cause mark.
#[pyfunction]
#[pyo3(signature = (sequences, horizon = 60.0, seed = 0))]
fn synth_planted(sequences: usize, horizon: f64, seed: u64) -> PyResult<(Vec<PySequence>, Vec<Vec<bool>>)> {
    let sims = synth_hawkes(&planted_spec(sequences, horizon, seed)).map_err(err)?;
    Ok(sims
        .into_iter()
        .map(|s| (PySequence { inner: s.sequence }, s.planted))
        .unzip())
}

/// Every `(history, future)` window of every sequence.
#[pyfunction]
fn sliding_windows(sequences: Vec<PySequence>, len_future: usize, len_history: usize) -> PyResult<Vec<PyInstance>> {
    let seqs: Vec<EventSequence> = sequences.into_iter().map(|s| s.inner).collect();
    let (insts, _) = windows(&seqs, len_future, len_history).map_err(err)?;
    Ok(insts.into_iter().map(|inner| PyInstance { inner }).collect())
}

/// Greedy removal of `l_d` events; returns the mask and `(dppl_d, dppl_l)`.
#[pyfunction]
fn greedy_search(mtpp: &PyMtpp, instance: &PyInstance, l_d: usize) -> PyResult<(Vec<bool>, (f64, f64))> {
    let mut s = Scorer::new(&mtpp.inner, &instance.inner).map_err(err)?;
    let (pair, bits) = gs_given_length(&mut s, l_d).map_err(err)?;
    Ok((bits, pair))
}

/// Best of `samples` random removals of `l_d` events, as `(dppl_d, dppl_l)`.
#[pyfunction]
#[pyo3(signature = (mtpp, instance, l_d, samples = 4, seed = 0))]
fn random_deletion(
    mtpp: &PyMtpp,
    instance: &PyInstance,
    l_d: usize,
    samples: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let mut s = Scorer::new(&mtpp.inner, &instance.inner).map_err(err)?;
    rd_given_length(&mut s, l_d, samples, &mut rd_rng(seed, &instance.inner)).map_err(err)
}

/// DPPL-Diff (`task="dppl"`) or Card-Diff (`task="card"`) report as JSON text.
#[pyfunction]
#[pyo3(signature = (mtpp, distiller, instances, task = "dppl", seed = 0, rd_samples = 4, workers = 1))]
fn evaluate(
    mtpp: &PyMtpp,
    distiller: &PyDistiller,
    instances: Vec<PyInstance>,
    task: &str,
    seed: u64,
    rd_samples: usize,
    workers: usize,
) -> PyResult<String> {
    let insts: Vec<DistillInstance> = instances.into_iter().map(|i| i.inner).collect();
    let w = self::workers(workers)?;
    let settings = EvalSettings {
        dataset: "python".into(),
        config_digest: String::new(),
        seed,
        rd_samples,
        checkpoints: Vec::new(),
    };
    let chd = run_chd(&distiller.inner, &mtpp.inner, &insts, &w).map_err(err)?;
    let report = match task {
        "dppl" => eval_dppl_diff(&mtpp.inner, &insts, &chd, &settings, &w),
        "card" => eval_card_diff(&mtpp.inner, &insts, &chd, &settings, &w),
        other => return Err(EhdError::new_err(format!("[E_CONFIG] unknown task {other:?}"))),
    }
    .map_err(err)?;
    to_json(&report).map_err(err)
}

/// Largest relative finite-difference gradient error per primitive.
#[pyfunction]
#[pyo3(signature = (seed = 2024, trials = 10, step = 1e-4))]
fn grad_check(seed: u64, trials: usize, step: f64) -> PyResult<Vec<(String, f64)>> {
    Ok(primitive_suite(seed, trials, step)
        .map_err(err)?
        .into_iter()
        .map(|(n, e)| (n.to_string(), e))
        .collect())
}

#[pymodule]
pub fn ehd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EhdError", m.py().get_type::<EhdError>())?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyDistilled>()?;
    m.add_class::<PyMtpp>()?;
    m.add_class::<PyDistiller>()?;
    m.add_function(wrap_pyfunction!(synth_planted, m)?)?;
    m.add_function(wrap_pyfunction!(sliding_windows, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_search, m)?)?;
    m.add_function(wrap_pyfunction!(random_deletion, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    Ok(())
}
