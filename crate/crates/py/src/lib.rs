//! Python bindings: datasets, training, evaluation and recognition.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use ssdcnn::checkpoint::{Checkpoint, CheckpointError};
use ssdcnn::eightdir::extract;
use ssdcnn::ink::{read_canonical, write_canonical};
use ssdcnn::netspec::{infer_shapes, parse, render};
use ssdcnn::preprocess::PreprocessConfig;
use ssdcnn::train::{train_two_phase, TrainConfig};
use ssdcnn::{Featurizer, InkCharacter, LabeledSet, Model, VariantKind};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ink_of(strokes: Vec<Vec<[f64; 2]>>) -> InkCharacter {
    InkCharacter::from_nested(&strokes)
}

fn parse_variant(name: &str) -> PyResult<VariantKind> {
    name.parse().map_err(value_err)
}

/// Labeled characters plus their label alphabet.
#[pyclass(module = "pyssdcnn")]
struct Dataset {
    inner: ssdcnn::Dataset,
}

#[pymethods]
impl Dataset {
    /// Reads a canonical ink file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Ok(Dataset {
            inner: read_canonical(&bytes).map_err(value_err)?,
        })
    }

    /// Reads POT records.
    #[staticmethod]
    fn from_pot(data: &[u8]) -> PyResult<Self> {
        Ok(Dataset {
            inner: ssdcnn::pot::import_pot(data).map_err(value_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let bytes = write_canonical(&self.inner).map_err(value_err)?;
        std::fs::write(path, bytes).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn alphabet(&self) -> Vec<String> {
        self.inner.alphabet.entries().to_vec()
    }

    fn labels(&self) -> Vec<Option<usize>> {
        self.inner.samples.iter().map(|s| s.label).collect()
    }

    /// Strokes of sample `i` as lists of `(x, y)` pairs.
    fn strokes(&self, i: usize) -> PyResult<Vec<Vec<(f64, f64)>>> {
        let s = self
            .inner
            .samples
            .get(i)
            .ok_or_else(|| PyIndexError::new_err(format!("sample {i} out of range")))?;
        Ok(s.strokes
            .iter()
            .map(|st| st.points.iter().map(|p| (p.x, p.y)).collect())
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} samples, {} classes)", self.inner.len(), self.inner.alphabet.len())
    }
}

/// A trained model with its alphabet and preprocessing settings.
#[pyclass(module = "pyssdcnn")]
struct Recognizer {
    inner: ssdcnn::Recognizer,
}

fn checkpoint_err(e: CheckpointError) -> PyErr {
    match e {
        CheckpointError::Io(e) => PyIOError::new_err(e.to_string()),
        other => value_err(other),
    }
}

#[pymethods]
impl Recognizer {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Recognizer {
            inner: ssdcnn::Recognizer::load(path).map_err(checkpoint_err)?,
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Recognizer {
            inner: ssdcnn::Recognizer::from_bytes(data).map_err(checkpoint_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.checkpoint().save(path).map_err(checkpoint_err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.inner.checkpoint().to_bytes()
    }

    /// Top `k` candidates as `(label, class_id, probability)`.
    #[pyo3(signature = (strokes, k = 10))]
    fn recognize(&self, py: Python<'_>, strokes: Vec<Vec<[f64; 2]>>, k: usize) -> PyResult<Vec<(String, usize, f64)>> {
        let ink = ink_of(strokes);
        let out = py.detach(|| self.inner.recognize(&ink, k)).map_err(value_err)?;
        Ok(out
            .candidates
            .into_iter()
            .map(|c| (c.label, c.class_id, c.probability))
            .collect())
    }

    /// The per-stroke map stack (`depth` lists of `size * size` cells) and
    /// the 512 direction values.
    fn feature_maps<'py>(&self, py: Python<'py>, strokes: Vec<Vec<[f64; 2]>>) -> PyResult<Bound<'py, PyDict>> {
        let maps = self.inner.feature_maps(&ink_of(strokes)).map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("depth", maps.depth)?;
        d.set_item("size", maps.size)?;
        d.set_item("stack", maps.stack)?;
        d.set_item("dir", maps.dir)?;
        Ok(d)
    }

    fn info<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let info = self.inner.info();
        let d = PyDict::new(py);
        d.set_item("variant", info.variant)?;
        d.set_item("class_count", info.class_count)?;
        d.set_item("alphabet_size", info.alphabet_size)?;
        d.set_item("checkpoint_hash", info.checkpoint_hash)?;
        Ok(d)
    }

    /// P@k on a labeled dataset.
    #[pyo3(signature = (data, topk = vec![1, 2, 3, 10]))]
    fn evaluate(&self, py: Python<'_>, data: &Dataset, topk: Vec<usize>) -> PyResult<BTreeMap<usize, f64>> {
        let ck = self.inner.checkpoint();
        let (report, _) = py
            .detach(|| ssdcnn::evaluate(&ck.model, &ck.featurizer, &data.inner.samples, &topk))
            .map_err(value_err)?;
        Ok(report.precision)
    }

    fn __repr__(&self) -> String {
        let i = self.inner.info();
        format!("Recognizer({}, {} classes)", i.variant, i.class_count)
    }
}

/// Synthetic train and test sets built from stroke templates.
#[pyfunction]
#[pyo3(signature = (classes, train, test, seed = 42))]
fn synth_dataset(classes: usize, train: usize, test: usize, seed: u64) -> (Dataset, Dataset) {
    let (a, b) = ssdcnn::synth::synth_dataset(classes, train, test, seed);
    (Dataset { inner: a }, Dataset { inner: b })
}

/// Trains a model with the full-size architecture for `variant` and returns
/// it with the per-epoch losses of both phases.
#[pyfunction]
#[pyo3(signature = (
    data, variant = "ssdcnn", validation = None, phase1_epochs = 20, phase2_epochs = 10,
    batch_size = 100, eta = 0.01, patience = None, drop_prob = 0.0, seed = 42
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &Dataset,
    variant: &str,
    validation: Option<&Dataset>,
    phase1_epochs: usize,
    phase2_epochs: usize,
    batch_size: usize,
    eta: f64,
    patience: Option<usize>,
    drop_prob: f64,
    seed: u64,
) -> PyResult<(Recognizer, Vec<Vec<f64>>)> {
    let kind = parse_variant(variant)?;
    let ds = &data.inner;
    let mut model = Model::new(
        ssdcnn::Architecture::standard(kind, ds.alphabet.len()).map_err(value_err)?,
        seed,
    )
    .map_err(value_err)?;
    let fz = Featurizer::for_architecture(model.architecture(), PreprocessConfig::default()).map_err(value_err)?;
    let cfg = TrainConfig {
        batch_size,
        eta,
        phase1_epochs,
        phase2_epochs,
        patience,
        seed,
        drop_prob,
        ..TrainConfig::default()
    };
    let report = py
        .detach(|| {
            let set = LabeledSet::build(&ds.samples, &fz)?;
            let val = validation
                .map(|v| LabeledSet::build(&v.inner.samples, &fz))
                .transpose()?;
            train_two_phase(&mut model, &fz, &set, val.as_ref(), &cfg)
        })
        .map_err(value_err)?;
    let ck = Checkpoint::new(model, ds.alphabet.clone(), fz);
    Ok((
        Recognizer {
            inner: ssdcnn::Recognizer::from_checkpoint(ck),
        },
        report.epoch_loss.to_vec(),
    ))
}

/// The 512 eight-direction values of an ink.
#[pyfunction]
fn eight_direction(strokes: Vec<Vec<[f64; 2]>>) -> Vec<f32> {
    extract(&ink_of(strokes)).values
}

/// Parses an architecture string; returns its canonical text and the shape
/// after each layer.
#[pyfunction]
fn parse_architecture(text: &str) -> PyResult<(String, Vec<Vec<usize>>)> {
    let spec = parse(text).map_err(value_err)?;
    let shapes = infer_shapes(&spec).map_err(value_err)?;
    Ok((render(&spec), shapes))
}

#[pyfunction]
fn variants() -> Vec<&'static str> {
    VariantKind::ALL.iter().map(|k| k.as_str()).collect()
}

#[pymodule]
fn pyssdcnn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Recognizer>()?;
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(eight_direction, m)?)?;
    m.add_function(wrap_pyfunction!(parse_architecture, m)?)?;
    m.add_function(wrap_pyfunction!(variants, m)?)?;
    Ok(())
}
