//! Python bindings for the mammosift pipeline.
//!
//! Exposes the working image types and the pipeline stages (preprocess,
//! sift, pseudo-color composition, blob detection) plus the FROC readout
//! helpers and the batch CLI. Pixel buffers cross the boundary as flat
//! row-major lists; the compiled module is `mammosift_py`.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use mammosift::detection::{self, DetectionSource, DetectorConfig, DetectorParams};
use mammosift::error::ErrorKind;
use mammosift::evaluation::{self, FrocCurve};
use mammosift::imgdata;
use mammosift::morphology::{make_line_se, open_line as open_line_rs};
use mammosift::preprocess::{
    preprocess as preprocess_rs, wavelet_downsample as wavelet_downsample_rs, PreprocessResult,
};
use mammosift::sifting::{self, SiftConfig, SiftOutput};

fn pyerr(e: mammosift::error::Error) -> PyErr {
    match e.kind() {
        ErrorKind::Io => PyIOError::new_err(e.to_string()),
        ErrorKind::Validation => PyValueError::new_err(e.to_string()),
    }
}

/// A 16-bit grayscale image with its pixel spacing in millimetres.
#[pyclass(name = "GrayImage16", module = "mammosift_py", skip_from_py_object)]
#[derive(Clone)]
struct PyGrayImage16 {
    inner: imgdata::GrayImage16,
}

#[pymethods]
impl PyGrayImage16 {
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<u16>, pixel_size_mm: f64) -> PyResult<Self> {
        Ok(Self { inner: imgdata::GrayImage16::new(width, height, pixels, pixel_size_mm).map_err(pyerr)? })
    }

    /// Builds a constant image.
    #[staticmethod]
    fn constant(width: usize, height: usize, value: u16, pixel_size_mm: f64) -> Self {
        Self { inner: imgdata::GrayImage16::splat(width, height, value, pixel_size_mm) }
    }

    /// Loads a 16-bit (or 8-bit, widened) PNG/PGM with the given spacing.
    #[staticmethod]
    fn load(path: &str, pixel_size_mm: f64) -> PyResult<Self> {
        Ok(Self { inner: imgdata::load_gray16(Path::new(path), pixel_size_mm).map_err(pyerr)? })
    }

    /// Saves as a 16-bit grayscale PNG.
    fn save(&self, path: &str) -> PyResult<()> {
        imgdata::save_gray16(Path::new(path), &self.inner).map_err(pyerr)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn pixel_size_mm(&self) -> f64 {
        self.inner.pixel_size_mm
    }

    fn get(&self, row: usize, col: usize) -> u16 {
        self.inner.get(row, col)
    }

    /// Flat row-major pixel list.
    fn pixels(&self) -> Vec<u16> {
        self.inner.pixels.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "GrayImage16({}x{}, {} mm/px)",
            self.inner.width, self.inner.height, self.inner.pixel_size_mm
        )
    }
}

/// A binary region mask.
#[pyclass(name = "BinaryMask", module = "mammosift_py", skip_from_py_object)]
#[derive(Clone)]
struct PyBinaryMask {
    inner: imgdata::BinaryMask,
}

#[pymethods]
impl PyBinaryMask {
    #[new]
    fn new(width: usize, height: usize, bits: Vec<bool>) -> PyResult<Self> {
        Ok(Self { inner: imgdata::BinaryMask::new(width, height, bits).map_err(pyerr)? })
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { inner: imgdata::BinaryMask::filled(width, height, value) }
    }

    /// Loads an 8-bit PNG (nonzero = set).
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: imgdata::load_mask8(Path::new(path)).map_err(pyerr)? })
    }

    /// Saves as an 8-bit 0/255 PNG.
    fn save(&self, path: &str) -> PyResult<()> {
        imgdata::save_mask8(Path::new(path), &self.inner).map_err(pyerr)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    fn get(&self, row: usize, col: usize) -> bool {
        self.inner.get(row, col)
    }

    /// Number of set pixels.
    fn count(&self) -> usize {
        self.inner.count()
    }

    /// Inclusive (row0, col0, row1, col1) of the set pixels, or None.
    fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        self.inner.bbox()
    }

    fn __repr__(&self) -> String {
        format!("BinaryMask({}x{}, {} set)", self.inner.width, self.inner.height, self.inner.count())
    }
}

/// Output of [`preprocess`]: the working image and its geometry.
#[pyclass(name = "PreprocessResult", module = "mammosift_py")]
struct PyPreprocessResult {
    inner: PreprocessResult,
}

#[pymethods]
impl PyPreprocessResult {
    /// Normalized, subsampled, square working image.
    #[getter]
    fn image(&self) -> PyGrayImage16 {
        PyGrayImage16 { inner: self.inner.image.clone() }
    }

    /// Breast mask at working resolution.
    #[getter]
    fn breast_mask(&self) -> PyBinaryMask {
        PyBinaryMask { inner: self.inner.breast_mask.clone() }
    }

    /// (row, col) of the breast crop in original coordinates.
    #[getter]
    fn crop_offset(&self) -> (usize, usize) {
        self.inner.crop_offset
    }

    /// (height, width) of the crop before padding.
    #[getter]
    fn crop_size(&self) -> (usize, usize) {
        self.inner.crop_size
    }

    /// Working pixel spacing: 4x the input spacing.
    #[getter]
    fn effective_pixel_size_mm(&self) -> f64 {
        self.inner.effective_pixel_size_mm
    }
}

/// Output of [`sift`]: one accumulated response band per scale.
#[pyclass(name = "SiftResult", module = "mammosift_py")]
struct PySiftResult {
    inner: SiftOutput,
}

#[pymethods]
impl PySiftResult {
    #[getter]
    fn num_bands(&self) -> usize {
        self.inner.bands.len()
    }

    /// (width, height) of band `index` (0-based).
    fn band_size(&self, index: usize) -> PyResult<(usize, usize)> {
        let band = self.band(index)?;
        Ok((band.width, band.height))
    }

    /// Flat row-major u32 samples of band `index` (0-based).
    fn band_pixels(&self, index: usize) -> PyResult<Vec<u32>> {
        Ok(self.band(index)?.pixels.clone())
    }
}

impl PySiftResult {
    fn band(&self, index: usize) -> PyResult<&imgdata::GrayImage32> {
        self.inner
            .bands
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("band index {index} out of range")))
    }
}

/// An RGB pseudo-color rendering of the working image and its bands.
#[pyclass(name = "PseudoColorImage", module = "mammosift_py")]
struct PyPseudoColorImage {
    inner: imgdata::PseudoColorImage,
}

#[pymethods]
impl PyPseudoColorImage {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    /// Interleaved row-major RGB bytes (3 per pixel).
    fn rgb_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let n = self.inner.width * self.inner.height;
        let mut buf = Vec::with_capacity(3 * n);
        for i in 0..n {
            buf.push(self.inner.r[i]);
            buf.push(self.inner.g[i]);
            buf.push(self.inner.b[i]);
        }
        PyBytes::new(py, &buf)
    }

    /// (r, g, b) at one pixel.
    fn get(&self, row: usize, col: usize) -> (u8, u8, u8) {
        let i = row * self.inner.width + col;
        (self.inner.r[i], self.inner.g[i], self.inner.b[i])
    }
}

/// One scored candidate mass at working resolution.
#[pyclass(name = "Detection", module = "mammosift_py")]
struct PyDetection {
    inner: detection::Detection,
}

#[pymethods]
impl PyDetection {
    /// Confidence in [0, 1].
    #[getter]
    fn score(&self) -> f64 {
        self.inner.score
    }

    /// 1-based source scale, or None for an external detection.
    #[getter]
    fn band(&self) -> Option<usize> {
        match self.inner.source_band {
            DetectionSource::Band(b) => Some(b),
            DetectionSource::External => None,
        }
    }

    /// Inclusive (row0, col0, row1, col1).
    #[getter]
    fn bbox(&self) -> (usize, usize, usize, usize) {
        self.inner.bbox
    }

    #[getter]
    fn mask(&self) -> PyBinaryMask {
        PyBinaryMask { inner: self.inner.mask.clone() }
    }

    fn __repr__(&self) -> String {
        format!(
            "Detection(score={:.3}, bbox={:?}, area={})",
            self.inner.score,
            self.inner.bbox,
            self.inner.mask.count()
        )
    }
}

/// Runs the full preprocessing chain: breast extraction, crop,
/// normalization, square padding, and two-level wavelet subsampling.
#[pyfunction]
fn preprocess(image: &PyGrayImage16) -> PyResult<PyPreprocessResult> {
    Ok(PyPreprocessResult { inner: preprocess_rs(&image.inner).map_err(pyerr)? })
}

/// Two-level low-pass wavelet subsampling (side shrinks by 4).
#[pyfunction]
fn wavelet_downsample(image: &PyGrayImage16) -> PyResult<PyGrayImage16> {
    Ok(PyGrayImage16 { inner: wavelet_downsample_rs(&image.inner).map_err(pyerr)? })
}

/// Grayscale opening by an oriented digital line segment.
#[pyfunction]
fn open_line(image: &PyGrayImage16, length_px: usize, angle_deg: f64) -> PyGrayImage16 {
    let se = make_line_se(length_px, angle_deg);
    PyGrayImage16 { inner: open_line_rs(&image.inner, &se) }
}

/// Multi-scale morphological sifting of a working image.
///
/// Knobs default to the standard configuration; pass `num_orientations`,
/// `pixel_size_mm` (original spacing), or `resize_factor` to override.
#[pyfunction]
#[pyo3(signature = (image, num_orientations=None, pixel_size_mm=None, resize_factor=None))]
fn sift(
    image: &PyGrayImage16,
    num_orientations: Option<usize>,
    pixel_size_mm: Option<f64>,
    resize_factor: Option<u32>,
) -> PyResult<PySiftResult> {
    let mut cfg = SiftConfig::default();
    if let Some(n) = num_orientations {
        cfg.num_orientations = n;
    }
    if let Some(p) = pixel_size_mm {
        cfg.pixel_size_mm = p;
    }
    if let Some(s) = resize_factor {
        cfg.resize_factor = s;
    }
    Ok(PySiftResult { inner: sifting::sift(&image.inner, &cfg).map_err(pyerr)? })
}

/// Composes the pseudo-color image from a working image and a two-band
/// sift result: R = working image, G = band 1, B = band 2, scaled over
/// the breast region.
#[pyfunction]
fn compose_pcm(
    image: &PyGrayImage16,
    bands: &PySiftResult,
    breast_mask: &PyBinaryMask,
) -> PyResult<PyPseudoColorImage> {
    let pcm = sifting::compose_pcm(&image.inner, &bands.inner, &breast_mask.inner).map_err(pyerr)?;
    Ok(PyPseudoColorImage { inner: pcm })
}

/// Baseline blob detector over the sift bands, scored by within-breast
/// quantile thresholding, area filtering, and greedy mask-IoU
/// suppression. Area bounds derive from the sift configuration.
#[pyfunction]
#[pyo3(signature = (bands, breast_mask, effective_pixel_size_mm, quantile=None, nms_iou=None))]
fn blob_detect(
    bands: &PySiftResult,
    breast_mask: &PyBinaryMask,
    effective_pixel_size_mm: f64,
    quantile: Option<f64>,
    nms_iou: Option<f64>,
) -> PyResult<Vec<PyDetection>> {
    let mut cfg = DetectorConfig::default();
    if let Some(q) = quantile {
        cfg.quantile_q = q;
    }
    if let Some(i) = nms_iou {
        cfg.nms_iou = i;
    }
    let sc = &bands.inner.config;
    let params = DetectorParams::resolve(&cfg, sc.a_min_mm2, sc.a_max_mm2, effective_pixel_size_mm)
        .map_err(pyerr)?;
    let dets = detection::blob_detect(&bands.inner, &breast_mask.inner, &params).map_err(pyerr)?;
    Ok(dets.into_iter().map(|inner| PyDetection { inner }).collect())
}

/// Dice similarity index of two same-sized masks: 2|a∩b| / (|a|+|b|).
#[pyfunction]
fn dice(a: &PyBinaryMask, b: &PyBinaryMask) -> PyResult<f64> {
    evaluation::dice(&a.inner, &b.inner).map_err(pyerr)
}

/// TPR of a FROC curve (list of (fpi, tpr) points, fpi strictly
/// increasing) at a reference FPI, by linear interpolation.
#[pyfunction]
fn tpr_at_fpi(points: Vec<(f64, f64)>, fpi_ref: f64) -> PyResult<f64> {
    let curve = FrocCurve::new(points).map_err(pyerr)?;
    Ok(evaluation::tpr_at_fpi(&curve, fpi_ref))
}

/// Normalized partial area under a FROC curve over [fpi_lo, fpi_hi].
#[pyfunction]
fn partial_aufc(points: Vec<(f64, f64)>, fpi_lo: f64, fpi_hi: f64) -> PyResult<f64> {
    let curve = FrocCurve::new(points).map_err(pyerr)?;
    evaluation::partial_aufc(&curve, fpi_lo, fpi_hi).map_err(pyerr)
}

/// Runs the batch CLI (`preprocess`, `sift`, `detect`, `evaluate`,
/// `pipeline`, `morph-selftest`) with the given argument list, returning
/// its exit code (0 ok, 1 validation, 2 I/O).
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    mammosift::cli::run(std::iter::once("mammosift".to_string()).chain(args))
}

#[pymodule]
fn mammosift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrayImage16>()?;
    m.add_class::<PyBinaryMask>()?;
    m.add_class::<PyPreprocessResult>()?;
    m.add_class::<PySiftResult>()?;
    m.add_class::<PyPseudoColorImage>()?;
    m.add_class::<PyDetection>()?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(wavelet_downsample, m)?)?;
    m.add_function(wrap_pyfunction!(open_line, m)?)?;
    m.add_function(wrap_pyfunction!(sift, m)?)?;
    m.add_function(wrap_pyfunction!(compose_pcm, m)?)?;
    m.add_function(wrap_pyfunction!(blob_detect, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(tpr_at_fpi, m)?)?;
    m.add_function(wrap_pyfunction!(partial_aufc, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
