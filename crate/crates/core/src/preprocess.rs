//! Ingestion and standardisation of matched views.
//!
//! Each view is column-centred and then divided by the Frobenius norm of the
//! centred matrix, so every view enters the decomposition with unit total
//! variation. The means and scales are kept so fitted signals can be mapped
//! back to the raw measurement scale.

use std::path::Path;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

use crate::error::{Result, SlideError};
use crate::linalg;

/// Matched raw matrices sharing the same `n` rows.
#[derive(Debug, Clone)]
pub struct RawViews {
    views: Vec<Array2<f64>>,
    names: Vec<String>,
}

impl RawViews {
    pub fn new(views: Vec<Array2<f64>>, names: Vec<String>) -> Result<Self> {
        if views.is_empty() {
            return Err(SlideError::EmptyInput);
        }
        if names.len() != views.len() {
            return Err(SlideError::DimensionMismatch(format!(
                "{} views but {} names",
                views.len(),
                names.len()
            )));
        }
        let n = views[0].nrows();
        if n < 2 {
            return Err(SlideError::DimensionMismatch(format!("need at least 2 samples, got {n}")));
        }
        for (name, v) in names.iter().zip(&views) {
            if v.nrows() != n {
                return Err(SlideError::DimensionMismatch(format!(
                    "view `{name}` has {} rows, expected {n}",
                    v.nrows()
                )));
            }
            if v.ncols() == 0 {
                return Err(SlideError::DimensionMismatch(format!("view `{name}` has no columns")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SlideError::NonFinite("raw view"));
            }
        }
        Ok(RawViews { views, names })
    }

    /// Views named `view1`, `view2`, ...
    pub fn unnamed(views: Vec<Array2<f64>>) -> Result<Self> {
        let names = (1..=views.len()).map(|i| format!("view{i}")).collect();
        Self::new(views, names)
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn p(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.ncols()).collect()
    }

    pub fn d(&self) -> usize {
        self.views.len()
    }

    /// Load one CSV file per view; view names are the file stems.
    pub fn from_csv_files<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut views = Vec::with_capacity(paths.len());
        let mut names = Vec::with_capacity(paths.len());
        for path in paths {
            let path = path.as_ref();
            views.push(read_csv_matrix(path)?);
            names.push(
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("view{}", names.len() + 1)),
            );
        }
        Self::new(views, names)
    }
}

/// Column-centred, unit-Frobenius views plus the metadata to undo it.
#[derive(Debug, Clone)]
pub struct MultiViewData {
    views: Vec<Array2<f64>>,
    column_means: Vec<Array1<f64>>,
    frobenius_scales: Vec<f64>,
    names: Vec<String>,
}

impl MultiViewData {
    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn view(&self, i: usize) -> ArrayView2<'_, f64> {
        self.views[i].view()
    }

    pub fn column_means(&self) -> &[Array1<f64>] {
        &self.column_means
    }

    pub fn frobenius_scales(&self) -> &[f64] {
        &self.frobenius_scales
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn d(&self) -> usize {
        self.views.len()
    }

    pub fn p(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.ncols()).collect()
    }

    pub fn p_total(&self) -> usize {
        self.views.iter().map(|v| v.ncols()).sum()
    }

    /// Start offset of each view's column block in the concatenated matrix.
    pub fn offsets(&self) -> Vec<usize> {
        block_offsets(&self.p())
    }

    /// Undo the standardisation of view `i` for a matrix expressed in the
    /// standardised scale (e.g. a fitted signal), optionally adding the means back.
    pub fn unscale(&self, i: usize, a: ArrayView2<f64>, add_means: bool) -> Array2<f64> {
        let mut out = &a * self.frobenius_scales[i];
        if add_means {
            out += &self.column_means[i].view().insert_axis(Axis(0));
        }
        out
    }

    /// Reconstruct the raw input view.
    pub fn reconstruct_raw(&self, i: usize) -> Array2<f64> {
        self.unscale(i, self.views[i].view(), true)
    }
}

pub(crate) fn block_offsets(p: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(p.len());
    let mut acc = 0;
    for &pi in p {
        offsets.push(acc);
        acc += pi;
    }
    offsets
}

pub fn center_and_scale(raw: &RawViews) -> Result<MultiViewData> {
    let mut views = Vec::with_capacity(raw.d());
    let mut column_means = Vec::with_capacity(raw.d());
    let mut frobenius_scales = Vec::with_capacity(raw.d());
    for (name, v) in raw.names.iter().zip(&raw.views) {
        let (centered, means) = linalg::column_center(v.view());
        let scale = linalg::frobenius_sq(centered.view()).sqrt();
        // relative guard: constant columns leave only rounding residue
        let magnitude = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if scale == 0.0 || scale <= 1e-14 * magnitude * (v.len() as f64).sqrt() {
            return Err(SlideError::ZeroView { view: name.clone() });
        }
        views.push(centered / scale);
        column_means.push(means);
        frobenius_scales.push(scale);
    }
    Ok(MultiViewData {
        views,
        column_means,
        frobenius_scales,
        names: raw.names.clone(),
    })
}

/// Column-bind the standardised views into one `n × p` matrix.
pub fn concatenate_views(data: &MultiViewData) -> Array2<f64> {
    let parts: Vec<_> = data.views.iter().map(|v| v.view()).collect();
    concatenate(Axis(1), &parts).expect("views share the row count")
}

/// Read a numeric CSV matrix. A first row containing any non-numeric token is
/// taken to be a header and skipped.
pub fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path)?;
    parse_csv_matrix(file, &path.display().to_string())
}

pub fn parse_csv_matrix<R: std::io::Read>(reader: R, label: &str) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0usize;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(SlideError::Parse(format!("{label}: line {}: {e}", line + 1)));
            }
        };
        match ncols {
            None => ncols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(SlideError::Parse(format!(
                    "{label}: line {} has {} fields, expected {c}",
                    line + 1,
                    row.len()
                )));
            }
            _ => {}
        }
        data.extend(row);
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| SlideError::Parse(format!("{label}: no numeric rows")))?;
    Array2::from_shape_vec((nrows, ncols), data).map_err(|e| SlideError::Parse(e.to_string()))
}

/// Write a matrix as headerless CSV with round-trip float formatting.
pub fn write_csv_matrix(path: &Path, a: ArrayView2<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in a.rows() {
        wtr.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_view_is_rejected() {
        let raw = RawViews::unnamed(vec![array![[1.0, 5.0], [1.0, 5.0], [1.0, 5.0]]]).unwrap();
        assert!(matches!(center_and_scale(&raw), Err(SlideError::ZeroView { .. })));
    }

    #[test]
    fn standardised_view_is_a_fixed_point() {
        let x = array![[1.0, -2.0], [-1.0, 2.0]];
        let x = &x / linalg::frobenius_sq(x.view()).sqrt();
        let raw = RawViews::unnamed(vec![x.clone()]).unwrap();
        let data = center_and_scale(&raw).unwrap();
        assert!((data.frobenius_scales()[0] - 1.0).abs() < 1e-15);
        assert!(data.column_means()[0].iter().all(|m| m.abs() < 1e-15));
        for (a, b) in data.view(0).iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn two_by_one_view() {
        // mean 2, centred (-1, 1), norm sqrt(2)
        let raw = RawViews::unnamed(vec![array![[1.0], [3.0]]]).unwrap();
        let data = center_and_scale(&raw).unwrap();
        let h = 1.0 / 2.0_f64.sqrt();
        assert!((data.frobenius_scales()[0] - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!((data.view(0)[[0, 0]] + h).abs() < 1e-15);
        assert!((data.view(0)[[1, 0]] - h).abs() < 1e-15);
    }

    #[test]
    fn row_count_mismatch() {
        let err = RawViews::unnamed(vec![Array2::zeros((3, 2)), Array2::zeros((4, 2))]).unwrap_err();
        assert!(matches!(err, SlideError::DimensionMismatch(_)));
    }

    #[test]
    fn concatenation_keeps_blocks() {
        let a = array![[1.0], [2.0], [6.0]];
        let b = array![[0.0], [4.0], [-1.0]];
        let data = center_and_scale(&RawViews::unnamed(vec![a, b]).unwrap()).unwrap();
        let x = concatenate_views(&data);
        assert_eq!(x.dim(), (3, 2));
        assert_eq!(data.offsets(), vec![0, 1]);
        assert_eq!(x.column(0), data.view(0).column(0));
        assert_eq!(x.column(1), data.view(1).column(0));

        let single = center_and_scale(&RawViews::unnamed(vec![array![[1.0, 0.0], [0.0, 1.0]]]).unwrap()).unwrap();
        assert_eq!(concatenate_views(&single), single.views()[0]);
    }

    #[test]
    fn csv_header_detection() {
        let with_header = "a,b\n1,2\n3,4.5\n";
        let m = parse_csv_matrix(with_header.as_bytes(), "t").unwrap();
        assert_eq!(m, array![[1.0, 2.0], [3.0, 4.5]]);
        let bare = "1,2\n3,4\n";
        assert_eq!(parse_csv_matrix(bare.as_bytes(), "t").unwrap().nrows(), 2);
        let bad = "1,2\nx,4\n";
        assert!(parse_csv_matrix(bad.as_bytes(), "t").is_err());
        let ragged = "1,2\n3\n";
        assert!(parse_csv_matrix(ragged.as_bytes(), "t").is_err());
    }
}
