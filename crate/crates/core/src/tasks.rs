//! Labelled vector datasets, seeded generators and deterministic batching.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Validation(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Validation("a dataset needs at least one sample".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if !features.is_finite() {
            return Err(Error::Validation("non-finite feature".into()));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            features: self.features.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// A train/eval pair under one task id.
#[derive(Clone, Debug)]
pub struct TaskSpec {
    pub task_id: String,
    pub train: Dataset,
    pub eval: Dataset,
    pub provenance: String,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, train: Dataset, eval: Dataset, provenance: impl Into<String>) -> Result<Self> {
        if train.dim() != eval.dim() || train.num_classes != eval.num_classes {
            return Err(Error::Validation(
                "train and eval splits disagree on dimension or class count".into(),
            ));
        }
        Ok(TaskSpec {
            task_id: task_id.into(),
            train,
            eval,
            provenance: provenance.into(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.train.num_classes
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    /// Stratified split of `ds` into a task.
    pub fn from_dataset(task_id: impl Into<String>, ds: &Dataset, eval_fraction: f64, seed: u64) -> Result<Self> {
        let (train, eval) = split(ds, eval_fraction, seed)?;
        let provenance = format!("{} split eval_fraction={eval_fraction} seed={seed}", ds.name);
        TaskSpec::new(task_id, train, eval, provenance)
    }
}

/// Gaussian clusters around class means placed on the unit sphere.
/// Each coordinate of a sample gets independent noise with standard deviation `spread`.
pub fn make_blobs(classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Validation("make_blobs needs at least two classes".into()));
    }
    if per_class == 0 || dim == 0 {
        return Err(Error::Validation("make_blobs needs per_class >= 1 and dim >= 1".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Validation(format!("spread must be finite and non-negative, got {spread}")));
    }
    let mut rng = Rng::new(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (c, mean) in means.iter().enumerate() {
            data.extend(mean.iter().map(|&mu| mu + spread * rng.normal()));
            labels.push(c);
        }
    }
    let features = Matrix::from_vec(labels.len(), dim, data)?;
    Dataset::new(format!("blobs(c={classes},d={dim},n={per_class},s={spread},seed={seed})"), features, labels, classes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "relation", rename_all = "kebab-case")]
pub enum Relation {
    LabelPermutation,
    FixedRotation,
    ClassSubset { classes: usize },
}

/// A dataset sharing structure with `base`: relabelled classes, rotated
/// features, or a relabelled subset of the classes.
pub fn derive_related_task(base: &Dataset, relation: Relation, seed: u64) -> Result<Dataset> {
    let mut rng = Rng::new(seed);
    match relation {
        Relation::LabelPermutation => {
            let mut perm: Vec<usize> = (0..base.num_classes).collect();
            rng.shuffle(&mut perm);
            relabel(base, &perm, format!("{}+perm({seed})", base.name))
        }
        Relation::FixedRotation => {
            let q = random_orthogonal(base.dim(), &mut rng);
            let features = base.features.matmul(&q)?;
            Dataset::new(
                format!("{}+rot({seed})", base.name),
                features,
                base.labels.clone(),
                base.num_classes,
            )
        }
        Relation::ClassSubset { classes } => {
            if classes < 2 || classes > base.num_classes {
                return Err(Error::Validation(format!(
                    "class subset must keep 2..={} classes, got {classes}",
                    base.num_classes
                )));
            }
            let mut keep = rng.distinct(base.num_classes, classes);
            keep.sort_unstable();
            let mut map = vec![usize::MAX; base.num_classes];
            for (new, &old) in keep.iter().enumerate() {
                map[old] = new;
            }
            let rows: Vec<usize> = (0..base.len()).filter(|&i| map[base.labels[i]] != usize::MAX).collect();
            let mut out = base.subset(&rows, format!("{}+subset({classes},{seed})", base.name));
            for l in out.labels.iter_mut() {
                *l = map[*l];
            }
            out.num_classes = classes;
            Ok(out)
        }
    }
}

/// Relabels class `c` as `perm[c]`.
pub fn relabel(base: &Dataset, perm: &[usize], name: String) -> Result<Dataset> {
    Dataset::new(
        name,
        base.features.clone(),
        base.labels.iter().map(|&l| perm[l]).collect(),
        base.num_classes,
    )
}

/// Haar-distributed orthogonal matrix: Gram-Schmidt on a Gaussian matrix,
/// orthonormalising columns.
pub fn random_orthogonal(n: usize, rng: &mut Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        // Two passes of modified Gram-Schmidt keep the basis orthogonal to
        // machine precision.
        for _ in 0..2 {
            for q in &cols {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for (a, b) in v.iter_mut().zip(q) {
                    *a -= dot * b;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Stratified seeded split. Each class contributes `round(n_c · eval_fraction)`
/// samples to the eval side.
pub fn split(ds: &Dataset, eval_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "eval_fraction must lie strictly between 0 and 1, got {eval_fraction}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for mut members in by_class {
        rng.shuffle(&mut members);
        let take = (members.len() as f64 * eval_fraction).round() as usize;
        eval.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    if eval.is_empty() || train.is_empty() {
        return Err(Error::Validation(format!(
            "split of {} samples at eval_fraction {eval_fraction} leaves an empty side",
            ds.len()
        )));
    }
    rng.shuffle(&mut train);
    rng.shuffle(&mut eval);
    Ok((
        ds.subset(&train, format!("{}/train", ds.name)),
        ds.subset(&eval, format!("{}/eval", ds.name)),
    ))
}

/// Endless mini-batch iterator. Each pass over the data is a fresh shuffle;
/// batches within a pass are disjoint and the short remainder is dropped.
pub struct BatchStream<'a> {
    data: &'a Dataset,
    batch_size: usize,
    rng: &'a mut Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> BatchStream<'a> {
    pub fn new(data: &'a Dataset, batch_size: usize, rng: &'a mut Rng) -> Result<Self> {
        if batch_size == 0 || batch_size > data.len() {
            return Err(Error::Validation(format!(
                "batch size {batch_size} does not fit a training set of {}",
                data.len()
            )));
        }
        Ok(BatchStream {
            data,
            batch_size,
            rng,
            order: (0..data.len()).collect(),
            cursor: usize::MAX,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.data.len() / self.batch_size
    }

    /// Row indices of the next batch.
    pub fn next_indices(&mut self) -> &[usize] {
        if self.cursor == usize::MAX || self.cursor + self.batch_size > self.order.len() {
            self.order.sort_unstable();
            self.rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor += self.batch_size;
        &self.order[start..start + self.batch_size]
    }
}

impl Iterator for BatchStream<'_> {
    type Item = (Matrix, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let data = self.data;
        let idx = self.next_indices();
        let labels = idx.iter().map(|&i| data.labels[i]).collect();
        Some((data.features.gather_rows(idx), labels))
    }
}

pub fn batch_stream<'a>(train: &'a Dataset, batch_size: usize, rng: &'a mut Rng) -> Result<BatchStream<'a>> {
    BatchStream::new(train, batch_size, rng)
}

/// Reads a numeric CSV. The label column holds small non-negative integers;
/// every other column is a feature. Row numbers in errors are 1-based file lines.
pub fn load_csv(path: impl AsRef<Path>, label_column: usize, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column, has_header, path.display().to_string())
}

pub fn read_csv(reader: impl std::io::Read, label_column: usize, has_header: bool, name: String) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut width = None;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                row,
                message: format!("ragged row: {} fields, expected {expected}", record.len()),
            });
        }
        if label_column >= expected {
            return Err(Error::Parse {
                row,
                message: format!("label column {label_column} missing from a {expected}-field row"),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_column {
                let label: i64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("label `{cell}` is not an integer"),
                })?;
                if label < 0 {
                    return Err(Error::Parse {
                        row,
                        message: format!("negative label {label}"),
                    });
                }
                labels.push(label as usize);
            } else {
                let value: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("non-numeric cell `{cell}` in column {c}"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        row,
                        message: format!("non-finite cell `{cell}` in column {c}"),
                    });
                }
                data.push(value);
            }
        }
    }
    let Some(width) = width else {
        return Err(Error::Validation(format!("{name}: no data rows")));
    };
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let features = Matrix::from_vec(labels.len(), width - 1, data)?;
    Dataset::new(name, features, labels, num_classes)
}

/// Writes features followed by the label as the last column, no header.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut wtr = csv::Writer::from_path(path)?;
    for (i, &label) in ds.labels.iter().enumerate() {
        let mut fields: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        fields.push(label.to_string());
        wtr.write_record(&fields)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn nearest_mean_accuracy(ds: &Dataset) -> f64 {
        let d = ds.dim();
        let mut sums = vec![vec![0.0; d]; ds.num_classes];
        let counts = ds.class_counts();
        for (i, &l) in ds.labels.iter().enumerate() {
            for (s, v) in sums[l].iter_mut().zip(ds.features.row(i)) {
                *s += v;
            }
        }
        for (s, &n) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
        let hits = (0..ds.len())
            .filter(|&i| {
                let row = ds.features.row(i);
                let best = (0..ds.num_classes)
                    .min_by(|&a, &b| {
                        let da: f64 = row.iter().zip(&sums[a]).map(|(x, m)| (x - m).powi(2)).sum();
                        let db: f64 = row.iter().zip(&sums[b]).map(|(x, m)| (x - m).powi(2)).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                best == ds.labels[i]
            })
            .count();
        hits as f64 / ds.len() as f64
    }

    #[test]
    fn blobs_shape_and_determinism() {
        let a = make_blobs(6, 100, 10, 0.3, 1).unwrap();
        assert_eq!(a.features.shape(), (60, 100));
        assert_eq!(a.num_classes, 6);
        assert_eq!(a.class_counts(), vec![10; 6]);
        assert_eq!(a, make_blobs(6, 100, 10, 0.3, 1).unwrap());
        assert_ne!(a.features, make_blobs(6, 100, 10, 0.3, 2).unwrap().features);
        assert!(make_blobs(1, 4, 4, 0.1, 0).is_err());
    }

    #[test]
    fn zero_spread_is_separable() {
        let ds = make_blobs(6, 20, 5, 0.0, 7).unwrap();
        assert_eq!(nearest_mean_accuracy(&ds), 1.0);
    }

    #[test]
    fn identity_permutation_is_noop() {
        let ds = make_blobs(3, 4, 5, 0.5, 0).unwrap();
        let same = relabel(&ds, &[0, 1, 2], ds.name.clone()).unwrap();
        assert_eq!(same, ds);
        let permuted = derive_related_task(&ds, Relation::LabelPermutation, 3).unwrap();
        assert_eq!(permuted.features, ds.features);
    }

    #[test]
    fn rotation_preserves_distances() {
        let ds = make_blobs(3, 12, 4, 0.5, 0).unwrap();
        let rot = derive_related_task(&ds, Relation::FixedRotation, 5).unwrap();
        assert_ne!(rot.features, ds.features);
        let gram = |m: &Matrix| m.matmul_t(m).unwrap();
        let (a, b) = (gram(&ds.features), gram(&rot.features));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                let d0: f64 = ds.features.row(i).iter().zip(ds.features.row(j)).map(|(p, q)| (p - q).powi(2)).sum();
                let d1: f64 = rot.features.row(i).iter().zip(rot.features.row(j)).map(|(p, q)| (p - q).powi(2)).sum();
                assert!((d0.sqrt() - d1.sqrt()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn class_subset_relabels() {
        let ds = make_blobs(6, 3, 4, 0.5, 0).unwrap();
        let sub = derive_related_task(&ds, Relation::ClassSubset { classes: 3 }, 1).unwrap();
        assert_eq!(sub.num_classes, 3);
        assert_eq!(sub.len(), 12);
        assert!(sub.labels.iter().all(|&l| l < 3));
        assert!(derive_related_task(&ds, Relation::ClassSubset { classes: 1 }, 1).is_err());
    }

    #[test]
    fn split_is_stratified_and_complete() {
        let ds = make_blobs(5, 3, 17, 0.5, 0).unwrap();
        let (train, eval) = split(&ds, 0.2, 9).unwrap();
        assert_eq!(train.len() + eval.len(), ds.len());
        for (c, n) in eval.class_counts().into_iter().enumerate() {
            let target = ds.class_counts()[c] as f64 * 0.2;
            assert!((n as f64 - target).abs() <= 1.0, "class {c}: {n} vs {target}");
        }
        let key = |d: &Dataset, i: usize| {
            let mut k: Vec<u64> = d.features.row(i).iter().map(|v| v.to_bits()).collect();
            k.push(d.labels[i] as u64);
            k
        };
        let mut all: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        for i in 0..ds.len() {
            *all.entry(key(&ds, i)).or_default() += 1;
        }
        for d in [&train, &eval] {
            for i in 0..d.len() {
                *all.get_mut(&key(d, i)).unwrap() -= 1;
            }
        }
        assert!(all.values().all(|&v| v == 0));
    }

    #[test]
    fn split_rejects_empty_side() {
        let ds = make_blobs(2, 3, 1, 0.5, 0).unwrap();
        assert!(split(&ds, 0.2, 0).is_err());
        assert!(split(&ds, 0.0, 0).is_err());
        assert!(split(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn batches_cover_epoch() {
        let ds = make_blobs(2, 2, 16, 0.5, 0).unwrap();
        let mut rng = Rng::new(1);
        let mut stream = batch_stream(&ds, 16, &mut rng).unwrap();
        assert_eq!(stream.batches_per_epoch(), 2);
        let mut seen: Vec<usize> = Vec::new();
        seen.extend_from_slice(stream.next_indices());
        seen.extend_from_slice(stream.next_indices());
        seen.sort_unstable();
        assert_eq!(seen, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn short_batch_dropped_and_each_kept_sample_once() {
        let ds = make_blobs(2, 2, 10, 0.5, 0).unwrap();
        let mut rng = Rng::new(4);
        let mut stream = batch_stream(&ds, 6, &mut rng).unwrap();
        assert_eq!(stream.batches_per_epoch(), 3);
        let mut seen: Vec<usize> = (0..3).flat_map(|_| stream.next_indices().to_vec()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 18);
    }

    #[test]
    fn same_rng_same_batches() {
        let ds = make_blobs(3, 2, 10, 0.5, 0).unwrap();
        let (mut r1, mut r2) = (Rng::new(8), Rng::new(8));
        let a: Vec<_> = batch_stream(&ds, 4, &mut r1).unwrap().take(20).collect();
        let b: Vec<_> = batch_stream(&ds, 4, &mut r2).unwrap().take(20).collect();
        assert_eq!(a, b);
        let mut r3 = Rng::new(8);
        assert!(batch_stream(&ds, 31, &mut r3).is_err());
    }

    #[test]
    fn csv_small_file() {
        let text = "0.5,1.0,0\n-2,3e-1,1\n4,5,0\n";
        let ds = read_csv(text.as_bytes(), 2, false, "t".into()).unwrap();
        assert_eq!(ds.features.shape(), (3, 2));
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.features.row(1), &[-2.0, 0.3]);

        let with_header = "label,a,b\n1,0.5,1.0\n";
        let ds = read_csv(with_header.as_bytes(), 0, true, "h".into()).unwrap();
        assert_eq!(ds.features.row(0), &[0.5, 1.0]);
    }

    #[test]
    fn csv_errors_name_the_row() {
        let ragged = "1,2,0\n1,0\n";
        match read_csv(ragged.as_bytes(), 2, false, "r".into()) {
            Err(Error::Parse { row: 2, message }) => assert!(message.contains("ragged")),
            other => panic!("{other:?}"),
        }
        match read_csv("1,x,0\n".as_bytes(), 2, false, "r".into()) {
            Err(Error::Parse { row: 1, message }) => assert!(message.contains("non-numeric")),
            other => panic!("{other:?}"),
        }
        match read_csv("1,2,0\n1,2,-1\n".as_bytes(), 2, false, "r".into()) {
            Err(Error::Parse { row: 2, message }) => assert!(message.contains("negative")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let ds = make_blobs(3, 5, 4, 0.7, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path, 5, false).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.features, ds.features);
    }
}
