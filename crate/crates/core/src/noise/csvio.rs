//! Dataset CSV layout: `id,true_label,noisy_label,f0,...,f{d-1}`, one row per
//! instance. Features are written in shortest round-trip form, so a reload
//! reproduces every bit.

use std::path::Path;

use super::dataset::{LabeledInstance, NoisyDataset, Provenance};
use crate::error::{Error, Result};

pub fn write_dataset_csv<W: std::io::Write>(data: &NoisyDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "true_label".into(), "noisy_label".into()];
    header.extend((0..data.dim()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for inst in data.instances() {
        let mut row = vec![
            inst.id.to_string(),
            inst.true_label.to_string(),
            inst.noisy_label.to_string(),
        ];
        row.extend(inst.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn export_dataset(data: &NoisyDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_csv(data, std::io::BufWriter::new(file))
}

/// Reads a dataset CSV. `classes` defaults to one past the largest label.
pub fn import_dataset(path: &Path, classes: Option<usize>) -> Result<NoisyDataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let dim = header.len().saturating_sub(3);
    let expected: Vec<String> = ["id", "true_label", "noisy_label"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..dim).map(|k| format!("f{k}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::InvalidArgument(format!(
            "{}: unexpected header {:?}",
            path.display(),
            header
        )));
    }
    let bad = |line: usize, what: &str| Error::InvalidArgument(format!("{}: row {line}: bad {what}", path.display()));
    let mut instances = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let field = |k: usize, what: &str| record.get(k).ok_or_else(|| bad(line, what));
        let id = field(0, "id")?.parse().map_err(|_| bad(line, "id"))?;
        let true_label = field(1, "true_label")?.parse().map_err(|_| bad(line, "true_label"))?;
        let noisy_label = field(2, "noisy_label")?.parse().map_err(|_| bad(line, "noisy_label"))?;
        let features = (0..dim)
            .map(|k| {
                field(3 + k, "feature")?
                    .parse::<f64>()
                    .map_err(|_| bad(line, "feature"))
            })
            .collect::<Result<Vec<_>>>()?;
        instances.push(LabeledInstance {
            id,
            features,
            noisy_label,
            true_label,
        });
    }
    let classes = classes.unwrap_or_else(|| {
        instances
            .iter()
            .map(|i| i.true_label.max(i.noisy_label) + 1)
            .max()
            .unwrap_or(0)
            .max(2)
    });
    NoisyDataset::new(
        instances,
        classes,
        Provenance {
            generator: format!("csv({})", path.display()),
            seed: 0,
            noise: "imported".into(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{make_blobs, NoiseSpec};

    #[test]
    fn round_trip_is_bit_identical() {
        let d = make_blobs(3, 4, 20, 0.7, 2)
            .unwrap()
            .with_noise(&NoiseSpec::Symmetric { rate: 0.3 }, 1)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        export_dataset(&d, &path).unwrap();
        let back = import_dataset(&path, Some(3)).unwrap();
        assert_eq!(back.instances(), d.instances());
        for (a, b) in back.instances().iter().zip(d.instances()) {
            for (x, y) in a.features.iter().zip(&b.features) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,label,f0\n0,1,0.5\n").unwrap();
        assert!(import_dataset(&path, None).is_err());
        std::fs::write(&path, "id,true_label,noisy_label,f0\n0,1,x,0.5\n").unwrap();
        assert!(import_dataset(&path, None).is_err());
    }
}
