use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Labelled inputs in `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if inputs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                found: labels.len(),
            });
        }
        let d = inputs[0].len();
        for x in &inputs {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
            if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid("inputs", "entries must lie in [0, 1]"));
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(
                "labels",
                format!("label {l} is not below K = {num_classes}"),
            ));
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> (&[f64], usize) {
        (&self.inputs[i], self.labels[i])
    }

    /// One row per example: `d` values then the label, no header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (x, l) in self.inputs.iter().zip(&self.labels) {
            for v in x {
                out.push_str(&v.to_string());
                out.push(',');
            }
            out.push_str(&l.to_string());
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads the [`Dataset::write_csv`] format. `K` is one more than the
    /// largest label unless given.
    pub fn read_csv(path: &Path, num_classes: Option<usize>) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        let mut offset = 0;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let row_offset = offset;
            offset += line.len() + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 2 {
                return Err(Error::Format {
                    offset: row_offset,
                    reason: "row needs values and a label".into(),
                });
            }
            let (vals, label) = fields.split_at(fields.len() - 1);
            let x = vals
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format {
                    offset: row_offset,
                    reason: e.to_string(),
                })?;
            let l = label[0].parse::<usize>().map_err(|e| Error::Format {
                offset: row_offset,
                reason: format!("label: {e}"),
            })?;
            inputs.push(x);
            labels.push(l);
        }
        let k = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::new(inputs, labels, k)
    }
}

const TEMPLATES: [&str; 10] = [
    "..####..\
     .##..##.\
     ##....##\
     ##....##\
     ##....##\
     ##....##\
     .##..##.\
     ..####..",
    "...##...\
     ..###...\
     .####...\
     ...##...\
     ...##...\
     ...##...\
     ...##...\
     .######.",
    "..####..\
     .##..##.\
     .....##.\
     ....##..\
     ...##...\
     ..##....\
     .##.....\
     .######.",
    ".#####..\
     .....##.\
     .....##.\
     ..####..\
     .....##.\
     .....##.\
     .....##.\
     .#####..",
    "....##..\
     ...###..\
     ..#.##..\
     .#..##..\
     #######.\
     ....##..\
     ....##..\
     ....##..",
    ".######.\
     .##.....\
     .##.....\
     .#####..\
     .....##.\
     .....##.\
     .##..##.\
     ..####..",
    "..####..\
     .##.....\
     ##......\
     ##.###..\
     ###..##.\
     ##...##.\
     .##..##.\
     ..####..",
    ".######.\
     .....##.\
     ....##..\
     ....##..\
     ...##...\
     ...##...\
     ..##....\
     ..##....",
    "..####..\
     .##..##.\
     .##..##.\
     ..####..\
     .##..##.\
     ##....##\
     .##..##.\
     ..####..",
    "..####..\
     .##..##.\
     .##..##.\
     ..#####.\
     .....##.\
     .....##.\
     ....##..\
     ..###...",
];

/// Pixel noise of the procedural digit set.
pub const DIGITS_NOISE_STD: f64 = 0.3;

/// The clean 8×8 template of `digit`, row-major, ink = 1.
pub fn digit_template(digit: usize) -> Vec<f64> {
    TEMPLATES[digit]
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| if c == '#' { 1.0 } else { 0.0 })
        .collect()
}

/// `per_class` noisy copies of each template, clipped to `[0, 1]`,
/// interleaved by class.
pub fn digits8x8(per_class: usize, rng: &mut RngStream) -> Dataset {
    let templates: Vec<Vec<f64>> = (0..10).map(digit_template).collect();
    let mut inputs = Vec::with_capacity(10 * per_class);
    let mut labels = Vec::with_capacity(10 * per_class);
    for _ in 0..per_class {
        for (c, t) in templates.iter().enumerate() {
            inputs.push(
                t.iter()
                    .map(|v| (v + DIGITS_NOISE_STD * rng.gaussian()).clamp(0.0, 1.0))
                    .collect(),
            );
            labels.push(c);
        }
    }
    Dataset {
        inputs,
        labels,
        num_classes: 10,
    }
}

/// The bundled train/test split: 100 and 50 examples per class from
/// independent streams of `seed`.
pub fn digits8x8_split(seed: u64) -> (Dataset, Dataset) {
    let root = RngStream::new(seed);
    (digits8x8(100, &mut root.split(0)), digits8x8(50, &mut root.split(1)))
}

/// Two well separated 2-D Gaussian blobs, clipped to the unit square.
pub fn blobs2d(n_per_class: usize, rng: &mut RngStream) -> Dataset {
    let centers = [[0.25, 0.25], [0.75, 0.75]];
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n_per_class {
        for (c, m) in centers.iter().enumerate() {
            inputs.push(m.iter().map(|v| (v + 0.07 * rng.gaussian()).clamp(0.0, 1.0)).collect());
            labels.push(c);
        }
    }
    Dataset {
        inputs,
        labels,
        num_classes: 2,
    }
}
