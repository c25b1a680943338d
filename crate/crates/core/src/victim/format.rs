//! Versioned little-endian weight files.
//!
//! Layout: `b"SPAV"`, one ASCII version byte, `u32` model kind, `u32`
//! layer count, `(u32 rows, u32 cols)` per layer, then per layer the
//! row-major `f64` weights followed by the `rows` biases.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpModel, SoftmaxModel, Trainable, Victim};
use crate::error::{Error, Result};
use crate::oracle::Classifier;

pub const MAGIC: &[u8; 4] = b"SPAV";
pub const VERSION: u8 = b'1';

const KIND_SOFTMAX: u32 = 0;
const KIND_MLP: u32 = 1;

pub fn encode(v: &Victim) -> Vec<u8> {
    let (kind, shapes, params) = match v {
        Victim::Softmax(m) => (KIND_SOFTMAX, vec![(m.num_classes(), m.input_dim())], m.params()),
        Victim::Mlp(m) => (
            KIND_MLP,
            vec![(m.hidden(), m.input_dim()), (m.num_classes(), m.hidden())],
            m.params(),
        ),
    };
    let mut out = Vec::with_capacity(16 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for (r, c) in &shapes {
        out.extend_from_slice(&(*r as u32).to_le_bytes());
        out.extend_from_slice(&(*c as u32).to_le_bytes());
    }
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos,
                reason: format!(
                    "truncated: expected {n} bytes of {what}, found {}",
                    self.buf.len() - self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, "parameters")?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<Victim> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let kind_at = r.pos;
    let kind = r.u32("model kind")?;
    let n_layers = r.u32("layer count")? as usize;
    let expected_layers = match kind {
        KIND_SOFTMAX => 1,
        KIND_MLP => 2,
        _ => {
            return Err(Error::Format {
                offset: kind_at,
                reason: format!("unknown model kind {kind}"),
            })
        }
    };
    if n_layers != expected_layers {
        return Err(Error::Format {
            offset: kind_at + 4,
            reason: format!("expected {expected_layers} layers, found {n_layers}"),
        });
    }
    let mut shapes = Vec::new();
    for _ in 0..n_layers {
        let rows = r.u32("layer rows")? as usize;
        let cols = r.u32("layer cols")? as usize;
        shapes.push((rows, cols));
    }
    let shape_end = r.pos;
    let count: usize = shapes.iter().map(|(r, c)| r * c + r).sum();
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(r.f64()?);
    }
    if r.pos != buf.len() {
        return Err(Error::Format {
            offset: r.pos,
            reason: "trailing bytes".into(),
        });
    }
    let shape_err = |e: Error| match e {
        Error::DimensionMismatch { .. } | Error::InvalidParameter { .. } | Error::NonFinite(_) => Error::Format {
            offset: shape_end,
            reason: e.to_string(),
        },
        e => e,
    };
    match kind {
        KIND_SOFTMAX => {
            let (k, d) = shapes[0];
            let biases = params.split_off(k * d);
            SoftmaxModel::from_parts(params, biases, d)
                .map(Victim::Softmax)
                .map_err(shape_err)
        }
        _ => {
            let ((h, d), (k, h2)) = (shapes[0], shapes[1]);
            if h != h2 {
                return Err(Error::Format {
                    offset: shape_end,
                    reason: format!("layer shapes disagree: hidden {h} vs {h2}"),
                });
            }
            MlpModel::from_parts(d, h, k, params)
                .map(Victim::Mlp)
                .map_err(shape_err)
        }
    }
}

/// Human-readable record written next to a weight file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub model: String,
    pub input_dim: usize,
    pub num_classes: usize,
    pub hidden: Option<usize>,
    pub data: String,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

pub fn save(v: &Victim, path: &Path, sidecar: Option<&Sidecar>) -> Result<()> {
    fs::write(path, encode(v)).map_err(|e| Error::io(path, e))?;
    if let Some(s) = sidecar {
        let p = sidecar_path(path);
        let mut json = serde_json::to_string_pretty(s)?;
        json.push('\n');
        fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<Victim> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn random_victim(seed: u64, mlp: bool) -> Victim {
        let mut rng = RngStream::new(seed);
        if mlp {
            Victim::Mlp(MlpModel::init(5, 3, 4, &mut rng).unwrap())
        } else {
            let w = (0..20).map(|_| rng.gaussian()).collect();
            let b = (0..4).map(|_| rng.gaussian()).collect();
            Victim::Softmax(SoftmaxModel::from_parts(w, b, 5).unwrap())
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in 0u64..100_000, mlp in any::<bool>()) {
            let v = random_victim(seed, mlp);
            let bytes = encode(&v);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(encode(&back), bytes);
            prop_assert_eq!(back, v);
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode(&random_victim(1, true));
        for cut in [3, 7, 20, bytes.len() - 1] {
            match decode(&bytes[..cut]) {
                Err(Error::Format { offset, reason }) => {
                    assert!(offset <= cut, "{offset} > {cut}");
                    assert!(reason.contains("truncated"));
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn version_mismatch_states_both() {
        let mut bytes = encode(&random_victim(1, false));
        bytes[4] = b'2';
        let e = decode(&bytes).unwrap_err();
        assert!(matches!(
            e,
            Error::VersionMismatch {
                found: b'2',
                expected: b'1'
            }
        ));
        let msg = e.to_string();
        assert!(msg.contains("version 2") && msg.contains("version 1"), "{msg}");
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"XXXX1").is_err());
        let mut bytes = encode(&random_victim(1, false));
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(Error::Format { .. })));
        let mut bytes = encode(&random_victim(1, false));
        bytes[5] = 9;
        assert!(matches!(decode(&bytes), Err(Error::Format { offset: 5, .. })));
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let v = random_victim(2, true);
        let s = Sidecar {
            model: "mlp".into(),
            input_dim: 5,
            num_classes: 4,
            hidden: Some(3),
            data: "test".into(),
            seed: 2,
            epochs: 0,
            learning_rate: 0.1,
            batch_size: 8,
            train_accuracy: 0.0,
            test_accuracy: None,
        };
        save(&v, &p, Some(&s)).unwrap();
        assert_eq!(load(&p).unwrap(), v);
        let back: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
