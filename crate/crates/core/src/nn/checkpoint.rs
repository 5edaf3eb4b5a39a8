//! Plain-text checkpoint format.
//!
//! ```text
//! mtlsa-checkpoint
//! schema_version = 1
//! activation = tanh
//! layer_sizes = 2,16
//! head_hidden = 16
//! classes_a = 3
//! classes_b = 2
//! param trunk.0.weight 16 2
//! <16 lines of 2 values>
//! param trunk.0.bias 1 16
//! <1 line of 16 values>
//! ...
//! end
//! ```
//!
//! Matrices are written row-major, one row per line, values separated by a
//! single space in 17-significant-digit scientific notation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::textio::{fmt_f64, parse_f64, read_to_string, write_file_atomically};

use super::{Dense, MultiTaskNet, NetShape};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
const MAGIC: &str = "mtlsa-checkpoint";

fn join_sizes(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl MultiTaskNet {
    pub fn to_checkpoint_string(&self) -> String {
        let s = self.shape();
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        out.push_str(&format!("schema_version = {CHECKPOINT_SCHEMA_VERSION}\n"));
        out.push_str(&format!("activation = {}\n", s.activation.name()));
        out.push_str(&format!("layer_sizes = {}\n", join_sizes(&s.layer_sizes)));
        out.push_str(&format!("head_hidden = {}\n", join_sizes(&s.head_hidden)));
        out.push_str(&format!("classes_a = {}\n", s.classes_a));
        out.push_str(&format!("classes_b = {}\n", s.classes_b));
        for (name, layer) in self.named_layers() {
            out.push_str(&format!("param {name}.weight {} {}\n", layer.outputs, layer.inputs));
            for row in layer.weights.chunks_exact(layer.inputs) {
                out.push_str(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "));
                out.push('\n');
            }
            out.push_str(&format!("param {name}.bias 1 {}\n", layer.outputs));
            out.push_str(&layer.bias.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn from_checkpoint_str(text: &str, origin: &Path) -> Result<MultiTaskNet> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        let err = |line: usize, msg: String| Error::parse(origin, line, msg);

        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, format!("unexpected end of file, expected {what}")))
        };

        let (n, magic) = next("header")?;
        if magic != MAGIC {
            return Err(err(n, format!("not a checkpoint (header '{magic}')")));
        }

        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = next(key)?;
            match line.split_once('=') {
                Some((k, v)) if k.trim() == key => Ok((n, v.trim().to_string())),
                _ => Err(err(n, format!("expected '{key} = ...', got '{line}'"))),
            }
        };
        let sizes = |n: usize, v: &str| -> Result<Vec<usize>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|e| err(n, format!("bad size '{s}': {e}"))))
                .collect()
        };

        let (n, version) = header("schema_version")?;
        if version != CHECKPOINT_SCHEMA_VERSION.to_string() {
            return Err(err(n, format!("unsupported schema version {version}")));
        }
        let (n, act) = header("activation")?;
        let activation = act.parse().map_err(|e: Error| err(n, e.to_string()))?;
        let (n, ls) = header("layer_sizes")?;
        let layer_sizes = sizes(n, &ls)?;
        let (n, hh) = header("head_hidden")?;
        let head_hidden = sizes(n, &hh)?;
        let (n, ca) = header("classes_a")?;
        let classes_a = ca.parse().map_err(|e| err(n, format!("bad classes_a: {e}")))?;
        let (n, cb) = header("classes_b")?;
        let classes_b = cb.parse().map_err(|e| err(n, format!("bad classes_b: {e}")))?;
        let shape = NetShape {
            layer_sizes,
            head_hidden,
            classes_a,
            classes_b,
            activation,
        };
        shape.validate().map_err(|e| err(n, e.to_string()))?;

        // a zero-seeded net gives the expected layer names and dimensions
        let template = MultiTaskNet::new(shape.clone(), 0)?;
        let mut trunk = Vec::new();
        let mut head_a = Vec::new();
        let mut head_b = Vec::new();
        for (name, tl) in template.named_layers() {
            let mut read_matrix = |suffix: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
                let (n, line) = next("param header")?;
                let expected = format!("param {name}.{suffix} {rows} {cols}");
                if line != expected {
                    return Err(err(n, format!("expected '{expected}', got '{line}'")));
                }
                let mut values = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (n, row) = next("matrix row")?;
                    let parsed: Vec<f64> = row
                        .split(' ')
                        .map(|t| parse_f64(t).ok_or_else(|| err(n, format!("bad number '{t}'"))))
                        .collect::<Result<_>>()?;
                    if parsed.len() != cols {
                        return Err(err(n, format!("expected {cols} values, found {}", parsed.len())));
                    }
                    values.extend(parsed);
                }
                Ok(values)
            };
            let weights = read_matrix("weight", tl.outputs, tl.inputs)?;
            let bias = read_matrix("bias", 1, tl.outputs)?;
            let dense = Dense {
                inputs: tl.inputs,
                outputs: tl.outputs,
                weights,
                bias,
            };
            if name.starts_with("trunk") {
                trunk.push(dense);
            } else if name.starts_with("head_a") {
                head_a.push(dense);
            } else {
                head_b.push(dense);
            }
        }
        let (n, end) = next("end")?;
        if end != "end" {
            return Err(err(n, format!("expected 'end', got '{end}'")));
        }
        MultiTaskNet::from_layers(shape, trunk, head_a, head_b)
    }
}

pub fn write_checkpoint(net: &MultiTaskNet, path: &Path) -> Result<()> {
    write_file_atomically(path, &net.to_checkpoint_string())
}

pub fn read_checkpoint(path: &Path) -> Result<MultiTaskNet> {
    MultiTaskNet::from_checkpoint_str(&read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn round_trip_is_bit_exact() {
        let shape = NetShape {
            layer_sizes: vec![3, 5, 4],
            head_hidden: vec![6],
            classes_a: 3,
            classes_b: 2,
            activation: Activation::Relu,
        };
        let net = MultiTaskNet::new(shape, 42).unwrap();
        let text = net.to_checkpoint_string();
        let back = MultiTaskNet::from_checkpoint_str(&text, Path::new("mem")).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_checkpoint_string(), text);
    }

    #[test]
    fn empty_head_hidden_round_trips() {
        let net = super::super::init_net(&[2, 4], 3, 2, 7).unwrap();
        let back = MultiTaskNet::from_checkpoint_str(&net.to_checkpoint_string(), Path::new("m")).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let net = super::super::init_net(&[2, 4], 3, 2, 7).unwrap();
        let text = net.to_checkpoint_string();
        let cut: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(MultiTaskNet::from_checkpoint_str(&cut, Path::new("m")).is_err());
        assert!(MultiTaskNet::from_checkpoint_str("hello\n", Path::new("m")).is_err());
        let bumped = text.replace("schema_version = 1", "schema_version = 9");
        assert!(MultiTaskNet::from_checkpoint_str(&bumped, Path::new("m")).is_err());
    }
}
