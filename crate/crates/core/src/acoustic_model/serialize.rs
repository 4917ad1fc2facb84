//! Plain-text model files.
//!
//! ```text
//! contvoc-sequence-model 1
//! cell_kind lstm
//! input_dim 8
//! hidden_dim 16
//! output_dim 4
//! seed 42
//! tensor forward.w_x 64 8
//! <64 rows of 8 space-separated values>
//! tensor forward.w_h 64 16
//! ...
//! ```
//!
//! Tensors follow in the fixed order of [`TENSOR_NAMES`]; vectors are written
//! as one value per row. Values use the shortest decimal form that parses
//! back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CellKind, ModelError, SequenceModelParams, TENSOR_NAMES};

const MAGIC: &str = "contvoc-sequence-model 1";

pub fn write_model(params: &SequenceModelParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "cell_kind {}", params.cell_kind);
    let _ = writeln!(out, "input_dim {}", params.input_dim);
    let _ = writeln!(out, "hidden_dim {}", params.hidden_dim);
    let _ = writeln!(out, "output_dim {}", params.output_dim);
    let _ = writeln!(out, "seed {}", params.seed);
    for ((name, (rows, cols)), data) in TENSOR_NAMES
        .iter()
        .zip(params.tensor_shapes())
        .zip(params.tensors())
    {
        let _ = writeln!(out, "tensor {name} {rows} {cols}");
        for row in data.chunks(cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_model(text: &str) -> Result<SequenceModelParams, ModelError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| parse_err(0, format!("unexpected end of file, expected {what}")))
    };
    let (n, magic) = next("header")?;
    if magic != MAGIC {
        return Err(parse_err(n, "not a sequence model file"));
    }
    let mut field = |key: &str| -> Result<(usize, String), ModelError> {
        let (n, line) = next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v.trim().to_string())),
            _ => Err(parse_err(n, format!("expected '{key} <value>'"))),
        }
    };
    let number = |(n, v): (usize, String)| -> Result<usize, ModelError> {
        v.parse().map_err(|_| parse_err(n, format!("bad integer '{v}'")))
    };
    let cell_kind: CellKind = field("cell_kind")?.1.parse()?;
    let input_dim = number(field("input_dim")?)?;
    let hidden_dim = number(field("hidden_dim")?)?;
    let output_dim = number(field("output_dim")?)?;
    let (n, seed) = field("seed")?;
    let seed: u64 = seed.parse().map_err(|_| parse_err(n, "bad seed"))?;
    if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
        return Err(parse_err(n, "dimensions must be positive"));
    }

    let mut params = SequenceModelParams::zeros(cell_kind, input_dim, hidden_dim, output_dim);
    params.seed = seed;
    let shapes = params.tensor_shapes();
    for ((name, (rows, cols)), dst) in TENSOR_NAMES.iter().zip(shapes).zip(params.tensors_mut()) {
        let (n, header) = next("tensor header")?;
        let expected = format!("tensor {name} {rows} {cols}");
        if header != expected {
            return Err(parse_err(n, format!("expected '{expected}'")));
        }
        for r in 0..rows {
            let (n, line) = next("tensor row")?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| parse_err(n, format!("bad number '{v}'"))))
                .collect::<Result<_, _>>()?;
            if values.len() != cols {
                return Err(parse_err(n, format!("expected {cols} values, got {}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(n, "non-finite parameter"));
            }
            dst[r * cols..(r + 1) * cols].copy_from_slice(&values);
        }
    }
    if let Some((n, extra)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(parse_err(n, format!("trailing content '{extra}'")));
    }
    Ok(params)
}

pub fn save_model(params: &SequenceModelParams, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, write_model(params)).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SequenceModelParams, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        for kind in CellKind::ALL {
            let p = SequenceModelParams::init(kind, 3, 5, 2, 17);
            let text = write_model(&p);
            assert_eq!(parse_model(&text).unwrap(), p);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let p = SequenceModelParams::init(CellKind::Gru, 2, 3, 1, 4);
        save_model(&p, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), p);
        assert!(matches!(load_model(dir.path().join("missing")), Err(ModelError::Io { .. })));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let p = SequenceModelParams::init(CellKind::Lstm, 2, 2, 1, 1);
        let text = write_model(&p);
        assert!(parse_model("hello").is_err());
        assert!(parse_model(&text.replace("lstm", "rnn")).is_err());
        let truncated: String = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(parse_model(&truncated).is_err());
        assert!(parse_model(&format!("{text}1 2 3\n")).is_err());
        let lines: Vec<&str> = text.lines().collect();
        let mut broken = lines.clone();
        broken[7] = "0.1 zzz";
        assert!(matches!(
            parse_model(&broken.join("\n")),
            Err(ModelError::Parse { line: 8, .. })
        ));
    }
}
