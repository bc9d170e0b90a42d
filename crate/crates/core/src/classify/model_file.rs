//! `NVM1` text model files.
//!
//! ```text
//! NVM1
//! version 3
//! c 1
//! seed 42
//! training_revision 7        (or "none")
//! weights w0 w1 w2 w3 w4 w5
//! bias b
//! mean m0 .. m5
//! scale s0 .. s5
//! ```

use std::fmt::Write as _;

use super::features::FEATURE_COUNT;
use super::svm::SvmModel;
use crate::error::{Error, Result};

const MAGIC: &str = "NVM1";

pub fn encode_model(model: &SvmModel) -> String {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "version {}", model.version);
    let _ = writeln!(s, "c {}", model.c);
    let _ = writeln!(s, "seed {}", model.seed);
    match model.training_revision {
        Some(r) => {
            let _ = writeln!(s, "training_revision {r}");
        }
        None => {
            let _ = writeln!(s, "training_revision none");
        }
    }
    let _ = writeln!(s, "weights {}", join(&model.weights));
    let _ = writeln!(s, "bias {}", model.bias);
    let _ = writeln!(s, "mean {}", join(&model.feature_mean));
    let _ = writeln!(s, "scale {}", join(&model.feature_scale));
    s
}

pub fn decode_model(text: &str) -> Result<SvmModel> {
    let bad = |detail: String| Error::format("model file", detail);
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("missing NVM1 header".into()));
    }
    let mut field = |key: &str| -> Result<Vec<&str>> {
        let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
        let mut parts = line.split_ascii_whitespace();
        if parts.next() != Some(key) {
            return Err(bad(format!("expected {key:?}, got {line:?}")));
        }
        Ok(parts.collect())
    };
    fn scalar<T: std::str::FromStr>(v: &[&str], key: &str) -> Result<T> {
        match v {
            [x] => x
                .parse()
                .map_err(|_| Error::format("model file", format!("bad {key} value {x:?}"))),
            _ => Err(Error::format("model file", format!("{key} takes one value"))),
        }
    }
    fn vector(v: &[&str], key: &str) -> Result<[f64; FEATURE_COUNT]> {
        if v.len() != FEATURE_COUNT {
            return Err(Error::format(
                "model file",
                format!("{key} needs {FEATURE_COUNT} values, got {}", v.len()),
            ));
        }
        let mut out = [0.0; FEATURE_COUNT];
        for (slot, x) in out.iter_mut().zip(v) {
            *slot = x
                .parse()
                .map_err(|_| Error::format("model file", format!("bad {key} value {x:?}")))?;
        }
        Ok(out)
    }

    let version = scalar(&field("version")?, "version")?;
    let c = scalar(&field("c")?, "c")?;
    let seed = scalar(&field("seed")?, "seed")?;
    let rev = field("training_revision")?;
    let training_revision = match rev.as_slice() {
        ["none"] => None,
        other => Some(scalar(other, "training_revision")?),
    };
    let weights = vector(&field("weights")?, "weights")?;
    let bias = scalar(&field("bias")?, "bias")?;
    let feature_mean = vector(&field("mean")?, "mean")?;
    let feature_scale = vector(&field("scale")?, "scale")?;
    if feature_scale.iter().any(|s| !(*s > 0.0)) {
        return Err(bad("normalization scales must be positive".into()));
    }
    Ok(SvmModel {
        weights,
        bias,
        feature_mean,
        feature_scale,
        c,
        seed,
        version,
        training_revision,
    })
}
