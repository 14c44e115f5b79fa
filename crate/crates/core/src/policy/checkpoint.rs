//! Plain-text policy checkpoints.
//!
//! ```text
//! equm-policy v1
//! 7 7 7 2
//! 1.2345678901234567e-1
//! ...
//! ```
//!
//! One parameter per line in [`Mlp`](super::Mlp) layout order, 17
//! significant digits, so a write/read/write cycle is byte-identical.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Mlp, MlpPolicy, PolicyError};

pub const CHECKPOINT_HEADER: &str = "equm-policy v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("missing or unknown header (expected `{CHECKPOINT_HEADER}`)")]
    Header,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub fn write_checkpoint(policy: &MlpPolicy) -> Result<String, CheckpointError> {
    write_network(policy.net())
}

pub fn read_checkpoint(text: &str) -> Result<MlpPolicy, CheckpointError> {
    Ok(MlpPolicy::new(read_network(text)?))
}

/// Same format for any network, e.g. a critic.
pub fn write_network(net: &Mlp) -> Result<String, CheckpointError> {
    let mut out = String::new();
    out.push_str(CHECKPOINT_HEADER);
    out.push('\n');
    let dims: Vec<String> = net.dims().iter().map(|d| d.to_string()).collect();
    out.push_str(&dims.join(" "));
    out.push('\n');
    for (i, p) in net.params().iter().enumerate() {
        if !p.is_finite() {
            return Err(CheckpointError::NonFinite(i));
        }
        writeln!(out, "{p:.16e}").expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn read_network(text: &str) -> Result<Mlp, CheckpointError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CHECKPOINT_HEADER) {
        return Err(CheckpointError::Header);
    }
    let dims_line = lines.next().ok_or(CheckpointError::Parse {
        line: 2,
        msg: "missing layer dimensions".into(),
    })?;
    let dims = dims_line
        .split_whitespace()
        .map(|d| d.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CheckpointError::Parse {
            line: 2,
            msg: format!("bad layer dimension: {e}"),
        })?;
    let mut params = Vec::with_capacity(Mlp::param_count(&dims));
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|e| CheckpointError::Parse {
            line: i + 3,
            msg: format!("bad parameter `{line}`: {e}"),
        })?;
        if !v.is_finite() {
            return Err(CheckpointError::NonFinite(params.len()));
        }
        params.push(v);
    }
    Ok(Mlp::from_params(&dims, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    #[test]
    fn layout_and_header() {
        let p = MlpPolicy::new(Mlp::from_params(&[1, 1], vec![0.5, -1.0]).unwrap());
        let text = write_checkpoint(&p).unwrap();
        assert_eq!(
            text,
            "equm-policy v1\n1 1\n5.0000000000000000e-1\n-1.0000000000000000e0\n"
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_checkpoint("nope\n"), Err(CheckpointError::Header)));
        assert!(read_checkpoint("equm-policy v1\n2 x\n").is_err());
        // wrong parameter count
        assert!(read_checkpoint("equm-policy v1\n1 1\n0.5\n").is_err());
        assert!(read_checkpoint("equm-policy v1\n1 1\n0.5\nNaN\n").is_err());
    }

    proptest! {
        #[test]
        fn write_read_write_is_byte_identical(seed in any::<u64>(), d in 1usize..6, a in 2usize..4) {
            let mut rng = RngStream::new(seed, 0);
            let mut p = MlpPolicy::glorot(&MlpPolicy::square_dims(d, a), &mut rng).unwrap();
            for v in p.params_mut() {
                *v *= 1.0 + rng.uniform() * 1e3;
            }
            let first = write_checkpoint(&p).unwrap();
            let back = read_checkpoint(&first).unwrap();
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(write_checkpoint(&back).unwrap(), first);
        }
    }
}
