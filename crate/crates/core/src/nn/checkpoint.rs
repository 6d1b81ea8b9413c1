//! Self-describing network files: a text header naming every tensor with its
//! shape and dtype, terminated by `end\n`, followed by the tensors as
//! row-major little-endian `f64` in header order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{ActorNet, CriticNet};
use crate::{Error, Result};

const MAGIC: &str = "cacto-network v1";

struct Header {
    kind: String,
    input_dim: usize,
    meta: Vec<(String, Vec<f64>)>,
    tensors: Vec<(String, Vec<usize>)>,
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{}: {msg}", path.display()))
}

fn write_file(path: &Path, header: &Header, params: &[f64]) -> Result<()> {
    let mut text = format!("{MAGIC}\nkind {}\ninput_dim {}\n", header.kind, header.input_dim);
    for (key, values) in &header.meta {
        let vals: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&format!("meta {key} {}\n", vals.join(" ")));
    }
    for (name, shape) in &header.tensors {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        text.push_str(&format!("tensor {name} f64 {}\n", dims.join(" ")));
    }
    text.push_str("end\n");
    let mut bytes = text.into_bytes();
    bytes.reserve(params.len() * 8);
    for p in params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<(Header, Vec<f64>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut next_line = |reader: &mut BufReader<fs::File>| -> Result<String> {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(bad(path, "truncated header"));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut reader)? != MAGIC {
        return Err(bad(path, "not a network checkpoint"));
    }
    let mut header = Header { kind: String::new(), input_dim: 0, meta: Vec::new(), tensors: Vec::new() };
    loop {
        let l = next_line(&mut reader)?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("end") => break,
            Some("kind") => header.kind = parts.next().unwrap_or_default().to_string(),
            Some("input_dim") => {
                header.input_dim = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(path, "invalid input_dim"))?
            }
            Some("meta") => {
                let key = parts.next().ok_or_else(|| bad(path, "meta without key"))?.to_string();
                let values = parts
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| bad(path, format!("meta {key}: {e}")))?;
                header.meta.push((key, values));
            }
            Some("tensor") => {
                let name = parts.next().ok_or_else(|| bad(path, "tensor without name"))?.to_string();
                if parts.next() != Some("f64") {
                    return Err(bad(path, format!("tensor {name}: unsupported dtype")));
                }
                let shape = parts
                    .map(|s| s.parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| bad(path, format!("tensor {name}: {e}")))?;
                header.tensors.push((name, shape));
            }
            _ => return Err(bad(path, format!("unexpected header line `{l}`"))),
        }
    }
    let mut data = Vec::new();
    reader.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;
    let expected: usize = header.tensors.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if data.len() != expected * 8 {
        return Err(bad(path, format!("expected {} data bytes, found {}", expected * 8, data.len())));
    }
    let params = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, params))
}

fn meta<'a>(header: &'a Header, key: &str, path: &Path) -> Result<&'a [f64]> {
    header
        .meta
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_slice())
        .ok_or_else(|| bad(path, format!("missing meta {key}")))
}

fn check_shapes(header: &Header, expected: &[(String, Vec<usize>)], path: &Path) -> Result<()> {
    if header.tensors.len() != expected.len() {
        return Err(bad(path, format!("expected {} tensors, found {}", expected.len(), header.tensors.len())));
    }
    for ((name, shape), (ename, eshape)) in header.tensors.iter().zip(expected) {
        if name != ename || shape != eshape {
            return Err(bad(path, format!("tensor {name} {shape:?} does not match {ename} {eshape:?}")));
        }
    }
    Ok(())
}

fn check_input(header: &Header, expected: Option<usize>) -> Result<()> {
    match expected {
        Some(n) if n != header.input_dim => Err(Error::Dimension {
            what: "checkpoint input",
            expected: n,
            got: header.input_dim,
        }),
        _ => Ok(()),
    }
}

fn critic_tensors(net: &CriticNet) -> Vec<(String, Vec<usize>)> {
    net.layers()
        .iter()
        .enumerate()
        .flat_map(|(i, l)| {
            [
                (format!("layer{i}.weight"), vec![l.output, l.input]),
                (format!("layer{i}.bias"), vec![l.output]),
            ]
        })
        .collect()
}

fn actor_tensors(net: &ActorNet) -> Vec<(String, Vec<usize>)> {
    net.layers()
        .iter()
        .flat_map(|(name, l)| {
            [
                (format!("{name}.weight"), vec![l.output, l.input]),
                (format!("{name}.bias"), vec![l.output]),
            ]
        })
        .collect()
}

pub fn save_critic(path: &Path, net: &CriticNet) -> Result<()> {
    let header = Header {
        kind: "critic".into(),
        input_dim: net.input_dim(),
        meta: vec![("output_scale".into(), vec![net.output_scale])],
        tensors: critic_tensors(net),
    };
    write_file(path, &header, &net.params)
}

/// Loads a critic, rejecting files whose tensor shapes do not form the
/// expected chain or whose input dimension differs from `expected_input`.
pub fn load_critic(path: &Path, expected_input: Option<usize>) -> Result<CriticNet> {
    let (header, params) = read_file(path)?;
    if header.kind != "critic" {
        return Err(bad(path, format!("expected a critic, found `{}`", header.kind)));
    }
    check_input(&header, expected_input)?;
    let hidden: Vec<usize> = header
        .tensors
        .iter()
        .step_by(2)
        .map(|(_, s)| s.first().copied().unwrap_or(0))
        .collect();
    let Some((_, hidden)) = hidden.split_last() else {
        return Err(bad(path, "no tensors"));
    };
    let mut net = CriticNet::zeros(header.input_dim, hidden);
    check_shapes(&header, &critic_tensors(&net), path)?;
    net.output_scale = meta(&header, "output_scale", path)?.first().copied().unwrap_or(1.0);
    net.params = params;
    Ok(net)
}

pub fn save_actor(path: &Path, net: &ActorNet) -> Result<()> {
    let header = Header {
        kind: "actor".into(),
        input_dim: net.input_dim(),
        meta: vec![("u_max".into(), net.u_max.clone())],
        tensors: actor_tensors(net),
    };
    write_file(path, &header, &net.params)
}

pub fn load_actor(path: &Path, expected_input: Option<usize>) -> Result<ActorNet> {
    let (header, params) = read_file(path)?;
    if header.kind != "actor" {
        return Err(bad(path, format!("expected an actor, found `{}`", header.kind)));
    }
    check_input(&header, expected_input)?;
    let u_max = meta(&header, "u_max", path)?.to_vec();
    if u_max.is_empty() || u_max.iter().any(|b| !(*b > 0.0)) {
        return Err(bad(path, "invalid u_max"));
    }
    let width = header.tensors.first().and_then(|(_, s)| s.first().copied()).unwrap_or(0);
    let mut net = ActorNet::zeros(header.input_dim, width, &u_max);
    check_shapes(&header, &actor_tensors(&net), path)?;
    net.params = params;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::indexed_rng;

    #[test]
    fn round_trip_and_shape_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = indexed_rng(3, 0);
        let mut critic = CriticNet::with_hidden(5, &[4, 6], &mut rng);
        critic.output_scale = 250.0;
        let actor = ActorNet::with_width(5, 8, &[10.0, 10.0], &mut rng);
        let cp = dir.path().join("critic.bin");
        let ap = dir.path().join("actor.bin");
        save_critic(&cp, &critic).unwrap();
        save_actor(&ap, &actor).unwrap();
        assert_eq!(load_critic(&cp, Some(5)).unwrap(), critic);
        assert_eq!(load_actor(&ap, None).unwrap(), actor);
        assert!(matches!(load_actor(&ap, Some(6)), Err(Error::Dimension { .. })));
        assert!(load_critic(&ap, None).is_err());

        // corrupt a shape in the header
        let bytes = fs::read(&ap).unwrap();
        let split = bytes.windows(4).position(|w| w == b"end\n").unwrap() + 4;
        let head = String::from_utf8(bytes[..split].to_vec()).unwrap();
        let mut corrupt = head.replacen("l2.weight f64 8 8", "l2.weight f64 8 7", 1).into_bytes();
        corrupt.extend_from_slice(&bytes[split..bytes.len() - 8 * 8]);
        let bad_path = dir.path().join("bad.bin");
        fs::write(&bad_path, &corrupt).unwrap();
        assert!(load_actor(&bad_path, None).is_err());
        // truncated data
        fs::write(&bad_path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_actor(&bad_path, None).is_err());
    }
}
