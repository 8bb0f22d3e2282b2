//! Binary little-endian PLY scene files.
//!
//! One `vertex` element with float32 properties in a fixed order:
//! `x y z scale_0..2 rot_0..3 opacity f_dc_0..2 [f_rest_0..8]`. Scales are
//! log-space, rotations `wxyz`, opacity a logit. `f_rest` is channel-major
//! (all red coefficients first), matching common splatting exports.
//!
//! Values are stored as float32, so a save/load cycle is bit-exact for any
//! scene whose parameters are float32-representable (every loaded scene is).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{invalid, DecodeError, Result};
use crate::gaussian::{Gaussian3D, GaussianScene};
use crate::math::Vec3;

const BASE_PROPS: [&str; 14] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity",
    "f_dc_0", "f_dc_1", "f_dc_2",
];
const REST_COUNT: usize = 9;

pub fn scene_save(scene: &GaussianScene, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_scene(scene, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn scene_load(path: &Path) -> Result<GaussianScene> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_scene(&mut r)
}

pub fn write_scene(scene: &GaussianScene, out: &mut impl Write) -> Result<()> {
    let gs = scene.gaussians();
    let with_rest = gs.first().is_some_and(|g| g.color_rest.is_some());
    if gs.iter().any(|g| g.color_rest.is_some() != with_rest) {
        return invalid("scene mixes diffuse-only and degree-1 Gaussians");
    }
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
        gs.len()
    );
    for p in BASE_PROPS {
        header.push_str(&format!("property float {p}\n"));
    }
    if with_rest {
        for i in 0..REST_COUNT {
            header.push_str(&format!("property float f_rest_{i}\n"));
        }
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;

    let mut buf = Vec::with_capacity(gs.len() * 4 * (BASE_PROPS.len() + REST_COUNT));
    for g in gs {
        let mut vals: Vec<f64> = Vec::with_capacity(23);
        vals.extend(g.position.iter());
        vals.extend(g.log_scale.iter());
        vals.extend(g.rotation.iter());
        vals.push(g.opacity_logit);
        vals.extend(g.color_dc.iter());
        if let Some(rest) = &g.color_rest {
            for c in 0..3 {
                for basis in rest {
                    vals.push(basis[c]);
                }
            }
        }
        for v in vals {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

fn header_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(DecodeError::MalformedHeader(msg.into()).into())
}

pub fn read_scene(r: &mut impl BufRead) -> Result<GaussianScene> {
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        let n = r.read_line(&mut line)?;
        if n == 0 {
            return header_err("missing end_header");
        }
        let line = line.trim_end_matches(['\n', '\r']).to_string();
        if line == "end_header" {
            break;
        }
        lines.push(line);
        if lines.len() > 256 {
            return header_err("header too long");
        }
    }
    let mut it = lines
        .iter()
        .filter(|l| !l.starts_with("comment") && !l.starts_with("obj_info"));
    if it.next().map(String::as_str) != Some("ply") {
        return header_err("missing 'ply' magic");
    }
    let format = it
        .next()
        .ok_or_else(|| DecodeError::MalformedHeader("missing format line".into()))?;
    let fparts: Vec<&str> = format.split_whitespace().collect();
    if fparts.len() != 3 || fparts[0] != "format" {
        return header_err(format!("bad format line '{format}'"));
    }
    if fparts[1] != "binary_little_endian" || fparts[2] != "1.0" {
        return Err(DecodeError::UnsupportedVersion(format!("{} {}", fparts[1], fparts[2])).into());
    }
    let element = it
        .next()
        .ok_or_else(|| DecodeError::MalformedHeader("missing element line".into()))?;
    let eparts: Vec<&str> = element.split_whitespace().collect();
    if eparts.len() != 3 || eparts[0] != "element" || eparts[1] != "vertex" {
        return header_err(format!("expected 'element vertex N', got '{element}'"));
    }
    let count: usize = eparts[2]
        .parse()
        .map_err(|_| DecodeError::MalformedHeader(format!("bad vertex count '{}'", eparts[2])))?;
    let mut props = Vec::new();
    for l in it {
        let p: Vec<&str> = l.split_whitespace().collect();
        if p.len() != 3 || p[0] != "property" {
            return header_err(format!("unexpected header line '{l}'"));
        }
        if p[1] != "float" {
            return header_err(format!("property '{}' must be float", p[2]));
        }
        props.push(p[2].to_string());
    }
    let with_rest = match props.len() {
        14 => false,
        23 => true,
        n => return header_err(format!("expected 14 or 23 properties, found {n}")),
    };
    for (i, name) in props.iter().enumerate() {
        let expected = if i < BASE_PROPS.len() {
            BASE_PROPS[i].to_string()
        } else {
            format!("f_rest_{}", i - 14)
        };
        if *name != expected {
            return header_err(format!("property {i} is '{name}', expected '{expected}'"));
        }
    }

    let stride = props.len() * 4;
    let expected = count
        .checked_mul(stride)
        .ok_or_else(|| DecodeError::MalformedHeader("vertex count overflows".into()))?;
    let mut payload = Vec::new();
    r.take(expected as u64 + 1).read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(DecodeError::Truncated {
            expected,
            found: payload.len(),
        }
        .into());
    }
    let mut gaussians = Vec::with_capacity(count);
    for rec in payload[..expected].chunks_exact(stride) {
        let v: Vec<f64> = rec
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let color_rest = with_rest.then(|| {
            let mut rest = [Vec3::zeros(); 3];
            for c in 0..3 {
                for (k, basis) in rest.iter_mut().enumerate() {
                    basis[c] = v[14 + c * 3 + k];
                }
            }
            rest
        });
        gaussians.push(Gaussian3D {
            position: Vec3::new(v[0], v[1], v[2]),
            log_scale: Vec3::new(v[3], v[4], v[5]),
            rotation: [v[6], v[7], v[8], v[9]],
            opacity_logit: v[10],
            color_dc: Vec3::new(v[11], v[12], v[13]),
            color_rest,
        });
    }
    Ok(GaussianScene::new(gaussians))
}
