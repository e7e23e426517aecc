//! Scene file: a UTF-8 `key: value` header terminated by a blank line,
//! followed by a little-endian fp16 payload (grid features, then w1, b1, w2,
//! b2).
//!
//! ```text
//! RADWARP-SCENE 1
//! dims: 64 64 64
//! bbox: -1.0 -1.0 -1.0 1.0 1.0 1.0
//! channels: 32
//! mlp: 32 8 4
//! dtype: f16
//! payload_offset: 0000000171
//! payload_bytes: 16777856
//! crc32: 89abcdef
//!
//! <payload>
//! ```

use std::fs;
use std::path::Path;

use half::f16;

use crate::error::{Error, Result};
use crate::scene::{Aabb, FeatureGrid, MlpWeights, Scene, MLP_OUTPUTS};

const MAGIC: &str = "RADWARP-SCENE 1";
/// Width of the zero-padded payload offset, so the header length does not
/// depend on its own value.
const OFFSET_DIGITS: usize = 10;

fn push_f16(out: &mut Vec<u8>, vals: &[f32]) {
    for &v in vals {
        out.extend_from_slice(&f16::from_f32(v).to_le_bytes());
    }
}

fn header(scene: &Scene, payload_offset: usize, payload: &[u8]) -> String {
    let g = &scene.grid;
    let [nx, ny, nz] = g.dims();
    let b = g.bbox();
    format!(
        "{MAGIC}\ndims: {nx} {ny} {nz}\nbbox: {:?} {:?} {:?} {:?} {:?} {:?}\nchannels: {}\nmlp: {} {} {MLP_OUTPUTS}\n\
         dtype: f16\npayload_offset: {payload_offset:0width$}\npayload_bytes: {}\ncrc32: {:08x}\n\n",
        b.min[0],
        b.min[1],
        b.min[2],
        b.max[0],
        b.max[1],
        b.max[2],
        g.channels(),
        scene.mlp.input,
        scene.mlp.hidden,
        payload.len(),
        crc32fast::hash(payload),
        width = OFFSET_DIGITS,
    )
}

pub fn scene_bytes(scene: &Scene) -> Vec<u8> {
    let mut payload = Vec::with_capacity(scene.grid.byte_size() + scene.mlp.param_count() * 2);
    push_f16(&mut payload, scene.grid.features());
    let m = &scene.mlp;
    for part in [&m.w1, &m.b1, &m.w2, &m.b2] {
        push_f16(&mut payload, part);
    }
    let len = header(scene, 0, &payload).len();
    let mut out = header(scene, len, &payload).into_bytes();
    debug_assert_eq!(out.len(), len);
    out.extend_from_slice(&payload);
    out
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    fs::write(path, scene_bytes(scene)).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_scene_bytes(&bytes).map_err(|e| e.context(format!("loading {}", path.display())))
}

fn numbers<T: std::str::FromStr>(key: &str, value: &str, n: usize) -> Result<Vec<T>> {
    let vals = value
        .split_whitespace()
        .map(|s| s.parse::<T>().map_err(|_| Error::format(format!("bad value {s:?} for {key}"))))
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != n {
        return Err(Error::format(format!("{key} needs {n} values, got {}", vals.len())));
    }
    Ok(vals)
}

pub fn load_scene_bytes(bytes: &[u8]) -> Result<Scene> {
    let end = bytes.windows(2).position(|w| w == b"\n\n").ok_or_else(|| Error::format("scene header is not terminated"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format("scene header is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::format("bad scene magic"));
    }
    let (mut dims, mut bbox, mut channels, mut mlp, mut offset, mut len, mut crc) = (None, None, None, None, None, None, None);
    for line in lines {
        let (key, value) = line.split_once(':').ok_or_else(|| Error::format(format!("malformed header line {line:?}")))?;
        let value = value.trim();
        match key.trim() {
            "dims" => dims = Some(numbers::<usize>("dims", value, 3)?),
            "bbox" => bbox = Some(numbers::<f64>("bbox", value, 6)?),
            "channels" => channels = Some(numbers::<usize>("channels", value, 1)?[0]),
            "mlp" => mlp = Some(numbers::<usize>("mlp", value, 3)?),
            "dtype" if value == "f16" => {}
            "dtype" => return Err(Error::format(format!("unsupported dtype {value}"))),
            "payload_offset" => offset = Some(numbers::<usize>("payload_offset", value, 1)?[0]),
            "payload_bytes" => len = Some(numbers::<usize>("payload_bytes", value, 1)?[0]),
            "crc32" => {
                crc = Some(u32::from_str_radix(value, 16).map_err(|_| Error::format("bad crc32 value"))?);
            }
            other => return Err(Error::format(format!("unknown header key {other:?}"))),
        }
    }
    let missing = |k: &str| Error::format(format!("header is missing {k}"));
    let dims = dims.ok_or_else(|| missing("dims"))?;
    let bbox = bbox.ok_or_else(|| missing("bbox"))?;
    let channels = channels.ok_or_else(|| missing("channels"))?;
    let mlp = mlp.ok_or_else(|| missing("mlp"))?;
    let offset = offset.ok_or_else(|| missing("payload_offset"))?;
    let len = len.ok_or_else(|| missing("payload_bytes"))?;
    let crc = crc.ok_or_else(|| missing("crc32"))?;
    if offset != end + 2 {
        return Err(Error::format("payload_offset does not match the header length"));
    }
    if mlp[2] != MLP_OUTPUTS || mlp[0] != channels {
        return Err(Error::format("MLP dimensions are inconsistent with the grid"));
    }
    let (input, hidden) = (mlp[0], mlp[1]);
    let n_features = dims.iter().product::<usize>() * channels;
    let n_mlp = input * hidden + hidden + MLP_OUTPUTS * hidden + MLP_OUTPUTS;
    if len != (n_features + n_mlp) * 2 {
        return Err(Error::format("payload_bytes disagrees with the declared shapes"));
    }
    let payload = &bytes[offset..];
    if payload.len() < len {
        return Err(Error::format(format!("truncated payload: {} of {len} bytes", payload.len())));
    }
    if payload.len() > len {
        return Err(Error::format("trailing bytes after payload"));
    }
    if crc32fast::hash(payload) != crc {
        return Err(Error::format("payload checksum mismatch"));
    }
    let vals: Vec<f32> = payload.chunks_exact(2).map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32()).collect();
    let (feat, rest) = vals.split_at(n_features);
    let (w1, rest) = rest.split_at(input * hidden);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(MLP_OUTPUTS * hidden);
    let bbox = Aabb { min: [bbox[0], bbox[1], bbox[2]], max: [bbox[3], bbox[4], bbox[5]] };
    let grid = FeatureGrid::new([dims[0], dims[1], dims[2]], bbox, channels, feat.to_vec())?;
    let mlp = MlpWeights::new(input, hidden, w1.to_vec(), b1.to_vec(), w2.to_vec(), b2.to_vec())?;
    Scene::new(grid, mlp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_synthetic_scene, MlpKind, Primitive, SceneSpec};

    fn small_scene() -> Scene {
        let spec = SceneSpec { resolution: [6, 5, 4], channels: 6, mlp: MlpKind::Random, hidden: 5, seed: 3, ..SceneSpec::default() }
            .with_primitives(vec![Primitive::sphere([0.0; 3], 0.5, [0.3, 0.6, 0.9])]);
        build_synthetic_scene(&spec).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let s = small_scene();
        let a = scene_bytes(&s);
        let loaded = load_scene_bytes(&a).unwrap();
        assert_eq!(loaded.grid, s.grid);
        assert_eq!(loaded.mlp, s.mlp);
        assert_eq!(scene_bytes(&loaded), a);
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let a = scene_bytes(&small_scene());
        let mut bad_magic = a.clone();
        bad_magic[0] = b'X';
        assert!(matches!(load_scene_bytes(&bad_magic), Err(Error::Format(_))));

        let truncated = &a[..a.len() - 3];
        let err = load_scene_bytes(truncated).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut flipped = a.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x40;
        let err = load_scene_bytes(&flipped).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");

        let text = String::from_utf8_lossy(&a[..40]).replace("dims: 6 5 4", "dims: 6 5");
        let mut bad_header = text.into_bytes();
        bad_header.extend_from_slice(&a[40..]);
        assert!(matches!(load_scene_bytes(&bad_header), Err(Error::Format(_))));
    }

    #[test]
    fn default_grid_file_size() {
        let grid = FeatureGrid::constant([64; 3], Aabb::cube(1.0), &[0.0; 32]).unwrap();
        let scene = Scene::new(grid, MlpWeights::identity(32)).unwrap();
        let bytes = scene_bytes(&scene);
        let end = bytes.windows(2).position(|w| w == b"\n\n").unwrap() + 2;
        let mlp_bytes = scene.mlp.param_count() * 2;
        assert_eq!(bytes.len(), end + 64 * 64 * 64 * 32 * 2 + mlp_bytes);
    }
}
