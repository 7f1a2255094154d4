//! Binary checkpoint format shared by every network.
//!
//! ```text
//! magic    8 bytes  "SAFERLNN"
//! version  u32
//! kind     u8       0 = feedforward, 1 = recurrent
//! role     u32 length + UTF-8 (e.g. "online", "target", "predictor")
//! attrs    u32 count + u64 values (layer sizes, or input/hidden/output/steps)
//! blocks   u32 count + per block: u32 name length, name, u32 rows, u32 cols
//! data     every block in order, row-major little-endian f64
//! ```
//!
//! All integers are little-endian.

use std::path::Path;

use super::{Dense, Mlp, Parameters, Rnn};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SAFERLNN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Feedforward = 0,
    Recurrent = 1,
}

struct BlockSpec {
    name: String,
    rows: usize,
    cols: usize,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

fn encode(kind: Kind, role: &str, attrs: &[usize], specs: &[BlockSpec], blocks: &[&[f64]]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(kind as u8);
    put_str(&mut buf, role);
    put_u32(&mut buf, attrs.len());
    for &a in attrs {
        buf.extend_from_slice(&(a as u64).to_le_bytes());
    }
    put_u32(&mut buf, specs.len());
    for s in specs {
        put_str(&mut buf, &s.name);
        put_u32(&mut buf, s.rows);
        put_u32(&mut buf, s.cols);
    }
    for b in blocks {
        for x in b.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err("truncated file".into()),
        }
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> std::result::Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| "attribute out of range".to_string())
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid UTF-8 string".to_string())
    }
}

/// A decoded checkpoint before it is turned into a concrete network.
struct Decoded {
    kind: Kind,
    role: String,
    attrs: Vec<usize>,
    blocks: Vec<(BlockSpec, Vec<f64>)>,
}

fn decode(bytes: &[u8]) -> std::result::Result<Decoded, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a network checkpoint (bad magic)".into());
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let kind = match r.take(1)?[0] {
        0 => Kind::Feedforward,
        1 => Kind::Recurrent,
        k => return Err(format!("unknown network kind {k}")),
    };
    let role = r.string()?;
    let n_attrs = r.u32()?;
    let attrs = (0..n_attrs).map(|_| r.u64()).collect::<std::result::Result<Vec<_>, _>>()?;
    let n_blocks = r.u32()?;
    let mut specs = Vec::new();
    for _ in 0..n_blocks {
        specs.push(BlockSpec {
            name: r.string()?,
            rows: r.u32()?,
            cols: r.u32()?,
        });
    }
    let mut blocks = Vec::new();
    for s in specs {
        let n = s.rows.checked_mul(s.cols).ok_or("block too large")?;
        let data = (0..n).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>()?;
        if data.iter().any(|x| !x.is_finite()) {
            return Err(format!("block {} holds non-finite values", s.name));
        }
        blocks.push((s, data));
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes after parameter data".into());
    }
    Ok(Decoded {
        kind,
        role,
        attrs,
        blocks,
    })
}

pub fn mlp_to_bytes(net: &Mlp, role: &str) -> Vec<u8> {
    let mut specs = Vec::new();
    for (i, l) in net.layers.iter().enumerate() {
        specs.push(BlockSpec {
            name: format!("layer{i}.weight"),
            rows: l.fan_in,
            cols: l.fan_out,
        });
        specs.push(BlockSpec {
            name: format!("layer{i}.bias"),
            rows: 1,
            cols: l.fan_out,
        });
    }
    encode(Kind::Feedforward, role, &net.sizes(), &specs, &net.blocks())
}

pub fn rnn_to_bytes(net: &Rnn, role: &str) -> Vec<u8> {
    let spec = |name: &str, rows, cols| BlockSpec {
        name: name.into(),
        rows,
        cols,
    };
    let specs = [
        spec("w_in", net.input_dim, net.hidden),
        spec("w_rec", net.hidden, net.hidden),
        spec("bias", 1, net.hidden),
        spec("w_out", net.hidden, net.output_dim),
        spec("b_out", 1, net.output_dim),
    ];
    let attrs = [net.input_dim, net.hidden, net.output_dim, net.steps];
    encode(Kind::Recurrent, role, &attrs, &specs, &net.blocks())
}

/// Returns the network and its role string.
pub fn mlp_from_bytes(bytes: &[u8]) -> std::result::Result<(Mlp, String), String> {
    let d = decode(bytes)?;
    if d.kind != Kind::Feedforward {
        return Err("checkpoint holds a recurrent network, expected feedforward".into());
    }
    if d.attrs.len() < 2 || d.blocks.len() != 2 * (d.attrs.len() - 1) {
        return Err("layer manifest does not match the block list".into());
    }
    let mut layers = Vec::new();
    let mut it = d.blocks.into_iter();
    for w in d.attrs.windows(2) {
        let (ws, weight) = it.next().unwrap();
        let (bs, bias) = it.next().unwrap();
        if ws.rows != w[0] || ws.cols != w[1] || bs.rows != 1 || bs.cols != w[1] {
            return Err(format!("block {} has the wrong shape", ws.name));
        }
        layers.push(Dense {
            fan_in: w[0],
            fan_out: w[1],
            weight,
            bias,
        });
    }
    let net = Mlp::from_layers(layers).map_err(|e| e.to_string())?;
    Ok((net, d.role))
}

pub fn rnn_from_bytes(bytes: &[u8]) -> std::result::Result<(Rnn, String), String> {
    let d = decode(bytes)?;
    if d.kind != Kind::Recurrent {
        return Err("checkpoint holds a feedforward network, expected recurrent".into());
    }
    let [input_dim, hidden, output_dim, steps] = d.attrs[..] else {
        return Err("recurrent manifest needs four attributes".into());
    };
    let mut net = Rnn::zeros(input_dim, hidden, output_dim, steps);
    if d.blocks.len() != 5 {
        return Err("recurrent checkpoint needs five blocks".into());
    }
    for (dst, (spec, data)) in net.blocks_mut().into_iter().zip(&d.blocks) {
        if dst.len() != data.len() {
            return Err(format!("block {} has the wrong shape", spec.name));
        }
        dst.copy_from_slice(data);
    }
    net.validate().map_err(|e| e.to_string())?;
    Ok((net, d.role))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn bad(path: &Path, reason: String) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    }
}

pub fn save_mlp(path: &Path, net: &Mlp, role: &str) -> Result<()> {
    write(path, &mlp_to_bytes(net, role))
}

pub fn load_mlp(path: &Path) -> Result<(Mlp, String)> {
    mlp_from_bytes(&read(path)?).map_err(|r| bad(path, r))
}

pub fn save_rnn(path: &Path, net: &Rnn, role: &str) -> Result<()> {
    write(path, &rnn_to_bytes(net, role))
}

pub fn load_rnn(path: &Path) -> Result<(Rnn, String)> {
    rnn_from_bytes(&read(path)?).map_err(|r| bad(path, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::random(&[20, 100, 100, 8], &mut rng);
        let bytes = mlp_to_bytes(&net, "online");
        let (back, role) = mlp_from_bytes(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(role, "online");
        assert_eq!(mlp_to_bytes(&back, "online"), bytes);
    }

    #[test]
    fn rnn_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Rnn::random(28, 64, 80, 4, &mut rng);
        let (back, role) = rnn_from_bytes(&rnn_to_bytes(&net, "predictor")).unwrap();
        assert_eq!(back, net);
        assert_eq!(role, "predictor");
    }

    #[test]
    fn rejects_wrong_kind_and_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::random(&[3, 4, 2], &mut rng);
        let bytes = mlp_to_bytes(&net, "online");
        assert!(rnn_from_bytes(&bytes).is_err());
        assert!(mlp_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(mlp_from_bytes(&bad_magic).is_err());
    }

    #[test]
    fn file_roundtrip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/q.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::random(&[3, 4, 2], &mut rng);
        save_mlp(&path, &net, "target").unwrap();
        assert_eq!(load_mlp(&path).unwrap().0, net);
        assert!(load_mlp(&dir.path().join("absent.bin")).is_err());
    }
}
