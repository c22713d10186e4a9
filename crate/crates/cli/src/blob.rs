//! Binary parameter files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"DYNHYPAR"
//! version  u32 (1)
//! backbone u8  (0 = gcn, 1 = sage)
//! layers   u32 hypergraph layers per path
//! count    u32 number of tensors
//! shapes   count x (rows u32, cols u32)
//! data     every tensor's entries as f64, row-major, in manifest order
//! ```
//!
//! Tensor order is backbone weights, individual kernels, group kernels, head.

use dynhyper::backbone::{BackboneKind, BackboneParams};
use dynhyper::hyperprop::HgnnParams;
use dynhyper::numcore::DenseMatrix;
use dynhyper::trainer::ModelParams;
use dynhyper::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DYNHYPAR";
pub const VERSION: u32 = 1;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let tensors = params.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match params.backbone.kind {
        BackboneKind::Gcn => 0,
        BackboneKind::Sage => 1,
    });
    out.extend_from_slice(&(params.individual.layers() as u32).to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    }
    for t in &tensors {
        for x in t.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Schema(format!("params file truncated in {what}")));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes };
    if r.take(MAGIC.len(), "header")? != MAGIC {
        return Err(Error::Schema("not a parameter file (bad magic)".into()));
    }
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(Error::Schema(format!("unsupported parameter file version {version}")));
    }
    let kind = match r.take(1, "header")?[0] {
        0 => BackboneKind::Gcn,
        1 => BackboneKind::Sage,
        other => return Err(Error::Schema(format!("unknown backbone tag {other}"))),
    };
    let layers = r.u32("header")? as usize;
    let count = r.u32("header")? as usize;
    let backbone_count = match kind {
        BackboneKind::Gcn => 2,
        BackboneKind::Sage => 4,
    };
    if layers.checked_mul(2).and_then(|l| l.checked_add(backbone_count + 1)) != Some(count) {
        return Err(Error::Schema(format!("{count} tensors do not fit {kind} with {layers} layers")));
    }
    if count.saturating_mul(8) > r.bytes.len() {
        return Err(Error::Schema("params file truncated in manifest".into()));
    }
    let mut shapes = Vec::with_capacity(count);
    let mut total = 0usize;
    for _ in 0..count {
        let (rows, cols) = (r.u32("manifest")? as usize, r.u32("manifest")? as usize);
        total = rows
            .checked_mul(cols)
            .and_then(|s| total.checked_add(s))
            .ok_or_else(|| Error::Schema("tensor sizes overflow".into()))?;
        shapes.push((rows, cols));
    }
    if total.checked_mul(8) != Some(r.bytes.len()) {
        return Err(Error::Schema(format!(
            "manifest needs {total} values, file holds {} bytes of data",
            r.bytes.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for (rows, cols) in shapes {
        let data = r
            .take(rows * cols * 8, "data")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.push(DenseMatrix::from_vec(rows, cols, data)?);
    }
    let head = tensors.pop().expect("count >= 1");
    let group = tensors.split_off(backbone_count + layers);
    let individual = tensors.split_off(backbone_count);
    let params = ModelParams {
        backbone: BackboneParams { kind, weights: tensors },
        individual: HgnnParams { thetas: individual },
        group: HgnnParams { thetas: group },
        head,
    };
    params.validate()?;
    Ok(params)
}

/// Fails unless `params` has exactly the shapes a fresh model for this
/// configuration would have.
pub fn check_compatible(params: &ModelParams, expected: &ModelParams) -> Result<()> {
    let got: Vec<_> = params.tensors().iter().map(|t| t.shape()).collect();
    let want: Vec<_> = expected.tensors().iter().map(|t| t.shape()).collect();
    if params.backbone.kind != expected.backbone.kind || got != want {
        return Err(Error::Schema(format!(
            "parameter file holds {} {got:?}, configuration needs {} {want:?}",
            params.backbone.kind, expected.backbone.kind
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dynhyper::trainer::TrainConfig;

    fn model(kind: BackboneKind) -> ModelParams {
        let cfg = TrainConfig { hidden: 4, backbone: kind, layers: 2, ..TrainConfig::default() };
        ModelParams::init(&cfg, 3, 2)
    }

    #[test]
    fn round_trip_is_exact() {
        for kind in [BackboneKind::Gcn, BackboneKind::Sage] {
            let p = model(kind);
            assert_eq!(decode(&encode(&p)).unwrap(), p);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode(&model(BackboneKind::Gcn));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(&[bytes.as_slice(), &[0]].concat()).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).is_err());
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(decode(&bad_version).is_err());
        // Swap the first manifest entry's rows and cols: sizes still add up
        // but the backbone no longer validates.
        let mut swapped = bytes.clone();
        let m = 8 + 4 + 1 + 4 + 4;
        let (rows, cols) = (swapped[m..m + 4].to_vec(), swapped[m + 4..m + 8].to_vec());
        swapped[m..m + 4].copy_from_slice(&cols);
        swapped[m + 4..m + 8].copy_from_slice(&rows);
        assert!(decode(&swapped).is_err());
        assert!(decode(b"").is_err());
    }

    #[test]
    fn mismatched_shapes_refused() {
        let p = model(BackboneKind::Gcn);
        check_compatible(&p, &p).unwrap();
        let cfg = TrainConfig { hidden: 5, layers: 2, ..TrainConfig::default() };
        assert!(check_compatible(&p, &ModelParams::init(&cfg, 3, 2)).is_err());
        assert!(check_compatible(&p, &model(BackboneKind::Sage)).is_err());
    }
}
