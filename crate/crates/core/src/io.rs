//! Binary containers for tensors, complex tensors and parameter stores.
//!
//! * `SEPT` tensor block: magic `SEPT`, version `u32` = 1, dtype `u8`
//!   (0 = f32, 1 = f64), ndim `u8` = 4, four `u64` dims `(N, C, H, W)`, then
//!   the raw row-major values. Everything little-endian, no padding.
//! * `SEPC` complex file: magic `SEPC` followed by two `SEPT` blocks (re, im).
//! * `SEPP` parameter file: magic `SEPP`, count `u32`, then `count` records
//!   of `[name length u16, UTF-8 name, SEPT block]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::element::{DType, Element};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::spectral::ComplexTensor;
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"SEPT";
pub const COMPLEX_MAGIC: &[u8; 4] = b"SEPC";
pub const PARAMS_MAGIC: &[u8; 4] = b"SEPP";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_tensor<T: Element>(t: &Tensor<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::DTYPE.code());
    out.push(4);
    for d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
}

pub fn tensor_to_bytes<T: Element>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(26 + t.numel() * T::DTYPE.size());
    encode_tensor(t, &mut out);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.format, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(Error::format(
                self.format,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(want)),
            ));
        }
        Ok(())
    }

    /// Header of a `SEPT` block: dtype and dims.
    fn tensor_header(&mut self) -> Result<(DType, [usize; 4])> {
        self.magic(TENSOR_MAGIC)?;
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format("SEPT", format!("unsupported version {version}")));
        }
        let code = self.u8()?;
        let dtype = DType::from_code(code)
            .ok_or_else(|| Error::format("SEPT", format!("unknown dtype code {code}")))?;
        let ndim = self.u8()?;
        if ndim != 4 {
            return Err(Error::format("SEPT", format!("ndim must be 4, got {ndim}")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = usize::try_from(self.u64()?)
                .map_err(|_| Error::format("SEPT", "dimension overflows usize"))?;
        }
        Ok((dtype, dims))
    }

    fn tensor<T: Element>(&mut self) -> Result<Tensor<T>> {
        let (dtype, dims) = self.tensor_header()?;
        if dtype != T::DTYPE {
            return Err(Error::format(
                "SEPT",
                format!("stored dtype {} but {} requested", dtype.name(), T::DTYPE.name()),
            ));
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format("SEPT", "element count overflows"))?;
        let bytes = self.take(count.checked_mul(dtype.size()).ok_or_else(|| Error::format("SEPT", "size overflows"))?)?;
        let data = bytes.chunks_exact(dtype.size()).map(T::read_le).collect();
        Tensor::new(dims, data)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.format,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

/// Reads the dtype recorded in a `SEPT` buffer without decoding the payload.
pub fn peek_dtype(bytes: &[u8]) -> Result<DType> {
    Ok(Reader { buf: bytes, pos: 0, format: "SEPT" }.tensor_header()?.0)
}

pub fn tensor_from_bytes<T: Element>(bytes: &[u8]) -> Result<Tensor<T>> {
    let mut r = Reader { buf: bytes, pos: 0, format: "SEPT" };
    let t = r.tensor()?;
    r.finish()?;
    Ok(t)
}

pub fn complex_to_bytes<T: Element>(c: &ComplexTensor<T>) -> Vec<u8> {
    let mut out = COMPLEX_MAGIC.to_vec();
    encode_tensor(&c.re, &mut out);
    encode_tensor(&c.im, &mut out);
    out
}

pub fn complex_from_bytes<T: Element>(bytes: &[u8]) -> Result<ComplexTensor<T>> {
    let mut r = Reader { buf: bytes, pos: 0, format: "SEPC" };
    r.magic(COMPLEX_MAGIC)?;
    let re = r.tensor()?;
    let im = r.tensor()?;
    r.finish()?;
    ComplexTensor::new(re, im)
}

pub fn params_to_bytes<T: Element>(store: &ParamStore<T>) -> Result<Vec<u8>> {
    let mut out = PARAMS_MAGIC.to_vec();
    let count = u32::try_from(store.len()).map_err(|_| Error::format("SEPP", "too many parameters"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in store.iter() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::format("SEPP", format!("name `{name}` too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        encode_tensor(t, &mut out);
    }
    Ok(out)
}

pub fn params_from_bytes<T: Element>(bytes: &[u8]) -> Result<ParamStore<T>> {
    let mut r = Reader { buf: bytes, pos: 0, format: "SEPP" };
    r.magic(PARAMS_MAGIC)?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format("SEPP", "parameter name is not UTF-8"))?
            .to_string();
        if store.contains(&name) {
            return Err(Error::format("SEPP", format!("duplicate parameter `{name}`")));
        }
        store.insert(name, r.tensor()?);
    }
    r.finish()?;
    Ok(store)
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::env::current_dir()?,
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::arg("write", format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn save_tensor<T: Element>(path: &Path, t: &Tensor<T>) -> Result<()> {
    write_atomic(path, &tensor_to_bytes(t))
}

pub fn load_tensor<T: Element>(path: &Path) -> Result<Tensor<T>> {
    tensor_from_bytes(&fs::read(path)?)
}

pub fn save_params<T: Element>(path: &Path, store: &ParamStore<T>) -> Result<()> {
    write_atomic(path, &params_to_bytes(store)?)
}

pub fn load_params<T: Element>(path: &Path) -> Result<ParamStore<T>> {
    params_from_bytes(&fs::read(path)?)
}
