//! `RLDS` dataset files.
//!
//! ```text
//! "RLDS" version:u32 n:u32 h:u32 w:u32 c:u32
//! labels: n × u32
//! images: n × c × h × w × f32 (channel-major per image)
//! class_count:u32, then per class: name(str) kind:u8 value:u32
//! ```

use std::path::Path;

use super::{ClassAttribute, ClassInfo, LabeledDataset};
use crate::array::DenseArray;
use crate::binio::{ByteReader, ByteWriter};
use crate::error::Result;

pub const DATASET_MAGIC: &[u8; 4] = b"RLDS";
const VERSION: u32 = 1;

pub(crate) fn write_classes(out: &mut ByteWriter, classes: &[ClassInfo]) {
    out.u32(classes.len() as u32);
    for class in classes {
        out.str(&class.name);
        match class.attribute {
            ClassAttribute::EdgeCount(e) => {
                out.u8(0);
                out.u32(e);
            }
            ClassAttribute::Liveliness(l) => {
                out.u8(1);
                out.u32(l as u32);
            }
        }
    }
}

pub(crate) fn read_classes(r: &mut ByteReader) -> Result<Vec<ClassInfo>> {
    let count = r.u32()? as usize;
    let mut classes = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = r.str()?;
        let kind = r.u8()?;
        let value = r.u32()?;
        let attribute = match kind {
            0 => ClassAttribute::EdgeCount(value),
            1 if value <= 1 => ClassAttribute::Liveliness(value as u8),
            _ => return Err(r.error(format!("bad class attribute ({kind}, {value})"))),
        };
        classes.push(ClassInfo { name, attribute });
    }
    Ok(classes)
}

impl LabeledDataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.image_shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let mut out = ByteWriter::new();
        out.bytes(DATASET_MAGIC);
        out.u32(VERSION);
        out.u32(self.len() as u32);
        out.u32(h as u32);
        out.u32(w as u32);
        out.u32(c as u32);
        for &l in self.labels() {
            out.u32(l as u32);
        }
        out.f32s(self.images().data());
        write_classes(&mut out, self.classes());
        out.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "dataset");
        r.magic(DATASET_MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let c = r.u32()? as usize;
        let labels = (0..n).map(|_| r.u32().map(|l| l as usize)).collect::<Result<Vec<_>>>()?;
        let at = r.offset();
        let data = r.f32s(n * c * h * w)?;
        let classes = read_classes(&mut r)?;
        r.expect_end()?;
        let images = DenseArray::new(vec![n, c, h, w], data).map_err(|e| crate::Error::Format {
            what: "dataset",
            offset: at as u64,
            reason: e.to_string(),
        })?;
        LabeledDataset::new(images, labels, classes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
