//! CIFAR-10 binary batches: records of one label byte followed by 3072 channel-major pixel bytes.

use std::path::Path;

use super::{concat, ClassAttribute, ClassInfo, LabeledDataset};
use crate::array::DenseArray;
use crate::error::{invalid, Error, Result};

pub const RECORD_BYTES: usize = 3073;
pub const IMAGE_BYTES: usize = 3072;
pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;

pub const TRAIN_FILES: [&str; 5] =
    ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
pub const TEST_FILE: &str = "test_batch.bin";

/// Class names in label order, with whether each is a living object.
pub const CLASSES: [(&str, u8); 10] = [
    ("airplane", 0),
    ("automobile", 0),
    ("bird", 1),
    ("cat", 1),
    ("deer", 1),
    ("dog", 1),
    ("frog", 1),
    ("horse", 1),
    ("ship", 0),
    ("truck", 0),
];

pub fn class_table() -> Vec<ClassInfo> {
    CLASSES.iter().map(|&(name, live)| ClassInfo::new(name, ClassAttribute::Liveliness(live))).collect()
}

/// Decodes one batch held in memory.
pub fn parse_cifar10(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.is_empty() {
        return Err(Error::Format { what: "cifar-10 batch", offset: 0, reason: "empty file".into() });
    }
    if bytes.len() % RECORD_BYTES != 0 {
        let whole = bytes.len() - bytes.len() % RECORD_BYTES;
        return Err(Error::Format {
            what: "cifar-10 batch",
            offset: whole as u64,
            reason: format!("truncated record: {} bytes is not a multiple of {RECORD_BYTES}", bytes.len()),
        });
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * IMAGE_BYTES);
    for (i, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let label = rec[0] as usize;
        if label >= CLASSES.len() {
            return Err(Error::Format {
                what: "cifar-10 batch",
                offset: (i * RECORD_BYTES) as u64,
                reason: format!("label {label} out of range"),
            });
        }
        labels.push(label);
        data.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    LabeledDataset::new(DenseArray::new(vec![n, CHANNELS, SIDE, SIDE], data)?, labels, class_table())
}

/// Loads and concatenates one or more batch files.
pub fn load_cifar10<P: AsRef<Path>>(paths: &[P]) -> Result<LabeledDataset> {
    let parts = paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p.as_ref())?;
            parse_cifar10(&bytes)
        })
        .collect::<Result<Vec<_>>>()?;
    concat(&parts)
}

/// Loads the standard directory layout into `(train, test)`.
pub fn load_cifar10_dir(dir: impl AsRef<Path>) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = dir.as_ref();
    let train: Vec<_> = TRAIN_FILES.iter().map(|f| dir.join(f)).collect();
    Ok((load_cifar10(&train)?, load_cifar10(&[dir.join(TEST_FILE)])?))
}

/// Encodes a dataset back into the binary batch layout. Pixels are rounded to the nearest byte.
pub fn encode_cifar10(ds: &LabeledDataset) -> Result<Vec<u8>> {
    if ds.image_shape() != [CHANNELS, SIDE, SIDE] {
        return Err(invalid(format!("image shape {:?} is not 3×32×32", ds.image_shape())));
    }
    let mut out = Vec::with_capacity(ds.len() * RECORD_BYTES);
    for i in 0..ds.len() {
        let label = ds.labels()[i];
        if label > u8::MAX as usize {
            return Err(invalid(format!("label {label} does not fit in a byte")));
        }
        out.push(label as u8);
        out.extend(ds.image(i).iter().map(|&v| (v * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn write_cifar10(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_cifar10(ds)?)?;
    Ok(())
}

/// Procedural stand-in for the real batches: class-specific hue and pattern frequency, with straight
/// stripes for non-living classes and radial rings for living ones. Pixels are byte-quantized so the
/// result survives a write/parse cycle unchanged.
pub fn synthetic_cifar10(per_class: usize, seed: u64) -> Result<LabeledDataset> {
    use rand::{Rng, SeedableRng};
    if per_class == 0 {
        return Err(Error::Empty("synthetic CIFAR-10 class"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = per_class * CLASSES.len();
    let mut data = Vec::with_capacity(n * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % CLASSES.len();
        labels.push(c);
        let hue = c as f64 / CLASSES.len() as f64 * std::f64::consts::TAU;
        let freq = 0.25 + 0.05 * c as f64 + rng.gen_range(-0.03..0.03);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let (cx, cy) = (rng.gen_range(10.0..22.0), rng.gen_range(10.0..22.0));
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let living = CLASSES[c].1 == 1;
        for ch in 0..CHANNELS {
            let tint = 0.5 + 0.4 * (hue + ch as f64 * std::f64::consts::TAU / 3.0).cos();
            for y in 0..SIDE {
                for x in 0..SIDE {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    let t = if living { (dx * dx + dy * dy).sqrt() } else { dx * angle.cos() + dy * angle.sin() };
                    let wave = 0.5 + 0.5 * (freq * t * 2.0 + phase).sin();
                    let v = (tint * (0.35 + 0.5 * wave) + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0);
                    data.push((v * 255.0).round() as f32 / 255.0);
                }
            }
        }
    }
    LabeledDataset::new(DenseArray::new(vec![n, CHANNELS, SIDE, SIDE], data)?, labels, class_table())
}

/// Writes a standard batch directory of [`synthetic_cifar10`] data: five training files and a test file.
pub fn write_synthetic_cifar10_dir(
    dir: impl AsRef<Path>,
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    if train_per_class % TRAIN_FILES.len() != 0 {
        return Err(invalid(format!("{train_per_class} training images per class do not split over 5 files")));
    }
    for (k, f) in TRAIN_FILES.iter().enumerate() {
        write_cifar10(&synthetic_cifar10(train_per_class / TRAIN_FILES.len(), seed + k as u64)?, dir.join(f))?;
    }
    write_cifar10(&synthetic_cifar10(test_per_class, seed + 100)?, dir.join(TEST_FILE))
}
