//! The IDX container used by MNIST: a big-endian magic `0x0000_08_NN`
//! (unsigned bytes, `NN` dimensions), `NN` big-endian `u32` sizes, then the
//! payload in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// An unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated {
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Parses an IDX buffer whose magic must equal `expected_magic`.
pub fn parse_idx(bytes: &[u8], expected_magic: u32) -> Result<IdxArray> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected_magic {
        return Err(Error::BadMagic {
            found: magic,
            expected: expected_magic,
        });
    }
    let ndims = (magic & 0xFF) as usize;
    let dims = (0..ndims)
        .map(|k| read_u32(bytes, 4 + 4 * k).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndims;
    let len: usize = dims.iter().product();
    let expected = header + len;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..expected].to_vec(),
    })
}

pub fn encode_idx(arr: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * arr.dims.len() + arr.data.len());
    out.extend_from_slice(&arr.magic().to_be_bytes());
    for &d in &arr.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&arr.data);
    out
}

/// Maps raw pixel values in `0..=255` to `[-1, 1]` by `x ↦ 2x/255 − 1`.
///
/// Refuses input that is not integer valued in `[0, 255]` or whose maximum
/// is at most 1, which is what already-normalized data looks like.
pub fn normalize_pixels<T: Scalar>(raw: &Array2<T>) -> Result<Array2<T>> {
    let mut max = T::neg_infinity();
    for &v in raw {
        if !(v >= T::zero() && v <= T::lit(255.0)) || v.fract() != T::zero() {
            return Err(Error::NotRawPixels(format!("value {v} is not a pixel in 0..=255")));
        }
        max = max.max(v);
    }
    if raw.is_empty() || max <= T::one() {
        return Err(Error::NotRawPixels(format!("maximum {max} looks normalized")));
    }
    let scale = T::lit(2.0 / 255.0);
    Ok(raw.mapv(|v| v * scale - T::one()))
}

/// Inverse of the pixel map, rounding to the nearest byte.
pub fn to_pixel<T: Scalar>(x: T) -> Result<u8> {
    let x = x.to_f64_lossy();
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::NotRawPixels(format!("value {x} outside [-1, 1]")));
    }
    Ok(((x + 1.0) * 127.5).round() as u8)
}

/// Builds a dataset from parsed image and label arrays.
pub fn dataset_from_idx<T: Scalar>(images: &IdxArray, labels: &IdxArray, n_classes: usize) -> Result<Dataset<T>> {
    let n = *images
        .dims
        .first()
        .ok_or(Error::Shape("image array has no dimensions".into()))?;
    if labels.dims.len() != 1 || labels.dims[0] != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.dims.first().copied().unwrap_or(0),
        });
    }
    let sample_shape = images.dims[1..].to_vec();
    let d: usize = sample_shape.iter().product();
    let scale = T::lit(2.0 / 255.0);
    let inputs = Array2::from_shape_fn((n, d), |(i, j)| {
        T::lit(images.data[i * d + j] as f64) * scale - T::one()
    });
    let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    Dataset::with_shape(inputs, labels, n_classes, sample_shape)
}

/// Reads an image/label file pair (MNIST: ten classes).
pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let read = |p: &Path| fs::read(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())));
    let images = parse_idx(&read(images_path)?, IMAGES_MAGIC)?;
    let labels = parse_idx(&read(labels_path)?, LABELS_MAGIC)?;
    dataset_from_idx(&images, &labels, 10)
}

/// Encodes a dataset back into image and label arrays.
pub fn dataset_to_idx<T: Scalar>(ds: &Dataset<T>) -> Result<(IdxArray, IdxArray)> {
    if ds.n_classes > 256 {
        return Err(Error::Shape(format!("{} classes do not fit in a byte", ds.n_classes)));
    }
    let data = ds.inputs.iter().map(|&x| to_pixel(x)).collect::<Result<Vec<u8>>>()?;
    let mut dims = vec![ds.len()];
    dims.extend(&ds.sample_shape);
    let images = IdxArray { dims, data };
    let labels = IdxArray {
        dims: vec![ds.len()],
        data: ds.labels.iter().map(|&l| l as u8).collect(),
    };
    Ok((images, labels))
}

/// Locations of the four MNIST files in a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    /// Finds the files under either naming convention
    /// (`train-images-idx3-ubyte` or `train-images.idx3-ubyte`).
    pub fn locate(dir: &Path) -> Option<Self> {
        let find = |stem: &str, kind: &str| {
            [format!("{stem}-{kind}"), format!("{stem}.{kind}")]
                .into_iter()
                .map(|name| dir.join(name))
                .find(|p| p.is_file())
        };
        Some(Self {
            train_images: find("train-images", "idx3-ubyte")?,
            train_labels: find("train-labels", "idx1-ubyte")?,
            test_images: find("t10k-images", "idx3-ubyte")?,
            test_labels: find("t10k-labels", "idx1-ubyte")?,
        })
    }
}

/// Canonical 60k/10k train and test split.
pub fn load_mnist<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>)> {
    let files =
        MnistFiles::locate(dir).ok_or_else(|| Error::Io(format!("MNIST files not found in {}", dir.display())))?;
    Ok((
        load_idx(&files.train_images, &files.train_labels)?,
        load_idx(&files.test_images, &files.test_labels)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Four 28×28 images with pixel `(i + r + c) % 256`, labels 3, 1, 4, 1.
    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0x00, 0x00, 0x08, 0x03, 0, 0, 0, 4, 0, 0, 0, 28, 0, 0, 0, 28];
        for i in 0..4usize {
            for r in 0..28usize {
                for c in 0..28usize {
                    img.push(((i + r + c) % 256) as u8);
                }
            }
        }
        let lab = vec![0x00, 0x00, 0x08, 0x01, 0, 0, 0, 4, 3, 1, 4, 1];
        (img, lab)
    }

    #[test]
    fn parses_hand_built_fixture() {
        let (img, lab) = fixture();
        let images = parse_idx(&img, IMAGES_MAGIC).unwrap();
        assert_eq!(images.dims, vec![4, 28, 28]);
        let labels = parse_idx(&lab, LABELS_MAGIC).unwrap();
        let ds: Dataset<f64> = dataset_from_idx(&images, &labels, 10).unwrap();
        assert_eq!(ds.labels, vec![3, 1, 4, 1]);
        assert_eq!(ds.sample_shape, vec![28, 28]);
        for i in 0..4 {
            for r in 0..28 {
                for c in 0..28 {
                    let p = ((i + r + c) % 256) as f64;
                    assert!((ds.inputs[[i, r * 28 + c]] - (2.0 * p / 255.0 - 1.0)).abs() < 1e-15);
                    assert_eq!(to_pixel(ds.inputs[[i, r * 28 + c]]).unwrap() as f64, p);
                }
            }
        }
    }

    #[test]
    fn distinct_errors() {
        let (img, lab) = fixture();
        assert!(matches!(
            parse_idx(&lab, IMAGES_MAGIC),
            Err(Error::BadMagic { found: 0x801, .. })
        ));
        assert!(matches!(
            parse_idx(&img[..100], IMAGES_MAGIC),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            parse_idx(&img[..6], IMAGES_MAGIC),
            Err(Error::Truncated { .. })
        ));
        let images = parse_idx(&img, IMAGES_MAGIC).unwrap();
        let short = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3], LABELS_MAGIC).unwrap();
        assert!(matches!(
            dataset_from_idx::<f32>(&images, &short, 10),
            Err(Error::CountMismatch { images: 4, labels: 3 })
        ));
    }

    #[test]
    fn pixel_endpoints() {
        let raw = Array2::from_shape_vec((1, 3), vec![0.0f64, 255.0, 51.0]).unwrap();
        let x = normalize_pixels(&raw).unwrap();
        assert_eq!(x[[0, 0]], -1.0);
        assert_eq!(x[[0, 1]], 1.0);
        assert!((x[[0, 2]] + 0.6).abs() < 1e-15);
    }

    #[test]
    fn refuses_double_normalization() {
        let raw = Array2::from_shape_vec((1, 3), vec![0.0, 255.0, 51.0]).unwrap();
        let once = normalize_pixels(&raw).unwrap();
        assert!(matches!(normalize_pixels(&once), Err(Error::NotRawPixels(_))));
        let ones = Array2::from_elem((2, 2), 1.0);
        assert!(normalize_pixels(&ones).is_err());
    }

    #[test]
    fn encoding_round_trips_bytes() {
        let (img, lab) = fixture();
        let ds: Dataset<f32> = dataset_from_idx(
            &parse_idx(&img, IMAGES_MAGIC).unwrap(),
            &parse_idx(&lab, LABELS_MAGIC).unwrap(),
            10,
        )
        .unwrap();
        let (i2, l2) = dataset_to_idx(&ds).unwrap();
        assert_eq!(encode_idx(&i2), img);
        assert_eq!(encode_idx(&l2), lab);
    }

    #[test]
    fn locates_both_naming_conventions() {
        let dir = tempfile::tempdir().unwrap();
        for name in [
            "train-images-idx3-ubyte",
            "train-labels.idx1-ubyte",
            "t10k-images.idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        ] {
            fs::write(dir.path().join(name), b"").unwrap();
        }
        let f = MnistFiles::locate(dir.path()).unwrap();
        assert!(f.train_images.ends_with("train-images-idx3-ubyte"));
        assert!(f.train_labels.ends_with("train-labels.idx1-ubyte"));
        fs::remove_file(dir.path().join("t10k-labels-idx1-ubyte")).unwrap();
        assert!(MnistFiles::locate(dir.path()).is_none());
    }
}
