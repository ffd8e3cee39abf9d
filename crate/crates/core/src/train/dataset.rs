use std::path::{Path, PathBuf};

use rand::Rng;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::imaging::{bicubic_downscale, ImageBuf, ImagePair};
use crate::ops::Dihedral;
use crate::real::Real;
use crate::tensor::Tensor;

pub const INDEX_FILE: &str = "index.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetEntry {
    pub name: String,
    /// Relative to the dataset root.
    pub hr_path: PathBuf,
    pub lr_path: PathBuf,
    pub hr_dims: (usize, usize),
    pub lr_dims: (usize, usize),
}

/// Paired HR/LR images on disk, listed in `index.tsv`:
///
/// ```text
/// # scale <s>
/// <name>\t<hr path>\t<lr path>\t<hr w>\t<hr h>\t<lr w>\t<lr h>
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub scale: usize,
    pub entries: Vec<DatasetEntry>,
}

pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Crops every HR PNG in `hr_dir` to a multiple of `scale`, synthesizes its LR
/// counterpart by antialiased bicubic ×1/scale, and writes both plus the index
/// under `out_dir`.
pub fn prepare_dataset(hr_dir: &Path, scale: usize, out_dir: &Path) -> Result<DatasetIndex> {
    if !(2..=4).contains(&scale) {
        return Err(Error::Config(format!("scale must be 2, 3 or 4, got {scale}")));
    }
    let files = list_pngs(hr_dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no PNG files in {}", hr_dir.display())));
    }
    for sub in ["hr", "lr"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut entries = Vec::new();
    for path in files {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Data(format!("bad file name {}", path.display())))?
            .to_string();
        let img = ImageBuf::load_png(&path)?;
        if img.width() < 2 * scale || img.height() < 2 * scale {
            return Err(Error::Data(format!(
                "{} is {}x{}, too small for scale {scale}",
                path.display(),
                img.width(),
                img.height()
            )));
        }
        let hr = img.crop_to_multiple(scale)?;
        let lr = bicubic_downscale(&hr, scale)?.quantize();
        let hr_path = PathBuf::from("hr").join(format!("{name}.png"));
        let lr_path = PathBuf::from("lr").join(format!("{name}.png"));
        hr.save_png(&out_dir.join(&hr_path))?;
        lr.save_png(&out_dir.join(&lr_path))?;
        entries.push(DatasetEntry {
            name,
            hr_path,
            lr_path,
            hr_dims: (hr.width(), hr.height()),
            lr_dims: (lr.width(), lr.height()),
        });
    }
    let index = DatasetIndex {
        root: out_dir.to_path_buf(),
        scale,
        entries,
    };
    crate::io::write_atomic_str(&out_dir.join(INDEX_FILE), &index.to_text())?;
    Ok(index)
}

impl DatasetIndex {
    pub fn to_text(&self) -> String {
        let mut out = format!("# scale {}\n", self.scale);
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.name,
                e.hr_path.display(),
                e.lr_path.display(),
                e.hr_dims.0,
                e.hr_dims.1,
                e.lr_dims.0,
                e.lr_dims.1
            ));
        }
        out
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |line: usize, why: &str| Error::Data(format!("{}:{line}: {why}", path.display()));
        let mut lines = text.lines().enumerate();
        let scale = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("# scale "))
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(1, "missing scale header"))?;
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(bad(i + 1, "expected 7 tab-separated fields"));
            }
            let n = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 1, "bad dimension"));
            entries.push(DatasetEntry {
                name: f[0].to_string(),
                hr_path: f[1].into(),
                lr_path: f[2].into(),
                hr_dims: (n(f[3])?, n(f[4])?),
                lr_dims: (n(f[5])?, n(f[6])?),
            });
        }
        if entries.is_empty() {
            return Err(Error::Data(format!("{} lists no images", path.display())));
        }
        Ok(DatasetIndex {
            root: root.to_path_buf(),
            scale,
            entries,
        })
    }

    pub fn load_images(&self) -> Result<Dataset> {
        let pairs = self
            .entries
            .iter()
            .map(|e| {
                let lr = ImageBuf::load_png(&self.root.join(&e.lr_path))?;
                let hr = ImageBuf::load_png(&self.root.join(&e.hr_path))?;
                if (lr.width() * self.scale, lr.height() * self.scale) != (hr.width(), hr.height()) {
                    return Err(Error::Data(format!("{}: LR and HR sizes disagree", e.name)));
                }
                Ok(ImagePair {
                    name: e.name.clone(),
                    lr,
                    hr,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            scale: self.scale,
            pairs,
        })
    }
}

/// Images held in memory for patch sampling and evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scale: usize,
    pub pairs: Vec<ImagePair>,
}

fn patch<T: Real>(img: &ImageBuf, x0: usize, y0: usize, size: usize, out: &mut Vec<T>) {
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for y in y0..y0 + size {
            let row = &plane[y * img.width() + x0..y * img.width() + x0 + size];
            out.extend(row.iter().map(|&v| T::from_f64_lossy(v)));
        }
    }
}

/// Draws `cfg.batch_size` aligned LR/HR patch pairs, each with one random
/// dihedral transform applied to both halves.
pub fn sample_batch<T: Real>(data: &Dataset, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<(Tensor<T>, Tensor<T>)> {
    if data.pairs.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    if cfg.scale != data.scale {
        return Err(Error::Config(format!(
            "config scale {} but dataset scale {}",
            cfg.scale, data.scale
        )));
    }
    let (p, s) = (cfg.patch_size, data.scale);
    if let Some(small) = data.pairs.iter().find(|e| e.lr.width() < p || e.lr.height() < p) {
        return Err(Error::Data(format!(
            "{} is {}x{} at LR, smaller than patch {p}",
            small.name,
            small.lr.width(),
            small.lr.height()
        )));
    }
    let mut lrs = Vec::with_capacity(cfg.batch_size);
    let mut hrs = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let pair = &data.pairs[rng.gen_range(0..data.pairs.len())];
        let x = rng.gen_range(0..=pair.lr.width() - p);
        let y = rng.gen_range(0..=pair.lr.height() - p);
        let t = if cfg.augment {
            Dihedral::new(rng.gen_range(0..8))
        } else {
            Dihedral::IDENTITY
        };
        let mut lr = Vec::with_capacity(3 * p * p);
        patch(&pair.lr, x, y, p, &mut lr);
        let mut hr = Vec::with_capacity(3 * p * p * s * s);
        patch(&pair.hr, x * s, y * s, p * s, &mut hr);
        lrs.push(t.apply(&Tensor::new([1, 3, p, p], lr)?));
        hrs.push(t.apply(&Tensor::new([1, 3, p * s, p * s], hr)?));
    }
    Ok((Tensor::stack(&lrs)?, Tensor::stack(&hrs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ColorSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset() -> Dataset {
        let hr = ImageBuf::from_fn(40, 32, ColorSpace::Rgb, |c, y, x| {
            ((c * 7 + y * 3 + x * 5) % 17) as f64 / 17.0
        })
        .unwrap();
        let lr = crate::imaging::bicubic_downscale(&hr, 2).unwrap();
        Dataset {
            scale: 2,
            pairs: vec![ImagePair {
                name: "a".into(),
                lr,
                hr,
            }],
        }
    }

    #[test]
    fn batch_shapes_and_determinism() {
        let cfg = TrainConfig {
            batch_size: 3,
            patch_size: 8,
            scale: 2,
            ..Default::default()
        };
        let d = dataset();
        let (lr, hr) = sample_batch::<f32>(&d, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(lr.dims(), [3, 3, 8, 8]);
        assert_eq!(hr.dims(), [3, 3, 16, 16]);
        let (lr2, _) = sample_batch::<f32>(&d, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(lr.data(), lr2.data());
        let big = TrainConfig { patch_size: 20, ..cfg };
        assert!(sample_batch::<f32>(&d, &big, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn index_text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let idx = DatasetIndex {
            root: dir.path().to_path_buf(),
            scale: 3,
            entries: vec![DatasetEntry {
                name: "x".into(),
                hr_path: "hr/x.png".into(),
                lr_path: "lr/x.png".into(),
                hr_dims: (9, 6),
                lr_dims: (3, 2),
            }],
        };
        std::fs::write(dir.path().join(INDEX_FILE), idx.to_text()).unwrap();
        assert_eq!(DatasetIndex::load(dir.path()).unwrap(), idx);
    }
}
