//! On-disk dataset layout.
//!
//! ```text
//! <root>/images/<id>.pgm   raw gray levels
//! <root>/tongue/<id>.pgm   label, 0 or 255
//! <root>/veins/<id>.pgm    label, 0 or 255
//! <root>/folds.json        [{fold, train, val, test}, ...]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::{read_pgm, write_pgm, DataError, FoldSplit, ImageSample, Mask, Plane};

const IMAGES: &str = "images";
const TONGUE: &str = "tongue";
const VEINS: &str = "veins";
pub const FOLDS_FILE: &str = "folds.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_raster(path: &Path) -> Result<Plane<u8>, DataError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(read_pgm(&bytes)?)
}

/// Gray levels are rounded and clamped to `0..=255`.
pub fn image_to_u8(image: &Plane<f32>) -> Plane<u8> {
    image.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

pub fn write_dataset(root: &Path, samples: &[ImageSample]) -> Result<(), DataError> {
    for dir in [IMAGES, TONGUE, VEINS] {
        let p = root.join(dir);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    for s in samples {
        let name = format!("{}.pgm", s.id);
        write_file(&root.join(IMAGES).join(&name), &write_pgm(&image_to_u8(&s.image)))?;
        write_file(&root.join(TONGUE).join(&name), &write_pgm(&s.tongue.map(|v| v * 255)))?;
        write_file(&root.join(VEINS).join(&name), &write_pgm(&s.vein.map(|v| v * 255)))?;
    }
    Ok(())
}

fn read_label(path: &Path) -> Result<Mask, DataError> {
    let raw = read_raster(path)?;
    if let Some(&v) = raw.data().iter().find(|&&v| v != 0 && v != 255) {
        return Err(DataError::NonBinaryLabel(v));
    }
    Ok(raw.map(|v| (v == 255) as u8))
}

pub fn load_sample(root: &Path, id: &str) -> Result<ImageSample, DataError> {
    let name = format!("{id}.pgm");
    let image = read_raster(&root.join(IMAGES).join(&name))?.map(f32::from);
    let tongue = read_label(&root.join(TONGUE).join(&name))?;
    let vein = read_label(&root.join(VEINS).join(&name))?;
    ImageSample::new(id, image, tongue, vein)
}

/// Ids of every `images/*.pgm`, sorted.
pub fn list_ids(root: &Path) -> Result<Vec<String>, DataError> {
    let dir = root.join(IMAGES);
    let mut ids = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let path: PathBuf = entry.map_err(io_err(&dir))?.path();
        if path.extension().is_some_and(|e| e == "pgm") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Loads every sample, sorted by id.
pub fn load_dataset(root: &Path) -> Result<Vec<ImageSample>, DataError> {
    let ids = list_ids(root)?;
    if ids.is_empty() {
        return Err(DataError::Empty);
    }
    ids.iter().map(|id| load_sample(root, id)).collect()
}

pub fn write_folds(root: &Path, folds: &[FoldSplit]) -> Result<(), DataError> {
    let path = root.join(FOLDS_FILE);
    let json = serde_json::to_string_pretty(folds)
        .map_err(|source| DataError::Json { path: path.display().to_string(), source })?;
    write_file(&path, json.as_bytes())
}

pub fn load_folds(root: &Path) -> Result<Vec<FoldSplit>, DataError> {
    let path = root.join(FOLDS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| DataError::Json { path: path.display().to_string(), source })
}

/// Looks up `ids` in `samples`.
pub fn select<'a>(samples: &'a [ImageSample], ids: &[String]) -> Result<Vec<&'a ImageSample>, DataError> {
    ids.iter()
        .map(|id| samples.iter().find(|s| &s.id == id).ok_or_else(|| DataError::UnknownId(id.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{kfold_split, synth_generate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = synth_generate(26, 32, 32, 3).unwrap();
        write_dataset(dir.path(), &samples).unwrap();
        let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
        let folds = kfold_split(&ids, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        write_folds(dir.path(), &folds).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), samples);
        assert_eq!(load_folds(dir.path()).unwrap(), folds);
        let label = fs::read(dir.path().join("veins/s000.pgm")).unwrap();
        assert!(read_pgm(&label).unwrap().data().iter().all(|&v| v == 0 || v == 255));
    }

    #[test]
    fn unknown_ids_and_bad_labels() {
        let dir = tempfile::tempdir().unwrap();
        let samples = synth_generate(2, 16, 16, 3).unwrap();
        write_dataset(dir.path(), &samples).unwrap();
        assert!(matches!(select(&samples, &["nope".into()]), Err(DataError::UnknownId(_))));
        let grey = Plane::filled(16, 16, 7u8);
        fs::write(dir.path().join("tongue/s001.pgm"), write_pgm(&grey)).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DataError::NonBinaryLabel(7))));
        assert!(matches!(load_sample(dir.path(), "s009"), Err(DataError::Io { .. })));
    }
}
