//! On-disk dataset layout.
//!
//! ```text
//! root/
//!   images/<id>.png          one per camera
//!   cameras.json             list of cameras, `id` = image stem
//!   reference.png            optional style reference
//!   reference_camera.json    its camera (single object)
//!   features/<key>.fmap      optional precomputed features
//!   held_out/                optional: same layout, evaluation only
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use splatstyle::camera::{load_cameras, save_cameras};
use splatstyle::image::{load_png, save_png};
use splatstyle::{Camera, Image};

#[derive(Clone, Debug)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

/// Images paired with their cameras, in camera-file order.
#[derive(Clone, Debug)]
pub struct PosedImages {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn images_dir(&self) -> PathBuf {
        self.root.join("images")
    }

    pub fn cameras_path(&self) -> PathBuf {
        self.root.join("cameras.json")
    }

    pub fn reference_path(&self) -> PathBuf {
        self.root.join("reference.png")
    }

    pub fn reference_camera_path(&self) -> PathBuf {
        self.root.join("reference_camera.json")
    }

    pub fn held_out(&self) -> Option<DatasetLayout> {
        let dir = self.root.join("held_out");
        dir.join("cameras.json")
            .is_file()
            .then(|| DatasetLayout::new(dir))
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let path = self.cameras_path();
        let cams = load_cameras(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut seen = std::collections::HashSet::new();
        for c in &cams {
            if c.id.is_empty() {
                bail!(
                    "{}: every camera needs an id matching its image name",
                    path.display()
                );
            }
            if !seen.insert(c.id.as_str()) {
                bail!("{}: duplicate camera id '{}'", path.display(), c.id);
            }
        }
        Ok(cams)
    }

    /// Loads every image under `images/` and pairs it with its camera. An
    /// image without a camera entry, or a camera without an image, is an
    /// error.
    pub fn posed_images(&self) -> Result<PosedImages> {
        let dir = self.images_dir();
        let mut stems = Vec::new();
        for entry in
            std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))?
        {
            let path = entry?.path();
            if path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
            {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    stems.push(stem.to_string());
                }
            }
        }
        if stems.is_empty() {
            bail!("no PNG images in {}", dir.display());
        }
        let cameras = self.cameras()?;
        for s in &stems {
            if !cameras.iter().any(|c| &c.id == s) {
                bail!(
                    "image '{s}.png' has no entry in {}",
                    self.cameras_path().display()
                );
            }
        }
        let mut images = Vec::with_capacity(cameras.len());
        for cam in &cameras {
            let path = dir.join(format!("{}.png", cam.id));
            if !path.is_file() {
                bail!("camera '{}' has no image {}", cam.id, path.display());
            }
            let img = load_png(&path).with_context(|| format!("reading {}", path.display()))?;
            check_resolution(cam, &img, &path)?;
            images.push(img);
        }
        Ok(PosedImages { cameras, images })
    }

    pub fn reference(&self) -> Result<(Image, Camera)> {
        let path = self.reference_path();
        if !path.is_file() {
            bail!("missing style reference {}", path.display());
        }
        let img = load_png(&path).with_context(|| format!("reading {}", path.display()))?;
        let cam_path = self.reference_camera_path();
        let text = std::fs::read_to_string(&cam_path)
            .with_context(|| format!("reading {}", cam_path.display()))?;
        let cam: Camera = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", cam_path.display()))?;
        cam.validate()?;
        check_resolution(&cam, &img, &path)?;
        Ok((img, cam))
    }

    /// Writes posed images in this layout.
    pub fn write_posed(&self, posed: &PosedImages) -> Result<()> {
        std::fs::create_dir_all(self.images_dir())?;
        for (cam, img) in posed.cameras.iter().zip(&posed.images) {
            save_png(&self.images_dir().join(format!("{}.png", cam.id)), img)?;
        }
        save_cameras(&self.cameras_path(), &posed.cameras)?;
        Ok(())
    }

    pub fn write_reference(&self, img: &Image, cam: &Camera) -> Result<()> {
        std::fs::create_dir_all(&self.root)?;
        save_png(&self.reference_path(), img)?;
        std::fs::write(
            self.reference_camera_path(),
            serde_json::to_string_pretty(cam)?,
        )?;
        Ok(())
    }

    /// Resolves an extractor spec: relative `file:` directories are taken
    /// relative to the dataset root.
    pub fn resolve_extractor(&self, spec: &str) -> String {
        match spec.strip_prefix("file:") {
            Some(dir) if Path::new(dir).is_relative() => {
                format!("file:{}", self.root.join(dir).display())
            }
            _ => spec.to_string(),
        }
    }
}

fn check_resolution(cam: &Camera, img: &Image, path: &Path) -> Result<()> {
    if img.width != cam.width as usize || img.height != cam.height as usize {
        bail!(
            "{} is {}x{} but camera '{}' is {}x{}",
            path.display(),
            img.width,
            img.height,
            cam.id,
            cam.width,
            cam.height
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use splatstyle::synth::front_camera;

    use super::*;

    fn posed(ids: &[&str]) -> PosedImages {
        PosedImages {
            cameras: ids
                .iter()
                .map(|id| front_camera(4, 3, 5.0).with_id(*id))
                .collect(),
            images: ids
                .iter()
                .map(|_| Image::filled(4, 3, &[0.2, 0.4, 0.6]))
                .collect(),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetLayout::new(dir.path());
        ds.write_posed(&posed(&["b", "a"])).unwrap();
        let back = ds.posed_images().unwrap();
        assert_eq!(
            back.cameras
                .iter()
                .map(|c| c.id.as_str())
                .collect::<Vec<_>>(),
            ["b", "a"]
        );
        assert_eq!(back.images[0].width, 4);
        assert!(ds.held_out().is_none());
    }

    #[test]
    fn image_without_camera_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetLayout::new(dir.path());
        ds.write_posed(&posed(&["a"])).unwrap();
        save_png(
            &ds.images_dir().join("stray.png"),
            &Image::filled(4, 3, &[0.0; 3]),
        )
        .unwrap();
        let err = ds.posed_images().unwrap_err().to_string();
        assert!(err.contains("stray"), "{err}");
    }

    #[test]
    fn camera_without_image_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetLayout::new(dir.path());
        let mut p = posed(&["a", "b"]);
        ds.write_posed(&p).unwrap();
        std::fs::remove_file(ds.images_dir().join("b.png")).unwrap();
        assert!(ds.posed_images().is_err());
        p.cameras.truncate(1);
        save_cameras(&ds.cameras_path(), &p.cameras).unwrap();
        assert!(ds.posed_images().is_ok());
    }

    #[test]
    fn empty_images_dir_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetLayout::new(dir.path());
        std::fs::create_dir_all(ds.images_dir()).unwrap();
        save_cameras(&ds.cameras_path(), &posed(&["a"]).cameras).unwrap();
        assert!(ds
            .posed_images()
            .unwrap_err()
            .to_string()
            .contains("no PNG"));
    }

    #[test]
    fn reference_resolution_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetLayout::new(dir.path());
        assert!(ds
            .reference()
            .unwrap_err()
            .to_string()
            .contains("missing style reference"));
        let cam = front_camera(4, 3, 5.0).with_id("ref");
        ds.write_reference(&Image::filled(4, 4, &[0.5; 3]), &cam)
            .unwrap();
        assert!(ds.reference().is_err());
        ds.write_reference(&Image::filled(4, 3, &[0.5; 3]), &cam)
            .unwrap();
        assert_eq!(ds.reference().unwrap().1, cam);
    }

    #[test]
    fn relative_feature_dirs_resolve_against_root() {
        let ds = DatasetLayout::new("/data/toy");
        assert_eq!(
            ds.resolve_extractor("file:features"),
            "file:/data/toy/features"
        );
        assert_eq!(ds.resolve_extractor("file:/abs"), "file:/abs");
        assert_eq!(ds.resolve_extractor("builtin"), "builtin");
    }
}
