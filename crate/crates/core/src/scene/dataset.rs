//! Dataset disk layout: cameras.json plus train/ and test/ 16-bit PNGs.

use super::{Camera, SceneDataset, SceneError, SceneSpec, View};
use crate::img;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    spec: SceneSpec,
    resolution: (u32, u32),
    fov_deg: f64,
    orbit_radius: f64,
    train: Vec<Camera>,
    test: Vec<Camera>,
}

fn view_path(dir: &Path, split: &str, i: usize) -> std::path::PathBuf {
    dir.join(split).join(format!("view_{i:04}.png"))
}

pub fn save_dataset(dir: &Path, ds: &SceneDataset) -> Result<(), SceneError> {
    fs::create_dir_all(dir.join("train"))?;
    fs::create_dir_all(dir.join("test"))?;
    let manifest = DatasetManifest {
        spec: ds.spec.clone(),
        resolution: ds.resolution,
        fov_deg: ds.fov_deg,
        orbit_radius: ds.orbit_radius,
        train: ds.train.iter().map(|v| v.camera.clone()).collect(),
        test: ds.test.iter().map(|v| v.camera.clone()).collect(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join("cameras.json"), json)?;
    for (split, views) in [("train", &ds.train), ("test", &ds.test)] {
        for (i, view) in views.iter().enumerate() {
            img::save_rgb16(&view_path(dir, split, i), &view.image)?;
        }
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<SceneDataset, SceneError> {
    let manifest: DatasetManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("cameras.json"))?)?;
    let load_split = |split: &str, cams: Vec<Camera>| -> Result<Vec<View>, SceneError> {
        cams.into_iter()
            .enumerate()
            .map(|(i, camera)| {
                let image = img::load_rgb16(&view_path(dir, split, i))?;
                if (image.h as u32, image.w as u32) != manifest.resolution {
                    return Err(SceneError::Corrupt(format!(
                        "{split} view {i} is {}x{}, manifest says {:?}",
                        image.h, image.w, manifest.resolution
                    )));
                }
                Ok(View { camera, image })
            })
            .collect()
    };
    Ok(SceneDataset {
        resolution: manifest.resolution,
        fov_deg: manifest.fov_deg,
        orbit_radius: manifest.orbit_radius,
        train: load_split("train", manifest.train)?,
        test: load_split("test", manifest.test)?,
        spec: manifest.spec,
    })
}
