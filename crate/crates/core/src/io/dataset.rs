//! Scene directories: PLY geometry, text manifests for views, poses and
//! labels, and PNG images and masks.
//!
//! ```text
//! dir/scene.txt            background, static PLY, dynamic objects
//! dir/static.ply
//! dir/objects/<id>.ply     object-frame Gaussians with Fourier terms
//! dir/objects/<id>.poses   timestamp, rotation, translation per line
//! dir/views.txt            one camera per line
//! dir/images/<id>.png
//! dir/masks/<id>.png
//! dir/labels.txt           label_id = name, critical
//! ```

use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Quaternion;

use super::config::parse_key_values;
use super::ply::{load_ply, object_gaussians_from_table, object_gaussians_to_table, save_ply, PlyTable};
use super::png::{load_image, load_mask, save_image, save_mask};
use crate::camera::{CameraView, Intrinsics, RigidTransform};
use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::scene::{DynamicObject, ObjectPose, SceneModel};
use crate::semantic::{SemanticClassTable, SemanticMask};

pub const SCENE_MAGIC: &str = "# splatprio scene v1";
pub const VIEWS_MAGIC: &str = "# splatprio views v1";
pub const POSES_MAGIC: &str = "# splatprio poses v1";
pub const LABELS_MAGIC: &str = "# splatprio labels v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scene: SceneModel,
    /// Views carry their ground-truth image and mask when present.
    pub views: Vec<CameraView>,
    pub table: SemanticClassTable,
}

impl Dataset {
    pub fn masks(&self) -> Vec<SemanticMask> {
        self.views
            .iter()
            .filter_map(|v| {
                v.semantic_mask.as_ref().map(|m| SemanticMask {
                    view_id: v.id,
                    mask: m.clone(),
                })
            })
            .collect()
    }
}

fn text_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Text {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_fields<T: FromStr>(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<T>> {
    fields
        .iter()
        .map(|f| f.parse().map_err(|_| text_err(path, line, format!("cannot parse '{f}'"))))
        .collect()
}

/// Non-comment, non-blank lines with their 1-based numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, f)| !f.is_empty())
}

fn write_poses(poses: &[ObjectPose], path: &Path) -> Result<()> {
    let mut s = format!("{POSES_MAGIC}\n# timestamp qw qx qy qz tx ty tz\n");
    for p in poses {
        let q = &p.rotation.coords;
        let t = &p.translation;
        s.push_str(&format!("{} {} {} {} {} {} {} {}\n", p.timestamp, q.w, q.x, q.y, q.z, t.x, t.y, t.z));
    }
    fs::write(path, s)?;
    Ok(())
}

fn read_poses(path: &Path) -> Result<Vec<ObjectPose>> {
    let text = fs::read_to_string(path)?;
    data_lines(&text)
        .map(|(n, f)| {
            if f.len() != 8 {
                return Err(text_err(path, n, format!("expected 8 fields, found {}", f.len())));
            }
            let v: Vec<f64> = parse_fields(path, n, &f)?;
            Ok(ObjectPose {
                timestamp: v[0],
                rotation: Quaternion::new(v[1], v[2], v[3], v[4]),
                translation: Vec3::new(v[5], v[6], v[7]),
            })
        })
        .collect()
}

pub fn save_labels(table: &SemanticClassTable, path: &Path) -> Result<()> {
    let mut s = format!("{LABELS_MAGIC}\n");
    for (id, e) in &table.classes {
        s.push_str(&format!("{id} = {}, {}\n", e.name, e.critical));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Reads `label_id = name, critical` lines; the flag may be omitted, in
/// which case criticality follows the class name.
pub fn load_labels(path: &Path) -> Result<SemanticClassTable> {
    let text = fs::read_to_string(path)?;
    let mut table = SemanticClassTable {
        classes: Default::default(),
    };
    for e in parse_key_values(&text, &path.display().to_string())? {
        let id: u16 = e
            .key
            .parse()
            .map_err(|_| text_err(path, e.line, format!("label id '{}' is not a u16", e.key)))?;
        let (name, flag) = match e.value.split_once(',') {
            Some((n, f)) => (n.trim(), Some(f.trim())),
            None => (e.value.as_str(), None),
        };
        let critical = match flag {
            Some("true" | "1" | "yes") => true,
            Some("false" | "0" | "no") => false,
            Some(other) => return Err(text_err(path, e.line, format!("bad critical flag '{other}'"))),
            None => SemanticClassTable::from_names([(id, name.to_string())]).classes[&id].critical,
        };
        table.insert(id, name, critical);
    }
    Ok(table)
}

pub fn save_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("objects"))?;
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;

    let bg = &data.scene.background;
    let mut scene = format!("{SCENE_MAGIC}\nbackground = {} {} {}\nstatic = static.ply\n", bg.x, bg.y, bg.z);
    save_ply(&data.scene.static_gaussians, &dir.join("static.ply"))?;
    for o in &data.scene.dynamic_objects {
        let ply = format!("objects/{}.ply", o.object_id);
        let poses = format!("objects/{}.poses", o.object_id);
        fs::write(dir.join(&ply), object_gaussians_to_table(&o.gaussians)?.to_bytes())?;
        write_poses(&o.poses, &dir.join(&poses))?;
        scene.push_str(&format!("object = {} {ply} {poses}\n", o.object_id));
    }
    fs::write(dir.join("scene.txt"), scene)?;

    let mut views = format!("{VIEWS_MAGIC}\n# id fx fy cx cy width height qw qx qy qz tx ty tz timestamp image mask\n");
    for v in &data.views {
        let k = &v.intrinsics;
        let q = &v.world_to_camera.rotation.coords;
        let t = &v.world_to_camera.translation;
        let image = match &v.gt_image {
            Some(img) => {
                let rel = format!("images/{}.png", v.id);
                save_image(img, &dir.join(&rel))?;
                rel
            }
            None => "-".into(),
        };
        let mask = match &v.semantic_mask {
            Some(m) => {
                let rel = format!("masks/{}.png", v.id);
                save_mask(m, &dir.join(&rel))?;
                rel
            }
            None => "-".into(),
        };
        views.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {image} {mask}\n",
            v.id, k.fx, k.fy, k.cx, k.cy, k.width, k.height, q.w, q.x, q.y, q.z, t.x, t.y, t.z, v.timestamp
        ));
    }
    fs::write(dir.join("views.txt"), views)?;
    save_labels(&data.table, &dir.join("labels.txt"))
}

pub fn load_views(dir: &Path) -> Result<Vec<CameraView>> {
    let path = dir.join("views.txt");
    let text = fs::read_to_string(&path)?;
    data_lines(&text)
        .map(|(n, f)| {
            if f.len() != 17 {
                return Err(text_err(&path, n, format!("expected 17 fields, found {}", f.len())));
            }
            let id: u32 = parse_fields(&path, n, &f[0..1])?[0];
            let dims: Vec<usize> = parse_fields(&path, n, &f[5..7])?;
            let k: Vec<f64> = parse_fields(&path, n, &f[1..5])?;
            let p: Vec<f64> = parse_fields(&path, n, &f[7..15])?;
            let intr = Intrinsics {
                fx: k[0],
                fy: k[1],
                cx: k[2],
                cy: k[3],
                width: dims[0],
                height: dims[1],
            };
            intr.validate()?;
            let w2c = RigidTransform {
                rotation: Quaternion::new(p[0], p[1], p[2], p[3]),
                translation: Vec3::new(p[4], p[5], p[6]),
            };
            let mut view = CameraView::new(id, intr, w2c, p[7]);
            if f[15] != "-" {
                view.gt_image = Some(load_image(&dir.join(f[15]))?);
            }
            if f[16] != "-" {
                view.semantic_mask = Some(load_mask(&dir.join(f[16]))?);
            }
            Ok(view)
        })
        .collect()
}

pub fn load_scene(dir: &Path) -> Result<SceneModel> {
    let path = dir.join("scene.txt");
    let text = fs::read_to_string(&path)?;
    let mut scene = SceneModel::default();
    for e in parse_key_values(&text, &path.display().to_string())? {
        let f: Vec<&str> = e.value.split_whitespace().collect();
        match e.key.as_str() {
            "background" => {
                let v: Vec<f64> = parse_fields(&path, e.line, &f)?;
                if v.len() != 3 {
                    return Err(text_err(&path, e.line, "background needs 3 values"));
                }
                scene.background = Rgb::new(v[0], v[1], v[2]);
            }
            "static" => scene.static_gaussians = load_ply(&dir.join(e.value.as_str()))?,
            "object" => {
                if f.len() != 3 {
                    return Err(text_err(&path, e.line, "object needs 'id ply poses'"));
                }
                let object_id: u32 = parse_fields(&path, e.line, &f[..1])?[0];
                let table = PlyTable::from_bytes(&fs::read(dir.join(f[1]))?)?;
                scene.dynamic_objects.push(DynamicObject {
                    object_id,
                    gaussians: object_gaussians_from_table(&table)?,
                    poses: read_poses(&dir.join(f[2]))?,
                });
            }
            other => return Err(text_err(&path, e.line, format!("unknown key '{other}'"))),
        }
    }
    scene.validate()?;
    Ok(scene)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let labels = dir.join("labels.txt");
    let table = if labels.exists() {
        load_labels(&labels)?
    } else {
        SemanticClassTable::default()
    };
    Ok(Dataset {
        scene: load_scene(dir)?,
        views: load_views(dir)?,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_scene, Layout, SynthSpec};

    #[test]
    fn street_toy_directory_round_trip() {
        let mut spec = SynthSpec::new(Layout::StreetToy, 2);
        spec.size = Some((24, 16));
        spec.views = Some(2);
        let s = synth_scene(&spec).unwrap();
        let data = Dataset {
            scene: s.scene,
            views: s.views,
            table: s.table,
        };
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&data, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.scene, data.scene);
        assert_eq!(back.table, data.table);
        assert_eq!(back.masks(), data.masks());
        for (a, b) in back.views.iter().zip(&data.views) {
            assert_eq!((a.id, &a.intrinsics, &a.world_to_camera, a.timestamp), (b.id, &b.intrinsics, &b.world_to_camera, b.timestamp));
            let (ia, ib) = (a.gt_image.as_ref().unwrap(), b.gt_image.as_ref().unwrap());
            let worst = ia.data.iter().zip(&ib.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst < 0.02, "image quantization error {worst}");
        }
    }

    #[test]
    fn labels_without_flag_follow_names() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.txt");
        fs::write(&p, "# ids\n5 = vehicle\n2 = building\n9 = bollard, true\n").unwrap();
        let t = load_labels(&p).unwrap();
        assert!(t.classes[&5].critical);
        assert!(!t.classes[&2].critical);
        assert!(t.classes[&9].critical);
    }
}
