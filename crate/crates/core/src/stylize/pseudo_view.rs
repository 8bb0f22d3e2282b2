//! Pseudo views: the style reference forward-warped into another pose with
//! the content model's depth.

use crate::camera::Camera;
use crate::error::{invalid, Result};
use crate::image::Image;

/// Depth tolerances of the visibility test: a warped point is visible at a
/// target pixel when its depth is at most `D·(1 + rel) + abs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Visibility {
    pub rel: f64,
    pub abs: f64,
}

impl Visibility {
    /// 1% relative and 1e-3 of the scene extent absolute.
    pub fn for_extent(extent: f64) -> Self {
        Self {
            rel: 0.01,
            abs: 1e-3 * extent,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoView {
    pub image: Image,
    pub mask: Vec<bool>,
    pub pose: Camera,
}

impl PseudoView {
    pub fn coverage(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Pixels covered less than this are not lifted into pseudo views.
pub const MIN_LIFT_COVER: f64 = 0.5;

/// Blended depth divided by pixel coverage `1 − T`: the expected surface
/// depth of the covered fraction. Pixels with coverage below `min_cover`
/// get depth 0 (nothing to lift). Raw blended depth is short by the
/// coverage factor, which misplaces lifted points on partially covered
/// pixels.
pub fn surface_depth(depth: &Image, transmittance: &Image, min_cover: f64) -> Image {
    let data = depth
        .data
        .iter()
        .zip(&transmittance.data)
        .map(|(&d, &t)| {
            if 1.0 - t >= min_cover {
                d / (1.0 - t)
            } else {
                0.0
            }
        })
        .collect();
    Image {
        data,
        ..depth.clone()
    }
}

/// Lifts every reference pixel with positive depth to 3D, reprojects it into
/// `target_pose` and keeps it at the nearest pixel when it passes the
/// visibility test against `target_depth`. Collisions keep the nearest point.
pub fn synthesize_pseudo_view(
    ref_img: &Image,
    ref_depth: &Image,
    ref_pose: &Camera,
    target_pose: &Camera,
    target_depth: &Image,
    vis: Visibility,
) -> Result<PseudoView> {
    let (rw, rh) = (ref_pose.width as usize, ref_pose.height as usize);
    if ref_img.width != rw
        || ref_img.height != rh
        || ref_depth.width != rw
        || ref_depth.height != rh
    {
        return invalid("reference image, depth and camera resolutions differ");
    }
    if ref_img.channels < 3 || ref_depth.channels != 1 {
        return invalid("expected an RGB reference image and a single-channel depth map");
    }
    let (tw, th) = (target_pose.width as usize, target_pose.height as usize);
    if target_depth.width != tw || target_depth.height != th || target_depth.channels != 1 {
        return invalid("target depth does not match the target camera");
    }

    let mut image = Image::new(tw, th, 3);
    let mut mask = vec![false; tw * th];
    let mut zbuf = vec![f64::INFINITY; tw * th];
    for y in 0..rh {
        for x in 0..rw {
            let d = ref_depth.data[y * rw + x];
            if d <= 0.0 {
                continue;
            }
            let world = ref_pose.unproject(x as f64, y as f64, d);
            let pc = target_pose.to_camera(&world);
            if pc.z <= 0.0 {
                continue;
            }
            let (u, v) = target_pose.project_cam(&pc);
            let (pu, pv) = (u.round(), v.round());
            if pu < 0.0 || pv < 0.0 || pu >= tw as f64 || pv >= th as f64 {
                continue;
            }
            let p = pv as usize * tw + pu as usize;
            if pc.z > target_depth.data[p] * (1.0 + vis.rel) + vis.abs || pc.z >= zbuf[p] {
                continue;
            }
            zbuf[p] = pc.z;
            mask[p] = true;
            image.data[3 * p..3 * p + 3].copy_from_slice(&ref_img.pixel(x, y)[..3]);
        }
    }
    Ok(PseudoView {
        image,
        mask,
        pose: target_pose.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{Gaussian3D, GaussianScene, ShDegree};
    use crate::math::Vec3;
    use crate::raster::render;
    use crate::synth::{random_image, seeded};

    fn cam_at(x: f64) -> Camera {
        Camera::look_at(
            48,
            32,
            40.0,
            Vec3::new(x, 0.0, 0.0),
            Vec3::new(x, 0.0, 1.0),
            -Vec3::y(),
        )
    }

    #[test]
    fn identity_pose_reproduces_reference() {
        let cam = cam_at(0.0);
        let mut rng = seeded(51);
        let img = random_image(&mut rng, 48, 32, 3, 0.0, 1.0);
        let mut depth = random_image(&mut rng, 48, 32, 1, 1.0, 3.0);
        for i in (0..depth.data.len()).step_by(5) {
            depth.data[i] = 0.0;
        }
        let pv = synthesize_pseudo_view(
            &img,
            &depth,
            &cam,
            &cam,
            &depth,
            Visibility::for_extent(1.0),
        )
        .unwrap();
        for p in 0..48 * 32 {
            assert_eq!(pv.mask[p], depth.data[p] > 0.0);
            if pv.mask[p] {
                assert_eq!(
                    &pv.image.data[3 * p..3 * p + 3],
                    &img.data[3 * p..3 * p + 3]
                );
            }
        }
    }

    #[test]
    fn zero_depth_gives_empty_mask() {
        let cam = cam_at(0.0);
        let img = Image::filled(48, 32, &[0.5; 3]);
        let depth = Image::new(48, 32, 1);
        let pv = synthesize_pseudo_view(
            &img,
            &depth,
            &cam,
            &cam_at(0.1),
            &Image::filled(48, 32, &[2.0]),
            Visibility::for_extent(1.0),
        )
        .unwrap();
        assert_eq!(pv.coverage(), 0);
    }

    #[test]
    fn resolution_mismatch_is_an_error() {
        let cam = cam_at(0.0);
        let img = Image::new(47, 32, 3);
        let depth = Image::new(48, 32, 1);
        assert!(synthesize_pseudo_view(
            &img,
            &depth,
            &cam,
            &cam,
            &depth,
            Visibility::for_extent(1.0)
        )
        .is_err());
    }

    /// Exact two-plane depth: a fronto-parallel square at z = 2 covering
    /// |x|, |y| ≤ 0.3 in front of a wall at z = 4.
    fn ray_depth(cam: &Camera, u: f64, v: f64) -> f64 {
        let dir = cam.to_world(&Vec3::new(
            (u - cam.cx) / cam.fx,
            (v - cam.cy) / cam.fy,
            1.0,
        )) - cam.center();
        let o = cam.center();
        let t = (2.0 - o.z) / dir.z;
        let hit = o + dir * t;
        if hit.x.abs() <= 0.3 && hit.y.abs() <= 0.3 {
            return 2.0;
        }
        4.0
    }

    fn depth_map(cam: &Camera) -> Image {
        let mut d = Image::new(cam.width as usize, cam.height as usize, 1);
        for y in 0..cam.height as usize {
            for x in 0..cam.width as usize {
                d.data[y * cam.width as usize + x] = ray_depth(cam, x as f64, y as f64);
            }
        }
        d
    }

    #[test]
    fn occluded_background_band_is_masked() {
        let (a, b) = (cam_at(0.0), cam_at(0.8));
        let img = Image::filled(48, 32, &[0.7, 0.2, 0.1]);
        let (da, db) = (depth_map(&a), depth_map(&b));
        let pv =
            synthesize_pseudo_view(&img, &da, &a, &b, &db, Visibility::for_extent(1.0)).unwrap();
        // A background pixel of B whose background point is hidden from A
        // behind the square, with a one-pixel margin in A for the
        // nearest-pixel rounding, must stay unmasked.
        let mut band = 0;
        for y in 0..32usize {
            for x in 0..48usize {
                let p = y * 48 + x;
                // Skip pixels next to the square's silhouette in B, where
                // rounded square-edge points may legitimately land.
                let near_square = (-1i64..=1).any(|i| {
                    (-1i64..=1)
                        .any(|j| ray_depth(&b, x as f64 + i as f64, y as f64 + j as f64) == 2.0)
                });
                if near_square {
                    continue;
                }
                let world = b.unproject(x as f64, y as f64, 4.0);
                let (ua, va) = a.project_cam(&a.to_camera(&world));
                let hidden = (-2..=2).all(|i| {
                    (-2..=2).all(|j| ray_depth(&a, ua + 0.5 * i as f64, va + 0.5 * j as f64) == 2.0)
                });
                if hidden {
                    band += 1;
                    assert!(!pv.mask[p], "occluded pixel ({x}, {y}) marked visible");
                }
            }
        }
        assert!(band > 20, "scene should produce an occluded band");
        // Every foreground pixel of B sees the square, which A sees whole.
        let fg: Vec<usize> = (0..48 * 32).filter(|&p| db.data[p] == 2.0).collect();
        let covered = fg.iter().filter(|&&p| pv.mask[p]).count();
        assert!(covered as f64 > 0.9 * fg.len() as f64);
    }

    #[test]
    fn warp_of_rendered_content_depth() {
        // A wall of splats rendered from two poses: the warped reference lands
        // on most of the target where the wall is visible.
        let mut gs = Vec::new();
        for i in -10..=10 {
            for j in -8..=8 {
                gs.push(Gaussian3D::isotropic(
                    Vec3::new(i as f64 * 0.1, j as f64 * 0.1, 3.0),
                    0.08,
                    0.95,
                    Vec3::repeat(0.5),
                ));
            }
        }
        let scene = GaussianScene::new(gs);
        let (a, b) = (cam_at(0.0), cam_at(0.2));
        let ra = render(&scene, &a, ShDegree::Diffuse).unwrap();
        let rb = render(&scene, &b, ShDegree::Diffuse).unwrap();
        let pv = synthesize_pseudo_view(
            &ra.color,
            &ra.depth,
            &a,
            &b,
            &rb.depth,
            Visibility::for_extent(scene.extent()),
        )
        .unwrap();
        let opaque = (0..48 * 32)
            .filter(|&p| rb.final_transmittance.data[p] < 0.01)
            .count();
        assert!(pv.coverage() as f64 > 0.8 * opaque as f64);
    }

    #[test]
    fn surface_depth_normalizes_by_coverage() {
        let d = Image::from_data(3, 1, 1, vec![2.0, 0.5, 0.0]).unwrap();
        let t = Image::from_data(3, 1, 1, vec![0.0, 0.75, 1.0]).unwrap();
        assert_eq!(surface_depth(&d, &t, 0.1).data, vec![2.0, 2.0, 0.0]);
        assert_eq!(surface_depth(&d, &t, 0.5).data, vec![2.0, 0.0, 0.0]);
    }
}
