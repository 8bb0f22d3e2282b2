use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{invalid, Result};
use crate::gaussian::{GaussianScene, ShDegree};
use crate::image::Image;

use super::project::{project_unculled, Splat2D};
use super::{ALPHA_MAX, ALPHA_MIN, TILE_SIZE, TRANSMITTANCE_MIN};

/// Per-tile blending record kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub(crate) struct TileRecord {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    /// Indices into `RenderOutput::splats`, in blending order.
    pub splats: Vec<u32>,
    /// `contribs[offsets[p]..offsets[p + 1]]` are the tile-local splat
    /// indices that contributed to tile pixel `p`, front to back.
    pub offsets: Vec<u32>,
    pub contribs: Vec<u32>,
}

/// Result of one forward render.
#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub color: Image,
    pub depth: Image,
    pub final_transmittance: Image,
    /// Visible splats in blending order (ascending depth, then id).
    pub splats: Vec<Splat2D>,
    pub degree: ShDegree,
    pub(crate) tiles: Vec<TileRecord>,
    pub(crate) tiles_x: usize,
    pub(crate) camera: Camera,
    pub(crate) scene_revision: u64,
    pub(crate) scene_len: usize,
}

impl RenderOutput {
    /// Splats that contributed to pixel `(x, y)`, front to back.
    pub fn contrib_list(&self, x: usize, y: usize) -> Vec<&Splat2D> {
        let tile = &self.tiles[(y / TILE_SIZE) * self.tiles_x + x / TILE_SIZE];
        let p = (y - tile.y0) * tile.w + (x - tile.x0);
        let (a, b) = (tile.offsets[p] as usize, tile.offsets[p + 1] as usize);
        tile.contribs[a..b]
            .iter()
            .map(|&l| &self.splats[tile.splats[l as usize] as usize])
            .collect()
    }
}

pub(crate) struct PixelBlend {
    pub rgb: [f64; 3],
    pub depth: f64,
    pub transmittance: f64,
}

/// Front-to-back compositing at one pixel. `visit` sees each contributing
/// splat's position in `order`.
#[inline]
pub(crate) fn blend_pixel<'a>(
    px: f64,
    py: f64,
    order: impl Iterator<Item = (usize, &'a Splat2D)>,
    mut visit: impl FnMut(usize),
) -> PixelBlend {
    let mut t = 1.0;
    let mut rgb = [0.0; 3];
    let mut depth = 0.0;
    for (k, s) in order {
        let a = s.alpha_at(px, py).min(ALPHA_MAX);
        if a < ALPHA_MIN {
            continue;
        }
        let next_t = t * (1.0 - a);
        if next_t < TRANSMITTANCE_MIN {
            break;
        }
        let w = a * t;
        rgb[0] += w * s.rgb.x;
        rgb[1] += w * s.rgb.y;
        rgb[2] += w * s.rgb.z;
        depth += w * s.depth;
        t = next_t;
        visit(k);
    }
    PixelBlend {
        rgb,
        depth,
        transmittance: t,
    }
}

pub(crate) fn sorted_splats(
    scene: &GaussianScene,
    cam: &Camera,
    degree: ShDegree,
    cull: bool,
) -> Vec<Splat2D> {
    let rot = cam.rotation();
    let center = cam.center();
    let mut splats: Vec<Splat2D> = scene
        .gaussians()
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| project_unculled(g, i, cam, &rot, &center, degree))
        .filter(|s| !cull || !s.bbox_is_empty())
        .collect();
    splats.par_sort_unstable_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then(a.gaussian_id.cmp(&b.gaussian_id))
    });
    splats
}

pub(crate) fn check_inputs(scene: &GaussianScene, cam: &Camera, degree: ShDegree) -> Result<()> {
    if cam.width == 0 || cam.height == 0 {
        return invalid("zero-sized image");
    }
    cam.validate()?;
    if degree > scene.sh_degree() {
        return invalid(format!(
            "scene stores SH degree {:?}, {:?} requested",
            scene.sh_degree(),
            degree
        ));
    }
    Ok(())
}

/// Renders color, depth and residual transmittance with 16×16 tiles.
pub fn render(scene: &GaussianScene, cam: &Camera, degree: ShDegree) -> Result<RenderOutput> {
    check_inputs(scene, cam, degree)?;
    let (width, height) = (cam.width as usize, cam.height as usize);
    let splats = sorted_splats(scene, cam, degree, true);

    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (k, s) in splats.iter().enumerate() {
        let [x0, y0, x1, y1] = s.bbox;
        for ty in (y0 as usize / TILE_SIZE)..=(y1 as usize / TILE_SIZE) {
            for tx in (x0 as usize / TILE_SIZE)..=(x1 as usize / TILE_SIZE) {
                bins[ty * tiles_x + tx].push(k as u32);
            }
        }
    }

    let blended: Vec<(TileRecord, Vec<PixelBlend>)> = bins
        .into_par_iter()
        .enumerate()
        .map(|(ti, list)| {
            let (tx, ty) = (ti % tiles_x, ti / tiles_x);
            let x0 = tx * TILE_SIZE;
            let y0 = ty * TILE_SIZE;
            let w = TILE_SIZE.min(width - x0);
            let h = TILE_SIZE.min(height - y0);
            let mut rec = TileRecord {
                x0,
                y0,
                w,
                h,
                offsets: Vec::with_capacity(w * h + 1),
                ..Default::default()
            };
            rec.offsets.push(0);
            let mut pixels = Vec::with_capacity(w * h);
            for py in y0..y0 + h {
                for px in x0..x0 + w {
                    let order = list
                        .iter()
                        .enumerate()
                        .map(|(l, &k)| (l, &splats[k as usize]));
                    let contribs = &mut rec.contribs;
                    let pb = blend_pixel(px as f64, py as f64, order, |l| contribs.push(l as u32));
                    rec.offsets.push(rec.contribs.len() as u32);
                    pixels.push(pb);
                }
            }
            rec.splats = list;
            (rec, pixels)
        })
        .collect();

    let mut color = Image::new(width, height, 3);
    let mut depth = Image::new(width, height, 1);
    let mut trans = Image::new(width, height, 1);
    let mut tiles = Vec::with_capacity(blended.len());
    for (rec, pixels) in blended {
        for (p, pb) in pixels.iter().enumerate() {
            let x = rec.x0 + p % rec.w;
            let y = rec.y0 + p / rec.w;
            let i = y * width + x;
            color.data[3 * i..3 * i + 3].copy_from_slice(&pb.rgb);
            depth.data[i] = pb.depth;
            trans.data[i] = pb.transmittance;
        }
        tiles.push(rec);
    }

    Ok(RenderOutput {
        width,
        height,
        color,
        depth,
        final_transmittance: trans,
        splats,
        degree,
        tiles,
        tiles_x,
        camera: cam.clone(),
        scene_revision: scene.revision(),
        scene_len: scene.len(),
    })
}
