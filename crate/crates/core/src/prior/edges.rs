//! Layout edges: Canny on the normal map of a depth image.

use nalgebra::Vector3;

use crate::geometry::CameraView;
use crate::grid::{DepthImage, Grid, MaskImage};

pub const CANNY_LOW: f64 = 0.1;
pub const CANNY_HIGH: f64 = 0.2;
/// Normal-map gradient magnitude that maps to 1. A Sobel step between two
/// unit normals 90° apart is about `4·√2`, so right-angle creases land near 0.7.
pub const NORMAL_GRADIENT_SCALE: f64 = 8.0;

/// 3×3 Sobel derivatives with replicated borders.
fn sobel<T>(img: &Grid<T>, zero: T) -> Grid<(T, T)>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let (w, h) = (img.width(), img.height());
    let at = |x: isize, y: isize| *img.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    Grid::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        let mut gx = zero;
        let mut gy = zero;
        for (d, k) in [(-1, 1.0), (0, 2.0), (1, 1.0)] {
            gx = gx + (at(x + 1, y + d) - at(x - 1, y + d)) * k;
            gy = gy + (at(x + d, y + 1) - at(x + d, y - 1)) * k;
        }
        (gx, gy)
    })
}

/// Camera-space unit normals facing the camera. Depth is along the view
/// axis, so the point at pixel `(x, y)` is `d · ray(x, y)` with `ray.z = -1`.
pub fn normal_map(depth: &DepthImage, cam: &CameraView) -> Grid<Vector3<f64>> {
    let points = Grid::from_fn(depth.width(), depth.height(), |x, y| {
        let d = *depth.get(x, y);
        let d = if d.is_finite() { d } else { 1.0 };
        cam.pixel_ray_camera(x, y) * d
    });
    let grads = sobel(&points, Vector3::zeros());
    Grid::from_fn(depth.width(), depth.height(), |x, y| {
        let (pu, pv) = grads.get(x, y);
        let n = pu.cross(pv);
        let len = n.norm();
        if len < 1e-15 {
            return Vector3::zeros();
        }
        let n = n / len;
        if n.dot(points.get(x, y)) > 0.0 {
            -n
        } else {
            n
        }
    })
}

/// Canny edge detector on a three-channel image. The gradient direction is
/// taken from the channel with the largest gradient, the magnitude from all
/// three. No smoothing is applied.
pub fn canny(img: &Grid<Vector3<f64>>, scale: f64, low: f64, high: f64) -> MaskImage {
    let (w, h) = (img.width(), img.height());
    let grads = sobel(img, Vector3::zeros());
    let mut mag = Grid::filled(w, h, 0.0f64);
    let mut dir = Grid::filled(w, h, 0u8);
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = grads.get(x, y);
            let m = (gx.norm_squared() + gy.norm_squared()).sqrt() / scale;
            let c = (0..3)
                .max_by(|&a, &b| (gx[a].powi(2) + gy[a].powi(2)).total_cmp(&(gx[b].powi(2) + gy[b].powi(2))))
                .unwrap_or(0);
            let angle = gy[c].atan2(gx[c]).to_degrees().rem_euclid(180.0);
            let sector = ((angle + 22.5) / 45.0).floor() as u8 % 4;
            mag.set(x, y, m.min(1.0));
            dir.set(x, y, sector);
        }
    }
    // Non-maximum suppression along the quantized gradient direction.
    let mval = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            *mag.get(x as usize, y as usize)
        }
    };
    let thin = Grid::from_fn(w, h, |x, y| {
        let m = *mag.get(x, y);
        if m < low {
            return 0.0;
        }
        let (dx, dy) = match dir.get(x, y) {
            0 => (1, 0),
            1 => (1, 1),
            2 => (0, 1),
            _ => (-1, 1),
        };
        let (xi, yi) = (x as isize, y as isize);
        // Ties break toward the lower/left neighbour so plateaus keep one pixel.
        if m >= mval(xi + dx, yi + dy) && m > mval(xi - dx, yi - dy) {
            m
        } else {
            0.0
        }
    });
    // Hysteresis: keep weak pixels 8-connected to a strong one.
    let mut out = Grid::filled(w, h, false);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if *thin.get(x, y) >= high {
                out.set(x, y, true);
                stack.push((x, y));
            }
        }
    }
    while let Some((x, y)) = stack.pop() {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if !*out.get(nx, ny) && *thin.get(nx, ny) >= low {
                    out.set(nx, ny, true);
                    stack.push((nx, ny));
                }
            }
        }
    }
    out
}

/// Junction lines between the planes visible in `depth`.
pub fn layout_edges(depth: &DepthImage, cam: &CameraView) -> MaskImage {
    canny(&normal_map(depth, cam), NORMAL_GRADIENT_SCALE, CANNY_LOW, CANNY_HIGH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    #[test]
    fn frontal_plane_has_no_edges() {
        let cam = CameraView::looking(Point3::origin(), 0.0, 0.0, 40, 30);
        let depth = Grid::filled(40, 30, 2.0);
        let n = normal_map(&depth, &cam);
        for v in n.pixels() {
            assert!((v - Vector3::z()).norm() < 1e-9, "{v:?}");
        }
        assert_eq!(layout_edges(&depth, &cam).count(), 0);
    }

    #[test]
    fn scale_invariant() {
        let cam = CameraView::looking(Point3::origin(), 0.0, 0.0, 40, 30);
        let depth = Grid::from_fn(40, 30, |x, _| if x < 20 { 1.0 + 0.05 * x as f64 } else { 3.0 - 0.05 * x as f64 });
        let scaled = depth.map(|d| d * 3.7);
        assert_eq!(layout_edges(&depth, &cam), layout_edges(&scaled, &cam));
    }
}
