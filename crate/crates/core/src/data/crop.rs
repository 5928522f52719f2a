//! Random region-of-interest crop around the label's bounding box.
//!
//! The top-left corner is drawn uniformly between the frame origin and the
//! label's tight bounding box corner; the bottom-right corner between the
//! box's far corner and the frame edge. Every positive pixel is therefore
//! always inside the crop.

use rand::Rng;

use super::{DataError, Mask, Plane};

/// Half-open pixel rectangle `[top, bottom) x [left, right)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl CropBox {
    pub fn height(&self) -> usize {
        self.bottom - self.top
    }

    pub fn width(&self) -> usize {
        self.right - self.left
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.top && y < self.bottom && x >= self.left && x < self.right
    }
}

/// Uniform draws in `[0, 1)` for `[top, left, bottom, right]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropDraws(pub [f64; 4]);

impl CropDraws {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        CropDraws([rng.gen(), rng.gen(), rng.gen(), rng.gen()])
    }

    /// Draws that reproduce the tight bounding box.
    pub fn tight() -> Self {
        let hi = 1.0 - f64::EPSILON;
        CropDraws([hi, hi, 0.0, 0.0])
    }
}

/// Smallest box containing every positive pixel.
pub fn tight_bbox(label: &Mask) -> Option<CropBox> {
    let (h, w) = label.dims();
    let mut b: Option<CropBox> = None;
    for y in 0..h {
        for x in 0..w {
            if label.get(y, x) != 0 {
                let bb = b.get_or_insert(CropBox { top: y, left: x, bottom: y + 1, right: x + 1 });
                bb.top = bb.top.min(y);
                bb.left = bb.left.min(x);
                bb.bottom = bb.bottom.max(y + 1);
                bb.right = bb.right.max(x + 1);
            }
        }
    }
    b
}

fn pick(u: f64, count: usize) -> usize {
    ((u.clamp(0.0, 1.0) * count as f64) as usize).min(count - 1)
}

pub fn roi_crop_box(label: &Mask, draws: CropDraws) -> Result<CropBox, DataError> {
    let tight = tight_bbox(label).ok_or_else(|| DataError::EmptyLabel("roi crop".into()))?;
    let (h, w) = label.dims();
    let [ut, ul, ub, ur] = draws.0;
    Ok(CropBox {
        top: pick(ut, tight.top + 1),
        left: pick(ul, tight.left + 1),
        bottom: tight.bottom + pick(ub, h - tight.bottom + 1),
        right: tight.right + pick(ur, w - tight.right + 1),
    })
}

pub fn crop<T: Copy>(p: &Plane<T>, b: CropBox) -> Plane<T> {
    let mut data = Vec::with_capacity(b.height() * b.width());
    for y in b.top..b.bottom {
        data.extend_from_slice(&p.data()[y * p.width() + b.left..y * p.width() + b.right]);
    }
    Plane::from_vec(b.height(), b.width(), data).expect("crop volume")
}

fn src_coord(d: usize, scale: f64, size: usize) -> f64 {
    ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, size as f64 - 1.0)
}

pub fn resize_bilinear(p: &Plane<f32>, h: usize, w: usize) -> Plane<f32> {
    let sy = p.height() as f64 / h as f64;
    let sx = p.width() as f64 / w as f64;
    let mut out = Plane::filled(h, w, 0.0f32);
    for y in 0..h {
        let fy = src_coord(y, sy, p.height());
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(p.height() - 1);
        let ty = fy - y0 as f64;
        for x in 0..w {
            let fx = src_coord(x, sx, p.width());
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(p.width() - 1);
            let tx = fx - x0 as f64;
            let top = (1.0 - tx) * p.get(y0, x0) as f64 + tx * p.get(y0, x1) as f64;
            let bot = (1.0 - tx) * p.get(y1, x0) as f64 + tx * p.get(y1, x1) as f64;
            out.set(y, x, ((1.0 - ty) * top + ty * bot) as f32);
        }
    }
    out
}

pub fn resize_nearest(p: &Mask, h: usize, w: usize) -> Mask {
    let sy = p.height() as f64 / h as f64;
    let sx = p.width() as f64 / w as f64;
    let mut out = Plane::filled(h, w, 0u8);
    for y in 0..h {
        let yy = (((y as f64 + 0.5) * sy) as usize).min(p.height() - 1);
        for x in 0..w {
            let xx = (((x as f64 + 0.5) * sx) as usize).min(p.width() - 1);
            out.set(y, x, (p.get(yy, xx) != 0) as u8);
        }
    }
    out
}

/// Crops `image` and `label` to a random box around the label's positives
/// and resizes both to `out_h x out_w`.
pub fn random_roi_crop<R: Rng + ?Sized>(
    image: &Plane<f32>,
    label: &Mask,
    out_h: usize,
    out_w: usize,
    rng: &mut R,
) -> Result<(Plane<f32>, Mask), DataError> {
    image.same_dims(label)?;
    let b = roi_crop_box(label, CropDraws::sample(rng))?;
    Ok((resize_bilinear(&crop(image, b), out_h, out_w), resize_nearest(&crop(label, b), out_h, out_w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blob() -> Mask {
        let mut m = Plane::filled(32, 32, 0u8);
        for (y, x) in [(10, 12), (11, 12), (14, 20), (20, 9)] {
            m.set(y, x, 1);
        }
        m
    }

    #[test]
    fn tight_box_is_exact() {
        assert_eq!(tight_bbox(&blob()), Some(CropBox { top: 10, left: 9, bottom: 21, right: 21 }));
    }

    #[test]
    fn pinned_draws_give_the_tight_box() {
        assert_eq!(roi_crop_box(&blob(), CropDraws::tight()).unwrap(), tight_bbox(&blob()).unwrap());
        let full = roi_crop_box(&blob(), CropDraws([0.0, 0.0, 1.0 - 1e-12, 1.0 - 1e-12])).unwrap();
        assert_eq!(full, CropBox { top: 0, left: 0, bottom: 32, right: 32 });
    }

    #[test]
    fn full_label_crops_to_full_frame() {
        let m = Plane::filled(16, 16, 1u8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = roi_crop_box(&m, CropDraws::sample(&mut rng)).unwrap();
        assert_eq!(b, CropBox { top: 0, left: 0, bottom: 16, right: 16 });
        let img = Plane::from_vec(16, 16, (0..256).map(|v| v as f32).collect()).unwrap();
        assert_eq!(crop(&img, b), img);
        assert_eq!(resize_bilinear(&img, 16, 16), img);
    }

    #[test]
    fn empty_label_rejected() {
        let m = Plane::filled(8, 8, 0u8);
        assert!(matches!(roi_crop_box(&m, CropDraws::tight()), Err(DataError::EmptyLabel(_))));
    }

    #[test]
    fn crops_never_drop_positives() {
        let m = blob();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = m.map(|v| v as f32);
        for _ in 0..100 {
            let b = roi_crop_box(&m, CropDraws::sample(&mut rng)).unwrap();
            for y in 0..32 {
                for x in 0..32 {
                    if m.get(y, x) == 1 {
                        assert!(b.contains(y, x));
                    }
                }
            }
            assert_eq!(crop(&m, b).count_positive(), 4);
            let (_, l) = random_roi_crop(&img, &m, 32, 32, &mut rng).unwrap();
            assert!(l.count_positive() >= 4);
        }
    }
}
