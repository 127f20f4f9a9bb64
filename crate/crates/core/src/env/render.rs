//! Orthographic top-down rasterizer producing 3×64×64 byte images.

use super::cloth::{ClothState, Vec3};

pub const IMAGE_SIZE: usize = 64;
pub const RGB_BYTES: usize = 3 * IMAGE_SIZE * IMAGE_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Palette {
    pub cloth: [u8; 3],
    pub background: [u8; 3],
    pub gripper: [u8; 3],
}

impl Palette {
    pub const DEFAULT: Palette = Palette {
        cloth: [235, 40, 150],
        background: [128, 128, 128],
        gripper: [255, 255, 255],
    };

    /// Grippers nearly indistinguishable from the background.
    pub const LOW_CONTRAST: Palette = Palette {
        cloth: [235, 40, 150],
        background: [128, 128, 128],
        gripper: [140, 140, 140],
    };
}

/// Fixed overhead camera: a square footprint of `extent` metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub center: [f64; 2],
    pub extent: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0],
            extent: 0.8,
        }
    }
}

impl Camera {
    /// Continuous pixel coordinates (column, row); pixel centres sit at
    /// half-integers. Row 0 is the `+y` edge.
    fn to_pixel(&self, p: Vec3) -> (f64, f64) {
        let scale = IMAGE_SIZE as f64 / self.extent;
        let u = (p[0] - (self.center[0] - 0.5 * self.extent)) * scale;
        let v = ((self.center[1] + 0.5 * self.extent) - p[1]) * scale;
        (u, v)
    }
}

struct Canvas {
    buf: Vec<u8>,
}

impl Canvas {
    fn new(bg: [u8; 3]) -> Self {
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        let mut buf = vec![0u8; RGB_BYTES];
        for (ch, &val) in bg.iter().enumerate() {
            buf[ch * plane..(ch + 1) * plane].fill(val);
        }
        Self { buf }
    }

    fn put(&mut self, row: usize, col: usize, color: [u8; 3]) {
        let plane = IMAGE_SIZE * IMAGE_SIZE;
        for (ch, &val) in color.iter().enumerate() {
            self.buf[ch * plane + row * IMAGE_SIZE + col] = val;
        }
    }

    fn triangle(&mut self, a: (f64, f64), b: (f64, f64), c: (f64, f64), color: [u8; 3]) {
        let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area.abs() < 1e-12 {
            return;
        }
        let lo_u = a.0.min(b.0).min(c.0).floor().max(0.0) as usize;
        let hi_u = (a.0.max(b.0).max(c.0).ceil().max(0.0) as usize).min(IMAGE_SIZE);
        let lo_v = a.1.min(b.1).min(c.1).floor().max(0.0) as usize;
        let hi_v = (a.1.max(b.1).max(c.1).ceil().max(0.0) as usize).min(IMAGE_SIZE);
        let edge = |p: (f64, f64), q: (f64, f64), x: f64, y: f64| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
        for row in lo_v..hi_v {
            let y = row as f64 + 0.5;
            for col in lo_u..hi_u {
                let x = col as f64 + 0.5;
                let (e0, e1, e2) = (edge(a, b, x, y), edge(b, c, x, y), edge(c, a, x, y));
                let inside = if area > 0.0 {
                    e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0
                } else {
                    e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0
                };
                if inside {
                    self.put(row, col, color);
                }
            }
        }
    }

    fn disc(&mut self, center: (f64, f64), radius: f64, color: [u8; 3]) {
        let lo_u = (center.0 - radius).floor().max(0.0) as usize;
        let hi_u = ((center.0 + radius).ceil().max(0.0) as usize).min(IMAGE_SIZE);
        let lo_v = (center.1 - radius).floor().max(0.0) as usize;
        let hi_v = ((center.1 + radius).ceil().max(0.0) as usize).min(IMAGE_SIZE);
        for row in lo_v..hi_v {
            for col in lo_u..hi_u {
                let dx = col as f64 + 0.5 - center.0;
                let dy = row as f64 + 0.5 - center.1;
                if dx * dx + dy * dy <= radius * radius {
                    self.put(row, col, color);
                }
            }
        }
    }
}

/// Renders the cloth (if any) and the grippers as discs of `gripper_radius`
/// metres. Pure: identical inputs give identical bytes.
pub fn render(cloth: Option<&ClothState>, grippers: &[Vec3], camera: &Camera, palette: &Palette, gripper_radius: f64) -> Vec<u8> {
    let mut canvas = Canvas::new(palette.background);
    if let Some(st) = cloth {
        let px: Vec<(f64, f64)> = st.positions.iter().map(|&p| camera.to_pixel(p)).collect();
        for r in 0..st.rows.saturating_sub(1) {
            for c in 0..st.cols.saturating_sub(1) {
                let i00 = st.index(c, r);
                let i10 = st.index(c + 1, r);
                let i01 = st.index(c, r + 1);
                let i11 = st.index(c + 1, r + 1);
                canvas.triangle(px[i00], px[i10], px[i11], palette.cloth);
                canvas.triangle(px[i00], px[i11], px[i01], palette.cloth);
            }
        }
    }
    let radius_px = gripper_radius * IMAGE_SIZE as f64 / camera.extent;
    for &g in grippers {
        canvas.disc(camera.to_pixel(g), radius_px, palette.gripper);
    }
    canvas.buf
}

/// Binary PPM (P6) encoding of a channel-major image.
pub fn to_ppm(rgb: &[u8]) -> Vec<u8> {
    let plane = IMAGE_SIZE * IMAGE_SIZE;
    let mut out = format!("P6\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n").into_bytes();
    for i in 0..plane {
        for ch in 0..3 {
            out.push(rgb[ch * plane + i]);
        }
    }
    out
}
