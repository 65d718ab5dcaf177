//! Anti-aliased thick strokes composited with `min` onto a light canvas.

use crate::image::PatternImage;

/// Draws a capsule from `a` to `b` (pixel coordinates, pixel centers at
/// `+0.5`) of total width `width`. Gray is interpolated from `gray_a` to
/// `gray_b` along the stroke. Coverage fades over one pixel at the rim.
pub(crate) fn stroke_segment(img: &mut PatternImage, a: [f64; 2], b: [f64; 2], width: f64, gray_a: f64, gray_b: f64) {
    let hw = width / 2.0;
    let reach = hw + 0.5;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = ((a[0].min(b[0]) - reach).floor() as i64).max(0);
    let x1 = ((a[0].max(b[0]) + reach).ceil() as i64).min(w - 1);
    let y0 = ((a[1].min(b[1]) - reach).floor() as i64).max(0);
    let y1 = ((a[1].max(b[1]) + reach).ceil() as i64).min(h - 1);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    for py in y0..=y1 {
        for px in x0..=x1 {
            let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
            let t = if len2 > 0.0 { (((cx - a[0]) * dx + (cy - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (qx, qy) = (a[0] + dx * t - cx, a[1] + dy * t - cy);
            let dist = (qx * qx + qy * qy).sqrt();
            let coverage = (reach - dist).clamp(0.0, 1.0);
            if coverage <= 0.0 {
                continue;
            }
            let gray = gray_a + (gray_b - gray_a) * t;
            let v = 255.0 - coverage * (255.0 - gray);
            img.darken(px as usize, py as usize, v.round().clamp(0.0, 255.0) as u8);
        }
    }
}

/// Strokes a polyline with constant gray.
pub(crate) fn stroke_polyline(img: &mut PatternImage, points: &[[f64; 2]], width: f64, gray: f64) {
    if let [p] = points {
        stroke_segment(img, *p, *p, width, gray, gray);
    }
    for w in points.windows(2) {
        stroke_segment(img, w[0], w[1], width, gray, gray);
    }
}
