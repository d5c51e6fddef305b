use gmf_core::data::{ClassLabel, PixelGrid};

/// Linear intensity ramp of `size × size` pixels whose direction depends on
/// the class (one of six directions 60° apart); `variant` shifts contrast
/// and phase slightly so images within a class differ.
pub fn gradient_image(class: usize, variant: usize, size: usize) -> PixelGrid {
    let angle = (class as f64) * core::f64::consts::PI / 3.0;
    let (s, c) = angle.sin_cos();
    let contrast = 0.75 + 0.05 * (variant % 5) as f64;
    let offset = 4.0 * (variant as f64 - 4.5);
    let half = (size as f64 - 1.0) / 2.0;
    PixelGrid::from_fn_rgb(size, size, |x, y| {
        let t = ((x as f64 - half) * c + (y as f64 - half) * s) / (half * 1.5);
        let v = (127.5 + 127.5 * contrast * t + offset).round().clamp(0.0, 255.0) as u8;
        let tint = (class * 37 % 64) as u8;
        [v, v.saturating_sub(tint), v.saturating_add(tint / 2)]
    })
}

/// Ten images per class, ordered by class.
pub fn overfit_set(size: usize) -> Vec<(PixelGrid, ClassLabel)> {
    (0..6).flat_map(|c| (0..10).map(move |v| (gradient_image(c, v, size), ClassLabel::from_id(c).unwrap()))).collect()
}
