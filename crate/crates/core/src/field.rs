//! Digital phantoms, RIRO spatial distributions and field statistics.
//!
//! All 2D grids follow one array convention: axis 0 is the phase-encode
//! (row) direction, axis 1 the readout (column) direction, so arrays have
//! shape `(ny, nx)`. Pixel `(r, c)` is centered at
//! `((r - ny/2) * dy, (c - nx/2) * dx)` in millimetres, which puts the
//! grid center on pixel `(ny/2, nx/2)`.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Real scalar map on a regular 2D grid. The unit of `values` is carried
/// by context: Hz for field offsets, Hz/mm for gradients, dimensionless
/// for spin density.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    values: Array2<f64>,
    spacing_mm: [f64; 2],
}

impl ScalarField2D {
    /// Wraps an array of per-pixel values; rejects empty grids,
    /// non-positive spacings and non-finite values.
    pub fn new(values: Array2<f64>, spacing_mm: [f64; 2]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("field grid must be non-empty".into()));
        }
        if spacing_mm.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pixel spacing must be positive and finite, got {spacing_mm:?}"
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("scalar field".into()));
        }
        Ok(Self { values, spacing_mm })
    }

    /// Builds a field by evaluating `f(row, col)` on every pixel.
    pub fn from_fn<F>(ny: usize, nx: usize, spacing_mm: [f64; 2], mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> f64,
    {
        Self::new(Array2::from_shape_fn((ny, nx), |(r, c)| f(r, c)), spacing_mm)
    }

    /// Constant field.
    pub fn uniform(ny: usize, nx: usize, spacing_mm: [f64; 2], value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((ny, nx), value), spacing_mm)
    }

    pub fn ny(&self) -> usize {
        self.values.nrows()
    }

    pub fn nx(&self) -> usize {
        self.values.ncols()
    }

    /// `(ny, nx)`, i.e. (phase-encode, readout) extent.
    pub fn shape(&self) -> (usize, usize) {
        (self.ny(), self.nx())
    }

    /// Pixel spacing `[dy, dx]` in millimetres.
    pub fn spacing_mm(&self) -> [f64; 2] {
        self.spacing_mm
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }
}

/// Boolean region on the same grid convention as [`ScalarField2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mask2D {
    values: Array2<bool>,
}

impl Mask2D {
    pub fn new(values: Array2<bool>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("mask grid must be non-empty".into()));
        }
        Ok(Self { values })
    }

    pub fn from_fn<F>(ny: usize, nx: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> bool,
    {
        Self::new(Array2::from_shape_fn((ny, nx), |(r, c)| f(r, c)))
    }

    pub fn ny(&self) -> usize {
        self.values.nrows()
    }

    pub fn nx(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny(), self.nx())
    }

    pub fn values(&self) -> &Array2<bool> {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[(row, col)]
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    /// True if every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask2D) -> bool {
        self.shape() == other.shape()
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .all(|(&a, &b)| !a || b)
    }

    /// True if no pixel is set in both masks.
    pub fn is_disjoint_from(&self, other: &Mask2D) -> bool {
        self.shape() == other.shape()
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .all(|(&a, &b)| !(a && b))
    }

    pub fn union(&self, other: &Mask2D) -> Result<Mask2D> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "mask union: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Mask2D::new(Array2::from_shape_fn(self.values.raw_dim(), |idx| {
            self.values[idx] || other.values[idx]
        }))
    }

    /// Centroid of the set pixels in (row, col) index units.
    pub fn centroid(&self) -> Result<(f64, f64)> {
        let n = self.count();
        if n == 0 {
            return Err(Error::EmptyMask("centroid of empty mask".into()));
        }
        let (mut sr, mut sc) = (0.0, 0.0);
        for ((r, c), &set) in self.values.indexed_iter() {
            if set {
                sr += r as f64;
                sc += c as f64;
            }
        }
        Ok((sr / n as f64, sc / n as f64))
    }
}

/// Time-varying field model: a static offset map plus a respiration-driven
/// sinusoidal component with per-pixel amplitude.
///
/// The offset at pixel `(r, c)` and scan time `t` is
/// `static_hz + riro_max_hz * sin(omega_resp * t)` with
/// `omega_resp = 2*pi / resp_period_s`.
#[derive(Debug, Clone)]
pub struct FieldModel {
    pub static_hz: ScalarField2D,
    pub riro_max_hz: ScalarField2D,
    pub resp_period_s: f64,
}

impl FieldModel {
    pub fn new(static_hz: ScalarField2D, riro_max_hz: ScalarField2D, resp_period_s: f64) -> Result<Self> {
        if static_hz.shape() != riro_max_hz.shape() {
            return Err(Error::ShapeMismatch(format!(
                "static map {:?} vs RIRO map {:?}",
                static_hz.shape(),
                riro_max_hz.shape()
            )));
        }
        if !(resp_period_s > 0.0) || !resp_period_s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "respiration period must be positive, got {resp_period_s}"
            )));
        }
        Ok(Self { static_hz, riro_max_hz, resp_period_s })
    }

    /// Angular respiration frequency in rad/s.
    pub fn omega_resp(&self) -> f64 {
        std::f64::consts::TAU / self.resp_period_s
    }
}

/// Millimetre coordinate of pixel index `i` along an axis of `n` pixels,
/// with the origin on pixel `n/2`.
fn pixel_coord_mm(i: usize, n: usize, spacing_mm: f64) -> f64 {
    (i as f64 - (n / 2) as f64) * spacing_mm
}

/// Uniform disk phantom: density inside a centered circle, zero outside.
/// Returns the density map and the disk mask. A pixel belongs to the disk
/// when its center lies within `radius_mm` of the grid center.
pub fn make_cylinder_phantom(
    nx: usize,
    ny: usize,
    spacing_mm: f64,
    radius_mm: f64,
    density: f64,
) -> Result<(ScalarField2D, Mask2D)> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
    }
    if !(spacing_mm > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing_mm}")));
    }
    let radius_px = radius_mm / spacing_mm;
    if radius_px < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "cylinder radius must span at least 2 pixels, got {radius_px:.3}"
        )));
    }
    let half_fov_mm = 0.5 * spacing_mm * nx.min(ny) as f64;
    if radius_mm > half_fov_mm {
        return Err(Error::InvalidParameter(format!(
            "cylinder radius {radius_mm} mm exceeds half the field of view ({half_fov_mm} mm)"
        )));
    }
    let inside = |r: usize, c: usize| {
        let y = pixel_coord_mm(r, ny, spacing_mm);
        let x = pixel_coord_mm(c, nx, spacing_mm);
        (x * x + y * y).sqrt() <= radius_mm
    };
    let mask = Mask2D::from_fn(ny, nx, inside)?;
    let rho = ScalarField2D::from_fn(ny, nx, [spacing_mm; 2], |r, c| {
        if inside(r, c) {
            density
        } else {
            0.0
        }
    })?;
    Ok((rho, mask))
}

/// Full axis extents of the body-phantom ellipse as fractions of the field
/// of view (readout and phase-encode respectively).
pub const BODY_ELLIPSE_FOV_FRACTIONS: (f64, f64) = (0.7, 0.5);

/// Diameter of the cord ROI disk in the body phantom.
pub const CORD_DIAMETER_MM: f64 = 10.0;

/// Synthetic neck-like phantom: a uniform ellipse of density 1 (full axes
/// 0.7 x FOV along readout and 0.5 x FOV along phase-encode) with a small
/// centered "cord" disk ROI of 10 mm diameter. Returns the density map,
/// the object mask and the cord mask.
pub fn make_body_cord_phantom(
    nx: usize,
    ny: usize,
    spacing_mm: f64,
) -> Result<(ScalarField2D, Mask2D, Mask2D)> {
    if nx < 64 || ny < 64 {
        return Err(Error::InvalidParameter(format!(
            "body phantom needs at least 64 pixels per axis, got {nx} x {ny}"
        )));
    }
    if !(spacing_mm > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing_mm}")));
    }
    let semi_x_mm = 0.5 * BODY_ELLIPSE_FOV_FRACTIONS.0 * nx as f64 * spacing_mm;
    let semi_y_mm = 0.5 * BODY_ELLIPSE_FOV_FRACTIONS.1 * ny as f64 * spacing_mm;
    let in_ellipse = |r: usize, c: usize| {
        let y = pixel_coord_mm(r, ny, spacing_mm) / semi_y_mm;
        let x = pixel_coord_mm(c, nx, spacing_mm) / semi_x_mm;
        x * x + y * y <= 1.0
    };
    let cord_radius_mm = 0.5 * CORD_DIAMETER_MM;
    let in_cord = |r: usize, c: usize| {
        let y = pixel_coord_mm(r, ny, spacing_mm);
        let x = pixel_coord_mm(c, nx, spacing_mm);
        (x * x + y * y).sqrt() <= cord_radius_mm
    };
    let object = Mask2D::from_fn(ny, nx, in_ellipse)?;
    let cord = Mask2D::from_fn(ny, nx, in_cord)?;
    if cord.count() == 0 || !cord.is_subset_of(&object) {
        return Err(Error::InvalidParameter(
            "cord ROI is not fully contained in the object ellipse".into(),
        ));
    }
    let rho = ScalarField2D::from_fn(ny, nx, [spacing_mm; 2], |r, c| {
        if in_ellipse(r, c) {
            1.0
        } else {
            0.0
        }
    })?;
    Ok((rho, object, cord))
}

/// Tolerance on the calibrated in-plane standard deviation, in Hz.
pub const RIRO_STD_TOLERANCE_HZ: f64 = 0.01;

const RIRO_BISECTION_ITERS: usize = 60;

fn radial_riro_with_sigma(
    mask: &Mask2D,
    spacing_mm: f64,
    peak_hz: f64,
    centroid: (f64, f64),
    sigma_mm: f64,
) -> Array2<f64> {
    let (cy, cx) = centroid;
    Array2::from_shape_fn((mask.ny(), mask.nx()), |(r, c)| {
        let dy = (r as f64 - cy) * spacing_mm;
        let dx = (c as f64 - cx) * spacing_mm;
        let d2 = dx * dx + dy * dy;
        peak_hz * (-d2 / (sigma_mm * sigma_mm)).exp()
    })
}

fn masked_population_std(values: &Array2<f64>, mask: &Mask2D) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (v, &set) in values.iter().zip(mask.values().iter()) {
        if set {
            sum += v;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    for (v, &set) in values.iter().zip(mask.values().iter()) {
        if set {
            let d = v - mean;
            ss += d * d;
        }
    }
    (ss / n as f64).sqrt()
}

/// Radially decaying RIRO amplitude map, calibrated to an in-plane target.
///
/// The profile is a Gaussian `peak_hz * exp(-(d / sigma)^2)` of the
/// distance `d` from the object centroid, evaluated on the whole grid.
/// `sigma` is found by bisection so that the population standard deviation
/// over `object_mask` matches `target_std_hz` within 0.01 Hz. The standard
/// deviation decreases monotonically with `sigma` on the search bracket
/// `[0.1, 100] * min(FOV)`; targets outside the achievable range are
/// rejected. A target of exactly 0 returns the uniform `sigma -> inf`
/// limit.
pub fn make_radial_riro(
    object_mask: &Mask2D,
    spacing_mm: f64,
    peak_hz: f64,
    target_std_hz: f64,
) -> Result<ScalarField2D> {
    if !(peak_hz >= 0.0) {
        return Err(Error::InvalidParameter(format!("peak must be >= 0, got {peak_hz}")));
    }
    if !(target_std_hz >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target std must be >= 0, got {target_std_hz}"
        )));
    }
    if object_mask.count() == 0 {
        return Err(Error::EmptyMask("RIRO calibration mask".into()));
    }
    let (ny, nx) = object_mask.shape();
    if target_std_hz == 0.0 || peak_hz == 0.0 {
        return ScalarField2D::uniform(ny, nx, [spacing_mm; 2], peak_hz);
    }
    let centroid = object_mask.centroid()?;
    let fov_min_mm = spacing_mm * nx.min(ny) as f64;
    let mut sigma_lo = 0.1 * fov_min_mm;
    let mut sigma_hi = 100.0 * fov_min_mm;
    let std_at = |sigma: f64| {
        masked_population_std(
            &radial_riro_with_sigma(object_mask, spacing_mm, peak_hz, centroid, sigma),
            object_mask,
        )
    };
    let max_achievable = std_at(sigma_lo);
    let min_achievable = std_at(sigma_hi);
    if target_std_hz > max_achievable || target_std_hz < min_achievable {
        return Err(Error::Calibration {
            target_hz: target_std_hz,
            min_achievable_hz: min_achievable,
            max_achievable_hz: max_achievable,
        });
    }
    let mut sigma = 0.5 * (sigma_lo + sigma_hi);
    for _ in 0..RIRO_BISECTION_ITERS {
        sigma = 0.5 * (sigma_lo + sigma_hi);
        if std_at(sigma) > target_std_hz {
            sigma_lo = sigma;
        } else {
            sigma_hi = sigma;
        }
    }
    let values = radial_riro_with_sigma(object_mask, spacing_mm, peak_hz, centroid, sigma);
    let achieved = masked_population_std(&values, object_mask);
    if (achieved - target_std_hz).abs() > RIRO_STD_TOLERANCE_HZ {
        return Err(Error::Calibration {
            target_hz: target_std_hz,
            min_achievable_hz: min_achievable,
            max_achievable_hz: max_achievable,
        });
    }
    ScalarField2D::new(values, [spacing_mm; 2])
}

/// Population standard deviation of the field over the mask.
pub fn inplane_std(field: &ScalarField2D, mask: &Mask2D) -> Result<f64> {
    check_same_shape(field, mask)?;
    if mask.count() == 0 {
        return Err(Error::EmptyMask("in-plane std".into()));
    }
    Ok(masked_population_std(field.values(), mask))
}

/// Arithmetic mean of the field over the mask.
pub fn mask_mean(field: &ScalarField2D, mask: &Mask2D) -> Result<f64> {
    check_same_shape(field, mask)?;
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask("mask mean".into()));
    }
    let mut sum = 0.0;
    for (v, &set) in field.values().iter().zip(mask.values().iter()) {
        if set {
            sum += v;
        }
    }
    Ok(sum / n as f64)
}

fn check_same_shape(field: &ScalarField2D, mask: &Mask2D) -> Result<()> {
    if field.shape() != mask.shape() {
        return Err(Error::ShapeMismatch(format!(
            "field {:?} vs mask {:?}",
            field.shape(),
            mask.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder_phantom_reference_geometry() {
        let (rho, mask) = make_cylinder_phantom(128, 56, 2.2, 10.0, 1.0).unwrap();
        assert_eq!(rho.shape(), (56, 128));
        // radius ~4.5 px: the disk must fit well inside and stay centered
        assert!(mask.get(28, 64), "grid center inside the disk");
        assert!(!mask.get(28, 64 + 5), "5 px off center is outside");
        assert!(mask.count() > 0);
        // density inside, zero outside
        for ((r, c), &set) in mask.values().indexed_iter() {
            assert_eq!(rho.get(r, c), if set { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn cylinder_mask_matches_exhaustive_pixel_test() {
        let (_, mask) = make_cylinder_phantom(16, 16, 1.0, 4.0, 1.0).unwrap();
        let mut expected = 0usize;
        for r in 0..16 {
            for c in 0..16 {
                let y = (r as f64 - 8.0) * 1.0;
                let x = (c as f64 - 8.0) * 1.0;
                if (x * x + y * y).sqrt() <= 4.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(mask.count(), expected);
    }

    #[test]
    fn cylinder_zero_density_keeps_mask() {
        let (rho, mask) = make_cylinder_phantom(16, 16, 1.0, 4.0, 0.0).unwrap();
        assert!(rho.values().iter().all(|&v| v == 0.0));
        assert!(mask.count() > 0);
    }

    #[test]
    fn cylinder_radius_too_large_rejected() {
        let err = make_cylinder_phantom(16, 16, 1.0, 9.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn cylinder_radius_below_two_pixels_rejected() {
        assert!(make_cylinder_phantom(128, 56, 2.2, 4.0, 1.0).is_err());
    }

    #[test]
    fn body_phantom_geometry() {
        let (rho, object, cord) = make_body_cord_phantom(256, 256, 0.9).unwrap();
        assert!(object.count() > cord.count());
        assert!(cord.is_subset_of(&object));
        assert!(cord.count() > 0);
        assert!(rho.values().iter().all(|&v| v == 0.0 || v == 1.0));
        // cord and object complement never intersect
        for ((r, c), &in_cord) in cord.values().indexed_iter() {
            if in_cord {
                assert!(object.get(r, c));
            }
        }
    }

    #[test]
    fn body_phantom_mask_matches_exhaustive_ellipse_test() {
        let (_, object, _) = make_body_cord_phantom(256, 256, 0.9).unwrap();
        let (a, b) = (0.35 * 256.0 * 0.9, 0.25 * 256.0 * 0.9);
        let mut expected = 0usize;
        for r in 0..256usize {
            for c in 0..256usize {
                let y = (r as f64 - 128.0) * 0.9 / b;
                let x = (c as f64 - 128.0) * 0.9 / a;
                if x * x + y * y <= 1.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(object.count(), expected);
    }

    #[test]
    fn body_phantom_small_grid_rejected() {
        assert!(make_body_cord_phantom(32, 256, 0.9).is_err());
    }

    #[test]
    fn radial_riro_hits_phantom_target() {
        let (_, mask) = make_cylinder_phantom(128, 56, 2.2, 10.0, 1.0).unwrap();
        let riro = make_radial_riro(&mask, 2.2, 12.0, 1.2).unwrap();
        let std = inplane_std(&riro, &mask).unwrap();
        assert!((std - 1.2).abs() <= RIRO_STD_TOLERANCE_HZ, "std = {std}");
        // centroid of the symmetric disk is the center pixel; peak sits there
        assert_eq!(riro.get(28, 64), 12.0);
    }

    #[test]
    fn radial_riro_hits_body_target() {
        let (_, object, _) = make_body_cord_phantom(256, 256, 0.9).unwrap();
        let riro = make_radial_riro(&object, 0.9, 12.0, 2.1).unwrap();
        let std = inplane_std(&riro, &object).unwrap();
        assert!((std - 2.1).abs() <= RIRO_STD_TOLERANCE_HZ, "std = {std}");
    }

    #[test]
    fn radial_riro_zero_target_is_uniform() {
        let (_, mask) = make_cylinder_phantom(32, 32, 1.0, 5.0, 1.0).unwrap();
        let riro = make_radial_riro(&mask, 1.0, 12.0, 0.0).unwrap();
        assert!(riro.values().iter().all(|&v| v == 12.0));
        assert_eq!(inplane_std(&riro, &mask).unwrap(), 0.0);
    }

    #[test]
    fn radial_riro_unreachable_target_fails() {
        // a 10 mm disk cannot reach a 5 Hz spread with a 12 Hz peak on the
        // allowed sigma bracket
        let (_, mask) = make_cylinder_phantom(128, 56, 2.2, 10.0, 1.0).unwrap();
        let err = make_radial_riro(&mask, 2.2, 12.0, 5.0).unwrap_err();
        assert!(matches!(err, Error::Calibration { .. }), "{err}");
    }

    #[test]
    fn inplane_std_basics() {
        let field = ScalarField2D::uniform(4, 4, [1.0, 1.0], 3.5).unwrap();
        let mask = Mask2D::from_fn(4, 4, |_, _| true).unwrap();
        assert_eq!(inplane_std(&field, &mask).unwrap(), 0.0);

        // two-pixel mask with values a and b: std = |a - b| / 2
        let field = ScalarField2D::from_fn(1, 4, [1.0, 1.0], |_, c| c as f64).unwrap();
        let mask = Mask2D::from_fn(1, 4, |_, c| c == 1 || c == 3).unwrap();
        assert_eq!(inplane_std(&field, &mask).unwrap(), 1.0);

        let empty = Mask2D::from_fn(1, 4, |_, _| false).unwrap();
        assert!(inplane_std(&field, &empty).is_err());
    }

    #[test]
    fn non_finite_field_rejected() {
        let mut values = Array2::zeros((2, 2));
        values[(0, 0)] = f64::NAN;
        assert!(matches!(
            ScalarField2D::new(values, [1.0, 1.0]),
            Err(Error::NonFinite(_))
        ));
    }
}
