//! Ghost quantification and image-quality metrics.
//!
//! Percent Signal Ghosting (PSG) follows the QA convention of comparing
//! mean ROI signals: `100 * |(mean(above) + mean(below)) / (2 *
//! mean(object))|`, with the ghost ROIs placed above and below the object
//! along the phase-encode axis. The in-vivo variant replaces the two ghost
//! ROIs by one background mask and the object by a cord ROI.

use crate::error::{Error, Result};
use crate::field::{mask_mean, Mask2D, ScalarField2D};

/// Object ROI plus the two ghost ROIs used by [`psg`].
#[derive(Debug, Clone)]
pub struct GhostMetricMasks {
    pub object: Mask2D,
    pub above: Mask2D,
    pub below: Mask2D,
}

impl GhostMetricMasks {
    pub fn new(object: Mask2D, above: Mask2D, below: Mask2D) -> Result<Self> {
        if object.shape() != above.shape() || object.shape() != below.shape() {
            return Err(Error::ShapeMismatch("ghost-metric masks differ in shape".into()));
        }
        for (name, mask) in [("object", &object), ("above", &above), ("below", &below)] {
            if mask.count() == 0 {
                return Err(Error::EmptyMask(format!("ghost-metric {name} ROI")));
            }
        }
        if !object.is_disjoint_from(&above)
            || !object.is_disjoint_from(&below)
            || !above.is_disjoint_from(&below)
        {
            return Err(Error::InvalidParameter(
                "ghost-metric ROIs must be pairwise disjoint".into(),
            ));
        }
        Ok(Self { object, above, below })
    }
}

/// Builds the ghost ROIs from the object mask.
///
/// Both ROIs are rectangles spanning the object's bounding box along the
/// readout axis. Along the phase-encode axis they start `margin_px + 1`
/// pixels beyond the object's bounding box and extend outward with equal
/// thickness on both sides, the lesser of the two available clearances.
/// `pe_axis` selects the phase-encode array axis (0 or 1).
pub fn auto_ghost_masks(
    object_mask: &Mask2D,
    pe_axis: usize,
    margin_px: usize,
) -> Result<GhostMetricMasks> {
    if pe_axis > 1 {
        return Err(Error::InvalidParameter(format!(
            "phase-encode axis must be 0 or 1, got {pe_axis}"
        )));
    }
    if object_mask.count() == 0 {
        return Err(Error::EmptyMask("auto ghost masks object".into()));
    }
    let (ny, nx) = object_mask.shape();
    let (n_pe, n_ro) = if pe_axis == 0 { (ny, nx) } else { (nx, ny) };
    let at = |pe: usize, ro: usize| {
        if pe_axis == 0 {
            object_mask.get(pe, ro)
        } else {
            object_mask.get(ro, pe)
        }
    };
    // bounding box in (phase-encode, readout) coordinates
    let (mut pe_min, mut pe_max, mut ro_min, mut ro_max) = (n_pe, 0usize, n_ro, 0usize);
    for pe in 0..n_pe {
        for ro in 0..n_ro {
            if at(pe, ro) {
                pe_min = pe_min.min(pe);
                pe_max = pe_max.max(pe);
                ro_min = ro_min.min(ro);
                ro_max = ro_max.max(ro);
            }
        }
    }
    let clearance_before = pe_min;
    let clearance_after = n_pe - 1 - pe_max;
    let needed = margin_px + 2;
    if clearance_before < needed || clearance_after < needed {
        return Err(Error::InsufficientClearance(format!(
            "object needs {needed} px beyond its bounding box along the phase-encode axis, \
             has {clearance_before} before and {clearance_after} after"
        )));
    }
    let thickness = (clearance_before - margin_px).min(clearance_after - margin_px);
    let above_range = (pe_min - margin_px - thickness)..(pe_min - margin_px);
    let below_range = (pe_max + margin_px + 1)..(pe_max + margin_px + 1 + thickness);
    let build = |range: std::ops::Range<usize>| {
        Mask2D::from_fn(ny, nx, |r, c| {
            let (pe, ro) = if pe_axis == 0 { (r, c) } else { (c, r) };
            range.contains(&pe) && (ro_min..=ro_max).contains(&ro)
        })
    };
    GhostMetricMasks::new(object_mask.clone(), build(above_range)?, build(below_range)?)
}

/// Percent Signal Ghosting of a magnitude image.
pub fn psg(magnitude: &ScalarField2D, masks: &GhostMetricMasks) -> Result<f64> {
    let object = mask_mean(magnitude, &masks.object)?;
    if object == 0.0 {
        return Err(Error::ZeroDenominator("PSG object mean is zero".into()));
    }
    let above = mask_mean(magnitude, &masks.above)?;
    let below = mask_mean(magnitude, &masks.below)?;
    Ok(100.0 * ((above + below) / (2.0 * object)).abs())
}

/// In-vivo PSG variant: mean background signal over the mean signal in the
/// object ROI.
pub fn psg_background(
    magnitude: &ScalarField2D,
    object_roi: &Mask2D,
    background: &Mask2D,
) -> Result<f64> {
    let object = mask_mean(magnitude, object_roi)?;
    if object == 0.0 {
        return Err(Error::ZeroDenominator("PSG object-ROI mean is zero".into()));
    }
    let bg = mask_mean(magnitude, background)?;
    Ok(100.0 * (bg / object).abs())
}

/// Mean object signal over the population standard deviation of the
/// background.
pub fn snr(magnitude: &ScalarField2D, object: &Mask2D, background: &Mask2D) -> Result<f64> {
    let mean = mask_mean(magnitude, object)?;
    let std = crate::field::inplane_std(magnitude, background)?;
    if std == 0.0 {
        return Err(Error::ZeroDenominator("background standard deviation is zero".into()));
    }
    Ok(mean / std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_cylinder_phantom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn banded_image(object_v: f64, above_v: f64, below_v: f64) -> (ScalarField2D, GhostMetricMasks) {
        let object = Mask2D::from_fn(20, 10, |r, _| (9..=11).contains(&r)).unwrap();
        let masks = auto_ghost_masks(&object, 0, 2).unwrap();
        let img = ScalarField2D::from_fn(20, 10, [1.0; 2], |r, c| {
            if masks.object.get(r, c) {
                object_v
            } else if masks.above.get(r, c) {
                above_v
            } else if masks.below.get(r, c) {
                below_v
            } else {
                0.0
            }
        })
        .unwrap();
        (img, masks)
    }

    #[test]
    fn psg_direct_formula() {
        let (img, masks) = banded_image(100.0, 2.0, 4.0);
        assert_eq!(psg(&img, &masks).unwrap(), 3.0);
    }

    #[test]
    fn psg_zero_background() {
        let (img, masks) = banded_image(100.0, 0.0, 0.0);
        assert_eq!(psg(&img, &masks).unwrap(), 0.0);
    }

    #[test]
    fn psg_scale_invariant() {
        let (img, masks) = banded_image(50.0, 1.5, 2.5);
        let base = psg(&img, &masks).unwrap();
        for k in [0.25, 3.0, 1e6] {
            let scaled = ScalarField2D::from_fn(20, 10, [1.0; 2], |r, c| k * img.get(r, c)).unwrap();
            let s = psg(&scaled, &masks).unwrap();
            assert!((s - base).abs() < 1e-12 * base.max(1.0), "{s} vs {base}");
        }
    }

    #[test]
    fn auto_masks_geometry_on_centered_disk() {
        let (_, disk) = make_cylinder_phantom(128, 56, 2.2, 10.0, 1.0).unwrap();
        let masks = auto_ghost_masks(&disk, 0, 2).unwrap();
        assert!(masks.above.is_disjoint_from(&masks.object));
        assert!(masks.below.is_disjoint_from(&masks.object));
        assert!(masks.above.is_disjoint_from(&masks.below));
        assert_eq!(masks.above.count(), masks.below.count(), "equal thickness");
        // ghost ROIs span exactly the object's readout bounding box
        let cols = |m: &Mask2D| {
            let mut lo = 128;
            let mut hi = 0;
            for ((_, c), &set) in m.values().indexed_iter() {
                if set {
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
            }
            (lo, hi)
        };
        assert_eq!(cols(&masks.above), cols(&masks.object));
        assert_eq!(cols(&masks.below), cols(&masks.object));
    }

    #[test]
    fn auto_masks_need_clearance() {
        // object touching the top edge
        let object = Mask2D::from_fn(20, 10, |r, _| r < 3).unwrap();
        assert!(matches!(
            auto_ghost_masks(&object, 0, 2),
            Err(Error::InsufficientClearance(_))
        ));
    }

    #[test]
    fn auto_masks_other_axis() {
        let object = Mask2D::from_fn(10, 20, |_, c| (9..=11).contains(&c)).unwrap();
        let masks = auto_ghost_masks(&object, 1, 2).unwrap();
        assert!(masks.above.count() > 0);
        assert!(masks.above.is_disjoint_from(&masks.object));
    }

    #[test]
    fn psg_background_variant() {
        let roi = Mask2D::from_fn(8, 8, |r, c| r < 2 && c < 2).unwrap();
        let bg = Mask2D::from_fn(8, 8, |r, _| r >= 6).unwrap();
        let img = ScalarField2D::from_fn(8, 8, [1.0; 2], |r, c| {
            if r < 2 && c < 2 {
                50.0
            } else if r >= 6 {
                5.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert_eq!(psg_background(&img, &roi, &bg).unwrap(), 10.0);
    }

    #[test]
    fn snr_known_values() {
        let object = Mask2D::from_fn(4, 4, |r, _| r < 2).unwrap();
        let bg = Mask2D::from_fn(4, 4, |r, _| r >= 2).unwrap();
        // background alternates 5 and -5: mean 0, std 5
        let img = ScalarField2D::from_fn(4, 4, [1.0; 2], |r, c| {
            if r < 2 {
                100.0
            } else if c % 2 == 0 {
                5.0
            } else {
                -5.0
            }
        })
        .unwrap();
        assert_eq!(snr(&img, &object, &bg).unwrap(), 20.0);
    }

    #[test]
    fn snr_zero_background_std_is_error() {
        let object = Mask2D::from_fn(4, 4, |r, _| r < 2).unwrap();
        let bg = Mask2D::from_fn(4, 4, |r, _| r >= 2).unwrap();
        let img = ScalarField2D::from_fn(4, 4, [1.0; 2], |r, _| if r < 2 { 1.0 } else { 0.0 }).unwrap();
        assert!(matches!(snr(&img, &object, &bg), Err(Error::ZeroDenominator(_))));
    }

    #[test]
    fn snr_matches_known_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sigma = 5.0;
        let object = Mask2D::from_fn(64, 64, |r, _| r < 8).unwrap();
        let bg = Mask2D::from_fn(64, 64, |r, _| r >= 16).unwrap();
        let img = ScalarField2D::from_fn(64, 64, [1.0; 2], |r, _| {
            if r < 8 {
                100.0
            } else {
                // Box-Muller keeps the test free of extra deps
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen();
                sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            }
        })
        .unwrap();
        let s = snr(&img, &object, &bg).unwrap();
        let expected = 100.0 / sigma;
        assert!((s - expected).abs() / expected < 0.1, "snr {s} vs {expected}");
    }
}
