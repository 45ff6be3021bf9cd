use serde::Serialize;

use super::VisualMap;
use crate::env::RenderGeometry;
use crate::error::{config, contract, Result};
use crate::frame::{Frame, Rect};

/// Geometry of the composed observation: the environment frame occupies
/// `frame_region`, glyph slots live inside `strip`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HolderLayout {
    pub width: usize,
    pub height: usize,
    pub frame_region: Rect,
    pub strip: Rect,
}

impl HolderLayout {
    pub fn from_geometry(geo: &RenderGeometry) -> Self {
        Self {
            width: geo.frame_size,
            height: geo.frame_size,
            frame_region: geo.environment_region(),
            strip: geo.strip(),
        }
    }
}

impl Default for HolderLayout {
    fn default() -> Self {
        Self::from_geometry(&RenderGeometry::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GlyphRegion {
    pub agent: usize,
    pub rect: Rect,
}

/// `S_t` together with its decomposition into the environment region and
/// one region per painted glyph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComposedState {
    pub image: Frame,
    pub frame_region: Rect,
    pub glyph_regions: Vec<GlyphRegion>,
}

impl ComposedState {
    /// The environment part of the observation.
    pub fn extract_frame(&self) -> Result<Frame> {
        self.image.crop(self.frame_region)
    }
}

/// Copies `frame` and paints every non-empty glyph of `map` into its slot.
pub fn compose_holder(
    frame: &Frame,
    map: &VisualMap,
    holder: &HolderLayout,
) -> Result<ComposedState> {
    if (frame.width(), frame.height()) != (holder.width, holder.height) {
        return Err(contract(format!(
            "frame is {}x{}, holder expects {}x{}",
            frame.width(),
            frame.height(),
            holder.width,
            holder.height
        )));
    }
    let mut image = frame.clone();
    let mut glyph_regions = Vec::new();
    for entry in &map.entries {
        let Some(glyph) = &entry.glyph else { continue };
        let slot = glyph.slot;
        if !holder.strip.contains_rect(&slot) {
            return Err(config(format!(
                "glyph slot {slot:?} of agent {} overflows the holder strip {:?}",
                entry.agent, holder.strip
            )));
        }
        let st = &glyph.stencil;
        if (st.width, st.height) != (slot.width, slot.height) {
            return Err(config(format!(
                "{}x{} stencil does not match {}x{} slot",
                st.width, st.height, slot.width, slot.height
            )));
        }
        for (k, (x, y)) in slot.pixels().enumerate() {
            image.set(x, y, st.pixels[k]);
        }
        glyph_regions.push(GlyphRegion {
            agent: entry.agent,
            rect: slot,
        });
    }
    Ok(ComposedState {
        image,
        frame_region: holder.frame_region,
        glyph_regions,
    })
}

const MAX_OFFENDING: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PremiseCheck {
    pub premise: &'static str,
    pub passed: bool,
    pub detail: String,
    /// `(x, y)` pixels that violate the premise, at most 32.
    pub offending: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PremiseReport {
    pub checks: Vec<PremiseCheck>,
}

impl PremiseReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, premise: &str) -> Option<&PremiseCheck> {
        self.checks.iter().find(|c| c.premise == premise)
    }
}

/// Checks the three premises on the lit (non-zero) pixels of `S_t`:
///
/// * P1: the frame region holds at least one lit pixel and some lit pixel
///   lies outside it.
/// * P2: every glyph region is inside the image, holds a lit pixel and does
///   not hold all of them.
/// * P3: every lit pixel lies in exactly one region of the decomposition.
pub fn verify_premises(composed: &ComposedState) -> PremiseReport {
    let image = &composed.image;
    let bounds = image.bounds();
    let support: Vec<(usize, usize)> = bounds
        .pixels()
        .filter(|&(x, y)| image.get(x, y) != 0)
        .collect();
    let lit_in = |r: &Rect| support.iter().filter(|&&(x, y)| r.contains(x, y)).count();

    let fr = composed.frame_region;
    let in_frame = if bounds.contains_rect(&fr) { lit_in(&fr) } else { 0 };
    let p1 = PremiseCheck {
        premise: "P1",
        passed: bounds.contains_rect(&fr) && in_frame > 0 && in_frame < support.len(),
        detail: format!(
            "{in_frame} of {} lit pixels in the frame region {fr:?}",
            support.len()
        ),
        offending: Vec::new(),
    };

    let mut p2_fail = Vec::new();
    let mut p2_offending = Vec::new();
    for g in &composed.glyph_regions {
        let inside = bounds.contains_rect(&g.rect) && !g.rect.is_empty();
        let n = if inside { lit_in(&g.rect) } else { 0 };
        if !inside || n == 0 || n == support.len() {
            p2_fail.push(format!("agent {} region {:?} holds {n} lit pixels", g.agent, g.rect));
            if p2_offending.len() < MAX_OFFENDING {
                p2_offending.push((g.rect.x, g.rect.y));
            }
        }
    }
    let p2 = PremiseCheck {
        premise: "P2",
        passed: p2_fail.is_empty(),
        detail: if p2_fail.is_empty() {
            format!("{} glyph regions", composed.glyph_regions.len())
        } else {
            p2_fail.join("; ")
        },
        offending: p2_offending,
    };

    let regions: Vec<Rect> = std::iter::once(fr)
        .chain(composed.glyph_regions.iter().map(|g| g.rect))
        .collect();
    let (mut unowned, mut shared) = (0usize, 0usize);
    let mut p3_offending = Vec::new();
    for &(x, y) in &support {
        let owners = regions.iter().filter(|r| r.contains(x, y)).count();
        if owners != 1 {
            if owners == 0 {
                unowned += 1;
            } else {
                shared += 1;
            }
            if p3_offending.len() < MAX_OFFENDING {
                p3_offending.push((x, y));
            }
        }
    }
    let p3 = PremiseCheck {
        premise: "P3",
        passed: unowned == 0 && shared == 0,
        detail: format!("{shared} lit pixels in several regions, {unowned} in none"),
        offending: p3_offending,
    };

    PremiseReport {
        checks: vec![p1, p2, p3],
    }
}
