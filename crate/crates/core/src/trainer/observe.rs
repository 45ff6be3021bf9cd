use super::TrainConfig;
use crate::env::EnvState;
use crate::error::Result;
use crate::frame::Frame;
use crate::vismap::{compose_holder, GlyphTable, HolderLayout};

/// Turns an environment frame into the observation the network sees.
#[derive(Clone, Debug)]
pub struct Observer {
    table: Option<GlyphTable>,
    holder: HolderLayout,
}

impl Observer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let table = if cfg.vismap_enabled {
            Some(cfg.resolved_schema().compile()?)
        } else {
            None
        };
        Ok(Self {
            table,
            holder: HolderLayout::default(),
        })
    }

    pub fn vismap_enabled(&self) -> bool {
        self.table.is_some()
    }

    /// `s_t ⊕ M_t` with the map enabled, otherwise the frame with its blank
    /// holder strip.
    pub fn observe(&self, state: &EnvState, frame: &Frame) -> Result<Frame> {
        match &self.table {
            Some(table) => {
                let statuses: Vec<&str> = state.statuses().iter().map(|s| s.name()).collect();
                let map = table.visual_map(&statuses)?;
                Ok(compose_holder(frame, &map, &self.holder)?.image)
            }
            None => Ok(frame.clone()),
        }
    }
}
