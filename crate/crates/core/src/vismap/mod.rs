//! Visual communication map.
//!
//! Every agent declares an ordered list of statuses. A mapping assigns each
//! status either a glyph (a small grayscale stencil) or nothing. At every
//! step the current statuses are turned into a [`VisualMap`] and combined
//! with the environment frame, either by painting the glyphs into a reserved
//! strip of the frame ([`compose_holder`]) or by encoding frame and glyphs
//! separately and concatenating the features ([`compose_features`]).
//!
//! Statuses that other agents' statuses already determine can be declared as
//! dependencies; [`condense`] maps them to the empty glyph so the map only
//! carries what the agents cannot infer.

mod features;
mod holder;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::intensity;
use crate::error::{config, contract, Result};
use crate::frame::Rect;

pub use features::{compose_features, feature_segments, FeatureEncoder};
pub use holder::{
    compose_holder, verify_premises, ComposedState, GlyphRegion, HolderLayout, PremiseCheck,
    PremiseReport,
};

/// Glyph intensities, chosen to differ from every environment intensity.
pub const BOTTLE_GLYPH_INTENSITY: u8 = 224;
pub const QUESTION_GLYPH_INTENSITY: u8 = 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentStatuses {
    pub name: String,
    pub statuses: Vec<String>,
    /// Glyph name per status; `null` maps the status to nothing.
    pub glyphs: Vec<Option<String>>,
}

/// Declares that an agent's statuses can be inferred from other agents'
/// statuses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dependency {
    pub agent: usize,
    /// Restricts the declaration to these statuses; all statuses when absent.
    #[serde(default)]
    pub statuses: Option<Vec<String>>,
    pub derived_from: Vec<usize>,
}

/// Placement of glyph slots: slot `k` is the rectangle
/// `(x + k*(width+gap), y, width, height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotGeometry {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub gap: usize,
}

impl Default for SlotGeometry {
    fn default() -> Self {
        Self {
            x: 2,
            y: 0,
            width: 8,
            height: 4,
            gap: 2,
        }
    }
}

impl SlotGeometry {
    pub fn slot(&self, k: usize) -> Rect {
        Rect::new(
            self.x + k * (self.width + self.gap),
            self.y,
            self.width,
            self.height,
        )
    }
}

/// A stencil drawn with `#` for lit pixels and `.` for blank ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilSpec {
    pub rows: Vec<String>,
    pub intensity: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Stencil {
    pub width: usize,
    pub height: usize,
    /// Row-major pixel values; blank pixels are 0.
    pub pixels: Vec<u8>,
}

impl Stencil {
    fn from_spec(name: &str, spec: &StencilSpec) -> Result<Stencil> {
        let height = spec.rows.len();
        let width = spec.rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 {
            return Err(config(format!("stencil {name:?} is empty")));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for row in &spec.rows {
            if row.chars().count() != width {
                return Err(config(format!("stencil {name:?} has ragged rows")));
            }
            for ch in row.chars() {
                pixels.push(match ch {
                    '#' => spec.intensity,
                    '.' => 0,
                    other => {
                        return Err(config(format!(
                            "stencil {name:?}: unexpected character {other:?}"
                        )))
                    }
                });
            }
        }
        Ok(Stencil {
            width,
            height,
            pixels,
        })
    }

    pub fn lit(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }
}

fn builtin_stencils() -> BTreeMap<String, StencilSpec> {
    let spec = |rows: [&str; 4], intensity| StencilSpec {
        rows: rows.iter().map(|r| r.to_string()).collect(),
        intensity,
    };
    BTreeMap::from([
        (
            "bottle".to_string(),
            spec(
                ["...##...", "..####..", "..####..", "..####.."],
                BOTTLE_GLYPH_INTENSITY,
            ),
        ),
        (
            "question".to_string(),
            spec(
                ["..####..", ".....#..", "...##...", "...#...."],
                QUESTION_GLYPH_INTENSITY,
            ),
        ),
    ])
}

/// Per-agent status sets, their glyph assignment, condensing declarations
/// and slot geometry. This is the `"vismap"` object of the training config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusSchema {
    pub agents: Vec<AgentStatuses>,
    #[serde(default)]
    pub dependencies: Vec<Dependency>,
    #[serde(default)]
    pub slots: SlotGeometry,
    /// Extra stencils; `bottle` and `question` are always available.
    #[serde(default)]
    pub stencils: BTreeMap<String, StencilSpec>,
}

impl StatusSchema {
    /// Milk Factory schema: pick-up robots show a bottle while carrying and
    /// a question mark while broken; the mechanic's status follows from the
    /// pick-up robots' and is condensed away.
    pub fn milk_factory(n_pickup: usize) -> StatusSchema {
        let mut agents: Vec<AgentStatuses> = (0..n_pickup)
            .map(|i| AgentStatuses {
                name: format!("pickup{i}"),
                statuses: vec!["idle".into(), "busy".into(), "failed".into()],
                glyphs: vec![None, Some("bottle".into()), Some("question".into())],
            })
            .collect();
        agents.push(AgentStatuses {
            name: "mechanic".into(),
            statuses: vec!["idle".into(), "busy".into()],
            glyphs: vec![None, Some("question".into())],
        });
        StatusSchema {
            agents,
            dependencies: vec![Dependency {
                agent: n_pickup,
                statuses: None,
                derived_from: (0..n_pickup).collect(),
            }],
            slots: SlotGeometry::default(),
            stencils: BTreeMap::new(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    fn stencil_specs(&self) -> BTreeMap<String, StencilSpec> {
        let mut all = builtin_stencils();
        all.extend(self.stencils.clone());
        all
    }

    pub fn status_index(&self, agent: usize, status: &str) -> Result<usize> {
        let a = self
            .agents
            .get(agent)
            .ok_or_else(|| contract(format!("agent {agent} out of range")))?;
        a.statuses
            .iter()
            .position(|s| s == status)
            .ok_or_else(|| contract(format!("agent {agent} has no status {status:?}")))
    }

    /// Static checks: distinct statuses, one glyph entry per status, known
    /// stencils of slot size, glyph intensities disjoint from the frame's,
    /// and dependencies that reference existing agents without cycles.
    pub fn validate(&self) -> Result<()> {
        if self.slots.width == 0 || self.slots.height == 0 {
            return Err(config("glyph slots must have a positive size"));
        }
        let specs = self.stencil_specs();
        for (name, spec) in &specs {
            if spec.intensity == 0 || intensity::ALL.contains(&spec.intensity) {
                return Err(config(format!(
                    "stencil {name:?} intensity {} collides with the environment palette",
                    spec.intensity
                )));
            }
            let st = Stencil::from_spec(name, spec)?;
            if (st.width, st.height) != (self.slots.width, self.slots.height) {
                return Err(config(format!(
                    "stencil {name:?} is {}x{}, slots are {}x{}",
                    st.width, st.height, self.slots.width, self.slots.height
                )));
            }
            if st.lit() == 0 {
                return Err(config(format!("stencil {name:?} has no lit pixel")));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.glyphs.len() != a.statuses.len() {
                return Err(config(format!(
                    "agent {i}: {} statuses but {} glyph entries",
                    a.statuses.len(),
                    a.glyphs.len()
                )));
            }
            for (l, s) in a.statuses.iter().enumerate() {
                if a.statuses[..l].contains(s) {
                    return Err(config(format!("agent {i}: status {s:?} listed twice")));
                }
            }
            let named: Vec<&String> = a.glyphs.iter().flatten().collect();
            for (l, g) in named.iter().enumerate() {
                if !specs.contains_key(*g) {
                    return Err(config(format!("agent {i}: unknown glyph {g:?}")));
                }
                if named[..l].contains(g) {
                    return Err(config(format!(
                        "agent {i}: glyph {g:?} used for two statuses"
                    )));
                }
            }
        }
        for d in &self.dependencies {
            if d.agent >= self.agents.len() || d.derived_from.iter().any(|&m| m >= self.agents.len()) {
                return Err(config(format!("dependency {d:?} references an unknown agent")));
            }
            if d.derived_from.is_empty() {
                return Err(config(format!("dependency for agent {} has no sources", d.agent)));
            }
            if let Some(st) = &d.statuses {
                for s in st {
                    if !self.agents[d.agent].statuses.contains(s) {
                        return Err(config(format!(
                            "dependency names unknown status {s:?} of agent {}",
                            d.agent
                        )));
                    }
                }
            }
        }
        self.check_acyclic()
    }

    fn check_acyclic(&self) -> Result<()> {
        // 0 = unvisited, 1 = on stack, 2 = done
        fn visit(schema: &StatusSchema, a: usize, state: &mut [u8]) -> Result<()> {
            match state[a] {
                1 => {
                    return Err(config(format!(
                        "cyclic dependency declarations through agent {a}"
                    )))
                }
                2 => return Ok(()),
                _ => {}
            }
            state[a] = 1;
            for d in schema.dependencies.iter().filter(|d| d.agent == a) {
                for &m in &d.derived_from {
                    visit(schema, m, state)?;
                }
            }
            state[a] = 2;
            Ok(())
        }
        let mut state = vec![0u8; self.agents.len()];
        for a in 0..self.agents.len() {
            visit(self, a, &mut state)?;
        }
        Ok(())
    }

    fn is_derived(&self, agent: usize, status: &str) -> bool {
        self.dependencies.iter().any(|d| {
            d.agent == agent
                && d.statuses
                    .as_ref()
                    .is_none_or(|st| st.iter().any(|s| s == status))
        })
    }

    /// Agents that keep at least one glyph once dependencies are applied, in
    /// index order. Slot `k` belongs to the `k`-th of them.
    pub fn mapped_agents(&self) -> Vec<usize> {
        (0..self.agents.len())
            .filter(|&i| {
                let a = &self.agents[i];
                a.statuses
                    .iter()
                    .zip(&a.glyphs)
                    .any(|(s, g)| g.is_some() && !self.is_derived(i, s))
            })
            .collect()
    }

    /// Builds the lookup table used at every step.
    pub fn compile(&self) -> Result<GlyphTable> {
        self.validate()?;
        let specs = self.stencil_specs();
        let mapped = self.mapped_agents();
        let mut next_id = 0;
        let mut table = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter().enumerate() {
            let slot = mapped.iter().position(|&m| m == i).map(|k| self.slots.slot(k));
            let mut row = Vec::with_capacity(a.statuses.len());
            for (s, g) in a.statuses.iter().zip(&a.glyphs) {
                let glyph = match (g, slot) {
                    (Some(name), Some(slot)) if !self.is_derived(i, s) => {
                        let stencil = Stencil::from_spec(name, &specs[name])?;
                        let id = GlyphId(next_id);
                        next_id += 1;
                        Some(IndicatorGlyph {
                            id,
                            name: name.clone(),
                            stencil: Arc::new(stencil),
                            slot,
                        })
                    }
                    _ => None,
                };
                row.push(glyph);
            }
            table.push(row);
        }
        Ok(GlyphTable {
            schema: self.clone(),
            mapped,
            table,
        })
    }
}

/// Applies the dependency declarations: every declared status maps to the
/// empty glyph.
pub fn condense(schema: &StatusSchema) -> Result<StatusSchema> {
    schema.validate()?;
    let mut out = schema.clone();
    for (i, agent) in out.agents.iter_mut().enumerate() {
        for (s, g) in agent.statuses.iter().zip(agent.glyphs.iter_mut()) {
            if schema.is_derived(i, s) {
                *g = None;
            }
        }
    }
    Ok(out)
}

/// Index of a glyph in the schema's glyph set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlyphId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndicatorGlyph {
    pub id: GlyphId,
    pub name: String,
    pub stencil: Arc<Stencil>,
    pub slot: Rect,
}

/// Compiled status -> glyph lookup.
#[derive(Clone, Debug)]
pub struct GlyphTable {
    schema: StatusSchema,
    mapped: Vec<usize>,
    table: Vec<Vec<Option<IndicatorGlyph>>>,
}

impl GlyphTable {
    pub fn schema(&self) -> &StatusSchema {
        &self.schema
    }

    pub fn mapped_agents(&self) -> &[usize] {
        &self.mapped
    }

    pub fn glyph(&self, agent: usize, status_index: usize) -> Result<Option<&IndicatorGlyph>> {
        self.table
            .get(agent)
            .and_then(|row| row.get(status_index))
            .map(Option::as_ref)
            .ok_or_else(|| contract(format!("agent {agent} has no status #{status_index}")))
    }

    pub fn map_named(&self, agent: usize, status: &str) -> Result<Option<&IndicatorGlyph>> {
        let idx = self.schema.status_index(agent, status)?;
        self.glyph(agent, idx)
    }

    /// Builds `M_t` from one status name per agent.
    pub fn visual_map<S: AsRef<str>>(&self, statuses: &[S]) -> Result<VisualMap> {
        if statuses.len() != self.schema.n_agents() {
            return Err(contract(format!(
                "{} statuses for {} agents",
                statuses.len(),
                self.schema.n_agents()
            )));
        }
        let mut entries = Vec::with_capacity(self.mapped.len());
        for &agent in &self.mapped {
            let glyph = self.map_named(agent, statuses[agent].as_ref())?.cloned();
            entries.push(MapEntry { agent, glyph });
        }
        Ok(VisualMap { entries })
    }
}

/// `F_i(C_i)`: the glyph for agent `agent` in status `status`, or `None`
/// when the status is unmapped or condensed away.
pub fn map_status(
    schema: &StatusSchema,
    agent: usize,
    status: &str,
) -> Result<Option<IndicatorGlyph>> {
    Ok(schema.compile()?.map_named(agent, status)?.cloned())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapEntry {
    pub agent: usize,
    pub glyph: Option<IndicatorGlyph>,
}

/// `M_t`: one entry per mapped agent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VisualMap {
    pub entries: Vec<MapEntry>,
}

impl VisualMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn glyphs(&self) -> impl Iterator<Item = &IndicatorGlyph> {
        self.entries.iter().filter_map(|e| e.glyph.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traffic_schema() -> StatusSchema {
        let light = |rows: [&str; 4], intensity| StencilSpec {
            rows: rows.iter().map(|r| r.to_string()).collect(),
            intensity,
        };
        let agents = (0..4)
            .map(|i| AgentStatuses {
                name: format!("car{i}"),
                statuses: vec!["stop".into(), "go".into(), "slow".into()],
                glyphs: vec![Some("red".into()), Some("green".into()), Some("orange".into())],
            })
            .collect();
        StatusSchema {
            agents,
            dependencies: (1..4)
                .map(|a| Dependency {
                    agent: a,
                    statuses: None,
                    derived_from: vec![0],
                })
                .collect(),
            slots: SlotGeometry::default(),
            stencils: BTreeMap::from([
                ("red".into(), light(["##......"; 4], 10)),
                ("green".into(), light(["...##..."; 4], 20)),
                ("orange".into(), light(["......##"; 4], 30)),
            ]),
        }
    }

    #[test]
    fn pickup_statuses_map_to_bottle_and_question_mark() {
        let schema = StatusSchema::milk_factory(1);
        let busy = map_status(&schema, 0, "busy").unwrap().unwrap();
        assert_eq!(busy.name, "bottle");
        assert_eq!(busy.slot, schema.slots.slot(0));
        let failed = map_status(&schema, 0, "failed").unwrap().unwrap();
        assert_eq!(failed.name, "question");
        assert_ne!(busy.stencil, failed.stencil);
        assert!(map_status(&schema, 0, "idle").unwrap().is_none());
    }

    #[test]
    fn mechanic_is_condensed_away() {
        let schema = StatusSchema::milk_factory(2);
        for s in ["idle", "busy"] {
            assert!(map_status(&schema, 2, s).unwrap().is_none());
        }
        assert_eq!(schema.mapped_agents(), vec![0, 1]);
        let condensed = condense(&schema).unwrap();
        assert!(condensed.agents[2].glyphs.iter().all(Option::is_none));
        // pick-up glyphs untouched
        assert_eq!(condensed.agents[0].glyphs, schema.agents[0].glyphs);
    }

    #[test]
    fn condense_without_declarations_is_identity() {
        let mut schema = StatusSchema::milk_factory(1);
        schema.dependencies.clear();
        assert_eq!(condense(&schema).unwrap(), schema);
        // the mechanic now keeps its glyph and gets a slot
        assert_eq!(schema.mapped_agents(), vec![0, 1]);
    }

    #[test]
    fn traffic_schema_keeps_one_shared_signal() {
        let schema = traffic_schema();
        let condensed = condense(&schema).unwrap();
        let table = condensed.compile().unwrap();
        assert_eq!(table.mapped_agents(), &[0]);
        let names: Vec<_> = ["stop", "go", "slow"]
            .iter()
            .map(|s| table.map_named(0, s).unwrap().unwrap().name.clone())
            .collect();
        assert_eq!(names, vec!["red", "green", "orange"]);
        for a in 1..4 {
            assert!(table.map_named(a, "go").unwrap().is_none());
        }
    }

    #[test]
    fn cyclic_dependencies_are_rejected() {
        let mut schema = traffic_schema();
        schema.dependencies.push(Dependency {
            agent: 0,
            statuses: None,
            derived_from: vec![3],
        });
        assert!(matches!(condense(&schema), Err(crate::Error::Config(_))));
    }

    #[test]
    fn unknown_status_is_a_contract_error() {
        let schema = StatusSchema::milk_factory(1);
        assert!(matches!(
            map_status(&schema, 0, "sleeping"),
            Err(crate::Error::Contract(_))
        ));
        assert!(map_status(&schema, 5, "idle").is_err());
    }

    #[test]
    fn validation_catches_bad_schemas() {
        let mut s = StatusSchema::milk_factory(1);
        s.agents[0].statuses[1] = "idle".into();
        assert!(s.validate().is_err());

        let mut s = StatusSchema::milk_factory(1);
        s.agents[0].glyphs[2] = Some("bottle".into());
        assert!(s.validate().is_err(), "one glyph for two statuses");

        let mut s = StatusSchema::milk_factory(1);
        s.stencils.insert(
            "clash".into(),
            StencilSpec {
                rows: vec!["########".into(); 4],
                intensity: intensity::BOTTLE,
            },
        );
        assert!(s.validate().is_err(), "intensity aliases the frame");
    }

    #[test]
    fn visual_map_has_one_entry_per_mapped_agent() {
        let table = StatusSchema::milk_factory(2).compile().unwrap();
        let m = table.visual_map(&["busy", "idle", "busy"]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.glyphs().count(), 1);
        assert!(table.visual_map(&["busy"]).is_err());
    }

    #[test]
    fn glyphs_are_pairwise_distinct_elements() {
        let table = StatusSchema::milk_factory(2).compile().unwrap();
        let mut seen = Vec::new();
        for a in 0..2 {
            for s in ["busy", "failed"] {
                let g = table.map_named(a, s).unwrap().unwrap();
                seen.push((g.id, g.slot, g.stencil.clone()));
            }
        }
        for i in 0..seen.len() {
            for j in 0..i {
                assert_ne!(seen[i].0, seen[j].0);
                // (slot, stencil) pairs differ, so no pixel assignment is shared
                assert!(seen[i].1 != seen[j].1 || seen[i].2 != seen[j].2);
            }
        }
    }
}
