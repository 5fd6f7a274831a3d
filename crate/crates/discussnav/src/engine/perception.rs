//! Per-step vision stage: the scene and object experts are asked about all
//! 12 surrounding directions, one worker thread per direction.

use std::thread;

use crate::env::Sector;
use crate::roster::{
    parse_object_tags, parse_scene_answer, scene_query_for, LandmarkKind, RoleId, SlotMap,
};

use super::records::Exchange;
use super::{CallLog, Discussion, ExpertGroup};

/// What perception learned about one direction.
#[derive(Debug, Clone)]
pub(crate) struct SectorView {
    pub sector: Sector,
    /// Distinct scene answers, one per landmark kind asked about.
    pub lines: Vec<String>,
    pub objects: Vec<String>,
    /// False when every expert call about this direction failed.
    pub available: bool,
}

/// The rendered results of one perception pass.
#[derive(Debug, Clone)]
pub(crate) struct Perception {
    /// Full panorama description, as fed to decision prompts. Starts with
    /// a line naming the current viewpoint.
    pub observations_text: String,
    /// One-line digest of the notable sightings, as fed to the history.
    pub condensed: String,
}

struct SectorReport {
    view: SectorView,
    exchanges: Vec<Exchange>,
}

impl Discussion<'_> {
    /// Looks around the current viewpoint. Never fails: a direction whose
    /// expert calls all fail is reported as unavailable.
    pub(crate) fn perceive(
        &self,
        viewpoint: &str,
        kinds: &[LandmarkKind],
        step: u32,
        log: &mut CallLog,
    ) -> Perception {
        if self.config.ablation.contains(&ExpertGroup::VisionPerception) {
            return self.stored_perception(viewpoint);
        }
        let reports: Vec<SectorReport> = thread::scope(|scope| {
            let handles: Vec<_> = Sector::all()
                .map(|sector| scope.spawn(move || self.perceive_sector(viewpoint, sector, kinds)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sector worker panicked"))
                .collect()
        });
        for report in &reports {
            for exchange in &report.exchanges {
                log.push_exchange(step, exchange);
            }
        }
        let views: Vec<SectorView> = reports.into_iter().map(|r| r.view).collect();
        build_perception(viewpoint, &views)
    }

    fn perceive_sector(&self, viewpoint: &str, sector: Sector, kinds: &[LandmarkKind]) -> SectorReport {
        let key = format!("{viewpoint}/{sector}");
        let mut exchanges = Vec::new();
        let mut lines: Vec<String> = Vec::new();
        let mut failures = 0usize;
        let mut calls = 0usize;
        for &kind in kinds {
            let mut slots = SlotMap::new();
            slots.insert("direction id".into(), sector.to_string());
            slots.insert("observation key".into(), key.clone());
            slots.insert("scene question".into(), scene_query_for(kind, sector));
            calls += 1;
            let (exchange, outcome) =
                self.expert_exchange(RoleId::SceneObservation, &slots, parse_scene_answer);
            exchanges.push(exchange);
            match outcome {
                Ok(line) => {
                    if !lines.contains(&line) {
                        lines.push(line);
                    }
                }
                Err(_) => failures += 1,
            }
        }
        let mut slots = SlotMap::new();
        slots.insert("observation key".into(), key);
        calls += 1;
        let (exchange, outcome) =
            self.expert_exchange(RoleId::ObjectDetection, &slots, parse_object_tags);
        exchanges.push(exchange);
        let objects = match outcome {
            Ok(tags) => tags,
            Err(_) => {
                failures += 1;
                Vec::new()
            }
        };
        SectorReport {
            view: SectorView {
                sector,
                lines,
                objects,
                available: failures < calls,
            },
            exchanges,
        }
    }

    /// Perception with the vision experts disabled: the stored observation
    /// of each direction is used verbatim, without any backend call.
    fn stored_perception(&self, viewpoint: &str) -> Perception {
        let views: Vec<SectorView> = Sector::all()
            .map(|sector| match self.world.observation(viewpoint, sector) {
                Some(obs) => SectorView {
                    sector,
                    lines: if obs.scene_text.is_empty() {
                        Vec::new()
                    } else {
                        vec![obs.scene_text.clone()]
                    },
                    objects: obs.object_tags.clone(),
                    available: true,
                },
                None => SectorView {
                    sector,
                    lines: Vec::new(),
                    objects: Vec::new(),
                    available: true,
                },
            })
            .collect();
        build_perception(viewpoint, &views)
    }
}

const NOTHING_NOTABLE: &str = "Nothing notable.";

fn build_perception(viewpoint: &str, views: &[SectorView]) -> Perception {
    let mut blocks = vec![format!("You are at viewpoint {viewpoint}.")];
    for view in views {
        if !view.available {
            blocks.push(format!("Direction {}: unavailable.", view.sector));
            continue;
        }
        let scene = if view.lines.is_empty() {
            NOTHING_NOTABLE.to_string()
        } else {
            view.lines.join(" ")
        };
        let objects = if view.objects.is_empty() {
            "none".to_string()
        } else {
            view.objects.join(", ")
        };
        blocks.push(format!(
            "Direction {}: {} Objects: {}.",
            view.sector, scene, objects
        ));
    }
    let observations_text = blocks.join("\n");

    let mut parts = Vec::new();
    for view in views {
        for line in &view.lines {
            if line != NOTHING_NOTABLE {
                parts.push(format!("direction {}: {}", view.sector, line));
            }
        }
        if !view.objects.is_empty() {
            parts.push(format!(
                "direction {} objects: {}",
                view.sector,
                view.objects.join(", ")
            ));
        }
    }
    let condensed = if parts.is_empty() {
        "Nothing notable in any direction.".to_string()
    } else {
        single_line(&parts.join(" | "))
    };
    Perception {
        observations_text,
        condensed,
    }
}

/// Collapses a possibly multi-line text onto one line so that it can live
/// inside a `[Step t] ...` history block.
pub(crate) fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(sector: u8, lines: &[&str], objects: &[&str], available: bool) -> SectorView {
        SectorView {
            sector: Sector::new(sector).unwrap(),
            lines: lines.iter().map(|s| s.to_string()).collect(),
            objects: objects.iter().map(|s| s.to_string()).collect(),
            available,
        }
    }

    #[test]
    fn panorama_names_the_viewpoint_and_every_direction() {
        let views = vec![
            view(0, &["You can see the kitchen."], &["sofa"], true),
            view(1, &[], &[], true),
            view(2, &[], &[], false),
        ];
        let perception = build_perception("vp007", &views);
        let text = &perception.observations_text;
        assert!(text.starts_with("You are at viewpoint vp007.\n"));
        assert!(text.contains("Direction 0: You can see the kitchen. Objects: sofa."));
        assert!(text.contains("Direction 1: Nothing notable. Objects: none."));
        assert!(text.contains("Direction 2: unavailable."));
    }

    #[test]
    fn condensed_digest_holds_only_notable_sightings() {
        let views = vec![
            view(0, &["Nothing notable."], &[], true),
            view(3, &["You can see the hallway."], &["plant", "lamp"], true),
        ];
        let perception = build_perception("vp000", &views);
        assert_eq!(
            perception.condensed,
            "direction 3: You can see the hallway. | direction 3 objects: plant, lamp"
        );
    }

    #[test]
    fn empty_panorama_condenses_to_a_stock_line() {
        let views = vec![view(0, &[], &[], true)];
        assert_eq!(
            build_perception("vp000", &views).condensed,
            "Nothing notable in any direction."
        );
    }

    #[test]
    fn single_line_collapses_whitespace_runs() {
        assert_eq!(single_line("a\nb\r\n  c\t d"), "a b c d");
    }
}
