//! The three two-person puzzles used as worked examples throughout the
//! tests: a base puzzle, an isomorphic renaming of it, and a logically
//! different puzzle that shares one solution line with the base.

use crate::puzzle::{Arrangement, Clue, End, Entity, Puzzle};

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Ava/Blake in red/pink: "pink not far left", "Blake far right".
pub fn ava_blake() -> Puzzle {
    Puzzle {
        id: "ava-blake".into(),
        names: strings(&["Ava", "Blake"]),
        colors: strings(&["red", "pink"]),
        clues: vec![
            Clue::NotAtEnd(Entity::color("pink"), End::Left),
            Clue::AtEnd(Entity::person("Blake"), End::Right),
        ],
        solution: Arrangement { person_at: strings(&["Ava", "Blake"]), color_at: strings(&["red", "pink"]) },
    }
}

/// [`ava_blake`] with Ava->Andrew, Blake->Bella, red->mint, pink->chocolate.
pub fn andrew_bella() -> Puzzle {
    Puzzle {
        id: "andrew-bella".into(),
        names: strings(&["Andrew", "Bella"]),
        colors: strings(&["mint", "chocolate"]),
        clues: vec![
            Clue::NotAtEnd(Entity::color("chocolate"), End::Left),
            Clue::AtEnd(Entity::person("Bella"), End::Right),
        ],
        solution: Arrangement {
            person_at: strings(&["Andrew", "Bella"]),
            color_at: strings(&["mint", "chocolate"]),
        },
    }
}

/// Aaron/Blake in mint/lilac: "Blake somewhere right of mint".
pub fn aaron_blake() -> Puzzle {
    Puzzle {
        id: "aaron-blake".into(),
        names: strings(&["Aaron", "Blake"]),
        colors: strings(&["mint", "lilac"]),
        clues: vec![Clue::SomewhereRightOf(Entity::person("Blake"), Entity::color("mint"))],
        solution: Arrangement { person_at: strings(&["Aaron", "Blake"]), color_at: strings(&["mint", "lilac"]) },
    }
}
