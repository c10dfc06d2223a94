//! ADE20K class ids and their published segmentation colors.

use std::sync::OnceLock;

use crate::geometry::{Label, Rgb};

pub const WALL: Label = 0;
pub const FLOOR: Label = 3;
pub const CEILING: Label = 5;
pub const BED: Label = 7;
pub const CABINET: Label = 10;
pub const PERSON: Label = 12;
pub const TABLE: Label = 15;
pub const SOFA: Label = 23;
pub const RUG: Label = 28;

/// Default floor-like classes used for floor extraction.
pub const FLOOR_LIKE: [Label; 2] = [FLOOR, RUG];

/// Classes whose depth is taken from the geometric prior during blending.
pub const STRUCTURAL: [Label; 3] = [WALL, FLOOR, CEILING];

const TABLE_CSV: &str = include_str!("../data/ade20k_palette.csv");

#[derive(Clone, Debug)]
pub struct PaletteEntry {
    pub id: Label,
    pub name: String,
    pub rgb: [u8; 3],
}

/// The full 150-entry table, parsed once from the shipped data file.
pub fn table() -> &'static [PaletteEntry] {
    static TABLE: OnceLock<Vec<PaletteEntry>> = OnceLock::new();
    TABLE.get_or_init(|| {
        TABLE_CSV
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                PaletteEntry {
                    id: f[0].parse().expect("palette id"),
                    name: f[1].to_string(),
                    rgb: [
                        f[2].parse().expect("palette r"),
                        f[3].parse().expect("palette g"),
                        f[4].parse().expect("palette b"),
                    ],
                }
            })
            .collect()
    })
}

pub fn rgb8(label: Label) -> [u8; 3] {
    table()[label as usize].rgb
}

/// Palette color scaled to `[0, 1]`.
pub fn color(label: Label) -> Rgb {
    let [r, g, b] = rgb8(label);
    [r as f32 / 255.0, g as f32 / 255.0, b as f32 / 255.0]
}

pub fn name(label: Label) -> &'static str {
    &table()[label as usize].name
}

pub fn is_structural(label: Label) -> bool {
    STRUCTURAL.contains(&label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_complete_and_ordered() {
        let t = table();
        assert_eq!(t.len(), 150);
        assert!(t.iter().enumerate().all(|(i, e)| e.id as usize == i));
    }

    #[test]
    fn published_entries() {
        assert_eq!(rgb8(WALL), [120, 120, 120]);
        assert_eq!(rgb8(FLOOR), [80, 50, 50]);
        assert_eq!(rgb8(CEILING), [120, 120, 80]);
        assert_eq!(rgb8(PERSON), [150, 5, 61]);
        assert_eq!(rgb8(RUG), [255, 9, 92]);
        assert_eq!(name(RUG), "rug");
        assert_eq!(name(149), "flag");
        assert_eq!(rgb8(149), [92, 0, 255]);
    }
}
