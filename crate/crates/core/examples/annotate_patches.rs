//! Turns a polygon annotation into patch labels under the center rule and
//! the area-overlap rule.
//!
//!     cargo run --example annotate_patches

use milr::annotations::{assign_patch_labels, tessellate, LabelRule, Polygon};

fn print_grid(grid: &milr::annotations::PatchGrid, labels: &[bool]) {
    for r in 0..grid.grid_rows() {
        let row: String = (0..grid.grid_cols())
            .map(|c| {
                match grid.coords.iter().position(|&p| p == (c, r)) {
                    Some(i) if labels[i] => '#',
                    Some(_) => '.',
                    None => ' ',
                }
            })
            .collect();
        println!("  {row}");
    }
}

fn main() -> milr::Result<()> {
    let grid = tessellate(2560, 1536, 256)?;
    let tumor = Polygon::new(
        "tumor",
        vec![[300.0, 200.0], [1900.0, 350.0], [2200.0, 1300.0], [700.0, 1200.0]],
    )?;
    for rule in [LabelRule::Center, LabelRule::Overlap { tau: 0.5 }, LabelRule::Overlap { tau: 0.05 }] {
        let labels = assign_patch_labels(&grid, std::slice::from_ref(&tumor), rule)?;
        println!("{rule}: {} of {} patches positive", labels.iter().filter(|&&l| l).count(), labels.len());
        print_grid(&grid, &labels);
    }
    Ok(())
}
