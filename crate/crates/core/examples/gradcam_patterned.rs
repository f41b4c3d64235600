//! Grad-CAM on the patterned test backend, whose answer provably depends only
//! on a known block of patches. Writes the overlay PNG and JSON sidecar.
//!
//!     cargo run --example gradcam_patterned [OUT_DIR]

use vlaudit::encoder::{make_patterned_backend, ImageInput};
use vlaudit::geometry::{GridRect, PixelRect};
use vlaudit::saliency::{answer_region, grad_cam, write_saliency_artifacts, GradCamOptions, Question};
use vlaudit::synthetic::synthetic_pixels;

fn main() -> vlaudit::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("vlaudit-gradcam"));
    let region = GridRect::new(1, 4, 4, 3);
    let backend = make_patterned_backend(region, 64)?;

    let image = ImageInput::from_rgb("market", synthetic_pixels(9, "market", 112, 112), &[])?;
    let question = Question::new("What is the woman holding?")?;
    let map = grad_cam(&backend, &image, &question, &GradCamOptions::default())?;

    println!("similarity {:.4}", map.similarity);
    for r in 0..map.grid_shape.0 {
        let row: Vec<String> = (0..map.grid_shape.1).map(|c| format!("{:.2}", map.grid_value(r, c))).collect();
        println!("  {}", row.join(" "));
    }
    println!("mass inside designated region: {:.3}", map.grid_mass_fraction(region));

    let answer = answer_region(&map, &PixelRect::quadrants(map.width, map.height))?;
    println!("answer quadrant: {:?} ({:.3} of the mass)", answer.bbox, answer.mass_fraction);
    for path in write_saliency_artifacts(&out, &image, &map, Some(&answer), 0.5)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
