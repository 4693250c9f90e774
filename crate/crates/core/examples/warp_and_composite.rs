//! Cut a figure out with its mask, rotate it about its feet and paste it into
//! a scene at a few angles.

use motionforge::imaging::{affine_warp, alpha_composite, concat_horizontal, AffineTransform};
use motionforge::procedural;
use motionforge::synthesis::cutout;

fn main() -> motionforge::Result<()> {
    let person = procedural::person("demo", 32, 64, 7);
    let scene = procedural::background("scene", 96, 96, 8);
    let sprite = cutout(&person.image, &person.mask)?;
    println!("sprite {:?}, anchor {:?}", sprite.dims(), sprite.anchor);

    let feet = (48.0, 88.0);
    let mut panels = Vec::new();
    for degrees in [0.0f64, 30.0, 60.0, 90.0] {
        let t = AffineTransform::pinned(sprite.anchor, feet, 1.0, degrees.to_radians());
        let warped = affine_warp(&sprite, &t, 96, 96)?;
        panels.push(alpha_composite(&scene.image, &warped)?);
    }
    concat_horizontal(&panels)?.save_png("warp_and_composite.png")?;
    println!("wrote warp_and_composite.png");
    Ok(())
}
