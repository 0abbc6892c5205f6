//! Fit a camera homography from four floor markers and map pixels back
//! to the ground plane.

use rsslab::geometry::{fit_homography, max_reprojection_error, pixel_to_world, world_to_pixel, CameraSetup, PixelPoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = CameraSetup::base();
    setup.validate()?;
    let markers = &setup.marker_world_positions;
    let pixels = setup.marker_pixels();
    let h = fit_homography(markers, &pixels)?;
    println!("reprojection error: {:.2e} px", max_reprojection_error(&h, markers, &pixels));

    let center = PixelPoint { u: setup.resolution_px as f64 / 2.0, v: setup.resolution_px as f64 / 2.0 };
    let ground = pixel_to_world(&h, &center)?;
    println!("image center -> ({:.3}, {:.3}) m", ground.x, ground.y);
    let back = world_to_pixel(&h, &ground)?;
    println!("and back -> ({:.3}, {:.3}) px", back.u, back.v);
    Ok(())
}
