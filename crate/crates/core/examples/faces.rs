//! Writes a contact sheet of random synthetic faces.
//!
//! `cargo run -p latentaug --example faces -- out.png`

use latentaug::imageio::{contact_sheet, save_sheet, Tile};
use latentaug::rng::stream;
use latentaug::world::{render, sample_latent, WorldConfig, WorldParams};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "faces.png".into());
    let cfg = WorldConfig::new(WorldParams::default()).expect("default world");
    let images: Vec<_> = (0..24)
        .map(|i| {
            let mut z = sample_latent(&mut stream(0, "faces", i), &cfg);
            if i >= 12 {
                z.attr[(i % 2) as usize] = 1.5;
            }
            render(&z, &cfg).expect("render")
        })
        .collect();
    let rows: Vec<Vec<Tile>> = images
        .chunks(6)
        .map(|c| c.iter().map(|image| Tile { image, border: None }).collect())
        .collect();
    save_sheet(&contact_sheet(&rows).expect("tiles"), out.as_ref()).expect("save");
}
