//! Loads CSV and IDX data. With no arguments it writes small fixtures to a
//! temporary directory first; otherwise pass `csv FILE` or
//! `idx IMAGES LABELS`.

use std::path::Path;

use elmnet::data::{load_csv, load_idx, normalize_minmax, read_idx_header, write_csv, synthetic_blobs, Dataset, LabelColumn};

fn describe(data: &Dataset) {
    println!(
        "{}: {} samples, {} features, {} classes, first labels {:?}",
        data.name(),
        data.sample_count(),
        data.input_dim(),
        data.class_count(),
        &data.labels()[..data.sample_count().min(8)]
    );
}

fn idx_fixture(dir: &Path) -> std::io::Result<()> {
    // two 2x2 images
    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
    images.extend_from_slice(&[0, 64, 128, 255, 255, 128, 64, 0]);
    std::fs::write(dir.join("images"), images)?;
    std::fs::write(dir.join("labels"), [0, 0, 8, 1, 0, 0, 0, 2, 7, 3])
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["csv", path] => describe(&load_csv(path, LabelColumn::Last, false)?),
        ["idx", images, labels] => {
            println!("header {:?}", read_idx_header(images)?.dims);
            describe(&load_idx(images, labels)?);
        }
        [] => {
            let dir = std::env::temp_dir().join(format!("elm-load-{}", std::process::id()));
            std::fs::create_dir_all(&dir)?;
            write_csv(&synthetic_blobs(0, 12, 3, 3, 0.1)?, dir.join("blobs.csv"), true)?;
            let table = load_csv(dir.join("blobs.csv"), LabelColumn::Last, true)?;
            describe(&table);
            describe(&normalize_minmax(&table));

            idx_fixture(&dir)?;
            let images = load_idx(dir.join("images"), dir.join("labels"))?;
            describe(&images);
            println!("first image pixels {:?}", (0..4).map(|i| images.features()[(i, 0)]).collect::<Vec<_>>());
            std::fs::remove_dir_all(&dir)?;
        }
        _ => return Err("usage: load_datasets [csv FILE | idx IMAGES LABELS]".into()),
    }
    Ok(())
}
