//! Reads a CIFAR-10 binary batch, writes the first few images and their
//! edge maps as PGM files, and prints each image's complexity ratio.
//!
//! cargo run --release --example cifar_edges -- path/to/test_batch.bin out_dir [count]

use std::path::PathBuf;

use acdiff::conditioning::spatial_complexity;
use acdiff::data::{parse_records, sobel_edges, write_pgm, CLASS_NAMES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let (Some(batch), Some(out)) = (args.next(), args.next()) else {
        eprintln!("usage: cifar_edges <batch.bin> <out_dir> [count]");
        std::process::exit(1);
    };
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let out = PathBuf::from(out);
    std::fs::create_dir_all(&out)?;
    let bytes = std::fs::read(&batch)?;
    let records = parse_records(&bytes, Some(count))?;
    println!("index label      r_s(gray) r_s(edges)");
    for (i, rec) in records.iter().enumerate() {
        let edges = sobel_edges(&rec.gray)?;
        write_pgm(&out.join(format!("{i:03}_gray.pgm")), &rec.gray)?;
        write_pgm(&out.join(format!("{i:03}_edges.pgm")), &edges)?;
        println!(
            "{i:>5} {:<10} {:>9.3} {:>10.3}",
            CLASS_NAMES[rec.label as usize],
            spatial_complexity(&rec.gray, 32)?,
            spatial_complexity(&edges, 32)?
        );
    }
    println!("wrote {} image pairs to {}", records.len(), out.display());
    Ok(())
}
