//! Dynamic time warping between trajectories sampled at different rates.
//!
//! `cargo run --example dtw`

use igroup::distances::{dtw_distance, dtw_distance_windowed, dtw_matrix, Trajectory};

fn arc(n: usize, radius: f64) -> Trajectory {
    let pts = (0..n)
        .map(|i| {
            let t = std::f64::consts::PI * i as f64 / (n - 1) as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect();
    Trajectory::new(pts).expect("non-empty")
}

fn main() -> igroup::Result<()> {
    let coarse = arc(12, 10.0);
    let fine = arc(60, 10.0);
    let wider = arc(40, 12.0);
    println!("same arc, 12 vs 60 points: {:.4}", dtw_distance(&coarse, &fine)?);
    println!("radius 10 vs 12:           {:.4}", dtw_distance(&fine, &wider)?);
    println!("banded (half-width 5):     {:.4}", dtw_distance_windowed(&fine, &wider, Some(5))?);
    let m = dtw_matrix(&[coarse, fine, wider])?;
    for i in 0..m.len() {
        println!("{:?}", m.row(i).iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>());
    }
    Ok(())
}
