//! Reduce three gaussian blobs to 5 dimensions and cluster them.

use aham::cluster::{cluster, ClustererConfig};
use aham::reduce::{fit_reduce, ReducerConfig};
use aham::synthetic::{axis_centers, gaussian_blobs};

fn main() -> aham::Result<()> {
    let (x, truth) = gaussian_blobs(&axis_centers(3, 32, 5.0), 40, 0.5, 1);
    let reduced = fit_reduce(&x, &ReducerConfig::default())?;
    println!("{:?} -> {:?}", x.dim(), reduced.dim());

    let assignment = cluster(&reduced, &ClustererConfig::default())?;
    println!("T = {}, O = {}", assignment.n_topics, assignment.outliers);
    println!("sizes {:?}", assignment.topic_sizes());
    for t in 0..assignment.n_topics as i64 {
        let mut blobs = [0usize; 3];
        for i in assignment.members(t) {
            blobs[truth[i]] += 1;
        }
        println!("cluster {t}: points per blob {blobs:?}");
    }
    Ok(())
}
