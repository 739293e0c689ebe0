// Dump centroid-benchmark rows. Scratch tooling.
use evstar::benchmark::{centroid_benchmark, BenchmarkConfig};
use evstar::centroid::CentroidMethod;
use evstar::geometry::CameraIntrinsics;

fn main() {
    let mut cfg = BenchmarkConfig::lab_defaults();
    cfg.duration_s = 0.6;
    let methods = [
        CentroidMethod::MeanPositive,
        CentroidMethod::OffsetCorrected,
        CentroidMethod::MaxLikelihood,
    ];
    let rows = centroid_benchmark(&cfg, &CameraIntrinsics::evk4_35mm(), &methods);
    println!("mag  method            mean_abs  std     bias_along  n");
    for r in &rows {
        println!(
            "{:3}  {:16} {:8.3} {:7.3} {:10.3} {:5}",
            r.magnitude,
            r.method.name(),
            r.mean_abs_err_px,
            r.std_px,
            r.bias_along_px,
            r.n_batches
        );
    }
}
