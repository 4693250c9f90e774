//! Window maintenance cost does not grow with the window length: compare
//! N = 5 and N = 50 on identical 64×64 streams.

use motionforge::classifier::{Model, ModelArchitecture, ModelParams};
use motionforge::cli::{format_bench_report, run_bench};

fn main() -> motionforge::Result<()> {
    let arch = ModelArchitecture::default();
    let model = Model::new(arch.clone(), ModelParams::init(&arch, 0))?;
    let report = run_bench(&model, &[5, 50], 1000, 64, 3, 0)?;
    print!("{}", format_bench_report(&report));
    let (a, b) = (report.rows[0].mean_frame_fps, report.rows[1].mean_frame_fps);
    println!("N=50 / N=5 mean-frame throughput: {:.3}", b / a);
    Ok(())
}
