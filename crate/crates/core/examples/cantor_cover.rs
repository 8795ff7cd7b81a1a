//! Builds a Cantor-type construction and estimates its box dimension.
use limdim::construction::{Construction, RefineOptions, RefineRule};
use limdim::estimator::{covering_counts, covering_counts_self_similar, EstimateReport};
use limdim::exact::rat;
use limdim::sequences::SequenceSpec;
use limdim::{System, SystemConfig};

fn main() -> limdim::Result<()> {
    let system = System::new(SystemConfig::missing_digit(3, &[0, 2]))?;
    let levels = SequenceSpec::geometric(2, 2, 6).levels()?;
    let taus = [rat(3, 2)];
    let opts = RefineOptions {
        rule: RefineRule::Cover,
        strict_containment: false,
    };

    let c = Construction::build(&system, &levels, &taus, 4, opts)?;
    for layer in &c.layers {
        println!("layer {}: {} rectangles", layer.index, layer.len());
    }
    let series = covering_counts(&system, &c, 1)?;
    let report = EstimateReport::new(series, 3, f64::NAN, None)?;
    print!("{}", report.to_csv());

    // Deeper levels only through the digit recursion.
    let deep = covering_counts_self_similar(&system, &levels, &taus, 6, opts)?;
    for e in &deep.entries {
        println!("depth {}: N = {} at radius {}", e.depth, e.count, e.radius);
    }
    Ok(())
}
