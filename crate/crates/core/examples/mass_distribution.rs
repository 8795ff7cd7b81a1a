//! Equal-split measure on a construction and its empirical Hölder exponent.
use limdim::construction::{assign_measure, mass_conserved, measure_of_ball, Construction, RefineOptions, RefineRule};
use limdim::estimator::holder_sweep;
use limdim::exact::rat;
use limdim::sequences::SequenceSpec;
use limdim::{System, SystemConfig};

fn main() -> limdim::Result<()> {
    let system = System::new(SystemConfig::missing_digit(3, &[0, 2]))?;
    let levels = SequenceSpec::geometric(2, 2, 5).levels()?;
    let taus = [rat(3, 2)];
    let opts = RefineOptions {
        rule: RefineRule::Cover,
        strict_containment: false,
    };

    let c = Construction::build(&system, &levels, &taus, 3, opts)?;
    let tree = assign_measure(&c.layers)?;
    println!("mass conserved: {}", mass_conserved(&tree));

    let centre = &c.leaves().rectangles[0].center;
    for r in [rat(1, 2), rat(1, 30), rat(1, 300), rat(1, 3000)] {
        let b = measure_of_ball(&system, &c, &tree, centre, &r)?;
        println!("nu(B(x, {r})) = {} ({:?})", b.mass, b.case);
    }

    let sweep = holder_sweep(&system, &levels, &taus, &[3, 4], opts, 0.17, 2000, 1)?;
    for rep in &sweep.reports {
        println!(
            "depth {}: max nu/r^s = {:.4}, exponent {:?}",
            rep.depth, rep.max_ratio, rep.empirical_exponent
        );
    }
    println!("ratio grows with depth: {}", sweep.growing);
    Ok(())
}
