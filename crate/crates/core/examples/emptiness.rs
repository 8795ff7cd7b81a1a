//! Disjoint layers: refinement stops with the first parent that has no children.
use limdim::construction::{Construction, RefineOptions, RefineRule};
use limdim::exact::rat;
use limdim::sequences::SequenceSpec;
use limdim::systems::ThetaTable;
use limdim::{Error, System, SystemConfig};

fn main() -> limdim::Result<()> {
    let system = System::new(SystemConfig::real(1, ThetaTable::homogeneous()))?;
    let levels = SequenceSpec::explicit_ints(&[2, 3]).levels()?;
    let opts = RefineOptions {
        rule: RefineRule::Cantor,
        strict_containment: false,
    };
    match Construction::build(&system, &levels, &[rat(4, 1)], 2, opts) {
        Err(e @ Error::EmptyRefinement { .. }) => println!("{e} (exit code {})", e.exit_code()),
        Err(e) => return Err(e),
        Ok(c) => println!("non-empty: {} leaves", c.leaves().len()),
    }
    Ok(())
}
