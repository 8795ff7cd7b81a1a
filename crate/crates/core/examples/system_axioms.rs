//! Exact separation, maximality and ball counts for each built-in system.
use limdim::exact::rat;
use limdim::systems::ThetaTable;
use limdim::{Level, System, SystemConfig};

fn check(name: &str, system: &System, level: Level, radius: limdim::Rational) -> limdim::Result<()> {
    let sep = system.verify_separated(&level)?;
    let probes = system.sample_probes(&level, 200, 7);
    let max = system.verify_maximal(&level, &probes)?;
    let centre = &probes[0];
    let count = system.count_in_ball(&level, centre, &radius)?;
    println!(
        "{name:<12} level {level}: {} points, separated={} maximal={} (closed {}), |B({radius})|={} in [{:.1}, {:.1}]",
        sep.size, sep.ok, max.ok, max.ok_closed, count.count, count.lower_bound, count.upper_bound
    );
    Ok(())
}

fn main() -> limdim::Result<()> {
    let real = System::new(SystemConfig::real(1, ThetaTable::homogeneous()))?;
    check("real", &real, Level::int(100), rat(1, 10))?;

    let padic = System::new(SystemConfig::padic(3, 1))?;
    check("3-adic", &padic, Level::int(4), rat(1, 9))?;

    let gauss = System::new(SystemConfig::gaussian())?;
    check("gaussian", &gauss, Level::gaussian(5, 3), rat(1, 4))?;

    let cantor = System::new(SystemConfig::missing_digit(3, &[0, 2]))?;
    check("cantor", &cantor, Level::int(6), rat(1, 27))?;
    Ok(())
}
