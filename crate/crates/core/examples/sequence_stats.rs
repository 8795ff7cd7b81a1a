//! Growth statistics `h` and `alpha` of level sequences.
use limdim::sequences::{self, admissible, AdmissibilityMode, SequenceSpec};
use limdim::{System, SystemConfig};
use limdim::systems::ThetaTable;

fn main() -> limdim::Result<()> {
    let real = System::new(SystemConfig::real(1, ThetaTable::homogeneous()))?;
    let cantor = System::new(SystemConfig::missing_digit(3, &[0, 2]))?;

    let chains = [
        ("2^(2^j)", SequenceSpec::doubly_exponential(2, 2, 6), &real),
        ("3^(2^j)", SequenceSpec::doubly_exponential(3, 2, 6), &real),
        ("digits 2*2^j", SequenceSpec::geometric(2, 2, 6), &cantor),
        ("explicit", SequenceSpec::explicit_ints(&[2, 5, 30, 1000]), &real),
    ];
    for (name, seq, system) in chains {
        let st = sequences::stats(&seq, system)?;
        println!(
            "{name:>14}: h_inf={:.4} alpha_J={:.4} alpha_lim={:?}",
            st.h_inf, st.alpha_finite, st.alpha_limit
        );
        let adm = admissible(&st, &[1.5], AdmissibilityMode::General);
        if !adm.ok {
            println!("{:>16}tau=1.5 rejected: {:?}", "", adm.diagnostics);
        }
    }
    Ok(())
}
