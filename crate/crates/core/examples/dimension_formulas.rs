//! Hausdorff dimension formulas across the four modes.
use limdim::dimension::{dim_doubly_exponential, dim_general, dim_real, dim_rynne, WeightVector};

fn main() -> limdim::Result<()> {
    let taus = [1.2, 1.5, 2.0];

    let w = WeightVector::unit(taus.to_vec())?;
    for alpha in [0.0, 0.5, 1.0] {
        let d = dim_general(&w, alpha)?;
        println!("general alpha={alpha}: {:.6} (argmin {:?})", d.value, d.argmin);
    }

    let real = dim_real(&[0.5, 0.8], 1.0)?;
    println!("real corollary: {:.6} from {:?}", real.value, real.candidates);

    for k in [5.0, 10.0, f64::INFINITY] {
        let d = dim_doubly_exponential(&[2.0, 3.0], k)?;
        println!("doubly exponential k={k}: {:.6}", d.value);
    }

    let r = dim_rynne(&[2.0, 3.0])?;
    println!("rynne: {:.6}", r.value);

    let bad = dim_general(&WeightVector::unit(vec![0.9])?, 1.0)?;
    println!("inadmissible weights warn: {:?}", bad.warnings);
    Ok(())
}
