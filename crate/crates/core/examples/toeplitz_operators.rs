//! The three-level Toeplitz lift, its adjoint and the projection onto it.

use isac::atoms::{steering_vector, toeplitz_adjoint, toeplitz_apply, toeplitz_generator, toeplitz_project};
use isac::linalg::C64;
use isac::{Dims, Zeta};

fn main() -> isac::Result<()> {
    let dims = Dims::new(3, 2, 2)?;
    let a = steering_vector(Zeta::new(0.2, 0.7, 0.45), dims);
    let t = &a * a.adjoint();

    // A single atom's outer product is already three-level Toeplitz.
    let gen = toeplitz_generator(&t, dims)?;
    let rebuilt = toeplitz_apply(&gen, dims)?;
    println!("atom lift reproduces itself: {:.2e}", (&rebuilt - &t).norm());

    let noisy = t.map(|z| z + C64::new(0.01, -0.02) * z.re);
    let p = toeplitz_project(&noisy, dims)?;
    println!("projection is idempotent: {:.2e}", (&toeplitz_project(&p, dims)? - &p).norm());

    let adj = toeplitz_adjoint(&noisy, dims)?;
    println!("<T(v), M> = <v, T*(M)>: {:.2e}", (noisy.dotc(&rebuilt) - gen.inner(&adj)).norm());
    Ok(())
}
