//! Problem files shipped with the binary. `EXAMPLE4` is the reference
//! configuration the `example4` subcommand materializes verbatim; the others
//! are the adversarial variants the audit tests lean on, kept here so the
//! files and the binary cannot drift apart.

pub const EXAMPLE4: &str = include_str!("../problems/example4.prob");
#[cfg(test)]
pub const EVEN_IMPULSE: &str = include_str!("../problems/even_impulse.prob");
#[cfg(test)]
pub const SUPERQUADRATIC: &str = include_str!("../problems/superquadratic.prob");
#[cfg(test)]
pub const BETA3: &str = include_str!("../problems/beta3.prob");
#[cfg(test)]
pub const PERTURBED: &str = include_str!("../problems/perturbed.prob");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probfile;
    use camber_core::example;

    #[test]
    fn bundled_reference_matches_the_library_example() {
        let spec = probfile::parse(EXAMPLE4).unwrap();
        let lib = example::reference();
        assert_eq!(spec.partition.points(), lib.partition.points());
        assert_eq!(spec.beta, lib.beta);
        assert_eq!(spec.epsilon, lib.epsilon);
        assert_eq!(spec.delta, lib.delta);
        assert_eq!(spec.growth.a1, lib.growth.a1);
        assert_eq!(spec.growth.theta1, lib.growth.theta1);
        assert_eq!(spec.growth.a2, lib.growth.a2);
        assert_eq!(spec.growth.theta2, lib.growth.theta2);
        assert_eq!(spec.growth.a_star, lib.growth.a_star);
        for (t, u) in [(0.1, 0.3), (0.5, -0.7), (0.9, 0.04)] {
            for i in 0..3 {
                assert_eq!(
                    spec.f[i].eval(t, u).unwrap(),
                    lib.f[i].eval(t, u).unwrap()
                );
            }
        }
        for k in 0..2 {
            assert_eq!(
                spec.impulses[k].eval(0.0, 0.42).unwrap(),
                lib.impulses[k].eval(0.0, 0.42).unwrap()
            );
        }
    }
}
