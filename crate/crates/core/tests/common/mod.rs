//! Shared run fixtures for the integration tests.
#![allow(dead_code, clippy::too_many_arguments)]

use cvp::lagrangian::{make_kernel, ProfileShape};
use cvp::pipeline::{run_exhaustion, ExhaustionRun, RunOptions, WindowPolicy};
use cvp::{DecayProfile, KernelSpec, Lagrangian, MetricSpace};

pub struct Fixture {
    pub name: &'static str,
    pub space: MetricSpace,
    pub lagrangian: Lagrangian,
    pub run: ExhaustionRun,
    pub profile: DecayProfile,
    pub compact_range: bool,
}

fn build(
    name: &'static str,
    space: MetricSpace,
    kernel: KernelSpec,
    center: &str,
    radii: &[f64],
    window: WindowPolicy,
    profile: ProfileShape,
    delta: f64,
    compact_range: bool,
) -> Fixture {
    let lagrangian = make_kernel(&kernel, &space).unwrap();
    let exhaustion = space.build_exhaustion(space.lookup(center).unwrap(), radii).unwrap();
    let options = RunOptions {
        window,
        ..RunOptions::default()
    };
    let run = run_exhaustion(&space, &lagrangian, &exhaustion, &options).unwrap();
    let profile = DecayProfile::new(profile, delta, lagrangian.diagonal_infimum()).unwrap();
    Fixture {
        name,
        space,
        lagrangian,
        run,
        profile,
        compact_range,
    }
}

/// Tent kernel of range 1 on the integer grid [-50, 50]: every block is the identity.
pub fn identity_grid() -> Fixture {
    build(
        "identity grid",
        MetricSpace::integer_grid(-50, 50).unwrap(),
        KernelSpec::tent(1.0, 1.0),
        "0",
        &[10.0, 20.0, 50.0],
        WindowPolicy::Range,
        ProfileShape::Tent {
            amplitude: 1.0,
            range: 1.0,
        },
        1.0,
        true,
    )
}

/// Tent kernel of range 1.5 on the integer grid: tridiagonal with boundary
/// effects decaying geometrically, so the window keeps a wide margin.
pub fn wide_tent() -> Fixture {
    build(
        "tent 1.5",
        MetricSpace::integer_grid(-60, 60).unwrap(),
        KernelSpec::tent(1.0, 1.5),
        "0",
        &[30.0, 40.0, 50.0],
        WindowPolicy::Margin(20.0),
        ProfileShape::Tent {
            amplitude: 1.0,
            range: 1.5,
        },
        1.0,
        true,
    )
}

/// `f(d) = 2C (d + 2) e^{-d}` with `C = 3` for the unit exponential kernel.
pub fn exponential_profile() -> ProfileShape {
    ProfileShape::Exp {
        amplitude: 6.0,
        rate: 1.0,
        degree: 1,
        shift: 2.0,
    }
}

/// Exponential kernel `e^{-d}` on the integer grid [0, 40], centered at 20.
pub fn exponential() -> Fixture {
    build(
        "exponential",
        MetricSpace::integer_grid(0, 40).unwrap(),
        KernelSpec::exponential(1.0, 1.0),
        "20",
        &[10.0, 15.0, 20.0],
        WindowPolicy::Margin(4.0),
        exponential_profile(),
        1.0,
        false,
    )
}

pub fn all() -> Vec<Fixture> {
    vec![identity_grid(), wide_tent(), exponential()]
}
