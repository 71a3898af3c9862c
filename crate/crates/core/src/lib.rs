//! Numerics for heat engines drawing on two finite n-particle baths:
//! the thermodynamic optimum from implicit heat/entropy conservation, the
//! exact sorted-spectrum swap protocol, its asymptotic expansion
//! coefficients, and the work-storage bookkeeping of the unitary lift.

pub mod bath;
pub mod error;
pub mod expansion;
pub mod num;
pub mod protocol;
pub mod spectrum;
pub mod storage;
pub mod sweep;
pub mod thermo;

pub use bath::{entropy_of, gibbs_site_probs, moments, BathSpec, MomentSet, SiteSpectrum};
pub use error::{Error, Result};
pub use expansion::{
    block_size_m, coeff_c1, coeff_c2, coeff_d1, dx_asymptotic, eta_protocol_expansion,
    eta_thermo_expansion, lattice_classify, ExpansionCoeffs, LatticeClass, LatticeKind,
};
pub use num::{Dd, Precision};
pub use protocol::{
    apply_protocol, d_x_n, d_y_n, g2_swap, l1_residual_bound, product_approx_marginals,
    CeilMode, Mode, ProtocolConfig, ProtocolOutcome,
};
pub use spectrum::{build_sorted_spectrum, SortedSpectrum};
pub use storage::{lift_report, work_distribution, LiftReport, WorkDistribution};
pub use thermo::{
    eta_thermo, eta_thermo_via_relent, gibbs_rel_entropy, solve_beta_prime_cold,
    solve_beta_prime_hot, EngineConfig, ThermoSolution,
};
