//! Sheaf-theoretic planning over a discrete interval site.
//!
//! Histories are sections of a sheaf on closed integer intervals
//! ([`interval`], [`sheaf`]). Actions transform histories and are evaluated
//! with an event calculus ([`action`]); discrepancies between memory and
//! observation are explained by bounded abduction ([`abduction`]). Agents
//! share knowledge by gluing ([`gluing`]) and reach numerical agreement by
//! sheaf diffusion on a graph ([`spectral`]).

pub mod abduction;
pub mod action;
pub mod gluing;
pub mod interval;
pub mod sheaf;
pub mod spectral;
pub mod vocab;

pub use abduction::{
    abduce, plan_towards, reconcile, verify_explanation, DiscrepancyQuery, Explanation,
    ExplanationSet, Mode,
};
pub use action::{
    apply, check_naturality, compose, progress, EventCalculus, Narrative, Occurrence, Plan,
};
pub use gluing::{merge, obstruction_to_query, KnowledgeBase, MergeOutcome, MergeReport};
pub use interval::{is_subinterval, overlap, validate_cover, Cover, Interval, TimePoint};
pub use sheaf::{check_locality, glue, Conflict, Section, SheafRole, State};
pub use spectral::{cohomology_dims, diffuse, harmonic_basis, spectrum, Scalar};
pub use vocab::{ActionSchema, GroundAction, Literal, Vocabulary};

pub type CellularSheaf64 = spectral::CellularSheaf<f64>;
pub type CellularSheaf32 = spectral::CellularSheaf<f32>;
pub type Cochain64 = spectral::Cochain0<f64>;
pub type Cochain32 = spectral::Cochain0<f32>;
pub type DiffusionConfig64 = spectral::DiffusionConfig<f64>;
pub type DiffusionConfig32 = spectral::DiffusionConfig<f32>;
pub type SpectralReport64 = spectral::SpectralReport<f64>;
pub type SpectralReport32 = spectral::SpectralReport<f32>;
