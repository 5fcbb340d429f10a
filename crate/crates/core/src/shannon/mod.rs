//! Shannon-information criterion.

pub mod info;
pub mod occupation;
pub mod perturb;
pub mod variation;

pub use info::{
    channel_output_state, gaussian_heterodyne_info, mutual_information,
    mutual_information_of_table, mutual_information_prepared, output_extent, InfoEstimate,
    PreparedStates, PriorGrid,
};
pub use occupation::{occupation_inequality_check, occupation_sides, OccupationReport};

pub use perturb::{
    info_of_heterodyne_vs_perturbed, perturbed_povm, PerturbationGrids, PerturbationSample,
    PerturbationStudy,
};
pub use variation::{
    b_operator, d_construction_defect, d_operator, d_operator_by_symbol_expansion,
    local_optimality_certificate, reduced_bracket_defect,
    second_variation_form, variation_operators, LocalOptimalityCertificate, ModeCoefficients,
    PointSummary, QuadraticSample, VariationReport,
};
