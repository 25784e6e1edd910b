//! Trajectory-oriented optimization: the matching objective, Thompson
//! sampling over `(x, seed)` pairs with a growing seed set, the
//! bi-objective hypervolume variant and the campaign loop.

mod campaign;
mod objective;
mod pareto;
mod thompson;

pub use campaign::{
    best_k, front_hypervolume, random_search, reference_point, run_campaign, run_campaign_from,
    CampaignFailure, CampaignResult, CampaignSettings, InitialDesign, SurrogateKind,
};
pub use objective::{objective_g, EvalRecord, ObjectiveSpec, OutputTransform, Phase};
pub use pareto::{dominates, hv_contribution, hypervolume_2d, non_dominated, ParetoArchive};
pub use thompson::{
    sample_objectives, ts_candidates, ts_select, ts_select_batch, ts_select_mo, ts_select_mo_batch, Candidate,
    Surrogate,
};
