//! Multi-period mean-variance portfolio choice with one policy network per
//! rebalancing date, under Black–Scholes or AR(1) excess returns, plus
//! transfer of a trained `K`-period policy to horizon `K + 1` by training
//! only the first decision.

mod market;
mod policy;
mod train;
mod transfer;

pub use market::{cholesky, Ar1Market, BsMarket, EpisodeBatch, InitialWealth};
pub use policy::{
    action_map, block_backward, block_forward, evaluate_score, loss_and_grad, path_backward, path_forward, unroll_wealth, ActionBounds,
    PathWorkspace, PolicyStack, Score, StateInput, Unroll, Workspace,
};
pub use train::{train_full, FullTrainingConfig, MarketSpec, PortfolioRun, DEFAULT_TEST_SEED};
pub use transfer::{stack_fingerprint, tabulate_value, train_transfer, TransferConfig, TransferMode, TransferRun, ValueTable};

/// Continuous-time benchmark scores for the three Black–Scholes presets
/// (5, 50 and 100 assets), quoted as reference constants.
pub const HJB_REFERENCE: [(usize, f64); 3] = [(5, 0.821), (50, 2.032), (100, 3.460)];
