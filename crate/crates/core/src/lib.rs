//! Equilibrium solvers for two value-maximizing advertisers bidding across
//! platforms that each choose a first- or second-price auction.

pub mod casestudies;
pub mod game;
pub mod metrics;
pub mod numerics;
pub mod oracle;
pub mod subgame;
pub mod valuation;

pub use subgame::{AuctionFormat, AuctionProfile, BiddingMode, Market, SolverConfig, SubgameSolution};
pub use valuation::{Advertiser, AdvertiserPair, Domain, ElasticityRule, ValuationSpec};
