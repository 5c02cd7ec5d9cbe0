use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::{CliError, OUT_ENV};

#[derive(Debug, Clone, Parser)]
#[command(name = "pointlab", version, about = "Verification pipelines for random point-interaction operators on Z³")]
#[command(args_override_self = true, arg_required_else_help = true)]
pub struct Cli {
    /// Output directory (default: $POINTLAB_OUT, else ./pointlab-out).
    #[arg(long, global = true, env = OUT_ENV)]
    pub out: Option<PathBuf>,
    /// `key = value` file (or a run manifest) whose entries override flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

pub(crate) fn usage() -> String {
    Cli::command().render_help().to_string()
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Dissipativity certificate and inverse bound for Γ(z, ω).
    GammaCheck(GammaCheckArgs),
    /// Certified exponential decay of Γ⁻¹ and of synthetic inverses.
    InverseDecay(InverseDecayArgs),
    /// Log-linear fit of cell-averaged |G_ω| against cell distance.
    CtFit(CtFitArgs),
    /// Generalized-eigenfunction identities, commutator norms and overlaps.
    EigenmodeBounds(EigenmodeArgs),
    /// Time-averaged moment against its resolvent representation.
    TransportIdentity(TransportArgs),
    /// Spectral-projector tail estimates on random proxies.
    ProjectorBounds(ProjectorArgs),
    /// Delocalization chain and moment lower bound over an energy interval.
    DelocLowerbound(DelocArgs),
    /// Double-sum bound and free Green's cell bounds by brute force.
    ConvolutionCheck(ConvolutionArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GammaCheck(_) => "gamma-check",
            Self::InverseDecay(_) => "inverse-decay",
            Self::CtFit(_) => "ct-fit",
            Self::EigenmodeBounds(_) => "eigenmode-bounds",
            Self::TransportIdentity(_) => "transport-identity",
            Self::ProjectorBounds(_) => "projector-bounds",
            Self::DelocLowerbound(_) => "deloc-lowerbound",
            Self::ConvolutionCheck(_) => "convolution-check",
        }
    }

    /// Name and resolved flags for the manifest.
    pub(crate) fn describe(&self) -> Result<(&'static str, serde_json::Map<String, serde_json::Value>), CliError> {
        let value = match self {
            Self::GammaCheck(a) => serde_json::to_value(a),
            Self::InverseDecay(a) => serde_json::to_value(a),
            Self::CtFit(a) => serde_json::to_value(a),
            Self::EigenmodeBounds(a) => serde_json::to_value(a),
            Self::TransportIdentity(a) => serde_json::to_value(a),
            Self::ProjectorBounds(a) => serde_json::to_value(a),
            Self::DelocLowerbound(a) => serde_json::to_value(a),
            Self::ConvolutionCheck(a) => serde_json::to_value(a),
        }?;
        match value {
            serde_json::Value::Object(map) => Ok((self.name(), map)),
            _ => unreachable!("argument structs serialize to objects"),
        }
    }
}

const PI2: f64 = PI * PI;

/// Single energy given either absolutely or as an offset above π².
#[derive(Debug, Clone, Args, Serialize)]
pub struct EnergyArg {
    #[arg(long = "E", conflicts_with = "eps")]
    #[serde(rename = "E")]
    pub e: Option<f64>,
    /// Offset above π², i.e. E = π² + eps.
    #[arg(long)]
    pub eps: Option<f64>,
}

impl EnergyArg {
    pub fn resolve(&self, default: f64) -> f64 {
        match (self.e, self.eps) {
            (Some(e), _) => e,
            (None, Some(eps)) => PI2 + eps,
            (None, None) => default,
        }
    }
}

/// Energy list given either absolutely or as offsets above π².
#[derive(Debug, Clone, Args, Serialize)]
pub struct EnergyListArg {
    #[arg(long = "E", value_delimiter = ',', action = ArgAction::Set, conflicts_with = "eps")]
    #[serde(rename = "E")]
    pub e: Option<Vec<f64>>,
    /// Offsets above π².
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub eps: Option<Vec<f64>>,
}

impl EnergyListArg {
    pub fn resolve(&self, default: &[f64]) -> Vec<f64> {
        match (&self.e, &self.eps) {
            (Some(e), _) => e.clone(),
            (None, Some(eps)) => eps.iter().map(|x| PI2 + x).collect(),
            (None, None) => default.to_vec(),
        }
    }
}

/// Coupling distribution: ω uniform on [−b, −a], inactive with probability p0.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DisorderArg {
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 2.0)]
    pub b: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p0: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GammaCheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub energy: EnergyArg,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long = "L", default_value_t = 2)]
    #[serde(rename = "L")]
    pub l: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub disorder: DisorderArg,
    /// Randomized configurations (E, κ, L, p0 drawn from the seed); 0 checks
    /// the single point given by the other flags.
    #[arg(long, default_value_t = 0)]
    pub batch: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct InverseDecayArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub energy: EnergyArg,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long = "L", default_value_t = 4)]
    #[serde(rename = "L")]
    pub l: usize,
    /// Number of seeded Γ systems (seeds seed, seed+1, ...).
    #[arg(long, default_value_t = 20)]
    pub systems: usize,
    /// Synthetic matrices per dimension 1, 2, 3.
    #[arg(long, default_value_t = 100)]
    pub synthetic: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub disorder: DisorderArg,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CtFitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub energies: EnergyListArg,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long = "L", default_value_t = 4)]
    #[serde(rename = "L")]
    pub l: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub disorder: DisorderArg,
    /// Gauss-Legendre order of the cell rule.
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 2)]
    pub min_distance: i64,
    #[arg(long, default_value_t = 8)]
    pub max_distance: i64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EigenmodeArgs {
    /// Energies above π² (ε values).
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = [0.5, 1.0, PI2])]
    pub eps: Vec<f64>,
    /// Cutoff scales for the commutator-norm drift.
    #[arg(long = "L", value_delimiter = ',', action = ArgAction::Set, default_values_t = [5.0, 10.0, 20.0, 40.0])]
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    /// Weight exponents for the weighted mode norm.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = [3.5, 4.0, 6.0])]
    pub q: Vec<f64>,
    /// Finite-difference step (compared with h/2).
    #[arg(long, default_value_t = 0.04)]
    pub h: f64,
    /// Cutoff scale used in the finite-difference check.
    #[arg(long, default_value_t = 5.0)]
    pub fd_cutoff: f64,
    /// Lattice points n with |n_i| ≤ this are checked for ψ_E(n) = 0.
    #[arg(long, default_value_t = 3)]
    pub lattice_radius: i64,
    /// Skip the weighted-norm check (the slowest part).
    #[arg(long)]
    pub skip_weighted: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TransportArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long = "T", value_delimiter = ',', action = ArgAction::Set, default_values_t = [0.5, 5.0, 50.0])]
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allowed relative deviation.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProjectorArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DelocArgs {
    /// Energy interval I₋,I₊ (default 1.5π²,2π²).
    #[arg(long = "I", value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_values_t = [1.5 * PI2, 2.0 * PI2])]
    #[serde(rename = "I")]
    pub interval: Vec<f64>,
    #[arg(long, default_value_t = 4.0)]
    pub q: f64,
    #[arg(long = "T", value_delimiter = ',', action = ArgAction::Set, default_values_t = [2.0, 4.0, 8.0])]
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    /// Half-width of the coupling window.
    #[arg(long = "L", default_value_t = 1)]
    #[serde(rename = "L")]
    pub l: usize,
    /// Use the free operator (no active sites).
    #[arg(long)]
    pub free: bool,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub disorder: DisorderArg,
    #[arg(long, default_value_t = 9)]
    pub energy_nodes: usize,
    /// Cutoff candidates for L_ε.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = [2.0, 3.0])]
    pub cutoffs: Vec<f64>,
    /// Wall-clock budget in seconds; exceeding it exits with code 3.
    #[arg(long)]
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConvolutionArgs {
    #[arg(long = "L", default_value_t = 4)]
    #[serde(rename = "L")]
    pub l: usize,
    #[arg(long = "C", default_value_t = 1.0)]
    #[serde(rename = "C")]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Random arrays in addition to C e^{−γ‖n−m‖}.
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Energies for the free Green's cell bounds.
    #[arg(long = "cell-E", value_delimiter = ',', action = ArgAction::Set, default_values_t = [1.0, 2.0 * PI2])]
    #[serde(rename = "cell-E")]
    pub cell_e: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Cells n ≠ 0 with |n_i| ≤ this are tested against m = 0.
    #[arg(long, default_value_t = 2)]
    pub cell_radius: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
}
