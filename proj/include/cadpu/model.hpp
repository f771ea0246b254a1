#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cadpu/autodiff.hpp"
#include "cadpu/config.hpp"
#include "cadpu/curvature.hpp"
#include "cadpu/dataset.hpp"
#include "cadpu/geometry.hpp"

namespace cadpu {

// --- parameters --------------------------------------------------------------

// Generator: 3->lift_dim lift, 4 dense EdgeConv blocks (3 densely connected
// per-point layers over edge features, widths cfg.widths), per-block skip
// fusion back to fuse_dim, expansion MLP (2 layers of expand_dim) and the
// 128/64/3 regression head. Extractor output width C1 = lift_dim + 4*fuse_dim.
ParamSet init_generator_params(const TrainConfig& cfg, std::uint64_t seed);

// PointNet discriminator: shared 64/128/256 per-point MLP, global max-pool,
// 256/64/1 classifier. Raw (unsquashed) scores.
ParamSet init_discriminator_params(std::uint64_t seed);

std::size_t param_count(const ParamSet& params);
int extractor_output_dim(const TrainConfig& cfg);

// --- expansion plan ------------------------------------------------------------

// Per-slot source indices and 2D grid-corner coordinates. The first
// uniform_count slots are round-robin duplicates of 0..N-1; the rest are
// i.i.d. draws from the Eq.-3 weights. Within every duplicate group the grid
// coordinates follow the canonical corner order.
struct ExpansionPlan {
  std::vector<std::size_t> sources;
  std::vector<std::array<double, 2>> grid_coords;
  std::size_t uniform_count = 0;
  std::size_t input_size = 0;
  std::size_t rate = 0;
};

// Canonical corner sequence: origin first, then lattice points ring by ring
// in L-inf radius, each ring ordered by squared length then angle:
// (0,0),(1,0),(0,1),(-1,0),(0,-1),(1,1),(-1,1),(-1,-1),(1,-1),(2,0),...
std::vector<std::array<double, 2>> canonical_grid_corners(std::size_t count);

ExpansionPlan plan_expansion(const CurvatureField& curvatures, double alpha,
                             std::size_t r, double epsilon, std::uint64_t seed);

// --- tape-level forward passes -------------------------------------------------

struct BoundParams {
  std::map<std::string, Var> vars;
  Var at(const std::string& name) const;
};

BoundParams bind_params(Tape& tape, const ParamSet& params, bool requires_grad);
GradSet collect_grads(const Tape& tape, const BoundParams& bound);

// points: [N,3] -> features [N, C1]. K-neighbor graphs are built in feature
// space from current forward values; the selection itself carries no gradient.
Var extract_features(Tape& tape, Var points, const BoundParams& gen,
                     const TrainConfig& cfg);

// features [N,C1] + plan -> [rN, expand_dim]
Var expand_features(Tape& tape, Var features, const ExpansionPlan& plan,
                    const BoundParams& gen);

// [rN, expand_dim] -> [rN, 3] absolute coordinates in the normalized frame.
Var regress_points(Tape& tape, Var features, const BoundParams& gen);

Var generator_forward(Tape& tape, Var points, const ExpansionPlan& plan,
                      const BoundParams& gen, const TrainConfig& cfg);

// cloud [M,3] -> scalar score.
Var discriminator_score(Tape& tape, Var cloud, const BoundParams& dis);

// --- convenience (value-level) ---------------------------------------------------

Tensor cloud_to_tensor(const PointCloud& cloud);
PointCloud tensor_to_cloud(const Tensor& t);

// Forward pass on a throwaway tape; input must already be normalized.
PointCloud generator_infer(const PointCloud& input, const ParamSet& gen,
                           const TrainConfig& cfg, std::uint64_t seed);

double discriminator_infer(const PointCloud& cloud, const ParamSet& dis);

// --- losses ---------------------------------------------------------------------

// emd + beta * regularizer + (gamma/2) * (d_score - 1)^2
double generator_loss(const PointCloud& pred, const PointCloud& gt,
                      double d_score_on_pred, double beta, double gamma,
                      std::size_t k, double emd_eps_frac = 0.01);

// 0.5 * (d_pred^2 + (d_gt - 1)^2), averaged over the batch.
double discriminator_loss(double d_score_on_pred, double d_score_on_gt);
double discriminator_loss(const std::vector<double>& d_pred,
                          const std::vector<double>& d_gt);

// --- training ---------------------------------------------------------------------

struct EpochLog {
  double emd = 0.0;
  double reg = 0.0;
  double adv_g = 0.0;
  double adv_d = 0.0;
  double val_cd = 0.0;
};

struct TrainState {
  ParamSet gen;
  ParamSet dis;
  AdamState opt_g;
  AdamState opt_d;
  std::int64_t global_step = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<EpochLog> log;
};

// Alternating TTUR loop: per batch one discriminator step then one generator
// step; Adam with 0.7 step decay (interval = total_steps/3 when the config
// leaves it at 0). Deterministic given cfg.seed. NaN in any loss aborts with
// the offending batch id. `resume` continues step counters from a checkpoint.
TrainResult train(const std::vector<TrainPair>& pairs, const TrainConfig& cfg,
                  const TrainState* resume = nullptr);

// normalize -> curvature -> plan -> extract -> expand -> regress -> denormalize.
// Output size is exactly r * |input|; |input| must equal cfg.n_in.
PointCloud upsample(const PointCloud& input, const ParamSet& gen,
                    const TrainConfig& cfg, std::uint64_t seed);

// Reference baseline: every input point duplicated r times with Gaussian
// jitter. What a trained model has to beat.
PointCloud duplicate_jitter_baseline(const PointCloud& input, std::size_t r,
                                     double stddev, std::uint64_t seed);

// --- checkpoint packing -------------------------------------------------------------

ParamSet pack_train_state(const TrainState& state);
TrainState unpack_train_state(const ParamSet& records, const TrainConfig& cfg);

}  // namespace cadpu
