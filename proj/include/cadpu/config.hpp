#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cadpu {

// All hyperparameters in one record, serialized as "key=value" lines.
// Defaults follow the reference configuration (alpha 0.5, beta 0.15,
// gamma 0.005, k 12, epsilon 0.01, TTUR learning rates 1e-3 / 1e-4).
struct TrainConfig {
  std::size_t r = 4;
  std::size_t n_in = 256;
  double alpha = 0.5;
  double beta = 0.15;
  double gamma = 0.005;
  std::size_t k = 12;          // curvature / regularizer neighborhood
  double epsilon = 0.01;       // Eq.-3 smoothing
  double lr_g = 1e-3;
  double lr_d = 1e-4;
  double decay = 0.7;
  std::int64_t decay_interval = 0;  // 0 = total_steps / 3, chosen at train time
  std::size_t batch = 28;
  std::size_t epochs = 120;
  std::uint64_t seed = 1;
  std::size_t k_feature = 16;  // EdgeConv K; dropped to 8 when n_in < 64
  std::vector<int> widths = {24, 48, 48};  // dense EdgeConv layer widths
  int lift_dim = 24;
  int fuse_dim = 24;
  int expand_dim = 128;        // C2
  double val_fraction = 0.25;
  double emd_eps_frac = 0.01;  // auction tolerance used by the training loss
  std::size_t dense_total = 0; // dataset generation; 0 = auto
  std::size_t patches = 8;     // default patch count for dataset/upsampling

  // EdgeConv K with the small-input fallback.
  std::size_t feature_k() const { return n_in < 64 ? std::min<std::size_t>(8, k_feature) : k_feature; }

  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);  // throws on unknown keys
  static TrainConfig load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace cadpu
