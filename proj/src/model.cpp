#include "cadpu/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cadpu/errors.hpp"
#include "cadpu/metrics.hpp"
#include "cadpu/rng.hpp"

namespace cadpu {

namespace {

constexpr double kLeakySlope = 0.2;

Tensor he_uniform(std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  Tensor t = Tensor::zeros({fan_in, fan_out});
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

void add_linear(ParamSet& p, const std::string& name, std::int64_t in,
                std::int64_t out, Rng& rng) {
  p.emplace(name + ".w", he_uniform(in, out, rng));
  p.emplace(name + ".b", Tensor::zeros({out}));
}

struct BlockDims {
  std::int64_t in = 0;       // block input feature width
  std::int64_t edge = 0;     // 2 * in
  std::int64_t w1 = 0, w2 = 0, w3 = 0;
  std::int64_t pooled = 0;   // w1 + w2 + w3
};

BlockDims block_dims(const TrainConfig& cfg, int block) {
  BlockDims d;
  d.in = block == 0 ? cfg.lift_dim : cfg.fuse_dim;
  d.edge = 2 * d.in;
  d.w1 = cfg.widths.at(0);
  d.w2 = cfg.widths.at(1);
  d.w3 = cfg.widths.at(2);
  d.pooled = d.w1 + d.w2 + d.w3;
  return d;
}

}  // namespace

int extractor_output_dim(const TrainConfig& cfg) {
  return cfg.lift_dim + 4 * cfg.fuse_dim;
}

ParamSet init_generator_params(const TrainConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet p;
  add_linear(p, "lift", 3, cfg.lift_dim, rng);
  for (int b = 0; b < 4; ++b) {
    const BlockDims d = block_dims(cfg, b);
    const std::string base = "block" + std::to_string(b + 1);
    add_linear(p, base + ".d1", d.edge, d.w1, rng);
    add_linear(p, base + ".d2", d.edge + d.w1, d.w2, rng);
    add_linear(p, base + ".d3", d.edge + d.w1 + d.w2, d.w3, rng);
    add_linear(p, base + ".fuse", d.in + d.pooled, cfg.fuse_dim, rng);
  }
  const int c1 = extractor_output_dim(cfg);
  add_linear(p, "expand.l1", c1 + 2, cfg.expand_dim, rng);
  add_linear(p, "expand.l2", cfg.expand_dim, cfg.expand_dim, rng);
  add_linear(p, "reg.l1", cfg.expand_dim, 128, rng);
  add_linear(p, "reg.l2", 128, 64, rng);
  add_linear(p, "reg.l3", 64, 3, rng);
  return p;
}

ParamSet init_discriminator_params(std::uint64_t seed) {
  Rng rng(seed);
  ParamSet p;
  add_linear(p, "mlp1", 3, 64, rng);
  add_linear(p, "mlp2", 64, 128, rng);
  add_linear(p, "mlp3", 128, 256, rng);
  add_linear(p, "cls1", 256, 64, rng);
  add_linear(p, "cls2", 64, 1, rng);
  return p;
}

std::size_t param_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += static_cast<std::size_t>(t.numel());
  return n;
}

// ---------------------------------------------------------------------------
// Expansion plan

std::vector<std::array<double, 2>> canonical_grid_corners(std::size_t count) {
  std::vector<std::array<double, 2>> corners;
  corners.push_back({0.0, 0.0});
  for (int radius = 1; corners.size() < count; ++radius) {
    struct RingPoint {
      int x, y;
      double len2, angle;
    };
    std::vector<RingPoint> ring;
    for (int x = -radius; x <= radius; ++x) {
      for (int y = -radius; y <= radius; ++y) {
        if (std::max(std::abs(x), std::abs(y)) != radius) continue;
        double a = std::atan2(static_cast<double>(y), static_cast<double>(x));
        if (a < 0.0) a += 6.283185307179586476925286766559;
        ring.push_back({x, y, static_cast<double>(x * x + y * y), a});
      }
    }
    std::sort(ring.begin(), ring.end(), [](const RingPoint& a, const RingPoint& b) {
      if (a.len2 != b.len2) return a.len2 < b.len2;
      return a.angle < b.angle;
    });
    for (const auto& p : ring)
      corners.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
  }
  corners.resize(count);
  return corners;
}

ExpansionPlan plan_expansion(const CurvatureField& curvatures, double alpha,
                             std::size_t r, double epsilon, std::uint64_t seed) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("plan_expansion: alpha must be in [0,1]");
  if (r < 2) throw std::invalid_argument("plan_expansion: r must be >= 2");
  const std::size_t n = curvatures.values.size();
  if (n == 0) throw std::invalid_argument("plan_expansion: empty curvature field");

  const std::size_t total = r * n;
  std::size_t uniform = static_cast<std::size_t>(
      std::llround(alpha * static_cast<double>(total)));
  uniform = std::min(uniform, total);

  ExpansionPlan plan;
  plan.uniform_count = uniform;
  plan.input_size = n;
  plan.rate = r;
  plan.sources.reserve(total);
  for (std::size_t s = 0; s < uniform; ++s) plan.sources.push_back(s % n);

  if (uniform < total) {
    const SamplingWeights w = sampling_weights(curvatures, epsilon);
    std::vector<double> cum(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += w.weights[i];
      cum[i] = acc;
    }
    Rng rng(seed);
    for (std::size_t s = uniform; s < total; ++s) {
      const double u = rng.uniform01() * acc;
      const auto it = std::upper_bound(cum.begin(), cum.end(), u);
      std::size_t idx = static_cast<std::size_t>(it - cum.begin());
      if (idx >= n) idx = n - 1;
      plan.sources.push_back(idx);
    }
  }

  // Occurrence rank within the duplicate group picks the grid corner.
  std::vector<std::size_t> seen(n, 0);
  std::size_t max_group = 0;
  for (std::size_t i : plan.sources) max_group = std::max(max_group, ++seen[i]);
  const auto corners = canonical_grid_corners(max_group);
  std::fill(seen.begin(), seen.end(), 0);
  plan.grid_coords.reserve(total);
  for (std::size_t i : plan.sources) plan.grid_coords.push_back(corners[seen[i]++]);
  return plan;
}

// ---------------------------------------------------------------------------
// Tape-level forward passes

Var BoundParams::at(const std::string& name) const {
  const auto it = vars.find(name);
  if (it == vars.end())
    throw std::logic_error("BoundParams: missing parameter " + name);
  return it->second;
}

BoundParams bind_params(Tape& tape, const ParamSet& params, bool requires_grad) {
  BoundParams out;
  for (const auto& [name, t] : params)
    out.vars.emplace(name, tape.input(t, requires_grad));
  return out;
}

GradSet collect_grads(const Tape& tape, const BoundParams& bound) {
  GradSet g;
  for (const auto& [name, var] : bound.vars) g.emplace(name, tape.grad(var));
  return g;
}

namespace {

Var linear(Tape& t, Var x, const BoundParams& p, const std::string& name) {
  return t.add(t.matmul(x, p.at(name + ".w")), p.at(name + ".b"));
}

// Brute-force feature-space kNN (self excluded, ties to the lower index).
void feature_knn(const Tensor& feats, std::size_t k,
                 std::vector<std::int64_t>& centers,
                 std::vector<std::int64_t>& neighbors) {
  const std::size_t n = static_cast<std::size_t>(feats.dim(0));
  const std::size_t c = static_cast<std::size_t>(feats.dim(1));
  const std::size_t kk = std::min(k, n - 1);
  centers.clear();
  neighbors.clear();
  centers.reserve(n * kk);
  neighbors.reserve(n * kk);

  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* fi = feats.data.data() + i * c;
    for (std::size_t j = 0; j < n; ++j) {
      const double* fj = feats.data.data() + j * c;
      double d = 0.0;
      for (std::size_t d0 = 0; d0 < c; ++d0) {
        const double diff = fi[d0] - fj[d0];
        d += diff * diff;
      }
      dist[j] = {d, j};
    }
    dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(kk),
                      dist.end());
    for (std::size_t m = 0; m < kk; ++m) {
      centers.push_back(static_cast<std::int64_t>(i));
      neighbors.push_back(static_cast<std::int64_t>(dist[m].second));
    }
  }
}

}  // namespace

Var extract_features(Tape& tape, Var points, const BoundParams& gen,
                     const TrainConfig& cfg) {
  const Tensor& pts = tape.value(points);
  if (pts.ndim() != 2 || pts.dim(1) != 3)
    throw std::invalid_argument("extract_features: points must be [N,3]");
  const std::size_t n = static_cast<std::size_t>(pts.dim(0));
  const std::size_t k = cfg.feature_k();
  if (n <= k)
    throw std::invalid_argument("extract_features: need more points than K");

  Var f = linear(tape, points, gen, "lift");
  std::vector<Var> stages = {f};

  std::vector<std::int64_t> centers, neighbors;
  for (int b = 0; b < 4; ++b) {
    const std::string base = "block" + std::to_string(b + 1);
    feature_knn(tape.value(f), k, centers, neighbors);
    const std::size_t kk = centers.size() / n;

    Var fc = tape.gather_rows(f, centers);
    Var fn = tape.gather_rows(f, neighbors);
    Var diff = tape.add(fn, tape.scale(fc, -1.0));
    const std::array<Var, 2> edge_parts = {fc, diff};
    Var edge = tape.concat(edge_parts, 1);

    Var h1 = tape.relu(linear(tape, edge, gen, base + ".d1"));
    const std::array<Var, 2> in2 = {edge, h1};
    Var h2 = tape.relu(linear(tape, tape.concat(in2, 1), gen, base + ".d2"));
    const std::array<Var, 3> in3 = {edge, h1, h2};
    Var h3 = tape.relu(linear(tape, tape.concat(in3, 1), gen, base + ".d3"));
    const std::array<Var, 3> outs = {h1, h2, h3};
    Var eo = tape.concat(outs, 1);

    const std::int64_t pooled_w = tape.value(eo).dim(1);
    Var eo3 = tape.reshape(eo, {static_cast<std::int64_t>(n),
                                static_cast<std::int64_t>(kk), pooled_w});
    Var pooled = tape.max_over_axis(eo3, 1).values;

    const std::array<Var, 2> skip = {f, pooled};
    f = linear(tape, tape.concat(skip, 1), gen, base + ".fuse");
    stages.push_back(f);
  }
  return tape.concat(stages, 1);
}

Var expand_features(Tape& tape, Var features, const ExpansionPlan& plan,
                    const BoundParams& gen) {
  const Tensor& f = tape.value(features);
  if (f.ndim() != 2 ||
      static_cast<std::size_t>(f.dim(0)) != plan.input_size)
    throw std::invalid_argument("expand_features: plan/features mismatch");

  std::vector<std::int64_t> rows(plan.sources.size());
  for (std::size_t i = 0; i < plan.sources.size(); ++i)
    rows[i] = static_cast<std::int64_t>(plan.sources[i]);
  Var gathered = tape.gather_rows(features, std::move(rows));

  Tensor grid = Tensor::zeros({static_cast<std::int64_t>(plan.grid_coords.size()), 2});
  for (std::size_t i = 0; i < plan.grid_coords.size(); ++i) {
    grid.data[2 * i] = plan.grid_coords[i][0];
    grid.data[2 * i + 1] = plan.grid_coords[i][1];
  }
  Var grid_var = tape.constant(std::move(grid));
  const std::array<Var, 2> aug_parts = {gathered, grid_var};
  Var aug = tape.concat(aug_parts, 1);

  Var e1 = tape.leaky_relu(linear(tape, aug, gen, "expand.l1"), kLeakySlope);
  return linear(tape, e1, gen, "expand.l2");
}

Var regress_points(Tape& tape, Var features, const BoundParams& gen) {
  Var h1 = tape.leaky_relu(linear(tape, features, gen, "reg.l1"), kLeakySlope);
  Var h2 = tape.leaky_relu(linear(tape, h1, gen, "reg.l2"), kLeakySlope);
  return linear(tape, h2, gen, "reg.l3");
}

Var generator_forward(Tape& tape, Var points, const ExpansionPlan& plan,
                      const BoundParams& gen, const TrainConfig& cfg) {
  Var f1 = extract_features(tape, points, gen, cfg);
  Var f2 = expand_features(tape, f1, plan, gen);
  return regress_points(tape, f2, gen);
}

Var discriminator_score(Tape& tape, Var cloud, const BoundParams& dis) {
  const Tensor& pts = tape.value(cloud);
  if (pts.ndim() != 2 || pts.dim(1) != 3 || pts.dim(0) == 0)
    throw std::invalid_argument("discriminator_score: cloud must be nonempty [M,3]");
  Var h = tape.relu(linear(tape, cloud, dis, "mlp1"));
  h = tape.relu(linear(tape, h, dis, "mlp2"));
  h = tape.relu(linear(tape, h, dis, "mlp3"));
  Var pooled = tape.max_over_axis(h, 0).values;          // [256]
  Var row = tape.reshape(pooled, {1, tape.value(pooled).dim(0)});
  Var c1 = tape.relu(linear(tape, row, dis, "cls1"));
  Var score = linear(tape, c1, dis, "cls2");              // [1,1]
  return tape.reshape(score, {1});
}

// ---------------------------------------------------------------------------
// Value-level helpers

Tensor cloud_to_tensor(const PointCloud& cloud) {
  Tensor t = Tensor::zeros({static_cast<std::int64_t>(cloud.size()), 3});
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    t.data[3 * i] = cloud.points[i].x;
    t.data[3 * i + 1] = cloud.points[i].y;
    t.data[3 * i + 2] = cloud.points[i].z;
  }
  return t;
}

PointCloud tensor_to_cloud(const Tensor& t) {
  if (t.ndim() != 2 || t.dim(1) != 3)
    throw std::invalid_argument("tensor_to_cloud: expected [N,3]");
  PointCloud c;
  c.points.resize(static_cast<std::size_t>(t.dim(0)));
  for (std::size_t i = 0; i < c.points.size(); ++i)
    c.points[i] = {t.data[3 * i], t.data[3 * i + 1], t.data[3 * i + 2]};
  return c;
}

namespace {

ExpansionPlan plan_for_cloud(const PointCloud& input, const TrainConfig& cfg,
                             std::uint64_t seed) {
  const KnnIndex index(input);
  const CurvatureField curv = surface_variation(input, index, cfg.k);
  return plan_expansion(curv, cfg.alpha, cfg.r, cfg.epsilon, seed);
}

}  // namespace

PointCloud generator_infer(const PointCloud& input, const ParamSet& gen,
                           const TrainConfig& cfg, std::uint64_t seed) {
  const ExpansionPlan plan = plan_for_cloud(input, cfg, seed);
  Tape tape;
  BoundParams bound = bind_params(tape, gen, false);
  Var x = tape.constant(cloud_to_tensor(input));
  Var pred = generator_forward(tape, x, plan, bound, cfg);
  return tensor_to_cloud(tape.value(pred));
}

double discriminator_infer(const PointCloud& cloud, const ParamSet& dis) {
  Tape tape;
  BoundParams bound = bind_params(tape, dis, false);
  Var x = tape.constant(cloud_to_tensor(cloud));
  Var s = discriminator_score(tape, x, bound);
  return tape.value(s).data[0];
}

// ---------------------------------------------------------------------------
// Losses

double generator_loss(const PointCloud& pred, const PointCloud& gt,
                      double d_score_on_pred, double beta, double gamma,
                      std::size_t k, double emd_eps_frac) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("generator_loss: size mismatch");
  const EmdLossGrad emd = emd_loss_and_grad(pred, gt, emd_eps_frac);
  double loss = emd.loss;
  if (beta != 0.0) loss += beta * regularizer(pred, gt, k);
  const double d = d_score_on_pred - 1.0;
  loss += 0.5 * gamma * d * d;
  return loss;
}

double discriminator_loss(double d_score_on_pred, double d_score_on_gt) {
  const double a = d_score_on_pred;
  const double b = d_score_on_gt - 1.0;
  return 0.5 * (a * a + b * b);
}

double discriminator_loss(const std::vector<double>& d_pred,
                          const std::vector<double>& d_gt) {
  if (d_pred.size() != d_gt.size() || d_pred.empty())
    throw std::invalid_argument("discriminator_loss: batch size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < d_pred.size(); ++i)
    acc += discriminator_loss(d_pred[i], d_gt[i]);
  return acc / static_cast<double>(d_pred.size());
}

// ---------------------------------------------------------------------------
// Training

namespace {

void accumulate(GradSet& total, const GradSet& part, double weight) {
  for (const auto& [name, g] : part) {
    auto it = total.find(name);
    if (it == total.end()) {
      Tensor t = g;
      for (double& v : t.data) v *= weight;
      total.emplace(name, std::move(t));
    } else {
      Tensor& t = it->second;
      for (std::size_t i = 0; i < t.data.size(); ++i)
        t.data[i] += weight * g.data[i];
    }
  }
}

void check_loss_finite(double v, const char* what, std::size_t epoch,
                       std::size_t batch, const std::string& pair_id) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "train: non-finite " << what << " at epoch " << epoch << " batch "
        << batch << " pair " << pair_id;
    throw NumericalError(msg.str());
  }
}

}  // namespace

TrainResult train(const std::vector<TrainPair>& pairs, const TrainConfig& cfg,
                  const TrainState* resume) {
  if (pairs.empty()) throw std::invalid_argument("train: no training pairs");
  for (const auto& p : pairs) {
    if (p.input.size() != cfg.n_in)
      throw std::invalid_argument("train: pair input size != n_in");
    if (p.target.size() != cfg.r * p.input.size())
      throw std::invalid_argument("train: target size != r * input size");
  }
  if (cfg.batch == 0 || cfg.epochs == 0)
    throw std::invalid_argument("train: batch and epochs must be positive");

  TrainResult result;
  if (resume != nullptr) {
    result.state = *resume;
  } else {
    result.state.gen = init_generator_params(cfg, derive_seed(cfg.seed, 11));
    result.state.dis = init_discriminator_params(derive_seed(cfg.seed, 12));
  }
  TrainState& st = result.state;

  // Deterministic train/validation split.
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  {
    Rng rng(derive_seed(cfg.seed, 7001));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  std::size_t val_count = static_cast<std::size_t>(
      std::llround(cfg.val_fraction * static_cast<double>(pairs.size())));
  if (pairs.size() > 1 && cfg.val_fraction > 0.0)
    val_count = std::max<std::size_t>(val_count, 1);
  val_count = std::min(val_count, pairs.size() - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<long>(val_count));
  std::vector<std::size_t> val_idx(order.end() - static_cast<long>(val_count), order.end());

  const std::size_t steps_per_epoch = (train_idx.size() + cfg.batch - 1) / cfg.batch;
  const std::int64_t total_steps =
      static_cast<std::int64_t>(cfg.epochs * steps_per_epoch);

  st.opt_g.lr = cfg.lr_g;
  st.opt_d.lr = cfg.lr_d;
  st.opt_g.decay = st.opt_d.decay = cfg.decay;
  const std::int64_t interval =
      cfg.decay_interval > 0 ? cfg.decay_interval : std::max<std::int64_t>(total_steps / 3, 1);
  st.opt_g.decay_interval = st.opt_d.decay_interval = interval;

  // Static per-pair caches: input tensors and curvature fields.
  std::vector<Tensor> input_tensors(pairs.size());
  std::vector<CurvatureField> curv_fields(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    input_tensors[i] = cloud_to_tensor(pairs[i].input);
    const KnnIndex index(pairs[i].input);
    curv_fields[i] = surface_variation(pairs[i].input, index, cfg.k);
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> shuffled = train_idx;
    {
      Rng rng(derive_seed(cfg.seed, 100 + epoch));
      for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
    }

    EpochLog log;
    std::size_t g_count = 0;

    for (std::size_t batch_start = 0, batch_id = 0; batch_start < shuffled.size();
         batch_start += cfg.batch, ++batch_id) {
      const std::size_t batch_end = std::min(batch_start + cfg.batch, shuffled.size());
      const std::size_t bsz = batch_end - batch_start;
      const double inv_b = 1.0 / static_cast<double>(bsz);

      // Expansion plans for this step (sampling varies per step).
      std::vector<ExpansionPlan> plans(bsz);
      for (std::size_t j = 0; j < bsz; ++j) {
        const std::size_t pi = shuffled[batch_start + j];
        plans[j] = plan_expansion(
            curv_fields[pi], cfg.alpha, cfg.r, cfg.epsilon,
            derive_seed(cfg.seed, (epoch * 1000003ULL + batch_id) * 131ULL + j));
      }

      // --- discriminator step (current generator) ---
      // With batch size 1 the tracked generator tape is built up front and
      // reused for the generator step below; the values are identical to a
      // separate gradless forward, so both paths give the same results.
      const bool reuse_forward = (bsz == 1);
      std::vector<PointCloud> preds(bsz);
      Tape reused_tape;
      BoundParams reused_bound;
      Var reused_pred;
      if (reuse_forward) {
        const std::size_t pi = shuffled[batch_start];
        reused_bound = bind_params(reused_tape, st.gen, true);
        Var x = reused_tape.constant(input_tensors[pi]);
        reused_pred = generator_forward(reused_tape, x, plans[0], reused_bound, cfg);
        preds[0] = tensor_to_cloud(reused_tape.value(reused_pred));
      } else {
        for (std::size_t j = 0; j < bsz; ++j) {
          const std::size_t pi = shuffled[batch_start + j];
          Tape tape;
          BoundParams g_bound = bind_params(tape, st.gen, false);
          Var x = tape.constant(input_tensors[pi]);
          Var pred = generator_forward(tape, x, plans[j], g_bound, cfg);
          preds[j] = tensor_to_cloud(tape.value(pred));
        }
      }
      {
        GradSet d_grads;
        double d_loss_acc = 0.0;
        for (std::size_t j = 0; j < bsz; ++j) {
          const std::size_t pi = shuffled[batch_start + j];
          Tape tape;
          BoundParams d_bound = bind_params(tape, st.dis, true);
          Var sp = discriminator_score(tape, tape.constant(cloud_to_tensor(preds[j])), d_bound);
          Var sg = discriminator_score(
              tape, tape.constant(cloud_to_tensor(pairs[pi].target)), d_bound);
          Var loss = tape.scale(
              tape.add(tape.square(sp), tape.square(tape.add_scalar(sg, -1.0))), 0.5);
          const double lv = tape.value(loss).data[0];
          check_loss_finite(lv, "discriminator loss", epoch, batch_id, pairs[pi].patch_id);
          d_loss_acc += lv;
          tape.backward(loss);
          accumulate(d_grads, collect_grads(tape, d_bound), inv_b);
        }
        adam_step(st.dis, d_grads, st.opt_d);
        log.adv_d += d_loss_acc * inv_b;
      }

      // --- generator step (updated discriminator) ---
      {
        GradSet g_grads;
        for (std::size_t j = 0; j < bsz; ++j) {
          const std::size_t pi = shuffled[batch_start + j];
          Tape fresh_tape;
          Tape& tape = reuse_forward ? reused_tape : fresh_tape;
          BoundParams g_bound;
          Var pred;
          if (reuse_forward) {
            g_bound = reused_bound;
            pred = reused_pred;
          } else {
            g_bound = bind_params(tape, st.gen, true);
            Var x = tape.constant(input_tensors[pi]);
            pred = generator_forward(tape, x, plans[j], g_bound, cfg);
          }
          BoundParams d_bound = bind_params(tape, st.dis, false);
          const PointCloud& pred_cloud = preds[j];

          const EmdLossGrad emd =
              emd_loss_and_grad(pred_cloud, pairs[pi].target, cfg.emd_eps_frac);
          Tensor emd_grad = Tensor::zeros({static_cast<std::int64_t>(pred_cloud.size()), 3});
          for (std::size_t q = 0; q < pred_cloud.size(); ++q) {
            emd_grad.data[3 * q] = emd.grad[q].x;
            emd_grad.data[3 * q + 1] = emd.grad[q].y;
            emd_grad.data[3 * q + 2] = emd.grad[q].z;
          }
          Var emd_node = tape.inject_loss(pred, emd.loss, std::move(emd_grad));

          const RegularizerStructure rs =
              build_regularizer_structure(pred_cloud, pairs[pi].target, cfg.k);
          const double reg_value = regularizer_value(rs, pred_cloud.points);
          const auto reg_grad_vec = regularizer_grad_frozen(rs, pred_cloud.points);
          Tensor reg_grad = Tensor::zeros({static_cast<std::int64_t>(pred_cloud.size()), 3});
          for (std::size_t q = 0; q < pred_cloud.size(); ++q) {
            reg_grad.data[3 * q] = reg_grad_vec[q].x;
            reg_grad.data[3 * q + 1] = reg_grad_vec[q].y;
            reg_grad.data[3 * q + 2] = reg_grad_vec[q].z;
          }
          Var reg_node = tape.inject_loss(pred, reg_value, std::move(reg_grad));

          Var d_score = discriminator_score(tape, pred, d_bound);
          Var adv = tape.scale(tape.square(tape.add_scalar(d_score, -1.0)),
                               0.5 * cfg.gamma);
          Var total = tape.add(tape.add(emd_node, tape.scale(reg_node, cfg.beta)), adv);

          const double tv = tape.value(total).data[0];
          check_loss_finite(tv, "generator loss", epoch, batch_id, pairs[pi].patch_id);
          log.emd += emd.loss;
          log.reg += reg_value;
          log.adv_g += tape.value(adv).data[0];
          ++g_count;

          tape.backward(total);
          accumulate(g_grads, collect_grads(tape, g_bound), inv_b);
        }
        adam_step(st.gen, g_grads, st.opt_g);
      }
      st.global_step += 1;
    }

    log.emd /= static_cast<double>(std::max<std::size_t>(g_count, 1));
    log.reg /= static_cast<double>(std::max<std::size_t>(g_count, 1));
    log.adv_g /= static_cast<double>(std::max<std::size_t>(g_count, 1));
    log.adv_d /= static_cast<double>(std::max<std::size_t>(steps_per_epoch, 1));

    // Validation Chamfer distance with per-pair fixed plan seeds so epochs
    // are comparable.
    const std::vector<std::size_t>& eval_idx = val_idx.empty() ? train_idx : val_idx;
    double cd_acc = 0.0;
    for (std::size_t pi : eval_idx) {
      const PointCloud pred = generator_infer(
          pairs[pi].input, st.gen, cfg, derive_seed(cfg.seed, 5000 + pi));
      cd_acc += chamfer(pred, pairs[pi].target);
    }
    log.val_cd = cd_acc / static_cast<double>(eval_idx.size());
    result.log.push_back(log);
  }
  return result;
}

PointCloud upsample(const PointCloud& input, const ParamSet& gen,
                    const TrainConfig& cfg, std::uint64_t seed) {
  if (input.size() != cfg.n_in)
    throw std::invalid_argument("upsample: input size " +
                                std::to_string(input.size()) +
                                " does not match configured n_in " +
                                std::to_string(cfg.n_in));
  const NormalizeResult norm = normalize_unit_sphere(input);
  const PointCloud pred = generator_infer(norm.cloud, gen, cfg, seed);
  return denormalize(pred, norm.center, norm.scale);
}

PointCloud duplicate_jitter_baseline(const PointCloud& input, std::size_t r,
                                     double stddev, std::uint64_t seed) {
  PointCloud out;
  out.points.reserve(input.size() * r);
  Rng rng(seed);
  for (std::size_t copy = 0; copy < r; ++copy) {
    for (const Vec3& p : input.points) {
      out.points.push_back({p.x + rng.normal(0.0, stddev),
                            p.y + rng.normal(0.0, stddev),
                            p.z + rng.normal(0.0, stddev)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint packing

ParamSet pack_train_state(const TrainState& state) {
  ParamSet out;
  for (const auto& [name, t] : state.gen) out.emplace("g/" + name, t);
  for (const auto& [name, t] : state.dis) out.emplace("d/" + name, t);
  for (const auto& [name, t] : state.opt_g.m) out.emplace("opt_g/m/" + name, t);
  for (const auto& [name, t] : state.opt_g.v) out.emplace("opt_g/v/" + name, t);
  for (const auto& [name, t] : state.opt_d.m) out.emplace("opt_d/m/" + name, t);
  for (const auto& [name, t] : state.opt_d.v) out.emplace("opt_d/v/" + name, t);
  out.emplace("meta/step", Tensor::scalar(static_cast<double>(state.global_step)));
  out.emplace("meta/opt_g_step", Tensor::scalar(static_cast<double>(state.opt_g.step)));
  out.emplace("meta/opt_d_step", Tensor::scalar(static_cast<double>(state.opt_d.step)));
  return out;
}

TrainState unpack_train_state(const ParamSet& records, const TrainConfig& cfg) {
  TrainState st;
  for (const auto& [name, t] : records) {
    if (name.rfind("g/", 0) == 0) st.gen.emplace(name.substr(2), t);
    else if (name.rfind("d/", 0) == 0) st.dis.emplace(name.substr(2), t);
    else if (name.rfind("opt_g/m/", 0) == 0) st.opt_g.m.emplace(name.substr(8), t);
    else if (name.rfind("opt_g/v/", 0) == 0) st.opt_g.v.emplace(name.substr(8), t);
    else if (name.rfind("opt_d/m/", 0) == 0) st.opt_d.m.emplace(name.substr(8), t);
    else if (name.rfind("opt_d/v/", 0) == 0) st.opt_d.v.emplace(name.substr(8), t);
    else if (name == "meta/step") st.global_step = static_cast<std::int64_t>(t.data.at(0));
    else if (name == "meta/opt_g_step") st.opt_g.step = static_cast<std::int64_t>(t.data.at(0));
    else if (name == "meta/opt_d_step") st.opt_d.step = static_cast<std::int64_t>(t.data.at(0));
    else throw DataError("checkpoint: unknown record '" + name + "'");
  }
  if (st.gen.empty()) throw DataError("checkpoint: no generator parameters");
  st.opt_g.lr = cfg.lr_g;
  st.opt_d.lr = cfg.lr_d;
  st.opt_g.decay = st.opt_d.decay = cfg.decay;
  return st;
}

}  // namespace cadpu
