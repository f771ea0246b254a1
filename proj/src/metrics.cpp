#include "cadpu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cadpu/errors.hpp"
#include "cadpu/parallel.hpp"

namespace cadpu {

namespace {

// Per-point nearest-neighbor distances from a to b (parallel fill,
// sequential reduction by the callers).
std::vector<double> nearest_distances(const PointCloud& a, const KnnIndex& b_index) {
  std::vector<double> d(a.size());
  parallel_for(a.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto nb = b_index.nearest(a.points[i], 1);
      d[i] = (a.points[i] - b_index.cloud().points[nb[0]]).norm();
    }
  });
  return d;
}

std::vector<double> cost_matrix(const PointCloud& a, const PointCloud& b) {
  const std::size_t n = a.size();
  std::vector<double> c(n * n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t j = 0; j < n; ++j)
        c[i * n + j] = (a.points[i] - b.points[j]).norm();
  });
  return c;
}

double assignment_cost(const PointCloud& a, const PointCloud& b,
                       const std::vector<std::size_t>& mapping) {
  double cost = 0.0;
  for (std::size_t i = 0; i < mapping.size(); ++i)
    cost += (a.points[i] - b.points[mapping[i]]).norm();
  return cost;
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty cloud");
  const KnnIndex ia(a), ib(b);
  const auto da = nearest_distances(a, ib);
  const auto db = nearest_distances(b, ia);
  double ma = 0.0, mb = 0.0;
  for (double d : da) ma += d;
  for (double d : db) mb += d;
  ma /= static_cast<double>(da.size());
  mb /= static_cast<double>(db.size());
  return 0.5 * (ma + mb);
}

double hausdorff(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("hausdorff: empty cloud");
  const KnnIndex ia(a), ib(b);
  const auto da = nearest_distances(a, ib);
  const auto db = nearest_distances(b, ia);
  double m = 0.0;
  for (double d : da) m = std::max(m, d);
  for (double d : db) m = std::max(m, d);
  return m;
}

Assignment emd_exact(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("emd_exact: size mismatch");
  if (a.empty()) throw std::invalid_argument("emd_exact: empty cloud");
  if (a.size() > 512)
    throw std::invalid_argument("emd_exact: size > 512, use auction");

  const std::size_t n = a.size();
  const auto cost = cost_matrix(a, b);

  // Hungarian algorithm, O(n^3) shortest-augmenting-path form with
  // potentials. Rows and columns are 1-based internally.
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0);  // column -> row (1-based)
  std::vector<std::size_t> way(n + 1, 0);

  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment out;
  out.mapping.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.mapping[match[j] - 1] = j - 1;
  out.cost = assignment_cost(a, b, out.mapping);
  return out;
}

Assignment emd_auction(const PointCloud& a, const PointCloud& b,
                       double epsilon_frac) {
  if (a.size() != b.size())
    throw std::invalid_argument("emd_auction: size mismatch");
  if (a.empty()) throw std::invalid_argument("emd_auction: empty cloud");
  if (!(epsilon_frac > 0.0))
    throw std::invalid_argument("emd_auction: epsilon_frac must be positive");

  const std::size_t n = a.size();
  const auto cost = cost_matrix(a, b);

  double max_cost = 0.0;
  double lower_bound = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_min = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      max_cost = std::max(max_cost, cost[i * n + j]);
      row_min = std::min(row_min, cost[i * n + j]);
    }
    lower_bound += row_min;
  }

  Assignment out;
  out.mapping.assign(n, 0);
  if (max_cost == 0.0) {
    // Every pair coincides; the identity bijection is optimal.
    for (std::size_t i = 0; i < n; ++i) out.mapping[i] = i;
    out.cost = 0.0;
    return out;
  }

  const double eps_final = std::max(
      epsilon_frac * lower_bound / static_cast<double>(n), max_cost * 1e-12);
  const std::size_t max_bids_per_phase = 1000 * (n + 1) * (n + 1);

  std::vector<double> price(n, 0.0);
  std::vector<std::size_t> owner(n);          // object -> person
  std::vector<std::size_t> assigned_to(n);    // person -> object
  const std::size_t kNone = static_cast<std::size_t>(-1);

  double eps = max_cost / 2.0;
  bool last_phase = false;
  if (eps <= eps_final) {
    eps = eps_final;
    last_phase = true;
  }

  while (true) {
    // Values are negated costs; prices persist across phases.
    std::fill(owner.begin(), owner.end(), kNone);
    std::fill(assigned_to.begin(), assigned_to.end(), kNone);
    std::deque<std::size_t> unassigned;
    for (std::size_t i = 0; i < n; ++i) unassigned.push_back(i);

    std::size_t bids = 0;
    while (!unassigned.empty()) {
      if (++bids > max_bids_per_phase) {
        std::ostringstream msg;
        msg << "emd_auction: no convergence after " << max_bids_per_phase
            << " bids (n=" << n << ", eps=" << eps
            << ", unassigned=" << unassigned.size() << ")";
        throw NumericalError(msg.str());
      }
      const std::size_t person = unassigned.front();
      unassigned.pop_front();

      double best_profit = -std::numeric_limits<double>::infinity();
      double second_profit = -std::numeric_limits<double>::infinity();
      std::size_t best_obj = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double profit = -cost[person * n + j] - price[j];
        if (profit > best_profit) {
          second_profit = best_profit;
          best_profit = profit;
          best_obj = j;
        } else if (profit > second_profit) {
          second_profit = profit;
        }
      }
      const double increment =
          (second_profit == -std::numeric_limits<double>::infinity())
              ? max_cost + eps
              : best_profit - second_profit + eps;
      price[best_obj] += increment;

      const std::size_t prev = owner[best_obj];
      if (prev != kNone) {
        assigned_to[prev] = kNone;
        unassigned.push_back(prev);
      }
      owner[best_obj] = person;
      assigned_to[person] = best_obj;
    }

    if (last_phase) break;
    eps /= 4.0;
    if (eps <= eps_final) {
      eps = eps_final;
      last_phase = true;
    }
  }

  out.mapping = assigned_to;
  out.cost = assignment_cost(a, b, out.mapping);
  return out;
}

EmdLossGrad emd_loss_and_grad(const PointCloud& pred, const PointCloud& gt,
                              double epsilon_frac) {
  EmdLossGrad out;
  out.assignment = emd_auction(pred, gt, epsilon_frac);
  out.grad.assign(pred.size(), Vec3{});
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec3 d = pred.points[i] - gt.points[out.assignment.mapping[i]];
    const double rho = d.norm();
    out.loss += rho;
    if (rho >= 1e-12) out.grad[i] = d / rho;
  }
  return out;
}

}  // namespace cadpu
