/*
 * Copyright 2026 The srltrace Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "srl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "srl/common.hpp"
#include "srl/io.hpp"

namespace srl::clustering {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

void require_rows(const DataMatrix& data, std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (data.rows() < k) {
    throw ValidationError(fmt::format("need at least k={} items, got {}", k, data.rows()));
  }
}

void require_finite(const DataMatrix& data) {
  for (double v : data.values()) {
    if (!std::isfinite(v)) throw ValidationError("input vectors contain non-finite values");
  }
}

std::size_t count_clusters(std::span<const std::size_t> labels) {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

std::vector<std::vector<std::size_t>> members_of(std::span<const std::size_t> labels) {
  std::vector<std::vector<std::size_t>> members(count_clusters(labels));
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  members.erase(std::remove_if(members.begin(), members.end(), [](const auto& m) { return m.empty(); }),
                members.end());
  return members;
}

double log_sum_exp(std::span<const double> v) {
  double hi = -kInf;
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double s = 0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

// ---------------------------------------------------------------- k-medoids

struct PamState {
  const DistanceMatrix& d;
  std::vector<std::size_t> medoids;
  std::vector<std::size_t> nearest;
  std::vector<double> d_near;
  std::vector<double> d_second;
  std::vector<double> removal_loss;

  PamState(const DistanceMatrix& dist, std::vector<std::size_t> initial)
      : d(dist), medoids(std::move(initial)) {
    const std::size_t n = d.size();
    nearest.assign(n, 0);
    d_near.assign(n, kInf);
    d_second.assign(n, kInf);
    refresh();
  }

  void refresh() {
    const std::size_t n = d.size();
    removal_loss.assign(medoids.size(), 0.0);
    for (std::size_t o = 0; o < n; ++o) {
      double best = kInf, second = kInf;
      std::size_t slot = 0;
      for (std::size_t m = 0; m < medoids.size(); ++m) {
        const double v = d(o, medoids[m]);
        if (v < best) {
          second = best;
          best = v;
          slot = m;
        } else if (v < second) {
          second = v;
        }
      }
      nearest[o] = slot;
      d_near[o] = best;
      d_second[o] = second;
      removal_loss[slot] += second - best;
    }
  }

  // Best (slot, change in objective) for making item c a medoid.
  std::pair<std::size_t, double> best_swap(std::size_t c, std::vector<double>& delta) const {
    delta = removal_loss;
    double shared = 0;
    for (std::size_t o = 0; o < d.size(); ++o) {
      const double v = d(o, c);
      if (v < d_near[o]) {
        shared += v - d_near[o];
        delta[nearest[o]] += d_near[o] - d_second[o];
      } else if (v < d_second[o]) {
        delta[nearest[o]] += v - d_second[o];
      }
    }
    std::size_t slot = 0;
    for (std::size_t m = 1; m < delta.size(); ++m) {
      if (delta[m] < delta[slot]) slot = m;
    }
    return {slot, delta[slot] + shared};
  }
};

std::vector<std::size_t> build_init(const DistanceMatrix& d, std::size_t k) {
  const std::size_t n = d.size();
  std::vector<std::size_t> medoids;
  std::vector<double> nearest(n, kInf);
  std::vector<bool> chosen(n, false);
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = n;
    double best_score = kInf;
    for (std::size_t c = 0; c < n; ++c) {
      if (chosen[c]) continue;
      double score = 0;
      for (std::size_t o = 0; o < n; ++o) score += std::min(nearest[o], d(o, c));
      if (score < best_score) {
        best_score = score;
        best = c;
      }
    }
    chosen[best] = true;
    medoids.push_back(best);
    for (std::size_t o = 0; o < n; ++o) nearest[o] = std::min(nearest[o], d(o, best));
  }
  return medoids;
}

std::vector<std::size_t> random_init(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> swap_phase(const DistanceMatrix& d, std::vector<std::size_t> initial,
                                    std::size_t max_swaps) {
  const std::size_t n = d.size();
  PamState state(d, std::move(initial));
  std::vector<bool> is_medoid(n, false);
  for (auto m : state.medoids) is_medoid[m] = true;
  double total = std::accumulate(state.d_near.begin(), state.d_near.end(), 0.0);
  std::vector<double> delta;
  std::size_t since_swap = 0, swaps = 0, c = 0;
  while (since_swap < n && swaps < max_swaps) {
    if (!is_medoid[c]) {
      auto [slot, change] = state.best_swap(c, delta);
      if (change < -1e-10 * (1.0 + total)) {
        is_medoid[state.medoids[slot]] = false;
        is_medoid[c] = true;
        state.medoids[slot] = c;
        state.refresh();
        total = std::accumulate(state.d_near.begin(), state.d_near.end(), 0.0);
        since_swap = 0;
        ++swaps;
      }
    }
    ++since_swap;
    c = (c + 1) % n;
  }
  return state.medoids;
}

ClusterAssignment finish_kmedoids(const DataMatrix& data, const DistanceMatrix& d,
                                  std::vector<std::size_t> medoids) {
  std::sort(medoids.begin(), medoids.end());
  ClusterAssignment out;
  out.medoids = medoids;
  out.labels.assign(d.size(), 0);
  for (std::size_t o = 0; o < d.size(); ++o) {
    double best = kInf;
    for (std::size_t m = 0; m < medoids.size(); ++m) {
      if (medoids[m] == o) {
        out.labels[o] = m;
        break;
      }
      const double v = d(o, medoids[m]);
      if (v < best) {
        best = v;
        out.labels[o] = m;
      }
    }
  }
  out.representatives = DataMatrix(medoids.size(), data.cols());
  for (std::size_t m = 0; m < medoids.size(); ++m) {
    std::copy(data.row(medoids[m]).begin(), data.row(medoids[m]).end(), out.representatives.row(m).begin());
  }
  out.objective = kmedoids_objective(d, medoids);
  return out;
}

// ---------------------------------------------------------------------- EM

struct EmRun {
  std::vector<double> weights;
  DataMatrix means;
  DataMatrix covariances;
  DataMatrix resp;
  std::vector<double> trace;
  std::size_t iterations = 0;
  bool converged = false;
  bool degenerate = false;
};

DataMatrix seed_means(const DataMatrix& data, std::size_t k, Rng& rng) {
  const std::size_t n = data.rows();
  DataMatrix means(k, data.cols());
  std::vector<double> dist(n, kInf);
  std::vector<bool> chosen(n, false);
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t pick;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : (j == 0 ? 1.0 : dist[i]);
    if (j == 0 || !(total > 0)) {
      std::vector<std::size_t> open;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) open.push_back(i);
      }
      pick = open[rng.below(open.size())];
    } else {
      std::vector<double> w(n);
      for (std::size_t i = 0; i < n; ++i) w[i] = chosen[i] ? 0.0 : dist[i];
      pick = rng.categorical(w);
    }
    chosen[pick] = true;
    std::copy(data.row(pick).begin(), data.row(pick).end(), means.row(j).begin());
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], l1_distance(data.row(i), data.row(pick)));
  }
  return means;
}

std::vector<double> pooled_variance(const DataMatrix& data) {
  const std::size_t n = data.rows(), dim = data.cols();
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dim; ++c) mean[c] += data(i, c);
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dim; ++c) var[c] += (data(i, c) - mean[c]) * (data(i, c) - mean[c]);
  for (auto& v : var) v = std::max(v / static_cast<double>(n), kVarianceFloor);
  return var;
}

// Fills log(w_j) + log N(x_i | j) into logp; returns false on a singular component.
using LogDensityFn = bool (*)(const DataMatrix&, const EmRun&, DataMatrix&);

bool log_density_diagonal(const DataMatrix& data, const EmRun& run, DataMatrix& logp) {
  const std::size_t n = data.rows(), dim = data.cols(), k = run.weights.size();
  for (std::size_t j = 0; j < k; ++j) {
    double norm = std::log(run.weights[j]);
    for (std::size_t c = 0; c < dim; ++c) norm -= 0.5 * (kLog2Pi + std::log(run.covariances(j, c)));
    for (std::size_t i = 0; i < n; ++i) {
      double q = 0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double z = data(i, c) - run.means(j, c);
        q += z * z / run.covariances(j, c);
      }
      logp(i, j) = norm - 0.5 * q;
    }
  }
  return true;
}

bool log_density_full(const DataMatrix& data, const EmRun& run, DataMatrix& logp) {
  const std::size_t n = data.rows(), dim = data.cols(), k = run.weights.size();
  for (std::size_t j = 0; j < k; ++j) {
    Eigen::Map<const Eigen::MatrixXd> cov(run.covariances.row(j).data(), dim, dim);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return false;
    const Eigen::MatrixXd l = llt.matrixL();
    double logdet = 0;
    for (std::size_t c = 0; c < dim; ++c) logdet += 2.0 * std::log(l(c, c));
    const double norm = std::log(run.weights[j]) - 0.5 * (static_cast<double>(dim) * kLog2Pi + logdet);
    Eigen::VectorXd z(dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < dim; ++c) z(c) = data(i, c) - run.means(j, c);
      const Eigen::VectorXd y = llt.matrixL().solve(z);
      logp(i, j) = norm - 0.5 * y.squaredNorm();
    }
  }
  return true;
}

// E-step: responsibilities from current parameters; returns the log-likelihood.
double expectation(const DataMatrix& data, EmRun& run, LogDensityFn density, bool& ok) {
  const std::size_t n = data.rows(), k = run.weights.size();
  DataMatrix logp(n, k);
  ok = density(data, run, logp);
  if (!ok) return -kInf;
  double ll = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lse = log_sum_exp(logp.row(i));
    ll += lse;
    for (std::size_t j = 0; j < k; ++j) run.resp(i, j) = std::exp(logp(i, j) - lse);
  }
  return ll;
}

// M-step; returns false when a component has lost all mass.
bool maximization(const DataMatrix& data, EmRun& run, bool full) {
  const std::size_t n = data.rows(), dim = data.cols(), k = run.weights.size();
  for (std::size_t j = 0; j < k; ++j) {
    double mass = 0;
    for (std::size_t i = 0; i < n; ++i) mass += run.resp(i, j);
    if (!(mass > 1e-10)) return false;
    run.weights[j] = mass / static_cast<double>(n);
    for (std::size_t c = 0; c < dim; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += run.resp(i, j) * data(i, c);
      run.means(j, c) = s / mass;
    }
    if (!full) {
      for (std::size_t c = 0; c < dim; ++c) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double z = data(i, c) - run.means(j, c);
          s += run.resp(i, j) * z * z;
        }
        run.covariances(j, c) = std::max(s / mass, kVarianceFloor);
      }
    } else {
      auto cov = run.covariances.row(j);
      std::fill(cov.begin(), cov.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < dim; ++a) {
          const double za = data(i, a) - run.means(j, a);
          for (std::size_t b = 0; b < dim; ++b) {
            cov[a * dim + b] += run.resp(i, j) * za * (data(i, b) - run.means(j, b));
          }
        }
      }
      for (auto& v : cov) v /= mass;
      for (std::size_t a = 0; a < dim; ++a) cov[a * dim + a] += kVarianceFloor;
    }
  }
  double total = std::accumulate(run.weights.begin(), run.weights.end(), 0.0);
  for (auto& w : run.weights) w /= total;
  return true;
}

EmRun em_run(const DataMatrix& data, const ClusteringConfig& config, std::size_t restart, bool full) {
  const std::size_t n = data.rows(), dim = data.cols(), k = config.k;
  Rng rng(derive_seed(config.seed, restart));
  EmRun run;
  run.weights.assign(k, 1.0 / static_cast<double>(k));
  run.means = seed_means(data, k, rng);
  run.resp = DataMatrix(n, k);
  const auto var = pooled_variance(data);
  if (full) {
    run.covariances = DataMatrix(k, dim * dim);
    std::vector<double> mean(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < dim; ++c) mean[c] += data(i, c) / static_cast<double>(n);
    std::vector<double> pooled(dim * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < dim; ++a)
        for (std::size_t b = 0; b < dim; ++b)
          pooled[a * dim + b] += (data(i, a) - mean[a]) * (data(i, b) - mean[b]) / static_cast<double>(n);
    for (std::size_t a = 0; a < dim; ++a) pooled[a * dim + a] += kVarianceFloor;
    for (std::size_t j = 0; j < k; ++j) std::copy(pooled.begin(), pooled.end(), run.covariances.row(j).begin());
  } else {
    run.covariances = DataMatrix(k, dim);
    for (std::size_t j = 0; j < k; ++j) std::copy(var.begin(), var.end(), run.covariances.row(j).begin());
  }
  LogDensityFn density = full ? log_density_full : log_density_diagonal;
  for (std::size_t iter = 0;; ++iter) {
    bool ok = true;
    const double ll = expectation(data, run, density, ok);
    if (!ok || !std::isfinite(ll)) {
      run.degenerate = true;
      return run;
    }
    run.trace.push_back(ll);
    run.iterations = iter;
    if (iter > 0) {
      const double prev = run.trace[run.trace.size() - 2];
      if (std::abs(ll - prev) <= config.tol * std::abs(ll)) {
        run.converged = true;
        return run;
      }
    }
    if (iter >= config.max_iter) return run;
    if (!maximization(data, run, full)) {
      run.degenerate = true;
      return run;
    }
  }
}

GmmResult fit_gmm(const DataMatrix& data, const ClusteringConfig& config, bool full) {
  config.validate();
  require_rows(data, config.k);
  require_finite(data);
  const std::size_t n = data.rows(), dim = data.cols(), k = config.k;
  std::optional<EmRun> best;
  bool best_all_used = false;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    EmRun run = em_run(data, config, r, full);
    if (run.degenerate) continue;
    std::vector<bool> used(k, false);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (run.resp(i, j) > run.resp(i, arg)) arg = j;
      }
      used[arg] = true;
    }
    const bool all_used = std::all_of(used.begin(), used.end(), [](bool u) { return u; });
    const bool better = !best || (all_used && !best_all_used) ||
                        (all_used == best_all_used && run.trace.back() > best->trace.back());
    if (better) {
      best = std::move(run);
      best_all_used = all_used;
    }
  }
  if (!best) {
    throw Error(fmt::format("EM could not fit {} non-degenerate components in {} restarts", k, config.restarts));
  }
  GmmResult out;
  out.full_covariance = full;
  out.weights = best->weights;
  out.means = best->means;
  out.covariances = best->covariances;
  out.responsibilities = best->resp;
  out.log_likelihood_trace = best->trace;
  out.log_likelihood = best->trace.back();
  out.iterations = best->iterations;
  out.converged = best->converged;
  out.parameters = full ? full_parameter_count(k, dim) : diagonal_parameter_count(k, dim);
  out.bic = -2.0 * out.log_likelihood + static_cast<double>(out.parameters) * std::log(static_cast<double>(n));
  out.assignment.labels.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (out.responsibilities(i, j) > out.responsibilities(i, arg)) arg = j;
    }
    out.assignment.labels[i] = arg;
  }
  out.assignment.representatives = out.means;
  out.assignment.objective = out.log_likelihood;
  return out;
}

}  // namespace

// ------------------------------------------------------------------ basics

DataMatrix DataMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  DataMatrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) {
      throw ValidationError(fmt::format("row {} has dimension {}, expected {}", i, rows[i].size(), cols));
    }
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

std::vector<std::vector<double>> DataMatrix::to_rows() const {
  std::vector<std::vector<double>> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i].assign(row(i).begin(), row(i).end());
  return out;
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

DistanceMatrix::DistanceMatrix(const DataMatrix& data) : n_(data.rows()) {
  d_.reserve(n_ > 1 ? n_ * (n_ - 1) / 2 : 0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i + 1; j < n_; ++j) d_.push_back(l1_distance(data.row(i), data.row(j)));
  }
}

ClusteringConfig ClusteringConfig::kmedoids(std::size_t k, std::uint64_t seed) {
  ClusteringConfig c;
  c.k = k;
  c.seed = seed;
  c.restarts = 5;
  return c;
}

ClusteringConfig ClusteringConfig::em(std::size_t k, std::uint64_t seed) {
  ClusteringConfig c;
  c.k = k;
  c.seed = seed;
  c.restarts = 10;
  c.max_iter = 500;
  c.tol = 1e-6;
  return c;
}

void ClusteringConfig::validate() const {
  if (k < 1) throw ValidationError("k must be at least 1");
  if (restarts < 1) throw ValidationError("restarts must be at least 1");
  if (!(tol > 0)) throw ValidationError("tol must be positive");
}

// --------------------------------------------------------------- k-medoids

double kmedoids_objective(const DistanceMatrix& distances, std::span<const std::size_t> medoids) {
  double total = 0;
  for (std::size_t o = 0; o < distances.size(); ++o) {
    double best = kInf;
    for (auto m : medoids) best = std::min(best, distances(o, m));
    total += best;
  }
  return total;
}

ClusterAssignment kmedoids_l1(const DataMatrix& data, const ClusteringConfig& config) {
  config.validate();
  require_rows(data, config.k);
  const DistanceMatrix distances(data);
  return kmedoids_l1(data, distances, config);
}

ClusterAssignment kmedoids_l1(const DataMatrix& data, const DistanceMatrix& distances,
                              const ClusteringConfig& config) {
  config.validate();
  require_rows(data, config.k);
  require_finite(data);
  const std::size_t n = data.rows(), k = config.k;
  if (k == 1 || k == n) {
    std::vector<std::size_t> medoids;
    if (k == n) {
      medoids.resize(n);
      std::iota(medoids.begin(), medoids.end(), 0);
    } else {
      medoids = build_init(distances, 1);
    }
    return finish_kmedoids(data, distances, medoids);
  }
  const std::size_t max_swaps = std::max<std::size_t>(config.max_iter, 1) * k * 4;
  std::optional<ClusterAssignment> best;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    std::vector<std::size_t> init;
    if (r == 0) {
      init = build_init(distances, k);
    } else {
      Rng rng(derive_seed(config.seed, r));
      init = random_init(n, k, rng);
    }
    auto result = finish_kmedoids(data, distances, swap_phase(distances, std::move(init), max_swaps));
    if (!best || result.objective < best->objective) best = std::move(result);
  }
  return *best;
}

// --------------------------------------------------------------------- EM

std::size_t diagonal_parameter_count(std::size_t k, std::size_t d) { return k * (2 * d + 1) - 1; }

std::size_t full_parameter_count(std::size_t k, std::size_t d) { return k * (d + d * (d + 1) / 2) + k - 1; }

GmmResult gmm_em_diagonal(const DataMatrix& data, const ClusteringConfig& config) {
  return fit_gmm(data, config, false);
}

GmmResult gmm_em_full(const DataMatrix& data, const ClusteringConfig& config) {
  return fit_gmm(data, config, true);
}

// ----------------------------------------------------------- agglomerative

MergeTree complete_linkage_l1(const DataMatrix& data) {
  const std::size_t n = data.rows();
  MergeTree tree;
  tree.leaves = n;
  if (n == 0) return tree;
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) dist[i][j] = dist[j][i] = l1_distance(data.row(i), data.row(j));
  }
  std::vector<std::size_t> id(n), size(n, 1);
  std::iota(id.begin(), id.end(), 0);
  std::vector<bool> active(n, true);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t bi = n, bj = n;
    double best = kInf;
    std::pair<std::size_t, std::size_t> best_ids{0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const std::pair<std::size_t, std::size_t> ids{std::min(id[i], id[j]), std::max(id[i], id[j])};
        if (dist[i][j] < best || (dist[i][j] == best && ids < best_ids)) {
          best = dist[i][j];
          best_ids = ids;
          bi = i;
          bj = j;
        }
      }
    }
    tree.merges.push_back({best_ids.first, best_ids.second, best, size[bi] + size[bj]});
    for (std::size_t o = 0; o < n; ++o) {
      if (active[o] && o != bi && o != bj) dist[bi][o] = dist[o][bi] = std::max(dist[bi][o], dist[bj][o]);
    }
    active[bj] = false;
    id[bi] = n + step;
    size[bi] += size[bj];
  }
  return tree;
}

std::vector<std::size_t> MergeTree::cut(std::size_t k) const {
  if (k < 1 || k > leaves) throw ValidationError(fmt::format("cannot cut {} leaves into {} clusters", leaves, k));
  std::vector<std::size_t> parent(leaves + merges.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t s = 0; s < leaves - k; ++s) {
    parent[find(merges[s].a)] = leaves + s;
    parent[find(merges[s].b)] = leaves + s;
  }
  std::vector<std::size_t> roots(leaves);
  for (std::size_t i = 0; i < leaves; ++i) roots[i] = find(i);
  return canonical_labels(roots);
}

nlohmann::json MergeTree::to_json(const std::vector<std::string>& leaf_names) const {
  auto name = [&](std::size_t i) { return i < leaf_names.size() ? leaf_names[i] : std::to_string(i); };
  std::function<nlohmann::json(std::size_t)> node = [&](std::size_t id) -> nlohmann::json {
    if (id < leaves) return {{"id", id}, {"name", name(id)}};
    const Merge& m = merges[id - leaves];
    return {{"id", id}, {"distance", m.distance}, {"size", m.size}, {"children", {node(m.a), node(m.b)}}};
  };
  nlohmann::json doc{{"leaves", leaves}};
  nlohmann::json flat = nlohmann::json::array();
  for (const auto& m : merges) flat.push_back({m.a, m.b, m.distance, m.size});
  doc["merges"] = flat;
  if (leaves > 0) doc["root"] = node(leaves + merges.size() - 1);
  return doc;
}

std::string MergeTree::to_dot(const std::vector<std::string>& leaf_names) const {
  std::string out = "digraph dendrogram {\n  rankdir=BT;\n  node [shape=box, fontsize=10];\n";
  for (std::size_t i = 0; i < leaves; ++i) {
    const std::string label = i < leaf_names.size() ? leaf_names[i] : std::to_string(i);
    out += fmt::format("  n{} [label=\"{}\"];\n", i, label);
  }
  for (std::size_t s = 0; s < merges.size(); ++s) {
    const std::size_t id = leaves + s;
    out += fmt::format("  n{} [shape=point, xlabel=\"{}\"];\n", id, io::format_double(merges[s].distance));
    out += fmt::format("  n{} -> n{};\n  n{} -> n{};\n", merges[s].a, id, merges[s].b, id);
  }
  out += "}\n";
  return out;
}

std::string MergeTree::to_svg(const std::vector<std::string>& leaf_names) const {
  if (leaves == 0) return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"10\" height=\"10\"/>\n";
  // Leaf order from a depth-first walk so branches never cross.
  std::vector<std::size_t> order;
  std::vector<std::size_t> stack{leaves + merges.size() - 1};
  if (merges.empty()) stack = {0};
  while (!stack.empty()) {
    const std::size_t id = stack.back();
    stack.pop_back();
    if (id < leaves) {
      order.push_back(id);
    } else {
      stack.push_back(merges[id - leaves].b);
      stack.push_back(merges[id - leaves].a);
    }
  }
  const double row_h = 16, width = 640, label_w = 220, plot_w = width - label_w - 20;
  const double top = merges.empty() ? 1.0 : std::max(merges.back().distance, 1e-12);
  std::vector<double> x(leaves + merges.size()), y(leaves + merges.size());
  std::string body;
  for (std::size_t r = 0; r < order.size(); ++r) {
    x[order[r]] = label_w;
    y[order[r]] = 10 + row_h * static_cast<double>(r);
    const std::string label = order[r] < leaf_names.size() ? leaf_names[order[r]] : std::to_string(order[r]);
    body += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
                        label_w - 4, y[order[r]] + 4, label);
  }
  for (std::size_t s = 0; s < merges.size(); ++s) {
    const Merge& m = merges[s];
    const std::size_t id = leaves + s;
    x[id] = label_w + plot_w * m.distance / top;
    y[id] = (y[m.a] + y[m.b]) / 2;
    body += fmt::format(
        "<path d=\"M{:.1f},{:.1f} H{:.1f} V{:.1f} H{:.1f}\" fill=\"none\" stroke=\"#333\"/>\n", x[m.a], y[m.a],
        x[id], y[m.b], x[m.b]);
  }
  const double height = 20 + row_h * static_cast<double>(leaves);
  return fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\">\n{}</svg>\n",
                     width, height, body);
}

AgglomerativeResult agglomerative_complete_l1(const DataMatrix& data, std::size_t k) {
  require_rows(data, k);
  AgglomerativeResult out;
  out.tree = complete_linkage_l1(data);
  out.assignment.labels = out.tree.cut(k);
  out.assignment.representatives = DataMatrix(k, data.cols());
  const auto members = members_of(out.assignment.labels);
  for (std::size_t j = 0; j < members.size(); ++j) {
    const auto c = median_centroid(data, members[j]);
    std::copy(c.begin(), c.end(), out.assignment.representatives.row(j).begin());
  }
  out.assignment.objective = k < data.rows() ? out.tree.merges[data.rows() - k - 1].distance : 0.0;
  return out;
}

std::vector<std::size_t> canonical_labels(std::span<const std::size_t> labels) {
  std::map<std::size_t, std::size_t> rename;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) {
    auto [it, inserted] = rename.emplace(l, rename.size());
    out.push_back(it->second);
  }
  return out;
}

// -------------------------------------------------------------------- CVI

std::vector<double> median_centroid(const DataMatrix& data, std::span<const std::size_t> members) {
  std::vector<double> out(data.cols(), 0.0);
  if (members.empty()) return out;
  std::vector<double> column(members.size());
  for (std::size_t c = 0; c < data.cols(); ++c) {
    for (std::size_t i = 0; i < members.size(); ++i) column[i] = data(members[i], c);
    std::sort(column.begin(), column.end());
    const std::size_t h = column.size() / 2;
    out[c] = column.size() % 2 == 1 ? column[h] : 0.5 * (column[h - 1] + column[h]);
  }
  return out;
}

std::vector<double> silhouette_values_l1(const DistanceMatrix& distances, std::span<const std::size_t> labels) {
  if (labels.size() != distances.size()) throw ValidationError("label count does not match item count");
  const auto canon = canonical_labels(labels);
  const std::size_t k = count_clusters(canon), n = canon.size();
  std::vector<std::size_t> sizes(k, 0);
  for (auto l : canon) ++sizes[l];
  std::vector<double> s(n, 0.0), sums(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[canon[i]] < 2) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sums[canon[j]] += distances(i, j);
    }
    const double a = sums[canon[i]] / static_cast<double>(sizes[canon[i]] - 1);
    double b = kInf;
    for (std::size_t c = 0; c < k; ++c) {
      if (c != canon[i]) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    }
    const double m = std::max(a, b);
    s[i] = m > 0 ? (b - a) / m : 0.0;
  }
  return s;
}

std::optional<double> silhouette_l1(const DistanceMatrix& distances, std::span<const std::size_t> labels) {
  const std::size_t k = count_clusters(canonical_labels(labels));
  if (k < 2 || k >= labels.size()) return std::nullopt;
  const auto s = silhouette_values_l1(distances, labels);
  double total = 0;
  for (double v : s) total += v;
  return total / static_cast<double>(s.size());
}

std::optional<double> davies_bouldin_l1(const DataMatrix& data, std::span<const std::size_t> labels) {
  if (labels.size() != data.rows()) throw ValidationError("label count does not match item count");
  const auto members = members_of(canonical_labels(labels));
  const std::size_t k = members.size();
  if (k < 2) return std::nullopt;
  std::vector<std::vector<double>> centroids;
  std::vector<double> scatter;
  for (const auto& m : members) {
    centroids.push_back(median_centroid(data, m));
    double s = 0;
    for (auto i : m) s += l1_distance(data.row(i), centroids.back());
    scatter.push_back(s / static_cast<double>(m.size()));
  }
  double total = 0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = -kInf;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double sep = l1_distance(centroids[i], centroids[j]);
      if (!(sep > 0)) return std::nullopt;
      worst = std::max(worst, (scatter[i] + scatter[j]) / sep);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

std::optional<double> calinski_harabasz_l1(const DataMatrix& data, std::span<const std::size_t> labels) {
  if (labels.size() != data.rows()) throw ValidationError("label count does not match item count");
  const auto members = members_of(canonical_labels(labels));
  const std::size_t k = members.size(), n = data.rows();
  if (k < 2 || k >= n) return std::nullopt;
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const auto overall = median_centroid(data, all);
  double between = 0, within = 0;
  for (const auto& m : members) {
    const auto c = median_centroid(data, m);
    between += static_cast<double>(m.size()) * l1_distance(c, overall);
    for (auto i : m) within += l1_distance(data.row(i), c);
  }
  if (!(within > 0)) return std::nullopt;
  return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

std::vector<CviRecord> cvi_report(const DataMatrix& data, const std::vector<CviInput>& inputs) {
  return cvi_report(data, DistanceMatrix(data), inputs);
}

std::vector<CviRecord> cvi_report(const DataMatrix& data, const DistanceMatrix& distances,
                                  const std::vector<CviInput>& inputs) {
  std::vector<CviRecord> out;
  for (const auto& in : inputs) {
    CviRecord r;
    r.k = in.k;
    r.silhouette = silhouette_l1(distances, in.labels);
    r.davies_bouldin = davies_bouldin_l1(data, in.labels);
    r.calinski_harabasz = calinski_harabasz_l1(data, in.labels);
    if (in.bic && std::isfinite(*in.bic)) r.bic = in.bic;
    out.push_back(r);
  }
  return out;
}

std::string cvi_csv(const std::vector<CviRecord>& records) {
  io::CsvWriter w({"k", "silhouette", "davies_bouldin", "calinski_harabasz", "bic"});
  auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); };
  for (const auto& r : records) {
    w.add_row({std::to_string(r.k), opt(r.silhouette), opt(r.davies_bouldin), opt(r.calinski_harabasz), opt(r.bic)});
  }
  return w.str();
}

// -------------------------------------------------------------------- ARI

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) {
    throw ValidationError(fmt::format("label vectors differ in length: {} vs {}", a.size(), b.size()));
  }
  const auto ca = canonical_labels(a), cb = canonical_labels(b);
  if (ca == cb) return 1.0;
  auto choose2 = [](double x) { return x * (x - 1) / 2; };
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> rows, cols;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    table[{ca[i], cb[i]}] += 1;
    rows[ca[i]] += 1;
    cols[cb[i]] += 1;
  }
  double index = 0, sum_a = 0, sum_b = 0;
  for (const auto& [key, v] : table) index += choose2(v);
  for (const auto& [key, v] : rows) sum_a += choose2(v);
  for (const auto& [key, v] : cols) sum_b += choose2(v);
  const double expected = sum_a * sum_b / choose2(static_cast<double>(ca.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 0.0;
  return (index - expected) / (max_index - expected);
}

std::string assignment_csv(const std::vector<std::string>& ids, const ClusterAssignment& assignment) {
  if (ids.size() != assignment.labels.size()) throw ValidationError("id count does not match label count");
  io::CsvWriter w({"id", "cluster"});
  for (std::size_t i = 0; i < ids.size(); ++i) w.add_row({ids[i], std::to_string(assignment.labels[i])});
  return w.str();
}

}  // namespace srl::clustering
