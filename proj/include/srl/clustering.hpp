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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace srl::clustering {

// Dense row-major matrix; rows are items.
class DataMatrix {
 public:
  DataMatrix() = default;
  DataMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  static DataMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  const std::vector<double>& values() const { return data_; }
  std::vector<std::vector<double>> to_rows() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double l1_distance(std::span<const double> a, std::span<const double> b);

// Condensed symmetric matrix of pairwise l1 distances.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(const DataMatrix& data);
  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    return d_[i * n_ - i * (i + 1) / 2 + (j - i - 1)];
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

struct ClusteringConfig {
  std::size_t k = 2;
  std::uint64_t seed = 42;
  std::size_t restarts = 5;
  std::size_t max_iter = 500;
  double tol = 1e-6;

  static ClusteringConfig kmedoids(std::size_t k, std::uint64_t seed = 42);
  static ClusteringConfig em(std::size_t k, std::uint64_t seed = 42);
  void validate() const;
};

struct ClusterAssignment {
  std::vector<std::size_t> labels;
  // k x d representatives: medoid vectors or component means.
  DataMatrix representatives;
  // Medoid item indices (k-medoids only).
  std::vector<std::size_t> medoids;
  double objective = 0.0;

  std::size_t k() const { return representatives.rows(); }
};

ClusterAssignment kmedoids_l1(const DataMatrix& data, const ClusteringConfig& config);
ClusterAssignment kmedoids_l1(const DataMatrix& data, const DistanceMatrix& distances,
                              const ClusteringConfig& config);
// Sum over items of the distance to the nearest medoid.
double kmedoids_objective(const DistanceMatrix& distances, std::span<const std::size_t> medoids);

struct GmmResult {
  ClusterAssignment assignment;  // objective holds the log-likelihood
  DataMatrix responsibilities;   // n x k
  std::vector<double> weights;
  DataMatrix means;
  // Diagonal models: k x d variances. Full models: k x (d*d) row-major covariances.
  DataMatrix covariances;
  std::vector<double> log_likelihood_trace;
  double log_likelihood = 0.0;
  double bic = 0.0;
  std::size_t parameters = 0;
  std::size_t iterations = 0;
  bool converged = false;
  bool full_covariance = false;
};

constexpr double kVarianceFloor = 1e-6;

GmmResult gmm_em_diagonal(const DataMatrix& data, const ClusteringConfig& config);
GmmResult gmm_em_full(const DataMatrix& data, const ClusteringConfig& config);
std::size_t diagonal_parameter_count(std::size_t k, std::size_t d);
std::size_t full_parameter_count(std::size_t k, std::size_t d);

struct Merge {
  std::size_t a = 0;  // smaller cluster id
  std::size_t b = 0;
  double distance = 0.0;
  std::size_t size = 0;  // members of the merged cluster
};

// Leaves are ids 0..n-1; merge s creates cluster id n+s.
struct MergeTree {
  std::size_t leaves = 0;
  std::vector<Merge> merges;

  std::vector<std::size_t> cut(std::size_t k) const;
  nlohmann::json to_json(const std::vector<std::string>& leaf_names = {}) const;
  std::string to_dot(const std::vector<std::string>& leaf_names = {}) const;
  // Minimal dendrogram rendering.
  std::string to_svg(const std::vector<std::string>& leaf_names = {}) const;
};

MergeTree complete_linkage_l1(const DataMatrix& data);

struct AgglomerativeResult {
  ClusterAssignment assignment;
  MergeTree tree;
};

AgglomerativeResult agglomerative_complete_l1(const DataMatrix& data, std::size_t k);

// Labels are renumbered by first appearance.
std::vector<std::size_t> canonical_labels(std::span<const std::size_t> labels);

struct CviInput {
  std::size_t k = 0;
  std::vector<std::size_t> labels;
  std::optional<double> bic;
};

struct CviRecord {
  std::size_t k = 0;
  std::optional<double> silhouette;
  std::optional<double> davies_bouldin;
  std::optional<double> calinski_harabasz;
  std::optional<double> bic;
};

std::optional<double> silhouette_l1(const DistanceMatrix& distances, std::span<const std::size_t> labels);
// Per-item silhouette values (0 for members of singleton clusters).
std::vector<double> silhouette_values_l1(const DistanceMatrix& distances,
                                         std::span<const std::size_t> labels);
std::optional<double> davies_bouldin_l1(const DataMatrix& data, std::span<const std::size_t> labels);
std::optional<double> calinski_harabasz_l1(const DataMatrix& data, std::span<const std::size_t> labels);
// Component-wise median of the listed rows.
std::vector<double> median_centroid(const DataMatrix& data, std::span<const std::size_t> members);

std::vector<CviRecord> cvi_report(const DataMatrix& data, const std::vector<CviInput>& inputs);
std::vector<CviRecord> cvi_report(const DataMatrix& data, const DistanceMatrix& distances,
                                  const std::vector<CviInput>& inputs);
std::string cvi_csv(const std::vector<CviRecord>& records);

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

std::string assignment_csv(const std::vector<std::string>& ids, const ClusterAssignment& assignment);

}  // namespace srl::clustering
