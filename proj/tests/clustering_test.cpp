#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "doctest.h"
#include "srl/clustering.hpp"
#include "srl/common.hpp"

using namespace srl;
using namespace srl::clustering;

namespace {

DataMatrix grid_data(Rng& rng, std::size_t n, std::size_t d, double scale = 10.0) {
  DataMatrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) m(i, c) = std::round(rng.uniform(0, scale) * 4) / 4;
  return m;
}

// Blobs centred at multiples of `gap` along every axis.
DataMatrix blobs(Rng& rng, std::size_t per, std::size_t groups, std::size_t d, double gap, double sd,
                 std::vector<std::size_t>& truth) {
  DataMatrix m(per * groups, d);
  truth.clear();
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t p = 0; p < per; ++p) {
      const std::size_t i = g * per + p;
      for (std::size_t c = 0; c < d; ++c) m(i, c) = gap * static_cast<double>(g) + sd * rng.normal();
      truth.push_back(g);
    }
  }
  return m;
}

double brute_best_objective(const DistanceMatrix& d, std::size_t k) {
  const std::size_t n = d.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(k), true);
  std::sort(pick.begin(), pick.end());
  do {
    std::vector<std::size_t> med;
    for (std::size_t i = 0; i < n; ++i)
      if (pick[i]) med.push_back(i);
    double total = 0;
    for (std::size_t o = 0; o < n; ++o) {
      double m = std::numeric_limits<double>::infinity();
      for (auto j : med) m = std::min(m, d(o, j));
      total += m;
    }
    best = std::min(best, total);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

struct RefMerge {
  std::size_t a, b;
  double distance;
};

// Complete linkage recomputed from member sets at every step.
std::vector<RefMerge> reference_complete_linkage(const DataMatrix& data) {
  const std::size_t n = data.rows();
  std::vector<std::pair<std::size_t, std::vector<std::size_t>>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({i, {i}});
  std::vector<RefMerge> out;
  std::size_t next = n;
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::size_t, std::size_t> best_ids{0, 0};
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        double link = 0;
        for (auto p : clusters[i].second)
          for (auto q : clusters[j].second) link = std::max(link, l1_distance(data.row(p), data.row(q)));
        std::pair<std::size_t, std::size_t> ids{std::min(clusters[i].first, clusters[j].first),
                                                std::max(clusters[i].first, clusters[j].first)};
        if (link < best || (link == best && ids < best_ids)) {
          best = link;
          best_ids = ids;
          bi = i;
          bj = j;
        }
      }
    }
    out.push_back({best_ids.first, best_ids.second, best});
    auto merged = clusters[bi].second;
    merged.insert(merged.end(), clusters[bj].second.begin(), clusters[bj].second.end());
    clusters.erase(clusters.begin() + static_cast<long>(bj));
    clusters[bi] = {next++, merged};
  }
  return out;
}

// Pair-counting form of the adjusted Rand index.
double pair_count_ari(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
  double a = 0, b = 0, c = 0, d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const bool sx = x[i] == x[j], sy = y[i] == y[j];
      if (sx && sy) a += 1;
      else if (sx) b += 1;
      else if (sy) c += 1;
      else d += 1;
    }
  }
  const double den = (a + b) * (b + d) + (a + c) * (c + d);
  if (den == 0) return 1.0;
  return 2 * (a * d - b * c) / den;
}

}  // namespace

TEST_CASE("distance matrix matches direct l1") {
  Rng rng(1);
  auto data = grid_data(rng, 9, 4);
  DistanceMatrix d(data);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) CHECK(d(i, j) == l1_distance(data.row(i), data.row(j)));
}

TEST_CASE("k-medoids with k=1 picks the l1 medoid") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    auto data = grid_data(rng, 12, 3);
    auto res = kmedoids_l1(data, ClusteringConfig::kmedoids(1));
    DistanceMatrix d(data);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < 12; ++c) {
      double s = 0;
      for (std::size_t o = 0; o < 12; ++o) s += d(o, c);
      best = std::min(best, s);
    }
    CHECK(res.objective == doctest::Approx(best).epsilon(1e-12));
    CHECK(res.medoids.size() == 1);
  }
}

TEST_CASE("k-medoids matches exhaustive search for small inputs") {
  Rng rng(3);
  for (int t = 0; t < 60; ++t) {
    const std::size_t n = 4 + rng.below(5);
    auto data = grid_data(rng, n, 2 + rng.below(3));
    DistanceMatrix d(data);
    auto res = kmedoids_l1(data, ClusteringConfig::kmedoids(2, 7));
    CHECK(res.objective == doctest::Approx(brute_best_objective(d, 2)).epsilon(1e-12));
  }
}

TEST_CASE("k-medoids result is a swap-local optimum with members as medoids") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    auto data = grid_data(rng, 40, 3);
    DistanceMatrix d(data);
    auto cfg = ClusteringConfig::kmedoids(4, 11);
    cfg.restarts = 2;
    auto res = kmedoids_l1(data, cfg);
    std::set<std::size_t> med(res.medoids.begin(), res.medoids.end());
    CHECK(med.size() == 4);
    for (std::size_t m = 0; m < 4; ++m) {
      for (std::size_t c = 0; c < 40; ++c) {
        if (med.count(c)) continue;
        auto trial = res.medoids;
        trial[m] = c;
        CHECK(kmedoids_objective(d, trial) >= res.objective - 1e-9 * (1 + res.objective));
      }
    }
    std::vector<std::size_t> sizes(4, 0);
    for (auto l : res.labels) ++sizes[l];
    for (auto s : sizes) CHECK(s > 0);
    for (std::size_t m = 0; m < 4; ++m) CHECK(res.labels[res.medoids[m]] == m);
  }
}

TEST_CASE("k-medoids recovers well separated blobs and is deterministic") {
  Rng rng(5);
  std::vector<std::size_t> truth;
  auto data = blobs(rng, 30, 3, 5, 50.0, 1.0, truth);
  auto a = kmedoids_l1(data, ClusteringConfig::kmedoids(3, 9));
  auto b = kmedoids_l1(data, ClusteringConfig::kmedoids(3, 9));
  CHECK(adjusted_rand_index(a.labels, truth) == 1.0);
  CHECK(a.labels == b.labels);
  CHECK(a.objective == b.objective);
}

TEST_CASE("k-medoids size checks") {
  DataMatrix data(2, 2);
  CHECK_THROWS_AS(kmedoids_l1(data, ClusteringConfig::kmedoids(3)), ValidationError);
  auto res = kmedoids_l1(data, ClusteringConfig::kmedoids(2));
  CHECK(res.labels == std::vector<std::size_t>{0, 1});
}

TEST_CASE("EM with k=1 gives the closed form") {
  Rng rng(6);
  auto data = grid_data(rng, 25, 3);
  for (std::size_t i = 0; i < 25; ++i) data(i, 2) = 1.5;  // constant column hits the floor
  auto res = gmm_em_diagonal(data, ClusteringConfig::em(1));
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 25; ++i) mean += data(i, c) / 25;
    for (std::size_t i = 0; i < 25; ++i) var += (data(i, c) - mean) * (data(i, c) - mean) / 25;
    CHECK(res.means(0, c) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(res.covariances(0, c) == doctest::Approx(std::max(var, kVarianceFloor)).epsilon(1e-10));
  }
  CHECK(res.covariances(0, 2) == kVarianceFloor);
}

TEST_CASE("EM separates two planted diagonal Gaussians") {
  Rng rng(7);
  for (int t = 0; t < 5; ++t) {
    std::vector<std::size_t> truth;
    auto data = blobs(rng, 40, 2, 3, 6.0, 1.0, truth);
    auto res = gmm_em_diagonal(data, ClusteringConfig::em(2, 100 + t));
    CHECK(adjusted_rand_index(res.assignment.labels, truth) == 1.0);
  }
}

TEST_CASE("EM invariants on random data") {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 30 + rng.below(40), d = 1 + rng.below(4), k = 1 + rng.below(4);
    DataMatrix data(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) data(i, c) = rng.normal() + (i % 3) * 2.0;
    auto cfg = ClusteringConfig::em(k, t);
    cfg.restarts = 3;
    auto res = gmm_em_diagonal(data, cfg);
    const auto& tr = res.log_likelihood_trace;
    for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] >= tr[i - 1] - 1e-9 * std::max(1.0, std::abs(tr[i])));
    double wsum = 0;
    for (double w : res.weights) {
      CHECK(w > 0);
      wsum += w;
    }
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      std::size_t arg = 0;
      for (std::size_t j = 0; j < k; ++j) {
        s += res.responsibilities(i, j);
        if (res.responsibilities(i, j) > res.responsibilities(i, arg)) arg = j;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(res.assignment.labels[i] == arg);
    }
    for (double v : res.covariances.values()) CHECK(v >= kVarianceFloor);
    const double p = static_cast<double>(k * (2 * d + 1) - 1);
    CHECK(res.bic == doctest::Approx(-2 * res.log_likelihood + p * std::log(static_cast<double>(n))));
    CHECK(std::isfinite(res.bic));
  }
}

TEST_CASE("EM rejects non-finite input and is deterministic") {
  DataMatrix bad(4, 1);
  bad(2, 0) = std::nan("");
  CHECK_THROWS_AS(gmm_em_diagonal(bad, ClusteringConfig::em(1)), ValidationError);
  Rng rng(9);
  auto data = grid_data(rng, 40, 3);
  auto a = gmm_em_diagonal(data, ClusteringConfig::em(3, 5));
  auto b = gmm_em_diagonal(data, ClusteringConfig::em(3, 5));
  CHECK(a.assignment.labels == b.assignment.labels);
  CHECK(a.log_likelihood == b.log_likelihood);
}

TEST_CASE("full-covariance EM parameter count and fit") {
  CHECK(full_parameter_count(2, 3) == 2 * (3 + 6) + 1);
  CHECK(diagonal_parameter_count(2, 3) == 2 * 7 - 1);
  Rng rng(10);
  std::vector<std::size_t> truth;
  auto data = blobs(rng, 50, 2, 3, 8.0, 1.0, truth);
  auto res = gmm_em_full(data, ClusteringConfig::em(2, 3));
  CHECK(adjusted_rand_index(res.assignment.labels, truth) == 1.0);
  const auto& tr = res.log_likelihood_trace;
  for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] >= tr[i - 1] - 1e-9 * std::abs(tr[i]));
}

TEST_CASE("complete linkage matches reference on small inputs") {
  Rng rng(11);
  for (int t = 0; t < 80; ++t) {
    const std::size_t n = 2 + rng.below(6);
    auto data = grid_data(rng, n, 2, 4.0);  // coarse grid forces ties
    auto tree = complete_linkage_l1(data);
    auto ref = reference_complete_linkage(data);
    REQUIRE(tree.merges.size() == n - 1);
    for (std::size_t s = 0; s < ref.size(); ++s) {
      CHECK(tree.merges[s].a == ref[s].a);
      CHECK(tree.merges[s].b == ref[s].b);
      CHECK(tree.merges[s].distance == ref[s].distance);
    }
    for (std::size_t s = 1; s < tree.merges.size(); ++s)
      CHECK(tree.merges[s].distance >= tree.merges[s - 1].distance);
  }
}

TEST_CASE("agglomerative cut extremes") {
  Rng rng(12);
  auto data = grid_data(rng, 10, 3);
  auto all = agglomerative_complete_l1(data, 10);
  std::vector<std::size_t> ident(10);
  std::iota(ident.begin(), ident.end(), 0);
  CHECK(all.assignment.labels == ident);
  auto one = agglomerative_complete_l1(data, 1);
  CHECK(std::all_of(one.assignment.labels.begin(), one.assignment.labels.end(), [](auto l) { return l == 0; }));
  double diameter = 0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) diameter = std::max(diameter, l1_distance(data.row(i), data.row(j)));
  CHECK(one.tree.merges.back().distance == diameter);
  CHECK_THROWS_AS(agglomerative_complete_l1(data, 11), ValidationError);
}

TEST_CASE("agglomerative cut matches union of first merges") {
  Rng rng(13);
  std::vector<std::size_t> truth;
  auto data = blobs(rng, 6, 3, 2, 40.0, 1.0, truth);
  auto res = agglomerative_complete_l1(data, 3);
  CHECK(res.assignment.labels == truth);
  auto json = res.tree.to_json();
  CHECK(json["leaves"] == 18);
  CHECK(json["merges"].size() == 17);
  CHECK(json["root"]["size"] == 18);
  auto dot = res.tree.to_dot();
  CHECK(dot.find("digraph") == 0);
  CHECK(res.tree.to_svg().find("<svg") == 0);
}

TEST_CASE("silhouette on planted geometry") {
  Rng rng(14);
  std::vector<std::size_t> truth;
  auto data = blobs(rng, 20, 2, 3, 100.0, 1.0, truth);
  DistanceMatrix d(data);
  auto s = silhouette_l1(d, truth);
  REQUIRE(s.has_value());
  CHECK(*s > 0.9);
  CHECK(*s <= 1.0);
}

TEST_CASE("silhouette is near zero for random labels") {
  Rng rng(15);
  for (int t = 0; t < 20; ++t) {
    DataMatrix data(200, 3);
    for (std::size_t i = 0; i < 200; ++i)
      for (std::size_t c = 0; c < 3; ++c) data(i, c) = rng.uniform();
    std::vector<std::size_t> labels(200);
    for (auto& l : labels) l = rng.below(3);
    auto s = silhouette_l1(DistanceMatrix(data), labels);
    REQUIRE(s.has_value());
    CHECK(std::abs(*s) < 0.1);
  }
}

TEST_CASE("duplicate points split across clusters contribute zero") {
  DataMatrix data = DataMatrix::from_rows({{1, 1}, {1, 1}, {1, 1}, {1, 1}});
  auto vals = silhouette_values_l1(DistanceMatrix(data), std::vector<std::size_t>{0, 0, 1, 1});
  for (double v : vals) CHECK(v == 0.0);
  auto singles = silhouette_values_l1(DistanceMatrix(data), std::vector<std::size_t>{0, 1, 2, 2});
  CHECK(singles[0] == 0.0);
  CHECK(singles[1] == 0.0);
}

TEST_CASE("undefined indices are reported as missing") {
  auto data = DataMatrix::from_rows({{0}, {1}, {2}});
  std::vector<std::size_t> one{0, 0, 0}, each{0, 1, 2};
  DistanceMatrix d(data);
  CHECK_FALSE(silhouette_l1(d, one).has_value());
  CHECK_FALSE(silhouette_l1(d, each).has_value());
  CHECK_FALSE(calinski_harabasz_l1(data, one).has_value());
  CHECK_FALSE(calinski_harabasz_l1(data, each).has_value());
  CHECK_FALSE(davies_bouldin_l1(data, one).has_value());
  auto report = cvi_report(data, {{1, one, std::nullopt}, {2, {0, 0, 1}, 12.5}});
  CHECK_FALSE(report[0].silhouette.has_value());
  CHECK(report[1].bic == 12.5);
  auto csv = cvi_csv(report);
  CHECK(csv.rfind("k,silhouette,davies_bouldin,calinski_harabasz,bic\n1,,,,\n", 0) == 0);
}

TEST_CASE("median-centroid Davies-Bouldin and Calinski-Harabasz by hand") {
  // Clusters {0,2,10} and {20,21}: medians 2 and 20.5, overall median 10.
  auto data = DataMatrix::from_rows({{0}, {2}, {10}, {20}, {21}});
  std::vector<std::size_t> labels{0, 0, 0, 1, 1};
  const double s0 = (2 + 0 + 8) / 3.0, s1 = 0.5;
  CHECK(*davies_bouldin_l1(data, labels) == doctest::Approx((s0 + s1) / 18.5));
  const double between = 3 * 8 + 2 * 10.5, within = 10 + 1;
  CHECK(*calinski_harabasz_l1(data, labels) == doctest::Approx((between / 1) / (within / 3)));
}

TEST_CASE("adjusted Rand index") {
  std::vector<std::size_t> a{0, 0, 1, 1, 2, 2}, renamed{2, 2, 0, 0, 1, 1};
  CHECK(adjusted_rand_index(a, a) == 1.0);
  CHECK(adjusted_rand_index(a, renamed) == 1.0);
  CHECK_THROWS_AS(adjusted_rand_index(a, std::vector<std::size_t>{0, 1}), ValidationError);
  Rng rng(16);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 2 + rng.below(5);
    std::vector<std::size_t> x(n), y(n);
    for (auto& v : x) v = rng.below(3);
    for (auto& v : y) v = rng.below(3);
    const double ari = adjusted_rand_index(x, y);
    CHECK(ari == doctest::Approx(pair_count_ari(x, y)).epsilon(1e-12));
    CHECK(ari <= 1.0);
    CHECK(ari >= -1.0);
    CHECK((ari == 1.0) == (canonical_labels(x) == canonical_labels(y)));
  }
}

TEST_CASE("adjusted Rand index of random labelings is near zero") {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::size_t> x(500), y(500);
    for (auto& v : x) v = rng.below(5);
    for (auto& v : y) v = rng.below(5);
    CHECK(std::abs(adjusted_rand_index(x, y)) < 0.1);
  }
}
