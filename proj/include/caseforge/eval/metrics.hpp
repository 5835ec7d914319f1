#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "caseforge/core/tensor.hpp"

namespace caseforge {

// Ranks gallery rows by ascending Euclidean distance to the query row.
// Ties break toward the lower gallery index; excluded rows never appear.
inline std::vector<int64_t> rank_gallery(const float* query, const Tensor<float>& gallery,
                                         const std::vector<char>& excluded) {
  const int64_t n = gallery.dim(0), d = gallery.dim(1);
  require(excluded.empty() || static_cast<int64_t>(excluded.size()) == n, Errc::shape_mismatch,
          "rank_gallery: exclusion mask size mismatch");
  std::vector<std::pair<double, int64_t>> scored;
  scored.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    if (!excluded.empty() && excluded[static_cast<size_t>(i)]) continue;
    const float* g = gallery.data() + i * d;
    double acc = 0;
    for (int64_t j = 0; j < d; ++j) {
      const double diff = static_cast<double>(query[j]) - static_cast<double>(g[j]);
      acc += diff * diff;
    }
    scored.emplace_back(std::sqrt(acc), i);
  }
  require(!scored.empty(), Errc::empty_gallery, "rank_gallery: gallery empty after exclusions");
  std::sort(scored.begin(), scored.end());
  std::vector<int64_t> order;
  order.reserve(scored.size());
  for (const auto& [dist, idx] : scored) order.push_back(idx);
  return order;
}

// Top-k retrieval for one query feature row.
inline std::vector<int64_t> retrieve(const Tensor<float>& query_row, const Tensor<float>& gallery,
                                     int64_t k, const std::vector<char>& excluded = {}) {
  require(query_row.numel() == gallery.dim(1), Errc::shape_mismatch,
          "retrieve: query dim " + std::to_string(query_row.numel()) + " vs gallery dim " +
              std::to_string(gallery.dim(1)));
  auto order = rank_gallery(query_row.data(), gallery, excluded);
  require(k <= static_cast<int64_t>(order.size()), Errc::invalid_argument,
          "retrieve: k=" + std::to_string(k) + " exceeds usable gallery size " +
              std::to_string(order.size()));
  order.resize(static_cast<size_t>(k));
  return order;
}

// cmc[k-1] = fraction of queries whose top-k contains a relevant item. Each
// query must have at least one relevant entry (callers drop and count the
// others).
inline std::vector<double> cmc_curve(const std::vector<std::vector<int64_t>>& rank_lists,
                                     const std::vector<std::vector<char>>& relevance,
                                     int64_t k_max) {
  require(!rank_lists.empty(), Errc::invalid_argument, "cmc: no valid queries");
  require(rank_lists.size() == relevance.size(), Errc::shape_mismatch,
          "cmc: rank list / relevance count mismatch");
  std::vector<double> cmc(static_cast<size_t>(k_max), 0.0);
  for (size_t q = 0; q < rank_lists.size(); ++q) {
    const auto& order = rank_lists[q];
    const auto& rel = relevance[q];
    int64_t first_hit = -1;
    for (size_t r = 0; r < order.size(); ++r) {
      if (rel[static_cast<size_t>(order[r])]) {
        first_hit = static_cast<int64_t>(r);
        break;
      }
    }
    require(first_hit >= 0, Errc::invalid_argument,
            "cmc: query " + std::to_string(q) + " has no relevant gallery item");
    for (int64_t k = first_hit; k < k_max; ++k) cmc[static_cast<size_t>(k)] += 1.0;
  }
  for (auto& v : cmc) v /= static_cast<double>(rank_lists.size());
  return cmc;
}

// Standard information-retrieval AP, averaged over queries:
// AP = (1/R) * sum over relevant hits of precision@hit.
inline double mean_average_precision(const std::vector<std::vector<int64_t>>& rank_lists,
                                     const std::vector<std::vector<char>>& relevance) {
  require(!rank_lists.empty(), Errc::invalid_argument, "mAP: no valid queries");
  require(rank_lists.size() == relevance.size(), Errc::shape_mismatch,
          "mAP: rank list / relevance count mismatch");
  double total = 0;
  for (size_t q = 0; q < rank_lists.size(); ++q) {
    const auto& order = rank_lists[q];
    const auto& rel = relevance[q];
    int64_t r_total = 0;
    for (int64_t idx : order) r_total += rel[static_cast<size_t>(idx)] ? 1 : 0;
    require(r_total > 0, Errc::invalid_argument,
            "mAP: query " + std::to_string(q) + " has no relevant gallery item");
    int64_t hits = 0;
    double ap = 0;
    for (size_t r = 0; r < order.size(); ++r) {
      if (rel[static_cast<size_t>(order[r])]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    total += ap / static_cast<double>(r_total);
  }
  return total / static_cast<double>(rank_lists.size());
}

}  // namespace caseforge
