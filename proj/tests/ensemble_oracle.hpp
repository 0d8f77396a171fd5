#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "dermpipe/ensemble.hpp"
#include "dermpipe/rng.hpp"

namespace testing {

inline std::vector<double> random_prob_row(dermpipe::Rng& rng) {
  std::vector<double> p(dermpipe::kNumClasses);
  double sum = 0.0;
  for (auto& v : p) sum += (v = rng.uniform() * rng.uniform());
  for (auto& v : p) v /= sum;
  return p;
}

struct RandomPool {
  dermpipe::ConfigurationSet cfgs;
  std::unordered_map<std::string, int> labels;
};

// `images` ids spread round-robin over `folds`; each configuration lists
// every fold's rows in its own shuffled order.
inline RandomPool random_pool(dermpipe::Rng& rng, int configs, int images, int folds, int classes = 8) {
  RandomPool pool;
  std::vector<std::vector<std::string>> fold_ids(static_cast<std::size_t>(folds));
  for (int i = 0; i < images; ++i) {
    const std::string id = "IMG_" + std::to_string(i);
    fold_ids[static_cast<std::size_t>(i % folds)].push_back(id);
    pool.labels[id] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  }
  for (int c = 0; c < configs; ++c) {
    dermpipe::Configuration cfg;
    cfg.name = "cfg" + std::to_string(c);
    for (const auto& ids : fold_ids) {
      std::vector<std::string> order = ids;
      rng.shuffle(std::span<std::string>(order));
      dermpipe::PredictionMatrix m;
      for (const auto& id : order) m.append(id, random_prob_row(rng));
      cfg.validation.push_back(std::move(m));
    }
    pool.cfgs.push_back(std::move(cfg));
  }
  return pool;
}

struct OracleBest {
  std::vector<std::size_t> subset;
  double score = -1.0;
};

inline int first_argmax(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

// Mean recall over the classes present, computed from plain counts.
inline double oracle_recall(const std::vector<std::pair<int, int>>& truth_pred) {
  std::map<int, std::pair<int, int>> per_class;  // hits, total
  for (const auto& [t, p] : truth_pred) {
    per_class[t].second += 1;
    if (t == p) per_class[t].first += 1;
  }
  double sum = 0.0;
  for (const auto& [c, ht] : per_class) sum += static_cast<double>(ht.first) / ht.second;
  return sum / static_cast<double>(per_class.size());
}

// Brute-force re-enumeration with id lookups instead of aligned buffers.
inline OracleBest oracle_search(const dermpipe::ConfigurationSet& cfgs, const std::unordered_map<std::string, int>& labels,
                                bool per_fold) {
  const std::size_t n = cfgs.size();
  std::vector<std::vector<std::map<std::string, std::vector<double>>>> lookup(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (const auto& m : cfgs[c].validation) {
      std::map<std::string, std::vector<double>> rows;
      for (std::size_t r = 0; r < m.rows(); ++r) rows[m.ids[r]] = std::vector<double>(m.row(r).begin(), m.row(r).end());
      lookup[c].push_back(std::move(rows));
    }
  }
  OracleBest best;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
    std::vector<std::size_t> subset;
    for (std::size_t c = 0; c < n; ++c) {
      if (mask >> c & 1U) subset.push_back(c);
    }
    std::vector<double> fold_scores;
    std::vector<std::pair<int, int>> pooled;
    for (std::size_t j = 0; j < cfgs[0].validation.size(); ++j) {
      std::vector<std::pair<int, int>> fold;
      for (const auto& id : cfgs[0].validation[j].ids) {
        std::vector<double> avg(dermpipe::kNumClasses, 0.0);
        for (auto c : subset) {
          const auto& row = lookup[c][j].at(id);
          for (int k = 0; k < dermpipe::kNumClasses; ++k) avg[static_cast<std::size_t>(k)] += row[static_cast<std::size_t>(k)];
        }
        for (auto& v : avg) v *= 1.0 / static_cast<double>(subset.size());
        fold.emplace_back(labels.at(id), first_argmax(avg));
      }
      if (!fold.empty()) fold_scores.push_back(oracle_recall(fold));
      pooled.insert(pooled.end(), fold.begin(), fold.end());
    }
    double score = 0.0;
    if (per_fold) {
      for (double s : fold_scores) score += s;
      score /= static_cast<double>(fold_scores.size());
    } else {
      score = oracle_recall(pooled);
    }
    const bool take = score > best.score ||
                      (score == best.score && (subset.size() < best.subset.size() ||
                                               (subset.size() == best.subset.size() && subset < best.subset)));
    if (take) best = {subset, score};
  }
  return best;
}

}  // namespace testing
