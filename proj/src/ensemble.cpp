#include "dermpipe/ensemble.hpp"

#include <algorithm>
#include <thread>

#include "dermpipe/errors.hpp"
#include "dermpipe/metrics.hpp"

namespace dermpipe {
namespace {

// Row index of every image of `reference` inside `other`.
std::vector<std::size_t> align(const PredictionMatrix& reference, const PredictionMatrix& other, const std::string& what) {
  if (reference.rows() != other.rows()) {
    throw PipelineError(ErrorKind::IdMismatch, what + ": " + std::to_string(other.rows()) + " rows vs " +
                                                   std::to_string(reference.rows()));
  }
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < other.rows(); ++i) pos.emplace(other.ids[i], i);
  std::vector<std::size_t> out(reference.rows());
  for (std::size_t i = 0; i < reference.rows(); ++i) {
    const auto it = pos.find(reference.ids[i]);
    if (it == pos.end()) throw PipelineError(ErrorKind::IdMismatch, what + ": image '" + reference.ids[i] + "' missing");
    out[i] = it->second;
  }
  return out;
}

void check_subset(std::span<const std::size_t> subset, const ConfigurationSet& cfgs) {
  if (subset.empty()) throw PipelineError(ErrorKind::InvalidArgument, "empty ensemble subset");
  for (auto i : subset) {
    if (i >= cfgs.size()) throw PipelineError(ErrorKind::InvalidArgument, "configuration index out of range");
  }
}

// Validation predictions of every configuration, pooled over folds and
// aligned to configuration 0's row order (N × 9 each).
struct PooledPool {
  std::vector<std::string> ids;
  std::vector<int> fold;
  std::vector<std::vector<double>> probs;
};

PooledPool pool_validation(const ConfigurationSet& cfgs) {
  PooledPool pool;
  const auto& ref = cfgs.front();
  for (std::size_t j = 0; j < ref.validation.size(); ++j) {
    for (const auto& id : ref.validation[j].ids) {
      pool.ids.push_back(id);
      pool.fold.push_back(static_cast<int>(j));
    }
  }
  for (const auto& cfg : cfgs) {
    if (cfg.validation.size() != ref.validation.size()) {
      throw PipelineError(ErrorKind::IdMismatch, "configuration '" + cfg.name + "' has a different fold count");
    }
    std::vector<double> probs;
    probs.reserve(pool.ids.size() * kNumClasses);
    for (std::size_t j = 0; j < ref.validation.size(); ++j) {
      const auto idx = align(ref.validation[j], cfg.validation[j], cfg.name + " fold " + std::to_string(j));
      for (auto i : idx) {
        const auto row = cfg.validation[j].row(i);
        probs.insert(probs.end(), row.begin(), row.end());
      }
    }
    pool.probs.push_back(std::move(probs));
  }
  return pool;
}

bool better(const SubsetScore& a, const SubsetScore& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.subset.size() != b.subset.size()) return a.subset.size() < b.subset.size();
  return a.subset < b.subset;
}

}  // namespace

PredictionMatrix ensemble_average(std::span<const std::size_t> subset, const ConfigurationSet& cfgs,
                                  EnsembleTarget target) {
  check_subset(subset, cfgs);
  const Configuration& first = cfgs[subset[0]];
  PredictionMatrix out;
  const double inv_configs = 1.0 / static_cast<double>(subset.size());

  if (target == EnsembleTarget::Validation) {
    for (std::size_t j = 0; j < first.validation.size(); ++j) {
      const PredictionMatrix& ref = first.validation[j];
      std::vector<double> acc(ref.rows() * kNumClasses, 0.0);
      for (auto ci : subset) {
        const Configuration& cfg = cfgs[ci];
        if (cfg.validation.size() != first.validation.size()) {
          throw PipelineError(ErrorKind::IdMismatch, "configuration '" + cfg.name + "' has a different fold count");
        }
        const auto idx = align(ref, cfg.validation[j], cfg.name + " fold " + std::to_string(j));
        for (std::size_t r = 0; r < idx.size(); ++r) {
          const auto row = cfg.validation[j].row(idx[r]);
          for (int c = 0; c < kNumClasses; ++c) acc[r * kNumClasses + c] += row[c];
        }
      }
      for (std::size_t r = 0; r < ref.rows(); ++r) {
        out.ids.push_back(ref.ids[r]);
        for (int c = 0; c < kNumClasses; ++c) out.probs.push_back(acc[r * kNumClasses + c] * inv_configs);
      }
    }
    return out;
  }

  if (first.test.empty()) throw PipelineError(ErrorKind::InvalidArgument, "configuration '" + first.name + "' has no test predictions");
  const PredictionMatrix& ref = first.test.front();
  std::vector<double> acc(ref.rows() * kNumClasses, 0.0);
  for (auto ci : subset) {
    const Configuration& cfg = cfgs[ci];
    if (cfg.test.empty()) throw PipelineError(ErrorKind::InvalidArgument, "configuration '" + cfg.name + "' has no test predictions");
    std::vector<double> inner(ref.rows() * kNumClasses, 0.0);
    for (std::size_t j = 0; j < cfg.test.size(); ++j) {
      const auto idx = align(ref, cfg.test[j], cfg.name + " test model " + std::to_string(j));
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto row = cfg.test[j].row(idx[r]);
        for (int c = 0; c < kNumClasses; ++c) inner[r * kNumClasses + c] += row[c];
      }
    }
    const double inv_models = 1.0 / static_cast<double>(cfg.test.size());
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += inner[k] * inv_models;
  }
  out.ids = ref.ids;
  out.probs.resize(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) out.probs[k] = acc[k] * inv_configs;
  return out;
}

SearchResult search_optimal_subset(const ConfigurationSet& cfgs, const std::unordered_map<std::string, int>& labels,
                                   const SearchOptions& options) {
  if (cfgs.empty()) throw PipelineError(ErrorKind::InvalidArgument, "empty configuration pool");
  const int guard = std::min(options.guard, 30);
  if (cfgs.size() > static_cast<std::size_t>(guard)) {
    throw PipelineError(ErrorKind::PoolTooLarge, std::to_string(cfgs.size()) + " configurations exceed the guard of " +
                                                     std::to_string(guard));
  }
  const PooledPool pool = pool_validation(cfgs);
  const std::size_t n_rows = pool.ids.size();
  if (n_rows == 0) throw PipelineError(ErrorKind::InvalidArgument, "no validation predictions");
  std::vector<int> y(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) {
    const auto it = labels.find(pool.ids[i]);
    if (it == labels.end()) throw PipelineError(ErrorKind::IdMismatch, "no label for image '" + pool.ids[i] + "'");
    if (it->second < 0 || it->second >= kKnownClasses) {
      throw PipelineError(ErrorKind::UnknownLabel, "validation image '" + pool.ids[i] + "' is not a known class");
    }
    y[i] = it->second;
  }
  const int folds = cfgs.front().validation.empty() ? 0 : static_cast<int>(cfgs.front().validation.size());

  const auto score_mask = [&](std::uint64_t mask) {
    SubsetScore s;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
      if (mask >> i & 1U) s.subset.push_back(i);
    }
    const double inv = 1.0 / static_cast<double>(s.subset.size());
    std::vector<ConfusionMatrix> per_fold(options.scoring == SubsetScoring::PerFoldMean ? folds : 1,
                                          ConfusionMatrix(kKnownClasses));
    std::array<double, kNumClasses> avg{};
    for (std::size_t r = 0; r < n_rows; ++r) {
      avg.fill(0.0);
      for (auto ci : s.subset) {
        const double* row = pool.probs[ci].data() + r * kNumClasses;
        for (int c = 0; c < kNumClasses; ++c) avg[c] += row[c];
      }
      for (auto& v : avg) v *= inv;
      const int pred = argmax(avg);
      auto& conf = per_fold[options.scoring == SubsetScoring::PerFoldMean ? pool.fold[r] : 0];
      conf.add(y[r], pred < kKnownClasses ? pred : conf.rejected_column());
    }
    double total = 0.0;
    int used = 0;
    for (const auto& conf : per_fold) {
      if (conf.total() == 0) continue;
      total += mean_sensitivity_present(conf);
      ++used;
    }
    s.score = total / used;
    return s;
  };

  const std::uint64_t n_masks = (std::uint64_t{1} << cfgs.size()) - 1;
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(std::min<std::uint64_t>(n_masks, 64))));
  std::vector<SubsetScore> all(options.keep_all_scores ? n_masks : 0);
  std::vector<SubsetScore> best(static_cast<std::size_t>(jobs));
  std::vector<char> have(static_cast<std::size_t>(jobs), 0);

  const auto worker = [&](int w) {
    for (std::uint64_t mask = 1 + static_cast<std::uint64_t>(w); mask <= n_masks; mask += static_cast<std::uint64_t>(jobs)) {
      SubsetScore s = score_mask(mask);
      if (!have[w] || better(s, best[w])) {
        best[w] = s;
        have[w] = 1;
      }
      if (options.keep_all_scores) all[mask - 1] = std::move(s);
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < jobs; ++w) threads.emplace_back(worker, w);
    for (auto& t : threads) t.join();
  }

  SearchResult result;
  bool found = false;
  SubsetScore winner;
  for (int w = 0; w < jobs; ++w) {
    if (have[w] && (!found || better(best[w], winner))) {
      winner = best[w];
      found = true;
    }
  }
  result.subset = std::move(winner.subset);
  result.score = winner.score;
  result.all = std::move(all);
  return result;
}

Configuration load_configuration(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw PipelineError(ErrorKind::Io, "configuration directory " + dir.string() + " not found");
  Configuration cfg;
  cfg.name = dir.filename().string();
  if (cfg.name.empty()) cfg.name = dir.parent_path().filename().string();
  for (int j = 0;; ++j) {
    const fs::path val = dir / ("val_fold" + std::to_string(j) + ".csv");
    if (!fs::exists(val)) break;
    cfg.validation.push_back(read_prediction_csv(val.string()));
    const fs::path test = dir / ("test_fold" + std::to_string(j) + ".csv");
    if (fs::exists(test)) cfg.test.push_back(read_prediction_csv(test.string()));
  }
  if (cfg.validation.empty()) throw PipelineError(ErrorKind::Io, dir.string() + " holds no val_fold0.csv");
  if (!cfg.test.empty() && cfg.test.size() != cfg.validation.size()) {
    throw PipelineError(ErrorKind::Io, dir.string() + ": test predictions missing for some folds");
  }
  return cfg;
}

}  // namespace dermpipe
