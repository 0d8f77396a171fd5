#include "dermpipe/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <thread>
#include <unordered_map>

#include "CLI11.hpp"
#include "json.hpp"

#include "dermpipe/config.hpp"
#include "dermpipe/csv.hpp"
#include "dermpipe/dataset.hpp"
#include "dermpipe/ensemble.hpp"
#include "dermpipe/errors.hpp"
#include "dermpipe/fileio.hpp"
#include "dermpipe/fusion_head.hpp"
#include "dermpipe/image_io.hpp"
#include "dermpipe/imaging.hpp"
#include "dermpipe/metrics.hpp"
#include "dermpipe/predictions.hpp"
#include "dermpipe/synth.hpp"
#include "dermpipe/tta.hpp"

namespace dermpipe {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config;
  std::vector<std::string> overrides;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

struct Context {
  PipelineConfig cfg;
  const GlobalOptions& global;
  std::ostream& out;
  std::ostream& err;

  void log(const std::string& line) const { err << "dermpipe: " << line << '\n'; }
  void summary(const json& j) const {
    if (global.json) out << j.dump() << '\n';
  }
};

PipelineConfig resolve_config(const GlobalOptions& g) {
  PipelineConfig cfg;
  std::string path = g.config;
  if (path.empty()) {
    if (const char* env = std::getenv("DERMPIPE_CONFIG"); env != nullptr && *env != '\0') path = env;
  }
  if (!path.empty()) cfg = load_config(path);
  for (const auto& assignment : g.overrides) apply_override(cfg, assignment);
  if (g.seed) {
    cfg.folds.seed = *g.seed;
    cfg.head.train.seed = *g.seed;
  }
  return cfg;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results are written by
// index, so scheduling never changes the output. The lowest-index failure is
// rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < width; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Manifest load_manifest_logged(const Context& ctx, const std::string& path) {
  Manifest m = read_manifest(path);
  for (const auto& w : m.warnings) ctx.log("warning: " + w);
  return m;
}

FoldAssignment load_folds(const std::string& path) { return parse_fold_file(read_file(path), path); }

fs::path find_image(const fs::path& dir, const std::string& id) {
  for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
    fs::path p = dir / (id + ext);
    if (fs::exists(p)) return p;
  }
  throw PipelineError(ErrorKind::Io, "no image file for '" + id + "' in " + dir.string());
}

int view_count(const TtaConfig& tta) {
  return tta.mode == CropMode::SameSize ? kSsGrid * kSsGrid : static_cast<int>(tta.scales.size() * kAllFlips.size());
}

CropMode parse_mode(const std::string& text) {
  if (text == "ss") return CropMode::SameSize;
  if (text == "rr") return CropMode::Resize;
  throw UsageError("--tta must be ss or rr");
}

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
  std::string manifest, images, out, report;
};

int cmd_preprocess(const Context& ctx, const PreprocessArgs& a) {
  const Manifest manifest = load_manifest_logged(ctx, a.manifest);
  const fs::path out_dir(a.out);
  fs::create_directories(out_dir);
  std::vector<CropReport> reports(manifest.rows.size());
  parallel_for(manifest.rows.size(), ctx.global.jobs, [&](std::size_t i) {
    const auto& id = manifest.rows[i].image;
    const RgbImage img = load_image(find_image(a.images, id));
    PreprocessResult res = preprocess_image(img, ctx.cfg.preprocess);
    save_png(res.image, out_dir / (id + ".png"));
    reports[i] = res.report;
  });

  std::string csv = "image,cropped,warn_degenerate,x0,y0,x1,y1,color_skipped\n";
  int cropped = 0, degenerate = 0, skipped = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const auto& id = manifest.rows[i].image;
    if (r.warn_degenerate) ctx.log("warning: " + id + ": field-of-view mask is degenerate, image left uncropped");
    if (r.color_skipped) ctx.log("warning: " + id + ": a color channel is empty, color constancy skipped");
    cropped += r.cropped;
    degenerate += r.warn_degenerate;
    skipped += r.color_skipped;
    append_csv_row(csv, {id, r.cropped ? "1" : "0", r.warn_degenerate ? "1" : "0", std::to_string(r.box.x0),
                         std::to_string(r.box.y0), std::to_string(r.box.x1), std::to_string(r.box.y1),
                         r.color_skipped ? "1" : "0"});
  }
  const fs::path report = a.report.empty() ? out_dir / "crop_report.csv" : fs::path(a.report);
  write_file_atomic(report, csv);
  ctx.log("preprocessed " + std::to_string(reports.size()) + " images, " + std::to_string(cropped) + " cropped");
  ctx.summary({{"images", reports.size()}, {"cropped", cropped}, {"degenerate", degenerate}, {"color_skipped", skipped}});
  return kExitOk;
}

// --------------------------------------------------------------- split-folds

struct SplitArgs {
  std::string manifest, out;
  std::optional<int> folds;
};

int cmd_split_folds(Context& ctx, const SplitArgs& a) {
  if (a.folds) ctx.cfg.folds.m = *a.folds;
  const Manifest manifest = load_manifest_logged(ctx, a.manifest);
  const FoldSplit split = split_folds(manifest, ctx.cfg.folds.m, ctx.cfg.folds.seed);
  for (const auto& w : split.warnings) ctx.log("warning: " + w);
  write_file_atomic(a.out, format_fold_file(split.assignment));
  std::vector<int> sizes(static_cast<std::size_t>(split.assignment.folds), 0);
  for (const auto& [id, fold] : split.assignment.entries) ++sizes[static_cast<std::size_t>(fold)];
  ctx.summary({{"folds", split.assignment.folds}, {"fold_sizes", sizes}, {"warnings", split.warnings}});
  return kExitOk;
}

// ------------------------------------------------------------------- weights

struct WeightsArgs {
  std::string manifest, out = "weights.csv", folds;
  std::optional<double> k;
  std::optional<int> val_fold;
};

int cmd_weights(Context& ctx, const WeightsArgs& a) {
  if (a.k) ctx.cfg.loss_k = *a.k;
  const Manifest manifest = load_manifest_logged(ctx, a.manifest);
  std::vector<ManifestRow> rows;
  if (!a.folds.empty()) {
    if (!a.val_fold) throw UsageError("--folds requires --val-fold");
    rows = assemble_training_set(load_folds(a.folds), manifest, *a.val_fold).train;
  } else {
    if (a.val_fold) throw UsageError("--val-fold requires --folds");
    rows = manifest.rows;
  }
  const TrainingWeights w = training_class_weights(rows, ctx.cfg.loss_k);
  write_file_atomic(a.out, format_weights_file(w));
  json j = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    if (w.present[c]) j[std::string(kClassNames[c])] = w.weights[c];
  }
  ctx.summary({{"k", ctx.cfg.loss_k}, {"weights", j}});
  return kExitOk;
}

// ---------------------------------------------------------------- train-head

struct TrainArgs {
  std::string manifest, folds, features, out, weights;
  std::optional<int> fold;
  std::optional<int> epochs;
};

int cmd_train_head(Context& ctx, const TrainArgs& a) {
  if (a.epochs) ctx.cfg.head.train.epochs = *a.epochs;
  const Manifest manifest = load_manifest_logged(ctx, a.manifest);
  const FoldAssignment assignment = load_folds(a.folds);
  const FeatureStore store = load_feature_store(a.features);
  HeadDims dims{store.dim(), ctx.cfg.head.hidden, ctx.cfg.head.fusion, kNumClasses};
  if (ctx.cfg.head.features != 0 && ctx.cfg.head.features != store.dim()) {
    throw PipelineError(ErrorKind::ShapeMismatch, "config head.F=" + std::to_string(ctx.cfg.head.features) +
                                                      " but " + a.features + " has F=" + std::to_string(store.dim()));
  }
  std::optional<TrainingWeights> fixed_weights;
  if (!a.weights.empty()) fixed_weights = parse_weights_file(read_file(a.weights), a.weights);

  std::vector<int> folds;
  if (a.fold) {
    folds.push_back(*a.fold);
  } else {
    for (int j = 0; j < assignment.folds; ++j) folds.push_back(j);
  }
  std::vector<TrainResult> results(folds.size());
  parallel_for(folds.size(), ctx.global.jobs, [&](std::size_t i) {
    const int j = folds[i];
    const TrainValRows split = assemble_training_set(assignment, manifest, j);
    const TrainingWeights w = fixed_weights ? *fixed_weights : training_class_weights(split.train, ctx.cfg.loss_k);
    TrainConfig tc = ctx.cfg.head.train;
    tc.seed = ctx.cfg.head.train.seed + static_cast<std::uint64_t>(j);
    results[i] = train_head(store, split.train, split.val, w.weights, dims, tc);
    const fs::path dir = fs::path(a.out) / ("fold" + std::to_string(j));
    save_checkpoint(results[i].best, (dir / "best.ckpt").string());
    save_checkpoint(results[i].last, (dir / "last.ckpt").string());
    write_file_atomic(dir / "history.csv", format_history(results[i].history));
    write_file_atomic(dir / "weights.csv", format_weights_file(w));
  });

  json per_fold = json::array();
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto& r = results[i];
    std::string line = "fold " + std::to_string(folds[i]) + ": best epoch " + std::to_string(r.best_epoch);
    if (r.best_score) line += ", validation S " + format_fixed(*r.best_score, 4);
    ctx.log(line);
    per_fold.push_back({{"fold", folds[i]},
                        {"best_epoch", r.best_epoch},
                        {"best_score", r.best_score ? json(*r.best_score) : json(nullptr)}});
  }
  ctx.summary({{"folds", per_fold}});
  return kExitOk;
}

// ------------------------------------------------------------------- predict

struct PredictArgs {
  std::string manifest, folds, checkpoint, features, view_probs, out, schedule, images, tta;
  std::optional<int> fold;
};

std::string format_schedule(const std::vector<std::string>& ids, const std::vector<std::vector<CropSpec>>& specs) {
  std::string csv = "image,view,x0,y0,x1,y1,scale,flip\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t v = 0; v < specs[i].size(); ++v) {
      const auto& s = specs[i][v];
      append_csv_row(csv, {ids[i], std::to_string(v), std::to_string(s.rect.x0), std::to_string(s.rect.y0),
                           std::to_string(s.rect.x1), std::to_string(s.rect.y1), format_double(s.scale),
                           std::string(flip_name(s.flip))});
    }
  }
  return csv;
}

PredictionMatrix aggregate_view_file(const std::string& path, const std::vector<ManifestRow>& rows, int views) {
  const CsvTable table = read_csv(path);
  const std::size_t c_image = table.require_column("image", path);
  std::array<std::size_t, kNumClasses> cols{};
  for (int c = 0; c < kNumClasses; ++c) cols[c] = table.require_column(kClassNames[c], path);
  std::unordered_map<std::string, std::vector<ProbRow>> by_image;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ProbRow p{};
    for (int c = 0; c < kNumClasses; ++c) {
      try {
        p[c] = std::stod(table.rows[r][cols[c]]);
      } catch (const std::exception&) {
        throw PipelineError(ErrorKind::InvalidArgument, path + ":" + std::to_string(table.lines[r]) + ": bad probability");
      }
    }
    by_image[table.rows[r][c_image]].push_back(p);
  }
  PredictionMatrix preds;
  for (const auto& row : rows) {
    const auto it = by_image.find(row.image);
    if (it == by_image.end()) throw PipelineError(ErrorKind::MissingFeatures, "no view predictions for '" + row.image + "'");
    if (static_cast<int>(it->second.size()) != views) {
      throw PipelineError(ErrorKind::ShapeMismatch, "'" + row.image + "' has " + std::to_string(it->second.size()) +
                                                        " views, expected " + std::to_string(views));
    }
    const ProbRow agg = aggregate_predictions(it->second);
    preds.append(row.image, agg);
  }
  preds.validate();
  return preds;
}

int cmd_predict(Context& ctx, const PredictArgs& a) {
  if (!a.tta.empty()) ctx.cfg.tta.mode = parse_mode(a.tta);
  const TtaConfig& tta = ctx.cfg.tta;
  const Manifest manifest = load_manifest_logged(ctx, a.manifest);
  std::vector<ManifestRow> rows;
  if (a.fold) {
    if (a.folds.empty()) throw UsageError("--fold requires --folds");
    rows = assemble_training_set(load_folds(a.folds), manifest, *a.fold).val;
  } else {
    rows = manifest.rows;
  }
  const bool have_model = !a.checkpoint.empty();
  const bool have_views = !a.view_probs.empty();
  if (!a.schedule.empty() && a.images.empty()) throw UsageError("--emit-schedule requires --images");
  if (have_model && have_views) throw UsageError("--checkpoint and --view-probs are exclusive");
  if (have_model && a.features.empty()) throw UsageError("--checkpoint requires --features");
  if ((have_model || have_views) && a.out.empty()) throw UsageError("--out is required when predicting");
  if (!have_model && !have_views && a.schedule.empty()) {
    throw UsageError("nothing to do: give --checkpoint, --view-probs or --emit-schedule");
  }
  const int views = view_count(tta);
  json summary = {{"images", rows.size()}, {"mode", std::string(mode_name(tta.mode))}, {"views", views}};

  if (!a.schedule.empty()) {
    std::vector<std::string> ids;
    for (const auto& r : rows) ids.push_back(r.image);
    std::vector<std::vector<CropSpec>> specs(rows.size());
    parallel_for(rows.size(), ctx.global.jobs, [&](std::size_t i) {
      const ImageDims dims = probe_image_dims(find_image(a.images, ids[i]));
      specs[i] = tta.mode == CropMode::SameSize ? crop_schedule_ss(dims, tta.crop) : crop_schedule_rr(dims, tta.scales);
    });
    write_file_atomic(a.schedule, format_schedule(ids, specs));
  }

  if (have_model) {
    const HeadParams params = load_checkpoint(a.checkpoint);
    const FeatureStore store = load_feature_store(a.features);
    if (store.replicates() != views && store.replicates() != 1) {
      throw PipelineError(ErrorKind::ShapeMismatch, a.features + " holds " + std::to_string(store.replicates()) +
                                                        " views per image; " + std::string(mode_name(tta.mode)) +
                                                        " needs " + std::to_string(views));
    }
    if (store.dim() != params.dims.features) {
      throw PipelineError(ErrorKind::ShapeMismatch, "checkpoint expects F=" + std::to_string(params.dims.features) +
                                                        " but " + a.features + " has F=" + std::to_string(store.dim()));
    }
    require_features(store, rows);
    std::vector<Eigen::VectorXd> probs(rows.size());
    parallel_for(rows.size(), ctx.global.jobs,
                 [&](std::size_t i) { probs[i] = predict_replicate_average(params, store, rows[i]); });
    PredictionMatrix preds;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      preds.append(rows[i].image, std::span<const double>(probs[i].data(), static_cast<std::size_t>(probs[i].size())));
    }
    preds.validate();
    write_file_atomic(a.out, format_prediction_csv(preds));
  } else if (have_views) {
    write_file_atomic(a.out, format_prediction_csv(aggregate_view_file(a.view_probs, rows, views)));
  }
  ctx.summary(summary);
  return kExitOk;
}

// ----------------------------------------------------------- ensemble-search

struct EnsembleArgs {
  std::string manifest, out, scoring;
  std::vector<std::string> configs;
  std::optional<int> guard;
  bool all_scores = false;
};

int cmd_ensemble_search(Context& ctx, const EnsembleArgs& a) {
  if (a.guard) ctx.cfg.ensemble.guard = *a.guard;
  if (a.scoring == "pooled") {
    ctx.cfg.ensemble.scoring = SubsetScoring::Pooled;
  } else if (a.scoring == "per-fold") {
    ctx.cfg.ensemble.scoring = SubsetScoring::PerFoldMean;
  } else if (!a.scoring.empty()) {
    throw UsageError("--scoring must be pooled or per-fold");
  }
  const std::vector<std::string>& dirs = a.configs.empty() ? ctx.cfg.ensemble.pool : a.configs;
  if (dirs.empty()) throw UsageError("no configurations: pass --configs or set ensemble.pool");
  if (static_cast<int>(dirs.size()) > ctx.cfg.ensemble.guard) {
    throw PipelineError(ErrorKind::PoolTooLarge, std::to_string(dirs.size()) + " configurations exceed the guard of " +
                                                     std::to_string(ctx.cfg.ensemble.guard));
  }
  const Manifest manifest = load_manifest_logged(ctx, a.manifest);
  std::unordered_map<std::string, int> labels;
  for (const auto& row : manifest.rows) labels.emplace(row.image, row.label);

  ConfigurationSet cfgs(dirs.size());
  parallel_for(dirs.size(), ctx.global.jobs, [&](std::size_t i) {
    cfgs[i] = load_configuration(dirs[i]);
    cfgs[i].name = dirs[i];
  });

  SearchOptions opts;
  opts.scoring = ctx.cfg.ensemble.scoring;
  opts.guard = ctx.cfg.ensemble.guard;
  opts.keep_all_scores = a.all_scores;
  opts.jobs = ctx.global.jobs;
  const SearchResult result = search_optimal_subset(cfgs, labels, opts);

  const auto names_of = [&](const std::vector<std::size_t>& subset) {
    std::vector<std::string> names;
    for (auto i : subset) names.push_back(cfgs[i].name);
    return names;
  };
  json report = {{"configurations", dirs},
                 {"scoring", ctx.cfg.ensemble.scoring == SubsetScoring::Pooled ? "pooled" : "per-fold"},
                 {"subset", names_of(result.subset)},
                 {"subset_indices", result.subset},
                 {"S_star", result.score}};
  if (a.all_scores) {
    json all = json::array();
    for (const auto& s : result.all) all.push_back({{"subset", s.subset}, {"S", s.score}});
    report["per_subset_scores"] = all;
  }
  const fs::path out_dir(a.out);
  write_file_atomic(out_dir / "report.json", report.dump(2) + "\n");
  write_file_atomic(out_dir / "val_ensemble.csv",
                    format_prediction_csv(ensemble_average(result.subset, cfgs, EnsembleTarget::Validation)));
  const bool have_test =
      std::all_of(result.subset.begin(), result.subset.end(), [&](std::size_t i) { return !cfgs[i].test.empty(); });
  if (have_test) {
    write_file_atomic(out_dir / "test_ensemble.csv",
                      format_prediction_csv(ensemble_average(result.subset, cfgs, EnsembleTarget::Test)));
  }
  std::string chosen;
  for (const auto& n : names_of(result.subset)) chosen += (chosen.empty() ? "" : ", ") + n;
  ctx.log("best subset {" + chosen + "} with S* = " + format_fixed(result.score, 6));
  ctx.summary({{"subset", names_of(result.subset)}, {"S_star", result.score}, {"test_written", have_test}});
  return kExitOk;
}

// ------------------------------------------------------------------ evaluate

struct EvaluateArgs {
  std::string pred, truth, out;
  std::optional<double> floor;
  bool raw = false;
};

std::unordered_map<std::string, int> read_truth(const std::string& path) {
  const CsvTable table = read_csv(path);
  const std::size_t c_image = table.require_column("image", path);
  std::unordered_map<std::string, int> truth;
  const auto c_label = table.column("label");
  std::array<std::size_t, kNumClasses> cols{};
  if (!c_label) {
    for (int c = 0; c < kNumClasses; ++c) cols[c] = table.require_column(kClassNames[c], path);
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const std::string where = path + ":" + std::to_string(table.lines[r]);
    int label = -1;
    if (c_label) {
      const auto cls = parse_class(f[*c_label]);
      if (!cls) throw PipelineError(ErrorKind::UnknownLabel, where + ": unknown label '" + f[*c_label] + "'");
      label = *cls;
    } else {
      int hot = 0;
      for (int c = 0; c < kNumClasses; ++c) {
        double v = 0.0;
        try {
          v = std::stod(f[cols[c]]);
        } catch (const std::exception&) {
          v = -1.0;
        }
        if (v == 1.0) {
          label = c;
          ++hot;
        } else if (v != 0.0) {
          hot = 2;
        }
      }
      if (hot != 1) throw PipelineError(ErrorKind::InvalidArgument, where + ": truth row is not one-hot");
    }
    if (!truth.emplace(f[c_image], label).second) {
      throw PipelineError(ErrorKind::InvalidArgument, where + ": duplicate image '" + f[c_image] + "'");
    }
  }
  return truth;
}

int cmd_evaluate(Context& ctx, const EvaluateArgs& a) {
  if (a.floor) ctx.cfg.auc_s_floor = *a.floor;
  const PredictionMatrix preds = read_prediction_csv(a.pred);
  const auto truth = read_truth(a.truth);
  std::vector<int> labels;
  PredictionMatrix known;
  std::vector<int> known_labels;
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    const auto it = truth.find(preds.ids[i]);
    if (it == truth.end()) throw PipelineError(ErrorKind::IdMismatch, "no truth for image '" + preds.ids[i] + "'");
    labels.push_back(it->second);
    if (it->second != kUnknownClass) {
      known.append(preds.ids[i], preds.row(i));
      known_labels.push_back(it->second);
    }
  }
  const std::size_t excluded = preds.rows() - known.rows();
  if (excluded > 0) ctx.log(std::to_string(excluded) + " UNK image(s) excluded from S");

  const ConfusionMatrix conf = confusion(known, known_labels, kKnownClasses);
  std::vector<std::string> absent;
  for (int c = 0; c < kKnownClasses; ++c) {
    if (conf.row_total(c) == 0) absent.emplace_back(kClassNames[c]);
  }
  if (!absent.empty()) ctx.log("warning: " + std::to_string(absent.size()) + " known class(es) absent; S averages the rest");
  const double s = mean_sensitivity_present(conf);
  const auto report = per_class_metrics(preds, labels, ctx.cfg.auc_s_floor);

  json matrix = json::array();
  for (int t = 0; t < conf.classes(); ++t) {
    json row = json::array();
    for (int p = 0; p <= conf.classes(); ++p) row.push_back(conf.at(t, p));
    matrix.push_back(row);
  }
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json classes = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    json entry = {{"auc", opt(report[c].auc)},
                  {"auc_s", opt(report[c].auc_s)},
                  {"sensitivity", opt(report[c].sensitivity)},
                  {"specificity", opt(report[c].specificity)}};
    if (a.raw) entry["auc_s_raw"] = opt(report[c].auc_s_raw);
    classes[std::string(kClassNames[c])] = entry;
  }
  const json summary = {{"S", s},
                        {"images", preds.rows()},
                        {"evaluated", known.rows()},
                        {"excluded_unk", excluded},
                        {"absent_classes", absent},
                        {"auc_s_floor", ctx.cfg.auc_s_floor},
                        {"confusion", matrix},
                        {"classes", classes}};
  const fs::path out_dir(a.out);
  write_file_atomic(out_dir / "class_report.csv", format_class_report(report, a.raw));
  write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  ctx.log("S = " + format_fixed(s, 6));
  ctx.summary({{"S", s}, {"evaluated", known.rows()}});
  return kExitOk;
}

// --------------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  SynthOptions opts;
  bool no_images = false;
};

int cmd_synth(const Context& ctx, SynthArgs a) {
  a.opts.render_images = !a.no_images;
  a.opts.ss_views = kSsGrid * kSsGrid;
  a.opts.rr_views = static_cast<int>(ctx.cfg.tta.scales.size() * kAllFlips.size());
  const std::uint64_t seed = ctx.global.seed.value_or(1);
  const SynthCorpus corpus = generate_synthetic(seed, a.opts);
  write_synthetic(corpus, a.out);
  ctx.log("wrote " + std::to_string(corpus.train.rows.size()) + " training and " +
          std::to_string(corpus.test.rows.size()) + " test images to " + a.out);
  ctx.summary({{"train", corpus.train.rows.size()}, {"test", corpus.test.rows.size()}, {"seed", seed}});
  return kExitOk;
}

int map_exception(std::ostream& err) {
  try {
    throw;
  } catch (const UsageError& e) {
    err << "dermpipe: usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const PipelineError& e) {
    err << "dermpipe: error: " << e.what() << '\n';
    return e.kind() == ErrorKind::Io ? kExitIo : kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "dermpipe: error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "dermpipe: error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace

int run_subcommand(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skin-lesion classification pipeline tools", "dermpipe"};
  app.fallthrough();
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config, "Config file (default: $DERMPIPE_CONFIG)");
  app.add_option("--set", g.overrides, "Config override section.key=value (repeatable)");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_flag("--json", g.json, "Print a JSON summary on stdout");

  PreprocessArgs pre;
  auto* s_pre = app.add_subcommand("preprocess", "Crop the field of view, correct color, resize");
  s_pre->add_option("--manifest", pre.manifest)->required();
  s_pre->add_option("--images", pre.images, "Directory of raw images")->required();
  s_pre->add_option("--out", pre.out, "Output image directory")->required();
  s_pre->add_option("--report", pre.report, "Crop report CSV (default: <out>/crop_report.csv)");

  SplitArgs split;
  auto* s_split = app.add_subcommand("split-folds", "Lesion-grouped stratified folds");
  s_split->add_option("--manifest", split.manifest)->required();
  s_split->add_option("--out", split.out)->required();
  s_split->add_option("--folds", split.folds, "Number of folds")->check(CLI::Range(2, 1000));

  WeightsArgs weights;
  auto* s_weights = app.add_subcommand("weights", "Class-balancing loss weights");
  s_weights->add_option("--manifest", weights.manifest)->required();
  s_weights->add_option("--out", weights.out, "Weights CSV")->capture_default_str();
  s_weights->add_option("--k", weights.k, "Balancing exponent");
  s_weights->add_option("--folds", weights.folds, "Fold file; restricts to training rows");
  s_weights->add_option("--val-fold", weights.val_fold);

  TrainArgs train;
  auto* s_train = app.add_subcommand("train-head", "Train the meta-data fusion head per fold");
  s_train->add_option("--manifest", train.manifest)->required();
  s_train->add_option("--folds", train.folds)->required();
  s_train->add_option("--features", train.features, "Replicated feature store")->required();
  s_train->add_option("--out", train.out, "Output directory")->required();
  s_train->add_option("--weights", train.weights, "Fixed weights CSV (default: per-fold from loss.k)");
  s_train->add_option("--fold", train.fold, "Train only this fold");
  s_train->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber);

  PredictArgs pred;
  auto* s_pred = app.add_subcommand("predict", "Test-time-augmented prediction");
  s_pred->add_option("--manifest", pred.manifest)->required();
  s_pred->add_option("--folds", pred.folds);
  s_pred->add_option("--fold", pred.fold, "Predict the validation rows of this fold");
  s_pred->add_option("--checkpoint", pred.checkpoint);
  s_pred->add_option("--features", pred.features, "Per-view feature store");
  s_pred->add_option("--view-probs", pred.view_probs, "Per-view probability CSV to aggregate");
  s_pred->add_option("--out", pred.out, "Prediction CSV");
  s_pred->add_option("--emit-schedule", pred.schedule, "Write the crop schedule CSV");
  s_pred->add_option("--images", pred.images, "Preprocessed image directory (for --emit-schedule)");
  s_pred->add_option("--tta", pred.tta, "ss or rr");

  EnsembleArgs ens;
  auto* s_ens = app.add_subcommand("ensemble-search", "Exhaustive ensemble subset search");
  s_ens->add_option("--manifest", ens.manifest, "Labels")->required();
  s_ens->add_option("--configs", ens.configs, "Configuration directories");
  s_ens->add_option("--out", ens.out)->required();
  s_ens->add_option("--scoring", ens.scoring, "pooled or per-fold");
  s_ens->add_option("--guard", ens.guard)->check(CLI::Range(1, 30));
  s_ens->add_flag("--all-scores", ens.all_scores, "Record every subset score");

  EvaluateArgs eval;
  eval.out = ".";
  auto* s_eval = app.add_subcommand("evaluate", "Mean sensitivity and per-class report");
  s_eval->add_option("--pred", eval.pred)->required();
  s_eval->add_option("--truth", eval.truth, "image,label or one-hot CSV")->required();
  s_eval->add_option("--out", eval.out, "Report directory")->capture_default_str();
  s_eval->add_option("--floor", eval.floor, "AUC-S sensitivity floor");
  s_eval->add_flag("--auc-s-raw", eval.raw, "Also report the unstandardized AUC-S area");

  SynthArgs syn;
  auto* s_syn = app.add_subcommand("synth", "Generate a synthetic corpus");
  s_syn->add_option("--out", syn.out)->required();
  s_syn->add_option("--images", syn.opts.images)->check(CLI::PositiveNumber);
  s_syn->add_option("--classes", syn.opts.classes)->check(CLI::Range(1, kNumClasses));
  s_syn->add_option("--test-images", syn.opts.test_images)->check(CLI::NonNegativeNumber);
  s_syn->add_option("--features", syn.opts.features)->check(CLI::PositiveNumber);
  s_syn->add_option("--replicates", syn.opts.replicates)->check(CLI::PositiveNumber);
  s_syn->add_option("--separation", syn.opts.separation);
  s_syn->add_option("--missing-rate", syn.opts.missing_rate)->check(CLI::Range(0.0, 1.0));
  s_syn->add_option("--image-size", syn.opts.image_size)->check(CLI::Range(16, 8192));
  s_syn->add_flag("--no-images", syn.no_images, "Skip image rendering");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "dermpipe: usage: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    Context ctx{resolve_config(g), g, out, err};
    if (*s_pre) return cmd_preprocess(ctx, pre);
    if (*s_split) return cmd_split_folds(ctx, split);
    if (*s_weights) return cmd_weights(ctx, weights);
    if (*s_train) return cmd_train_head(ctx, train);
    if (*s_pred) return cmd_predict(ctx, pred);
    if (*s_ens) return cmd_ensemble_search(ctx, ens);
    if (*s_eval) return cmd_evaluate(ctx, eval);
    if (*s_syn) return cmd_synth(ctx, syn);
    return kExitUsage;
  } catch (...) {
    return map_exception(err);
  }
}

}  // namespace dermpipe
