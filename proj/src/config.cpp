#include "dermpipe/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include "dermpipe/csv.hpp"
#include "dermpipe/errors.hpp"
#include "dermpipe/fileio.hpp"

namespace dermpipe {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

struct Location {
  std::string_view source;
  int line;
};

[[noreturn]] void fail(const Location& at, const std::string& msg) {
  throw PipelineError(ErrorKind::Config, std::string(at.source) + ":" + std::to_string(at.line) + ": " + msg);
}

double to_double(const std::string& v, const Location& at) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) fail(at, "expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& v, const Location& at) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) fail(at, "expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v, const Location& at) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(at, "expected a boolean, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const Location&)>;
using Getter = std::function<std::string(const PipelineConfig&)>;

struct Key {
  std::string_view section;
  std::string_view name;
  Setter set;
  Getter get;
};

int positive_int(const std::string& v, const Location& at) {
  const long long n = to_int(v, at);
  if (n < 1 || n > 1'000'000'000) fail(at, "expected a positive integer, got '" + v + "'");
  return static_cast<int>(n);
}

double probability(const std::string& v, const Location& at) {
  const double p = to_double(v, at);
  if (p < 0.0 || p > 1.0) fail(at, "expected a value in [0,1], got '" + v + "'");
  return p;
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"preprocess", "threshold",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.preprocess.threshold = to_double(v, at);
         if (!(c.preprocess.threshold > 0.0 && c.preprocess.threshold < 1.0)) fail(at, "threshold must lie in (0,1)");
       },
       [](const PipelineConfig& c) { return format_double(c.preprocess.threshold); }},
      {"preprocess", "p",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.preprocess.minkowski_p = to_double(v, at);
         if (c.preprocess.minkowski_p < 1.0) fail(at, "Minkowski order must be >= 1");
       },
       [](const PipelineConfig& c) { return format_double(c.preprocess.minkowski_p); }},
      {"preprocess", "target",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.preprocess.target = positive_int(v, at); },
       [](const PipelineConfig& c) { return std::to_string(c.preprocess.target); }},
      {"preprocess", "inset",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.preprocess.inset = to_double(v, at);
         if (!(c.preprocess.inset > 0.0 && c.preprocess.inset <= 1.0)) fail(at, "inset must lie in (0,1]");
       },
       [](const PipelineConfig& c) { return format_double(c.preprocess.inset); }},
      {"preprocess", "ratio_threshold",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.preprocess.ratio_threshold = to_double(v, at);
         if (c.preprocess.ratio_threshold <= 0.0) fail(at, "ratio_threshold must be positive");
       },
       [](const PipelineConfig& c) { return format_double(c.preprocess.ratio_threshold); }},
      {"preprocess", "outside_floor",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.preprocess.outside_floor = to_double(v, at);
         if (c.preprocess.outside_floor <= 0.0) fail(at, "outside_floor must be positive");
       },
       [](const PipelineConfig& c) { return format_double(c.preprocess.outside_floor); }},
      {"folds", "m",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.folds.m = positive_int(v, at);
         if (c.folds.m < 2) fail(at, "need at least 2 folds");
       },
       [](const PipelineConfig& c) { return std::to_string(c.folds.m); }},
      {"folds", "seed",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         const long long s = to_int(v, at);
         if (s < 0) fail(at, "seed must be non-negative");
         c.folds.seed = static_cast<std::uint64_t>(s);
       },
       [](const PipelineConfig& c) { return std::to_string(c.folds.seed); }},
      {"loss", "k",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.loss_k = to_double(v, at);
         if (c.loss_k < 0.0) fail(at, "k must be >= 0");
       },
       [](const PipelineConfig& c) { return format_double(c.loss_k); }},
      {"head", "F",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         const long long f = to_int(v, at);
         if (f < 0) fail(at, "F must be >= 0 (0 reads it from the feature file)");
         c.head.features = static_cast<int>(f);
       },
       [](const PipelineConfig& c) { return std::to_string(c.head.features); }},
      {"head", "H",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.head.hidden = positive_int(v, at); },
       [](const PipelineConfig& c) { return std::to_string(c.head.hidden); }},
      {"head", "D",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.head.fusion = positive_int(v, at); },
       [](const PipelineConfig& c) { return std::to_string(c.head.fusion); }},
      {"head", "epochs",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.head.train.epochs = positive_int(v, at); },
       [](const PipelineConfig& c) { return std::to_string(c.head.train.epochs); }},
      {"head", "learning_rate",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.head.train.learning_rate = to_double(v, at);
         if (c.head.train.learning_rate < 0.0) fail(at, "learning_rate must be >= 0");
       },
       [](const PipelineConfig& c) { return format_double(c.head.train.learning_rate); }},
      {"head", "batch_size",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.head.train.batch_size = positive_int(v, at); },
       [](const PipelineConfig& c) { return std::to_string(c.head.train.batch_size); }},
      {"head", "dropout_p",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.head.train.dropout_p = probability(v, at);
         if (c.head.train.dropout_p >= 1.0) fail(at, "dropout_p must be < 1");
       },
       [](const PipelineConfig& c) { return format_double(c.head.train.dropout_p); }},
      {"head", "meta_dropout_p",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.head.train.meta_dropout_p = probability(v, at); },
       [](const PipelineConfig& c) { return format_double(c.head.train.meta_dropout_p); }},
      {"head", "eval_every",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.head.train.eval_every = positive_int(v, at); },
       [](const PipelineConfig& c) { return std::to_string(c.head.train.eval_every); }},
      {"head", "seed",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         const long long s = to_int(v, at);
         if (s < 0) fail(at, "seed must be non-negative");
         c.head.train.seed = static_cast<std::uint64_t>(s);
       },
       [](const PipelineConfig& c) { return std::to_string(c.head.train.seed); }},
      {"head", "freeze_meta",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.head.train.freeze_meta = to_bool(v, at); },
       [](const PipelineConfig& c) { return std::string(c.head.train.freeze_meta ? "true" : "false"); }},
      {"tta", "mode",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         if (v == "ss") {
           c.tta.mode = CropMode::SameSize;
         } else if (v == "rr") {
           c.tta.mode = CropMode::Resize;
         } else {
           fail(at, "tta.mode must be ss or rr, got '" + v + "'");
         }
       },
       [](const PipelineConfig& c) { return std::string(c.tta.mode == CropMode::SameSize ? "ss" : "rr"); }},
      {"tta", "crop",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.tta.crop = positive_int(v, at); },
       [](const PipelineConfig& c) { return std::to_string(c.tta.crop); }},
      {"tta", "input",
       [](PipelineConfig& c, const std::string& v, const Location& at) { c.tta.input = positive_int(v, at); },
       [](const PipelineConfig& c) { return std::to_string(c.tta.input); }},
      {"tta", "scales",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.tta.scales.clear();
         for (const auto& item : to_list(v)) {
           const double s = to_double(item, at);
           if (!(s > 0.0 && s <= 1.0)) fail(at, "scales must lie in (0,1]");
           c.tta.scales.push_back(s);
         }
         if (c.tta.scales.empty()) fail(at, "scales must not be empty");
       },
       [](const PipelineConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.tta.scales.size(); ++i) out += (i ? "," : "") + format_double(c.tta.scales[i]);
         return out;
       }},
      {"ensemble", "pool",
       [](PipelineConfig& c, const std::string& v, const Location&) { c.ensemble.pool = to_list(v); },
       [](const PipelineConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.ensemble.pool.size(); ++i) out += (i ? "," : "") + c.ensemble.pool[i];
         return out;
       }},
      {"ensemble", "guard",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.ensemble.guard = positive_int(v, at);
         if (c.ensemble.guard > 30) fail(at, "guard above 30 is not supported");
       },
       [](const PipelineConfig& c) { return std::to_string(c.ensemble.guard); }},
      {"ensemble", "scoring",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         if (v == "pooled") {
           c.ensemble.scoring = SubsetScoring::Pooled;
         } else if (v == "per-fold") {
           c.ensemble.scoring = SubsetScoring::PerFoldMean;
         } else {
           fail(at, "ensemble.scoring must be pooled or per-fold, got '" + v + "'");
         }
       },
       [](const PipelineConfig& c) {
         return std::string(c.ensemble.scoring == SubsetScoring::Pooled ? "pooled" : "per-fold");
       }},
      {"metrics", "auc_s_floor",
       [](PipelineConfig& c, const std::string& v, const Location& at) {
         c.auc_s_floor = to_double(v, at);
         if (!(c.auc_s_floor >= 0.0 && c.auc_s_floor < 1.0)) fail(at, "auc_s_floor must lie in [0,1)");
       },
       [](const PipelineConfig& c) { return format_double(c.auc_s_floor); }},
  };
  return table;
}

void assign(PipelineConfig& cfg, std::string_view section, const std::string& key, const std::string& value,
            const Location& at) {
  bool section_known = false;
  for (const auto& k : keys()) {
    if (k.section != section) continue;
    section_known = true;
    if (k.name == key) {
      k.set(cfg, value, at);
      return;
    }
  }
  if (!section_known) fail(at, "unknown section [" + std::string(section) + "]");
  fail(at, "unknown key '" + key + "' in [" + std::string(section) + "]");
}

}  // namespace

PipelineConfig parse_config(std::string_view text, std::string_view source_name) {
  PipelineConfig cfg;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const Location at{source_name, line_no};
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(at, "malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      bool known = false;
      for (const auto& k : keys()) known = known || k.section == section;
      if (!known) fail(at, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(at, "expected key = value");
    if (section.empty()) fail(at, "key outside of any section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    // Trailing comments.
    if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
    assign(cfg, section, key, value, at);
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) { return parse_config(read_file(path), path); }

void apply_override(PipelineConfig& cfg, std::string_view assignment, std::string_view source_name) {
  const Location at{source_name, 1};
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    fail(at, "override must look like section.key=value, got '" + std::string(assignment) + "'");
  }
  assign(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
         trim(assignment.substr(eq + 1)), at);
}

std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  std::string_view current;
  for (const auto& k : keys()) {
    if (k.section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + std::string(k.section) + "]\n";
      current = k.section;
    }
    out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

}  // namespace dermpipe
