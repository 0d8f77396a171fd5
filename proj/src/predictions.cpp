#include "dermpipe/predictions.hpp"

#include <cmath>

#include "dermpipe/csv.hpp"
#include "dermpipe/errors.hpp"
#include "dermpipe/fileio.hpp"

namespace dermpipe {

void PredictionMatrix::append(const std::string& id, std::span<const double> p) {
  if (p.size() != static_cast<std::size_t>(kNumClasses)) {
    throw PipelineError(ErrorKind::ShapeMismatch, "prediction row must have 9 entries");
  }
  ids.push_back(id);
  probs.insert(probs.end(), p.begin(), p.end());
}

void PredictionMatrix::validate(double tol) const {
  if (probs.size() != ids.size() * kNumClasses) throw PipelineError(ErrorKind::ShapeMismatch, "prediction matrix shape");
  for (std::size_t i = 0; i < rows(); ++i) {
    double sum = 0.0;
    for (double v : row(i)) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw PipelineError(ErrorKind::InvalidArgument, "probability outside [0,1] for image '" + ids[i] + "'");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw PipelineError(ErrorKind::InvalidArgument, "row for image '" + ids[i] + "' sums to " + format_double(sum));
    }
  }
}

std::string format_prediction_csv(const PredictionMatrix& preds) {
  std::string out = "image";
  for (auto name : kClassNames) {
    out.push_back(',');
    out += name;
  }
  out.push_back('\n');
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    std::vector<std::string> fields{preds.ids[i]};
    for (double v : preds.row(i)) fields.push_back(format_fixed(v, 9));
    append_csv_row(out, fields);
  }
  return out;
}

PredictionMatrix parse_prediction_csv(std::string_view text, std::string_view source_name) {
  const CsvTable table = parse_csv(text, source_name);
  const std::size_t c_image = table.require_column("image", source_name);
  std::vector<std::size_t> cols;
  for (auto name : kClassNames) cols.push_back(table.require_column(name, source_name));

  PredictionMatrix preds;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::vector<double> p(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c) {
      try {
        p[c] = std::stod(table.rows[r][cols[c]]);
      } catch (const std::exception&) {
        throw PipelineError(ErrorKind::InvalidArgument,
                            std::string(source_name) + ":" + std::to_string(table.lines[r]) + ": bad probability");
      }
    }
    preds.append(table.rows[r][c_image], p);
  }
  return preds;
}

PredictionMatrix read_prediction_csv(const std::string& path) { return parse_prediction_csv(read_file(path), path); }

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace dermpipe
