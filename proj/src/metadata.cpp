#include "dermpipe/metadata.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "dermpipe/errors.hpp"

namespace dermpipe {
namespace {

std::string normalize(std::string_view text) {
  std::string out;
  for (char ch : text) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  const auto first = out.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = out.find_last_not_of(" \t\r");
  return out.substr(first, last - first + 1);
}

}  // namespace

std::optional<int> parse_site(std::string_view text, bool* unknown) {
  if (unknown) *unknown = false;
  const std::string key = normalize(text);
  if (key.empty()) return std::nullopt;
  for (int i = 0; i < kSiteCount; ++i) {
    if (kSiteNames[i] == key) return i;
  }
  if (unknown) *unknown = true;
  return std::nullopt;
}

std::optional<Sex> parse_sex(std::string_view text, bool* unknown) {
  if (unknown) *unknown = false;
  const std::string key = normalize(text);
  if (key.empty()) return std::nullopt;
  if (key == "male") return Sex::Male;
  if (key == "female") return Sex::Female;
  if (unknown) *unknown = true;
  return std::nullopt;
}

std::optional<double> parse_age(std::string_view text) {
  const std::string key = normalize(text);
  if (key.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), value);
  if (ec != std::errc() || ptr != key.data() + key.size() || !std::isfinite(value) || value < 0.0) {
    throw PipelineError(ErrorKind::InvalidArgument, "invalid age '" + std::string(text) + "'");
  }
  return value;
}

std::string site_name(std::optional<int> site) { return site ? std::string(kSiteNames.at(*site)) : std::string(); }

std::string sex_name(std::optional<Sex> sex) {
  if (!sex) return {};
  return *sex == Sex::Male ? "male" : "female";
}

std::string age_text(std::optional<double> age) {
  if (!age) return {};
  std::ostringstream ss;
  ss << *age;
  return ss.str();
}

MetaVector encode_meta(const MetaRecord& rec) {
  MetaVector v{};
  if (rec.site) v[static_cast<std::size_t>(*rec.site)] = 1.0;
  if (rec.sex) v[kSiteCount + static_cast<std::size_t>(*rec.sex)] = 1.0;
  v[kMetaDim - 1] = rec.age ? *rec.age : kMissingAge;
  return v;
}

MetaRecord meta_dropout(const MetaRecord& rec, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw PipelineError(ErrorKind::InvalidArgument, "meta dropout probability outside [0,1]");
  MetaRecord out = rec;
  // Draw all three regardless of presence so the stream position does not
  // depend on the record contents.
  const bool drop_age = rng.bernoulli(p);
  const bool drop_site = rng.bernoulli(p);
  const bool drop_sex = rng.bernoulli(p);
  if (drop_age) out.age.reset();
  if (drop_site) out.site.reset();
  if (drop_sex) out.sex.reset();
  return out;
}

}  // namespace dermpipe
