#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "dermpipe/rng.hpp"

namespace dermpipe {

enum class Sex { Male = 0, Female = 1 };

inline constexpr int kSiteCount = 8;
inline constexpr int kMetaDim = kSiteCount + 2 + 1;
inline constexpr double kMissingAge = -5.0;

// ISIC 2019 anatomical sites, in the order of the one-hot block.
inline constexpr std::array<std::string_view, kSiteCount> kSiteNames = {
    "anterior torso", "head/neck",   "lateral torso",  "lower extremity",
    "oral/genital",   "palms/soles", "posterior torso", "upper extremity",
};

struct MetaRecord {
  std::optional<double> age;
  std::optional<int> site;  // index into kSiteNames
  std::optional<Sex> sex;

  bool operator==(const MetaRecord&) const = default;
};

using MetaVector = std::array<double, kMetaDim>;

// Empty string → missing. Unknown vocabulary also maps to missing and sets
// *unknown when provided.
std::optional<int> parse_site(std::string_view text, bool* unknown = nullptr);
std::optional<Sex> parse_sex(std::string_view text, bool* unknown = nullptr);
std::optional<double> parse_age(std::string_view text);

std::string site_name(std::optional<int> site);
std::string sex_name(std::optional<Sex> sex);
std::string age_text(std::optional<double> age);

MetaVector encode_meta(const MetaRecord& rec);

// Each property independently becomes missing with probability p.
MetaRecord meta_dropout(const MetaRecord& rec, double p, Rng& rng);

}  // namespace dermpipe
