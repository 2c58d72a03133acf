#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sevmix/errors.hpp"

namespace sevmix {

enum class Kabco { K, A, B, C, O };
enum class SeverityClass { Major, Minor, PossibleNo };
enum class AreaType { Rural, Urban };
enum class LightingCode { Daylight, Dark, DarkLighted, Dawn, Dusk };

inline Kabco parse_kabco(const std::string& token) {
  if (token == "K" || token == "k") return Kabco::K;
  if (token == "A" || token == "a") return Kabco::A;
  if (token == "B" || token == "b") return Kabco::B;
  if (token == "C" || token == "c") return Kabco::C;
  if (token == "O" || token == "o") return Kabco::O;
  throw ParseError("unknown KABCO code: '" + token + "'");
}

inline SeverityClass consolidate_severity(Kabco code) {
  switch (code) {
    case Kabco::K:
    case Kabco::A:
      return SeverityClass::Major;
    case Kabco::B:
      return SeverityClass::Minor;
    case Kabco::C:
    case Kabco::O:
      return SeverityClass::PossibleNo;
  }
  throw ParseError("unknown KABCO code");
}

// Representative code for emitting a consolidated class back to file.
inline char severity_representative(SeverityClass c) {
  switch (c) {
    case SeverityClass::Major: return 'K';
    case SeverityClass::Minor: return 'B';
    case SeverityClass::PossibleNo: return 'O';
  }
  return '?';
}

inline std::string severity_name(SeverityClass c) {
  switch (c) {
    case SeverityClass::Major: return "major";
    case SeverityClass::Minor: return "minor";
    case SeverityClass::PossibleNo: return "possible_no";
  }
  return "?";
}

inline SeverityClass parse_severity_class(const std::string& token) {
  if (token == "major") return SeverityClass::Major;
  if (token == "minor") return SeverityClass::Minor;
  if (token == "possible_no") return SeverityClass::PossibleNo;
  throw ParseError("unknown severity class: '" + token + "'");
}

inline AreaType parse_area(const std::string& token) {
  if (token == "rural" || token == "Rural" || token == "RURAL") return AreaType::Rural;
  if (token == "urban" || token == "Urban" || token == "URBAN") return AreaType::Urban;
  throw ParseError("unknown area code: '" + token + "'");
}

inline std::string area_name(AreaType a) {
  return a == AreaType::Rural ? "rural" : "urban";
}

inline LightingCode parse_lighting(const std::string& token) {
  std::string t;
  t.reserve(token.size());
  for (char ch : token) t.push_back(static_cast<char>(std::tolower(ch)));
  if (t == "daylight") return LightingCode::Daylight;
  if (t == "dark") return LightingCode::Dark;
  if (t == "dark_lighted" || t == "dark-lighted") return LightingCode::DarkLighted;
  if (t == "dawn") return LightingCode::Dawn;
  if (t == "dusk") return LightingCode::Dusk;
  throw ParseError("unknown lighting code: '" + token + "'");
}

inline std::string lighting_name(LightingCode l) {
  switch (l) {
    case LightingCode::Daylight: return "daylight";
    case LightingCode::Dark: return "dark";
    case LightingCode::DarkLighted: return "dark_lighted";
    case LightingCode::Dawn: return "dawn";
    case LightingCode::Dusk: return "dusk";
  }
  return "?";
}

// One of the six (area x lighting) strata. Dawn/Dusk never form a key.
struct SegmentKey {
  AreaType area;
  LightingCode lighting;

  auto operator<=>(const SegmentKey&) const = default;

  std::string name() const { return area_name(area) + "_" + lighting_name(lighting); }
};

inline std::vector<SegmentKey> all_segment_keys() {
  std::vector<SegmentKey> keys;
  for (AreaType a : {AreaType::Rural, AreaType::Urban})
    for (LightingCode l :
         {LightingCode::Daylight, LightingCode::Dark, LightingCode::DarkLighted})
      keys.push_back({a, l});
  return keys;
}

// Returns nullopt for dawn/dusk crashes (excluded from the analysis).
inline std::optional<SegmentKey> classify_segment(AreaType area, LightingCode lighting) {
  if (lighting == LightingCode::Dawn || lighting == LightingCode::Dusk)
    return std::nullopt;
  return SegmentKey{area, lighting};
}

enum class CovariateKind { Indicator, Continuous };

struct CrashRecord {
  SeverityClass severity;
  AreaType area;
  LightingCode lighting;
  std::vector<double> covariates;  // aligned with Dataset::covariate_names
};

struct Dataset {
  std::vector<std::string> covariate_names;
  std::vector<CovariateKind> covariate_kinds;
  std::vector<CrashRecord> records;

  std::size_t size() const { return records.size(); }

  int covariate_index(const std::string& name) const {
    auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
    if (it == covariate_names.end()) return -1;
    return static_cast<int>(it - covariate_names.begin());
  }

  double value(std::size_t row, int col) const { return records[row].covariates[col]; }
};

struct PartitionResult {
  std::map<SegmentKey, Dataset> segments;
  std::size_t excluded = 0;  // dawn/dusk records
};

inline PartitionResult partition_dataset(const Dataset& d) {
  PartitionResult out;
  for (const CrashRecord& rec : d.records) {
    auto key = classify_segment(rec.area, rec.lighting);
    if (!key) {
      ++out.excluded;
      continue;
    }
    Dataset& seg = out.segments[*key];
    if (seg.covariate_names.empty() && seg.records.empty()) {
      seg.covariate_names = d.covariate_names;
      seg.covariate_kinds = d.covariate_kinds;
    }
    seg.records.push_back(rec);
  }
  return out;
}

struct CovariateStats {
  std::string name;
  CovariateKind kind;
  double share_percent = 0.0;  // indicators: share of 1s, in percent
  double mean = 0.0, sd = 0.0, min = 0.0, max = 0.0;
};

struct DescriptiveStats {
  std::size_t n = 0;
  std::array<double, 3> severity_share_percent{};  // Major, Minor, PossibleNo
  std::vector<CovariateStats> covariates;
};

// Sample (n-1) standard deviation; degenerate single-row datasets report 0.
inline DescriptiveStats descriptive_stats(const Dataset& d) {
  if (d.records.empty()) throw std::domain_error("descriptive_stats: empty dataset");
  DescriptiveStats out;
  out.n = d.records.size();
  std::array<std::size_t, 3> counts{};
  for (const CrashRecord& rec : d.records) ++counts[static_cast<int>(rec.severity)];
  for (int i = 0; i < 3; ++i)
    out.severity_share_percent[i] = 100.0 * counts[i] / static_cast<double>(out.n);
  const double n = static_cast<double>(out.n);
  for (std::size_t c = 0; c < d.covariate_names.size(); ++c) {
    CovariateStats cs;
    cs.name = d.covariate_names[c];
    cs.kind = d.covariate_kinds[c];
    double sum = 0.0, sumsq = 0.0;
    double mn = d.records[0].covariates[c], mx = mn;
    for (const CrashRecord& rec : d.records) {
      double v = rec.covariates[c];
      sum += v;
      sumsq += v * v;
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    cs.mean = sum / n;
    double var = out.n > 1 ? std::max(0.0, (sumsq - n * cs.mean * cs.mean) / (n - 1.0)) : 0.0;
    cs.sd = std::sqrt(var);
    cs.min = mn;
    cs.max = mx;
    cs.share_percent = 100.0 * cs.mean;
    out.covariates.push_back(cs);
  }
  return out;
}

}  // namespace sevmix
