#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sevmix/csv.hpp"
#include "sevmix/domain.hpp"
#include "sevmix/errors.hpp"

namespace sevmix {

enum class SourceKind { Categorical, Numeric, Indicator };

struct TransformRule {
  enum class Kind { NaturalLog, Scale, Band, IndicatorEquals };
  Kind kind;
  std::string source;
  std::string output;
  double factor = 1.0;       // Scale
  double lo = 0.0, hi = 0.0; // Band
  std::string equals;        // IndicatorEquals (categorical source)
};

struct SchemaSpec {
  std::string severity_column;
  std::string area_column;
  std::string lighting_column;
  std::vector<std::pair<std::string, SourceKind>> columns;
  std::vector<TransformRule> transforms;

  SourceKind column_kind(const std::string& name) const {
    for (const auto& [n, k] : columns)
      if (n == name) return k;
    throw SchemaError("schema: unknown source column '" + name + "'");
  }

  void validate() const {
    std::set<std::string> names;
    for (const auto& [n, k] : columns) {
      if (!names.insert(n).second)
        throw SchemaError("schema: duplicate column '" + n + "'");
    }
    std::set<std::string> outputs;
    for (const TransformRule& r : transforms) {
      if (!names.count(r.source))
        throw SchemaError("schema: transform source '" + r.source + "' is not a column");
      if (!outputs.insert(r.output).second || names.count(r.output))
        throw SchemaError("schema: duplicate output name '" + r.output + "'");
      if (r.kind == TransformRule::Kind::Band && !(r.lo < r.hi))
        throw SchemaError("schema: band requires lo < hi for '" + r.output + "'");
    }
  }
};

// Numeric transforms. Indicator-on-categorical goes through apply_indicator.
inline double apply_transform(const TransformRule& rule, double value) {
  switch (rule.kind) {
    case TransformRule::Kind::NaturalLog:
      if (!(value > 0.0))
        throw std::domain_error("natural_log of non-positive value in '" +
                                rule.source + "'");
      return std::log(value);
    case TransformRule::Kind::Scale:
      return value * rule.factor;
    case TransformRule::Kind::Band:
      return (rule.lo <= value && value <= rule.hi) ? 1.0 : 0.0;
    case TransformRule::Kind::IndicatorEquals:
      throw std::invalid_argument("indicator transform requires a categorical cell");
  }
  throw std::invalid_argument("unknown transform kind");
}

inline double apply_indicator(const TransformRule& rule, const std::string& cell) {
  return cell == rule.equals ? 1.0 : 0.0;
}

struct ParsedDataset {
  Dataset data;
  std::size_t rows_read = 0;
  std::size_t rows_skipped = 0;
  std::vector<std::string> warnings;
};

namespace detail {
inline double parse_number(const std::string& cell, std::size_t line,
                           const std::string& column) {
  try {
    std::size_t pos = 0;
    double v = std::stod(cell, &pos);
    while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
    if (pos != cell.size()) throw std::invalid_argument("trailing characters");
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": unparseable value '" + cell +
                     "' in column '" + column + "'");
  }
}
}  // namespace detail

inline ParsedDataset parse_dataset(std::istream& in, const SchemaSpec& schema,
                                   bool strict = false) {
  schema.validate();
  std::vector<std::string> header;
  if (!csv_read_row(in, header)) throw SchemaError("empty input: no header row");

  std::map<std::string, int> col_of;
  for (std::size_t i = 0; i < header.size(); ++i) col_of[header[i]] = static_cast<int>(i);
  auto require = [&](const std::string& name) {
    auto it = col_of.find(name);
    if (it == col_of.end()) throw SchemaError("missing column '" + name + "'");
    return it->second;
  };
  int sev_col = require(schema.severity_column);
  int area_col = require(schema.area_column);
  int light_col = require(schema.lighting_column);
  for (const auto& [name, kind] : schema.columns) require(name);

  ParsedDataset out;
  Dataset& ds = out.data;
  // Source covariates first (numeric/indicator), then derived outputs.
  std::vector<std::pair<int, SourceKind>> direct_cols;
  for (const auto& [name, kind] : schema.columns) {
    if (kind == SourceKind::Categorical) continue;
    ds.covariate_names.push_back(name);
    ds.covariate_kinds.push_back(kind == SourceKind::Indicator
                                     ? CovariateKind::Indicator
                                     : CovariateKind::Continuous);
    direct_cols.emplace_back(col_of[name], kind);
  }
  std::vector<std::pair<const TransformRule*, int>> derived;
  for (const TransformRule& r : schema.transforms) {
    ds.covariate_names.push_back(r.output);
    bool indicator = r.kind == TransformRule::Kind::Band ||
                     r.kind == TransformRule::Kind::IndicatorEquals;
    ds.covariate_kinds.push_back(indicator ? CovariateKind::Indicator
                                           : CovariateKind::Continuous);
    derived.emplace_back(&r, col_of[r.source]);
  }

  std::vector<std::string> row;
  std::size_t line = 1;
  while (csv_read_row(in, row)) {
    ++line;
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    ++out.rows_read;
    try {
      if (row.size() != header.size())
        throw ParseError("line " + std::to_string(line) + ": expected " +
                         std::to_string(header.size()) + " fields, got " +
                         std::to_string(row.size()));
      CrashRecord rec;
      rec.severity = consolidate_severity(parse_kabco(row[sev_col]));
      rec.area = parse_area(row[area_col]);
      rec.lighting = parse_lighting(row[light_col]);
      rec.covariates.reserve(ds.covariate_names.size());
      for (const auto& [col, kind] : direct_cols) {
        double v = detail::parse_number(row[col], line, header[col]);
        if (kind == SourceKind::Indicator && v != 0.0 && v != 1.0)
          throw ParseError("line " + std::to_string(line) + ": indicator column '" +
                           header[col] + "' outside {0,1}");
        rec.covariates.push_back(v);
      }
      for (const auto& [rule, col] : derived) {
        if (rule->kind == TransformRule::Kind::IndicatorEquals) {
          rec.covariates.push_back(apply_indicator(*rule, row[col]));
        } else {
          double v = detail::parse_number(row[col], line, header[col]);
          try {
            rec.covariates.push_back(apply_transform(*rule, v));
          } catch (const std::domain_error& e) {
            throw ParseError("line " + std::to_string(line) + ": " + e.what());
          }
        }
      }
      ds.records.push_back(std::move(rec));
    } catch (const ParseError& e) {
      if (strict) throw;
      ++out.rows_skipped;
      out.warnings.push_back(e.what());
    }
  }
  return out;
}

inline ParsedDataset parse_dataset(const std::string& path, const SchemaSpec& schema,
                                   bool strict = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  return parse_dataset(in, schema, strict);
}

inline void write_csv(const Dataset& d, std::ostream& out) {
  std::vector<std::string> row = {"severity", "area", "lighting"};
  for (const std::string& name : d.covariate_names) row.push_back(name);
  csv_write_row(out, row);
  char buf[64];
  for (const CrashRecord& rec : d.records) {
    row.clear();
    row.emplace_back(1, severity_representative(rec.severity));
    row.push_back(area_name(rec.area));
    row.push_back(lighting_name(rec.lighting));
    for (double v : rec.covariates) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      row.emplace_back(buf);
    }
    csv_write_row(out, row);
  }
}

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  write_csv(d, out);
}

// Schema that re-parses a file produced by write_csv into an equal Dataset.
inline SchemaSpec roundtrip_schema(const Dataset& d) {
  SchemaSpec s;
  s.severity_column = "severity";
  s.area_column = "area";
  s.lighting_column = "lighting";
  for (std::size_t i = 0; i < d.covariate_names.size(); ++i) {
    s.columns.emplace_back(d.covariate_names[i],
                           d.covariate_kinds[i] == CovariateKind::Indicator
                               ? SourceKind::Indicator
                               : SourceKind::Numeric);
  }
  return s;
}

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;     // non-finite cells, indicators outside {0,1}
  std::vector<std::string> zero_variance;  // warning-level
};

inline ValidationReport validate_dataset(const Dataset& d) {
  ValidationReport rep;
  for (std::size_t c = 0; c < d.covariate_names.size(); ++c) {
    bool constant = true;
    double first = d.records.empty() ? 0.0 : d.records[0].covariates[c];
    for (std::size_t r = 0; r < d.records.size(); ++r) {
      double v = d.records[r].covariates[c];
      if (!std::isfinite(v)) {
        rep.violations.push_back("non-finite value in column '" + d.covariate_names[c] +
                                 "' at row " + std::to_string(r));
      } else if (d.covariate_kinds[c] == CovariateKind::Indicator && v != 0.0 &&
                 v != 1.0) {
        rep.violations.push_back("indicator column '" + d.covariate_names[c] +
                                 "' outside {0,1} at row " + std::to_string(r));
      }
      if (v != first) constant = false;
    }
    if (constant && !d.records.empty())
      rep.zero_variance.push_back(d.covariate_names[c]);
  }
  rep.ok = rep.violations.empty();
  return rep;
}

}  // namespace sevmix
