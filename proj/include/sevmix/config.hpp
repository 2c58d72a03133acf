#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "sevmix/ingest.hpp"
#include "sevmix/model.hpp"
#include "sevmix/synth.hpp"

namespace sevmix {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline SchemaSpec schema_from_json(const json& j) {
  try {
    SchemaSpec s;
    s.severity_column = j.at("severity_column").get<std::string>();
    s.area_column = j.at("area_column").get<std::string>();
    s.lighting_column = j.at("lighting_column").get<std::string>();
    for (const json& col : j.at("columns")) {
      std::string kind = col.at("kind").get<std::string>();
      SourceKind k;
      if (kind == "numeric") k = SourceKind::Numeric;
      else if (kind == "indicator") k = SourceKind::Indicator;
      else if (kind == "categorical") k = SourceKind::Categorical;
      else throw ConfigError("schema: unknown column kind '" + kind + "'");
      s.columns.emplace_back(col.at("name").get<std::string>(), k);
    }
    for (const json& tr : j.value("transforms", json::array())) {
      TransformRule r;
      std::string kind = tr.at("kind").get<std::string>();
      r.source = tr.at("source").get<std::string>();
      r.output = tr.at("output").get<std::string>();
      if (kind == "natural_log") {
        r.kind = TransformRule::Kind::NaturalLog;
      } else if (kind == "scale") {
        r.kind = TransformRule::Kind::Scale;
        r.factor = tr.at("factor").get<double>();
      } else if (kind == "band") {
        r.kind = TransformRule::Kind::Band;
        r.lo = tr.at("lo").get<double>();
        r.hi = tr.at("hi").get<double>();
      } else if (kind == "indicator") {
        r.kind = TransformRule::Kind::IndicatorEquals;
        r.equals = tr.at("equals").get<std::string>();
      } else {
        throw ConfigError("schema: unknown transform kind '" + kind + "'");
      }
      s.transforms.push_back(std::move(r));
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
}

inline ModelSpec model_from_json(const json& j) {
  try {
    ModelSpec spec;
    spec.base_alternative = parse_severity_class(j.at("base_alternative").get<std::string>());
    for (const json& t : j.at("terms")) {
      Term term;
      term.alternative = parse_severity_class(t.at("alternative").get<std::string>());
      if (!t.value("constant", false))
        term.covariate = t.at("covariate").get<std::string>();
      term.coef_id = t.at("coefficient").get<std::string>();
      spec.terms.push_back(std::move(term));
    }
    for (const json& r : j.value("random", json::array()))
      spec.random_ids.push_back(r.get<std::string>());
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

inline json model_to_json(const ModelSpec& spec) {
  json j;
  j["base_alternative"] = severity_name(spec.base_alternative);
  j["terms"] = json::array();
  for (const Term& t : spec.terms) {
    json term;
    term["alternative"] = severity_name(t.alternative);
    if (t.is_constant()) term["constant"] = true;
    else term["covariate"] = t.covariate;
    term["coefficient"] = t.coef_id;
    j["terms"].push_back(term);
  }
  j["random"] = spec.random_ids;
  return j;
}

inline ParameterVector parameters_from_json(const json& j) {
  ParameterVector p;
  const json fixed = j.value("fixed", json::object());
  for (const auto& [key, val] : fixed.items()) p.fixed[key] = val.get<double>();
  const json random = j.value("random", json::object());
  for (const auto& [key, val] : random.items())
    p.random[key] = {val.at("mean").get<double>(), val.at("sd").get<double>()};
  return p;
}

inline json parameters_to_json(const ParameterVector& p) {
  json j;
  j["fixed"] = json::object();
  for (const auto& [id, v] : p.fixed) j["fixed"][id] = v;
  j["random"] = json::object();
  for (const auto& [id, rc] : p.random)
    j["random"][id] = {{"mean", rc.mean}, {"sd", rc.spread}};
  return j;
}

struct EstimationSettings {
  std::size_t n_draws = 500;
  std::size_t discard = 10;
  double retention_confidence = 0.90;
  double test_confidence = 0.99;
  int workers = 1;
};

struct RunConfig {
  std::string input;
  std::string output_dir = "out";
  SchemaSpec schema;
  ModelSpec model;
  std::map<std::string, ModelSpec> segment_models;
  EstimationSettings estimation;
  bool strict = false;
};

inline RunConfig run_config_from_json(const json& j) {
  try {
    RunConfig cfg;
    cfg.input = j.at("input").get<std::string>();
    cfg.output_dir = j.value("output_dir", std::string("out"));
    cfg.schema = schema_from_json(j.at("schema"));
    cfg.model = model_from_json(j.at("model"));
    const json seg_models = j.value("segment_models", json::object());
    for (const auto& [seg, m] : seg_models.items())
      cfg.segment_models.emplace(seg, model_from_json(m));
    if (j.contains("estimation")) {
      const json& e = j["estimation"];
      cfg.estimation.n_draws = e.value("n_draws", static_cast<std::size_t>(500));
      cfg.estimation.discard = e.value("discard", static_cast<std::size_t>(10));
      cfg.estimation.retention_confidence = e.value("retention_confidence", 0.90);
      cfg.estimation.test_confidence = e.value("test_confidence", 0.99);
      cfg.estimation.workers = e.value("workers", 1);
    }
    if (cfg.estimation.n_draws < 1) throw ConfigError("estimation: n_draws must be >= 1");
    cfg.strict = j.value("strict", false);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

struct SynthConfig {
  DgpSpec dgp;
  std::size_t n = 0;
  std::string output;
};

inline SynthConfig synth_config_from_json(const json& j) {
  try {
    SynthConfig cfg;
    cfg.dgp.spec = model_from_json(j.at("model"));
    cfg.dgp.params = parameters_from_json(j.at("parameters"));
    cfg.dgp.seed = j.at("seed").get<std::uint64_t>();
    cfg.n = j.at("n").get<std::size_t>();
    cfg.output = j.value("output", std::string("synthetic.csv"));
    for (const json& c : j.at("covariates")) {
      CovariateGen g;
      g.name = c.at("name").get<std::string>();
      std::string kind = c.at("kind").get<std::string>();
      if (kind == "indicator") {
        g.kind = CovariateGen::Kind::Indicator;
        g.p = c.at("p").get<double>();
      } else if (kind == "uniform") {
        g.kind = CovariateGen::Kind::Uniform;
        g.lo = c.at("lo").get<double>();
        g.hi = c.at("hi").get<double>();
      } else if (kind == "normal") {
        g.kind = CovariateGen::Kind::Normal;
        g.mean = c.at("mean").get<double>();
        g.sd = c.at("sd").get<double>();
      } else {
        throw ConfigError("covariates: unknown kind '" + kind + "'");
      }
      cfg.dgp.covariates.push_back(std::move(g));
    }
    for (const json& s : j.value("segments", json::array())) {
      SegmentMix mix;
      mix.area = parse_area(s.at("area").get<std::string>());
      mix.lighting = parse_lighting(s.at("lighting").get<std::string>());
      mix.share = s.at("share").get<double>();
      const json overrides = s.value("overrides", json::object());
      for (const auto& [id, v] : overrides.items()) mix.overrides[id] = v.get<double>();
      cfg.dgp.segments.push_back(std::move(mix));
    }
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
}

}  // namespace sevmix
