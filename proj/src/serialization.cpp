#include "enmf/serialization.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace enmf {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ValidationError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) {
      throw ValidationError(std::string("unknown key '") + key + "' in " + what);
    }
  }
}

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_number_if(const Json& j, const char* key, double& out) {
  if (j.contains(key)) out = number_from_json(j.at(key));
}

std::string initial_rotation_name(InitialRotation r) {
  return r == InitialRotation::balanced ? "balanced" : "identity";
}

InitialRotation parse_initial_rotation(const std::string& s) {
  if (s == "balanced") return InitialRotation::balanced;
  if (s == "identity") return InitialRotation::identity;
  throw ValidationError("unknown initial rotation '" + s + "'");
}

}  // namespace

Json number_to_json(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double number_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ValidationError("expected a number, got " + j.dump());
}

void to_json(Json& j, const RotationConfig& c) {
  j = Json{{"rho", c.rho},
           {"initial_rotation", initial_rotation_name(c.initial_rotation)},
           {"max_iters", c.max_iters},
           {"primal_tol", c.primal_tol},
           {"negativity_tol", c.negativity_tol},
           {"gamma", c.gamma},
           {"t", c.t}};
}

void from_json(const Json& j, RotationConfig& c) {
  reject_unknown(j, {"rho", "initial_rotation", "max_iters", "primal_tol", "negativity_tol", "gamma", "t"},
                 "rotation config");
  read_number_if(j, "rho", c.rho);
  if (j.contains("initial_rotation")) {
    c.initial_rotation = parse_initial_rotation(j.at("initial_rotation").get<std::string>());
  }
  read_if(j, "max_iters", c.max_iters);
  read_number_if(j, "primal_tol", c.primal_tol);
  read_number_if(j, "negativity_tol", c.negativity_tol);
  read_number_if(j, "gamma", c.gamma);
  read_number_if(j, "t", c.t);
}

void to_json(Json& j, const PenaltyConfig& c) {
  j = Json{{"rho_u", c.rho_u},
           {"rho_v", c.rho_v},
           {"pbcd_eps", c.pbcd_eps},
           {"pbcd_max_iter", c.pbcd_max_iter},
           {"step_mode", c.step_mode == StepMode::optimal ? "optimal" : "fixed"},
           {"fixed_step", c.fixed_step},
           {"sweep_cap", c.sweep_cap}};
  j["delta_u"] = c.delta_u ? Json(*c.delta_u) : Json(nullptr);
  j["delta_v"] = c.delta_v ? Json(*c.delta_v) : Json(nullptr);
}

void from_json(const Json& j, PenaltyConfig& c) {
  reject_unknown(j, {"delta_u", "delta_v", "rho_u", "rho_v", "pbcd_eps", "pbcd_max_iter",
                     "step_mode", "fixed_step", "sweep_cap"},
                 "penalty config");
  for (auto [key, slot] : {std::pair{"delta_u", &c.delta_u}, std::pair{"delta_v", &c.delta_v}}) {
    if (j.contains(key)) {
      const Json& v = j.at(key);
      *slot = v.is_null() ? std::nullopt : std::optional<double>(number_from_json(v));
    }
  }
  read_number_if(j, "rho_u", c.rho_u);
  read_number_if(j, "rho_v", c.rho_v);
  read_number_if(j, "pbcd_eps", c.pbcd_eps);
  read_if(j, "pbcd_max_iter", c.pbcd_max_iter);
  if (j.contains("step_mode")) {
    const auto mode = j.at("step_mode").get<std::string>();
    if (mode == "optimal") {
      c.step_mode = StepMode::optimal;
    } else if (mode == "fixed") {
      c.step_mode = StepMode::fixed;
    } else {
      throw ValidationError("unknown step_mode '" + mode + "'");
    }
  }
  read_number_if(j, "fixed_step", c.fixed_step);
  read_if(j, "sweep_cap", c.sweep_cap);
}

void to_json(Json& j, const DescentStop& c) {
  j = Json{{"kkt_tol", c.kkt_tol}, {"max_iters", c.max_iters}};
  j["time_budget_s"] = c.time_budget_s ? Json(*c.time_budget_s) : Json(nullptr);
}

void from_json(const Json& j, DescentStop& c) {
  reject_unknown(j, {"kkt_tol", "max_iters", "time_budget_s"}, "descent config");
  read_number_if(j, "kkt_tol", c.kkt_tol);
  read_if(j, "max_iters", c.max_iters);
  if (j.contains("time_budget_s")) {
    const Json& v = j.at("time_budget_s");
    c.time_budget_s = v.is_null() ? std::nullopt : std::optional<double>(number_from_json(v));
  }
}

void to_json(Json& j, const PipelineConfig& c) {
  j = Json{{"r", c.r},
           {"svd", c.svd == SvdMethod::exact ? "exact" : "randomized"},
           {"randomized",
            {{"oversampling", c.randomized.oversampling},
             {"power_iters", c.randomized.power_iters},
             {"seed", c.randomized.seed.value}}},
           {"rotation", c.rotation},
           {"penalty", c.penalty},
           {"post_rotation", post_rotation_name(c.post_rotation)},
           {"descent", c.descent}};
}

void from_json(const Json& j, PipelineConfig& c) {
  reject_unknown(j, {"r", "svd", "randomized", "rotation", "penalty", "post_rotation", "descent"},
                 "pipeline config");
  read_if(j, "r", c.r);
  if (j.contains("svd")) {
    const auto s = j.at("svd").get<std::string>();
    if (s == "exact") {
      c.svd = SvdMethod::exact;
    } else if (s == "randomized") {
      c.svd = SvdMethod::randomized;
    } else {
      throw ValidationError("unknown svd method '" + s + "'");
    }
  }
  if (j.contains("randomized")) {
    const Json& rj = j.at("randomized");
    reject_unknown(rj, {"oversampling", "power_iters", "seed"}, "randomized svd config");
    read_if(rj, "oversampling", c.randomized.oversampling);
    read_if(rj, "power_iters", c.randomized.power_iters);
    read_if(rj, "seed", c.randomized.seed.value);
  }
  if (j.contains("rotation")) from_json(j.at("rotation"), c.rotation);
  if (j.contains("penalty")) from_json(j.at("penalty"), c.penalty);
  if (j.contains("post_rotation")) {
    c.post_rotation = parse_post_rotation(j.at("post_rotation").get<std::string>());
  }
  if (j.contains("descent")) from_json(j.at("descent"), c.descent);
}

void to_json(Json& j, const PhaseTimings& t) {
  j = Json{{"svd_s", t.svd_s},
           {"rotation_s", t.rotation_s},
           {"feasibility_descent_s", t.feasibility_descent_s},
           {"total_s", t.total_s}};
}

void from_json(const Json& j, PhaseTimings& t) {
  t.svd_s = number_from_json(j.at("svd_s"));
  t.rotation_s = number_from_json(j.at("rotation_s"));
  t.feasibility_descent_s = number_from_json(j.at("feasibility_descent_s"));
  t.total_s = number_from_json(j.at("total_s"));
}

void to_json(Json& j, const KktResiduals& k) {
  j = Json{{"delta_W", number_to_json(k.delta_W)},
           {"sigma_W", number_to_json(k.sigma_W)},
           {"min_entry", number_to_json(k.min_entry)},
           {"min_grad_on_zero", number_to_json(k.min_grad_on_zero)}};
}

void from_json(const Json& j, KktResiduals& k) {
  k.delta_W = number_from_json(j.at("delta_W"));
  k.sigma_W = number_from_json(j.at("sigma_W"));
  k.min_entry = number_from_json(j.at("min_entry"));
  k.min_grad_on_zero = number_from_json(j.at("min_grad_on_zero"));
}

void to_json(Json& j, const EquivalenceReport& r) {
  Json scal_u = Json::array(), scal_v = Json::array();
  for (double s : r.scalings_u) scal_u.push_back(number_to_json(s));
  for (double s : r.scalings_v) scal_v.push_back(number_to_json(s));
  j = Json{{"matched_u_pct", r.matched_u_pct},
           {"matched_v_pct", r.matched_v_pct},
           {"permutation", r.permutation},
           {"scalings_u", scal_u},
           {"scalings_v", scal_v},
           {"reciprocal_scaling_gap", number_to_json(r.reciprocal_scaling_gap)},
           {"excluded_zero_columns_a", r.excluded_zero_columns_a},
           {"excluded_zero_columns_b", r.excluded_zero_columns_b},
           {"error_gap", number_to_json(r.error_gap)},
           {"verdict", verdict_name(r.verdict)}};
  j["error_ratio"] = r.error_ratio ? number_to_json(*r.error_ratio) : Json(nullptr);
}

void to_json(Json& j, const DatasetSpec& d) {
  if (const auto* e = std::get_if<ExactSpec>(&d.kind)) {
    j = Json{{"kind", "exact"}, {"n", e->n},         {"m", e->m},
             {"r", e->r},       {"sparsity", e->sparsity}, {"seed", e->seed.value}};
  } else if (const auto* s = std::get_if<DenseSnrSpec>(&d.kind)) {
    j = Json{{"kind", "dense_snr"}, {"n", s->n}, {"k", s->k}, {"m", s->m},
             {"snr_db", number_to_json(s->snr_db)}, {"seed", s->seed.value}};
  } else {
    const auto& f = std::get<FileSpec>(d.kind);
    j = Json{{"kind", "file"}, {"path", f.path.string()},
             {"format", std::string(format_name(f.format))}};
  }
  j["id"] = d.id;
}

void from_json(const Json& j, DatasetSpec& d) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "exact") {
    reject_unknown(j, {"kind", "id", "n", "m", "r", "sparsity", "seed"}, "exact dataset");
    ExactSpec e;
    e.n = j.at("n").get<Index>();
    e.m = j.at("m").get<Index>();
    e.r = j.at("r").get<Index>();
    read_number_if(j, "sparsity", e.sparsity);
    read_if(j, "seed", e.seed.value);
    d.kind = e;
  } else if (kind == "dense_snr") {
    reject_unknown(j, {"kind", "id", "n", "k", "m", "snr_db", "seed"}, "dense_snr dataset");
    DenseSnrSpec s;
    s.n = j.at("n").get<Index>();
    s.k = j.at("k").get<Index>();
    s.m = j.at("m").get<Index>();
    read_number_if(j, "snr_db", s.snr_db);
    read_if(j, "seed", s.seed.value);
    d.kind = s;
  } else if (kind == "file") {
    reject_unknown(j, {"kind", "id", "path", "format"}, "file dataset");
    FileSpec f;
    f.path = j.at("path").get<std::string>();
    f.format = j.contains("format") ? parse_format(j.at("format").get<std::string>())
                                    : format_from_extension(f.path);
    d.kind = f;
  } else {
    throw ValidationError("unknown dataset kind '" + kind + "'");
  }
  d.id = j.value("id", std::string());
  if (d.id.empty()) throw ValidationError("dataset needs a non-empty id");
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return Json::parse(buffer.str());
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace enmf
