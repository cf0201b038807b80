#pragma once

// JSON forms of the run report, the degradation manifest and EMConfig
// overrides. Non-finite metrics are written as the strings "inf", "-inf" or
// "nan" since JSON has no literal for them.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmrf/em.hpp"
#include "gmrf/lattice.hpp"

namespace gmrf {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline json real_to_json(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

inline double real_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return j.get<double>();
}

inline void to_json(json& j, const Hyperparams& t) {
  j = json{{"sigma2", t.sigma2}, {"b", t.b}, {"lambda", t.lambda}, {"alpha", t.alpha}};
}

// Missing keys keep their current value, so a partial object is an override.
inline void from_json(const json& j, Hyperparams& t) {
  if (j.contains("sigma2")) t.sigma2 = j.at("sigma2").get<double>();
  if (j.contains("b")) t.b = j.at("b").get<double>();
  if (j.contains("lambda")) t.lambda = j.at("lambda").get<double>();
  if (j.contains("alpha")) t.alpha = j.at("alpha").get<double>();
}

inline void to_json(json& j, const EMConfig& c) {
  j = json{{"eta_b", c.eta_b},
           {"eta_lambda", c.eta_lambda},
           {"eta_alpha", c.eta_alpha},
           {"t_m", c.t_m},
           {"t_mf", c.t_mf},
           {"epsilon", c.epsilon},
           {"max_em_iters", c.max_em_iters},
           {"theta_init", c.theta_init},
           {"use_alpha_init", c.use_alpha_init},
           {"relative_tolerance", c.relative_tolerance},
           {"lambda_floor", c.lambda_floor},
           {"alpha_floor", c.alpha_floor},
           {"sigma2_floor", c.sigma2_floor},
           {"sweep", c.sweep.mode == SweepMode::GaussSeidel ? "gauss-seidel" : "jacobi"},
           {"threads", c.sweep.threads}};
}

inline void from_json(const json& j, EMConfig& c) {
  static const char* known[] = {"eta_b",        "eta_lambda",     "eta_alpha",
                                "t_m",          "t_mf",           "epsilon",
                                "max_em_iters", "theta_init",     "use_alpha_init",
                                "relative_tolerance", "lambda_floor", "alpha_floor",
                                "sigma2_floor", "sweep",          "threads"};
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  auto take = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  take("eta_b", c.eta_b);
  take("eta_lambda", c.eta_lambda);
  take("eta_alpha", c.eta_alpha);
  take("t_m", c.t_m);
  take("t_mf", c.t_mf);
  take("epsilon", c.epsilon);
  take("max_em_iters", c.max_em_iters);
  if (j.contains("theta_init")) from_json(j.at("theta_init"), c.theta_init);
  take("use_alpha_init", c.use_alpha_init);
  take("relative_tolerance", c.relative_tolerance);
  take("lambda_floor", c.lambda_floor);
  take("alpha_floor", c.alpha_floor);
  take("sigma2_floor", c.sigma2_floor);
  if (j.contains("sweep")) {
    const auto s = j.at("sweep").get<std::string>();
    if (s == "gauss-seidel")
      c.sweep.mode = SweepMode::GaussSeidel;
    else if (s == "jacobi")
      c.sweep.mode = SweepMode::Jacobi;
    else
      throw std::invalid_argument("sweep must be 'gauss-seidel' or 'jacobi'");
  }
  take("threads", c.sweep.threads);
}

struct RunReport {
  int schema = kSchemaVersion;
  std::string method;
  Hyperparams theta;
  std::size_t iterations = 0;
  bool converged = false;
  std::optional<double> mse, psnr_db;          // restored vs truth
  std::optional<double> mse_avg, psnr_avg_db;  // average image vs truth
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
  std::size_t side = 0, k_count = 0;
  double offset = 0.0;
  PhaseTimes phases;
  std::string status = "ok";
  json config_echo = json::object();

  friend bool operator==(const RunReport& a, const RunReport& b) {
    auto same = [](const std::optional<double>& x, const std::optional<double>& y) {
      if (x.has_value() != y.has_value()) return false;
      if (!x) return true;
      return *x == *y || (std::isnan(*x) && std::isnan(*y));
    };
    return a.schema == b.schema && a.method == b.method && a.theta == b.theta &&
           a.iterations == b.iterations && a.converged == b.converged && same(a.mse, b.mse) &&
           same(a.psnr_db, b.psnr_db) && same(a.mse_avg, b.mse_avg) &&
           same(a.psnr_avg_db, b.psnr_avg_db) && a.wall_time_s == b.wall_time_s &&
           a.seed == b.seed && a.side == b.side && a.k_count == b.k_count &&
           a.offset == b.offset && a.phases.transform_s == b.phases.transform_s &&
           a.phases.e_step_s == b.phases.e_step_s && a.phases.m_step_s == b.phases.m_step_s &&
           a.phases.restore_s == b.phases.restore_s && a.status == b.status &&
           a.config_echo == b.config_echo;
  }
};

inline void to_json(json& j, const RunReport& r) {
  auto opt = [](const std::optional<double>& x) { return x ? real_to_json(*x) : json(nullptr); };
  j = json{{"schema", r.schema},
           {"method", r.method},
           {"theta", r.theta},
           {"iterations", r.iterations},
           {"converged", r.converged},
           {"mse", opt(r.mse)},
           {"psnr_db", opt(r.psnr_db)},
           {"mse_average_image", opt(r.mse_avg)},
           {"psnr_average_image_db", opt(r.psnr_avg_db)},
           {"wall_time_s", r.wall_time_s},
           {"seed", r.seed},
           {"sizes", {{"v", r.side}, {"n", r.side * r.side}, {"k", r.k_count}}},
           {"offset", r.offset},
           {"phases",
            {{"transform_s", r.phases.transform_s},
             {"e_step_s", r.phases.e_step_s},
             {"m_step_s", r.phases.m_step_s},
             {"restore_s", r.phases.restore_s}}},
           {"status", r.status},
           {"config", r.config_echo}};
}

inline void from_json(const json& j, RunReport& r) {
  r.schema = j.at("schema").get<int>();
  if (r.schema != kSchemaVersion)
    throw std::invalid_argument("unsupported report schema " + std::to_string(r.schema));
  auto opt = [&j](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return real_from_json(j.at(key));
  };
  r.method = j.at("method").get<std::string>();
  r.theta = Hyperparams{};
  from_json(j.at("theta"), r.theta);
  r.iterations = j.at("iterations").get<std::size_t>();
  r.converged = j.at("converged").get<bool>();
  r.mse = opt("mse");
  r.psnr_db = opt("psnr_db");
  r.mse_avg = opt("mse_average_image");
  r.psnr_avg_db = opt("psnr_average_image_db");
  r.wall_time_s = j.at("wall_time_s").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.side = j.at("sizes").at("v").get<std::size_t>();
  r.k_count = j.at("sizes").at("k").get<std::size_t>();
  r.offset = j.value("offset", 0.0);
  if (j.contains("phases")) {
    const auto& p = j.at("phases");
    r.phases = {p.value("transform_s", 0.0), p.value("e_step_s", 0.0), p.value("m_step_s", 0.0),
                p.value("restore_s", 0.0)};
  }
  r.status = j.value("status", std::string("ok"));
  r.config_echo = j.value("config", json::object());
}

struct Manifest {
  int schema = kSchemaVersion;
  double sigma = 0.0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::optional<std::string> truth_path;
  std::vector<std::string> images;  // relative to the manifest's directory

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline void to_json(json& j, const Manifest& m) {
  j = json{{"schema", m.schema}, {"sigma", m.sigma}, {"k", m.k}, {"seed", m.seed},
           {"images", m.images}};
  if (m.truth_path) j["truth_path"] = *m.truth_path;
}

inline void from_json(const json& j, Manifest& m) {
  m.schema = j.at("schema").get<int>();
  if (m.schema != kSchemaVersion)
    throw std::invalid_argument("unsupported manifest schema " + std::to_string(m.schema));
  m.sigma = j.at("sigma").get<double>();
  m.k = j.at("k").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.images = j.at("images").get<std::vector<std::string>>();
  m.truth_path.reset();
  if (j.contains("truth_path") && !j.at("truth_path").is_null())
    m.truth_path = j.at("truth_path").get<std::string>();
  if (m.images.size() != m.k)
    throw std::invalid_argument("manifest lists " + std::to_string(m.images.size()) +
                                " images but k = " + std::to_string(m.k));
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace gmrf
