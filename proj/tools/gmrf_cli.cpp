// gmrf_cli: degrade | denoise | bench | check
//
// exit codes: 0 success, 2 usage error, 3 numerical failure

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gmrf/bench.hpp"
#include "gmrf/checks.hpp"
#include "gmrf/degrade.hpp"
#include "gmrf/image_io.hpp"
#include "gmrf/pipeline.hpp"
#include "gmrf/report.hpp"

namespace fs = std::filesystem;
using namespace gmrf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string pad3(std::size_t i) {
  std::string s = std::to_string(i);
  while (s.size() < 3) s.insert(s.begin(), '0');
  return s;
}

ImageBuffer load_square(const fs::path& path, std::size_t& side) {
  const GrayImage img = read_image(path);
  ImageBuffer buf = to_buffer(img, path.string());
  side = img.width;
  return buf;
}

// ---------------------------------------------------------------- degrade

struct DegradeArgs {
  std::string in, out;
  double sigma = 30.0;
  std::size_t k = 1;
  std::uint64_t seed = 0;
  std::string format = "pgm";
};

int cmd_degrade(const DegradeArgs& a) {
  std::size_t v = 0;
  const ImageBuffer x = load_square(a.in, v);
  if (!(a.sigma > 0)) throw UsageError("--sigma must be positive");
  if (a.k < 1) throw UsageError("--k must be at least 1");
  const LatticeSpec spec(v);
  const ObservationSet obs = degrade(spec, x, {a.sigma, a.k, a.seed});
  fs::create_directories(a.out);
  Manifest m;
  m.sigma = a.sigma;
  m.k = a.k;
  m.seed = a.seed;
  m.truth_path = fs::absolute(a.in).lexically_normal().string();
  for (std::size_t i = 0; i < a.k; ++i) {
    const std::string name = "y_" + pad3(i) + "." + a.format;
    write_image(fs::path(a.out) / name, quantize(obs.images()[i], v));
    m.images.push_back(name);
  }
  write_json(fs::path(a.out) / "manifest.json", m);
  std::cout << "wrote " << a.k << " degraded image(s) and manifest.json to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- denoise

struct DenoiseArgs {
  std::string method = "linear";
  std::string manifest;
  std::vector<std::string> images;
  std::string truth;
  bool no_truth = false;
  std::string out = ".";
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool clip = false;
  std::size_t polish = 0;
  bool verbose = false;
};

void log_trace(const EMTrace& t) {
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    const auto& r = t.records[i];
    std::fprintf(stderr, "iter %3zu  sigma2=%.6g b=%.3g lambda=%.6g alpha=%.6g  delta=%.3g  mf=%.3g\n",
                 i + 1, r.theta.sigma2, r.theta.b, r.theta.lambda, r.theta.alpha,
                 r.max_param_delta, r.mf_residual);
  }
}

int cmd_denoise(const DenoiseArgs& a) {
  const Method method = [&] {
    try {
      return parse_method(a.method);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }();
  if (a.manifest.empty() == a.images.empty())
    throw UsageError("give exactly one of --manifest or --images");

  std::vector<fs::path> paths;
  std::optional<fs::path> truth_path;
  std::uint64_t seed = 0;
  if (!a.manifest.empty()) {
    Manifest m;
    from_json(read_json(a.manifest), m);
    const fs::path base = fs::path(a.manifest).parent_path();
    for (const auto& p : m.images) paths.push_back(fs::path(p).is_absolute() ? fs::path(p) : base / p);
    if (m.truth_path) truth_path = fs::path(*m.truth_path);
    seed = m.seed;
  } else {
    for (const auto& p : a.images) paths.emplace_back(p);
  }
  if (!a.truth.empty()) truth_path = fs::path(a.truth);
  if (a.no_truth) truth_path.reset();
  if (a.seed) seed = *a.seed;

  std::size_t v = 0;
  std::vector<ImageBuffer> ys;
  for (const auto& p : paths) {
    std::size_t side = 0;
    ys.push_back(load_square(p, side));
    if (v != 0 && side != v)
      throw UsageError("inconsistent image sizes: " + p.string() + " is " + std::to_string(side) +
                       "x" + std::to_string(side) + ", expected " + std::to_string(v) + "x" +
                       std::to_string(v));
    v = side;
  }
  const LatticeSpec spec(v);
  const ObservationSet obs(spec, std::move(ys));

  DenoiseOptions opt;
  if (!a.config.empty()) {
    try {
      from_json(read_json(a.config), opt.em);
      opt.em.validate();
    } catch (const std::exception& e) {
      throw UsageError(std::string("bad --config: ") + e.what());
    }
  }
  opt.em.sweep.threads = a.threads;
  opt.polish_sweeps = a.polish;
  if (method == Method::Oracle && v > oracle::kMaxDenseSide)
    throw UsageError("--method oracle is limited to images up to 32x32");

  RunReport rep;
  rep.method = to_string(method);
  rep.seed = seed;
  rep.side = v;
  rep.k_count = obs.k_count();
  rep.config_echo = {{"em", opt.em},
                     {"polish_sweeps", opt.polish_sweeps},
                     {"clip", a.clip},
                     {"threads", a.threads},
                     {"truth", truth_path ? truth_path->string() : ""}};
  std::vector<std::string> names;
  for (const auto& p : paths) names.push_back(p.string());
  rep.config_echo["images"] = names;

  fs::create_directories(a.out);
  const fs::path report_path = fs::path(a.out) / "report.json";
  Restoration res;
  try {
    res = denoise(obs, method, opt);
  } catch (const NumericalFailure& e) {
    rep.status = std::string("numerical_failure: ") + e.what();
    rep.theta = e.trace().theta;
    rep.iterations = e.trace().iterations_used;
    rep.converged = false;
    if (a.verbose) log_trace(e.trace());
    write_json(report_path, rep);
    std::cerr << "error: " << e.what() << " (partial report in " << report_path.string() << ")\n";
    return kExitNumerical;
  }
  if (a.verbose) log_trace(res.trace);
  if (!res.restored.all_finite()) {
    rep.status = "numerical_failure: non-finite restored image";
    write_json(report_path, rep);
    std::cerr << "error: restored image is not finite\n";
    return kExitNumerical;
  }

  rep.theta = res.trace.theta;
  rep.iterations = res.trace.iterations_used;
  rep.converged = res.trace.converged;
  rep.wall_time_s = res.wall_time_s;
  rep.offset = res.offset;
  rep.phases = res.trace.phases;
  if (truth_path) {
    std::size_t side = 0;
    const ImageBuffer x = load_square(*truth_path, side);
    if (side != v) throw UsageError("ground truth size does not match the degraded images");
    const ImageBuffer est = a.clip ? clipped(res.restored) : res.restored;
    const ImageBuffer avg = a.clip ? clipped(obs.avg()) : obs.avg();
    rep.mse = mse(est, x);
    rep.psnr_db = psnr_from_mse(*rep.mse);
    rep.mse_avg = mse(avg, x);
    rep.psnr_avg_db = psnr_from_mse(*rep.mse_avg);
  }
  write_image(fs::path(a.out) / "restored.pgm", quantize(res.restored, v));
  write_json(report_path, rep);

  std::printf("%s: %zu iterations%s, sigma2=%.6g b=%.3g lambda=%.6g alpha=%.6g, %.3f s\n",
              rep.method.c_str(), rep.iterations, rep.converged ? " (converged)" : "",
              rep.theta.sigma2, rep.theta.b, rep.theta.lambda, rep.theta.alpha, rep.wall_time_s);
  if (rep.mse)
    std::printf("restored MSE %.4f (PSNR %.2f dB), average image MSE %.4f (PSNR %.2f dB)\n",
                *rep.mse, *rep.psnr_db, *rep.mse_avg, *rep.psnr_avg_db);
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::vector<std::size_t> sizes{128, 256, 512};
  std::vector<std::string> methods{"linear", "dctfft"};
  std::size_t trials = 3;
  double sigma = 30.0;
  std::size_t k = 8;
  std::uint64_t seed = 0;
  std::optional<std::size_t> fixed_iters;
  std::string out;
};

int cmd_bench(const BenchArgs& a) {
  BenchConfig cfg;
  cfg.sizes = a.sizes;
  cfg.methods.clear();
  for (const auto& m : a.methods) {
    try {
      cfg.methods.push_back(parse_method(m));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (cfg.methods.back() == Method::Oracle)
      for (std::size_t v : cfg.sizes)
        if (v > oracle::kMaxDenseSide) throw UsageError("oracle bench limited to v <= 32");
  }
  for (std::size_t v : cfg.sizes)
    if (v == 0) throw UsageError("sizes must be positive");
  if (a.trials < 1) throw UsageError("--trials must be at least 1");
  cfg.trials = a.trials;
  cfg.sigma = a.sigma;
  cfg.k_count = a.k;
  cfg.seed = a.seed;
  cfg.fixed_iters = a.fixed_iters;

  const auto rows = run_bench(cfg);
  const auto surs = speed_ups(rows);
  std::printf("%6s %8s %12s %12s %8s %14s %14s\n", "v", "method", "mean [s]", "stddev [s]",
              "iters", "per-iter [s]", "touches/iter");
  json out = {{"schema", kSchemaVersion}, {"trials", cfg.trials}, {"sigma", cfg.sigma},
              {"k", cfg.k_count}, {"seed", cfg.seed}, {"rows", json::array()},
              {"sur", json::array()}};
  for (const auto& r : rows) {
    std::printf("%6zu %8s %12.5f %12.5f %8.1f %14.3e %14.4g\n", r.side, to_string(r.method),
                r.mean_s, r.stddev_s, r.mean_iters, r.per_iter_s, r.touches_per_iter);
    out["rows"].push_back({{"v", r.side}, {"method", to_string(r.method)}, {"times_s", r.times_s},
                           {"mean_s", r.mean_s}, {"stddev_s", r.stddev_s},
                           {"mean_iters", r.mean_iters}, {"per_iter_s", r.per_iter_s},
                           {"touches_per_iter", r.touches_per_iter}});
  }
  for (const auto& s : surs) {
    std::printf("SUR v=%zu: %.1f %%\n", s.side, s.sur_percent);
    out["sur"].push_back({{"v", s.side}, {"linear_s", s.linear_s}, {"dctfft_s", s.dctfft_s},
                          {"sur_percent", s.sur_percent}});
  }
  if (!a.out.empty()) write_json(a.out, out);
  return kExitOk;
}

// ---------------------------------------------------------------- check

int cmd_check(std::size_t v, std::size_t trials, std::uint64_t seed) {
  if (v == 0) throw UsageError("--v must be positive");
  if (v > oracle::kMaxDenseSide) throw UsageError("--v is limited to 32 (dense reference)");
  if (trials < 1) throw UsageError("--trials must be at least 1");
  bool all = true;
  for (const auto& r : checks::run_all(v, trials, seed)) {
    std::printf("%-6s %-30s worst %.3e  tol %.1e  cases %zu  (%s)\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.worst, r.tol, r.cases, r.detail.c_str());
    all = all && r.pass;
  }
  if (v == 2) {
    const auto t = eigenvalues(LatticeSpec(2), Boundary::Free);
    std::printf("eigenvalues v=2 (free): {%g, %g, %g, %g}\n", t.values[0], t.values[1],
                t.values[2], t.values[3]);
  }
  std::printf("%s\n", all ? "all suites passed" : "some suites FAILED");
  return all ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian GMRF image denoising"};
  app.require_subcommand(1);

  DegradeArgs da;
  auto* deg = app.add_subcommand("degrade", "add white Gaussian noise to an image, K times");
  deg->add_option("--in", da.in, "8-bit grayscale square image (PGM P5 or PNG)")->required();
  deg->add_option("--out", da.out, "output directory")->required();
  deg->add_option("--sigma", da.sigma, "noise standard deviation")->capture_default_str();
  deg->add_option("--k", da.k, "number of degraded images")->capture_default_str();
  deg->add_option("--seed", da.seed, "noise seed")->capture_default_str();
  deg->add_option("--format", da.format, "pgm or png")
      ->check(CLI::IsMember({"pgm", "png"}))
      ->capture_default_str();

  DenoiseArgs na;
  auto* den = app.add_subcommand("denoise", "estimate hyperparameters and restore");
  den->add_option("--method", na.method, "linear, dctfft, torus or oracle")->capture_default_str();
  den->add_option("--manifest", na.manifest, "manifest.json written by degrade");
  den->add_option("--images", na.images, "degraded images (instead of --manifest)");
  den->add_option("--truth", na.truth, "ground truth for MSE/PSNR");
  den->add_flag("--no-truth", na.no_truth, "ignore the manifest's truth_path");
  den->add_option("--out", na.out, "output directory")->capture_default_str();
  den->add_option("--config", na.config, "JSON file overriding EM settings");
  den->add_option("--seed", na.seed, "seed echoed in the report");
  den->add_option("--threads", na.threads, "threads for Jacobi sweeps")->capture_default_str();
  den->add_flag("--clip", na.clip, "clip to [0,255] before computing metrics");
  den->add_option("--polish", na.polish,
                  "linear: up to N extra mean-field sweeps after EM (0 = EM iterate)")
      ->capture_default_str();
  den->add_flag("--verbose,-v", na.verbose, "log EM iterations to stderr");

  BenchArgs ba;
  auto* ben = app.add_subcommand("bench", "time the methods on synthetic scenes");
  ben->add_option("--sizes", ba.sizes, "side lengths")->delimiter(',')->capture_default_str();
  ben->add_option("--methods", ba.methods, "methods")->delimiter(',')->capture_default_str();
  ben->add_option("--trials", ba.trials, "trials per size and method")->capture_default_str();
  ben->add_option("--sigma", ba.sigma, "noise level")->capture_default_str();
  ben->add_option("--k", ba.k, "images per trial")->capture_default_str();
  ben->add_option("--seed", ba.seed, "first seed")->capture_default_str();
  ben->add_option("--fixed-iters", ba.fixed_iters, "run exactly N EM iterations");
  ben->add_option("--out", ba.out, "write results as JSON");

  std::size_t cv = 8, ct = 50;
  std::uint64_t cseed = 1;
  auto* chk = app.add_subcommand("check", "run the dense-reference property suites");
  chk->add_option("--v", cv, "side length (1..32)")->capture_default_str();
  chk->add_option("--trials", ct, "random draws per suite")->capture_default_str();
  chk->add_option("--seed", cseed, "seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*deg) return cmd_degrade(da);
    if (*den) return cmd_denoise(na);
    if (*ben) return cmd_bench(ba);
    if (*chk) return cmd_check(cv, ct, cseed);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ImageFormatError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
