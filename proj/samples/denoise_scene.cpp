// Degrade the built-in test scene, then restore it with both the linear-time
// method and the DCT baseline and print what each recovered.
//
//   denoise_scene [v] [sigma] [K]

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "gmrf/gmrf.hpp"

int main(int argc, char** argv) {
  using namespace gmrf;
  const std::size_t v = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 128;
  const double sigma = argc > 2 ? std::atof(argv[2]) : 30.0;
  const std::size_t k = argc > 3 ? std::strtoul(argv[3], nullptr, 10) : 3;

  const LatticeSpec spec(v);
  const ImageBuffer x = natural_scene(spec);
  const ObservationSet raw = degrade(spec, x, {sigma, k, 42});
  auto [obs, offset] = center(raw);

  const EMConfig cfg;
  const EMTrace lin = run_em(spec, obs, cfg);
  const EMTrace fft = run_em_spectral(spec, obs, cfg);

  std::printf("average image    MSE %8.3f  PSNR %6.2f dB\n", mse(raw.avg(), x), psnr(raw.avg(), x));
  for (const auto* t : {&lin, &fft}) {
    const ImageBuffer est = shifted(t->m, offset);
    std::printf("%-16s MSE %8.3f  PSNR %6.2f dB  sigma %.2f  alpha %.3g  (%zu iterations)\n",
                t == &lin ? "linear" : "dct-fft", mse(est, x), psnr(est, x),
                std::sqrt(t->theta.sigma2), t->theta.alpha, t->iterations_used);
  }
  write_pgm("scene.pgm", quantize(x, v));
  write_pgm("noisy.pgm", quantize(raw.images()[0], v));
  write_pgm("restored.pgm", quantize(shifted(lin.m, offset), v));
  return 0;
}
