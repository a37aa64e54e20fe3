#include "splitsc/channel.hpp"

#include <cmath>

namespace splitsc {

double mean_power(const std::vector<Cx>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (const Cx& v : x) acc += std::norm(v);
  return acc / static_cast<double>(x.size());
}

ChannelSymbols power_normalize(const std::vector<Cx>& raw) {
  if (raw.empty()) fail(ErrorKind::validation, "power_normalize: empty symbol vector");
  double p = mean_power(raw);
  if (p <= 0.0) fail(ErrorKind::validation, "power_normalize: all-zero symbols");
  double s = 1.0 / std::sqrt(p);
  ChannelSymbols out;
  out.symbols.reserve(raw.size());
  for (const Cx& v : raw) out.symbols.push_back(v * s);
  out.power = mean_power(out.symbols);
  return out;
}

double snr_to_sigma2(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

Cx sample_cn(Rng& rng, double variance) {
  double s = std::sqrt(variance / 2.0);
  return {s * rng.normal(), s * rng.normal()};
}

ChannelOutput transmit_awgn(const ChannelSymbols& x, double snr_db, Rng& rng) {
  ChannelOutput out;
  out.state.h = Cx{1.0, 0.0};
  out.state.snr_db = snr_db;
  out.state.noise_sigma2 = snr_to_sigma2(snr_db);
  out.y.reserve(x.symbols.size());
  for (const Cx& v : x.symbols) out.y.push_back(v + sample_cn(rng, out.state.noise_sigma2));
  return out;
}

ChannelOutput transmit_rayleigh(const ChannelSymbols& x, double snr_db, Rng& rng) {
  ChannelOutput out;
  out.state.h = sample_cn(rng, 1.0);  // one coefficient per block (flat fading)
  out.state.snr_db = snr_db;
  out.state.noise_sigma2 = snr_to_sigma2(snr_db);
  out.y.reserve(x.symbols.size());
  for (const Cx& v : x.symbols)
    out.y.push_back(out.state.h * v + sample_cn(rng, out.state.noise_sigma2));
  return out;
}

std::vector<Cx> equalize(const std::vector<Cx>& y, Cx h) {
  if (std::norm(h) == 0.0) fail(ErrorKind::validation, "equalize: zero fading coefficient");
  std::vector<Cx> out;
  out.reserve(y.size());
  for (const Cx& v : y) out.push_back(v / h);
  return out;
}

double cbr(std::size_t symbol_count, std::size_t height, std::size_t width,
           std::size_t channels) {
  std::size_t denom = height * width * channels;
  if (denom == 0) fail(ErrorKind::validation, "cbr: zero source dimension");
  return static_cast<double>(symbol_count) / static_cast<double>(denom);
}

}  // namespace splitsc
