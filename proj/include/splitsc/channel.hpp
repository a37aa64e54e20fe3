#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "splitsc/common.hpp"

namespace splitsc {

using Cx = std::complex<double>;

// L complex channel symbols plus the cached mean |x|^2 at construction time.
struct ChannelSymbols {
  std::vector<Cx> symbols;
  double power = 0.0;
};

// What the receiver is allowed to know about one block transmission.
struct ChannelState {
  Cx h{1.0, 0.0};          // fading coefficient, exactly 1 for AWGN
  double noise_sigma2 = 0.0;  // total complex noise variance per symbol
  double snr_db = 0.0;
};

struct ChannelOutput {
  std::vector<Cx> y;
  ChannelState state;
};

double mean_power(const std::vector<Cx>& x);

// Scale so mean |x|^2 == 1. Rejects empty / all-zero input.
ChannelSymbols power_normalize(const std::vector<Cx>& raw);

// SNR convention: unit signal power / total complex noise variance.
double snr_to_sigma2(double snr_db);

// One draw from CN(0, variance): each real component gets variance/2.
Cx sample_cn(Rng& rng, double variance);

// y = x + n, h = 1.
ChannelOutput transmit_awgn(const ChannelSymbols& x, double snr_db, Rng& rng);

// Flat quasi-static fading: a single h ~ CN(0,1) for the whole block,
// y = h * x + n. The true h rides along in the state (receiver-known CSI).
ChannelOutput transmit_rayleigh(const ChannelSymbols& x, double snr_db, Rng& rng);

// Receiver-side equalization y / h. Rejects h == 0.
std::vector<Cx> equalize(const std::vector<Cx>& y, Cx h);

// r = L / (C*H*W), counting complex symbols.
double cbr(std::size_t symbol_count, std::size_t height, std::size_t width,
           std::size_t channels);

}  // namespace splitsc
