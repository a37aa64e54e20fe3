#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitsc/common.hpp"

namespace splitsc {

// The contract between the two codec stages: one flip probability per
// interface bit, learned in stage 1 and handed (frozen) to stage 2.
struct InterfaceSpec {
  std::vector<double> epsilon;      // each in (0, 0.5]
  std::uint32_t format_version = 1;
  std::string training_fingerprint; // identifies the producing run

  std::size_t bit_count() const { return epsilon.size(); }
};

// Unconstrained reparameterization of the flip probabilities:
// epsilon = 0.5 * sigmoid(raw), keeping every value inside (0, 0.5).
struct EpsilonParams {
  std::vector<double> raw;
};

void validate_spec(const InterfaceSpec& spec);

std::vector<double> epsilon_from_raw(const EpsilonParams& params);

// P(observed | sent) for one bit of a binary symmetric channel.
double bsc_transition_prob(int bit, int observed, double eps);

// Per-bit probability that the post-channel bit is 1, given the encoder's
// Bernoulli parameters p and flip probabilities eps:
//   q = p*(1-eps) + (1-p)*eps.
std::vector<double> noisy_bit_marginal(const std::vector<double>& p,
                                       const std::vector<double>& eps);

std::vector<std::uint8_t> sample_noisy_bits(const std::vector<double>& q,
                                            Rng& rng);

// (lambda/M) * sum((eps - 0.5)^2): pulls flip probabilities toward the
// maximally noisy point so training cannot collapse to a noiseless
// interface. The lambda factor is applied here, exactly once.
double regularization_loss(const std::vector<double>& eps, double lambda);

// 1 - 2*eps per bit: low flip probability <=> high importance.
std::vector<double> importance_weights(const InterfaceSpec& spec);

void save_spec(const InterfaceSpec& spec, const std::string& path);
InterfaceSpec load_spec(const std::string& path);

}  // namespace splitsc
