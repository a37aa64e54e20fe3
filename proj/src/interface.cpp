#include "splitsc/interface.hpp"

#include <cmath>

#include "splitsc/binio.hpp"

namespace splitsc {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'I', 'F', 'A', 'C', 'E', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void validate_spec(const InterfaceSpec& spec) {
  if (spec.epsilon.empty())
    fail(ErrorKind::validation, "interface spec: bit count must be positive");
  for (std::size_t i = 0; i < spec.epsilon.size(); ++i) {
    double e = spec.epsilon[i];
    if (!(e > 0.0) || !(e <= 0.5))
      fail(ErrorKind::validation,
           "interface spec: epsilon[" + std::to_string(i) +
               "] outside (0, 0.5]: " + std::to_string(e));
  }
}

std::vector<double> epsilon_from_raw(const EpsilonParams& params) {
  std::vector<double> eps(params.raw.size());
  for (std::size_t i = 0; i < eps.size(); ++i)
    eps[i] = 0.5 / (1.0 + std::exp(-params.raw[i]));
  return eps;
}

double bsc_transition_prob(int bit, int observed, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0))
    fail(ErrorKind::validation, "bsc transition: eps outside [0, 1]");
  return bit == observed ? 1.0 - eps : eps;
}

std::vector<double> noisy_bit_marginal(const std::vector<double>& p,
                                       const std::vector<double>& eps) {
  if (p.size() != eps.size())
    fail(ErrorKind::validation, "noisy bit marginal: length mismatch");
  std::vector<double> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    q[i] = p[i] * (1.0 - eps[i]) + (1.0 - p[i]) * eps[i];
  return q;
}

std::vector<std::uint8_t> sample_noisy_bits(const std::vector<double>& q,
                                            Rng& rng) {
  std::vector<std::uint8_t> bits(q.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    bits[i] = rng.bernoulli(q[i]) ? 1 : 0;
  return bits;
}

double regularization_loss(const std::vector<double>& eps, double lambda) {
  if (lambda < 0.0)
    fail(ErrorKind::validation, "regularization: lambda must be nonnegative");
  if (eps.empty())
    fail(ErrorKind::validation, "regularization: empty epsilon vector");
  double acc = 0.0;
  for (double e : eps) acc += (e - 0.5) * (e - 0.5);
  return lambda * acc / static_cast<double>(eps.size());
}

std::vector<double> importance_weights(const InterfaceSpec& spec) {
  std::vector<double> w(spec.epsilon.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 - 2.0 * spec.epsilon[i];
  return w;
}

// Layout: magic[8] | format_version u32 | M u64 | fingerprint (u32 len +
// bytes) | payload checksum u64 | M little-endian f64. The checksum covers
// the epsilon payload so truncation and bit corruption are told apart from
// version skew.
void save_spec(const InterfaceSpec& spec, const std::string& path) {
  validate_spec(spec);
  std::string payload;
  payload.reserve(spec.epsilon.size() * 8);
  for (double e : spec.epsilon) put_f64(payload, e);

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, spec.format_version);
  put_u64(out, spec.epsilon.size());
  put_u32(out, static_cast<std::uint32_t>(spec.training_fingerprint.size()));
  out += spec.training_fingerprint;
  put_u64(out, fnv1a64(payload.data(), payload.size()));
  out += payload;
  write_file(path, out);
}

InterfaceSpec load_spec(const std::string& path) {
  std::string data = read_file(path, "interface spec");
  BinReader r(data, "interface spec " + path);
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    fail(ErrorKind::corrupted, "not an interface spec file: " + path);
  InterfaceSpec spec;
  spec.format_version = r.u32();
  if (spec.format_version != kFormatVersion)
    fail(ErrorKind::format_version,
         "unsupported interface spec version " +
             std::to_string(spec.format_version) + ": " + path);
  std::uint64_t m = r.u64();
  std::uint32_t fp_len = r.u32();
  spec.training_fingerprint = r.bytes(fp_len);
  std::uint64_t checksum = r.u64();
  std::string payload = r.bytes(static_cast<std::size_t>(m) * 8);
  if (fnv1a64(payload.data(), payload.size()) != checksum)
    fail(ErrorKind::corrupted, "interface spec checksum mismatch: " + path);
  BinReader pr(payload, "interface spec payload " + path);
  spec.epsilon.resize(static_cast<std::size_t>(m));
  for (auto& e : spec.epsilon) e = pr.f64();
  validate_spec(spec);
  return spec;
}

}  // namespace splitsc
