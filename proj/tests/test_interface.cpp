#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "splitsc/binio.hpp"
#include "splitsc/interface.hpp"
#include "testutil.hpp"

using namespace splitsc;
using testutil::rel_err;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) { return read_file(path, "test file"); }

void spit(const std::string& path, const std::string& bytes) {
  write_file(path, bytes);
}

InterfaceSpec sample_spec() {
  InterfaceSpec spec;
  spec.epsilon = {0.05, 0.25, 0.45, 0.5, 0.125};
  spec.training_fingerprint = "cfg:deadbeef";
  return spec;
}

}  // namespace

TEST_CASE("epsilon_from_raw maps reals into (0, 0.5]") {
  EpsilonParams p;
  p.raw = {0.0, 50.0, -50.0, 1.0, -1.0};
  auto eps = epsilon_from_raw(p);
  CHECK(rel_err(eps[0], 0.25) < 1e-12);       // raw 0 is the canonical init
  CHECK(eps[1] == doctest::Approx(0.5));      // saturates high
  CHECK(eps[2] > 0.0);                        // never exactly 0
  CHECK(eps[2] < 1e-20);
  CHECK(eps[3] > eps[0]);                     // monotone
  CHECK(eps[4] < eps[0]);
}

TEST_CASE("bsc transition probabilities") {
  CHECK(bsc_transition_prob(0, 0, 0.1) == doctest::Approx(0.9));
  CHECK(bsc_transition_prob(0, 1, 0.1) == doctest::Approx(0.1));
  CHECK(bsc_transition_prob(1, 1, 0.3) == doctest::Approx(0.7));
  CHECK(bsc_transition_prob(1, 0, 0.3) == doctest::Approx(0.3));
  // channel symmetry
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    double e = rng.uniform(0.0, 1.0);
    CHECK(bsc_transition_prob(0, 0, e) == bsc_transition_prob(1, 1, e));
    CHECK(bsc_transition_prob(0, 1, e) == bsc_transition_prob(1, 0, e));
  }
  CHECK_THROWS_AS(bsc_transition_prob(0, 0, 1.5), Error);
}

TEST_CASE("noisy bit marginal against a brute-force oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t m = 1 + rng.next_u64() % 16;
    std::vector<double> p(m), eps(m);
    for (auto& v : p) v = rng.uniform(0.0, 1.0);
    for (auto& v : eps) v = rng.uniform(1e-6, 0.5);
    auto q = noisy_bit_marginal(p, eps);
    for (std::size_t i = 0; i < m; ++i) {
      // oracle: total probability over the four (bit, flip) outcomes
      double direct = p[i] * (1 - eps[i]) * 1.0 + p[i] * eps[i] * 0.0 +
                      (1 - p[i]) * eps[i] * 1.0 + (1 - p[i]) * (1 - eps[i]) * 0.0;
      CHECK(rel_err(q[i], direct) < 1e-6);
    }
  }
  // fixed points
  auto q = noisy_bit_marginal({0.5, 0.9}, {0.123, 0.5});
  CHECK(q[0] == doctest::Approx(0.5));
  CHECK(q[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(noisy_bit_marginal({0.5}, {0.1, 0.2}), Error);
}

TEST_CASE("regularization loss oracle") {
  CHECK(regularization_loss({0.25}, 1.0) == doctest::Approx(0.0625));
  CHECK(regularization_loss({0.5, 0.5}, 7.0) == doctest::Approx(0.0));
  CHECK(regularization_loss({0.1, 0.2, 0.3}, 0.0) == doctest::Approx(0.0));
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t m = 1 + rng.next_u64() % 32;
    double lambda = rng.uniform(0.0, 3.0);
    std::vector<double> eps(m);
    for (auto& v : eps) v = rng.uniform(1e-3, 0.5);
    double acc = 0;
    for (double e : eps) acc += (e - 0.5) * (e - 0.5);
    CHECK(rel_err(regularization_loss(eps, lambda), lambda * acc / m) < 1e-6);
  }
  CHECK_THROWS_AS(regularization_loss({0.1}, -1.0), Error);
  CHECK_THROWS_AS(regularization_loss({}, 1.0), Error);
}

TEST_CASE("sampled flips track epsilon") {
  Rng rng(13);
  for (double eps : {0.05, 0.25, 0.45}) {
    int n = 20000;
    std::vector<double> p(static_cast<std::size_t>(n), 1.0);  // send all-ones
    auto q = noisy_bit_marginal(p, std::vector<double>(p.size(), eps));
    auto bits = sample_noisy_bits(q, rng);
    int flips = 0;
    for (auto b : bits) flips += (b == 0);
    double rate = static_cast<double>(flips) / n;
    CHECK(std::abs(rate - eps) < 3.0 * std::sqrt(eps * (1 - eps) / n));
  }
}

TEST_CASE("importance weights") {
  auto spec = sample_spec();
  auto w = importance_weights(spec);
  REQUIRE(w.size() == spec.epsilon.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(rel_err(w[i], 1.0 - 2.0 * spec.epsilon[i]) < 1e-12);
  CHECK(w[3] == doctest::Approx(0.0));  // eps 0.5 carries nothing
}

TEST_CASE("interface spec round-trip is exact and deterministic") {
  auto spec = sample_spec();
  std::string p1 = temp_path("iface_a.bin"), p2 = temp_path("iface_b.bin");
  save_spec(spec, p1);
  save_spec(spec, p2);
  CHECK(slurp(p1) == slurp(p2));  // byte-identical serialization

  InterfaceSpec back = load_spec(p1);
  CHECK(back.epsilon == spec.epsilon);  // exact f64 round-trip
  CHECK(back.training_fingerprint == spec.training_fingerprint);
  CHECK(back.format_version == 1);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("interface spec error taxonomy") {
  auto spec = sample_spec();
  std::string path = temp_path("iface_err.bin");
  save_spec(spec, path);
  std::string good = slurp(path);

  SUBCASE("missing file -> io") {
    try {
      load_spec(temp_path("does_not_exist.bin"));
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
    }
  }

  SUBCASE("bad magic -> corrupted") {
    std::string bad = good;
    bad[0] = 'X';
    spit(path, bad);
    try {
      load_spec(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::corrupted);
    }
  }

  SUBCASE("version bump -> format_version") {
    std::string bad = good;
    bad[8] = 9;  // format_version lives right after the magic
    spit(path, bad);
    try {
      load_spec(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::format_version);
    }
  }

  SUBCASE("flipped payload byte -> corrupted") {
    std::string bad = good;
    bad[bad.size() - 3] = static_cast<char>(bad[bad.size() - 3] ^ 0x40);
    spit(path, bad);
    try {
      load_spec(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::corrupted);
    }
  }

  SUBCASE("truncation -> corrupted") {
    spit(path, good.substr(0, good.size() - 5));
    try {
      load_spec(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::corrupted);
    }
  }

  SUBCASE("zero bit count -> validation") {
    // hand-built file: M = 0 with a checksum over the empty payload
    std::string raw("SCIFACE\0", 8);
    put_u32(raw, 1);
    put_u64(raw, 0);
    put_u32(raw, 0);
    put_u64(raw, fnv1a64("", 0));
    spit(path, raw);
    try {
      load_spec(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
    }
  }

  SUBCASE("epsilon out of range -> validation") {
    std::string raw("SCIFACE\0", 8);
    put_u32(raw, 1);
    put_u64(raw, 1);
    put_u32(raw, 0);
    std::string payload;
    put_f64(payload, 0.7);
    put_u64(raw, fnv1a64(payload.data(), payload.size()));
    raw += payload;
    spit(path, raw);
    try {
      load_spec(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
    }
  }

  std::remove(path.c_str());
}

TEST_CASE("save_spec refuses invalid epsilon") {
  InterfaceSpec bad;
  bad.epsilon = {0.6};
  CHECK_THROWS_AS(save_spec(bad, temp_path("never_written.bin")), Error);
  bad.epsilon = {};
  CHECK_THROWS_AS(save_spec(bad, temp_path("never_written.bin")), Error);
}
