#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "splitsc/channel_codec.hpp"
#include "splitsc/data.hpp"
#include "testutil.hpp"

using namespace splitsc;

namespace {

ExperimentConfig small_cfg() {
  ExperimentConfig cfg;
  cfg.dataset.count = 24;
  cfg.dataset.height = 4;
  cfg.dataset.width = 4;
  cfg.dataset.channels = 3;
  cfg.model.bits = 16;
  cfg.model.symbols = 8;  // 2L = 16 reals, two receiver tokens
  cfg.model.backbone = "mlp";
  cfg.model.source_dim = 16;
  cfg.model.source_blocks = 1;
  cfg.model.group_bits = 4;
  cfg.model.channel_dim = 8;
  cfg.model.channel_blocks = 2;
  cfg.model.channel_heads = 2;
  cfg.training.batch = 8;
  cfg.training.epochs_stage2 = 2;
  cfg.training.lr_stage2 = 1e-3;
  cfg.training.val_images = 4;
  cfg.seed = 3;
  return cfg;
}

InterfaceSpec spec_for(int bits, std::uint64_t seed) {
  InterfaceSpec spec;
  Rng rng(seed);
  spec.epsilon.resize(static_cast<std::size_t>(bits));
  for (auto& e : spec.epsilon) e = rng.uniform(0.05, 0.45);
  spec.training_fingerprint = "test";
  return spec;
}

std::vector<std::uint8_t> random_bits(int n, Rng& rng) {
  std::vector<std::uint8_t> b(static_cast<std::size_t>(n));
  for (auto& v : b) v = rng.bernoulli(0.5) ? 1 : 0;
  return b;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a failure");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("map_bits: shape, unit power, determinism, rejection") {
  ExperimentConfig cfg = small_cfg();
  Rng rng(41);
  ChannelCodec codec;
  codec.init(cfg, nn::IanMode::full, rng);
  CHECK(codec.bit_count() == 16);
  CHECK(codec.symbol_count() == 8);
  InterfaceSpec spec = spec_for(16, 1);

  Rng bits_rng(2);
  auto bits = random_bits(16, bits_rng);
  ChannelSymbols out = codec.map_bits(bits, spec, 10.0);
  REQUIRE(out.symbols.size() == 8);
  CHECK(std::abs(out.power - 1.0) < 1e-9);
  CHECK(std::abs(mean_power(out.symbols) - 1.0) < 1e-9);

  ChannelSymbols again = codec.map_bits(bits, spec, 10.0);
  CHECK(out.symbols == again.symbols);
  // conditioning matters: another SNR gives another constellation
  ChannelSymbols other = codec.map_bits(bits, spec, 20.0);
  CHECK(out.symbols != other.symbols);

  CHECK(kind_of([&] { codec.map_bits(random_bits(12, bits_rng), spec, 10.0); }) ==
        ErrorKind::validation);
  CHECK(kind_of([&] { codec.map_bits(bits, spec_for(12, 1), 10.0); }) ==
        ErrorKind::artifact_mismatch);
}

TEST_CASE("every mapped block has unit mean power") {
  ExperimentConfig cfg = small_cfg();
  Rng rng(43);
  ChannelCodec codec;
  codec.init(cfg, nn::IanMode::full, rng);
  InterfaceSpec spec = spec_for(16, 2);
  Rng bits_rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    double snr = bits_rng.uniform(0.0, 25.0);
    ChannelSymbols out = codec.map_bits(random_bits(16, bits_rng), spec, snr);
    CHECK(std::abs(out.power - 1.0) < 1e-6);
  }
}

TEST_CASE("demap_symbols round trip through a real channel draw") {
  ExperimentConfig cfg = small_cfg();
  Rng rng(47);
  ChannelCodec codec;
  codec.init(cfg, nn::IanMode::full, rng);
  InterfaceSpec spec = spec_for(16, 3);
  Rng stream(9);
  auto bits = random_bits(16, stream);

  ChannelSymbols x = codec.map_bits(bits, spec, 15.0);
  ChannelOutput out = transmit_rayleigh(x, 15.0, stream);
  std::vector<Cx> eq = equalize(out.y, out.state.h);
  std::vector<double> probs = codec.demap_symbols(eq, out.state, spec, 15.0);
  REQUIRE(probs.size() == 16);
  for (double p : probs) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }

  std::vector<Cx> short_block(4);
  CHECK(kind_of([&] { codec.demap_symbols(short_block, out.state, spec, 15.0); }) ==
        ErrorKind::validation);
}

TEST_CASE("importance tokens are 1-2eps regrouped row by row") {
  ExperimentConfig cfg = small_cfg();
  Rng rng(53);
  ChannelCodec codec;
  codec.init(cfg, nn::IanMode::full, rng);
  InterfaceSpec spec = spec_for(16, 4);
  Mat tok = codec.importance_tokens(spec);
  REQUIRE(tok.rows() == 4);
  REQUIRE(tok.cols() == 4);
  for (int t = 0; t < 4; ++t)
    for (int j = 0; j < 4; ++j)
      CHECK(tok(t, j) ==
            doctest::Approx(1.0 - 2.0 * spec.epsilon[static_cast<std::size_t>(
                                      t * 4 + j)]));
}

TEST_CASE("ablation variants strictly shed parameters") {
  ExperimentConfig cfg = small_cfg();
  Rng r1(61), r2(61), r3(61);
  ChannelCodec full, noi, non;
  full.init(cfg, nn::IanMode::full, r1);
  noi.init(cfg, nn::IanMode::no_iattn, r2);
  non.init(cfg, nn::IanMode::no_ian, r3);
  std::size_t nf = nn::total_size(full.params());
  std::size_t ni = nn::total_size(noi.params());
  std::size_t nn_ = nn::total_size(non.params());
  CHECK(nf > ni);
  CHECK(ni > nn_);
}

TEST_CASE("without the importance stage the spec cannot matter") {
  ExperimentConfig cfg = small_cfg();
  Rng rng(67);
  ChannelCodec codec;
  codec.init(cfg, nn::IanMode::no_ian, rng);
  Rng bits_rng(8);
  auto bits = random_bits(16, bits_rng);
  ChannelSymbols a = codec.map_bits(bits, spec_for(16, 100), 10.0);
  ChannelSymbols b = codec.map_bits(bits, spec_for(16, 200), 10.0);
  CHECK(a.symbols == b.symbols);

  // full mode starts at an exact pass-through (zero projection); nudge the
  // projection off zero and the spec must start steering the symbols
  Rng rng2(67);
  ChannelCodec aware;
  aware.init(cfg, nn::IanMode::full, rng2);
  ChannelSymbols c0 = aware.map_bits(bits, spec_for(16, 100), 10.0);
  ChannelSymbols d0 = aware.map_bits(bits, spec_for(16, 200), 10.0);
  CHECK(c0.symbols == d0.symbols);
  for (auto& [name, p] : aware.params())
    if (name.find("ian.iattn.proj.weight") != std::string::npos)
      p->value.setConstant(0.3);
  ChannelSymbols c = aware.map_bits(bits, spec_for(16, 100), 10.0);
  ChannelSymbols d = aware.map_bits(bits, spec_for(16, 200), 10.0);
  CHECK(c.symbols != d.symbols);
}

TEST_CASE("finite differences through the importance-aware mapper") {
  ExperimentConfig cfg = small_cfg();
  cfg.model.bits = 4;
  cfg.model.group_bits = 2;
  cfg.model.symbols = 4;
  cfg.model.channel_dim = 4;
  cfg.model.channel_heads = 1;
  cfg.model.channel_blocks = 1;
  Rng rng(71);
  ChannelCodec codec;
  codec.init(cfg, nn::IanMode::full, rng);
  InterfaceSpec spec = spec_for(4, 5);
  Mat imp = codec.importance_tokens(spec);

  Rng data_rng(6);
  Mat bits(2, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) bits(i, j) = data_rng.bernoulli(0.5) ? 1.0 : 0.0;
  Mat cond(2, 1);
  cond << 0.5, 1.5;

  auto build = [&](ad::Graph& g) {
    ad::Ref x = codec.map_forward(g, g.input(bits), cond, imp);
    return g.sum_all(g.mul(x, x));
  };
  // spot-check the stage that consumes importance, plus its neighbours
  std::vector<Param*> subset;
  for (auto& [name, p] : codec.params())
    if (name.rfind("tx.ian", 0) == 0 || name.rfind("tx.embed", 0) == 0 ||
        name.rfind("tx.cond", 0) == 0)
      subset.push_back(p);
  REQUIRE(!subset.empty());
  testutil::check_param_gradients(subset, build, 1e-5, 2e-4);
}

TEST_CASE("finite differences through a compact end-to-end stage-2 loss") {
  // the documented small-model check: same loss assembly as the trainer
  // (map -> unit power -> additive channel -> demap -> decode -> mse) with
  // single linear layers standing in for the attention stacks
  ExperimentConfig cfg;
  cfg.dataset.height = 2;
  cfg.dataset.width = 2;
  cfg.dataset.channels = 1;
  cfg.model.bits = 4;
  cfg.model.backbone = "mlp";
  cfg.model.source_dim = 2;
  cfg.model.source_blocks = 1;
  Rng rng(73);
  SourceCodec source;
  source.init(cfg, rng);
  nn::set_trainable(source.params(), false);

  nn::Linear mapper, demapper;
  mapper.init(4, 4, rng);    // M=4 -> 2L=4 reals (L=2)
  demapper.init(4, 4, rng);
  nn::NamedParams trainable;
  nn::append_prefixed(trainable, "tx", mapper.params("map"));
  nn::append_prefixed(trainable, "rx", demapper.params("demap"));
  REQUIRE(nn::total_size(trainable) <= 50);

  Rng data_rng(7);
  Mat imgs = testutil::random_mat(data_rng, 2, 4, 0.0, 1.0);
  Mat bits = binarize(source.encode_soft(imgs));
  Mat noise = testutil::random_mat(data_rng, 2, 4, -0.3, 0.3);

  auto build = [&](ad::Graph& g) {
    ad::Ref x = g.row_power_normalize(mapper.forward(g, g.input(bits)), 2);
    ad::Ref y = g.add(x, g.input(noise));
    ad::Ref probs = g.sigmoid(demapper.forward(g, y));
    ad::Ref s_hat = source.decode(g, probs);
    return g.mean_sq_diff(s_hat, imgs);
  };
  testutil::check_param_gradients(nn::values_of(trainable), build);
  nn::set_trainable(source.params(), true);
}

TEST_CASE("stage-2 loss closed forms") {
  Mat s = Mat::Zero(2, 4);
  CHECK(stage2_loss(s, s) == doctest::Approx(0.0));
  CHECK(stage2_loss(s, Mat::Constant(2, 4, 0.5)) == doctest::Approx(0.25));
  CHECK_THROWS_AS(stage2_loss(s, Mat::Zero(3, 4)), Error);
}

TEST_CASE("stage-2 training: frozen source, moving channel, reproducible") {
  ExperimentConfig cfg = small_cfg();
  DatasetHandle ds = make_synthetic(cfg.dataset.count, 4, 4, 3, 88);
  Rng rng(79);
  SourceCodec source;
  source.init(cfg, rng);
  InterfaceSpec spec = spec_for(16, 6);

  const std::uint64_t src_before = nn::params_checksum(source.params());
  Stage2Artifacts art = train_stage2(ds, source, spec, cfg);
  CHECK(nn::params_checksum(source.params()) == src_before);

  REQUIRE(art.log.size() == 2);
  for (auto& e : art.log) {
    CHECK(std::isfinite(e.loss));
    REQUIRE(e.probe_snr.size() == 4);
    REQUIRE(e.probe_psnr.size() == 4);
    for (double v : e.probe_psnr) CHECK(std::isfinite(v));
  }

  // training must actually move the channel codec off its init point
  Rng init_twin = Rng(cfg.seed).split(11);
  ChannelCodec untouched;
  untouched.init(cfg, nn::IanMode::full, init_twin);
  CHECK(nn::params_checksum(art.codec.params()) !=
        nn::params_checksum(untouched.params()));

  Stage2Artifacts twin = train_stage2(ds, source, spec, cfg);
  CHECK(nn::params_checksum(twin.codec.params()) ==
        nn::params_checksum(art.codec.params()));
  for (std::size_t i = 0; i < art.log.size(); ++i) {
    CHECK(twin.log[i].loss == art.log[i].loss);
    CHECK(twin.log[i].probe_psnr == art.log[i].probe_psnr);
  }
}

TEST_CASE("stage-2 over the fading channel trains too") {
  ExperimentConfig cfg = small_cfg();
  cfg.channel = "rayleigh";
  cfg.training.epochs_stage2 = 1;
  DatasetHandle ds = make_synthetic(cfg.dataset.count, 4, 4, 3, 89);
  Rng rng(83);
  SourceCodec source;
  source.init(cfg, rng);
  Stage2Artifacts art = train_stage2(ds, source, spec_for(16, 7), cfg);
  REQUIRE(art.log.size() == 1);
  CHECK(std::isfinite(art.log[0].loss));
}

TEST_CASE("incompatible artifacts are refused") {
  ExperimentConfig cfg = small_cfg();
  DatasetHandle ds = make_synthetic(8, 4, 4, 3, 90);
  Rng rng(97);
  SourceCodec source;
  source.init(cfg, rng);
  CHECK(kind_of([&] { train_stage2(ds, source, spec_for(12, 8), cfg); }) ==
        ErrorKind::artifact_mismatch);

  ExperimentConfig wrong = cfg;
  wrong.model.bits = 32;
  CHECK(kind_of([&] { train_stage2(ds, source, spec_for(16, 8), wrong); }) ==
        ErrorKind::artifact_mismatch);

  ExperimentConfig badchan = cfg;
  badchan.channel = "bsc";
  CHECK(kind_of([&] { train_stage2(ds, source, spec_for(16, 8), badchan); }) ==
        ErrorKind::config);
}
