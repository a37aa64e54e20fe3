#include "splitsc/channel_codec.hpp"

#include <algorithm>
#include <cmath>

#include "splitsc/metrics.hpp"

namespace splitsc {

using ad::Graph;
using ad::Ref;

void ChannelCodec::init(const ExperimentConfig& cfg, nn::IanMode mode,
                        Rng& rng) {
  bits_ = cfg.model.bits;
  symbols_ = cfg.model.symbols;
  group_bits_ = cfg.model.group_bits;
  dim_ = cfg.model.channel_dim;
  mode_ = mode;
  if (group_bits_ < 1 || bits_ % group_bits_ != 0)
    fail(ErrorKind::validation, "channel codec: bits not divisible by group_bits");
  if ((2 * symbols_) % 8 != 0)
    fail(ErrorKind::validation, "channel codec: 2*symbols must be a multiple of 8");
  tx_tokens_ = bits_ / group_bits_;
  rx_tokens_ = 2 * symbols_ / 8;

  const int heads = cfg.model.channel_heads;
  const int blocks = std::max(1, cfg.model.channel_blocks);
  const int ff = 2 * dim_;
  const int pre = std::max(1, blocks / 2);
  const int reduction = dim_ >= 4 ? 4 : 1;

  tx_embed_.init(group_bits_, dim_, rng);
  tx_ian_.init(group_bits_, dim_, reduction, mode, rng);
  tx_blocks_.resize(static_cast<std::size_t>(blocks));
  for (auto& b : tx_blocks_) b.init(dim_, heads, ff, rng);
  tx_cond_.init(1, dim_, dim_, blocks, rng);
  tx_norm_.init(dim_);
  tx_head_.init(tx_tokens_ * dim_, 2 * symbols_, rng);

  rx_embed_.init(8, dim_, rng);
  rx_pre_blocks_.resize(static_cast<std::size_t>(pre));
  for (auto& b : rx_pre_blocks_) b.init(dim_, heads, ff, rng);
  rx_cross_.init(rx_tokens_ * dim_, tx_tokens_ * dim_, rng);
  rx_ian_.init(group_bits_, dim_, reduction, mode, rng);
  rx_post_blocks_.resize(static_cast<std::size_t>(pre));
  for (auto& b : rx_post_blocks_) b.init(dim_, heads, ff, rng);
  rx_cond_.init(2, dim_, dim_, 2 * pre, rng);
  rx_norm_.init(dim_);
  rx_head_.init(dim_, group_bits_, rng);
}

Ref ChannelCodec::apply_film(Graph& g, Ref x, Ref scale, Ref shift,
                             int tokens) {
  // scale/shift are one row per sample; expand to one row per token
  const int batch = static_cast<int>(g.value(scale).rows());
  std::vector<int> idx(static_cast<std::size_t>(batch) * tokens);
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < tokens; ++t)
      idx[static_cast<std::size_t>(b) * tokens + t] = b;
  Ref se = g.gather_rows(scale, idx);
  Ref sh = g.gather_rows(shift, std::move(idx));
  return g.add(g.mul(x, g.add_scalar(se, 1.0)), sh);
}

Ref ChannelCodec::map_forward(Graph& g, Ref bits, const Mat& cond,
                              const Mat& importance_tokens) {
  const int batch = static_cast<int>(g.value(bits).rows());
  if (static_cast<int>(g.value(bits).cols()) != bits_)
    fail(ErrorKind::validation,
         "map: bit width " + std::to_string(g.value(bits).cols()) +
             ", codec expects " + std::to_string(bits_));
  if (cond.rows() != batch || cond.cols() != 1)
    fail(ErrorKind::validation, "map: conditioning must be (batch x 1)");
  if (importance_tokens.rows() != tx_tokens_ ||
      importance_tokens.cols() != group_bits_)
    fail(ErrorKind::validation, "map: importance token shape mismatch");

  Ref tok = g.rows_from_chunks(bits, group_bits_);  // (B*Tm x gb)
  Ref h = g.gelu(tx_embed_.forward(g, tok));
  h = tx_ian_.forward(g, h, importance_tokens, batch, tx_tokens_);
  auto film = tx_cond_.forward(g, g.input(cond));
  for (std::size_t i = 0; i < tx_blocks_.size(); ++i) {
    h = tx_blocks_[i].forward(g, h, tx_tokens_, {}, {});
    h = apply_film(g, h, film[i].first, film[i].second, tx_tokens_);
  }
  h = tx_norm_.forward(g, h);
  Ref flat = g.chunks_from_rows(h, tx_tokens_);  // (B x Tm*dim)
  Ref sym = tx_head_.forward(g, flat);           // (B x 2L)
  return g.row_power_normalize(sym, symbols_);
}

Ref ChannelCodec::demap_forward(Graph& g, Ref y_eq, const Mat& cond,
                                const Mat& importance_tokens) {
  const int batch = static_cast<int>(g.value(y_eq).rows());
  if (static_cast<int>(g.value(y_eq).cols()) != 2 * symbols_)
    fail(ErrorKind::validation,
         "demap: symbol width " + std::to_string(g.value(y_eq).cols()) +
             ", codec expects " + std::to_string(2 * symbols_));
  if (cond.rows() != batch || cond.cols() != 2)
    fail(ErrorKind::validation, "demap: conditioning must be (batch x 2)");
  if (importance_tokens.rows() != tx_tokens_ ||
      importance_tokens.cols() != group_bits_)
    fail(ErrorKind::validation, "demap: importance token shape mismatch");

  Ref tok = g.rows_from_chunks(y_eq, 8);  // (B*Ts x 8)
  Ref h = g.gelu(rx_embed_.forward(g, tok));
  auto film = rx_cond_.forward(g, g.input(cond));
  std::size_t fi = 0;
  for (auto& b : rx_pre_blocks_) {
    h = b.forward(g, h, rx_tokens_, {}, {});
    h = apply_film(g, h, film[fi].first, film[fi].second, rx_tokens_);
    ++fi;
  }
  // symbol tokens -> bit-group tokens
  Ref flat = g.chunks_from_rows(h, rx_tokens_);
  Ref crossed = g.gelu(rx_cross_.forward(g, flat));
  h = g.rows_from_chunks(crossed, dim_);  // (B*Tm x dim)
  h = rx_ian_.forward(g, h, importance_tokens, batch, tx_tokens_);
  for (auto& b : rx_post_blocks_) {
    h = b.forward(g, h, tx_tokens_, {}, {});
    h = apply_film(g, h, film[fi].first, film[fi].second, tx_tokens_);
    ++fi;
  }
  h = rx_norm_.forward(g, h);
  Ref logits = rx_head_.forward(g, h);          // (B*Tm x gb)
  Ref probs = g.sigmoid(logits);
  return g.chunks_from_rows(probs, tx_tokens_);  // (B x M)
}

Mat ChannelCodec::importance_tokens(const InterfaceSpec& spec) const {
  if (static_cast<int>(spec.epsilon.size()) != bits_)
    fail(ErrorKind::artifact_mismatch,
         "interface spec width does not match channel codec bit count");
  std::vector<double> w = importance_weights(spec);
  Mat out(tx_tokens_, group_bits_);
  for (int t = 0; t < tx_tokens_; ++t)
    for (int j = 0; j < group_bits_; ++j)
      out(t, j) = w[static_cast<std::size_t>(t) * group_bits_ + j];
  return out;
}

ChannelSymbols ChannelCodec::map_bits(const std::vector<std::uint8_t>& bits,
                                      const InterfaceSpec& spec,
                                      double snr_db) {
  if (static_cast<int>(bits.size()) != bits_)
    fail(ErrorKind::validation,
         "map: got " + std::to_string(bits.size()) + " bits, codec expects " +
             std::to_string(bits_));
  Mat b(1, bits_);
  for (int j = 0; j < bits_; ++j) b(0, j) = bits[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  Mat cond(1, 1);
  cond(0, 0) = snr_db / 10.0;
  Graph g;
  const Mat& v = g.value(map_forward(g, g.input(b), cond, importance_tokens(spec)));
  ChannelSymbols out;
  out.symbols.resize(static_cast<std::size_t>(symbols_));
  for (int l = 0; l < symbols_; ++l)
    out.symbols[static_cast<std::size_t>(l)] = Cx(v(0, 2 * l), v(0, 2 * l + 1));
  out.power = mean_power(out.symbols);
  return out;
}

std::vector<double> ChannelCodec::demap_symbols(const std::vector<Cx>& y_eq,
                                                const ChannelState& state,
                                                const InterfaceSpec& spec,
                                                double snr_db) {
  if (static_cast<int>(y_eq.size()) != symbols_)
    fail(ErrorKind::validation,
         "demap: got " + std::to_string(y_eq.size()) +
             " symbols, codec expects " + std::to_string(symbols_));
  Mat ym(1, 2 * symbols_);
  for (int l = 0; l < symbols_; ++l) {
    ym(0, 2 * l) = y_eq[static_cast<std::size_t>(l)].real();
    ym(0, 2 * l + 1) = y_eq[static_cast<std::size_t>(l)].imag();
  }
  Mat cond(1, 2);
  cond(0, 0) = snr_db / 10.0;
  cond(0, 1) = std::abs(state.h);
  Graph g;
  const Mat& p =
      g.value(demap_forward(g, g.input(ym), cond, importance_tokens(spec)));
  return std::vector<double>(p.data(), p.data() + bits_);
}

nn::NamedParams ChannelCodec::params() {
  nn::NamedParams out;
  nn::append_prefixed(out, "tx", tx_embed_.params("embed"));
  nn::append_prefixed(out, "tx", tx_ian_.params("ian"));
  for (std::size_t i = 0; i < tx_blocks_.size(); ++i)
    nn::append_prefixed(out, "tx",
                        tx_blocks_[i].params("block" + std::to_string(i)));
  nn::append_prefixed(out, "tx", tx_cond_.params("cond"));
  nn::append_prefixed(out, "tx", tx_norm_.params("norm"));
  nn::append_prefixed(out, "tx", tx_head_.params("head"));
  nn::append_prefixed(out, "rx", rx_embed_.params("embed"));
  for (std::size_t i = 0; i < rx_pre_blocks_.size(); ++i)
    nn::append_prefixed(out, "rx",
                        rx_pre_blocks_[i].params("pre" + std::to_string(i)));
  nn::append_prefixed(out, "rx", rx_cross_.params("cross"));
  nn::append_prefixed(out, "rx", rx_ian_.params("ian"));
  for (std::size_t i = 0; i < rx_post_blocks_.size(); ++i)
    nn::append_prefixed(out, "rx",
                        rx_post_blocks_[i].params("post" + std::to_string(i)));
  nn::append_prefixed(out, "rx", rx_cond_.params("cond"));
  nn::append_prefixed(out, "rx", rx_norm_.params("norm"));
  nn::append_prefixed(out, "rx", rx_head_.params("head"));
  return out;
}

double stage2_loss(const Mat& s, const Mat& s_hat) {
  if (s.rows() != s_hat.rows() || s.cols() != s_hat.cols())
    fail(ErrorKind::validation, "stage2 loss: image shape mismatch");
  return (s - s_hat).array().square().mean();
}

Stage2Artifacts train_stage2(const DatasetHandle& ds, SourceCodec& frozen,
                             const InterfaceSpec& spec,
                             const ExperimentConfig& cfg) {
  if (ds.train.empty()) fail(ErrorKind::validation, "stage 2: empty train split");
  validate_spec(spec);
  if (static_cast<int>(spec.epsilon.size()) != frozen.bit_count())
    fail(ErrorKind::artifact_mismatch,
         "interface spec width does not match codec bit count");
  if (cfg.model.bits != frozen.bit_count())
    fail(ErrorKind::artifact_mismatch,
         "config bit width does not match stage-1 codec");
  const bool rayleigh = cfg.channel == "rayleigh";
  if (!rayleigh && cfg.channel != "awgn")
    fail(ErrorKind::config, "channel: unknown type '" + cfg.channel + "'");

  Stage2Artifacts art;
  Rng root(cfg.seed);
  Rng init_rng = root.split(11);
  Rng chan_rng = root.split(12);
  art.codec.init(cfg, nn::ian_mode_from_string(cfg.ablation), init_rng);

  // The source side is on the tape (its decoder closes the loss) but must
  // not move; checked below by checksum.
  nn::NamedParams src_named = frozen.params();
  nn::set_trainable(src_named, false);
  const std::uint64_t src_before = nn::params_checksum(src_named);

  nn::Adam opt(nn::values_of(art.codec.params()), cfg.training.lr_stage2);
  Mat imp = art.codec.importance_tokens(spec);
  const int L = cfg.model.symbols;

  const std::size_t n = ds.train.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.training.batch);

  std::size_t val_n = std::min<std::size_t>(
      ds.test.empty() ? 0 : ds.test.size(),
      static_cast<std::size_t>(cfg.training.val_images));
  std::vector<std::size_t> val_idx(val_n);
  for (std::size_t i = 0; i < val_n; ++i) val_idx[i] = i;
  Mat val_images = val_n ? stack_images(ds.test, val_idx) : Mat();
  const std::vector<double> probes = {5.0, 10.0, 15.0, 20.0};

  for (int epoch = 0; epoch < cfg.training.epochs_stage2; ++epoch) {
    auto order = epoch_order(n, cfg.seed, static_cast<std::uint64_t>(epoch));
    double loss_acc = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
      Mat batch = stack_images(ds.train, idx);
      const int B = static_cast<int>(batch.rows());

      // hard bits from the frozen encoder; no gradient flows back into it
      Mat bits = binarize(frozen.encode_soft(batch));

      // per-sample channel draw; Rayleigh trains on the equalized form
      // y/h = x + n/h so the additive term is just a precomputed constant
      Mat cond_tx(B, 1), cond_rx(B, 2), noise(B, 2 * L);
      for (int i = 0; i < B; ++i) {
        double snr = cfg.snr.fixed() ? cfg.snr.low
                                     : chan_rng.uniform(cfg.snr.low, cfg.snr.high);
        double s2 = snr_to_sigma2(snr);
        Cx h(1.0, 0.0);
        if (rayleigh) {
          do {
            h = sample_cn(chan_rng, 1.0);
          } while (std::abs(h) == 0.0);
        }
        for (int l = 0; l < L; ++l) {
          Cx nz = sample_cn(chan_rng, s2);
          Cx ne = rayleigh ? nz / h : nz;
          noise(i, 2 * l) = ne.real();
          noise(i, 2 * l + 1) = ne.imag();
        }
        cond_tx(i, 0) = snr / 10.0;
        cond_rx(i, 0) = snr / 10.0;
        cond_rx(i, 1) = std::abs(h);
      }

      Graph g;
      Ref x = art.codec.map_forward(g, g.input(bits), cond_tx, imp);
      Ref y_eq = g.add(x, g.input(noise));
      Ref probs = art.codec.demap_forward(g, y_eq, cond_rx, imp);
      Ref hard = g.ste_round(probs);
      Ref s_hat = frozen.decode(g, hard);
      Ref loss = g.mean_sq_diff(s_hat, batch);

      double lv = g.value(loss)(0, 0);
      if (!std::isfinite(lv))
        fail(ErrorKind::divergence,
             "stage 2 diverged: non-finite loss at epoch " +
                 std::to_string(epoch) + " step " + std::to_string(steps));
      loss_acc += lv;
      ++steps;

      opt.zero_grad();
      g.backward(loss);
      opt.step();
    }

    Stage2LogEntry entry;
    entry.epoch = epoch;
    entry.loss = loss_acc / std::max(1, steps);
    if (val_n) {
      for (double p : probes) {
        Rng eval_rng = root.split(13)
                           .split(static_cast<std::uint64_t>(epoch))
                           .split(static_cast<std::uint64_t>(p * 1000));
        entry.probe_snr.push_back(p);
        entry.probe_psnr.push_back(mean_probe_psnr(
            frozen, art.codec, spec, val_images, cfg.channel, p, eval_rng));
      }
    }
    art.log.push_back(entry);
  }

  if (nn::params_checksum(src_named) != src_before)
    fail(ErrorKind::validation, "stage 2 moved frozen source parameters");
  nn::set_trainable(src_named, true);
  return art;
}

}  // namespace splitsc
