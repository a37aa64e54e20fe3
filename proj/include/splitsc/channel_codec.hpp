#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitsc/channel.hpp"
#include "splitsc/config.hpp"
#include "splitsc/interface.hpp"
#include "splitsc/nn.hpp"
#include "splitsc/source_codec.hpp"

namespace splitsc {

// Channel mapper g (bits -> L complex symbols) and demapper (equalized
// symbols -> bit probabilities). Both sides run an importance-aware stage
// fed by 1-2eps from the interface spec, and FiLM-style modulation driven
// by a conditioning net (mapper sees SNR; demapper sees SNR and |h|).
class ChannelCodec {
 public:
  void init(const ExperimentConfig& cfg, nn::IanMode mode, Rng& rng);

  // bits: (B x M). cond: (B x 1) constant [snr_db/10]. importance_tokens:
  // (M/group_bits x group_bits) constant. Returns (B x 2L), rows
  // power-normalized as L complex symbols.
  ad::Ref map_forward(ad::Graph& g, ad::Ref bits, const Mat& cond,
                      const Mat& importance_tokens);

  // y_eq: (B x 2L) equalized received symbols. cond: (B x 2) constant
  // [snr_db/10, |h|]. Returns (B x M) probabilities in (0,1).
  ad::Ref demap_forward(ad::Graph& g, ad::Ref y_eq, const Mat& cond,
                        const Mat& importance_tokens);

  // Single-block conveniences matching the wire-level contract.
  ChannelSymbols map_bits(const std::vector<std::uint8_t>& bits,
                          const InterfaceSpec& spec, double snr_db);
  std::vector<double> demap_symbols(const std::vector<Cx>& y_eq,
                                    const ChannelState& state,
                                    const InterfaceSpec& spec, double snr_db);

  // importance_weights(spec) regrouped to one row per mapper token.
  Mat importance_tokens(const InterfaceSpec& spec) const;

  nn::NamedParams params();
  int bit_count() const { return bits_; }
  int symbol_count() const { return symbols_; }
  nn::IanMode mode() const { return mode_; }

 private:
  ad::Ref apply_film(ad::Graph& g, ad::Ref x, ad::Ref scale, ad::Ref shift,
                     int tokens);

  int bits_ = 0;
  int symbols_ = 0;
  int group_bits_ = 0;
  int tx_tokens_ = 0;  // M / group_bits
  int rx_tokens_ = 0;  // 2L / 8
  int dim_ = 0;
  nn::IanMode mode_ = nn::IanMode::full;

  nn::Linear tx_embed_;
  nn::ImportanceAwareNet tx_ian_;
  std::vector<nn::TransformerBlock> tx_blocks_;
  nn::ConditioningNet tx_cond_;
  nn::LayerNorm tx_norm_;
  nn::Linear tx_head_;  // (tx_tokens*dim) -> 2L

  nn::Linear rx_embed_;  // 8 -> dim
  std::vector<nn::TransformerBlock> rx_pre_blocks_;
  nn::Linear rx_cross_;  // (rx_tokens*dim) -> (tx_tokens*dim)
  nn::ImportanceAwareNet rx_ian_;
  std::vector<nn::TransformerBlock> rx_post_blocks_;
  nn::ConditioningNet rx_cond_;
  nn::LayerNorm rx_norm_;
  nn::Linear rx_head_;  // dim -> group_bits
};

// Plain reconstruction error; the stage-2 objective once the regularizer is
// out of the picture (the interface is frozen).
double stage2_loss(const Mat& s, const Mat& s_hat);

struct Stage2LogEntry {
  int epoch = 0;
  double loss = 0.0;
  std::vector<double> probe_snr;   // fixed probe points
  std::vector<double> probe_psnr;  // validation PSNR at each probe
};

struct Stage2Artifacts {
  ChannelCodec codec;
  std::vector<Stage2LogEntry> log;
};

// Stage-2 loop against a frozen source codec: binarize (frozen encoder) ->
// map -> channel (AWGN or Rayleigh per config, equalized) -> demap ->
// straight-through rounding -> frozen decode -> mse. Verifies the spec
// matches the codec width; asserts the source params never move.
Stage2Artifacts train_stage2(const DatasetHandle& ds, SourceCodec& frozen,
                             const InterfaceSpec& spec,
                             const ExperimentConfig& cfg);

}  // namespace splitsc
