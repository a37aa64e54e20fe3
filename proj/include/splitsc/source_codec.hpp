#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitsc/config.hpp"
#include "splitsc/interface.hpp"
#include "splitsc/nn.hpp"

namespace splitsc {

// Probabilistic encoder (image -> per-bit probabilities), deterministic
// binarizer and decoder (bits -> image). Two backbones share the contract:
// a plain MLP for desk-scale work and a windowed-attention transformer as
// the reference configuration.
class SourceCodec {
 public:
  void init(const ExperimentConfig& cfg, Rng& rng);

  // images: (B x H*W*C) rows in [0,1]. Returns (B x M) in (0,1).
  ad::Ref encode_soft(ad::Graph& g, ad::Ref images);
  // bits: (B x M), hard or relaxed. Returns (B x H*W*C) in (0,1).
  ad::Ref decode(ad::Graph& g, ad::Ref bits);

  // Pure-eval conveniences (fresh throwaway graph per call).
  Mat encode_soft(const Mat& images);
  Mat decode(const Mat& bits);

  nn::NamedParams params();          // encoder.* then decoder.*
  nn::NamedParams encoder_params();
  nn::NamedParams decoder_params();

  int bit_count() const { return bits_; }
  int image_dim() const { return image_dim_; }

 private:
  ad::Ref mlp_forward(ad::Graph& g, ad::Ref x, std::vector<nn::Linear>& stack);
  ad::Ref tokens_forward(ad::Graph& g, ad::Ref tokens,
                         std::vector<nn::TransformerBlock>& blocks);

  std::string backbone_;
  int bits_ = 0;
  int image_dim_ = 0;

  // mlp
  std::vector<nn::Linear> enc_mlp_;  // last layer emits logits
  std::vector<nn::Linear> dec_mlp_;

  // transformer
  int tokens_ = 0;
  int patch_dim_ = 0;
  int bits_per_token_ = 0;
  int window_ = 0;
  std::vector<int> patch_perm_;      // row-major col -> patch-major position
  std::vector<int> patch_inv_;
  std::vector<int> col_window_idx_;  // odd blocks: column-strip regrouping
  std::vector<int> col_window_inv_;
  nn::Linear enc_embed_;
  std::vector<nn::TransformerBlock> enc_blocks_;
  nn::LayerNorm enc_norm_;
  nn::Linear enc_head_;
  nn::Linear dec_embed_;
  std::vector<nn::TransformerBlock> dec_blocks_;
  nn::LayerNorm dec_norm_;
  nn::Linear dec_head_;
};

// Hard decision: bit = 1 iff p >= 0.5 (tie rounds to 1).
Mat binarize(const Mat& probs);
std::vector<std::uint8_t> binarize(const std::vector<double>& probs);

// Mean squared error over all elements plus the epsilon regularizer.
double stage1_loss(const Mat& s, const Mat& s_hat,
                   const std::vector<double>& eps, double lambda);

struct Stage1LogEntry {
  int epoch = 0;
  double loss = 0.0;
  double mean_eps = 0.0;
  double psnr_val = 0.0;
};

struct Stage1Artifacts {
  SourceCodec codec;
  Param eps_raw;  // 1 x M logits; epsilon = 0.5*sigmoid(raw)
  InterfaceSpec spec;
  std::vector<Stage1LogEntry> log;
};

// Full stage-1 loop: encode -> noisy marginal -> straight-through sample ->
// decode -> mse + regularizer, adaptive-moment steps over encoder, decoder
// and raw epsilon. Bit-reproducible under cfg.seed.
Stage1Artifacts train_stage1(const DatasetHandle& ds,
                             const ExperimentConfig& cfg);

// Evaluation-path reconstruction: encode, binarize, push the hard bits
// through the binary-symmetric array (sampled with `rng`), decode.
Mat reconstruct_bsc(SourceCodec& codec, const InterfaceSpec& spec,
                    const Mat& images, Rng& rng);

// Noiseless paired-flip probe: encode, binarize, flip the listed bit
// positions, decode. Used to measure how much damage each position does.
Mat reconstruct_flipped(SourceCodec& codec, const Mat& images,
                        const std::vector<int>& flip_positions);

}  // namespace splitsc
