#pragma once

#include <string>
#include <utility>
#include <vector>

#include "splitsc/graph.hpp"

namespace splitsc::nn {

using ad::Graph;
using ad::Ref;

using NamedParams = std::vector<std::pair<std::string, Param*>>;

void append_prefixed(NamedParams& out, const std::string& prefix,
                     const NamedParams& items);

inline std::vector<Param*> values_of(const NamedParams& named) {
  std::vector<Param*> out;
  out.reserve(named.size());
  for (auto& [_, p] : named) out.push_back(p);
  return out;
}

std::size_t total_size(const NamedParams& named);
void set_trainable(const NamedParams& named, bool trainable);
std::uint64_t params_checksum(const NamedParams& named);

// Xavier-uniform fill, deterministic under the given stream.
void xavier_init(Param& p, int fan_in, int fan_out, Rng& rng);
void normal_init(Param& p, double stddev, Rng& rng);

struct Linear {
  Param weight;  // in x out
  Param bias;    // 1 x out

  void init(int in, int out, Rng& rng);
  Ref forward(Graph& g, Ref x);
  NamedParams params(const std::string& prefix);
};

struct LayerNorm {
  Param gamma;  // 1 x dim
  Param beta;   // 1 x dim

  void init(int dim);
  Ref forward(Graph& g, Ref x);
  NamedParams params(const std::string& prefix);
};

// Feature-wise modulation computed from a conditioning vector (one row per
// sample), e.g. declared SNR and fading magnitude. Produces per-block
// (scale, shift) pairs; blocks apply x*(1+scale)+shift broadcast over tokens.
struct ConditioningNet {
  Linear trunk;
  std::vector<Linear> heads;  // one per consuming block, each -> 2*dim
  int dim = 0;

  void init(int cond_in, int hidden, int dim, int blocks, Rng& rng);
  // Returns per-block pair (scale, shift), each (B x dim).
  std::vector<std::pair<Ref, Ref>> forward(Graph& g, Ref cond);
  NamedParams params(const std::string& prefix);
};

struct MultiHeadSelfAttention {
  Linear qkv;   // dim -> 3*dim
  Linear proj;  // dim -> dim
  int heads = 1;

  void init(int dim, int heads, Rng& rng);
  // x: (B*T x dim); attends within consecutive groups of `window_rows` rows.
  Ref forward(Graph& g, Ref x, int window_rows);
  NamedParams params(const std::string& prefix);
};

// Pointwise two-layer feed-forward with GELU.
struct FeedForward {
  Linear fc1;
  Linear fc2;

  void init(int dim, int hidden, Rng& rng);
  Ref forward(Graph& g, Ref x);
  NamedParams params(const std::string& prefix);
};

// Pre-norm transformer block. When `window_index` is nonempty the attention
// is computed inside permuted row windows (tokens regrouped, attended,
// scattered back): this is how the source backbone restricts attention to
// local image windows.
struct TransformerBlock {
  LayerNorm norm1;
  MultiHeadSelfAttention attn;
  LayerNorm norm2;
  FeedForward ff;

  void init(int dim, int heads, int ff_hidden, Rng& rng);
  Ref forward(Graph& g, Ref x, int window_rows,
              const std::vector<int>& window_index,
              const std::vector<int>& window_inverse);
  NamedParams params(const std::string& prefix);
};

// Squeeze-excitation over token blocks: mean-pool each sample's tokens,
// bottleneck, doubled-sigmoid gates in (0,2), rescale feature channels.
// The excite layer is zero-initialized so the block starts as identity.
struct SqueezeExcitation {
  Linear squeeze;  // dim -> dim/reduction
  Linear excite;   // dim/reduction -> dim

  void init(int dim, int reduction, Rng& rng);
  Ref forward(Graph& g, Ref x, int tokens_per_sample);
  NamedParams params(const std::string& prefix);
};

// Gates token features with multiplicative scores computed from per-bit
// importance values. The importance vector is regrouped into one row per
// token, projected to the feature width, and squashed into (0,2) centered
// at 1 so a zero projection passes features through unchanged.
struct InterfaceAttention {
  Linear proj;  // group_bits -> dim

  void init(int group_bits, int dim, Rng& rng);
  // x: (B*T x dim); importance_tokens: (T x group_bits), constant.
  Ref forward(Graph& g, Ref x, const Mat& importance_tokens, int batch);
  // Raw gate values (T x dim) for a given importance grouping.
  Ref gates(Graph& g, const Mat& importance_tokens);
  NamedParams params(const std::string& prefix);
};

enum class IanMode { full, no_iattn, no_ian };

IanMode ian_mode_from_string(const std::string& s);
std::string to_string(IanMode m);

// Importance-aware stage: interface attention followed by squeeze-excitation.
// `mode` drops stages for ablations (no_iattn keeps SE only; no_ian is a
// pass-through with no parameters).
struct ImportanceAwareNet {
  InterfaceAttention iattn;
  SqueezeExcitation se;
  IanMode mode = IanMode::full;

  void init(int group_bits, int dim, int se_reduction, IanMode mode, Rng& rng);
  Ref forward(Graph& g, Ref x, const Mat& importance_tokens, int batch,
              int tokens_per_sample);
  NamedParams params(const std::string& prefix);
};

// Adam with bias correction. Moment state is keyed by parameter identity and
// created lazily.
class Adam {
 public:
  explicit Adam(std::vector<Param*> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  double learning_rate() const { return lr_; }

 private:
  struct Slot {
    Param* param;
    Mat m;
    Mat v;
  };
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace splitsc::nn
