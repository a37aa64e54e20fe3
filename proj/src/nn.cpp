#include "splitsc/nn.hpp"

#include <cmath>

namespace splitsc::nn {

void append_prefixed(NamedParams& out, const std::string& prefix,
                     const NamedParams& items) {
  for (auto& [name, p] : items) out.emplace_back(prefix + "." + name, p);
}

std::size_t total_size(const NamedParams& named) {
  std::size_t n = 0;
  for (auto& [_, p] : named) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void set_trainable(const NamedParams& named, bool trainable) {
  for (auto& [_, p] : named) p->trainable = trainable;
}

std::uint64_t params_checksum(const NamedParams& named) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto& [name, p] : named) {
    h = fnv1a64(name, h);
    h = fnv1a64(p->value.data(),
                static_cast<std::size_t>(p->value.size()) * sizeof(double), h);
  }
  return h;
}

void xavier_init(Param& p, int fan_in, int fan_out, Rng& rng) {
  double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (int c = 0; c < p.value.cols(); ++c)
    for (int r = 0; r < p.value.rows(); ++r) p.value(r, c) = rng.uniform(-s, s);
}

void normal_init(Param& p, double stddev, Rng& rng) {
  for (int c = 0; c < p.value.cols(); ++c)
    for (int r = 0; r < p.value.rows(); ++r) p.value(r, c) = stddev * rng.normal();
}

// ---------------------------------------------------------------- Linear

void Linear::init(int in, int out, Rng& rng) {
  weight.value.resize(in, out);
  xavier_init(weight, in, out, rng);
  bias.value = Mat::Zero(1, out);
}

Ref Linear::forward(Graph& g, Ref x) {
  return g.add_row(g.matmul(x, g.param(weight)), g.param(bias));
}

NamedParams Linear::params(const std::string& prefix) {
  return {{prefix + ".weight", &weight}, {prefix + ".bias", &bias}};
}

// -------------------------------------------------------------- LayerNorm

void LayerNorm::init(int dim) {
  gamma.value = Mat::Ones(1, dim);
  beta.value = Mat::Zero(1, dim);
}

Ref LayerNorm::forward(Graph& g, Ref x) {
  return g.layer_norm(x, g.param(gamma), g.param(beta));
}

NamedParams LayerNorm::params(const std::string& prefix) {
  return {{prefix + ".gamma", &gamma}, {prefix + ".beta", &beta}};
}

// -------------------------------------------------------- ConditioningNet

void ConditioningNet::init(int cond_in, int hidden, int dim_, int blocks,
                           Rng& rng) {
  dim = dim_;
  trunk.init(cond_in, hidden, rng);
  heads.resize(static_cast<std::size_t>(blocks));
  for (auto& h : heads) h.init(hidden, 2 * dim, rng);
}

std::vector<std::pair<Ref, Ref>> ConditioningNet::forward(Graph& g,
                                                          Ref cond) {
  Ref hidden = g.relu(trunk.forward(g, cond));
  std::vector<std::pair<Ref, Ref>> out;
  out.reserve(heads.size());
  for (auto& head : heads) {
    Ref st = head.forward(g, hidden);
    out.emplace_back(g.slice_cols(st, 0, dim), g.slice_cols(st, dim, dim));
  }
  return out;
}

NamedParams ConditioningNet::params(const std::string& prefix) {
  NamedParams out;
  append_prefixed(out, prefix, trunk.params("trunk"));
  for (std::size_t i = 0; i < heads.size(); ++i)
    append_prefixed(out, prefix, heads[i].params("head" + std::to_string(i)));
  return out;
}

// ------------------------------------------------ MultiHeadSelfAttention

void MultiHeadSelfAttention::init(int dim, int heads_, Rng& rng) {
  heads = heads_;
  qkv.init(dim, 3 * dim, rng);
  proj.init(dim, dim, rng);
}

Ref MultiHeadSelfAttention::forward(Graph& g, Ref x, int window_rows) {
  int dim = static_cast<int>(qkv.weight.value.rows());
  Ref fused = qkv.forward(g, x);
  Ref q = g.slice_cols(fused, 0, dim);
  Ref k = g.slice_cols(fused, dim, dim);
  Ref v = g.slice_cols(fused, 2 * dim, dim);
  Ref attended = g.attention(q, k, v, heads, window_rows);
  return proj.forward(g, attended);
}

NamedParams MultiHeadSelfAttention::params(const std::string& prefix) {
  NamedParams out;
  append_prefixed(out, prefix, qkv.params("qkv"));
  append_prefixed(out, prefix, proj.params("proj"));
  return out;
}

// ------------------------------------------------------------ FeedForward

void FeedForward::init(int dim, int hidden, Rng& rng) {
  fc1.init(dim, hidden, rng);
  fc2.init(hidden, dim, rng);
}

Ref FeedForward::forward(Graph& g, Ref x) {
  return fc2.forward(g, g.gelu(fc1.forward(g, x)));
}

NamedParams FeedForward::params(const std::string& prefix) {
  NamedParams out;
  append_prefixed(out, prefix, fc1.params("fc1"));
  append_prefixed(out, prefix, fc2.params("fc2"));
  return out;
}

// ------------------------------------------------------- TransformerBlock

void TransformerBlock::init(int dim, int heads, int ff_hidden, Rng& rng) {
  norm1.init(dim);
  attn.init(dim, heads, rng);
  norm2.init(dim);
  ff.init(dim, ff_hidden, rng);
}

Ref TransformerBlock::forward(Graph& g, Ref x, int window_rows,
                              const std::vector<int>& window_index,
                              const std::vector<int>& window_inverse) {
  Ref normed = norm1.forward(g, x);
  Ref attended;
  if (window_index.empty()) {
    attended = attn.forward(g, normed, window_rows);
  } else {
    Ref grouped = g.gather_rows(normed, window_index);
    Ref local = attn.forward(g, grouped, window_rows);
    attended = g.gather_rows(local, window_inverse);
  }
  Ref mid = g.add(x, attended);
  return g.add(mid, ff.forward(g, norm2.forward(g, mid)));
}

NamedParams TransformerBlock::params(const std::string& prefix) {
  NamedParams out;
  append_prefixed(out, prefix, norm1.params("norm1"));
  append_prefixed(out, prefix, attn.params("attn"));
  append_prefixed(out, prefix, norm2.params("norm2"));
  append_prefixed(out, prefix, ff.params("ff"));
  return out;
}

// ----------------------------------------------------- SqueezeExcitation

void SqueezeExcitation::init(int dim, int reduction, Rng& rng) {
  int mid = dim / reduction;
  if (mid < 1) mid = 1;
  squeeze.init(dim, mid, rng);
  excite.init(mid, dim, rng);
  // zero excite => gates sit at 1 and the block starts as identity, same
  // convention as InterfaceAttention's zero projection
  excite.weight.value.setZero();
  excite.bias.value.setZero();
}

Ref SqueezeExcitation::forward(Graph& g, Ref x, int tokens_per_sample) {
  Ref pooled = g.block_mean_rows(x, tokens_per_sample);
  Ref gates = g.scale(
      g.sigmoid(excite.forward(g, g.relu(squeeze.forward(g, pooled)))), 2.0);
  // expand each sample's gate row back across its tokens
  const int batch = static_cast<int>(g.value(pooled).rows());
  std::vector<int> expand(static_cast<std::size_t>(batch) * tokens_per_sample);
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < tokens_per_sample; ++t)
      expand[static_cast<std::size_t>(b) * tokens_per_sample + t] = b;
  return g.mul(x, g.gather_rows(gates, std::move(expand)));
}

NamedParams SqueezeExcitation::params(const std::string& prefix) {
  NamedParams out;
  append_prefixed(out, prefix, squeeze.params("squeeze"));
  append_prefixed(out, prefix, excite.params("excite"));
  return out;
}

// ---------------------------------------------------- InterfaceAttention

void InterfaceAttention::init(int group_bits, int dim, Rng& rng) {
  proj.init(group_bits, dim, rng);
  // zero projection => unit gates; training moves the gates away from 1
  proj.weight.value.setZero();
  proj.bias.value.setZero();
}

Ref InterfaceAttention::gates(Graph& g, const Mat& importance_tokens) {
  Ref imp = g.input(importance_tokens);
  return g.scale(g.sigmoid(proj.forward(g, imp)), 2.0);
}

Ref InterfaceAttention::forward(Graph& g, Ref x, const Mat& importance_tokens,
                                int batch) {
  Ref gate = gates(g, importance_tokens);
  return g.mul(x, g.tile_rows(gate, batch));
}

NamedParams InterfaceAttention::params(const std::string& prefix) {
  return proj.params(prefix + ".proj");
}

// ----------------------------------------------------- ImportanceAwareNet

IanMode ian_mode_from_string(const std::string& s) {
  if (s == "full") return IanMode::full;
  if (s == "no-iattn") return IanMode::no_iattn;
  if (s == "no-ian") return IanMode::no_ian;
  fail(ErrorKind::config, "unknown importance-net mode: " + s);
}

std::string to_string(IanMode m) {
  switch (m) {
    case IanMode::full: return "full";
    case IanMode::no_iattn: return "no-iattn";
    case IanMode::no_ian: return "no-ian";
  }
  return "full";
}

void ImportanceAwareNet::init(int group_bits, int dim, int se_reduction,
                              IanMode mode_, Rng& rng) {
  mode = mode_;
  if (mode == IanMode::full) iattn.init(group_bits, dim, rng);
  if (mode != IanMode::no_ian) se.init(dim, se_reduction, rng);
}

Ref ImportanceAwareNet::forward(Graph& g, Ref x, const Mat& importance_tokens,
                                int batch, int tokens_per_sample) {
  Ref out = x;
  if (mode == IanMode::full)
    out = iattn.forward(g, out, importance_tokens, batch);
  if (mode != IanMode::no_ian) out = se.forward(g, out, tokens_per_sample);
  return out;
}

NamedParams ImportanceAwareNet::params(const std::string& prefix) {
  NamedParams out;
  if (mode == IanMode::full)
    append_prefixed(out, prefix, iattn.params("iattn"));
  if (mode != IanMode::no_ian) append_prefixed(out, prefix, se.params("se"));
  return out;
}

// ------------------------------------------------------------------ Adam

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2,
           double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  slots_.reserve(params.size());
  for (Param* p : params) {
    Slot s{p, Mat::Zero(p->value.rows(), p->value.cols()),
           Mat::Zero(p->value.rows(), p->value.cols())};
    slots_.push_back(std::move(s));
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Slot& s : slots_) {
    if (s.param->grad.size() == 0) continue;
    s.m = beta1_ * s.m + (1.0 - beta1_) * s.param->grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * s.param->grad.cwiseProduct(s.param->grad);
    Mat mhat = s.m / bc1;
    Mat vhat = s.v / bc2;
    s.param->value.array() -=
        lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.param->zero_grad();
}

}  // namespace splitsc::nn
