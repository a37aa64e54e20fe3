#include "splitsc/source_codec.hpp"

#include <cmath>

#include "splitsc/data.hpp"
#include "splitsc/metrics.hpp"

namespace splitsc {

using ad::Graph;
using ad::Ref;

namespace {

// In-graph column permutation built from existing ops: flatten each row to a
// (D x 1) column of rows, gather, reassemble. perm[j] = source column for
// output column j.
Ref permute_cols(Graph& g, Ref x, const std::vector<int>& perm) {
  const int batch = static_cast<int>(g.value(x).rows());
  const int dim = static_cast<int>(g.value(x).cols());
  Ref flat = g.rows_from_chunks(x, 1);  // (B*D x 1)
  std::vector<int> index(static_cast<std::size_t>(batch) * dim);
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < dim; ++j)
      index[static_cast<std::size_t>(b) * dim + j] = b * dim + perm[j];
  Ref picked = g.gather_rows(flat, std::move(index));
  return g.chunks_from_rows(picked, dim);
}

}  // namespace

void SourceCodec::init(const ExperimentConfig& cfg, Rng& rng) {
  backbone_ = cfg.model.backbone;
  bits_ = cfg.model.bits;
  image_dim_ = cfg.dataset.height * cfg.dataset.width * cfg.dataset.channels;
  const int dim = cfg.model.source_dim;
  const int depth = cfg.model.source_blocks;

  if (backbone_ == "mlp") {
    enc_mlp_.resize(static_cast<std::size_t>(depth) + 1);
    dec_mlp_.resize(static_cast<std::size_t>(depth) + 1);
    int in = image_dim_;
    for (int i = 0; i < depth; ++i) {
      enc_mlp_[static_cast<std::size_t>(i)].init(in, dim, rng);
      in = dim;
    }
    enc_mlp_.back().init(dim, bits_, rng);
    in = bits_;
    for (int i = 0; i < depth; ++i) {
      dec_mlp_[static_cast<std::size_t>(i)].init(in, dim, rng);
      in = dim;
    }
    dec_mlp_.back().init(dim, image_dim_, rng);
    return;
  }

  // transformer backbone: patch tokens in raster order
  const int patch = cfg.model.patch;
  const int H = cfg.dataset.height, W = cfg.dataset.width,
            C = cfg.dataset.channels;
  const int ty = H / patch, tx = W / patch;
  tokens_ = ty * tx;
  patch_dim_ = patch * patch * C;
  bits_per_token_ = bits_ / tokens_;
  window_ = cfg.model.window;

  patch_perm_.resize(static_cast<std::size_t>(image_dim_));
  patch_inv_.resize(static_cast<std::size_t>(image_dim_));
  int pos = 0;
  for (int t = 0; t < tokens_; ++t) {
    int py = t / tx, px = t % tx;
    for (int dy = 0; dy < patch; ++dy)
      for (int dx = 0; dx < patch; ++dx)
        for (int c = 0; c < C; ++c) {
          int col = ((py * patch + dy) * W + (px * patch + dx)) * C + c;
          patch_perm_[static_cast<std::size_t>(pos)] = col;
          patch_inv_[static_cast<std::size_t>(col)] = pos;
          ++pos;
        }
  }

  // odd blocks attend along columns of the token grid instead of rows,
  // giving the window pattern two-dimensional reach
  col_window_idx_.resize(static_cast<std::size_t>(tokens_));
  col_window_inv_.resize(static_cast<std::size_t>(tokens_));
  int k = 0;
  for (int x = 0; x < tx; ++x)
    for (int y = 0; y < ty; ++y) {
      col_window_idx_[static_cast<std::size_t>(k)] = y * tx + x;
      col_window_inv_[static_cast<std::size_t>(y * tx + x)] = k;
      ++k;
    }

  const int heads = cfg.model.source_heads;
  const int ff = 2 * dim;
  enc_embed_.init(patch_dim_, dim, rng);
  enc_blocks_.resize(static_cast<std::size_t>(depth));
  for (auto& b : enc_blocks_) b.init(dim, heads, ff, rng);
  enc_norm_.init(dim);
  enc_head_.init(dim, bits_per_token_, rng);
  dec_embed_.init(bits_per_token_, dim, rng);
  dec_blocks_.resize(static_cast<std::size_t>(depth));
  for (auto& b : dec_blocks_) b.init(dim, heads, ff, rng);
  dec_norm_.init(dim);
  dec_head_.init(dim, patch_dim_, rng);
}

Ref SourceCodec::mlp_forward(Graph& g, Ref x, std::vector<nn::Linear>& stack) {
  Ref h = x;
  for (std::size_t i = 0; i + 1 < stack.size(); ++i)
    h = g.gelu(stack[i].forward(g, h));
  return stack.back().forward(g, h);  // logits
}

Ref SourceCodec::tokens_forward(Graph& g, Ref tokens,
                                std::vector<nn::TransformerBlock>& blocks) {
  // expand the per-sample token regrouping to the whole batch
  const int batch = static_cast<int>(g.value(tokens).rows()) / tokens_;
  std::vector<int> idx, inv;
  idx.reserve(static_cast<std::size_t>(batch) * tokens_);
  inv.reserve(static_cast<std::size_t>(batch) * tokens_);
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < tokens_; ++t) {
      idx.push_back(b * tokens_ + col_window_idx_[static_cast<std::size_t>(t)]);
      inv.push_back(b * tokens_ + col_window_inv_[static_cast<std::size_t>(t)]);
    }
  Ref h = tokens;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i % 2 == 0)
      h = blocks[i].forward(g, h, window_, {}, {});
    else
      h = blocks[i].forward(g, h, window_, idx, inv);
  }
  return h;
}

Ref SourceCodec::encode_soft(Graph& g, Ref images) {
  if (static_cast<int>(g.value(images).cols()) != image_dim_)
    fail(ErrorKind::validation, "encode: image width " +
                                    std::to_string(g.value(images).cols()) +
                                    ", codec expects " + std::to_string(image_dim_));
  if (backbone_ == "mlp") return g.sigmoid(mlp_forward(g, images, enc_mlp_));

  Ref pm = permute_cols(g, images, patch_perm_);
  Ref tok = g.rows_from_chunks(pm, patch_dim_);
  Ref h = g.gelu(enc_embed_.forward(g, tok));
  h = tokens_forward(g, h, enc_blocks_);
  h = enc_norm_.forward(g, h);
  Ref logits_tok = enc_head_.forward(g, h);          // (B*T x bpt)
  Ref logits = g.chunks_from_rows(logits_tok, tokens_);  // (B x M)
  return g.sigmoid(logits);
}

Ref SourceCodec::decode(Graph& g, Ref bits) {
  if (static_cast<int>(g.value(bits).cols()) != bits_)
    fail(ErrorKind::validation, "decode: bit width " +
                                    std::to_string(g.value(bits).cols()) +
                                    ", codec expects " + std::to_string(bits_));
  if (backbone_ == "mlp") return g.sigmoid(mlp_forward(g, bits, dec_mlp_));

  Ref tok = g.rows_from_chunks(bits, bits_per_token_);
  Ref h = g.gelu(dec_embed_.forward(g, tok));
  h = tokens_forward(g, h, dec_blocks_);
  h = dec_norm_.forward(g, h);
  Ref px_tok = dec_head_.forward(g, h);              // (B*T x patch_dim)
  Ref flat = g.chunks_from_rows(px_tok, tokens_);    // (B x D) patch-major
  return g.sigmoid(permute_cols(g, flat, patch_inv_));
}

Mat SourceCodec::encode_soft(const Mat& images) {
  Graph g;
  return g.value(encode_soft(g, g.input(images)));
}

Mat SourceCodec::decode(const Mat& bits) {
  Graph g;
  return g.value(decode(g, g.input(bits)));
}

nn::NamedParams SourceCodec::encoder_params() {
  nn::NamedParams out;
  if (backbone_ == "mlp") {
    for (std::size_t i = 0; i < enc_mlp_.size(); ++i)
      nn::append_prefixed(out, "encoder",
                          enc_mlp_[i].params("fc" + std::to_string(i)));
    return out;
  }
  nn::append_prefixed(out, "encoder", enc_embed_.params("embed"));
  for (std::size_t i = 0; i < enc_blocks_.size(); ++i)
    nn::append_prefixed(out, "encoder",
                        enc_blocks_[i].params("block" + std::to_string(i)));
  nn::append_prefixed(out, "encoder", enc_norm_.params("norm"));
  nn::append_prefixed(out, "encoder", enc_head_.params("head"));
  return out;
}

nn::NamedParams SourceCodec::decoder_params() {
  nn::NamedParams out;
  if (backbone_ == "mlp") {
    for (std::size_t i = 0; i < dec_mlp_.size(); ++i)
      nn::append_prefixed(out, "decoder",
                          dec_mlp_[i].params("fc" + std::to_string(i)));
    return out;
  }
  nn::append_prefixed(out, "decoder", dec_embed_.params("embed"));
  for (std::size_t i = 0; i < dec_blocks_.size(); ++i)
    nn::append_prefixed(out, "decoder",
                        dec_blocks_[i].params("block" + std::to_string(i)));
  nn::append_prefixed(out, "decoder", dec_norm_.params("norm"));
  nn::append_prefixed(out, "decoder", dec_head_.params("head"));
  return out;
}

nn::NamedParams SourceCodec::params() {
  nn::NamedParams out = encoder_params();
  nn::NamedParams dec = decoder_params();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

Mat binarize(const Mat& probs) {
  return (probs.array() >= 0.5).cast<double>();
}

std::vector<std::uint8_t> binarize(const std::vector<double>& probs) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= 0.5 ? 1 : 0;
  return out;
}

double stage1_loss(const Mat& s, const Mat& s_hat,
                   const std::vector<double>& eps, double lambda) {
  if (s.rows() != s_hat.rows() || s.cols() != s_hat.cols())
    fail(ErrorKind::validation, "stage1 loss: image shape mismatch");
  double mse = (s - s_hat).array().square().mean();
  return mse + regularization_loss(eps, lambda);
}

Stage1Artifacts train_stage1(const DatasetHandle& ds,
                             const ExperimentConfig& cfg) {
  if (ds.train.empty()) fail(ErrorKind::validation, "stage 1: empty train split");
  const int M = cfg.model.bits;

  Stage1Artifacts art;
  Rng root(cfg.seed);
  Rng init_rng = root.split(1);
  Rng sample_rng = root.split(2);
  art.codec.init(cfg, init_rng);
  art.eps_raw.value = Mat::Zero(1, M);  // epsilon starts at 0.25 everywhere
  art.eps_raw.zero_grad();

  nn::NamedParams named = art.codec.params();
  named.emplace_back("interface.eps_raw", &art.eps_raw);
  nn::Adam opt(nn::values_of(named), cfg.training.lr_stage1);

  const std::size_t n = ds.train.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.training.batch);

  std::size_t val_n = std::min<std::size_t>(
      ds.test.empty() ? 0 : ds.test.size(),
      static_cast<std::size_t>(cfg.training.val_images));
  std::vector<std::size_t> val_idx(val_n);
  for (std::size_t i = 0; i < val_n; ++i) val_idx[i] = i;
  Mat val_images = val_n ? stack_images(ds.test, val_idx) : Mat();

  for (int epoch = 0; epoch < cfg.training.epochs_stage1; ++epoch) {
    auto order = epoch_order(n, cfg.seed, static_cast<std::uint64_t>(epoch));
    double loss_acc = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
      Mat batch = stack_images(ds.train, idx);

      Graph g;
      Ref img = g.input(batch);
      Ref p = art.codec.encode_soft(g, img);
      Ref eps = g.scale(g.sigmoid(g.param(art.eps_raw)), 0.5);  // 1 x M
      // q = p(1-eps) + (1-p)eps = p*(1-2eps) + eps, broadcast over the batch
      Ref q = g.add_row(g.mul_row(p, g.add_scalar(g.scale(eps, -2.0), 1.0)), eps);
      Ref sampled = g.ste_bernoulli(q, sample_rng);
      Ref s_hat = art.codec.decode(g, sampled);
      Ref mse = g.mean_sq_diff(s_hat, batch);
      Ref d = g.add_scalar(eps, -0.5);
      Ref reg = g.scale(g.sum_all(g.mul(d, d)),
                        cfg.lambda / static_cast<double>(M));
      Ref loss = g.add(mse, reg);

      double lv = g.value(loss)(0, 0);
      if (!std::isfinite(lv))
        fail(ErrorKind::divergence,
             "stage 1 diverged: non-finite loss at epoch " +
                 std::to_string(epoch) + " step " + std::to_string(steps));
      loss_acc += lv;
      ++steps;

      opt.zero_grad();
      g.backward(loss);
      opt.step();
    }

    Stage1LogEntry entry;
    entry.epoch = epoch;
    entry.loss = loss_acc / std::max(1, steps);
    auto eps_now = epsilon_from_raw({std::vector<double>(
        art.eps_raw.value.data(), art.eps_raw.value.data() + M)});
    double eps_sum = 0.0;
    for (double e : eps_now) eps_sum += e;
    entry.mean_eps = eps_sum / static_cast<double>(M);

    if (val_n) {
      InterfaceSpec probe;
      probe.epsilon = eps_now;
      Rng eval_rng = root.split(3).split(static_cast<std::uint64_t>(epoch));
      Mat rec = reconstruct_bsc(art.codec, probe, val_images, eval_rng);
      entry.psnr_val = mean_psnr(val_images, rec, 1.0);
    }
    art.log.push_back(entry);
  }

  art.spec.format_version = 1;
  art.spec.epsilon = epsilon_from_raw({std::vector<double>(
      art.eps_raw.value.data(), art.eps_raw.value.data() + M)});
  art.spec.training_fingerprint =
      "stage1:" + hex64(stage1_hash(cfg)) + ":" +
      hex64(nn::params_checksum(art.codec.params()));
  validate_spec(art.spec);
  return art;
}

Mat reconstruct_bsc(SourceCodec& codec, const InterfaceSpec& spec,
                    const Mat& images, Rng& rng) {
  if (static_cast<int>(spec.epsilon.size()) != codec.bit_count())
    fail(ErrorKind::artifact_mismatch,
         "interface spec width does not match codec bit count");
  Mat bits = binarize(codec.encode_soft(images));
  for (Eigen::Index r = 0; r < bits.rows(); ++r)
    for (Eigen::Index c = 0; c < bits.cols(); ++c) {
      double e = spec.epsilon[static_cast<std::size_t>(c)];
      if (rng.bernoulli(e)) bits(r, c) = 1.0 - bits(r, c);
    }
  return codec.decode(bits);
}

Mat reconstruct_flipped(SourceCodec& codec, const Mat& images,
                        const std::vector<int>& flip_positions) {
  Mat bits = binarize(codec.encode_soft(images));
  for (int pos : flip_positions) {
    if (pos < 0 || pos >= static_cast<int>(bits.cols()))
      fail(ErrorKind::validation, "flip position out of range");
    for (Eigen::Index r = 0; r < bits.rows(); ++r)
      bits(r, pos) = 1.0 - bits(r, pos);
  }
  return codec.decode(bits);
}

}  // namespace splitsc
