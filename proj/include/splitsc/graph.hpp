#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "splitsc/common.hpp"

namespace splitsc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Trainable tensor. Modules own these; the optimizer steps them; Graph
// accumulates gradients into `grad` on backward unless `trainable` is off.
struct Param {
  Mat value;
  Mat grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

namespace ad {

struct Ref {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Eager reverse-mode tape over Eigen matrices. Values are computed at op
// creation; backward() replays recorded closures in reverse order. Rebuilt
// every training step.
//
// Conventions: activations are (rows x cols) matrices. Batched token
// sequences are stacked vertically, sample i occupying rows [i*T, (i+1)*T).
class Graph {
 public:
  Ref input(Mat v);
  Ref param(Param& p);

  const Mat& value(Ref r) const { return nodes_[r.idx].value; }
  const Mat& grad(Ref r) const { return nodes_[r.idx].grad; }

  // -- arithmetic --------------------------------------------------------
  Ref add(Ref a, Ref b);                  // same shape
  Ref sub(Ref a, Ref b);
  Ref mul(Ref a, Ref b);                  // elementwise
  Ref matmul(Ref a, Ref b);
  Ref scale(Ref a, double c);
  Ref add_scalar(Ref a, double c);
  Ref add_row(Ref a, Ref row);            // broadcast 1xC over rows
  Ref mul_row(Ref a, Ref row);            // broadcast 1xC over rows
  Ref slice_cols(Ref a, int first, int count);

  // -- nonlinearities ----------------------------------------------------
  Ref sigmoid(Ref a);
  Ref relu(Ref a);
  Ref gelu(Ref a);                        // exact erf form

  // -- reductions --------------------------------------------------------
  Ref sum_all(Ref a);                     // 1x1
  Ref mean_all(Ref a);                    // 1x1
  Ref mean_sq_diff(Ref a, const Mat& target);  // 1x1, mean over elements

  // -- shape movement ----------------------------------------------------
  // (R x C) -> (R*C/chunk x chunk): each row is cut into row-chunks in order.
  Ref rows_from_chunks(Ref a, int chunk_cols);
  // ((R*g) x c) -> (R x g*c): inverse of rows_from_chunks.
  Ref chunks_from_rows(Ref a, int group_rows);
  Ref gather_rows(Ref a, std::vector<int> index);  // permutation/selection
  Ref tile_rows(Ref a, int times);                 // vertical repeat
  Ref block_mean_rows(Ref a, int block_rows);      // (B*T x C) -> (B x C)

  // -- normalization -----------------------------------------------------
  // Per-row: y = x * sqrt(symbol_count / sum(x^2)). Rows carry 2*symbol_count
  // reals encoding symbol_count complex values; result has mean |symbol|^2 = 1.
  Ref row_power_normalize(Ref a, int symbol_count);
  Ref layer_norm(Ref x, Ref gamma, Ref beta, double eps = 1e-5);

  // -- attention ---------------------------------------------------------
  // q,k,v: (B*T x D). Scaled dot-product softmax attention applied
  // independently per block of `block_rows` rows and per head.
  Ref attention(Ref q, Ref k, Ref v, int heads, int block_rows);

  // -- estimators --------------------------------------------------------
  // Forward: independent Bernoulli draws from entries of q. Backward:
  // identity (straight-through).
  Ref ste_bernoulli(Ref q, Rng& rng);
  // Forward: hard threshold at 0.5 (ties round to 1). Backward: identity.
  Ref ste_round(Ref q);

  void backward(Ref loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;  // empty for leaves without params
  };

  int push(Mat value, std::function<void()> back = {});
  Mat& grad_buf(int idx);

  std::vector<Node> nodes_;
};

}  // namespace ad
}  // namespace splitsc
