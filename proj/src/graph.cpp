#include "splitsc/graph.hpp"

#include <cmath>

namespace splitsc::ad {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

int Graph::push(Mat value, std::function<void()> back) {
  nodes_.push_back(Node{std::move(value), Mat(), std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

Mat& Graph::grad_buf(int idx) {
  Node& n = nodes_[idx];
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

Ref Graph::input(Mat v) { return Ref{push(std::move(v))}; }

Ref Graph::param(Param& p) {
  int idx = push(p.value);
  Param* pp = &p;
  nodes_[idx].back = [this, idx, pp] {
    if (!pp->trainable) return;
    if (pp->grad.size() == 0) pp->grad.setZero(pp->value.rows(), pp->value.cols());
    pp->grad += grad_buf(idx);
  };
  return Ref{idx};
}

Ref Graph::add(Ref a, Ref b) {
  int idx = push(nodes_[a.idx].value + nodes_[b.idx].value);
  nodes_[idx].back = [this, idx, a, b] {
    const Mat& g = grad_buf(idx);
    grad_buf(a.idx) += g;
    grad_buf(b.idx) += g;
  };
  return Ref{idx};
}

Ref Graph::sub(Ref a, Ref b) {
  int idx = push(nodes_[a.idx].value - nodes_[b.idx].value);
  nodes_[idx].back = [this, idx, a, b] {
    const Mat& g = grad_buf(idx);
    grad_buf(a.idx) += g;
    grad_buf(b.idx) -= g;
  };
  return Ref{idx};
}

Ref Graph::mul(Ref a, Ref b) {
  int idx = push(nodes_[a.idx].value.cwiseProduct(nodes_[b.idx].value));
  nodes_[idx].back = [this, idx, a, b] {
    const Mat& g = grad_buf(idx);
    grad_buf(a.idx) += g.cwiseProduct(nodes_[b.idx].value);
    grad_buf(b.idx) += g.cwiseProduct(nodes_[a.idx].value);
  };
  return Ref{idx};
}

Ref Graph::matmul(Ref a, Ref b) {
  int idx = push(nodes_[a.idx].value * nodes_[b.idx].value);
  nodes_[idx].back = [this, idx, a, b] {
    const Mat& g = grad_buf(idx);
    grad_buf(a.idx) += g * nodes_[b.idx].value.transpose();
    grad_buf(b.idx) += nodes_[a.idx].value.transpose() * g;
  };
  return Ref{idx};
}

Ref Graph::scale(Ref a, double c) {
  int idx = push(nodes_[a.idx].value * c);
  nodes_[idx].back = [this, idx, a, c] { grad_buf(a.idx) += grad_buf(idx) * c; };
  return Ref{idx};
}

Ref Graph::add_scalar(Ref a, double c) {
  int idx = push(nodes_[a.idx].value.array() + c);
  nodes_[idx].back = [this, idx, a] { grad_buf(a.idx) += grad_buf(idx); };
  return Ref{idx};
}

Ref Graph::add_row(Ref a, Ref row) {
  Mat v = nodes_[a.idx].value;
  v.rowwise() += nodes_[row.idx].value.row(0);
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, row] {
    const Mat& g = grad_buf(idx);
    grad_buf(a.idx) += g;
    grad_buf(row.idx) += g.colwise().sum();
  };
  return Ref{idx};
}

Ref Graph::mul_row(Ref a, Ref row) {
  Mat v = nodes_[a.idx].value;
  v.array().rowwise() *= nodes_[row.idx].value.row(0).array();
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, row] {
    const Mat& g = grad_buf(idx);
    Mat ga = g;
    ga.array().rowwise() *= nodes_[row.idx].value.row(0).array();
    grad_buf(a.idx) += ga;
    grad_buf(row.idx) += g.cwiseProduct(nodes_[a.idx].value).colwise().sum();
  };
  return Ref{idx};
}

Ref Graph::slice_cols(Ref a, int first, int count) {
  int idx = push(nodes_[a.idx].value.middleCols(first, count));
  nodes_[idx].back = [this, idx, a, first, count] {
    grad_buf(a.idx).middleCols(first, count) += grad_buf(idx);
  };
  return Ref{idx};
}

Ref Graph::sigmoid(Ref a) {
  Mat v = (1.0 / (1.0 + (-nodes_[a.idx].value.array()).exp())).matrix();
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a] {
    const Mat& y = nodes_[idx].value;
    grad_buf(a.idx).array() +=
        grad_buf(idx).array() * y.array() * (1.0 - y.array());
  };
  return Ref{idx};
}

Ref Graph::relu(Ref a) {
  int idx = push(nodes_[a.idx].value.cwiseMax(0.0));
  nodes_[idx].back = [this, idx, a] {
    grad_buf(a.idx).array() +=
        grad_buf(idx).array() * (nodes_[a.idx].value.array() > 0.0).cast<double>();
  };
  return Ref{idx};
}

Ref Graph::gelu(Ref a) {
  const Mat& x = nodes_[a.idx].value;
  Mat phi = x.unaryExpr(
      [](double t) { return 0.5 * (1.0 + std::erf(t * kInvSqrt2)); });
  Mat v = x.cwiseProduct(phi);
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, phi = std::move(phi)] {
    const Mat& x = nodes_[a.idx].value;
    Eigen::ArrayXXd pdf = kInvSqrt2Pi * (-0.5 * x.array().square()).exp();
    grad_buf(a.idx).array() +=
        grad_buf(idx).array() * (phi.array() + x.array() * pdf);
  };
  return Ref{idx};
}

Ref Graph::sum_all(Ref a) {
  Mat v(1, 1);
  v(0, 0) = nodes_[a.idx].value.sum();
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a] {
    grad_buf(a.idx).array() += grad_buf(idx)(0, 0);
  };
  return Ref{idx};
}

Ref Graph::mean_all(Ref a) {
  double n = static_cast<double>(nodes_[a.idx].value.size());
  Mat v(1, 1);
  v(0, 0) = nodes_[a.idx].value.sum() / n;
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, n] {
    grad_buf(a.idx).array() += grad_buf(idx)(0, 0) / n;
  };
  return Ref{idx};
}

Ref Graph::mean_sq_diff(Ref a, const Mat& target) {
  const Mat& x = nodes_[a.idx].value;
  if (x.rows() != target.rows() || x.cols() != target.cols())
    fail(ErrorKind::validation, "mean_sq_diff: shape mismatch");
  Mat diff = x - target;
  double n = static_cast<double>(diff.size());
  Mat v(1, 1);
  v(0, 0) = diff.squaredNorm() / n;
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, diff = std::move(diff), n] {
    grad_buf(a.idx) += (2.0 / n) * grad_buf(idx)(0, 0) * diff;
  };
  return Ref{idx};
}

Ref Graph::rows_from_chunks(Ref a, int chunk_cols) {
  const Mat& x = nodes_[a.idx].value;
  const int rows = static_cast<int>(x.rows());
  const int cols = static_cast<int>(x.cols());
  if (cols % chunk_cols != 0)
    fail(ErrorKind::validation, "rows_from_chunks: cols not divisible");
  const int per_row = cols / chunk_cols;
  Mat v(rows * per_row, chunk_cols);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < per_row; ++j)
      v.row(r * per_row + j) = x.block(r, j * chunk_cols, 1, chunk_cols);
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, rows, per_row, chunk_cols] {
    const Mat& g = grad_buf(idx);
    Mat& ga = grad_buf(a.idx);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < per_row; ++j)
        ga.block(r, j * chunk_cols, 1, chunk_cols) += g.row(r * per_row + j);
  };
  return Ref{idx};
}

Ref Graph::chunks_from_rows(Ref a, int group_rows) {
  const Mat& x = nodes_[a.idx].value;
  const int rows = static_cast<int>(x.rows());
  const int cols = static_cast<int>(x.cols());
  if (rows % group_rows != 0)
    fail(ErrorKind::validation, "chunks_from_rows: rows not divisible");
  const int out_rows = rows / group_rows;
  Mat v(out_rows, cols * group_rows);
  for (int r = 0; r < out_rows; ++r)
    for (int j = 0; j < group_rows; ++j)
      v.block(r, j * cols, 1, cols) = x.row(r * group_rows + j);
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, out_rows, group_rows, cols] {
    const Mat& g = grad_buf(idx);
    Mat& ga = grad_buf(a.idx);
    for (int r = 0; r < out_rows; ++r)
      for (int j = 0; j < group_rows; ++j)
        ga.row(r * group_rows + j) += g.block(r, j * cols, 1, cols);
  };
  return Ref{idx};
}

Ref Graph::gather_rows(Ref a, std::vector<int> index) {
  const Mat& x = nodes_[a.idx].value;
  Mat v(static_cast<int>(index.size()), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) v.row(i) = x.row(index[i]);
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, index = std::move(index)] {
    const Mat& g = grad_buf(idx);
    Mat& ga = grad_buf(a.idx);
    for (std::size_t i = 0; i < index.size(); ++i)
      ga.row(index[i]) += g.row(i);
  };
  return Ref{idx};
}

Ref Graph::tile_rows(Ref a, int times) {
  const Mat& x = nodes_[a.idx].value;
  const int rows = static_cast<int>(x.rows());
  Mat v(rows * times, x.cols());
  for (int t = 0; t < times; ++t) v.middleRows(t * rows, rows) = x;
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, rows, times] {
    const Mat& g = grad_buf(idx);
    Mat& ga = grad_buf(a.idx);
    for (int t = 0; t < times; ++t) ga += g.middleRows(t * rows, rows);
  };
  return Ref{idx};
}

Ref Graph::block_mean_rows(Ref a, int block_rows) {
  const Mat& x = nodes_[a.idx].value;
  const int rows = static_cast<int>(x.rows());
  if (rows % block_rows != 0)
    fail(ErrorKind::validation, "block_mean_rows: rows not divisible");
  const int blocks = rows / block_rows;
  Mat v(blocks, x.cols());
  for (int b = 0; b < blocks; ++b)
    v.row(b) = x.middleRows(b * block_rows, block_rows).colwise().mean();
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, blocks, block_rows] {
    const Mat& g = grad_buf(idx);
    Mat& ga = grad_buf(a.idx);
    for (int b = 0; b < blocks; ++b)
      ga.middleRows(b * block_rows, block_rows).rowwise() +=
          g.row(b) / static_cast<double>(block_rows);
  };
  return Ref{idx};
}

Ref Graph::row_power_normalize(Ref a, int symbol_count) {
  const Mat& x = nodes_[a.idx].value;
  const int rows = static_cast<int>(x.rows());
  Vec scales(rows);
  Mat v(rows, x.cols());
  for (int r = 0; r < rows; ++r) {
    double p = x.row(r).squaredNorm();
    if (p <= 0.0) fail(ErrorKind::validation, "power normalize: all-zero row");
    scales(r) = std::sqrt(static_cast<double>(symbol_count) / p);
    v.row(r) = x.row(r) * scales(r);
  }
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, a, scales = std::move(scales)] {
    const Mat& g = grad_buf(idx);
    const Mat& x = nodes_[a.idx].value;
    Mat& ga = grad_buf(a.idx);
    for (int r = 0; r < x.rows(); ++r) {
      double s = scales(r);
      double p = x.row(r).squaredNorm();
      double proj = x.row(r).dot(g.row(r));
      ga.row(r) += s * g.row(r) - (s / p) * proj * x.row(r);
    }
  };
  return Ref{idx};
}

Ref Graph::layer_norm(Ref xr, Ref gamma, Ref beta, double eps) {
  const Mat& x = nodes_[xr.idx].value;
  const int rows = static_cast<int>(x.rows());
  const int cols = static_cast<int>(x.cols());
  const Eigen::RowVectorXd& gam = nodes_[gamma.idx].value.row(0);
  const Eigen::RowVectorXd& bet = nodes_[beta.idx].value.row(0);
  Mat xhat(rows, cols);
  Vec inv_sigma(rows);
  for (int r = 0; r < rows; ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    inv_sigma(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_sigma(r);
  }
  Mat v = xhat;
  v.array().rowwise() *= gam.array();
  v.rowwise() += bet;
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, xr, gamma, beta, xhat = std::move(xhat),
                      inv_sigma = std::move(inv_sigma)] {
    const Mat& g = grad_buf(idx);
    const Eigen::RowVectorXd& gam = nodes_[gamma.idx].value.row(0);
    Mat& gx = grad_buf(xr.idx);
    for (int r = 0; r < g.rows(); ++r) {
      Eigen::RowVectorXd gy = g.row(r).cwiseProduct(gam);
      double m1 = gy.mean();
      double m2 = gy.cwiseProduct(xhat.row(r)).mean();
      gx.row(r) +=
          inv_sigma(r) * (gy.array() - m1 - xhat.row(r).array() * m2).matrix();
    }
    grad_buf(gamma.idx) += g.cwiseProduct(xhat).colwise().sum();
    grad_buf(beta.idx) += g.colwise().sum();
  };
  return Ref{idx};
}

Ref Graph::attention(Ref qr, Ref kr, Ref vr, int heads, int block_rows) {
  const Mat& q = nodes_[qr.idx].value;
  const Mat& k = nodes_[kr.idx].value;
  const Mat& v = nodes_[vr.idx].value;
  const int rows = static_cast<int>(q.rows());
  const int dim = static_cast<int>(q.cols());
  if (rows % block_rows != 0 || dim % heads != 0)
    fail(ErrorKind::validation, "attention: inconsistent block/head sizes");
  const int blocks = rows / block_rows;
  const int hd = dim / heads;
  const double alpha = 1.0 / std::sqrt(static_cast<double>(hd));

  Mat out(rows, dim);
  // softmax weights kept for backward, indexed [block * heads + head]
  std::vector<Mat> weights(static_cast<std::size_t>(blocks) * heads);
  for (int b = 0; b < blocks; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto qb = q.block(b * block_rows, h * hd, block_rows, hd);
      auto kb = k.block(b * block_rows, h * hd, block_rows, hd);
      auto vb = v.block(b * block_rows, h * hd, block_rows, hd);
      Mat s = alpha * (qb * kb.transpose());
      for (int r = 0; r < block_rows; ++r) {
        double m = s.row(r).maxCoeff();
        Eigen::ArrayXd e = (s.row(r).array() - m).exp();
        s.row(r) = (e / e.sum()).matrix();
      }
      out.block(b * block_rows, h * hd, block_rows, hd) = s * vb;
      weights[static_cast<std::size_t>(b) * heads + h] = std::move(s);
    }
  }
  int idx = push(std::move(out));
  nodes_[idx].back = [this, idx, qr, kr, vr, heads, block_rows, blocks, hd,
                      alpha, weights = std::move(weights)] {
    const Mat& g = grad_buf(idx);
    const Mat& q = nodes_[qr.idx].value;
    const Mat& k = nodes_[kr.idx].value;
    const Mat& v = nodes_[vr.idx].value;
    Mat& gq = grad_buf(qr.idx);
    Mat& gk = grad_buf(kr.idx);
    Mat& gv = grad_buf(vr.idx);
    for (int b = 0; b < blocks; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Mat& a = weights[static_cast<std::size_t>(b) * heads + h];
        auto qb = q.block(b * block_rows, h * hd, block_rows, hd);
        auto kb = k.block(b * block_rows, h * hd, block_rows, hd);
        auto vb = v.block(b * block_rows, h * hd, block_rows, hd);
        auto go = g.block(b * block_rows, h * hd, block_rows, hd);
        gv.block(b * block_rows, h * hd, block_rows, hd) += a.transpose() * go;
        Mat da = go * vb.transpose();
        // softmax jacobian per row
        Mat ds(block_rows, block_rows);
        for (int r = 0; r < block_rows; ++r) {
          double dot = da.row(r).dot(a.row(r));
          ds.row(r) = a.row(r).cwiseProduct(
              (da.row(r).array() - dot).matrix());
        }
        gq.block(b * block_rows, h * hd, block_rows, hd) += alpha * (ds * kb);
        gk.block(b * block_rows, h * hd, block_rows, hd) +=
            alpha * (ds.transpose() * qb);
      }
    }
  };
  return Ref{idx};
}

Ref Graph::ste_bernoulli(Ref q, Rng& rng) {
  const Mat& p = nodes_[q.idx].value;
  Mat v(p.rows(), p.cols());
  for (int r = 0; r < p.rows(); ++r)
    for (int c = 0; c < p.cols(); ++c)
      v(r, c) = rng.bernoulli(p(r, c)) ? 1.0 : 0.0;
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, q] { grad_buf(q.idx) += grad_buf(idx); };
  return Ref{idx};
}

Ref Graph::ste_round(Ref q) {
  const Mat& p = nodes_[q.idx].value;
  Mat v = (p.array() >= 0.5).cast<double>();
  int idx = push(std::move(v));
  nodes_[idx].back = [this, idx, q] { grad_buf(q.idx) += grad_buf(idx); };
  return Ref{idx};
}

void Graph::backward(Ref loss) {
  if (nodes_[loss.idx].value.size() != 1)
    fail(ErrorKind::validation, "backward: loss must be scalar");
  grad_buf(loss.idx).setConstant(1.0);
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;  // not on the path to the loss
    if (n.back) n.back();
  }
}

}  // namespace splitsc::ad
