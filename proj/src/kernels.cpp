#include "nccqr/kernels.hpp"

#include <algorithm>
#include <vector>

namespace nccqr::kernels {

namespace {

Eigen::Index block_count(Eigen::Index cols) {
  return (cols + kBlockCols - 1) / kBlockCols;
}

Eigen::Index block_width(Eigen::Index blk, Eigen::Index cols) {
  return std::min(kBlockCols, cols - blk * kBlockCols);
}

}  // namespace

void affine_forward(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                    const Eigen::MatrixXd& in, Eigen::MatrixXd& out) {
  const Eigen::Index cols = in.cols();
  out.resize(W.rows(), cols);
  const Eigen::Index blocks = block_count(cols);
#pragma omp parallel for schedule(static)
  for (Eigen::Index blk = 0; blk < blocks; ++blk) {
    const Eigen::Index c0 = blk * kBlockCols;
    const Eigen::Index w = block_width(blk, cols);
    auto dst = out.middleCols(c0, w);
    dst.noalias() = W * in.middleCols(c0, w);
    dst.colwise() += b;
  }
}

void relu_forward(const Eigen::MatrixXd& pre, Eigen::MatrixXd& act) {
  act.resize(pre.rows(), pre.cols());
  const Eigen::Index blocks = block_count(pre.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index blk = 0; blk < blocks; ++blk) {
    const Eigen::Index c0 = blk * kBlockCols;
    const Eigen::Index w = block_width(blk, pre.cols());
    act.middleCols(c0, w) = pre.middleCols(c0, w).cwiseMax(0.0);
  }
}

void relu_backward(const Eigen::MatrixXd& pre, Eigen::MatrixXd& grad) {
  const Eigen::Index blocks = block_count(pre.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index blk = 0; blk < blocks; ++blk) {
    const Eigen::Index c0 = blk * kBlockCols;
    const Eigen::Index w = block_width(blk, pre.cols());
    auto g = grad.middleCols(c0, w);
    g = (pre.middleCols(c0, w).array() > 0.0).select(g, 0.0);
  }
}

void affine_backward(const Eigen::MatrixXd& W, const Eigen::MatrixXd& in,
                     const Eigen::MatrixXd& grad_out, Eigen::MatrixXd& grad_W,
                     Eigen::VectorXd& grad_b, Eigen::MatrixXd* grad_in) {
  const Eigen::Index cols = in.cols();
  const Eigen::Index blocks = block_count(cols);
  std::vector<Eigen::MatrixXd> partial_W(static_cast<std::size_t>(blocks));
  std::vector<Eigen::VectorXd> partial_b(static_cast<std::size_t>(blocks));
  if (grad_in != nullptr) grad_in->resize(W.cols(), cols);

#pragma omp parallel for schedule(static)
  for (Eigen::Index blk = 0; blk < blocks; ++blk) {
    const Eigen::Index c0 = blk * kBlockCols;
    const Eigen::Index w = block_width(blk, cols);
    const auto g = grad_out.middleCols(c0, w);
    auto& pw = partial_W[static_cast<std::size_t>(blk)];
    pw.noalias() = g * in.middleCols(c0, w).transpose();
    partial_b[static_cast<std::size_t>(blk)] = g.rowwise().sum();
    if (grad_in != nullptr) grad_in->middleCols(c0, w).noalias() = W.transpose() * g;
  }

  grad_W.setZero(W.rows(), W.cols());
  grad_b.setZero(W.rows());
  for (Eigen::Index blk = 0; blk < blocks; ++blk) {
    grad_W += partial_W[static_cast<std::size_t>(blk)];
    grad_b += partial_b[static_cast<std::size_t>(blk)];
  }
}

}  // namespace nccqr::kernels
